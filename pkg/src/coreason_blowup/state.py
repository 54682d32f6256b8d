# Copyright (c) 2025 CoReason, Inc.
#
# This software is proprietary and dual-licensed.
# Licensed under the Prosperity Public License 3.0 (the "License").
# A copy of the license is available at https://prosperitylicense.com/versions/3.0.0
# For details, see the LICENSE file.
# Commercial use beyond a 30-day trial requires a separate license.
#
# Source Code: https://github.com/CoReason-AI/coreason_blowup

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy.interpolate import make_interp_spline

from coreason_blowup.equations import FloatArray
from coreason_blowup.exceptions import DomainError, InsufficientDataError


@dataclass(frozen=True)
class FieldState:
    """
    The pair (w, w_t) sampled at strictly increasing radii at a common time.

    Samples may come from several mesh levels, so the spacing need not be uniform.
    When exact radial derivatives are not supplied they are taken from a quintic spline through
    the samples, extended with even parity across r = 0.
    """

    t: float
    r: FloatArray
    w: FloatArray
    wt: FloatArray
    wr_exact: Optional[FloatArray] = field(default=None, repr=False)

    def __post_init__(self) -> None:
        n = self.r.shape[0]
        if self.w.shape != (n,) or self.wt.shape != (n,):
            raise DomainError("FieldState arrays must share the shape of r")
        if self.wr_exact is not None and self.wr_exact.shape != (n,):
            raise DomainError("wr must share the shape of r")
        if n < 3:
            raise InsufficientDataError("FieldState needs at least 3 samples")
        if self.r[0] < 0.0 or np.any(np.diff(self.r) <= 0.0):
            raise DomainError("Radii must be nonnegative and strictly increasing")

    @classmethod
    def vacuum(cls, r: FloatArray, t: float = 0.0) -> "FieldState":
        return cls(t, r, np.ones_like(r), np.zeros_like(r))

    @property
    def wr(self) -> FloatArray:
        if self.wr_exact is not None:
            return self.wr_exact
        if self.r.shape[0] < 6:
            return np.gradient(self.w, self.r, edge_order=2)
        r, u = self._even_extension(self.u)
        return -np.asarray(make_interp_spline(r, u, k=5).derivative()(self.r), dtype=np.float64)

    @property
    def u(self) -> FloatArray:
        return 1.0 - self.w

    def _even_extension(self, values: FloatArray) -> Tuple[FloatArray, FloatArray]:
        if self.r[0] != 0.0:
            return self.r, values
        return np.concatenate([-self.r[:0:-1], self.r]), np.concatenate([values[:0:-1], values])

    def sample(self, radii: FloatArray) -> FloatArray:
        """
        Cubic interpolation of w at the given radii, using even parity across r = 0.

        Raises:
            DomainError: If a radius lies outside the sampled range.
        """
        radii = np.asarray(radii, dtype=np.float64)
        if np.any(radii < self.r[0]) or np.any(radii > self.r[-1]):
            raise DomainError("Interpolation radius outside the sampled range")
        r, w = self._even_extension(self.w)
        spline = make_interp_spline(r, w, k=3)
        return np.asarray(spline(radii), dtype=np.float64)

    def center_curvature(self) -> float:
        """
        w_rr at r = 0 from the fourth-order centered stencil with even ghost values u(-r) = u(r).

        Raises:
            DomainError: If the samples do not start at r = 0 with uniform spacing.
        """
        if self.r[0] != 0.0:
            raise DomainError("Center curvature needs a sample at r = 0")
        dr = self.r[1]
        if not np.isclose(self.r[2], 2.0 * dr, rtol=1e-9, atol=0.0):
            raise DomainError("Center curvature needs uniform spacing next to r = 0")
        u0, u1, u2 = 1.0 - self.w[0], 1.0 - self.w[1], 1.0 - self.w[2]
        return float(-(32.0 * u1 - 2.0 * u2 - 30.0 * u0) / (12.0 * dr * dr))
