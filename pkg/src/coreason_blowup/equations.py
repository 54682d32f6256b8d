# Copyright (c) 2025 CoReason, Inc.
#
# This software is proprietary and dual-licensed.
# Licensed under the Prosperity Public License 3.0 (the "License").
# A copy of the license is available at https://prosperitylicense.com/versions/3.0.0
# For details, see the LICENSE file.
# Commercial use beyond a 30-day trial requires a separate license.
#
# Source Code: https://github.com/CoReason-AI/coreason_blowup

"""
Right-hand sides of the reduced radial equation, closed-form profiles and the self-similar ODE.

The field is the magnetic potential w(t, r) of the spherically symmetric ansatz; it obeys

    w_tt = w_rr + ((d - 3) / r) w_r + ((d - 2) / r^2) w (1 - w^2).

The evolution works with u = 1 - w, which vanishes as r^2 at the center.
"""

from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Optional, Tuple, Union

import numpy as np
import numpy.typing as npt
from scipy.interpolate import CubicHermiteSpline

from coreason_blowup.exceptions import DomainError, InsufficientDataError

FloatArray = npt.NDArray[np.float64]
Scalar = Union[float, FloatArray]

# W(eta) = (1 - eta^2) / (1 + a eta^2) covers both closed-form profiles.
SHAPE_W0 = 3.0 / 5.0
SHAPE_WS = 1.0

# Samples with eta below this count as "near the origin" for tabulated profiles.
ORIGIN_WINDOW = 0.1


def check_dimension(d: int) -> int:
    if d < 4:
        raise DomainError(f"Dimension d must be >= 4, got {d}")
    return d


def pde_rhs(w_rr: Scalar, w_r: Scalar, w: Scalar, r: Scalar, d: int) -> Scalar:
    """
    Computes w_tt from the spatial data of the reduced equation.

    Args:
        w_rr: Second radial derivative of w.
        w_r: First radial derivative of w.
        w: Field value.
        r: Radius, strictly positive.
        d: Spatial dimension.

    Returns:
        w_rr + ((d - 3) / r) w_r + ((d - 2) / r^2) w (1 - w^2).

    Raises:
        DomainError: If r <= 0 anywhere. The center uses the regularized stencil of the stepper.
    """
    check_dimension(d)
    if np.any(np.asarray(r) <= 0.0):
        raise DomainError("pde_rhs requires r > 0; use the center-limit form at r = 0")
    return w_rr + (d - 3) / r * w_r + (d - 2) / r**2 * w * (1.0 - w * w)


def u_rhs(u_rr: FloatArray, u_r: FloatArray, u: FloatArray, r: FloatArray, d: int) -> FloatArray:
    """u_tt for u = 1 - w at r > 0."""
    return u_rr + (d - 3) / r * u_r - (d - 2) / r**2 * u * (1.0 - u) * (2.0 - u)


def closed_form_derivatives(eta: Scalar, shape: float) -> Tuple[Scalar, Scalar, Scalar]:
    """
    Evaluates W = (1 - eta^2) / (1 + a eta^2) with its first two derivatives.

    Args:
        eta: Similarity variable (>= 0).
        shape: The coefficient a (3/5 for W_0 in d = 5, 1 for W_S in d = 4).

    Returns:
        The tuple (W, W', W'').
    """
    if np.any(np.asarray(eta) < 0.0):
        raise DomainError("Profiles are defined for eta >= 0")
    eta2 = eta * eta
    denom = 1.0 + shape * eta2
    value = (1.0 - eta2) / denom
    first = -2.0 * (1.0 + shape) * eta / denom**2
    second = -2.0 * (1.0 + shape) * (1.0 - 3.0 * shape * eta2) / denom**3
    return value, first, second


def profile_w0(eta: Scalar) -> Scalar:
    """The stable self-similar solution in d = 5."""
    return closed_form_derivatives(eta, SHAPE_W0)[0]


def profile_w0_derivatives(eta: Scalar) -> Tuple[Scalar, Scalar, Scalar]:
    return closed_form_derivatives(eta, SHAPE_W0)


def profile_ws(eta: Scalar) -> Scalar:
    """The static instanton in d = 4."""
    return closed_form_derivatives(eta, SHAPE_WS)[0]


def profile_ws_derivatives(eta: Scalar) -> Tuple[Scalar, Scalar, Scalar]:
    return closed_form_derivatives(eta, SHAPE_WS)


def similarity_residual(eta: Scalar, w: Scalar, wp: Scalar, wpp: Scalar, d: int) -> Scalar:
    """
    Residual of (1 - eta^2) W'' + ((d - 3)/eta - 2 eta) W' + ((d - 2)/eta^2) W (1 - W^2).
    """
    check_dimension(d)
    if np.any(np.asarray(eta) <= 0.0):
        raise DomainError("similarity_residual requires eta > 0")
    return (1.0 - eta * eta) * wpp + ((d - 3) / eta - 2.0 * eta) * wp + (d - 2) / eta**2 * w * (1.0 - w * w)


class ProfileKind(str, Enum):
    W0_D5 = "W0_d5"
    WS_D4 = "WS_d4"
    NUMERIC = "Numeric"


@dataclass(frozen=True)
class Profile:
    """
    A blowup profile W(eta) with W(0) = 1 and W'(0) = 0.

    Closed-form kinds evaluate pointwise; the Numeric kind interpolates a table of
    (eta, W, W') rows with a cubic Hermite spline.
    """

    kind: ProfileKind
    samples: Optional[FloatArray] = None

    def __post_init__(self) -> None:
        if self.kind == ProfileKind.NUMERIC:
            if self.samples is None or self.samples.ndim != 2 or self.samples.shape[1] != 3:
                raise InsufficientDataError("Numeric profiles need an (n, 3) table of (eta, W, W')")
            if np.any(np.diff(self.samples[:, 0]) <= 0.0):
                raise DomainError("Profile table must be strictly increasing in eta")

    @classmethod
    def tabulate(cls, kind: ProfileKind, eta: FloatArray) -> "Profile":
        """Builds a Numeric profile by sampling a closed-form kind."""
        trial = cls(kind)
        table = np.column_stack([eta, trial.value(eta), trial.derivative(eta)])
        return cls(ProfileKind.NUMERIC, table)

    @cached_property
    def _spline(self) -> CubicHermiteSpline:
        assert self.samples is not None
        return CubicHermiteSpline(self.samples[:, 0], self.samples[:, 1], self.samples[:, 2])

    @property
    def shape(self) -> float:
        return SHAPE_W0 if self.kind == ProfileKind.W0_D5 else SHAPE_WS

    def value(self, eta: Scalar) -> Scalar:
        if self.kind == ProfileKind.NUMERIC:
            return np.asarray(self._spline(eta), dtype=np.float64)
        return closed_form_derivatives(eta, self.shape)[0]

    def derivative(self, eta: Scalar) -> Scalar:
        if self.kind == ProfileKind.NUMERIC:
            return np.asarray(self._spline(eta, 1), dtype=np.float64)
        return closed_form_derivatives(eta, self.shape)[1]

    def curvature_at_origin(self) -> float:
        return profile_curvature_at_origin(self)


def profile_curvature_at_origin(profile: Profile) -> float:
    """
    Returns W''(0), which links the center curvature to the scale: w_rr(t, 0) = W''(0) / lambda^2.

    Raises:
        InsufficientDataError: If a Numeric table has fewer than 4 samples with 0 < eta <= 0.1.
    """
    if profile.kind != ProfileKind.NUMERIC:
        return float(closed_form_derivatives(0.0, profile.shape)[2])

    assert profile.samples is not None
    eta, value = profile.samples[:, 0], profile.samples[:, 1]
    near = (eta > 0.0) & (eta <= ORIGIN_WINDOW)
    if np.count_nonzero(near) < 4:
        raise InsufficientDataError("Need at least 4 profile samples near eta = 0 to estimate W''(0)")

    # W - 1 is even: fit a eta^2 + b eta^4 + c eta^6 on the samples closest to the origin.
    eta_near = eta[near][:8]
    basis = np.column_stack([eta_near**2, eta_near**4, eta_near**6])
    coefficients, *_ = np.linalg.lstsq(basis, value[near][:8] - 1.0, rcond=None)
    return float(2.0 * coefficients[0])


def closed_form_profile(d: int) -> Profile:
    """The profile generic blowup approaches in dimension d."""
    return Profile(ProfileKind.WS_D4 if check_dimension(d) == 4 else ProfileKind.W0_D5)
