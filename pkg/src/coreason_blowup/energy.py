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
Energy functionals of the reduced field.

The energy inside radius s is

    E(s) = c(d) * int_0^s (w_t^2 + w_r^2 + ((d - 2) / (2 r^2)) (1 - w^2)^2) r^(d - 3) dr,

with c(d) = (d - 1) vol(S^(d - 1)). The (d - 2)/2 weight on the quartic term is read off the
d = 5 density and carried to every d >= 4; it is inferred rather than quoted for d = 4.
"""

import math
from typing import Optional, Tuple

import numpy as np
from scipy.integrate import cumulative_simpson

from coreason_blowup.equations import FloatArray, Scalar, check_dimension
from coreason_blowup.exceptions import DomainError
from coreason_blowup.state import FieldState


def sphere_volume(n: int) -> float:
    """Area of the unit n-sphere S^n."""
    return 2.0 * math.pi ** ((n + 1) / 2.0) / math.gamma((n + 1) / 2.0)


def cd_coefficient(d: int) -> float:
    """c(d) = (d - 1) vol(S^(d - 1)); c(4) = 6 pi^2, c(5) = 32 pi^2 / 3."""
    check_dimension(d)
    return (d - 1) * sphere_volume(d - 1)


def energy_density(w: Scalar, wt: Scalar, wr: Scalar, r: Scalar, d: int) -> Scalar:
    """
    Pointwise energy density wt^2/r^2 + wr^2/r^2 + ((d - 2)/2) (1 - w^2)^2 / r^4.

    Raises:
        DomainError: If r <= 0. Use center_energy_density for the limit at the origin.
    """
    check_dimension(d)
    if np.any(np.asarray(r) <= 0.0):
        raise DomainError("energy_density requires r > 0; use center_energy_density at r = 0")
    r2 = r * r
    return (wt * wt + wr * wr) / r2 + 0.5 * (d - 2) * (1.0 - w * w) ** 2 / (r2 * r2)


def center_energy_density(w_rr0: float, d: int) -> float:
    """
    The regular r -> 0 limit of the energy density.

    With 1 - w = -(w_rr0 / 2) r^2 + O(r^4) and w_t = O(r^2), the gradient term tends to w_rr0^2 and
    the quartic term to ((d - 2)/2) w_rr0^2.
    """
    check_dimension(d)
    return 0.5 * d * w_rr0 * w_rr0


def energy_integrand(
    r: FloatArray, w: FloatArray, wt: FloatArray, wr: FloatArray, d: int
) -> Tuple[FloatArray, FloatArray, FloatArray]:
    """
    The kinetic, gradient and potential parts of the energy integrand, including c(d) r^(d - 3).
    Every part vanishes at r = 0 for regular fields.
    """
    c = cd_coefficient(d)
    weight = c * r ** (d - 3)
    kinetic = weight * wt * wt
    gradient = weight * wr * wr
    potential = np.zeros_like(r)
    positive = r > 0.0
    rp = r[positive]
    potential[positive] = c * 0.5 * (d - 2) * (1.0 - w[positive] ** 2) ** 2 * rp ** (d - 5)
    return kinetic, gradient, potential


def _cumulative(r: FloatArray, integrand: FloatArray) -> FloatArray:
    return np.asarray(cumulative_simpson(integrand, x=r, initial=0.0), dtype=np.float64)


def cumulative_energy(
    state: FieldState, d: int, radii: Optional[FloatArray] = None
) -> Tuple[FloatArray, FloatArray]:
    """
    Energy inside each radius, split as (total, kinetic).

    Args:
        state: The sampled field.
        d: Spatial dimension.
        radii: Where to report the enclosed energy. Defaults to the sample radii.

    Returns:
        Two arrays with the enclosed total and kinetic energies.
    """
    kinetic, gradient, potential = energy_integrand(state.r, state.w, state.wt, state.wr, d)
    total = _cumulative(state.r, kinetic + gradient + potential)
    kin = _cumulative(state.r, kinetic)
    if radii is None:
        return total, kin
    return np.interp(radii, state.r, total), np.interp(radii, state.r, kin)


def total_energy(state: FieldState, d: int) -> float:
    """Energy on the whole sampled range, used with the boundary flux ledger."""
    total, _ = cumulative_energy(state, d)
    return float(total[-1])


def lightcone_energy(state: FieldState, T: float, d: int) -> float:
    """
    Energy inside the past light cone r <= T - t of the singularity at (T, 0).

    Raises:
        DomainError: If T <= t or the cone radius exceeds the sampled range.
    """
    radius = T - state.t
    if radius <= 0.0:
        raise DomainError(f"Blowup time T={T} must exceed the state time t={state.t}")
    if radius > state.r[-1]:
        raise DomainError(f"Light cone radius {radius} exceeds the grid (r_max={state.r[-1]})")

    kinetic, gradient, potential = energy_integrand(state.r, state.w, state.wt, state.wr, d)
    integrand = kinetic + gradient + potential
    inside = int(np.searchsorted(state.r, radius, side="right"))
    head = float(_cumulative(state.r[:inside], integrand[:inside])[-1]) if inside >= 2 else 0.0
    if inside >= state.r.shape[0] or state.r[inside - 1] == radius:
        return head
    # Partial cell up to the cone radius, integrand linearly interpolated.
    r_a, r_b = state.r[inside - 1], state.r[inside]
    f_a = integrand[inside - 1]
    f_s = f_a + (integrand[inside] - f_a) * (radius - r_a) / (r_b - r_a)
    return head + 0.5 * (f_a + f_s) * (radius - r_a)
