# Copyright (c) 2025 CoReason, Inc.
#
# This software is proprietary and dual-licensed.
# Licensed under the Prosperity Public License 3.0 (the "License").
# A copy of the license is available at https://prosperitylicense.com/versions/3.0.0
# For details, see the LICENSE file.
# Commercial use beyond a 30-day trial requires a separate license.
#
# Source Code: https://github.com/CoReason-AI/coreason_blowup

import math

import numpy as np
import pytest
from scipy.integrate import quad

from coreason_blowup.energy import (
    cd_coefficient,
    center_energy_density,
    cumulative_energy,
    energy_density,
    energy_integrand,
    lightcone_energy,
    sphere_volume,
    total_energy,
)
from coreason_blowup.exceptions import DomainError
from coreason_blowup.state import FieldState


def bump(r: np.ndarray, scale: float = 1.0) -> FieldState:
    """w = 1 - A (r/s)^2 exp(-(r/s - 1)^2 / 0.1) with its exact derivative, at rest."""
    x = r / scale
    profile = 0.3 * x**2 * np.exp(-((x - 1.0) ** 2) / 0.1)
    slope = 0.3 * np.exp(-((x - 1.0) ** 2) / 0.1) * (2.0 * x - x**2 * 2.0 * (x - 1.0) / 0.1) / scale
    return FieldState(0.0, r, 1.0 - profile, np.zeros_like(r), wr_exact=-slope)


def test_sphere_volume_and_cd() -> None:
    assert sphere_volume(2) == pytest.approx(4.0 * math.pi)
    assert cd_coefficient(4) == pytest.approx(6.0 * math.pi**2)
    assert cd_coefficient(5) == pytest.approx(32.0 * math.pi**2 / 3.0)


def test_energy_density_rejects_center() -> None:
    with pytest.raises(DomainError):
        energy_density(1.0, 0.0, 0.0, 0.0, 5)


def test_energy_density_at_rest_vacuum() -> None:
    r = np.linspace(0.1, 1.0, 10)
    assert np.all(energy_density(np.ones_like(r), 0.0 * r, 0.0 * r, r, 5) == 0.0)


def test_center_energy_density_limit() -> None:
    """The pointwise density of w = 1 + (a/2) r^2 approaches (d/2) a^2 as r -> 0."""
    a = -2.0
    assert center_energy_density(a, 5) == pytest.approx(10.0)
    r = 1e-4
    w = 1.0 + 0.5 * a * r**2
    assert energy_density(w, 0.0, a * r, r, 5) == pytest.approx(center_energy_density(a, 5), rel=1e-6)


def test_vacuum_has_zero_energy() -> None:
    r = np.linspace(0.0, 4.0, 401)
    assert total_energy(FieldState.vacuum(r), 5) == 0.0


def test_integrand_vanishes_at_center() -> None:
    r = np.linspace(0.0, 2.0, 201)
    state = bump(r)
    for part in energy_integrand(state.r, state.w, state.wt, state.wr, 5):
        assert part[0] == 0.0


def test_total_energy_matches_quadrature() -> None:
    r = np.linspace(0.0, 3.0, 3001)
    state = bump(r)
    c = cd_coefficient(5)

    def integrand(x: float) -> float:
        single = bump(np.array([0.0, x / 2.0, x]))
        w, wr = single.w[-1], single.wr[-1]
        return c * (wr**2 * x**2 + 1.5 * (1.0 - w**2) ** 2)

    reference, _ = quad(integrand, 0.0, 3.0, limit=200)
    assert total_energy(state, 5) == pytest.approx(reference, rel=1e-6)


def test_energy_scales_with_dimension_weight() -> None:
    """E[w(r/s)] = s^(d - 4) E[w]."""
    r = np.linspace(0.0, 6.0, 6001)
    base = total_energy(bump(r), 5)
    stretched = total_energy(bump(r, scale=2.0), 5)
    assert stretched == pytest.approx(2.0 * base, rel=1e-5)
    assert total_energy(bump(r, scale=2.0), 4) == pytest.approx(total_energy(bump(r), 4), rel=1e-5)


def test_cumulative_energy_is_monotone() -> None:
    r = np.linspace(0.0, 3.0, 601)
    state = FieldState(0.0, r, bump(r).w, 0.1 * np.sin(r) * r**2)
    total, kinetic = cumulative_energy(state, 5)
    assert total[0] == 0.0
    slack = 1e-8 * total[-1]
    assert np.all(np.diff(total) >= -slack)
    assert np.all(kinetic <= total + slack)
    at = np.array([0.5, 1.0, 2.0])
    total_at, _ = cumulative_energy(state, 5, at)
    np.testing.assert_allclose(total_at, np.interp(at, r, total))


def test_lightcone_energy_bounds_and_errors() -> None:
    r = np.linspace(0.0, 3.0, 601)
    state = bump(r)
    with pytest.raises(DomainError):
        lightcone_energy(state, 0.0, 5)
    with pytest.raises(DomainError):
        lightcone_energy(state, 4.0, 5)
    small = lightcone_energy(state, 0.8, 5)
    large = lightcone_energy(state, 1.2345, 5)
    assert 0.0 < small < large <= total_energy(state, 5)
    total, _ = cumulative_energy(state, 5)
    assert lightcone_energy(state, 1.0, 5) == pytest.approx(total[200], rel=1e-4)
