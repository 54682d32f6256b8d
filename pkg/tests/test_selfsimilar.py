# Copyright (c) 2025 CoReason, Inc.
#
# This software is proprietary and dual-licensed.
# Licensed under the Prosperity Public License 3.0 (the "License").
# A copy of the license is available at https://prosperitylicense.com/versions/3.0.0
# For details, see the LICENSE file.
# Commercial use beyond a 30-day trial requires a separate license.
#
# Source Code: https://github.com/CoReason-AI/coreason_blowup

from typing import List, Tuple
from unittest.mock import patch

import numpy as np
import pytest

from coreason_blowup.equations import ProfileKind, profile_w0, profile_w0_derivatives
from coreason_blowup.exceptions import ConstraintViolationError, DependencyError, DomainError
from coreason_blowup.models import SelfSimilarProfile, ShootingSettings
from coreason_blowup.selfsimilar import (
    SimilarityODE,
    attractor_profile,
    find_profiles,
    lightcone_coefficients,
    origin_coefficients,
    scan_curve,
    series_lightcone,
    series_origin,
    shoot,
    to_profile,
)

# W_0 in five dimensions: W = 1 - 1.6 eta^2 + ..., W(1) = 0, W'(1) = -1.25.
W0_B = -1.6
W0_C = -1.25
# First excited profile in five dimensions, from a bracket scan of the matching defect.
W1_B = -72.392
W1_C = 0.48132


def small_scan() -> ShootingSettings:
    return ShootingSettings(b_min=-3.0, b_max=-1.0, branches=[0.0], b_samples=24, c_samples=120, c_max=10.0)


def test_origin_series_of_w0() -> None:
    coefficients = origin_coefficients(W0_B, 5)
    assert coefficients[0] == 1.0
    assert np.all(coefficients[1::2] == 0.0)
    assert coefficients[4] == pytest.approx(0.96, rel=1e-12)
    assert coefficients[6] == pytest.approx(-0.576, rel=1e-12)


def test_lightcone_series_of_w0() -> None:
    coefficients = lightcone_coefficients(0.0, W0_C, 5)
    assert coefficients[0] == 0.0
    assert coefficients[1] == pytest.approx(1.25)
    assert coefficients[2] == pytest.approx(0.3125, rel=1e-12)


def test_lightcone_value_constraint_in_d5() -> None:
    with pytest.raises(ConstraintViolationError):
        lightcone_coefficients(0.5, 0.0, 5)
    with pytest.raises(ConstraintViolationError):
        series_lightcone(0.5, 0.0, 1e-4, 5)


def test_lightcone_slope_fixed_outside_d5() -> None:
    free = lightcone_coefficients(0.3, 0.0, 4)
    np.testing.assert_array_equal(free, lightcone_coefficients(0.3, 123.0, 4))
    assert SimilarityODE(4).light_cone_slope(0.3, 123.0) == pytest.approx(-free[1])


def test_series_points_match_w0() -> None:
    point = series_origin(W0_B, 1e-3, 5)
    w, wp, _ = profile_w0_derivatives(1e-3)
    assert point.value == pytest.approx(w, abs=1e-15)
    assert point.slope == pytest.approx(wp, abs=1e-13)
    assert point.error < 1e-20
    end = series_lightcone(0.0, W0_C, 1e-3, 5)
    w1, wp1, _ = profile_w0_derivatives(1.0 - 1e-3)
    assert end.value == pytest.approx(w1, abs=1e-14)
    assert end.slope == pytest.approx(wp1, abs=1e-11)


def test_series_offsets_are_bounded() -> None:
    with pytest.raises(DomainError):
        series_origin(W0_B, 0.05, 5)
    with pytest.raises(DomainError):
        series_lightcone(0.0, W0_C, 0.0, 5)


def test_shoot_w0_has_no_defect() -> None:
    result = shoot(W0_B, W0_C, 0.0, 5)
    assert not result.divergent
    assert result.norm < 1e-8
    assert shoot(-1.5, W0_C, 0.0, 5).norm > 1e-3


def test_shoot_reports_divergence() -> None:
    settings = ShootingSettings(blowoff=2.0)
    result = shoot(60.0, W0_C, 0.0, 5, settings)
    assert result.divergent
    assert result.norm == float("inf")


def test_find_profiles_recovers_w0() -> None:
    """A search around the ground state finds it alone."""
    settings = small_scan()
    profiles = find_profiles(5, settings)
    assert len(profiles) == 1
    w0 = profiles[0]
    assert w0.b == pytest.approx(W0_B, abs=1e-7)
    assert w0.c == pytest.approx(W0_C, abs=1e-6)
    assert w0.w1 == 0.0
    assert w0.residual < settings.certify_defect
    assert len(w0.samples) == settings.table_points


def table(profile: SelfSimilarProfile) -> Tuple[np.ndarray, np.ndarray]:
    samples = np.array(profile.samples)
    return samples[:, 0], samples[:, 1]


@pytest.fixture(scope="module")
def d5_profiles() -> List[SelfSimilarProfile]:
    """The default search in five dimensions, shared by the tests below."""
    return find_profiles(5)


def test_default_search_finds_ground_state(d5_profiles: List[SelfSimilarProfile]) -> None:
    assert len(d5_profiles) >= 2
    w0 = d5_profiles[0]
    assert w0.b == pytest.approx(W0_B, abs=1e-8)
    assert w0.c == pytest.approx(W0_C, abs=1e-7)
    assert w0.w1 == 0.0
    assert w0.residual < 1e-9
    eta, values = table(w0)
    np.testing.assert_allclose(values, profile_w0(eta), atol=1e-8)


def test_default_search_finds_first_excited_profile(d5_profiles: List[SelfSimilarProfile]) -> None:
    w1 = d5_profiles[1]
    assert w1.b == pytest.approx(W1_B, abs=1e-3)
    assert w1.b < W0_B
    assert w1.c == pytest.approx(W1_C, abs=1e-4)
    assert w1.w1 == 0.0
    assert w1.residual < 1e-9
    eta, values = table(w1)
    assert values[0] == 1.0
    assert values[-1] == 0.0
    assert np.all(np.diff(eta) > 0.0)
    # One node inside the light cone, near eta = 0.2.
    interior = np.sign(values[1:-1])
    nodes = np.nonzero(np.diff(interior))[0]
    assert len(nodes) == 1
    assert 0.15 < eta[1 + nodes[0]] < 0.25
    assert [abs(p.b) for p in d5_profiles] == sorted(abs(p.b) for p in d5_profiles)


def test_attractor_profile_is_first_excited(d5_profiles: List[SelfSimilarProfile]) -> None:
    with patch("coreason_blowup.selfsimilar.find_profiles", return_value=d5_profiles):
        assert attractor_profile(5) is d5_profiles[1]
    near = attractor_profile(5, b_hint=-72.0)
    assert near.b == pytest.approx(d5_profiles[1].b, abs=1e-6)
    assert near.c == pytest.approx(d5_profiles[1].c, abs=1e-6)
    assert to_profile(near).value(np.array([0.5]))[0] == pytest.approx(-0.23266, abs=1e-4)


def test_find_profiles_rejects_bad_range() -> None:
    with pytest.raises(DomainError):
        find_profiles(5, small_scan(), b_range=(-1.0, -3.0))
    with pytest.raises(DomainError):
        find_profiles(5, small_scan(), b_range=(-1.0, 0.5))


def test_no_self_similar_profiles_in_d4() -> None:
    settings = ShootingSettings(b_min=-10.0, b_max=-0.5, b_samples=40, c_samples=40)
    assert find_profiles(4, settings) == []


def test_to_profile_interpolates_table() -> None:
    eta = np.linspace(0.0, 1.0, 401)
    w, wp, _ = profile_w0_derivatives(eta)
    record = SelfSimilarProfile(
        d=5, b=W0_B, c=W0_C, w1=0.0, samples=list(zip(eta, w, wp, strict=True)), residual=0.0
    )
    profile = to_profile(record)
    assert profile.kind == ProfileKind.NUMERIC
    assert profile.value(np.array([0.3]))[0] == pytest.approx(float(profile_w0(0.3)), abs=1e-9)
    assert profile.curvature_at_origin() == pytest.approx(-3.2, rel=1e-6)


def fake_profile(b: float) -> SelfSimilarProfile:
    return SelfSimilarProfile(d=5, b=b, c=0.0, w1=0.0, samples=[(0.0, 1.0, 0.0), (1.0, 0.0, 0.0)], residual=0.0)


def test_attractor_profile_selection() -> None:
    found = [fake_profile(-1.6), fake_profile(-10.0)]
    with patch("coreason_blowup.selfsimilar.find_profiles", return_value=found):
        assert attractor_profile(5).b == -10.0
    with patch("coreason_blowup.selfsimilar.find_profiles", return_value=found[:1]):
        with pytest.raises(DependencyError):
            attractor_profile(5)
    with patch("coreason_blowup.selfsimilar.find_profiles", return_value=found) as search:
        assert attractor_profile(5, b_hint=-9.0).b == -10.0
        assert search.call_args.kwargs["b_range"] == pytest.approx((-11.25, -7.2))
    with patch("coreason_blowup.selfsimilar.find_profiles", return_value=[]):
        with pytest.raises(DependencyError):
            attractor_profile(5, b_hint=-9.0)


def parabola_until_one(p: float) -> np.ndarray:
    return np.array([p, p * p]) if p < 1.0 else np.full(2, np.nan)


def test_scan_curve_reaches_divergence_edge() -> None:
    """Finite samples are added up to the edge of the divergent region, in scan order."""
    grid, points = scan_curve(parabola_until_one, np.linspace(0.0, 2.0, 5))
    finite = np.all(np.isfinite(points), axis=1)
    assert np.all(np.diff(grid) > 0.0)
    assert np.count_nonzero(~finite) == 3
    assert grid[finite].max() == pytest.approx(1.0, abs=1e-2)
    np.testing.assert_allclose(points[finite, 1], grid[finite] ** 2)

    descending, _ = scan_curve(parabola_until_one, np.linspace(2.0, 0.0, 5))
    assert np.all(np.diff(descending) < 0.0)
    np.testing.assert_allclose(descending, grid[::-1])
