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
Self-similar profiles W(eta), eta = r / (T - t), inside the past light cone.

They solve

    (1 - eta^2) W'' + ((d - 3)/eta - 2 eta) W' + ((d - 2)/eta^2) W (1 - W^2) = 0

on [0, 1]. Both endpoints are singular points, so the solver starts from truncated power series
at eta0 and 1 - eta1, integrates towards a matching point and adjusts the free series data until
the two sides agree.
"""

from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import Polynomial
from scipy.integrate import OdeSolution, solve_ivp
from scipy.optimize import root

from coreason_blowup.equations import FloatArray, Profile, ProfileKind, check_dimension
from coreason_blowup.exceptions import ConstraintViolationError, DependencyError, DomainError
from coreason_blowup.models import SelfSimilarProfile, ShootingSettings
from coreason_blowup.utils.logger import logger

SERIES_TERMS = 6
# Allowed light-cone values in d = 5.
LIGHTCONE_VALUES = (0.0, 1.0, -1.0)
# Refined roots with a larger defect are discarded before polishing.
REFINE_DEFECT = 1e-6
# Stand-in defect for divergent shots inside the root finder.
DIVERGENT_DEFECT = 1e6
ROOT_OPTIONS = {"xtol": 1e-12, "eps": 1e-12}
# Bisections of the edge between finite and divergent scan samples.
EDGE_BISECTIONS = 8


@dataclass(frozen=True)
class SeriesPoint:
    value: float
    slope: float
    error: float


@dataclass
class ShotResult:
    """Matching defect (W_left - W_right, W'_left - W'_right) at the matching point."""

    defect: FloatArray
    divergent: bool = False
    left: Optional[OdeSolution] = None
    right: Optional[OdeSolution] = None

    @property
    def norm(self) -> float:
        return float(np.inf) if self.divergent else float(np.linalg.norm(self.defect))


def _coefficient(poly: Polynomial, order: int) -> float:
    return float(poly.coef[order]) if order < poly.coef.shape[0] else 0.0


def _next_coefficient(
    coefficients: List[float], position: int, order: int, residual: Callable[[List[float]], Polynomial]
) -> float:
    """
    Solves for the coefficient at `position` that cancels the residual at `order`. The unknown
    enters that order affinely, so two trial evaluations determine it.
    """
    trial = coefficients + [0.0] * (position + 1 - len(coefficients))
    trial[position] = 0.0
    r0 = _coefficient(residual(trial), order)
    trial[position] = 1.0
    r1 = _coefficient(residual(trial), order)
    if abs(r1 - r0) < 1e-14:
        raise DomainError(f"Resonant series: coefficient {position} is not fixed by order {order}")
    return -r0 / (r1 - r0)


def _origin_residual(d: int) -> Callable[[List[float]], Polynomial]:
    eta = Polynomial([0.0, 1.0])

    def residual(coefficients: List[float]) -> Polynomial:
        w = Polynomial(coefficients)
        return eta**2 * (1.0 - eta**2) * w.deriv(2) + ((d - 3) * eta - 2.0 * eta**3) * w.deriv() + (d - 2) * w * (
            1.0 - w**2
        )

    return residual


def _lightcone_residual(d: int) -> Callable[[List[float]], Polynomial]:
    # The same operator in x = 1 - eta.
    x = Polynomial([0.0, 1.0])
    p = x * (2.0 - x) * (1.0 - x) ** 2
    q = (1.0 - x) * ((d - 5) + 4.0 * x - 2.0 * x**2)

    def residual(coefficients: List[float]) -> Polynomial:
        w = Polynomial(coefficients)
        return p * w.deriv(2) - q * w.deriv() + (d - 2) * w * (1.0 - w**2)

    return residual


def origin_coefficients(b: float, d: int = 5, terms: int = SERIES_TERMS) -> FloatArray:
    """Coefficients of W = 1 + b eta^2 + c4 eta^4 + ... (odd powers vanish)."""
    check_dimension(d)
    residual = _origin_residual(d)
    coefficients = [1.0, 0.0, b]
    for power in range(4, 2 * terms + 3, 2):
        coefficients += [0.0]
        coefficients += [_next_coefficient(coefficients, power, power, residual)]
    return np.array(coefficients)


def lightcone_coefficients(w1: float, c: float, d: int = 5, terms: int = SERIES_TERMS) -> FloatArray:
    """
    Coefficients of W = a0 + a1 x + a2 x^2 + ... in x = 1 - eta.

    In d = 5 the slope c = W'(1) = -a1 is free and W(1) must satisfy W(1)(1 - W(1)^2) = 0; in other
    dimensions W(1) is free and the slope is fixed by the equation (c is ignored).

    Raises:
        ConstraintViolationError: If d = 5 and w1 is not one of 0, +1, -1.
    """
    check_dimension(d)
    residual = _lightcone_residual(d)
    if d == 5:
        if min(abs(w1 - allowed) for allowed in LIGHTCONE_VALUES) > 1e-12:
            raise ConstraintViolationError(f"W(1) must be 0 or +-1 in d = 5, got {w1}")
        coefficients = [w1, -c]
    else:
        coefficients = [w1]
        coefficients += [_next_coefficient(coefficients, 1, 0, residual)]
    for order in range(1, terms + 1):
        coefficients += [_next_coefficient(coefficients, order + 1, order, residual)]
    return np.array(coefficients)


def series_origin(b: float, eta0: float, d: int = 5, terms: int = SERIES_TERMS) -> SeriesPoint:
    """
    (W, W') at eta0 from the regular expansion about eta = 0.

    Raises:
        DomainError: If eta0 is not in (0, 1e-2].
    """
    if not 0.0 < eta0 <= 1e-2:
        raise DomainError(f"Series offset eta0 must lie in (0, 1e-2], got {eta0}")
    series = Polynomial(origin_coefficients(b, d, terms))
    error = abs(series.coef[-1]) * eta0 ** (series.coef.shape[0] - 1)
    return SeriesPoint(float(series(eta0)), float(series.deriv()(eta0)), float(error))


def series_lightcone(w1: float, c: float, eta1: float, d: int = 5, terms: int = SERIES_TERMS) -> SeriesPoint:
    """
    (W, W') at 1 - eta1 from the expansion about the light cone eta = 1.

    Raises:
        DomainError: If eta1 is not in (0, 1e-2].
        ConstraintViolationError: If d = 5 and w1 is not one of 0, +1, -1.
    """
    if not 0.0 < eta1 <= 1e-2:
        raise DomainError(f"Series offset eta1 must lie in (0, 1e-2], got {eta1}")
    series = Polynomial(lightcone_coefficients(w1, c, d, terms))
    error = abs(series.coef[-1]) * eta1 ** (series.coef.shape[0] - 1)
    return SeriesPoint(float(series(eta1)), float(-series.deriv()(eta1)), float(error))


class _Blowoff:
    """Terminal event for |W| reaching the blow-off bound."""

    terminal = True

    def __init__(self, bound: float) -> None:
        self.bound = bound

    def __call__(self, eta: float, y: FloatArray) -> float:
        return float(self.bound - abs(y[0]))


class SimilarityODE:
    """The self-similar ODE of dimension d as a first-order system in (W, W')."""

    def __init__(self, d: int = 5, settings: Optional[ShootingSettings] = None) -> None:
        self.d = check_dimension(d)
        self.settings = settings or ShootingSettings()

    def rhs(self, eta: float, y: FloatArray) -> FloatArray:
        d = self.d
        w, wp = y
        wpp = -(((d - 3) / eta - 2.0 * eta) * wp + (d - 2) / eta**2 * w * (1.0 - w * w)) / (1.0 - eta * eta)
        return np.array([wp, wpp])

    def integrate(
        self, start: float, y0: Sequence[float], tolerance: float, dense: bool
    ) -> Tuple[bool, FloatArray, Optional[OdeSolution]]:
        """Integrates from start to the matching point; returns (finished, end values, dense solution)."""
        solution = solve_ivp(
            self.rhs,
            (start, self.settings.matching_point),
            np.asarray(y0, dtype=np.float64),
            method="DOP853",
            rtol=tolerance,
            atol=tolerance,
            events=_Blowoff(self.settings.blowoff),
            dense_output=dense,
        )
        ok = solution.status == 0 and np.all(np.isfinite(solution.y[:, -1]))
        return bool(ok), solution.y[:, -1], solution.sol

    def shoot(
        self, b: float, c: float, w1: float, tolerance: Optional[float] = None, dense: bool = False
    ) -> ShotResult:
        """
        Integrates from eta0 outward and from 1 - eta1 inward and returns the defect at the
        matching point. A shot whose |W| passes the blow-off bound is reported as divergent.

        In d != 5 the light-cone slope follows from w1 and c is ignored.
        """
        settings = self.settings
        tol = settings.ode_tolerance if tolerance is None else tolerance
        left0 = series_origin(b, settings.eta0, self.d)
        right0 = series_lightcone(w1, c, settings.eta1, self.d)
        left_ok, left_end, left_sol = self.integrate(settings.eta0, (left0.value, left0.slope), tol, dense)
        right_ok, right_end, right_sol = self.integrate(
            1.0 - settings.eta1, (right0.value, right0.slope), tol, dense
        )
        if not (left_ok and right_ok):
            return ShotResult(np.full(2, np.nan), divergent=True)
        return ShotResult(left_end - right_end, left=left_sol, right=right_sol)

    def light_cone_slope(self, w1: float, c: float) -> float:
        return float(-lightcone_coefficients(w1, c, self.d)[1])


def shoot(b: float, c: float, w1: float, d: int = 5, settings: Optional[ShootingSettings] = None) -> ShotResult:
    return SimilarityODE(d, settings).shoot(b, c, w1)


def _polyline_crossings(left: FloatArray, right: FloatArray) -> List[Tuple[int, float, int, float]]:
    """
    Intersections of two polylines in the (W, W') plane, as (segment, fraction) pairs on each.
    Divergent (non-finite) samples split a polyline: segments touching one are skipped.
    """
    left_ok = np.all(np.isfinite(left[:-1]) & np.isfinite(left[1:]), axis=1)
    right_ok = np.all(np.isfinite(right[:-1]) & np.isfinite(right[1:]), axis=1)
    a0, da = left[:-1], np.diff(left, axis=0)
    b0, db = right[:-1], np.diff(right, axis=0)
    offset = b0[None, :, :] - a0[:, None, :]
    denominator = da[:, None, 0] * db[None, :, 1] - da[:, None, 1] * db[None, :, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        s = (offset[..., 0] * db[None, :, 1] - offset[..., 1] * db[None, :, 0]) / denominator
        u = (offset[..., 0] * da[:, None, 1] - offset[..., 1] * da[:, None, 0]) / denominator
        hit = (s >= 0.0) & (s <= 1.0) & (u >= 0.0) & (u <= 1.0)
    hit &= left_ok[:, None] & right_ok[None, :] & np.isfinite(s) & np.isfinite(u)
    return [(int(i), float(s[i, j]), int(j), float(u[i, j])) for i, j in zip(*np.nonzero(hit), strict=True)]


def scan_curve(point: Callable[[float], FloatArray], parameters: FloatArray) -> Tuple[FloatArray, FloatArray]:
    """
    Samples a scan curve p -> (W, W') over the parameters. Where a finite sample neighbours a
    divergent one, the divergence edge is bisected and the finite points found on the way are
    inserted, so the finite runs of the curve reach up to the edge.

    Returns:
        The (possibly refined) parameters and the sampled points, divergent ones as NaN rows.
    """
    values = [point(float(p)) for p in parameters]
    finite = [bool(np.all(np.isfinite(value))) for value in values]
    grid: List[float] = [float(parameters[0])]
    points: List[FloatArray] = [values[0]]
    for k in range(1, len(values)):
        lo, hi = float(parameters[k - 1]), float(parameters[k])
        if finite[k - 1] != finite[k]:
            inside, outside = (lo, hi) if finite[k - 1] else (hi, lo)
            edge: List[Tuple[float, FloatArray]] = []
            for _ in range(EDGE_BISECTIONS):
                middle = 0.5 * (inside + outside)
                value = point(middle)
                if np.all(np.isfinite(value)):
                    inside = middle
                    edge.append((middle, value))
                else:
                    outside = middle
            edge.sort(key=lambda item: item[0], reverse=hi < lo)
            grid += [p for p, _ in edge]
            points += [sample for _, sample in edge]
        grid.append(hi)
        points.append(values[k])
    return np.array(grid), np.array(points)


def _right_parameters(settings: ShootingSettings, d: int) -> FloatArray:
    n = settings.c_samples // 2
    if d == 5:
        positive = np.geomspace(1e-2, settings.c_max, n)
        return np.concatenate([-positive[::-1], [0.0], positive])
    return np.linspace(-2.0, 2.0, settings.c_samples)


def _tabulate(ode: SimilarityODE, b: float, c: float, w1: float, shot: ShotResult) -> List[Tuple[float, float, float]]:
    settings = ode.settings
    assert shot.left is not None and shot.right is not None
    rows: List[Tuple[float, float, float]] = []
    for eta in np.linspace(0.0, 1.0, settings.table_points):
        if eta == 0.0:
            value, slope = 1.0, 0.0
        elif eta < settings.eta0:
            point = series_origin(b, float(eta), ode.d)
            value, slope = point.value, point.slope
        elif eta <= settings.matching_point:
            value, slope = shot.left(eta)
        elif eta <= 1.0 - settings.eta1:
            value, slope = shot.right(eta)
        elif eta < 1.0:
            point = series_lightcone(w1, c, float(1.0 - eta), ode.d)
            value, slope = point.value, point.slope
        else:
            value, slope = w1, ode.light_cone_slope(w1, c)
        rows.append((float(eta), float(value), float(slope)))
    return rows


RightData = Callable[[float], Tuple[float, float]]


def _defect_function(ode: SimilarityODE, right_data: RightData, tolerance: float) -> Callable[[FloatArray], FloatArray]:
    def defect(x: FloatArray) -> FloatArray:
        w1, c = right_data(float(x[1]))
        shot = ode.shoot(float(x[0]), c, w1, tolerance=tolerance)
        return shot.defect if not shot.divergent else np.full(2, DIVERGENT_DEFECT)

    return defect


def refine_root(ode: SimilarityODE, right_data: RightData, guess: Sequence[float]) -> Optional[FloatArray]:
    """
    Refines a scan crossing (b, parameter) into a root of the matching defect.

    The root is first solved at the refinement tolerance and then polished at the certification
    tolerance, so the integration error of the refinement shots does not bias the root. The
    solver's own convergence flag is not trusted: a refined root is kept when its defect is small.

    Returns:
        The polished (b, parameter), or None if the refinement did not settle on a root.
    """
    settings = ode.settings
    start = np.asarray(guess, dtype=np.float64)
    coarse = root(_defect_function(ode, right_data, settings.ode_tolerance), start, method="hybr", options=ROOT_OPTIONS)
    if not np.all(np.isfinite(coarse.x)) or float(np.linalg.norm(coarse.fun)) > REFINE_DEFECT:
        return None
    fine = root(
        _defect_function(ode, right_data, settings.certify_tolerance), coarse.x, method="hybr", options=ROOT_OPTIONS
    )
    polished = fine.x if np.all(np.isfinite(fine.x)) else coarse.x
    return np.asarray(polished, dtype=np.float64)


def find_profiles(
    d: int = 5,
    settings: Optional[ShootingSettings] = None,
    b_range: Optional[Tuple[float, float]] = None,
    branches: Optional[Sequence[float]] = None,
) -> List[SelfSimilarProfile]:
    """
    Searches for regular self-similar profiles with origin parameter b in the given range.

    The left curve b -> (W, W')(matching point) is scanned on a logarithmic grid in |b|; for each
    light-cone branch the right curve is scanned over its free parameter (the slope c in d = 5,
    the value W(1) otherwise). Crossings of the two polylines seed a Newton-type refinement of the
    defect over (b, parameter), and each root is certified by re-integration at the tightened
    certification tolerance.

    In d = 5 the ground state W_0 sits at b = -1.6 and the first excited profile at b close to
    -72.39 (W(1) = 0, W'(1) close to 0.4813), so the default range reaches down to b = -100.

    Args:
        d: Spatial dimension.
        settings: Scan and tolerance settings.
        b_range: (b_min, b_max), both negative; defaults to the settings.
        branches: Light-cone values W(1) scanned in d = 5; defaults to the settings.

    Returns:
        Certified profiles ordered by |b|, without duplicates. Empty if none were found.
    """
    settings = settings or ShootingSettings()
    ode = SimilarityODE(d, settings)
    b_lo, b_hi = b_range if b_range is not None else (settings.b_min, settings.b_max)
    if not b_lo < b_hi < 0.0:
        raise DomainError(f"Search range must satisfy b_min < b_max < 0, got ({b_lo}, {b_hi})")

    scan = ShootingSettings(**{**settings.model_dump(), "ode_tolerance": settings.scan_tolerance})
    scanner = SimilarityODE(d, scan)

    def left_point(b: float) -> FloatArray:
        point = series_origin(b, settings.eta0, d)
        ok, end, _ = scanner.integrate(settings.eta0, (point.value, point.slope), settings.scan_tolerance, False)
        return end if ok else np.full(2, np.nan)

    bs, left = scan_curve(left_point, -np.geomspace(abs(b_hi), abs(b_lo), settings.b_samples))
    branch_values: List[Optional[float]] = [None]
    if d == 5:
        branch_values = list(branches if branches is not None else settings.branches)

    found: List[SelfSimilarProfile] = []
    for branch in branch_values:

        def right_data(p: float, branch: Optional[float] = branch) -> Tuple[float, float]:
            # (W(1), c) for a right-hand parameter value.
            return (branch, p) if branch is not None else (p, 0.0)

        def right_point(p: float) -> FloatArray:
            w1, c = right_data(p)
            point = series_lightcone(w1, c, settings.eta1, d)
            start = 1.0 - settings.eta1
            ok, end, _ = scanner.integrate(start, (point.value, point.slope), settings.scan_tolerance, False)
            return end if ok else np.full(2, np.nan)

        parameters, right = scan_curve(right_point, _right_parameters(settings, d))
        crossings = _polyline_crossings(left, right)
        divergent = int(np.count_nonzero(~np.all(np.isfinite(right), axis=1)))
        logger.debug(
            f"Branch W(1)={branch}: {len(crossings)} crossing(s), {divergent}/{len(parameters)} divergent samples"
        )

        for i, s, j, u in crossings:
            guess = (bs[i] + s * (bs[i + 1] - bs[i]), parameters[j] + u * (parameters[j + 1] - parameters[j]))
            refined = refine_root(ode, right_data, guess)
            if refined is None:
                continue
            b, p = float(refined[0]), float(refined[1])
            if not b_lo <= b <= b_hi:
                continue
            w1, c = right_data(p)
            if d != 5:
                c = ode.light_cone_slope(w1, c)
            if any(abs(b - other.b) <= 1e-6 * max(1.0, abs(b)) and abs(w1 - other.w1) < 1e-9 for other in found):
                continue
            certified = ode.shoot(b, c, w1, tolerance=settings.certify_tolerance, dense=True)
            if certified.norm >= settings.certify_defect:
                logger.debug(f"Rejected candidate b={b!r}: certified defect {certified.norm:.3e}")
                continue
            found.append(
                SelfSimilarProfile(
                    d=d, b=b, c=c, w1=w1, samples=_tabulate(ode, b, c, w1, certified), residual=certified.norm
                )
            )
            logger.info(f"Certified profile b={b!r}, c={c!r}, W(1)={w1}, defect={certified.norm:.3e}")

    return sorted(found, key=lambda profile: abs(profile.b))


def to_profile(profile: SelfSimilarProfile) -> Profile:
    """A Numeric profile interpolating the certified table."""
    return Profile(ProfileKind.NUMERIC, np.array(profile.samples, dtype=np.float64))


def attractor_profile(
    d: int = 5, settings: Optional[ShootingSettings] = None, b_hint: Optional[float] = None
) -> SelfSimilarProfile:
    """
    The first excited profile (second root by |b|), or the root nearest b_hint when given.

    Raises:
        DependencyError: If no such profile is found.
    """
    settings = settings or ShootingSettings()
    if b_hint is not None:
        profiles = find_profiles(d, settings, b_range=(1.25 * b_hint, 0.8 * b_hint))
        if profiles:
            return min(profiles, key=lambda profile: abs(profile.b - b_hint))
        raise DependencyError(f"No self-similar profile found near b={b_hint}")
    profiles = find_profiles(d, settings)
    if len(profiles) < 2:
        found = len(profiles)
        raise DependencyError(f"Only {found} self-similar profile(s) found in [{settings.b_min}, {settings.b_max}]")
    return profiles[1]
