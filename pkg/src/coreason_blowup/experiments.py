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
Drivers for the threshold and scaling experiments.

Trials at distinct amplitudes are independent and go through a TrialRunner; the bisection loop
itself is sequential. Results are aggregated in input order.
"""

import math
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from coreason_blowup.equations import FloatArray, Profile
from coreason_blowup.evolve import EvolutionResult, Snapshot, profile_distance, run_evolution
from coreason_blowup.exceptions import (
    BracketError,
    DependencyError,
    DomainError,
    InsufficientDataError,
    ResolutionError,
)
from coreason_blowup.fitting import check_scale_span, fit_power_law, fit_scale_law, scale_rows
from coreason_blowup.interfaces import OutcomeClassifier, TrialRunner
from coreason_blowup.models import (
    AttractorComparison,
    Bracket,
    ConeEnergyLimit,
    DepartureResult,
    DiagnosticsRow,
    EvolutionConfig,
    OutcomeKind,
    ScalingFit,
    SweepMember,
    SweepResult,
    Trial,
)
from coreason_blowup.utils.logger import logger
from coreason_blowup.utils.runners import ThreadTrialRunner

Evolver = Callable[[EvolutionConfig], EvolutionResult]

DEPARTURE_FACTORS = (1.5, 2.0, 3.0)
# Snapshot spacing forced on departure runs that do not schedule snapshots.
DEPARTURE_SNAPSHOT_DT = 0.02
# Samples of the rescaled solution required inside the light cone for a distance.
CONE_MIN_POINTS = 8
RATE_CAVEAT = (
    "Fitted over the last decade of lambda only; alpha depends weakly on the initial data and the "
    "asymptotic rate law is not established by this fit."
)


class EvolutionClassifier(OutcomeClassifier):
    """Classifies amplitudes of the gaussian family by running full evolutions."""

    def __init__(self, config: EvolutionConfig, evolve: Evolver = run_evolution) -> None:
        self.config = config
        self.evolve = evolve

    def classify(self, amplitude: float) -> OutcomeKind:
        outcome = self.evolve(self.config.with_amplitude(amplitude)).outcome
        logger.info(f"Trial A={amplitude!r}: {outcome.kind.value} ({outcome.reason})")
        return outcome.kind


async def bisect_critical(
    classifier: OutcomeClassifier,
    a_lo: float,
    a_hi: float,
    tolerance: float,
    runner: Optional[TrialRunner] = None,
) -> Bracket:
    """
    Bisects the amplitude between a dispersing and a blowing-up member of the family.

    Both ends are evaluated concurrently; the bisection then proceeds one trial at a time until the
    relative width (a_hi - a_lo) / a_hi is at most the tolerance.

    Args:
        classifier: Decides the outcome of an amplitude.
        a_lo: Amplitude expected to disperse.
        a_hi: Amplitude expected to blow up.
        tolerance: Relative bracket width at which to stop.
        runner: Executes the trials; defaults to two worker threads.

    Returns:
        The final bracket with its trial history. If a trial is Undetermined the bisection stops
        early and the bracket is marked limited.

    Raises:
        BracketError: If the ends do not disperse and blow up respectively.
    """
    if not 0.0 <= a_lo < a_hi:
        raise BracketError(f"Bracket requires 0 <= a_lo < a_hi, got ({a_lo}, {a_hi})")
    runner = runner or ThreadTrialRunner(2)
    lo_kind, hi_kind = await runner.map(classifier.classify, [a_lo, a_hi])
    history = [Trial(amplitude=a_lo, outcome=lo_kind), Trial(amplitude=a_hi, outcome=hi_kind)]
    if lo_kind != OutcomeKind.DISPERSION or hi_kind != OutcomeKind.BLOWUP:
        raise BracketError(
            f"Invalid bracket: A={a_lo} gave {lo_kind.value}, A={a_hi} gave {hi_kind.value}; "
            "expected Dispersion below and Blowup above"
        )

    limited = False
    while (a_hi - a_lo) / a_hi > tolerance:
        middle = 0.5 * (a_lo + a_hi)
        if not a_lo < middle < a_hi:
            break
        (kind,) = await runner.map(classifier.classify, [middle])
        history.append(Trial(amplitude=middle, outcome=kind))
        if kind == OutcomeKind.DISPERSION:
            a_lo = middle
        elif kind == OutcomeKind.BLOWUP:
            a_hi = middle
        else:
            logger.warning(f"Bisection stopped at A={middle!r}: outcome undetermined")
            limited = True
            break

    bracket = Bracket(a_lo=a_lo, a_hi=a_hi, history=history, limited=limited)
    logger.info(f"A* = {bracket.a_star!r} (relative width {bracket.relative_width:.3e}, {len(history)} trials)")
    return bracket


async def subcritical_sweep(
    config: EvolutionConfig,
    a_star: float,
    epsilons: Sequence[float],
    runner: Optional[TrialRunner] = None,
    evolve: Evolver = run_evolution,
    window: Optional[Tuple[float, float]] = None,
) -> SweepResult:
    """
    Measures the peak regularized center energy density of A = A* - epsilon and fits its power law
    in epsilon.

    Members that do not disperse are excluded from the fit; a Blowup member means A* is not
    accurate enough and the sweep is reported as contaminated, without a fit.
    """
    amplitudes = [a_star - eps for eps in epsilons]
    if any(amplitude <= 0.0 for amplitude in amplitudes):
        raise DomainError("Every epsilon must be smaller than A*")
    runner = runner or ThreadTrialRunner()
    results = await runner.map(evolve, [config.with_amplitude(amplitude) for amplitude in amplitudes])

    members: List[SweepMember] = []
    for eps, amplitude, result in zip(epsilons, amplitudes, results, strict=True):
        kind = result.outcome.kind
        note = None if kind == OutcomeKind.DISPERSION else f"{kind.value}: {result.outcome.reason}"
        members.append(
            SweepMember(
                epsilon=eps,
                amplitude=amplitude,
                outcome=kind,
                value=result.rho_max(),
                resolved=kind == OutcomeKind.DISPERSION,
                note=note,
            )
        )
        logger.info(f"Sweep member eps={eps!r}: {kind.value}, rho_max={result.rho_max():.6g}")

    if any(member.outcome == OutcomeKind.BLOWUP for member in members):
        logger.warning("Subcritical sweep contaminated by a Blowup member; A* is too large")
        return SweepResult(members=members, fit=None, contaminated=True)

    values = [member.value if member.resolved else math.nan for member in members]
    fit = fit_power_law([member.epsilon for member in members], values, window)
    return SweepResult(members=members, fit=fit)


def attractor_distances(
    snapshots: Sequence[Snapshot], profile: Profile, horizon: float, min_points: int = CONE_MIN_POINTS
) -> Tuple[FloatArray, FloatArray]:
    """
    Distances sup_eta |w(t, (T - t) eta) - W(eta)| for the snapshots taken before T.
    Snapshots that do not resolve the light cone are skipped.
    """
    times: List[float] = []
    distances: List[float] = []
    for snapshot in snapshots:
        gap = horizon - snapshot.t
        if gap <= 0.0:
            continue
        try:
            distances.append(profile_distance(snapshot.state, profile, gap, min_points))
        except (ResolutionError, DomainError) as exc:
            logger.debug(f"Skipping snapshot {snapshot.index}: {exc}")
            continue
        times.append(snapshot.t)
    return np.array(times), np.array(distances)


def departure_time(times: FloatArray, distances: FloatArray, factor: float) -> Optional[float]:
    """First time after the minimum at which the distance exceeds factor times the minimum."""
    if distances.shape[0] == 0:
        return None
    i_min = int(np.argmin(distances))
    later = np.flatnonzero(distances[i_min + 1 :] > factor * distances[i_min])
    if later.size == 0:
        return None
    return float(times[i_min + 1 + later[0]])


def attractor_comparison(
    snapshots: Sequence[Snapshot], profile: Optional[Profile], horizon: float, factor: float = 2.0
) -> AttractorComparison:
    """
    Tracks the distance of the rescaled solution to a self-similar profile.

    The decreasing phase requires the minimum to come after the first sample and to be at most
    half the initial distance; departure uses the same detector as departure_scaling.

    Raises:
        DependencyError: If the profile is unavailable.
        InsufficientDataError: If fewer than 3 snapshots resolve the light cone.
    """
    if profile is None:
        raise DependencyError("Attractor comparison needs the self-similar profile")
    times, distances = attractor_distances(snapshots, profile, horizon)
    if distances.shape[0] < 3:
        raise InsufficientDataError(f"Need at least 3 resolved snapshots, got {distances.shape[0]}")
    i_min = int(np.argmin(distances))
    return AttractorComparison(
        times=times.tolist(),
        distances=distances.tolist(),
        minimum=float(distances[i_min]),
        minimum_time=float(times[i_min]),
        decreasing_phase=i_min > 0 and distances[0] >= 2.0 * distances[i_min],
        departed=departure_time(times, distances, factor) is not None,
    )


async def departure_scaling(
    config: EvolutionConfig,
    a_star: float,
    epsilons: Sequence[float],
    attractor: Optional[Profile],
    horizon: Optional[float] = None,
    factor: float = 2.0,
    runner: Optional[TrialRunner] = None,
    evolve: Evolver = run_evolution,
) -> DepartureResult:
    """
    Fits T - t* against epsilon for A = A* +- epsilon, where t* is the first time after the
    closest approach to the attractor at which the distance exceeds the detector factor times its
    minimum.

    Args:
        config: The family member at A*; amplitudes are substituted.
        a_star: The critical amplitude.
        epsilons: Offsets from A*.
        attractor: The intermediate attractor profile.
        horizon: The critical-run time horizon T; defaults to the blowup time of the Blowup member
            closest to A*.
        factor: Detector factor reported in the members; fits are made for 1.5, 2 and 3 as well.
        runner: Executes the runs.
        evolve: Runs one evolution.

    Returns:
        Members for both signs and the fits keyed by sign and factor (e.g. "+2", "-1.5").

    Raises:
        DependencyError: If the attractor profile is unavailable.
    """
    if attractor is None:
        raise DependencyError("Departure scaling needs the intermediate attractor profile")
    if config.snapshots.every_dt is None:
        config = config.model_copy(
            update={"snapshots": config.snapshots.model_copy(update={"every_dt": DEPARTURE_SNAPSHOT_DT})}
        )
    runner = runner or ThreadTrialRunner()
    signed = [(sign, eps) for sign in (1.0, -1.0) for eps in epsilons]
    results = await runner.map(evolve, [config.with_amplitude(a_star + sign * eps) for sign, eps in signed])

    if horizon is None:
        blowups = [
            (eps, result.outcome.T_estimate)
            for (_, eps), result in zip(signed, results, strict=True)
            if result.outcome.kind == OutcomeKind.BLOWUP and result.outcome.T_estimate is not None
        ]
        if not blowups:
            raise InsufficientDataError("No Blowup member to define the critical horizon")
        horizon = float(min(blowups)[1])

    departures: Dict[float, List[Optional[float]]] = {f: [] for f in sorted({*DEPARTURE_FACTORS, factor})}
    members: List[SweepMember] = []
    for (sign, eps), result in zip(signed, results, strict=True):
        times, distances = attractor_distances(result.snapshots, attractor, horizon)
        for f, found in departures.items():
            found.append(departure_time(times, distances, f))
        t_star = departures[factor][-1]
        members.append(
            SweepMember(
                epsilon=eps,
                amplitude=a_star + sign * eps,
                outcome=result.outcome.kind,
                value=horizon - t_star if t_star is not None else None,
                resolved=t_star is not None,
                note=None if t_star is not None else "departure not detected",
            )
        )

    fits: Dict[str, Optional[ScalingFit]] = {}
    for sign, label in ((1.0, "+"), (-1.0, "-")):
        for f, found in departures.items():
            pairs = [
                (eps, horizon - t)
                for (s, eps), t in zip(signed, found, strict=True)
                if s == sign and t is not None and horizon - t > 0.0
            ]
            key = f"{label}{f:g}"
            if len(pairs) < 2:
                fits[key] = None
                continue
            fits[key] = fit_power_law([p[0] for p in pairs], [p[1] for p in pairs])
            logger.info(f"Departure exponent {key}: {fits[key].exponent:.4f}")  # type: ignore[union-attr]
    return DepartureResult(horizon=horizon, fits=fits, members=members)


def anomalous_rate_fit(rows: Sequence[DiagnosticsRow]) -> ScalingFit:
    """
    Fits lambda = C (T - t)^(1 + alpha) over the last decade of lambda and reports alpha.

    Raises:
        InsufficientDataError: If lambda spans fewer than 2 decades (or fewer than 20 rows).
    """
    t, lam = scale_rows(rows)
    check_scale_span(lam)
    fit = fit_scale_law(t, lam)
    alpha = fit.exponent - 1.0
    logger.info(f"Rate exponent p={fit.exponent:.5f}, alpha={alpha:.5f} (RMS {fit.residual:.2e})")
    return fit.model_copy(update={"anomalous_exponent": alpha, "caveat": RATE_CAVEAT})


def cone_energy_limit(rows: Sequence[DiagnosticsRow], fit: Optional[ScalingFit] = None) -> ConeEnergyLimit:
    """
    Extrapolates the light-cone energy to t -> T by a straight line in T - t over the last decade.

    The trend is "vanishing" when the extrapolated limit is below a tenth of the value one decade
    of T - t earlier, "concentrating" otherwise. The estimate is low confidence when the blowup
    time fit is missing or unreliable.
    """
    data = [
        (math.exp(-row.tau), row.E_cone, row.E_cone_kinetic)
        for row in rows
        if row.tau is not None and row.E_cone is not None
    ]
    if not data:
        logger.warning("No light-cone energies available; reporting a zero limit")
        return ConeEnergyLimit(limit=0.0, trend="vanishing", decade_ratio=0.0, low_confidence=True)

    gaps = np.array([item[0] for item in data])
    energies = np.array([item[1] for item in data])
    last_gap = gaps[-1]
    window = gaps <= 10.0 * last_gap
    if np.count_nonzero(window) >= 2:
        _, intercept = np.polyfit(gaps[window], energies[window], 1)
    else:
        intercept = energies[-1]
    limit = max(float(intercept), 0.0)

    earlier = float(np.interp(10.0 * last_gap, gaps[::-1], energies[::-1]))
    kinetic = data[-1][2]
    return ConeEnergyLimit(
        limit=limit,
        trend="vanishing" if limit < 0.1 * earlier or earlier == 0.0 else "concentrating",
        decade_ratio=float(energies[-1] / earlier) if earlier > 0.0 else 0.0,
        kinetic_fraction=float(kinetic / energies[-1]) if kinetic is not None and energies[-1] > 0.0 else None,
        low_confidence=fit is None or not fit.reliable or np.count_nonzero(window) < 3,
    )
