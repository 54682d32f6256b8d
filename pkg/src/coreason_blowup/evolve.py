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
Time evolution of the reduced equation on the mesh hierarchy.

The evolved pair is (u, u_t) with u = 1 - w. The center u(t, 0) = 0 is pinned, where the
regularized equation gives u_tt(0) = 0. The outer edge evolves u_t by the time derivative of the
outgoing condition

    u_t + u_r + ((d - 3) / (2 r)) u = -(V / (2 r^2)) * integral of u dt,

where V = (d - 3)(d - 5) / 4 + 2 (d - 2) is the potential seen by r^((d - 3) / 2) u in the
linearized equation.
"""

import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.interpolate import PchipInterpolator

from coreason_blowup.energy import cd_coefficient, cumulative_energy
from coreason_blowup.equations import FloatArray, Profile, closed_form_profile, u_rhs
from coreason_blowup.exceptions import DomainError, InsufficientDataError, NumericalBreakdownError, ResolutionError
from coreason_blowup.fitting import estimate_blowup_time, scale_rows
from coreason_blowup.interfaces import EdgeDriver
from coreason_blowup.mesh import AmrHierarchy, Level, LevelSnapshot
from coreason_blowup.models import DiagnosticsRow, EvolutionConfig, Outcome, OutcomeKind
from coreason_blowup.state import FieldState
from coreason_blowup.utils.logger import logger

# Radii of the stored enclosed-energy tables.
ENERGY_TABLE_POINTS = 400
# Reason identifiers of the stop criteria.
REASON_CURVATURE = "curvature_threshold"
REASON_EXHAUSTED = "resolution_exhausted"
REASON_DISPERSED = "dispersed"
REASON_MAX_TIME = "max_time"
REASON_STEP_BUDGET = "step_budget"
REASON_BREAKDOWN = "numerical_breakdown"

BLOWUP_REASONS = (REASON_CURVATURE, REASON_EXHAUSTED)


def edge_derivative(values: FloatArray, dr: float) -> float:
    """Fourth-order one-sided derivative at the last sample."""
    return float(
        (25.0 * values[-1] - 48.0 * values[-2] + 36.0 * values[-3] - 16.0 * values[-4] + 3.0 * values[-5]) / (12.0 * dr)
    )


class WaveStepper:
    """
    Method-of-lines step for one level: second-order centered differences in space and the
    classical fourth-order Runge-Kutta method in time.

    Edge points of refined levels are reset from parent data at every stage. Kreiss-Oliger
    dissipation is applied within `reach` points of those edges.
    """

    def __init__(self, d: int, dissipation: float = 0.0, reach: int = 8) -> None:
        self.d = d
        self.dissipation = dissipation
        self.reach = reach
        self._flux_weight = 2.0 * cd_coefficient(d)
        self._edge_potential = 0.5 * ((d - 3) * (d - 5) / 4.0 + 2.0 * (d - 2))

    def _dissipation_mask(self, level: Level) -> Optional[FloatArray]:
        if self.dissipation == 0.0 or level.depth == 0:
            return None
        index = np.arange(level.n)
        near = index >= level.n - 1 - self.reach
        if not level.touches_center:
            near |= index <= self.reach
        near &= (index >= 2) & (index <= level.n - 3)
        return near if np.any(near) else None

    def _rhs(
        self, level: Level, u: FloatArray, ut: FloatArray, mask: Optional[FloatArray]
    ) -> Tuple[FloatArray, FloatArray, float]:
        dr = level.dr
        r = level.r
        du = ut.copy()
        dut = np.zeros_like(u)
        u_rr = (u[2:] - 2.0 * u[1:-1] + u[:-2]) / (dr * dr)
        u_r = (u[2:] - u[:-2]) / (2.0 * dr)
        dut[1:-1] = u_rhs(u_rr, u_r, u[1:-1], r[1:-1], self.d)

        if level.touches_center:
            du[0] = 0.0
            dut[0] = 0.0

        flux = 0.0
        if level.depth == 0:
            rb = r[-1]
            curvature = (self.d - 3) / (2.0 * rb)
            dut[-1] = -edge_derivative(ut, dr) - curvature * ut[-1] - self._edge_potential / rb**2 * u[-1]
            flux = -self._flux_weight * rb ** (self.d - 3) * ut[-1] * edge_derivative(u, dr)

        if mask is not None:
            factor = self.dissipation / (16.0 * dr)
            for field_value, rate in ((u, du), (ut, dut)):
                fourth = np.zeros_like(field_value)
                fourth[2:-2] = (
                    field_value[4:]
                    - 4.0 * field_value[3:-1]
                    + 6.0 * field_value[2:-2]
                    - 4.0 * field_value[1:-3]
                    + field_value[:-4]
                )
                rate[mask] -= factor * fourth[mask]
        return du, dut, flux

    @staticmethod
    def _impose(level: Level, u: FloatArray, ut: FloatArray, time: float, edges: Optional[EdgeDriver]) -> None:
        if edges is not None:
            for index, u_edge, ut_edge in edges(time):
                u[index] = u_edge
                ut[index] = ut_edge
        if level.touches_center:
            u[0] = 0.0
            ut[0] = 0.0

    def step(self, level: Level, dt: float, edges: Optional[EdgeDriver]) -> float:
        """
        Advances the level by dt in place.

        Returns:
            The energy radiated through r_max during the step, integrated with the Runge-Kutta
            weights from a fourth-order one-sided u_r (0 for refined levels).

        Raises:
            NumericalBreakdownError: If a non-finite value appears.
        """
        t0 = level.time
        u0, ut0 = level.u, level.ut
        mask = self._dissipation_mask(level)

        k1u, k1t, f1 = self._rhs(level, u0, ut0, mask)
        u1, ut1 = u0 + 0.5 * dt * k1u, ut0 + 0.5 * dt * k1t
        self._impose(level, u1, ut1, t0 + 0.5 * dt, edges)

        k2u, k2t, f2 = self._rhs(level, u1, ut1, mask)
        u2, ut2 = u0 + 0.5 * dt * k2u, ut0 + 0.5 * dt * k2t
        self._impose(level, u2, ut2, t0 + 0.5 * dt, edges)

        k3u, k3t, f3 = self._rhs(level, u2, ut2, mask)
        u3, ut3 = u0 + dt * k3u, ut0 + dt * k3t
        self._impose(level, u3, ut3, t0 + dt, edges)

        k4u, k4t, f4 = self._rhs(level, u3, ut3, mask)
        u_new = u0 + dt / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u)
        ut_new = ut0 + dt / 6.0 * (k1t + 2.0 * k2t + 2.0 * k3t + k4t)
        self._impose(level, u_new, ut_new, t0 + dt, edges)

        if not (np.all(np.isfinite(u_new)) and np.all(np.isfinite(ut_new))):
            raise NumericalBreakdownError(f"Non-finite values on depth {level.depth} at t={t0 + dt!r}")

        level.u, level.ut = u_new, ut_new
        level.time = t0 + dt
        return dt / 6.0 * (f1 + 2.0 * f2 + 2.0 * f3 + f4)


def gaussian_profile(config: EvolutionConfig, r: FloatArray) -> FloatArray:
    """u(0, r) = A r^2 exp(-sigma (r - R)^2), i.e. 1 - w of the time-symmetric gaussian family."""
    return np.asarray(config.A * r * r * np.exp(-config.sigma * (r - config.R) ** 2), dtype=np.float64)


def make_initial_data(config: EvolutionConfig) -> FieldState:
    """
    Samples w(0, r) = 1 - A r^2 exp(-sigma (r - R)^2), w_t(0, r) = 0 on the base grid.
    """
    r = np.arange(config.base_cells + 1, dtype=np.float64) * config.dr0
    return FieldState(0.0, r, 1.0 - gaussian_profile(config, r), np.zeros_like(r))


def level_center_curvature(level: Level) -> float:
    """w_rr(t, 0) from the fourth-order stencil with even parity on a level containing r = 0."""
    u0, u1, u2 = level.u[0], level.u[1], level.u[2]
    return float(-(32.0 * u1 - 2.0 * u2 - 30.0 * u0) / (12.0 * level.dr * level.dr))


def scale_from_curvature(w_rr0: float, curvature_at_origin: float) -> Optional[float]:
    """lambda = sqrt(W''(0) / w_rr(t, 0)); undefined while w_rr(t, 0) >= 0."""
    if w_rr0 >= 0.0:
        return None
    return math.sqrt(curvature_at_origin / w_rr0)


def extract_scale(state: FieldState, d: int, profile: Optional[Profile] = None) -> Optional[float]:
    """
    The scale lambda(t) of the blowup profile, read off the center curvature.

    Returns:
        lambda, or None in the early phase when w_rr(t, 0) >= 0.
    """
    reference = profile if profile is not None else closed_form_profile(d)
    return scale_from_curvature(state.center_curvature(), reference.curvature_at_origin())


def profile_distance(state: FieldState, profile: Profile, lam: float, min_points: int = 32) -> float:
    """
    sup over eta in [0, 1] of |w(t, lam * eta) - W(eta)|.

    Raises:
        ResolutionError: If fewer than min_points samples lie in (0, lam].
        DomainError: If lam exceeds the sampled range.
    """
    if lam <= 0.0:
        raise DomainError(f"Scale must be positive, got {lam}")
    cells = int(np.count_nonzero((state.r > 0.0) & (state.r <= lam)))
    if cells < min_points:
        raise ResolutionError(f"Scale {lam:.3e} resolved by {cells} samples, need {min_points}")
    end = min(int(np.searchsorted(state.r, lam, side="right")) + 4, state.r.shape[0])
    if lam > state.r[end - 1]:
        raise DomainError(f"Scale {lam} exceeds the sampled range")
    window = FieldState(state.t, state.r[:end], state.w[:end], state.wt[:end])
    eta = np.linspace(0.0, 1.0, 257)
    return float(np.max(np.abs(window.sample(lam * eta) - profile.value(eta))))


@dataclass(frozen=True)
class Snapshot:
    index: int
    t: float
    lam: Optional[float]
    state: FieldState
    levels: List[LevelSnapshot]


class DiagnosticsSeries:
    """
    Time series of center curvature, scale, energies and the boundary flux ledger.

    Each row keeps the enclosed-energy tables at fixed radii so that the light-cone energy can
    be evaluated once the blowup time is known.
    """

    def __init__(self, radii: FloatArray) -> None:
        self.radii = radii
        self.rows: List[DiagnosticsRow] = []
        self._tables: List[Tuple[FloatArray, FloatArray]] = []

    def __len__(self) -> int:
        return len(self.rows)

    def append(self, row: DiagnosticsRow, total: FloatArray, kinetic: FloatArray) -> None:
        if self.rows and row.t <= self.rows[-1].t:
            raise DomainError(f"Diagnostics rows must be strictly increasing in t, got {row.t} after {self.rows[-1].t}")
        self.rows.append(row)
        self._tables.append((total, kinetic))

    def enclosed(self, index: int, radius: float) -> Tuple[float, float]:
        """Energy (total, kinetic) inside radius at row index."""
        total, kinetic = self._tables[index]
        if radius <= self.radii[0]:
            return 0.0, 0.0
        if radius >= self.radii[-1]:
            return float(total[-1]), float(kinetic[-1])
        log_r = np.log(self.radii)
        at = math.log(radius)
        return float(PchipInterpolator(log_r, total)(at)), float(PchipInterpolator(log_r, kinetic)(at))

    def finalize(self, horizon: float) -> None:
        """Fills the slow time tau = -ln(T - t) and the light-cone energies for rows with t < T."""
        for index, row in enumerate(self.rows):
            gap = horizon - row.t
            if gap <= 0.0:
                continue
            total, kinetic = self.enclosed(index, gap)
            update = {"tau": -math.log(gap), "E_cone": total, "E_cone_kinetic": kinetic}
            self.rows[index] = row.model_copy(update=update)

    def scales(self) -> Tuple[FloatArray, FloatArray]:
        return scale_rows(self.rows)


@dataclass
class EvolutionResult:
    config: EvolutionConfig
    outcome: Outcome
    series: DiagnosticsSeries
    snapshots: List[Snapshot]
    final_state: FieldState
    peak_curvature: float
    hierarchy: AmrHierarchy = field(repr=False)

    def rho_max(self) -> float:
        """Maximum over the run of the regularized center energy density."""
        return 0.5 * self.config.d * self.peak_curvature**2


def step(hierarchy: AmrHierarchy, config: EvolutionConfig, stepper: Optional[WaveStepper] = None) -> FieldState:
    """
    Advances the hierarchy by one coarse step of cfl * dr0 and returns the composite state.
    """
    driver = stepper or WaveStepper(config.d, config.mesh.dissipation, config.mesh.buffer_width)
    hierarchy.subcycle(config.coarse_dt, driver)
    return hierarchy.composite()


class Evolution:
    """
    One run from initial data to a stop criterion.

    Stop criteria:
        Blowup: |w_rr(t, 0)| exceeds blowup_amplification times the reference curvature plus
            one, or the scale needs a level beyond max_depth while still shrinking.
        Dispersion: sup_{r <= 1} |w - 1| and the energy inside r = 1 stay below their bounds for
            dispersion_window time units, counting only from dispersion_start.
        Undetermined: t_max, the coarse step budget, or a numerical breakdown.

    The reference curvature is the larger of |w_rr(0, 0)| and sup |w''| of the initial data, since
    the gaussian family has a vanishingly small curvature at the center.
    """

    def __init__(
        self, config: EvolutionConfig, initial: Optional[FieldState] = None, profile: Optional[Profile] = None
    ) -> None:
        self.config = config
        self.d = config.d
        self.initial = initial
        self.profile = profile if profile is not None else closed_form_profile(config.d)
        self.curvature_at_origin = self.profile.curvature_at_origin()
        self.stepper = WaveStepper(config.d, config.mesh.dissipation, config.mesh.buffer_width)

        finest_dr = config.dr0 / 2**config.mesh.max_depth
        self.series = DiagnosticsSeries(np.geomspace(finest_dr, config.r_max, ENERGY_TABLE_POINTS))
        self.snapshots: List[Snapshot] = []

        self._lam: Optional[float] = None
        self._lam_min: Optional[float] = None
        self._peak = 0.0
        self._threshold = math.inf
        self._energy0 = 0.0
        self._last_row: Optional[float] = None
        self._dispersed_since: Optional[float] = None
        self._last_snapshot_t: Optional[float] = None
        self._decade_key: Optional[int] = None
        self._tau_key: Optional[int] = None

    # Setup

    def _build_hierarchy(self) -> AmrHierarchy:
        config = self.config
        state = self.initial if self.initial is not None else make_initial_data(config)
        if state.r.shape[0] != config.base_cells + 1 or not np.allclose(
            state.r, np.arange(config.base_cells + 1) * config.dr0, rtol=1e-12, atol=0.0
        ):
            raise DomainError("Initial data must be sampled on the base grid")
        hierarchy = AmrHierarchy.from_samples(config.r_max, config.dr0, config.mesh, 1.0 - state.w, -state.wt)
        hierarchy.regrid(0)
        if self.initial is None:
            for level in hierarchy.levels[1:]:
                level.u = gaussian_profile(config, level.r)
                level.ut = np.zeros(level.n)
                level.mark_previous()
        return hierarchy

    def _reference_curvature(self, hierarchy: AmrHierarchy) -> float:
        base = hierarchy.levels[0]
        second = np.gradient(np.gradient(base.w, base.dr, edge_order=2), base.dr, edge_order=2)
        return max(abs(level_center_curvature(hierarchy.center_level())), float(np.max(np.abs(second))))

    # Monitoring

    def _monitor(self, hierarchy: AmrHierarchy, k: int) -> Optional[str]:
        if k != len(hierarchy.levels) - 1:
            return None
        w_rr0 = level_center_curvature(hierarchy.center_level())
        t = hierarchy.finest.time
        self._peak = max(self._peak, abs(w_rr0))
        lam = scale_from_curvature(w_rr0, self.curvature_at_origin)
        self._lam = lam

        if abs(w_rr0) > self._threshold:
            self._record(hierarchy, w_rr0, lam)
            return REASON_CURVATURE
        if lam is not None:
            shrinking = self._lam_min is not None and lam < self._lam_min
            self._lam_min = lam if self._lam_min is None else min(self._lam_min, lam)
            if shrinking and hierarchy.resolution_exhausted(lam):
                self._record(hierarchy, w_rr0, lam)
                return REASON_EXHAUSTED

        spacing = self.config.row_spacing * min(lam if lam is not None else 1.0, 1.0)
        if self._last_row is None or t - self._last_row >= spacing:
            return self._record(hierarchy, w_rr0, lam)
        return None

    def _record(self, hierarchy: AmrHierarchy, w_rr0: float, lam: Optional[float]) -> Optional[str]:
        config = self.config
        t = hierarchy.finest.time
        if self._last_row is not None and t <= self._last_row:
            return None
        state = hierarchy.composite(t)
        total, kinetic = cumulative_energy(state, self.d)
        row = DiagnosticsRow(
            t=t,
            w_rr0=w_rr0,
            lam=lam,
            E_total=float(total[-1]),
            flux_out=hierarchy.outflow_at(t),
            depth=hierarchy.depth,
        )
        radii = self.series.radii
        self.series.append(row, np.interp(radii, state.r, total), np.interp(radii, state.r, kinetic))
        self._last_row = t
        self._maybe_snapshot(hierarchy, state, lam)

        if t < config.window_start:
            return None
        inner = state.r <= config.dispersion_radius
        amplitude = float(np.max(np.abs(state.w[inner] - 1.0)))
        enclosed = float(np.interp(config.dispersion_radius, state.r, total))
        if amplitude < config.dispersion_amplitude and enclosed < config.dispersion_energy_fraction * self._energy0:
            if self._dispersed_since is None:
                self._dispersed_since = t
            elif t - self._dispersed_since >= config.dispersion_window:
                return REASON_DISPERSED
        else:
            self._dispersed_since = None
        return None

    def _maybe_snapshot(self, hierarchy: AmrHierarchy, state: FieldState, lam: Optional[float]) -> None:
        schedule = self.config.snapshots
        t = state.t
        due = False
        if schedule.every_dt is not None and (
            self._last_snapshot_t is None or t - self._last_snapshot_t >= schedule.every_dt
        ):
            due = True
        if lam is not None and schedule.per_decade > 0:
            key = math.floor(schedule.per_decade * math.log10(1.0 / lam))
            if self._decade_key is None or key > self._decade_key:
                self._decade_key = key
                due = True
        if lam is not None and schedule.tau_step is not None:
            key = math.floor(-math.log(lam) / schedule.tau_step)
            if self._tau_key is None or key > self._tau_key:
                self._tau_key = key
                due = True
        if due:
            self._last_snapshot_t = t
            self.snapshots.append(Snapshot(len(self.snapshots), t, lam, state, hierarchy.snapshot()))

    # Driver

    def _horizon(self) -> Tuple[float, Optional[float]]:
        rows = self.series.rows
        try:
            return estimate_blowup_time(rows, self.d)
        except InsufficientDataError as exc:
            logger.warning(f"Falling back to linear extrapolation of lambda: {exc}")
        t, lam = self.series.scales()
        final = rows[-1].t if rows else self.config.t_max
        if lam.shape[0] >= 2 and lam[-1] < lam[-2]:
            return float(t[-1] + lam[-1] * (t[-1] - t[-2]) / (lam[-2] - lam[-1])), None
        return final, None

    def run(self) -> EvolutionResult:
        config = self.config
        hierarchy = self._build_hierarchy()
        start = hierarchy.composite(0.0)
        total, _ = cumulative_energy(start, self.d)
        self._energy0 = float(total[-1])
        self._threshold = config.blowup_amplification * self._reference_curvature(hierarchy) + 1.0
        logger.info(
            f"Evolving d={config.d} A={config.A!r} sigma={config.sigma!r} R={config.R!r} "
            f"(r_max={config.r_max}, dr0={config.dr0}, max_depth={config.mesh.max_depth})"
        )
        self._record(hierarchy, level_center_curvature(hierarchy.center_level()), None)

        reason: Optional[str] = None
        coarse_steps = 0
        while reason is None:
            remaining = config.t_max - hierarchy.time
            if remaining <= 1e-12 * max(1.0, config.t_max):
                reason = REASON_MAX_TIME
                break
            if coarse_steps >= config.max_coarse_steps:
                reason = REASON_STEP_BUDGET
                break
            try:
                result = hierarchy.subcycle(
                    min(config.coarse_dt, remaining), self.stepper, monitor=self._monitor, scale=lambda _: self._lam
                )
            except NumericalBreakdownError as exc:
                logger.error(str(exc))
                reason = REASON_BREAKDOWN
                break
            coarse_steps += 1
            reason = result.reason

        final_time = hierarchy.finest.time
        if reason != REASON_BREAKDOWN:
            self._record(hierarchy, level_center_curvature(hierarchy.center_level()), self._lam)
        final_state = hierarchy.composite(final_time)

        if reason in BLOWUP_REASONS:
            horizon, p = self._horizon()
            self.series.finalize(horizon)
            outcome = Outcome(kind=OutcomeKind.BLOWUP, T_estimate=horizon, p=p, final_time=final_time, reason=reason)
        elif reason == REASON_DISPERSED:
            outcome = Outcome(kind=OutcomeKind.DISPERSION, final_time=final_time, reason=reason)
        else:
            logger.warning(f"Run undetermined at t={final_time:.6g}: {reason}")
            outcome = Outcome(kind=OutcomeKind.UNDETERMINED, final_time=final_time, reason=str(reason))
        logger.info(
            f"Outcome {outcome.kind.value} ({outcome.reason}) at t={final_time:.9g}, depth {hierarchy.depth}, "
            f"{len(self.series)} rows, {len(self.snapshots)} snapshots"
        )
        return EvolutionResult(config, outcome, self.series, self.snapshots, final_state, self._peak, hierarchy)


def run_evolution(config: EvolutionConfig) -> EvolutionResult:
    return Evolution(config).run()


def classify_outcome(config: EvolutionConfig) -> Tuple[Outcome, DiagnosticsSeries]:
    """
    Runs the gaussian initial data of the config until a stop criterion fires.

    Returns:
        The outcome and the diagnostics series of the run.
    """
    result = run_evolution(config)
    return result.outcome, result.series
