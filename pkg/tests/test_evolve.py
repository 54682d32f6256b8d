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
from typing import Any

import numpy as np
import pytest

from coreason_blowup.equations import FloatArray, Profile, ProfileKind, profile_w0
from coreason_blowup.evolve import (
    BLOWUP_REASONS,
    REASON_MAX_TIME,
    REASON_STEP_BUDGET,
    DiagnosticsSeries,
    Evolution,
    classify_outcome,
    edge_derivative,
    extract_scale,
    make_initial_data,
    profile_distance,
    run_evolution,
    scale_from_curvature,
    step,
)
from coreason_blowup.exceptions import DomainError, ResolutionError
from coreason_blowup.mesh import AmrHierarchy
from coreason_blowup.models import DiagnosticsRow, EvolutionConfig, MeshSettings, OutcomeKind, SnapshotSchedule
from coreason_blowup.state import FieldState


def unigrid(**overrides: Any) -> EvolutionConfig:
    values: dict[str, Any] = {"mesh": MeshSettings(max_depth=0, points_per_scale=4)}
    values.update(overrides)
    return EvolutionConfig(**values)


def test_initial_data() -> None:
    config = EvolutionConfig(A=0.2, r_max=4.0, dr0=0.02)
    state = make_initial_data(config)
    assert state.r.shape == (201,)
    assert state.w[0] == 1.0
    assert np.all(state.wt == 0.0)
    assert state.w[100] == pytest.approx(1.0 - 0.2 * 4.0)


def test_scale_from_curvature() -> None:
    assert scale_from_curvature(0.0, -3.2) is None
    assert scale_from_curvature(1.0, -3.2) is None
    assert scale_from_curvature(-3.2 / 0.25, -3.2) == pytest.approx(0.5)


def test_extract_scale_of_rescaled_profile() -> None:
    r = np.arange(401) * 0.005
    lam = 0.5
    state = FieldState(0.0, r, profile_w0(r / lam), np.zeros_like(r))
    assert extract_scale(state, 5) == pytest.approx(lam, rel=1e-5)
    assert extract_scale(FieldState.vacuum(r), 5) is None


def test_profile_distance() -> None:
    r = np.arange(401) * 0.005
    lam = 0.5
    state = FieldState(0.0, r, profile_w0(r / lam) + 0.01, np.zeros_like(r))
    profile = Profile(ProfileKind.W0_D5)
    assert profile_distance(state, profile, lam) == pytest.approx(0.01, abs=1e-6)
    with pytest.raises(ResolutionError):
        profile_distance(state, profile, 0.05)
    with pytest.raises(DomainError):
        profile_distance(state, profile, 3.0, min_points=8)
    with pytest.raises(DomainError):
        profile_distance(state, profile, -1.0)


def test_step_advances_one_coarse_step() -> None:
    config = unigrid(A=0.05, r_max=4.0, dr0=0.02)
    state = make_initial_data(config)
    hierarchy = AmrHierarchy.from_samples(config.r_max, config.dr0, config.mesh, 1.0 - state.w, -state.wt)
    after = step(hierarchy, config)
    assert after.t == pytest.approx(config.coarse_dt)
    assert not np.array_equal(after.wt, state.wt)


def test_undetermined_at_max_time() -> None:
    config = EvolutionConfig(A=0.05, t_max=1.0, snapshots=SnapshotSchedule(every_dt=0.25))
    result = run_evolution(config)
    assert result.outcome.kind == OutcomeKind.UNDETERMINED
    assert result.outcome.reason == REASON_MAX_TIME
    assert result.outcome.final_time == pytest.approx(1.0)
    times = [row.t for row in result.series.rows]
    assert times[0] == 0.0
    assert all(b > a for a, b in zip(times, times[1:], strict=False))
    assert len(result.snapshots) >= 4
    assert [snapshot.index for snapshot in result.snapshots] == list(range(len(result.snapshots)))


def test_step_budget() -> None:
    outcome, series = classify_outcome(EvolutionConfig(A=0.05, max_coarse_steps=3))
    assert outcome.kind == OutcomeKind.UNDETERMINED
    assert outcome.reason == REASON_STEP_BUDGET
    assert outcome.final_time == pytest.approx(3 * 0.4 * 0.01)
    assert len(series) >= 1


def test_energy_ledger() -> None:
    """Energy on the grid plus the radiated energy stays equal to the initial energy."""
    config = unigrid(A=0.05, r_max=5.0, t_max=7.0)
    result = run_evolution(config)
    rows = result.series.rows
    initial = rows[0].E_total
    assert rows[-1].flux_out > 0.5 * initial
    for row in rows:
        assert row.E_total + row.flux_out == pytest.approx(initial, rel=1e-3)


def test_energy_ledger_across_regrids() -> None:
    """
    Same ledger while a refined level follows the pulse. The level is rebuilt every few steps,
    so the snapshots see it at several places.
    """
    config = EvolutionConfig(
        A=0.05,
        r_max=5.0,
        t_max=7.0,
        mesh=MeshSettings(max_depth=1, refine_threshold=1e-3),
        snapshots=SnapshotSchedule(every_dt=0.5),
    )
    result = run_evolution(config)
    rows = result.series.rows
    initial = rows[0].E_total
    assert rows[0].depth == 1
    assert rows[-1].flux_out > 0.5 * initial
    for row in rows:
        assert row.E_total + row.flux_out == pytest.approx(initial, rel=1e-3)

    extents = {
        (level.r[0], level.r[-1]) for snapshot in result.snapshots for level in snapshot.levels if level.depth == 1
    }
    assert len(extents) >= 3


def test_refined_run_tracks_fine_unigrid() -> None:
    """Where the pulse is refined the result follows a unigrid run at the fine spacing."""
    refined = run_evolution(
        EvolutionConfig(A=0.05, r_max=5.0, t_max=2.0, mesh=MeshSettings(max_depth=1, refine_threshold=1e-3))
    )
    coarse = run_evolution(unigrid(A=0.05, r_max=5.0, t_max=2.0))
    fine = run_evolution(unigrid(A=0.05, r_max=5.0, dr0=0.005, t_max=2.0))
    assert refined.hierarchy.depth == 1
    assert all(row.depth == 1 for row in refined.series.rows)

    reference = fine.final_state.w[::2]
    refined_error = np.max(np.abs(refined.hierarchy.levels[0].w - reference))
    coarse_error = np.max(np.abs(coarse.final_state.w - reference))
    assert refined_error < 0.2 * coarse_error
    assert refined_error < 5e-5


def test_self_convergence_is_second_order() -> None:
    finals = []
    for dr0 in (0.02, 0.01, 0.005):
        config = unigrid(A=0.05, r_max=6.0, dr0=dr0, t_max=4.0)
        finals.append(run_evolution(config).final_state.w)
    coarse, medium, fine = finals[0], finals[1][::2], finals[2][::4]
    order = math.log2(np.max(np.abs(coarse - medium)) / np.max(np.abs(medium - fine)))
    assert order >= 1.9


def outgoing_packet(
    r: FloatArray, amplitude: float = 1e-3, center: float = 6.0, sharpness: float = 10.0
) -> FieldState:
    """
    The linearized d = 5 outgoing wave u = psi / r with psi = F'' + 3 F' / r + 3 F / r^2, where F is
    a gaussian in t - r centred on r = center at t = 0.
    """
    rr = r[1:]
    x = center - rr
    f0 = amplitude * np.exp(-sharpness * x**2)
    f1 = -2.0 * sharpness * x * f0
    f2 = (4.0 * sharpness**2 * x**2 - 2.0 * sharpness) * f0
    f3 = (-8.0 * sharpness**3 * x**3 + 12.0 * sharpness**2 * x) * f0
    u = np.concatenate([[0.0], (f2 + 3.0 * f1 / rr + 3.0 * f0 / rr**2) / rr])
    ut = np.concatenate([[0.0], (f3 + 3.0 * f2 / rr + 3.0 * f1 / rr**2) / rr])
    return FieldState(0.0, r, 1.0 - u, -ut)


def test_outgoing_packet_leaves_the_grid() -> None:
    """
    A packet crossing r_max comes back with less than 1e-3 of its amplitude, measured against the
    same packet on a grid large enough that it never reaches the edge.
    """
    bounded = unigrid(r_max=8.0, t_max=5.0, dispersion_start=50.0)
    unbounded = unigrid(r_max=20.0, t_max=5.0, dispersion_start=50.0)
    initial = outgoing_packet(np.arange(bounded.base_cells + 1) * bounded.dr0)
    amplitude = np.max(np.abs(initial.u))

    inside = Evolution(bounded, initial=initial).run()
    far = outgoing_packet(np.arange(unbounded.base_cells + 1) * unbounded.dr0)
    reference = Evolution(unbounded, initial=far).run()
    assert inside.outcome.final_time == pytest.approx(5.0)
    assert reference.outcome.final_time == pytest.approx(5.0)

    n = bounded.base_cells + 1
    np.testing.assert_allclose(reference.final_state.r[:n], inside.final_state.r)
    reflected = np.max(np.abs(inside.final_state.w - reference.final_state.w[:n]))
    assert reflected < 1e-3 * amplitude
    assert np.max(np.abs(inside.final_state.u)) < 1e-2 * amplitude
    assert inside.series.rows[-1].flux_out > 0.99 * inside.series.rows[0].E_total


def test_edge_derivative_is_exact_on_quartics() -> None:
    r = np.arange(11) * 0.1
    assert edge_derivative(r**4 - r, 0.1) == pytest.approx(3.0, rel=1e-10)


def test_rescaled_data_give_rescaled_evolution() -> None:
    """Evolving w0(r / 2) for time 2t reproduces the evolution of w0 for time t on the doubled grid."""
    base = run_evolution(unigrid(A=0.05, sigma=10.0, R=2.0, r_max=8.0, dr0=0.02, t_max=1.0))
    scaled = run_evolution(unigrid(A=0.0125, sigma=2.5, R=4.0, r_max=16.0, dr0=0.04, t_max=2.0))
    assert scaled.outcome.final_time == pytest.approx(2.0 * base.outcome.final_time)
    np.testing.assert_allclose(scaled.final_state.r, 2.0 * base.final_state.r, rtol=1e-12)
    np.testing.assert_allclose(scaled.final_state.w, base.final_state.w, rtol=1e-10, atol=1e-12)


def test_small_data_disperse() -> None:
    config = EvolutionConfig(A=0.01, t_max=14.0, dispersion_energy_fraction=1e-4)
    result = run_evolution(config)
    assert result.outcome.kind == OutcomeKind.DISPERSION
    assert result.outcome.final_time >= config.window_start + config.dispersion_window
    assert result.outcome.T_estimate is None


@pytest.mark.parametrize("d, amplitude", [(5, 0.2), (4, 0.5)])
def test_large_data_blow_up(d: int, amplitude: float) -> None:
    config = EvolutionConfig(
        d=d,
        A=amplitude,
        r_max=6.0,
        t_max=6.0,
        blowup_amplification=1e2,
        mesh=MeshSettings(max_depth=8, points_per_scale=16),
    )
    result = run_evolution(config)
    outcome = result.outcome
    assert outcome.kind == OutcomeKind.BLOWUP
    assert outcome.reason in BLOWUP_REASONS
    assert outcome.T_estimate is not None and outcome.T_estimate > 0.0
    assert outcome.final_time < config.t_max
    assert result.rho_max() > 0.0
    finalized = [row for row in result.series.rows if row.t < outcome.T_estimate]
    assert all(row.tau is not None and row.E_cone is not None for row in finalized)
    lams = [row.lam for row in result.series.rows if row.lam is not None]
    assert lams[-1] < lams[0]


def test_diagnostics_series_rows_increase() -> None:
    radii = np.geomspace(1e-3, 1.0, 10)
    series = DiagnosticsSeries(radii)
    table = np.linspace(0.0, 1.0, 10)
    series.append(DiagnosticsRow(t=0.0, w_rr0=0.0, E_total=1.0, flux_out=0.0, depth=0), table, 0.5 * table)
    with pytest.raises(DomainError):
        series.append(DiagnosticsRow(t=0.0, w_rr0=0.0, E_total=1.0, flux_out=0.0, depth=0), table, table)
    assert series.enclosed(0, 1e-4) == (0.0, 0.0)
    assert series.enclosed(0, 2.0) == (1.0, 0.5)
    series.finalize(0.5)
    row = series.rows[0]
    assert row.tau == pytest.approx(-math.log(0.5))
    assert row.E_cone is not None and 0.0 < row.E_cone < 1.0
    assert row.E_cone_kinetic == pytest.approx(0.5 * row.E_cone)


def test_evolution_rejects_misplaced_initial_data() -> None:
    config = EvolutionConfig(r_max=4.0)
    r = np.linspace(0.0, 4.0, 11)
    with pytest.raises(DomainError):
        Evolution(config, initial=FieldState.vacuum(r)).run()
