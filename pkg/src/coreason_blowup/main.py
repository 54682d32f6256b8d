# Copyright (c) 2025 CoReason, Inc.
#
# This software is proprietary and dual-licensed.
# Licensed under the Prosperity Public License 3.0 (the "License").
# A copy of the license is available at https://prosperitylicense.com/versions/3.0.0
# For details, see the LICENSE file.
# Commercial use beyond a 30-day trial requires a separate license.
#
# Source Code: https://github.com/CoReason-AI/coreason_blowup

import argparse
import asyncio
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from coreason_blowup.config import parse_config, write_manifest
from coreason_blowup.equations import closed_form_profile
from coreason_blowup.evolve import REASON_BREAKDOWN, EvolutionResult, profile_distance, run_evolution
from coreason_blowup.exceptions import BlowupLabError, ConfigError, DomainError, InsufficientDataError, ResolutionError
from coreason_blowup.experiments import (
    EvolutionClassifier,
    anomalous_rate_fit,
    bisect_critical,
    cone_energy_limit,
    departure_scaling,
    subcritical_sweep,
)
from coreason_blowup.export import (
    check_relative,
    emit_rescaled_snapshots,
    write_bracket,
    write_level_snapshots,
    write_profile,
    write_series,
    write_summary,
    write_sweep,
)
from coreason_blowup.fitting import fit_scale_law
from coreason_blowup.models import Command, OutcomeKind, RunManifest, RunSummary, SelfSimilarProfile, SweepResult
from coreason_blowup.selfsimilar import attractor_profile, find_profiles, to_profile
from coreason_blowup.utils.logger import logger
from coreason_blowup.utils.runners import ThreadTrialRunner

# Trailing snapshots compared with the closed-form profile in the evolve summary.
FINAL_DISTANCE_SNAPSHOTS = 3


class RunContext:
    """Output directory of a run and the artifacts written into it."""

    def __init__(self, manifest: RunManifest) -> None:
        self.manifest = manifest
        self.root = manifest.output_dir
        self.files: List[Path] = []

    def add(self, paths: Sequence[Path] | Path) -> None:
        self.files.extend([paths] if isinstance(paths, Path) else paths)

    def relative(self) -> List[str]:
        return [check_relative(path, self.root) for path in self.files]


def final_distances(result: EvolutionResult) -> List[float]:
    """Distances of the last resolved snapshots to the closed-form profile at the measured scale."""
    profile = closed_form_profile(result.config.d)
    distances: List[float] = []
    for snapshot in result.snapshots:
        if snapshot.lam is None:
            continue
        try:
            distances.append(profile_distance(snapshot.state, profile, snapshot.lam))
        except (ResolutionError, DomainError) as exc:
            logger.debug(f"No profile distance for snapshot {snapshot.index}: {exc}")
    return distances[-FINAL_DISTANCE_SNAPSHOTS:]


def write_evolution(context: RunContext, result: EvolutionResult) -> None:
    context.add(write_series(context.root / "series.csv", result.series.rows))
    context.add(write_level_snapshots(result.snapshots, context.root / "snapshots"))
    T = result.outcome.T_estimate
    if result.outcome.kind == OutcomeKind.BLOWUP and T is not None:
        context.add(emit_rescaled_snapshots(result.snapshots, T, context.root / "rescaled"))


def write_profiles(context: RunContext, profiles: Sequence[SelfSimilarProfile]) -> None:
    for index, profile in enumerate(profiles):
        context.add(write_profile(context.root / "profiles" / f"profile_{index:02d}.csv", profile))


async def run_command(context: RunContext) -> RunSummary:
    """Executes the manifest command and returns its summary."""
    manifest = context.manifest
    config = manifest.evolution
    experiment = manifest.experiment
    command = manifest.command
    summary = RunSummary(command=command)

    if command in (Command.EVOLVE, Command.FIT_LAMBDA, Command.CONE_ENERGY):
        result = run_evolution(config)
        write_evolution(context, result)
        summary.outcome = result.outcome
        if command == Command.EVOLVE:
            if result.outcome.kind == OutcomeKind.BLOWUP:
                summary.distances = final_distances(result)
        elif command == Command.FIT_LAMBDA:
            if result.outcome.kind != OutcomeKind.BLOWUP:
                raise InsufficientDataError(f"fit-lambda needs a Blowup outcome, got {result.outcome.kind.value}")
            summary.fit = anomalous_rate_fit(result.series.rows)
        else:
            t, lam = result.series.scales()
            try:
                summary.fit = fit_scale_law(t, lam)
            except InsufficientDataError as exc:
                logger.warning(f"No scale-law fit for the cone energy: {exc}")
            summary.cone = cone_energy_limit(result.series.rows, summary.fit)

    elif command == Command.BISECT:
        runner = ThreadTrialRunner(min(2, experiment.max_workers))
        bracket = await bisect_critical(
            EvolutionClassifier(config), experiment.a_lo, experiment.a_hi, experiment.tolerance, runner
        )
        context.add(write_bracket(context.root / "bracket.csv", bracket))
        summary.bracket = bracket

    elif command == Command.SWEEP_SUBCRITICAL:
        if experiment.a_star is None:
            raise ConfigError("sweep-subcritical needs a_star")
        sweep = await subcritical_sweep(
            config, experiment.a_star, experiment.epsilons, ThreadTrialRunner(experiment.max_workers)
        )
        context.add(write_sweep(context.root / "sweep.csv", sweep))
        summary.sweep = sweep
        summary.fit = sweep.fit

    elif command == Command.DEPARTURE_SCALING:
        if experiment.a_star is None:
            raise ConfigError("departure-scaling needs a_star")
        attractor = attractor_profile(config.d, manifest.shooting, experiment.attractor_b)
        write_profiles(context, [attractor])
        summary.profiles = [attractor]
        departure = await departure_scaling(
            config,
            experiment.a_star,
            experiment.epsilons,
            to_profile(attractor),
            factor=experiment.departure_factor,
            runner=ThreadTrialRunner(experiment.max_workers),
        )
        context.add(write_sweep(context.root / "sweep.csv", SweepResult(members=departure.members)))
        summary.departure = departure
        summary.fit = departure.fits.get(f"+{experiment.departure_factor:g}")

    elif command == Command.SHOOT:
        profiles = find_profiles(config.d, manifest.shooting)
        write_profiles(context, profiles)
        summary.profiles = profiles

    return summary


def _fail(context: RunContext, exc: BaseException) -> int:
    summary = RunSummary(command=context.manifest.command, status="error", reason=f"{type(exc).__name__}: {exc}")
    try:
        write_summary(context.root / "summary.json", summary.model_copy(update={"files": context.relative()}))
    except OSError as write_error:
        logger.error(f"Could not write the summary: {write_error}")
    return 1


async def run(manifest: RunManifest) -> int:
    """
    Runs a resolved manifest, writing its artifacts and summary.json into the output directory.

    Returns:
        0 on completion (whatever the outcome), 1 on errors or numerical breakdown; the summary then
        carries the reason.
    """
    context = RunContext(manifest)
    try:
        context.add(write_manifest(manifest, context.root))
        summary = await run_command(context)
    except (BlowupLabError, OSError) as exc:
        logger.error(f"{manifest.command.value} failed: {exc}")
        return _fail(context, exc)
    except Exception as exc:
        logger.exception(f"{manifest.command.value} failed unexpectedly")
        return _fail(context, exc)

    summary.files = context.relative()
    if summary.outcome is not None and summary.outcome.reason == REASON_BREAKDOWN:
        summary.status = "error"
        summary.reason = f"NumericalBreakdownError: evolution stopped at t={summary.outcome.final_time!r}"
        write_summary(context.root / "summary.json", summary)
        logger.error(f"{manifest.command.value} failed: {summary.reason}")
        return 1
    write_summary(context.root / "summary.json", summary)
    outcome = f" ({summary.outcome.kind.value})" if summary.outcome else ""
    print(f"{manifest.command.value}: {summary.status}{outcome}")
    return 0


async def run_async_main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(prog="coreason-blowup", description="Yang-Mills blowup laboratory")
    subparsers = parser.add_subparsers(dest="command", help="Command to run")
    for command in Command:
        sub = subparsers.add_parser(command.value, help=f"Run the {command.value} experiment")
        sub.add_argument("--config", type=Path, help="Manifest file (key = value)")
        sub.add_argument("--set", dest="overrides", action="append", default=[], help="Override, key=value")
        sub.add_argument("--output", type=Path, help="Output directory")

    args = parser.parse_args(argv)
    if not args.command:
        parser.print_help()
        return 2

    try:
        manifest = parse_config(args.config, args.command, args.overrides, args.output)
    except (ConfigError, OSError) as exc:
        logger.error(f"Invalid manifest: {exc}")
        return 1
    return await run(manifest)


def main() -> None:
    code = asyncio.run(run_async_main())
    if code:
        sys.exit(code)


if __name__ == "__main__":  # pragma: no cover
    main()
