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
Berger-Oliger adaptive mesh refinement for radial grids.

Every level is vertex centred on a global integer lattice: the point with index j on a level of
depth k sits at r = j * dr0 / 2^k, so every other point of a child coincides with a parent point.
Each depth holds a single patch, the hull of its flagged clusters widened by the buffer.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Tuple

import numpy as np
import numpy.typing as npt
from scipy.interpolate import make_interp_spline

from coreason_blowup.equations import FloatArray
from coreason_blowup.exceptions import CFLViolationError, ContainmentError, DomainError, SynchronizationError
from coreason_blowup.interfaces import EdgeDriver, EdgeValues, LevelStepper
from coreason_blowup.models import MeshSettings
from coreason_blowup.state import FieldState
from coreason_blowup.utils.logger import logger

# Points at an internal edge that are driven by parent data instead of being evolved.
EDGE_POINTS = 2
# Smallest child patch, in parent cells.
MIN_CHILD_CELLS = 4
# Largest coarse Courant number accepted by subcycle.
MAX_COURANT = 1.0

Monitor = Callable[["AmrHierarchy", int], Optional[str]]
ScaleEstimator = Callable[["AmrHierarchy"], Optional[float]]


@dataclass
class Level:
    """
    One refined patch: samples of u = 1 - w and u_t on consecutive lattice points.
    The two previous steps are kept so that children can interpolate boundary data in time.
    """

    depth: int
    dr: float
    i_lo: int
    u: FloatArray
    ut: FloatArray
    time: float = 0.0
    steps: int = 0
    u_prev: FloatArray = field(init=False, repr=False)
    ut_prev: FloatArray = field(init=False, repr=False)
    time_prev: float = field(init=False)
    older: Optional[Tuple[float, FloatArray, FloatArray]] = field(init=False, default=None, repr=False)

    def __post_init__(self) -> None:
        if self.u.shape != self.ut.shape or self.u.ndim != 1:
            raise DomainError("Level arrays must be one-dimensional and of equal length")
        self.time_prev = self.time
        self.mark_previous()

    def mark_previous(self) -> None:
        """Shifts the step history; a history older than the current time is kept one step back."""
        self.older = (self.time_prev, self.u_prev, self.ut_prev) if self.time_prev < self.time else None
        self.u_prev = self.u.copy()
        self.ut_prev = self.ut.copy()
        self.time_prev = self.time

    @property
    def n(self) -> int:
        return int(self.u.shape[0])

    @property
    def i_hi(self) -> int:
        return self.i_lo + self.n - 1

    @property
    def r(self) -> FloatArray:
        return (self.i_lo + np.arange(self.n)) * self.dr

    @property
    def extent(self) -> Tuple[float, float]:
        return self.i_lo * self.dr, self.i_hi * self.dr

    @property
    def touches_center(self) -> bool:
        return self.i_lo == 0

    @property
    def w(self) -> FloatArray:
        return 1.0 - self.u

    @property
    def wt(self) -> FloatArray:
        return -self.ut

    def interpolated(self, time: float) -> Tuple[FloatArray, FloatArray]:
        """
        Quadratic interpolation in time through the last three steps, or linear between the previous
        and the current step while only two are known.
        """
        span = self.time - self.time_prev
        if span <= 0.0:
            return self.u, self.ut
        if self.older is None:
            alpha = min(max((time - self.time_prev) / span, 0.0), 1.0)
            return (
                (1.0 - alpha) * self.u_prev + alpha * self.u,
                (1.0 - alpha) * self.ut_prev + alpha * self.ut,
            )
        t0, u0, ut0 = self.older
        t1, t2 = self.time_prev, self.time
        time = min(max(time, t0), t2)
        a0 = (time - t1) * (time - t2) / ((t0 - t1) * (t0 - t2))
        a1 = (time - t0) * (time - t2) / ((t1 - t0) * (t1 - t2))
        a2 = (time - t0) * (time - t1) / ((t2 - t0) * (t2 - t1))
        return a0 * u0 + a1 * self.u_prev + a2 * self.u, a0 * ut0 + a1 * self.ut_prev + a2 * self.ut


@dataclass(frozen=True)
class LevelSnapshot:
    depth: int
    dr: float
    time: float
    r: FloatArray
    w: FloatArray
    wt: FloatArray


@dataclass(frozen=True)
class SubcycleResult:
    time: float
    depth: int
    outflow: float
    halted: bool = False
    reason: Optional[str] = None


def _parity_extended(level: Level, u: FloatArray, ut: FloatArray) -> Tuple[FloatArray, FloatArray]:
    r = level.r
    values = np.column_stack([u, ut])
    if level.touches_center:
        r = np.concatenate([-r[:0:-1], r])
        values = np.concatenate([values[:0:-1], values])
    return r, values


def prolong(parent: Level, i_lo: int, n: int) -> Tuple[FloatArray, FloatArray]:
    """
    Interpolates parent data onto child lattice points [i_lo, i_lo + n) of depth parent.depth + 1.

    Uses a not-a-knot cubic spline (exact on cubics); across r = 0 the data are extended with
    even parity. Child points that coincide with parent points are copied exactly.

    Raises:
        ContainmentError: If the child points are not inside the parent extent.
    """
    i_hi = i_lo + n - 1
    if n < 1 or i_lo < 2 * parent.i_lo or i_hi > 2 * parent.i_hi:
        raise ContainmentError(
            f"Child lattice [{i_lo}, {i_hi}] at depth {parent.depth + 1} not inside parent "
            f"[{2 * parent.i_lo}, {2 * parent.i_hi}]"
        )
    r_src, values = _parity_extended(parent, parent.u, parent.ut)
    spline = make_interp_spline(r_src, values, k=3)
    index = i_lo + np.arange(n)
    result = np.asarray(spline(index * (parent.dr / 2.0)), dtype=np.float64)

    even = index % 2 == 0
    parent_local = index[even] // 2 - parent.i_lo
    result[even, 0] = parent.u[parent_local]
    result[even, 1] = parent.ut[parent_local]
    return result[:, 0].copy(), result[:, 1].copy()


def _driven_points(level: Level) -> npt.NDArray[np.int64]:
    """Local indices of the points set from the parent (none for the base level)."""
    if level.depth == 0:
        return np.array([], dtype=np.int64)
    upper = np.arange(level.n - EDGE_POINTS, level.n)
    if level.touches_center:
        return upper
    return np.concatenate([np.arange(EDGE_POINTS), upper])


def restrict(child: Level, parent: Level) -> None:
    """
    Injects child values onto the coincident parent points of the overlap.

    Raises:
        SynchronizationError: If the two levels are not at the same time.
    """
    if child.depth != parent.depth + 1:
        raise DomainError("restrict expects a child one level finer than the parent")
    tolerance = 1e-12 * max(1.0, abs(parent.time))
    if abs(child.time - parent.time) > tolerance:
        raise SynchronizationError(
            f"Cannot restrict depth {child.depth} at t={child.time!r} onto depth {parent.depth} at t={parent.time!r}"
        )
    index = child.i_lo + np.arange(child.n)
    keep = index % 2 == 0
    keep[_driven_points(child)] = False
    target = index[keep] // 2
    inside = (target >= parent.i_lo) & (target <= parent.i_hi)
    if not np.any(inside):
        return
    parent.u[target[inside] - parent.i_lo] = child.u[keep][inside]
    parent.ut[target[inside] - parent.i_lo] = child.ut[keep][inside]


class AmrHierarchy:
    """
    Nested radial levels advanced with time subcycling.

    Level 0 spans [0, r_max]; level k has spacing dr0 / 2^k and lies inside level k - 1 with at
    least buffer_width parent cells of margin, except at r = 0.
    """

    def __init__(self, r_max: float, dr0: float, settings: MeshSettings, base: Level) -> None:
        if base.depth != 0 or base.i_lo != 0 or not np.isclose(base.i_hi * dr0, r_max):
            raise DomainError("The base level must span [0, r_max]")
        self.r_max = r_max
        self.dr0 = dr0
        self.settings = settings
        self.levels: List[Level] = [base]
        self.outflow = 0.0
        self._outflow_start = 0.0
        self._halt_reason: Optional[str] = None
        self._stepper: Optional[LevelStepper] = None
        self._monitor: Optional[Monitor] = None
        self._scale: Optional[ScaleEstimator] = None

    @classmethod
    def from_samples(
        cls, r_max: float, dr0: float, settings: MeshSettings, u: FloatArray, ut: FloatArray, time: float = 0.0
    ) -> "AmrHierarchy":
        base = Level(depth=0, dr=dr0, i_lo=0, u=u.astype(np.float64), ut=ut.astype(np.float64), time=time)
        return cls(r_max, dr0, settings, base)

    @property
    def depth(self) -> int:
        return self.levels[-1].depth

    @property
    def finest(self) -> Level:
        return self.levels[-1]

    @property
    def time(self) -> float:
        return self.levels[0].time

    def center_level(self) -> Level:
        """The finest level containing r = 0."""
        return next(level for level in reversed(self.levels) if level.touches_center)

    # Flagging and regridding

    def _flag_runs(self, level: Level, scale: Optional[float]) -> List[Tuple[int, int]]:
        """Clusters of flagged cells as inclusive global cell ranges, widened by the buffer."""
        flags = np.abs(np.diff(level.u)) > self.settings.refine_threshold
        if scale is not None and level.touches_center and scale / (level.dr / 2.0) < self.settings.points_per_scale:
            flags |= level.r[:-1] < self.settings.scale_cover * scale
            flags[0] = True
        cells = np.flatnonzero(flags)
        if cells.size == 0:
            return []

        breaks = np.flatnonzero(np.diff(cells) > 1)
        starts = np.concatenate([[cells[0]], cells[breaks + 1]])
        ends = np.concatenate([cells[breaks], [cells[-1]]])
        buffer = self.settings.buffer_width
        runs: List[Tuple[int, int]] = []
        for start, end in zip(starts, ends, strict=True):
            lo = max(int(start) - buffer, 0) + level.i_lo
            hi = min(int(end) + buffer, level.n - 2) + level.i_lo
            if runs and lo <= runs[-1][1] + 1:
                runs[-1] = (runs[-1][0], max(runs[-1][1], hi))
            else:
                runs.append((lo, hi))
        return runs

    def flag_cells(self, level: Level, scale: Optional[float] = None) -> List[Tuple[float, float]]:
        """
        Flags cells whose |u[i+1] - u[i]| = |dr * dw/dr| exceeds refine_threshold, and near r = 0 the
        cells inside scale_cover * scale when the next finer level would resolve the scale by fewer
        than points_per_scale cells.

        Args:
            level: The level to inspect.
            scale: The current scale estimate lambda, if defined.

        Returns:
            Disjoint radial intervals covering the flagged cells plus the buffer margin.
        """
        return [(lo * level.dr, (hi + 1) * level.dr) for lo, hi in self._flag_runs(level, scale)]

    def _child_lattice(self, parent: Level, runs: List[Tuple[int, int]]) -> Optional[Tuple[int, int]]:
        if not runs:
            return None
        buffer = self.settings.buffer_width
        lo = runs[0][0]
        hi = runs[-1][1] + 1
        if parent.touches_center and lo <= buffer:
            lo = 0
        else:
            lo = max(lo, parent.i_lo + buffer)
        hi = min(hi, parent.i_hi - buffer)
        if hi - lo < MIN_CHILD_CELLS:
            return None
        return 2 * lo, 2 * (hi - lo) + 1

    def regrid(self, k: int, scale: Optional[float] = None) -> None:
        """
        Rebuilds every level finer than k, top-down from fresh flags. Old data are copied where
        the new patch overlaps the old one at the same depth; elsewhere data are prolonged.
        """
        old = self.levels
        rebuilt = old[: k + 1]
        for j in range(k, self.settings.max_depth):
            parent = rebuilt[j]
            lattice = self._child_lattice(parent, self._flag_runs(parent, scale))
            if lattice is None:
                break
            i_lo, n = lattice
            u, ut = prolong(parent, i_lo, n)
            child = Level(depth=j + 1, dr=parent.dr / 2.0, i_lo=i_lo, u=u, ut=ut, time=parent.time)
            if j + 1 < len(old):
                previous = old[j + 1]
                lo = max(i_lo, previous.i_lo)
                hi = min(child.i_hi, previous.i_hi)
                if lo <= hi:
                    child.u[lo - i_lo : hi - i_lo + 1] = previous.u[lo - previous.i_lo : hi - previous.i_lo + 1]
                    child.ut[lo - i_lo : hi - i_lo + 1] = previous.ut[lo - previous.i_lo : hi - previous.i_lo + 1]
                    child.steps = previous.steps
                child.mark_previous()
            rebuilt.append(child)

        if [(lv.depth, lv.i_lo, lv.n) for lv in rebuilt] != [(lv.depth, lv.i_lo, lv.n) for lv in old]:
            logger.debug(
                "Regrid from depth {}: {}",
                k,
                ", ".join(f"{lv.depth}:[{lv.extent[0]:.3e}, {lv.extent[1]:.3e}]" for lv in rebuilt[k + 1 :]),
            )
        self.levels = rebuilt

    def check_nesting(self) -> bool:
        buffer = self.settings.buffer_width
        for parent, child in zip(self.levels, self.levels[1:], strict=False):
            if child.depth != parent.depth + 1 or child.dr != self.dr0 / 2**child.depth:
                return False
            lower_ok = (child.i_lo == 0 and parent.i_lo == 0) or child.i_lo >= 2 * (parent.i_lo + buffer)
            if not lower_ok or child.i_hi > 2 * (parent.i_hi - buffer):
                return False
        return True

    def resolution_exhausted(self, scale: Optional[float]) -> bool:
        """True when the scale needs a level deeper than max_depth."""
        if scale is None:
            return False
        level = self.center_level()
        return level.depth >= self.settings.max_depth and scale / (level.dr / 2.0) < self.settings.points_per_scale

    # Time stepping

    def _edge_driver(self, k: int) -> EdgeDriver:
        child = self.levels[k]
        parent = self.levels[k - 1]
        groups = []
        driven = _driven_points(child)
        for chunk in np.split(driven, np.flatnonzero(np.diff(driven) > 1) + 1):
            radii = child.r[chunk]
            center = int(round(radii.mean() / parent.dr)) - parent.i_lo
            window = np.arange(max(center - 3, 0), min(center + 4, parent.n))
            groups.append((chunk, radii, window))

        def drive(time: float) -> EdgeValues:
            u, ut = parent.interpolated(time)
            values: EdgeValues = []
            for chunk, radii, window in groups:
                spline = make_interp_spline(parent.r[window], np.column_stack([u[window], ut[window]]), k=3)
                sampled = np.asarray(spline(radii), dtype=np.float64)
                values.append((chunk, sampled[:, 0], sampled[:, 1]))
            return values

        return drive

    def _advance(self, k: int, dt: float) -> None:
        assert self._stepper is not None
        if self._halt_reason is not None:
            return
        level = self.levels[k]
        level.mark_previous()
        edges = self._edge_driver(k) if k > 0 else None
        self.outflow += self._stepper.step(level, dt, edges)
        level.steps += 1

        if k + 1 < len(self.levels):
            child = self.levels[k + 1]
            for _ in range(2):
                self._advance(k + 1, dt / 2.0)
                if self._halt_reason is not None:
                    return
            restrict(child, level)
            child.time = level.time

        if self._monitor is not None:
            reason = self._monitor(self, k)
            if reason is not None:
                self._halt_reason = reason
                return

        if k < self.settings.max_depth and level.steps % self.settings.regrid_interval == 0:
            self.regrid(k, self._scale(self) if self._scale is not None else None)

    def subcycle(
        self,
        dt: float,
        stepper: LevelStepper,
        monitor: Optional[Monitor] = None,
        scale: Optional[ScaleEstimator] = None,
    ) -> SubcycleResult:
        """
        Advances the hierarchy by one coarse step: level k takes 2^k steps of dt / 2^k, finer levels
        take edge data interpolated from their parent, are restricted after each parent step, and
        the children of level k are regridded every regrid_interval steps of level k.

        Args:
            dt: The coarse step.
            stepper: Advances one level.
            monitor: Called after every synchronized level step with (hierarchy, k); returning a
                reason string halts the recursion.
            scale: Supplies the current scale estimate to the flagging.

        Returns:
            The time reached and whether a monitor halted the step.

        Raises:
            CFLViolationError: If dt is not a valid step for the base level.
        """
        if not 0.0 < dt <= MAX_COURANT * self.dr0:
            raise CFLViolationError(f"Coarse step dt={dt!r} rejected: Courant limit is {MAX_COURANT * self.dr0!r}")
        self._stepper, self._monitor, self._scale = stepper, monitor, scale
        self._halt_reason = None
        self._outflow_start = self.outflow
        self._advance(0, dt)
        return SubcycleResult(
            time=self.finest.time,
            depth=self.depth,
            outflow=self.outflow - self._outflow_start,
            halted=self._halt_reason is not None,
            reason=self._halt_reason,
        )

    # Views

    def outflow_at(self, time: float) -> float:
        """Radiated energy up to the given time, interpolated within the current coarse step."""
        base = self.levels[0]
        span = base.time - base.time_prev
        if span <= 0.0:
            return self.outflow
        alpha = min(max((time - base.time_prev) / span, 0.0), 1.0)
        return self._outflow_start + alpha * (self.outflow - self._outflow_start)

    def composite(self, time: Optional[float] = None) -> FieldState:
        """
        Samples from the finest level available at each radius. Coarser levels ahead of the
        requested time are interpolated linearly in time.
        """
        target = self.finest.time if time is None else time
        radii: List[FloatArray] = []
        u_parts: List[FloatArray] = []
        ut_parts: List[FloatArray] = []
        hole: Optional[Tuple[float, float]] = None
        for level in reversed(self.levels):
            u, ut = level.interpolated(target)
            r = level.r
            keep = np.ones(level.n, dtype=bool) if hole is None else (r < hole[0]) | (r > hole[1])
            radii.append(r[keep])
            u_parts.append(u[keep])
            ut_parts.append(ut[keep])
            hole = level.extent
        r_all = np.concatenate(radii)
        order = np.argsort(r_all, kind="stable")
        u_all = np.concatenate(u_parts)[order]
        return FieldState(target, r_all[order], 1.0 - u_all, -np.concatenate(ut_parts)[order])

    def snapshot(self) -> List[LevelSnapshot]:
        return [
            LevelSnapshot(lv.depth, lv.dr, lv.time, lv.r, lv.w.copy(), lv.wt.copy()) for lv in self.levels
        ]

    def export_snapshot(self, path: Path) -> None:
        from coreason_blowup.export import write_level_snapshot

        write_level_snapshot(path, self.snapshot())
