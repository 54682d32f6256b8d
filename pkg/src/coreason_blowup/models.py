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
from enum import Enum
from pathlib import Path
from typing import List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator


class OutcomeKind(str, Enum):
    BLOWUP = "Blowup"
    DISPERSION = "Dispersion"
    UNDETERMINED = "Undetermined"


class Command(str, Enum):
    EVOLVE = "evolve"
    BISECT = "bisect"
    SWEEP_SUBCRITICAL = "sweep-subcritical"
    DEPARTURE_SCALING = "departure-scaling"
    FIT_LAMBDA = "fit-lambda"
    SHOOT = "shoot"
    CONE_ENERGY = "cone-energy"


class MeshSettings(BaseModel):
    """
    Controls of the adaptive mesh hierarchy.
    """

    model_config = ConfigDict(extra="forbid")

    max_depth: int = Field(26, ge=0, le=48, description="Deepest refinement level (dr = dr0 / 2^depth)")
    refine_threshold: float = Field(0.05, gt=0, description="Flag a cell when |dr * dw/dr| exceeds this")
    points_per_scale: int = Field(64, ge=4, description="Minimum cells across lambda near the center")
    buffer_width: int = Field(8, ge=1, description="Parent cells of margin around flagged regions")
    regrid_interval: int = Field(4, ge=1, description="Steps of a level between regrids of its children")
    dissipation: float = Field(0.02, ge=0, lt=1, description="Kreiss-Oliger coefficient at fine-grid edges")
    scale_cover: float = Field(4.0, gt=0, description="Center refinement covers [0, scale_cover * lambda]")


class SnapshotSchedule(BaseModel):
    """
    Trigger rules for storing composite snapshots during an evolution.
    """

    model_config = ConfigDict(extra="forbid")

    every_dt: Optional[float] = Field(None, gt=0, description="Store a snapshot every Delta t")
    per_decade: int = Field(1, ge=0, description="Snapshots per decade of lambda (0 disables)")
    tau_step: Optional[float] = Field(None, gt=0, description="Store a snapshot at steps of -ln(lambda)")


class EvolutionConfig(BaseModel):
    """
    One evolution of the reduced radial equation from the gaussian family.
    """

    model_config = ConfigDict(extra="forbid")

    d: int = Field(5, ge=4, description="Spatial dimension")
    A: float = Field(0.2, ge=0, description="Initial amplitude")
    sigma: float = Field(10.0, gt=0, description="Gaussian width parameter")
    R: float = Field(2.0, gt=0, description="Gaussian center")
    r_max: float = Field(8.0, gt=0, description="Outer boundary radius")
    dr0: float = Field(0.01, gt=0, description="Base grid spacing")
    cfl: float = Field(0.4, gt=0, lt=1, description="Courant factor dt / dr")
    mesh: MeshSettings = Field(default_factory=MeshSettings)
    snapshots: SnapshotSchedule = Field(default_factory=SnapshotSchedule)

    # Stop criteria
    t_max: float = Field(10.0, gt=0, description="Undetermined once this time is reached")
    max_coarse_steps: int = Field(1_000_000, ge=1, description="Undetermined once this many coarse steps ran")
    blowup_amplification: float = Field(
        1e12, gt=1, description="Blowup once |w_rr(t,0)| exceeds this times the reference curvature"
    )
    dispersion_amplitude: float = Field(1e-3, gt=0, description="sup |w - 1| bound inside the dispersion radius")
    dispersion_energy_fraction: float = Field(1e-6, gt=0, description="Energy inside the dispersion radius over E0")
    dispersion_radius: float = Field(1.0, gt=0)
    dispersion_window: float = Field(2.0, gt=0, description="Duration the dispersion criterion must hold")
    dispersion_start: Optional[float] = Field(None, ge=0, description="Earliest window start; defaults to R + 1")
    row_spacing: float = Field(0.05, gt=0, description="Diagnostics row spacing as a fraction of min(lambda, 1)")

    @model_validator(mode="after")
    def check_geometry(self) -> "EvolutionConfig":
        if not self.R < self.r_max:
            raise ValueError(f"constraint 0 < R < r_max violated: R={self.R}, r_max={self.r_max}")
        cells = self.r_max / self.dr0
        if abs(cells - round(cells)) > 1e-9 * cells or round(cells) < 8:
            raise ValueError(f"r_max / dr0 must be an integer >= 8, got {cells}")
        return self

    @property
    def base_cells(self) -> int:
        return int(round(self.r_max / self.dr0))

    @property
    def coarse_dt(self) -> float:
        return self.cfl * self.dr0

    @property
    def window_start(self) -> float:
        return self.dispersion_start if self.dispersion_start is not None else self.R + 1.0

    def with_amplitude(self, amplitude: float) -> "EvolutionConfig":
        return self.model_copy(update={"A": amplitude})


class ShootingSettings(BaseModel):
    """
    Parameters of the two-sided shooting search for self-similar profiles.
    """

    model_config = ConfigDict(extra="forbid")

    b_min: float = Field(-100.0, lt=0, description="Most negative origin parameter searched")
    b_max: float = Field(-0.05, lt=0, description="Least negative origin parameter searched")
    branches: List[float] = Field(default_factory=lambda: [0.0, 1.0, -1.0], description="Light-cone values W(1)")
    matching_point: float = Field(0.5, gt=0, lt=1)
    eta0: float = Field(1e-3, gt=0, le=1e-2, description="Offset of the origin series")
    eta1: float = Field(1e-3, gt=0, le=1e-2, description="Offset of the light-cone series")
    b_samples: int = Field(240, ge=8)
    c_samples: int = Field(160, ge=8)
    c_max: float = Field(50.0, gt=0, description="Largest |light-cone parameter| scanned")
    scan_tolerance: float = Field(1e-9, gt=0)
    ode_tolerance: float = Field(1e-12, gt=0, description="Local tolerance of refinement shots")
    certify_tolerance: float = Field(1e-13, gt=0)
    certify_defect: float = Field(1e-9, gt=0)
    blowoff: float = Field(1e3, gt=1, description="|W| beyond which a shot is divergent")
    table_points: int = Field(401, ge=11)

    @model_validator(mode="after")
    def check_range(self) -> "ShootingSettings":
        if not self.b_min < self.b_max:
            raise ValueError(f"constraint b_min < b_max violated: {self.b_min} >= {self.b_max}")
        return self


class ExperimentSettings(BaseModel):
    """
    Parameters shared by the bisection and sweep drivers.
    """

    model_config = ConfigDict(extra="forbid")

    a_lo: float = Field(0.05, ge=0)
    a_hi: float = Field(0.2, gt=0)
    tolerance: float = Field(1e-6, gt=0, lt=1, description="Relative bracket width at which bisection stops")
    a_star: Optional[float] = Field(None, gt=0)
    epsilons: List[float] = Field(default_factory=lambda: [1e-7, 1e-6, 1e-5, 1e-4, 1e-3])
    departure_factor: float = Field(2.0, gt=1)
    attractor_b: Optional[float] = Field(None, lt=0, description="Origin parameter of the intermediate attractor")
    max_workers: int = Field(4, ge=1)

    @model_validator(mode="after")
    def check_bracket(self) -> "ExperimentSettings":
        if not self.a_lo < self.a_hi:
            raise ValueError(f"constraint a_lo < a_hi violated: {self.a_lo} >= {self.a_hi}")
        if any(e <= 0 for e in self.epsilons):
            raise ValueError("constraint epsilons > 0 violated")
        return self


class RunManifest(BaseModel):
    """
    A fully resolved, reproducible description of one CLI run.
    """

    model_config = ConfigDict(extra="forbid")

    command: Command
    evolution: EvolutionConfig = Field(default_factory=EvolutionConfig)
    shooting: ShootingSettings = Field(default_factory=ShootingSettings)
    experiment: ExperimentSettings = Field(default_factory=ExperimentSettings)
    output_dir: Path = Field(Path("runs/default"))


class Outcome(BaseModel):
    """
    Classification of one evolution.
    """

    kind: OutcomeKind
    T_estimate: Optional[float] = Field(None, description="Blowup time (Blowup only)")
    p: Optional[float] = Field(None, description="Fitted exponent of lambda ~ (T - t)^p")
    final_time: float
    reason: str = Field(..., description="Identifier of the stop criterion that fired")

    @model_validator(mode="after")
    def check_blowup_time(self) -> "Outcome":
        if self.kind == OutcomeKind.BLOWUP and (self.T_estimate is None or self.T_estimate <= 0):
            raise ValueError("Blowup outcomes require a positive T_estimate")
        return self


class DiagnosticsRow(BaseModel):
    """
    One sample of the run diagnostics.
    """

    t: float
    w_rr0: float = Field(..., description="Second radial derivative of w at the center")
    lam: Optional[float] = Field(None, description="Scale estimate (defined once w_rr0 < 0)")
    E_total: float
    flux_out: float = Field(..., description="Cumulative energy radiated through r_max")
    depth: int = Field(..., description="Deepest active level")
    tau: Optional[float] = None
    E_cone: Optional[float] = None
    E_cone_kinetic: Optional[float] = None


class Trial(BaseModel):
    amplitude: float
    outcome: OutcomeKind


class Bracket(BaseModel):
    """
    Bisection bracket on the amplitude.
    """

    a_lo: float
    a_hi: float
    history: List[Trial] = Field(default_factory=list)
    limited: bool = Field(False, description="True if bisection stopped on an Undetermined trial")

    @property
    def a_star(self) -> float:
        return 0.5 * (self.a_lo + self.a_hi)

    @property
    def relative_width(self) -> float:
        return (self.a_hi - self.a_lo) / self.a_hi

    def check_invariant(self) -> bool:
        """
        Replays the history and confirms that every lower end dispersed, every upper end
        blew up, and the width never grew.
        """
        lo = hi = None
        width = math.inf
        for trial in self.history:
            if trial.outcome == OutcomeKind.DISPERSION:
                lo = trial.amplitude if lo is None else max(lo, trial.amplitude)
            elif trial.outcome == OutcomeKind.BLOWUP:
                hi = trial.amplitude if hi is None else min(hi, trial.amplitude)
            if lo is not None and hi is not None:
                if not lo < hi or hi - lo > width:
                    return False
                width = hi - lo
        return lo == self.a_lo and hi == self.a_hi


class ScalingFit(BaseModel):
    """
    A power law y ~ x^exponent fitted in log-log coordinates.
    """

    abscissae: List[float]
    ordinates: List[float]
    exponent: float
    prefactor: float
    residual: float = Field(..., description="RMS residual of the log-log fit")
    window: Tuple[float, float] = Field(..., description="Abscissa range used by the fit")
    excluded: List[float] = Field(default_factory=list, description="Abscissae left out of the window")
    reliable: bool
    offset: Optional[float] = Field(None, description="Fitted origin shift (e.g. the blowup time T)")
    anomalous_exponent: Optional[float] = Field(None, description="p - 1 for scale-law fits")
    caveat: Optional[str] = None


class SweepMember(BaseModel):
    epsilon: float
    amplitude: float
    outcome: OutcomeKind
    value: Optional[float] = Field(None, description="Measured ordinate (rho_max or T - t*)")
    resolved: bool = True
    note: Optional[str] = None


class SweepResult(BaseModel):
    members: List[SweepMember]
    fit: Optional[ScalingFit] = None
    contaminated: bool = False


class DepartureResult(BaseModel):
    horizon: float = Field(..., description="Critical-run time horizon T")
    fits: dict[str, Optional[ScalingFit]] = Field(..., description="Fit per sign and detector factor")
    members: List[SweepMember]


class AttractorComparison(BaseModel):
    times: List[float]
    distances: List[float]
    minimum: float
    minimum_time: float
    decreasing_phase: bool
    departed: bool


class ConeEnergyLimit(BaseModel):
    limit: float
    trend: str = Field(..., description="'vanishing' or 'concentrating'")
    decade_ratio: float = Field(..., description="E_cone at the last row over E_cone one decade of T - t earlier")
    kinetic_fraction: Optional[float] = None
    low_confidence: bool = False


class SelfSimilarProfile(BaseModel):
    """
    A certified solution of the self-similar ODE on [0, 1].
    """

    d: int
    b: float = Field(..., description="Origin parameter, W ~ 1 + b eta^2")
    c: float = Field(..., description="Light-cone slope W'(1)")
    w1: float = Field(..., description="Light-cone value W(1)")
    samples: List[Tuple[float, float, float]] = Field(..., description="Dense table (eta, W, W')")
    residual: float = Field(..., description="Certified matching defect")


class RunSummary(BaseModel):
    command: Command
    status: str = "ok"
    reason: Optional[str] = None
    outcome: Optional[Outcome] = None
    fit: Optional[ScalingFit] = None
    bracket: Optional[Bracket] = None
    sweep: Optional[SweepResult] = None
    departure: Optional[DepartureResult] = None
    cone: Optional[ConeEnergyLimit] = None
    profiles: List[SelfSimilarProfile] = Field(default_factory=list)
    distances: List[float] = Field(default_factory=list)
    files: List[str] = Field(default_factory=list)
