# Copyright (c) 2025 CoReason, Inc.
#
# This software is proprietary and dual-licensed.
# Licensed under the Prosperity Public License 3.0 (the "License").
# A copy of the license is available at https://prosperitylicense.com/versions/3.0.0
# For details, see the LICENSE file.
# Commercial use beyond a 30-day trial requires a separate license.
#
# Source Code: https://github.com/CoReason-AI/coreason_blowup

import pytest
from pydantic import ValidationError

from coreason_blowup.models import (
    Bracket,
    EvolutionConfig,
    ExperimentSettings,
    MeshSettings,
    Outcome,
    OutcomeKind,
    ShootingSettings,
    Trial,
)


def test_evolution_config_defaults() -> None:
    """Test the derived grid quantities of the default configuration."""
    config = EvolutionConfig()
    assert config.base_cells == 800
    assert config.coarse_dt == pytest.approx(0.004)
    assert config.window_start == 3.0
    assert EvolutionConfig(dispersion_start=5.0).window_start == 5.0


def test_with_amplitude_copies() -> None:
    config = EvolutionConfig(A=0.2)
    other = config.with_amplitude(0.3)
    assert other.A == 0.3
    assert config.A == 0.2
    assert other.sigma == config.sigma


def test_evolution_config_geometry() -> None:
    """Test that the gaussian center must lie inside the grid and the grid must tile r_max."""
    with pytest.raises(ValidationError, match="R < r_max"):
        EvolutionConfig(R=8.0)
    with pytest.raises(ValidationError, match="integer"):
        EvolutionConfig(dr0=0.03)
    with pytest.raises(ValidationError, match="integer"):
        EvolutionConfig(r_max=4.0, dr0=1.0)


def test_evolution_config_bounds() -> None:
    with pytest.raises(ValidationError):
        EvolutionConfig(d=3)
    with pytest.raises(ValidationError):
        EvolutionConfig(cfl=1.0)
    with pytest.raises(ValidationError):
        EvolutionConfig(A=-0.1)
    with pytest.raises(ValidationError):
        EvolutionConfig(unknown=1)  # type: ignore[call-arg]
    with pytest.raises(ValidationError):
        MeshSettings(points_per_scale=2)


def test_outcome_requires_blowup_time() -> None:
    """Test that a Blowup outcome carries a positive blowup time."""
    with pytest.raises(ValidationError):
        Outcome(kind=OutcomeKind.BLOWUP, final_time=1.0, reason="curvature_threshold")
    with pytest.raises(ValidationError):
        Outcome(kind=OutcomeKind.BLOWUP, T_estimate=0.0, final_time=1.0, reason="curvature_threshold")
    outcome = Outcome(kind=OutcomeKind.DISPERSION, final_time=4.0, reason="dispersed")
    assert outcome.T_estimate is None


def test_bracket_properties() -> None:
    bracket = Bracket(a_lo=0.1, a_hi=0.2)
    assert bracket.a_star == pytest.approx(0.15)
    assert bracket.relative_width == pytest.approx(0.5)


def test_bracket_invariant_detects_inconsistent_history() -> None:
    """Test that a history with a dispersing amplitude above a blowing-up one is rejected."""
    good = Bracket(
        a_lo=0.15,
        a_hi=0.2,
        history=[
            Trial(amplitude=0.1, outcome=OutcomeKind.DISPERSION),
            Trial(amplitude=0.2, outcome=OutcomeKind.BLOWUP),
            Trial(amplitude=0.15, outcome=OutcomeKind.DISPERSION),
        ],
    )
    assert good.check_invariant()

    bad = good.model_copy(
        update={"history": good.history + [Trial(amplitude=0.25, outcome=OutcomeKind.DISPERSION)], "a_lo": 0.25}
    )
    assert not bad.check_invariant()
    assert not good.model_copy(update={"a_lo": 0.1}).check_invariant()


def test_shooting_settings_range() -> None:
    with pytest.raises(ValidationError, match="b_min < b_max"):
        ShootingSettings(b_min=-1.0, b_max=-2.0)
    with pytest.raises(ValidationError):
        ShootingSettings(b_max=0.5)
    assert ShootingSettings().branches == [0.0, 1.0, -1.0]


def test_experiment_settings() -> None:
    with pytest.raises(ValidationError, match="a_lo < a_hi"):
        ExperimentSettings(a_lo=0.3, a_hi=0.2)
    with pytest.raises(ValidationError, match="epsilons"):
        ExperimentSettings(epsilons=[1e-3, -1e-4])
    with pytest.raises(ValidationError):
        ExperimentSettings(departure_factor=1.0)
