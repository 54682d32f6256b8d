# Copyright (c) 2025 CoReason, Inc.
#
# This software is proprietary and dual-licensed.
# Licensed under the Prosperity Public License 3.0 (the "License").
# A copy of the license is available at https://prosperitylicense.com/versions/3.0.0
# For details, see the LICENSE file.
# Commercial use beyond a 30-day trial requires a separate license.
#
# Source Code: https://github.com/CoReason-AI/coreason_blowup

from typing import Optional


class BlowupLabError(Exception):
    """Base class for every error raised by coreason_blowup."""


class DomainError(BlowupLabError, ValueError):
    """An argument lies outside the domain of a formula (e.g. r = 0, T <= t)."""


class InsufficientDataError(BlowupLabError, ValueError):
    """Too few samples, rows or decades to perform an estimate."""


class ContainmentError(BlowupLabError, ValueError):
    """A child extent is not contained in its parent level."""


class SynchronizationError(BlowupLabError, RuntimeError):
    """Two levels were combined at different times."""


class CFLViolationError(BlowupLabError, ValueError):
    """A coarse step exceeds the Courant limit of the base level."""


class NumericalBreakdownError(BlowupLabError, ArithmeticError):
    """A non-finite value appeared during time integration."""


class ResolutionError(BlowupLabError, ValueError):
    """A scale is resolved by fewer grid points than required."""


class ConstraintViolationError(BlowupLabError, ValueError):
    """Light-cone data violates W(1)(1 - W(1)^2) = 0."""


class BracketError(BlowupLabError, ValueError):
    """A bisection bracket does not separate dispersion from blowup."""


class DependencyError(BlowupLabError, RuntimeError):
    """A required upstream result (e.g. an attractor profile) is unavailable."""


class ConfigError(BlowupLabError, ValueError):
    """A run manifest could not be parsed or validated."""

    def __init__(self, message: str, line: Optional[int] = None) -> None:
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(f"{prefix}{message}")
