# Copyright (c) 2025 CoReason, Inc.
#
# This software is proprietary and dual-licensed.
# Licensed under the Prosperity Public License 3.0 (the "License").
# A copy of the license is available at https://prosperitylicense.com/versions/3.0.0
# For details, see the LICENSE file.
# Commercial use beyond a 30-day trial requires a separate license.
#
# Source Code: https://github.com/CoReason-AI/coreason_blowup

from typing import TYPE_CHECKING, Callable, List, Optional, Protocol, Sequence, Tuple, TypeVar, runtime_checkable

import numpy as np

from coreason_blowup.models import OutcomeKind

if TYPE_CHECKING:  # pragma: no cover
    from coreason_blowup.mesh import Level

T = TypeVar("T")
R = TypeVar("R")

# Values imposed on the edge points of a refined level at a given time: (indices, u, ut).
EdgeValues = List[Tuple[np.ndarray, np.ndarray, np.ndarray]]
EdgeDriver = Callable[[float], EdgeValues]


@runtime_checkable
class LevelStepper(Protocol):
    """
    Protocol for advancing the data of a single mesh level by one time step.
    Keeps the mesh hierarchy independent of the equation being solved.
    """

    def step(self, level: "Level", dt: float, edges: Optional[EdgeDriver]) -> float:
        """
        Advances the level in place by dt.

        Args:
            level: The level to advance; its time is increased by dt.
            dt: The time step.
            edges: Supplies the values of the edge points at any stage time, or None for a level
                whose edges are physical boundaries.

        Returns:
            The energy radiated through the outer boundary during the step (0 if the level does
            not reach it).
        """
        ...


@runtime_checkable
class OutcomeClassifier(Protocol):
    """
    Protocol for deciding the fate of the initial data with a given amplitude.
    """

    def classify(self, amplitude: float) -> OutcomeKind:
        """
        Args:
            amplitude: The amplitude A of the initial data family.

        Returns:
            Blowup, Dispersion or Undetermined.
        """
        ...


@runtime_checkable
class TrialRunner(Protocol):
    """
    Protocol for evaluating independent trials concurrently.
    Results must be returned in input order so aggregation is deterministic.
    """

    async def map(self, fn: Callable[[T], R], items: Sequence[T]) -> List[R]:
        """
        Applies fn to every item.

        Args:
            fn: A blocking function.
            items: The trial inputs.

        Returns:
            The results, in the order of items.
        """
        ...
