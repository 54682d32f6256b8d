# Copyright (c) 2025 CoReason, Inc.
#
# This software is proprietary and dual-licensed.
# Licensed under the Prosperity Public License 3.0 (the "License").
# A copy of the license is available at https://prosperitylicense.com/versions/3.0.0
# For details, see the LICENSE file.
# Commercial use beyond a 30-day trial requires a separate license.
#
# Source Code: https://github.com/CoReason-AI/coreason_blowup

import threading
import time
from typing import List

import pytest

from coreason_blowup.interfaces import TrialRunner
from coreason_blowup.utils.runners import ThreadTrialRunner


@pytest.mark.asyncio
async def test_results_follow_input_order() -> None:
    """Slow early items must not reorder the results."""
    runner = ThreadTrialRunner(max_workers=4)

    def slow_square(x: int) -> int:
        time.sleep(0.01 * (5 - x))
        return x * x

    assert await runner.map(slow_square, [0, 1, 2, 3, 4]) == [0, 1, 4, 9, 16]


@pytest.mark.asyncio
async def test_concurrency_is_bounded() -> None:
    """At most max_workers trials run at once."""
    runner = ThreadTrialRunner(max_workers=2)
    lock = threading.Lock()
    active: List[int] = [0]
    peak: List[int] = [0]

    def trial(_: int) -> None:
        with lock:
            active[0] += 1
            peak[0] = max(peak[0], active[0])
        time.sleep(0.02)
        with lock:
            active[0] -= 1

    await runner.map(trial, list(range(6)))
    assert 1 <= peak[0] <= 2


@pytest.mark.asyncio
async def test_failure_is_reraised() -> None:
    """The exception of a failing trial surfaces unwrapped."""
    runner = ThreadTrialRunner()

    def fragile(x: int) -> int:
        if x == 2:
            raise ValueError("trial 2 failed")
        return x

    with pytest.raises(ValueError, match="trial 2 failed"):
        await runner.map(fragile, [1, 2, 3])


@pytest.mark.asyncio
async def test_empty_input() -> None:
    assert await ThreadTrialRunner().map(str, []) == []


def test_runner_satisfies_protocol() -> None:
    assert isinstance(ThreadTrialRunner(), TrialRunner)
