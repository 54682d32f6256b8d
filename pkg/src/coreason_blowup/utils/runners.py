# Copyright (c) 2025 CoReason, Inc.
#
# This software is proprietary and dual-licensed.
# Licensed under the Prosperity Public License 3.0 (the "License").
# A copy of the license is available at https://prosperitylicense.com/versions/3.0.0
# For details, see the LICENSE file.
# Commercial use beyond a 30-day trial requires a separate license.
#
# Source Code: https://github.com/CoReason-AI/coreason_blowup

from functools import partial
from typing import Callable, List, Optional, Sequence, TypeVar, cast

import anyio
import anyio.to_thread

from coreason_blowup.interfaces import TrialRunner
from coreason_blowup.utils.logger import logger

T = TypeVar("T")
R = TypeVar("R")


class ThreadTrialRunner(TrialRunner):
    """
    Default implementation of TrialRunner using anyio worker threads.
    At most max_workers trials run at once; results are collected in input order.
    """

    def __init__(self, max_workers: int = 4) -> None:
        self.limiter = anyio.CapacityLimiter(max_workers)

    async def map(self, fn: Callable[[T], R], items: Sequence[T]) -> List[R]:
        """
        Runs fn on every item in worker threads.
        The first failure cancels the remaining trials and is re-raised.
        """
        results: List[Optional[R]] = [None] * len(items)

        async def trial(index: int, item: T) -> None:
            results[index] = await anyio.to_thread.run_sync(partial(fn, item), limiter=self.limiter)
            logger.debug(f"Trial {index + 1}/{len(items)} finished")

        try:
            async with anyio.create_task_group() as group:
                for index, item in enumerate(items):
                    group.start_soon(trial, index, item)
        except ExceptionGroup as failures:
            logger.error(f"Trial failed: {failures.exceptions[0]}")
            raise failures.exceptions[0] from None
        return cast(List[R], results)
