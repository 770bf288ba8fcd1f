#    This file is part of nlvolret.
#
#    nlvolret is free software: you can redistribute it and/or modify
#    it under the terms of the GNU General Public License as published by
#    the Free Software Foundation, either version 3 of the License, or
#    (at your option) any later version.
#
#    nlvolret is distributed in the hope that it will be useful,
#    but WITHOUT ANY WARRANTY; without even the implied warranty of
#    MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
#    GNU General Public License for more details.
#
#    You should have received a copy of the GNU General Public License
#    along with nlvolret.  If not, see <http://www.gnu.org/licenses/>.

from concurrent.futures import ProcessPoolExecutor
import logging
import os
from typing import Callable, Iterator, Optional, Sequence, TypeVar

from tqdm import tqdm

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def default_jobs() -> int:
    return os.cpu_count() or 1


def parallel_map(
    func: Callable[[T], R],
    items: Sequence[T],
    jobs: Optional[int] = None,
    desc: Optional[str] = None,
    progress: bool = True,
) -> Iterator[R]:
    """
    Ordered map over items, in worker processes when jobs > 1

    Results come back in the order of items whatever the scheduling,
    so reductions over them do not depend on the number of jobs.

    Parameters
    ----------
    func: Callable
        picklable top-level function or functools.partial of one
    items: Sequence
        task arguments
    jobs: int
        Optional. Default None - number of cpu.
    desc: str
        Optional. Progress bar title.
    progress: bool
        Optional. Default True. Show tqdm progress bar.

    Return
    ------
    Iterator over results
    """

    if jobs is None:
        jobs = default_jobs()
    if jobs < 1:
        raise ValueError(f"jobs must be >= 1, got {jobs}")

    jobs = min(jobs, max(len(items), 1))
    logger.debug("%s: %d tasks on %d jobs", desc or "map", len(items), jobs)

    if jobs == 1:
        yield from tqdm(map(func, items), total=len(items), desc=desc, disable=not progress)
        return

    with ProcessPoolExecutor(max_workers=jobs) as executor:
        yield from tqdm(executor.map(func, items), total=len(items), desc=desc, disable=not progress)
