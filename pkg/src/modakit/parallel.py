"""Case-level worker pool."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from typing import Callable, List, Sequence, Tuple, TypeVar, Union

T = TypeVar("T")
R = TypeVar("R")

Outcome = Tuple[bool, Union[R, str]]


def _guarded(fn, item):
    try:
        return True, fn(item)
    except Exception as exc:  # reported per case, never aborts the batch
        return False, f"{type(exc).__name__}: {exc}"


def map_cases(fn: Callable[[T], R], items: Sequence[T], jobs: int = 1) -> List[Outcome]:
    """Apply ``fn`` to every item, returning ``(ok, result_or_error)`` in input order.

    ``fn`` must be a picklable top-level callable when ``jobs > 1``.
    """
    if jobs <= 1 or len(items) <= 1:
        return [_guarded(fn, it) for it in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as pool:
        futures = [pool.submit(_guarded, fn, it) for it in items]
        return [f.result() for f in futures]
