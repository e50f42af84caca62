from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from contextlib import nullcontext
from os import PathLike
from pathlib import Path
from typing import IO, Any, Callable, ContextManager, Iterable, TypeVar

from .logging import log

T = TypeVar("T")
R = TypeVar("R")

THREADS_ENV = "PHOTOCOV_THREADS"

__all__ = (
    "THREADS_ENV",
    "worker_count",
    "parallel_map",
    "dump_json",
    "load_json",
)


def worker_count() -> int:
    """Number of worker threads allowed by the PHOTOCOV_THREADS environment variable.

    Unset or 1 means serial; 0 means one per CPU.
    """
    raw = os.environ.get(THREADS_ENV, "").strip()
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        log.warning("Ignoring %s=%r: not an integer.", THREADS_ENV, raw)
        return 1
    if n < 0:
        log.warning("Ignoring %s=%r: negative.", THREADS_ENV, raw)
        return 1
    if n == 0:
        return os.cpu_count() or 1
    return n


def parallel_map(fun: Callable[[T], R], items: Iterable[T]) -> list[R]:
    """Maps `fun` over `items`, preserving order, using up to :func:`worker_count` threads."""
    items = list(items)
    workers = min(worker_count(), len(items))
    if workers <= 1:
        return [fun(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fun, items))


def _json_path(filename: str | PathLike) -> Path:
    p = Path(filename)
    if not p.suffix:
        p = p.with_suffix(".json")
    return p


def _opened(
    filename_or_stream: str | PathLike | IO[str], mode: str
) -> ContextManager[IO[str]]:
    if isinstance(filename_or_stream, (str, PathLike)):
        return open(_json_path(filename_or_stream), mode)
    return nullcontext(filename_or_stream)


def dump_json(data: Any, filename_or_stream: str | PathLike | IO[str]) -> None:
    """Writes `data` as indented JSON, adding a .json suffix to bare file names."""
    with _opened(filename_or_stream, "w") as s:
        json.dump(data, s, indent=2, ensure_ascii=True)
        s.write("\n")


def load_json(filename_or_stream: str | PathLike | IO[str]) -> Any:
    with _opened(filename_or_stream, "r") as s:
        return json.load(s)
