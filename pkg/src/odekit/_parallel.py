"""Index-parallel map used for realizations, bootstrap replicates and profiles.

Work items are identified by their integer index only, and every item seeds
its own random stream from ``(seed, index)``, so results do not depend on the
number of workers.  Worker processes are forked so that compiled model
closures need not be pickled.
"""
from __future__ import annotations

import multiprocessing as mp
import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

WORKERS_ENV = "ODEKIT_WORKERS"

_TASK = None


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def _run(i):
    return _TASK(i)


def pmap(fn, n: int, workers: int | None = None) -> list:
    """``[fn(i) for i in range(n)]``, possibly on a process pool.

    The first failure by index is re-raised, whatever the completion order.
    """
    global _TASK
    workers = default_workers() if workers is None else int(workers)
    if workers <= 1 or n <= 1 or "fork" not in mp.get_all_start_methods():
        return [fn(i) for i in range(n)]
    _TASK = fn
    try:
        ctx = mp.get_context("fork")
        with ProcessPoolExecutor(min(workers, n), mp_context=ctx) as pool:
            return list(pool.map(_run, range(n), chunksize=max(1, n // (4 * workers))))
    finally:
        _TASK = None


def stream(seed, index: int) -> np.random.Generator:
    """Random generator for work item ``index`` under master ``seed``."""
    return np.random.default_rng([int(seed), int(index)])


def fresh_seed() -> int:
    return int(np.random.SeedSequence().entropy % (2 ** 63))
