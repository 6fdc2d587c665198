"""Process-based fan-out over independent column tasks.

Columns carry lots of small numpy calls, so threads serialize on the GIL;
worker processes give real speedup. The shared arguments ship once per worker
through the pool initializer, results come back in column order and are
deposited by index, so output is bit-identical for any worker count.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor

_MIN_PARALLEL_COLUMNS = 128  # below this, process startup dominates

_worker_fn = None
_worker_args: tuple = ()


def _init(fn, args):
    global _worker_fn, _worker_args
    _worker_fn = fn
    _worker_args = args


def _run(k):
    return _worker_fn(k, *_worker_args)


def map_columns(fn, args: tuple, n: int, workers: int) -> list:
    """Evaluate ``fn(k, *args)`` for k in range(n), in order.

    ``fn`` must be a module-level function (pickled by reference). With
    ``workers`` <= 1, or too few columns to amortize process startup, runs
    sequentially in-process.
    """
    results = [None] * n
    if workers and workers > 1 and n >= _MIN_PARALLEL_COLUMNS:
        chunk = max(8, n // (workers * 8))
        with ProcessPoolExecutor(
            max_workers=workers, initializer=_init, initargs=(fn, args)
        ) as pool:
            for k, out in enumerate(pool.map(_run, range(n), chunksize=chunk)):
                results[k] = out
    else:
        for k in range(n):
            results[k] = fn(k, *args)
    return results
