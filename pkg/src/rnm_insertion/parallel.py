"""Thread-pool helper for embarrassingly parallel grid evaluation."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np


def map_points(func, points, threads: int = 1, chunk: int = 2048) -> np.ndarray:
    """Apply a vectorised ``func`` to 1-D ``points`` in chunks.

    Chunks are fixed by position, never by thread count, and every output
    element depends only on its own input, so results do not depend on
    ``threads``.
    """
    points = np.asarray(points).ravel()
    pieces = [points[s:s + chunk] for s in range(0, points.size, chunk)]
    if threads <= 1 or len(pieces) <= 1:
        out = [np.asarray(func(p)) for p in pieces]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            out = [np.asarray(v) for v in pool.map(func, pieces)]
    if not out:
        return np.empty(0)
    return np.concatenate([o.ravel() for o in out])
