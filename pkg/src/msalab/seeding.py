"""Deterministic per-trial seeds and trial dispatch."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from typing import Callable

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def _mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(seed_base: int, trial_index: int) -> int:
    """SplitMix64 output for stream ``seed_base`` at position ``trial_index``.

    The base is mixed first, then advanced by ``trial_index + 1`` golden-ratio
    increments; both steps are bijections on 64-bit words, so distinct
    indices under one base never collide. ``derive_seed(0, 0)`` is
    ``0xE220A8397B1DCDAF``, the first SplitMix64 output from state 0.
    """
    state = (_mix64(seed_base) + (trial_index + 1) * GOLDEN) & MASK64
    return _mix64(state)


def map_trials(fn: Callable, trials: int, seed_base: int, workers: int = 1) -> list:
    """``[fn(i, derive_seed(seed_base, i)) for i in range(trials)]``, optionally in processes.

    Results are always returned in trial order, so serial and parallel runs
    agree exactly. ``fn`` must be picklable when ``workers > 1``.
    """
    seeds = [derive_seed(seed_base, i) for i in range(trials)]
    if workers <= 1 or trials < 2:
        return [fn(i, s) for i, s in enumerate(seeds)]
    chunk = max(1, trials // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(trials), seeds, chunksize=chunk))
