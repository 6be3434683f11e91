"""Keyed seed derivation.

Every random stream is addressed by ``(master seed, *keys)`` so a
replicate or a tested variable sees the same numbers whatever else runs,
and in whatever order.  Keys go into ``SeedSequence.spawn_key``; putting
them in the entropy instead would make ``(s, r)`` and ``(s, r, 0)`` collide.
"""

import numpy as np

# stream tags
DATA, TRUTH, SPLIT, SCREEN, MU, PERM, FOLDS = range(7)


def _flatten(seed):
    if seed is None:
        raise ValueError("a seed is required for reproducible runs")
    if isinstance(seed, (tuple, list)):
        parts = [int(s) for s in seed]
    else:
        parts = [int(seed)]
    if not parts or any(s < 0 for s in parts):
        raise ValueError(f"seed components must be non-negative integers, got {seed!r}")
    return parts


def child(seed, *keys):
    """Seed tuple for the sub-stream ``keys`` of ``seed``."""
    return tuple(_flatten(seed) + _flatten(list(keys)) if keys else _flatten(seed))


def make_rng(seed, *keys):
    parts = _flatten(child(seed, *keys))
    ss = np.random.SeedSequence(parts[0], spawn_key=tuple(parts[1:]))
    return np.random.default_rng(ss)
