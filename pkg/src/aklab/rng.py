"""Counter-based random streams.

Every draw is addressed by ``(seed, stream, family, level)`` which fixes a
Philox key, and by the path index, which fixes the counter offset.  A batch
of consecutive paths is therefore one contiguous read of the stream, and any
single path can be regenerated on its own without touching the others.

Normals are produced by inverse-CDF from 53-bit uniforms so that every
variate consumes exactly one 64-bit word; that is what makes the counter
arithmetic exact.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

# stream identifiers
BROWNIAN = 0
BROWNIAN_IRREGULAR = 1
INITIAL_CONDITION = 2
AUXILIARY = 3  # optimizer test points and other non-path draws

_WORDS_PER_BLOCK = 4  # Philox4x64 emits four words per counter step


def _check_nonneg(**kw: int) -> None:
    for name, value in kw.items():
        if int(value) < 0:
            raise ValueError(f"{name} must be a non-negative integer, got {value}")


def philox_key(seed: int, stream: int, family: int = 0, level: int = 0) -> np.ndarray:
    _check_nonneg(seed=seed, stream=stream, family=family, level=level)
    ss = np.random.SeedSequence([int(seed), int(stream), int(family), int(level)])
    return ss.generate_state(2, np.uint64)


def raw_words(key: np.ndarray, start: int, count: int) -> np.ndarray:
    """Words ``start .. start+count-1`` of the Philox stream with ``key``."""
    bg = np.random.Philox(key=key)
    block, skip = divmod(int(start), _WORDS_PER_BLOCK)
    if block:
        bg.advance(block)
    return bg.random_raw(skip + int(count))[skip:]


def uniforms(
    seed: int,
    stream: int,
    family: int,
    level: int,
    per_path: int,
    start: int,
    n_paths: int,
) -> np.ndarray:
    """Open-interval uniforms of shape ``(n_paths, per_path)``.

    Path ``p`` owns words ``[p * per_path, (p + 1) * per_path)``.
    """
    _check_nonneg(start=start, n_paths=n_paths, per_path=per_path)
    key = philox_key(seed, stream, family, level)
    raw = raw_words(key, start * per_path, n_paths * per_path)
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    return u.reshape(n_paths, per_path)


def normals(
    seed: int,
    stream: int,
    family: int,
    level: int,
    per_path: int,
    start: int,
    n_paths: int,
) -> np.ndarray:
    """Standard normals of shape ``(n_paths, per_path)``; see :func:`uniforms`."""
    return ndtri(uniforms(seed, stream, family, level, per_path, start, n_paths))
