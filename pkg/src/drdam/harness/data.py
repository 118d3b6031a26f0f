"""Pattern generation, query construction and bundled synthetic surrogates."""
from __future__ import annotations

import math

import numpy as np

from ..errors import DomainError, InfeasibleError, PreconditionError, ShapeError


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def gen_binary_patterns(D: int, count: int, seed) -> np.ndarray:
    """``count`` distinct vectors in ``{0, 1/sqrt(D)}^D``, sampled without replacement."""
    D, count = int(D), int(count)
    if D < 1:
        raise ValueError(f"D must be positive, got {D}")
    if count < 0:
        raise ValueError(f"count must be non-negative, got {count}")
    if D < 63 and count > (1 << D):
        raise InfeasibleError(f"cannot draw {count} unique binary patterns of length {D} (only {1 << D} exist)")
    rng = _rng(seed)
    scale = 1.0 / math.sqrt(D)
    if D <= 20:
        codes = rng.choice(1 << D, size=count, replace=False)
        bits = (codes[:, None] >> np.arange(D)) & 1
        return bits.astype(np.float64) * scale
    out = np.empty((count, D), dtype=np.uint8)
    seen = set()
    n = 0
    while n < count:
        cand = rng.integers(0, 2, size=(count - n, D), dtype=np.uint8)
        for row in cand:
            key = row.tobytes()
            if key not in seen:
                seen.add(key)
                out[n] = row
                n += 1
    return out.astype(np.float64) * scale


def _check_binary(P):
    P = np.atleast_2d(np.asarray(P, dtype=np.float64))
    hi = 1.0 / math.sqrt(P.shape[1])
    if not np.all((P == 0.0) | (P == hi)):
        raise DomainError("patterns must take values in {0, 1/sqrt(D)}")
    return P, hi


def n_flips(D: int, flip_fraction: float) -> int:
    # round half up, so 0.1 * 25 -> 3 rather than banker's 2
    return int(math.floor(flip_fraction * D + 0.5))


def flip_sets(count: int, D: int, flip_fraction: float, seed) -> np.ndarray:
    """Index sets (count, n_flips) of distinct coordinates to toggle."""
    rng = _rng(seed)
    m = n_flips(D, flip_fraction)
    return np.array([rng.choice(D, size=m, replace=False) for _ in range(count)],
                    dtype=np.intp).reshape(count, m)


def apply_flips(P, flips) -> np.ndarray:
    P, hi = _check_binary(P)
    out = P.copy()
    for i, idx in enumerate(flips):
        out[i, idx] = hi - out[i, idx]
    return out


def make_near_queries(stored, flip_fraction: float, seed) -> np.ndarray:
    """Copy each stored pattern with ``round(flip_fraction * D)`` distinct bits toggled."""
    if not 0 <= flip_fraction < 1:
        raise ValueError(f"flip_fraction must lie in [0, 1), got {flip_fraction}")
    P, _ = _check_binary(stored)
    return apply_flips(P, flip_sets(P.shape[0], P.shape[1], flip_fraction, seed))


def query_sets(D: int, K: int, n_queries: int, flip_fraction: float, seed):
    """Stored patterns plus the three query classes.

    Draws ``K + n_queries`` unique patterns; the first K are stored and the
    rest form the random class. ``at`` and ``near`` use the first
    ``n_queries`` stored patterns (cycled when ``n_queries > K``).
    """
    ss = np.random.SeedSequence(seed) if not isinstance(seed, np.random.SeedSequence) else seed
    s_pat, s_flip = ss.spawn(2)
    P = gen_binary_patterns(D, K + n_queries, np.random.default_rng(s_pat))
    stored = P[:K]
    at = stored[np.arange(n_queries) % K]
    near = make_near_queries(at, flip_fraction, np.random.default_rng(s_flip))
    return stored, {"at": at, "near": near, "random": P[K:]}


def surrogate_images(count: int, H: int, W: int, C: int, seed) -> np.ndarray:
    """Smooth random colour fields in [0, 1], shape (count, H, W, C).

    Each image is a sum of a few random plane waves plus a random blob,
    which gives distinct, natural-looking low-frequency content.
    """
    rng = _rng(seed)
    yy, xx = np.meshgrid(np.linspace(0, 1, H), np.linspace(0, 1, W), indexing="ij")
    out = np.empty((count, H, W, C))
    for n in range(count):
        for c in range(C):
            f = np.zeros((H, W))
            for _ in range(3):
                kx, ky = rng.uniform(-6, 6, size=2)
                f += rng.uniform(0.3, 1.0) * np.sin(2 * np.pi * (kx * xx + ky * yy) + rng.uniform(0, 2 * np.pi))
            cx, cy, r = rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), rng.uniform(0.1, 0.3)
            f += 2.0 * rng.uniform(-1, 1) * np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * r * r))
            out[n, :, :, c] = f
        lo, hi = out[n].min(), out[n].max()
        out[n] = (out[n] - lo) / (hi - lo)
    return out


def normalize_pixels(images) -> np.ndarray:
    """Rasterize (n, H, W, C) values in [0, 1] or uint8 into rows scaled to [0, 1/sqrt(D)]."""
    imgs = np.asarray(images)
    if imgs.ndim < 2:
        raise ShapeError(f"expected a stack of images, got shape {imgs.shape}")
    flat = imgs.reshape(imgs.shape[0], -1).astype(np.float64)
    if np.issubdtype(imgs.dtype, np.integer):
        flat /= 255.0
    if flat.size and (flat.min() < 0 or flat.max() > 1):
        raise DomainError("pixel values must lie in [0, 1] (or be 8-bit integers)")
    return flat / math.sqrt(flat.shape[1])


def stack_images(images) -> np.ndarray:
    """Stack a list of (H, W[, C]) arrays, refusing mixed shapes."""
    shapes = {np.shape(im) for im in images}
    if len(shapes) != 1:
        raise ShapeError(f"images have mixed shapes: {sorted(shapes)}")
    return np.stack([np.asarray(im) for im in images])


def letter_surrogate(n: int = 900, D: int = 16, seed=0) -> np.ndarray:
    """Clustered 16-dimensional real data in [0, 1/sqrt(D)].

    Stands in for an integer-feature tabular dataset: 26 Gaussian clusters,
    quantized to 16 levels per feature, duplicates removed.
    """
    rng = _rng(seed)
    centers = rng.uniform(2, 13, size=(26, D))
    rows = []
    seen = set()
    while len(rows) < n:
        c = centers[rng.integers(26)]
        v = np.clip(np.rint(c + rng.normal(0, 2.0, size=D)), 0, 15)
        key = v.tobytes()
        if key not in seen:
            seen.add(key)
            rows.append(v)
    return np.array(rows) / 15.0 / math.sqrt(D)


def split_dataset(data, K: int, n_new: int, seed):
    """Random disjoint (stored, new) split; raises if the dataset is too small."""
    data = np.asarray(data, dtype=np.float64)
    if K + n_new > data.shape[0]:
        raise PreconditionError(f"dataset has {data.shape[0]} rows, need {K + n_new}")
    idx = _rng(seed).permutation(data.shape[0])
    return data[idx[:K]], data[idx[K:K + n_new]]
