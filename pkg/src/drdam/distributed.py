"""Distributed (random-feature) representation of a Dense Associative Memory.

All stored patterns are folded into a single feature-space vector ``T``
whose size depends only on the feature map, never on how many patterns
were inserted. An optional companion ``R`` (Y_eff x D) supports the
softmax-form gradient of the L2 energy.
"""
from __future__ import annotations

import io
import os
import struct
import tracemalloc
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, PreconditionError, ShapeError
from .exact import Normalization, normalize, normalize_jvp
from .features import (KIND_TAGS, TAG_KINDS, FeatureMap, FeatureMapSpec, Kind,
                       as_feature_map)


@dataclass(frozen=True)
class ClipConfig:
    """Floor applied to the argument of the log in the approximate energy."""

    epsilon_log: float = 1e-12

    def __post_init__(self):
        if not self.epsilon_log > 0:
            raise ValueError(f"epsilon_log must be positive, got {self.epsilon_log}")


class DistributedMemory:
    """Consolidated memory ``T = sum_mu phi(xi_mu)`` with its feature map spec."""

    def __init__(self, spec: FeatureMapSpec, T=None, K: int = 0, R=None):
        self.spec = spec
        self.T = np.zeros(spec.y_eff) if T is None else np.array(T, dtype=np.float64)
        if self.T.shape != (spec.y_eff,):
            raise ShapeError(f"T has shape {self.T.shape}, spec implies ({spec.y_eff},)")
        if R is not None:
            R = np.array(R, dtype=np.float64)
            if R.shape != (spec.y_eff, spec.D):
                raise ShapeError(f"R has shape {R.shape}, expected ({spec.y_eff}, {spec.D})")
        self.R = R
        self.K = int(K)

    @property
    def with_R(self) -> bool:
        return self.R is not None

    @property
    def D(self) -> int:
        return self.spec.D

    @property
    def beta(self) -> float:
        return self.spec.beta

    def copy(self) -> "DistributedMemory":
        return DistributedMemory(self.spec, self.T.copy(), self.K,
                                 None if self.R is None else self.R.copy())

    def insert(self, xi, fmap: FeatureMap | None = None) -> None:
        """Add one pattern in place. Callers must hold exclusive access."""
        fmap = as_feature_map(self.spec if fmap is None else fmap)
        xi = np.asarray(xi, dtype=np.float64)
        if xi.shape != (self.spec.D,):
            raise ShapeError(f"pattern has shape {xi.shape}, memory expects ({self.spec.D},)")
        t, r = fmap.consolidate(xi[None, :], with_R=self.with_R)
        self.T += t
        if self.with_R:
            self.R += r
        self.K += 1

    def __repr__(self):
        return (f"DistributedMemory(kind={self.spec.kind.value}, Y={self.spec.Y}, "
                f"D={self.spec.D}, K={self.K}, with_R={self.with_R})")


def proc_mems(spec, memories, with_R: bool = False) -> DistributedMemory:
    """Consolidate a list of patterns into a new distributed memory.

    ``spec`` may be a :class:`FeatureMapSpec` (rows regenerated on demand)
    or a :class:`FeatureMap` (possibly with a cached projection).
    """
    fmap = as_feature_map(spec)
    X = np.asarray(memories, dtype=np.float64)
    if X.size == 0:
        return DistributedMemory(fmap.spec, K=0,
                                 R=np.zeros((fmap.y_eff, fmap.spec.D)) if with_R else None)
    X = np.atleast_2d(X)
    if X.shape[1] != fmap.spec.D:
        raise ShapeError(f"patterns have length {X.shape[1]}, map expects D={fmap.spec.D}")
    T, R = fmap.consolidate(X, with_R=with_R)
    return DistributedMemory(fmap.spec, T, X.shape[0], R)


def add_memory_distributed(dm: DistributedMemory, xi, fmap: FeatureMap | None = None) -> DistributedMemory:
    """Return a copy of ``dm`` with ``xi`` added; cost does not depend on ``dm.K``."""
    out = dm.copy()
    out.insert(xi, fmap)
    return out


def _require_memories(dm: DistributedMemory):
    if dm.K < 1:
        raise PreconditionError("distributed memory is empty (K=0)")


def _map_for(dm, fmap):
    if fmap is None:
        return FeatureMap(dm.spec)
    if fmap.spec != dm.spec:
        raise ValueError("feature map does not match the memory's spec")
    return fmap


def energy_grad_approx(dm: DistributedMemory, clip: ClipConfig, X,
                       normalization: Normalization = Normalization.IDENTITY,
                       fmap: FeatureMap | None = None):
    """Approximate energy and its exact gradient, for one pattern or a batch.

    Where the clip is active the energy is the constant ``-log(eps)/beta``
    and the gradient is zero.
    """
    _require_memories(dm)
    fmap = _map_for(dm, fmap)
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    X2 = np.atleast_2d(X)
    G, norms = normalize(Normalization(normalization), X2)
    s, z = fmap.inner_and_grad(G[0] if single else G, dm.T)
    s, z = np.atleast_1d(s), np.atleast_2d(z)
    beta = dm.spec.beta
    active = s > clip.epsilon_log
    E = -np.log(np.where(active, s, clip.epsilon_log)) / beta
    grad_g = np.where(active[:, None], -z / (beta * np.where(active, s, 1.0))[:, None], 0.0)
    grad = normalize_jvp(Normalization(normalization), G, grad_g, norms)
    return (float(E[0]), grad[0]) if single else (E, grad)


def energy_approx(dm: DistributedMemory, clip: ClipConfig, x,
                  normalization: Normalization = Normalization.IDENTITY,
                  fmap: FeatureMap | None = None):
    _require_memories(dm)
    fmap = _map_for(dm, fmap)
    X = np.asarray(x, dtype=np.float64)
    G, _ = normalize(Normalization(normalization), np.atleast_2d(X))
    Phi = fmap.transform(G[0] if X.ndim == 1 else G)
    s = np.atleast_1d(Phi @ dm.T)
    E = -np.log(np.maximum(s, clip.epsilon_log)) / dm.spec.beta
    return float(E[0]) if X.ndim == 1 else E


def grad_comp(dm: DistributedMemory, clip: ClipConfig, x,
              normalization: Normalization = Normalization.IDENTITY,
              fmap: FeatureMap | None = None):
    """Gradient of the approximate energy, streamed over projection rows."""
    return energy_grad_approx(dm, clip, x, normalization, fmap)[1]


def energy_grad_specialized(dm: DistributedMemory, X, epsilon_denominator: float = 1e-12,
                            fmap: FeatureMap | None = None):
    """Softmax-form approximate gradient of the L2 energy, ``x - phi R / <phi, T>``.

    Also returns the approximate energy from the same inner product. Where
    ``<phi, T> <= epsilon_denominator`` the energy is clipped and the gradient
    is zero.
    """
    _require_memories(dm)
    if dm.R is None:
        raise PreconditionError("specialized L2 gradient needs the companion tensor R")
    fmap = _map_for(dm, fmap)
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    X2 = np.atleast_2d(X)
    Phi = np.atleast_2d(fmap.transform(X2[0] if single else X2))
    s = Phi @ dm.T
    active = s > epsilon_denominator
    den = np.where(active, s, 1.0)
    # same rule as the generic path: no descent direction where the clip is active
    grad = np.where(active[:, None], X2 - (Phi @ dm.R) / den[:, None], 0.0)
    E = -np.log(np.where(active, s, epsilon_denominator)) / dm.spec.beta
    return (float(E[0]), grad[0]) if single else (E, grad)


def grad_l2_specialized(dm: DistributedMemory, x, epsilon_denominator: float = 1e-12,
                        fmap: FeatureMap | None = None):
    return energy_grad_specialized(dm, x, epsilon_denominator, fmap)[1]


def dense_jacobian(spec: FeatureMapSpec, y) -> np.ndarray:
    """Full (Y_eff, D) Jacobian ``d phi(y) / d y`` from a materialized projection.

    Reference implementation; needs O(Y D) memory.
    """
    fmap = FeatureMap(spec, materialize=True)
    omega, bias = fmap._omega, fmap._bias
    y = np.asarray(y, dtype=np.float64)
    root = np.sqrt(spec.beta)
    u = root * y
    p = omega @ u
    Y = spec.Y
    J = np.empty((spec.y_eff, spec.D))
    if spec.kind is Kind.COS:
        J[:] = (-np.sqrt(2.0 / Y) * np.sin(p + bias))[:, None] * omega * root
    elif spec.kind is Kind.SINCOS:
        J[0::2] = (-np.sin(p) / np.sqrt(Y))[:, None] * omega * root
        J[1::2] = (np.cos(p) / np.sqrt(Y))[:, None] * omega * root
    elif spec.kind is Kind.EXP:
        phi = np.exp(p + bias - u @ u) / np.sqrt(Y)
        J[:] = phi[:, None] * (root * omega - 2.0 * spec.beta * y[None, :])
    else:
        pref = np.exp(-(u @ u)) / np.sqrt(2.0 * Y)
        J[0::2] = (pref * np.exp(p))[:, None] * (root * omega - 2.0 * spec.beta * y[None, :])
        J[1::2] = (pref * np.exp(-p))[:, None] * (-root * omega - 2.0 * spec.beta * y[None, :])
    return J


def grad_dense_reference(dm: DistributedMemory, clip: ClipConfig, x,
                         normalization: Normalization = Normalization.IDENTITY):
    """``grad_comp`` computed by materializing the whole feature Jacobian."""
    _require_memories(dm)
    x = np.asarray(x, dtype=np.float64)
    G, norms = normalize(Normalization(normalization), x[None, :])
    fmap = FeatureMap(dm.spec, materialize=True)
    s = float(fmap.transform(G[0]) @ dm.T)
    if s <= clip.epsilon_log:
        return np.zeros_like(x)
    J = dense_jacobian(dm.spec, G[0])
    grad_g = -(J.T @ dm.T) / (dm.spec.beta * s)
    return normalize_jvp(Normalization(normalization), G, grad_g[None, :], norms)[0]


def workspace_peak(fn, *args, **kwargs):
    """Run ``fn`` and return ``(result, peak_words)``.

    ``peak_words`` is the peak of newly traced allocations during the call,
    in 8-byte words, as reported by :mod:`tracemalloc` (numpy buffers and
    the compiled kernels' scratch both register there).
    """
    was_tracing = tracemalloc.is_tracing()
    if not was_tracing:
        tracemalloc.start()
    try:
        base = tracemalloc.get_traced_memory()[0]
        tracemalloc.reset_peak()
        result = fn(*args, **kwargs)
        peak = tracemalloc.get_traced_memory()[1]
    finally:
        if not was_tracing:
            tracemalloc.stop()
    return result, max(0, peak - base) / 8.0


# ---------------------------------------------------------------------------
# DRDAM1 binary format

MAGIC = b"DRDAM1"
_HEADER = struct.Struct("<6sQQBdQBQB")
HEADER_SIZE = _HEADER.size
# byte offsets of header fields, for error reporting
_OFF_D, _OFF_Y, _OFF_KIND, _OFF_BETA, _OFF_SEED, _OFF_ORTH, _OFF_K, _OFF_R = 6, 14, 22, 23, 31, 39, 40, 48


def to_bytes(dm: DistributedMemory) -> bytes:
    spec = dm.spec
    header = _HEADER.pack(MAGIC, spec.D, spec.Y, KIND_TAGS[spec.kind], spec.beta, spec.seed,
                          int(spec.orthogonal), dm.K, int(dm.with_R))
    parts = [header, dm.T.astype("<f8").tobytes()]
    if dm.with_R:
        parts.append(np.ascontiguousarray(dm.R).astype("<f8").tobytes())
    return b"".join(parts)


def from_bytes(data: bytes) -> DistributedMemory:
    if len(data) < len(MAGIC) or data[:len(MAGIC)] != MAGIC:
        raise FormatError("bad magic; not a DRDAM1 file", 0)
    if len(data) < HEADER_SIZE:
        raise FormatError(f"truncated header ({len(data)} of {HEADER_SIZE} bytes)", len(data))
    _, D, Y, tag, beta, seed, orth, K, with_R = _HEADER.unpack_from(data)
    if D < 1:
        raise FormatError("D must be positive", _OFF_D)
    if Y < 1:
        raise FormatError("Y must be positive", _OFF_Y)
    if tag not in TAG_KINDS:
        raise FormatError(f"unknown kind tag {tag}", _OFF_KIND)
    if not (beta > 0 and np.isfinite(beta)):
        raise FormatError(f"beta must be positive, got {beta}", _OFF_BETA)
    if orth not in (0, 1):
        raise FormatError(f"orthogonal flag must be 0 or 1, got {orth}", _OFF_ORTH)
    if with_R not in (0, 1):
        raise FormatError(f"with_R flag must be 0 or 1, got {with_R}", _OFF_R)
    spec = FeatureMapSpec(TAG_KINDS[tag], Y, D, beta, seed, bool(orth))
    n_T = spec.y_eff
    n_R = spec.y_eff * D if with_R else 0
    expected = HEADER_SIZE + 8 * (n_T + n_R)
    if len(data) != expected:
        raise FormatError(f"payload size mismatch: file has {len(data)} bytes, header implies {expected}",
                          min(len(data), expected))
    T = np.frombuffer(data, dtype="<f8", count=n_T, offset=HEADER_SIZE).astype(np.float64)
    R = None
    if with_R:
        R = np.frombuffer(data, dtype="<f8", count=n_R,
                          offset=HEADER_SIZE + 8 * n_T).astype(np.float64).reshape(n_T, D)
    return DistributedMemory(spec, T, K, R)


def save_distributed(dm: DistributedMemory, path) -> None:
    data = to_bytes(dm)
    if isinstance(path, io.IOBase):
        path.write(data)
        return
    with open(os.fspath(path), "wb") as fh:
        fh.write(data)


def load_distributed(path) -> DistributedMemory:
    if isinstance(path, io.IOBase):
        return from_bytes(path.read())
    with open(os.fspath(path), "rb") as fh:
        return from_bytes(fh.read())
