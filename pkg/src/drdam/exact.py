"""Exact log-sum-exp Dense Associative Memory over an explicit memory matrix."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, PreconditionError, ShapeError


class Similarity(enum.Enum):
    L2 = "l2"
    DOT = "dot"


class Normalization(enum.Enum):
    IDENTITY = "identity"
    L2_NORMALIZE = "l2normalize"


@dataclass(frozen=True)
class EnergySpec:
    similarity: Similarity = Similarity.L2
    beta: float = 1.0
    normalization: Normalization = Normalization.IDENTITY

    def __post_init__(self):
        object.__setattr__(self, "similarity", Similarity(self.similarity))
        object.__setattr__(self, "normalization", Normalization(self.normalization))
        if not (self.beta > 0 and np.isfinite(self.beta)):
            raise ValueError(f"beta must be a positive finite number, got {self.beta}")
        object.__setattr__(self, "beta", float(self.beta))


class MemoryMatrix:
    """Immutable K x D stack of stored patterns."""

    def __init__(self, rows, D: int | None = None):
        rows = np.array(rows, dtype=np.float64, copy=True)
        if rows.size == 0:
            if D is None:
                D = rows.shape[-1] if rows.ndim == 2 else None
            if D is None:
                raise ShapeError("cannot infer D for an empty memory; pass D explicitly")
            rows = np.empty((0, D))
        if rows.ndim != 2:
            raise ShapeError(f"memory must be 2-D (K, D), got shape {rows.shape}")
        if D is not None and rows.shape[1] != D:
            raise ShapeError(f"memory rows have length {rows.shape[1]}, expected {D}")
        if not np.all(np.isfinite(rows)):
            raise DomainError("memory contains non-finite entries")
        rows.flags.writeable = False
        self._rows = rows

    @classmethod
    def empty(cls, D: int) -> "MemoryMatrix":
        return cls(np.empty((0, D)), D=D)

    @property
    def rows(self) -> np.ndarray:
        return self._rows

    @property
    def K(self) -> int:
        return self._rows.shape[0]

    @property
    def D(self) -> int:
        return self._rows.shape[1]

    def __len__(self):
        return self.K

    def __repr__(self):
        return f"MemoryMatrix(K={self.K}, D={self.D})"


def add_memory_exact(mem: MemoryMatrix, xi) -> MemoryMatrix:
    """Return a new memory with ``xi`` appended; ``mem`` is left untouched."""
    xi = np.asarray(xi, dtype=np.float64)
    if xi.shape != (mem.D,):
        raise ShapeError(f"pattern has shape {xi.shape}, memory expects ({mem.D},)")
    return MemoryMatrix(np.vstack([mem.rows, xi[None, :]]), D=mem.D)


def _logsumexp_softmax(a):
    """Row-wise max-shifted log-sum-exp and softmax from the same shifted exponents."""
    amax = a.max(axis=1, keepdims=True)
    e = np.exp(a - amax)
    total = e.sum(axis=1, keepdims=True)
    return (amax + np.log(total))[:, 0], e / total


def normalize(spec_norm: Normalization, X):
    """Apply ``g`` row-wise; returns ``(g(X), norms)`` (norms is None for identity)."""
    if spec_norm is Normalization.IDENTITY:
        return X, None
    norms = np.linalg.norm(X, axis=1)
    if np.any(norms == 0):
        raise DomainError("L2 normalization is singular at x = 0")
    return X / norms[:, None], norms


def normalize_jvp(spec_norm: Normalization, G, V, norms):
    """``V @ dg/dx`` for each row; the Jacobian of ``g`` is symmetric."""
    if spec_norm is Normalization.IDENTITY:
        return V
    proj = np.einsum("ij,ij->i", G, V)
    return (V - G * proj[:, None]) / norms[:, None]


def sq_distances(X, Xi, budget: int = 1 << 22) -> np.ndarray:
    """Squared distances (n, K) from explicit differences, chunked over queries."""
    n, K = X.shape[0], Xi.shape[0]
    out = np.empty((n, K))
    step = max(1, budget // max(1, K * Xi.shape[1]))
    for i in range(0, n, step):
        d = X[i:i + step, None, :] - Xi[None, :, :]
        out[i:i + step] = np.einsum("ijk,ijk->ij", d, d)
    return out


def _prepare(spec, mem, X):
    if not isinstance(mem, MemoryMatrix):
        mem = MemoryMatrix(mem)
    if mem.K == 0:
        raise PreconditionError("energy of an empty memory is undefined")
    X = np.asarray(X, dtype=np.float64)
    if X.shape[-1:] != (mem.D,) or X.ndim > 2:
        raise ShapeError(f"query has shape {X.shape}, memory expects D={mem.D}")
    if not np.all(np.isfinite(X)):
        raise DomainError("query contains non-finite entries")
    return mem, X


def energy_grad_exact(spec: EnergySpec, mem, X):
    """Energies and gradients for one pattern (D,) or a batch (n, D)."""
    mem, X = _prepare(spec, mem, X)
    single = X.ndim == 1
    X2 = np.atleast_2d(X)
    Xi = mem.rows
    G, norms = normalize(spec.normalization, X2)
    beta = spec.beta
    if spec.similarity is Similarity.L2:
        a = -0.5 * beta * sq_distances(G, Xi)
    else:
        a = beta * (G @ Xi.T)
    lse, p = _logsumexp_softmax(a)
    E = -lse / beta
    grad_g = (G - p @ Xi) if spec.similarity is Similarity.L2 else -(p @ Xi)
    grad = normalize_jvp(spec.normalization, G, grad_g, norms)
    return (float(E[0]), grad[0]) if single else (E, grad)


def energy_exact(spec: EnergySpec, mem, x):
    return energy_grad_exact(spec, mem, x)[0]


def grad_exact(spec: EnergySpec, mem, x):
    return energy_grad_exact(spec, mem, x)[1]


def softmax_weights(spec: EnergySpec, mem, x) -> np.ndarray:
    """Attention weights over memories at ``x`` (the softmax inside the gradient)."""
    mem, x = _prepare(spec, mem, x)
    X2 = np.atleast_2d(x)
    G, _ = normalize(spec.normalization, X2)
    if spec.similarity is Similarity.L2:
        a = -0.5 * spec.beta * sq_distances(G, mem.rows)
    else:
        a = spec.beta * (G @ mem.rows.T)
    p = _logsumexp_softmax(a)[1]
    return p[0] if x.ndim == 1 else p
