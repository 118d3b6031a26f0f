"""Random feature maps approximating the RBF kernel ``exp(-beta/2 ||x - x'||^2)``.

Projection rows are a pure function of ``(seed, alpha)`` so they can be
regenerated on demand instead of stored. Inputs are scaled by ``sqrt(beta)``
before projection; there is no separate bandwidth parameter.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import _fallback
from .backend import kernels
from .errors import DomainError, ShapeError

_U64_MAX = 2**64 - 1


class Kind(enum.Enum):
    COS = "cos"
    SINCOS = "sincos"
    EXP = "exp"
    EXPEXP = "expexp"

    @property
    def code(self) -> int:
        return _CODES[self]

    @property
    def paired(self) -> bool:
        return self in (Kind.SINCOS, Kind.EXPEXP)

    @property
    def has_bias(self) -> bool:
        return self in (Kind.COS, Kind.EXP)

    @classmethod
    def parse(cls, value) -> "Kind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown basis kind {value!r}; expected one of "
                             f"{[k.value for k in cls]}") from None


_CODES = {Kind.COS: _fallback.COS, Kind.SINCOS: _fallback.SINCOS,
          Kind.EXP: _fallback.EXP, Kind.EXPEXP: _fallback.EXPEXP}
KIND_TAGS = {k: c for k, c in _CODES.items()}
TAG_KINDS = {c: k for k, c in _CODES.items()}


@dataclass(frozen=True)
class FeatureMapSpec:
    """Everything needed to reproduce a feature map.

    Attributes
    ----------
    kind : Kind
        Basis family.
    Y : int
        Number of random projections.
    D : int
        Input dimension.
    beta : float
        Inverse temperature; inputs are mapped ``x -> sqrt(beta) x``.
    seed : int
        Unsigned 64-bit generator key.
    orthogonal : bool
        Block-orthogonalize projection directions.
    """

    kind: Kind
    Y: int
    D: int
    beta: float
    seed: int = 0
    orthogonal: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind.parse(self.kind))
        if int(self.Y) < 1 or int(self.D) < 1:
            raise ValueError(f"Y and D must be positive, got Y={self.Y}, D={self.D}")
        if not (self.beta > 0 and np.isfinite(self.beta)):
            raise ValueError(f"beta must be a positive finite number, got {self.beta}")
        if not 0 <= int(self.seed) <= _U64_MAX:
            raise ValueError(f"seed must fit in 64 unsigned bits, got {self.seed}")
        object.__setattr__(self, "Y", int(self.Y))
        object.__setattr__(self, "D", int(self.D))
        object.__setattr__(self, "beta", float(self.beta))
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "orthogonal", bool(self.orthogonal))

    @property
    def y_eff(self) -> int:
        return 2 * self.Y if self.kind.paired else self.Y

    def replace(self, **changes) -> "FeatureMapSpec":
        fields = dict(kind=self.kind, Y=self.Y, D=self.D, beta=self.beta,
                      seed=self.seed, orthogonal=self.orthogonal)
        fields.update(changes)
        return FeatureMapSpec(**fields)


@dataclass(frozen=True)
class ProjectionRow:
    omega: np.ndarray
    bias: float


def _check_points(X, D, name="x") -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.shape[-1:] != (D,):
        raise ShapeError(f"{name} has trailing dimension {X.shape[-1:]} but the map expects D={D}")
    if not np.all(np.isfinite(X)):
        raise DomainError(f"{name} contains non-finite entries")
    return X


def _orthogonal_block(spec: FeatureMapSpec, block: int) -> np.ndarray:
    """All D directions of one orthogonal block, rescaled by chi-distributed norms."""
    D = spec.D
    alpha0 = block * D + 1
    gauss = kernels.normals(spec.seed, alpha0, D, D)
    q, r = np.linalg.qr(gauss.T)
    q *= np.where(np.diag(r) < 0, -1.0, 1.0)  # Gram-Schmidt sign convention
    norms = np.linalg.norm(kernels.normals(spec.seed, alpha0, D, D, _fallback.LANE_CHI), axis=1)
    return q.T * norms[:, None]


class FeatureMap:
    """Evaluator for a :class:`FeatureMapSpec`.

    By default projection rows are regenerated on every call (O(D + Y_eff)
    working storage for single points). ``materialize=True`` caches the
    full ``Y x D`` projection once, trading memory for speed; the cached
    rows are the same values the streaming path generates.
    """

    def __init__(self, spec: FeatureMapSpec, materialize: bool = False):
        self.spec = spec
        self._omega = None
        self._bias = None
        if materialize:
            self.materialize()

    @property
    def materialized(self) -> bool:
        return self._omega is not None

    @property
    def y_eff(self) -> int:
        return self.spec.y_eff

    def materialize(self) -> "FeatureMap":
        if self._omega is None:
            omega = np.empty((self.spec.Y, self.spec.D))
            bias = np.zeros(self.spec.Y)
            for start, om, b in self._generate_blocks():
                omega[start:start + om.shape[0]] = om
                bias[start:start + om.shape[0]] = b
            self._omega, self._bias = omega, bias
        return self

    # -- row generation ----------------------------------------------------

    def _generate_blocks(self):
        spec = self.spec
        if spec.orthogonal:
            step = spec.D
        else:
            step = _fallback.chunk_rows(spec.kind.code, spec.Y, spec.D)
        for start in range(0, spec.Y, step):
            b = min(step, spec.Y - start)
            if spec.orthogonal:
                omega = _orthogonal_block(spec, start // spec.D)[:b]
            else:
                omega = kernels.normals(spec.seed, start + 1, b, spec.D)
            bias = kernels.biases(spec.seed, start + 1, b) if spec.kind.has_bias else np.zeros(b)
            yield start, omega, bias

    def blocks(self):
        """Yield ``(start_row, omega_block, bias_block)`` covering all Y rows."""
        if self._omega is not None:
            yield 0, self._omega, self._bias
        else:
            yield from self._generate_blocks()

    def _streams(self) -> bool:
        return self._omega is None and not self.spec.orthogonal

    def row(self, alpha: int) -> ProjectionRow:
        spec = self.spec
        if not 1 <= alpha <= spec.Y:
            raise IndexError(f"projection index {alpha} outside 1..{spec.Y}")
        if self._omega is not None:
            return ProjectionRow(self._omega[alpha - 1].copy(), float(self._bias[alpha - 1]))
        if spec.orthogonal:
            block = (alpha - 1) // spec.D
            omega = _orthogonal_block(spec, block)[(alpha - 1) - block * spec.D]
        else:
            omega = kernels.normals(spec.seed, alpha, 1, spec.D)[0]
        bias = float(kernels.biases(spec.seed, alpha, 1)[0]) if spec.kind.has_bias else 0.0
        return ProjectionRow(np.ascontiguousarray(omega), bias)

    # -- evaluation ----------------------------------------------------------

    def transform(self, X) -> np.ndarray:
        """Feature vectors of each row of ``X`` (shape (n, D) or (D,))."""
        X = _check_points(X, self.spec.D)
        single = X.ndim == 1
        U = np.sqrt(self.spec.beta) * np.atleast_2d(X)
        spec = self.spec
        if single and self._streams():
            return kernels.stream_features(spec.kind.code, spec.seed, spec.Y, np.ascontiguousarray(U[0]))
        m = 2 if spec.kind.paired else 1
        out = np.empty((U.shape[0], spec.y_eff))
        sq = np.einsum("ij,ij->i", U, U)
        for start, omega, bias in self.blocks():
            b = omega.shape[0]
            out[:, m * start:m * (start + b)] = _fallback.block_features(
                spec.kind.code, U @ omega.T, bias, sq, spec.Y)
        return out[0] if single else out

    def inner_and_grad(self, X, T):
        """``s = <phi(x), T>`` and ``d s / d x`` for each row of ``X``.

        Returns ``(s, z)``; for a single point ``s`` is a float and ``z`` a
        (D,) vector, otherwise shapes (n,) and (n, D).
        """
        X = _check_points(X, self.spec.D)
        T = np.ascontiguousarray(T, dtype=np.float64)
        if T.shape != (self.spec.y_eff,):
            raise ShapeError(f"T has shape {T.shape}, expected ({self.spec.y_eff},)")
        spec = self.spec
        root = np.sqrt(spec.beta)
        single = X.ndim == 1
        U = root * np.atleast_2d(X)
        if single and self._streams():
            s, z = kernels.stream_energy_grad(spec.kind.code, spec.seed, spec.Y,
                                              np.ascontiguousarray(U[0]), T)
            z *= root
            return float(s), z
        m = 2 if spec.kind.paired else 1
        n = U.shape[0]
        s = np.zeros(n)
        z = np.zeros((n, spec.D))
        sq = np.einsum("ij,ij->i", U, U)
        for start, omega, bias in self.blocks():
            b = omega.shape[0]
            sb, C = _fallback.block_grad(spec.kind.code, U @ omega.T, bias, sq,
                                         T[m * start:m * (start + b)], spec.Y)
            s += sb
            z += C @ omega
        z = _fallback.finish_grad(spec.kind.code, U, s, z) * root
        return (float(s[0]), z[0]) if single else (s, z)

    def consolidate(self, X, with_R: bool = False):
        """Return ``T = sum_mu phi(x_mu)`` and optionally ``R = sum_mu phi(x_mu) x_mu^T``."""
        X = np.ascontiguousarray(np.atleast_2d(_check_points(X, self.spec.D)))
        spec = self.spec
        T = np.zeros(spec.y_eff)
        R = np.zeros((spec.y_eff, spec.D)) if with_R else None
        if X.shape[0] == 0:
            return T, R
        U = np.ascontiguousarray(np.sqrt(spec.beta) * X)
        if self._streams():
            kernels.stream_consolidate(spec.kind.code, spec.seed, spec.Y, U, T, R, X if with_R else None)
            return T, R
        m = 2 if spec.kind.paired else 1
        sq = np.einsum("ij,ij->i", U, U)
        for start, omega, bias in self.blocks():
            b = omega.shape[0]
            F = _fallback.block_features(spec.kind.code, U @ omega.T, bias, sq, spec.Y)
            sl = slice(m * start, m * (start + b))
            T[sl] += np.ascontiguousarray(F.T).sum(axis=1)
            if with_R:
                R[sl] += F.T @ X
        return T, R


def as_feature_map(spec_or_map) -> FeatureMap:
    if isinstance(spec_or_map, FeatureMap):
        return spec_or_map
    if isinstance(spec_or_map, FeatureMapSpec):
        return FeatureMap(spec_or_map)
    raise TypeError(f"expected FeatureMapSpec or FeatureMap, got {type(spec_or_map).__name__}")


def projection_row(spec, alpha: int) -> ProjectionRow:
    """Projection vector and bias of row ``alpha`` (1-based)."""
    return as_feature_map(spec).row(alpha)


def featurize(spec, x) -> np.ndarray:
    """Feature vector of a single pattern ``x``."""
    fmap = as_feature_map(spec)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError(f"featurize expects one pattern, got shape {x.shape}")
    return fmap.transform(x)


def kernel_estimate(spec, x, x2) -> float:
    fmap = as_feature_map(spec)
    return float(featurize(fmap, x) @ featurize(fmap, x2))


def rbf_kernel(x, x2, beta: float) -> float:
    d = np.asarray(x, dtype=np.float64) - np.asarray(x2, dtype=np.float64)
    return float(np.exp(-0.5 * beta * (d @ d)))


# E[exp(2b)] for b ~ U(0, 2 pi): the constant by which the Exp basis, whose
# bias enters inside the exponential, overestimates the kernel in expectation.
EXP_BIAS_FACTOR = float(np.expm1(4 * np.pi) / (4 * np.pi))
