"""Error metrics, binarization and divergence bounds."""
from __future__ import annotations

import csv
import enum
import io
import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, PreconditionError, ShapeError

CSV_COLUMNS = ("experiment", "beta", "D", "K", "Y", "query_class",
               "metric_name", "value", "stderr", "seed")


def _pairs(exact, approx, name):
    a = np.asarray(exact, dtype=np.float64)
    b = np.asarray(approx, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"{name}: shapes differ, {a.shape} vs {b.shape}")
    if a.ndim == 0 or a.shape[0] == 0:
        raise PreconditionError(f"{name}: need at least one query")
    return a, b


def mae_energy(exact, approx) -> float:
    """Mean absolute difference between paired energies."""
    a, b = _pairs(exact, approx, "mae_energy")
    if a.ndim != 1:
        raise ShapeError(f"mae_energy expects 1-D lists, got shape {a.shape}")
    return float(np.mean(np.abs(a - b)))


def mae_gradient(exact, approx) -> float:
    """Mean over queries of the L2 norm of the gradient difference."""
    a, b = _pairs(exact, approx, "mae_gradient")
    if a.ndim != 2:
        raise ShapeError(f"mae_gradient expects (n, D) arrays, got shape {a.shape}")
    return float(np.mean(np.linalg.norm(a - b, axis=1)))


def binarize(x) -> np.ndarray:
    """Round each entry to 0 or 1/sqrt(D); ties at 1/(2 sqrt(D)) go up."""
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise DomainError("binarize needs finite entries")
    D = x.shape[-1]
    hi = 1.0 / math.sqrt(D)
    return np.where(x >= 0.5 * hi, hi, 0.0)


def hamming_error(a, b) -> float:
    """Fraction of differing bits after binarization, in [0, 1]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ShapeError(f"hamming_error needs two equal-length vectors, got {a.shape} and {b.shape}")
    # count bits rather than summing 1/sqrt(D) steps so one flip is exactly 1/D
    return int(np.count_nonzero(binarize(a) != binarize(b))) / a.shape[0]


def random_guess_baseline(exact_values, approx_fn, sample_fn, seed) -> float:
    """MAE between reference values and approximations at unrelated queries.

    Parameters
    ----------
    exact_values : array_like
        Exact energies (n,) or gradients (n, D) at the reference queries.
    approx_fn : callable
        Maps a query batch to approximate values with the same shape.
    sample_fn : callable
        ``sample_fn(n, rng)`` draws a fresh query set from the reference
        distribution.
    seed : int or SeedSequence
        Seed for the fresh sample.
    """
    ref = np.asarray(exact_values, dtype=np.float64)
    if ref.ndim == 0 or ref.shape[0] == 0:
        raise PreconditionError("random_guess_baseline needs a non-empty reference set")
    rng = np.random.default_rng(seed)
    fresh = sample_fn(ref.shape[0], rng)
    guess = np.asarray(approx_fn(fresh), dtype=np.float64)
    return mae_energy(ref, guess) if ref.ndim == 1 else mae_gradient(ref, guess)


def aggregate_baseline(values) -> float:
    """Reduce ``{(beta, Y): baseline}``: mean over Y for each beta, then max over beta."""
    if not values:
        raise PreconditionError("no baseline values to aggregate")
    by_beta: dict = {}
    for (beta, _Y), v in values.items():
        by_beta.setdefault(beta, []).append(v)
    return float(max(np.mean(v) for v in by_beta.values()))


class BoundKind(enum.Enum):
    THEOREM = "theorem"
    COROLLARY = "corollary"


@dataclass(frozen=True)
class BoundParams:
    C1: float
    beta: float
    K: int
    D: int
    Y: int
    L: int
    E0: float
    eta: float | None = None
    C2: float | None = None

    def __post_init__(self):
        if not self.C1 > 0:
            raise DomainError(f"C1 must be positive, got {self.C1}")
        for name in ("beta",):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")
        for name in ("K", "D", "Y", "L"):
            if int(getattr(self, name)) < 1:
                raise DomainError(f"{name} must be a positive count")

    @property
    def lipschitz_factor(self) -> float:
        """``1 + 2 K beta exp(beta / 2)``."""
        return 1.0 + 2.0 * self.K * self.beta * math.exp(self.beta / 2)

    def corollary_eta(self) -> float:
        if self.C2 is None:
            raise PreconditionError("corollary step size needs C2")
        return self.C2 / (self.L * self.lipschitz_factor)


def divergence_bound(p: BoundParams, which=BoundKind.THEOREM) -> float:
    """Upper bound on ``||x^(L) - x_hat^(L)||`` after L descent steps."""
    which = BoundKind(which)
    root = math.sqrt(p.D / p.Y)
    if which is BoundKind.COROLLARY:
        if p.C2 is None or not 0 < p.C2 < 1:
            raise DomainError(f"corollary bound needs 0 < C2 < 1, got {p.C2}")
        return p.C1 * p.C2 * math.exp(p.beta * (p.E0 - 0.5)) / (p.beta * (1 - p.C2)) * root
    if p.eta is None or not p.eta > 0:
        raise DomainError("theorem bound needs a positive eta")
    r = p.eta * p.L * p.lipschitz_factor
    if math.isclose(r, 1.0, rel_tol=1e-12):
        series = float(p.L)
    else:
        series = (1 - r ** p.L) / (1 - r)
    return 2 * p.eta * p.L * p.C1 * p.K * math.exp(p.beta * p.E0) * root * series


def calibrate_c1(exact_k, approx_k, Y: int, D: int, q: float = 99.0) -> float:
    """Empirical kernel-approximation constant: q-th percentile of ``|k - k_hat| sqrt(Y / D)``."""
    a, b = _pairs(exact_k, approx_k, "calibrate_c1")
    return float(np.percentile(np.abs(a - b).ravel(), q) * math.sqrt(Y / D))


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return "" if v is None else str(v)


def metric_row(experiment, beta, D, K, Y, query_class, metric_name, value,
               stderr=None, seed=None) -> dict:
    return dict(zip(CSV_COLUMNS, (experiment, beta, D, K, Y, query_class,
                                  metric_name, value, stderr, seed)))


def write_metric_rows(rows, dest) -> None:
    """Write metric rows (dicts keyed by ``CSV_COLUMNS``) with a header line."""
    def _write(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in CSV_COLUMNS])

    if isinstance(dest, io.TextIOBase):
        _write(dest)
    else:
        with open(os.fspath(dest), "w", newline="") as fh:
            _write(fh)


def read_metric_rows(src) -> list[dict]:
    with open(os.fspath(src), newline="") as fh:
        rd = csv.DictReader(fh)
        if tuple(rd.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"unexpected metric CSV header {rd.fieldnames}")
        return list(rd)
