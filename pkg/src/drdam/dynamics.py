"""Energy-descent retrieval on either representation."""
from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field

import numpy as np

from .distributed import (ClipConfig, DistributedMemory, energy_grad_approx,
                          energy_grad_specialized)
from .errors import DescentError, PreconditionError, ShapeError
from .exact import EnergySpec, MemoryMatrix, Normalization, energy_grad_exact
from .features import FeatureMap


@dataclass(frozen=True)
class DescentConfig:
    eta: float = 0.1
    max_steps: int = 1000
    epsilon_conv: float = 1e-8
    clamp_mask: np.ndarray | None = None

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if int(self.max_steps) < 1:
            raise ValueError(f"max_steps must be positive, got {self.max_steps}")
        if not self.epsilon_conv > 0:
            raise ValueError(f"epsilon_conv must be positive, got {self.epsilon_conv}")
        if self.clamp_mask is not None:
            object.__setattr__(self, "clamp_mask", np.asarray(self.clamp_mask, dtype=bool))


@dataclass
class Trajectory:
    """Result of one descent.

    With ``recorded=False`` only the initial and final states are kept,
    together with the last two energies (the pair the convergence test used).
    """

    states: list = field(default_factory=list)
    energies: list = field(default_factory=list)
    converged: bool = False
    steps_taken: int = 0
    recorded: bool = True

    @property
    def initial(self) -> np.ndarray:
        return self.states[0]

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    @property
    def final_energy(self) -> float:
        return self.energies[-1]

    def state_at(self, step: int) -> np.ndarray:
        if not self.recorded:
            raise PreconditionError("trajectory was run without trace recording")
        if not 0 <= step < len(self.states):
            raise IndexError(f"step {step} outside 0..{len(self.states) - 1}")
        return self.states[step]


class ExactModel:
    """Memory-representation evaluator."""

    def __init__(self, spec: EnergySpec, mem):
        self.spec = spec
        self.mem = mem if isinstance(mem, MemoryMatrix) else MemoryMatrix(mem)
        self.D = self.mem.D

    def energy_grad(self, X):
        return energy_grad_exact(self.spec, self.mem, X)


class DistributedModel:
    """Distributed-representation evaluator.

    ``path="generic"`` differentiates the approximate energy (works for any
    basis and normalization); ``path="specialized"`` uses the softmax-form
    L2 gradient and needs ``dm.R``.
    """

    def __init__(self, dm: DistributedMemory, clip: ClipConfig | None = None,
                 path: str = "generic", normalization=Normalization.IDENTITY,
                 fmap: FeatureMap | None = None):
        if path not in ("generic", "specialized"):
            raise ValueError(f"unknown gradient path {path!r}")
        if path == "specialized" and dm.R is None:
            raise PreconditionError("specialized path needs a memory built with R")
        self.dm = dm
        self.clip = clip or ClipConfig()
        self.path = path
        self.normalization = Normalization(normalization)
        self.fmap = fmap
        self.D = dm.D

    def energy_grad(self, X):
        if self.path == "specialized":
            return energy_grad_specialized(self.dm, X, self.clip.epsilon_log, self.fmap)
        return energy_grad_approx(self.dm, self.clip, X, self.normalization, self.fmap)


def _mask(cfg: DescentConfig, D: int):
    if cfg.clamp_mask is None:
        return None
    mask = cfg.clamp_mask
    if mask.shape[-1] != D:
        raise ShapeError(f"clamp mask has length {mask.shape[-1]}, expected {D}")
    return mask


def descend_many(model, X0, cfg: DescentConfig, record_trace: bool = False) -> list[Trajectory]:
    """Run independent descents for every row of ``X0``, evaluating the active rows together.

    ``cfg.clamp_mask`` may be (D,) shared by all rows or (n, D).
    """
    X = np.array(np.atleast_2d(X0), dtype=np.float64)
    n, D = X.shape
    if D != model.D:
        raise ShapeError(f"initial states have D={D}, model expects {model.D}")
    mask = _mask(cfg, D)
    if mask is not None:
        mask = np.broadcast_to(mask, (n, D))
    E, G = model.energy_grad(X)
    E, G = np.atleast_1d(np.asarray(E, dtype=np.float64)), np.atleast_2d(G)
    if not (np.all(np.isfinite(E)) and np.all(np.isfinite(G))):
        raise DescentError("non-finite energy or gradient at the initial state", 0)
    trajs = [Trajectory(states=[X[i].copy()], energies=[float(E[i])], recorded=record_trace)
             for i in range(n)]
    last = [X[i].copy() for i in range(n)]
    prev_E = E.copy()
    active = np.arange(n)
    for step in range(1, int(cfg.max_steps) + 1):
        if active.size == 0:
            break
        Ga = G
        if mask is not None:
            Ga = np.where(mask[active], 0.0, Ga)
        Xa = X[active] - cfg.eta * Ga
        if mask is not None:
            Xa = np.where(mask[active], X[active], Xa)
        X[active] = Xa
        Ea, Gn = model.energy_grad(Xa)
        Ea, Gn = np.atleast_1d(np.asarray(Ea, dtype=np.float64)), np.atleast_2d(Gn)
        if not (np.all(np.isfinite(Ea)) and np.all(np.isfinite(Gn))):
            raise DescentError("non-finite energy or gradient during descent", step)
        done = np.abs(Ea - prev_E[active]) < cfg.epsilon_conv
        for j, i in enumerate(active):
            t = trajs[i]
            t.steps_taken = step
            if record_trace:
                t.states.append(Xa[j].copy())
                t.energies.append(float(Ea[j]))
            else:
                last[i] = Xa[j].copy()
                t.energies = [float(prev_E[i]), float(Ea[j])]
            if done[j]:
                t.converged = True
        prev_E[active] = Ea
        keep = ~done
        active = active[keep]
        G = Gn[keep]
    if not record_trace:
        for i, t in enumerate(trajs):
            t.states = [t.states[0], last[i]]
            if len(t.energies) == 1:
                t.energies = [t.energies[0], t.energies[0]]
    return trajs


def descend(model, x0, cfg: DescentConfig, record_trace: bool = False) -> Trajectory:
    """Gradient descent ``x <- x - eta grad E(x)`` until ``|dE| < epsilon_conv`` or ``max_steps``."""
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.ndim != 1:
        raise ShapeError(f"descend expects one initial state, got shape {x0.shape}")
    return descend_many(model, x0[None, :], cfg, record_trace)[0]


def divergence(traj_a: Trajectory, traj_b: Trajectory, step: int | None = None) -> float:
    """``||x_a - x_b||`` at ``step`` (default: last step both trajectories reached).

    Without recorded traces only the final states can be compared.
    """
    if traj_a.final.shape != traj_b.final.shape:
        raise ShapeError(f"trajectories have different D: {traj_a.final.shape} vs {traj_b.final.shape}")
    if step is None:
        if traj_a.recorded and traj_b.recorded:
            step = min(len(traj_a.states), len(traj_b.states)) - 1
        else:
            return float(np.linalg.norm(traj_a.final - traj_b.final))
    return float(np.linalg.norm(traj_a.state_at(step) - traj_b.state_at(step)))


def fixed_point_divergence(traj_a: Trajectory, traj_b: Trajectory) -> float:
    """Distance between each trajectory's own final state."""
    if traj_a.final.shape != traj_b.final.shape:
        raise ShapeError("trajectories have different D")
    return float(np.linalg.norm(traj_a.final - traj_b.final))


def write_energy_trace(traj: Trajectory, dest) -> None:
    """Write ``step,energy`` rows for a recorded trajectory."""
    if not traj.recorded:
        raise PreconditionError("trajectory was run without trace recording")

    def _write(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "energy"])
        for t, e in enumerate(traj.energies):
            w.writerow([t, repr(float(e))])

    if isinstance(dest, io.TextIOBase):
        _write(dest)
    else:
        with open(os.fspath(dest), "w", newline="") as fh:
            _write(fh)
