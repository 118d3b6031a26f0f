"""Experiment configuration: JSON documents with per-experiment defaults."""
from __future__ import annotations

import dataclasses
import enum
import json
import os
from dataclasses import dataclass, field

from ..dynamics import DescentConfig


class Experiment(enum.Enum):
    KERNEL_ERR = "kernel-err"
    ENERGY_GRAD_ERR = "energy-grad-err"
    RETRIEVAL = "retrieve"
    IMAGE_COMPLETE = "image-complete"
    BASIS_ABLATION = "ablate-basis"
    CAPACITY_SWEEP = "capacity-sweep"
    BOUND_OVERLAY = "bound-overlay"


QUERY_CLASSES = ("at", "near", "random")
GRAD_PATHS = ("auto", "generic", "specialized")


@dataclass
class ExperimentConfig:
    experiment: Experiment
    beta: list = field(default_factory=lambda: [1.0, 10.0, 30.0])
    D: list = field(default_factory=lambda: [100])
    K: list = field(default_factory=lambda: [50])
    Y: list = field(default_factory=lambda: [2 ** 8, 2 ** 10, 2 ** 12, 2 ** 14])
    query_classes: list = field(default_factory=lambda: list(QUERY_CLASSES))
    n_queries: int | None = None          # None: one query per stored pattern
    flip_fraction: float = 0.1
    seeds: list = field(default_factory=lambda: [0])
    master_seed: int = 0
    kind: str = "sincos"
    kinds: list = field(default_factory=lambda: ["cos", "sincos", "exp", "expexp"])
    orthogonal: bool = False
    grad_path: str = "auto"
    eta: float = 0.1
    max_steps: int = 1000
    epsilon_conv: float = 1e-8
    # kernel-err
    n_pairs: int = 50
    # image-complete
    image_shape: list = field(default_factory=lambda: [32, 32, 3])
    occlusion_fraction: float = 0.4
    images: list = field(default_factory=list)   # pixmap paths; empty -> synthetic
    # ablate-basis
    dataset: str | None = None                     # pattern CSV; None -> bundled surrogate
    # bound-overlay
    C2: float = 0.5
    L: int = 20
    n_instances: int = 20
    calib_pairs: int = 200
    # i/o
    input_dir: str | None = None
    output_dir: str = "out"

    def __post_init__(self):
        self.experiment = Experiment(self.experiment)
        for name in ("beta", "D", "K", "Y", "seeds"):
            v = getattr(self, name)
            if not isinstance(v, (list, tuple)) or len(v) == 0:
                raise ValueError(f"config field {name!r} must be a non-empty list")
        self.beta = [float(b) for b in self.beta]
        self.D = [int(d) for d in self.D]
        self.K = [int(k) for k in self.K]
        self.Y = [int(y) for y in self.Y]
        self.seeds = [int(s) for s in self.seeds]
        if not self.query_classes or any(q not in QUERY_CLASSES for q in self.query_classes):
            raise ValueError(f"query_classes must be a non-empty subset of {QUERY_CLASSES}")
        if not 0 < self.flip_fraction < 1:
            raise ValueError(f"flip_fraction must lie in (0, 1), got {self.flip_fraction}")
        if not 0 < self.occlusion_fraction < 1:
            raise ValueError(f"occlusion_fraction must lie in (0, 1), got {self.occlusion_fraction}")
        if self.grad_path not in GRAD_PATHS:
            raise ValueError(f"grad_path must be one of {GRAD_PATHS}, got {self.grad_path!r}")
        if not 0 <= int(self.master_seed) < 2 ** 64:
            raise ValueError("master_seed must fit in 64 unsigned bits")
        self.descent  # validates eta / steps / tolerance

    @property
    def descent(self) -> DescentConfig:
        return DescentConfig(self.eta, self.max_steps, self.epsilon_conv)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["experiment"] = self.experiment.value
        return d


_DEFAULTS = {
    Experiment.KERNEL_ERR: dict(beta=[1.0, 10.0], D=[16], K=[1], Y=[2 ** k for k in range(6, 13)],
                                seeds=list(range(20))),
    Experiment.ENERGY_GRAD_ERR: dict(D=[16, 100]),
    Experiment.RETRIEVAL: dict(beta=[10.0], Y=[2 ** 10, 2 ** 12, 2 ** 14], query_classes=["near"]),
    Experiment.IMAGE_COMPLETE: dict(beta=[150.0], K=[10], Y=[2 ** 8, 2 ** 12], D=[3072],
                                    max_steps=300),
    Experiment.BASIS_ABLATION: dict(beta=[1.0, 10.0, 30.0], D=[16], K=[100],
                                    Y=[2 ** 8, 2 ** 10, 2 ** 12], n_queries=100, seeds=[0, 1, 2]),
    Experiment.CAPACITY_SWEEP: dict(beta=[10.0], K=[1, 5, 10, 25, 50, 100], Y=[2 ** 13], n_queries=50),
    Experiment.BOUND_OVERLAY: dict(beta=[2.0], D=[16], K=[8], Y=[2 ** 6, 2 ** 8, 2 ** 10, 2 ** 12],
                                   grad_path="specialized", epsilon_conv=1e-300),
}


def default_config(experiment, **overrides) -> ExperimentConfig:
    exp = Experiment(experiment)
    kw = dict(_DEFAULTS[exp])
    kw.update(overrides)
    return ExperimentConfig(experiment=exp, **kw)


def config_from_dict(doc: dict, experiment=None) -> ExperimentConfig:
    """Build a config, rejecting unknown keys by name."""
    if not isinstance(doc, dict):
        raise ValueError("config document must be a JSON object")
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ValueError(f"unknown config key(s): {', '.join(unknown)}")
    doc = dict(doc)
    exp = doc.pop("experiment", None)
    if experiment is not None:
        if exp is not None and Experiment(exp) is not Experiment(experiment):
            raise ValueError(f"config is for {exp!r}, but {Experiment(experiment).value!r} was requested")
        exp = experiment
    if exp is None:
        raise ValueError("config must name an experiment")
    return default_config(exp, **doc)


def load_config(path, experiment=None) -> ExperimentConfig:
    with open(os.fspath(path)) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: invalid JSON ({exc})") from None
    return config_from_dict(doc, experiment)


def save_config(cfg: ExperimentConfig, path) -> None:
    with open(os.fspath(path), "w") as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
