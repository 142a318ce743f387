"""Experiment configuration: one JSON file drives the whole pipeline.

Every source of randomness must be explicitly seeded in the file (dataset,
weight init, training shuffle/drop, report sampling, workload trace); a
missing seed is a validation error.  The --seed CLI flag rederives all five
from one master seed.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from .datasets import KINDS
from .errors import ValidationError
from .ioutil import read_json
from .nnet import NetworkSpec
from .stochdepth import TrainConfig

CONFIG_FORMAT = "adaskip.experiment"
CONFIG_VERSION = 1

# Paths through the config dict that must hold explicit seeds.
SEED_FIELDS = (
    ("dataset", "seed"),
    ("model", "init_seed"),
    ("train", "rng_seed"),
    ("analysis", "random_seed"),
    ("runtime", "trace", "seed"),
)


_MISSING = object()


def _get(doc: dict, *path, required=True, default=None):
    node = doc
    for i, key in enumerate(path):
        if not isinstance(node, dict) or key not in node or node[key] is None:
            if required:
                raise ValidationError(f"config is missing {'.'.join(path[:i + 1])}")
            return default
        node = node[key]
    return node


def _int(doc, *path, required=True, default=None):
    v = _get(doc, *path, required=required, default=_MISSING)
    if v is _MISSING:
        return default
    if isinstance(v, bool) or not isinstance(v, int):
        raise ValidationError(f"config field {'.'.join(path)} must be an integer")
    return v


def _num(doc, *path, required=True, default=None):
    v = _get(doc, *path, required=required, default=_MISSING)
    if v is _MISSING:
        return default
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValidationError(f"config field {'.'.join(path)} must be a number")
    return float(v)


@dataclass(frozen=True)
class DatasetConfig:
    kind: str
    n_train: int
    n_test: int
    classes: int
    input_dim: int
    noise: float
    seed: int


@dataclass(frozen=True)
class TraceSection:
    count: int
    base_period: float
    deviation: float
    seed: int


@dataclass(frozen=True)
class RuntimeSection:
    trace: TraceSection
    seconds_per_mac: float | None
    delta_req: float | None
    min_acc: float | None


@dataclass(frozen=True)
class AnalysisSection:
    energy_per_mac: float
    random_samples_per_n: int
    random_seed: int


@dataclass
class ExperimentConfig:
    raw: dict
    dataset: DatasetConfig
    spec: NetworkSpec
    epochs: int
    batch_size: int
    rng_seed: int
    p_last: float
    lr_schedule: list | None
    test_time_scaling: bool
    analysis: AnalysisSection
    runtime: RuntimeSection

    def train_config(self, mode: str) -> TrainConfig:
        if mode not in ("baseline", "stochastic"):
            raise ValidationError(f"unknown training mode {mode!r}")
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            mode=mode,
            p_last=self.p_last if mode == "stochastic" else None,
            rng_seed=self.rng_seed,
            lr_schedule=copy.deepcopy(self.lr_schedule),
            test_time_scaling=self.test_time_scaling,
        )

    def seeds(self) -> dict:
        return {
            "dataset": self.dataset.seed,
            "init": self.spec.init_seed,
            "train": self.rng_seed,
            "analysis": self.analysis.random_seed,
            "trace": self.runtime.trace.seed,
        }


def parse_config(doc: dict) -> ExperimentConfig:
    if doc.get("format") != CONFIG_FORMAT:
        raise ValidationError(f"config format must be {CONFIG_FORMAT!r}")
    if doc.get("version") != CONFIG_VERSION:
        raise ValidationError(f"unsupported config version {doc.get('version')!r}")

    kind = _get(doc, "dataset", "kind")
    if kind not in KINDS:
        raise ValidationError(f"dataset.kind must be one of {KINDS}, got {kind!r}")
    dataset = DatasetConfig(
        kind=kind,
        n_train=_int(doc, "dataset", "n_train"),
        n_test=_int(doc, "dataset", "n_test"),
        classes=_int(doc, "dataset", "classes"),
        input_dim=_int(doc, "dataset", "input_dim"),
        noise=_num(doc, "dataset", "noise"),
        seed=_int(doc, "dataset", "seed"),
    )

    segments = _get(doc, "model", "segments")
    if not isinstance(segments, list) or not segments:
        raise ValidationError("model.segments must be a non-empty list of [blocks, width]")
    for seg in segments:
        if not (isinstance(seg, list) and len(seg) == 2
                and all(isinstance(v, int) and not isinstance(v, bool) for v in seg)):
            raise ValidationError("model.segments entries must be [blocks, width] ints")
    spec = NetworkSpec(
        input_dim=dataset.input_dim,
        num_classes=dataset.classes,
        segments=tuple(tuple(s) for s in segments),
        activation=_get(doc, "model", "activation", required=False, default="relu"),
        init_seed=_int(doc, "model", "init_seed"),
    )

    lr_schedule = _get(doc, "train", "lr_schedule", required=False)
    if lr_schedule is not None:
        try:
            lr_schedule = [(int(lo), int(hi), float(lr)) for lo, hi, lr in lr_schedule]
        except (TypeError, ValueError) as exc:
            raise ValidationError(
                "train.lr_schedule must be a list of [start_epoch, end_epoch, lr]"
            ) from exc

    p_last = _num(doc, "train", "p_last")
    if not 0.0 < p_last <= 1.0:
        raise ValidationError(f"train.p_last must be in (0, 1], got {p_last}")

    analysis = AnalysisSection(
        energy_per_mac=_num(doc, "analysis", "energy_per_mac", required=False, default=1.0),
        random_samples_per_n=_int(doc, "analysis", "random_samples_per_n",
                                  required=False, default=30),
        random_seed=_int(doc, "analysis", "random_seed"),
    )
    if analysis.random_samples_per_n < 1:
        raise ValidationError("analysis.random_samples_per_n must be >= 1")
    if analysis.energy_per_mac <= 0.0:
        raise ValidationError("analysis.energy_per_mac must be positive")

    trace = TraceSection(
        count=_int(doc, "runtime", "trace", "count"),
        base_period=_num(doc, "runtime", "trace", "base_period"),
        deviation=_num(doc, "runtime", "trace", "deviation", required=False, default=0.25),
        seed=_int(doc, "runtime", "trace", "seed"),
    )
    runtime = RuntimeSection(
        trace=trace,
        seconds_per_mac=_num(doc, "runtime", "seconds_per_mac", required=False),
        delta_req=_num(doc, "runtime", "delta_req", required=False),
        min_acc=_num(doc, "runtime", "min_acc", required=False),
    )

    return ExperimentConfig(
        raw=copy.deepcopy(doc),
        dataset=dataset,
        spec=spec,
        epochs=_int(doc, "train", "epochs"),
        batch_size=_int(doc, "train", "batch_size"),
        rng_seed=_int(doc, "train", "rng_seed"),
        p_last=p_last,
        lr_schedule=lr_schedule,
        test_time_scaling=bool(_get(doc, "train", "test_time_scaling",
                                    required=False, default=False)),
        analysis=analysis,
        runtime=runtime,
    )


def load_config(path, seed_override: int | None = None) -> ExperimentConfig:
    doc = read_json(path)
    if seed_override is not None:
        doc = apply_seed_override(doc, seed_override)
    return parse_config(doc)


def apply_seed_override(doc: dict, master_seed: int) -> dict:
    """Rederive every seed field from one master seed (deterministic)."""
    doc = copy.deepcopy(doc)
    derived = np.random.SeedSequence(master_seed).generate_state(len(SEED_FIELDS))
    for value, path in zip(derived, SEED_FIELDS):
        node = doc
        for key in path[:-1]:
            node = node.setdefault(key, {})
        node[path[-1]] = int(value)
    return doc
