"""Segmented residual classifier with weightless per-block skip gates.

The model is a stack of residual blocks grouped into fixed-width segments:

    stem affine -> [segment 0: B0 blocks] -> [segment 1: B1 blocks] -> ...
    ... -> head affine -> logits

Every block computes ``h + relu(h @ W1 + b1) @ W2 + b2`` at its segment's
width.  The first block of each segment additionally owns the affine
transition from the previous width and is therefore never skippable; all
remaining blocks can be replaced by an exact identity at inference time by
clearing their bit in the block mask.  With B blocks in S segments that
leaves B - S skippable blocks.

Weights are float64 and initialization is keyed solely by the init seed
(scheme "he-resdamp-v2"): block entry weights are He-normal (they feed the
relu), plain affines (stem, transitions, head) are Xavier-normal, block exit
weights are He-normal damped by 1/B so the residual stack neither amplifies
activations nor saturates the softmax at step zero, and biases start at
zero.  This keeps the paper-shaped 0.1/0.01/1e-4 schedule stable without
normalization layers.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass

import numpy as np

from . import kernels
from ._ops import OP_AFFINE, OP_RESBLOCK, PROGRAM_COLUMNS
from .errors import ValidationError

CHECKPOINT_FORMAT = "adaskip.checkpoint"
CHECKPOINT_VERSION = 1
INIT_SCHEME = "he-resdamp-v2"

_evaluations = 0


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture description: (blocks, width) per segment plus IO dims."""

    input_dim: int
    num_classes: int
    segments: tuple[tuple[int, int], ...]
    activation: str = "relu"
    init_seed: int = 0

    def __post_init__(self):
        object.__setattr__(
            self, "segments", tuple((int(b), int(w)) for b, w in self.segments)
        )
        if self.input_dim < 1:
            raise ValidationError(f"input_dim must be >= 1, got {self.input_dim}")
        if self.num_classes < 2:
            raise ValidationError(f"num_classes must be >= 2, got {self.num_classes}")
        if not self.segments:
            raise ValidationError("at least one segment is required")
        for b, w in self.segments:
            if b < 1 or w < 1:
                raise ValidationError(
                    f"segment sizes must be positive, got blocks={b} width={w}"
                )
        if self.activation != "relu":
            raise ValidationError(f"unsupported activation {self.activation!r}")
        if not 0 <= int(self.init_seed) < 2**64:
            raise ValidationError("init_seed must fit in an unsigned 64-bit value")

    @property
    def num_segments(self) -> int:
        return len(self.segments)

    @property
    def num_blocks(self) -> int:
        return sum(b for b, _ in self.segments)

    @property
    def num_skippable(self) -> int:
        return self.num_blocks - self.num_segments

    def block_widths(self) -> list[int]:
        widths = []
        for b, w in self.segments:
            widths.extend([w] * b)
        return widths

    def segment_first_flags(self) -> list[bool]:
        flags = []
        for b, _ in self.segments:
            flags.extend([True] + [False] * (b - 1))
        return flags

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "num_classes": self.num_classes,
            "segments": [list(s) for s in self.segments],
            "activation": self.activation,
            "init_seed": self.init_seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        try:
            return cls(
                input_dim=int(d["input_dim"]),
                num_classes=int(d["num_classes"]),
                segments=tuple(tuple(s) for s in d["segments"]),
                activation=d.get("activation", "relu"),
                init_seed=int(d["init_seed"]),
            )
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed network spec: {exc}") from exc


@dataclass
class Dataset:
    """A labeled split; every class must be represented at least once."""

    x: np.ndarray
    y: np.ndarray
    num_classes: int
    split: str

    def __post_init__(self):
        self.x = np.ascontiguousarray(self.x, dtype=np.float64)
        self.y = np.ascontiguousarray(self.y, dtype=np.int64)
        if self.x.ndim != 2 or self.y.ndim != 1 or self.x.shape[0] != self.y.shape[0]:
            raise ValidationError(
                f"bad dataset shapes x{self.x.shape} y{self.y.shape}"
            )
        if self.x.shape[0] == 0:
            raise ValidationError("dataset is empty")
        if self.split not in ("train", "test"):
            raise ValidationError(f"split must be 'train' or 'test', got {self.split!r}")
        if self.y.min() < 0 or self.y.max() >= self.num_classes:
            raise ValidationError("labels out of range for num_classes")
        counts = np.bincount(self.y, minlength=self.num_classes)
        if (counts == 0).any():
            missing = int(np.flatnonzero(counts == 0)[0])
            raise ValidationError(f"class {missing} has no examples in {self.split} split")

    def __len__(self) -> int:
        return self.x.shape[0]


@dataclass
class ResidualModel:
    """A spec plus concrete weights, lowered to a kernel program."""

    spec: NetworkSpec
    params: list[np.ndarray]
    param_names: list[str]
    program: np.ndarray
    skippable_globals: np.ndarray   # skippable index -> global block index
    global_to_skippable: np.ndarray  # global block index -> skippable index or -1

    def copy(self) -> "ResidualModel":
        return ResidualModel(
            spec=self.spec,
            params=[p.copy() for p in self.params],
            param_names=list(self.param_names),
            program=self.program,
            skippable_globals=self.skippable_globals,
            global_to_skippable=self.global_to_skippable,
        )


def _layout(spec: NetworkSpec):
    """Parameter names/shapes and the op program for a spec.

    Draw/storage order: stem, then per block (transition first where present,
    then W1, b1, W2, b2), then head.
    """
    names, shapes, rows = [], [], []

    def add(name, shape):
        names.append(name)
        shapes.append(shape)
        return len(names) - 1

    w_in = spec.input_dim
    first_width = spec.segments[0][1]
    pw = add("stem.w", (w_in, first_width))
    pb = add("stem.b", (first_width,))
    rows.append((OP_AFFINE, pw, pb, -1, -1, -1))

    g = 0
    prev_width = first_width
    for blocks, width in spec.segments:
        for j in range(blocks):
            if j == 0 and prev_width != width:
                tw = add(f"block{g}.trans.w", (prev_width, width))
                tb = add(f"block{g}.trans.b", (width,))
                rows.append((OP_AFFINE, tw, tb, -1, -1, -1))
            w1 = add(f"block{g}.w1", (width, width))
            b1 = add(f"block{g}.b1", (width,))
            w2 = add(f"block{g}.w2", (width, width))
            b2 = add(f"block{g}.b2", (width,))
            rows.append((OP_RESBLOCK, w1, b1, w2, b2, g))
            g += 1
            prev_width = width

    hw = add("head.w", (prev_width, spec.num_classes))
    hb = add("head.b", (spec.num_classes,))
    rows.append((OP_AFFINE, hw, hb, -1, -1, -1))

    program = np.array(rows, dtype=np.intc).reshape(len(rows), PROGRAM_COLUMNS)
    return names, shapes, program


def _skippable_maps(spec: NetworkSpec):
    flags = spec.segment_first_flags()
    skippable = np.flatnonzero(~np.array(flags)).astype(np.int64)
    inverse = np.full(spec.num_blocks, -1, dtype=np.int64)
    inverse[skippable] = np.arange(len(skippable))
    return skippable, inverse


def init_model(spec: NetworkSpec) -> ResidualModel:
    """Fresh weights keyed solely by spec.init_seed (byte-reproducible)."""
    names, shapes, program = _layout(spec)
    rng = np.random.Generator(np.random.PCG64(spec.init_seed))
    damp = 1.0 / spec.num_blocks
    params = []
    for name, shape in zip(names, shapes):
        if name.endswith((".b", ".b1", ".b2")):
            params.append(np.zeros(shape))
            continue
        if name.endswith(".w1"):
            std = np.sqrt(2.0 / shape[0])
        else:
            std = np.sqrt(1.0 / shape[0])
        w = rng.normal(0.0, std, size=shape)
        if name.endswith(".w2"):
            w *= np.sqrt(2.0) * damp
        params.append(w)
    skippable, inverse = _skippable_maps(spec)
    return ResidualModel(spec, params, names, program, skippable, inverse)


# -- masks --------------------------------------------------------------

def full_mask(spec: NetworkSpec) -> np.ndarray:
    """All blocks executed."""
    return np.ones(spec.num_blocks, dtype=bool)


def mask_from_skip(model: ResidualModel, skip) -> np.ndarray:
    """Expand a skip configuration (one bit per skippable block, 1 =
    executed) into a global block mask."""
    skip = np.asarray(skip)
    if skip.shape != (model.spec.num_skippable,):
        raise ValidationError(
            f"skip config must have {model.spec.num_skippable} bits, got {skip.shape}"
        )
    mask = full_mask(model.spec)
    mask[model.skippable_globals] = skip.astype(bool)
    return mask


def skip_from_mask(model: ResidualModel, mask: np.ndarray) -> np.ndarray:
    """Inverse of mask_from_skip."""
    check_mask(model, mask)
    return mask[model.skippable_globals].copy()


def check_mask(model: ResidualModel, mask: np.ndarray):
    mask = np.asarray(mask)
    if mask.shape != (model.spec.num_blocks,):
        raise ValidationError(
            f"mask must have {model.spec.num_blocks} bits, got {mask.shape}"
        )
    fixed = model.global_to_skippable < 0
    if not mask[fixed].all():
        raise ValidationError("mask clears a non-skippable (segment-first) block")


def _canonical_mask(model: ResidualModel, mask) -> np.ndarray:
    if mask is None:
        mask = full_mask(model.spec)
    else:
        check_mask(model, mask)
    return np.ascontiguousarray(np.asarray(mask), dtype=np.uint8)


# -- math ops ----------------------------------------------------------

def forward(model: ResidualModel, x: np.ndarray, mask=None) -> np.ndarray:
    """Logits for a batch; masked-off blocks are exact identities."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.spec.input_dim:
        raise ValidationError(
            f"expected batch of shape (n, {model.spec.input_dim}), got {x.shape}"
        )
    return kernels.forward(model.program, model.params, x, _canonical_mask(model, mask))


def loss_and_gradients(model: ResidualModel, x, labels, mask=None):
    """Mean cross-entropy and per-parameter gradients for a batch.

    Gradients of masked-off blocks are exactly zero.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.spec.input_dim:
        raise ValidationError(
            f"expected batch of shape (n, {model.spec.input_dim}), got {x.shape}"
        )
    labels = np.ascontiguousarray(labels, dtype=np.intc)
    if labels.shape != (x.shape[0],):
        raise ValidationError("labels must be one int per batch row")
    if labels.size and (labels.min() < 0 or labels.max() >= model.spec.num_classes):
        raise ValidationError("labels out of range")
    return kernels.loss_grad(
        model.program, model.params, x, labels, _canonical_mask(model, mask)
    )


def sgd_step(model: ResidualModel, gradients, lr: float) -> ResidualModel:
    """In-place w <- w - lr * g; returns the same model for chaining."""
    if len(gradients) != len(model.params):
        raise ValidationError("gradient list does not match parameter list")
    for g in gradients:
        if not np.isfinite(g).all():
            raise ValidationError("non-finite gradient")
    for p, g in zip(model.params, gradients):
        if p.shape != g.shape:
            raise ValidationError("gradient shape mismatch")
        p -= lr * g
    return model


def predict(model: ResidualModel, x, mask=None) -> np.ndarray:
    """Argmax class per row; ties resolve to the lowest class index."""
    return np.argmax(forward(model, x, mask), axis=1)


def evaluate(model: ResidualModel, dataset: Dataset, skip=None,
             batch_size: int = 2048) -> float:
    """Top-1 accuracy of the model under a skip configuration.

    Counts as one evaluation for evaluation_count() regardless of size.
    """
    global _evaluations
    if dataset.num_classes != model.spec.num_classes:
        raise ValidationError("dataset/model class count mismatch")
    mask = None if skip is None else mask_from_skip(model, skip)
    correct = 0
    for lo in range(0, len(dataset), batch_size):
        batch = dataset.x[lo:lo + batch_size]
        pred = predict(model, batch, mask)
        correct += int((pred == dataset.y[lo:lo + batch_size]).sum())
    _evaluations += 1
    return correct / len(dataset)


def evaluation_count() -> int:
    """Number of evaluate() calls since the last reset (test hook)."""
    return _evaluations


def reset_evaluation_count():
    global _evaluations
    _evaluations = 0


# -- analytic cost model ------------------------------------------------

def block_cost(model: ResidualModel, g: int) -> int:
    """MACs for block g: two width x width affines, plus the transition
    affine for a segment-first block that changes width."""
    spec = model.spec
    if not 0 <= g < spec.num_blocks:
        raise ValidationError(f"block index {g} out of range")
    widths = spec.block_widths()
    firsts = spec.segment_first_flags()
    w = widths[g]
    cost = 2 * w * w
    if firsts[g] and g > 0 and widths[g - 1] != w:
        cost += widths[g - 1] * w
    return cost


def model_cost(model: ResidualModel, skip=None) -> int:
    """Total MACs per example under a skip configuration (skipped blocks
    cost nothing)."""
    spec = model.spec
    mask = full_mask(spec) if skip is None else mask_from_skip(model, skip)
    widths = spec.block_widths()
    cost = spec.input_dim * widths[0] + widths[-1] * spec.num_classes
    for g in range(spec.num_blocks):
        if mask[g]:
            cost += block_cost(model, g)
    return cost


# -- checkpoint IO -------------------------------------------------------

def save_checkpoint(model: ResidualModel, path, run_id: str | None = None):
    """Versioned JSON container; weights as base64 little-endian float64."""
    entries = []
    for name, p in zip(model.param_names, model.params):
        entries.append({
            "name": name,
            "shape": list(p.shape),
            "data": base64.b64encode(
                np.ascontiguousarray(p, dtype="<f8").tobytes()
            ).decode("ascii"),
        })
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "init_scheme": INIT_SCHEME,
        "spec": model.spec.to_dict(),
        "params": entries,
    }
    if run_id is not None:
        doc["run_id"] = run_id
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def load_checkpoint(path) -> ResidualModel:
    """Load and validate a checkpoint written by save_checkpoint."""
    with open(path) as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: not valid JSON: {exc}") from exc
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValidationError(f"{path}: not a checkpoint file")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValidationError(f"{path}: unsupported checkpoint version {doc.get('version')}")
    spec = NetworkSpec.from_dict(doc["spec"])
    names, shapes, program = _layout(spec)
    by_name = {e["name"]: e for e in doc["params"]}
    if set(by_name) != set(names):
        raise ValidationError(f"{path}: parameter set does not match the spec")
    params = []
    for name, shape in zip(names, shapes):
        entry = by_name[name]
        if tuple(entry["shape"]) != shape:
            raise ValidationError(f"{path}: bad shape for {name}")
        raw = base64.b64decode(entry["data"])
        arr = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)
        if not np.isfinite(arr).all():
            raise ValidationError(f"{path}: non-finite weights in {name}")
        params.append(np.ascontiguousarray(arr))
    skippable, inverse = _skippable_maps(spec)
    return ResidualModel(spec, params, names, program, skippable, inverse)
