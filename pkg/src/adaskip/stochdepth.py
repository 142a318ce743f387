"""Stochastic-depth training: per-mini-batch random block dropping.

During training each skippable block survives a mini-batch with probability
p_l that decays linearly with depth down to p_last for the deepest one; a
dropped block is a pure identity for that batch (forward and backward).
Inference always runs with whatever mask the caller supplies and full
weights; no survival rescaling is applied unless explicitly requested via
apply_survival_scaling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nnet
from .errors import TrainingDiverged, ValidationError

# Three-phase schedule shape: lr values are fixed, phase lengths scale with
# the epoch budget (50% / 35% / 15%).
LR_PHASES = ((0.50, 0.1), (0.35, 0.01), (0.15, 1e-4))


def survival_probability(l: int, L: int, p_last: float) -> float:
    """Keep probability of the l-th of L skippable blocks (1-based).

    Linear decay from ~1 at the surface to exactly p_last at l == L.
    Computed as the convex combination (1 - l/L) + (l/L) * p_last so the
    endpoint is exact in floating point.
    """
    if L < 1:
        raise ValidationError(f"L must be >= 1, got {L}")
    if not 1 <= l <= L:
        raise ValidationError(f"l must be in [1, {L}], got {l}")
    if not 0.0 < p_last <= 1.0:
        raise ValidationError(f"p_last must be in (0, 1], got {p_last}")
    w = l / L
    return (1.0 - w) + w * p_last


@dataclass(frozen=True)
class SurvivalSchedule:
    """Per-skippable-block keep probabilities, surface to deepest."""

    p_last: float
    probs: tuple[float, ...]

    @classmethod
    def linear(cls, num_skippable: int, p_last: float) -> "SurvivalSchedule":
        probs = tuple(
            survival_probability(l, num_skippable, p_last)
            for l in range(1, num_skippable + 1)
        )
        return cls(p_last=p_last, probs=probs)


def sample_drop_pattern(model: nnet.ResidualModel, schedule: SurvivalSchedule,
                        rng: np.random.Generator) -> np.ndarray:
    """One Bernoulli keep/drop draw per skippable block, as a global mask."""
    if len(schedule.probs) != model.spec.num_skippable:
        raise ValidationError(
            f"schedule covers {len(schedule.probs)} blocks, model has "
            f"{model.spec.num_skippable} skippable"
        )
    keep = rng.random(len(schedule.probs)) < np.asarray(schedule.probs)
    mask = nnet.full_mask(model.spec)
    mask[model.skippable_globals] = keep
    return mask


def apply_survival_scaling(model: nnet.ResidualModel,
                           schedule: SurvivalSchedule) -> nnet.ResidualModel:
    """Copy of the model with each skippable block's output branch scaled by
    its survival probability (calibrated-inference variant, off by default)."""
    if len(schedule.probs) != model.spec.num_skippable:
        raise ValidationError("schedule does not match the model")
    scaled = model.copy()
    for s, g in enumerate(model.skippable_globals):
        p = schedule.probs[s]
        scaled.params[model.param_names.index(f"block{g}.w2")] *= p
        scaled.params[model.param_names.index(f"block{g}.b2")] *= p
    return scaled


def default_lr_schedule(epochs: int) -> list[tuple[int, int, float]]:
    """Three-phase (start, end, lr) ranges partitioning [0, epochs)."""
    if epochs < 1:
        raise ValidationError(f"epochs must be >= 1, got {epochs}")
    bounds = [0]
    acc = 0.0
    for frac, _ in LR_PHASES[:-1]:
        acc += frac
        bounds.append(round(epochs * acc))
    bounds.append(epochs)
    out = []
    for (lo, hi), (_, lr) in zip(zip(bounds, bounds[1:]), LR_PHASES):
        if hi > lo:
            out.append((lo, hi, lr))
    return out


@dataclass
class TrainConfig:
    """Training hyperparameters; mode "baseline" trains with every block
    active, "stochastic" applies the survival schedule per mini-batch."""

    epochs: int
    batch_size: int
    mode: str = "baseline"
    p_last: float | None = None
    rng_seed: int = 0
    lr_schedule: list[tuple[int, int, float]] | None = None
    test_time_scaling: bool = False
    # Global l2 gradient-norm ceiling; rescues the hot first lr phase from
    # occasional bad batches (no normalization layers in this network).
    clip_norm: float | None = 5.0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValidationError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.mode not in ("baseline", "stochastic"):
            raise ValidationError(f"mode must be baseline or stochastic, got {self.mode!r}")
        if self.mode == "stochastic":
            if self.p_last is None:
                raise ValidationError("stochastic mode requires p_last")
            if not 0.0 < self.p_last <= 1.0:
                raise ValidationError(f"p_last must be in (0, 1], got {self.p_last}")
        if self.clip_norm is not None and self.clip_norm <= 0.0:
            raise ValidationError(f"clip_norm must be positive, got {self.clip_norm}")
        if self.lr_schedule is None:
            self.lr_schedule = default_lr_schedule(self.epochs)
        self._check_schedule()

    def _check_schedule(self):
        ranges = sorted((int(lo), int(hi)) for lo, hi, _ in self.lr_schedule)
        cursor = 0
        for lo, hi in ranges:
            if lo != cursor or hi <= lo:
                raise ValidationError("lr ranges must partition [0, epochs)")
            cursor = hi
        if cursor != self.epochs:
            raise ValidationError("lr ranges must partition [0, epochs)")

    def lr_at(self, epoch: int) -> float:
        for lo, hi, lr in self.lr_schedule:
            if lo <= epoch < hi:
                return lr
        raise ValidationError(f"epoch {epoch} outside the lr schedule")


@dataclass
class EpochStats:
    epoch: int
    loss: float
    train_acc: float
    test_acc: float | None


def train(model: nnet.ResidualModel, train_ds: nnet.Dataset, cfg: TrainConfig,
          test_ds: nnet.Dataset | None = None):
    """SGD over shuffled mini-batches; returns (trained copy, history).

    Deterministic for a fixed (model weights, data, config): the shuffle and
    drop-pattern RNG streams are derived from cfg.rng_seed, and the drop
    stream is separate so a p_last=1.0 stochastic run walks the exact same
    trajectory as a baseline run.  History carries per-epoch mean batch loss
    and full-weight accuracies.  A non-finite loss aborts.
    """
    model = model.copy()
    ss = np.random.SeedSequence(cfg.rng_seed)
    shuffle_ss, drop_ss = ss.spawn(2)
    shuffle_rng = np.random.Generator(np.random.PCG64(shuffle_ss))
    drop_rng = np.random.Generator(np.random.PCG64(drop_ss))
    schedule = None
    if cfg.mode == "stochastic":
        schedule = SurvivalSchedule.linear(model.spec.num_skippable, cfg.p_last)

    n = len(train_ds)
    history: list[EpochStats] = []
    for epoch in range(cfg.epochs):
        lr = cfg.lr_at(epoch)
        order = shuffle_rng.permutation(n)
        x = train_ds.x[order]
        y = train_ds.y[order]
        losses = []
        for lo in range(0, n, cfg.batch_size):
            xb = x[lo:lo + cfg.batch_size]
            yb = y[lo:lo + cfg.batch_size]
            mask = None
            if schedule is not None:
                mask = sample_drop_pattern(model, schedule, drop_rng)
            loss, grads = nnet.loss_and_gradients(model, xb, yb, mask)
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, batch offset {lo}"
                )
            if cfg.clip_norm is not None:
                gnorm = np.sqrt(sum(float((g * g).sum()) for g in grads))
                if gnorm > cfg.clip_norm:
                    scale = cfg.clip_norm / gnorm
                    grads = [g * scale for g in grads]
            nnet.sgd_step(model, grads, lr)
            losses.append(loss)
        train_acc = nnet.evaluate(model, train_ds)
        test_acc = nnet.evaluate(model, test_ds) if test_ds is not None else None
        history.append(EpochStats(epoch, float(np.mean(losses)), train_acc, test_acc))

    if cfg.test_time_scaling and schedule is not None:
        model = apply_survival_scaling(model, schedule)
    return model, history
