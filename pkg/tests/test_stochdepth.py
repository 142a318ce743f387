"""Stochastic-depth training tests: survival schedule math, drop sampling,
baseline equivalence at p_last = 1, determinism, and divergence handling."""

from __future__ import annotations

import numpy as np
import pytest

from adaskip import nnet, stochdepth
from adaskip.errors import TrainingDiverged, ValidationError

from conftest import randomize_params


def tiny_spec(seed=0):
    return nnet.NetworkSpec(
        input_dim=4, num_classes=3, segments=((2, 6), (2, 8)), init_seed=seed
    )


def tiny_data(n=96, seed=0):
    gen = np.random.default_rng(seed)
    x = gen.normal(size=(n, 4))
    y = gen.integers(0, 3, size=n)
    y[:3] = [0, 1, 2]
    return nnet.Dataset(x=x, y=y, num_classes=3, split="train")


# -- survival probabilities -----------------------------------------------

def test_survival_probability_hand_values():
    assert stochdepth.survival_probability(27, 54, 0.2) == pytest.approx(0.6)
    assert stochdepth.survival_probability(1, 54, 0.2) == pytest.approx(1 - 0.8 / 54)
    assert stochdepth.survival_probability(5, 10, 0.5) == pytest.approx(0.75)
    assert stochdepth.survival_probability(1, 1, 0.3) == 0.3


def test_survival_probability_endpoint_exact():
    # The deepest block keeps exactly p_last, no rounding drift.
    assert stochdepth.survival_probability(54, 54, 0.2) == 0.2
    assert stochdepth.survival_probability(10, 10, 0.8) == 0.8


def test_survival_probability_flat_at_one():
    assert all(stochdepth.survival_probability(l, 12, 1.0) == 1.0
               for l in range(1, 13))


def test_survival_probability_validation():
    with pytest.raises(ValidationError):
        stochdepth.survival_probability(0, 5, 0.5)
    with pytest.raises(ValidationError):
        stochdepth.survival_probability(6, 5, 0.5)
    with pytest.raises(ValidationError):
        stochdepth.survival_probability(1, 0, 0.5)
    with pytest.raises(ValidationError):
        stochdepth.survival_probability(1, 5, 0.0)
    with pytest.raises(ValidationError):
        stochdepth.survival_probability(1, 5, 1.5)


@pytest.mark.parametrize("p_last", [0.2, 0.5, 0.8, 1.0])
def test_schedule_linear_monotone(p_last):
    sched = stochdepth.SurvivalSchedule.linear(12, p_last)
    assert len(sched.probs) == 12
    assert sched.probs[-1] == p_last
    assert all(a >= b for a, b in zip(sched.probs, sched.probs[1:]))
    assert all(p_last <= p <= 1.0 for p in sched.probs)


# -- drop sampling --------------------------------------------------------

def test_sample_drop_pattern_keeps_segment_firsts():
    model = nnet.init_model(tiny_spec())
    sched = stochdepth.SurvivalSchedule.linear(model.spec.num_skippable, 0.2)
    rng = np.random.default_rng(7)
    firsts = model.spec.segment_first_flags()
    for _ in range(200):
        mask = stochdepth.sample_drop_pattern(model, sched, rng)
        assert all(mask[g] for g in range(model.spec.num_blocks) if firsts[g])


def test_sample_drop_pattern_frequencies():
    spec = nnet.NetworkSpec(input_dim=3, num_classes=2, segments=((7, 4),))
    model = nnet.init_model(spec)
    sched = stochdepth.SurvivalSchedule.linear(model.spec.num_skippable, 0.3)
    rng = np.random.default_rng(123)
    draws = 4000
    keep = np.zeros(model.spec.num_skippable)
    for _ in range(draws):
        mask = stochdepth.sample_drop_pattern(model, sched, rng)
        keep += mask[model.skippable_globals]
    freqs = keep / draws
    np.testing.assert_allclose(freqs, sched.probs, atol=0.03)


def test_sample_drop_pattern_wrong_schedule_length():
    model = nnet.init_model(tiny_spec())
    sched = stochdepth.SurvivalSchedule.linear(5, 0.5)
    with pytest.raises(ValidationError):
        stochdepth.sample_drop_pattern(model, sched, np.random.default_rng(0))


def test_apply_survival_scaling_touches_only_output_branch():
    model = randomize_params(nnet.init_model(tiny_spec()), seed=3)
    sched = stochdepth.SurvivalSchedule.linear(model.spec.num_skippable, 0.4)
    scaled = stochdepth.apply_survival_scaling(model, sched)
    for name, orig, new in zip(model.param_names, model.params, scaled.params):
        block = name.split(".")[0]
        if name.endswith((".w2", ".b2")) and block.startswith("block"):
            g = int(block[5:])
            s = model.global_to_skippable[g]
            if s >= 0:
                np.testing.assert_array_equal(new, orig * sched.probs[s])
                continue
        np.testing.assert_array_equal(new, orig)


# -- lr schedule -----------------------------------------------------------

def test_default_lr_schedule_reference_shape():
    assert stochdepth.default_lr_schedule(100) == [
        (0, 50, 0.1), (50, 85, 0.01), (85, 100, 1e-4)
    ]


@pytest.mark.parametrize("epochs", list(range(1, 31)))
def test_default_lr_schedule_partitions(epochs):
    sched = stochdepth.default_lr_schedule(epochs)
    assert sched[0][0] == 0 and sched[-1][1] == epochs
    for (_, hi, _), (lo2, _, _) in zip(sched, sched[1:]):
        assert hi == lo2
    lrs = [lr for _, _, lr in sched]
    allowed = [lr for _, lr in stochdepth.LR_PHASES]
    assert lrs == [lr for lr in allowed if lr in lrs]  # ordered subsequence


def test_lr_at():
    cfg = stochdepth.TrainConfig(epochs=20, batch_size=8)
    assert cfg.lr_at(0) == 0.1
    assert cfg.lr_at(9) == 0.1
    assert cfg.lr_at(10) == 0.01
    assert cfg.lr_at(17) == 1e-4
    assert cfg.lr_at(19) == 1e-4
    with pytest.raises(ValidationError):
        cfg.lr_at(20)


def test_train_config_validation():
    with pytest.raises(ValidationError):
        stochdepth.TrainConfig(epochs=0, batch_size=8)
    with pytest.raises(ValidationError):
        stochdepth.TrainConfig(epochs=5, batch_size=0)
    with pytest.raises(ValidationError):
        stochdepth.TrainConfig(epochs=5, batch_size=8, mode="sometimes")
    with pytest.raises(ValidationError):
        stochdepth.TrainConfig(epochs=5, batch_size=8, mode="stochastic")
    with pytest.raises(ValidationError):
        stochdepth.TrainConfig(epochs=5, batch_size=8, mode="stochastic", p_last=0.0)
    with pytest.raises(ValidationError):
        stochdepth.TrainConfig(epochs=5, batch_size=8, clip_norm=-1.0)
    with pytest.raises(ValidationError):
        stochdepth.TrainConfig(epochs=5, batch_size=8,
                               lr_schedule=[(0, 3, 0.1), (4, 5, 0.01)])


# -- training --------------------------------------------------------------

def test_p_last_one_matches_baseline_bitwise(backend):
    """With every survival probability at 1 the stochastic trainer must walk
    the exact trajectory of the baseline trainer."""
    model = nnet.init_model(tiny_spec(seed=1))
    ds = tiny_data()
    base_cfg = stochdepth.TrainConfig(epochs=4, batch_size=16, rng_seed=9)
    sto_cfg = stochdepth.TrainConfig(epochs=4, batch_size=16, mode="stochastic",
                                     p_last=1.0, rng_seed=9)
    m_base, h_base = stochdepth.train(model, ds, base_cfg)
    m_sto, h_sto = stochdepth.train(model, ds, sto_cfg)
    assert all(a.tobytes() == b.tobytes() for a, b in zip(m_base.params, m_sto.params))
    assert [(h.loss, h.train_acc) for h in h_base] == [(h.loss, h.train_acc) for h in h_sto]


def test_train_deterministic_and_seed_sensitive(backend):
    model = nnet.init_model(tiny_spec(seed=2))
    ds = tiny_data(seed=1)
    cfg = dict(epochs=3, batch_size=16, mode="stochastic", p_last=0.5)
    m1, _ = stochdepth.train(model, ds, stochdepth.TrainConfig(rng_seed=5, **cfg))
    m2, _ = stochdepth.train(model, ds, stochdepth.TrainConfig(rng_seed=5, **cfg))
    m3, _ = stochdepth.train(model, ds, stochdepth.TrainConfig(rng_seed=6, **cfg))
    assert all(a.tobytes() == b.tobytes() for a, b in zip(m1.params, m2.params))
    assert any(a.tobytes() != b.tobytes() for a, b in zip(m1.params, m3.params))


def test_train_does_not_mutate_input_model():
    model = nnet.init_model(tiny_spec(seed=3))
    before = [p.copy() for p in model.params]
    stochdepth.train(model, tiny_data(), stochdepth.TrainConfig(epochs=2, batch_size=32))
    assert all(np.array_equal(p, b) for p, b in zip(model.params, before))


def test_train_history_and_test_tracking():
    model = nnet.init_model(tiny_spec(seed=4))
    train_ds = tiny_data(seed=2)
    test_ds = nnet.Dataset(x=train_ds.x[:32], y=train_ds.y[:32],
                           num_classes=3, split="test")
    _, hist = stochdepth.train(model, train_ds,
                               stochdepth.TrainConfig(epochs=5, batch_size=16),
                               test_ds)
    assert [h.epoch for h in hist] == list(range(5))
    assert all(np.isfinite(h.loss) for h in hist)
    assert all(0.0 <= h.train_acc <= 1.0 for h in hist)
    assert all(h.test_acc is not None for h in hist)
    _, hist2 = stochdepth.train(model, train_ds,
                                stochdepth.TrainConfig(epochs=2, batch_size=16))
    assert all(h.test_acc is None for h in hist2)


def test_train_loss_improves_smoke(backend):
    gen = np.random.default_rng(11)
    x = np.concatenate([gen.normal(-1.5, 0.5, size=(60, 4)),
                        gen.normal(1.5, 0.5, size=(60, 4))])
    y = np.repeat([0, 1], 60).astype(np.int64)
    ds = nnet.Dataset(x=x, y=y, num_classes=2, split="train")
    spec = nnet.NetworkSpec(input_dim=4, num_classes=2, segments=((3, 8),), init_seed=5)
    _, hist = stochdepth.train(nnet.init_model(spec), ds,
                               stochdepth.TrainConfig(epochs=12, batch_size=16))
    assert hist[-1].loss < hist[0].loss
    assert hist[-1].train_acc >= 0.9


def test_divergence_raises(backend):
    model = randomize_params(nnet.init_model(tiny_spec(seed=6)), seed=1)
    ds = tiny_data(seed=3)
    cfg = stochdepth.TrainConfig(epochs=2, batch_size=16, clip_norm=None,
                                 lr_schedule=[(0, 2, 1e9)])
    with np.errstate(all="ignore"), pytest.raises(TrainingDiverged):
        stochdepth.train(model, ds, cfg)


def test_clip_norm_bounds_update_size():
    """With an absurd lr the clipped trainer still takes finite steps."""
    model = nnet.init_model(tiny_spec(seed=7))
    ds = tiny_data(seed=4)
    cfg = stochdepth.TrainConfig(epochs=1, batch_size=32, clip_norm=1.0,
                                 lr_schedule=[(0, 1, 0.5)])
    trained, hist = stochdepth.train(model, ds, cfg)
    assert all(np.isfinite(p).all() for p in trained.params)
    assert np.isfinite(hist[0].loss)


def test_test_time_scaling_flag():
    model = nnet.init_model(tiny_spec(seed=8))
    ds = tiny_data(seed=5)
    cfg = stochdepth.TrainConfig(epochs=1, batch_size=32, mode="stochastic",
                                 p_last=0.5, rng_seed=3, test_time_scaling=True)
    scaled, _ = stochdepth.train(model, ds, cfg)
    cfg_plain = stochdepth.TrainConfig(epochs=1, batch_size=32, mode="stochastic",
                                       p_last=0.5, rng_seed=3)
    plain, _ = stochdepth.train(model, ds, cfg_plain)
    sched = stochdepth.SurvivalSchedule.linear(model.spec.num_skippable, 0.5)
    expect = stochdepth.apply_survival_scaling(plain, sched)
    assert all(a.tobytes() == b.tobytes() for a, b in zip(scaled.params, expect.params))
