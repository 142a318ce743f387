from __future__ import annotations

import numpy as np
import pytest

from adaskip import kernels


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    """Run a test under every installed kernel backend."""
    kernels.use_backend(request.param)
    yield request.param
    kernels.use_backend("auto")


@pytest.fixture
def rng():
    return np.random.default_rng(20260814)


def randomize_params(model, seed):
    """Replace a model's weights with well-scaled random values (tests must
    not rely on the init scheme's structure, e.g. damped block exits)."""
    gen = np.random.default_rng(seed)
    for name, p in zip(model.param_names, model.params):
        fan = p.shape[0] if p.ndim == 2 else max(p.shape[0], 1)
        p[...] = gen.normal(0.0, 1.0 / np.sqrt(fan), size=p.shape)
    return model


def surgery_copy(model, skip):
    """Oracle for masking: a copy whose skipped blocks are made exact
    identities by zeroing their exit weights."""
    surg = model.copy()
    for s, g in enumerate(model.skippable_globals):
        if not skip[s]:
            surg.params[model.param_names.index(f"block{g}.w2")][...] = 0.0
            surg.params[model.param_names.index(f"block{g}.b2")][...] = 0.0
    return surg


def brute_force_front(points):
    """Quadratic dominance oracle with the same exact-tie rule as
    pareto_filter (equal objectives keep the lowest n_skipped)."""
    best = {}
    for p in points:
        key = (p.accuracy, p.latency_cost)
        if key not in best or p.n_skipped < best[key].n_skipped:
            best[key] = p
    survivors = []
    for p in best.values():
        dominated = any(
            q.accuracy >= p.accuracy and q.latency_cost <= p.latency_cost
            and (q.accuracy > p.accuracy or q.latency_cost < p.latency_cost)
            for q in best.values()
        )
        if not dominated:
            survivors.append(p)
    return sorted(survivors, key=lambda p: p.n_skipped)


def make_config_doc(**overrides):
    """A small but complete experiment config; overrides patch top-level
    sections wholesale."""
    doc = {
        "format": "adaskip.experiment",
        "version": 1,
        "dataset": {"kind": "rings", "n_train": 192, "n_test": 96,
                    "classes": 3, "input_dim": 6, "noise": 0.15, "seed": 11},
        "model": {"segments": [[2, 8], [2, 10]], "init_seed": 7},
        "train": {"epochs": 4, "batch_size": 32, "p_last": 0.5, "rng_seed": 13},
        "analysis": {"random_seed": 17, "random_samples_per_n": 4},
        "runtime": {"trace": {"count": 40, "base_period": 1.0,
                              "deviation": 0.25, "seed": 23}},
    }
    doc.update(overrides)
    return doc
