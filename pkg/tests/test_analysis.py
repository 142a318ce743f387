"""Sensitivity ranking, configuration counting, Pareto filtering and the
operating-point serialization formats."""

from __future__ import annotations

import math

import numpy as np
import pytest

from adaskip import analysis, nnet
from adaskip.errors import ValidationError

from conftest import brute_force_front, randomize_params


def small_model(seed=0, segments=((2, 6), (2, 8))):
    spec = nnet.NetworkSpec(input_dim=4, num_classes=3, segments=segments,
                            init_seed=seed)
    return randomize_params(nnet.init_model(spec), seed=seed + 100)


def small_test_ds(n=48, seed=0):
    gen = np.random.default_rng(seed)
    x = gen.normal(size=(n, 4))
    y = gen.integers(0, 3, size=n)
    y[:3] = [0, 1, 2]
    return nnet.Dataset(x=x, y=y, num_classes=3, split="test")


def point(bits, acc, lat, energy_per_mac=1.0):
    return analysis.OperatingPoint(
        bits=bits, n_skipped=bits.count("0"), accuracy=acc,
        latency_cost=lat, energy_cost=lat * energy_per_mac,
    )


# -- configs and counting --------------------------------------------------

def test_bits_round_trip():
    skip = np.array([True, False, True, True, False])
    bits = analysis.bits_of(skip)
    assert bits == "10110"
    assert analysis.OperatingPoint(bits, 2, 0.5, 10, 10.0).skip_array().tolist() == skip.tolist()


def test_single_zero_config():
    cfg = analysis.single_zero_config(5, 2)
    assert cfg.tolist() == [True, True, False, True, True]


def test_count_configurations_matches_comb():
    for bs in range(0, 20):
        for n in range(0, bs + 1):
            assert analysis.count_configurations(bs, n) == math.comb(bs, n)
    assert analysis.count_configurations(10, 4) == 210
    assert analysis.count_configurations(64, 0) == 1
    assert analysis.count_configurations(64, 32) == math.comb(64, 32)


def test_count_configurations_validation():
    with pytest.raises(ValidationError):
        analysis.count_configurations(5, 6)
    with pytest.raises(ValidationError):
        analysis.count_configurations(5, -1)
    with pytest.raises(ValidationError):
        analysis.count_configurations(-1, 0)


# -- sensitivity -----------------------------------------------------------

def test_sensitivity_scan_cost_and_contents():
    model = small_model(seed=1)
    ds = small_test_ds(seed=1)
    nnet.reset_evaluation_count()
    slist = analysis.sensitivity_scan(model, ds)
    assert nnet.evaluation_count() == model.spec.num_skippable
    assert sorted(e.skippable_index for e in slist.entries) == list(
        range(model.spec.num_skippable))
    accs = [e.accuracy for e in slist.entries]
    assert accs == sorted(accs)
    for e in slist.entries:
        assert e.global_block == model.skippable_globals[e.skippable_index]
        got = nnet.evaluate(
            model, ds,
            skip=analysis.single_zero_config(model.spec.num_skippable,
                                             e.skippable_index))
        assert got == e.accuracy


def test_sensitivity_ties_resolve_deeper_first():
    """Two blocks surgically turned into no-ops leave identical accuracy when
    skipped; the deeper one must rank as less important (later), and between
    the two tied entries the deeper index comes first."""
    model = small_model(seed=2, segments=((3, 6), (3, 8)))
    ds = small_test_ds(seed=2)
    noop_skippables = [0, 3]
    for s in noop_skippables:
        g = model.skippable_globals[s]
        model.params[model.param_names.index(f"block{g}.w2")][...] = 0.0
        model.params[model.param_names.index(f"block{g}.b2")][...] = 0.0
    slist = analysis.sensitivity_scan(model, ds)
    tied = [e.skippable_index for e in slist.entries
            if e.skippable_index in noop_skippables]
    assert tied == [3, 0]  # deeper of the tie first


def test_n_least_sensitive_family_is_nested():
    model = small_model(seed=3)
    ds = small_test_ds(seed=3)
    slist = analysis.sensitivity_scan(model, ds)
    bs = model.spec.num_skippable
    prev_zeros: set[int] = set()
    for n in range(bs + 1):
        cfg = analysis.n_least_sensitive_config(slist, n)
        zeros = set(np.flatnonzero(~cfg).tolist())
        assert len(zeros) == n
        assert prev_zeros <= zeros
        prev_zeros = zeros
    assert analysis.n_least_sensitive_config(slist, 0).all()
    assert not analysis.n_least_sensitive_config(slist, bs).any()
    # the single skipped block at N=1 is the one with the highest lone-skip
    # accuracy (least sensitive)
    one = analysis.n_least_sensitive_config(slist, 1)
    assert not one[slist.entries[-1].skippable_index]
    with pytest.raises(ValidationError):
        analysis.n_least_sensitive_config(slist, bs + 1)
    with pytest.raises(ValidationError):
        analysis.n_least_sensitive_config(slist, -1)


# -- pareto ----------------------------------------------------------------

def random_cloud(gen, max_points=32):
    n = int(gen.integers(1, max_points + 1))
    pts = []
    for _ in range(n):
        bits = "".join(gen.choice(["0", "1"], size=6))
        # coarse grids force plenty of exact ties on one or both axes
        acc = round(float(gen.integers(0, 11)) / 10.0, 1)
        lat = int(gen.integers(1, 9)) * 10
        pts.append(point(bits, acc, lat))
    return pts


def full_key(p):
    return (p.n_skipped, p.accuracy, p.latency_cost, p.bits)


def test_pareto_filter_matches_quadratic_oracle():
    gen = np.random.default_rng(999)
    for _ in range(250):
        pts = random_cloud(gen)
        got = analysis.pareto_filter(pts, 1.0, 100).points
        assert [p.n_skipped for p in got] == sorted(p.n_skipped for p in got)
        want = brute_force_front(pts)
        assert sorted(map(full_key, got)) == sorted(map(full_key, want))


def test_pareto_filter_hand_case():
    pts = [
        point("111111", 0.90, 100),
        point("111110", 0.85, 80),
        point("111100", 0.85, 80),   # duplicate objectives, more skipped: deduped
        point("111000", 0.70, 60),
        point("110000", 0.80, 70),
        point("100000", 0.40, 40),
        point("000000", 0.10, 20),
        point("101010", 0.60, 90),   # dominated by 0.85 @ 80
    ]
    front = analysis.pareto_filter(pts, 0.90, 100).points
    assert [(p.bits, p.accuracy, p.latency_cost) for p in front] == [
        ("111111", 0.90, 100),
        ("111110", 0.85, 80),
        ("111000", 0.70, 60),
        ("110000", 0.80, 70),
        ("100000", 0.40, 40),
        ("000000", 0.10, 20),
    ]


def test_pareto_filter_result_internally_non_dominated():
    gen = np.random.default_rng(4242)
    for _ in range(50):
        front = analysis.pareto_filter(random_cloud(gen), 1.0, 100).points
        ordered = sorted(front, key=lambda p: p.latency_cost)
        for a, b in zip(ordered, ordered[1:]):
            assert a.latency_cost < b.latency_cost
            assert a.accuracy < b.accuracy


def test_pareto_filter_empty_raises():
    with pytest.raises(ValidationError):
        analysis.pareto_filter([], 1.0, 100)


def test_family_and_exhaustive_fronts():
    model = small_model(seed=4, segments=((2, 5), (2, 6)))
    ds = small_test_ds(seed=4)
    slist = analysis.sensitivity_scan(model, ds)
    nnet.reset_evaluation_count()
    points, front = analysis.family_front(model, ds, slist)
    bs = model.spec.num_skippable
    assert nnet.evaluation_count() == bs + 1
    assert len(points) == bs + 1
    assert points[0].n_skipped == 0
    assert front.full_accuracy == points[0].accuracy
    assert front.full_cost == points[0].latency_cost
    front_keys = {(p.accuracy, p.latency_cost) for p in front.points}
    assert front_keys <= {(p.accuracy, p.latency_cost) for p in points}

    all_points, exh = analysis.exhaustive_front(model, ds)
    assert len(all_points) == 2 ** bs
    # every family point is dominated-or-equalled by the exhaustive front
    for p in points:
        assert any(q.accuracy >= p.accuracy and q.latency_cost <= p.latency_cost
                   for q in exh.points)


def test_exhaustive_front_guard():
    model = small_model(seed=5, segments=((8, 4), (8, 4)))
    ds = small_test_ds(seed=5)
    with pytest.raises(ValidationError):
        analysis.exhaustive_front(model, ds, limit=12)


def test_hypervolume_hand_value():
    pts = [point("10", 0.7, 5), point("11", 0.9, 10)]
    assert analysis.hypervolume(pts, 0.5, 20) == pytest.approx(
        (0.7 - 0.5) * (10 - 5) + (0.9 - 0.5) * (20 - 10))
    assert analysis.hypervolume([], 0.5, 20) == 0.0
    with pytest.raises(ValidationError):
        analysis.hypervolume(pts, 0.8, 20)
    with pytest.raises(ValidationError):
        analysis.hypervolume(pts, 0.5, 8)


def test_hypervolume_monotone_under_extension():
    base = [point("10", 0.7, 5), point("11", 0.9, 10)]
    better = base + [point("00", 0.4, 2)]
    hv_base = analysis.hypervolume(base, 0.1, 20)
    hv_better = analysis.hypervolume(better, 0.1, 20)
    assert hv_better > hv_base


# -- serialization ---------------------------------------------------------

def test_sensitivity_round_trip(tmp_path):
    slist = analysis.SensitivityList([
        analysis.SensitivityEntry(2, 4, 0.5),
        analysis.SensitivityEntry(0, 1, 0.75),
    ])
    path = tmp_path / "sens.json"
    analysis.save_sensitivity(slist, path, run_id="r1")
    loaded = analysis.load_sensitivity(path)
    assert loaded.entries == slist.entries
    assert loaded.ranking() == [2, 0]


def test_pareto_json_round_trip(tmp_path):
    pareto = analysis.ParetoSet(
        points=[point("111", 0.9, 90), point("110", 0.8, 60)],
        full_accuracy=0.9, full_cost=90,
        cost_model=analysis.CostModel(energy_per_mac=2.5),
    )
    path = tmp_path / "front.json"
    analysis.save_pareto(pareto, path, run_id="r2")
    loaded = analysis.load_pareto(path)
    assert loaded.points == pareto.points
    assert loaded.full_accuracy == 0.9
    assert loaded.full_cost == 90
    assert loaded.cost_model.energy_per_mac == 2.5


def test_points_file_round_trip_and_pareto_compat(tmp_path):
    pts = [point("10", 1 / 3, 7), point("01", 2 / 3, 11)]
    ppath = tmp_path / "points.json"
    analysis.save_points(pts, 2 / 3, 11, analysis.CostModel(), ppath)
    loaded, acc, cost, cm = analysis.load_points(ppath)
    assert loaded == pts
    assert (acc, cost, cm.energy_per_mac) == (2 / 3, 11, 1.0)
    # load_points also accepts a pareto file
    fpath = tmp_path / "front.json"
    analysis.save_pareto(
        analysis.ParetoSet(pts, 2 / 3, 11, analysis.CostModel()), fpath)
    loaded2, _, _, _ = analysis.load_points(fpath)
    assert loaded2 == pts


def test_pareto_csv_round_trip_exact_floats(tmp_path):
    pareto = analysis.ParetoSet(
        points=[point("101", 1 / 3, 55, energy_per_mac=0.125)],
        full_accuracy=0.9431, full_cost=123,
        cost_model=analysis.CostModel(energy_per_mac=0.125),
    )
    path = tmp_path / "front.csv"
    analysis.save_pareto_csv(pareto, path, run_id="deadbeef")
    text = path.read_text()
    assert text.startswith("# run_id=deadbeef\n")
    assert "bits,n_skipped,accuracy,latency_cost,energy_cost" in text
    loaded = analysis.load_pareto_csv(path)
    assert loaded.points == pareto.points  # repr round-trips doubles exactly
    assert loaded.full_accuracy == pareto.full_accuracy
    assert loaded.full_cost == 123
    assert loaded.cost_model.energy_per_mac == 0.125


def test_loaders_reject_wrong_format(tmp_path):
    path = tmp_path / "x.json"
    path.write_text('{"format": "other", "version": 1}\n')
    for loader in (analysis.load_sensitivity, analysis.load_pareto,
                   analysis.load_points):
        with pytest.raises(ValidationError):
            loader(path)
    csv = tmp_path / "x.csv"
    csv.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(ValidationError):
        analysis.load_pareto_csv(csv)
