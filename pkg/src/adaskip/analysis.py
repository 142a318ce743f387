"""Design-time skip analysis: block sensitivity, config families, Pareto front.

A skip configuration is one bit per skippable block (1 = executed, 0 =
skipped), surface to deepest.  Exhaustive search over all 2^(B-S)
configurations is hopeless, so blocks are ranked by a one-at-a-time
sensitivity scan (exactly one test-set evaluation per skippable block) and
candidate configurations skip the N least sensitive blocks for N = 0..B-S.
The surviving accuracy/cost trade-offs form the Pareto front handed to the
runtime.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import nnet
from .errors import ValidationError

SENSITIVITY_FORMAT = "adaskip.sensitivity"
PARETO_FORMAT = "adaskip.pareto"
POINTS_FORMAT = "adaskip.points"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class CostModel:
    """Latency is analytic MACs per example; energy is proportional to it."""

    energy_per_mac: float = 1.0

    def energy(self, latency_cost: int) -> float:
        return latency_cost * self.energy_per_mac


@dataclass(frozen=True)
class SensitivityEntry:
    skippable_index: int
    global_block: int
    accuracy: float


@dataclass
class SensitivityList:
    """Blocks ordered most important first (lowest accuracy when skipped
    alone; ties resolve to the deeper block first)."""

    entries: list[SensitivityEntry]

    def ranking(self) -> list[int]:
        return [e.skippable_index for e in self.entries]


@dataclass(frozen=True)
class OperatingPoint:
    bits: str  # one char per skippable block, '1' = executed
    n_skipped: int
    accuracy: float
    latency_cost: int
    energy_cost: float

    def skip_array(self) -> np.ndarray:
        return np.frombuffer(self.bits.encode("ascii"), dtype=np.uint8) == ord("1")


@dataclass
class ParetoSet:
    """Non-dominated operating points sorted by n_skipped ascending."""

    points: list[OperatingPoint]
    full_accuracy: float
    full_cost: int
    cost_model: CostModel


def bits_of(skip) -> str:
    skip = np.asarray(skip).astype(bool)
    return "".join("1" if b else "0" for b in skip)


def single_zero_config(num_skippable: int, index: int) -> np.ndarray:
    skip = np.ones(num_skippable, dtype=bool)
    skip[index] = False
    return skip


def sensitivity_scan(model: nnet.ResidualModel, test_ds: nnet.Dataset) -> SensitivityList:
    """Rank skippable blocks by the accuracy left when each is skipped alone.

    Costs exactly one test-set evaluation per skippable block.
    """
    bs = model.spec.num_skippable
    if bs < 1:
        raise ValidationError("model has no skippable blocks to rank")
    rows = []
    for s in range(bs):
        acc = nnet.evaluate(model, test_ds, skip=single_zero_config(bs, s))
        rows.append(SensitivityEntry(s, int(model.skippable_globals[s]), acc))
    rows.sort(key=lambda e: (e.accuracy, -e.skippable_index))
    return SensitivityList(rows)


def n_least_sensitive_config(slist: SensitivityList, n_skipped: int) -> np.ndarray:
    """Skip the N blocks whose lone removal hurt accuracy the least.

    The zero sets are nested: config(N) skips a subset of config(N+1).
    """
    total = len(slist.entries)
    if not 0 <= n_skipped <= total:
        raise ValidationError(f"n_skipped must be in [0, {total}], got {n_skipped}")
    skip = np.ones(total, dtype=bool)
    for entry in slist.entries[total - n_skipped:]:
        skip[entry.skippable_index] = False
    return skip


def count_configurations(num_skippable: int, n_skipped: int) -> int:
    """Exact number of configurations that skip n_skipped of the blocks."""
    if num_skippable < 0 or not 0 <= n_skipped <= num_skippable:
        raise ValidationError(
            f"need 0 <= n_skipped <= num_skippable, got {n_skipped}/{num_skippable}"
        )
    return math.comb(num_skippable, n_skipped)


def evaluate_operating_points(model: nnet.ResidualModel, test_ds: nnet.Dataset,
                              configs, cost_model: CostModel = CostModel()):
    """One OperatingPoint (accuracy + analytic costs) per skip config."""
    points = []
    for skip in configs:
        skip = np.asarray(skip).astype(bool)
        acc = nnet.evaluate(model, test_ds, skip=skip)
        latency = nnet.model_cost(model, skip=skip)
        points.append(OperatingPoint(
            bits=bits_of(skip),
            n_skipped=int((~skip).sum()),
            accuracy=acc,
            latency_cost=latency,
            energy_cost=cost_model.energy(latency),
        ))
    return points


def pareto_filter(points, full_accuracy: float, full_cost: int,
                  cost_model: CostModel = CostModel()) -> ParetoSet:
    """Maximal non-dominated subset (maximize accuracy, minimize latency).

    Points tied on both objectives keep only the lowest n_skipped.  The
    result is sorted by n_skipped ascending.
    """
    if not points:
        raise ValidationError("no operating points to filter")
    best = {}
    for p in points:
        key = (p.accuracy, p.latency_cost)
        cur = best.get(key)
        if cur is None or p.n_skipped < cur.n_skipped:
            best[key] = p
    deduped = sorted(best.values(), key=lambda p: (p.latency_cost, -p.accuracy))
    front = []
    best_acc = -np.inf
    for p in deduped:
        if p.accuracy > best_acc:
            front.append(p)
            best_acc = p.accuracy
    front.sort(key=lambda p: p.n_skipped)
    return ParetoSet(front, full_accuracy, full_cost, cost_model)


def family_front(model: nnet.ResidualModel, test_ds: nnet.Dataset,
                 slist: SensitivityList, cost_model: CostModel = CostModel()):
    """Operating points of the nested N-least-sensitive family (N = 0..B_s)
    and their Pareto front."""
    bs = len(slist.entries)
    configs = [n_least_sensitive_config(slist, n) for n in range(bs + 1)]
    points = evaluate_operating_points(model, test_ds, configs, cost_model)
    full = points[0]
    front = pareto_filter(points, full.accuracy, full.latency_cost, cost_model)
    return points, front


def exhaustive_front(model: nnet.ResidualModel, test_ds: nnet.Dataset,
                     cost_model: CostModel = CostModel(),
                     limit: int = 12):
    """True front over all 2^B_s configurations (guarded to small models)."""
    bs = model.spec.num_skippable
    if bs > limit:
        raise ValidationError(
            f"exhaustive search is limited to {limit} skippable blocks, model has {bs}"
        )
    configs = []
    for code in range(2 ** bs):
        skip = np.array([(code >> s) & 1 == 0 for s in range(bs)], dtype=bool)
        configs.append(skip)
    points = evaluate_operating_points(model, test_ds, configs, cost_model)
    full = next(p for p in points if p.n_skipped == 0)
    return points, pareto_filter(points, full.accuracy, full.latency_cost, cost_model)


def hypervolume(points, ref_accuracy: float, ref_cost: float) -> float:
    """Area dominated by the front in (cost, accuracy) space, relative to a
    reference corner that every point must dominate."""
    if not points:
        return 0.0
    for p in points:
        if p.accuracy < ref_accuracy or p.latency_cost > ref_cost:
            raise ValidationError("reference point does not bound the front")
    ordered = sorted(points, key=lambda p: p.latency_cost)
    area = 0.0
    for i, p in enumerate(ordered):
        upper = ordered[i + 1].latency_cost if i + 1 < len(ordered) else ref_cost
        area += (p.accuracy - ref_accuracy) * (upper - p.latency_cost)
    return area


# -- serialization -------------------------------------------------------

def save_sensitivity(slist: SensitivityList, path, run_id: str | None = None):
    doc = {
        "format": SENSITIVITY_FORMAT,
        "version": FORMAT_VERSION,
        "entries": [
            {
                "skippable_index": e.skippable_index,
                "global_block": e.global_block,
                "accuracy": e.accuracy,
            }
            for e in slist.entries
        ],
    }
    if run_id is not None:
        doc["run_id"] = run_id
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def load_sensitivity(path) -> SensitivityList:
    with open(path) as f:
        doc = json.load(f)
    if doc.get("format") != SENSITIVITY_FORMAT or doc.get("version") != FORMAT_VERSION:
        raise ValidationError(f"{path}: not a sensitivity file")
    return SensitivityList([
        SensitivityEntry(int(e["skippable_index"]), int(e["global_block"]),
                         float(e["accuracy"]))
        for e in doc["entries"]
    ])


def _points_payload(points):
    return [
        {
            "bits": p.bits,
            "n_skipped": p.n_skipped,
            "accuracy": p.accuracy,
            "latency_cost": p.latency_cost,
            "energy_cost": p.energy_cost,
        }
        for p in points
    ]


def save_pareto(pareto: ParetoSet, path, run_id: str | None = None):
    doc = {
        "format": PARETO_FORMAT,
        "version": FORMAT_VERSION,
        "full_accuracy": pareto.full_accuracy,
        "full_cost": pareto.full_cost,
        "energy_per_mac": pareto.cost_model.energy_per_mac,
        "points": _points_payload(pareto.points),
    }
    if run_id is not None:
        doc["run_id"] = run_id
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def load_pareto(path) -> ParetoSet:
    with open(path) as f:
        doc = json.load(f)
    if doc.get("format") != PARETO_FORMAT or doc.get("version") != FORMAT_VERSION:
        raise ValidationError(f"{path}: not a pareto file")
    points = [
        OperatingPoint(
            bits=str(e["bits"]),
            n_skipped=int(e["n_skipped"]),
            accuracy=float(e["accuracy"]),
            latency_cost=int(e["latency_cost"]),
            energy_cost=float(e["energy_cost"]),
        )
        for e in doc["points"]
    ]
    return ParetoSet(
        points=points,
        full_accuracy=float(doc["full_accuracy"]),
        full_cost=int(doc["full_cost"]),
        cost_model=CostModel(energy_per_mac=float(doc["energy_per_mac"])),
    )


def save_points(points, full_accuracy: float, full_cost: int,
                cost_model: CostModel, path, run_id: str | None = None):
    """Plain operating-point list (no non-domination requirement)."""
    doc = {
        "format": POINTS_FORMAT,
        "version": FORMAT_VERSION,
        "full_accuracy": full_accuracy,
        "full_cost": full_cost,
        "energy_per_mac": cost_model.energy_per_mac,
        "points": _points_payload(points),
    }
    if run_id is not None:
        doc["run_id"] = run_id
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def load_points(path):
    """Returns (points, full_accuracy, full_cost, cost_model); accepts both
    the points and the pareto JSON formats."""
    with open(path) as f:
        doc = json.load(f)
    if doc.get("format") not in (POINTS_FORMAT, PARETO_FORMAT) \
            or doc.get("version") != FORMAT_VERSION:
        raise ValidationError(f"{path}: not an operating-points file")
    points = [
        OperatingPoint(
            bits=str(e["bits"]),
            n_skipped=int(e["n_skipped"]),
            accuracy=float(e["accuracy"]),
            latency_cost=int(e["latency_cost"]),
            energy_cost=float(e["energy_cost"]),
        )
        for e in doc["points"]
    ]
    return (points, float(doc["full_accuracy"]), int(doc["full_cost"]),
            CostModel(energy_per_mac=float(doc["energy_per_mac"])))


def save_pareto_csv(pareto: ParetoSet, path, run_id: str | None = None):
    """Runtime-facing export: one row per point, sorted by n_skipped."""
    lines = []
    if run_id is not None:
        lines.append(f"# run_id={run_id}")
    lines.append(f"# full_accuracy={pareto.full_accuracy!r}")
    lines.append(f"# full_cost={pareto.full_cost}")
    lines.append(f"# energy_per_mac={pareto.cost_model.energy_per_mac!r}")
    lines.append("bits,n_skipped,accuracy,latency_cost,energy_cost")
    for p in pareto.points:
        lines.append(
            f"{p.bits},{p.n_skipped},{p.accuracy!r},{p.latency_cost},{p.energy_cost!r}"
        )
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def load_pareto_csv(path) -> ParetoSet:
    meta = {}
    points = []
    with open(path) as f:
        lines = [ln.rstrip("\n") for ln in f]
    body = []
    for ln in lines:
        if ln.startswith("#"):
            key, _, value = ln[1:].strip().partition("=")
            meta[key.strip()] = value
        elif ln:
            body.append(ln)
    if not body or body[0] != "bits,n_skipped,accuracy,latency_cost,energy_cost":
        raise ValidationError(f"{path}: not a pareto csv export")
    for ln in body[1:]:
        bits, n_skipped, acc, lat, energy = ln.split(",")
        points.append(OperatingPoint(bits, int(n_skipped), float(acc),
                                     int(lat), float(energy)))
    try:
        return ParetoSet(
            points=points,
            full_accuracy=float(meta["full_accuracy"]),
            full_cost=int(meta["full_cost"]),
            cost_model=CostModel(energy_per_mac=float(meta["energy_per_mac"])),
        )
    except KeyError as exc:
        raise ValidationError(f"{path}: missing metadata {exc}") from exc
