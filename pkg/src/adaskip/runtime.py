"""Load-adaptive serving loop over a Pareto set of skip configurations.

The runtime holds one current configuration, starting from the most accurate
point.  An arrival while the single server is busy is dropped and the runtime
moves one step toward more skipping (cheaper, less accurate); an arrival
after an idle gap longer than delta_req moves one step back toward less
skipping before serving.  Both moves saturate at the ends of the Pareto set.
Time is virtual: a served request occupies the server for
latency_cost * seconds_per_mac.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .analysis import OperatingPoint, ParetoSet
from .errors import EmptyParetoError, ValidationError

REPORT_FORMAT = "adaskip.simreport"
TRACE_FORMAT_HEADER = "arrival_time"
FORMAT_VERSION = 1

# Default accuracy floor: this many absolute accuracy points below the
# unskipped model ("10% below" read as percentage points).
DEFAULT_MIN_ACC_DROP = 0.10


@dataclass(frozen=True)
class ServiceModel:
    """Virtual service time: analytic latency cost times a seconds-per-MAC
    scale constant."""

    seconds_per_mac: float

    def __post_init__(self):
        if not self.seconds_per_mac > 0.0:
            raise ValidationError("seconds_per_mac must be positive")

    def service_time(self, point: OperatingPoint) -> float:
        return point.latency_cost * self.seconds_per_mac


def filter_by_accuracy(pareto: ParetoSet, min_acc: float) -> ParetoSet:
    """Keep exactly the points with accuracy strictly above the floor."""
    kept = [p for p in pareto.points if p.accuracy > min_acc]
    if not kept:
        raise EmptyParetoError(
            f"no operating point has accuracy > {min_acc}; lower the floor"
        )
    return ParetoSet(kept, pareto.full_accuracy, pareto.full_cost, pareto.cost_model)


@dataclass(frozen=True)
class RuntimePolicy:
    """Filtered Pareto set plus the adaptation thresholds."""

    pareto: ParetoSet
    service: ServiceModel
    delta_req: float
    min_acc: float

    def __post_init__(self):
        if not self.delta_req > 0.0:
            raise ValidationError("delta_req must be positive")


def make_policy(pareto: ParetoSet, service: ServiceModel,
                min_acc: float | None = None,
                delta_req: float | None = None) -> RuntimePolicy:
    """Apply the accuracy floor and defaults.

    min_acc defaults to DEFAULT_MIN_ACC_DROP below the unskipped model's
    accuracy; delta_req defaults to the unskipped model's service time.
    """
    if min_acc is None:
        min_acc = pareto.full_accuracy - DEFAULT_MIN_ACC_DROP
    if delta_req is None:
        delta_req = pareto.full_cost * service.seconds_per_mac
    filtered = filter_by_accuracy(pareto, min_acc)
    return RuntimePolicy(filtered, service, delta_req, min_acc)


@dataclass(frozen=True)
class RuntimeState:
    """Serving-loop state folded over arrivals by step()."""

    index: int = 0
    t_last: float = 0.0          # time of the last processed request
    busy_until: float = 0.0
    t_prev: float = -np.inf      # time of the last arrival of any kind
    processed: int = 0
    dropped: int = 0
    increases: int = 0
    decreases: int = 0
    usage: tuple[int, ...] = ()  # processed count per pareto index

    @classmethod
    def initial(cls, policy: RuntimePolicy) -> "RuntimeState":
        return cls(usage=(0,) * len(policy.pareto.points))


@dataclass(frozen=True)
class StepEvent:
    t: float
    action: str  # "processed" | "dropped"
    index: int   # current pareto index after the event
    bits: str


def step(state: RuntimeState, policy: RuntimePolicy, t_now: float):
    """Feed one arrival; returns (new state, event).

    Busy server: the request is dropped and the runtime moves one step
    toward more skipping.  Idle gap above delta_req: one step toward less
    skipping before serving.  An arrival exactly at busy_until is served.
    """
    if not np.isfinite(t_now) or t_now <= state.t_prev:
        raise ValidationError(
            f"arrivals must be strictly increasing, got {t_now} after {state.t_prev}"
        )
    points = policy.pareto.points
    last = len(points) - 1
    if t_now < state.busy_until:
        index = min(state.index + 1, last)
        new = replace(
            state,
            index=index,
            t_prev=t_now,
            dropped=state.dropped + 1,
            increases=state.increases + (index - state.index),
        )
        return new, StepEvent(t_now, "dropped", index, points[index].bits)
    index = state.index
    if t_now - state.t_last > policy.delta_req:
        index = max(index - 1, 0)
    point = points[index]
    usage = list(state.usage)
    usage[index] += 1
    new = replace(
        state,
        index=index,
        t_last=t_now,
        busy_until=t_now + policy.service.service_time(point),
        t_prev=t_now,
        processed=state.processed + 1,
        decreases=state.decreases + (state.index - index),
        usage=tuple(usage),
    )
    return new, StepEvent(t_now, "processed", index, point.bits)


# -- workload -------------------------------------------------------------

@dataclass(frozen=True)
class WorkloadTrace:
    """Strictly increasing virtual arrival times."""

    times: np.ndarray
    base_period: float
    deviation: float
    seed: int

    def __len__(self) -> int:
        return len(self.times)


def generate_trace(count: int, base_period: float, deviation: float,
                   seed: int) -> WorkloadTrace:
    """Near-periodic arrivals: every gap equals base_period except each 10th
    gap, which is scaled by a uniform factor from [1-deviation, 1+deviation].
    """
    if count < 1:
        raise ValidationError(f"count must be >= 1, got {count}")
    if base_period <= 0.0:
        raise ValidationError("base_period must be positive")
    if not 0.0 <= deviation < 1.0:
        raise ValidationError(f"deviation must be in [0, 1), got {deviation}")
    rng = np.random.Generator(np.random.PCG64(seed))
    gaps = np.full(count, base_period)
    deviated = np.arange(10, count + 1, 10) - 1
    if deviation > 0.0 and len(deviated):
        factors = rng.uniform(1.0 - deviation, 1.0 + deviation, size=len(deviated))
        gaps[deviated] *= factors
    return WorkloadTrace(np.cumsum(gaps), base_period, deviation, seed)


def save_trace(trace: WorkloadTrace, path, run_id: str | None = None):
    lines = []
    if run_id is not None:
        lines.append(f"# run_id={run_id}")
    lines.append(TRACE_FORMAT_HEADER)
    lines.extend(repr(float(t)) for t in trace.times)
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def load_trace(path) -> WorkloadTrace:
    with open(path) as f:
        lines = [ln.rstrip("\n") for ln in f if not ln.startswith("#") and ln.strip()]
    if not lines or lines[0] != TRACE_FORMAT_HEADER:
        raise ValidationError(f"{path}: not a trace file")
    times = np.array([float(v) for v in lines[1:]])
    if len(times) == 0 or not (np.diff(times) > 0).all() or times[0] <= 0:
        raise ValidationError(f"{path}: arrival times must be positive and strictly increasing")
    return WorkloadTrace(times, base_period=float("nan"), deviation=float("nan"), seed=-1)


# -- simulation -----------------------------------------------------------

@dataclass
class SimReport:
    """Counters, efficiency metrics and the full event log of one run."""

    processed: int
    dropped: int
    increases: int
    decreases: int
    average_accuracy: float
    total_latency_cost: int
    total_energy_cost: float
    inferences_per_cost: float
    usage: list[dict]
    min_acc: float
    delta_req: float
    seconds_per_mac: float
    events: list[StepEvent]


def simulate(policy: RuntimePolicy, trace: WorkloadTrace) -> SimReport:
    """Fold the serving loop over a trace (deterministic replay)."""
    state = RuntimeState.initial(policy)
    events = []
    for t in trace.times:
        state, event = step(state, policy, float(t))
        events.append(event)
    points = policy.pareto.points
    total_latency = sum(c * p.latency_cost for c, p in zip(state.usage, points))
    total_energy = sum(c * p.energy_cost for c, p in zip(state.usage, points))
    acc_sum = sum(c * p.accuracy for c, p in zip(state.usage, points))
    usage = [
        {"bits": p.bits, "n_skipped": p.n_skipped, "count": c}
        for p, c in zip(points, state.usage)
    ]
    return SimReport(
        processed=state.processed,
        dropped=state.dropped,
        increases=state.increases,
        decreases=state.decreases,
        average_accuracy=acc_sum / state.processed if state.processed else 0.0,
        total_latency_cost=int(total_latency),
        total_energy_cost=float(total_energy),
        inferences_per_cost=state.processed / total_energy if total_energy else 0.0,
        usage=usage,
        min_acc=policy.min_acc,
        delta_req=policy.delta_req,
        seconds_per_mac=policy.service.seconds_per_mac,
        events=events,
    )


def static_policy(policy: RuntimePolicy) -> RuntimePolicy:
    """Degenerate policy pinned to the most accurate point (no adaptation)."""
    pinned = ParetoSet(
        policy.pareto.points[:1],
        policy.pareto.full_accuracy,
        policy.pareto.full_cost,
        policy.pareto.cost_model,
    )
    return RuntimePolicy(pinned, policy.service, policy.delta_req, policy.min_acc)


def counters_from_events(events) -> dict:
    """Re-derive every counter from the event log alone (replay check)."""
    processed = dropped = increases = decreases = 0
    prev = 0
    for e in events:
        if e.action == "dropped":
            dropped += 1
            increases += e.index - prev
        else:
            processed += 1
            decreases += prev - e.index
        prev = e.index
    return {
        "processed": processed,
        "dropped": dropped,
        "increases": increases,
        "decreases": decreases,
    }


def save_report(report: SimReport, path, run_id: str | None = None):
    doc = {
        "format": REPORT_FORMAT,
        "version": FORMAT_VERSION,
        "processed": report.processed,
        "dropped": report.dropped,
        "increases": report.increases,
        "decreases": report.decreases,
        "average_accuracy": report.average_accuracy,
        "total_latency_cost": report.total_latency_cost,
        "total_energy_cost": report.total_energy_cost,
        "inferences_per_cost": report.inferences_per_cost,
        "usage": report.usage,
        "min_acc": report.min_acc,
        "delta_req": report.delta_req,
        "seconds_per_mac": report.seconds_per_mac,
    }
    if run_id is not None:
        doc["run_id"] = run_id
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def save_events_csv(events, path, run_id: str | None = None):
    lines = []
    if run_id is not None:
        lines.append(f"# run_id={run_id}")
    lines.append("t,action,index,bits")
    for e in events:
        lines.append(f"{e.t!r},{e.action},{e.index},{e.bits}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def load_events_csv(path) -> list[StepEvent]:
    with open(path) as f:
        lines = [ln.rstrip("\n") for ln in f if not ln.startswith("#") and ln.strip()]
    if not lines or lines[0] != "t,action,index,bits":
        raise ValidationError(f"{path}: not an event log")
    events = []
    for ln in lines[1:]:
        t, action, index, bits = ln.split(",")
        events.append(StepEvent(float(t), action, int(index), bits))
    return events
