"""Command line interface.

Subcommands: train, analyze, pareto, simulate, report, plus pipeline to run
the whole chain from one config.  Exit codes: 0 success, 2 validation error,
3 runtime error.  Every command writes its artifacts plus a manifest.json
into one output directory (--out-dir, or a run_id-derived directory under
$ADASKIP_OUT_ROOT).
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import __version__, analysis, datasets, manifest, nnet, runtime, stochdepth
from .config import load_config
from .errors import AdaskipError, EmptyParetoError, ValidationError
from .ioutil import canonical_json, sha256_bytes, sha256_file, write_csv

OUT_ROOT_ENV = "ADASKIP_OUT_ROOT"
MODES = ("baseline", "stochastic")


def make_run_id(command: str, payload: dict) -> str:
    doc = {"tool": __version__, "command": command, "payload": payload}
    return sha256_bytes(canonical_json(doc).encode())


def resolve_out_dir(args, run_id: str) -> str:
    if args.out_dir:
        path = args.out_dir
    else:
        root = os.environ.get(OUT_ROOT_ENV, os.path.join(".", "runs"))
        path = os.path.join(root, f"{args.command}-{run_id[:12]}")
    os.makedirs(path, exist_ok=True)
    return path


def _same_architecture(a, b) -> bool:
    return (a.input_dim, a.num_classes, a.segments, a.activation) == \
           (b.input_dim, b.num_classes, b.segments, b.activation)


def _load_model_checked(path, cfg):
    manifest.check_input(path)
    try:
        model = nnet.load_checkpoint(path)
    except FileNotFoundError as exc:
        raise ValidationError(f"{path}: no such file") from exc
    if cfg is not None and not _same_architecture(model.spec, cfg.spec):
        raise ValidationError(
            f"{path}: checkpoint architecture does not match the config"
        )
    return model


def _history_rows(history):
    return [(h.epoch, h.loss, h.train_acc, h.test_acc) for h in history]


def cmd_train(args) -> int:
    cfg = load_config(args.config, args.seed)
    modes = list(MODES) if args.mode == "both" else [args.mode]
    run_id = make_run_id("train", {"config": cfg.raw, "mode": args.mode})
    out = resolve_out_dir(args, run_id)
    train_ds, test_ds = datasets.make_splits(
        cfg.dataset.kind, cfg.dataset.n_train, cfg.dataset.n_test,
        cfg.dataset.classes, cfg.dataset.input_dim, cfg.dataset.noise,
        cfg.dataset.seed,
    )
    model0 = nnet.init_model(cfg.spec)
    artifacts = []
    for mode in modes:
        trained, history = stochdepth.train(
            model0, train_ds, cfg.train_config(mode), test_ds
        )
        ckpt = f"{mode}.ckpt.json"
        nnet.save_checkpoint(trained, os.path.join(out, ckpt), run_id=run_id)
        hist = f"{mode}_history.csv"
        write_csv(os.path.join(out, hist),
                  ("epoch", "loss", "train_acc", "test_acc"),
                  _history_rows(history), run_id=run_id)
        artifacts += [ckpt, hist]
        final = history[-1]
        print(f"train[{mode}]: epochs={cfg.epochs} "
              f"train_acc={final.train_acc:.4f} test_acc={final.test_acc:.4f}")
    manifest.write_manifest(
        out, run_id, "train", cfg.raw, cfg.seeds(),
        constants={"init_scheme": nnet.INIT_SCHEME},
        artifacts=artifacts,
        inputs={os.path.basename(args.config): sha256_file(args.config)},
    )
    print(f"train: wrote {out}")
    return 0


def cmd_analyze(args) -> int:
    cfg = load_config(args.config, args.seed)
    ckpt_digest = sha256_file(args.checkpoint)
    model = _load_model_checked(args.checkpoint, cfg)
    run_id = make_run_id("analyze", {"config": cfg.raw, "checkpoint": ckpt_digest})
    out = resolve_out_dir(args, run_id)
    _, test_ds = datasets.make_splits(
        cfg.dataset.kind, cfg.dataset.n_train, cfg.dataset.n_test,
        cfg.dataset.classes, cfg.dataset.input_dim, cfg.dataset.noise,
        cfg.dataset.seed,
    )
    cost_model = analysis.CostModel(cfg.analysis.energy_per_mac)
    slist = analysis.sensitivity_scan(model, test_ds)
    points, front = analysis.family_front(model, test_ds, slist, cost_model)
    analysis.save_sensitivity(slist, os.path.join(out, "sensitivity.json"), run_id)
    analysis.save_points(points, front.full_accuracy, front.full_cost, cost_model,
                         os.path.join(out, "points.json"), run_id)
    analysis.save_pareto(front, os.path.join(out, "pareto.json"), run_id)
    analysis.save_pareto_csv(front, os.path.join(out, "pareto_runtime.csv"), run_id)
    manifest.write_manifest(
        out, run_id, "analyze", cfg.raw, cfg.seeds(),
        constants={"energy_per_mac": cost_model.energy_per_mac},
        artifacts=["sensitivity.json", "points.json", "pareto.json",
                   "pareto_runtime.csv"],
        inputs={
            os.path.basename(args.config): sha256_file(args.config),
            os.path.basename(args.checkpoint): ckpt_digest,
        },
    )
    print(f"analyze: {model.spec.num_skippable} skippable blocks, "
          f"{len(front.points)} points on the front")
    print(f"analyze: wrote {out}")
    return 0


def cmd_pareto(args) -> int:
    manifest.check_input(args.points)
    points, full_acc, full_cost, cost_model = analysis.load_points(args.points)
    front = analysis.pareto_filter(points, full_acc, full_cost, cost_model)
    if args.min_acc is not None:
        front = runtime.filter_by_accuracy(front, args.min_acc)
    run_id = make_run_id("pareto", {
        "input": sha256_file(args.points), "min_acc": args.min_acc,
    })
    out = resolve_out_dir(args, run_id)
    analysis.save_pareto(front, os.path.join(out, "pareto.json"), run_id)
    analysis.save_pareto_csv(front, os.path.join(out, "pareto_runtime.csv"), run_id)
    manifest.write_manifest(
        out, run_id, "pareto", {}, {},
        constants={"energy_per_mac": cost_model.energy_per_mac,
                   "min_acc": args.min_acc},
        artifacts=["pareto.json", "pareto_runtime.csv"],
        inputs={os.path.basename(args.points): sha256_file(args.points)},
    )
    print(f"pareto: kept {len(front.points)} of {len(points)} points")
    print(f"pareto: wrote {out}")
    return 0


def _load_pareto_any(path):
    manifest.check_input(path)
    try:
        if path.endswith(".csv"):
            return analysis.load_pareto_csv(path)
        return analysis.load_pareto(path)
    except FileNotFoundError as exc:
        raise ValidationError(f"{path}: no such file") from exc


_COMPARISON_METRICS = (
    "processed", "dropped", "average_accuracy",
    "total_latency_cost", "total_energy_cost", "inferences_per_cost",
)


def cmd_simulate(args) -> int:
    cfg = load_config(args.config, args.seed)
    pareto = _load_pareto_any(args.pareto)
    rt = cfg.runtime
    spm = rt.seconds_per_mac
    if spm is None:
        # Default scale: the unskipped model runs at 1.2x the base period,
        # i.e. the trace mildly overloads the most accurate configuration.
        spm = 1.2 * rt.trace.base_period / pareto.full_cost
    service = runtime.ServiceModel(spm)
    policy = runtime.make_policy(pareto, service,
                                 min_acc=rt.min_acc, delta_req=rt.delta_req)
    if args.trace:
        trace = runtime.load_trace(args.trace)
        trace_generated = False
    else:
        trace = runtime.generate_trace(rt.trace.count, rt.trace.base_period,
                                       rt.trace.deviation, rt.trace.seed)
        trace_generated = True
    run_id = make_run_id("simulate", {
        "config": cfg.raw,
        "pareto": sha256_file(args.pareto),
        "trace": None if trace_generated else sha256_file(args.trace),
    })
    out = resolve_out_dir(args, run_id)

    report = runtime.simulate(policy, trace)
    static = runtime.simulate(runtime.static_policy(policy), trace)

    artifacts = ["report.json", "events.csv", "comparison.csv"]
    runtime.save_report(report, os.path.join(out, "report.json"), run_id)
    runtime.save_events_csv(report.events, os.path.join(out, "events.csv"), run_id)
    rows = [(m, getattr(report, m), getattr(static, m)) for m in _COMPARISON_METRICS]
    write_csv(os.path.join(out, "comparison.csv"),
              ("metric", "adaptive", "static_no_skip"), rows, run_id=run_id)
    if trace_generated:
        runtime.save_trace(trace, os.path.join(out, "trace.csv"), run_id)
        artifacts.append("trace.csv")

    inputs = {
        os.path.basename(args.config): sha256_file(args.config),
        os.path.basename(args.pareto): sha256_file(args.pareto),
    }
    if not trace_generated:
        inputs[os.path.basename(args.trace)] = sha256_file(args.trace)
    manifest.write_manifest(
        out, run_id, "simulate", cfg.raw, cfg.seeds(),
        constants={
            "seconds_per_mac": spm,
            "energy_per_mac": pareto.cost_model.energy_per_mac,
            "delta_req": policy.delta_req,
            "min_acc": policy.min_acc,
        },
        artifacts=artifacts, inputs=inputs,
    )
    print(f"simulate: processed={report.processed} dropped={report.dropped} "
          f"avg_acc={report.average_accuracy:.4f} "
          f"(static processed={static.processed})")
    print(f"simulate: wrote {out}")
    return 0


def _random_skip_configs(bs: int, n: int, samples: int, rng):
    """Uniformly sampled configs with exactly n skipped blocks."""
    if n in (0, bs):
        return [np.full(bs, n == 0, dtype=bool)]
    configs = []
    for _ in range(samples):
        skip = np.ones(bs, dtype=bool)
        skip[rng.choice(bs, size=n, replace=False)] = False
        configs.append(skip)
    return configs


def cmd_report(args) -> int:
    cfg = load_config(args.config, args.seed)
    run_dir = args.run_dir
    ckpts = {m: os.path.join(run_dir, "train", f"{m}.ckpt.json") for m in MODES}
    points_files = {
        m: os.path.join(run_dir, f"analysis-{m}", "points.json") for m in MODES
    }
    for path in list(ckpts.values()) + list(points_files.values()):
        if not os.path.exists(path):
            raise ValidationError(f"{run_dir}: incomplete run, missing {path}")
    run_id = make_run_id("report", {
        "config": cfg.raw,
        "inputs": {m: sha256_file(ckpts[m]) for m in MODES},
    })
    out = resolve_out_dir(args, run_id)
    _, test_ds = datasets.make_splits(
        cfg.dataset.kind, cfg.dataset.n_train, cfg.dataset.n_test,
        cfg.dataset.classes, cfg.dataset.input_dim, cfg.dataset.noise,
        cfg.dataset.seed,
    )
    rng = np.random.Generator(np.random.PCG64(cfg.analysis.random_seed))
    curve_rows, gap_rows = [], []
    for mode in MODES:
        model = _load_model_checked(ckpts[mode], cfg)
        manifest.check_input(points_files[mode])
        family, _, _, _ = analysis.load_points(points_files[mode])
        by_n = {p.n_skipped: p for p in family}
        bs = model.spec.num_skippable
        if set(by_n) != set(range(bs + 1)):
            raise ValidationError(
                f"{points_files[mode]}: expected one family point per "
                f"n_skipped in 0..{bs}"
            )
        for n in range(bs + 1):
            fam = by_n[n]
            configs = _random_skip_configs(bs, n, cfg.analysis.random_samples_per_n, rng)
            accs = [nnet.evaluate(model, test_ds, skip=s) for s in configs]
            best = max(accs + [fam.accuracy])
            worst = min(accs + [fam.accuracy])
            curve_rows.append((
                mode, n, fam.bits, fam.accuracy, fam.latency_cost,
                fam.energy_cost, min(accs), float(np.mean(accs)), max(accs),
                len(accs),
            ))
            gap_rows.append((mode, n, best, worst, best - worst))
    write_csv(os.path.join(out, "curves.csv"),
              ("mode", "n_skipped", "bits", "accuracy", "latency_cost",
               "energy_cost", "rand_min", "rand_mean", "rand_max", "samples"),
              curve_rows, run_id=run_id)
    write_csv(os.path.join(out, "gaps.csv"),
              ("mode", "n_skipped", "best_accuracy", "worst_accuracy", "gap"),
              gap_rows, run_id=run_id)
    manifest.write_manifest(
        out, run_id, "report", cfg.raw, cfg.seeds(),
        constants={"random_samples_per_n": cfg.analysis.random_samples_per_n},
        artifacts=["curves.csv", "gaps.csv"],
        inputs={
            os.path.basename(args.config): sha256_file(args.config),
            **{f"{m}.ckpt.json": sha256_file(ckpts[m]) for m in MODES},
        },
    )
    print(f"report: wrote {out}")
    return 0


def cmd_pipeline(args) -> int:
    """train (both modes) -> analyze (each) -> simulate -> report."""
    cfg = load_config(args.config, args.seed)  # fail fast on a bad config
    run_id = make_run_id("pipeline", {"config": cfg.raw})
    out = resolve_out_dir(args, run_id)
    def ns(**kw):
        return argparse.Namespace(
            config=args.config, seed=args.seed, command=args.command, **kw
        )
    train_dir = os.path.join(out, "train")
    cmd_train(ns(out_dir=train_dir, mode="both"))
    for mode in MODES:
        cmd_analyze(ns(
            out_dir=os.path.join(out, f"analysis-{mode}"),
            checkpoint=os.path.join(train_dir, f"{mode}.ckpt.json"),
        ))
    cmd_simulate(ns(
        out_dir=os.path.join(out, "sim"),
        pareto=os.path.join(out, "analysis-stochastic", "pareto_runtime.csv"),
        trace=None,
    ))
    cmd_report(ns(out_dir=os.path.join(out, "report"), run_dir=out))
    print(f"pipeline: wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adaskip",
        description="Train, analyze and serve depth-adaptive residual classifiers.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="experiment config JSON")
        p.add_argument("--seed", type=int, default=None,
                       help="master seed overriding every seed in the config")
        p.add_argument("--out-dir", default=None,
                       help=f"output directory (default: under ${OUT_ROOT_ENV})")

    p = sub.add_parser("train", help="train baseline/stochastic models")
    common(p)
    p.add_argument("--mode", choices=("baseline", "stochastic", "both"),
                   default="both")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("analyze", help="sensitivity scan and Pareto front")
    common(p)
    p.add_argument("--checkpoint", required=True, help="trained model checkpoint")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("pareto", help="re-filter an operating-point file")
    common(p, config=False)
    p.add_argument("--points", required=True, help="points.json or pareto.json")
    p.add_argument("--min-acc", type=float, default=None,
                   help="drop points at or below this accuracy")
    p.set_defaults(func=cmd_pareto)

    p = sub.add_parser("simulate", help="replay a workload against a Pareto set")
    common(p)
    p.add_argument("--pareto", required=True,
                   help="pareto_runtime.csv or pareto.json")
    p.add_argument("--trace", default=None,
                   help="arrival-time CSV (default: generate from the config)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="accuracy/cost curves from a pipeline run")
    common(p)
    p.add_argument("--run-dir", required=True, help="pipeline output directory")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("pipeline", help="run the full chain into one directory")
    common(p)
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except EmptyParetoError as exc:
        print(f"adaskip: error [E_EMPTY_FRONT] {exc}", file=sys.stderr)
        return 2
    except ValidationError as exc:
        print(f"adaskip: error [E_VALIDATION] {exc}", file=sys.stderr)
        return 2
    except AdaskipError as exc:
        print(f"adaskip: error [E_RUNTIME] {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"adaskip: error [E_IO] {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
