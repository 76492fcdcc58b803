"""Command-line surface: fit models, explain instances, select from a
front, evaluate explained output, and generate synthetic datasets.

Seed precedence: built-in defaults, then the config file, then the
TSCF_SEED environment variable, then the --seed flag. Primary outputs are
byte-stable for identical inputs and seed; wall-clock timings go to a
separate sidecar so they never perturb that guarantee.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import dataio, plots, synth
from .core import TimeSeriesInstance
from .dataio import FileFormatError
from .driver import (
    NoValidSolutionError,
    RunConfig,
    UtilityWeights,
    run_for_instance,
    select_by_utility,
    utility_scores,
)
from .evaluation import baseline_full_swap, build_report, record_for
from .models import (
    ExternalModelBridge,
    fit_knn,
    fit_linear_scorer,
    fit_nearest_centroid,
    load_model,
    predict_labels,
    save_model,
)
from .neighbors import NoUnlikeNeighborError, find_nun

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NO_SOLUTION = 3


def _fail(message: str, code: int = EXIT_USAGE) -> int:
    print(f"tscf: error: {message}", file=sys.stderr)
    return code


def _resolve_seed(flag_seed, config_seed: int) -> int:
    env = os.environ.get("TSCF_SEED")
    if flag_seed is not None:
        return flag_seed
    if env is not None:
        return int(env)
    return config_seed


def _load_run_config(args) -> tuple[RunConfig, UtilityWeights]:
    if getattr(args, "config", None):
        cfg, weights = dataio.load_config(args.config)
    else:
        cfg, weights = RunConfig(), UtilityWeights()
    updates = {"seed": _resolve_seed(getattr(args, "seed", None), cfg.seed)}
    if getattr(args, "nun_target_class", None) is not None:
        updates["nun_target_class"] = args.nun_target_class
    if getattr(args, "nun_by_label", False):
        updates["nun_by_label"] = True
    cfg = dataclasses.replace(cfg, **updates)
    if getattr(args, "weights", None):
        weights = UtilityWeights(*args.weights)
    return cfg, weights


# --------------------------------------------------------------------- fit

def cmd_fit(args) -> int:
    try:
        train = dataio.load_dataset(args.train)
        if args.kind == "nearest-centroid":
            model = fit_nearest_centroid(train, temperature=args.tau)
        elif args.kind == "knn":
            model = fit_knn(train, k=args.k)
        elif args.kind == "linear-scorer":
            model = fit_linear_scorer(train, n_components=args.components)
        else:
            return _fail(f"unknown model kind {args.kind!r}")
        save_model(model, args.out)
    except (OSError, ValueError) as exc:
        return _fail(str(exc))

    if args.kind == "linear-scorer":
        print(f"fitted linear scorer: components={model.components.shape[0]} e_max={model.e_max:.6g}")
    else:
        predicted = predict_labels(model, train.values_array())
        accuracy = float(np.mean(predicted == train.labels_array()))
        print(f"fitted {args.kind}: train accuracy {accuracy:.4f}")
    print(f"wrote {args.out}")
    return EXIT_OK


# ----------------------------------------------------------------- explain

def _explain_one(payload: tuple) -> tuple[int, dict, float]:
    """Worker for one instance; returns (instance id, front doc, seconds)."""
    x_values, train, classifier, scorer, cfg, digest, instance_id = payload
    x = TimeSeriesInstance(x_values)
    start = time.monotonic()
    front = run_for_instance(x, train, classifier, scorer, cfg, instance_id)
    elapsed = time.monotonic() - start
    return instance_id, dataio.front_to_doc(front, digest), elapsed


def cmd_explain(args) -> int:
    try:
        cfg, weights = _load_run_config(args)
        test = dataio.load_dataset(args.test)
        train = dataio.load_dataset(args.train)
        scorer = load_model(args.scorer)
        bridge = None
        if args.bridge:
            bridge = ExternalModelBridge(args.bridge).start()
            classifier = bridge
        else:
            classifier = load_model(args.classifier)
        if cfg.nun_target_class is not None and not 0 <= cfg.nun_target_class < train.class_count:
            return _fail(
                f"--nun-target-class {cfg.nun_target_class} outside 0..{train.class_count - 1}"
            )
        instance_ids = dataio.parse_instance_selector(args.instances, len(test))
    except (OSError, ValueError) as exc:
        return _fail(str(exc))

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    digest = dataio.config_hash(cfg, weights)

    jobs = args.jobs
    if bridge is not None and jobs != 1:
        print("bridge classifier is single-consumer; forcing --jobs 1", file=sys.stderr)
        jobs = 1

    payloads = [
        (test.instances[i].values, train, classifier, scorer, cfg, digest, i)
        for i in instance_ids
    ]
    results: dict[int, dict] = {}
    timings: dict[int, float] = {}
    failures: dict[int, Exception] = {}

    def handle(instance_id: int, outcome, elapsed: float | None):
        if isinstance(outcome, Exception):
            failures[instance_id] = outcome
        else:
            results[instance_id] = outcome
            timings[instance_id] = elapsed

    try:
        if jobs == 1:
            for payload in payloads:
                try:
                    instance_id, doc, elapsed = _explain_one(payload)
                    handle(instance_id, doc, elapsed)
                except (NoUnlikeNeighborError, NoValidSolutionError) as exc:
                    if not args.keep_going:
                        return _fail(f"instance {payload[-1]}: {exc}", EXIT_NO_SOLUTION)
                    handle(payload[-1], exc, None)
        else:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                futures = {pool.submit(_explain_one, p): p[-1] for p in payloads}
                for future, instance_id in futures.items():
                    try:
                        got_id, doc, elapsed = future.result()
                        handle(got_id, doc, elapsed)
                    except (NoUnlikeNeighborError, NoValidSolutionError) as exc:
                        if not args.keep_going:
                            return _fail(f"instance {instance_id}: {exc}", EXIT_NO_SOLUTION)
                        handle(instance_id, exc, None)
    finally:
        if bridge is not None:
            bridge.close()

    for instance_id in instance_ids:
        path = out_dir / f"front_{instance_id:04d}.json"
        if instance_id in failures:
            doc = {
                "format_version": dataio.FORMAT_VERSION,
                "config_hash": digest,
                "instance_id": instance_id,
                "seed": cfg.seed + instance_id,
                "error": str(failures[instance_id]),
                "members": [],
            }
        else:
            doc = results[instance_id]
        dataio.dump_json(doc, path)

    # timings are real wall clock, hence a sidecar rather than a primary output
    with open(out_dir / "timings.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["instance_id", "wall_time_s"])
        for instance_id in instance_ids:
            if instance_id in timings:
                writer.writerow([instance_id, f"{timings[instance_id]:.6f}"])

    n_ok = len(results)
    print(f"explained {n_ok}/{len(instance_ids)} instances into {out_dir}")
    if failures and args.keep_going:
        for instance_id, exc in sorted(failures.items()):
            print(f"instance {instance_id}: {exc}", file=sys.stderr)
    return EXIT_OK


# ------------------------------------------------------------------ select

def cmd_select(args) -> int:
    try:
        weights = UtilityWeights(*args.weights) if args.weights else UtilityWeights()
        front = dataio.load_front(args.front)
        if not front.members:
            return _fail(f"{args.front}: front has no members")
        scores = utility_scores(front, weights)
        best = int(np.argmax(scores))
        member = front.members[best]
    except (OSError, ValueError) as exc:
        return _fail(str(exc))

    doc = {
        "format_version": dataio.FORMAT_VERSION,
        "member_index": best,
        "utility": float(scores[best]),
        "mask": dataio.mask_to_doc(member.mask),
        "counterfactual": member.counterfactual.values.T.tolist(),
        "objectives": {
            "o1": member.objectives.o1,
            "o2": member.objectives.o2,
            "o3": member.objectives.o3,
            "o4": member.objectives.o4,
            "valid": member.objectives.valid,
        },
    }
    if args.out:
        dataio.dump_json(doc, args.out)
        print(f"wrote {args.out}")
    obj = member.objectives
    print(
        f"selected member {best}/{len(front.members)} utility={scores[best]:.6f} "
        f"o1={obj.o1:.4f} o2={obj.o2:.4f} o3={obj.o3:.4f} o4={obj.o4:.4f}"
    )
    return EXIT_OK


# ---------------------------------------------------------------- evaluate

def _read_timings(explained: Path) -> dict[int, float]:
    path = explained / "timings.csv"
    if not path.exists():
        return {}
    with open(path, newline="", encoding="utf-8") as fh:
        return {int(row["instance_id"]): float(row["wall_time_s"]) for row in csv.DictReader(fh)}


def cmd_evaluate(args) -> int:
    try:
        explained = Path(args.explained)
        front_paths = sorted(explained.glob("front_*.json"))
        if not front_paths:
            return _fail(f"no front files found in {explained}")
        weights = UtilityWeights(*args.weights) if args.weights else UtilityWeights()
        test = dataio.load_dataset(args.test)
        train = dataio.load_dataset(args.train)
        scorer = load_model(args.scorer)
        classifier = load_model(args.classifier) if args.classifier else None
        if args.baseline and classifier is None:
            return _fail("--baseline requires --classifier")
    except (OSError, ValueError) as exc:
        return _fail(str(exc))

    train_errors = scorer.reconstruction_errors(train.values_array())
    timings = _read_timings(explained)
    records = {"multispace": []}
    overlays = []
    seed = None
    try:
        for path in front_paths:
            front = dataio.load_front(path)
            instance_id = front.provenance["instance_id"]
            seed = front.provenance.get("seed", 0) if seed is None else seed
            x = TimeSeriesInstance(test.instances[instance_id].values)
            if not front.members:
                from .evaluation import MetricsRecord

                records["multispace"].append(
                    MetricsRecord(
                        instance_id=instance_id,
                        valid=False,
                        error=front.provenance.get("error", "empty front"),
                    )
                )
                continue
            member = select_by_utility(front, weights)
            records["multispace"].append(
                record_for(
                    instance_id, x, member.mask, member.counterfactual,
                    member.objectives.valid, scorer, train_errors,
                    wall_time_s=timings.get(instance_id, 0.0),
                )
            )
            overlays.append((instance_id, x, member.counterfactual, member.mask))

        if args.baseline:
            records["full_swap"] = []
            for path in front_paths:
                front = dataio.load_front(path)
                instance_id = front.provenance["instance_id"]
                x = TimeSeriesInstance(test.instances[instance_id].values)
                predicted = int(predict_labels(classifier, [x])[0])
                nun_res = find_nun(train, x, predicted, classifier)
                mask, cf = baseline_full_swap(x, nun_res.neighbor)
                valid = int(predict_labels(classifier, [cf])[0]) == nun_res.target_class
                records["full_swap"].append(
                    record_for(instance_id, x, mask, cf, valid, scorer, train_errors)
                )
    except (OSError, ValueError, KeyError, NoUnlikeNeighborError) as exc:
        return _fail(str(exc))

    report = build_report(records, seed if seed is not None else 0)
    dataio.dump_json(report, args.out)
    print(f"wrote {args.out}")
    if args.csv:
        dataio.write_report_csv(report, args.csv)
        print(f"wrote {args.csv}")

    if not args.no_plots:
        fig_dir = args.plot_dir or str(Path(args.out).with_suffix("")) + "_figs"
        written = plots.render_report_figures(report, fig_dir, overlays=overlays)
        print(f"wrote {len(written)} figures to {fig_dir}")

    validity = report["aggregates"]["multispace"]["validity"]
    print(f"validity: {validity:.3f} over {len(records['multispace'])} instances")
    return EXIT_OK


# --------------------------------------------------------------- gen-synth

def cmd_gen_synth(args) -> int:
    try:
        train = synth.generate(args.kind, args.n_train, args.length, args.channels, args.seed)
        test = synth.generate(args.kind, args.n_test, args.length, args.channels, args.seed + 1)
        dataio.save_dataset(train, args.out_train)
        dataio.save_dataset(test, args.out_test)
    except (OSError, ValueError) as exc:
        return _fail(str(exc))
    print(f"wrote {args.out_train} ({args.n_train} instances) and {args.out_test} ({args.n_test})")
    return EXIT_OK


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tscf",
        description="Pareto-optimal counterfactual explanations for time-series classifiers",
    )
    # gen-synth stays out of the advertised command set (internal tooling)
    sub = parser.add_subparsers(
        dest="command", required=True, metavar="{fit,explain,select,evaluate}"
    )

    p_fit = sub.add_parser("fit", help="fit a reference classifier or outlier scorer")
    p_fit.add_argument("--train", required=True, help="training dataset JSON")
    p_fit.add_argument(
        "--kind", required=True, choices=["nearest-centroid", "knn", "linear-scorer"]
    )
    p_fit.add_argument("--out", required=True, help="model file to write")
    p_fit.add_argument("--tau", type=float, default=1.0, help="softmax temperature")
    p_fit.add_argument("--k", type=int, default=5, help="neighbor count")
    p_fit.add_argument("--components", type=int, default=None, help="subspace dimension")
    p_fit.set_defaults(func=cmd_fit)

    p_exp = sub.add_parser("explain", help="generate Pareto fronts for test instances")
    p_exp.add_argument("--test", required=True)
    p_exp.add_argument("--train", required=True)
    p_exp.add_argument("--classifier", help="classifier model JSON")
    p_exp.add_argument("--bridge", help="command line of an external model server")
    p_exp.add_argument("--scorer", required=True, help="outlier scorer model JSON")
    p_exp.add_argument("--config", help="run configuration JSON")
    p_exp.add_argument("--instances", default="all", help="'all', 'a..b', or 'i,j,k'")
    p_exp.add_argument("--out", required=True, help="output directory for front files")
    p_exp.add_argument("--seed", type=int, default=None)
    p_exp.add_argument("--jobs", type=int, default=1)
    p_exp.add_argument("--keep-going", action="store_true")
    p_exp.add_argument("--nun-target-class", type=int, default=None)
    p_exp.add_argument("--nun-by-label", action="store_true")
    p_exp.set_defaults(func=cmd_explain)

    p_sel = sub.add_parser("select", help="pick one member of a front by utility")
    p_sel.add_argument("--front", required=True, help="front JSON file")
    p_sel.add_argument(
        "--weights", type=float, nargs=4, metavar=("W1", "W2", "W3", "W4"), default=None
    )
    p_sel.add_argument("--out", help="write the selected member here")
    p_sel.set_defaults(func=cmd_select)

    p_ev = sub.add_parser("evaluate", help="score explained fronts and write a report")
    p_ev.add_argument("--explained", required=True, help="directory of front files")
    p_ev.add_argument("--test", required=True)
    p_ev.add_argument("--train", required=True)
    p_ev.add_argument("--scorer", required=True)
    p_ev.add_argument("--classifier", help="needed for --baseline")
    p_ev.add_argument("--baseline", action="store_true", help="add the full-swap baseline")
    p_ev.add_argument(
        "--weights", type=float, nargs=4, metavar=("W1", "W2", "W3", "W4"), default=None
    )
    p_ev.add_argument("--out", required=True, help="report JSON path")
    p_ev.add_argument("--csv", help="also write a per-instance CSV")
    p_ev.add_argument("--plot-dir", help="figure directory (default: <out>_figs)")
    p_ev.add_argument("--no-plots", action="store_true")
    p_ev.set_defaults(func=cmd_evaluate)

    p_gen = sub.add_parser("gen-synth")  # internal: seeded synthetic datasets
    p_gen.add_argument("--kind", required=True, choices=sorted(synth.GENERATORS))
    p_gen.add_argument("--n-train", type=int, default=60)
    p_gen.add_argument("--n-test", type=int, default=30)
    p_gen.add_argument("--length", type=int, default=64)
    p_gen.add_argument("--channels", type=int, default=1)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--out-train", required=True)
    p_gen.add_argument("--out-test", required=True)
    p_gen.set_defaults(func=cmd_gen_synth)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "explain" and not args.bridge and not args.classifier:
        return _fail("explain needs --classifier or --bridge")
    try:
        return args.func(args)
    except FileFormatError as exc:
        return _fail(str(exc))


if __name__ == "__main__":
    sys.exit(main())
