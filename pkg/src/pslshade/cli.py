"""Command-line interface: run experiments, score stores, dump diagnostics."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .benchmark import COMBOS, ConfigurationError, apply_transformation, \
    make_suite, make_transformation
from .harness import (
    SCOREBOARD_SCHEMA,
    ResultStore,
    aggregate_diagnostics,
    load_config,
    run_experiment,
    score_pipeline,
    suite_seed,
    transform_seed,
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pslshade",
        description="LSHADE / pre-screening LSHADE benchmark harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute an experiment config")
    run.add_argument("--config", required=True, help="experiment config file")
    run.add_argument("--out", required=True, help="result store directory")
    run.add_argument("--seed", type=int, default=None, help="override master seed")
    run.add_argument("--force", action="store_true", help="recompute completed cells")
    run.add_argument("--workers", type=int, default=None, help="worker processes")

    score = sub.add_parser("score", help="aggregate stores into a scoreboard")
    score.add_argument("stores", nargs="+", help="result store directories")
    score.add_argument("--algorithms", default=None,
                       help="comma-separated subset of algorithm labels")
    score.add_argument("--out", default=None, help="also write the scoreboard CSV here")

    diag = sub.add_parser("diag", help="emit per-generation diagnostics tables")
    diag.add_argument("store", help="result store directory")
    diag.add_argument("--out", default=None,
                      help="output CSV (default: <store>/diag_summary.csv)")

    suite = sub.add_parser("suite", help="print a suite manifest")
    suite.add_argument("--dim", type=int, required=True)
    suite.add_argument("--seed", type=int, default=1, help="master seed")
    suite.add_argument("--combo", default="none", choices=COMBOS)
    return parser


def _cmd_run(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config = replace(config, master_seed=args.seed)
        config.validate()
    done = {"count": 0}

    def progress(i, total, entry):
        done["count"] = i
        if i % 50 == 0 or i == total:
            print(f"[{i}/{total}] {entry[0]} {entry[1]} {entry[2]} "
                  f"{entry[3]}D r{entry[4]}: {entry[5]}", flush=True)

    store = run_experiment(config, args.out, workers=args.workers, force=args.force,
                           progress=progress)
    failed = list(store.root.glob("records/*/*.failed"))
    print(f"store: {store.root} ({done['count']} new cells, {len(failed)} failed)")
    if len(config.algorithms) >= 1 and not failed:
        board = store.scoreboard()
        _print_scoreboard(board)
    return 0


def _print_scoreboard(board) -> None:
    print(f"{'algorithm':<24}{'SNE':>10}{'SR':>10}{'Score1':>9}{'Score2':>9}{'Score':>9}")
    for label, row in sorted(board.rows.items()):
        print(f"{label:<24}{row.sne:>10.2f}{row.sr:>10.2f}"
              f"{row.score1:>9.2f}{row.score2:>9.2f}{row.score:>9.2f}")


def _cmd_score(args) -> int:
    records = []
    labels_seen = set()
    for root in args.stores:
        store = ResultStore(root)
        batch = store.read_all_records()
        if not batch:
            raise ConfigurationError(f"store {root} contains no records")
        batch_labels = {r.algorithm for r in batch}
        clash = batch_labels & labels_seen
        if clash:
            # same label from two stores: qualify with the store name
            suffix = Path(root).name
            for r in batch:
                if r.algorithm in clash:
                    r.algorithm = f"{r.algorithm}@{suffix}"
        labels_seen |= {r.algorithm for r in batch}
        records.extend(batch)
    algorithms = None
    if args.algorithms:
        algorithms = [a.strip() for a in args.algorithms.split(",")]
    board = score_pipeline(records, algorithms=algorithms)
    _print_scoreboard(board)
    if args.out:
        lines = [SCOREBOARD_SCHEMA, "algorithm,sne,sr,score1,score2,score"]
        for label, row in sorted(board.rows.items()):
            lines.append(",".join([label, repr(row.sne), repr(row.sr),
                                   repr(row.score1), repr(row.score2),
                                   repr(row.score)]))
        Path(args.out).write_text("\n".join(lines) + "\n")
        print(f"wrote {args.out}")
    return 0


def _cmd_diag(args) -> int:
    store = ResultStore(args.store)
    rows = aggregate_diagnostics(store)
    if not rows:
        raise ConfigurationError(f"store {args.store} contains no diagnostics")
    out = Path(args.out) if args.out else store.root / "diag_summary.csv"
    lines = ["# pslshade diag summary v1",
             "algorithm,function,dim,generation,nfe,accuracy,r2,tau,hypervolume,runs"]
    for row in rows:
        lines.append(",".join(str(v) for v in row))
    out.write_text("\n".join(lines) + "\n")
    print(f"wrote {out} ({len(rows)} rows)")
    return 0


def _cmd_suite(args) -> int:
    suite = make_suite(args.dim, suite_seed(args.seed, args.dim))
    for f in suite:
        if args.combo != "none":
            spec = make_transformation(
                args.combo, args.dim,
                transform_seed(args.seed, f.id, args.combo, args.dim))
            f = apply_transformation(f, spec)
        print(f.manifest_row())
    return 0


def main(argv=None) -> int:
    from threadpoolctl import threadpool_limits
    threadpool_limits(limits=1)

    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {"run": _cmd_run, "score": _cmd_score, "diag": _cmd_diag,
                "suite": _cmd_suite}
    try:
        return handlers[args.command](args)
    except (ConfigurationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
