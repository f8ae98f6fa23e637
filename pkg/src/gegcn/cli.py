"""Command-line entry point: ``gegcn {convert,precompute,train,sweep,report}``."""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, fields
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .flow import FlowConfig, SequenceFileError, load_sequence, run_flow, save_sequence, \
    sequence_stats
from .graph import GraphValidationError, add_self_loops, homophily_index
from .io import FORMATS, GraphFormatError, load_graph, save_graph
from .model import (HETEROPHILIC_SPLIT, HOMOPHILIC_SPLIT, MODES, RunMetrics, SplitSpec, TrainConfig,
                    make_split, run_seed, summarize, sweep)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3
SPLITS = {"heterophilic": HETEROPHILIC_SPLIT, "homophilic": HOMOPHILIC_SPLIT}


class ConfigError(ValueError):
    pass


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _write_atomic(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _read_config(path):
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config file must hold a JSON object")
    return doc


def _resolve(cls, file_section, args):
    """Defaults, then the config file section, then any flag that was given."""
    names = {f.name for f in fields(cls)}
    unknown = set(file_section) - names
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys in config: {sorted(unknown)}")
    values = dict(file_section)
    for name in names:
        flag = getattr(args, name, None)
        if flag is not None:
            values[name] = flag
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def _seed_list(args, cfg_doc, default):
    if args.seed_list:
        return [int(s) for s in args.seed_list.split(",")]
    n = args.seeds if args.seeds is not None else cfg_doc.get("seeds", default)
    start = args.seed if args.seed is not None else 0
    return list(range(start, start + int(n)))


def _fractions(args, cfg_doc):
    name = args.split or cfg_doc.get("split", "heterophilic")
    if name not in SPLITS:
        raise ConfigError(f"split must be one of {sorted(SPLITS)}")
    return name, SPLITS[name]


def _load_inputs(args, mode):
    graph = load_graph(args.graph, args.format)
    seq = None
    if mode != "gcn-baseline":
        if args.seq is None:
            raise ConfigError(f"mode {mode!r} needs --seq")
        seq = load_sequence(args.seq[0], add_self_loops(graph))
    return graph, seq


# ---------------------------------------------------------------- commands

def cmd_convert(args):
    lcc = None if args.keep_components is None else not args.keep_components
    g = load_graph(args.input, args.format, largest_component=lcc)
    save_graph(g, args.out)
    h = homophily_index(g) if g.labels is not None else float("nan")
    print(f"{g.name or args.input}: n={g.n} edges={g.num_edges} "
          f"features={0 if g.features is None else g.features.shape[1]} "
          f"classes={g.num_classes} homophily={h:.4f}")
    return EXIT_OK


def cmd_precompute(args):
    doc = _read_config(args.config)
    cfg = _resolve(FlowConfig, doc.get("flow", {}), args)
    g = add_self_loops(load_graph(args.graph, args.format))
    t0 = time.perf_counter()
    seq = run_flow(g, cfg)
    elapsed = time.perf_counter() - t0
    seq.created = _now()
    save_sequence(seq, args.out)
    print(f"flow: {g.num_edges} edges, T={cfg.T}, {elapsed:.2f} s")
    for row in sequence_stats(seq):
        print("step {step:2d}  kappa [{kappa_min:+.4f} {kappa_mean:+.4f} {kappa_max:+.4f}]  "
              "w [{w_min:.4g} {w_mean:.4g} {w_max:.4g}]  clamped {clamped}".format(**row))
    return EXIT_OK


def _train_cell(payload):
    graph, seq, mode, cfg, seed, split = payload
    return run_seed(graph, seq, mode, cfg, seed, split=split)


def _pool_map(fn, items, workers):
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def cmd_train(args):
    doc = _read_config(args.config)
    mode = args.mode or doc.get("mode", "gegcn")
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}")
    cfg = _resolve(TrainConfig, doc.get("train", {}), args)
    seeds = _seed_list(args, doc, cfg.seeds)
    split_name, fractions = _fractions(args, doc)
    graph, seq = _load_inputs(args, mode)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    splits = {}
    for s in seeds:
        path = out / f"split_seed{s}.json"
        if args.reuse_splits and path.exists():
            splits[s] = SplitSpec.from_dict(json.loads(path.read_text()))
        else:
            splits[s] = make_split(graph.labels, fractions, s)
            _write_atomic(path, json.dumps(splits[s].to_dict()))
    manifest = {"tool_version": __version__, "created": _now(), "mode": mode,
                "train": asdict(cfg), "split": split_name, "seeds": seeds,
                "graph": str(args.graph), "dataset": graph.name,
                "graph_sha256": graph.content_hash(),
                "flow": asdict(seq.config) if seq is not None else None}
    _write_atomic(out / "manifest.json", json.dumps(manifest, indent=2))

    results = _pool_map(_train_cell, [(graph, seq, mode, cfg, s, splits[s]) for s in seeds],
                        args.workers)
    accs, failed = [], []
    for m in results:
        m.config["split"] = split_name
        _write_atomic(out / f"run_{mode}_seed{m.seed}.json", m.to_json())
        if m.status == "ok":
            accs.append(m.test_acc)
        else:
            failed.append(m)
            print(f"seed {m.seed}: failed at epoch {m.failed_epoch}", file=sys.stderr)
    mean, std = summarize(accs)
    print(f"{graph.name or 'graph'} {mode}: test accuracy {100 * mean:.2f} ± {100 * std:.2f} "
          f"over {len(accs)} seeds")
    return EXIT_RUNTIME if not accs else EXIT_OK


def cmd_sweep(args):
    doc = _read_config(args.config)
    mode = args.mode or doc.get("mode", "gegcn")
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}")
    cfg = _resolve(TrainConfig, doc.get("train", {}), args)
    seeds = _seed_list(args, doc, cfg.seeds)
    _, fractions = _fractions(args, doc)
    try:
        grid = [int(x) for x in args.grid.split(",")]
    except ValueError:
        raise ConfigError("--grid must be a comma-separated list of integers") from None
    graph = load_graph(args.graph, args.format)
    seq = None
    if mode != "gcn-baseline" or args.kind == "flow-T":
        if not args.seq:
            raise ConfigError("this sweep needs --seq")
        loaded = [load_sequence(p, add_self_loops(graph)) for p in args.seq]
        seq = loaded[0] if len(loaded) == 1 else {s.T: s for s in loaded}
        if args.kind == "flow-T" and isinstance(seq, dict):
            missing = [T for T in grid if T not in seq]
            if missing:
                raise ConfigError(f"no sequence file for T in {missing}")
    t0 = time.perf_counter()
    rows = sweep(args.kind, grid, graph, seq, mode, cfg, seeds, fractions=fractions)
    buf = [["grid_value", "mean", "std", "n_seeds", "errors"]]
    for r in rows:
        buf.append([r["grid_value"], f"{r['mean']:.6f}", f"{r['std']:.6f}", r["n_seeds"],
                    " | ".join(r["errors"])])
        print(f"{args.kind}={r['grid_value']:>3}: {100 * r['mean']:.2f} ± {100 * r['std']:.2f} "
              f"({r['n_seeds']} seeds)" + (f"  [{len(r['errors'])} failed]" if r["errors"] else ""))
    _write_csv(args.out, buf)
    manifest = {"tool_version": __version__, "created": _now(), "kind": args.kind, "grid": grid,
                "mode": mode, "train": asdict(cfg), "seeds": seeds, "graph": str(args.graph),
                "elapsed_s": time.perf_counter() - t0}
    _write_atomic(str(args.out) + ".manifest.json", json.dumps(manifest, indent=2))
    return EXIT_OK


def _write_csv(path, rows):
    import io as _io
    sio = _io.StringIO()
    csv.writer(sio, lineterminator="\n").writerows(rows)
    _write_atomic(path, sio.getvalue())


def collect_runs(run_dirs):
    runs = []
    for d in run_dirs:
        for p in sorted(Path(d).glob("run_*.json")):
            runs.append(RunMetrics.from_dict(json.loads(p.read_text(encoding="utf-8"))))
    return runs


def report_table(runs):
    """Rows ``(dataset, mode, mean, std, n_seeds, n_failed)`` grouped from RunMetrics."""
    groups = {}
    for m in runs:
        key = (m.config.get("dataset") or "graph", m.config.get("mode", "?"))
        groups.setdefault(key, []).append(m)
    out = []
    for (ds, mode), ms in sorted(groups.items()):
        ok = [m.test_acc for m in ms if m.status == "ok"]
        mean, std = summarize(ok)
        out.append((ds, mode, mean, std, len(ok), len(ms) - len(ok)))
    return out


def cmd_report(args):
    runs = collect_runs(args.run_dirs)
    if not runs:
        print("error: no runs found in " + ", ".join(map(str, args.run_dirs)), file=sys.stderr)
        return EXIT_CONFIG
    table = report_table(runs)
    datasets = sorted({r[0] for r in table})
    modes = [m for m in MODES if any(r[1] == m for r in table)]
    cell = {(r[0], r[1]): r for r in table}
    wide = [["mode"] + datasets]
    for mode in modes:
        row = [mode]
        for ds in datasets:
            r = cell.get((ds, mode))
            row.append("missing" if r is None else f"{100 * r[2]:.2f} ± {100 * r[3]:.2f}")
        wide.append(row)
    _write_csv(args.out, wide)
    if args.long:
        _write_csv(args.long, [["dataset", "mode", "mean", "std", "n_seeds", "n_failed"]]
                   + [[r[0], r[1], f"{r[2]:.6f}", f"{r[3]:.6f}", r[4], r[5]] for r in table])
    for row in wide:
        print(",".join(row))
    return EXIT_OK


# ------------------------------------------------------------------ parser

def _add_train_flags(p):
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--lr", type=float)
    p.add_argument("--weight-decay", dest="weight_decay", type=float)
    p.add_argument("--dropout", type=float)
    p.add_argument("--hidden", type=int)
    p.add_argument("--layers", type=int)
    p.add_argument("--max-epochs", dest="max_epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--lstm-hidden", dest="lstm_hidden", type=int)
    p.add_argument("--selfloop-mode", dest="selfloop_mode", choices=("shared", "per-node-bias"))
    p.add_argument("--zscore", action="store_true", default=None)
    p.add_argument("--split", choices=sorted(SPLITS))
    p.add_argument("--seed", type=int, help="first seed (default 0)")
    p.add_argument("--seeds", type=int, help="number of seeds")
    p.add_argument("--seed-list", dest="seed_list", help="explicit comma-separated seeds")
    p.add_argument("--workers", type=int, default=1)


def build_parser():
    parser = argparse.ArgumentParser(prog="gegcn", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="raw dataset to normalized JSON")
    p.add_argument("input")
    p.add_argument("--format", choices=FORMATS, required=True)
    p.add_argument("--keep-components", action="store_true", default=None,
                   help="keep every component instead of the largest one")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_convert)

    p = sub.add_parser("precompute", help="run the Ricci flow and write a sequence file")
    p.add_argument("--graph", required=True)
    p.add_argument("--format", choices=FORMATS, default="normalized-json")
    p.add_argument("--config")
    p.add_argument("--T", type=int)
    p.add_argument("--delta", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--eps", type=float)
    p.add_argument("--method", choices=("exact", "sinkhorn"))
    p.add_argument("--kernel", choices=("ma-yang", "ollivier"))
    p.add_argument("--w-min", dest="w_min", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--normalize", action="store_true", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_precompute)

    p = sub.add_parser("train", help="train one mode over several seeds")
    p.add_argument("--graph", required=True)
    p.add_argument("--format", choices=FORMATS, default="normalized-json")
    p.add_argument("--seq", action="append")
    p.add_argument("--config")
    p.add_argument("--reuse-splits", action="store_true",
                   help="read split_seed*.json from --out when present")
    p.add_argument("--out", required=True)
    _add_train_flags(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("sweep", help="depth or flow-horizon sweep")
    p.add_argument("--kind", choices=("depth", "flow-T"), required=True)
    p.add_argument("--grid", required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--format", choices=FORMATS, default="normalized-json")
    p.add_argument("--seq", action="append",
                   help="sequence file; repeat once per T, or give one long sequence to truncate")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    _add_train_flags(p)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("report", help="aggregate run directories into a comparison table")
    p.add_argument("run_dirs", nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--long", help="also write a long-form CSV here")
    p.set_defaults(fn=cmd_report)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, GraphFormatError, GraphValidationError, SequenceFileError,
            FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
