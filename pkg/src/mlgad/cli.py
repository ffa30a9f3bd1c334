"""Command-line front end.

Exit codes: 0 success, 1 runtime failure (including undefined metrics
without ``--allow-degenerate`` or oracle mismatches), 2 usage errors.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .config import RunConfig, build_run_config, read_config_file
from .data import Dataset, split, synth_multi_graph, synth_single_graph
from .errors import ConfigError, DomainError
from .graph_core import Graph, composite_feature
from .io import atomic_write_text, read_any, write_graph_dir, write_graphs_jsonl
from .pipeline import evaluate, model_from_json, model_to_json, prepare, train
from .sampler import SamplerCache, oracle_check

log = logging.getLogger("mlgad")

PRECEDENCE = ("Values are taken from command-line flags first, then from the --config "
              "file (one 'key = value' per line, keys as the long flag names with "
              "underscores), then from built-in defaults.")


class UsageError(Exception):
    pass


def _global_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    g = p.add_argument_group("global options")
    g.add_argument("--seed", type=int, help="random seed (default 0)")
    g.add_argument("--threads", type=int, help="sampler worker threads (default 1)")
    g.add_argument("--out", help="output path (written atomically)")
    g.add_argument("--config", help="key = value config file")
    g.add_argument("--allow-degenerate", action="store_const", const=True,
                   help="exit 0 even when a level's AUROC/AUPRC is undefined")
    g.add_argument("-v", "--verbose", action="store_const", const=True,
                   help="log progress to stderr")
    return p


def _train_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("training options")
    g.add_argument("--input", help="dataset: a graph directory or a JSON-lines file")
    g.add_argument("--depth", type=int, help="sampling hops (default 2)")
    g.add_argument("--decay", type=float, help="hop-decay pooling factor (default 0.5)")
    g.add_argument("--hidden-dim", type=int, help="hidden width (default 32)")
    g.add_argument("--propagation-steps", type=int, help="feature propagation steps (default 2)")
    g.add_argument("--num-layers", type=int, help="stitched layers per tower (default 2)")
    g.add_argument("--lr", type=float, help="learning rate (default 1e-3)")
    g.add_argument("--momentum", type=float, help="momentum (default 0.9)")
    g.add_argument("--clip", type=float, help="per-tensor gradient norm cap (default 5)")
    g.add_argument("--epochs", type=int, help="training epochs (default 300)")
    g.add_argument("--train-frac", type=float, help="train fraction (default 0.4)")
    g.add_argument("--levels", help="comma-separated levels to train (default all)")
    g.add_argument("--gamma-mode", choices=("inverse", "direct", "none"),
                   help="anomaly class weight (default inverse: n_normal/n_anomaly)")


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags()
    parser = argparse.ArgumentParser(
        prog="mlgad", description="Multi-level graph anomaly detection toolkit.",
        epilog=PRECEDENCE, parents=[common], argument_default=argparse.SUPPRESS)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("synth", parents=[common], epilog=PRECEDENCE,
                       argument_default=argparse.SUPPRESS,
                       help="generate a synthetic dataset")
    p.add_argument("--kind", choices=("single", "multi"),
                   help="one graph (written as a directory) or many (JSON lines); default multi")
    p.add_argument("--n", type=int, help="nodes of the single graph (default 1000)")
    p.add_argument("--anomaly-rate", type=float, help="single-graph node anomaly rate (default 0.05)")
    p.add_argument("--mode", choices=("contextual", "structural", "mixed"),
                   help="single-graph anomaly type (default mixed)")
    p.add_argument("--num-graphs", type=int, help="multi-graph count (default 200)")
    p.add_argument("--min-nodes", type=int, help="smallest multi-graph member (default 30)")
    p.add_argument("--max-nodes-per-graph", type=int, help="largest member (default 60)")
    p.add_argument("--graph-anomaly-rate", type=float, help="anomalous graph share (default 0.2)")

    p = sub.add_parser("sample", parents=[common], epilog=PRECEDENCE,
                       argument_default=argparse.SUPPRESS,
                       help="max-RQ subgraph for every target, as JSON lines")
    p.add_argument("--input", help="graph directory or JSON-lines file")
    p.add_argument("--targets", choices=("nodes", "edges", "all"), help="default nodes")
    p.add_argument("--depth", type=int, help="hops (default 2)")
    p.add_argument("--decay", type=float, help="hop decay (default 0.5)")

    p = sub.add_parser("train", parents=[common], epilog=PRECEDENCE,
                       argument_default=argparse.SUPPRESS,
                       help="train and write a checkpoint (--out) and history JSON")
    _train_flags(p)
    p.add_argument("--mask-level", action="append", dest="mask_levels",
                   choices=("node", "edge", "graph"), help="mask a level (repeatable)")
    p.add_argument("--history", help="history path (default <out>.history.json)")

    p = sub.add_parser("eval", parents=[common], epilog=PRECEDENCE,
                       argument_default=argparse.SUPPRESS,
                       help="score a checkpoint, write a metrics report")
    p.add_argument("--input", help="dataset used for training")
    p.add_argument("--checkpoint", help="checkpoint written by 'train'")
    p.add_argument("--split", choices=("train", "val", "test"), help="default test")

    p = sub.add_parser("transfer", parents=[common], epilog=PRECEDENCE,
                       argument_default=argparse.SUPPRESS,
                       help="train with levels masked, evaluate every level (zero-shot)")
    _train_flags(p)
    p.add_argument("--mask-level", action="append", dest="mask_levels", required=True,
                   choices=("node", "edge", "graph"), help="level to hold out (repeatable)")
    p.add_argument("--checkpoint", help="also write the trained checkpoint here")

    p = sub.add_parser("oracle-check", parents=[common], epilog=PRECEDENCE,
                       argument_default=argparse.SUPPRESS,
                       help="tree DP vs exhaustive search on random instances")
    p.add_argument("--trials", type=int, help="default 200")
    p.add_argument("--max-nodes", type=int, help="largest instance (default 12)")
    p.add_argument("--depth", type=int, help="largest tree depth (default 2)")
    return parser


def _flag_values(ns: argparse.Namespace) -> dict:
    d = {k: v for k, v in vars(ns).items() if k not in ("command", "config", "verbose")}
    if "mask_levels" in d:
        d["mask_levels"] = ",".join(d["mask_levels"])
    return d


def _need(cfg: RunConfig, *names: str) -> None:
    for name in names:
        value = getattr(cfg, name)
        if value is None:
            raise UsageError(f"{cfg.command}: --{name.replace('_', '-')} is required")
        if name in ("input", "checkpoint") and not Path(value).exists():
            raise UsageError(f"{cfg.command}: {name} path {value} does not exist")


def load_dataset(path, seed: int = 0) -> Dataset:
    """A directory holds one graph, a JSON-lines file holds many."""
    graphs = read_any(path)
    kind = "single" if Path(path).is_dir() else "multi"
    return Dataset(kind, graphs, seed)


def _write_json(path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _report_status(report, cfg: RunConfig) -> int:
    bad = report.undefined_levels()
    if bad and not cfg.allow_degenerate:
        print(f"undefined metrics for level(s) {', '.join(bad)} "
              "(single-class split); pass --allow-degenerate to accept", file=sys.stderr)
        return 1
    return 0


def cmd_synth(cfg: RunConfig) -> int:
    _need(cfg, "out")
    if cfg.kind == "single":
        ds = synth_single_graph(cfg.n, cfg.anomaly_rate, cfg.mode, cfg.seed)
        write_graph_dir(ds.graphs[0], cfg.out)
    else:
        ds = synth_multi_graph(cfg.num_graphs, (cfg.min_nodes, cfg.max_nodes_per_graph),
                               cfg.graph_anomaly_rate, cfg.seed)
        write_graphs_jsonl(ds.graphs, cfg.out)
    print(f"wrote {len(ds.graphs)} graph(s), {ds.union.node_count} nodes to {cfg.out}")
    return 0


def _sub_record(target, sub) -> dict:
    return {"target": target, "nodes": list(sub.nodes),
            "hops": [sub.hops[v] for v in sub.nodes],
            "rq_num": float(sub.rq.num), "rq_den": float(sub.rq.den),
            "weights": [sub.pool_weights[v] for v in sub.nodes]}


def cmd_sample(cfg: RunConfig) -> int:
    _need(cfg, "input", "out")
    g: Graph = load_dataset(cfg.input).union
    cache = SamplerCache(g, composite_feature(g.features), cfg.train.depth,
                         cfg.train.decay, cfg.threads)
    lines = []
    if cfg.targets in ("nodes", "all"):
        nodes = list(range(g.node_count))
        lines += [_sub_record(t, s) for t, s in zip(nodes, cache.nodes(nodes))]
    if cfg.targets in ("edges", "all"):
        edges = g.edges.tolist()
        lines += [_sub_record(e, s) for e, s in zip(edges, cache.edges(edges))]
    atomic_write_text(cfg.out, "".join(json.dumps(r) + "\n" for r in lines))
    print(f"sampled {len(lines)} targets into {cfg.out}")
    return 0


def _fit(cfg: RunConfig):
    ds = split(load_dataset(cfg.input, cfg.seed), cfg.train.train_frac, cfg.train.seed)
    prepared = prepare(ds, cfg.train)
    model, hist = train(ds, cfg.train, prepared)
    return ds, prepared, model, hist


def cmd_train(cfg: RunConfig) -> int:
    _need(cfg, "input", "out")
    _, _, model, hist = _fit(cfg)
    atomic_write_text(cfg.out, model_to_json(model, cfg.train))
    history = cfg.history or str(Path(cfg.out).with_suffix("")) + ".history.json"
    _write_json(history, hist.to_dict())
    print(f"trained {', '.join(hist.train_levels)}; best epoch {hist.best_epoch}; "
          f"checkpoint {cfg.out}, history {history}")
    return 0


def cmd_eval(cfg: RunConfig) -> int:
    _need(cfg, "input", "checkpoint", "out")
    model, tcfg = model_from_json(Path(cfg.checkpoint).read_text())
    tcfg.threads = cfg.threads
    ds = split(load_dataset(cfg.input, tcfg.seed), tcfg.train_frac, tcfg.seed)
    report = evaluate(model, ds, tcfg, cfg.split)
    report.wall_time = round(report.wall_time, 3)
    atomic_write_text(cfg.out, report.to_json() + "\n")
    _print_report(report)
    return _report_status(report, cfg)


def cmd_transfer(cfg: RunConfig) -> int:
    _need(cfg, "input", "out")
    ds, prepared, model, hist = _fit(cfg)
    if cfg.checkpoint:
        atomic_write_text(cfg.checkpoint, model_to_json(model, cfg.train))
    report = evaluate(model, ds, cfg.train, "test", prepared)
    atomic_write_text(cfg.out, report.to_json() + "\n")
    print(f"trained on {', '.join(hist.train_levels)}; masked {', '.join(hist.missing)}")
    _print_report(report)
    return _report_status(report, cfg)


def _print_report(report) -> None:
    def fmt(v):
        return "undefined" if v is None else f"{v:.4f}"

    for lvl, m in report.levels.items():
        print(f"{lvl:>6}: auroc {fmt(m['auroc'])}  auprc {fmt(m['auprc'])}  "
              f"macro-f1 {fmt(m['macro_f1'])}  (n={m['count']}, positives={m['positives']})")


def cmd_oracle_check(cfg: RunConfig) -> int:
    depth = cfg.train.depth
    bad = oracle_check(cfg.trials, cfg.max_nodes, cfg.seed, depth)
    ok = cfg.trials - len(bad)
    print(f"{ok}/{cfg.trials} instances match exhaustive search")
    if cfg.out:
        _write_json(cfg.out, {"trials": cfg.trials, "matches": ok, "mismatches": bad})
    for b in bad[:5]:
        print(f"  mismatch: {b}", file=sys.stderr)
    return 0 if not bad else 1


COMMANDS = {"synth": cmd_synth, "sample": cmd_sample, "train": cmd_train, "eval": cmd_eval,
            "transfer": cmd_transfer, "oracle-check": cmd_oracle_check}


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)  # exits 2 on bad flags, 0 on --help
    logging.basicConfig(level=logging.INFO if getattr(ns, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        file_values = read_config_file(ns.config) if getattr(ns, "config", None) else {}
        cfg = build_run_config(ns.command, file_values, _flag_values(ns))
        return COMMANDS[ns.command](cfg)
    except (UsageError, ConfigError) as exc:
        parser.print_usage(sys.stderr)
        print(f"mlgad: error: {exc}", file=sys.stderr)
        return 2
    except (DomainError, OSError, ValueError, RuntimeError) as exc:
        print(f"mlgad: {ns.command} failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
