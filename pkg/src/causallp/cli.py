"""``causallp`` command line: ingest, build, split, train, eval, query, synth, grid.

Every command writes a JSON run manifest next to its output. ``causallp
replay MANIFEST`` re-runs the recorded command line from the recorded
working directory.

Exit codes: 0 success, 1 input error, 2 I/O failure, 3 leakage or
validation failure, 4 query error.
"""

from __future__ import annotations

import argparse
import contextlib
import dataclasses
import itertools
import json
import logging
import os
import sys
import tempfile
import time
from pathlib import Path

from . import __version__
from .builder import (
    SubgraphView, build_kg, build_stats, import_quads, network_from_ceg, project, provenance, write_quads,
)
from .configfile import coerce_fields, format_config, parse_config, read_config
from .embedding.training import TrainConfig, load_checkpoint, save_checkpoint
from .errors import CausalLPError, ConfigError, IoFailure, UnknownEntity, UnknownRelation
from .evaluation import SIDE_POLICIES, query_explain, query_predict
from .experiment import fit, score_split
from .fixtures import data_path
from .ingest import parse_ceg_file, preprocess, write_ceg_file
from .model import EntityKind
from .split import Strategy, Task, leakage_audit, markov_split, random_split, read_split, write_split
from .synth import SynthConfig, generate

log = logging.getLogger("causallp")

EXIT_OK, EXIT_INPUT, EXIT_IO, EXIT_LEAKAGE, EXIT_QUERY = 0, 1, 2, 3, 4
CEG_FILE = "cegs.jsonl"
MANIFEST = "manifest.json"


class LeakageFailure(CausalLPError):
    pass


class QueryFailure(CausalLPError):
    pass


class _Parser(argparse.ArgumentParser):
    """Usage errors are input errors (exit 1), not argparse's default 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


# -- shared helpers ------------------------------------------------------------------


def atomic_write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(OSError):
            os.unlink(tmp)
        raise


def manifest_for(output) -> Path:
    """Manifest path for an output: inside it for a directory, beside it for a file."""
    out = Path(output)
    if out.is_dir():
        return out / MANIFEST
    return out.with_name(out.name + ".manifest.json")


def write_manifest(path, command, argv, config, inputs, outputs, seed, duration, extra=None) -> None:
    record = {
        "command": command,
        "argv": list(argv),
        "cwd": os.getcwd(),
        "config": config,
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "seed": seed,
        "version": __version__,
        "duration_s": round(duration, 3),
    }
    record.update(extra or {})
    atomic_write(path, json.dumps(record, indent=2, sort_keys=True, default=str) + "\n")


def thread_cap() -> int:
    raw = os.environ.get("CAUSALLP_THREADS")
    if raw is None or raw == "":
        return os.cpu_count() or 1
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"CAUSALLP_THREADS must be a positive integer, got {raw!r}") from None
    if value < 1:
        raise ConfigError(f"CAUSALLP_THREADS must be a positive integer, got {raw!r}")
    return value


def _ceg_source(path) -> Path:
    p = Path(path)
    return p / CEG_FILE if p.is_dir() else p


def _load_networks(path):
    cegs = parse_ceg_file(_ceg_source(path))
    return [network_from_ceg(c) for c in cegs]


def _is_quad_file(path) -> bool:
    return Path(path).suffix == ".tsv"


# -- commands --------------------------------------------------------------------------


def cmd_ingest(args):
    cegs = parse_ceg_file(args.input)
    kept, report = preprocess(cegs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_ceg_file(kept, out / CEG_FILE)
    (out / "report.tsv").write_text(report.to_tsv(), encoding="utf-8", newline="\n")
    print(f"{report.cegs_out} of {report.cegs_in} CEGs retained")
    return dict(config={}, inputs=[args.input], outputs=[out / CEG_FILE, out / "report.tsv"],
                manifest=out / MANIFEST)


def cmd_build(args):
    view = SubgraphView(args.view)
    kg = build_kg(_load_networks(args.input))
    kg = project(kg, view)
    write_quads(kg.quads, args.out)
    stats_path = Path(args.out).with_name(Path(args.out).stem + ".stats.tsv")
    stats_path.write_text(build_stats(kg).to_tsv(), encoding="utf-8", newline="\n")
    print(f"{len(kg)} quads over {len(kg.entities)} entities")
    return dict(config={"view": view.value}, inputs=[args.input], outputs=[args.out, stats_path],
                manifest=manifest_for(args.out))


def _ratios(text):
    try:
        parts = tuple(float(x) for x in text.split(","))
    except ValueError:
        raise ConfigError(f"ratios must be comma-separated numbers, got {text!r}") from None
    if len(parts) != 3:
        raise ConfigError("ratios needs three values: train,valid,test")
    return parts


def cmd_split(args):
    strategy = Strategy(args.strategy)
    task = Task(args.task)
    view = SubgraphView(args.view)
    extra = {}
    prov = None
    if strategy is Strategy.MARKOV:
        if _is_quad_file(args.input):
            raise ConfigError("the markov strategy needs CEG input, not a quad file")
        nets = _load_networks(args.input)
        bundle, report = markov_split(nets, task, args.ceg_ratio, args.seed, view, args.valid_ratio)
        prov = provenance(nets)
        extra = dict(report.items())
    else:
        if _is_quad_file(args.input):
            kg = import_quads(args.input)
        else:
            kg = build_kg(_load_networks(args.input))
        quads = [q for q in kg.quads if q.relation in view.relations]
        bundle = random_split(quads, _ratios(args.ratios), args.seed)
        if task is not Task.NONE:
            bundle = dataclasses.replace(bundle, task=task)
    violations = leakage_audit(bundle, prov)
    write_split(bundle, args.out, extra)
    config = {"strategy": strategy.value, "task": task.value, "view": view.value, "ratios": args.ratios,
              "ceg_ratio": args.ceg_ratio, "valid_ratio": args.valid_ratio}
    result = dict(config=config, inputs=[args.input], outputs=[args.out], seed=args.seed,
                  manifest=Path(args.out) / MANIFEST, extra={"violations": len(violations)})
    if violations:
        for v in violations[:20]:
            print(f"leakage: {v.kind}: {v.quad.head} {v.quad.relation.value} {v.quad.tail}: {v.detail}",
                  file=sys.stderr)
        result["fail"] = LeakageFailure(f"{len(violations)} leakage violation(s)")
    print(f"train {len(bundle.train)}  valid {len(bundle.valid)}  test {len(bundle.test)}")
    return result


TRAIN_FLAGS = {
    "model": "model", "weight_mode": "weight_mode", "dim": "dim", "epochs": "epochs", "eta": "eta",
    "beta_decay_epochs": "beta_decay_epochs", "learning_rate": "learning_rate", "batch_size": "batch_size",
    "l2": "l2", "seed": "seed", "patience": "patience", "eval_every": "eval_every",
}


def train_config(args, base: dict | None = None) -> TrainConfig:
    values = coerce_fields(TrainConfig, read_config(args.config)) if args.config else {}
    values.update(base or {})
    for flag, name in TRAIN_FLAGS.items():
        v = getattr(args, flag, None)
        if v is not None:
            values[name] = v
    return TrainConfig(**values)


def cmd_train(args):
    bundle = read_split(args.split)
    cfg = train_config(args)
    task = Task(args.task) if args.task else None
    state = fit(bundle, cfg, task)
    save_checkpoint(state, args.out)
    best = max((m for _, m in state.valid_history), default=None)
    print(f"trained {len(state.loss_history)} epochs; kept epoch {state.epoch}"
          + (f"; validation MRR {best:.6f}" if best is not None else ""))
    return dict(config=cfg.as_dict(), inputs=[args.split] + ([args.config] if args.config else []),
                outputs=[args.out], seed=cfg.seed, manifest=manifest_for(args.out),
                extra={"valid_mrr": best, "epochs_run": len(state.loss_history),
                       "final_loss": state.loss_history[-1] if state.loss_history else None})


def cmd_eval(args):
    state = load_checkpoint(args.checkpoint)
    bundle = read_split(args.split)
    task = Task(args.task) if args.task else None
    report = score_split(state, bundle, task, args.side_policy)
    report.write(args.out)
    print(f"MRR {report.mrr:.6f}  Hits@1 {report.hits1:.6f}  Hits@3 {report.hits3:.6f}  "
          f"Hits@10 {report.hits10:.6f}  ({report.n_queries} ranked)")
    return dict(config={"side_policy": args.side_policy, "task": (task or bundle.task).value},
                inputs=[args.checkpoint, args.split], outputs=[args.out], manifest=manifest_for(args.out))


def cmd_query(args):
    state = load_checkpoint(args.checkpoint)
    kg = import_quads(args.kg)
    types = kg.of_kind(EntityKind.EVENT_TYPE)
    candidates = [t for t in types if t in state.entity_index]
    fn = query_predict if args.mode == "predict" else query_explain
    try:
        ranked = fn(state, args.entity, args.top_k, candidates)
    except (UnknownEntity, UnknownRelation) as exc:
        raise QueryFailure(str(exc)) from None
    for name, value in ranked:
        print(f"{name}\t{value:.6f}")
    return dict(config={"mode": args.mode, "entity": args.entity, "top_k": args.top_k},
                inputs=[args.checkpoint, args.kg], outputs=[], manifest=None)


SYNTH_FLAGS = ("n_cegs", "nodes_min", "nodes_max", "edge_probability", "n_event_types", "noise_rate", "seed")


def cmd_synth(args):
    path = args.config or data_path("synthetic.conf")
    values = coerce_fields(SynthConfig, read_config(path), skip=("rule_table",))
    for name in SYNTH_FLAGS:
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    cfg = SynthConfig(**values)
    cegs = generate(cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_ceg_file(cegs, out)
    print(f"wrote {len(cegs)} CEGs")
    config = {f.name: getattr(cfg, f.name) for f in dataclasses.fields(cfg) if f.name != "rule_table"}
    return dict(config=config, inputs=[path], outputs=[out], seed=cfg.seed, manifest=manifest_for(out))


def parse_grid(text: str) -> list[dict]:
    """``key = v1, v2, ...`` lines -> the Cartesian product of cells, keys sorted."""
    raw = parse_config(text)
    axes = []
    for key in sorted(raw):
        values = [v.strip() for v in raw[key].split(",") if v.strip()]
        if not values:
            raise ConfigError(f"grid key {key!r} has no values")
        axes.append([(key, v) for v in values])
    cells = []
    for combo in itertools.product(*axes):
        cells.append(coerce_fields(TrainConfig, dict(combo)))
    return cells


def _grid_cell(job):
    index, split_dir, out_dir, values, task, side_policy = job
    cell = Path(out_dir) / f"cell_{index:03d}"
    cell.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    cfg = TrainConfig(**values)
    bundle = read_split(split_dir)
    state = fit(bundle, cfg, task)
    save_checkpoint(state, cell / "checkpoint.tsv")
    report = score_split(state, bundle, task, side_policy)
    report.write(cell / "report.tsv")
    (cell / "config.conf").write_text(format_config(cfg.as_dict()), encoding="utf-8", newline="\n")
    write_manifest(cell / MANIFEST, "grid-cell", [], cfg.as_dict(), [split_dir],
                   [cell / "checkpoint.tsv", cell / "report.tsv"], cfg.seed, time.perf_counter() - start)
    return index, values, report.mrr


def cmd_grid(args):
    try:
        grid_text = Path(args.grid).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    base = coerce_fields(TrainConfig, read_config(args.config)) if args.config else {}
    cells = [{**base, **c} for c in parse_grid(grid_text)]
    for c in cells:
        TrainConfig(**c)  # validate every cell before running any
    task = Task(args.task) if args.task else None
    jobs = [(i, args.split, args.out, c, task, args.side_policy) for i, c in enumerate(cells)]
    workers = max(1, min(args.jobs, thread_cap(), len(jobs)))
    Path(args.out).mkdir(parents=True, exist_ok=True)
    if workers > 1:
        import multiprocessing

        with multiprocessing.get_context("spawn").Pool(workers) as pool:
            results = pool.map(_grid_cell, jobs)
    else:
        results = [_grid_cell(j) for j in jobs]
    keys = sorted({k for c in cells for k in c})
    lines = ["cell\t" + "\t".join(keys) + "\tmrr"]
    for index, values, mrr in sorted(results, key=lambda r: r[0]):
        lines.append(f"cell_{index:03d}\t" + "\t".join(str(values.get(k)) for k in keys) + f"\t{mrr:.6f}")
    summary = Path(args.out) / "summary.tsv"
    summary.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    print(f"{len(cells)} cells; summary in {summary}")
    return dict(config={"cells": len(cells), "jobs": workers, **base}, inputs=[args.split, args.grid],
                outputs=[summary], manifest=Path(args.out) / MANIFEST)


def cmd_replay(args):
    try:
        record = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{args.manifest}: not a run manifest ({exc.msg})") from None
    argv = record.get("argv")
    if not argv or argv[0] == "replay":
        raise ConfigError(f"{args.manifest}: manifest has no replayable command line")
    with _chdir(record["cwd"]):
        code = main(argv)
    return dict(exit=code)


@contextlib.contextmanager
def _chdir(path):
    old = os.getcwd()
    os.chdir(path)
    try:
        yield
    finally:
        os.chdir(old)


# -- parser ----------------------------------------------------------------------------


def _add_train_flags(p):
    p.add_argument("--config", help="flat key = value file of training options")
    p.add_argument("--model", choices=["TransE", "DistMult", "ComplEx", "HolE"])
    p.add_argument("--weight-mode", dest="weight_mode", choices=["base", "weighted"])
    p.add_argument("--dim", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--eta", type=int)
    p.add_argument("--beta-decay-epochs", dest="beta_decay_epochs", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--l2", type=float)
    p.add_argument("--patience", type=int)
    p.add_argument("--eval-every", dest="eval_every", type=int)
    p.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="causallp", description="Causal link prediction over weighted causal KGs.")
    parser.add_argument("--version", action="version", version=f"causallp {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="parse and preprocess CEGs")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("build", help="build a quad file from preprocessed CEGs")
    p.add_argument("--input", required=True, help="ingest output directory or CEG file")
    p.add_argument("--view", choices=[v.value for v in SubgraphView], default="CTP")
    p.add_argument("--out", required=True, help="quad file (.tsv)")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("split", help="split into train/valid/test and audit for leakage")
    p.add_argument("--input", required=True, help="quad file (.tsv) or CEG directory/file")
    p.add_argument("--strategy", choices=[s.value for s in Strategy], default="random")
    p.add_argument("--task", choices=[t.value for t in Task], default="none")
    p.add_argument("--view", choices=[v.value for v in SubgraphView], default="CTP")
    p.add_argument("--ratios", default="0.8,0.1,0.1")
    p.add_argument("--ceg-ratio", dest="ceg_ratio", type=float, default=0.8)
    p.add_argument("--valid-ratio", dest="valid_ratio", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train an embedding on a split")
    p.add_argument("--split", required=True)
    p.add_argument("--task", choices=[t.value for t in Task])
    p.add_argument("--out", required=True, help="checkpoint file")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="filtered ranking metrics on the test part")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--task", choices=[t.value for t in Task])
    p.add_argument("--side-policy", dest="side_policy", choices=SIDE_POLICIES, default="auto")
    p.add_argument("--out", required=True, help="report file")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("query", help="rank event types for a cause or effect")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--kg", required=True)
    p.add_argument("--mode", choices=["predict", "explain"], required=True)
    p.add_argument("--entity", required=True)
    p.add_argument("--top-k", dest="top_k", type=int, default=10)
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("synth", help="generate a synthetic CEG corpus")
    p.add_argument("--config", help="key = value file (default: the bundled corpus config)")
    p.add_argument("--n-cegs", dest="n_cegs", type=int)
    p.add_argument("--nodes-min", dest="nodes_min", type=int)
    p.add_argument("--nodes-max", dest="nodes_max", type=int)
    p.add_argument("--edge-probability", dest="edge_probability", type=float)
    p.add_argument("--n-event-types", dest="n_event_types", type=int)
    p.add_argument("--noise-rate", dest="noise_rate", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("grid", help="train and evaluate every cell of a small grid")
    p.add_argument("--split", required=True)
    p.add_argument("--grid", required=True, help="key = v1, v2, ... file over training options")
    p.add_argument("--config", help="base training options")
    p.add_argument("--task", choices=[t.value for t in Task])
    p.add_argument("--side-policy", dest="side_policy", choices=SIDE_POLICIES, default="auto")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("replay", help="re-run a command from its manifest")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_replay)
    return parser


def _exit_code(exc) -> int:
    if isinstance(exc, LeakageFailure):
        return EXIT_LEAKAGE
    if isinstance(exc, QueryFailure):
        return EXIT_QUERY
    if isinstance(exc, (IoFailure, OSError)):
        return EXIT_IO
    return EXIT_INPUT


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    start = time.perf_counter()
    try:
        thread_cap()
        result = args.func(args)
        if args.command == "replay":
            return result["exit"]
        if result.get("manifest") is not None:
            write_manifest(result["manifest"], args.command, argv, result["config"], result["inputs"],
                           result["outputs"], result.get("seed"), time.perf_counter() - start, result.get("extra"))
        if "fail" in result:
            raise result["fail"]
    except (CausalLPError, ValueError, OSError) as exc:
        print(f"causallp {args.command}: {exc}", file=sys.stderr)
        return _exit_code(exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
