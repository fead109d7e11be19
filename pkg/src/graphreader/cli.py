"""Command-line entry point.

Subcommands: synth, build-graph, train, eval, ablate, viz, grad-check.
Every subcommand takes ``--config FILE`` (flat JSON) plus ``--set
key=value`` overrides, overrides winning. Relative output paths resolve
under ``$GRAPHREADER_OUT_ROOT`` when that is set. Exit codes: 0 success,
1 data/contract errors, 2 usage errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .config import RunConfig, load_config, save_config
from .errors import GraphReaderError
from .graph import graph_to_dict, load_sidecar
from .text import gen_synthetic, load_qangaroo, save_qangaroo


def _resolve_out(path: str) -> Path:
    root = os.environ.get("GRAPHREADER_OUT_ROOT")
    p = Path(path)
    if root and not p.is_absolute():
        return Path(root) / p
    return p


def _load_run_config(args) -> RunConfig:
    config = load_config(args.config) if args.config else RunConfig()
    if args.set:
        config = config.with_overrides(args.set)
    return config


def _add_config_args(parser) -> None:
    parser.add_argument("--config", help="config JSON file")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="config override (repeatable)")


def _pick_sample(samples, key: str):
    if key.isdigit():
        idx = int(key)
        if idx >= len(samples):
            raise GraphReaderError(f"sample index {idx} outside dataset of {len(samples)}")
        return samples[idx]
    for s in samples:
        if s.id == key:
            return s
    raise GraphReaderError(f"no sample with id {key!r}")


def _cmd_synth(args) -> int:
    samples = gen_synthetic(
        seed=args.seed, count=args.count, hop_length=args.hops,
        n_candidates=args.candidates, vocab_size=args.vocab_size,
    )
    out = _resolve_out(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_qangaroo(samples, out)
    print(f"wrote {len(samples)} samples to {out}")
    return 0


def _cmd_build_graph(args) -> int:
    from .model import Preprocessor

    config = _load_run_config(args)
    samples = load_qangaroo(args.data)
    sample = _pick_sample(samples, args.sample)
    sidecar = load_sidecar(args.sidecar) if args.sidecar else None
    prep = Preprocessor(config)
    prepared = prep.prepare(sample, sidecar=sidecar)
    out = _resolve_out(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(graph_to_dict(prepared.graph), fh, indent=1)
        fh.write("\n")
    print(f"wrote graph ({len(prepared.graph.nodes)} nodes, "
          f"{len(prepared.graph.edges)} edges) to {out}")
    return 0


def _cmd_train(args) -> int:
    from .harness import train

    config = _load_run_config(args)
    train_samples = load_qangaroo(args.data)
    dev_samples = load_qangaroo(args.dev) if args.dev else train_samples
    outdir = _resolve_out(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    result = train(
        config, train_samples, dev_samples,
        checkpoint_path=outdir / "best.ckpt.npz",
        metrics_path=outdir / "metrics.jsonl",
    )
    save_config(config, outdir / "config.json")
    print(f"best dev accuracy: {result.best_dev_accuracy:.4f}")
    print(f"checkpoint: {result.checkpoint_path}")
    return 0


def _cmd_eval(args) -> int:
    from .harness import evaluate

    samples = load_qangaroo(args.data)
    report = evaluate(args.checkpoint, samples, workers=args.workers)
    payload = report.to_dict()
    if args.out:
        out = _resolve_out(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=1, sort_keys=True)
            fh.write("\n")
    print(json.dumps({k: payload[k] for k in ("accuracy", "n_samples", "bins")},
                     indent=1, sort_keys=True))
    return 0


def _cmd_ablate(args) -> int:
    from .harness import ablate

    config = _load_run_config(args)
    train_samples = load_qangaroo(args.data)
    dev_samples = load_qangaroo(args.dev) if args.dev else train_samples
    parts = tuple(args.parts.split(",")) if args.parts else ("gat", "nodes", "hops", "gamma")
    rows = ablate(config, train_samples, dev_samples, parts=parts)
    if args.out:
        out = _resolve_out(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", encoding="utf-8") as fh:
            json.dump(rows, fh, indent=1)
            fh.write("\n")
    width = max(len(r["name"]) for r in rows)
    print(f"{'variant':<{width}}  accuracy  delta")
    for r in rows:
        print(f"{r['name']:<{width}}  {r['accuracy']:8.4f}  {r['delta']:+.4f}")
    return 0


def _cmd_viz(args) -> int:
    from .harness import load_model
    from .viz import build_snapshot, emit_dot, emit_html

    samples = load_qangaroo(args.data)
    sample = _pick_sample(samples, args.sample)
    model = load_model(args.checkpoint)
    prepared = model.preprocessor.prepare(sample)
    snapshot = build_snapshot(model, prepared)
    outdir = _resolve_out(args.out) / sample.id
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "graph.dot").write_text(
        emit_dot(snapshot, show_complete=args.show_complete), encoding="utf-8"
    )
    (outdir / "report.html").write_text(emit_html(sample, snapshot), encoding="utf-8")
    print(f"wrote {outdir}/graph.dot and {outdir}/report.html "
          f"(prediction: {snapshot.predicted})")
    return 0


def _cmd_grad_check(args) -> int:
    from .gradsuite import run_grad_suite

    results = run_grad_suite(n_seeds=args.seeds)
    worst = 0.0
    for name, err in results.items():
        print(f"{name:<24} max rel err {err:.3e}")
        worst = max(worst, err)
    print(f"{'WORST':<24} {worst:.3e}  ({'ok' if worst < 1e-4 else 'FAIL'})")
    return 0 if worst < 1e-4 else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="graphreader",
        description="heterogeneous graph attention reader for multi-hop reading",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic multi-hop corpus")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--count", type=int, default=50)
    p.add_argument("--hops", type=int, default=2)
    p.add_argument("--candidates", type=int, default=5)
    p.add_argument("--vocab-size", type=int, default=60)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("build-graph", help="serialize one sample's reasoning graph")
    _add_config_args(p)
    p.add_argument("--data", required=True)
    p.add_argument("--sample", required=True, help="sample index or id")
    p.add_argument("--sidecar", help="reasoning-span annotation JSON")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_build_graph)

    p = sub.add_parser("train", help="train a model")
    _add_config_args(p)
    p.add_argument("--data", required=True, help="training set JSON")
    p.add_argument("--dev", help="dev set JSON (defaults to the training set)")
    p.add_argument("--outdir", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", help="write the full report JSON here")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("ablate", help="run the ablation protocol")
    _add_config_args(p)
    p.add_argument("--data", required=True)
    p.add_argument("--dev")
    p.add_argument("--out", help="write the comparison table JSON here")
    p.add_argument("--parts", help="comma list from gat,nodes,hops,gamma")
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("viz", help="emit DOT and HTML for one sample")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--sample", required=True, help="sample index or id")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--show-complete", action="store_true")
    p.set_defaults(func=_cmd_viz)

    p = sub.add_parser("grad-check", help="finite-difference gradient suite")
    p.add_argument("--seeds", type=int, default=10)
    p.set_defaults(func=_cmd_grad_check)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except GraphReaderError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
