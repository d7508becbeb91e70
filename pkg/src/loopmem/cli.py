"""Operator entry point: train, eval, verify, flops, inspect, export-telemetry.

Exit codes: 0 ok, 1 config or runtime error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, ModelConfig, RunConfig
from .data import load_corpus, split_corpus
from .evaltelem import (eval_bpb, export_csv, load_eval_items, records_from_jsonl,
                        record_telemetry, write_transition_sidecar)
from .flops import block_applications, flop_estimate, match_depth, param_count
from .model import loop_scale_values
from .presets import get_preset, list_presets
from .training import evaluate_validation, load_checkpoint, train_run


def _load_run_config(args) -> RunConfig:
    if args.config is None:
        raise ConfigError("config", "--config <path> is required for this command")
    run = RunConfig.load(args.config)
    if getattr(args, "seed", None) is not None:
        run.train.seed = args.seed
    if getattr(args, "out", None) is not None:
        run.out_dir = args.out
    if getattr(args, "steps", None) is not None:
        run.train.total_steps = args.steps
    run.validate(check_paths=True)
    return run


def _model_config(args) -> ModelConfig:
    if getattr(args, "preset", None):
        return get_preset(args.preset)
    if args.config is not None:
        run = RunConfig.load(args.config)
        run.model.validate("model")
        return run.model
    raise ConfigError("config", "provide --config or --preset")


def _corpora(run: RunConfig):
    if not run.data_paths:
        raise ConfigError("data_paths", "no input files configured")
    corpus = load_corpus(run.data_paths)
    if run.val_fraction > 0:
        return split_corpus(corpus, run.val_fraction)
    return corpus, None


def cmd_train(args) -> int:
    run = _load_run_config(args)
    train_c, val_c = _corpora(run)
    result = train_run(run, train_c, val_c)
    m = result.final_metrics
    summary = {
        "steps": run.train.total_steps,
        "final_ce": m.ce,
        "final_loss": m.loss,
        "final_n_bar": m.n_bar,
        "checkpoint": result.checkpoint_path,
        "telemetry_rows": len(result.telemetry),
    }
    out = Path(run.out_dir)
    _export_run_telemetry(out / "telemetry.jsonl", out / "telemetry.csv", run.model.n_max)
    print(json.dumps(summary, indent=2))
    return 0


def _export_run_telemetry(jsonl_path: Path, csv_path: Path, n_max: int) -> None:
    if not jsonl_path.exists():
        return
    records = records_from_jsonl(jsonl_path)
    if records:
        export_csv(records, csv_path)
        write_transition_sidecar(csv_path, records, n_max)


def cmd_eval(args) -> int:
    run = _load_run_config(args)
    ckpt = args.checkpoint or str(Path(run.out_dir) / "checkpoint.ckpt")
    params, _, cfg = load_checkpoint(ckpt)
    if run.eval_set_path is None:
        raise ConfigError("eval_set_path", "eval needs an eval set (JSONL) in the config")
    items = load_eval_items(run.eval_set_path)
    workers = None
    env = os.environ.get("LOOPMEM_THREADS")
    if env:
        workers = int(env)
    report = eval_bpb(params, cfg, items, max_workers=workers)
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    return 0


def cmd_verify(args) -> int:
    from .verify import run_all_suites

    report = run_all_suites(seed=args.seed if args.seed is not None else 0,
                            grad_max_elements=args.grad_elements,
                            halting_draws=args.halting_draws)
    for line in report.lines():
        print(line)
    return 0 if report.passed else 1


def cmd_flops(args) -> int:
    cfg = _model_config(args)
    seq_len = args.seq_len or cfg.t_max
    info = {
        "params": param_count(cfg),
        "per_token_flops": flop_estimate(cfg, seq_len, "per_token"),
        "per_sequence_flops": flop_estimate(cfg, seq_len, "per_sequence"),
        "block_applications": block_applications(cfg),
        "seq_len": seq_len,
    }
    if args.match_depth:
        info["match_depth"] = match_depth(cfg)
    print(json.dumps(info, indent=2, sort_keys=True))
    return 0


def cmd_inspect(args) -> int:
    run = _load_run_config(args)
    ckpt = args.checkpoint or str(Path(run.out_dir) / "checkpoint.ckpt")
    params, state, cfg = load_checkpoint(ckpt)
    train_c, val_c = _corpora(run)
    ev = evaluate_validation(params, cfg, val_c if val_c is not None else train_c,
                             run.train.batch_size, run.train.seq_len)
    rec = record_telemetry(state.step, ev.val_ce, [], ev.gate_local, ev.gate_global,
                           loop_scale_values(params), cfg.n_layers)
    rec.expected_steps = ev.expected_steps or [1.0] * cfg.n_layers
    rec.n_bar = float(np.mean(rec.expected_steps))
    print(json.dumps({
        "step": rec.step,
        "val_ce": rec.val_ce,
        "expected_steps": rec.expected_steps,
        "n_bar": rec.n_bar,
        "gate_local": rec.gate_local,
        "gate_global": rec.gate_global,
        "loop_scales_softplus": rec.loop_scales,
    }, indent=2))
    return 0


def cmd_export_telemetry(args) -> int:
    if args.jsonl:
        jsonl = Path(args.jsonl)
        csv = Path(args.csv) if args.csv else jsonl.with_suffix(".csv")
        n_max = args.n_max
    else:
        run = _load_run_config(args)
        jsonl = Path(run.out_dir) / "telemetry.jsonl"
        csv = Path(args.csv) if args.csv else Path(run.out_dir) / "telemetry.csv"
        n_max = run.model.n_max
    records = records_from_jsonl(jsonl)
    if not records:
        print(f"error: no telemetry records in {jsonl}", file=sys.stderr)
        return 1
    export_csv(records, csv)
    wrote = write_transition_sidecar(csv, records, n_max)
    print(json.dumps({"csv": str(csv), "rows": len(records),
                      "transition_sidecar": wrote}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="loopmem",
        description="Looped transformer with halting and memory banks: desk-scale harness.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_steps=False):
        p.add_argument("--config", type=str, default=None, help="run config JSON")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", type=str, default=None, help="output directory override")
        if with_steps:
            p.add_argument("--steps", type=int, default=None, help="override total steps")

    p = sub.add_parser("train", help="run the training loop")
    common(p, with_steps=True)

    p = sub.add_parser("eval", help="per-domain bits-per-byte on an eval set")
    common(p)
    p.add_argument("--checkpoint", type=str, default=None)

    p = sub.add_parser("verify", help="run the verification suites")
    common(p)
    p.add_argument("--grad-elements", type=int, default=4,
                   help="sampled elements per tensor in the gradient check")
    p.add_argument("--halting-draws", type=int, default=1000)

    p = sub.add_parser("flops", help="parameter count and FLOP estimate")
    common(p)
    p.add_argument("--preset", type=str, default=None,
                   help=f"one of: {', '.join(list_presets())}")
    p.add_argument("--seq-len", type=int, default=None)
    p.add_argument("--match-depth", action="store_true",
                   help="report the plain-layer count matching this config's block cost")

    p = sub.add_parser("inspect", help="dump loop/gate telemetry from a checkpoint")
    common(p)
    p.add_argument("--checkpoint", type=str, default=None)

    p = sub.add_parser("export-telemetry", help="convert a JSONL log to telemetry CSV")
    common(p)
    p.add_argument("--jsonl", type=str, default=None)
    p.add_argument("--csv", type=str, default=None)
    p.add_argument("--n-max", type=int, default=3,
                   help="loop budget used by the transition detector (with --jsonl)")

    return parser


_COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "verify": cmd_verify,
    "flops": cmd_flops,
    "inspect": cmd_inspect,
    "export-telemetry": cmd_export_telemetry,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, KeyError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
