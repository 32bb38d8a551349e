"""Command-line entry point: train / eval / analyze / gen-synth / headbench.

Exit codes: 0 success, 1 module error (one-line diagnostic on stderr),
2 usage error. All artifacts are timestamp-free JSON/CSV so re-running a
command with the same config and seed reproduces identical bytes.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np
import torch

from .config import Config, build_config, derive_seed, parse_overrides
from .data import DIMENSIONS, generate_synthetic, label_correlation, save_dataset
from .errors import ConfigError, TeachEvalError
from .graph import DTYPE
from .heads import IndependentHeads, SharedPerturbationHead, count_parameters
from .metrics import evaluate_split, similarity_trace
from .training import (
    build_providers,
    load_model_from_checkpoint,
    precompute_records,
    prepare_records,
    prepare_split,
    train_protocol,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="teacheval",
        description="Multi-dimensional teaching-evaluation classifier toolkit.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser):
        p.add_argument("--config", metavar="PATH", default=None, help="flat key=value config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key (repeatable)")
        p.add_argument("--out", metavar="DIR", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="master seed (also restricts training to this single seed)")
        p.add_argument("--mode", choices=["full", "no_dualgcn", "no_refine"], default=None)
        p.add_argument("--head", choices=["shared", "independent"], default=None)

    p_train = sub.add_parser("train", help="run the multi-seed training protocol")
    add_common(p_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    add_common(p_eval)
    p_eval.add_argument("--checkpoint", metavar="PATH", required=True)
    p_eval.add_argument("--split", choices=["train", "val", "test"], default="test")

    p_analyze = sub.add_parser("analyze", help="export alignment/similarity/correlation CSVs")
    add_common(p_analyze)
    p_analyze.add_argument("--run", metavar="DIR", required=True,
                           help="training output directory (config.txt, run.jsonl, checkpoints)")
    p_analyze.add_argument("--split", choices=["train", "val", "test"], default="val")
    p_analyze.add_argument("--run-seed", type=int, default=None,
                           help="which seed's checkpoint to analyze (default: first configured)")

    p_gen = sub.add_parser("gen-synth", help="generate a synthetic dataset file")
    p_gen.add_argument("--n", type=int, default=200)
    p_gen.add_argument("--vocab", type=int, default=50)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--format", choices=["jsonl", "csv"], default="jsonl")
    p_gen.add_argument("--out", metavar="DIR", default=".")

    p_bench = sub.add_parser("headbench", help="shared vs independent head parameters and timing")
    add_common(p_bench)
    p_bench.add_argument("--batch", type=int, default=16)
    p_bench.add_argument("--repeats", type=int, default=50)

    return parser


def resolve_config(args, parser: argparse.ArgumentParser) -> Config:
    overrides = parse_overrides(args.set)
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
        overrides["train.seeds"] = (args.seed,)
    if getattr(args, "mode", None):
        overrides["mode"] = args.mode
    if getattr(args, "head", None):
        overrides["head.mode"] = args.head
    config_path = getattr(args, "config", None)
    if config_path is not None and not Path(config_path).is_file():
        parser.error(f"config file not found: {config_path}")
    return build_config(config_path, overrides)


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------

def cmd_train(args, parser) -> int:
    cfg = resolve_config(args, parser)
    out = Path(args.out or "teacheval_run")
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(cfg.resolved_text(), encoding="utf-8")
    with (out / "run.jsonl").open("w", encoding="utf-8") as log_file:
        def log(event: dict) -> None:
            log_file.write(json.dumps(event, sort_keys=True) + "\n")

        _, summary = train_protocol(cfg, out_dir=out, log=log)
    _write_json(out / "summary.json", summary)
    if "val_mean" in summary:
        mean = summary["val_mean"]
        print(
            f"trained seeds {summary['seeds']}: val acc {mean['accuracy']:.4f} "
            f"f1 {mean['macro_f1']:.4f} qwk {mean['qwk']:.4f} ece {mean['ece']:.4f}"
        )
    else:
        print(f"trained seeds {summary['seeds']} (no validation split)")
    print(f"artifacts in {out}")
    return 0


def _select_split(split, name: str):
    return {"train": split.train, "val": split.validation, "test": split.test}[name]


def cmd_eval(args, parser) -> int:
    cfg = resolve_config(args, parser)
    model = load_model_from_checkpoint(cfg, args.checkpoint)
    split = prepare_split(cfg)
    records = _select_split(split, args.split)
    if not records:
        raise TeachEvalError(f"split {args.split!r} is empty under this config")
    embed_provider, arc_provider = build_providers(cfg)
    precomps = precompute_records(cfg, records, embed_provider, arc_provider, training=False)
    out_eval = evaluate_split(
        model, precomps, class_weights=cfg["head.class_weights"],
        ece_bins=cfg["eval.ece_bins"], top_frac=cfg["eval.top_frac"],
    )
    payload = {
        "split": args.split,
        "loss": out_eval["loss"],
        "metrics": out_eval["metrics"].to_json_dict(),
        "alignment": out_eval["alignment"].to_json_dict(),
    }
    out = Path(args.out or Path(args.checkpoint).parent)
    _write_json(out / f"metrics_{args.split}.json", payload)
    avg = payload["metrics"]["average"]
    print(
        f"{args.split}: acc {avg['accuracy']:.4f} f1 {avg['macro_f1']:.4f} "
        f"qwk {avg['qwk']:.4f} ece {avg['ece']:.4f} (n={payload['metrics']['sample_count']})"
    )
    print(f"wrote {out / f'metrics_{args.split}.json'}")
    return 0


def cmd_analyze(args, parser) -> int:
    run_dir = Path(args.run)
    config_path = run_dir / "config.txt"
    if not config_path.is_file():
        parser.error(f"no config.txt under {run_dir}")
    overrides = parse_overrides(args.set)
    cfg = build_config(config_path, overrides)
    run_seed = args.run_seed if args.run_seed is not None else cfg["train.seeds"][0]
    out = Path(args.out or run_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    # alignment curves from the training log
    log_path = run_dir / "run.jsonl"
    if log_path.is_file():
        rows = []
        with log_path.open(encoding="utf-8") as f:
            for line in f:
                event = json.loads(line)
                if event.get("event") != "epoch":
                    continue
                for dim in DIMENSIONS:
                    values = event["alignment"]["per_dimension"][dim]
                    rows.append(
                        [event["epoch"], event["split"], dim,
                         values["precision"], values["recall"], values["iou"],
                         values["entropy"], int(values["records"])]
                    )
        alignment_path = out / "alignment.csv"
        with alignment_path.open("w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(
                ["epoch", "split", "dimension", "precision", "recall", "iou", "entropy", "records"]
            )
            writer.writerows(rows)
        written.append(alignment_path)

    # label correlation of the configured dataset
    records = prepare_records(cfg)
    corr = label_correlation(records)
    corr_path = out / "label_correlation.csv"
    with corr_path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["dimension", *DIMENSIONS])
        for i, dim in enumerate(DIMENSIONS):
            writer.writerow([dim, *[f"{v:.6f}" for v in corr[i]]])
    written.append(corr_path)

    # stage-wise dimension-embedding similarity averaged over the split
    checkpoint = run_dir / f"checkpoint_seed{run_seed}.tevck"
    if checkpoint.is_file():
        model = load_model_from_checkpoint(cfg, checkpoint)
        split = prepare_split(cfg, records)
        eval_records = _select_split(split, args.split) or split.train
        embed_provider, arc_provider = build_providers(cfg)
        precomps = precompute_records(cfg, eval_records, embed_provider, arc_provider, training=False)
        sums: dict[str, np.ndarray] = {}
        for pc in precomps:
            trace = similarity_trace(model, pc)
            for stage, matrix in trace.stages.items():
                sums[stage] = sums.get(stage, 0) + matrix
        for stage, total in sums.items():
            mean = total / len(precomps)
            path = out / f"similarity_{stage}.csv"
            with path.open("w", newline="", encoding="utf-8") as f:
                writer = csv.writer(f, lineterminator="\n")
                writer.writerow(["dimension", *DIMENSIONS])
                for i, dim in enumerate(DIMENSIONS):
                    writer.writerow([dim, *[f"{v:.6f}" for v in mean[i]]])
            written.append(path)

    for path in written:
        print(f"wrote {path}")
    return 0


def cmd_gen_synth(args, parser) -> int:
    records = generate_synthetic(args.n, vocab_size=args.vocab, seed=args.seed)
    out_dir = Path(args.out)
    path = out_dir / f"synthetic.{args.format}"
    save_dataset(records, path, format=args.format)
    print(f"wrote {len(records)} records to {path}")
    return 0


def cmd_headbench(args, parser) -> int:
    cfg = resolve_config(args, parser)
    dim = cfg["encoder.dim"]
    generator = torch.Generator().manual_seed(derive_seed(cfg["seed"], "init"))
    shared = SharedPerturbationHead(dim, dropout=cfg["head.dropout"], generator=generator)
    independent = IndependentHeads(dim, dropout=cfg["head.dropout"], generator=generator)
    shared_params = count_parameters(shared)
    independent_params = count_parameters(independent)
    ratio = shared_params / independent_params

    def bench(head, train: bool) -> dict:
        head.train(train)
        gen = torch.Generator().manual_seed(0)
        batch = [torch.randn(head.k, dim, generator=gen, dtype=DTYPE) for _ in range(args.batch)]
        optimizer = torch.optim.Adam(head.parameters()) if train else None
        start = time.perf_counter()
        for _ in range(args.repeats):
            if train:
                loss = torch.stack([head(x).pow(2).mean() for x in batch]).mean()
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
            else:
                with torch.no_grad():
                    for x in batch:
                        head(x)
        elapsed = (time.perf_counter() - start) / args.repeats
        return {"time_ms": elapsed * 1e3, "samples_per_sec": args.batch / elapsed}

    table = {
        "dim": dim,
        "batch": args.batch,
        "parameters": {"shared": shared_params, "independent": independent_params},
        "ratio_shared_over_independent": ratio,
        "training": {"shared": bench(shared, True), "independent": bench(independent, True)},
        "inference": {"shared": bench(shared, False), "independent": bench(independent, False)},
    }
    print(f"head parameter comparison at d={dim}, k={shared.k}, m={shared.m}")
    print(f"{'method':<12} {'parameters':>12} {'train ms':>10} {'train sps':>11} "
          f"{'infer ms':>10} {'infer sps':>11}")
    for name in ("independent", "shared"):
        print(
            f"{name:<12} {table['parameters'][name]:>12,} "
            f"{table['training'][name]['time_ms']:>10.3f} "
            f"{table['training'][name]['samples_per_sec']:>11.1f} "
            f"{table['inference'][name]['time_ms']:>10.3f} "
            f"{table['inference'][name]['samples_per_sec']:>11.1f}"
        )
    print(f"shared/independent parameter ratio: {ratio:.4f} ({'<' if ratio < 0.25 else '>='} 0.25)")
    if args.out:
        _write_json(Path(args.out) / "headbench.json", table)
        print(f"wrote {Path(args.out) / 'headbench.json'}")
    return 0


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "analyze": cmd_analyze,
    "gen-synth": cmd_gen_synth,
    "headbench": cmd_headbench,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args, parser)
    except ConfigError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 2
    except TeachEvalError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


def run(argv=None) -> int:
    """Programmatic alias for the CLI entry point."""
    return main(argv)


if __name__ == "__main__":
    raise SystemExit(main())
