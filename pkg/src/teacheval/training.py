"""Training protocol: cosine-annealed Adam over all trainable tensors, with
seeded determinism, per-epoch evaluation logging, and a deterministic
single-file checkpoint format."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .config import Config, derive_seed
from .data import (
    DatasetSplit,
    generate_synthetic,
    load_dataset,
    split_dataset,
)
from .errors import ConfigMismatch, CorruptCheckpoint, EmptySplit, NonFiniteLoss
from .graph import DTYPE
from .metrics import evaluate_split
from .network import CommentPrecomp, FacetNetwork, build_queries, precompute_comment
from .providers import build_arc_provider, build_embedding_provider

CHECKPOINT_MAGIC = b"TEVCK1\n"


def lr_schedule(epoch: int, lr_init: float = 2e-3, lr_min: float = 5e-4, t_max: int = 10) -> float:
    """Cosine annealing from lr_init to lr_min over t_max epochs (0-indexed),
    flat at lr_min afterwards."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    e = min(epoch, t_max)
    return lr_min + 0.5 * (lr_init - lr_min) * (1.0 + math.cos(math.pi * e / t_max))


# ---------------------------------------------------------------------------
# Checkpoints: JSON header + raw little-endian tensor bytes. The layout is
# fully deterministic, so identical tensors give identical files.

def save_checkpoint(model_or_tensors, path: str | Path, config_hash: str) -> None:
    if hasattr(model_or_tensors, "canonical_tensors"):
        tensors = model_or_tensors.canonical_tensors()
    else:
        tensors = model_or_tensors
    entries = []
    payload = bytearray()
    for name in sorted(tensors):
        t = tensors[name]
        arr = t.detach().cpu().numpy() if torch.is_tensor(t) else np.asarray(t)
        arr = np.ascontiguousarray(arr)
        if arr.dtype.byteorder not in ("<", "=", "|"):
            arr = arr.astype(arr.dtype.newbyteorder("<"))
        raw = arr.tobytes()
        entries.append(
            {
                "name": name,
                "dtype": arr.dtype.str,
                "shape": list(arr.shape),
                "offset": len(payload),
                "nbytes": len(raw),
            }
        )
        payload.extend(raw)
    header = json.dumps(
        {"config_hash": config_hash, "tensors": entries}, sort_keys=True
    ).encode("utf-8")
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with p.open("wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(len(header).to_bytes(8, "big"))
        f.write(header)
        f.write(bytes(payload))


def load_checkpoint(
    path: str | Path, expected_config_hash: str | None = None
) -> tuple[dict[str, torch.Tensor], str]:
    """Read a checkpoint; returns (tensors, stored config hash)."""
    p = Path(path)
    try:
        blob = p.read_bytes()
        if not blob.startswith(CHECKPOINT_MAGIC):
            raise ValueError("bad magic")
        cursor = len(CHECKPOINT_MAGIC)
        header_len = int.from_bytes(blob[cursor : cursor + 8], "big")
        cursor += 8
        header = json.loads(blob[cursor : cursor + header_len].decode("utf-8"))
        cursor += header_len
        payload = blob[cursor:]
        tensors: dict[str, torch.Tensor] = {}
        for entry in header["tensors"]:
            start, nbytes = entry["offset"], entry["nbytes"]
            if start + nbytes > len(payload):
                raise ValueError("payload truncated")
            arr = np.frombuffer(payload[start : start + nbytes], dtype=np.dtype(entry["dtype"]))
            tensors[entry["name"]] = torch.as_tensor(arr.reshape(entry["shape"]).copy())
        stored_hash = header["config_hash"]
    except (OSError, ValueError, KeyError, TypeError, json.JSONDecodeError) as e:
        raise CorruptCheckpoint(f"cannot read checkpoint {p}: {e}") from e
    if expected_config_hash is not None and stored_hash != expected_config_hash:
        raise ConfigMismatch(
            f"checkpoint {p} was saved under config hash {stored_hash[:12]}..., "
            f"expected {expected_config_hash[:12]}..."
        )
    return tensors, stored_hash


# ---------------------------------------------------------------------------
# Data and model assembly from a resolved config

def prepare_records(cfg: Config):
    path = cfg["data.path"]
    if path:
        return load_dataset(path, format=cfg["data.format"])
    return generate_synthetic(
        cfg["data.synth_records"],
        vocab_size=cfg["data.synth_vocab"],
        seed=derive_seed(cfg["seed"], "synth"),
        score_prior=cfg["data.synth_priors"],
    )


def prepare_split(cfg: Config, records=None) -> DatasetSplit:
    if records is None:
        records = prepare_records(cfg)
    ratios = (cfg["split.train"], cfg["split.val"], cfg["split.test"])
    return split_dataset(records, ratios=ratios, seed=derive_seed(cfg["seed"], "split"))


def build_providers(cfg: Config):
    embed = build_embedding_provider(
        cfg["encoder.provider"], dim=cfg["encoder.dim"], model=cfg["encoder.model"]
    )
    arcs = build_arc_provider(cfg["parser.provider"], file=cfg["parser.file"])
    return embed, arcs


def build_model(cfg: Config, embed_provider, run_seed: int) -> FacetNetwork:
    queries = build_queries(cfg["dims.words"], embed_provider)
    return FacetNetwork(
        dim=embed_provider.dim,
        queries=queries,
        layers=cfg["synergy.layers"],
        dropout=cfg["synergy.dropout"],
        mode=cfg["mode"],
        head_mode=cfg["head.mode"],
        refine=cfg["refine.enabled"],
        trainable_queries=cfg["dims.trainable_queries"],
        dyt_alpha_init=cfg["dyt.alpha_init"],
        head_dropout=cfg["head.dropout"],
        diff_reg_weight=cfg["loss.diff_reg_weight"],
        seed=derive_seed(run_seed, "init"),
    )


def _segmentation_mode(cfg: Config, training: bool) -> str:
    mode = cfg["refine.segmentation"]
    if mode == "auto":
        return "annotated" if training else "uniform"
    return mode


def precompute_records(cfg: Config, records, embed_provider, arc_provider, training: bool):
    needs_graph = cfg["mode"] != "no_dualgcn"
    seg = _segmentation_mode(cfg, training)
    return [
        precompute_comment(
            rec,
            embed_provider=embed_provider,
            arc_provider=arc_provider,
            max_len=cfg["tokenizer.max_len"],
            tau=cfg["synergy.tau"],
            eta=cfg["synergy.eta"],
            segmentation=seg,
            needs_graph=needs_graph,
        )
        for rec in records
    ]


# ---------------------------------------------------------------------------
# Training

@dataclass
class RunRecord:
    """Outcome of one seeded run: per-epoch losses/metrics and the checkpoint."""

    seed: int
    config_hash: str
    mode: str
    epochs: list[dict] = field(default_factory=list)
    checkpoint_path: str | None = None
    final_val: dict | None = None
    provider_checksums: dict = field(default_factory=dict)


def _epoch_payload(epoch: int, split: str, evaluation: dict) -> dict:
    payload = {
        "event": "epoch",
        "epoch": epoch,
        "split": split,
        "loss": evaluation["loss"],
    }
    if "metrics" in evaluation:
        payload["metrics"] = evaluation["metrics"].to_json_dict()
    payload["alignment"] = evaluation["alignment"].to_json_dict()
    return payload


def train_run(
    split: DatasetSplit,
    cfg: Config,
    run_seed: int,
    out_dir: str | Path | None = None,
    log=None,
) -> tuple[FacetNetwork, RunRecord]:
    """One seeded end-to-end optimization run.

    Deterministic bit-for-bit under a fixed seed and single-threaded torch.
    ``log`` receives one JSON-ready dict per event.
    """
    if not split.train:
        raise EmptySplit("training requires a non-empty train split")
    torch.set_num_threads(max(1, cfg["train.threads"]))
    embed_provider, arc_provider = build_providers(cfg)
    record = RunRecord(seed=run_seed, config_hash=cfg.hash(), mode=cfg["mode"])
    record.provider_checksums["encoder_before"] = embed_provider.checksum()
    record.provider_checksums["parser_before"] = arc_provider.checksum()

    model = build_model(cfg, embed_provider, run_seed)
    train_pc = precompute_records(cfg, split.train, embed_provider, arc_provider, training=True)
    val_pc = precompute_records(cfg, split.validation, embed_provider, arc_provider, training=False)

    torch.manual_seed(derive_seed(run_seed, "dropout"))
    shuffle_rng = np.random.default_rng(derive_seed(run_seed, "shuffle"))
    optimizer = torch.optim.Adam(
        model.parameters(), lr=cfg["train.lr_init"], weight_decay=cfg["train.weight_decay"]
    )
    weights = cfg["head.class_weights"]
    batch_size = cfg["train.batch_size"]
    clip = cfg["train.clip_norm"]
    epochs = cfg["train.epochs"]

    if log:
        log({"event": "run_start", "seed": run_seed, "config_hash": record.config_hash,
             "mode": record.mode, "train_size": len(train_pc), "val_size": len(val_pc)})

    for epoch_index in range(epochs):
        lr = lr_schedule(
            epoch_index, lr_init=cfg["train.lr_init"], lr_min=cfg["train.lr_min"],
            t_max=cfg["train.t_max"],
        )
        for group in optimizer.param_groups:
            group["lr"] = lr
        model.train()
        perm = shuffle_rng.permutation(len(train_pc))
        for start in range(0, len(perm), batch_size):
            batch = perm[start : start + batch_size]
            losses = [model.comment_loss(train_pc[i], weights) for i in batch]
            loss = torch.stack(losses).mean()
            if not torch.isfinite(loss):
                raise NonFiniteLoss(
                    f"non-finite loss at epoch {epoch_index + 1}, batch {start // batch_size}"
                )
            optimizer.zero_grad()
            loss.backward()
            if clip > 0:
                torch.nn.utils.clip_grad_norm_(model.parameters(), clip)
            optimizer.step()
            with torch.no_grad():
                # keep the DyT positivity invariant under unconstrained updates
                model.evidence.dyt_alpha.clamp_(min=1e-4)

        epoch = epoch_index + 1
        entry: dict = {"epoch": epoch, "lr": lr}
        train_eval = evaluate_split(
            model, train_pc, class_weights=weights,
            ece_bins=cfg["eval.ece_bins"], top_frac=cfg["eval.top_frac"],
        )
        entry["train"] = _epoch_payload(epoch, "train", train_eval)
        if log:
            log(entry["train"])
        if val_pc:
            val_eval = evaluate_split(
                model, val_pc, class_weights=weights,
                ece_bins=cfg["eval.ece_bins"], top_frac=cfg["eval.top_frac"],
            )
            entry["val"] = _epoch_payload(epoch, "val", val_eval)
            record.final_val = entry["val"]
            if log:
                log(entry["val"])
        record.epochs.append(entry)

    record.provider_checksums["encoder_after"] = embed_provider.checksum()
    record.provider_checksums["parser_after"] = arc_provider.checksum()

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        ckpt = out / f"checkpoint_seed{run_seed}.tevck"
        save_checkpoint(model, ckpt, record.config_hash)
        record.checkpoint_path = str(ckpt)
    if log:
        log({"event": "run_end", "seed": run_seed,
             "checkpoint": record.checkpoint_path,
             "provider_checksums": record.provider_checksums})
    return model, record


def train_protocol(
    cfg: Config, out_dir: str | Path | None = None, log=None
) -> tuple[list[RunRecord], dict]:
    """Repeat training across the configured seeds and summarize final
    validation metrics as mean +/- sd."""
    split = prepare_split(cfg)
    records: list[RunRecord] = []
    for run_seed in cfg["train.seeds"]:
        _, rec = train_run(split, cfg, run_seed, out_dir=out_dir, log=log)
        records.append(rec)
    summary = summarize_protocol(records)
    if log:
        log({"event": "protocol_summary", **summary})
    return records, summary


def summarize_protocol(records: list[RunRecord]) -> dict:
    summary: dict = {"seeds": [r.seed for r in records]}
    finals = [r.final_val for r in records if r.final_val and "metrics" in r.final_val]
    if finals:
        keys = ("accuracy", "macro_f1", "qwk", "ece")
        values = {k: [f["metrics"]["average"][k] for f in finals] for k in keys}
        summary["val_mean"] = {k: float(np.mean(v)) for k, v in values.items()}
        summary["val_sd"] = {k: float(np.std(v)) for k, v in values.items()}
    return summary


def load_model_from_checkpoint(cfg: Config, path: str | Path) -> FacetNetwork:
    """Rebuild the network for ``cfg`` and restore tensors, verifying the
    stored config hash."""
    tensors, _ = load_checkpoint(path, expected_config_hash=cfg.hash())
    embed_provider, _ = build_providers(cfg)
    model = build_model(cfg, embed_provider, run_seed=0)
    model.load_canonical_tensors({k: v.to(DTYPE) for k, v in tensors.items()})
    return model
