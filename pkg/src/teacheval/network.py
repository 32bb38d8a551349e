"""Full per-comment network: frozen features -> dual-graph readout ->
evidence attention -> prediction head.

Frozen inputs (token embeddings, pruned syntactic adjacency, snippet
embeddings, gold rationale sets) are precomputed once per comment in
:class:`CommentPrecomp`; only the trainable path is re-run per forward.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from torch import Tensor, nn

from .data import (
    DIMENSIONS,
    NUM_CLASSES,
    NUM_DIMENSIONS,
    CommentRecord,
    TokenSequence,
    rationale_token_set,
    tokenize,
)
from .evidence import EvidenceEncoder, encode_dimension_words, segment_prototypes
from .graph import DTYPE, DualGraphEncoder, differential_penalty, normalize_sym, prune_syntactic
from .heads import IndependentHeads, PredictionResult, SharedPerturbationHead, classification_loss

MODES = ("full", "no_dualgcn", "no_refine")


@dataclass
class CommentPrecomp:
    """Frozen per-comment inputs plus supervision targets."""

    token_seq: TokenSequence
    h0: Tensor  # (n, d)
    a_syn_hat: Tensor | None  # (n, n), pruned + symmetrically normalized
    snippets: list[list[int]]  # k token-index lists
    snippet_embeds: list[Tensor]  # k tensors (m_i, d), standalone re-embeddings
    gold_sets: list[set[int]]  # k rationale token sets (may be empty)
    y: np.ndarray | None  # (k,) scores, None for unlabeled text
    record: CommentRecord | None = None


@dataclass
class ForwardResult:
    h_x: Tensor  # (n, 2d)
    queries: Tensor  # (k, d) initial
    refined_queries: Tensor  # (k, d)
    normalized_queries: Tensor  # (k, d) post-DyT
    evidence: Tensor  # (k, d)
    attention: Tensor  # (k, n)
    prediction: PredictionResult
    diff_penalty: Tensor | None = None
    extras: dict = field(default_factory=dict)


def precompute_comment(
    record: CommentRecord | None,
    *,
    embed_provider,
    arc_provider,
    text: str | None = None,
    max_len: int = 128,
    tau: float = 1.0,
    eta: float = 0.3,
    segmentation: str = "uniform",
    needs_graph: bool = True,
) -> CommentPrecomp:
    """Tokenize and freeze everything the network consumes for one comment."""
    source = record.text if record is not None else text
    if source is None:
        raise ValueError("either a record or raw text is required")
    token_seq = tokenize(source, max_len=max_len)
    h0 = torch.as_tensor(embed_provider.embed(token_seq).values, dtype=DTYPE)
    a_syn_hat = None
    if needs_graph:
        arcs = arc_provider.arc_probabilities(token_seq).values
        a_syn_hat = normalize_sym(prune_syntactic(arcs, tau, eta))
    snippets = segment_prototypes(record, token_seq, mode=segmentation)
    tokens = token_seq.tokens
    snippet_embeds = [
        torch.as_tensor(
            embed_provider.embed_words([tokens[j] for j in idx]), dtype=DTYPE
        )
        for idx in snippets
    ]
    if record is not None:
        gold = [rationale_token_set(record, i, token_seq) for i in range(NUM_DIMENSIONS)]
        y = np.asarray(record.scores, dtype=np.int64)
    else:
        gold = [set() for _ in range(NUM_DIMENSIONS)]
        y = None
    return CommentPrecomp(
        token_seq=token_seq,
        h0=h0,
        a_syn_hat=a_syn_hat,
        snippets=snippets,
        snippet_embeds=snippet_embeds,
        gold_sets=gold,
        y=y,
        record=record,
    )


class FacetNetwork(nn.Module):
    """Everything trainable, assembled per the configured ablation mode."""

    def __init__(
        self,
        dim: int,
        queries: Tensor,
        layers: int = 3,
        dropout: float = 0.1,
        mode: str = "full",
        head_mode: str = "shared",
        refine: bool = True,
        trainable_queries: bool = False,
        dyt_alpha_init: float = 0.5,
        head_dropout: float = 0.1,
        diff_reg_weight: float = 0.0,
        seed: int = 0,
    ):
        super().__init__()
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
        if queries.shape != (NUM_DIMENSIONS, dim):
            raise ValueError(
                f"queries must be ({NUM_DIMENSIONS}, {dim}), got {tuple(queries.shape)}"
            )
        g = torch.Generator().manual_seed(seed)
        self.dim = dim
        self.mode = mode
        self.refine_enabled = refine and mode != "no_refine"
        self.diff_reg_weight = diff_reg_weight
        self.graph = DualGraphEncoder(dim, layers=layers, dropout=dropout, generator=g)
        self.evidence = EvidenceEncoder(dim, alpha_init=dyt_alpha_init, generator=g)
        if head_mode == "shared":
            self.head = SharedPerturbationHead(dim, dropout=head_dropout, generator=g)
        elif head_mode == "independent":
            self.head = IndependentHeads(dim, dropout=head_dropout, generator=g)
        else:
            raise ValueError(f"head_mode must be shared or independent, got {head_mode!r}")
        q = queries.detach().clone().to(DTYPE)
        if trainable_queries:
            self.queries = nn.Parameter(q)
        else:
            self.register_buffer("queries", q)

    def encode_comment(self, precomp: CommentPrecomp, collect: dict | None = None) -> Tensor:
        """Dual-graph readout H_x of shape (n, 2d)."""
        return self.graph.encode_comment(
            precomp.h0, precomp.a_syn_hat, mode="no_dualgcn" if self.mode == "no_dualgcn" else "full",
            collect=collect,
        )

    def encode_evidence(
        self, precomp: CommentPrecomp, h_x: Tensor, collect: dict | None = None
    ) -> tuple[Tensor, Tensor]:
        """Evidence vectors H_E (k, d) and attention map A (k, n)."""
        return self.evidence(
            self.queries,
            precomp.snippet_embeds if self.refine_enabled else None,
            h_x,
            refine=self.refine_enabled,
            collect=collect,
        )

    def forward_comment(self, precomp: CommentPrecomp, collect_extras: bool = False) -> ForwardResult:
        extras: dict | None = {} if collect_extras else None
        need_branches = self.diff_reg_weight > 0 and self.mode != "no_dualgcn"
        graph_collect = extras if collect_extras else ({} if need_branches else None)
        h_x = self.encode_comment(precomp, collect=graph_collect)
        ev_collect: dict = {}
        evidence, attention = self.encode_evidence(precomp, h_x, collect=ev_collect)
        prediction = PredictionResult.from_logits(self.head(evidence))
        diff_penalty = None
        if need_branches and graph_collect is not None:
            h_syn, h_sem = graph_collect["final_branches"]
            diff_penalty = differential_penalty(h_syn, h_sem)
        return ForwardResult(
            h_x=h_x,
            queries=self.queries,
            refined_queries=ev_collect["refined_queries"],
            normalized_queries=ev_collect["normalized_queries"],
            evidence=evidence,
            attention=attention,
            prediction=prediction,
            diff_penalty=diff_penalty,
            extras=extras if collect_extras else {},
        )

    def comment_loss(self, precomp: CommentPrecomp, class_weights=(1.0, 1.0, 1.0)) -> Tensor:
        if precomp.y is None:
            raise ValueError("comment has no labels")
        result = self.forward_comment(precomp)
        loss = classification_loss(result.prediction, precomp.y, class_weights)
        if result.diff_penalty is not None:
            loss = loss + self.diff_reg_weight * result.diff_penalty
        return loss

    def canonical_tensors(self) -> dict[str, Tensor]:
        """Spec'd checkpoint tensor naming for every trainable tensor."""
        out = {}
        out.update(self.graph.canonical_tensors())
        out.update(self.evidence.canonical_tensors())
        out.update(self.head.canonical_tensors())
        if isinstance(self.queries, nn.Parameter):
            out["dims.Q"] = self.queries
        return out

    def load_canonical_tensors(self, tensors: dict[str, Tensor]) -> None:
        own = self.canonical_tensors()
        missing = sorted(set(own) - set(tensors))
        unexpected = sorted(set(tensors) - set(own))
        if missing or unexpected:
            raise ValueError(
                f"tensor name mismatch: missing {missing or 'none'}, unexpected {unexpected or 'none'}"
            )
        with torch.no_grad():
            for name, param in own.items():
                value = torch.as_tensor(tensors[name], dtype=param.dtype)
                if value.shape != param.shape:
                    raise ValueError(
                        f"shape mismatch for {name}: checkpoint {tuple(value.shape)} vs model {tuple(param.shape)}"
                    )
                param.copy_(value)


def build_queries(words, embed_provider) -> Tensor:
    if len(words) != NUM_DIMENSIONS:
        raise ValueError(f"expected {NUM_DIMENSIONS} dimension words, got {len(words)}")
    return encode_dimension_words(words, embed_provider)


def default_dimension_words() -> tuple[str, ...]:
    return DIMENSIONS
