"""Dimension-anchored evidence encoding.

Five dimension-word queries are optionally refined against per-dimension
prototype snippets (annotated rationale spans at training time, uniform
contiguous blocks otherwise), stabilized with DyT, and used to pool
evidence vectors from the comment readout by cross-attention.
"""

from __future__ import annotations

import math

import numpy as np
import torch
from torch import Tensor, nn

from .data import NUM_DIMENSIONS, CommentRecord, TokenSequence, rationale_token_set, tokenize
from .errors import EmptySnippet, NonPositiveAlpha
from .graph import DTYPE, _init_matrix, as_tensor


def uniform_blocks(n: int, k: int = NUM_DIMENSIONS) -> list[list[int]]:
    """Partition 0..n-1 into k contiguous near-equal blocks, larger blocks
    first; for n < k the empty tail blocks borrow the final token."""
    base, rem = divmod(n, k)
    blocks, start = [], 0
    for j in range(k):
        size = base + (1 if j < rem else 0)
        blocks.append(list(range(start, start + size)) if size else [n - 1])
        start += size
    return blocks


def segment_prototypes(
    record: CommentRecord | None,
    token_seq: TokenSequence,
    mode: str = "uniform",
    k: int = NUM_DIMENSIONS,
) -> list[list[int]]:
    """Per-dimension prototype snippets as sorted token-index lists.

    ``annotated`` uses each dimension's rationale span, falling back to that
    dimension's uniform block when the span is empty or truncated away;
    ``uniform`` ignores annotations entirely.
    """
    fallback = uniform_blocks(token_seq.n, k)
    if mode == "uniform":
        return fallback
    if mode != "annotated":
        raise ValueError(f"unknown segmentation mode {mode!r}")
    if record is None:
        return fallback
    snippets = []
    for i in range(k):
        idx = sorted(rationale_token_set(record, i, token_seq))
        snippets.append(idx if idx else fallback[i])
    return snippets


def refine_query(q, h_r, w_k, u) -> tuple[Tensor, Tensor]:
    """Gated prototype interaction for one dimension.

    a = softmax(H_r W_K q / sqrt(d)); p = a^T H_r;
    lambda = sigmoid(u . [q; p]); q* = (1 - lambda) q + lambda p.
    Returns (q*, lambda).
    """
    q, h_r = as_tensor(q), as_tensor(h_r)
    w_k, u = as_tensor(w_k), as_tensor(u)
    if h_r.ndim != 2 or h_r.shape[0] == 0:
        raise EmptySnippet("query refinement requires at least one snippet token")
    d = q.shape[0]
    attn = torch.softmax(h_r @ w_k @ q / math.sqrt(d), dim=0)
    pooled = attn @ h_r
    gate = torch.sigmoid(u @ torch.cat([q, pooled]))
    return (1.0 - gate) * q + gate * pooled, gate


def dyt(z, gamma, beta, alpha) -> Tensor:
    """Dynamic-tanh normalization: gamma * tanh(alpha * z) + beta, alpha > 0."""
    alpha_t = as_tensor(alpha)
    if bool(alpha_t <= 0):
        raise NonPositiveAlpha(f"DyT alpha must be positive, got {float(alpha_t)}")
    return as_tensor(gamma) * torch.tanh(alpha_t * as_tensor(z)) + as_tensor(beta)


def extract_evidence(h_q, h_x, w_proj) -> tuple[Tensor, Tensor]:
    """Query-conditioned pooling over comment tokens.

    The (n, 2d) readout is first projected to (n, d) by ``w_proj``; then
    A = softmax(H_Q H~_x^T / sqrt(d)) and H_E = A H~_x.
    Returns (H_E, A).
    """
    h_q, h_x, w_proj = as_tensor(h_q), as_tensor(h_x), as_tensor(w_proj)
    h_proj = h_x @ w_proj
    d = h_q.shape[1]
    attn = torch.softmax(h_q @ h_proj.T / math.sqrt(d), dim=-1)
    return attn @ h_proj, attn


def encode_dimension_words(words, provider, max_len: int = 16) -> Tensor:
    """Encode each dimension word with the frozen provider; multi-token words
    are mean-pooled over their tokens."""
    rows = []
    for word in words:
        seq = tokenize(word, max_len=max_len)
        rows.append(provider.embed(seq).values.mean(axis=0))
    return torch.as_tensor(np.stack(rows), dtype=DTYPE)


class EvidenceEncoder(nn.Module):
    """Refinement + DyT + cross-attention stage working on (k, d) queries."""

    def __init__(
        self,
        dim: int,
        alpha_init: float = 0.5,
        generator: torch.Generator | None = None,
    ):
        super().__init__()
        g = generator if generator is not None else torch.Generator().manual_seed(0)
        self.dim = dim
        # 1/d keeps the snippet-relevance logits O(1) at encoder scale
        self.refine_w_k = _init_matrix(dim, dim, 1.0 / dim, g)
        # zero gate vector => lambda = 0.5 at init (neutral convex mix)
        self.refine_u = nn.Parameter(torch.zeros(2 * dim, dtype=DTYPE))
        self.dyt_gamma = nn.Parameter(torch.ones(dim, dtype=DTYPE))
        self.dyt_beta = nn.Parameter(torch.zeros(dim, dtype=DTYPE))
        self.dyt_alpha = nn.Parameter(torch.tensor(float(alpha_init), dtype=DTYPE))
        # Averaging init: the projected readout starts as the mean of the two
        # branch halves, so it lives in the same space as the queries and the
        # query/token attention is meaningful before any training.
        eye = torch.eye(dim, dtype=DTYPE)
        self.w_proj = nn.Parameter(
            torch.cat([eye, eye], dim=0) * 0.5
            + torch.randn(2 * dim, dim, generator=g, dtype=DTYPE) * (0.1 / math.sqrt(dim))
        )

    def refine(self, queries: Tensor, snippet_embeds: list[Tensor]) -> tuple[Tensor, Tensor]:
        """Refine each query against its snippet; returns (Q_new, gates)."""
        rows, gates = [], []
        for i in range(queries.shape[0]):
            q_star, gate = refine_query(queries[i], snippet_embeds[i], self.refine_w_k, self.refine_u)
            rows.append(q_star)
            gates.append(gate)
        return torch.stack(rows), torch.stack(gates)

    def forward(
        self,
        queries: Tensor,
        snippet_embeds: list[Tensor] | None,
        h_x: Tensor,
        refine: bool = True,
        collect: dict | None = None,
    ) -> tuple[Tensor, Tensor]:
        """Full evidence stage; returns (H_E, A)."""
        if refine:
            if snippet_embeds is None:
                raise EmptySnippet("refinement requires snippet embeddings")
            refined, gates = self.refine(queries, snippet_embeds)
        else:
            refined, gates = queries, None
        h_q = dyt(refined, self.dyt_gamma, self.dyt_beta, self.dyt_alpha)
        evidence, attn = extract_evidence(h_q, h_x, self.w_proj)
        if collect is not None:
            collect["refined_queries"] = refined
            collect["normalized_queries"] = h_q
            if gates is not None:
                collect["gates"] = gates
        return evidence, attn

    def canonical_tensors(self) -> dict[str, Tensor]:
        return {
            "refine.WK": self.refine_w_k,
            "refine.u": self.refine_u,
            "dyt.gamma": self.dyt_gamma,
            "dyt.beta": self.dyt_beta,
            "dyt.alpha": self.dyt_alpha,
            "readout.Wproj": self.w_proj,
        }
