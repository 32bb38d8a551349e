"""Dual-graph comment encoder: syntactic + semantic GCN branches with
biaffine cross-view fusion.

The functional ops here are the numerical contract (tested against direct
reference evaluations); :class:`DualGraphEncoder` wires them into the
layered module used by the full network. All math runs in float64.
"""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from .errors import ZeroDegree

DTYPE = torch.float64
LAYER_NORM_EPS = 1e-5


def as_tensor(x) -> Tensor:
    if torch.is_tensor(x):
        return x
    return torch.as_tensor(x, dtype=DTYPE)


def prune_syntactic(arc_matrix, tau: float, eta: float) -> Tensor:
    """Threshold arc probabilities at eta after temperature scaling, then add
    self-loops: ``1[A/tau >= eta] * A + I``. Retained weights stay unscaled."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    if not (0.0 <= eta <= 1.0):
        raise ValueError("eta must lie in [0, 1]")
    a = as_tensor(arc_matrix)
    keep = (a / tau >= eta).to(a.dtype)
    return a * keep + torch.eye(a.shape[0], dtype=a.dtype)


def normalize_sym(adjacency) -> Tensor:
    """Symmetric degree normalization D^{-1/2} A D^{-1/2} with D = diag(A 1)."""
    a = as_tensor(adjacency)
    degrees = a.sum(dim=1)
    if bool((degrees <= 0).any()):
        raise ZeroDegree("adjacency has a zero-degree row; self-loops are missing")
    inv_sqrt = degrees.pow(-0.5)
    return a * inv_sqrt.unsqueeze(1) * inv_sqrt.unsqueeze(0)


def layer_norm_rows(x: Tensor, scale, shift, eps: float = LAYER_NORM_EPS) -> Tensor:
    """Per-row normalization to zero mean / unit variance, then learned affine."""
    mean = x.mean(dim=-1, keepdim=True)
    var = x.var(dim=-1, unbiased=False, keepdim=True)
    return (x - mean) / torch.sqrt(var + eps) * as_tensor(scale) + as_tensor(shift)


def gcn_layer(h, a_hat, w, scale, shift) -> Tensor:
    """One propagation step: LayerNorm(GELU(A_hat H W)). GELU is the exact
    Gaussian-CDF form."""
    h, a_hat, w = as_tensor(h), as_tensor(a_hat), as_tensor(w)
    return layer_norm_rows(F.gelu(a_hat @ h @ w), scale, shift)


def semantic_adjacency(h, w_q, w_k) -> Tensor:
    """Scaled dot-product affinity: softmax((H W_Q)(H W_K)^T / sqrt(d)) row-wise."""
    h, w_q, w_k = as_tensor(h), as_tensor(w_q), as_tensor(w_k)
    d = h.shape[1]
    logits = (h @ w_q) @ (h @ w_k).T / math.sqrt(d)
    return torch.softmax(logits, dim=-1)


def biaffine_fuse(h_syn, h_sem, w_1, w_2) -> tuple[Tensor, Tensor]:
    """Bidirectional soft alignment between the two branches:
    syn' = softmax(H_syn W1 H_sem^T) H_sem and sem' = softmax(H_sem W2 H_syn^T) H_syn."""
    h_syn, h_sem = as_tensor(h_syn), as_tensor(h_sem)
    w_1, w_2 = as_tensor(w_1), as_tensor(w_2)
    align_syn = torch.softmax(h_syn @ w_1 @ h_sem.T, dim=-1)
    align_sem = torch.softmax(h_sem @ w_2 @ h_syn.T, dim=-1)
    return align_syn @ h_sem, align_sem @ h_syn


def differential_penalty(h_syn: Tensor, h_sem: Tensor, eps: float = 1e-12) -> Tensor:
    """Squared Frobenius norm of the column-normalized cross-covariance of the
    two branch states. Optional disentanglement hook, off by default."""
    a = h_syn - h_syn.mean(dim=0, keepdim=True)
    b = h_sem - h_sem.mean(dim=0, keepdim=True)
    a = a / (a.norm(dim=0, keepdim=True) + eps)
    b = b / (b.norm(dim=0, keepdim=True) + eps)
    return (a.T @ b).pow(2).sum()


def _init_matrix(rows: int, cols: int, std: float, generator: torch.Generator) -> nn.Parameter:
    return nn.Parameter(torch.randn(rows, cols, generator=generator, dtype=DTYPE) * std)


def _init_near_identity(dim: int, noise_std: float, generator: torch.Generator,
                        scale: float = 1.0) -> nn.Parameter:
    return nn.Parameter(
        torch.eye(dim, dtype=DTYPE) * scale
        + torch.randn(dim, dim, generator=generator, dtype=DTYPE) * noise_std
    )


class DualGraphEncoder(nn.Module):
    """L stacked layers of {syntactic GCN, semantic GCN, biaffine fusion}.

    The syntactic adjacency is fixed per comment (arc probabilities are
    input data); the semantic adjacency is rebuilt from the current semantic
    state at every layer. The readout concatenates [H_sem || H_syn].
    """

    def __init__(
        self,
        dim: int,
        layers: int = 3,
        dropout: float = 0.1,
        generator: torch.Generator | None = None,
    ):
        super().__init__()
        if layers < 1:
            raise ValueError("layer count must be >= 1")
        g = generator if generator is not None else torch.Generator().manual_seed(0)
        self.dim = dim
        self.layers = layers
        xavier = math.sqrt(1.0 / dim)
        # Near-identity propagation init keeps both branches in a shared
        # space, so the fusion alignments relate corresponding tokens instead
        # of arbitrary rotations of them.
        self.syn_w = nn.ParameterList(
            _init_near_identity(dim, 0.1 * xavier, g) for _ in range(layers)
        )
        self.sem_w = nn.ParameterList(
            _init_near_identity(dim, 0.1 * xavier, g) for _ in range(layers)
        )
        # 1/d (not Xavier) keeps the semantic-affinity logits O(1): the graph
        # is rebuilt from the current state every layer, and a sharp random
        # affinity at init feeds back on itself across layers.
        self.w_q = _init_matrix(dim, dim, 1.0 / dim, g)
        self.w_k = _init_matrix(dim, dim, 1.0 / dim, g)
        # Fusion bilinears start sharp and diagonal-dominant. Soft/uniform
        # alignment overwrites every token row with the branch mean (identity
        # collapse, vanishing LayerNorm variances); sharp but non-diagonal
        # alignment shuffles which token sits at which position. Neither
        # leaves the evidence attention anything to focus on.
        self.w_1 = _init_near_identity(dim, 4.0 / dim, g, scale=40.0 / dim)
        self.w_2 = _init_near_identity(dim, 4.0 / dim, g, scale=40.0 / dim)
        ones = lambda: nn.Parameter(torch.ones(dim, dtype=DTYPE))
        zeros = lambda: nn.Parameter(torch.zeros(dim, dtype=DTYPE))
        self.ln_syn_scale = nn.ParameterList(ones() for _ in range(layers))
        self.ln_syn_shift = nn.ParameterList(zeros() for _ in range(layers))
        self.ln_sem_scale = nn.ParameterList(ones() for _ in range(layers))
        self.ln_sem_shift = nn.ParameterList(zeros() for _ in range(layers))
        self.dropout = nn.Dropout(dropout)

    def forward(
        self, h0: Tensor, a_syn_hat: Tensor, collect: dict | None = None
    ) -> tuple[Tensor, Tensor]:
        """Run all layers from the shared initialization; returns the final
        (H_syn, H_sem) pair."""
        h_syn = h_sem = h0
        for layer in range(self.layers):
            h_syn_new = gcn_layer(
                h_syn, a_syn_hat, self.syn_w[layer],
                self.ln_syn_scale[layer], self.ln_syn_shift[layer],
            )
            a_sem = semantic_adjacency(h_sem, self.w_q, self.w_k)
            a_sem_tilde = normalize_sym(a_sem + torch.eye(a_sem.shape[0], dtype=a_sem.dtype))
            h_sem_new = gcn_layer(
                h_sem, a_sem_tilde, self.sem_w[layer],
                self.ln_sem_scale[layer], self.ln_sem_shift[layer],
            )
            if collect is not None:
                collect.setdefault("semantic_adjacency", []).append(a_sem)
                align_syn = torch.softmax(h_syn_new @ self.w_1 @ h_sem_new.T, dim=-1)
                align_sem = torch.softmax(h_sem_new @ self.w_2 @ h_syn_new.T, dim=-1)
                collect.setdefault("biaffine_alignments", []).extend([align_syn, align_sem])
            h_syn, h_sem = biaffine_fuse(h_syn_new, h_sem_new, self.w_1, self.w_2)
            h_syn = self.dropout(h_syn)
            h_sem = self.dropout(h_sem)
        return h_syn, h_sem

    def encode_comment(
        self, h0: Tensor, a_syn_hat: Tensor | None, mode: str = "full",
        collect: dict | None = None,
    ) -> Tensor:
        """Readout H_x of shape (n, 2d): [H_sem || H_syn] in full mode, a
        duplicated H0 when the dual-graph stage is ablated."""
        if mode == "no_dualgcn":
            return torch.cat([h0, h0], dim=1)
        if a_syn_hat is None:
            raise ValueError("full mode requires the pruned+normalized syntactic adjacency")
        h_syn, h_sem = self.forward(h0, a_syn_hat, collect=collect)
        if collect is not None:
            collect["final_branches"] = (h_syn, h_sem)
        return torch.cat([h_sem, h_syn], dim=1)

    def canonical_tensors(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for layer in range(self.layers):
            out[f"syn.W.{layer}"] = self.syn_w[layer]
            out[f"sem.W.{layer}"] = self.sem_w[layer]
            out[f"ln.syn.{layer}.scale"] = self.ln_syn_scale[layer]
            out[f"ln.syn.{layer}.shift"] = self.ln_syn_shift[layer]
            out[f"ln.sem.{layer}.scale"] = self.ln_sem_scale[layer]
            out[f"ln.sem.{layer}.shift"] = self.ln_sem_shift[layer]
        out["sem.WQ"] = self.w_q
        out["sem.WK"] = self.w_k
        out["fuse.W1"] = self.w_1
        out["fuse.W2"] = self.w_2
        return out
