"""Classification heads over the per-dimension evidence vectors.

The shared head keeps one projection and one classifier for all dimensions
and specializes through elementwise perturbation vectors (z, s, b per
dimension); the independent baseline trains five fully separate stacks for
the efficiency comparison.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import Tensor, nn

from .data import NUM_CLASSES, NUM_DIMENSIONS
from .graph import DTYPE, _init_matrix, as_tensor
from .validation import check_class_weights

LOG_CLAMP = 1e-12


@dataclass
class PredictionResult:
    """Per-dimension logits, class probabilities, and argmax labels."""

    logits: Tensor  # (k, m)
    probs: Tensor  # (k, m), rows sum to 1
    labels: np.ndarray  # (k,), ties broken toward the lowest class index

    @classmethod
    def from_logits(cls, logits: Tensor) -> "PredictionResult":
        probs = torch.softmax(logits, dim=-1)
        labels = np.argmax(probs.detach().numpy(), axis=-1)
        return cls(logits=logits, probs=probs, labels=labels)


def project_dimension(h, z, s, b, w_shared) -> Tensor:
    """Perturbed shared projection followed by the nonlinearity:
    GELU(((h * z) W_shared) * s + b). Dropout is applied by the owning head."""
    h, z, s, b = as_tensor(h), as_tensor(z), as_tensor(s), as_tensor(b)
    return F.gelu(((h * z) @ as_tensor(w_shared)) * s + b)


def classify(h_e, head: "SharedPerturbationHead | IndependentHeads") -> PredictionResult:
    """Run a head over (k, d) evidence vectors."""
    return PredictionResult.from_logits(head(as_tensor(h_e)))


def classification_loss(probs, y, class_weights=(1.0, 1.0, 1.0)) -> Tensor:
    """Weighted cross-entropy averaged over dimensions:
    (1/k) sum_i -sum_c w_c y_ic log max(p_ic, 1e-12).

    ``probs`` may be a PredictionResult or a (k, m) row-stochastic matrix;
    ``y`` is either k class indices or a (k, m) one-hot matrix.
    """
    if isinstance(probs, PredictionResult):
        probs = probs.probs
    probs = as_tensor(probs)
    k, m = probs.shape
    w = torch.as_tensor(check_class_weights(class_weights, m), dtype=probs.dtype)
    y_t = torch.as_tensor(np.asarray(y))
    if y_t.ndim == 1:
        one_hot = torch.zeros(k, m, dtype=probs.dtype)
        one_hot[torch.arange(k), y_t.long()] = 1.0
    elif y_t.shape == (k, m):
        one_hot = y_t.to(probs.dtype)
    else:
        raise ValueError(f"labels must be (k,) indices or (k, m) one-hot, got {tuple(y_t.shape)}")
    log_p = torch.log(probs.clamp(min=LOG_CLAMP))
    return -(w * one_hot * log_p).sum(dim=-1).mean()


class SharedPerturbationHead(nn.Module):
    """Shared projection + per-dimension (z, s, b) perturbations + shared classifier."""

    def __init__(
        self,
        dim: int,
        k: int = NUM_DIMENSIONS,
        m: int = NUM_CLASSES,
        dropout: float = 0.1,
        generator: torch.Generator | None = None,
    ):
        super().__init__()
        g = generator if generator is not None else torch.Generator().manual_seed(0)
        self.dim, self.k, self.m = dim, k, m
        self.w_shared = _init_matrix(dim, dim, math.sqrt(1.0 / dim), g)
        self.z = nn.Parameter(torch.ones(k, dim, dtype=DTYPE))
        self.s = nn.Parameter(torch.ones(k, dim, dtype=DTYPE))
        self.b = nn.Parameter(torch.zeros(k, dim, dtype=DTYPE))
        self.w_c = _init_matrix(dim, m, math.sqrt(2.0 / (dim + m)), g)
        self.c = nn.Parameter(torch.zeros(m, dtype=DTYPE))
        self.dropout = nn.Dropout(dropout)

    def forward(self, h_e: Tensor) -> Tensor:
        u = project_dimension(h_e, self.z, self.s, self.b, self.w_shared)
        return self.dropout(u) @ self.w_c + self.c

    def canonical_tensors(self) -> dict[str, Tensor]:
        return {
            "head.Wshared": self.w_shared,
            "head.Z": self.z,
            "head.S": self.s,
            "head.B": self.b,
            "head.WC": self.w_c,
            "head.c": self.c,
        }


class IndependentHeads(nn.Module):
    """Baseline: one full projection(+bias)/classifier stack per dimension."""

    def __init__(
        self,
        dim: int,
        k: int = NUM_DIMENSIONS,
        m: int = NUM_CLASSES,
        dropout: float = 0.1,
        generator: torch.Generator | None = None,
    ):
        super().__init__()
        g = generator if generator is not None else torch.Generator().manual_seed(0)
        self.dim, self.k, self.m = dim, k, m
        self.proj_w = nn.ParameterList(
            _init_matrix(dim, dim, math.sqrt(1.0 / dim), g) for _ in range(k)
        )
        self.proj_b = nn.ParameterList(
            nn.Parameter(torch.zeros(dim, dtype=DTYPE)) for _ in range(k)
        )
        self.cls_w = nn.ParameterList(
            _init_matrix(dim, m, math.sqrt(2.0 / (dim + m)), g) for _ in range(k)
        )
        self.cls_b = nn.ParameterList(
            nn.Parameter(torch.zeros(m, dtype=DTYPE)) for _ in range(k)
        )
        self.dropout = nn.Dropout(dropout)

    def forward(self, h_e: Tensor) -> Tensor:
        rows = []
        for i in range(self.k):
            u = self.dropout(F.gelu(h_e[i] @ self.proj_w[i] + self.proj_b[i]))
            rows.append(u @ self.cls_w[i] + self.cls_b[i])
        return torch.stack(rows)

    def canonical_tensors(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for i in range(self.k):
            out[f"head.ind.{i}.W"] = self.proj_w[i]
            out[f"head.ind.{i}.b"] = self.proj_b[i]
            out[f"head.ind.{i}.WC"] = self.cls_w[i]
            out[f"head.ind.{i}.c"] = self.cls_b[i]
        return out


def build_independent_baseline(
    dim: int,
    k: int = NUM_DIMENSIONS,
    m: int = NUM_CLASSES,
    dropout: float = 0.1,
    generator: torch.Generator | None = None,
) -> IndependentHeads:
    return IndependentHeads(dim, k=k, m=m, dropout=dropout, generator=generator)


def count_parameters(module: nn.Module) -> int:
    """Actual tensor enumeration, not a closed-form formula."""
    return sum(p.numel() for p in module.parameters())


def shared_head_parameter_formula(dim: int, k: int = NUM_DIMENSIONS, m: int = NUM_CLASSES) -> int:
    return dim * dim + 3 * k * dim + dim * m + m


def independent_head_parameter_formula(dim: int, k: int = NUM_DIMENSIONS, m: int = NUM_CLASSES) -> int:
    return k * (dim * dim + dim + dim * m + m)
