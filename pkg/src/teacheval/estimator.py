"""scikit-learn style estimator wrapping the full pipeline.

``TeachingFacetClassifier`` exposes fit/predict/predict_proba/transform and
the get_params/set_params contract, so the model composes with pipelines,
grid search, and cross-validation over lists of comments or records.
"""

from __future__ import annotations

import numpy as np
import torch
from sklearn.base import BaseEstimator

from .data import NUM_DIMENSIONS, CommentRecord, DatasetSplit
from .metrics import evaluate_split
from .training import build_providers, precompute_records, train_run


class TeachingFacetClassifier(BaseEstimator):
    """Five-dimension ternary comment classifier.

    X is a list of CommentRecord (labels taken from the records) or a list of
    raw comment strings with y of shape (n, 5) holding scores in {0, 1, 2}.
    Defaults follow the reference protocol (hidden size 768, 10 epochs);
    pass a smaller ``hidden_dim`` for quick desk-scale fits.
    """

    def __init__(
        self,
        hidden_dim: int = 768,
        layers: int = 3,
        tau: float = 1.0,
        eta: float = 0.3,
        dropout: float = 0.1,
        mode: str = "full",
        head: str = "shared",
        refine: bool = True,
        trainable_queries: bool = False,
        dyt_alpha: float = 0.5,
        diff_reg_weight: float = 0.0,
        epochs: int = 10,
        batch_size: int = 64,
        lr_init: float = 2e-3,
        lr_min: float = 5e-4,
        t_max: int = 10,
        clip_norm: float = 5.0,
        class_weights: tuple = (1.0, 1.0, 1.0),
        encoder: str = "stub",
        encoder_model: str = "",
        parser: str = "stub",
        parser_file: str = "",
        max_len: int = 128,
        seed: int = 0,
        threads: int = 1,
    ):
        self.hidden_dim = hidden_dim
        self.layers = layers
        self.tau = tau
        self.eta = eta
        self.dropout = dropout
        self.mode = mode
        self.head = head
        self.refine = refine
        self.trainable_queries = trainable_queries
        self.dyt_alpha = dyt_alpha
        self.diff_reg_weight = diff_reg_weight
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr_init = lr_init
        self.lr_min = lr_min
        self.t_max = t_max
        self.clip_norm = clip_norm
        self.class_weights = class_weights
        self.encoder = encoder
        self.encoder_model = encoder_model
        self.parser = parser
        self.parser_file = parser_file
        self.max_len = max_len
        self.seed = seed
        self.threads = threads

    # ------------------------------------------------------------------
    def _config(self):
        from .config import build_config

        return build_config(
            overrides={
                "encoder.dim": self.hidden_dim,
                "synergy.layers": self.layers,
                "synergy.tau": self.tau,
                "synergy.eta": self.eta,
                "synergy.dropout": self.dropout,
                "mode": self.mode,
                "head.mode": self.head,
                "refine.enabled": self.refine,
                "dims.trainable_queries": self.trainable_queries,
                "dyt.alpha_init": self.dyt_alpha,
                "loss.diff_reg_weight": self.diff_reg_weight,
                "head.dropout": self.dropout,
                "head.class_weights": self.class_weights,
                "train.epochs": self.epochs,
                "train.batch_size": self.batch_size,
                "train.lr_init": self.lr_init,
                "train.lr_min": self.lr_min,
                "train.t_max": self.t_max,
                "train.clip_norm": self.clip_norm,
                "encoder.provider": self.encoder,
                "encoder.model": self.encoder_model,
                "parser.provider": self.parser,
                "parser.file": self.parser_file,
                "tokenizer.max_len": self.max_len,
                "seed": self.seed,
                "train.seeds": (self.seed,),
                "train.threads": self.threads,
            }
        )

    @staticmethod
    def _coerce_records(X, y=None) -> list[CommentRecord]:
        if len(X) == 0:
            raise ValueError("X must be non-empty")
        if isinstance(X[0], CommentRecord):
            return list(X)
        if y is None:
            raise ValueError("raw-text X requires y of shape (n, 5)")
        labels = np.asarray(y)
        if labels.shape != (len(X), NUM_DIMENSIONS):
            raise ValueError(f"y must have shape ({len(X)}, {NUM_DIMENSIONS}), got {labels.shape}")
        return [
            CommentRecord(
                professor_name=f"sample_{i}",
                text=str(text),
                scores=tuple(int(v) for v in labels[i]),
                reasons=("",) * NUM_DIMENSIONS,
            )
            for i, text in enumerate(X)
        ]

    def fit(self, X, y=None):
        records = self._coerce_records(X, y)
        cfg = self._config()
        split = DatasetSplit(train=records, validation=[], test=[], seed=self.seed)
        self.network_, self.run_record_ = train_run(split, cfg, run_seed=self.seed)
        self.config_ = cfg
        self.classes_ = np.array([0, 1, 2])
        self.n_features_in_ = 1
        return self

    def _check_fitted(self):
        if not hasattr(self, "network_"):
            raise RuntimeError("this estimator is not fitted yet; call fit first")

    def _precompute(self, X, y=None):
        records = self._coerce_records(X, y if y is not None else np.ones((len(X), 5), dtype=int))
        embed_provider, arc_provider = build_providers(self.config_)
        return precompute_records(self.config_, records, embed_provider, arc_provider, training=False)

    def predict(self, X) -> np.ndarray:
        """Array of shape (n, 5) with one ternary label per dimension."""
        self._check_fitted()
        out = evaluate_split(self.network_, self._precompute(X))
        return out["y_pred"]

    def predict_proba(self, X) -> np.ndarray:
        """Array of shape (n, 5, 3); each (dimension) row is a distribution."""
        self._check_fitted()
        out = evaluate_split(self.network_, self._precompute(X))
        return out["probs"]

    def transform(self, X) -> np.ndarray:
        """Per-dimension evidence vectors, shape (n, 5, hidden_dim)."""
        self._check_fitted()
        self.network_.eval()
        rows = []
        with torch.no_grad():
            for pc in self._precompute(X):
                rows.append(self.network_.forward_comment(pc).evidence.numpy())
        return np.stack(rows)

    def score(self, X, y=None) -> float:
        """Mean per-dimension accuracy."""
        self._check_fitted()
        records = self._coerce_records(X, y)
        y_true = np.asarray([r.scores for r in records])
        y_pred = self.predict(records)
        return float(np.mean(y_true == y_pred))
