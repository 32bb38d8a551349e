"""Frozen contextual-embedding and dependency-arc providers.

Both kinds of provider are read-only after construction: training never
touches them, and ``checksum()`` exposes that contract for verification.
The stub providers make the whole pipeline runnable at desk scale without
any pretrained checkpoint or parser.
"""

from __future__ import annotations

import hashlib
import math
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import TokenSequence, token_id
from .errors import ParseFileMismatch, ProviderUnavailable

DEFAULT_EMBED_DIM = 768

_TOKEN_TAG = 0x10CE1D
_POSITION_TAG = 0x705E7


@dataclass(frozen=True)
class EmbeddingMatrix:
    """n x d contextual token embeddings plus a provenance tag."""

    values: np.ndarray
    source_id: str

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError(f"embeddings must be 2-d, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("embeddings contain non-finite entries")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class ArcMatrix:
    """n x n matrix of arc probabilities, entry (i, j) = Pr(arc i -> j)."""

    values: np.ndarray
    source_id: str

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError(f"arc matrix must be square, got shape {v.shape}")
        if np.any(v < 0) or np.any(v > 1):
            raise ValueError("arc probabilities must lie in [0, 1]")
        object.__setattr__(self, "values", v)


def _unit_vector(tag: int, key: int, dim: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence(entropy=[tag, key, dim]))
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


class StubEmbeddingProvider:
    """Deterministic training-free embeddings.

    A token at position p with id t maps to a fixed pseudo-random vector per
    (id, position): ``normalize(unit(t) + position_scale * unit(p)) * sqrt(d)``,
    the position entering as an additive offset before renormalization. The
    sqrt(d) scale gives rows the entry statistics of a pretrained encoder
    (~N(0,1) per entry); unit-norm rows would leave every sqrt(d)-scaled
    attention in the network a factor of d too soft to ever focus.
    """

    def __init__(self, dim: int = DEFAULT_EMBED_DIM, position_scale: float = 0.25):
        self.dim = dim
        self.position_scale = position_scale
        self.source_id = f"stub-{dim}"
        self._cache: dict[tuple[int, int], np.ndarray] = {}

    def token_vector(self, tok_id: int, position: int) -> np.ndarray:
        key = (tok_id, position)
        vec = self._cache.get(key)
        if vec is None:
            vec = _unit_vector(_TOKEN_TAG, tok_id, self.dim)
            vec = vec + self.position_scale * _unit_vector(_POSITION_TAG, position, self.dim)
            vec = vec / np.linalg.norm(vec) * math.sqrt(self.dim)
            vec.setflags(write=False)
            self._cache[key] = vec
        return vec

    def embed_words(self, words: Sequence[str]) -> np.ndarray:
        return np.stack([self.token_vector(token_id(w), p) for p, w in enumerate(words)])

    def embed(self, token_seq: TokenSequence) -> EmbeddingMatrix:
        return EmbeddingMatrix(values=self.embed_words(token_seq.tokens), source_id=self.source_id)

    def checksum(self) -> str:
        h = hashlib.sha256()
        h.update(f"stub:{self.dim}:{self.position_scale!r}".encode())
        h.update(self.token_vector(0, 0).tobytes())
        h.update(self.token_vector(7, 3).tobytes())
        return h.hexdigest()


class PretrainedEmbeddingProvider:
    """Adapter over a frozen pretrained masked-LM encoder (last hidden states,
    mean-pooled per word). Requires the optional ``transformers`` dependency
    and a locally resolvable checkpoint."""

    def __init__(self, model_name_or_path: str, device: str = "cpu"):
        try:
            import torch
            from transformers import AutoModel, AutoTokenizer
        except ImportError as e:  # pragma: no cover - optional dependency
            raise ProviderUnavailable(f"transformers not installed: {e}") from e
        try:
            self._tokenizer = AutoTokenizer.from_pretrained(model_name_or_path)
            self._model = AutoModel.from_pretrained(model_name_or_path)
        except Exception as e:
            raise ProviderUnavailable(f"cannot load encoder {model_name_or_path!r}: {e}") from e
        self._torch = torch
        self._model.to(device).eval()
        for p in self._model.parameters():
            p.requires_grad_(False)
        self.device = device
        self.dim = int(self._model.config.hidden_size)
        self.source_id = f"pretrained-{model_name_or_path}"

    def embed_words(self, words: Sequence[str]) -> np.ndarray:
        torch = self._torch
        enc = self._tokenizer(
            list(words), is_split_into_words=True, return_tensors="pt", truncation=True
        )
        with torch.no_grad():
            hidden = self._model(**{k: v.to(self.device) for k, v in enc.items()}).last_hidden_state[0]
        word_ids = enc.word_ids(0)
        out = np.zeros((len(words), self.dim), dtype=np.float64)
        counts = np.zeros(len(words), dtype=np.int64)
        for pos, wid in enumerate(word_ids):
            if wid is not None:
                out[wid] += hidden[pos].double().cpu().numpy()
                counts[wid] += 1
        counts[counts == 0] = 1  # words lost to subword truncation keep zero rows
        return out / counts[:, None]

    def embed(self, token_seq: TokenSequence) -> EmbeddingMatrix:
        return EmbeddingMatrix(values=self.embed_words(token_seq.tokens), source_id=self.source_id)

    def checksum(self) -> str:
        h = hashlib.sha256()
        h.update(self.source_id.encode())
        for name, p in sorted(self._model.state_dict().items()):
            h.update(name.encode())
            h.update(p.cpu().numpy().tobytes())
        return h.hexdigest()


class ChainArcProvider:
    """Stub parser: adjacent tokens are linked both ways with a fixed score."""

    def __init__(self, strength: float = 0.9):
        if not (0.0 <= strength <= 1.0):
            raise ValueError("strength must lie in [0, 1]")
        self.strength = strength
        self.source_id = f"chain-{strength}"

    def arc_probabilities(self, token_seq: TokenSequence) -> ArcMatrix:
        n = token_seq.n
        a = np.zeros((n, n), dtype=np.float64)
        for i in range(n - 1):
            a[i, i + 1] = self.strength
            a[i + 1, i] = self.strength
        return ArcMatrix(values=a, source_id=self.source_id)

    def checksum(self) -> str:
        return hashlib.sha256(f"chain:{self.strength!r}".encode()).hexdigest()


class FileArcProvider:
    """Replays hard arcs from an external parse file.

    Format: one token per line, ``index<TAB>token<TAB>head_index`` with
    1-based indices, head 0 for the root, sentences separated by blank lines.
    Listed arcs (head -> dependent) get probability 1.0. Sentences are keyed
    by their exact token-string tuple.
    """

    def __init__(self, path: str | Path):
        p = Path(path)
        if not p.is_file():
            raise ProviderUnavailable(f"parse file not found: {p}")
        self._sentences: dict[tuple[str, ...], np.ndarray] = {}
        self._raw = p.read_bytes()
        self.source_id = f"parsefile-{p.name}"
        self._parse(self._raw.decode("utf-8"), p)

    def _parse(self, text: str, path: Path) -> None:
        block: list[tuple[int, str, int]] = []
        for lineno, line in enumerate(text.splitlines() + [""], start=1):
            line = line.strip()
            if not line:
                if block:
                    self._add_sentence(block, path)
                    block = []
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseFileMismatch(f"{path}:{lineno}: expected index<TAB>token<TAB>head")
            try:
                block.append((int(parts[0]), parts[1], int(parts[2])))
            except ValueError as e:
                raise ParseFileMismatch(f"{path}:{lineno}: non-integer index: {line!r}") from e

    def _add_sentence(self, block: list[tuple[int, str, int]], path: Path) -> None:
        n = len(block)
        tokens = tuple(tok for _, tok, _ in block)
        a = np.zeros((n, n), dtype=np.float64)
        for idx, _, head in block:
            if not (1 <= idx <= n) or not (0 <= head <= n):
                raise ParseFileMismatch(f"{path}: index/head out of range in sentence {tokens}")
            if head > 0:
                a[head - 1, idx - 1] = 1.0
        self._sentences[tokens] = a

    def arc_probabilities(self, token_seq: TokenSequence) -> ArcMatrix:
        key = token_seq.tokens
        a = self._sentences.get(key)
        if a is None:
            raise ParseFileMismatch(
                f"no parse for {token_seq.n}-token sentence starting {key[:3]!r}"
            )
        return ArcMatrix(values=a, source_id=self.source_id)

    def checksum(self) -> str:
        return hashlib.sha256(b"parsefile:" + self._raw).hexdigest()


def build_embedding_provider(kind: str, dim: int = DEFAULT_EMBED_DIM, model: str = ""):
    if kind == "stub":
        return StubEmbeddingProvider(dim=dim)
    if kind == "pretrained":
        if not model:
            raise ProviderUnavailable("encoder.provider=pretrained requires encoder.model")
        return PretrainedEmbeddingProvider(model)
    raise ProviderUnavailable(f"unknown encoder provider {kind!r}")


def build_arc_provider(kind: str, file: str = ""):
    if kind == "stub":
        return ChainArcProvider()
    if kind == "file":
        if not file:
            raise ProviderUnavailable("parser.provider=file requires parser.file")
        return FileArcProvider(file)
    raise ProviderUnavailable(f"unknown parser provider {kind!r}")
