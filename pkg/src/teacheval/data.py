"""Review records, tokenization, splits, correlation, and a synthetic corpus generator.

The on-disk schema (JSONL primary, CSV secondary) uses one key pair per
evaluation dimension: ``<Dimension>_score`` (int 0-2) and ``<Dimension>_reason``
(a text span copied verbatim from ``comments``, possibly empty).
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    BadRatios,
    DegenerateColumn,
    EmptyDataset,
    EmptyText,
    MalformedRow,
    SpanNotFound,
)
from .validation import check_ratios

DIMENSIONS: tuple[str, ...] = (
    "Professionalism",
    "Occupational",
    "Effectiveness",
    "Quality",
    "Other",
)
NUM_DIMENSIONS = len(DIMENSIONS)
NUM_CLASSES = 3  # 0=negative, 1=neutral/not mentioned, 2=positive
DEFAULT_MAX_LEN = 128

SCORE_KEYS = tuple(f"{d}_score" for d in DIMENSIONS)
REASON_KEYS = tuple(f"{d}_reason" for d in DIMENSIONS)
ALL_KEYS = ("professor_name", "comments") + tuple(
    k for pair in zip(SCORE_KEYS, REASON_KEYS) for k in pair
)


@dataclass(frozen=True)
class CommentRecord:
    """One student comment with five ordinal scores and five rationale spans."""

    professor_name: str
    text: str
    scores: tuple[int, ...]
    reasons: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "scores", tuple(int(s) for s in self.scores))
        object.__setattr__(self, "reasons", tuple(str(r) for r in self.reasons))
        if len(self.scores) != NUM_DIMENSIONS:
            raise MalformedRow(f"expected {NUM_DIMENSIONS} scores, got {len(self.scores)}")
        if len(self.reasons) != NUM_DIMENSIONS:
            raise MalformedRow(f"expected {NUM_DIMENSIONS} reasons, got {len(self.reasons)}")
        for i, s in enumerate(self.scores):
            if s not in (0, 1, 2):
                raise MalformedRow(f"{DIMENSIONS[i]} score {s} outside 0..2")
        for i, r in enumerate(self.reasons):
            if r and r not in self.text:
                raise SpanNotFound(
                    f"{DIMENSIONS[i]} reason is not a substring of the comment: {r!r}"
                )

    def to_json_dict(self) -> dict:
        row: dict = {"professor_name": self.professor_name, "comments": self.text}
        for i, dim in enumerate(DIMENSIONS):
            row[f"{dim}_score"] = self.scores[i]
            row[f"{dim}_reason"] = self.reasons[i]
        return row

    @classmethod
    def from_json_dict(cls, row: dict) -> "CommentRecord":
        missing = [k for k in ALL_KEYS if k not in row]
        if missing:
            raise MalformedRow(f"missing fields: {', '.join(missing)}")
        text = row["comments"]
        if not isinstance(text, str):
            raise MalformedRow("'comments' must be a string")
        scores = []
        for k in SCORE_KEYS:
            v = row[k]
            if isinstance(v, bool) or not isinstance(v, (int, str)):
                raise MalformedRow(f"{k} must be an integer, got {v!r}")
            try:
                scores.append(int(v))
            except ValueError as e:
                raise MalformedRow(f"{k} must be an integer, got {v!r}") from e
        reasons = []
        for k in REASON_KEYS:
            v = row[k]
            if v is None:
                v = ""
            if not isinstance(v, str):
                raise MalformedRow(f"{k} must be a string, got {v!r}")
            reasons.append(v)
        return cls(
            professor_name=str(row["professor_name"]),
            text=text,
            scores=tuple(scores),
            reasons=tuple(reasons),
        )


def load_dataset(path: str | Path, format: str = "jsonl") -> list[CommentRecord]:
    """Load and validate records from a JSONL or CSV file.

    Raises MalformedRow (with the offending line number) on the first invalid
    row and EmptyDataset when the file contains no records.
    """
    p = Path(path)
    records: list[CommentRecord] = []
    if format == "jsonl":
        with p.open("r", encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    row = json.loads(line)
                except json.JSONDecodeError as e:
                    raise MalformedRow(f"{p}:{lineno}: invalid JSON: {e.msg}") from e
                if not isinstance(row, dict):
                    raise MalformedRow(f"{p}:{lineno}: row is not an object")
                try:
                    records.append(CommentRecord.from_json_dict(row))
                except (MalformedRow, SpanNotFound) as e:
                    raise MalformedRow(f"{p}:{lineno}: {e}") from e
    elif format == "csv":
        with p.open("r", encoding="utf-8", newline="") as f:
            reader = csv.DictReader(f)
            for lineno, row in enumerate(reader, start=2):
                try:
                    records.append(CommentRecord.from_json_dict(row))
                except (MalformedRow, SpanNotFound) as e:
                    raise MalformedRow(f"{p}:{lineno}: {e}") from e
    else:
        raise ValueError(f"unknown dataset format {format!r} (expected jsonl or csv)")
    if not records:
        raise EmptyDataset(f"no records found in {p}")
    return records


def save_dataset(records: list[CommentRecord], path: str | Path, format: str = "jsonl") -> None:
    """Write records with byte-stable output (fixed key order, no timestamps)."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    if format == "jsonl":
        with p.open("w", encoding="utf-8", newline="\n") as f:
            for rec in records:
                f.write(json.dumps(rec.to_json_dict(), ensure_ascii=False) + "\n")
    elif format == "csv":
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(ALL_KEYS), lineterminator="\n")
        writer.writeheader()
        for rec in records:
            writer.writerow(rec.to_json_dict())
        p.write_text(buf.getvalue(), encoding="utf-8")
    else:
        raise ValueError(f"unknown dataset format {format!r} (expected jsonl or csv)")


# ---------------------------------------------------------------------------
# Tokenization

_TOKEN_PATTERN = re.compile(r"\w+|[^\w\s]")


def token_id(token: str) -> int:
    """Stable 32-bit id for a token string (hash-based, no vocabulary file)."""
    return int.from_bytes(hashlib.blake2b(token.encode("utf-8"), digest_size=4).digest(), "big")


@dataclass(frozen=True)
class TokenSequence:
    """A tokenized comment with character offsets back into the source text."""

    text: str
    token_ids: tuple[int, ...]
    char_spans: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if len(self.token_ids) != len(self.char_spans):
            raise ValueError("token_ids and char_spans must align")
        if not self.token_ids:
            raise EmptyText("a token sequence must hold at least one token")
        prev_end = -1
        for a, b in self.char_spans:
            if not (0 <= a < b <= len(self.text)) or a < prev_end:
                raise ValueError(f"char_spans must be increasing and in-range, got {self.char_spans}")
            prev_end = b

    @property
    def n(self) -> int:
        return len(self.token_ids)

    @property
    def tokens(self) -> tuple[str, ...]:
        return tuple(self.text[a:b] for a, b in self.char_spans)


class RegexTokenizer:
    """Whitespace+punctuation tokenizer: word runs and single punctuation marks."""

    def __init__(self, pattern: re.Pattern = _TOKEN_PATTERN):
        self.pattern = pattern

    def __call__(self, text: str, max_len: int = DEFAULT_MAX_LEN) -> TokenSequence:
        if max_len < 1:
            raise ValueError("max_len must be >= 1")
        if not text or not text.strip():
            raise EmptyText("text is empty after whitespace normalization")
        spans = []
        for m in self.pattern.finditer(text):
            spans.append((m.start(), m.end()))
            if len(spans) == max_len:
                break
        if not spans:
            raise EmptyText("text contains no tokens")
        ids = tuple(token_id(text[a:b]) for a, b in spans)
        return TokenSequence(text=text, token_ids=ids, char_spans=tuple(spans))


default_tokenizer = RegexTokenizer()


def tokenize(text: str, max_len: int = DEFAULT_MAX_LEN) -> TokenSequence:
    """Tokenize with the default whitespace+punctuation tokenizer (prefix truncation)."""
    return default_tokenizer(text, max_len=max_len)


def rationale_token_set(record: CommentRecord, dim_index: int, token_seq: TokenSequence) -> set[int]:
    """Indices of tokens whose spans overlap the first occurrence of the reason.

    Empty reason gives an empty set. A reason truncated away entirely also
    yields an empty set (only kept tokens can overlap).
    """
    reason = record.reasons[dim_index]
    if not reason:
        return set()
    start = record.text.find(reason)
    if start < 0:
        raise SpanNotFound(
            f"{DIMENSIONS[dim_index]} reason not found in comment text: {reason!r}"
        )
    end = start + len(reason)
    return {
        i for i, (a, b) in enumerate(token_seq.char_spans) if a < end and b > start
    }


# ---------------------------------------------------------------------------
# Splitting

@dataclass(frozen=True)
class DatasetSplit:
    train: list[CommentRecord]
    validation: list[CommentRecord]
    test: list[CommentRecord]
    seed: int

    def __post_init__(self):
        if not isinstance(self.seed, int):
            raise ValueError("seed must be an integer")


def split_counts(n: int, ratios: tuple[float, float, float]) -> tuple[int, int, int]:
    """Deterministic partition sizes: floor the train share, floor the
    validation share of the remainder, rest to test."""
    r_train, r_val, r_test = ratios
    n_train = int(np.floor(r_train * n + 1e-9))
    rest = n - n_train
    denom = r_val + r_test
    n_val = int(np.floor(rest * (r_val / denom) + 1e-9)) if denom > 0 else 0
    return n_train, n_val, rest - n_val


def split_dataset(
    records: list[CommentRecord],
    ratios: tuple[float, float, float] = (0.70, 0.15, 0.15),
    seed: int = 0,
) -> DatasetSplit:
    """Shuffle-and-cut split; deterministic given (records, ratios, seed)."""
    ratios = check_ratios(ratios)
    if len(ratios) != 3:
        raise BadRatios(f"expected 3 ratios, got {len(ratios)}")
    if not records:
        raise EmptyDataset("cannot split zero records")
    n = len(records)
    n_train, n_val, n_test = split_counts(n, ratios)
    perm = np.random.default_rng(seed).permutation(n)
    train = [records[i] for i in perm[:n_train]]
    val = [records[i] for i in perm[n_train : n_train + n_val]]
    test = [records[i] for i in perm[n_train + n_val :]]
    assert len(test) == n_test
    return DatasetSplit(train=train, validation=val, test=test, seed=seed)


# ---------------------------------------------------------------------------
# Synthetic corpus

# One phrase bank per (dimension, score). Words never repeat across
# dimensions, so every label is linearly decodable from the comment text;
# within a dimension the score word(s) disambiguate. Phrases are several
# words long so rationale spans cover a realistic slice of the comment.
PHRASE_BANK: dict[int, dict[int, tuple[str, ...]]] = {
    0: {  # Professionalism
        2: ("masters advanced theory behind derivations", "rigorous scholarly expertise anchors credibility"),
        1: ("scholarship scarcely referenced anywhere here", "expertise remains unaddressed throughout"),
        0: ("misstates basic facts while deriving", "shaky factual grasp undermines trust"),
    },
    1: {  # Occupational
        2: ("responds punctually always supportive mentor", "caring responsible conduct toward students"),
        1: ("demeanor went unmentioned during term", "attitude barely observable from comments"),
        0: ("dismissive rude replies ignore emails", "neglects duties habitually shows contempt"),
    },
    2: {  # Effectiveness
        2: ("explanations crystal clear grades improved", "concepts click quickly exams aced"),
        1: ("outcomes left undescribed learning unknown", "results never clarified impact unclear"),
        0: ("confusing disorganized lectures failed many", "muddled delivery tanked comprehension badly"),
    },
    3: {  # Quality
        2: ("lively engaging sessions classroom buzzes", "vibrant warmth keeps everyone attentive"),
        1: ("ambience stayed unstated observers silent", "atmosphere hardly noted inside feedback"),
        0: ("dreary monotone droning tedious lifeless", "dull plodding classes sapped morale"),
    },
    4: {  # Other
        2: ("bonus resources galore generous extra credit", "handy website plus office snacks"),
        1: ("miscellaneous aspects unremarked nothing more", "zero additional remarks beyond basics"),
        0: ("textbook overpriced scam parking headaches", "pricey materials needless fees annoyed"),
    },
}

_PROFESSOR_POOL = (
    "prof_adler", "prof_brook", "prof_chen", "prof_dorsey", "prof_eaton",
    "prof_fuchs", "prof_grant", "prof_hale", "prof_ibarra", "prof_jonas",
)

DEFAULT_SCORE_PRIOR = (0.3, 0.4, 0.3)


def generate_synthetic(
    n_records: int,
    vocab_size: int = 50,
    seed: int = 0,
    score_prior: tuple[float, float, float] = DEFAULT_SCORE_PRIOR,
    filler_burst: tuple[int, int] = (2, 6),
) -> list[CommentRecord]:
    """Seed-deterministic separable corpus.

    Every dimension of every record is realized by one phrase from its
    (dimension, score) bank; the phrase is recorded verbatim as the reason.
    ``vocab_size`` filler words ("w000"...) pad the comment between phrases
    with ``filler_burst`` (inclusive) words per gap, so rationale spans are a
    minority of each comment and evidence must be located, not averaged.
    """
    if n_records < 1:
        raise ValueError("n_records must be >= 1")
    prior = np.asarray(score_prior, dtype=np.float64)
    if prior.shape != (3,) or np.any(prior < 0) or abs(prior.sum() - 1.0) > 1e-9:
        raise ValueError(f"score_prior must be 3 nonnegative values summing to 1, got {score_prior}")
    low, high = filler_burst
    if not (0 <= low <= high):
        raise ValueError(f"filler_burst must be 0 <= low <= high, got {filler_burst}")
    fillers = [f"w{i:03d}" for i in range(max(vocab_size, 1))]
    rng = np.random.default_rng(seed)
    records = []
    for _ in range(n_records):
        name = _PROFESSOR_POOL[int(rng.integers(0, len(_PROFESSOR_POOL)))]
        scores, reasons, parts = [], [], []
        for dim in range(NUM_DIMENSIONS):
            score = int(rng.choice(3, p=prior))
            bank = PHRASE_BANK[dim][score]
            phrase = bank[int(rng.integers(0, len(bank)))]
            scores.append(score)
            reasons.append(phrase)
            for _ in range(int(rng.integers(low, high + 1))):
                parts.append(fillers[int(rng.integers(0, len(fillers)))])
            parts.append(phrase)
        for _ in range(int(rng.integers(low, high + 1))):
            parts.append(fillers[int(rng.integers(0, len(fillers)))])
        text = " ".join(parts)
        records.append(
            CommentRecord(
                professor_name=name,
                text=text,
                scores=tuple(scores),
                reasons=tuple(reasons),
            )
        )
    return records


# ---------------------------------------------------------------------------
# Dataset statistics

def label_correlation(records: list[CommentRecord]) -> np.ndarray:
    """Pearson correlation matrix of the five score columns (symmetric, unit diagonal)."""
    if not records:
        raise EmptyDataset("label_correlation requires records")
    scores = np.asarray([r.scores for r in records], dtype=np.float64)
    variances = scores.var(axis=0)
    for i, v in enumerate(variances):
        if v <= 0:
            raise DegenerateColumn(
                f"{DIMENSIONS[i]} scores have zero variance; correlation undefined"
            )
    corr = np.corrcoef(scores.T)
    corr = (corr + corr.T) / 2.0
    np.fill_diagonal(corr, 1.0)
    return np.clip(corr, -1.0, 1.0)
