"""Exception types raised across the package."""

from __future__ import annotations


class TeachEvalError(Exception):
    """Base class for all package errors."""


# data layer
class MalformedRow(TeachEvalError, ValueError):
    """A dataset row violates the record schema (bad score range, missing field)."""


class EmptyDataset(TeachEvalError, ValueError):
    """A dataset operation received zero usable records."""


class BadRatios(TeachEvalError, ValueError):
    """Split ratios do not sum to 1 (or contain a negative entry)."""


class EmptyText(TeachEvalError, ValueError):
    """Tokenization received text with no tokens."""


class SpanNotFound(TeachEvalError, ValueError):
    """A non-empty rationale is not a substring of its comment text."""


class DegenerateColumn(TeachEvalError, ValueError):
    """A score column has zero variance; correlation is undefined."""


# providers
class ProviderUnavailable(TeachEvalError, RuntimeError):
    """A requested embedding/parse provider cannot be constructed or loaded."""


class ParseFileMismatch(TeachEvalError, ValueError):
    """An external parse file does not cover the requested token sequence."""


# numeric contracts
class ZeroDegree(TeachEvalError, ValueError):
    """An adjacency row sums to zero; a self-loop is missing upstream."""


class NonPositiveAlpha(TeachEvalError, ValueError):
    """DyT requires a strictly positive alpha."""


class EmptySnippet(TeachEvalError, ValueError):
    """Query refinement received an empty prototype snippet."""


class InvalidWeights(TeachEvalError, ValueError):
    """Class weights must all be strictly positive."""


# metrics
class LengthMismatch(TeachEvalError, ValueError):
    """Paired label/prediction sequences differ in length."""


class NonDistribution(TeachEvalError, ValueError):
    """A probability row does not sum to 1 within tolerance."""


class EmptyGold(TeachEvalError, ValueError):
    """Evidence alignment received an empty gold token set."""


# training
class NonFiniteLoss(TeachEvalError, RuntimeError):
    """Training produced a NaN/inf loss."""


class EmptySplit(TeachEvalError, ValueError):
    """Training requires a non-empty train split."""


class ConfigMismatch(TeachEvalError, ValueError):
    """A checkpoint was saved under a different configuration hash."""


class CorruptCheckpoint(TeachEvalError, ValueError):
    """A checkpoint file is unreadable or structurally invalid."""


class ConfigError(TeachEvalError, ValueError):
    """A configuration file or override is invalid (usage error)."""
