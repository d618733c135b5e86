"""
Resample criteria: disabled, hard cutoff, logistic and truncated normal.
"""
import logging
import math
import re
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from criteria.base import ResampleCriterion, Scalar
from errors import CriterionSyntaxError

logger = logging.getLogger(__name__)

_NUMBER = r"[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?"
_SYNTAX = re.compile(rf"^(?P<keyword>[a-z]+)(?::(?P<args>{_NUMBER}(?:,{_NUMBER})*))?$")

USAGE = "expected one of: disabled | hard:C | logistic:A,B | truncnorm:A"


def _scalar_or_array(z: Scalar, values: np.ndarray) -> Scalar:
    return float(values) if np.ndim(z) == 0 else values


@dataclass(frozen=True)
class Disabled(ResampleCriterion):
    """Never resample."""
    keyword = "disabled"

    def probability(self, z: Scalar) -> Scalar:
        return _scalar_or_array(z, np.zeros(np.shape(z)))

    def params(self) -> Tuple[float, ...]:
        return ()

    @property
    def is_disabled(self) -> bool:
        return True


@dataclass(frozen=True)
class HardCutoff(ResampleCriterion):
    """
    Resample whenever |z_i| > c.

    The indicator is strict: |z_i| == c is kept.
    """
    c: float
    keyword = "hard"

    def __post_init__(self):
        if not (math.isfinite(self.c) and self.c > 0):
            raise CriterionSyntaxError(f"hard cutoff needs c > 0, got {self.c}")

    def probability(self, z: Scalar) -> Scalar:
        return _scalar_or_array(z, (np.abs(z) > self.c).astype(np.float64))

    def params(self) -> Tuple[float, ...]:
        return (self.c,)


@dataclass(frozen=True)
class Logistic(ResampleCriterion):
    """P = 1 / (1 + exp(-a (|z_i| - b))); a is the steepness, b the midpoint."""
    a: float
    b: float
    keyword = "logistic"

    def __post_init__(self):
        if not (math.isfinite(self.a) and self.a > 0):
            raise CriterionSyntaxError(f"logistic steepness needs a > 0, got {self.a}")
        if not math.isfinite(self.b):
            raise CriterionSyntaxError(f"logistic midpoint must be finite, got {self.b}")

    def probability(self, z: Scalar) -> Scalar:
        x = self.a * (np.abs(np.asarray(z, dtype=np.float64)) - self.b)
        # tanh form of the logistic function avoids exp overflow
        return _scalar_or_array(z, 0.5 * (1.0 + np.tanh(0.5 * x)))

    def params(self) -> Tuple[float, ...]:
        return (self.a, self.b)


@dataclass(frozen=True)
class TruncatedNormal(ResampleCriterion):
    """
    P = N(a) / N(z_i) = exp((z_i^2 - a^2) / 2) for |z_i| <= a, else 1.

    N is the standard normal density; the function is continuous at |z_i| = a.
    """
    a: float
    keyword = "truncnorm"

    def __post_init__(self):
        if not (math.isfinite(self.a) and self.a > 0):
            raise CriterionSyntaxError(f"truncated normal needs a > 0, got {self.a}")

    def probability(self, z: Scalar) -> Scalar:
        z = np.asarray(z, dtype=np.float64)
        inside = np.abs(z) <= self.a
        ratio = np.exp((np.minimum(z * z, self.a * self.a) - self.a * self.a) / 2.0)
        return _scalar_or_array(z, np.where(inside, ratio, 1.0))

    def params(self) -> Tuple[float, ...]:
        return (self.a,)


_FACTORIES = {
    Disabled.keyword: (0, lambda: Disabled()),
    HardCutoff.keyword: (1, lambda c: HardCutoff(c)),
    Logistic.keyword: (2, lambda a, b: Logistic(a, b)),
    TruncatedNormal.keyword: (1, lambda a: TruncatedNormal(a)),
}


def parse_criterion(text: str) -> ResampleCriterion:
    """
    Parse the CLI syntax: `disabled`, `hard:C`, `logistic:A,B`, `truncnorm:A`.

    Raises:
        CriterionSyntaxError: on unknown keywords, wrong arity or invalid values
    """
    match = _SYNTAX.match(text.strip()) if isinstance(text, str) else None
    if not match:
        raise CriterionSyntaxError(f"malformed criterion {text!r}; {USAGE}")
    keyword = match.group("keyword")
    if keyword not in _FACTORIES:
        raise CriterionSyntaxError(f"unknown criterion {keyword!r}; {USAGE}")
    arity, factory = _FACTORIES[keyword]
    args = [float(v) for v in match.group("args").split(",")] if match.group("args") else []
    if len(args) != arity:
        raise CriterionSyntaxError(
            f"criterion {keyword!r} takes {arity} parameter(s), got {len(args)}; {USAGE}")
    return factory(*args)
