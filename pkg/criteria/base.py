"""
Base class for resample criteria - defines the interface every criterion implements.
"""
from abc import ABC, abstractmethod
from typing import Tuple, Union

import numpy as np

Scalar = Union[float, np.ndarray]


def format_param(value: float) -> str:
    """Shortest exact text for a parameter: 2.0 -> '2', 2.75 -> '2.75'."""
    text = repr(float(value))
    return text[:-2] if text.endswith(".0") else text


class ResampleCriterion(ABC):
    """
    Probability that a latent coordinate should be redrawn from the prior.

    Implementations depend on |z_i| only and are non-decreasing in |z_i|.
    """
    # Keyword used in the CLI syntax, e.g. "logistic" in "logistic:2,2"
    keyword: str = ""

    @abstractmethod
    def probability(self, z: Scalar) -> Scalar:
        """Total resample probability P(R | z_i), elementwise."""
        pass

    @abstractmethod
    def params(self) -> Tuple[float, ...]:
        """Criterion parameters in CLI order."""
        pass

    @property
    def label(self) -> str:
        """Human-readable form, e.g. 'logistic(2, 2)'."""
        params = self.params()
        if not params:
            return self.keyword
        return f"{self.keyword}({', '.join(format_param(p) for p in params)})"

    def spec(self) -> str:
        """CLI syntax that parses back to an equal criterion."""
        params = self.params()
        if not params:
            return self.keyword
        return f"{self.keyword}:{','.join(format_param(p) for p in params)}"

    @property
    def is_disabled(self) -> bool:
        return False

    def __str__(self) -> str:
        return self.spec()
