"""
Datasets Module
Synthetic training data: ring of Gaussians, checkerboard and procedural tiles.
"""
import logging
import math
from dataclasses import asdict, dataclass
from typing import Any, Dict

import numpy as np

from errors import ConfigError
from rng import Xoshiro256pp

logger = logging.getLogger(__name__)

RING = "ring"
CHECKERBOARD = "checkerboard"
TILES = "tiles"
VARIANTS = (RING, CHECKERBOARD, TILES)


@dataclass(frozen=True)
class SyntheticDataset:
    """
    A seeded synthetic distribution.

    ring: k 2-D Gaussian modes of std `sigma` evenly spaced on a circle of
    `radius`. checkerboard: uniform over the dark cells of a 4x4 board on
    [-2, 2]^2. tiles: `side` x `side` images of a random plane wave,
    flattened row-major, values in [-1, 1].
    """
    variant: str = RING
    modes: int = 8
    radius: float = 2.0
    sigma: float = 0.05
    side: int = 8

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown dataset {self.variant!r}, expected one of {VARIANTS}",
                              key="dataset.variant")
        if self.modes < 1:
            raise ConfigError(f"modes must be >= 1, got {self.modes}", key="dataset.modes")
        if self.radius <= 0 or self.sigma < 0:
            raise ConfigError("radius must be > 0 and sigma >= 0", key="dataset")
        if self.side < 2:
            raise ConfigError(f"side must be >= 2, got {self.side}", key="dataset.side")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SyntheticDataset":
        if isinstance(data, str):
            return cls(variant=data)
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown keys {sorted(unknown)}", key="dataset")
        return cls(**data)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @property
    def dim(self) -> int:
        return self.side * self.side if self.variant == TILES else 2

    def centers(self) -> np.ndarray:
        """Ring mode centres, shape (modes, 2)."""
        angles = 2.0 * np.pi * np.arange(self.modes) / self.modes
        return self.radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)

    def sample(self, rng: Xoshiro256pp, n: int) -> np.ndarray:
        if n < 1:
            raise ConfigError(f"sample count must be >= 1, got {n}", key="n")
        if self.variant == RING:
            return self._sample_ring(rng, n)
        if self.variant == CHECKERBOARD:
            return self._sample_checkerboard(rng, n)
        return self._sample_tiles(rng, n)

    def _sample_ring(self, rng, n):
        centers = self.centers()
        out = np.empty((n, 2))
        for row in range(n):
            mode = rng.below(self.modes)
            out[row, 0] = centers[mode, 0] + self.sigma * rng.normal()
            out[row, 1] = centers[mode, 1] + self.sigma * rng.normal()
        return out

    def _sample_checkerboard(self, rng, n):
        out = np.empty((n, 2))
        for row in range(n):
            x = 4.0 * rng.uniform() - 2.0
            column = min(int(math.floor(x + 2.0)), 3)
            # rows whose parity matches the column are the dark cells
            cell_row = 2 * rng.below(2) + (column % 2)
            out[row, 0] = x
            out[row, 1] = cell_row + rng.uniform() - 2.0
        return out

    def _sample_tiles(self, rng, n):
        coords = np.arange(self.side, dtype=np.float64)
        ys, xs = np.meshgrid(coords, coords, indexing="ij")
        out = np.empty((n, self.dim))
        for row in range(n):
            fx, fy = 0, 0
            while fx == 0 and fy == 0:
                fx, fy = rng.below(4), rng.below(4)
            phase = 2.0 * math.pi * rng.uniform()
            wave = np.sin(2.0 * math.pi * (fx * xs + fy * ys) / self.side + phase)
            out[row] = wave.ravel()
        return out


def nearest_mode_distances(samples: np.ndarray, dataset: SyntheticDataset) -> np.ndarray:
    if dataset.variant != RING:
        raise ConfigError("mode distances are defined for the ring dataset only", key="dataset")
    samples = np.asarray(samples, dtype=np.float64).reshape(-1, 2)
    deltas = samples[:, None, :] - dataset.centers()[None, :, :]
    return np.sqrt((deltas ** 2).sum(axis=2)).min(axis=1)


def mean_mode_distance(samples: np.ndarray, dataset: SyntheticDataset) -> float:
    """Mean Euclidean distance from each sample to its nearest ring mode."""
    return float(nearest_mode_distances(samples, dataset).mean())


def mode_coverage(samples: np.ndarray, dataset: SyntheticDataset, within_sigmas: float = 3.0) -> int:
    """Number of ring modes with at least one sample within `within_sigmas` std of the centre."""
    if dataset.variant != RING:
        raise ConfigError("mode coverage is defined for the ring dataset only", key="dataset")
    samples = np.asarray(samples, dtype=np.float64).reshape(-1, 2)
    deltas = samples[:, None, :] - dataset.centers()[None, :, :]
    distances = np.sqrt((deltas ** 2).sum(axis=2))
    hit = distances <= within_sigmas * max(dataset.sigma, 1e-12)
    return int(hit.any(axis=0).sum())
