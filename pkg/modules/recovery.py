"""
Recovery Module
Invert a generated image to a latent vector: Adam on ||x - G(z)||^2 with
per-coordinate probabilistic resampling under a pluggable criterion.
"""
import logging
import math
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, NamedTuple, Optional

import numpy as np

from criteria.base import ResampleCriterion
from errors import ConfigError, DimensionError, DivergenceError
from modules.diffcore import as_tensor, backward, forward_with_cache, l2_sq, net_forward
from modules.gantrain import AdamState, adam_update, sample_prior
from modules.nets import Network
from rng import Xoshiro256pp
import storage

logger = logging.getLogger(__name__)


@dataclass
class RecoveryConfig:
    """
    numiter is the number of Adam iterations. expected_iters is the E used to
    spread a criterion's total probability over the run and defaults to
    numiter. reset_moments zeroes a coordinate's Adam moments when it is
    resampled. amsgrad keeps the running maximum of the second moment so the
    step size never grows back once the loss settles.
    """
    numiter: int = 20000
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    record_trace: bool = False
    expected_iters: Optional[int] = None
    reset_moments: bool = True
    amsgrad: bool = True

    def __post_init__(self):
        for key in ("numiter", "seed"):
            value = getattr(self, key)
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"must be an integer, got {value!r}", key=key)
        if self.numiter < 0:
            raise ConfigError(f"must be >= 0, got {self.numiter}", key="numiter")
        if not (self.lr > 0 and math.isfinite(self.lr)):
            raise ConfigError(f"must be > 0, got {self.lr}", key="lr")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigError(f"must lie in [0, 1), got ({self.beta1}, {self.beta2})", key="betas")
        if self.expected_iters is not None and self.expected_iters < 1:
            raise ConfigError(f"must be >= 1, got {self.expected_iters}", key="expected_iters")

    @property
    def horizon(self) -> int:
        """E for per_step_prob."""
        return self.expected_iters or max(self.numiter, 1)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RecoveryConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown keys {sorted(unknown)}", key="recovery")
        try:
            return cls(**data)
        except ConfigError:
            raise
        except (TypeError, ValueError) as e:
            raise ConfigError(f"invalid value: {e}", key="recovery")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


class TraceRow(NamedTuple):
    iteration: int
    loss: float
    resamples: int


@dataclass
class RecoveryResult:
    z_approx: np.ndarray
    final_loss: float
    loss_trace: Optional[List[TraceRow]]
    resample_counts: np.ndarray
    seed: Optional[int]
    iterations: int = 0

    @property
    def total_resamples(self) -> int:
        return int(self.resample_counts.sum())


def resample_prob(criterion: ResampleCriterion, z_i):
    """Total probability P(R | z_i) that the criterion wants z_i redrawn."""
    return criterion.probability(z_i)


def per_step_prob(p, E: int):
    """
    Per-iteration probability 1 - (1 - p)^(1/E) for a run of E iterations.

    Evaluated as -expm1(log1p(-p) / E); p == 1 maps to exactly 1.
    """
    if E < 1:
        raise ValueError(f"expected iterations must be >= 1, got {E}")
    p_arr = np.asarray(p, dtype=np.float64)
    if np.any(p_arr < 0.0) or np.any(p_arr > 1.0):
        raise ValueError("probabilities must lie in [0, 1]")
    with np.errstate(divide="ignore"):
        q = np.where(p_arr >= 1.0, 1.0, -np.expm1(np.log1p(-np.minimum(p_arr, 1.0)) / E))
    return float(q) if np.ndim(p) == 0 else q


def reconstruction_error(z_true, z_approx) -> float:
    """||z_true - z_approx||^2 / |z|."""
    z_true = as_tensor(z_true).ravel()
    z_approx = as_tensor(z_approx).ravel()
    if z_true.shape != z_approx.shape:
        raise DimensionError("latent length mismatch", expected=z_true.size,
                             actual=z_approx.size, module="recovery")
    return l2_sq(z_true, z_approx) / z_true.size


def _target_vector(x, G: Network) -> np.ndarray:
    x = as_tensor(x)
    if x.size != G.output_dim:
        raise DimensionError("image does not match generator output", expected=G.output_dim,
                             actual=f"{x.size} {list(x.shape)}", module="recovery")
    return x.ravel()


def recover(x, G: Network, criterion: ResampleCriterion, cfg: RecoveryConfig,
            rng: Optional[Xoshiro256pp] = None, z_init=None,
            progress_every: int = 0) -> RecoveryResult:
    """
    Recover z such that G(z) approximates x.

    Each iteration takes one Adam step on the reconstruction loss, then walks
    the coordinates in order: draw thresh ~ U(0, 1) and, if the per-step
    resample probability of the updated z_i exceeds it, redraw z_i ~ N(0, 1).
    RNG draw order: the d initial normals (skipped when z_init is given),
    then per iteration thresh_1, [redraw_1], thresh_2, [redraw_2], ...

    Args:
        x: Target image, any shape with G.output_dim elements
        G: Generator network
        criterion: Resample criterion
        cfg: Recovery configuration
        rng: Stream to draw from; defaults to Xoshiro256pp(cfg.seed)
        z_init: Optional starting latent instead of a prior draw
        progress_every: Log progress every n iterations (0 disables)

    Returns:
        RecoveryResult with the recovered latent and per-coordinate resample counts
    """
    target = _target_vector(x, G)
    if rng is None:
        rng = Xoshiro256pp(cfg.seed)
    d = G.input_dim
    if z_init is None:
        z = sample_prior(rng, d)
    else:
        z = as_tensor(z_init).ravel().copy()
        if z.size != d:
            raise DimensionError("initial latent does not match generator input",
                                 expected=d, actual=z.size, module="recovery")

    adam = AdamState.for_params([z], cfg.lr, cfg.beta1, cfg.beta2, cfg.eps, amsgrad=cfg.amsgrad)
    counts = np.zeros(d, dtype=np.int64)
    trace: Optional[List[TraceRow]] = [] if cfg.record_trace else None
    horizon = cfg.horizon

    for iteration in range(1, cfg.numiter + 1):
        output, cache = forward_with_cache(G, z)
        diff = output - target
        loss = float(np.dot(diff, diff))
        if not math.isfinite(loss):
            raise DivergenceError(f"non-finite reconstruction loss {loss}", step=iteration,
                                  module="recovery")
        grad, _ = backward(G, cache, 2.0 * diff)
        (z,) = adam_update(adam, [grad], [z])

        probs = per_step_prob(criterion.probability(z), horizon)
        resampled = 0
        for i in range(d):
            thresh = rng.uniform()
            if probs[i] > thresh:
                z[i] = rng.normal()
                counts[i] += 1
                resampled += 1
                if cfg.reset_moments:
                    adam.reset(0, i)
        if trace is not None:
            trace.append(TraceRow(iteration, loss, resampled))
        if progress_every and iteration % progress_every == 0:
            logger.info(f"iteration {iteration}/{cfg.numiter}: loss={loss:.6g} "
                        f"resamples={int(counts.sum())}")

    final_loss = l2_sq(target, net_forward(G, z))
    return RecoveryResult(z, final_loss, trace, counts,
                          rng.seed if rng.seed is not None else cfg.seed, cfg.numiter)


def write_trace(path, trace: List[TraceRow]):
    """CSV `iter,loss,resamples_this_iter`."""
    storage.write_csv(path, ["iter", "loss", "resamples_this_iter"],
                      ([row.iteration, repr(row.loss), row.resamples] for row in trace))
