"""
GAN Training Module
Desk-scale adversarial training: minibatch discriminator/generator updates,
soft labels, Adam, and the optimal-discriminator oracle.
"""
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

import config
from errors import ConfigError, DimensionError, DivergenceError
from modules.datasets import TILES, SyntheticDataset
from modules.diffcore import as_tensor, backward, flatten_grads, forward_with_cache, net_forward
from modules.nets import Network, discriminator_spec, generator_spec, init_net
from rng import Xoshiro256pp, derive_seed
import storage

logger = logging.getLogger(__name__)

# D outputs are clamped to [LOG_CLAMP, 1 - LOG_CLAMP] inside every log
LOG_CLAMP = 1e-7

SATURATING = "saturating"
NON_SATURATING = "non_saturating"
GENERATOR_MODES = (SATURATING, NON_SATURATING)

HARD = "hard"
SOFT = "soft"

# Stream indices under the training seed
_STREAM_G_INIT, _STREAM_D_INIT, _STREAM_DATA, _STREAM_NOISE = range(4)


@dataclass
class AdamState:
    """
    First/second moments for a list of parameter blocks, plus hyperparameters.

    With amsgrad the denominator uses the running maximum of the second
    moment, so a coordinate's effective step never grows once its gradients
    shrink.
    """
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: List[np.ndarray] = field(default_factory=list)
    v: List[np.ndarray] = field(default_factory=list)
    amsgrad: bool = False
    v_max: List[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: Sequence[np.ndarray], lr: float = 2e-4, beta1: float = 0.5,
                   beta2: float = 0.999, eps: float = 1e-8, amsgrad: bool = False) -> "AdamState":
        if lr < 0:
            raise ConfigError(f"lr must be >= 0, got {lr}", key="lr")
        if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
            raise ConfigError(f"betas must lie in [0, 1), got ({beta1}, {beta2})", key="betas")

        def zeros():
            return [np.zeros_like(p, dtype=np.float64) for p in params]

        return cls(lr, beta1, beta2, eps, 0, zeros(), zeros(), amsgrad, zeros() if amsgrad else [])

    def reset(self, block: int, index) -> None:
        """Zero both moments of the given coordinates of one block."""
        self.m[block][index] = 0.0
        self.v[block][index] = 0.0
        if self.amsgrad:
            self.v_max[block][index] = 0.0


def adam_update(state: AdamState, grads: Sequence[np.ndarray],
                params: Sequence[np.ndarray]) -> List[np.ndarray]:
    """
    One Adam (or AMSGrad) step with bias correction.

    The moments in `state` are advanced in place; the updated parameters are
    returned as new arrays and `params` is left untouched.
    """
    if len(grads) != len(params) or len(params) != len(state.m):
        raise DimensionError("parameter block count mismatch", expected=len(state.m),
                             actual=(len(params), len(grads)), module="gantrain")
    for block, (grad, param) in enumerate(zip(grads, params)):
        if np.shape(grad) != np.shape(param) or np.shape(param) != state.m[block].shape:
            raise DimensionError("parameter shape mismatch", expected=state.m[block].shape,
                                 actual=(np.shape(param), np.shape(grad)), layer=block,
                                 module="gantrain")
    state.t += 1
    correction1 = 1.0 - state.beta1 ** state.t
    correction2 = 1.0 - state.beta2 ** state.t
    updated = []
    for block, (grad, param) in enumerate(zip(grads, params)):
        state.m[block] = state.beta1 * state.m[block] + (1.0 - state.beta1) * grad
        state.v[block] = state.beta2 * state.v[block] + (1.0 - state.beta2) * grad * grad
        second = state.v[block]
        if state.amsgrad:
            state.v_max[block] = np.maximum(state.v_max[block], second)
            second = state.v_max[block]
        m_hat = state.m[block] / correction1
        v_hat = second / correction2
        updated.append(param - state.lr * m_hat / (np.sqrt(v_hat) + state.eps))
    return updated


@dataclass(frozen=True)
class LabelScheme:
    """Hard labels (real 1, fake 0) or soft labels drawn uniformly per sample."""
    variant: str = HARD
    real_range: Tuple[float, float] = (0.7, 1.2)
    fake_range: Tuple[float, float] = (0.0, 0.3)

    def __post_init__(self):
        if self.variant not in (HARD, SOFT):
            raise ConfigError(f"unknown label scheme {self.variant!r}", key="label_scheme")
        real, fake = tuple(self.real_range), tuple(self.fake_range)
        if real[0] > real[1] or fake[0] > fake[1]:
            raise ConfigError("label ranges must be (low, high)", key="label_scheme")
        if real[0] <= fake[1]:
            raise ConfigError(f"real range {real} must lie above fake range {fake}",
                              key="label_scheme")
        object.__setattr__(self, "real_range", real)
        object.__setattr__(self, "fake_range", fake)

    @classmethod
    def from_dict(cls, data) -> "LabelScheme":
        if isinstance(data, str):
            return cls(variant=data)
        return cls(variant=data.get("variant", HARD),
                   real_range=tuple(data.get("real_range", (0.7, 1.2))),
                   fake_range=tuple(data.get("fake_range", (0.0, 0.3))))

    def draw_real(self, rng: Xoshiro256pp, m: int) -> np.ndarray:
        if self.variant == HARD:
            return np.ones((m, 1))
        low, high = self.real_range
        return np.array([[rng.uniform_range(low, high)] for _ in range(m)])

    def draw_fake(self, rng: Xoshiro256pp, m: int) -> np.ndarray:
        if self.variant == HARD:
            return np.zeros((m, 1))
        low, high = self.fake_range
        return np.array([[rng.uniform_range(low, high)] for _ in range(m)])


def sample_prior(rng: Xoshiro256pp, d: int) -> np.ndarray:
    """d i.i.d. standard normal draws (the N(0, I) latent prior)."""
    if d < 1:
        raise ValueError(f"latent dimension must be >= 1, got {d}")
    return rng.normals(d)


def sample_prior_batch(rng: Xoshiro256pp, m: int, d: int) -> np.ndarray:
    if m < 1:
        raise ValueError(f"batch size must be >= 1, got {m}")
    return sample_prior(rng, m * d).reshape(m, d)


def bce(p: np.ndarray, target: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Binary cross-entropy of D outputs against (possibly soft) targets.

    Returns the per-sample loss and its derivative with respect to p, both
    evaluated at the clamped output.
    """
    pc = np.clip(p, LOG_CLAMP, 1.0 - LOG_CLAMP)
    loss = -(target * np.log(pc) + (1.0 - target) * np.log(1.0 - pc))
    grad = -target / pc + (1.0 - target) / (1.0 - pc)
    return loss, grad


def optimal_discriminator(p_data_at_x: float, p_g_at_x: float) -> float:
    """D*(x) = p_data(x) / (p_data(x) + p_g(x))."""
    if p_data_at_x < 0 or p_g_at_x < 0:
        raise ValueError(f"densities must be non-negative, got {p_data_at_x}, {p_g_at_x}")
    if p_data_at_x == 0 and p_g_at_x == 0:
        raise ValueError("optimal discriminator is undefined where both densities are zero")
    return p_data_at_x / (p_data_at_x + p_g_at_x)


def _check_loss(loss: float, what: str, step: Optional[int]):
    if not math.isfinite(loss):
        raise DivergenceError(f"non-finite {what} loss {loss}", step=step)


def discriminator_loss_and_grads(D: Network, real: np.ndarray, fake: np.ndarray,
                                 real_targets: np.ndarray, fake_targets: np.ndarray
                                 ) -> Tuple[float, List[np.ndarray]]:
    """Mean BCE on the real batch plus mean BCE on the fake batch, and its parameter gradients."""
    m_real, m_fake = len(real), len(fake)
    p_real, cache_real = forward_with_cache(D, real)
    p_fake, cache_fake = forward_with_cache(D, fake)
    loss_real, grad_real = bce(p_real, real_targets)
    loss_fake, grad_fake = bce(p_fake, fake_targets)
    _, grads_real = backward(D, cache_real, grad_real / m_real)
    _, grads_fake = backward(D, cache_fake, grad_fake / m_fake)
    grads = [a + b for a, b in zip(flatten_grads(grads_real), flatten_grads(grads_fake))]
    return float(loss_real.mean() + loss_fake.mean()), grads


def generator_loss_and_grads(G: Network, D: Network, z: np.ndarray,
                             mode: str = SATURATING) -> Tuple[float, List[np.ndarray]]:
    """
    Generator objective at fixed latents, and its gradients with respect to G only.

    saturating: (1/m) sum log(1 - D(G(z))); non_saturating: -(1/m) sum log D(G(z)).
    """
    if mode not in GENERATOR_MODES:
        raise ConfigError(f"unknown generator mode {mode!r}", key="generator_mode")
    m = len(z)
    fake, cache_g = forward_with_cache(G, z)
    p, cache_d = forward_with_cache(D, fake)
    pc = np.clip(p, LOG_CLAMP, 1.0 - LOG_CLAMP)
    if mode == SATURATING:
        loss = float(np.log(1.0 - pc).mean())
        upstream = -1.0 / (1.0 - pc) / m
    else:
        loss = float(-np.log(pc).mean())
        upstream = -1.0 / pc / m
    grad_fake, _ = backward(D, cache_d, upstream)
    _, grads = backward(G, cache_g, grad_fake)
    return loss, flatten_grads(grads)


def discriminator_step(D: Network, G: Network, real_batch: np.ndarray, rng: Xoshiro256pp,
                       labels: LabelScheme, adam: AdamState,
                       step: Optional[int] = None) -> Tuple[Network, float]:
    """
    One discriminator update on a real minibatch and an equally sized fake minibatch.

    Draw order: m latent vectors, then m real targets, then m fake targets.
    """
    real = as_tensor(real_batch)
    if real.ndim == 1:
        real = real.reshape(1, -1)
    m = len(real)
    if m < 1:
        raise ConfigError("empty real batch", key="batch_size", module="gantrain")
    if real.shape[1] != D.input_dim or G.output_dim != D.input_dim:
        raise DimensionError("data dimension mismatch", expected=D.input_dim,
                             actual=(real.shape[1], G.output_dim), module="gantrain")
    fake = net_forward(G, sample_prior_batch(rng, m, G.input_dim))
    real_targets = labels.draw_real(rng, m)
    fake_targets = labels.draw_fake(rng, m)
    loss, grads = discriminator_loss_and_grads(D, real, fake, real_targets, fake_targets)
    _check_loss(loss, "discriminator", step)
    params = adam_update(adam, grads, D.params())
    return D.with_params(params, step=D.step + 1), loss


def generator_step(G: Network, D: Network, rng: Xoshiro256pp, adam: AdamState,
                   mode: str = SATURATING, batch_size: int = 64,
                   step: Optional[int] = None) -> Tuple[Network, float]:
    """One generator update; D is only read."""
    z = sample_prior_batch(rng, batch_size, G.input_dim)
    loss, grads = generator_loss_and_grads(G, D, z, mode)
    _check_loss(loss, "generator", step)
    params = adam_update(adam, grads, G.params())
    return G.with_params(params, step=G.step + 1), loss


@dataclass
class TrainConfig:
    """
    Training run parameters; see docs/config.md for the JSON schema.

    generator_dims / discriminator_dims are full width lists. When omitted
    they default to [latent_dim, 64, 128, data_dim] and [data_dim, 64, 64, 1].
    """
    seed: int = 0
    latent_dim: int = 16
    generator_dims: Optional[List[int]] = None
    discriminator_dims: Optional[List[int]] = None
    generator_output: Optional[str] = None
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    batch_size: int = 64
    steps: int = 2000
    epochs: Optional[int] = None
    epoch_size: Optional[int] = None
    d_steps: int = 1
    generator_mode: str = SATURATING
    label_scheme: LabelScheme = field(default_factory=LabelScheme)
    dataset: SyntheticDataset = field(default_factory=SyntheticDataset)
    weight_std: float = 0.02

    def __post_init__(self):
        if isinstance(self.label_scheme, (str, dict)):
            self.label_scheme = LabelScheme.from_dict(self.label_scheme)
        if isinstance(self.dataset, (str, dict)):
            self.dataset = SyntheticDataset.from_dict(self.dataset)
        data_dim = self.dataset.dim
        if self.generator_dims is None:
            self.generator_dims = [self.latent_dim, 64, 128, data_dim]
        if self.discriminator_dims is None:
            self.discriminator_dims = [data_dim, 64, 64, 1]
        self.generator_dims = [int(d) for d in self.generator_dims]
        self.discriminator_dims = [int(d) for d in self.discriminator_dims]
        if self.generator_output is None:
            # tanh suits images in [-1, 1]; point clouds live outside that box
            self.generator_output = "tanh" if self.dataset.variant == TILES else "identity"
        if self.epochs is not None:
            if self.epochs < 0 or not self.epoch_size or self.epoch_size < 1:
                raise ConfigError("epochs needs a positive epoch_size", key="epochs")
            self.steps = self.epochs * math.ceil(self.epoch_size / self.batch_size)
        self.validate()

    def validate(self):
        for key in ("seed", "latent_dim", "batch_size", "steps", "d_steps"):
            value = getattr(self, key)
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"must be an integer, got {value!r}", key=key)
        if self.latent_dim < 1:
            raise ConfigError(f"must be >= 1, got {self.latent_dim}", key="latent_dim")
        if self.generator_dims[0] != self.latent_dim:
            raise ConfigError(f"first dim {self.generator_dims[0]} must equal latent_dim "
                              f"{self.latent_dim}", key="generator_dims")
        if self.generator_dims[-1] != self.dataset.dim:
            raise ConfigError(f"last dim {self.generator_dims[-1]} must equal the data dim "
                              f"{self.dataset.dim}", key="generator_dims")
        if self.discriminator_dims[0] != self.dataset.dim:
            raise ConfigError(f"first dim {self.discriminator_dims[0]} must equal the data dim "
                              f"{self.dataset.dim}", key="discriminator_dims")
        if self.lr <= 0:
            raise ConfigError(f"must be > 0, got {self.lr}", key="lr")
        if self.batch_size < 1:
            raise ConfigError(f"must be >= 1, got {self.batch_size}", key="batch_size")
        if self.steps < 0:
            raise ConfigError(f"must be >= 0, got {self.steps}", key="steps")
        if self.d_steps < 1:
            raise ConfigError(f"must be >= 1, got {self.d_steps}", key="d_steps")
        if self.generator_mode not in GENERATOR_MODES:
            raise ConfigError(f"unknown mode {self.generator_mode!r}", key="generator_mode")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TrainConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown keys {sorted(unknown)}", key="train config")
        try:
            return cls(**data)
        except ConfigError:
            raise
        except (TypeError, ValueError) as e:
            raise ConfigError(f"invalid value: {e}", key="train config")

    @classmethod
    def load(cls, path) -> "TrainConfig":
        data = storage.read_json(path)
        if not isinstance(data, dict):
            raise ConfigError("training config must be a JSON object", key=str(path))
        return cls.from_dict(data)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["label_scheme"] = asdict(self.label_scheme)
        data["dataset"] = self.dataset.to_dict()
        return data


class LossRecord(NamedTuple):
    step: int
    d_loss: float
    g_loss: float


@dataclass
class TrainResult:
    generator: Network
    discriminator: Network
    history: List[LossRecord]


def build_networks(cfg: TrainConfig) -> Tuple[Network, Network]:
    """Initialize G and D from their own streams under the training seed."""
    g_spec = generator_spec(cfg.generator_dims, output_activation=cfg.generator_output)
    d_spec = discriminator_spec(cfg.discriminator_dims)
    G = init_net(g_spec, Xoshiro256pp(derive_seed(cfg.seed, _STREAM_G_INIT)), cfg.weight_std)
    D = init_net(d_spec, Xoshiro256pp(derive_seed(cfg.seed, _STREAM_D_INIT)), cfg.weight_std)
    return G, D


def train(cfg: TrainConfig, progress_every: Optional[int] = None) -> TrainResult:
    """
    Alternate cfg.d_steps discriminator updates with one generator update.

    Deterministic given cfg.seed. With cfg.steps == 0 the initialized
    networks are returned unchanged.
    """
    progress_every = config.PROGRESS_EVERY if progress_every is None else progress_every
    G, D = build_networks(cfg)
    data_rng = Xoshiro256pp(derive_seed(cfg.seed, _STREAM_DATA))
    noise_rng = Xoshiro256pp(derive_seed(cfg.seed, _STREAM_NOISE))
    d_adam = AdamState.for_params(D.params(), cfg.lr, cfg.beta1, cfg.beta2)
    g_adam = AdamState.for_params(G.params(), cfg.lr, cfg.beta1, cfg.beta2)
    history: List[LossRecord] = []

    logger.info(f"Training {cfg.steps} steps on {cfg.dataset.variant} "
                f"(G {cfg.generator_dims}, D {cfg.discriminator_dims}, seed {cfg.seed})")
    for step in range(1, cfg.steps + 1):
        d_loss = float("nan")
        for _ in range(cfg.d_steps):
            real = cfg.dataset.sample(data_rng, cfg.batch_size)
            D, d_loss = discriminator_step(D, G, real, noise_rng, cfg.label_scheme, d_adam, step)
        G, g_loss = generator_step(G, D, noise_rng, g_adam, cfg.generator_mode,
                                   cfg.batch_size, step)
        history.append(LossRecord(step, d_loss, g_loss))
        if progress_every and step % progress_every == 0:
            logger.info(f"step {step}/{cfg.steps}: d_loss={d_loss:.5f} g_loss={g_loss:.5f}")
    return TrainResult(G, D, history)


def generate(G: Network, rng: Xoshiro256pp, n: int) -> np.ndarray:
    """n samples G(z) with z drawn from the prior."""
    return net_forward(G, sample_prior_batch(rng, n, G.input_dim))


def write_loss_history(path, history: Sequence[LossRecord]):
    """CSV `step,d_loss,g_loss`; floats use repr so they round-trip exactly."""
    storage.write_csv(path, ["step", "d_loss", "g_loss"],
                      ([r.step, repr(r.d_loss), repr(r.g_loss)] for r in history))
