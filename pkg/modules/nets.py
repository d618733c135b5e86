"""
Nets Module
Construction, initialization and persistence of generator and discriminator networks.
"""
import logging
import struct
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from errors import ConfigError, DimensionError, ValidationError
from modules.diffcore import DEFAULT_LEAKY_SLOPE, DenseLayer, flatten_params, rebuild_layers
from rng import Xoshiro256pp
import storage

logger = logging.getLogger(__name__)

GENERATOR = "generator"
DISCRIMINATOR = "discriminator"
KINDS = (GENERATOR, DISCRIMINATOR)

DEFAULT_WEIGHT_STD = 0.02

_DEFAULT_ACTIVATIONS = {
    GENERATOR: ("relu", "tanh"),
    DISCRIMINATOR: ("leaky_relu", "sigmoid"),
}

# On-disk activation codes; leaky_relu is stored with its fixed 0.2 slope
ACTIVATION_CODES = {"identity": 0, "relu": 1, "leaky_relu": 2, "tanh": 3, "sigmoid": 4}
_CODE_ACTIVATIONS = {code: name for name, code in ACTIVATION_CODES.items()}
_KIND_CODES = {GENERATOR: 0, DISCRIMINATOR: 1}
_CODE_KINDS = {code: kind for kind, code in _KIND_CODES.items()}


@dataclass(frozen=True)
class NetSpec:
    """
    Shape and activations of a dense network.

    layer_dims lists every width, the first being the input dimension and the
    last the output dimension. Activations default to the conventions for the
    kind: ReLU hidden / tanh output for generators, LeakyReLU(0.2) hidden /
    sigmoid output for discriminators.
    """
    kind: str
    layer_dims: Tuple[int, ...]
    hidden_activation: Optional[str] = None
    output_activation: Optional[str] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown network kind {self.kind!r}", key="kind")
        dims = tuple(int(d) for d in self.layer_dims)
        if len(dims) < 2:
            raise ConfigError(f"need at least 2 dims, got {list(dims)}", key="layer_dims")
        if any(d < 1 for d in dims):
            raise ConfigError(f"dims must be positive, got {list(dims)}", key="layer_dims")
        if self.kind == DISCRIMINATOR and dims[-1] != 1:
            raise ConfigError(f"discriminator output dim must be 1, got {dims[-1]}", key="layer_dims")
        hidden, output = _DEFAULT_ACTIVATIONS[self.kind]
        object.__setattr__(self, "layer_dims", dims)
        # a single layer has no hidden activation to store
        if len(dims) > 2 and self.hidden_activation:
            hidden = self.hidden_activation
        object.__setattr__(self, "hidden_activation", hidden)
        object.__setattr__(self, "output_activation", self.output_activation or output)
        for key in ("hidden_activation", "output_activation"):
            if getattr(self, key) not in ACTIVATION_CODES:
                raise ConfigError(f"unknown activation {getattr(self, key)!r}", key=key)

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def output_dim(self) -> int:
        return self.layer_dims[-1]

    @property
    def layer_count(self) -> int:
        return len(self.layer_dims) - 1

    def activation_for(self, index: int) -> str:
        return self.output_activation if index == self.layer_count - 1 else self.hidden_activation


def generator_spec(layer_dims: Sequence[int], **activations) -> NetSpec:
    return NetSpec(GENERATOR, tuple(layer_dims), **activations)


def discriminator_spec(layer_dims: Sequence[int], **activations) -> NetSpec:
    return NetSpec(DISCRIMINATOR, tuple(layer_dims), **activations)


@dataclass(frozen=True, eq=False)
class Network:
    """A network plus the metadata stored in its checkpoint."""
    spec: NetSpec
    layers: Tuple[DenseLayer, ...]
    seed: int = 0
    step: int = 0

    @property
    def input_dim(self) -> int:
        return self.spec.input_dim

    @property
    def output_dim(self) -> int:
        return self.spec.output_dim

    def params(self) -> List[np.ndarray]:
        return flatten_params(self.layers)

    def with_params(self, params: Sequence[np.ndarray], step: Optional[int] = None) -> "Network":
        return Network(self.spec, tuple(rebuild_layers(self.layers, params)), self.seed,
                       self.step if step is None else step)

    def same_as(self, other: "Network") -> bool:
        """Bitwise equality of spec, parameters and metadata."""
        if self.spec != other.spec or self.seed != other.seed or self.step != other.step:
            return False
        return all(a.shape == b.shape and a.tobytes() == b.tobytes()
                   for a, b in zip(self.params(), other.params()))


# A checkpoint is the network together with its seed and step metadata
Checkpoint = Network


def network_from_weights(spec: NetSpec, weights: Sequence[np.ndarray],
                         biases: Optional[Sequence[np.ndarray]] = None,
                         seed: int = 0, step: int = 0) -> Network:
    """Build a network with explicit parameters (biases default to zero)."""
    if len(weights) != spec.layer_count:
        raise DimensionError("weight count mismatch", expected=spec.layer_count,
                             actual=len(weights), module="nets")
    layers = []
    for index, weight in enumerate(weights):
        weight = np.asarray(weight, dtype=np.float64)
        expected = (spec.layer_dims[index + 1], spec.layer_dims[index])
        if weight.shape != expected:
            raise DimensionError("weight shape mismatch", expected=expected,
                                 actual=weight.shape, layer=index, module="nets")
        bias = np.zeros(expected[0]) if biases is None else biases[index]
        layers.append(DenseLayer(weight, bias, spec.activation_for(index), DEFAULT_LEAKY_SLOPE))
    return Network(spec, tuple(layers), seed, step)


def init_net(spec: NetSpec, rng: Xoshiro256pp, weight_std: float = DEFAULT_WEIGHT_STD) -> Network:
    """Weights i.i.d. N(0, weight_std^2) in row-major layer order, biases zero."""
    if weight_std < 0:
        raise ConfigError(f"weight_std must be non-negative, got {weight_std}", key="weight_std")
    weights = []
    for index in range(spec.layer_count):
        fan_in, fan_out = spec.layer_dims[index], spec.layer_dims[index + 1]
        draws = rng.normals(fan_out * fan_in) * weight_std
        weights.append(draws.reshape(fan_out, fan_in))
    seed = rng.seed if rng.seed is not None else 0
    net = network_from_weights(spec, weights, seed=seed)
    logger.debug(f"Initialized {spec.kind} {list(spec.layer_dims)} with seed {seed}")
    return net


# Checkpoint encoding

def encode_checkpoint(net: Network) -> bytes:
    spec = net.spec
    parts = [storage.FileHeader(storage.MAGIC_CHECKPOINT).pack(),
             struct.pack("<BI", _KIND_CODES[spec.kind], spec.layer_count)]
    for layer in net.layers:
        parts.append(struct.pack("<IIB", layer.in_dim, layer.out_dim,
                                 ACTIVATION_CODES[layer.activation]))
    for layer in net.layers:
        parts.append(layer.weight.astype("<f8").tobytes())
    for layer in net.layers:
        parts.append(layer.bias.astype("<f8").tobytes())
    parts.append(struct.pack("<QQ", net.seed & 0xFFFFFFFFFFFFFFFF, net.step))
    return b"".join(parts)


def decode_checkpoint(buf: bytes, path=None) -> Network:
    storage.read_header(buf, storage.MAGIC_CHECKPOINT, path)
    offset = storage.HEADER_SIZE
    storage.require(buf, offset + 5, path)
    kind_code, layer_count = struct.unpack_from("<BI", buf, offset)
    offset += 5
    if kind_code not in _CODE_KINDS:
        raise ValidationError(f"unknown network kind code {kind_code}", path)
    if layer_count < 1:
        raise ValidationError("checkpoint has no layers", path)
    storage.require(buf, offset + 9 * layer_count, path)
    table = []
    for _ in range(layer_count):
        in_dim, out_dim, code = struct.unpack_from("<IIB", buf, offset)
        offset += 9
        if code not in _CODE_ACTIVATIONS:
            raise ValidationError(f"unknown activation code {code}", path)
        table.append((in_dim, out_dim, _CODE_ACTIVATIONS[code]))

    for index in range(1, layer_count):
        if table[index][0] != table[index - 1][1]:
            raise ValidationError(
                f"layer {index}: dimension inconsistency (expected input {table[index - 1][1]}, "
                f"got {table[index][0]})", path)
    hidden = {act for _, _, act in table[:-1]}
    if len(hidden) > 1:
        raise ValidationError(f"mixed hidden activations {sorted(hidden)}", path)

    n_weights = sum(i * o for i, o, _ in table)
    n_biases = sum(o for _, o, _ in table)
    expected = offset + 8 * (n_weights + n_biases) + 16
    storage.require(buf, expected, path)
    if len(buf) > expected:
        raise ValidationError(f"trailing bytes: expected {expected} bytes, got {len(buf)}", path)

    weights = []
    for in_dim, out_dim, _ in table:
        weights.append(np.frombuffer(buf, "<f8", in_dim * out_dim, offset)
                       .astype(np.float64).reshape(out_dim, in_dim))
        offset += 8 * in_dim * out_dim
    biases = []
    for _, out_dim, _ in table:
        biases.append(np.frombuffer(buf, "<f8", out_dim, offset).astype(np.float64))
        offset += 8 * out_dim
    seed, step = struct.unpack_from("<QQ", buf, offset)

    dims = [table[0][0]] + [o for _, o, _ in table]
    kind = _CODE_KINDS[kind_code]
    try:
        spec = NetSpec(kind, tuple(dims),
                       hidden_activation=table[0][2] if layer_count > 1 else None,
                       output_activation=table[-1][2])
    except ConfigError as e:
        raise ValidationError(f"dimension inconsistency: {e}", path)
    for param in weights + biases:
        if not np.all(np.isfinite(param)):
            raise ValidationError("checkpoint contains non-finite parameters", path)
    return network_from_weights(spec, weights, biases, seed=seed, step=step)


def save_checkpoint(net: Network, path):
    payload = encode_checkpoint(net)
    with storage.atomic_writer(path) as handle:
        handle.write(payload)
    logger.info(f"Saved {net.spec.kind} checkpoint ({len(payload)} bytes) to {path}")


def load_checkpoint(path) -> Network:
    net = decode_checkpoint(storage.read_bytes(path), path)
    logger.debug(f"Loaded {net.spec.kind} {list(net.spec.layer_dims)} from {path}")
    return net
