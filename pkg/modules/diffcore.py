"""
Diffcore Module
Forward and backward passes for small dense feedforward networks.

Gradients are computed by explicit per-layer backward passes; there is no
taped graph. Inputs are float64 arrays, either a single vector of shape
(dim,) or a batch of shape (batch, dim).
"""
import logging
from dataclasses import dataclass, replace
from typing import Callable, List, NamedTuple, Sequence, Tuple, Union

import numpy as np

from errors import DimensionError, DivergenceError

logger = logging.getLogger(__name__)

ACTIVATIONS = ("identity", "relu", "leaky_relu", "tanh", "sigmoid")
DEFAULT_LEAKY_SLOPE = 0.2


def as_tensor(x) -> np.ndarray:
    """Convert to a C-contiguous float64 array."""
    return np.ascontiguousarray(x, dtype=np.float64)


@dataclass(frozen=True, eq=False)
class DenseLayer:
    """One dense layer: activation(W x + b), W of shape (out_dim, in_dim)."""
    weight: np.ndarray
    bias: np.ndarray
    activation: str = "identity"
    slope: float = DEFAULT_LEAKY_SLOPE

    def __post_init__(self):
        weight = as_tensor(self.weight)
        bias = as_tensor(self.bias)
        if weight.ndim != 2:
            raise DimensionError("weight must be a matrix", expected=2, actual=weight.ndim)
        if bias.shape != (weight.shape[0],):
            raise DimensionError("bias length must equal weight rows",
                                 expected=(weight.shape[0],), actual=bias.shape)
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.activation == "leaky_relu" and not 0.0 < self.slope < 1.0:
            raise ValueError(f"leaky_relu slope must lie in (0, 1), got {self.slope}")
        object.__setattr__(self, "weight", weight)
        object.__setattr__(self, "bias", bias)

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    def with_params(self, weight: np.ndarray, bias: np.ndarray) -> "DenseLayer":
        return replace(self, weight=weight, bias=bias)


class LayerGrad(NamedTuple):
    weight: np.ndarray
    bias: np.ndarray


class LayerCache(NamedTuple):
    inputs: np.ndarray
    preact: np.ndarray
    output: np.ndarray


Layers = Sequence[DenseLayer]
# Either dL/d(output) directly, or a function output -> (loss, dL/d(output))
Upstream = Union[np.ndarray, Callable[[np.ndarray], Tuple[float, np.ndarray]]]


def _layers(net) -> Layers:
    return getattr(net, "layers", net)


def activate(name: str, a: np.ndarray, slope: float = DEFAULT_LEAKY_SLOPE) -> np.ndarray:
    if name == "identity":
        return a.copy()
    if name == "relu":
        return np.maximum(a, 0.0)
    if name == "leaky_relu":
        return np.where(a > 0.0, a, slope * a)
    if name == "tanh":
        return np.tanh(a)
    if name == "sigmoid":
        return 0.5 * (1.0 + np.tanh(0.5 * a))
    raise ValueError(f"unknown activation {name!r}")


def activation_grad(name: str, a: np.ndarray, y: np.ndarray,
                    slope: float = DEFAULT_LEAKY_SLOPE) -> np.ndarray:
    """Derivative of the activation at pre-activation `a` with output `y`."""
    if name == "identity":
        return np.ones_like(a)
    if name == "relu":
        return (a > 0.0).astype(np.float64)
    if name == "leaky_relu":
        return np.where(a > 0.0, 1.0, slope)
    if name == "tanh":
        return 1.0 - y * y
    if name == "sigmoid":
        return y * (1.0 - y)
    raise ValueError(f"unknown activation {name!r}")


def _check_input(layer: DenseLayer, x: np.ndarray, index: int = None):
    if x.ndim not in (1, 2) or x.shape[-1] != layer.in_dim:
        raise DimensionError("input dimension mismatch", expected=layer.in_dim,
                             actual=x.shape[-1] if x.ndim else 0, layer=index)


def _check_finite(values: np.ndarray, what: str):
    if not np.all(np.isfinite(values)):
        raise DivergenceError(f"non-finite values in {what}", module="diffcore")


def dense_forward(layer: DenseLayer, x) -> np.ndarray:
    x = as_tensor(x)
    _check_input(layer, x)
    y = activate(layer.activation, x @ layer.weight.T + layer.bias, layer.slope)
    _check_finite(y, "dense layer output")
    return y


def check_chain(net) -> None:
    """Raise DimensionError at the first layer whose input does not match its predecessor."""
    layers = _layers(net)
    if not layers:
        raise DimensionError("network has no layers", module="diffcore")
    for index in range(1, len(layers)):
        if layers[index].in_dim != layers[index - 1].out_dim:
            raise DimensionError("layer chain break", expected=layers[index - 1].out_dim,
                                 actual=layers[index].in_dim, layer=index)


def forward_with_cache(net, z) -> Tuple[np.ndarray, List[LayerCache]]:
    layers = _layers(net)
    check_chain(layers)
    x = as_tensor(z)
    cache = []
    for index, layer in enumerate(layers):
        _check_input(layer, x, index)
        preact = x @ layer.weight.T + layer.bias
        y = activate(layer.activation, preact, layer.slope)
        cache.append(LayerCache(x, preact, y))
        x = y
    _check_finite(x, "network output")
    return x, cache


def net_forward(net, z) -> np.ndarray:
    output, _ = forward_with_cache(net, z)
    return output


def l2_sq(x, y) -> float:
    """Sum of squared differences (not the mean)."""
    x = as_tensor(x)
    y = as_tensor(y)
    if x.shape != y.shape:
        raise DimensionError("shape mismatch", expected=x.shape, actual=y.shape)
    diff = x - y
    return float(np.dot(diff.ravel(), diff.ravel()))


def backward(net, cache: List[LayerCache], upstream: np.ndarray) -> Tuple[np.ndarray, List[LayerGrad]]:
    """
    Propagate dL/d(output) back through the network.

    Returns:
        Tuple of dL/d(input), shaped like the network input, and the
        per-layer parameter gradients in layer order. For batched input the
        parameter gradients are summed over the batch.
    """
    layers = _layers(net)
    grad = as_tensor(upstream)
    if grad.shape != cache[-1].output.shape:
        raise DimensionError("upstream gradient shape mismatch",
                             expected=cache[-1].output.shape, actual=grad.shape)
    param_grads: List[LayerGrad] = [None] * len(layers)
    for index in range(len(layers) - 1, -1, -1):
        layer = layers[index]
        entry = cache[index]
        delta = grad * activation_grad(layer.activation, entry.preact, entry.output, layer.slope)
        if delta.ndim == 1:
            weight_grad = np.outer(delta, entry.inputs)
            bias_grad = delta.copy()
        else:
            weight_grad = delta.T @ entry.inputs
            bias_grad = delta.sum(axis=0)
        param_grads[index] = LayerGrad(weight_grad, bias_grad)
        grad = delta @ layer.weight
    return grad, param_grads


def l2_loss_upstream(target) -> Callable[[np.ndarray], Tuple[float, np.ndarray]]:
    """Upstream definition for L = ||target - output||^2."""
    target = as_tensor(target)

    def loss_fn(output: np.ndarray) -> Tuple[float, np.ndarray]:
        loss = l2_sq(target, output)
        return loss, 2.0 * (output - target)

    return loss_fn


def loss_and_grads(net, z, upstream: Upstream) -> Tuple[float, np.ndarray, List[LayerGrad]]:
    """Forward, evaluate the scalar loss, and return (loss, dL/dz, parameter grads)."""
    output, cache = forward_with_cache(net, z)
    if callable(upstream):
        loss, out_grad = upstream(output)
    else:
        loss, out_grad = float("nan"), upstream
    grad_input, param_grads = backward(net, cache, out_grad)
    return loss, grad_input, param_grads


def grad_z_loss(net, z, target) -> np.ndarray:
    """Exact gradient of ||target - G(z)||^2 with respect to z."""
    target = as_tensor(target)
    output, cache = forward_with_cache(net, z)
    if output.shape != target.shape:
        raise DimensionError("target shape mismatch", expected=output.shape, actual=target.shape)
    grad_input, _ = backward(net, cache, 2.0 * (output - target))
    return grad_input


def grad_params(net, z, upstream: Upstream) -> List[LayerGrad]:
    _, _, param_grads = loss_and_grads(net, z, upstream)
    return param_grads


def flatten_params(net) -> List[np.ndarray]:
    """Parameter arrays in the canonical order: W_0, b_0, W_1, b_1, ..."""
    params = []
    for layer in _layers(net):
        params.extend([layer.weight, layer.bias])
    return params


def flatten_grads(grads: Sequence[LayerGrad]) -> List[np.ndarray]:
    flat = []
    for grad in grads:
        flat.extend([grad.weight, grad.bias])
    return flat


def rebuild_layers(net, params: Sequence[np.ndarray]) -> List[DenseLayer]:
    """Inverse of flatten_params."""
    layers = _layers(net)
    if len(params) != 2 * len(layers):
        raise DimensionError("parameter count mismatch", expected=2 * len(layers), actual=len(params))
    return [layer.with_params(params[2 * i], params[2 * i + 1]) for i, layer in enumerate(layers)]
