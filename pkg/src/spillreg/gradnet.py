"""Minimal dense-network toolkit with exact reverse-mode gradients.

Sized for exactly what the training loop needs: a linear actor head and a
two-hidden-layer (64x64) critic. Forward returns an activation tape;
backward replays it to produce exact gradients of output . grad_output with
respect to every parameter and the input. All math is float64 numpy.

forward/backward accept a single input vector (the documented contract) or a
batch stacked along the first axis; gradients of a batch are summed over the
batch, so per-sample loss weights belong in grad_output.

Optimizers: bias-corrected Adam (the default throughout the package) and
plain SGD behind the same interface for ablation hygiene. Both mutate the
parameter arrays in place and return them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, ShapeError, UsageError

ACTIVATIONS = ("tanh", "relu", "identity")


@dataclass
class Layer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2:
            raise ShapeError(f"layer weight must be 2-D, got shape {self.weight.shape}")
        if self.bias.shape != (self.weight.shape[0],):
            raise ShapeError(
                f"bias shape {self.bias.shape} does not match weight rows {self.weight.shape[0]}"
            )
        if self.activation not in ACTIVATIONS:
            raise ShapeError(f"unknown activation {self.activation!r}, expected one of {ACTIVATIONS}")


class DenseNet:
    """A chain of affine layers with elementwise activations."""

    def __init__(self, layers: list[Layer]):
        if not layers:
            raise ShapeError("DenseNet needs at least one layer")
        for prev, nxt in zip(layers, layers[1:]):
            if nxt.weight.shape[1] != prev.weight.shape[0]:
                raise ShapeError(
                    f"layer dims do not chain: {prev.weight.shape} -> {nxt.weight.shape}"
                )
        self.layers = layers
        self.version = 0  # bumped by whoever mutates the parameters

    @property
    def in_dim(self) -> int:
        return self.layers[0].weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.layers[-1].weight.shape[0]

    @property
    def param_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def parameters(self) -> list[np.ndarray]:
        """Parameter arrays in update order: [W0, b0, W1, b1, ...] (live views)."""
        out = []
        for layer in self.layers:
            out.append(layer.weight)
            out.append(layer.bias)
        return out

    def bump_version(self) -> None:
        self.version += 1


@dataclass
class Tape:
    """Activation record of one forward pass."""

    net: DenseNet
    version: int
    inputs: list[np.ndarray]  # input to each layer, shape (n, in)
    pre_acts: list[np.ndarray]  # affine outputs before activation
    outputs: list[np.ndarray]  # post-activation outputs
    single: bool  # True if forward received a 1-D vector


@dataclass
class Gradients:
    params: list[np.ndarray]  # aligned with net.parameters()
    input: np.ndarray


def _apply_activation(name: str, z: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return np.tanh(z)
    if name == "relu":
        return np.maximum(z, 0.0)
    return z


def _activation_grad(name: str, z: np.ndarray, out: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return 1.0 - out * out
    if name == "relu":
        return (z > 0.0).astype(np.float64)
    return np.ones_like(z)


def forward(net: DenseNet, x: np.ndarray) -> tuple[np.ndarray, Tape]:
    """Run the net; returns (output, tape). Pure: mutates nothing."""
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != net.in_dim:
        raise ShapeError(f"input shape {np.shape(x)} does not match in_dim {net.in_dim}")
    inputs, pre_acts, outputs = [], [], []
    h = arr
    for layer in net.layers:
        inputs.append(h)
        z = h @ layer.weight.T + layer.bias
        out = _apply_activation(layer.activation, z)
        pre_acts.append(z)
        outputs.append(out)
        h = out
    tape = Tape(net=net, version=net.version, inputs=inputs, pre_acts=pre_acts, outputs=outputs, single=single)
    return (h[0] if single else h), tape


def backward(net: DenseNet, tape: Tape, grad_output: np.ndarray) -> Gradients:
    """Exact gradients of sum(output * grad_output) w.r.t. parameters and input."""
    if tape.net is not net:
        raise UsageError("tape was recorded on a different net")
    if tape.version != net.version:
        raise UsageError("stale tape: net parameters changed since forward")
    g = np.asarray(grad_output, dtype=np.float64)
    if tape.single:
        if g.shape != (net.out_dim,):
            raise ShapeError(f"grad_output shape {g.shape} does not match out_dim {net.out_dim}")
        g = g[None, :]
    elif g.shape != tape.outputs[-1].shape:
        raise ShapeError(
            f"grad_output shape {g.shape} does not match output shape {tape.outputs[-1].shape}"
        )
    param_grads: list[np.ndarray] = [None] * (2 * len(net.layers))  # type: ignore[list-item]
    for idx in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[idx]
        ga = g * _activation_grad(layer.activation, tape.pre_acts[idx], tape.outputs[idx])
        param_grads[2 * idx] = ga.T @ tape.inputs[idx]
        param_grads[2 * idx + 1] = ga.sum(axis=0)
        g = ga @ layer.weight
    input_grad = g[0] if tape.single else g
    return Gradients(params=param_grads, input=input_grad)


def init_dense(
    layer_dims: list[int],
    activations: list[str],
    rng,
    hidden_gain: float = math.sqrt(2.0),
    out_gain: float = 0.01,
) -> DenseNet:
    """Build a net with scaled-uniform init.

    Weights are drawn U(-L, L) with L = gain * sqrt(3 / fan_in), which matches
    the variance of orthogonal init at the given gain; hidden layers use
    hidden_gain, the final layer out_gain (small, so initial outputs hug 0).
    Biases start at zero. rng is any object with a random() -> [0, 1) method.
    """
    if len(layer_dims) < 2:
        raise ShapeError("layer_dims needs at least input and output sizes")
    if len(activations) != len(layer_dims) - 1:
        raise ShapeError(
            f"need {len(layer_dims) - 1} activations for {len(layer_dims)} dims, got {len(activations)}"
        )
    layers = []
    for i, act in enumerate(activations):
        fan_in, fan_out = layer_dims[i], layer_dims[i + 1]
        gain = out_gain if i == len(activations) - 1 else hidden_gain
        limit = gain * math.sqrt(3.0 / fan_in)
        w = np.empty((fan_out, fan_in), dtype=np.float64)
        for r in range(fan_out):
            for c in range(fan_in):
                w[r, c] = rng.uniform(-limit, limit)
        layers.append(Layer(weight=w, bias=np.zeros(fan_out), activation=act))
    return DenseNet(layers)


@dataclass
class AdamState:
    """Bias-corrected Adam over a fixed list of parameter arrays."""

    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: list[np.ndarray], lr: float = 1e-4) -> "AdamState":
        return cls(
            lr=lr,
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
        )


def adam_step(opt: AdamState, params: list[np.ndarray], grads: list[np.ndarray]) -> list[np.ndarray]:
    """One Adam update, in place. Raises DivergenceError on non-finite grads."""
    _check_aligned(opt.m, params, grads, opt.step)
    opt.step += 1
    bc1 = 1.0 - opt.beta1 ** opt.step
    bc2 = 1.0 - opt.beta2 ** opt.step
    for p, g, m, v in zip(params, grads, opt.m, opt.v):
        m *= opt.beta1
        m += (1.0 - opt.beta1) * g
        v *= opt.beta2
        v += (1.0 - opt.beta2) * (g * g)
        p -= opt.lr * (m / bc1) / (np.sqrt(v / bc2) + opt.eps)
    return params


@dataclass
class SgdState:
    """Plain SGD behind the same stepping interface as Adam."""

    lr: float = 1e-4
    step: int = 0

    @classmethod
    def for_params(cls, params: list[np.ndarray], lr: float = 1e-4) -> "SgdState":
        return cls(lr=lr)


def sgd_step(opt: SgdState, params: list[np.ndarray], grads: list[np.ndarray]) -> list[np.ndarray]:
    _check_aligned(None, params, grads, opt.step)
    opt.step += 1
    for p, g in zip(params, grads):
        p -= opt.lr * g
    return params


def optimizer_for(kind: str, params: list[np.ndarray], lr: float):
    """Config switch between the two optimizers; returns (state, step_fn)."""
    if kind == "adam":
        return AdamState.for_params(params, lr=lr), adam_step
    if kind == "sgd":
        return SgdState.for_params(params, lr=lr), sgd_step
    raise ShapeError(f"unknown optimizer {kind!r}, expected 'adam' or 'sgd'")


def _check_aligned(moments, params, grads, step: int) -> None:
    if len(params) != len(grads):
        raise ShapeError(f"{len(params)} params vs {len(grads)} grads")
    if moments is not None and len(moments) != len(params):
        raise ShapeError("optimizer state does not match parameter count")
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != np.shape(g):
            raise ShapeError(f"param {i} shape {p.shape} vs grad shape {np.shape(g)}")
        if not np.all(np.isfinite(g)):
            raise DivergenceError(
                f"non-finite gradient in parameter {i}", step=step, diagnostics={"param_index": i}
            )


# --- checkpoint pieces ----------------------------------------------------

def net_to_dict(net: DenseNet) -> dict:
    return {
        "layer_dims": [[l.weight.shape[0], l.weight.shape[1]] for l in net.layers],
        "activations": [l.activation for l in net.layers],
        "params": [p.ravel().tolist() for p in net.parameters()],
    }


def net_from_dict(data: dict) -> DenseNet:
    from .errors import CheckpointError

    try:
        dims = data["layer_dims"]
        acts = data["activations"]
        flat = data["params"]
    except KeyError as exc:
        raise CheckpointError(f"net checkpoint missing key {exc}") from exc
    if len(flat) != 2 * len(dims):
        raise CheckpointError("net checkpoint parameter count does not match layer dims")
    layers = []
    for i, ((out_d, in_d), act) in enumerate(zip(dims, acts)):
        w = np.asarray(flat[2 * i], dtype=np.float64).reshape(out_d, in_d)
        b = np.asarray(flat[2 * i + 1], dtype=np.float64).reshape(out_d)
        layers.append(Layer(weight=w, bias=b, activation=act))
    return DenseNet(layers)


def adam_to_dict(opt: AdamState) -> dict:
    return {
        "kind": "adam",
        "lr": opt.lr,
        "beta1": opt.beta1,
        "beta2": opt.beta2,
        "eps": opt.eps,
        "step": opt.step,
        "m": [m.ravel().tolist() for m in opt.m],
        "v": [v.ravel().tolist() for v in opt.v],
    }


def adam_from_dict(data: dict, params: list[np.ndarray]) -> AdamState:
    from .errors import CheckpointError

    if data.get("kind") != "adam":
        raise CheckpointError(f"expected adam optimizer state, got {data.get('kind')!r}")
    opt = AdamState(
        lr=float(data["lr"]),
        beta1=float(data["beta1"]),
        beta2=float(data["beta2"]),
        eps=float(data["eps"]),
        step=int(data["step"]),
        m=[np.asarray(m, dtype=np.float64).reshape(p.shape) for m, p in zip(data["m"], params)],
        v=[np.asarray(v, dtype=np.float64).reshape(p.shape) for v, p in zip(data["v"], params)],
    )
    if len(opt.m) != len(params) or len(opt.v) != len(params):
        raise CheckpointError("optimizer state does not match parameter count")
    return opt
