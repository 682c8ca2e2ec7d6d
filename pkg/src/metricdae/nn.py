"""Small dense-network engine: forward/backward passes, Adam and gradient checking.

Weights are stored as ``(out, in)`` matrices and a layer computes
``act(x @ W.T + b)``. Everything runs in float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

ACTIVATIONS = ("relu", "identity")


@dataclass
class Dense:
    weight: np.ndarray
    bias: np.ndarray
    activation: str = "identity"

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ValueError(
                f"bias shape {self.bias.shape} does not match weight shape {self.weight.shape}"
            )

    @property
    def n_in(self) -> int:
        return self.weight.shape[1]

    @property
    def n_out(self) -> int:
        return self.weight.shape[0]


@dataclass
class MlpParams:
    """Ordered dense layers. ``version`` is bumped on every in-place update."""

    layers: list[Dense] = field(default_factory=list)
    version: int = 0

    def __post_init__(self):
        for k in range(len(self.layers) - 1):
            if self.layers[k].n_out != self.layers[k + 1].n_in:
                raise ValueError(
                    f"layer {k} outputs {self.layers[k].n_out} values but layer {k + 1} "
                    f"expects {self.layers[k + 1].n_in}"
                )

    @property
    def n_in(self) -> int | None:
        return self.layers[0].n_in if self.layers else None

    @property
    def n_out(self) -> int | None:
        return self.layers[-1].n_out if self.layers else None

    def arrays(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out.extend((layer.weight, layer.bias))
        return out

    def copy(self) -> "MlpParams":
        return MlpParams(
            [Dense(l.weight.copy(), l.bias.copy(), l.activation) for l in self.layers],
            version=self.version,
        )

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())


def init_mlp(sizes: Sequence[int], rng: np.random.Generator,
             hidden_activation: str = "relu", output_activation: str = "identity") -> MlpParams:
    """Glorot-uniform weights and zero biases for a chain of layer sizes."""
    layers = []
    n_layers = len(sizes) - 1
    for k in range(n_layers):
        fan_in, fan_out = sizes[k], sizes[k + 1]
        s = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-s, s, size=(fan_out, fan_in))
        act = output_activation if k == n_layers - 1 else hidden_activation
        layers.append(Dense(w, np.zeros(fan_out), act))
    return MlpParams(layers)


@dataclass
class Tape:
    """Per-layer inputs and pre-activations recorded by :func:`forward`."""

    params_id: int
    version: int
    inputs: list[np.ndarray]
    pre: list[np.ndarray]

    def relu_pattern(self) -> tuple[bytes, ...]:
        return tuple((z > 0).tobytes() for z in self.pre)


@dataclass
class GradientBundle:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())

    @classmethod
    def zeros_like(cls, params: MlpParams) -> "GradientBundle":
        return cls([np.zeros_like(l.weight) for l in params.layers],
                   [np.zeros_like(l.bias) for l in params.layers])


def forward(params: MlpParams, batch) -> tuple[np.ndarray, Tape]:
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"batch must be 2-D, got shape {x.shape}")
    if params.layers and x.shape[1] != params.n_in:
        raise ValueError(
            f"batch has {x.shape[1]} columns but the first layer expects {params.n_in}"
        )
    if not np.all(np.isfinite(x)):
        raise ValueError("batch contains non-finite values")
    inputs, pre = [], []
    h = x
    for layer in params.layers:
        inputs.append(h)
        z = h @ layer.weight.T + layer.bias
        pre.append(z)
        h = np.maximum(z, 0.0) if layer.activation == "relu" else z
    return h, Tape(id(params), params.version, inputs, pre)


def backward(params: MlpParams, tape: Tape, upstream_grad) -> tuple[GradientBundle, np.ndarray]:
    """Gradients of a scalar loss given dLoss/dOutput. ReLU'(0) is taken as 0."""
    if tape.params_id != id(params) or tape.version != params.version:
        raise ValueError("tape does not belong to the current state of these parameters")
    if len(tape.pre) != len(params.layers):
        raise ValueError("tape layer count does not match parameters")
    g = np.asarray(upstream_grad, dtype=np.float64)
    if params.layers and g.shape != tape.pre[-1].shape:
        raise ValueError(f"upstream gradient shape {g.shape} != output shape {tape.pre[-1].shape}")
    n = len(params.layers)
    dws: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    dbs: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    for k in reversed(range(n)):
        layer = params.layers[k]
        if layer.activation == "relu":
            g = g * (tape.pre[k] > 0)
        dws[k] = g.T @ tape.inputs[k]
        dbs[k] = g.sum(axis=0)
        g = g @ layer.weight
    return GradientBundle(dws, dbs), g


def count_params(params: MlpParams) -> int:
    return sum(l.weight.size + l.bias.size for l in params.layers)


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: MlpParams, lr: float = 1e-3, beta1: float = 0.9,
                   beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        arrays = params.arrays()
        return cls([np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays],
                   0, lr, beta1, beta2, eps)


def adam_step(params: MlpParams, grads: GradientBundle,
              state: AdamState) -> tuple[MlpParams, AdamState]:
    """One bias-corrected Adam update, applied in place to ``params`` and ``state``."""
    arrays, garrays = params.arrays(), grads.arrays()
    if len(arrays) != len(garrays) or len(arrays) != len(state.m):
        raise ValueError("gradient/state structure does not match parameters")
    for a, g, m in zip(arrays, garrays, state.m):
        if a.shape != g.shape or a.shape != m.shape:
            raise ValueError(f"shape mismatch: param {a.shape}, grad {g.shape}, moment {m.shape}")
    if not grads.is_finite():
        raise FloatingPointError("non-finite gradient entries; Adam step aborted")

    t = state.t + 1
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    updates = []
    with np.errstate(over="ignore", invalid="ignore"):
        for a, g, m, v in zip(arrays, garrays, state.m, state.v):
            m_new = state.beta1 * m + (1.0 - state.beta1) * g
            v_new = state.beta2 * v + (1.0 - state.beta2) * (g * g)
            a_new = a - state.lr * (m_new / bc1) / (np.sqrt(v_new / bc2) + state.eps)
            if not (np.all(np.isfinite(a_new)) and np.all(np.isfinite(v_new))):
                raise FloatingPointError("Adam update overflowed; parameters left unchanged")
            updates.append((m_new, v_new, a_new))
    for (m_new, v_new, a_new), a, m, v in zip(updates, arrays, state.m, state.v):
        m[...] = m_new
        v[...] = v_new
        a[...] = a_new
    state.t = t
    params.version += 1
    return params, state


def numerical_gradient(f: Callable[[], float], arrays: Sequence[np.ndarray],
                       h: float = 1e-5) -> list[np.ndarray]:
    """Central differences of ``f`` w.r.t. every entry of ``arrays`` (perturbed in place)."""
    out = []
    for a in arrays:
        g = np.zeros_like(a)
        flat, gflat = a.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = f()
            flat[i] = orig - h
            fm = f()
            flat[i] = orig
            gflat[i] = (fp - fm) / (2.0 * h)
        out.append(g)
    return out


def relative_error(analytic, numeric, floor: float = 1e-12) -> float:
    """Norm-wise relative error ``|a - n| / max(|a|, |n|)`` of two gradient arrays."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    scale = max(float(np.linalg.norm(a)), float(np.linalg.norm(n)), floor)
    return float(np.linalg.norm(a - n)) / scale


def grad_check(arrays: Sequence[np.ndarray], loss_fn: Callable[[], float],
               analytic: Sequence[np.ndarray], h: float = 1e-5,
               pattern_fn: Callable[[], object] | None = None,
               floor: float = 1e-12) -> float:
    """Worst per-array relative error between ``analytic`` gradients and central
    differences (see :func:`relative_error`).

    ``loss_fn`` must read the current contents of ``arrays``. If ``pattern_fn`` is
    given it should return the ReLU activation pattern; entries whose +/-h probes
    change the pattern straddle a kink and are left out of the comparison.
    """
    worst = 0.0
    base_pattern = pattern_fn() if pattern_fn is not None else None
    for a, ga in zip(arrays, analytic):
        flat, gflat = a.reshape(-1), np.asarray(ga).reshape(-1)
        num = np.empty(flat.size)
        keep = np.ones(flat.size, dtype=bool)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = loss_fn()
            crossed = pattern_fn is not None and pattern_fn() != base_pattern
            flat[i] = orig - h
            fm = loss_fn()
            crossed = crossed or (pattern_fn is not None and pattern_fn() != base_pattern)
            flat[i] = orig
            keep[i] = not crossed
            num[i] = (fp - fm) / (2.0 * h)
        if keep.any():
            worst = max(worst, relative_error(gflat[keep], num[keep], floor))
    return worst


def check_mlp_gradients(params: MlpParams, loss_fn: Callable[[MlpParams], tuple[float, GradientBundle]],
                        h: float = 1e-5) -> float:
    """:func:`grad_check` specialised to a loss that returns ``(value, GradientBundle)``."""
    if not params.layers:
        return 0.0
    _, grads = loss_fn(params)
    return grad_check(params.arrays(), lambda: loss_fn(params)[0], grads.arrays(), h=h)
