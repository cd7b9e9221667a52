"""Small dense networks with hand-written backprop, Adam and soft target updates.

Inputs are batch-first ``(B, in)``; a 1-D input is treated as a batch of one
and the output is squeezed back.  Hidden layers use ReLU.  The output layer is
linear, or ``scale * tanh`` for actors with bounded actions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from robustlab.errors import ContractError, DivergenceError

OUTPUTS = ("linear", "tanh")


@dataclass
class MlpNet:
    weights: list  # (in, out) per layer
    biases: list  # (out,) per layer
    output: str = "linear"
    scale: float = 1.0

    def __post_init__(self):
        if self.output not in OUTPUTS:
            raise ContractError(f"unknown output activation {self.output!r}")
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ContractError("need one bias per weight matrix and at least one layer")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ContractError(f"layer {i}: weight {w.shape} and bias {b.shape} disagree")
            if i and w.shape[0] != self.weights[i - 1].shape[1]:
                raise ContractError(f"layer {i} expects {w.shape[0]} inputs, previous layer gives {self.weights[i - 1].shape[1]}")

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def params(self) -> list[np.ndarray]:
        """Parameter arrays in the order ``W0, b0, W1, b1, ...`` (views, not copies)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "MlpNet":
        return MlpNet([w.copy() for w in self.weights], [b.copy() for b in self.biases], self.output, self.scale)

    def __call__(self, x) -> np.ndarray:
        return forward(self, x)[0]


def init_mlp(
    layer_sizes,
    rng: np.random.Generator,
    output: str = "linear",
    scale: float = 1.0,
    final_limit: float | None = None,
) -> MlpNet:
    """Uniform fan-in init ``U(-1/sqrt(fan_in), 1/sqrt(fan_in))``.

    ``final_limit`` overrides the bound of the last layer (small values keep
    initial actor outputs away from tanh saturation).
    """
    sizes = [int(n) for n in layer_sizes]
    if len(sizes) < 2 or min(sizes) < 1:
        raise ContractError(f"bad layer sizes {sizes}")
    weights, biases = [], []
    for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        lim = 1.0 / np.sqrt(n_in)
        if final_limit is not None and i == len(sizes) - 2:
            lim = final_limit
        weights.append(rng.uniform(-lim, lim, size=(n_in, n_out)))
        biases.append(rng.uniform(-lim, lim, size=n_out))
    return MlpNet(weights, biases, output, scale)


@dataclass
class GradBundle:
    weights: list
    biases: list

    @classmethod
    def zeros_like(cls, net: MlpNet) -> "GradBundle":
        return cls([np.zeros_like(w) for w in net.weights], [np.zeros_like(b) for b in net.biases])

    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def flat(self) -> np.ndarray:
        return np.concatenate([g.ravel() for g in self.arrays()])

    def norm(self) -> float:
        return float(np.sqrt(sum(float(np.sum(g * g)) for g in self.arrays())))


@dataclass
class _Cache:
    inputs: list  # input to each layer
    pre: list  # pre-activation of each layer
    out: np.ndarray
    squeeze: bool


def forward(net: MlpNet, x):
    """Returns ``(output, cache)``."""
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    h = x[None, :] if squeeze else x
    if h.ndim != 2 or h.shape[1] != net.weights[0].shape[0]:
        raise ContractError(f"input shape {x.shape} does not match {net.weights[0].shape[0]} input units")
    inputs, pre = [], []
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        inputs.append(h)
        z = h @ w + b
        pre.append(z)
        if i < last:
            h = np.maximum(z, 0.0)
        elif net.output == "tanh":
            h = net.scale * np.tanh(z)
        else:
            h = z
    out = h[0] if squeeze else h
    return out, _Cache(inputs, pre, out, squeeze)


def backward(net: MlpNet, cache: _Cache, grad_out):
    """Gradients of a scalar loss given ``dL/d(output)``.

    Returns ``(GradBundle, dL/d(input))``; the bundle sums over the batch, so
    pass ``grad / B`` for a batch-mean loss.
    """
    g = np.asarray(grad_out, dtype=float)
    if g.shape != np.shape(cache.out):
        raise ContractError(f"output gradient shape {g.shape} != output shape {np.shape(cache.out)}")
    if cache.squeeze:
        g = g[None, :]
    last = len(net.weights) - 1
    if net.output == "tanh":
        t = np.tanh(cache.pre[last])
        g = g * net.scale * (1.0 - t * t)
    gw, gb = [None] * len(net.weights), [None] * len(net.weights)
    for i in range(last, -1, -1):
        if i < last:
            g = g * (cache.pre[i] > 0.0)
        gw[i] = cache.inputs[i].T @ g
        gb[i] = g.sum(axis=0)
        g = g @ net.weights[i].T
    return GradBundle(gw, gb), (g[0] if cache.squeeze else g)


def assert_finite(net: MlpNet, label: str = "net") -> None:
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        if not (np.isfinite(w).all() and np.isfinite(b).all()):
            raise DivergenceError(f"{label}: non-finite parameters in layer {i}")


# -- optimisation ----------------------------------------------------------------


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0

    @classmethod
    def for_net(cls, net: MlpNet) -> "AdamState":
        return cls([np.zeros_like(p) for p in net.params()], [np.zeros_like(p) for p in net.params()])

    def copy(self) -> "AdamState":
        return AdamState([m.copy() for m in self.m], [v.copy() for v in self.v], self.t)


def adam_step(
    net: MlpNet,
    grads: GradBundle,
    state: AdamState,
    lr: float = 1e-3,
    betas: tuple = (0.9, 0.999),
    eps: float = 1e-8,
    label: str = "net",
) -> MlpNet:
    """One Adam update in place; raises ``DivergenceError`` if a parameter goes non-finite."""
    if not lr > 0:
        raise ContractError(f"lr must be > 0, got {lr}")
    b1, b2 = betas
    state.t += 1
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for p, g, m, v in zip(net.params(), grads.arrays(), state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    assert_finite(net, label)
    return net


def soft_update(target: MlpNet, online: MlpNet, tau: float) -> MlpNet:
    """``target <- tau * online + (1 - tau) * target`` per parameter, in place."""
    if not 0.0 < tau <= 1.0:
        raise ContractError(f"tau must lie in (0, 1], got {tau}")
    if target.layer_sizes != online.layer_sizes:
        raise ContractError(f"shape mismatch {target.layer_sizes} vs {online.layer_sizes}")
    for t, o in zip(target.params(), online.params()):
        if tau == 1.0:
            t[...] = o
        else:
            t *= 1.0 - tau
            t += tau * o
    return target


# -- gradient checking ---------------------------------------------------------------


def _names(net: MlpNet) -> list[str]:
    out = []
    for i in range(len(net.weights)):
        out += [f"layer {i} weight", f"layer {i} bias"]
    return out


@dataclass
class GradCheckReport:
    passed: bool
    worst_rel_err: float
    worst_param: str
    per_param: dict = field(default_factory=dict)
    tolerance: float = 1e-4

    def summary(self) -> str:
        verdict = "ok" if self.passed else "FAILED"
        return f"grad check {verdict}: worst relative error {self.worst_rel_err:.3e} at {self.worst_param}"


def rel_error(a, b, floor: float = 1e-6) -> np.ndarray:
    """``|a-b| / max(|a|, |b|, floor)``; the floor keeps round-off on tiny entries from dominating."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def numeric_grads(loss_of_params: Callable[[], float], params: list[np.ndarray], h: float = 1e-5) -> list[np.ndarray]:
    """Central differences of ``loss_of_params()`` w.r.t. each array in ``params`` (perturbed in place)."""
    out = []
    for p in params:
        g = np.zeros_like(p)
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for j in range(flat.size):
            old = flat[j]
            flat[j] = old + h
            up = loss_of_params()
            flat[j] = old - h
            down = loss_of_params()
            flat[j] = old
            gflat[j] = (up - down) / (2.0 * h)
        out.append(g)
    return out


def squared_loss(target):
    """``0.5 * sum((out - target)^2)`` as a ``(loss, dL/dout)`` function."""
    target = np.asarray(target, float)

    def fn(out):
        d = out - target
        return 0.5 * float(np.sum(d * d)), d

    return fn


def grad_check(
    net: MlpNet,
    loss_fn: Callable,
    x,
    tol: float = 1e-4,
    h: float = 1e-5,
    backward_fn: Callable = backward,
) -> GradCheckReport:
    """Compare ``backward_fn`` with central differences of ``loss_fn(forward(net, x))``.

    ``loss_fn(out)`` returns ``(loss, dL/dout)``.  ``backward_fn`` is
    swappable so a deliberately broken backward can be shown to fail.
    """
    out, cache = forward(net, x)
    _, g_out = loss_fn(out)
    grads, _ = backward_fn(net, cache, g_out)
    num = numeric_grads(lambda: loss_fn(forward(net, x)[0])[0], net.params(), h)
    per, worst, worst_name = {}, 0.0, "none"
    for name, a, n in zip(_names(net), grads.arrays(), num):
        err = float(rel_error(a, n).max()) if a.size else 0.0
        per[name] = err
        if err > worst or worst_name == "none":
            worst, worst_name = err, name
    return GradCheckReport(worst < tol, worst, worst_name, per, tol)


def grad_check_input(net: MlpNet, loss_fn: Callable, x, h: float = 1e-5) -> float:
    """Worst relative error of the input gradient returned by ``backward``."""
    x = np.array(x, dtype=float)
    out, cache = forward(net, x)
    _, g_out = loss_fn(out)
    _, gx = backward(net, cache, g_out)
    (num,) = numeric_grads(lambda: loss_fn(forward(net, x)[0])[0], [x], h)
    return float(rel_error(gx, num).max())


# -- checkpoints -------------------------------------------------------------------


def save_net(path, net: MlpNet) -> None:
    arrays = {f"w{i}": w for i, w in enumerate(net.weights)}
    arrays.update({f"b{i}": b for i, b in enumerate(net.biases)})
    np.savez(
        path,
        layer_sizes=np.asarray(net.layer_sizes, dtype=np.int64),
        output=np.asarray(net.output),
        scale=np.asarray(net.scale, dtype=float),
        **arrays,
    )


def load_net(path) -> MlpNet:
    with np.load(path) as f:
        sizes = [int(n) for n in f["layer_sizes"]]
        n_layers = len(sizes) - 1
        weights = [f[f"w{i}"].copy() for i in range(n_layers)]
        biases = [f[f"b{i}"].copy() for i in range(n_layers)]
        net = MlpNet(weights, biases, str(f["output"]), float(f["scale"]))
    if net.layer_sizes != sizes:
        raise ContractError(f"checkpoint header {sizes} disagrees with stored arrays {net.layer_sizes}")
    return net
