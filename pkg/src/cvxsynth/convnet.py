"""Generator and discriminator networks with hand-written forward/backward passes.

The generator maps a shuffled k x f neighborhood to a k x k row-stochastic
coefficient matrix: one shared affine map f -> k is applied to every
neighborhood row, followed by a row softmax.  Synthetic row ``i`` is
``sum_j K[i, j] * nbh[j]``, so every output lies in the neighborhood's convex
hull.  Alpha clipping moves a fraction of each row's largest coefficient onto
its smallest one so no synthetic row can coincide with a single real row.

The discriminator is a dense f -> 250 -> 125 -> 75 -> 2 network with
leaky-rectifier hidden units and a 2-way softmax.

Everything runs in float64.  Networks are updated in place by
:class:`Optimizer`; a :class:`GradientTape` records what one backward pass
needs.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import TapeEmpty

HIDDEN_UNITS = (250, 125, 75)
LEAK = 0.01
LOG_GUARD = 1e-12
DEFAULT_CLIP = 0.351

DISC_LOSS = "disc"
FINAL_LOSS = "final"


def glorot(fan_in: int, fan_out: int, rng: np.random.Generator) -> np.ndarray:
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(fan_in, fan_out))


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _softmax_backward(p: np.ndarray, dp: np.ndarray) -> np.ndarray:
    return p * (dp - np.sum(dp * p, axis=-1, keepdims=True))


@dataclass
class GeneratorNet:
    weight: np.ndarray
    bias: np.ndarray
    clip_fraction: float = DEFAULT_CLIP

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[1],):
            raise ValueError("generator weight must be f x k with a length-k bias")
        if not 0.0 <= self.clip_fraction <= 1.0:
            raise ValueError("clip_fraction must lie in [0, 1]")

    @classmethod
    def init(cls, n_features: int, k: int, rng: np.random.Generator, clip_fraction: float = DEFAULT_CLIP):
        return cls(glorot(n_features, k, rng), np.zeros(k), clip_fraction)

    @property
    def k(self) -> int:
        return self.weight.shape[1]

    @property
    def n_features(self) -> int:
        return self.weight.shape[0]

    def params(self) -> list[np.ndarray]:
        return [self.weight, self.bias]

    def copy(self) -> "GeneratorNet":
        return GeneratorNet(self.weight.copy(), self.bias.copy(), self.clip_fraction)


@dataclass
class DiscriminatorNet:
    weights: list
    biases: list

    def __post_init__(self):
        self.weights = [np.asarray(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in self.biases]
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("discriminator needs matching weight and bias lists")
        if self.weights[-1].shape[1] != 2:
            raise ValueError("discriminator output layer must have 2 units")

    @classmethod
    def init(cls, n_features: int, rng: np.random.Generator, hidden=HIDDEN_UNITS):
        sizes = [n_features, *hidden, 2]
        weights = [glorot(a, b, rng) for a, b in zip(sizes[:-1], sizes[1:])]
        return cls(weights, [np.zeros(b) for b in sizes[1:]])

    @property
    def n_features(self) -> int:
        return self.weights[0].shape[0]

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "DiscriminatorNet":
        return DiscriminatorNet([w.copy() for w in self.weights], [b.copy() for b in self.biases])


# --- generator -------------------------------------------------------------


def coefficients(g: GeneratorNet, nbh: np.ndarray) -> np.ndarray:
    """Row softmax of ``nbh @ W + b``; works on a k x f block or a stack of them."""
    return softmax(nbh @ g.weight + g.bias)


def _clip_columns(K: np.ndarray):
    jmax = np.argmax(K, axis=-1)
    masked = K.copy()
    np.put_along_axis(masked, jmax[..., None], np.inf, axis=-1)
    jmin = np.argmin(masked, axis=-1)
    return jmax[..., None], jmin[..., None]


def alpha_clip(K: np.ndarray, delta: float) -> np.ndarray:
    """Scale each row's max by ``1 - delta`` and add the removed mass to the row min.

    The max is the lowest-indexed largest entry; the min is the lowest-indexed
    smallest entry among the remaining columns.
    """
    K = np.array(K, dtype=np.float64)
    if delta == 0:
        return K
    jmax, jmin = _clip_columns(K)
    top = np.take_along_axis(K, jmax, axis=-1)
    low = np.take_along_axis(K, jmin, axis=-1)
    np.put_along_axis(K, jmax, top * (1.0 - delta), axis=-1)
    np.put_along_axis(K, jmin, low + delta * top, axis=-1)
    return K


def synthesize(g: GeneratorNet, nbh: np.ndarray) -> np.ndarray:
    """Synthetic rows ``alpha_clip(K) @ nbh``, one per neighborhood row."""
    return alpha_clip(coefficients(g, nbh), g.clip_fraction) @ nbh


@dataclass
class _GenRecord:
    nbh: np.ndarray
    k_raw: np.ndarray
    jmax: np.ndarray | None
    jmin: np.ndarray | None


def _gen_forward(g: GeneratorNet, nbh: np.ndarray):
    k_raw = coefficients(g, nbh)
    if g.clip_fraction == 0:
        return k_raw @ nbh, _GenRecord(nbh, k_raw, None, None)
    jmax, jmin = _clip_columns(k_raw)
    return alpha_clip(k_raw, g.clip_fraction) @ nbh, _GenRecord(nbh, k_raw, jmax, jmin)


def _gen_backward(g: GeneratorNet, rec: _GenRecord, dC: np.ndarray) -> list[np.ndarray]:
    nbh = rec.nbh
    dK = dC @ np.swapaxes(nbh, -1, -2)
    if rec.jmax is not None:
        d = g.clip_fraction
        d_top = np.take_along_axis(dK, rec.jmax, axis=-1)
        d_low = np.take_along_axis(dK, rec.jmin, axis=-1)
        dK = dK.copy()
        np.put_along_axis(dK, rec.jmax, (1.0 - d) * d_top + d * d_low, axis=-1)
    dZ = _softmax_backward(rec.k_raw, dK)
    f = nbh.shape[-1]
    dW = nbh.reshape(-1, f).T @ dZ.reshape(-1, g.k)
    db = dZ.reshape(-1, g.k).sum(axis=0)
    return [dW, db]


# --- discriminator ---------------------------------------------------------


@dataclass
class _DiscRecord:
    inputs: list = field(default_factory=list)
    pre: list = field(default_factory=list)
    out: np.ndarray | None = None


def _leaky(z):
    return np.where(z > 0, z, LEAK * z)


def _disc_forward(d: DiscriminatorNet, X: np.ndarray):
    rec = _DiscRecord()
    h = X
    last = len(d.weights) - 1
    for i, (w, b) in enumerate(zip(d.weights, d.biases)):
        rec.inputs.append(h)
        z = h @ w + b
        rec.pre.append(z)
        h = softmax(z) if i == last else _leaky(z)
    rec.out = h
    return h, rec


def _disc_backward(d: DiscriminatorNet, rec: _DiscRecord, dP: np.ndarray):
    """Gradients for all discriminator params plus the input gradient."""
    grads = [None] * (2 * len(d.weights))
    dz = _softmax_backward(rec.out, dP)
    for i in range(len(d.weights) - 1, -1, -1):
        grads[2 * i] = rec.inputs[i].T @ dz
        grads[2 * i + 1] = dz.sum(axis=0)
        dh = dz @ d.weights[i].T
        if i > 0:
            dz = dh * np.where(rec.pre[i - 1] > 0, 1.0, LEAK)
    return grads, dh


def discriminate(d: DiscriminatorNet, batch: np.ndarray) -> np.ndarray:
    """m x 2 class probabilities."""
    return _disc_forward(d, np.asarray(batch, dtype=np.float64))[0]


# --- losses ----------------------------------------------------------------


def loss_disc(pred: np.ndarray, labels: np.ndarray) -> float:
    """Mean categorical cross-entropy over rows."""
    return float(np.mean(-np.sum(labels * np.log(pred + LOG_GUARD), axis=1)))


def _loss_disc_grad(pred, labels):
    return -labels / (pred + LOG_GUARD) / pred.shape[0]


def loss_gen(pred: np.ndarray, labels: np.ndarray) -> float:
    """Mean squared error over every entry."""
    return float(np.mean((pred - labels) ** 2))


def _loss_gen_grad(pred, labels):
    return 2.0 * (pred - labels) / pred.size


# --- tape ------------------------------------------------------------------


class GradientTape:
    """Holds the forward activations of one objective evaluation."""

    def __init__(self):
        self.kind = None
        self._state = None

    @property
    def empty(self) -> bool:
        return self.kind is None

    def clear(self):
        self.kind = None
        self._state = None


def disc_objective(d: DiscriminatorNet, batch: np.ndarray, labels: np.ndarray, tape: GradientTape | None = None) -> float:
    """Cross-entropy of the discriminator on ``batch``; records onto ``tape``."""
    pred, rec = _disc_forward(d, batch)
    loss = loss_disc(pred, labels)
    if tape is not None:
        tape.kind = DISC_LOSS
        tape._state = (d, rec, pred, labels)
    return loss


def final_objective(
    g: GeneratorNet,
    d: DiscriminatorNet,
    nbh: np.ndarray,
    outside: np.ndarray,
    labels: np.ndarray,
    tape: GradientTape | None = None,
    n_synthetic: int | None = None,
) -> float:
    """MSE of the frozen discriminator on generator samples stacked over ``outside``.

    ``nbh`` is one k x f neighborhood or a stack of them; the first
    ``n_synthetic`` generated rows (default all) are used.
    """
    C, grec = _gen_forward(g, nbh)
    flat = C.reshape(-1, C.shape[-1])
    n_syn = flat.shape[0] if n_synthetic is None else n_synthetic
    batch = np.vstack([flat[:n_syn], outside])
    pred, drec = _disc_forward(d, batch)
    loss = loss_gen(pred, labels)
    if tape is not None:
        tape.kind = FINAL_LOSS
        tape._state = (g, d, grec, drec, pred, labels, C.shape, n_syn)
    return loss


def backward(tape: GradientTape, loss_kind: str, scale: float = 1.0) -> list[np.ndarray]:
    """Exact gradients of ``scale * loss``.

    ``"disc"`` returns discriminator gradients (layer order, weight then bias);
    ``"final"`` returns generator gradients ``[dW, db]``, flowing through the
    discriminator without touching it.
    """
    if tape.empty:
        raise TapeEmpty("no forward pass recorded on this tape")
    if tape.kind != loss_kind:
        raise ValueError(f"tape holds a {tape.kind!r} forward pass, not {loss_kind!r}")
    if loss_kind == DISC_LOSS:
        d, rec, pred, labels = tape._state
        grads, _ = _disc_backward(d, rec, scale * _loss_disc_grad(pred, labels))
        return grads
    g, d, grec, drec, pred, labels, c_shape, n_syn = tape._state
    _, dX = _disc_backward(d, drec, scale * _loss_gen_grad(pred, labels))
    dflat = np.zeros((int(np.prod(c_shape[:-1])), c_shape[-1]))
    dflat[:n_syn] = dX[:n_syn]
    return _gen_backward(g, grec, dflat.reshape(c_shape))


# --- optimizer -------------------------------------------------------------


@dataclass
class Optimizer:
    kind: str = "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.kind!r}")

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> list[np.ndarray]:
        """Update ``params`` in place and return them."""
        if self.kind == "sgd":
            for p, g in zip(params, grads):
                p -= self.lr * g
            return params
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            # In-place arithmetic; the discriminator has ~45k parameters per step.
            tmp = g * (1.0 - self.beta1)
            m *= self.beta1
            m += tmp
            np.multiply(g, g, out=tmp)
            tmp *= 1.0 - self.beta2
            v *= self.beta2
            v += tmp
            np.divide(v, c2, out=tmp)
            np.sqrt(tmp, out=tmp)
            tmp += self.eps
            np.divide(m, tmp, out=tmp)
            tmp *= self.lr / c1
            p -= tmp
        return params

    def settings(self) -> dict:
        return {"kind": self.kind, "lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps}
