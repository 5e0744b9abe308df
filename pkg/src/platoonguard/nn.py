"""Dense float64 primitives with hand-written backward passes.

Every forward returns (output, cache); the matching backward takes the
upstream gradient plus the cache and returns input/parameter gradients.
The encoder's structure is static, so explicit per-primitive gradients
keep the finite-difference checker exhaustive.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LAYER_NORM_EPS = 1e-5


class ShapeError(ValueError):
    def __init__(self, op: str, *shapes):
        super().__init__(f"{op}: incompatible shapes {' and '.join(str(s) for s in shapes)}")


def matmul_forward(a: np.ndarray, b: np.ndarray):
    if a.shape[-1] != b.shape[-2 if b.ndim > 1 else 0]:
        raise ShapeError("matmul", a.shape, b.shape)
    return a @ b, (a, b)


def matmul_backward(grad: np.ndarray, cache):
    a, b = cache
    da = grad @ np.swapaxes(b, -1, -2) if b.ndim > 1 else np.outer(grad, b)
    db = np.swapaxes(a, -1, -2) @ grad
    # Sum gradients over broadcast batch dimensions of b.
    while db.ndim > b.ndim:
        db = db.sum(axis=0)
    while da.ndim > a.ndim:
        da = da.sum(axis=0)
    return da, db


def add_forward(a: np.ndarray, b: np.ndarray):
    try:
        out = a + b
    except ValueError:
        raise ShapeError("add", a.shape, b.shape)
    return out, (a.shape, b.shape)


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    g = grad
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add_backward(grad: np.ndarray, cache):
    a_shape, b_shape = cache
    return _unbroadcast(grad, a_shape), _unbroadcast(grad, b_shape)


def relu_forward(x: np.ndarray):
    return np.maximum(x, 0.0), (x > 0.0)


def relu_backward(grad: np.ndarray, cache):
    return grad * cache


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_forward(x: np.ndarray):
    s = sigmoid(x)
    return s, s


def sigmoid_backward(grad: np.ndarray, cache):
    s = cache
    return grad * s * (1.0 - s)


def softmax_forward(x: np.ndarray, axis: int = -1):
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)
    return out, (out, axis)


def softmax_backward(grad: np.ndarray, cache):
    out, axis = cache
    inner = (grad * out).sum(axis=axis, keepdims=True)
    return out * (grad - inner)


def layer_norm_forward(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray,
                       eps: float = LAYER_NORM_EPS):
    if gamma.shape != x.shape[-1:] or beta.shape != x.shape[-1:]:
        raise ShapeError("layer_norm", x.shape, gamma.shape, beta.shape)
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean) * inv
    return xhat * gamma + beta, (xhat, inv, gamma)


def layer_norm_backward(grad: np.ndarray, cache):
    xhat, inv, gamma = cache
    D = xhat.shape[-1]
    dgamma = (grad * xhat).reshape(-1, D).sum(axis=0)
    dbeta = grad.reshape(-1, D).sum(axis=0)
    gx = grad * gamma
    dx = inv * (gx - gx.mean(axis=-1, keepdims=True)
                - xhat * (gx * xhat).mean(axis=-1, keepdims=True))
    return dx, dgamma, dbeta


def dropout_forward(x: np.ndarray, rate: float, train: bool,
                    rng: np.random.Generator | None):
    """Inverted dropout; identity at inference."""
    if not train or rate == 0.0:
        return x, None
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * keep, keep


def dropout_backward(grad: np.ndarray, cache):
    return grad if cache is None else grad * cache


def dropout_rng(seed: int, layer_id: int, step: int) -> np.random.Generator:
    """Counter-based per-call generator so training is reproducible."""
    return np.random.default_rng((seed, layer_id, step))


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    lr: float = 5e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState) -> None:
    """Standard bias-corrected Adam update, in place."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(f"adam_step[{name}]", p.shape, g.shape)
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter {name!r}")
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        m += (1.0 - b1) * (g - m)
        v += (1.0 - b2) * (g * g - v)
        m_hat = m / (1.0 - b1 ** state.t)
        v_hat = v / (1.0 - b2 ** state.t)
        p -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


# ---------------------------------------------------------------------------
# Finite-difference gradient checking
# ---------------------------------------------------------------------------


def grad_check(loss_fn, params: dict[str, np.ndarray],
               analytic: dict[str, np.ndarray], h: float = 1e-5,
               n_coords: int = 200, seed: int = 0) -> float:
    """Worst relative error between analytic and central-difference grads.

    loss_fn() must be a deterministic scalar function of params (it reads
    the arrays in place).  A deterministic subsample of at least n_coords
    coordinates is checked, spread over all parameters.
    """
    rng = np.random.default_rng(seed)
    coords = []
    for name in sorted(params):
        size = params[name].size
        per = max(1, min(size, n_coords // len(params) + 1))
        idx = rng.choice(size, size=per, replace=False)
        coords.extend((name, int(i)) for i in idx)
    rng.shuffle(coords)
    coords = coords[: max(n_coords, len(params))]

    worst = 0.0
    for name, i in coords:
        flat = params[name].reshape(-1)
        orig = flat[i]
        flat[i] = orig + h
        up = loss_fn()
        flat[i] = orig - h
        down = loss_fn()
        flat[i] = orig
        numeric = (up - down) / (2.0 * h)
        ana = analytic[name].reshape(-1)[i]
        err = abs(ana - numeric) / max(abs(ana), abs(numeric), 1e-8)
        worst = max(worst, err)
    return worst
