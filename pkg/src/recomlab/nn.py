"""Fixed-architecture tanh MLPs for the actor and critic, with hand-written
backpropagation and an Adam optimizer.

Parameters live in a flat ``dict[str, ndarray]`` keyed ``pi.w0 .. pi.b2``
(policy mean), ``log_std``, and ``vf.w0 .. vf.b2`` (value). Weight matrices
are stored ``(out, in)`` like ``torch.nn.Linear``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

Params = dict[str, np.ndarray]

OBS_DIM = 12
ACT_DIM = 4
HIDDEN = (64, 64)
LOG_STD_BOUNDS = (-20.0, 2.0)
LOG_2PI = np.log(2.0 * np.pi)


def _orthogonal(rng: np.random.Generator, shape, gain: float) -> np.ndarray:
    rows, cols = shape
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


def init_params(rng: np.random.Generator, obs_dim=OBS_DIM, act_dim=ACT_DIM, hidden=HIDDEN) -> Params:
    """Orthogonal weights (gain sqrt(2) hidden, 0.01 policy head, 1 value head), zero biases."""
    params: Params = {}
    for prefix, out_dim, head_gain in (("pi", act_dim, 0.01), ("vf", 1, 1.0)):
        sizes = (obs_dim, *hidden, out_dim)
        for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            gain = head_gain if i == len(sizes) - 2 else np.sqrt(2.0)
            params[f"{prefix}.w{i}"] = _orthogonal(rng, (n_out, n_in), gain)
            params[f"{prefix}.b{i}"] = np.zeros(n_out)
    params["log_std"] = np.zeros(act_dim)
    return params


def weight_keys(params: Params) -> list[str]:
    return [k for k in params if ".w" in k]


def n_layers(params: Params, prefix: str) -> int:
    n = 0
    while f"{prefix}.w{n}" in params:
        n += 1
    return n


def mlp_forward(params: Params, prefix: str, x: np.ndarray):
    """Return the output and the list of layer inputs (for backprop)."""
    acts = [x]
    h = x
    n = n_layers(params, prefix)
    for i in range(n):
        z = h @ params[f"{prefix}.w{i}"].T + params[f"{prefix}.b{i}"]
        h = np.tanh(z) if i < n - 1 else z
        acts.append(h)
    return h, acts


def hidden_activations(params: Params, obs: np.ndarray, prefix: str = "pi") -> list[np.ndarray]:
    """Post-tanh activations of every hidden layer, shape ``(batch, width)`` each."""
    _, acts = mlp_forward(params, prefix, np.atleast_2d(obs))
    return acts[1:-1]


def forward_policy(params: Params, obs: np.ndarray):
    mean, _ = mlp_forward(params, "pi", obs)
    return mean, params["log_std"]


def forward_value(params: Params, obs: np.ndarray):
    out, _ = mlp_forward(params, "vf", obs)
    return out[..., 0]


def mlp_backward(params: Params, prefix: str, acts: list[np.ndarray], d_out: np.ndarray, grads: Params):
    n = n_layers(params, prefix)
    delta = d_out
    for i in reversed(range(n)):
        grads[f"{prefix}.w{i}"] = delta.T @ acts[i]
        grads[f"{prefix}.b{i}"] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ params[f"{prefix}.w{i}"]) * (1.0 - acts[i] ** 2)


# loss_def(mean, log_std, value) -> (loss, d_mean, d_log_std, d_value)
LossDef = Callable[[np.ndarray, np.ndarray, np.ndarray], tuple]


def backward(params: Params, obs: np.ndarray, loss_def: LossDef):
    """Loss value and its gradient with respect to every parameter."""
    obs = np.atleast_2d(obs)
    mean, pi_acts = mlp_forward(params, "pi", obs)
    value, vf_acts = mlp_forward(params, "vf", obs)
    loss, d_mean, d_log_std, d_value = loss_def(mean, params["log_std"], value[:, 0])
    if not np.isfinite(loss):
        raise FloatingPointError(f"non-finite loss {loss}")
    grads: Params = {}
    mlp_backward(params, "pi", pi_acts, d_mean, grads)
    grads["log_std"] = np.asarray(d_log_std, dtype=np.float64)
    mlp_backward(params, "vf", vf_acts, np.asarray(d_value)[:, None], grads)
    return float(loss), {k: grads[k] for k in params}


def l2_penalty(params: Params, lam: float):
    """``lam/2 * sum |W|^2`` over weight matrices and its gradient ``lam * W``."""
    keys = weight_keys(params)
    loss = 0.5 * lam * sum(float(np.sum(params[k] ** 2)) for k in keys)
    grads = {k: (lam * params[k] if k in keys else np.zeros_like(params[k])) for k in params}
    return loss, grads


def gaussian_log_prob(actions, mean, log_std):
    z = (actions - mean) * np.exp(-log_std)
    return -0.5 * np.sum(z**2, axis=-1) - np.sum(log_std) - 0.5 * mean.shape[-1] * LOG_2PI


def gaussian_entropy(log_std) -> float:
    return float(np.sum(log_std + 0.5 * (1.0 + LOG_2PI)))


def global_norm(grads: Params) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_by_global_norm(grads: Params, max_norm: float) -> Params:
    norm = global_norm(grads)
    if max_norm is None or norm <= max_norm:
        return grads
    scale = max_norm / (norm + 1e-6)
    return {k: g * scale for k, g in grads.items()}


def flatten(tree: Params) -> np.ndarray:
    return np.concatenate([np.ravel(a) for a in tree.values()])


def unflatten(vec: np.ndarray, like: Params) -> Params:
    out: Params = {}
    i = 0
    for k, a in like.items():
        out[k] = vec[i:i + a.size].reshape(a.shape)
        i += a.size
    return out


@lru_cache(maxsize=8)
def _decay_mask_for(layout: tuple) -> np.ndarray:
    return np.concatenate([np.full(size, ".w" in k, dtype=np.float64) for k, size in layout])


def _decay_mask(params: Params) -> np.ndarray:
    return _decay_mask_for(tuple((k, a.size) for k, a in params.items()))


@dataclass
class AdamState:
    """Moments are flat vectors in the key order of the parameter dict."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-5

    @classmethod
    def zeros_like(cls, params: Params, **kw) -> "AdamState":
        n = sum(a.size for a in params.values())
        return cls(np.zeros(n), np.zeros(n), 0, **kw)


def adam_step(params: Params, grads, adam: AdamState, lr: float, l2_lambda: float = 0.0):
    """Bias-corrected Adam with coupled L2 on weight matrices.

    ``grads`` is a dict shaped like ``params`` or its flattened vector.
    Returns new ``(params, adam)``; inputs are not modified.
    """
    if lr < 0:
        raise ValueError("learning rate must be non-negative")
    g = flatten({k: grads[k] for k in params}) if isinstance(grads, dict) else grads
    if not np.all(np.isfinite(g)):
        raise FloatingPointError("non-finite gradient")
    p = flatten(params)
    if l2_lambda:
        g = g + l2_lambda * _decay_mask(params) * p
    t = adam.t + 1
    b1, b2 = adam.beta1, adam.beta2
    m = b1 * adam.m + (1.0 - b1) * g
    v = b2 * adam.v + (1.0 - b2) * g * g
    m_hat = m / (1.0 - b1**t)
    v_hat = v / (1.0 - b2**t)
    new = unflatten(p - lr * m_hat / (np.sqrt(v_hat) + adam.eps), params)
    new["log_std"] = np.clip(new["log_std"], *LOG_STD_BOUNDS)
    return new, AdamState(m, v, t, b1, b2, adam.eps)
