"""Versioned JSON checkpoints.

Arrays are stored as base64 of their little-endian float64 bytes, and scalars
through ``repr``-exact JSON floats, so save -> load -> save is byte-stable.
"""

from __future__ import annotations

import base64
import json
import os
from pathlib import Path

import numpy as np

from recomlab import nn

FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def encode_array(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode("ascii")}


def decode_array(d: dict) -> np.ndarray:
    raw = base64.b64decode(d["data"])
    return np.frombuffer(raw, dtype="<f8").reshape(d["shape"]).astype(np.float64)


def encode_params(params: nn.Params) -> dict:
    return {k: encode_array(v) for k, v in params.items()}


def decode_params(d: dict) -> nn.Params:
    """Arrays in the network's canonical key order.

    JSON stores keys sorted, but flat optimizer moments follow the order of
    :func:`nn.init_params`, so the order must be restored.
    """
    canonical = [k for k in expected_shapes() if k in d]
    keys = canonical + sorted(set(d) - set(canonical))
    return {k: decode_array(d[k]) for k in keys}


def expected_shapes(obs_dim=nn.OBS_DIM, act_dim=nn.ACT_DIM, hidden=nn.HIDDEN) -> dict:
    return {k: v.shape for k, v in nn.init_params(np.random.default_rng(0), obs_dim, act_dim, hidden).items()}


def check_architecture(params: nn.Params):
    want = expected_shapes()
    got = {k: v.shape for k, v in params.items()}
    if got != want:
        missing = sorted(set(want) - set(got))
        wrong = sorted(k for k in set(want) & set(got) if want[k] != got[k])
        raise CheckpointError(
            f"checkpoint does not match the 2x64 actor/critic architecture "
            f"(missing={missing}, wrong_shape={wrong})"
        )


def dumps(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def save(path, payload: dict):
    """Write atomically; ``payload`` must already be JSON-ready."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(dumps({"format_version": FORMAT_VERSION, **payload}))
    os.replace(tmp, path)


def load(path) -> dict:
    data = json.loads(Path(path).read_text())
    version = data.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format {version!r}")
    return data


def load_params(path) -> nn.Params:
    params = decode_params(load(path)["params"])
    check_architecture(params)
    return params


def latest(directory) -> Path | None:
    files = sorted(Path(directory).glob("step_*.json"))
    return files[-1] if files else None
