"""Artifact file formats.

Checkpoints are a flat binary container of named arrays:

    magic  b"ERSCKPT"            7 bytes
    version u32 little-endian    currently 1
    count   u32                  number of arrays
    then per array:
      name_len u16, name utf-8 bytes,
      dtype    u8   (0=float64, 1=int64, 2=int32, 3=bool),
      ndim     u8,  dims u32 * ndim,
      payload  C-order little-endian bytes

Beliefs and finite-mixture posteriors are exchanged as JSON documents (see
`load_belief_or_posterior`).
"""
from __future__ import annotations

import json
import struct

import numpy as np

from .klearning import BeliefMDP, FiniteMixturePosterior
from .mdp import TabularMDP

MAGIC = b"ERSCKPT"
VERSION = 1
_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<i8"), 2: np.dtype("<i4"), 3: np.dtype("|b1")}
_CODES = {v: k for k, v in _DTYPES.items()}


def save_checkpoint(path, arrays: dict[str, np.ndarray]):
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        f.write(struct.pack("<I", len(arrays)))
        for name, arr in arrays.items():
            arr = np.ascontiguousarray(arr)
            code = _CODES.get(arr.dtype.newbyteorder("<") if arr.dtype.byteorder == ">" else arr.dtype)
            if code is None:
                raise ValueError(f"unsupported dtype {arr.dtype} for {name!r}")
            nb = name.encode("utf-8")
            f.write(struct.pack("<H", len(nb)))
            f.write(nb)
            f.write(struct.pack("<BB", code, arr.ndim))
            for d in arr.shape:
                f.write(struct.pack("<I", d))
            f.write(arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes(order="C"))


def load_checkpoint(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as f:
        if f.read(len(MAGIC)) != MAGIC:
            raise ValueError("not a checkpoint file")
        (version,) = struct.unpack("<I", f.read(4))
        if version != VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        (count,) = struct.unpack("<I", f.read(4))
        out = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<H", f.read(2))
            name = f.read(nlen).decode("utf-8")
            code, ndim = struct.unpack("<BB", f.read(2))
            shape = tuple(struct.unpack("<I", f.read(4))[0] for _ in range(ndim))
            dt = _DTYPES[code]
            n = int(np.prod(shape)) if shape else 1
            arr = np.frombuffer(f.read(n * dt.itemsize), dtype=dt).reshape(shape)
            out[name] = arr.copy()
        return out


# ---------------------------------------------------------------------------

def _mdp_from_json(doc: dict, sizes, A, rho) -> TabularMDP:
    rewards = [np.asarray(r, dtype=np.float64) for r in doc["rewards"]]
    transitions = [np.asarray(p, dtype=np.float64) for p in doc["transitions"]]
    return TabularMDP(len(sizes), list(sizes), A, transitions, rewards,
                      np.asarray(rho, dtype=np.float64),
                      float(doc.get("reward_noise_scale", 0.0)))


def load_belief_or_posterior(path):
    """Read a JSON belief or posterior document.

    Common keys: kind ("belief"|"posterior"), layer_sizes, num_actions,
    initial_dist, sigma2 (scalar or per-layer (s, a) nested lists).
    A belief carries mean_rewards and mean_transitions; a posterior carries
    weights and members (each with rewards/transitions).
    """
    with open(path) as f:
        doc = json.load(f)
    sizes = [int(x) for x in doc["layer_sizes"]]
    A = int(doc["num_actions"])
    rho = np.asarray(doc["initial_dist"], dtype=np.float64)
    sigma2 = doc["sigma2"]
    if not np.isscalar(sigma2):
        sigma2 = [np.asarray(s, dtype=np.float64) for s in sigma2]
    if doc["kind"] == "belief":
        return BeliefMDP(
            horizon=len(sizes), layer_sizes=sizes, num_actions=A,
            mean_rewards=[np.asarray(r, dtype=np.float64) for r in doc["mean_rewards"]],
            mean_transitions=[np.asarray(p, dtype=np.float64) for p in doc["mean_transitions"]],
            sigma2=sigma2 if not np.isscalar(sigma2)
            else [np.full((n, A), float(sigma2)) for n in sizes],
            initial_dist=rho,
        )
    if doc["kind"] == "posterior":
        members = [_mdp_from_json(m, sizes, A, rho) for m in doc["members"]]
        return FiniteMixturePosterior(members=members,
                                      weights=np.asarray(doc["weights"], dtype=np.float64),
                                      sigma2=sigma2)
    raise ValueError(f"unknown kind {doc['kind']!r}")


def dump_belief(belief: BeliefMDP) -> dict:
    return {
        "kind": "belief",
        "layer_sizes": belief.layer_sizes,
        "num_actions": belief.num_actions,
        "initial_dist": belief.initial_dist.tolist(),
        "mean_rewards": [r.tolist() for r in belief.mean_rewards],
        "mean_transitions": [p.tolist() for p in belief.mean_transitions],
        "sigma2": [s.tolist() for s in belief.sigma2],
    }


def dump_posterior(post: FiniteMixturePosterior) -> dict:
    m0 = post.members[0]
    return {
        "kind": "posterior",
        "layer_sizes": list(m0.layer_sizes),
        "num_actions": m0.num_actions,
        "initial_dist": m0.initial_dist.tolist(),
        "weights": post.weights.tolist(),
        "members": [
            {"rewards": [r.tolist() for r in m.rewards],
             "transitions": [p.tolist() for p in m.transitions],
             "reward_noise_scale": m.reward_noise_scale}
            for m in post.members
        ],
        "sigma2": [s.tolist() for s in post.sigma2],
    }
