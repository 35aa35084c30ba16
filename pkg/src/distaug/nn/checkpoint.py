"""Versioned binary container for networks and optimizer state.

Layout: 8-byte magic, little-endian u32 format version, u64 header
length, a canonical JSON header, then raw little-endian float64 blobs
in header order. Identical state always serializes to identical bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .network import Network
from .optim import OptimizerState

MAGIC = b"DAUGCKPT"
VERSION = 1


def save_container(path, meta: dict, arrays: dict):
    blobs, entries, offset = [], [], 0
    for name, arr in arrays.items():
        a = np.ascontiguousarray(arr, dtype="<f8")
        entries.append({"name": name, "shape": list(a.shape), "offset": offset, "nbytes": a.nbytes})
        blobs.append(a.tobytes())
        offset += a.nbytes
    header = json.dumps({"meta": meta, "arrays": entries}, sort_keys=True,
                        separators=(",", ":")).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", VERSION, len(header)))
        fh.write(header)
        for b in blobs:
            fh.write(b)


def load_container(path):
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise ValueError(f"{path}: not a distaug checkpoint")
    version, hlen = struct.unpack("<IQ", data[8:20])
    if version != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(data[20:20 + hlen].decode("utf-8"))
    base = 20 + hlen
    arrays = {}
    for e in header["arrays"]:
        start = base + e["offset"]
        buf = data[start:start + e["nbytes"]]
        arrays[e["name"]] = np.frombuffer(buf, dtype="<f8").reshape(e["shape"]).copy()
    return header["meta"], arrays


def network_meta(net: Network) -> dict:
    return {"name": net.name, "input_shape": list(net.input_shape) if net.input_shape else None,
            "layers": net.specs()}


def network_arrays(net: Network, prefix: str) -> dict:
    return {f"{prefix}/{n}": p for n, p in zip(net.param_names(), net.params)}


def network_from(meta: dict, arrays: dict, prefix: str) -> Network:
    shape = tuple(meta["input_shape"]) if meta["input_shape"] else None
    net = Network.from_specs(meta["layers"], shape, meta["name"])
    for n, p in zip(net.param_names(), net.params):
        np.copyto(p, arrays[f"{prefix}/{n}"])
    return net


def optimizer_meta(state: OptimizerState) -> dict:
    return {"learning_rate": state.learning_rate, "beta1": state.beta1, "beta2": state.beta2,
            "epsilon": state.epsilon, "step": state.step, "slots": len(state.m)}


def optimizer_arrays(state: OptimizerState, prefix: str) -> dict:
    out = {}
    for i, (m, v) in enumerate(zip(state.m, state.v)):
        out[f"{prefix}/m{i}"] = m
        out[f"{prefix}/v{i}"] = v
    return out


def optimizer_from(meta: dict, arrays: dict, prefix: str) -> OptimizerState:
    n = meta["slots"]
    return OptimizerState(meta["learning_rate"], meta["beta1"], meta["beta2"], meta["epsilon"],
                          [arrays[f"{prefix}/m{i}"] for i in range(n)],
                          [arrays[f"{prefix}/v{i}"] for i in range(n)], meta["step"])


def save_network(path, net: Network, optimizer: OptimizerState | None = None):
    meta = {"network": network_meta(net)}
    arrays = network_arrays(net, "net")
    if optimizer is not None:
        meta["optimizer"] = optimizer_meta(optimizer)
        arrays.update(optimizer_arrays(optimizer, "opt"))
    save_container(path, meta, arrays)


def load_network(path):
    meta, arrays = load_container(path)
    net = network_from(meta["network"], arrays, "net")
    opt = optimizer_from(meta["optimizer"], arrays, "opt") if "optimizer" in meta else None
    return net, opt
