"""Checkpointing: networks plus small metadata in one container file.

A checkpoint stores, per named network, the layer specs (enough to rebuild
the graph) and every parameter and buffer array.  ``extra`` holds small
JSON-safe state such as config echoes or rescaler bounds.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import container
from .nn.layers import LayerSpec
from .nn.network import Network

CHECKPOINT_KINDS = ("simclr", "byol", "autoencoder", "supervised")


@dataclass
class Checkpoint:
    kind: str
    networks: dict[str, Network]
    extra: dict = field(default_factory=dict)


def save_checkpoint(path, kind: str, networks: dict[str, Network],
                    extra: dict | None = None):
    if kind not in CHECKPOINT_KINDS:
        raise ValueError(f"unknown checkpoint kind {kind!r}")
    arrays: dict[str, np.ndarray] = {}
    described = {}
    for name in sorted(networks):
        if "/" in name:
            raise ValueError(f"network name {name!r} may not contain '/'")
        net = networks[name]
        described[name] = {
            "input_kind": net.input_kind,
            "specs": [{"kind": s.kind, "params": s.params} for s in net.specs()],
        }
        for pname, value in net.params().items():
            arrays[f"{name}/p/{pname}"] = value
        for bname, value in net.buffers().items():
            arrays[f"{name}/b/{bname}"] = value
    meta = {"kind": kind, "networks": described, "extra": extra or {}}
    container.save_arrays(path, arrays, meta)


def load_checkpoint(path) -> Checkpoint:
    arrays, meta = container.load_arrays(path)
    if meta.get("kind") not in CHECKPOINT_KINDS:
        raise container.ContainerError(f"{path}: not a checkpoint file")
    networks = {}
    for name, desc in meta["networks"].items():
        specs = [LayerSpec(d["kind"], dict(d["params"])) for d in desc["specs"]]
        net = Network.from_specs(specs, desc["input_kind"],
                                 rng=np.random.default_rng(0))
        prefix_p = f"{name}/p/"
        prefix_b = f"{name}/b/"
        net.set_params({k[len(prefix_p):]: v for k, v in arrays.items()
                        if k.startswith(prefix_p)})
        buffers = net.buffers()
        for k, v in arrays.items():
            if k.startswith(prefix_b):
                bname = k[len(prefix_b):]
                if bname not in buffers:
                    raise container.ContainerError(f"unknown buffer {bname!r}")
                np.copyto(buffers[bname], v)
        networks[name] = net
    return Checkpoint(meta["kind"], networks, meta.get("extra", {}))
