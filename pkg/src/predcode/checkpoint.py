"""Model checkpoints: one binary file plus a JSON sidecar descriptor.

Layout of the binary file (little-endian):

    magic   8 bytes  b"PCNETCKP"
    version u32      currently 1
    hlen    u32      byte length of the UTF-8 JSON header that follows
    header  hlen bytes
    blobs   row-major float64 parameter data, (W, b) per layer in order,
            then the latent prior mean when one is enabled

The header carries the architecture (dims, activation names, mode,
output energy kind, variance scale, prior flag); the sidecar repeats it
with blob offsets for external tools. Round-trips are bit-exact.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .network import PCNetwork

MAGIC = b"PCNETCKP"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _header(net: PCNetwork) -> dict:
    return {
        "dims": list(net.dims),
        "activations": [layer.activation.name for layer in net.layers],
        "mode": net.mode,
        "output_energy": net.output_vode.energy_kind,
        "sigma2_output": net.sigma2_output,
        "latent_prior": bool(net.prior is not None and net.prior.enabled),
        "dtype": "float64",
    }


def save_checkpoint(net: PCNetwork, path: str) -> str:
    """Write the network parameters; returns the sidecar path."""
    header = _header(net)
    blobs = [np.ascontiguousarray(p, dtype=np.float64)
             for p in net.param_arrays()]
    offsets = []
    header_bytes = json.dumps(header, sort_keys=True).encode()
    cursor = len(MAGIC) + 8 + len(header_bytes)
    for blob in blobs:
        offsets.append({"offset": cursor, "shape": list(blob.shape)})
        cursor += blob.nbytes
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(header_bytes)))
        f.write(header_bytes)
        for blob in blobs:
            f.write(blob.tobytes())
    sidecar = path + ".json"
    with open(sidecar, "w") as f:
        json.dump({"format": MAGIC.decode(), "version": VERSION,
                   "header": header, "blobs": offsets}, f, indent=2)
        f.write("\n")
    return sidecar


def load_checkpoint(path: str) -> PCNetwork:
    """Rebuild a network from a checkpoint file, parameters bit-exact."""
    with open(path, "rb") as f:
        magic = f.read(len(MAGIC))
        if magic != MAGIC:
            raise CheckpointError(f"{path}: bad magic {magic!r}")
        version, hlen = struct.unpack("<II", f.read(8))
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported version {version}")
        header = json.loads(f.read(hlen).decode())
        net = PCNetwork(
            header["dims"],
            activations=header["activations"],
            mode=header["mode"],
            output_energy=header["output_energy"],
            sigma2_output=header["sigma2_output"],
            latent_prior=header["latent_prior"],
            rng=0,
        )
        for p in net.param_arrays():
            raw = f.read(p.nbytes)
            if len(raw) != p.nbytes:
                raise CheckpointError(f"{path}: truncated parameter data")
            p[...] = np.frombuffer(raw, dtype=np.float64).reshape(p.shape)
        trailing = f.read(1)
        if trailing:
            raise CheckpointError(f"{path}: unexpected trailing data")
    net.invalidate()
    return net
