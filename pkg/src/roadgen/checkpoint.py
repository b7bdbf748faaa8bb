"""Checkpoint container: "DRCK" magic, u16 version, u32 manifest length,
JSON manifest (tensor name -> shape/dtype/offset plus metadata), then raw
little-endian tensor payloads. Round trips are bit-exact.
"""

import json
import struct

import numpy as np

from .errors import (
    CheckpointIntegrityError,
    CheckpointTruncatedError,
    CheckpointVersionError,
)
from .nn.unet import ArchitectureDescriptor
from .training import Checkpoint

MAGIC = b"DRCK"
VERSION = 1

_ALLOWED_DTYPES = {"<f4", "<f8"}


def save_checkpoint(ck, path):
    """Serialize a Checkpoint to ``path``."""
    tensors = {}
    tensors.update(ck.params)
    tensors.update(ck.optimizer_state)

    entries = {}
    blobs = []
    offset = 0
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name])
        dt = "<f8" if arr.dtype == np.float64 else "<f4"
        arr = arr.astype(dt, copy=False)
        raw = arr.tobytes()
        entries[name] = {"shape": list(arr.shape), "dtype": dt, "offset": offset}
        blobs.append(raw)
        offset += len(raw)

    manifest = {
        "tensors": entries,
        "meta": {
            "descriptor": ck.descriptor.to_dict(),
            "schedule": ck.schedule,
            "step": ck.step,
            "optimizer_step": ck.optimizer_step,
            "config": ck.config,
            "normalization": ck.normalization,
            "param_names": sorted(ck.params),
        },
    }
    mbytes = json.dumps(manifest, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<H", VERSION))
        fh.write(struct.pack("<I", len(mbytes)))
        fh.write(mbytes)
        for b in blobs:
            fh.write(b)
    return path


def load_checkpoint(path):
    """Parse a checkpoint container, validating structure before payloads."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 10:
        raise CheckpointTruncatedError(f"{path}: file shorter than the fixed header")
    if data[:4] != MAGIC:
        raise CheckpointVersionError(f"{path}: bad magic {data[:4]!r}, expected {MAGIC!r}")
    (version,) = struct.unpack("<H", data[4:6])
    if version != VERSION:
        raise CheckpointVersionError(f"{path}: unsupported container version {version}")
    (mlen,) = struct.unpack("<I", data[6:10])
    if len(data) < 10 + mlen:
        raise CheckpointTruncatedError(f"{path}: manifest extends past end of file")
    try:
        manifest = json.loads(data[10:10 + mlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointIntegrityError(f"{path}: manifest is not valid JSON: {exc}") from exc

    payload = data[10 + mlen:]
    tensors = {}
    for name, ent in manifest.get("tensors", {}).items():
        dt = ent.get("dtype")
        if dt not in _ALLOWED_DTYPES:
            raise CheckpointIntegrityError(f"{path}: tensor {name!r} has dtype {dt!r}")
        shape = tuple(int(v) for v in ent["shape"])
        nbytes = int(np.prod(shape, dtype=np.int64)) * (8 if dt == "<f8" else 4)
        off = int(ent["offset"])
        if off < 0 or off + nbytes > len(payload):
            raise CheckpointIntegrityError(
                f"{path}: tensor {name!r} extends past end of file "
                f"(offset {off}, {nbytes} bytes, payload {len(payload)})"
            )
        tensors[name] = np.frombuffer(payload[off:off + nbytes], dtype=dt).reshape(shape).copy()

    meta = manifest.get("meta", {})
    try:
        descriptor = ArchitectureDescriptor.from_dict(meta["descriptor"])
        param_names = meta["param_names"]
        params = {n: tensors[n] for n in param_names}
        optimizer_state = {n: tensors[n] for n in tensors if n.startswith("adam.")}
        return Checkpoint(
            params=params,
            descriptor=descriptor,
            optimizer_state=optimizer_state,
            optimizer_step=int(meta["optimizer_step"]),
            schedule=meta["schedule"],
            step=int(meta["step"]),
            config=meta["config"],
            normalization=meta["normalization"],
        )
    except KeyError as exc:
        raise CheckpointIntegrityError(f"{path}: manifest missing entry {exc}") from exc
