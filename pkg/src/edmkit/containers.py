"""Binary and JSON container formats for batches of matrices, trajectories and masks.

All binary containers are little-endian with a 4-byte ASCII magic followed by a
u32 format version (currently 1). Payload floats are stored as f32 row-major;
callers get float64 arrays back.

Formats:
  EDMD  distance-matrix batch   header (count, n, hurst f64, flags u32) + count*n*n f32
  TRAJ  trajectory batch        header (count, n, dim, hurst f64, step_scale f64) + count*n*dim f32
  MASK  mask batch              header (count, n) + bit-packed rows (MSB-first, each row
                                padded to a byte boundary)
  PCAE  PCA embedding           header (k, d) + mean (d f32) + basis (k*d f32)
  EPSW  epsilon-predictor       header + u32-length-prefixed JSON manifest + raw f32
                                tensor blob addressed by byte offsets in the manifest

Single matrices and masks can also travel as JSON: {"matrix": [[...]]} with
optional "squared"/"hurst" keys, and {"mask": [[...]]}.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass

import numpy as np

FORMAT_VERSION = 1

_EDMD_FLAG_SQUARED = 1


class ContainerError(ValueError):
    """Raised on malformed container files (bad magic, truncation, size mismatch)."""


def atomic_write_bytes(path, payload: bytes) -> None:
    """Write payload to path atomically (temp file in the same dir + rename)."""
    d = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def _read_exact(fh, nbytes, what):
    buf = fh.read(nbytes)
    if len(buf) != nbytes:
        raise ContainerError(f"truncated container: expected {nbytes} bytes for {what}, got {len(buf)}")
    return buf


def _check_magic(fh, magic: bytes):
    got = _read_exact(fh, 4, "magic")
    if got != magic:
        raise ContainerError(f"bad magic: expected {magic!r}, got {got!r}")
    (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
    if version != FORMAT_VERSION:
        raise ContainerError(f"unsupported {magic.decode()} version {version}")
    return version


# ---------------------------------------------------------------------------
# EDMD: batches of n x n matrices

def save_edm_batch(path, values, hurst=None, squared=True) -> None:
    """Write a (count, n, n) batch of distance matrices as an EDMD container."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 2:
        values = values[None]
    if values.ndim != 3 or values.shape[1] != values.shape[2]:
        raise ValueError(f"expected (count, n, n) array, got shape {values.shape}")
    count, n, _ = values.shape
    flags = _EDMD_FLAG_SQUARED if squared else 0
    head = b"EDMD" + struct.pack("<IIIdI", FORMAT_VERSION, count, n,
                                 float("nan") if hurst is None else float(hurst), flags)
    atomic_write_bytes(path, head + values.astype("<f4").tobytes())


@dataclass
class EdmBatch:
    values: np.ndarray  # (count, n, n) float64
    hurst: float | None
    squared: bool

    @property
    def count(self):
        return self.values.shape[0]

    @property
    def n(self):
        return self.values.shape[1]


def load_edm_batch(path) -> EdmBatch:
    with open(path, "rb") as fh:
        _check_magic(fh, b"EDMD")
        count, n = struct.unpack("<II", _read_exact(fh, 8, "count/n"))
        (hurst,) = struct.unpack("<d", _read_exact(fh, 8, "hurst"))
        (flags,) = struct.unpack("<I", _read_exact(fh, 4, "flags"))
        raw = _read_exact(fh, count * n * n * 4, "matrix data")
    values = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(count, n, n)
    return EdmBatch(values=values, hurst=None if np.isnan(hurst) else hurst,
                    squared=bool(flags & _EDMD_FLAG_SQUARED))


# ---------------------------------------------------------------------------
# TRAJ: batches of (n, dim) trajectories

def save_trajectory_batch(path, trajectories, hurst, step_scale=1.0) -> None:
    trajectories = np.asarray(trajectories, dtype=np.float64)
    if trajectories.ndim != 3:
        raise ValueError(f"expected (count, n, dim) array, got shape {trajectories.shape}")
    count, n, dim = trajectories.shape
    head = b"TRAJ" + struct.pack("<IIIIdd", FORMAT_VERSION, count, n, dim,
                                 float("nan") if hurst is None else float(hurst), float(step_scale))
    atomic_write_bytes(path, head + trajectories.astype("<f4").tobytes())


@dataclass
class TrajectoryBatch:
    values: np.ndarray  # (count, n, dim) float64
    hurst: float | None
    step_scale: float


def load_trajectory_batch(path) -> TrajectoryBatch:
    with open(path, "rb") as fh:
        _check_magic(fh, b"TRAJ")
        count, n, dim = struct.unpack("<III", _read_exact(fh, 12, "count/n/dim"))
        hurst, step_scale = struct.unpack("<dd", _read_exact(fh, 16, "hurst/step_scale"))
        raw = _read_exact(fh, count * n * dim * 4, "trajectory data")
    values = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(count, n, dim)
    return TrajectoryBatch(values=values, hurst=None if np.isnan(hurst) else hurst,
                           step_scale=step_scale)


# ---------------------------------------------------------------------------
# MASK: batches of binary masks, bit-packed per row

def save_mask_batch(path, bits) -> None:
    bits = np.asarray(bits)
    if bits.ndim == 2:
        bits = bits[None]
    if bits.ndim != 3 or bits.shape[1] != bits.shape[2]:
        raise ValueError(f"expected (count, n, n) mask array, got shape {bits.shape}")
    if not np.isin(bits, (0, 1)).all():
        raise ValueError("mask entries must be 0 or 1")
    count, n, _ = bits.shape
    # packbits pads each row to a byte boundary, MSB-first
    packed = np.packbits(bits.astype(np.uint8), axis=-1)
    atomic_write_bytes(path, b"MASK" + struct.pack("<III", FORMAT_VERSION, count, n) + packed.tobytes())


def load_mask_batch(path) -> np.ndarray:
    with open(path, "rb") as fh:
        _check_magic(fh, b"MASK")
        count, n = struct.unpack("<II", _read_exact(fh, 8, "count/n"))
        row_bytes = (n + 7) // 8
        raw = _read_exact(fh, count * n * row_bytes, "mask data")
    packed = np.frombuffer(raw, dtype=np.uint8).reshape(count, n, row_bytes)
    bits = np.unpackbits(packed, axis=-1)[:, :, :n]
    return bits.astype(np.uint8)


# ---------------------------------------------------------------------------
# PCAE: serialized linear embedding (mean + basis)

def save_embedding_arrays(path, mean, basis) -> None:
    mean = np.asarray(mean, dtype=np.float64).ravel()
    basis = np.asarray(basis, dtype=np.float64)
    if basis.ndim != 2 or basis.shape[1] != mean.shape[0]:
        raise ValueError(f"basis shape {basis.shape} incompatible with mean length {mean.shape[0]}")
    k, d = basis.shape
    head = b"PCAE" + struct.pack("<III", FORMAT_VERSION, k, d)
    atomic_write_bytes(path, head + mean.astype("<f4").tobytes() + basis.astype("<f4").tobytes())


def load_embedding_arrays(path):
    with open(path, "rb") as fh:
        _check_magic(fh, b"PCAE")
        k, d = struct.unpack("<II", _read_exact(fh, 8, "k/d"))
        mean = np.frombuffer(_read_exact(fh, d * 4, "mean"), dtype="<f4").astype(np.float64)
        basis = np.frombuffer(_read_exact(fh, k * d * 4, "basis"), dtype="<f4").astype(np.float64).reshape(k, d)
    return mean, basis


# ---------------------------------------------------------------------------
# EPSW: epsilon-predictor weights

def save_epsw(path, manifest: dict, tensors: dict) -> None:
    """Write an EPSW weight container.

    The manifest's tensor table is rebuilt from `tensors` (dict name -> array);
    any existing "tensors" key in `manifest` is replaced. Offsets are byte
    offsets into the blob that follows the manifest.
    """
    manifest = dict(manifest)
    table = []
    blob = bytearray()
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        table.append({"name": name, "shape": list(arr.shape), "dtype": "f32", "offset": len(blob)})
        blob += arr.tobytes()
    manifest["tensors"] = table
    mbytes = json.dumps(manifest).encode("utf-8")
    head = b"EPSW" + struct.pack("<II", FORMAT_VERSION, len(mbytes))
    atomic_write_bytes(path, head + mbytes + bytes(blob))


def load_epsw(path):
    """Read an EPSW container. Returns (manifest dict, tensors dict name -> f32 array)."""
    with open(path, "rb") as fh:
        _check_magic(fh, b"EPSW")
        (mlen,) = struct.unpack("<I", _read_exact(fh, 4, "manifest length"))
        try:
            manifest = json.loads(_read_exact(fh, mlen, "manifest"))
        except json.JSONDecodeError as e:
            raise ContainerError(f"bad EPSW manifest JSON: {e}") from e
        blob = fh.read()
    tensors = {}
    for entry in manifest.get("tensors", []):
        shape = tuple(entry["shape"])
        if entry.get("dtype", "f32") != "f32":
            raise ContainerError(f"unsupported tensor dtype {entry['dtype']!r} for {entry['name']!r}")
        nbytes = int(np.prod(shape)) * 4 if shape else 4
        off = entry["offset"]
        if off + nbytes > len(blob):
            raise ContainerError(f"tensor {entry['name']!r} overruns blob "
                                 f"(offset {off} + {nbytes} > {len(blob)})")
        tensors[entry["name"]] = np.frombuffer(blob, dtype="<f4", count=int(np.prod(shape)),
                                               offset=off).reshape(shape).astype(np.float32)
    return manifest, tensors


# ---------------------------------------------------------------------------
# JSON single matrix / mask

def save_matrix_json(path, values, squared=True, hurst=None) -> None:
    values = np.asarray(values, dtype=np.float64)
    doc = {"matrix": values.tolist(), "squared": bool(squared)}
    if hurst is not None:
        doc["hurst"] = float(hurst)
    atomic_write_text(path, json.dumps(doc))


def load_matrix_json(path):
    with open(path) as fh:
        doc = json.load(fh)
    if "matrix" not in doc:
        raise ContainerError('JSON matrix file must have a "matrix" key')
    values = np.asarray(doc["matrix"], dtype=np.float64)
    if values.ndim != 2 or values.shape[0] != values.shape[1]:
        raise ContainerError(f"JSON matrix must be square, got shape {values.shape}")
    return values, {"squared": bool(doc.get("squared", True)), "hurst": doc.get("hurst")}


def save_mask_json(path, bits) -> None:
    bits = np.asarray(bits, dtype=int)
    atomic_write_text(path, json.dumps({"mask": bits.tolist()}))


def load_mask_json(path):
    with open(path) as fh:
        doc = json.load(fh)
    if "mask" not in doc:
        raise ContainerError('JSON mask file must have a "mask" key')
    bits = np.asarray(doc["mask"], dtype=np.uint8)
    if bits.ndim != 2 or bits.shape[0] != bits.shape[1]:
        raise ContainerError(f"JSON mask must be square, got shape {bits.shape}")
    if not np.isin(bits, (0, 1)).all():
        raise ContainerError("mask entries must be 0 or 1")
    return bits
