"""Flat-buffer bindings over the motionguide engine.

Three synchronous entry points for tensor-based pipelines:

- :func:`bind_plan_layout` -- prompt to per-frame box layout, as nested
  native structures.
- :func:`bind_compose_masks` -- layout + feature buffer to the composed
  guidance mask, as sparse COO (indices, values) buffers.
- :func:`bind_dit_biased_attention` -- biased attention over Q/K buffers.

Layout planning and mask composition shell out to the ``motionguide``
command-line interface and speak its file formats (layout JSON, FVOL
feature volumes, GMSK masks), so the engine itself is never imported.
The biased-attention scoring rule is small enough to evaluate directly
on the caller's buffers. Callers must not mutate input buffers during a
call.
"""

from __future__ import annotations

import json
import struct
import subprocess
import sys
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = ["BindingError", "BufferView", "bind_plan_layout",
           "bind_compose_masks", "bind_dit_biased_attention"]

__version__ = "0.1.0"

_DTYPES = {"f4": np.dtype("<f4"), "u1": np.dtype("u1")}

_FVOL_MAGIC = b"FVOL"
_GMSK_MAGIC = b"GMSK"
_FORMAT_VERSION = 1


class BindingError(RuntimeError):
    """Native-side failure, carrying the engine's error message."""


@dataclass(frozen=True)
class BufferView:
    """Contiguous row-major numeric buffer: shape + dtype + payload.

    ``dtype`` is ``"f4"`` (32-bit float, little-endian) or ``"u1"``
    (8-bit unsigned). ``payload`` holds exactly prod(shape) elements.
    """

    shape: tuple[int, ...]
    dtype: str
    payload: np.ndarray

    def __post_init__(self) -> None:
        if self.dtype not in _DTYPES:
            raise ValueError(f"dtype must be one of {sorted(_DTYPES)}")
        expected = int(np.prod(self.shape)) if self.shape else 1
        if self.payload.size != expected:
            raise ValueError(
                f"payload has {self.payload.size} elements, shape "
                f"{self.shape} needs {expected}")

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "BufferView":
        """Wrap an array; zero-copy when it is already contiguous f4/u1.

        Reuse can be asserted with ``np.shares_memory(arr, view.payload)``.
        """
        dtype = "u1" if arr.dtype == np.uint8 else "f4"
        data = np.ascontiguousarray(arr, dtype=_DTYPES[dtype]).reshape(-1)
        return cls(shape=tuple(arr.shape), dtype=dtype, payload=data)

    def to_array(self) -> np.ndarray:
        """Shaped zero-copy view of the payload."""
        return self.payload.view(_DTYPES[self.dtype]).reshape(self.shape)


def _run_cli(args: list[str]) -> None:
    proc = subprocess.run([sys.executable, "-m", "motionguide.cli", *args],
                          capture_output=True, text=True)
    if proc.returncode != 0:
        message = proc.stderr.strip() or proc.stdout.strip()
        raise BindingError(message.splitlines()[-1] if message else
                           f"engine exited with code {proc.returncode}")


def bind_plan_layout(prompt: str, frames: int) -> dict:
    """Plan a spatial-temporal layout; returns the native layout JSON
    as nested dicts/lists: {"frames": F, "tracks": [{"id", "category",
    "boxes": [[x0, y0, x1, y1], ...]}, ...]}.
    """
    with tempfile.TemporaryDirectory() as tmp:
        out = Path(tmp) / "layout.json"
        _run_cli(["plan", "--prompt", prompt, "--frames", str(frames),
                  "--out", str(out)])
        return json.loads(out.read_text(encoding="utf-8"))


def _write_fvol(features: BufferView, path: Path) -> None:
    if len(features.shape) != 4:
        raise BindingError(
            f"features must be (frames, height, width, channels), got "
            f"shape {features.shape}")
    if features.dtype != "f4":
        raise BindingError("features must be 32-bit float")
    f, h, w, c = features.shape
    header = _FVOL_MAGIC + struct.pack("<HIIII", _FORMAT_VERSION, f, h, w, c)
    path.write_bytes(header + features.payload.astype("<f4").tobytes())


def _read_gmsk_coo(path: Path) -> tuple[np.ndarray, np.ndarray]:
    raw = path.read_bytes()
    if raw[:4] != _GMSK_MAGIC:
        raise BindingError(f"{path}: not a GMSK file")
    header = struct.Struct("<HIIBiI")
    _version, _total, n, _tag, _instance, count = header.unpack(
        raw[4:4 + header.size])
    offset = 4 + header.size
    idx_parts, val_parts = [], []
    block_bytes = n * n * 4
    for _ in range(count):
        fr, fc = struct.unpack("<II", raw[offset:offset + 8])
        offset += 8
        payload = np.frombuffer(raw[offset:offset + block_bytes],
                                dtype="<f4").reshape(n, n)
        offset += block_bytes
        rows, cols = np.nonzero(payload)
        idx_parts.append(np.stack([rows + fr * n, cols + fc * n],
                                  axis=1).astype(np.int64))
        val_parts.append(payload[rows, cols])
    if not idx_parts:
        return (np.zeros((0, 2), dtype=np.int64), np.zeros(0, dtype=np.float32))
    return np.concatenate(idx_parts), np.concatenate(val_parts)


def bind_compose_masks(layout: dict, features: BufferView,
                       alpha: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Composed guidance mask for a layout, as sparse COO buffers.

    Returns ``(indices, values)``: an (N, 2) int64 array of token-pair
    coordinates over the T x T mask (T = frames * height * width) and
    the matching float32 values.
    """
    if len(features.shape) != 4:
        raise BindingError(
            f"features must be 4-d, got shape {features.shape}")
    if int(layout["frames"]) != features.shape[0]:
        raise BindingError(
            f"layout has {layout['frames']} frames, features "
            f"{features.shape[0]}")
    with tempfile.TemporaryDirectory() as tmp:
        root = Path(tmp)
        (root / "layout.json").write_text(json.dumps(layout), encoding="utf-8")
        _write_fvol(features, root / "features.fvol")
        _run_cli(["masks", "--layout", str(root / "layout.json"),
                  "--features", str(root / "features.fvol"),
                  "--alpha", str(alpha), "--out", str(root / "out")])
        return _read_gmsk_coo(root / "out" / "mask_sum.gmsk")


def bind_dit_biased_attention(q: BufferView, k: BufferView,
                              mask_indices: np.ndarray,
                              mask_values: np.ndarray,
                              beta: float) -> BufferView:
    """Row-stochastic softmax(Q K^T (1 + beta * G) / sqrt(d)).

    ``G`` is given sparsely as (N, 2) token-pair indices plus values
    over the T x T mask. Returns a (T, T) f4 attention buffer.
    """
    if len(q.shape) != 2 or len(k.shape) != 2:
        raise BindingError("Q and K must be (tokens, head_dim) buffers")
    if q.shape != k.shape:
        raise BindingError(f"Q shape {q.shape} != K shape {k.shape}")
    t, d = q.shape
    indices = np.asarray(mask_indices, dtype=np.int64).reshape(-1, 2)
    if indices.size and indices.max() >= t:
        raise BindingError(
            f"mask index {indices.max()} out of range for {t} tokens")
    mask = np.zeros((t, t), dtype=np.float64)
    mask[indices[:, 0], indices[:, 1]] = np.asarray(mask_values,
                                                    dtype=np.float64)
    logits = q.to_array().astype(np.float64) @ k.to_array().astype(np.float64).T
    logits = logits * (1.0 + beta * mask) / np.sqrt(d)
    logits -= logits.max(axis=1, keepdims=True)
    e = np.exp(logits)
    attn = e / e.sum(axis=1, keepdims=True)
    return BufferView.from_array(attn.astype(np.float32))
