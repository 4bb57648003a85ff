"""Feature volumes: the FVOL file format and the synthetic scene backend.

FVOL layout: magic ``FVOL`` (4 bytes), version u16, then F, H, W, C as
little-endian u32, then F*H*W*C little-endian f32 values, row-major.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BadMagic, DimOverflow, TruncatedPayload
from .layout import BoundingBox, SceneLayout

MAGIC = b"FVOL"
VERSION = 1
MAX_ELEMENTS = 2**31  # payload must stay addressable as a 32-bit count


@dataclass
class FeatureVolume:
    data: np.ndarray  # (F, H, W, C) float32

    def __post_init__(self) -> None:
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        if self.data.ndim != 4:
            raise ValueError("feature volume must be F x H x W x C")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("feature volume contains non-finite values")

    @property
    def frames(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def channels(self) -> int:
        return self.data.shape[3]


def pixel_rect(box: BoundingBox, height: int, width: int) -> tuple[int, int, int, int]:
    """Half-open pixel rectangle (x0, y0, x1, y1) of a normalized box.

    A pixel belongs to the box iff its center does, so a box narrower
    than one pixel can cover no pixels at all.
    """
    x0 = max(0, int(np.ceil(box.x_min * width - 0.5 - 1e-9)))
    y0 = max(0, int(np.ceil(box.y_min * height - 0.5 - 1e-9)))
    x1 = min(width, int(np.floor(box.x_max * width - 0.5 + 1e-9)) + 1)
    y1 = min(height, int(np.floor(box.y_max * height - 0.5 + 1e-9)) + 1)
    return x0, y0, x1, y1


@dataclass
class SyntheticSceneSpec:
    layout: SceneLayout
    seed: int
    noise_scale: float = 0.0
    signatures: dict[int, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.noise_scale < 0:
            raise ValueError("noise_scale must be nonnegative")
        sigs = {k: np.asarray(v, dtype=np.float32) for k, v in self.signatures.items()}
        self.signatures = sigs
        vecs: list[np.ndarray] = list(sigs.values())
        if vecs:
            vecs.append(np.zeros_like(vecs[0]))  # background signature
        for i in range(len(vecs)):
            for j in range(i + 1, len(vecs)):
                dist = float(np.linalg.norm(vecs[i] - vecs[j]))
                if dist <= 4.0 * self.noise_scale:
                    raise ValueError(
                        "instance signatures are not separated: pairwise distance "
                        f"{dist:.4g} <= 4 x noise_scale")


def default_signatures(layout: SceneLayout, channels: int) -> dict[int, np.ndarray]:
    """One distinct axis-aligned signature per track (scaled basis vectors)."""
    sigs: dict[int, np.ndarray] = {}
    for k, track in enumerate(layout.tracks):
        v = np.zeros(channels, dtype=np.float32)
        v[k % channels] = 1.0 + k // channels
        sigs[track.instance_id] = v
    return sigs


def synthesize_features(spec: SyntheticSceneSpec, height: int,
                        width: int, channels: int | None = None) -> FeatureVolume:
    """Stamp per-instance signatures into boxes over seeded Gaussian noise.

    Later tracks paint over earlier ones; overlaps are reported with a
    warning rather than failing.
    """
    layout = spec.layout
    if channels is None:
        channels = int(max((s.shape[0] for s in spec.signatures.values()), default=4))
    rng = np.random.default_rng(spec.seed)
    data = rng.standard_normal(
        (layout.frames, height, width, channels)).astype(np.float32) * spec.noise_scale

    for f in range(layout.frames):
        painted = np.zeros((height, width), dtype=bool)
        for track in layout.tracks:
            sig = spec.signatures.get(track.instance_id)
            if sig is None:
                continue
            x0, y0, x1, y1 = pixel_rect(track.boxes[f], height, width)
            if x1 <= x0 or y1 <= y0:
                continue
            if painted[y0:y1, x0:x1].any():
                warnings.warn(
                    f"overlapping instance boxes in frame {f}; "
                    f"track {track.instance_id} painted on top",
                    stacklevel=2)
            data[f, y0:y1, x0:x1, :] += sig[: channels]
            painted[y0:y1, x0:x1] = True
    return FeatureVolume(data)


def save_volume(volume: FeatureVolume, path: str | Path) -> None:
    f, h, w, c = volume.data.shape
    header = MAGIC + struct.pack("<HIIII", VERSION, f, h, w, c)
    payload = volume.data.astype("<f4").tobytes()
    Path(path).write_bytes(header + payload)


def load_volume(path: str | Path) -> FeatureVolume:
    raw = Path(path).read_bytes()
    if len(raw) < 4 or raw[:4] != MAGIC:
        raise BadMagic(f"{path}: not an FVOL file")
    if len(raw) < 22:
        raise TruncatedPayload(f"{path}: header truncated")
    _version, f, h, w, c = struct.unpack("<HIIII", raw[4:22])
    n = f * h * w * c
    if n > MAX_ELEMENTS:
        raise DimOverflow(f"{path}: {n} elements exceed the supported maximum")
    expected = 22 + 4 * n
    if len(raw) < expected:
        raise TruncatedPayload(
            f"{path}: payload is {len(raw) - 22} bytes, expected {4 * n}")
    data = np.frombuffer(raw[22:expected], dtype="<f4").reshape(f, h, w, c)
    return FeatureVolume(data.copy())
