"""Spatio-temporal token grid and block-sparse guidance masks.

A guidance mask is a nonnegative T x T matrix over ordered token pairs,
T = F*H*W. By construction it is block-sparse over frame pairs, so it is
stored as a dict of (source frame, target frame) -> dense (HW, HW) block.

GMSK file layout: magic ``GMSK``, version u16, T u32, block_dim u32,
branch tag u8, instance id i32, block count u32, then per block
row_block u32, col_block u32 and a dense little-endian f32 payload.
A JSON sidecar records the grid dimensions.
"""

from __future__ import annotations

import json
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BadMagic, GridMismatch, TruncatedPayload

MAGIC = b"GMSK"
VERSION = 1

BRANCH_TAGS = {"m": 0, "r": 1, "nr": 2, "sum": 3}
TAG_BRANCHES = {v: k for k, v in BRANCH_TAGS.items()}

COMPOSED_VALUE_CEILING = 4.0


@dataclass(frozen=True)
class TokenGrid:
    frames: int
    height: int
    width: int

    def __post_init__(self) -> None:
        if min(self.frames, self.height, self.width) < 1:
            raise ValueError("grid dimensions must be positive")

    @property
    def tokens_per_frame(self) -> int:
        return self.height * self.width

    @property
    def total_tokens(self) -> int:
        return self.frames * self.height * self.width

    def index(self, f: int, y: int, x: int) -> int:
        return (f * self.height + y) * self.width + x

    def coords(self, t: int) -> tuple[int, int, int]:
        f, rest = divmod(t, self.tokens_per_frame)
        y, x = divmod(rest, self.width)
        return f, y, x


@dataclass
class BlockSparseMask:
    grid: TokenGrid
    branch: str
    instance_id: int = -1
    blocks: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.branch not in BRANCH_TAGS:
            raise ValueError(f"unknown branch {self.branch!r}")

    def block(self, f_row: int, f_col: int) -> np.ndarray:
        n = self.grid.tokens_per_frame
        existing = self.blocks.get((f_row, f_col))
        if existing is not None:
            return existing
        return np.zeros((n, n), dtype=np.float32)

    def set_block(self, f_row: int, f_col: int, payload: np.ndarray) -> None:
        n = self.grid.tokens_per_frame
        payload = np.ascontiguousarray(payload, dtype=np.float32)
        if payload.shape != (n, n):
            raise GridMismatch(f"block shape {payload.shape} != ({n}, {n})")
        if np.any(payload):
            self.blocks[(f_row, f_col)] = payload
        else:
            self.blocks.pop((f_row, f_col), None)

    def to_dense(self, dtype=np.float64) -> np.ndarray:
        t = self.grid.total_tokens
        n = self.grid.tokens_per_frame
        dense = np.zeros((t, t), dtype=dtype)
        for (fr, fc), payload in self.blocks.items():
            dense[fr * n:(fr + 1) * n, fc * n:(fc + 1) * n] = payload
        return dense

    def nonzero_count(self) -> int:
        return int(sum(np.count_nonzero(b) for b in self.blocks.values()))

    def value_range(self) -> tuple[float, float]:
        """(min, max) over nonzero entries; (0, 0) for an empty mask."""
        values = [b[b != 0] for b in self.blocks.values() if np.any(b)]
        if not values:
            return 0.0, 0.0
        stacked = np.concatenate(values)
        return float(stacked.min()), float(stacked.max())

    def to_coo(self) -> tuple[np.ndarray, np.ndarray]:
        """Sparse COO view: (N, 2) int64 token-pair indices and N f32 values."""
        n = self.grid.tokens_per_frame
        idx_parts, val_parts = [], []
        for (fr, fc) in sorted(self.blocks):
            payload = self.blocks[(fr, fc)]
            rows, cols = np.nonzero(payload)
            idx = np.stack([rows + fr * n, cols + fc * n], axis=1).astype(np.int64)
            idx_parts.append(idx)
            val_parts.append(payload[rows, cols])
        if not idx_parts:
            return (np.zeros((0, 2), dtype=np.int64), np.zeros(0, dtype=np.float32))
        return np.concatenate(idx_parts), np.concatenate(val_parts)

    def save(self, path: str | Path) -> None:
        path = Path(path)
        n = self.grid.tokens_per_frame
        parts = [MAGIC, struct.pack("<HIIBiI", VERSION, self.grid.total_tokens, n,
                                    BRANCH_TAGS[self.branch], self.instance_id,
                                    len(self.blocks))]
        for (fr, fc) in sorted(self.blocks):
            parts.append(struct.pack("<II", fr, fc))
            parts.append(self.blocks[(fr, fc)].astype("<f4").tobytes())
        path.write_bytes(b"".join(parts))
        sidecar = {
            "frames": self.grid.frames,
            "height": self.grid.height,
            "width": self.grid.width,
            "branch": self.branch,
            "instance": self.instance_id,
            "blocks": len(self.blocks),
        }
        path.with_suffix(path.suffix + ".json").write_text(
            json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "BlockSparseMask":
        path = Path(path)
        raw = path.read_bytes()
        if len(raw) < 4 or raw[:4] != MAGIC:
            raise BadMagic(f"{path}: not a GMSK file")
        header_len = 4 + struct.calcsize("<HIIBiI")
        if len(raw) < header_len:
            raise TruncatedPayload(f"{path}: header truncated")
        _version, total, n, tag, instance, count = struct.unpack(
            "<HIIBiI", raw[4:header_len])
        if tag not in TAG_BRANCHES:
            raise BadMagic(f"{path}: unknown branch tag {tag}")
        sidecar_path = path.with_suffix(path.suffix + ".json")
        if sidecar_path.exists():
            side = json.loads(sidecar_path.read_text(encoding="utf-8"))
            grid = TokenGrid(side["frames"], side["height"], side["width"])
        else:
            # Without the sidecar only frames x (HW) is recoverable.
            grid = TokenGrid(total // n, 1, n)
        if grid.total_tokens != total or grid.tokens_per_frame != n:
            raise GridMismatch(f"{path}: sidecar grid disagrees with header")
        mask = cls(grid=grid, branch=TAG_BRANCHES[tag], instance_id=instance)
        offset = header_len
        block_bytes = 4 * n * n
        for _ in range(count):
            if len(raw) < offset + 8 + block_bytes:
                raise TruncatedPayload(f"{path}: block payload truncated")
            fr, fc = struct.unpack("<II", raw[offset:offset + 8])
            offset += 8
            payload = np.frombuffer(
                raw[offset:offset + block_bytes], dtype="<f4").reshape(n, n)
            offset += block_bytes
            mask.blocks[(fr, fc)] = payload.copy()
        return mask


def compose_masks(masks: list[BlockSparseMask]) -> BlockSparseMask:
    """Elementwise sum across branches and instances (additive guidance)."""
    if not masks:
        raise ValueError("no masks to compose")
    grid = masks[0].grid
    for m in masks[1:]:
        if m.grid != grid:
            raise GridMismatch(f"grid {m.grid} != {grid}")
    out = BlockSparseMask(grid=grid, branch="sum", instance_id=-1)
    for m in masks:
        for key, payload in m.blocks.items():
            if key in out.blocks:
                out.blocks[key] = out.blocks[key] + payload
            else:
                out.blocks[key] = payload.copy()
    peak = max((float(b.max()) for b in out.blocks.values()), default=0.0)
    if peak > COMPOSED_VALUE_CEILING:
        warnings.warn(
            f"composed mask has overlapping entries up to {peak:.3g} "
            f"(> {COMPOSED_VALUE_CEILING})", stacklevel=2)
    return out
