"""Guidance engine: layouts + feature volumes -> cross-frame guidance masks.

Three branches by motion category:
  - motionless: anchor every frame's in-box pixels to a reference frame;
  - rigid: shape-template foreground pairs weighted by a center-distance
    penalty (exp(-alpha * d) + 1);
  - non-rigid: raw foreground pairs weighted by agreement between
    feature-matched and box-induced deformation fields.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateBox, EmptyForeground, EmptyTemplate, GridMismatch, WrongCategory
from .features import FeatureVolume, pixel_rect
from .graph import MotionCategory
from .layout import BoundingBox, SceneLayout, Track
from .masks import BlockSparseMask, TokenGrid, compose_masks

DEFAULT_ALPHA = 1.0
KMEANS_MAX_ITER = 50


# -- reference frame ---------------------------------------------------------

def frame_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Mean per-pixel L2 distance between two (H, W, C) feature frames."""
    return float(np.mean(np.linalg.norm(
        a.astype(np.float64) - b.astype(np.float64), axis=-1)))


def select_reference_frame(features: FeatureVolume,
                           metric=frame_distance) -> int:
    """Frame minimizing the summed distance to all frames (first on ties)."""
    frames = features.data
    total = np.zeros(features.frames)
    for f in range(features.frames):
        for f2 in range(features.frames):
            total[f] += metric(frames[f], frames[f2])
    return int(np.argmin(total))


# -- motionless branch -------------------------------------------------------

def build_motionless_mask(track: Track, f_star: int,
                          grid: TokenGrid) -> BlockSparseMask:
    """Indicator mask: in-box token (x, y, f) attends to (x, y, f*) only."""
    if track.category is not MotionCategory.MOTIONLESS:
        raise WrongCategory(
            f"track {track.instance_id} is {track.category.value}, not motionless")
    mask = BlockSparseMask(grid=grid, branch="m", instance_id=track.instance_id)
    x0, y0, x1, y1 = pixel_rect(track.boxes[0], grid.height, grid.width)
    if x1 <= x0 or y1 <= y0:
        warnings.warn(
            f"track {track.instance_id}: box covers no pixel; motionless mask empty",
            stacklevel=2)
        return mask
    n = grid.tokens_per_frame
    diag = np.zeros(n, dtype=np.float32)
    in_box = np.zeros((grid.height, grid.width), dtype=bool)
    in_box[y0:y1, x0:x1] = True
    diag[in_box.reshape(-1)] = 1.0
    block = np.diag(diag).astype(np.float32)
    for f in range(grid.frames):
        mask.set_block(f, f_star, block)
    return mask


# -- foreground segmentation -------------------------------------------------

def _farthest_pair(points: np.ndarray) -> tuple[int, int, float]:
    """Indices of the two points at maximal L2 distance (first on ties)."""
    n = len(points)
    best = (0, 1 if n > 1 else 0)
    best_d = -1.0
    for i in range(n - 1):
        d = np.linalg.norm(points[i + 1:] - points[i], axis=1)
        j = int(np.argmax(d))
        if d[j] > best_d:
            best_d = float(d[j])
            best = (i, i + 1 + j)
    return best[0], best[1], best_d


def _ring_mean(frame: np.ndarray, x0: int, y0: int, x1: int, y1: int) -> np.ndarray:
    """Mean feature over the 1-pixel outer ring of a rect (frame mean if none)."""
    h, w, _ = frame.shape
    ring = np.zeros((h, w), dtype=bool)
    rx0, ry0 = max(0, x0 - 1), max(0, y0 - 1)
    rx1, ry1 = min(w, x1 + 1), min(h, y1 + 1)
    ring[ry0:ry1, rx0:rx1] = True
    ring[y0:y1, x0:x1] = False
    if not ring.any():
        return frame.reshape(-1, frame.shape[-1]).mean(axis=0)
    return frame[ring].mean(axis=0)


def segment_foreground(features: FeatureVolume, box: BoundingBox,
                       frame: int) -> np.ndarray:
    """2-means foreground mask over the in-box pixels of one frame.

    Deterministic farthest-pair seeding; the cluster whose centroid lies
    farther from the box's outer-ring mean feature is foreground. Returns
    an (H, W) boolean mask, set only inside the box.
    """
    h, w = features.height, features.width
    x0, y0, x1, y1 = pixel_rect(box, h, w)
    npix = (x1 - x0) * (y1 - y0)
    if npix < 2:
        raise DegenerateBox(f"box covers {npix} pixel(s); need at least 2")
    frame_data = features.data[frame].astype(np.float64)
    patch = frame_data[y0:y1, x0:x1].reshape(npix, -1)

    mask = np.zeros((h, w), dtype=bool)
    i0, i1, max_d = _farthest_pair(patch)
    if max_d == 0.0:
        warnings.warn("uniform in-box features; whole box labeled foreground",
                      stacklevel=2)
        mask[y0:y1, x0:x1] = True
        return mask

    centroids = np.stack([patch[i0], patch[i1]])
    assign = None
    for _iteration in range(KMEANS_MAX_ITER):
        dists = np.linalg.norm(patch[:, None, :] - centroids[None, :, :], axis=2)
        new_assign = np.argmin(dists, axis=1)
        if assign is not None and np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for k in (0, 1):
            members = patch[assign == k]
            if len(members):
                centroids[k] = members.mean(axis=0)

    ring = _ring_mean(frame_data, x0, y0, x1, y1)
    fg_cluster = int(np.argmax(np.linalg.norm(centroids - ring, axis=1)))
    local = (assign == fg_cluster).reshape(y1 - y0, x1 - x0)
    mask[y0:y1, x0:x1] = local
    return mask


# -- shape template ----------------------------------------------------------

def build_shape_template(coarse_masks: list[np.ndarray],
                         boxes: list[BoundingBox],
                         grid: TokenGrid,
                         template_shape: tuple[int, int] | None = None) -> np.ndarray:
    """Strict-majority vote of per-frame masks in a box-normalized grid."""
    if not coarse_masks or len(coarse_masks) != len(boxes):
        raise ValueError("need one mask per frame box")
    if template_shape is None:
        x0, y0, x1, y1 = pixel_rect(boxes[0], grid.height, grid.width)
        template_shape = (max(y1 - y0, 1), max(x1 - x0, 1))
    th, tw = template_shape
    votes = np.zeros((th, tw), dtype=np.int64)
    for mask, box in zip(coarse_masks, boxes):
        x0, y0, x1, y1 = pixel_rect(box, grid.height, grid.width)
        if x1 <= x0 or y1 <= y0:
            continue
        ty = np.minimum((np.arange(th) + 0.5) / th * (y1 - y0), y1 - y0 - 1e-9)
        tx = np.minimum((np.arange(tw) + 0.5) / tw * (x1 - x0), x1 - x0 - 1e-9)
        sy = (y0 + np.floor(ty)).astype(np.int64)
        sx = (x0 + np.floor(tx)).astype(np.int64)
        votes += mask[np.ix_(sy, sx)].astype(np.int64)
    template = votes * 2 > len(coarse_masks)
    if not template.any():
        raise EmptyTemplate("no pixel wins the majority vote")
    return template


def warp_template(template: np.ndarray, box_f: BoundingBox,
                  grid: TokenGrid) -> np.ndarray:
    """Nearest-neighbor warp of the canonical template into a frame's box."""
    th, tw = template.shape
    h, w = grid.height, grid.width
    out = np.zeros((h, w), dtype=bool)
    x0, y0, x1, y1 = pixel_rect(box_f, h, w)
    if x1 <= x0 or y1 <= y0:
        return out
    ty = np.minimum((np.arange(y0, y1) - y0 + 0.5) / (y1 - y0) * th, th - 1e-9)
    tx = np.minimum((np.arange(x0, x1) - x0 + 0.5) / (x1 - x0) * tw, tw - 1e-9)
    sy = np.floor(ty).astype(np.int64)
    sx = np.floor(tx).astype(np.int64)
    out[y0:y1, x0:x1] = template[np.ix_(sy, sx)]
    return out


# -- rigid branch ------------------------------------------------------------

def displacement_penalty(boxes: list[BoundingBox],
                         alpha: float = DEFAULT_ALPHA) -> np.ndarray:
    """Gamma[f, f'] = exp(-alpha * ||C_f - C_f'||) + 1 over box centers."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    centers = np.asarray([b.center for b in boxes], dtype=np.float64)
    diff = centers[:, None, :] - centers[None, :, :]
    return np.exp(-alpha * np.linalg.norm(diff, axis=2)) + 1.0


def build_rigid_mask(fg_masks: list[np.ndarray], gamma: np.ndarray,
                     grid: TokenGrid, instance_id: int = -1) -> BlockSparseMask:
    """Foreground outer product, block-scaled by the displacement penalty."""
    if len(fg_masks) != grid.frames or gamma.shape != (grid.frames, grid.frames):
        raise GridMismatch("mask count / penalty matrix inconsistent with grid")
    flat = [m.reshape(-1).astype(np.float32) for m in fg_masks]
    mask = BlockSparseMask(grid=grid, branch="r", instance_id=instance_id)
    for f in range(grid.frames):
        if not flat[f].any():
            continue
        for f2 in range(grid.frames):
            if not flat[f2].any():
                continue
            mask.set_block(f, f2, np.float32(gamma[f, f2]) * np.outer(flat[f], flat[f2]))
    return mask


# -- non-rigid branch --------------------------------------------------------

def perceptual_deformation(features: FeatureVolume, f: int, f2: int,
                           fg_src: np.ndarray,
                           fg_dst: np.ndarray | None = None) -> np.ndarray:
    """Nearest-neighbor feature matches as a per-pixel (dy, dx) field.

    For each foreground source pixel the match is the foreground pixel of
    frame ``f2`` with minimal feature L2 distance, ties broken row-major.
    Zero outside the source foreground.
    """
    if fg_dst is None:
        fg_dst = fg_src
    if not fg_src.any() or not fg_dst.any():
        raise EmptyForeground("foreground mask is empty")
    h, w = fg_src.shape
    src_idx = np.argwhere(fg_src)            # (n, 2) as (row, col), row-major
    dst_idx = np.argwhere(fg_dst)
    src_feat = features.data[f][fg_src].astype(np.float64)
    dst_feat = features.data[f2][fg_dst].astype(np.float64)
    field = np.zeros((h, w, 2), dtype=np.float64)
    for k, (i, j) in enumerate(src_idx):
        d = np.linalg.norm(dst_feat - src_feat[k], axis=1)
        m = int(np.argmin(d))  # argmin takes the first = row-major smallest
        field[i, j, 0] = dst_idx[m, 0] - i
        field[i, j, 1] = dst_idx[m, 1] - j
    return field


def box_deformation(box_f: BoundingBox, box_f2: BoundingBox,
                    grid: TokenGrid) -> np.ndarray:
    """Bilinear interpolation of the four corner displacements, in pixels.

    Returns an (H, W, 2) field of (dy, dx), zero outside ``box_f``.
    """
    h, w = grid.height, grid.width
    # Corner displacements in pixel units: TL, TR, BL, BR.
    cx0, cy0 = box_f.x_min * w, box_f.y_min * h
    cx1, cy1 = box_f.x_max * w, box_f.y_max * h
    nx0, ny0 = box_f2.x_min * w, box_f2.y_min * h
    nx1, ny1 = box_f2.x_max * w, box_f2.y_max * h
    d = {
        "tl": (ny0 - cy0, nx0 - cx0),
        "tr": (ny0 - cy0, nx1 - cx1),
        "bl": (ny1 - cy1, nx0 - cx0),
        "br": (ny1 - cy1, nx1 - cx1),
    }
    field = np.zeros((h, w, 2), dtype=np.float64)
    x0, y0, x1, y1 = pixel_rect(box_f, h, w)
    if x1 <= x0 or y1 <= y0:
        return field
    u = (np.arange(x0, x1) + 0.5 - cx0) / max(cx1 - cx0, 1e-12)
    v = (np.arange(y0, y1) + 0.5 - cy0) / max(cy1 - cy0, 1e-12)
    u = np.clip(u, 0.0, 1.0)[None, :]
    v = np.clip(v, 0.0, 1.0)[:, None]
    for axis in (0, 1):
        field[y0:y1, x0:x1, axis] = (
            (1 - u) * (1 - v) * d["tl"][axis]
            + u * (1 - v) * d["tr"][axis]
            + (1 - u) * v * d["bl"][axis]
            + u * v * d["br"][axis]
        )
    return field


def deformation_penalty(d_perc: np.ndarray, d_box: np.ndarray,
                        alpha: float = DEFAULT_ALPHA) -> np.ndarray:
    """Lambda[i, j] = exp(-alpha * ||d_perc - d_box||_2) + 1, per pixel."""
    if d_perc.shape != d_box.shape:
        raise GridMismatch(f"field shapes {d_perc.shape} != {d_box.shape}")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    return np.exp(-alpha * np.linalg.norm(d_perc - d_box, axis=-1)) + 1.0


def build_nonrigid_mask(fg_masks: list[np.ndarray],
                        lambdas: dict[tuple[int, int], np.ndarray],
                        grid: TokenGrid,
                        instance_id: int = -1) -> BlockSparseMask:
    """Foreground pairs weighted by the source pixel's deformation penalty."""
    if len(fg_masks) != grid.frames:
        raise GridMismatch("need one foreground mask per frame")
    flat = [m.reshape(-1).astype(np.float32) for m in fg_masks]
    mask = BlockSparseMask(grid=grid, branch="nr", instance_id=instance_id)
    for (f, f2), lam in lambdas.items():
        if not flat[f].any() or not flat[f2].any():
            continue
        lam_flat = lam.reshape(-1).astype(np.float32)
        rows = flat[f] * lam_flat
        mask.set_block(f, f2, np.outer(rows, flat[f2]))
    return mask


# -- orchestration -----------------------------------------------------------

@dataclass
class GuidanceBundle:
    grid: TokenGrid
    per_instance: list[BlockSparseMask]
    composed: BlockSparseMask
    reference_frame: int


def build_guidance(layout: SceneLayout, features: FeatureVolume,
                   alpha: float = DEFAULT_ALPHA) -> GuidanceBundle:
    """Compute all branch masks for a layout and compose them additively."""
    if features.frames != layout.frames:
        raise GridMismatch(
            f"features have {features.frames} frames, layout {layout.frames}")
    grid = TokenGrid(features.frames, features.height, features.width)
    f_star = select_reference_frame(features)
    per_instance: list[BlockSparseMask] = []
    for track in layout.tracks:
        if track.category is MotionCategory.MOTIONLESS:
            per_instance.append(build_motionless_mask(track, f_star, grid))
            continue
        fg = [segment_foreground(features, track.boxes[f], f)
              for f in range(grid.frames)]
        if track.category is MotionCategory.RIGID:
            try:
                template = build_shape_template(fg, track.boxes, grid)
                warped = [warp_template(template, track.boxes[f], grid)
                          for f in range(grid.frames)]
            except EmptyTemplate:
                warnings.warn(
                    f"track {track.instance_id}: empty shape template; "
                    "falling back to full boxes", stacklevel=2)
                warped = []
                for f in range(grid.frames):
                    full = np.zeros((grid.height, grid.width), dtype=bool)
                    x0, y0, x1, y1 = pixel_rect(track.boxes[f], grid.height, grid.width)
                    full[y0:y1, x0:x1] = True
                    warped.append(full)
            gamma = displacement_penalty(track.boxes, alpha)
            per_instance.append(
                build_rigid_mask(warped, gamma, grid, track.instance_id))
        else:
            lambdas: dict[tuple[int, int], np.ndarray] = {}
            for f in range(grid.frames):
                if not fg[f].any():
                    continue
                for f2 in range(grid.frames):
                    if not fg[f2].any():
                        continue
                    d_perc = perceptual_deformation(features, f, f2, fg[f], fg[f2])
                    d_box = box_deformation(track.boxes[f], track.boxes[f2], grid)
                    d_box[~fg[f]] = 0.0
                    lambdas[(f, f2)] = deformation_penalty(d_perc, d_box, alpha)
            per_instance.append(
                build_nonrigid_mask(fg, lambdas, grid, track.instance_id))
    composed = compose_masks(per_instance) if per_instance else BlockSparseMask(
        grid=grid, branch="sum")
    return GuidanceBundle(grid=grid, per_instance=per_instance,
                          composed=composed, reference_frame=f_star)
