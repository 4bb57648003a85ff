"""Layout reasoning: propagate per-instance boxes across frames by category.

Motionless boxes are frozen, rigid boxes integrate velocity/acceleration
(unit frame step), non-rigid boxes take independent per-boundary shifts
on a sinusoidal schedule derived from the node's oscillation hint.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import EmptyWindow, InvalidGraph, TooManyInstances, WrongCategory
from .graph import InstanceNode, KinematicHint, MotionCategory, MotionGraph, validate_graph

SPEED_TABLE = {"slow": 0.01, "medium": 0.02, "fast": 0.04}  # canvas units / frame
DIRECTION_VECTORS = {
    "right": (1.0, 0.0),
    "left": (-1.0, 0.0),
    "up": (0.0, -1.0),
    "down": (0.0, 1.0),
}
SLIDING_WINDOW = 5

# Oscillation hint table: per-side amplitude signs (left, right, top, bottom),
# shared amplitude, period in frames, phase.
OSC_AMPLITUDE = 0.01
OSC_PERIOD = 8.0
OSC_PHASE = 0.0
OSC_SIGNS = {
    "none": (0.0, 0.0, 0.0, 0.0),
    "sway": (-1.0, 1.0, 0.0, 0.0),
    "pulse": (-1.0, 1.0, -1.0, 1.0),
    "bob": (0.0, 0.0, -1.0, -1.0),
}

AREA_FLOOR = 0.25  # of frame-1 area
AREA_CAP = 4.0

MIN_EXTENT = 1e-3


@dataclass(frozen=True)
class BoundingBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.x_min < self.x_max <= 1.0
                and 0.0 <= self.y_min < self.y_max <= 1.0):
            raise ValueError(f"invalid box {self}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)

    def translated(self, dx: float, dy: float) -> "BoundingBox":
        return BoundingBox(self.x_min + dx, self.y_min + dy,
                           self.x_max + dx, self.y_max + dy)

    def as_list(self) -> list[float]:
        return [self.x_min, self.y_min, self.x_max, self.y_max]


@dataclass(frozen=True)
class KinematicsState:
    velocity: tuple[float, float] = (0.0, 0.0)
    acceleration: tuple[float, float] = (0.0, 0.0)
    window: tuple[tuple[float, float], ...] = ()

    def with_center(self, center: tuple[float, float]) -> "KinematicsState":
        window = (self.window + (center,))[-SLIDING_WINDOW:]
        return replace(self, window=window)


@dataclass(frozen=True)
class BoundaryDisplacement:
    left: float = 0.0
    right: float = 0.0
    top: float = 0.0
    bottom: float = 0.0


@dataclass
class Track:
    instance_id: int
    category: MotionCategory
    boxes: list[BoundingBox]


@dataclass
class SceneLayout:
    frames: int
    tracks: list[Track] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "frames": self.frames,
            "tracks": [
                {"id": t.instance_id, "category": t.category.value,
                 "boxes": [b.as_list() for b in t.boxes]}
                for t in self.tracks
            ],
        }

    @classmethod
    def from_json(cls, d: dict) -> "SceneLayout":
        frames = int(d["frames"])
        tracks = [
            Track(instance_id=int(t["id"]),
                  category=MotionCategory(t["category"]),
                  boxes=[BoundingBox(*map(float, b)) for b in t["boxes"]])
            for t in d["tracks"]
        ]
        layout = cls(frames=frames, tracks=tracks)
        layout.validate()
        return layout

    def validate(self) -> None:
        if self.frames < 1:
            raise ValueError("frames must be >= 1")
        for t in self.tracks:
            if len(t.boxes) != self.frames:
                raise ValueError(
                    f"track {t.instance_id} has {len(t.boxes)} boxes, expected {self.frames}")

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "SceneLayout":
        return cls.from_json(json.loads(text))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "SceneLayout":
        return cls.loads(Path(path).read_text(encoding="utf-8"))


def _shift_inside(x_min, y_min, x_max, y_max) -> tuple[float, float, float, float, bool, bool]:
    """Translate a box into the unit canvas; report which axes were clamped."""
    clamped_x = clamped_y = False
    if x_min < 0.0:
        x_max -= x_min
        x_min = 0.0
        clamped_x = True
    elif x_max > 1.0:
        x_min -= x_max - 1.0
        x_max = 1.0
        clamped_x = True
    if y_min < 0.0:
        y_max -= y_min
        y_min = 0.0
        clamped_y = True
    elif y_max > 1.0:
        y_min -= y_max - 1.0
        y_max = 1.0
        clamped_y = True
    return x_min, y_min, x_max, y_max, clamped_x, clamped_y


def step_motionless(box_1: BoundingBox, f: int) -> BoundingBox:
    """Identity: the frame-1 box is reused verbatim for every frame."""
    if f < 1:
        raise ValueError("frame index must be >= 1")
    return box_1


def step_rigid(prev: BoundingBox,
               state: KinematicsState) -> tuple[BoundingBox, KinematicsState]:
    """One rigid step: translate by u + a/2, then u <- u + a (unit frame step).

    The box is shifted back inside the canvas if it would leave it, and
    the velocity component along any clamped axis is zeroed.
    """
    ux, uy = state.velocity
    ax, ay = state.acceleration
    dx = ux + 0.5 * ax
    dy = uy + 0.5 * ay
    x_min, y_min, x_max, y_max, cx, cy = _shift_inside(
        prev.x_min + dx, prev.y_min + dy, prev.x_max + dx, prev.y_max + dy)
    box = BoundingBox(x_min, y_min, x_max, y_max)
    new_u = (0.0 if cx else ux + ax, 0.0 if cy else uy + ay)
    new_state = KinematicsState(velocity=new_u, acceleration=(ax, ay),
                                window=state.window).with_center(box.center)
    return box, new_state


def estimate_kinematics(window: list[tuple[float, float]] | tuple,
                        hint: KinematicHint) -> KinematicsState:
    """Fit (u, a) from recent box centers, or fall back to the hint.

    With >= 3 centers: per-axis degree-2 least squares over frame times
    0..n-1; u is the fitted derivative at the latest time, a the constant
    second derivative. With fewer centers the speed-class table and hint
    direction supply u, and a = 0.
    """
    centers = list(window)
    if not centers:
        raise EmptyWindow("kinematics window is empty")
    if len(centers) < 3:
        speed = SPEED_TABLE.get(hint.speed, SPEED_TABLE["medium"])
        dx, dy = DIRECTION_VECTORS.get(hint.direction, DIRECTION_VECTORS["right"])
        return KinematicsState(velocity=(speed * dx, speed * dy),
                               acceleration=(0.0, 0.0),
                               window=tuple(centers[-SLIDING_WINDOW:]))
    pts = np.asarray(centers, dtype=np.float64)
    t = np.arange(len(centers), dtype=np.float64)
    vander = np.stack([np.ones_like(t), t, t * t], axis=1)
    coeffs, *_ = np.linalg.lstsq(vander, pts, rcond=None)  # (3, 2)
    t_last = t[-1]
    u = coeffs[1] + 2.0 * coeffs[2] * t_last
    a = 2.0 * coeffs[2]
    return KinematicsState(velocity=(float(u[0]), float(u[1])),
                           acceleration=(float(a[0]), float(a[1])),
                           window=tuple(centers[-SLIDING_WINDOW:]))


def step_nonrigid(prev: BoundingBox, disp: BoundaryDisplacement,
                  initial_area: float | None = None) -> BoundingBox:
    """Apply per-boundary shifts, repairing the result into a valid box.

    The area is kept within [25%, 400%] of ``initial_area`` (the frame-1
    area; defaults to the previous box's own area).
    """
    base_area = prev.area if initial_area is None else initial_area
    x_min = prev.x_min + disp.left
    x_max = prev.x_max + disp.right
    y_min = prev.y_min + disp.top
    y_max = prev.y_max + disp.bottom
    cx, cy = (x_min + x_max) / 2.0, (y_min + y_max) / 2.0
    w = max(x_max - x_min, MIN_EXTENT)
    h = max(y_max - y_min, MIN_EXTENT)
    area = w * h
    lo, hi = AREA_FLOOR * base_area, AREA_CAP * base_area
    resized = False
    if area < lo or area > hi:
        scale = math.sqrt(min(max(area, lo), hi) / area)
        w *= scale
        h *= scale
        resized = True
    if w > 1.0 or h > 1.0:
        w, h = min(w, 1.0), min(h, 1.0)
        resized = True
    if resized or w != x_max - x_min or h != y_max - y_min:
        x_min, x_max = cx - w / 2.0, cx + w / 2.0
        y_min, y_max = cy - h / 2.0, cy + h / 2.0
    x_min, y_min, x_max, y_max, _, _ = _shift_inside(x_min, y_min, x_max, y_max)
    return BoundingBox(x_min, y_min, x_max, y_max)


def derive_boundary_displacements(node: InstanceNode, f: int,
                                  total_frames: int) -> BoundaryDisplacement:
    """Sinusoidal per-boundary schedule from the node's oscillation hint."""
    if node.category is not MotionCategory.NONRIGID:
        raise WrongCategory(f"node {node.id} is {node.category.value}, not nonrigid")
    signs = OSC_SIGNS.get(node.hint.oscillation, OSC_SIGNS["none"])
    value = OSC_AMPLITUDE * math.sin(2.0 * math.pi * f / OSC_PERIOD + OSC_PHASE)
    return BoundaryDisplacement(left=signs[0] * value, right=signs[1] * value,
                                top=signs[2] * value, bottom=signs[3] * value)


_PLACEMENT_AS_SIDE = {
    "left-of": "left-of",
    "right-of": "right-of",
    "above": "above",
    "below": "below",
    "behind": "above",
    "front": "below",
    "toward": None,
    "away": None,
    "inside": "inside",
    None: None,
}


def place_initial_boxes(graph: MotionGraph, default_size: float = 0.3,
                        min_size: float = 0.1,
                        gap: float = 0.05) -> dict[int, BoundingBox]:
    """Deterministic frame-1 placement on a grid, adjusted by spatial hints."""
    n = len(graph.nodes)
    if n == 0:
        return {}
    cols = math.ceil(math.sqrt(n))
    rows = math.ceil(n / cols)
    size = min(default_size, 0.9 / cols, 0.9 / rows)
    if size < min_size:
        raise TooManyInstances(f"{n} instances cannot fit at minimum size {min_size}")
    boxes: dict[int, BoundingBox] = {}
    for k, node in enumerate(graph.nodes):
        r, c = divmod(k, cols)
        cx = (c + 0.5) / cols
        cy = (r + 0.5) / rows
        boxes[node.id] = BoundingBox(cx - size / 2, cy - size / 2,
                                     cx + size / 2, cy + size / 2)

    for edge in graph.edges:
        side = _PLACEMENT_AS_SIDE.get(edge.placement_hint)
        if side is None or edge.src not in boxes or edge.dst not in boxes:
            continue
        src, dst = boxes[edge.src], boxes[edge.dst]
        w, h = src.width, src.height
        dcx, dcy = dst.center
        if side == "left-of":
            x_max = dst.x_min - gap
            coords = (x_max - w, dcy - h / 2, x_max, dcy + h / 2)
        elif side == "right-of":
            x_min = dst.x_max + gap
            coords = (x_min, dcy - h / 2, x_min + w, dcy + h / 2)
        elif side == "above":
            y_max = dst.y_min - gap
            coords = (dcx - w / 2, y_max - h, dcx + w / 2, y_max)
        elif side == "below":
            y_min = dst.y_max + gap
            coords = (dcx - w / 2, y_min, dcx + w / 2, y_min + h)
        else:  # inside
            coords = (dcx - dst.width / 4, dcy - dst.height / 4,
                      dcx + dst.width / 4, dcy + dst.height / 4)
        x_min, y_min, x_max, y_max, _, _ = _shift_inside(*coords)
        boxes[edge.src] = BoundingBox(x_min, y_min, x_max, y_max)
    return boxes


def plan_layout(graph: MotionGraph, frames: int,
                reestimate_velocity: bool = False) -> SceneLayout:
    """Compose the per-category steppers into a full spatial-temporal layout.

    ``reestimate_velocity`` switches the rigid update from pure
    integration (u <- u + a) to re-fitting (u, a) from the sliding window
    of recent centers each frame.
    """
    if frames < 1:
        raise ValueError("frames must be >= 1")
    report = validate_graph(graph)
    if report:
        raise InvalidGraph("; ".join(report))
    initial = place_initial_boxes(graph)
    tracks: list[Track] = []
    for node in graph.nodes:
        box_1 = initial[node.id]
        boxes = [box_1]
        if node.category is MotionCategory.MOTIONLESS:
            boxes = [step_motionless(box_1, f) for f in range(1, frames + 1)]
        elif node.category is MotionCategory.RIGID:
            state = estimate_kinematics([box_1.center], node.hint)
            for _ in range(frames - 1):
                prev = boxes[-1]
                if reestimate_velocity and len(state.window) >= 3:
                    state = estimate_kinematics(list(state.window), node.hint)
                box, state = step_rigid(prev, state)
                boxes.append(box)
        else:
            initial_area = box_1.area
            for f in range(2, frames + 1):
                disp = derive_boundary_displacements(node, f, frames)
                boxes.append(step_nonrigid(boxes[-1], disp, initial_area))
        tracks.append(Track(instance_id=node.id, category=node.category, boxes=boxes))
    layout = SceneLayout(frames=frames, tracks=tracks)
    layout.validate()
    return layout
