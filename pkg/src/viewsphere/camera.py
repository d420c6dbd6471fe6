"""Five-parameter orbital camera model and canonical view conventions.

A pose is (r, theta, phi, x, y): radial distance in bounding-box edge units,
polar and azimuthal angles on the orbit sphere, and two local viewing-angle
offsets.  Roll is intentionally absent (a rolled image carries no extra
viewpoint information).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "AXES",
    "BoundingBox",
    "CANONICAL_VIEWS",
    "CameraPose",
    "DEFAULT_OFFSET_BOUND",
    "SHAPENET",
    "ViewConvention",
    "canonical_direction",
    "pose_to_cartesian",
    "radius_bounds",
]

CANONICAL_VIEWS = ("front", "back", "left", "right", "top", "bottom")

AXES = {
    "+X": (1.0, 0.0, 0.0),
    "-X": (-1.0, 0.0, 0.0),
    "+Y": (0.0, 1.0, 0.0),
    "-Y": (0.0, -1.0, 0.0),
    "+Z": (0.0, 0.0, 1.0),
    "-Z": (0.0, 0.0, -1.0),
}

# Default bound for the local viewing-angle offsets; the benchmark fixes
# x = y = 0 (look at center) unless configured otherwise.
DEFAULT_OFFSET_BOUND = math.pi / 8

R_MIN_FACTOR = 2.0
R_MAX_FACTOR = 10.0

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class CameraPose:
    """Camera position and orientation on the orbit sphere.

    ``phi`` is wrapped into [0, 2*pi) on construction.  Offset bounds for
    x and y are a search-space concern and enforced where poses are sampled.
    """

    r: float
    theta: float
    phi: float
    x: float = 0.0
    y: float = 0.0

    def __post_init__(self):
        for name in ("r", "theta", "phi", "x", "y"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"pose parameter {name} must be finite")
        if self.r <= 0:
            raise ValueError(f"radial distance must be > 0, got {self.r}")
        if not 0.0 <= self.theta <= math.pi:
            raise ValueError(f"theta must lie in [0, pi], got {self.theta}")
        object.__setattr__(self, "phi", self.phi % TWO_PI)

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.r, self.theta, self.phi, self.x, self.y)


@dataclass(frozen=True)
class BoundingBox:
    min_corner: tuple[float, float, float]
    max_corner: tuple[float, float, float]

    def __post_init__(self):
        lo = np.asarray(self.min_corner, dtype=float)
        hi = np.asarray(self.max_corner, dtype=float)
        if lo.shape != (3,) or hi.shape != (3,):
            raise ValueError("bounding box corners must be 3-vectors")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("bounding box corners must be finite")
        if np.any(hi < lo):
            raise ValueError("max corner must be >= min corner componentwise")
        object.__setattr__(self, "min_corner", tuple(float(v) for v in lo))
        object.__setattr__(self, "max_corner", tuple(float(v) for v in hi))

    @property
    def extents(self) -> tuple[float, float, float]:
        return tuple(h - l for l, h in zip(self.min_corner, self.max_corner))

    @property
    def center(self) -> np.ndarray:
        return (np.asarray(self.min_corner) + np.asarray(self.max_corner)) / 2.0

    @property
    def max_edge(self) -> float:
        return max(self.extents)


@dataclass(frozen=True)
class ViewConvention:
    """Orthogonal up/front axes plus the canonical view directions they induce.

    Direction of a view is the object-to-camera direction: the "front" view
    places the camera on the object's front side.  "left" is the object's own
    left, i.e. up x front.
    """

    up: tuple[float, float, float]
    front: tuple[float, float, float]
    up_name: str = field(default="", compare=False)
    front_name: str = field(default="", compare=False)

    def __post_init__(self):
        up = _unit(np.asarray(self.up, dtype=float), "up axis")
        front = _unit(np.asarray(self.front, dtype=float), "front axis")
        if abs(float(np.dot(up, front))) > 1e-9:
            raise ValueError("up and front axes must be orthogonal")
        object.__setattr__(self, "up", tuple(float(v) for v in up))
        object.__setattr__(self, "front", tuple(float(v) for v in front))

    @classmethod
    def from_names(cls, up: str, front: str) -> "ViewConvention":
        try:
            u, f = AXES[up], AXES[front]
        except KeyError as exc:
            raise ValueError(f"unknown axis name {exc.args[0]!r}; expected one of {sorted(AXES)}") from exc
        return cls(u, f, up_name=up, front_name=front)

    def to_names(self) -> tuple[str, str]:
        if self.up_name and self.front_name:
            return (self.up_name, self.front_name)
        up = _axis_name(self.up)
        front = _axis_name(self.front)
        return (up, front)

    def direction(self, view: str) -> np.ndarray:
        up = np.asarray(self.up)
        front = np.asarray(self.front)
        left = np.cross(up, front)
        table = {
            "front": front,
            "back": -front,
            "left": left,
            "right": -left,
            "top": up,
            "bottom": -up,
        }
        if view not in table:
            raise ValueError(f"unknown canonical view {view!r}; expected one of {CANONICAL_VIEWS}")
        return table[view].copy()


def canonical_direction(convention: ViewConvention, view: str) -> np.ndarray:
    """Unit direction from object center toward the camera for a view label."""
    return convention.direction(view)


def pose_to_cartesian(pose: CameraPose, center=(0.0, 0.0, 0.0)) -> tuple[np.ndarray, np.ndarray]:
    """Cartesian camera position and unit view direction for a pose.

    Uses the up=+Y spherical convention: the polar angle theta is measured
    from +Y, phi sweeps the XZ plane from +X toward +Z.  With x = y = 0 the
    camera looks exactly at ``center``; nonzero x / y yaw and pitch the view
    direction about the camera's local vertical / horizontal axes.
    """
    c = np.asarray(center, dtype=float).reshape(3)
    sin_t, cos_t = math.sin(pose.theta), math.cos(pose.theta)
    sin_p, cos_p = math.sin(pose.phi), math.cos(pose.phi)
    radial = np.array([sin_t * cos_p, cos_t, sin_t * sin_p])
    position = c + pose.r * radial
    forward = -radial
    if pose.x != 0.0 or pose.y != 0.0:
        world_up = np.array([0.0, 1.0, 0.0])
        if abs(float(np.dot(forward, world_up))) > 1.0 - 1e-9:
            # at the poles the horizon is undefined; anchor it to +X
            world_up = np.array([1.0, 0.0, 0.0])
        right = np.cross(forward, world_up)
        right /= np.linalg.norm(right)
        local_up = np.cross(right, forward)
        forward = _rotate(forward, local_up, pose.x)
        forward = _rotate(forward, right, pose.y)
    forward /= np.linalg.norm(forward)
    return position, forward


def radius_bounds(bbox: BoundingBox) -> tuple[float, float]:
    """Orbit radius limits (2x, 10x the largest bounding-box edge)."""
    edge = bbox.max_edge
    if edge <= 0.0:
        raise ValueError("bounding box has zero extent")
    return (R_MIN_FACTOR * edge, R_MAX_FACTOR * edge)


def _rotate(v: np.ndarray, axis: np.ndarray, angle: float) -> np.ndarray:
    # Rodrigues rotation; axis must be unit length
    cos_a, sin_a = math.cos(angle), math.sin(angle)
    return v * cos_a + np.cross(axis, v) * sin_a + axis * float(np.dot(axis, v)) * (1.0 - cos_a)


def _unit(v: np.ndarray, what: str) -> np.ndarray:
    if v.shape != (3,) or not np.all(np.isfinite(v)):
        raise ValueError(f"{what} must be a finite 3-vector")
    n = float(np.linalg.norm(v))
    if n == 0.0:
        raise ValueError(f"{what} must be non-zero")
    return v / n


def _axis_name(v) -> str:
    for name, axis in AXES.items():
        if np.allclose(v, axis, atol=1e-12):
            return name
    raise ValueError(f"axis {v} is not a named +/-XYZ axis")


SHAPENET = ViewConvention.from_names("+Y", "-Z")
