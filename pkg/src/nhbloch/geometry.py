"""Parameter-space geometry on plane, cylinder and torus topologies.

Periodic axes wrap with period 2*pi and use the half-open fundamental
domain [-pi, pi).  Wrap counting relies on nearest-image unwrapping with
a hard jump limit of pi per segment, which is safe because every polyline
handled here is produced by fine-grained tracers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import AmbiguousWrap, NonPeriodicAxis

TWO_PI = 2.0 * math.pi

AXIS_X = "x"
AXIS_Y = "y"


class SpaceTopology(Enum):
    PLANE = "plane"
    CYLINDER_X = "cylinder_x"  # periodic along kx only
    CYLINDER_Y = "cylinder_y"  # periodic along ky only
    TORUS = "torus"

    @property
    def periodic_x(self) -> bool:
        return self in (SpaceTopology.CYLINDER_X, SpaceTopology.TORUS)

    @property
    def periodic_y(self) -> bool:
        return self in (SpaceTopology.CYLINDER_Y, SpaceTopology.TORUS)

    def is_periodic(self, axis: str) -> bool:
        if axis == AXIS_X:
            return self.periodic_x
        if axis == AXIS_Y:
            return self.periodic_y
        raise ValueError(f"unknown axis {axis!r}")


@dataclass(frozen=True)
class ParamPoint:
    kx: float
    ky: float

    def as_tuple(self) -> tuple[float, float]:
        return (self.kx, self.ky)


def wrap_angle(x: float) -> float:
    """Map x to the half-open fundamental interval [-pi, pi)."""
    return (x + math.pi) % TWO_PI - math.pi


def canonicalize(p: ParamPoint, topo: SpaceTopology) -> ParamPoint:
    kx = wrap_angle(p.kx) if topo.periodic_x else p.kx
    ky = wrap_angle(p.ky) if topo.periodic_y else p.ky
    return ParamPoint(kx, ky)


def point_distance(p: ParamPoint, q: ParamPoint, topo: SpaceTopology) -> float:
    """Euclidean distance using the nearest image along periodic axes."""
    dx = p.kx - q.kx
    dy = p.ky - q.ky
    if topo.periodic_x:
        dx = wrap_angle(dx)
    if topo.periodic_y:
        dy = wrap_angle(dy)
    return math.hypot(dx, dy)


@dataclass(frozen=True)
class LoopPath:
    """Discretized closed or open path.

    vertices are stored unwrapped (consecutive coordinates differ by less
    than pi), so the raw last vertex of a closed loop may sit one period
    away from the first; canonical(last) == first.
    """

    vertices: tuple[ParamPoint, ...]
    closed: bool
    wraps: tuple[int, int]
    topology: SpaceTopology

    def as_array(self) -> np.ndarray:
        return np.array([(v.kx, v.ky) for v in self.vertices], dtype=float)

    @property
    def basepoint(self) -> ParamPoint:
        return canonicalize(self.vertices[0], self.topology)


def coordinate_loop(axis: str, fixed_value: float, n_steps: int,
                    topo: SpaceTopology) -> LoopPath:
    """Non-contractible loop along one periodic axis at a fixed transverse
    coordinate, running from -pi to pi in n_steps uniform steps."""
    if not topo.is_periodic(axis):
        raise NonPeriodicAxis(f"axis {axis!r} is not periodic on {topo.value}")
    if n_steps < 8:
        raise ValueError("coordinate loops need n_steps >= 8")
    ts = np.linspace(-math.pi, math.pi, n_steps + 1)
    if axis == AXIS_X:
        verts = tuple(ParamPoint(float(t), fixed_value) for t in ts)
        wraps = (1, 0)
    else:
        verts = tuple(ParamPoint(fixed_value, float(t)) for t in ts)
        wraps = (0, 1)
    return LoopPath(vertices=verts, closed=True, wraps=wraps, topology=topo)


def _as_points(points) -> np.ndarray:
    if isinstance(points, LoopPath):
        return points.as_array()
    pts = list(points)
    if pts and isinstance(pts[0], ParamPoint):
        return np.array([(p.kx, p.ky) for p in pts], dtype=float)
    arr = np.asarray(pts, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("expected an (N, 2) polyline")
    return arr


def unwrap_polyline(points, topo: SpaceTopology,
                    jump_limit: float = math.pi) -> np.ndarray:
    """Lift a polyline to continuous coordinates via nearest-image deltas.

    Raises AmbiguousWrap when a segment jumps by >= jump_limit along a
    periodic axis (the nearest image is then not well defined).
    """
    arr = _as_points(points)
    out = arr.copy()
    periodic = (topo.periodic_x, topo.periodic_y)
    for ax in range(2):
        if not periodic[ax]:
            continue
        deltas = np.diff(arr[:, ax])
        wrapped = (deltas + math.pi) % TWO_PI - math.pi
        if np.any(np.abs(wrapped) >= jump_limit - 1e-12):
            i = int(np.argmax(np.abs(wrapped)))
            raise AmbiguousWrap(
                f"segment {i} jumps by {wrapped[i]:+.6f} along axis {ax}")
        out[1:, ax] = arr[0, ax] + np.cumsum(wrapped)
    return out


def homology_class(points, topo: SpaceTopology,
                   closure_tol: float = 1e-8) -> tuple[int, int]:
    """Signed wrap counts (w_x, w_y) of a closed polyline.

    (0, 0) iff the polyline is contractible on the torus.  The polyline
    must close up to canonical identification of its endpoints.
    """
    unwrapped = unwrap_polyline(points, topo)
    total = unwrapped[-1] - unwrapped[0]
    wraps = [0, 0]
    periodic = (topo.periodic_x, topo.periodic_y)
    for ax in range(2):
        if periodic[ax]:
            w = round(total[ax] / TWO_PI)
            if abs(total[ax] - TWO_PI * w) > max(closure_tol, 1e-9 * abs(total[ax])):
                raise ValueError(
                    f"polyline does not close along axis {ax}: residual "
                    f"{total[ax] - TWO_PI * w:.3e}")
            wraps[ax] = int(w)
        else:
            if abs(total[ax]) > closure_tol:
                raise ValueError(
                    f"polyline does not close along non-periodic axis {ax}")
    return (wraps[0], wraps[1])
