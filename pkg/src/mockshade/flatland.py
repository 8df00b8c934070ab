"""A 2D world with 1D images: the exact reference for shadow casting.

Ground samples live on [0, L]; occluders are axis-aligned boxes sitting
on the floor.  Rays are tested against box geometry in closed form, so
results are exact up to float arithmetic and serve as the oracle for
the raster height-field shadow march.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

_EDGE_TOL = 1e-12  # grazing rays count as lit
_SELF_TOL = 1e-9   # ray starts just off the surface


@dataclass(frozen=True)
class FlatOccluder:
    """Solid box [x0, x1] x [0, height] resting on the floor."""

    x0: float
    x1: float
    height: float


@dataclass(frozen=True)
class FlatLight:
    """kind 'directional' uses elevation from the +x horizon, measured so
    elevations below pi/2 put the light on the LEFT (to-light direction
    (-cos e, sin e)); kind 'point' uses position (x, z)."""

    kind: str
    elevation: float = 0.0
    position: Optional[Tuple[float, float]] = None


@dataclass(frozen=True)
class FlatScene:
    ground: np.ndarray  # heights sampled uniformly over [0, length]
    occluders: Tuple[FlatOccluder, ...]
    light: FlatLight
    length: float = 1.0

    def __post_init__(self):
        g = np.asarray(self.ground, dtype=np.float64)
        if g.ndim != 1 or g.size < 2:
            raise ValueError("ground must be a 1D array of >= 2 samples")
        if g.min() < 0:
            raise ValueError("ground heights must be >= 0")
        object.__setattr__(self, "ground", g)
        for occ in self.occluders:
            if not (0 <= occ.x0 <= occ.x1 <= self.length):
                raise ValueError("occluder interval outside [0, length]")
            if occ.height < 0:
                raise ValueError("occluder height must be >= 0")
        if self.light.kind not in ("directional", "point"):
            raise ValueError(f"unknown light kind {self.light.kind!r}")
        if self.light.kind == "point" and self.light.position is None:
            raise ValueError("point light needs a position")


def _ground_at(scene: FlatScene, x: np.ndarray) -> np.ndarray:
    # samples sit at cell centers (i + 0.5) / size * length
    g = scene.ground
    pos = np.clip(x / scene.length * g.size - 0.5, 0.0, g.size - 1.0)
    i0 = np.clip(np.floor(pos).astype(int), 0, g.size - 2)
    frac = pos - i0
    return g[i0] * (1 - frac) + g[i0 + 1] * frac


def _ground_slope(scene: FlatScene, x: np.ndarray) -> np.ndarray:
    g = scene.ground
    dx = scene.length / g.size
    slopes = np.diff(g) / dx
    pos = np.clip(x / scene.length * g.size - 0.5, 0.0, g.size - 1.0)
    i0 = np.clip(np.floor(pos).astype(int), 0, g.size - 2)
    return slopes[i0]


def _box_blocks(x, z, dx, dz, s_max, occ: FlatOccluder) -> np.ndarray:
    """Does the ray (x,z) + s(dx,dz), s in (tol, s_max), enter the box?"""
    with np.errstate(divide="ignore", invalid="ignore"):
        sa = np.where(dx != 0, (occ.x0 - x) / dx, -np.inf)
        sb = np.where(dx != 0, (occ.x1 - x) / dx, np.inf)
    s_lo = np.minimum(sa, sb)
    s_hi = np.maximum(sa, sb)
    inside_x = (x >= occ.x0) & (x <= occ.x1)
    s_lo = np.where(dx == 0, np.where(inside_x, 0.0, np.inf), s_lo)
    s_hi = np.where(dx == 0, np.where(inside_x, np.inf, -np.inf), s_hi)
    s_lo = np.maximum(s_lo, _SELF_TOL)
    s_hi = np.minimum(s_hi, s_max)
    valid = s_lo <= s_hi
    # lowest ray height over the overlap interval; box spans z in [0, h]
    z_min = np.where(dz >= 0, z + s_lo * dz, z + s_hi * dz)
    return valid & (z_min < occ.height - _EDGE_TOL)


def flatland_render(
    scene: FlatScene, image_width: int
) -> Tuple[np.ndarray, np.ndarray]:
    """The 1D image a flatlander sees, plus the shadow mask.

    Returns (radiance, shadow_mask); shadow_mask[i] is True where the
    ground sample is occluded from the light.
    """
    n = int(image_width)
    x = (np.arange(n) + 0.5) / n * scene.length
    z = _ground_at(scene, x)

    light = scene.light
    if light.kind == "directional":
        e = light.elevation
        dx = np.full(n, -np.cos(e))
        dz = np.full(n, np.sin(e))
        s_max = np.full(n, np.inf)
        falloff = np.ones(n)
    elif light.kind == "point":
        px, pz = light.position
        vx = px - x
        vz = pz - z
        dist = np.hypot(vx, vz)
        dist = np.maximum(dist, 1e-12)
        dx = vx / dist
        dz = vz / dist
        s_max = dist - _SELF_TOL
        falloff = 1.0 / dist**2
    else:
        raise ValueError(f"unknown light kind {light.kind!r}")

    blocked = np.zeros(n, dtype=bool)
    for occ in scene.occluders:
        blocked |= _box_blocks(x, z, dx, dz, s_max, occ)

    slope = _ground_slope(scene, x)
    inv_len = 1.0 / np.hypot(slope, 1.0)
    ndotl = (-slope * dx + dz) * inv_len
    radiance = np.where(blocked, 0.0, np.maximum(0.0, ndotl) * falloff)
    return radiance, blocked


def mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    """Intersection-over-union of two boolean masks (1.0 if both empty)."""
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(a, b).sum() / union)


def extruded_height_profile(
    width: int, occluders: Sequence[FlatOccluder], length: float = 1.0
) -> np.ndarray:
    """Raster profile of boxes on a flat floor, sampled at pixel centers.

    Shared by the flatland ground and the raster height field so both
    oracles see identical geometry.
    """
    x = (np.arange(width) + 0.5) / width * length
    h = np.zeros(width)
    for occ in occluders:
        inside = (x >= occ.x0) & (x <= occ.x1)
        h[inside] = np.maximum(h[inside], occ.height)
    return h
