"""Anamorphic projection: bake an image onto receiver geometry from a
vantage point and re-render it from anywhere.

Viewed from the authoring vantage the receiver reproduces the source
image regardless of its shape; any other viewpoint reveals the
distortion.  Receivers are planes or height fields over a placement
rectangle; the source image lives on the z = 0 plane over [0,1]^2 with
image rows running down from scene y = 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from .field import Field2D, sample_grid
from .scene import ORTHO_FRONTAL, VANTAGE, Camera

PLANE = "plane"
HEIGHT_FIELD = "height_field"

_EPS = 1e-12


@dataclass(frozen=True, eq=False)
class Receiver:
    """Geometry that carries the baked picture.

    plane: points p with normal . p = offset.
    height_field: z = height(x, y) over the placement rect (x0, y0, x1, y1).
    """

    kind: str
    normal: Optional[np.ndarray] = None
    offset: float = 0.0
    height: Optional[Field2D] = None
    placement: Tuple[float, float, float, float] = (0.0, 0.0, 1.0, 1.0)

    def __post_init__(self):
        if self.kind == PLANE:
            n = np.asarray(self.normal, dtype=np.float64)
            norm = float(np.linalg.norm(n))
            if norm < _EPS:
                raise ValueError("plane normal must be nonzero")
            object.__setattr__(self, "normal", n / norm)
        elif self.kind == HEIGHT_FIELD:
            if self.height is None or not self.height.is_scalar:
                raise ValueError("height_field receiver needs a scalar height")
            if not np.isfinite(self.height.values).all():
                raise ValueError("height field must be finite")
            x0, y0, x1, y1 = self.placement
            if not (x1 > x0 and y1 > y0):
                raise ValueError("placement rect must have positive extent")
        else:
            raise ValueError(f"unknown receiver kind {self.kind!r}")

    @staticmethod
    def plane(normal, offset: float) -> "Receiver":
        return Receiver(kind=PLANE, normal=np.asarray(normal, float),
                        offset=float(offset))

    @staticmethod
    def height_field(height: Field2D,
                     placement=(0.0, 0.0, 1.0, 1.0)) -> "Receiver":
        return Receiver(kind=HEIGHT_FIELD, height=height,
                        placement=tuple(float(x) for x in placement))


@dataclass(frozen=True, eq=False)
class PlanarFrame:
    """Rectangular parameterization of the baked region of a plane:
    point(p, q) = origin + p*len1*e1 + q*len2*e2, (p, q) in [0,1]^2."""

    origin: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    len1: float
    len2: float


@dataclass(frozen=True, eq=False)
class BakedAnamorph:
    receiver: Receiver
    texture: Field2D
    uv_map: Union[PlanarFrame, Tuple[float, float, float, float]]
    vantage: Camera
    occluded: Field2D  # 1 where the vantage ray was blocked by the receiver

    @property
    def occluded_fraction(self) -> float:
        return float(self.occluded.values.mean())


# --------------------------------------------------------------------------
# camera rays

def camera_rays(camera: Camera, width: int, height: int):
    """Per-pixel ray origins and unit directions, image rows running
    down from the top of the frame."""
    i = (np.arange(width) + 0.5) / width
    j = (np.arange(height) + 0.5) / height
    u, vd = np.meshgrid(i, j)
    if camera.kind == ORTHO_FRONTAL:
        origins = np.stack([u, 1.0 - vd, np.full_like(u, 10.0)], axis=-1)
        dirs = np.zeros_like(origins)
        dirs[..., 2] = -1.0
        return origins, dirs
    if camera.kind != VANTAGE:
        raise ValueError(f"unknown camera kind {camera.kind!r}")
    eye = np.asarray(camera.eye, dtype=np.float64)
    fwd = np.asarray(camera.look_at, dtype=np.float64) - eye
    fwd = fwd / np.linalg.norm(fwd)
    up0 = np.array([0.0, 1.0, 0.0])
    if abs(float(fwd @ up0)) > 0.999:
        up0 = np.array([1.0, 0.0, 0.0])
    right = np.cross(fwd, up0)
    right = right / np.linalg.norm(right)
    up = np.cross(right, fwd)
    tanf = np.tan(camera.fov_y / 2.0)
    aspect = width / height
    xn = (2.0 * u - 1.0) * tanf * aspect
    yn = (1.0 - 2.0 * vd) * tanf
    dirs = fwd + xn[..., None] * right + yn[..., None] * up
    dirs = dirs / np.linalg.norm(dirs, axis=-1, keepdims=True)
    origins = np.broadcast_to(eye, dirs.shape).copy()
    return origins, dirs


def _rays_through_points(camera: Camera, points: np.ndarray):
    """Rays from the camera through given 3D points (origins, unit dirs)."""
    if camera.kind == ORTHO_FRONTAL:
        dirs = np.zeros_like(points)
        dirs[..., 2] = -1.0
        origins = points.copy()
        origins[..., 2] = 10.0
        return origins, dirs
    eye = np.asarray(camera.eye, dtype=np.float64)
    dirs = points - eye
    dirs = dirs / np.maximum(np.linalg.norm(dirs, axis=-1, keepdims=True), _EPS)
    return np.broadcast_to(eye, points.shape).copy(), dirs


def _to_source_plane(camera: Camera, points: np.ndarray):
    """Where the camera ray through each point crosses z = 0; (xy, valid)."""
    if camera.kind == ORTHO_FRONTAL:
        return points[..., :2], np.ones(points.shape[:-1], dtype=bool)
    eye = np.asarray(camera.eye, dtype=np.float64)
    denom = eye[2] - points[..., 2]
    valid = np.abs(denom) > _EPS
    t = np.where(valid, eye[2] / np.where(valid, denom, 1.0), 0.0)
    valid &= t > 0.0
    xy = eye[:2] + t[..., None] * (points[..., :2] - eye[:2])
    return xy, valid


# --------------------------------------------------------------------------
# receiver geometry

def _plane_frame(receiver: Receiver, vantage: Camera) -> PlanarFrame:
    """Frame covering the projection of the source square onto the plane.

    e1 follows the image's rightward axis, e2 its downward axis, so a
    bake onto the source plane itself is the identity map.
    """
    n = receiver.normal
    up = np.array([0.0, 1.0, 0.0])
    if abs(float(n @ up)) > 0.999:
        up = np.array([0.0, 0.0, 1.0])
    e1 = np.cross(up, n)
    e1 = e1 / np.linalg.norm(e1)
    e2 = -np.cross(n, e1)

    corners = np.array([
        [0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0],
    ])
    origins, dirs = _rays_through_points(vantage, corners)
    ndotd = dirs @ n
    if np.any(np.abs(ndotd) < 1e-9):
        raise ValueError("vantage rays parallel to the receiver plane")
    t = (receiver.offset - origins @ n) / ndotd
    hits = origins + t[:, None] * dirs
    base = receiver.offset * n
    a = (hits - base) @ e1
    b = (hits - base) @ e2
    origin = base + a.min() * e1 + b.min() * e2
    return PlanarFrame(origin=origin, e1=e1, e2=e2,
                       len1=float(a.max() - a.min()),
                       len2=float(b.max() - b.min()))


def _height_at(receiver: Receiver, p: np.ndarray, q: np.ndarray) -> np.ndarray:
    return sample_grid(receiver.height, p, q)


def _receiver_points(receiver: Receiver, uv_map, p: np.ndarray, q: np.ndarray):
    if receiver.kind == PLANE:
        f: PlanarFrame = uv_map
        return (
            f.origin
            + (p * f.len1)[..., None] * f.e1
            + (q * f.len2)[..., None] * f.e2
        )
    x0, y0, x1, y1 = uv_map
    x = x0 + p * (x1 - x0)
    y = y1 - q * (y1 - y0)
    return np.stack([x, y, _height_at(receiver, p, q)], axis=-1)


def _intersect_plane(receiver: Receiver, frame: PlanarFrame,
                     origins, dirs):
    """(p, q, hit) of ray-plane intersections, p/q in frame coords."""
    n = receiver.normal
    ndotd = dirs @ n
    safe = np.where(np.abs(ndotd) > _EPS, ndotd, 1.0)
    t = (receiver.offset - origins @ n) / safe
    hit = (np.abs(ndotd) > _EPS) & (t > _EPS)
    pts = origins + t[..., None] * dirs
    rel = pts - frame.origin
    p = (rel @ frame.e1) / frame.len1
    q = (rel @ frame.e2) / frame.len2
    hit &= (p >= 0.0) & (p <= 1.0) & (q >= 0.0) & (q <= 1.0)
    return p, q, hit


def _intersect_height_field(receiver: Receiver, placement, origins, dirs,
                            bisect_iters: int = 30):
    """(p, q, hit, t_hit): first above-to-below crossing of z = h(x, y).

    Vertical rays evaluate directly; others march the placement slab in
    steps no wider than one height texel and bisect the bracketing pair.
    """
    x0, y0, x1, y1 = placement
    h = receiver.height
    hvals = h.values
    zmin, zmax = float(hvals.min()), float(hvals.max())

    def param(pts):
        p = (pts[..., 0] - x0) / (x1 - x0)
        q = (y1 - pts[..., 1]) / (y1 - y0)
        return p, q

    dxy = np.linalg.norm(dirs[..., :2], axis=-1)
    vertical = dxy < 1e-9
    shape = dirs.shape[:-1]
    p_out = np.zeros(shape)
    q_out = np.zeros(shape)
    hit = np.zeros(shape, dtype=bool)
    t_out = np.full(shape, np.inf)

    if vertical.any():
        ox, oy = origins[..., 0], origins[..., 1]
        p, q = param(origins)
        inside = (
            vertical & (dirs[..., 2] < 0)
            & (p >= 0) & (p <= 1) & (q >= 0) & (q <= 1)
        )
        zs = _height_at(receiver, np.clip(p, 0, 1), np.clip(q, 0, 1))
        above = origins[..., 2] > zs
        sel = inside & above
        p_out[sel] = p[sel]
        q_out[sel] = q[sel]
        hit |= sel
        t_out[sel] = (origins[..., 2] - zs)[sel]
    rest = ~vertical
    if not rest.any():
        return p_out, q_out, hit, t_out

    # slab clip in x, y, and the height range
    def slab(o, d, lo, hi):
        d_safe = np.where(np.abs(d) > _EPS, d, _EPS)
        t0 = (lo - o) / d_safe
        t1 = (hi - o) / d_safe
        tmin = np.minimum(t0, t1)
        tmax = np.maximum(t0, t1)
        parallel = np.abs(d) <= _EPS
        inside_band = (o >= lo) & (o <= hi)
        tmin = np.where(parallel, np.where(inside_band, -np.inf, np.inf), tmin)
        tmax = np.where(parallel, np.where(inside_band, np.inf, -np.inf), tmax)
        return tmin, tmax

    o, d = origins, dirs
    tx0, tx1 = slab(o[..., 0], d[..., 0], x0, x1)
    ty0, ty1 = slab(o[..., 1], d[..., 1], y0, y1)
    tz0, tz1 = slab(o[..., 2], d[..., 2], zmin - 1e-6, zmax + 1e-6)
    t_enter = np.maximum(np.maximum(tx0, ty0), np.maximum(tz0, 0.0))
    t_exit = np.minimum(np.minimum(tx1, ty1), tz1)
    candidates = rest & (t_exit > t_enter)
    if not candidates.any():
        return p_out, q_out, hit, t_out

    idx = np.nonzero(candidates.reshape(-1))[0]
    of = o.reshape(-1, 3)[idx]
    df = d.reshape(-1, 3)[idx]
    te = t_enter.reshape(-1)[idx]
    tx = t_exit.reshape(-1)[idx]
    n_steps = 2 * max(h.width, h.height)
    dt = (tx - te) / n_steps

    def f_of(t):
        pts = of + t[:, None] * df
        p, q = param(pts)
        return pts[..., 2] - _height_at(receiver, np.clip(p, 0, 1),
                                        np.clip(q, 0, 1))

    t_prev = te.copy()
    f_prev = f_of(t_prev)
    alive = f_prev > 0.0  # rays entering below the slab surface miss
    lo = np.zeros_like(te)
    hi = np.zeros_like(te)
    found = np.zeros(te.shape, dtype=bool)
    for k in range(1, n_steps + 1):
        if not alive.any():
            break
        t_cur = te + dt * k
        f_cur = f_of(t_cur)
        crossed = alive & (f_cur <= 0.0)
        lo[crossed] = t_prev[crossed]
        hi[crossed] = t_cur[crossed]
        found |= crossed
        alive &= ~crossed
        t_prev, f_prev = t_cur, f_cur
    if found.any():
        flo, fhi = lo[found], hi[found]
        sub_o, sub_d = of[found], df[found]

        def f_sub(t):
            pts = sub_o + t[:, None] * sub_d
            p, q = param(pts)
            return pts[..., 2] - _height_at(receiver, np.clip(p, 0, 1),
                                            np.clip(q, 0, 1))

        for _ in range(bisect_iters):
            mid = 0.5 * (flo + fhi)
            above = f_sub(mid) > 0.0
            flo = np.where(above, mid, flo)
            fhi = np.where(above, fhi, mid)
        t_hit = 0.5 * (flo + fhi)
        pts = sub_o + t_hit[:, None] * sub_d
        p, q = param(pts)
        ok = (p >= 0) & (p <= 1) & (q >= 0) & (q <= 1)
        flat_idx = idx[np.nonzero(found)[0][ok]]
        p_out.reshape(-1)[flat_idx] = p[ok]
        q_out.reshape(-1)[flat_idx] = q[ok]
        hit.reshape(-1)[flat_idx] = True
        t_out.reshape(-1)[flat_idx] = t_hit[ok]
    return p_out, q_out, hit, t_out


# --------------------------------------------------------------------------
# bake and view

def bake(source: Field2D, vantage: Camera, receiver: Receiver, *,
         scale: float = 2.0, filter: str = "cubic") -> BakedAnamorph:
    """Project the source through the vantage onto the receiver.

    Each receiver texel stores the source color its vantage ray passes
    through; texels outside the source footprint are transparent.  The
    receiver texture is supersampled by `scale` (default 2x) and read
    with a cubic spline so the bake/view round trip stays transparent.
    Receiver points hidden from the vantage by the receiver itself are
    flagged in `occluded`, never repaired.
    """
    wt = max(2, int(round(source.width * scale)))
    ht = max(2, int(round(source.height * scale)))
    pi = (np.arange(wt) + 0.5) / wt
    qj = (np.arange(ht) + 0.5) / ht
    p, q = np.meshgrid(pi, qj)

    if receiver.kind == PLANE:
        uv_map: Union[PlanarFrame, Tuple[float, float, float, float]] = (
            _plane_frame(receiver, vantage)
        )
    else:
        uv_map = receiver.placement
    points = _receiver_points(receiver, uv_map, p, q)

    xy, valid = _to_source_plane(vantage, points)
    src_u = xy[..., 0]
    src_v = 1.0 - xy[..., 1]
    inside = valid & (src_u >= 0) & (src_u <= 1) & (src_v >= 0) & (src_v <= 1)

    samples = sample_grid(source, np.clip(src_u, 0, 1), np.clip(src_v, 0, 1),
                          filter)
    if samples.ndim == 2:
        rgba = np.empty((ht, wt, 4))
        rgba[..., :3] = samples[..., None]
        rgba[..., 3] = 1.0
        samples = rgba
    elif samples.shape[-1] == 3:
        samples = np.concatenate(
            [samples, np.ones(samples.shape[:-1] + (1,))], axis=-1
        )
    else:
        samples = samples.copy()
    samples[~inside] = 0.0

    occluded = np.zeros((ht, wt))
    if receiver.kind == HEIGHT_FIELD and vantage.kind == VANTAGE:
        origins, dirs = _rays_through_points(vantage, points)
        _, _, hit_first, t_first = _intersect_height_field(
            receiver, receiver.placement, origins, dirs
        )
        eye = np.asarray(vantage.eye, dtype=np.float64)
        t_point = np.linalg.norm(points - eye, axis=-1)
        x0, y0, x1, y1 = receiver.placement
        texel = min((x1 - x0) / receiver.height.width,
                    (y1 - y0) / receiver.height.height)
        occluded[hit_first & (t_first < t_point - 4.0 * texel)] = 1.0

    return BakedAnamorph(
        receiver=receiver,
        texture=Field2D(samples),
        uv_map=uv_map,
        vantage=vantage,
        occluded=Field2D(occluded),
    )


def render_view(baked: BakedAnamorph, viewer: Camera, resolution, *,
                filter: str = "cubic") -> Field2D:
    """Ray-cast the receiver from the viewer; hits sample the baked
    texture, misses are fully transparent."""
    if isinstance(resolution, int):
        w_res = h_res = resolution
    else:
        w_res, h_res = resolution
    origins, dirs = camera_rays(viewer, w_res, h_res)
    if baked.receiver.kind == PLANE:
        p, q, hit = _intersect_plane(baked.receiver, baked.uv_map,
                                     origins, dirs)
    else:
        p, q, hit, _ = _intersect_height_field(
            baked.receiver, baked.receiver.placement, origins, dirs
        )
    out = sample_grid(baked.texture, np.clip(p, 0, 1), np.clip(q, 0, 1),
                      filter)
    out = np.ascontiguousarray(out)
    out[~hit] = 0.0
    return Field2D(out)
