"""Stage one: the material-free illumination image W(u,v,t).

Per light group this computes diffuse and specular incident
illumination for the front-most surface at every pixel, with
height-field shadows, planar mirror radiance and optional refraction.
First-hit albedo is never multiplied in; styling happens downstream in
the barycentric shading stage.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from .baryshade import COMBINED, LINEAR, WeightBasis, eval_basis, normalized_w
from .errors import NotAMirror
from .field import (
    Field2D,
    finite_diff_gradient,
    luminance,
    pixel_centers,
    resample,
    sample_grid,
)
from .integrability import gradient_to_normals
from .parallel import run_rows
from .scene import (
    AREA_RECT,
    DIRECTIONAL,
    HEIGHT_FIELD,
    POINT,
    SHAPE_MAP,
    VANTAGE,
    Camera,
    Layer,
    Light,
    MockScene,
    lights_at,
)

AREA_LIGHT_SAMPLES = 16
_SHADOW_TOL = 1e-9
_GOLD = np.uint64(0x9E3779B97F4A7C15)


@dataclass(frozen=True, eq=False)
class IlluminationImage:
    """Per-light-group illumination planes plus the normalized scalar w."""

    diffuse: Dict[int, Field2D]
    specular: Dict[int, Field2D]
    t: float
    exposure: float
    combined_w: Field2D


@dataclass(frozen=True, eq=False)
class RefractionResult:
    color: Field2D
    offsets: np.ndarray  # (H, W, 2) uv displacement of the view ray
    fresnel: Field2D
    tir_count: int


# --------------------------------------------------------------------------
# deterministic sampling

def _mix64(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def hash01(pixel_index, light_salt: int, sample_index: int) -> np.ndarray:
    """Counter-based uniform in [0,1): identical for any evaluation order."""
    with np.errstate(over="ignore"):
        z = np.asarray(pixel_index, dtype=np.uint64) + _GOLD * np.uint64(light_salt + 1)
        z = _mix64(z) + _GOLD * np.uint64(sample_index + 1)
        z = _mix64(z)
    return (z >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))


def _strata(samples: int) -> Tuple[int, int]:
    gx = max(1, int(np.sqrt(samples)))
    while samples % gx:
        gx -= 1
    return gx, samples // gx


def _area_sample_position(light: Light, k: int, samples: int, salt: int,
                          shape: Tuple[int, int]):
    """Jittered stratified point on the rect, one per pixel."""
    h, w = shape
    pix = np.arange(h * w, dtype=np.uint64).reshape(h, w)
    gx, gy = _strata(samples)
    jx = hash01(pix, salt, 2 * k)
    jy = hash01(pix, salt, 2 * k + 1)
    cx, cy = k % gx, k // gx
    px = light.position[0] + ((cx + jx) / gx - 0.5) * light.extent[0]
    py = light.position[1] + ((cy + jy) / gy - 0.5) * light.extent[1]
    pz = np.full((h, w), light.position[2])
    return px, py, pz


# --------------------------------------------------------------------------
# shadow visibility

def _sweep_visibility(occ, surf, axis: int, toward_positive: bool, tan_uv: float):
    """O(N) running-max shadow test for an axis-aligned directional light.

    A pixel is shadowed iff some sample between it and the light pokes
    above the ray; along one axis that reduces to a prefix maximum of
    occ -/+ coord * tan_uv.
    """
    a = occ if axis == 1 else occ.T
    sf = surf if axis == 1 else surf.T
    n = a.shape[1]
    coord = (np.arange(n) + 0.5) / n
    if toward_positive:
        key = a - coord[None, :] * tan_uv
        m = np.maximum.accumulate(key[:, ::-1], axis=1)[:, ::-1]
        mnext = np.full_like(key, -np.inf)
        mnext[:, :-1] = m[:, 1:]
        blocked = mnext > (sf - coord[None, :] * tan_uv) + _SHADOW_TOL
    else:
        key = a + coord[None, :] * tan_uv
        m = np.maximum.accumulate(key, axis=1)
        mprev = np.full_like(key, -np.inf)
        mprev[:, 1:] = m[:, :-1]
        blocked = mprev > (sf + coord[None, :] * tan_uv) + _SHADOW_TOL
    vis = np.where(blocked, 0.0, 1.0)
    return vis if axis == 1 else vis.T


def _march_visibility(occ, surf, dir_u, dir_v, tan_uv, s_max):
    """Ray-march over the height field with steps <= 1 pixel.

    The march parameter is uv arclength; tan_uv is height gain per unit
    of it.  Pixels leave the active set once blocked or once the ray
    exits the unit square (convex, so exits are final).
    """
    h, w = surf.shape
    u, v = pixel_centers(w, h)
    occf = Field2D(occ)
    step = 1.0 / max(w, h)
    vis = np.ones(h * w)
    bcast = lambda x: np.broadcast_to(np.asarray(x, dtype=np.float64), (h, w)).reshape(-1)
    u1, v1 = u.reshape(-1), v.reshape(-1)
    du, dv = bcast(dir_u), bcast(dir_v)
    tn, sm = bcast(tan_uv), bcast(s_max)
    sf = surf.reshape(-1)
    alive = np.arange(h * w)
    s = step
    while alive.size and s <= 1.5:  # unit-square diameter is sqrt(2)
        pu = u1[alive] + du[alive] * s
        pv = v1[alive] + dv[alive] * s
        inside = (
            (pu >= 0.0) & (pu <= 1.0) & (pv >= 0.0) & (pv <= 1.0)
            & (s < sm[alive])
        )
        alive = alive[inside]
        if not alive.size:
            break
        pu, pv = pu[inside], pv[inside]
        h_at = sample_grid(occf, pu, pv)
        blocked = h_at > sf[alive] + s * tn[alive] + _SHADOW_TOL
        if blocked.any():
            vis[alive[blocked]] = 0.0
            alive = alive[~blocked]
        s += step
    return vis.reshape(h, w)


def _point_visibility(occ, surf, px, py, pz):
    h, w = surf.shape
    u, v = pixel_centers(w, h)
    vx = px - u
    vy = py - v
    d_uv = np.hypot(vx, vy)
    safe = np.maximum(d_uv, 1e-12)
    tan_uv = (pz - surf) / safe
    vis = _march_visibility(occ, surf, vx / safe, vy / safe, tan_uv, d_uv)
    near = d_uv < 1.0 / max(w, h)
    if near.any():
        above = np.broadcast_to(np.asarray(pz, dtype=np.float64), surf.shape) > surf
        vis = np.where(near, np.where(above, 1.0, 0.0), vis)
    return vis


def _visibility(occ, surf, light: Light, samples: int = AREA_LIGHT_SAMPLES,
                salt: int = 0):
    h, w = occ.shape
    if light.kind == DIRECTIONAL:
        lx, ly, lz = light.direction
        if lz <= 1e-12:
            return np.zeros((h, w))
        horiz = float(np.hypot(lx, ly))
        if horiz < 1e-12:
            return np.ones((h, w))
        tan_uv = lz / horiz
        if abs(ly) < 1e-15:
            return _sweep_visibility(occ, surf, 1, lx > 0, tan_uv)
        if abs(lx) < 1e-15:
            return _sweep_visibility(occ, surf, 0, ly > 0, tan_uv)
        return _march_visibility(occ, surf, lx / horiz, ly / horiz, tan_uv, np.inf)
    if light.kind == POINT:
        px, py, pz = light.position
        return _point_visibility(occ, surf, px, py, pz)
    if light.kind == AREA_RECT:
        samples = max(1, int(samples))
        acc = np.zeros((h, w))
        for k in range(samples):
            px, py, pz = _area_sample_position(light, k, samples, salt, (h, w))
            acc += _point_visibility(occ, surf, px, py, pz)
        return acc / samples
    raise ValueError(f"unknown light kind {light.kind!r}")


def cast_shadow(height: Field2D, light: Light,
                samples: int = AREA_LIGHT_SAMPLES) -> Field2D:
    """Per-pixel visibility in [0,1] of the light over a height field.

    Hard {0,1} for directional and point lights; area lights average
    `samples` stratified hard tests with a deterministic counter RNG.
    """
    occ = height.values
    return Field2D(_visibility(occ, occ, light, samples=samples, salt=0))


# --------------------------------------------------------------------------
# scene rasterization

def _layer_raster(layer: Layer, width: int, height: int):
    """(matte, surface height, unit normals, albedo) at the output raster."""
    matte = resample(layer.shape.matte, width, height).values
    if layer.shape.kind == HEIGHT_FIELD:
        relief_f = resample(layer.shape.height, width, height)
        relief = relief_f.values
        normals = gradient_to_normals(finite_diff_gradient(relief_f)).values
    else:
        nf = resample(layer.shape.normals, width, height).values
        normals = nf / np.linalg.norm(nf, axis=-1, keepdims=True)
        if layer.shape.kind == SHAPE_MAP:
            relief = resample(layer.shape.thickness, width, height).values
        else:
            relief = np.zeros((height, width))
    surf = layer.c + relief
    if layer.z_deform is not None:
        surf = surf + resample(layer.z_deform, width, height).values
    albedo = resample(layer.material.diffuse_albedo, width, height).values
    return matte, surf, normals, albedo


def _occluder_height(rasters) -> np.ndarray:
    """Scene-wide occluder field: front surface over the z=0 backdrop.

    Soft mattes are thresholded at 0.5; partial coverage does not cast
    partial shadows.
    """
    occ = None
    for matte, surf, _, _ in rasters:
        contrib = np.where(matte > 0.5, surf, 0.0)
        occ = contrib if occ is None else np.maximum(occ, contrib)
    if occ is None:
        h, w = rasters[0][0].shape if rasters else (1, 1)
        occ = np.zeros((h, w))
    return occ


def _view_dirs(camera: Camera, u, v, surf):
    if camera.kind == VANTAGE:
        p = np.stack([u, v, surf], axis=-1)
        d = camera.eye[None, None, :] - p
        return d / np.linalg.norm(d, axis=-1, keepdims=True)
    view = np.zeros(surf.shape + (3,))
    view[..., 2] = 1.0
    return view


def _shade_surface(surf, normals, view, light: Light, shininess: float,
                   spec_strength: float, occ, salt: int, threads):
    """Diffuse and specular rgba planes for one light on one surface."""
    h, w = surf.shape
    u, v = pixel_centers(w, h)
    intensity = light.intensity

    def accumulate(l_vec, vis, falloff, weight, dif, spc):
        def band(j0, j1):
            n = normals[j0:j1]
            lv = l_vec[j0:j1] if l_vec.ndim == 3 else l_vec
            ndotl = np.clip(np.sum(n * lv, axis=-1), 0.0, None)
            base = weight * vis[j0:j1] * ndotl * falloff[j0:j1]
            dif[j0:j1] += base[..., None] * intensity
            if spec_strength > 0.0:
                hv = lv + view[j0:j1]
                hv = hv / np.maximum(np.linalg.norm(hv, axis=-1, keepdims=True), 1e-12)
                ndoth = np.clip(np.sum(n * hv, axis=-1), 0.0, None)
                sbase = (
                    weight * spec_strength * vis[j0:j1]
                    * ndoth**shininess * falloff[j0:j1]
                )
                spc[j0:j1] += sbase[..., None] * intensity
        run_rows(band, h, threads)

    dif = np.zeros((h, w, 4))
    spc = np.zeros((h, w, 4))
    ones = np.ones((h, w))

    if light.kind == DIRECTIONAL:
        vis = _visibility(occ, surf, light, salt=salt)
        accumulate(light.direction, vis, ones, 1.0, dif, spc)
    elif light.kind == POINT:
        px, py, pz = light.position
        vis = _point_visibility(occ, surf, px, py, pz)
        lv = np.stack([px - u, py - v, pz - surf], axis=-1)
        dist = np.maximum(np.linalg.norm(lv, axis=-1), 1e-12)
        accumulate(lv / dist[..., None], vis, 1.0 / dist**2, 1.0, dif, spc)
    elif light.kind == AREA_RECT:
        n_samples = AREA_LIGHT_SAMPLES
        for k in range(n_samples):
            px, py, pz = _area_sample_position(light, k, n_samples, salt, (h, w))
            vis = _point_visibility(occ, surf, px, py, pz)
            lv = np.stack([px - u, py - v, pz - surf], axis=-1)
            dist = np.maximum(np.linalg.norm(lv, axis=-1), 1e-12)
            accumulate(lv / dist[..., None], vis, 1.0 / dist**2,
                       1.0 / n_samples, dif, spc)
    else:
        raise ValueError(f"unknown light kind {light.kind!r}")
    return dif, spc


def _flip_about_waterline(arr: np.ndarray, plane_height: float) -> np.ndarray:
    """Mirror image rows about the waterline.

    plane_height is the waterline's height above the bottom frame edge,
    so a feature h above the line lands h below it.  Rows reflected to
    outside the frame contribute zero.
    """
    h = arr.shape[0]
    v = (np.arange(h) + 0.5) / h
    vp = 2.0 * (1.0 - plane_height) - v
    valid = (vp >= 0.0) & (vp <= 1.0)
    pos = np.clip(vp * h - 0.5, 0.0, h - 1.0)
    j0 = np.clip(np.floor(pos).astype(int), 0, h - 2)
    frac = (pos - j0).reshape(-1, *([1] * (arr.ndim - 1)))
    out = arr[j0] * (1.0 - frac) + arr[j0 + 1] * frac
    out[~valid] = 0.0
    return out


def default_exposure(lights) -> float:
    total = sum(float(luminance(l.intensity[:3])) for l in lights)
    return 1.0 / max(total, 1e-12)


def compute_w(scene: MockScene, t: float = 0.0, *,
              threads: Optional[int] = None) -> IlluminationImage:
    """Illumination planes per light group at time t.

    Layers are lit independently and alpha-composited back-to-front, in
    list order; planar mirror layers additionally receive the folded
    geometry radiance flipped about their waterline.  Control textures
    never enter this computation.
    """
    w_res, h_res = scene.resolution
    lights = lights_at(scene, t)
    exposure = scene.exposure if scene.exposure is not None else default_exposure(lights)

    rasters = [_layer_raster(layer, w_res, h_res) for layer in scene.layers]
    occ = _occluder_height(rasters)
    u, v = pixel_centers(w_res, h_res)
    groups = sorted({l.group for l in lights})
    zero_plane = np.zeros((h_res, w_res, 4))

    # backdrop wall at z = 0, facing the viewer
    backdrop_surf = np.zeros((h_res, w_res))
    backdrop_n = np.zeros((h_res, w_res, 3))
    backdrop_n[..., 2] = 1.0

    dif_planes = {g: None for g in groups}
    spc_planes = {g: None for g in groups}
    ambient: Dict[int, np.ndarray] = {g: np.zeros(4) for g in groups}

    for g in groups:
        group_lights = [
            (i, li) for i, li in enumerate(lights) if li.group == g
        ]
        bd = np.zeros((h_res, w_res, 4))
        bs = np.zeros((h_res, w_res, 4))
        view_b = _view_dirs(scene.camera, u, v, backdrop_surf)
        for i, li in group_lights:
            d1, s1 = _shade_surface(backdrop_surf, backdrop_n, view_b, li,
                                    1.0, 0.0, occ, i, threads)
            bd += d1
            bs += s1
        dif_g, spc_g = bd, bs
        for layer, (matte, surf, normals, albedo) in zip(scene.layers, rasters):
            view = _view_dirs(scene.camera, u, v, surf)
            ld = np.zeros((h_res, w_res, 4))
            ls = np.zeros((h_res, w_res, 4))
            for i, li in group_lights:
                d1, s1 = _shade_surface(
                    surf, normals, view, li,
                    layer.material.shininess, layer.material.specular_strength,
                    occ, i, threads,
                )
                ld += d1
                ls += s1
            if scene.bleed > 0.0:
                bounce = matte[..., None] * albedo * ld
                ambient[g] += scene.bleed * bounce.reshape(-1, 4).mean(axis=0)
            m = matte[..., None]
            dif_g = ld * m + dif_g * (1.0 - m)
            spc_g = ls * m + spc_g * (1.0 - m)
        # mirror layers receive the folded geometry radiance, flipped
        for layer, (matte, _, _, _) in zip(scene.layers, rasters):
            mirror = layer.material.mirror
            if mirror is None:
                continue
            m = matte[..., None]
            dif_g = dif_g + _flip_about_waterline(dif_g, mirror.plane_height) * m
            spc_g = spc_g + _flip_about_waterline(spc_g, mirror.plane_height) * m
        dif_g = dif_g + ambient[g]
        for caustic, cg in scene.caustics:
            if cg == g:
                dif_g = dif_g * resample(caustic, w_res, h_res).values[..., None]
        dif_planes[g] = dif_g
        spc_planes[g] = spc_g

    total = zero_plane.copy()
    for g in groups:
        total = total + dif_planes[g] + spc_planes[g]
    combined = np.clip(exposure * luminance(total[..., :3]), 0.0, 1.0)

    return IlluminationImage(
        diffuse={g: Field2D(dif_planes[g]) for g in groups},
        specular={g: Field2D(spc_planes[g]) for g in groups},
        t=t,
        exposure=exposure,
        combined_w=Field2D(combined),
    )


def scene_radiance(scene: MockScene, t: float = 0.0, *,
                   threads: Optional[int] = None,
                   w_image: Optional[IlluminationImage] = None) -> Field2D:
    """Total illumination-stage radiance (all groups, diffuse+specular)."""
    w_image = w_image if w_image is not None else compute_w(scene, t, threads=threads)
    total = None
    for g in w_image.diffuse:
        plane = w_image.diffuse[g].values + w_image.specular[g].values
        total = plane if total is None else total + plane
    return Field2D(total)


def mirror_reflect(scene: MockScene, mirror_layer: Layer,
                   camera: Optional[Camera] = None, *, t: float = 0.0,
                   threads: Optional[int] = None,
                   w_image: Optional[IlluminationImage] = None) -> Field2D:
    """Reflected radiance on a planar mirror layer, masked by its matte.

    The reflected hit is shaded with its illumination-stage radiance
    (geometry composited over the background image); the mirror's own
    first-hit material is not applied.
    """
    mirror = mirror_layer.material.mirror
    if mirror is None:
        raise NotAMirror(f"layer {mirror_layer.id!r} has no planar mirror")
    w_res, h_res = scene.resolution
    radiance = scene_radiance(scene, t, threads=threads, w_image=w_image).values

    coverage = np.zeros((h_res, w_res))
    for layer in scene.layers:
        m = resample(layer.shape.matte, w_res, h_res).values
        coverage = m + coverage * (1.0 - m)
    source = radiance * coverage[..., None]
    if scene.background is not None:
        source = source + scene.background.values * (1.0 - coverage[..., None])

    reflected = _flip_about_waterline(source, mirror.plane_height)
    matte = resample(mirror_layer.shape.matte, w_res, h_res).values
    return Field2D(reflected * matte[..., None])


def refract_offset(scene: MockScene, layer: Layer, eta: float,
                   camera: Optional[Camera] = None, *,
                   threads: Optional[int] = None) -> RefractionResult:
    """Screen-space refraction through a transmissive layer.

    The view ray bends by Snell's law at the layer normal and resamples
    the background at the offset position; Schlick Fresnel blends in the
    mirror reflection.  Total-internal-reflection pixels fall back to
    pure reflection and are counted.
    """
    if not layer.material.transmissive:
        raise ValueError(f"layer {layer.id!r} is not transmissive")
    if eta <= 0:
        raise ValueError("eta must be > 0")
    w_res, h_res = scene.resolution
    matte, surf, normals, _ = _layer_raster(layer, w_res, h_res)
    u, v = pixel_centers(w_res, h_res)

    camera = camera if camera is not None else scene.camera
    view = _view_dirs(camera, u, v, surf)
    d = -view  # propagation direction, into the scene
    cosi = np.clip(-np.sum(d * normals, axis=-1), 0.0, 1.0)
    k = 1.0 - (1.0 - cosi**2) / eta**2
    tir = k < 0.0
    k_safe = np.sqrt(np.maximum(k, 0.0))
    t_dir = d / eta + (cosi / eta - k_safe)[..., None] * normals

    if layer.shape.kind == SHAPE_MAP:
        gap = resample(layer.shape.thickness, w_res, h_res).values
    else:
        gap = np.full((h_res, w_res), max(layer.c, 0.0))
    tz = np.maximum(np.abs(t_dir[..., 2]), 1e-9)
    offsets = t_dir[..., :2] / tz[..., None] * gap[..., None]
    offsets[tir] = 0.0

    if scene.background is not None:
        refr = sample_grid(scene.background, u + offsets[..., 0], v + offsets[..., 1])
    else:
        refr = np.zeros((h_res, w_res, 4))

    f0 = ((1.0 - eta) / (1.0 + eta)) ** 2
    fresnel = f0 + (1.0 - f0) * (1.0 - cosi) ** 5
    fresnel = np.where(tir, 1.0, fresnel)

    if layer.material.mirror is not None:
        reflect = mirror_reflect(scene, layer, camera, threads=threads).values
    else:
        reflect = np.zeros((h_res, w_res, 4))

    color = (
        fresnel[..., None] * reflect + (1.0 - fresnel[..., None]) * refr
    ) * matte[..., None]
    return RefractionResult(
        color=Field2D(color),
        offsets=offsets,
        fresnel=Field2D(fresnel),
        tir_count=int(tir.sum()),
    )


def render_frame(scene: MockScene, t: float = 0.0, *,
                 threads: Optional[int] = None,
                 w_image: Optional[IlluminationImage] = None
                 ) -> Tuple[Field2D, IlluminationImage]:
    """Full two-stage render: W, then per-layer barycentric styling.

    Each layer is styled with its own control textures under the scene's
    weight basis; the background image is modulated by combined_w so it
    still shows cast shadows.  Output is unclamped linear rgba.
    """
    if w_image is None:
        w_image = compute_w(scene, t, threads=threads)
    w_res, h_res = scene.resolution
    if scene.shading is not None:
        basis = scene.shading.basis
        src = scene.shading.w_source
    else:
        basis = WeightBasis(LINEAR)
        src = None

    if src is None or src.plane == COMBINED:
        w_vals = w_image.combined_w.values
    else:
        w_vals = normalized_w(w_image, src.plane, src.group)
    weights = eval_basis(basis, w_vals)

    if scene.background is not None:
        out = scene.background.values.copy()
        out[..., :3] *= w_image.combined_w.values[..., None]
    else:
        out = np.zeros((h_res, w_res, 4))

    for layer in scene.layers:
        stack = np.stack([
            resample(tex, w_res, h_res).values for tex in layer.control_textures
        ])
        styled = np.empty((h_res, w_res, 4))

        def band(j0, j1):
            styled[j0:j1] = np.einsum(
                "hwn,nhwc->hwc", weights[j0:j1], stack[:, j0:j1]
            )
        run_rows(band, h_res, threads)
        m = resample(layer.shape.matte, w_res, h_res).values[..., None]
        out = styled * m + out * (1.0 - m)

    if scene.shading is not None and scene.shading.specular_overlay is not None:
        overlay = scene.shading.specular_overlay
        total_spec = None
        for g in w_image.specular:
            sv = w_image.specular[g].values
            total_spec = sv if total_spec is None else total_spec + sv
        ws = np.clip(w_image.exposure * luminance(total_spec[..., :3]), 0.0, 1.0)
        ow = eval_basis(overlay.basis, ws)
        ostack = np.stack([
            resample(tex, w_res, h_res).values for tex in overlay.textures
        ])
        out = out + np.einsum("hwn,nhwc->hwc", ow, ostack)

    return Field2D(out), w_image
