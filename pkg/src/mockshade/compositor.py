"""Augmentation compositing: fold virtual-object impact images into a
background photograph.

Virtual objects never touch the background directly; their shadows,
reflections, refractions, and styled color are rendered against proxy
geometry as separate planes (an ImpactSet) and combined here in a fixed
order.  All colors are premultiplied so the over operator stays
associative.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional, Sequence, Set, Tuple

import numpy as np

from .errors import ResolutionMismatch
from .field import Field2D, luminance, resample
from .illumination import (
    _layer_raster,
    _occluder_height,
    _visibility,
    mirror_reflect,
    render_frame,
)
from .scene import MockScene, lights_at

_PREMULT_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class ImpactSet:
    """Isolated effect of virtual objects on a proxy scene.

    Colors are premultiplied: every channel is bounded by the matte it
    belongs to (object_color by object_matte, reflection and refraction
    by their own alpha).
    """

    object_color: Field2D
    object_matte: Field2D
    shadow: Field2D
    reflection: Field2D
    refraction: Optional[Field2D] = None

    def __post_init__(self):
        for name in ("object_matte", "shadow"):
            m = getattr(self, name).values
            if m.min() < 0.0 or m.max() > 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        oc = self.object_color.values
        om = self.object_matte.values
        if (oc[..., :3] - om[..., None]).max() > _PREMULT_TOL:
            raise ValueError("object_color must be premultiplied by object_matte")
        rf = self.reflection.values
        if (rf[..., :3] - rf[..., 3:4]).max() > _PREMULT_TOL:
            raise ValueError("reflection must be premultiplied by its alpha")
        if self.refraction is not None:
            rr = self.refraction.values
            if (rr[..., :3] - rr[..., 3:4]).max() > _PREMULT_TOL:
                raise ValueError("refraction must be premultiplied by its alpha")

    @staticmethod
    def empty(width: int, height: int) -> "ImpactSet":
        zero4 = Field2D(np.zeros((height, width, 4)))
        zero1 = Field2D(np.zeros((height, width)))
        return ImpactSet(object_color=zero4, object_matte=zero1,
                         shadow=zero1, reflection=zero4)


@dataclass(frozen=True, eq=False)
class CompositeRecipe:
    background: Field2D
    impacts: Tuple[ImpactSet, ...] = ()
    shadow_strength: float = 1.0
    shadow_tint: np.ndarray = dataclasses.field(
        default_factory=lambda: np.zeros(3)
    )

    def __post_init__(self):
        if not 0.0 <= self.shadow_strength <= 1.0:
            raise ValueError("shadow_strength must lie in [0, 1]")
        tint = np.asarray(self.shadow_tint, dtype=np.float64)
        if tint.shape != (3,) or tint.min() < 0.0 or tint.max() > 1.0:
            raise ValueError("shadow_tint must be 3 values in [0, 1]")
        object.__setattr__(self, "shadow_tint", tint)


def _fold_matte(mattes) -> np.ndarray:
    out = None
    for m in mattes:
        out = m if out is None else m + out * (1.0 - m)
    return out


def render_impacts(scene_with_virtual: MockScene,
                   virtual_ids: Set[str]) -> ImpactSet:
    """Impact planes of the given layers on the remaining proxy scene.

    shadow is the extra occlusion the virtual objects add on proxy
    receivers (difference of visibilities, clamped nonnegative);
    reflection is the virtual-only part of every proxy mirror; the
    object planes are a stand-alone render of the virtual layers.
    """
    scene = scene_with_virtual
    w_res, h_res = scene.resolution
    for vid in virtual_ids:
        scene.layer_index(vid)  # raises UnknownLayer
    virtual = [l for l in scene.layers if l.id in virtual_ids]
    proxies = [l for l in scene.layers if l.id not in virtual_ids]
    if not virtual:
        return ImpactSet.empty(w_res, h_res)

    rasters_all = {l.id: _layer_raster(l, w_res, h_res) for l in scene.layers}
    occ_full = _occluder_height([rasters_all[l.id] for l in scene.layers])
    occ_proxy = _occluder_height([rasters_all[l.id] for l in proxies])

    # receiving surface: front-most proxy layer, else the backdrop wall
    surf_recv = np.zeros((h_res, w_res))
    for layer in proxies:
        matte, surf, _, _ = rasters_all[layer.id]
        surf_recv = np.where(matte > 0.5, surf, surf_recv)

    lights = lights_at(scene, 0.0)
    lums = np.array([max(float(luminance(l.intensity[:3])), 0.0) for l in lights])
    weights = lums / lums.sum() if lums.sum() > 0 else np.full(len(lights), 1.0 / len(lights))
    shadow = np.zeros((h_res, w_res))
    for i, (light, wgt) in enumerate(zip(lights, weights)):
        vis_proxy = _visibility(occ_proxy, surf_recv, light, salt=i)
        vis_full = _visibility(occ_full, surf_recv, light, salt=i)
        shadow += wgt * np.clip(vis_proxy - vis_full, 0.0, 1.0)
    shadow = np.clip(shadow, 0.0, 1.0)

    # object planes: the virtual layers rendered alone (no background)
    solo = dataclasses.replace(scene, layers=tuple(virtual), background=None)
    color, _ = render_frame(solo)
    object_matte = _fold_matte(
        resample(l.shape.matte, w_res, h_res).values for l in virtual
    )
    object_color = np.minimum(
        np.clip(color.values, 0.0, None), object_matte[..., None]
    )
    shadow = shadow * (1.0 - object_matte)

    # virtual-only share of every proxy mirror
    reflection = np.zeros((h_res, w_res, 4))
    proxy_scene = dataclasses.replace(scene, layers=tuple(proxies))
    for layer in proxies:
        if layer.material.mirror is None:
            continue
        full = mirror_reflect(scene, layer).values
        base = mirror_reflect(proxy_scene, layer).values
        reflection += np.clip(full - base, 0.0, None)
    matte_total = _fold_matte(
        [resample(l.shape.matte, w_res, h_res).values for l in proxies
         if l.material.mirror is not None] or [np.zeros((h_res, w_res))]
    )
    reflection[..., :3] = np.minimum(reflection[..., :3], matte_total[..., None])
    reflection[..., 3] = np.minimum(reflection[..., 3], matte_total)
    reflection[..., :3] = np.minimum(reflection[..., :3], reflection[..., 3:4])

    return ImpactSet(
        object_color=Field2D(object_color),
        object_matte=Field2D(object_matte),
        shadow=Field2D(shadow),
        reflection=Field2D(reflection),
    )


def composite(recipe: CompositeRecipe) -> Field2D:
    """Fold impact sets over the background in a fixed per-impact order:
    shadow darkening, additive reflection, refraction replacement, then
    the object over-composite.  Empty impacts return the background
    bit-exactly."""
    bg = recipe.background.values
    shape = bg.shape[:2]
    out = bg.copy()
    k = recipe.shadow_strength
    tint = recipe.shadow_tint
    for impact in recipe.impacts:
        planes = [impact.object_color, impact.object_matte,
                  impact.shadow, impact.reflection]
        if impact.refraction is not None:
            planes.append(impact.refraction)
        for p in planes:
            if p.values.shape[:2] != shape:
                raise ResolutionMismatch(
                    f"impact plane {p.values.shape[:2]} vs background {shape}"
                )
        shadow = impact.shadow.values
        factor = 1.0 - k * shadow[..., None] * (1.0 - tint)
        out[..., :3] = out[..., :3] * factor
        out[..., :3] = out[..., :3] + impact.reflection.values[..., :3]
        if impact.refraction is not None:
            refr = impact.refraction.values
            out = refr + out * (1.0 - refr[..., 3:4])
        matte = impact.object_matte.values[..., None]
        out = impact.object_color.values + out * (1.0 - matte)
    return Field2D(out)
