"""mockshade: two-stage expressive renderer.

Stage one computes a material-free illumination image W over mock-3D
layer scenes (height fields, normal maps, shape maps); stage two turns W
into styled images as barycentric combinations of control textures.
"""

from .anamorph import BakedAnamorph, Receiver, bake, camera_rays, render_view
from .baryshade import (
    ShadingSpec,
    WeightBasis,
    eval_basis,
    normalized_w,
    robustness_bound,
    shade,
)
from .compositor import CompositeRecipe, ImpactSet, composite, render_impacts
from .errors import (
    MockshadeError,
    NonLipschitzBasis,
    NotAMirror,
    ResolutionMismatch,
    SceneParseError,
    SolverDiverged,
    UnknownLayer,
)
from .field import (
    Field2D,
    SampleSpec,
    finite_diff_gradient,
    gaussian_blur,
    luminance,
    psnr,
    sample,
)
from .flatland import (
    FlatLight,
    FlatOccluder,
    FlatScene,
    extruded_height_profile,
    flatland_render,
    mask_iou,
)
from .illumination import (
    IlluminationImage,
    cast_shadow,
    compute_w,
    mirror_reflect,
    refract_offset,
    render_frame,
    scene_radiance,
)
from .integrability import curl_residual, integrate_normals
from .scene import Camera, Layer, Light, MockScene, lights_at, parse_scene
from .service import create_app

__all__ = [
    "BakedAnamorph",
    "Camera",
    "CompositeRecipe",
    "Field2D",
    "FlatLight",
    "FlatOccluder",
    "FlatScene",
    "IlluminationImage",
    "ImpactSet",
    "Layer",
    "Light",
    "MockScene",
    "MockshadeError",
    "NonLipschitzBasis",
    "NotAMirror",
    "Receiver",
    "ResolutionMismatch",
    "SampleSpec",
    "SceneParseError",
    "ShadingSpec",
    "SolverDiverged",
    "UnknownLayer",
    "WeightBasis",
    "bake",
    "camera_rays",
    "cast_shadow",
    "composite",
    "compute_w",
    "create_app",
    "curl_residual",
    "eval_basis",
    "extruded_height_profile",
    "finite_diff_gradient",
    "flatland_render",
    "gaussian_blur",
    "integrate_normals",
    "lights_at",
    "luminance",
    "mask_iou",
    "mirror_reflect",
    "normalized_w",
    "parse_scene",
    "psnr",
    "refract_offset",
    "render_frame",
    "render_impacts",
    "render_view",
    "robustness_bound",
    "sample",
    "scene_radiance",
    "shade",
]

__version__ = "0.1.0"
