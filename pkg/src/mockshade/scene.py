"""Mock-3D scene model: layered unit rectangles plus lights and a camera.

A scene is a JSON document.  Parsing is strict (unknown keys rejected)
and aggregates every validation problem into one SceneParseError rather
than failing on the first.  The parsed model keeps a normalized copy of
the document so edits and serialization round-trip exactly.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from . import imageio
from .baryshade import (
    BEZIER,
    BSPLINE0,
    COMBINED,
    DIFFUSE,
    LINEAR,
    SPECULAR,
    ShadingSpec,
    WeightBasis,
    WSource,
)
from .errors import (
    BAD_DOCUMENT,
    BAD_REFERENCE,
    INVARIANT_VIOLATION,
    MISSING_CHANNEL,
    SceneIssue,
    SceneParseError,
    UnknownLayer,
)
from .field import Field2D, resample

HEIGHT_FIELD = "height_field"
NORMAL_FIELD = "normal_field"
SHAPE_MAP = "shape_map"

DIRECTIONAL = "directional"
POINT = "point"
AREA_RECT = "area_rect"

ORTHO_FRONTAL = "ortho_frontal"
VANTAGE = "vantage"

DEFAULT_RESOLUTION = 256
DEFAULT_SHININESS = 32.0
DEFAULT_ALBEDO = 0.5


@dataclass(frozen=True, eq=False)
class ShapeChannel:
    """Proxy shape of one layer plus its coverage matte.

    height is present iff kind == height_field; normals iff normal_field
    or shape_map; thickness iff shape_map.
    """

    kind: str
    matte: Field2D
    height: Optional[Field2D] = None
    normals: Optional[Field2D] = None
    thickness: Optional[Field2D] = None


@dataclass(frozen=True, eq=False)
class PlanarMirror:
    plane_height: float


@dataclass(frozen=True, eq=False)
class Material:
    diffuse_albedo: Field2D
    specular_strength: float = 0.0
    shininess: float = DEFAULT_SHININESS
    mirror: Optional[PlanarMirror] = None
    transmissive: bool = False


@dataclass(frozen=True, eq=False)
class Layer:
    """A textured unit rectangle P(u,v) = (u, v, c) with relief channels."""

    id: str
    c: float
    shape: ShapeChannel
    control_textures: Tuple[Field2D, ...]
    material: Material
    resolution: Tuple[int, int]
    z_deform: Optional[Field2D] = None


@dataclass(frozen=True, eq=False)
class Light:
    kind: str
    intensity: np.ndarray  # rgba, linear radiometric
    group: int = 0
    direction: Optional[np.ndarray] = None  # unit vector toward the light
    position: Optional[np.ndarray] = None
    extent: Optional[Tuple[float, float]] = None


@dataclass(frozen=True, eq=False)
class Camera:
    kind: str = ORTHO_FRONTAL
    eye: Optional[np.ndarray] = None
    look_at: Optional[np.ndarray] = None
    fov_y: Optional[float] = None


@dataclass(frozen=True, eq=False)
class LightKey:
    t: float
    light_index: int
    direction: Optional[np.ndarray] = None
    position: Optional[np.ndarray] = None
    intensity: Optional[np.ndarray] = None


@dataclass(frozen=True, eq=False)
class LightPath:
    """Per-light keyframes, linearly interpolated in t."""

    keys: Tuple[LightKey, ...]
    interpolation: str = "linear"


@dataclass(frozen=True, eq=False)
class MockScene:
    layers: Tuple[Layer, ...]
    lights: Tuple[Light, ...]
    camera: Camera
    resolution: Tuple[int, int]
    background: Optional[Field2D] = None
    shading: Optional[ShadingSpec] = None
    exposure: Optional[float] = None  # None -> 1 / total light intensity
    bleed: float = 0.0
    caustics: Tuple[Tuple[Field2D, int], ...] = ()
    light_path: Optional[LightPath] = None
    document: dict = dc_field(default_factory=dict)
    base_dir: Optional[Path] = None

    def layer_index(self, layer_id: str) -> int:
        for i, layer in enumerate(self.layers):
            if layer.id == layer_id:
                return i
        raise UnknownLayer(f"no layer with id {layer_id!r}")


class _Collector:
    """Accumulates issues; loading helpers return None after reporting."""

    def __init__(self):
        self.issues = []

    def add(self, kind: str, path: str, message: str):
        self.issues.append(SceneIssue(kind, path, message))

    def raise_if_any(self):
        if self.issues:
            raise SceneParseError(self.issues)


def _check_keys(obj: dict, allowed, path: str, col: _Collector):
    for key in obj:
        if key not in allowed:
            col.add(INVARIANT_VIOLATION, f"{path}.{key}", "unknown key (strict mode)")


def _as_float(value, path, col, default=None, minimum=None):
    if value is None:
        return default
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        col.add(INVARIANT_VIOLATION, path, f"expected a number, got {value!r}")
        return default
    v = float(value)
    if minimum is not None and v < minimum:
        col.add(INVARIANT_VIOLATION, path, f"must be >= {minimum}, got {v}")
        return default
    return v


def _as_vec(value, n, path, col):
    if (
        not isinstance(value, (list, tuple))
        or len(value) != n
        or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in value)
    ):
        col.add(INVARIANT_VIOLATION, path, f"expected {n} numbers, got {value!r}")
        return None
    return np.asarray(value, dtype=np.float64)


def _as_rgba(value, path, col):
    """Color shorthand: scalar -> gray, rgb -> alpha 1, rgba as-is."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        v = float(value)
        return np.array([v, v, v, 1.0])
    if isinstance(value, (list, tuple)) and len(value) in (3, 4):
        vec = _as_vec(value, len(value), path, col)
        if vec is None:
            return None
        if len(vec) == 3:
            vec = np.append(vec, 1.0)
        return vec
    col.add(INVARIANT_VIOLATION, path, f"expected color, got {value!r}")
    return None


def _resolve_path(src: str, base_dir: Optional[Path]) -> Path:
    p = Path(src)
    if not p.is_absolute() and base_dir is not None:
        p = base_dir / p
    return p


def _load_scalar_source(src, res, base_dir, path, col, clamp01=False):
    """Scalar field from a path, a constant, or an inline row-major grid."""
    w, h = res
    if isinstance(src, (int, float)) and not isinstance(src, bool):
        f = Field2D.constant(float(src), w, h)
    elif isinstance(src, str):
        p = _resolve_path(src, base_dir)
        try:
            if p.suffix.lower() == ".pfm":
                f = imageio.load_pfm(str(p))
                if not f.is_scalar:
                    col.add(INVARIANT_VIOLATION, path, f"{src}: expected grayscale")
                    return None
            else:
                f = imageio.load_scalar(str(p))
        except FileNotFoundError:
            col.add(BAD_REFERENCE, path, f"file not found: {p}")
            return None
        except Exception as exc:
            col.add(BAD_REFERENCE, path, f"{p}: {exc}")
            return None
    elif isinstance(src, list):
        arr = np.asarray(src, dtype=np.float64)
        if arr.ndim != 2:
            col.add(INVARIANT_VIOLATION, path, "inline grid must be 2D")
            return None
        f = Field2D(arr)
    else:
        col.add(INVARIANT_VIOLATION, path, f"expected path/number/grid, got {src!r}")
        return None
    f = resample(f, w, h)
    if clamp01 and (f.values.min() < -1e-9 or f.values.max() > 1 + 1e-9):
        col.add(INVARIANT_VIOLATION, path, "values must lie in [0, 1]")
        return None
    return f


def _load_color_source(src, res, base_dir, path, col):
    w, h = res
    if isinstance(src, str):
        p = _resolve_path(src, base_dir)
        try:
            loader = imageio.load_pfm if p.suffix.lower() == ".pfm" else imageio.load_color
            f = loader(str(p))
        except FileNotFoundError:
            col.add(BAD_REFERENCE, path, f"file not found: {p}")
            return None
        except Exception as exc:
            col.add(BAD_REFERENCE, path, f"{p}: {exc}")
            return None
        if f.is_scalar:
            rgba = np.empty(f.values.shape + (4,))
            rgba[..., :3] = f.values[..., None]
            rgba[..., 3] = 1.0
            f = Field2D(rgba, wrap_mode=f.wrap_mode)
        elif f.channels == 3:
            rgba = np.concatenate(
                [f.values, np.ones(f.values.shape[:2] + (1,))], axis=-1
            )
            f = Field2D(rgba, wrap_mode=f.wrap_mode)
        return resample(f, w, h)
    if isinstance(src, list) and src and isinstance(src[0], list):
        arr = np.asarray(src, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[2] not in (3, 4):
            col.add(INVARIANT_VIOLATION, path, "inline color grid must be HxWx3|4")
            return None
        if arr.shape[2] == 3:
            arr = np.concatenate([arr, np.ones(arr.shape[:2] + (1,))], axis=-1)
        return resample(Field2D(arr), w, h)
    rgba = _as_rgba(src, path, col)
    if rgba is None:
        return None
    return Field2D.constant(rgba, w, h)


def _load_normals_source(src, res, base_dir, path, col):
    w, h = res
    if isinstance(src, str):
        p = _resolve_path(src, base_dir)
        try:
            if p.suffix.lower() == ".pfm":
                f = imageio.load_pfm(str(p))
            else:
                f = imageio.load_normal_map(str(p))
        except FileNotFoundError:
            col.add(BAD_REFERENCE, path, f"file not found: {p}")
            return None
        except Exception as exc:
            col.add(BAD_REFERENCE, path, f"{p}: {exc}")
            return None
    elif isinstance(src, list):
        arr = np.asarray(src, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[2] != 3:
            col.add(INVARIANT_VIOLATION, path, "inline normals must be HxWx3")
            return None
        f = Field2D(arr)
    else:
        col.add(INVARIANT_VIOLATION, path, f"expected path/grid, got {src!r}")
        return None
    if f.channels != 3:
        col.add(INVARIANT_VIOLATION, path, "normal map must have 3 channels")
        return None
    f = resample(f, w, h)
    norms = np.linalg.norm(f.values, axis=-1)
    if norms.min() < 1e-12:
        col.add(INVARIANT_VIOLATION, path, "zero-length normal")
        return None
    return f.with_values(f.values / norms[..., None])


def _parse_resolution(value, path, col, default):
    if value is None:
        return default
    if isinstance(value, int) and not isinstance(value, bool) and value > 0:
        return (value, value)
    if (
        isinstance(value, (list, tuple))
        and len(value) == 2
        and all(isinstance(x, int) and not isinstance(x, bool) and x > 0 for x in value)
    ):
        return (int(value[0]), int(value[1]))
    col.add(INVARIANT_VIOLATION, path, f"expected int or [w, h], got {value!r}")
    return default


def _parse_shape(entry, matte_src, res, base_dir, lpath, col, layer_id):
    if not isinstance(entry, dict):
        col.add(MISSING_CHANNEL, f"{lpath}.shape", f"layer {layer_id!r}: shape required")
        return None
    _check_keys(entry, {"kind", "height", "normals", "thickness"}, f"{lpath}.shape", col)
    kind = entry.get("kind")
    if kind not in (HEIGHT_FIELD, NORMAL_FIELD, SHAPE_MAP):
        col.add(
            MISSING_CHANNEL,
            f"{lpath}.shape.kind",
            f"layer {layer_id!r}: kind must be one of "
            f"{HEIGHT_FIELD}/{NORMAL_FIELD}/{SHAPE_MAP}",
        )
        return None

    matte = _load_scalar_source(
        1.0 if matte_src is None else matte_src,
        res, base_dir, f"{lpath}.matte", col, clamp01=True,
    )

    height = normals = thickness = None
    if kind == HEIGHT_FIELD:
        if "height" not in entry:
            col.add(MISSING_CHANNEL, f"{lpath}.shape.height",
                    f"layer {layer_id!r}: height_field needs a height channel")
        else:
            height = _load_scalar_source(
                entry["height"], res, base_dir, f"{lpath}.shape.height", col
            )
        for extra in ("normals", "thickness"):
            if extra in entry:
                col.add(INVARIANT_VIOLATION, f"{lpath}.shape.{extra}",
                        f"layer {layer_id!r}: {extra} not allowed for height_field")
    else:
        if "normals" not in entry:
            col.add(MISSING_CHANNEL, f"{lpath}.shape.normals",
                    f"layer {layer_id!r}: {kind} needs a normals channel")
        else:
            normals = _load_normals_source(
                entry["normals"], res, base_dir, f"{lpath}.shape.normals", col
            )
        if kind == SHAPE_MAP:
            if "thickness" not in entry:
                col.add(MISSING_CHANNEL, f"{lpath}.shape.thickness",
                        f"layer {layer_id!r}: shape_map needs a thickness channel")
            else:
                thickness = _load_scalar_source(
                    entry["thickness"], res, base_dir, f"{lpath}.shape.thickness", col
                )
                if thickness is not None and thickness.values.min() < 0:
                    col.add(INVARIANT_VIOLATION, f"{lpath}.shape.thickness",
                            f"layer {layer_id!r}: thickness must be >= 0")
                    thickness = None
        elif "thickness" in entry:
            col.add(INVARIANT_VIOLATION, f"{lpath}.shape.thickness",
                    f"layer {layer_id!r}: thickness not allowed for normal_field")
        if "height" in entry:
            col.add(INVARIANT_VIOLATION, f"{lpath}.shape.height",
                    f"layer {layer_id!r}: height not allowed for {kind}")

    if matte is None:
        return None
    return ShapeChannel(kind=kind, matte=matte, height=height,
                        normals=normals, thickness=thickness)


def _parse_material(entry, res, base_dir, lpath, col, layer_id):
    entry = entry if isinstance(entry, dict) else {}
    _check_keys(
        entry,
        {"albedo", "specular", "shininess", "mirror", "transmissive"},
        f"{lpath}.material", col,
    )
    albedo = _load_color_source(
        entry.get("albedo", DEFAULT_ALBEDO), res, base_dir,
        f"{lpath}.material.albedo", col,
    )
    specular = _as_float(entry.get("specular"), f"{lpath}.material.specular",
                         col, default=0.0, minimum=0.0)
    shininess = _as_float(entry.get("shininess"), f"{lpath}.material.shininess",
                          col, default=DEFAULT_SHININESS, minimum=1.0)
    transmissive = entry.get("transmissive", False)
    if not isinstance(transmissive, bool):
        col.add(INVARIANT_VIOLATION, f"{lpath}.material.transmissive",
                "expected true/false")
        transmissive = False

    mirror_entry = entry.get("mirror")
    mirror = None
    if mirror_entry not in (None, "none"):
        if isinstance(mirror_entry, dict) and set(mirror_entry) == {"plane_height"}:
            ph = _as_float(mirror_entry["plane_height"],
                           f"{lpath}.material.mirror.plane_height", col)
            if ph is not None:
                mirror = PlanarMirror(plane_height=ph)
        else:
            col.add(INVARIANT_VIOLATION, f"{lpath}.material.mirror",
                    'expected "none" or {"plane_height": h}')
    if albedo is None:
        return None
    return Material(diffuse_albedo=albedo, specular_strength=specular,
                    shininess=shininess, mirror=mirror, transmissive=transmissive)


def _parse_layer(entry, index, scene_res, base_dir, col):
    lpath = f"layers[{index}]"
    if not isinstance(entry, dict):
        col.add(INVARIANT_VIOLATION, lpath, "layer must be an object")
        return None
    _check_keys(
        entry,
        {"id", "c", "resolution", "shape", "matte", "textures", "material", "z_deform"},
        lpath, col,
    )
    layer_id = entry.get("id")
    if not isinstance(layer_id, str) or not layer_id:
        col.add(INVARIANT_VIOLATION, f"{lpath}.id", "layer id must be a nonempty string")
        layer_id = f"<layer {index}>"
    res = _parse_resolution(entry.get("resolution"), f"{lpath}.resolution", col, scene_res)
    c = _as_float(entry.get("c"), f"{lpath}.c", col, default=0.0)

    shape = _parse_shape(entry.get("shape"), entry.get("matte"), res, base_dir,
                         lpath, col, layer_id)
    material = _parse_material(entry.get("material", {}), res, base_dir,
                               lpath, col, layer_id)

    tex_entries = entry.get("textures", [0.0, 1.0])
    textures = []
    if not isinstance(tex_entries, list) or len(tex_entries) < 2:
        col.add(INVARIANT_VIOLATION, f"{lpath}.textures",
                f"layer {layer_id!r}: needs at least 2 control textures")
    else:
        for ti, tsrc in enumerate(tex_entries):
            tex = _load_color_source(tsrc, res, base_dir,
                                     f"{lpath}.textures[{ti}]", col)
            if tex is not None:
                textures.append(tex)
        if len(textures) != len(tex_entries):
            textures = []

    z_deform = None
    if "z_deform" in entry and entry["z_deform"] is not None:
        z_deform = _load_scalar_source(entry["z_deform"], res, base_dir,
                                       f"{lpath}.z_deform", col)

    if shape is None or material is None or not textures:
        return None
    return Layer(id=layer_id, c=c, shape=shape, control_textures=tuple(textures),
                 material=material, resolution=res, z_deform=z_deform)


def _parse_light(entry, index, col):
    lpath = f"lights[{index}]"
    if not isinstance(entry, dict):
        col.add(INVARIANT_VIOLATION, lpath, "light must be an object")
        return None
    _check_keys(entry, {"kind", "direction", "position", "extent", "intensity", "group"},
                lpath, col)
    kind = entry.get("kind")
    if kind not in (DIRECTIONAL, POINT, AREA_RECT):
        col.add(INVARIANT_VIOLATION, f"{lpath}.kind",
                f"kind must be {DIRECTIONAL}/{POINT}/{AREA_RECT}")
        return None
    intensity = _as_rgba(entry.get("intensity", 1.0), f"{lpath}.intensity", col)
    if intensity is None:
        return None
    if intensity.min() < 0:
        col.add(INVARIANT_VIOLATION, f"{lpath}.intensity",
                "intensity must be nonnegative")
        return None
    group = entry.get("group", 0)
    if not isinstance(group, int) or isinstance(group, bool):
        col.add(INVARIANT_VIOLATION, f"{lpath}.group", "group must be an integer")
        return None

    direction = position = None
    extent = None
    if kind == DIRECTIONAL:
        direction = _as_vec(entry.get("direction"), 3, f"{lpath}.direction", col)
        if direction is not None:
            norm = float(np.linalg.norm(direction))
            if norm < 1e-12:
                col.add(INVARIANT_VIOLATION, f"{lpath}.direction",
                        "direction must be nonzero")
                return None
            direction = direction / norm
        else:
            return None
    else:
        position = _as_vec(entry.get("position"), 3, f"{lpath}.position", col)
        if position is None:
            return None
        if kind == AREA_RECT:
            ext = entry.get("extent")
            if (
                not isinstance(ext, (list, tuple)) or len(ext) != 2
                or not all(isinstance(x, (int, float)) and not isinstance(x, bool)
                           and x > 0 for x in ext)
            ):
                col.add(INVARIANT_VIOLATION, f"{lpath}.extent",
                        "area light needs extent [w, h] > 0")
                return None
            extent = (float(ext[0]), float(ext[1]))
    return Light(kind=kind, intensity=intensity, group=group,
                 direction=direction, position=position, extent=extent)


def _parse_camera(entry, col):
    if entry is None:
        return Camera()
    if not isinstance(entry, dict):
        col.add(INVARIANT_VIOLATION, "camera", "camera must be an object")
        return Camera()
    kind = entry.get("kind", ORTHO_FRONTAL)
    if kind == ORTHO_FRONTAL:
        _check_keys(entry, {"kind"}, "camera", col)
        return Camera()
    if kind != VANTAGE:
        col.add(INVARIANT_VIOLATION, "camera.kind",
                f"kind must be {ORTHO_FRONTAL} or {VANTAGE}")
        return Camera()
    _check_keys(entry, {"kind", "eye", "look_at", "fov_y"}, "camera", col)
    eye = _as_vec(entry.get("eye"), 3, "camera.eye", col)
    look_at = _as_vec(entry.get("look_at"), 3, "camera.look_at", col)
    fov_y = _as_float(entry.get("fov_y"), "camera.fov_y", col)
    if eye is None or look_at is None or fov_y is None:
        return Camera()
    if not (0.0 < fov_y < np.pi):
        col.add(INVARIANT_VIOLATION, "camera.fov_y", "fov_y must lie in (0, pi)")
        return Camera()
    if np.linalg.norm(eye - look_at) < 1e-12:
        col.add(INVARIANT_VIOLATION, "camera.eye", "eye must differ from look_at")
        return Camera()
    return Camera(kind=VANTAGE, eye=eye, look_at=look_at, fov_y=fov_y)


def _parse_basis(entry, path, col):
    if not isinstance(entry, dict) or "kind" not in entry:
        col.add(INVARIANT_VIOLATION, path, 'expected {"kind": ...}')
        return None
    kind = entry["kind"]
    try:
        if kind == LINEAR:
            _check_keys(entry, {"kind"}, path, col)
            return WeightBasis(LINEAR)
        if kind == BEZIER:
            _check_keys(entry, {"kind", "degree"}, path, col)
            degree = entry.get("degree")
            if not isinstance(degree, int) or isinstance(degree, bool):
                col.add(INVARIANT_VIOLATION, f"{path}.degree", "degree must be an integer")
                return None
            return WeightBasis(BEZIER, degree=degree)
        if kind == BSPLINE0:
            _check_keys(entry, {"kind", "knots"}, path, col)
            knots = entry.get("knots")
            if not isinstance(knots, list) or not all(
                isinstance(x, (int, float)) and not isinstance(x, bool) for x in knots
            ):
                col.add(INVARIANT_VIOLATION, f"{path}.knots", "knots must be numbers")
                return None
            return WeightBasis(BSPLINE0, knots=tuple(float(x) for x in knots))
    except ValueError as exc:
        col.add(INVARIANT_VIOLATION, path, str(exc))
        return None
    col.add(INVARIANT_VIOLATION, f"{path}.kind",
            f"kind must be {LINEAR}/{BEZIER}/{BSPLINE0}")
    return None


def _parse_w_source(entry, path, col):
    if entry is None or entry == COMBINED:
        return WSource()
    if isinstance(entry, dict):
        _check_keys(entry, {"plane", "group"}, path, col)
        plane = entry.get("plane")
        group = entry.get("group", 0)
        if plane in (DIFFUSE, SPECULAR) and isinstance(group, int):
            return WSource(plane=plane, group=group)
    col.add(INVARIANT_VIOLATION, path,
            'expected "combined" or {"plane": "diffuse"|"specular", "group": n}')
    return WSource()


def _gray_ramp(n: int, res) -> Tuple[Field2D, ...]:
    """Default style anchors: n constant grays from black to white."""
    w, h = res
    levels = np.linspace(0.0, 1.0, n)
    return tuple(
        Field2D.constant(np.array([g, g, g, 1.0]), w, h) for g in levels
    )


def _parse_shading(entry, res, base_dir, col, overlay=False):
    path = "shading.specular_overlay" if overlay else "shading"
    if entry is None:
        return None
    if not isinstance(entry, dict):
        col.add(INVARIANT_VIOLATION, path, "shading must be an object")
        return None
    allowed = {"basis", "textures"} if overlay else (
        {"basis", "textures", "w_source", "specular_overlay"}
    )
    _check_keys(entry, allowed, path, col)
    basis = _parse_basis(entry.get("basis", {"kind": LINEAR}), f"{path}.basis", col)
    if basis is None:
        return None
    tex_entries = entry.get("textures")
    if tex_entries is None:
        textures = _gray_ramp(basis.n_weights, res)
    else:
        if not isinstance(tex_entries, list):
            col.add(INVARIANT_VIOLATION, f"{path}.textures", "expected a list")
            return None
        textures = []
        for ti, tsrc in enumerate(tex_entries):
            tex = _load_color_source(tsrc, res, base_dir, f"{path}.textures[{ti}]", col)
            if tex is not None:
                textures.append(tex)
        if len(textures) != len(tex_entries):
            return None
        if len(textures) != basis.n_weights:
            col.add(INVARIANT_VIOLATION, f"{path}.textures",
                    f"{len(textures)} textures for {basis.n_weights} weights")
            return None
    w_source = WSource() if overlay else _parse_w_source(
        entry.get("w_source"), f"{path}.w_source", col
    )
    spec_overlay = None
    if not overlay and entry.get("specular_overlay") is not None:
        spec_overlay = _parse_shading(entry["specular_overlay"], res, base_dir,
                                      col, overlay=True)
    return ShadingSpec(basis=basis, textures=tuple(textures),
                       w_source=w_source, specular_overlay=spec_overlay)


def _parse_light_path(entry, n_lights, col):
    if entry is None:
        return None
    path = "light_path"
    if not isinstance(entry, dict):
        col.add(INVARIANT_VIOLATION, path, "light_path must be an object")
        return None
    _check_keys(entry, {"keys", "interpolation"}, path, col)
    interp = entry.get("interpolation", "linear")
    if interp != "linear":
        col.add(INVARIANT_VIOLATION, f"{path}.interpolation",
                'only "linear" interpolation is supported')
        return None
    raw_keys = entry.get("keys")
    if not isinstance(raw_keys, list) or not raw_keys:
        col.add(INVARIANT_VIOLATION, f"{path}.keys", "needs at least one key")
        return None
    keys = []
    for i, rk in enumerate(raw_keys):
        kpath = f"{path}.keys[{i}]"
        if not isinstance(rk, dict):
            col.add(INVARIANT_VIOLATION, kpath, "key must be an object")
            continue
        _check_keys(rk, {"t", "light_index", "direction", "position", "intensity"},
                    kpath, col)
        t = _as_float(rk.get("t"), f"{kpath}.t", col)
        li = rk.get("light_index", 0)
        if t is None:
            continue
        if not isinstance(li, int) or isinstance(li, bool) or not 0 <= li < n_lights:
            col.add(BAD_REFERENCE, f"{kpath}.light_index",
                    f"light_index {li!r} out of range")
            continue
        direction = position = intensity = None
        if rk.get("direction") is not None:
            direction = _as_vec(rk["direction"], 3, f"{kpath}.direction", col)
        if rk.get("position") is not None:
            position = _as_vec(rk["position"], 3, f"{kpath}.position", col)
        if rk.get("intensity") is not None:
            intensity = _as_rgba(rk["intensity"], f"{kpath}.intensity", col)
        keys.append(LightKey(t=t, light_index=li, direction=direction,
                             position=position, intensity=intensity))
    if len(keys) != len(raw_keys):
        return None
    per_light = {}
    for k in keys:
        per_light.setdefault(k.light_index, []).append(k.t)
    for li, ts in per_light.items():
        if any(b < a for a, b in zip(ts, ts[1:])):
            col.add(INVARIANT_VIOLATION, f"{path}.keys",
                    f"keys for light {li} must be sorted by t")
            return None
    return LightPath(keys=tuple(keys), interpolation="linear")


TOP_LEVEL_KEYS = {
    "layers", "lights", "camera", "background", "shading",
    "resolution", "exposure", "bleed", "caustics", "light_path",
}


def parse_scene(document, base_dir=None) -> MockScene:
    """Parse and validate a scene document (JSON text or dict).

    All problems are aggregated into a single SceneParseError; partial
    results are never returned.  base_dir anchors relative image paths.
    """
    col = _Collector()
    if isinstance(document, (str, bytes)):
        try:
            doc = json.loads(document)
        except json.JSONDecodeError as exc:
            col.add(BAD_DOCUMENT, "", f"not valid JSON: {exc}")
            col.raise_if_any()
    else:
        doc = document
    if not isinstance(doc, dict):
        col.add(BAD_DOCUMENT, "", "scene document must be a JSON object")
        col.raise_if_any()
    if base_dir is not None:
        base_dir = Path(base_dir)

    _check_keys(doc, TOP_LEVEL_KEYS, "$", col)
    resolution = _parse_resolution(
        doc.get("resolution"), "resolution", col,
        (DEFAULT_RESOLUTION, DEFAULT_RESOLUTION),
    )
    exposure = _as_float(doc.get("exposure"), "exposure", col, default=None)
    if exposure is not None and exposure <= 0:
        col.add(INVARIANT_VIOLATION, "exposure", "exposure must be > 0")
        exposure = None
    bleed = _as_float(doc.get("bleed"), "bleed", col, default=0.0, minimum=0.0)

    raw_layers = doc.get("layers")
    layers = []
    if not isinstance(raw_layers, list) or not raw_layers:
        col.add(INVARIANT_VIOLATION, "layers", "scene needs at least one layer")
    else:
        seen = set()
        for i, entry in enumerate(raw_layers):
            layer = _parse_layer(entry, i, resolution, base_dir, col)
            if layer is not None:
                if layer.id in seen:
                    col.add(INVARIANT_VIOLATION, f"layers[{i}].id",
                            f"duplicate layer id {layer.id!r}")
                seen.add(layer.id)
                layers.append(layer)

    raw_lights = doc.get("lights")
    lights = []
    if not isinstance(raw_lights, list) or not raw_lights:
        col.add(INVARIANT_VIOLATION, "lights", "scene needs at least one light")
    else:
        for i, entry in enumerate(raw_lights):
            light = _parse_light(entry, i, col)
            if light is not None:
                lights.append(light)

    camera = _parse_camera(doc.get("camera"), col)
    background = None
    if doc.get("background") is not None:
        background = _load_color_source(doc["background"], resolution, base_dir,
                                        "background", col)
    shading = _parse_shading(doc.get("shading"), resolution, base_dir, col)

    if shading is not None:
        for i, layer in enumerate(layers):
            if len(layer.control_textures) != shading.basis.n_weights:
                col.add(
                    INVARIANT_VIOLATION, f"layers[{i}].textures",
                    f"layer {layer.id!r}: {len(layer.control_textures)} textures "
                    f"for a basis of {shading.basis.n_weights} weights",
                )

    caustics = []
    raw_caustics = doc.get("caustics", [])
    if not isinstance(raw_caustics, list):
        col.add(INVARIANT_VIOLATION, "caustics", "expected a list")
    else:
        for i, entry in enumerate(raw_caustics):
            cpath = f"caustics[{i}]"
            if not isinstance(entry, dict) or "texture" not in entry:
                col.add(INVARIANT_VIOLATION, cpath, 'expected {"texture": ..., "group": n}')
                continue
            _check_keys(entry, {"texture", "group"}, cpath, col)
            group = entry.get("group", 0)
            tex = _load_scalar_source(entry["texture"], resolution, base_dir,
                                      f"{cpath}.texture", col)
            if tex is not None and isinstance(group, int):
                caustics.append((tex, group))

    light_path = _parse_light_path(doc.get("light_path"), len(lights), col)

    col.raise_if_any()
    return MockScene(
        layers=tuple(layers),
        lights=tuple(lights),
        camera=camera,
        resolution=resolution,
        background=background,
        shading=shading,
        exposure=exposure,
        bleed=bleed if bleed is not None else 0.0,
        caustics=tuple(caustics),
        light_path=light_path,
        document=_normalize_document(doc),
        base_dir=base_dir,
    )


def _normalize_document(doc: dict) -> dict:
    return copy.deepcopy(doc)


def load_scene(path) -> MockScene:
    p = Path(path)
    with open(p, "r", encoding="utf-8") as f:
        text = f.read()
    return parse_scene(text, base_dir=p.parent)


def serialize_scene(scene: MockScene) -> dict:
    """Document form of the scene; reparsing with the same base_dir
    reproduces a structurally equal model."""
    return copy.deepcopy(scene.document)


def lights_at(scene: MockScene, t: float) -> Tuple[Light, ...]:
    """Lights with the scene's keyframe path applied at time t."""
    if scene.light_path is None:
        return scene.lights
    lights = list(scene.lights)
    by_light = {}
    for key in scene.light_path.keys:
        by_light.setdefault(key.light_index, []).append(key)
    for li, keys in by_light.items():
        base = lights[li]
        prev_key = next_key = None
        for k in keys:
            if k.t <= t:
                prev_key = k
            if k.t >= t and next_key is None:
                next_key = k
        if prev_key is None:
            prev_key = keys[0]
        if next_key is None:
            next_key = keys[-1]
        if next_key.t == prev_key.t:
            frac = 0.0
        else:
            frac = (t - prev_key.t) / (next_key.t - prev_key.t)
            frac = min(1.0, max(0.0, frac))

        def lerp(a, b, fallback):
            a = fallback if a is None else a
            b = fallback if b is None else b
            if a is None or b is None:
                return a if b is None else b
            return (1.0 - frac) * a + frac * b

        direction = lerp(prev_key.direction, next_key.direction, base.direction)
        if direction is not None:
            n = float(np.linalg.norm(direction))
            direction = direction / n if n > 1e-12 else base.direction
        position = lerp(prev_key.position, next_key.position, base.position)
        intensity = lerp(prev_key.intensity, next_key.intensity, base.intensity)
        lights[li] = Light(
            kind=base.kind,
            intensity=base.intensity if intensity is None else intensity,
            group=base.group,
            direction=direction if base.kind == DIRECTIONAL else None,
            position=position if base.kind != DIRECTIONAL else None,
            extent=base.extent,
        )
    return tuple(lights)


def _field_equal(a: Optional[Field2D], b: Optional[Field2D]) -> bool:
    if a is None or b is None:
        return a is b
    return a.wrap_mode == b.wrap_mode and np.array_equal(a.values, b.values)


def _vec_equal(a, b) -> bool:
    if a is None or b is None:
        return a is b
    return np.array_equal(a, b)


def _shading_equal(a: Optional[ShadingSpec], b: Optional[ShadingSpec]) -> bool:
    if a is None or b is None:
        return a is b
    if a.basis != b.basis or a.w_source != b.w_source:
        return False
    if len(a.textures) != len(b.textures):
        return False
    if not all(_field_equal(x, y) for x, y in zip(a.textures, b.textures)):
        return False
    return _shading_equal(a.specular_overlay, b.specular_overlay)


def structurally_equal(a: MockScene, b: MockScene) -> bool:
    """Deep equality on the resolved model (documents not compared)."""
    if a.resolution != b.resolution or a.exposure != b.exposure or a.bleed != b.bleed:
        return False
    if len(a.layers) != len(b.layers) or len(a.lights) != len(b.lights):
        return False
    for la, lb in zip(a.layers, b.layers):
        if (la.id, la.c, la.resolution, la.shape.kind) != (
            lb.id, lb.c, lb.resolution, lb.shape.kind
        ):
            return False
        if not (
            _field_equal(la.shape.matte, lb.shape.matte)
            and _field_equal(la.shape.height, lb.shape.height)
            and _field_equal(la.shape.normals, lb.shape.normals)
            and _field_equal(la.shape.thickness, lb.shape.thickness)
            and _field_equal(la.z_deform, lb.z_deform)
        ):
            return False
        ma, mb = la.material, lb.material
        if (ma.specular_strength, ma.shininess, ma.mirror, ma.transmissive) != (
            mb.specular_strength, mb.shininess, mb.mirror, mb.transmissive
        ):
            return False
        if not _field_equal(ma.diffuse_albedo, mb.diffuse_albedo):
            return False
        if len(la.control_textures) != len(lb.control_textures):
            return False
        if not all(
            _field_equal(x, y)
            for x, y in zip(la.control_textures, lb.control_textures)
        ):
            return False
    for ga, gb in zip(a.lights, b.lights):
        if (ga.kind, ga.group, ga.extent) != (gb.kind, gb.group, gb.extent):
            return False
        if not (
            _vec_equal(ga.intensity, gb.intensity)
            and _vec_equal(ga.direction, gb.direction)
            and _vec_equal(ga.position, gb.position)
        ):
            return False
    if a.camera.kind != b.camera.kind or a.camera.fov_y != b.camera.fov_y:
        return False
    if not (_vec_equal(a.camera.eye, b.camera.eye)
            and _vec_equal(a.camera.look_at, b.camera.look_at)):
        return False
    if not _field_equal(a.background, b.background):
        return False
    if not _shading_equal(a.shading, b.shading):
        return False
    if len(a.caustics) != len(b.caustics):
        return False
    for (fa, g1), (fb, g2) in zip(a.caustics, b.caustics):
        if g1 != g2 or not _field_equal(fa, fb):
            return False
    if (a.light_path is None) != (b.light_path is None):
        return False
    if a.light_path is not None:
        if len(a.light_path.keys) != len(b.light_path.keys):
            return False
        for ka, kb in zip(a.light_path.keys, b.light_path.keys):
            if (ka.t, ka.light_index) != (kb.t, kb.light_index):
                return False
            if not (
                _vec_equal(ka.direction, kb.direction)
                and _vec_equal(ka.position, kb.position)
                and _vec_equal(ka.intensity, kb.intensity)
            ):
                return False
    return True
