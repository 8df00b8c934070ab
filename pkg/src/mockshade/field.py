"""Discrete 2D fields over the unit square.

A field stores a raster of scalar, vec2, vec3, or rgba samples covering
[0,1]^2. Pixel (i, j) is centered at ((i+0.5)/W, (j+0.5)/H), so a 1x1
field behaves as a constant. Values live in linear radiometric space and
are never clamped here; clamping happens only at 8/16-bit export.

Fields are immutable after construction and every operation in this
module is a pure function, safe to evaluate concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass, field as _dcfield
from typing import Optional

import numpy as np

Array = np.ndarray

CLAMP = "clamp"
REPEAT = "repeat"


@dataclass(frozen=True)
class Field2D:
    """Raster over [0,1]^2: shape (H, W) for scalars, (H, W, C) for C in {2,3,4}."""

    values: Array
    wrap_mode: str = CLAMP

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim == 3 and arr.shape[2] == 1:
            arr = arr[:, :, 0]
        if arr.ndim not in (2, 3):
            raise ValueError(f"field values must be 2D or 3D, got shape {arr.shape}")
        if arr.ndim == 3 and arr.shape[2] not in (2, 3, 4):
            raise ValueError(f"vector fields need 2..4 components, got {arr.shape[2]}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("fields need at least one pixel")
        if self.wrap_mode not in (CLAMP, REPEAT):
            raise ValueError(f"unknown wrap_mode {self.wrap_mode!r}")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.values.ndim == 2 else self.values.shape[2]

    @property
    def is_scalar(self) -> bool:
        return self.values.ndim == 2

    def with_values(self, values: Array) -> "Field2D":
        return Field2D(values, self.wrap_mode)

    @staticmethod
    def constant(value, width: int, height: int, wrap_mode: str = CLAMP) -> "Field2D":
        v = np.asarray(value, dtype=np.float64)
        if v.ndim == 0:
            arr = np.full((height, width), float(v))
        else:
            arr = np.broadcast_to(v, (height, width, v.shape[0])).copy()
        return Field2D(arr, wrap_mode)


@dataclass(frozen=True)
class SampleSpec:
    """Point-sample request: interpolation filter plus (u, v) in [0,1]."""

    filter: str = "bilinear"  # "nearest" | "bilinear"
    u: float = 0.0
    v: float = 0.0


def _resolve_index(idx: Array, n: int, wrap_mode: str) -> Array:
    if wrap_mode == REPEAT:
        return np.mod(idx, n)
    return np.clip(idx, 0, n - 1)


def sample_grid(field: Field2D, u: Array, v: Array, filter: str = "bilinear") -> Array:
    """Sample the field at arrays of (u, v); wrap_mode resolves out-of-range coords.

    Returns an array shaped like u (plus a trailing channel axis for
    vector fields). This is the vectorized workhorse behind `sample`.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    h, w = field.height, field.width
    vals = field.values
    if filter == "nearest":
        i = _resolve_index(np.floor(u * w).astype(np.int64), w, field.wrap_mode)
        j = _resolve_index(np.floor(v * h).astype(np.int64), h, field.wrap_mode)
        return vals[j, i]
    if filter == "cubic":
        from scipy import ndimage

        rows = v * h - 0.5
        cols = u * w - 0.5
        mode = "grid-wrap" if field.wrap_mode == REPEAT else "nearest"
        if field.is_scalar:
            return ndimage.map_coordinates(vals, [rows, cols], order=3,
                                           mode=mode)
        out = np.empty(rows.shape + (vals.shape[2],))
        for c in range(vals.shape[2]):
            out[..., c] = ndimage.map_coordinates(vals[..., c], [rows, cols],
                                                  order=3, mode=mode)
        return out
    if filter != "bilinear":
        raise ValueError(f"unknown filter {filter!r}")
    x = u * w - 0.5
    y = v * h - 0.5
    i0 = np.floor(x).astype(np.int64)
    j0 = np.floor(y).astype(np.int64)
    tx = x - i0
    ty = y - j0
    i0r = _resolve_index(i0, w, field.wrap_mode)
    i1r = _resolve_index(i0 + 1, w, field.wrap_mode)
    j0r = _resolve_index(j0, h, field.wrap_mode)
    j1r = _resolve_index(j0 + 1, h, field.wrap_mode)
    if not field.is_scalar:
        tx = tx[..., None]
        ty = ty[..., None]
    v00 = vals[j0r, i0r]
    v10 = vals[j0r, i1r]
    v01 = vals[j1r, i0r]
    v11 = vals[j1r, i1r]
    top = v00 * (1.0 - tx) + v10 * tx
    bot = v01 * (1.0 - tx) + v11 * tx
    return top * (1.0 - ty) + bot * ty


def sample(field: Field2D, spec: SampleSpec):
    """Sample one point. Nearest picks the pixel whose center is closest;
    bilinear blends the 4 surrounding pixel values."""
    out = sample_grid(field, np.float64(spec.u), np.float64(spec.v), spec.filter)
    if field.is_scalar:
        return float(out)
    return np.asarray(out)


def pixel_centers(width: int, height: int) -> tuple[Array, Array]:
    """(u, v) coordinate grids of all pixel centers, each shaped (H, W)."""
    u = (np.arange(width, dtype=np.float64) + 0.5) / width
    v = (np.arange(height, dtype=np.float64) + 0.5) / height
    return np.meshgrid(u, v)


def gaussian_kernel(sigma: float) -> Array:
    """1D Gaussian taps truncated at +-3 sigma, renormalized to sum 1."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    radius = int(np.floor(3.0 * sigma))
    if sigma == 0 or radius == 0:
        return np.ones(1)
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (offsets / sigma) ** 2)
    return k / k.sum()


def _convolve_axis(arr: Array, kernel: Array, axis: int, wrap_mode: str) -> Array:
    n = arr.shape[axis]
    radius = len(kernel) // 2
    out = np.zeros_like(arr)
    base = np.arange(n, dtype=np.int64)
    for k, wgt in enumerate(kernel):
        idx = _resolve_index(base + (k - radius), n, wrap_mode)
        out += wgt * np.take(arr, idx, axis=axis)
    return out


def gaussian_blur(field: Field2D, sigma: float) -> Field2D:
    """Separable Gaussian blur; sigma = 0 returns an identical copy."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return field.with_values(field.values.copy())
    kernel = gaussian_kernel(sigma)
    out = _convolve_axis(field.values, kernel, axis=1, wrap_mode=field.wrap_mode)
    out = _convolve_axis(out, kernel, axis=0, wrap_mode=field.wrap_mode)
    return field.with_values(out)


def finite_diff_gradient(height_field: Field2D) -> Field2D:
    """Slope field of a scalar field: central differences interior, one-sided
    at borders, in units of value change per unit-square length."""
    if not height_field.is_scalar:
        raise ValueError("finite_diff_gradient needs a scalar field")
    h = height_field.values
    rows, cols = h.shape
    if rows < 2 or cols < 2:
        raise ValueError("gradient needs at least 2 pixels per axis")
    du = np.empty_like(h)
    dv = np.empty_like(h)
    # d/du: column direction, spacing 1/W
    du[:, 1:-1] = (h[:, 2:] - h[:, :-2]) * (cols / 2.0)
    du[:, 0] = (h[:, 1] - h[:, 0]) * cols
    du[:, -1] = (h[:, -1] - h[:, -2]) * cols
    # d/dv: row direction, spacing 1/H
    dv[1:-1, :] = (h[2:, :] - h[:-2, :]) * (rows / 2.0)
    dv[0, :] = (h[1, :] - h[0, :]) * rows
    dv[-1, :] = (h[-1, :] - h[-2, :]) * rows
    return Field2D(np.stack([du, dv], axis=-1), height_field.wrap_mode)


def resample(field: Field2D, width: int, height: int) -> Field2D:
    """Bilinear resize onto a width x height raster over the same domain."""
    if width == field.width and height == field.height:
        return field
    u, v = pixel_centers(width, height)
    return Field2D(sample_grid(field, u, v, "bilinear"), field.wrap_mode)


def luminance(rgba: Array) -> Array:
    """Rec. 709 luma of linear RGB(A) arrays (alpha ignored)."""
    rgb = np.asarray(rgba)[..., :3]
    return rgb @ np.array([0.2126, 0.7152, 0.0722])


def psnr(a: Array, b: Array, peak: float = 1.0, mask: Optional[Array] = None) -> float:
    """Peak signal-to-noise ratio in dB between two arrays, optionally masked."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    diff = a - b
    if mask is not None:
        m = np.asarray(mask, dtype=bool)
        if diff.ndim == m.ndim + 1:
            m = m[..., None]
        diff = diff[np.broadcast_to(m, diff.shape)]
    mse = float(np.mean(diff * diff))
    if mse == 0:
        return float("inf")
    return 10.0 * np.log10(peak * peak / mse)
