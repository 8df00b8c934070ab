"""Barycentric shading: weight bases over [0,1] and texture blending.

The second pipeline stage turns a scalar illumination value w at each
pixel into a convex combination of control textures.  Every basis is a
partition of unity with nonnegative weights, so outputs never leave the
per-pixel convex hull of the texture colors.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import NonLipschitzBasis, ResolutionMismatch
from .field import Field2D, luminance

LINEAR = "linear"
BEZIER = "bezier"
BSPLINE0 = "bspline0"

COMBINED = "combined"
DIFFUSE = "diffuse"
SPECULAR = "specular"


@dataclass(frozen=True)
class WeightBasis:
    kind: str
    degree: int = 1
    knots: Tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind == LINEAR:
            pass
        elif self.kind == BEZIER:
            if self.degree < 1:
                raise ValueError("bezier degree must be >= 1")
        elif self.kind == BSPLINE0:
            k = self.knots
            if len(k) < 2:
                raise ValueError("bspline0 needs at least 2 knots")
            if any(b < a for a, b in zip(k, k[1:])):
                raise ValueError("knots must be sorted")
            if k[0] < 0.0 or k[-1] > 1.0:
                raise ValueError("knots must lie in [0, 1]")
        else:
            raise ValueError(f"unknown basis kind {self.kind!r}")

    @property
    def n_weights(self) -> int:
        if self.kind == LINEAR:
            return 2
        if self.kind == BEZIER:
            return self.degree + 1
        return len(self.knots) - 1

    @property
    def lipschitz(self) -> float:
        """Lipschitz constant of w -> sum B_i(w) T_i per unit texture."""
        if self.kind == LINEAR:
            return 1.0
        if self.kind == BEZIER:
            return float(self.degree)
        raise NonLipschitzBasis("degree-0 B-splines are discontinuous")


@dataclass(frozen=True)
class WSource:
    """Which illumination plane drives the basis."""

    plane: str = COMBINED
    group: int = 0


@dataclass(frozen=True)
class ShadingSpec:
    basis: WeightBasis
    textures: Tuple[Field2D, ...]
    w_source: WSource = WSource()
    specular_overlay: Optional["ShadingSpec"] = None

    def __post_init__(self):
        if len(self.textures) != self.basis.n_weights:
            raise ValueError(
                f"{len(self.textures)} textures for a basis of "
                f"{self.basis.n_weights} weights"
            )


def eval_basis(basis: WeightBasis, w) -> np.ndarray:
    """Weight vector(s) for w; output shape = w.shape + (n_weights,).

    Inputs are clamped to [0,1].  For bspline0 the knot intervals are
    right-open with the last interval closed, so selection is total.
    """
    w = np.clip(np.asarray(w, dtype=np.float64), 0.0, 1.0)
    n = basis.n_weights
    out = np.zeros(w.shape + (n,))
    if basis.kind == LINEAR:
        out[..., 0] = 1.0 - w
        out[..., 1] = w
    elif basis.kind == BEZIER:
        d = basis.degree
        one = 1.0 - w
        for i in range(n):
            out[..., i] = comb(d, i) * w**i * one ** (d - i)
    else:
        knots = np.asarray(basis.knots)
        idx = np.searchsorted(knots, w, side="right") - 1
        idx = np.clip(idx, 0, n - 1)
        np.put_along_axis(out, idx[..., None], 1.0, axis=-1)
    return out


def _stack_textures(textures: Sequence[Field2D]) -> np.ndarray:
    shapes = {t.values.shape for t in textures}
    if len(shapes) != 1:
        raise ResolutionMismatch(f"textures disagree on shape: {sorted(shapes)}")
    return np.stack([t.values for t in textures])


def normalized_w(w_image, plane: str = COMBINED, group: int = 0) -> np.ndarray:
    """Scalar w plane from an illumination image, exposure-normalized.

    Accepts a bare scalar Field2D as well, so oracles and the robustness
    bound can drive the same code path with synthetic w fields.
    """
    if isinstance(w_image, Field2D):
        if not w_image.is_scalar:
            raise ValueError("w field must be scalar")
        return np.clip(w_image.values, 0.0, 1.0)
    if plane == COMBINED:
        return w_image.combined_w.values
    groups = w_image.diffuse if plane == DIFFUSE else w_image.specular
    radiance = groups[group].values
    return np.clip(w_image.exposure * luminance(radiance), 0.0, 1.0)


def shade(w_image, spec: ShadingSpec) -> Field2D:
    """out(p) = sum_i B_i(w(p)) T_i(p), unclamped.

    The specular overlay, when present, is evaluated on the total
    specular plane and added after the diffuse styling.
    """
    w = normalized_w(w_image, spec.w_source.plane, spec.w_source.group)
    stack = _stack_textures(spec.textures)
    if stack.shape[1:3] != w.shape:
        raise ResolutionMismatch(
            f"w plane {w.shape} vs textures {stack.shape[1:3]}"
        )
    weights = eval_basis(spec.basis, w)
    out = np.einsum("hwn,nhwc->hwc", weights, stack)
    overlay = spec.specular_overlay
    if overlay is not None and not isinstance(w_image, Field2D):
        total_spec = sum(f.values for f in w_image.specular.values())
        ws = np.clip(w_image.exposure * luminance(total_spec), 0.0, 1.0)
        ow = eval_basis(overlay.basis, ws)
        out = out + np.einsum("hwn,nhwc->hwc", ow, _stack_textures(overlay.textures))
    return Field2D(out, wrap_mode=spec.textures[0].wrap_mode)


def robustness_bound(
    spec: ShadingSpec, w1: Field2D, w2: Field2D
) -> Tuple[float, float]:
    """Observed max output deviation between two w fields, and its bound.

    bound = L(basis) * max|w1 - w2| * max|T_i| * n_weights.  Holds for
    Lipschitz bases (linear, Bezier); bspline0 is rejected.
    """
    lip = spec.basis.lipschitz
    out1 = shade(w1, spec).values
    out2 = shade(w2, spec).values
    observed = float(np.abs(out1 - out2).max())
    dw = float(np.abs(np.clip(w1.values, 0, 1) - np.clip(w2.values, 0, 1)).max())
    max_t = max(float(np.abs(t.values).max()) for t in spec.textures)
    bound = lip * dw * max_t * spec.basis.n_weights
    return observed, bound
