"""Impact rendering and the ordered composite fold."""

import numpy as np
import pytest

from mockshade.compositor import CompositeRecipe, ImpactSet, composite, render_impacts
from mockshade.errors import ResolutionMismatch, UnknownLayer
from mockshade.field import Field2D, luminance
from mockshade.flatland import FlatOccluder, extruded_height_profile
from mockshade.scene import parse_scene


def rng(seed):
    return np.random.default_rng(seed)


def bg_field(n=32, value=(0.5, 0.5, 0.5, 1.0)):
    return Field2D.constant(np.array(value), n, n)


def make_impact(n=32, matte=None, color=None, shadow=None, reflection=None,
                refraction=None):
    matte = matte if matte is not None else np.zeros((n, n))
    color = color if color is not None else np.zeros((n, n, 4))
    shadow = shadow if shadow is not None else np.zeros((n, n))
    reflection = reflection if reflection is not None else np.zeros((n, n, 4))
    return ImpactSet(
        object_color=Field2D(color), object_matte=Field2D(matte),
        shadow=Field2D(shadow), reflection=Field2D(reflection),
        refraction=None if refraction is None else Field2D(refraction),
    )


class TestCompositeAlgebra:
    def test_empty_impacts_identity_bit_exact(self):
        bg = Field2D(rng(1).random((16, 16, 4)))
        out = composite(CompositeRecipe(background=bg))
        assert np.array_equal(out.values, bg.values)

    def test_zero_impact_identity(self):
        bg = Field2D(rng(2).random((16, 16, 4)))
        out = composite(CompositeRecipe(
            background=bg, impacts=(make_impact(16),), shadow_strength=0.0,
        ))
        assert np.array_equal(out.values, bg.values)

    def test_opaque_over(self):
        n = 8
        red = np.zeros((n, n, 4))
        red[..., 0] = 1.0
        red[..., 3] = 1.0
        imp = make_impact(n, matte=np.ones((n, n)), color=red)
        out = composite(CompositeRecipe(background=bg_field(n), impacts=(imp,)))
        assert np.allclose(out.values, red)

    def test_half_matte_premultiplied_over_black(self):
        n = 8
        half_red = np.zeros((n, n, 4))
        half_red[..., 0] = 0.5
        half_red[..., 3] = 0.5
        imp = make_impact(n, matte=np.full((n, n), 0.5), color=half_red)
        out = composite(CompositeRecipe(
            background=bg_field(n, (0, 0, 0, 1)), impacts=(imp,),
        ))
        assert np.allclose(out.values[..., 0], 0.5)
        assert np.allclose(out.values[..., 1:3], 0.0)

    def test_shadow_darkens_with_tint(self):
        n = 8
        imp = make_impact(n, shadow=np.full((n, n), 1.0))
        out = composite(CompositeRecipe(
            background=bg_field(n), impacts=(imp,),
            shadow_strength=0.5, shadow_tint=np.array([0.2, 0.2, 0.2]),
        ))
        # factor = 1 - 0.5 * 1 * (1 - 0.2) = 0.6
        assert np.allclose(out.values[..., :3], 0.5 * 0.6)

    def test_shadow_never_brightens_random_recipes(self):
        r = rng(5)
        for trial in range(30):
            n = 12
            bg = Field2D(r.random((n, n, 4)))
            shadow = r.random((n, n))
            imp = make_impact(n, shadow=shadow)
            out = composite(CompositeRecipe(
                background=bg, impacts=(imp,),
                shadow_strength=float(r.random()),
                shadow_tint=r.random(3),
            ))
            assert np.all(
                luminance(out.values) <= luminance(bg.values) + 1e-12
            )

    def test_associativity_disjoint_mattes(self):
        n = 16
        r = rng(7)
        left = np.zeros((n, n))
        left[:, : n // 2] = 1.0
        right = 1.0 - left
        bg = Field2D(r.random((n, n, 4)))

        def impact_for(matte):
            color = np.clip(r.random((n, n, 4)), 0, 1) * matte[..., None]
            return make_impact(n, matte=matte, color=color,
                               shadow=r.random((n, n)) * matte)

        a, b = impact_for(left), impact_for(right)
        both = composite(CompositeRecipe(background=bg, impacts=(a, b),
                                         shadow_strength=0.5))
        step1 = composite(CompositeRecipe(background=bg, impacts=(a,),
                                          shadow_strength=0.5))
        nested = composite(CompositeRecipe(background=step1, impacts=(b,),
                                           shadow_strength=0.5))
        assert np.abs(both.values - nested.values).max() <= 1e-6
        swapped = composite(CompositeRecipe(background=bg, impacts=(b, a),
                                            shadow_strength=0.5))
        assert np.abs(both.values - swapped.values).max() <= 1e-6

    def test_refraction_replaces_through_matte(self):
        n = 8
        refr = np.zeros((n, n, 4))
        refr[:, : n // 2] = [0.2, 0.3, 0.4, 1.0]
        imp = make_impact(n, refraction=refr)
        out = composite(CompositeRecipe(background=bg_field(n), impacts=(imp,)))
        assert np.allclose(out.values[:, : n // 2, :3], [0.2, 0.3, 0.4])
        assert np.allclose(out.values[:, n // 2:, :3], 0.5)

    def test_reflection_adds(self):
        n = 8
        refl = np.zeros((n, n, 4))
        refl[..., :3] = 0.25
        refl[..., 3] = 0.25
        imp = make_impact(n, reflection=refl)
        out = composite(CompositeRecipe(background=bg_field(n), impacts=(imp,)))
        assert np.allclose(out.values[..., :3], 0.75)

    def test_resolution_mismatch(self):
        imp = make_impact(8)
        with pytest.raises(ResolutionMismatch):
            composite(CompositeRecipe(background=bg_field(16), impacts=(imp,)))

    def test_recipe_validation(self):
        with pytest.raises(ValueError):
            CompositeRecipe(background=bg_field(8), shadow_strength=1.5)
        with pytest.raises(ValueError):
            CompositeRecipe(background=bg_field(8), shadow_tint=np.array([2.0, 0, 0]))

    def test_premultiplication_enforced(self):
        n = 8
        color = np.ones((n, n, 4))  # not premultiplied by the 0.5 matte
        with pytest.raises(ValueError):
            make_impact(n, matte=np.full((n, n), 0.5), color=color)


class TestRenderImpacts:
    def scene_doc(self, n=256):
        prof = extruded_height_profile(n, [FlatOccluder(0.4, 0.5, 1.0)])
        box_matte = np.tile((prof > 0).astype(float), (n, 1))
        return {
            "resolution": n,
            "layers": [
                {"id": "floor", "c": 0.0,
                 "shape": {"kind": "height_field", "height": 0.0},
                 "textures": [0.0, 1.0]},
                {"id": "box", "c": 0.0, "matte": box_matte.tolist(),
                 "shape": {"kind": "height_field",
                           "height": np.tile(prof, (n, 1)).tolist()},
                 "textures": [[0.6, 0.2, 0.2], [0.9, 0.5, 0.5]]},
            ],
            "lights": [{"kind": "directional", "direction": [-1.0, 0.0, 1.0],
                        "intensity": 1.0}],
        }

    def test_empty_virtual_set_is_all_zero(self):
        sc = parse_scene(self.scene_doc(64))
        imp = render_impacts(sc, set())
        assert np.all(imp.object_color.values == 0.0)
        assert np.all(imp.object_matte.values == 0.0)
        assert np.all(imp.shadow.values == 0.0)
        assert np.all(imp.reflection.values == 0.0)

    def test_unknown_layer_rejected(self):
        sc = parse_scene(self.scene_doc(64))
        with pytest.raises(UnknownLayer):
            render_impacts(sc, {"ghost"})

    def test_difference_shadow_matches_oracle_band(self):
        n = 256
        sc = parse_scene(self.scene_doc(n))
        imp = render_impacts(sc, {"box"})
        shadow = imp.shadow.values
        centers = (np.arange(n) + 0.5) / n
        band = (centers > 0.5) & (centers <= 1.0)
        row = shadow[n // 2]
        assert np.array_equal(row > 0.5, band)
        # shadow restricted to proxy surfaces: zero on the object itself
        assert np.all(shadow[:, (centers >= 0.41) & (centers <= 0.49)] == 0.0)

    def test_difference_shadow_nonnegative_random_boxes(self):
        r = rng(11)
        n = 128
        for trial in range(5):
            x0 = float(r.uniform(0.1, 0.6))
            x1 = x0 + float(r.uniform(0.05, 0.25))
            h = float(r.uniform(0.2, 1.0))
            prof = extruded_height_profile(n, [FlatOccluder(x0, min(x1, 1.0), h)])
            doc = self.scene_doc(n)
            doc["layers"][1]["matte"] = np.tile((prof > 0).astype(float), (n, 1)).tolist()
            doc["layers"][1]["shape"]["height"] = np.tile(prof, (n, 1)).tolist()
            elev = float(r.uniform(0.3, 1.3))
            doc["lights"] = [{"kind": "directional",
                              "direction": [-float(np.cos(elev)), 0.0,
                                            float(np.sin(elev))],
                              "intensity": 1.0}]
            imp = render_impacts(parse_scene(doc), {"box"})
            assert imp.shadow.values.min() >= 0.0

    def test_no_mirror_proxies_zero_reflection(self):
        sc = parse_scene(self.scene_doc(64))
        imp = render_impacts(sc, {"box"})
        assert np.all(imp.reflection.values == 0.0)

    def test_mirror_proxy_reflects_virtual_only(self):
        n = 128
        yy = np.mgrid[0:n, 0:n][0]
        v_up = 1.0 - (yy + 0.5) / n
        water = (v_up < 0.4).astype(float)
        disk = (((np.mgrid[0:n, 0:n][1] + 0.5) / n - 0.5) ** 2
                + (v_up - 0.6) ** 2 < 0.08**2).astype(float)
        doc = {
            "resolution": n,
            "layers": [
                {"id": "water", "c": 0.0, "matte": water.tolist(),
                 "shape": {"kind": "height_field", "height": 0.0},
                 "material": {"mirror": {"plane_height": 0.4}},
                 "textures": [0.0, 1.0]},
                {"id": "ball", "c": 0.1, "matte": disk.tolist(),
                 "shape": {"kind": "height_field", "height": 0.0},
                 "textures": [0.0, 1.0]},
            ],
            "lights": [{"kind": "directional", "direction": [0, 0, 1],
                        "intensity": 1.0}],
        }
        imp = render_impacts(parse_scene(doc), {"ball"})
        refl = imp.reflection.values[..., :3].max(axis=-1)
        assert (refl > 0.1).any()
        # reflection lives inside the water matte only
        assert np.all(refl[water == 0.0] == 0.0)

    def test_composite_with_rendered_impacts(self):
        n = 128
        sc = parse_scene(self.scene_doc(n))
        imp = render_impacts(sc, {"box"})
        bg = Field2D.constant(np.array([0.8, 0.8, 0.8, 1.0]), n, n)
        out = composite(CompositeRecipe(background=bg, impacts=(imp,),
                                        shadow_strength=1.0)).values
        centers = (np.arange(n) + 0.5) / n
        row = out[n // 2]
        in_shadow = (centers > 0.52) & (centers <= 0.98)
        on_box = (centers >= 0.42) & (centers <= 0.48)
        in_clear = centers < 0.38
        assert np.all(row[in_shadow, 0] < 0.1)
        assert np.allclose(row[in_clear, :3], 0.8)
        assert np.all(row[on_box, 0] > 0.5)  # styled box color shows
