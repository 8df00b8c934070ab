"""Scene document parsing, validation, and round-tripping."""

import json

import numpy as np
import pytest

from mockshade.errors import (
    BAD_REFERENCE,
    INVARIANT_VIOLATION,
    MISSING_CHANNEL,
    SceneParseError,
    UnknownLayer,
)
from mockshade.imageio import save_scalar
from mockshade.field import Field2D
from mockshade.scene import (
    lights_at,
    load_scene,
    parse_scene,
    serialize_scene,
    structurally_equal,
)


def minimal_doc(**overrides):
    doc = {
        "layers": [{
            "id": "base",
            "shape": {"kind": "height_field", "height": 0.0},
            "textures": [0.0, 1.0],
        }],
        "lights": [{"kind": "directional", "direction": [0, 0, 1]}],
    }
    doc.update(overrides)
    return doc


class TestParsing:
    def test_minimal_scene_defaults(self):
        sc = parse_scene(minimal_doc())
        assert sc.resolution == (256, 256)
        assert len(sc.layers) == 1
        layer = sc.layers[0]
        assert layer.id == "base"
        assert layer.c == 0.0
        assert layer.shape.matte.values.max() == 1.0
        assert len(layer.control_textures) == 2
        assert layer.material.specular_strength == 0.0
        assert layer.material.shininess == 32.0
        assert sc.camera.kind == "ortho_frontal"
        assert sc.exposure is None

    def test_light_direction_normalized(self):
        sc = parse_scene(minimal_doc(
            lights=[{"kind": "directional", "direction": [3, 0, 4]}]
        ))
        assert np.allclose(sc.lights[0].direction, [0.6, 0.0, 0.8])

    def test_unknown_keys_rejected_everywhere(self):
        doc = minimal_doc()
        doc["glow"] = 1
        doc["layers"][0]["opacity"] = 0.5
        doc["lights"][0]["watts"] = 60
        with pytest.raises(SceneParseError) as ei:
            parse_scene(doc)
        paths = {i.path for i in ei.value.issues}
        assert "$.glow" in paths
        assert "layers[0].opacity" in paths
        assert "lights[0].watts" in paths

    def test_missing_channels_aggregated(self):
        doc = {
            "layers": [
                {"id": "a", "shape": {"kind": "height_field"}},
                {"id": "b", "shape": {"kind": "shape_map"}},
            ],
            "lights": [{"kind": "directional", "direction": [0, 0, 1]}],
        }
        with pytest.raises(SceneParseError) as ei:
            parse_scene(doc)
        missing = [i for i in ei.value.issues if i.kind == MISSING_CHANNEL]
        paths = {i.path for i in missing}
        assert "layers[0].shape.height" in paths
        assert "layers[1].shape.normals" in paths
        assert "layers[1].shape.thickness" in paths
        # every issue names the offending layer
        assert all("'a'" in i.message or "'b'" in i.message for i in missing)

    def test_bad_reference_reports_path(self, tmp_path):
        doc = minimal_doc()
        doc["layers"][0]["shape"]["height"] = "no_such_file.png"
        with pytest.raises(SceneParseError) as ei:
            parse_scene(doc, base_dir=tmp_path)
        issues = [i for i in ei.value.issues if i.kind == BAD_REFERENCE]
        assert len(issues) == 1
        assert issues[0].path == "layers[0].shape.height"

    def test_invariant_violations(self):
        doc = minimal_doc()
        doc["layers"][0]["matte"] = 1.5  # outside [0,1]
        doc["lights"][0]["intensity"] = [-1, 0, 0]
        with pytest.raises(SceneParseError) as ei:
            parse_scene(doc)
        kinds = {i.kind for i in ei.value.issues}
        assert kinds == {INVARIANT_VIOLATION}
        assert len(ei.value.issues) == 2

    def test_duplicate_layer_ids_rejected(self):
        doc = minimal_doc()
        doc["layers"] = doc["layers"] * 2
        with pytest.raises(SceneParseError):
            parse_scene(doc)

    def test_layer_order_preserved(self):
        doc = minimal_doc()
        doc["layers"] = [
            dict(doc["layers"][0], id=name) for name in ("far", "mid", "near")
        ]
        sc = parse_scene(doc)
        assert [l.id for l in sc.layers] == ["far", "mid", "near"]
        assert sc.layer_index("mid") == 1
        with pytest.raises(UnknownLayer):
            sc.layer_index("nope")

    def test_texture_count_must_match_scene_basis(self):
        doc = minimal_doc(shading={"basis": {"kind": "bezier", "degree": 3}})
        with pytest.raises(SceneParseError) as ei:
            parse_scene(doc)
        assert any("textures" in i.path for i in ei.value.issues)

    def test_shape_map_thickness_nonnegative(self):
        doc = minimal_doc()
        doc["layers"][0]["shape"] = {
            "kind": "shape_map",
            "normals": [[[0.0, 0.0, 1.0]] * 2] * 2,
            "thickness": [[-0.1, 0.0], [0.0, 0.1]],
        }
        with pytest.raises(SceneParseError) as ei:
            parse_scene(doc)
        assert any(i.path.endswith("thickness") for i in ei.value.issues)

    def test_not_json(self):
        with pytest.raises(SceneParseError):
            parse_scene("{nope")

    def test_mirror_material(self):
        doc = minimal_doc()
        doc["layers"][0]["material"] = {"mirror": {"plane_height": 0.4}}
        sc = parse_scene(doc)
        assert sc.layers[0].material.mirror.plane_height == 0.4

    def test_inline_normals_renormalized(self):
        doc = minimal_doc()
        doc["layers"][0]["shape"] = {
            "kind": "normal_field",
            "normals": [[[0.0, 0.0, 2.0]] * 2] * 2,
        }
        sc = parse_scene(doc)
        assert np.allclose(
            np.linalg.norm(sc.layers[0].shape.normals.values, axis=-1), 1.0
        )

    def test_image_paths_resolved_against_base_dir(self, tmp_path):
        save_scalar(Field2D(np.full((4, 4), 0.5)), str(tmp_path / "h.png"))
        doc = minimal_doc()
        doc["layers"][0]["shape"]["height"] = "h.png"
        doc["resolution"] = 4
        sc = parse_scene(doc, base_dir=tmp_path)
        assert sc.layers[0].shape.height.values == pytest.approx(0.5, abs=2e-3)


class TestRoundTrip:
    def test_serialize_reparse_structurally_equal(self, tmp_path):
        doc = minimal_doc(
            resolution=[32, 16],
            exposure=0.5,
            background=[0.1, 0.2, 0.3],
            shading={"basis": {"kind": "linear"}},
        )
        doc["layers"][0]["material"] = {"specular": 0.3, "shininess": 12}
        sc1 = parse_scene(doc)
        sc2 = parse_scene(serialize_scene(sc1))
        assert structurally_equal(sc1, sc2)

    def test_serialize_is_deep_copy(self):
        sc = parse_scene(minimal_doc())
        d = serialize_scene(sc)
        d["layers"][0]["id"] = "mutated"
        assert sc.document["layers"][0]["id"] == "base"

    def test_structural_inequality_detected(self):
        a = parse_scene(minimal_doc())
        doc = minimal_doc()
        doc["layers"][0]["c"] = 0.25
        b = parse_scene(doc)
        assert not structurally_equal(a, b)

    def test_load_scene_from_file(self, tmp_path):
        p = tmp_path / "scene.json"
        p.write_text(json.dumps(minimal_doc()))
        sc = load_scene(p)
        assert sc.base_dir == tmp_path
        assert structurally_equal(sc, parse_scene(minimal_doc()))


class TestLightPath:
    def path_doc(self):
        doc = minimal_doc()
        doc["lights"] = [{
            "kind": "directional", "direction": [-1, 0, 1], "intensity": 2.0,
        }]
        doc["light_path"] = {"keys": [
            {"t": 0.0, "light_index": 0, "direction": [-1, 0, 1]},
            {"t": 1.0, "light_index": 0, "direction": [1, 0, 1]},
        ]}
        return doc

    def test_midpoint_interpolation_renormalized(self):
        sc = parse_scene(self.path_doc())
        lights = lights_at(sc, 0.5)
        assert np.allclose(lights[0].direction, [0, 0, 1])
        assert float(np.linalg.norm(lights[0].direction)) == pytest.approx(1.0)

    def test_clamped_outside_key_range(self):
        sc = parse_scene(self.path_doc())
        before = lights_at(sc, -5.0)[0].direction
        after = lights_at(sc, 5.0)[0].direction
        assert np.allclose(before, np.array([-1, 0, 1]) / np.sqrt(2))
        assert np.allclose(after, np.array([1, 0, 1]) / np.sqrt(2))

    def test_no_path_returns_base_lights(self):
        sc = parse_scene(minimal_doc())
        assert lights_at(sc, 0.7) == sc.lights

    def test_unsorted_keys_rejected(self):
        doc = self.path_doc()
        doc["light_path"]["keys"] = doc["light_path"]["keys"][::-1]
        with pytest.raises(SceneParseError):
            parse_scene(doc)

    def test_bad_light_index(self):
        doc = self.path_doc()
        doc["light_path"]["keys"][0]["light_index"] = 3
        with pytest.raises(SceneParseError) as ei:
            parse_scene(doc)
        assert any(i.kind == BAD_REFERENCE for i in ei.value.issues)

    def test_intensity_keyframes(self):
        doc = minimal_doc()
        doc["light_path"] = {"keys": [
            {"t": 0.0, "light_index": 0, "intensity": 0.0},
            {"t": 2.0, "light_index": 0, "intensity": [1.0, 0.5, 0.0]},
        ]}
        sc = parse_scene(doc)
        mid = lights_at(sc, 1.0)[0]
        assert np.allclose(mid.intensity[:3], [0.5, 0.25, 0.0])
