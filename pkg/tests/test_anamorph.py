import numpy as np
import pytest

from _corpus import slanted_plane, smooth_checker, wavy_height_field
from mockshade.anamorph import (
    BakedAnamorph,
    PlanarFrame,
    Receiver,
    bake,
    camera_rays,
    render_view,
)
from mockshade.field import Field2D, psnr
from mockshade.scene import Camera, ORTHO_FRONTAL, VANTAGE

ORTHO = Camera(kind=ORTHO_FRONTAL)


def _vantage(eye, look_at=(0.5, 0.5, 0.0), fov_deg=40.0):
    return Camera(kind=VANTAGE, eye=tuple(eye), look_at=tuple(look_at),
                  fov_y=np.radians(fov_deg))


def _rgb(f: Field2D):
    return f.values[..., :3]


class TestReceiver:
    def test_plane_normal_normalized(self):
        r = Receiver.plane((0.0, 0.0, 2.0), 0.5)
        assert np.allclose(r.normal, [0.0, 0.0, 1.0])

    def test_zero_normal_rejected(self):
        with pytest.raises(ValueError):
            Receiver.plane((0.0, 0.0, 0.0), 0.0)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            Receiver(kind="sphere")

    def test_height_field_needs_scalar(self):
        with pytest.raises(ValueError):
            Receiver.height_field(Field2D(np.zeros((4, 4, 3))))

    def test_degenerate_placement_rejected(self):
        with pytest.raises(ValueError):
            Receiver.height_field(Field2D(np.zeros((4, 4))),
                                  placement=(0.0, 0.0, 0.0, 1.0))


class TestCameraRays:
    def test_ortho_rays_point_down_z(self):
        o, d = camera_rays(ORTHO, 8, 8)
        assert np.allclose(d[..., 2], -1.0)
        assert np.allclose(d[..., :2], 0.0)
        # row 0 is the top of the frame, scene y near 1
        assert o[0, 0, 1] > o[-1, 0, 1]
        assert o[0, 0, 0] < o[0, -1, 0]

    def test_vantage_rays_unit_and_forward(self):
        cam = _vantage((0.5, 0.5, 2.0))
        o, d = camera_rays(cam, 16, 16)
        assert np.allclose(np.linalg.norm(d, axis=-1), 1.0)
        assert np.all(d[..., 2] < 0.0)
        assert np.allclose(o, [0.5, 0.5, 2.0])

    def test_unknown_camera_kind(self):
        cam = Camera(kind=ORTHO_FRONTAL)
        object.__setattr__(cam, "kind", "fisheye")
        with pytest.raises(ValueError):
            camera_rays(cam, 4, 4)


class TestBake:
    def test_identity_is_bit_for_bit(self):
        # source plane as receiver, frontal ortho: the bake is a no-op
        rng = np.random.default_rng(3)
        src = Field2D(rng.random((48, 64, 4)))
        b = bake(src, ORTHO, Receiver.plane((0, 0, 1), 0.0),
                 scale=1.0, filter="nearest")
        assert np.array_equal(b.texture.values, src.values)
        assert b.occluded.values.max() == 0.0

    def test_texture_resolution_doubles_source(self):
        src = smooth_checker(64)
        b = bake(src, ORTHO, slanted_plane())
        assert b.texture.width == 128
        assert b.texture.height == 128

    def test_planar_frame_covers_source_footprint(self):
        b = bake(smooth_checker(32), ORTHO, Receiver.plane((0, 0, 1), 0.0))
        frame = b.uv_map
        assert isinstance(frame, PlanarFrame)
        assert frame.len1 == pytest.approx(1.0)
        assert frame.len2 == pytest.approx(1.0)

    def test_outside_footprint_is_transparent(self):
        # frame bbox exceeds the projected quad: corners go transparent
        src = smooth_checker(32)
        van = _vantage((0.5, 0.5, 1.0), fov_deg=60.0)
        b = bake(src, van, slanted_plane(45.0))
        alpha = b.texture.values[..., 3]
        assert alpha.min() == 0.0
        assert alpha.max() == pytest.approx(1.0, abs=1e-9)

    def test_ortho_height_field_never_self_occludes(self):
        b = bake(smooth_checker(64), ORTHO, wavy_height_field(48))
        assert b.occluded.values.max() == 0.0

    def test_perspective_wall_flags_occlusion(self):
        wall = np.zeros((64, 64))
        wall[:, 30:34] = 0.45
        rec = Receiver.height_field(Field2D(wall))
        van = _vantage((0.05, 0.5, 0.55), fov_deg=60.0)
        b = bake(smooth_checker(64), van, rec)
        assert b.occluded_fraction > 0.05
        # the shadowed side sits behind the wall as seen from the eye
        assert isinstance(b, BakedAnamorph)


class TestRoundTrip:
    def test_slanted_plane_512(self):
        src = smooth_checker(512)
        b = bake(src, ORTHO, slanted_plane())
        out = render_view(b, ORTHO, 512)
        mask = src.values[..., 3] > 0.5
        assert psnr(_rgb(out), _rgb(src), mask=mask) >= 40.0

    def test_height_field_512(self):
        src = smooth_checker(512)
        b = bake(src, ORTHO, wavy_height_field())
        out = render_view(b, ORTHO, 512)
        mask = src.values[..., 3] > 0.5
        assert psnr(_rgb(out), _rgb(src), mask=mask) >= 40.0

    def test_receiver_independence(self):
        src = smooth_checker(512)
        r1 = render_view(bake(src, ORTHO, slanted_plane()), ORTHO, 512)
        r2 = render_view(bake(src, ORTHO, wavy_height_field()), ORTHO, 512)
        mask = src.values[..., 3] > 0.5
        assert psnr(_rgb(r1), _rgb(r2), mask=mask) >= 40.0

    def test_perspective_vantage_round_trip(self):
        # frustum framed to the source square: fov = 2 atan(0.5 / d)
        src = smooth_checker(256)
        d = 1.6
        van = _vantage((0.5, 0.5, d),
                       fov_deg=np.degrees(2 * np.arctan(0.5 / d)))
        b = bake(src, van, slanted_plane(25.0))
        out = render_view(b, van, 256)
        mask = src.values[..., 3] > 0.5
        assert psnr(_rgb(out), _rgb(src), mask=mask) >= 40.0

    def test_off_vantage_breaks_the_illusion(self):
        src = smooth_checker(512)
        b = bake(src, ORTHO, slanted_plane())
        center = np.array([0.5, 0.5, 0.0])
        eye = center + 1.5 * np.array([np.sin(np.radians(30)), 0.0,
                                       np.cos(np.radians(30))])
        out = render_view(b, _vantage(eye), 512)
        mask = src.values[..., 3] > 0.5
        assert psnr(_rgb(out), _rgb(src), mask=mask) < 25.0

    def test_z_deformation_rebake_is_invariant(self):
        src = smooth_checker(256)
        base = wavy_height_field(64)
        squashed = Receiver.height_field(
            Field2D(base.height.values * 0.5 + 0.12))
        r1 = render_view(bake(src, ORTHO, base), ORTHO, 256)
        r2 = render_view(bake(src, ORTHO, squashed), ORTHO, 256)
        mask = src.values[..., 3] > 0.5
        assert psnr(_rgb(r1), _rgb(r2), mask=mask) >= 40.0


class TestRenderView:
    def test_miss_is_fully_transparent(self):
        src = smooth_checker(64)
        b = bake(src, ORTHO, slanted_plane())
        # viewer looking away from the receiver: every ray misses
        away = Camera(kind=VANTAGE, eye=(0.5, 0.5, 2.0),
                      look_at=(0.5, 0.5, 4.0), fov_y=np.radians(40))
        out = render_view(b, away, 32)
        assert np.array_equal(out.values, np.zeros((32, 32, 4)))

    def test_wide_view_has_transparent_border(self):
        src = smooth_checker(64)
        b = bake(src, ORTHO, slanted_plane())
        wide = _vantage((0.5, 0.5, 3.0), fov_deg=70.0)
        out = render_view(b, wide, 96)
        alpha = out.values[..., 3]
        assert alpha[0, 0] == 0.0
        assert alpha[48, 48] > 0.5

    def test_rectangular_resolution(self):
        b = bake(smooth_checker(32), ORTHO, slanted_plane())
        out = render_view(b, ORTHO, (40, 24))
        assert out.values.shape == (24, 40, 4)

    def test_height_field_side_entry_misses(self):
        # rays entering the slab below the surface hit no front face
        rec = wavy_height_field(32)
        b = bake(smooth_checker(32), ORTHO, rec)
        side = Camera(kind=VANTAGE, eye=(-0.5, 0.5, 0.01),
                      look_at=(1.0, 0.5, 0.01), fov_y=np.radians(10))
        out = render_view(b, side, 24)
        assert out.values[..., 3].max() <= 1.0


class TestOcclusionGeometry:
    def test_flagged_region_sits_behind_the_wall(self):
        wall = np.zeros((64, 64))
        wall[:, 30:34] = 0.45
        rec = Receiver.height_field(Field2D(wall))
        van = _vantage((0.05, 0.5, 0.55), fov_deg=60.0)
        b = bake(smooth_checker(64), van, rec)
        occ = b.occluded.values
        # columns left of the wall (near the eye) stay visible
        assert occ[:, : occ.shape[1] // 4].max() == 0.0
        assert occ[:, occ.shape[1] // 2 :].mean() > 0.3
