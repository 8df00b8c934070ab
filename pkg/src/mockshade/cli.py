"""Command line front end: batch rendering, light-path animation,
normal-field analysis, photo compositing, anamorphic baking, and the
live render service.

Exit codes: 0 success, 1 scene validation failure (each issue on its
own stderr line), 2 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from .anamorph import Receiver, bake as bake_anamorph, render_view
from .compositor import CompositeRecipe, composite, render_impacts
from .errors import MockshadeError, SceneParseError
from .field import Field2D
from .illumination import render_frame
from .imageio import load_scalar, save_color, save_pfm
from .integrability import curl_residual, integrate_normals
from .scene import Camera, MockScene, ORTHO_FRONTAL, VANTAGE, parse_scene

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_IO = 2


def _fail_parse(exc: SceneParseError) -> int:
    for issue in exc.issues:
        print(str(issue), file=sys.stderr)
    return EXIT_INVALID


def _load_scene(path: str) -> MockScene:
    text = Path(path).read_text()
    return parse_scene(text, base_dir=Path(path).parent)


def _threads(args) -> Optional[int]:
    if args.threads is not None:
        return args.threads
    env = os.environ.get("MOCKSHADE_THREADS")
    return int(env) if env else None


def _write_frame(scene: MockScene, t: float, prefix: str, *,
                 w_only: bool, threads: Optional[int]) -> None:
    final, w_img = render_frame(scene, t, threads=threads)
    save_pfm(w_img.combined_w, f"{prefix}_w.pfm")
    if not w_only:
        save_color(final, f"{prefix}_final.png")
    sidecar = {
        "t": t,
        "exposure": w_img.exposure,
        "light_groups": sorted(int(g) for g in w_img.diffuse),
    }
    Path(f"{prefix}_meta.json").write_text(json.dumps(sidecar, indent=2))


def cmd_render(args) -> int:
    try:
        scene = _load_scene(args.scene)
    except SceneParseError as exc:
        return _fail_parse(exc)
    except OSError as exc:
        print(exc, file=sys.stderr)
        return EXIT_IO
    try:
        _write_frame(scene, args.t, args.out, w_only=args.w_only,
                     threads=_threads(args))
    except MockshadeError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(exc, file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def cmd_animate(args) -> int:
    if args.frames < 1:
        print("--frames must be >= 1", file=sys.stderr)
        return EXIT_INVALID
    try:
        scene = _load_scene(args.scene)
    except SceneParseError as exc:
        return _fail_parse(exc)
    except OSError as exc:
        print(exc, file=sys.stderr)
        return EXIT_IO
    try:
        for i in range(args.frames):
            t = i / args.fps
            _write_frame(scene, t, f"{args.out}_{i:04d}",
                         w_only=args.w_only, threads=_threads(args))
    except MockshadeError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(exc, file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def cmd_analyze(args) -> int:
    """Per-layer normal-field report: peak curl, least-squares residual
    after integrating the normals back to a height, masked fraction."""
    from .illumination import _layer_raster

    try:
        scene = _load_scene(args.scene)
    except SceneParseError as exc:
        return _fail_parse(exc)
    except OSError as exc:
        print(exc, file=sys.stderr)
        return EXIT_IO
    if not scene.layers:
        print("scene has no layers to analyze", file=sys.stderr)
        return EXIT_INVALID
    report = {}
    for layer in scene.layers:
        w_res, h_res = scene.resolution
        _, _, normals, _ = _layer_raster(layer, w_res, h_res)
        normals = Field2D(normals)
        curl = curl_residual(normals)
        integ = integrate_normals(normals)
        report[layer.id] = {
            "max_curl": float(np.abs(curl.residual.values).max()),
            "residual_norm": float(integ.residual_norm),
            "masked_fraction": float(curl.masked.mean()),
        }
    text = json.dumps(report, indent=2)
    if args.out:
        try:
            Path(args.out).write_text(text)
        except OSError as exc:
            print(exc, file=sys.stderr)
            return EXIT_IO
    else:
        print(text)
    return EXIT_OK


def cmd_composite(args) -> int:
    try:
        scene = _load_scene(args.scene)
    except SceneParseError as exc:
        return _fail_parse(exc)
    except OSError as exc:
        print(exc, file=sys.stderr)
        return EXIT_IO
    if scene.background is None:
        print("composite needs a scene background to augment",
              file=sys.stderr)
        return EXIT_INVALID
    virtual = {v for v in args.virtual.split(",") if v}
    if not virtual:
        print("--virtual must name at least one layer", file=sys.stderr)
        return EXIT_INVALID
    try:
        impacts = render_impacts(scene, virtual)
        recipe = CompositeRecipe(background=scene.background,
                                 impacts=(impacts,),
                                 shadow_strength=args.shadow_strength)
        save_color(composite(recipe), f"{args.out}_composite.png")
    except MockshadeError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(exc, file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def _parse_camera(doc: dict) -> Camera:
    kind = doc.get("kind", ORTHO_FRONTAL)
    if kind == ORTHO_FRONTAL:
        return Camera(kind=ORTHO_FRONTAL)
    if kind == VANTAGE:
        return Camera(kind=VANTAGE, eye=tuple(doc["eye"]),
                      look_at=tuple(doc["look_at"]),
                      fov_y=float(doc["fov_y"]))
    raise ValueError(f"unknown camera kind {kind!r}")


def _parse_receiver(doc: dict, base: Path) -> Receiver:
    kind = doc.get("kind")
    if kind == "plane":
        return Receiver.plane(doc["normal"], float(doc["offset"]))
    if kind == "height_field":
        height = load_scalar(str(base / doc["height"]))
        return Receiver.height_field(
            height, placement=tuple(doc.get("placement", (0, 0, 1, 1))))
    raise ValueError(f"unknown receiver kind {kind!r}")


def _load_bake_doc(path: str):
    from .imageio import load_color

    base = Path(path).parent
    doc = json.loads(Path(path).read_text())
    source = load_color(str(base / doc["source"]))
    vantage = _parse_camera(doc.get("vantage", {}))
    receiver = _parse_receiver(doc["receiver"], base)
    return doc, source, vantage, receiver


def cmd_bake(args) -> int:
    try:
        doc, source, vantage, receiver = _load_bake_doc(args.scene)
        baked = bake_anamorph(source, vantage, receiver,
                              scale=float(doc.get("scale", 2.0)))
        save_pfm(Field2D(baked.texture.values[..., :3]),
                 f"{args.out}_texture.pfm")
        save_pfm(Field2D(baked.texture.values[..., 3]),
                 f"{args.out}_alpha.pfm")
        save_pfm(baked.occluded, f"{args.out}_occluded.pfm")
    except (KeyError, ValueError, json.JSONDecodeError) as exc:
        print(f"invalid bake document: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(exc, file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def cmd_view(args) -> int:
    try:
        doc, source, vantage, receiver = _load_bake_doc(args.scene)
        baked = bake_anamorph(source, vantage, receiver,
                              scale=float(doc.get("scale", 2.0)))
        viewer = _parse_camera(doc.get("viewer", doc.get("vantage", {})))
        resolution = int(doc.get("view_resolution",
                                 max(source.width, source.height)))
        out = render_view(baked, viewer, resolution)
        save_color(out, f"{args.out}_view.png")
    except (KeyError, ValueError, json.JSONDecodeError) as exc:
        print(f"invalid bake document: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(exc, file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    try:
        app = create_app(args.scene, threads=_threads(args))
    except SceneParseError as exc:
        return _fail_parse(exc)
    except OSError as exc:
        print(exc, file=sys.stderr)
        return EXIT_IO
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mockshade",
        description="two-stage expressive renderer",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out=True):
        p.add_argument("--scene", required=True)
        if out:
            p.add_argument("--out", required=True)
        p.add_argument("--threads", type=int, default=None)

    p = sub.add_parser("render", help="render one frame")
    common(p)
    p.add_argument("--t", type=float, default=0.0)
    p.add_argument("--w-only", action="store_true")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("animate", help="render a light-path animation")
    common(p)
    p.add_argument("--frames", type=int, default=1)
    p.add_argument("--fps", type=float, default=24.0)
    p.add_argument("--w-only", action="store_true")
    p.set_defaults(func=cmd_animate)

    p = sub.add_parser("analyze", help="normal-field integrability report")
    p.add_argument("--scene", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("composite", help="composite virtual layers onto "
                                         "the scene background")
    common(p)
    p.add_argument("--virtual", required=True,
                   help="comma-separated virtual layer ids")
    p.add_argument("--shadow-strength", type=float, default=0.8)
    p.set_defaults(func=cmd_composite)

    p = sub.add_parser("bake", help="bake an anamorphic projection")
    common(p)
    p.set_defaults(func=cmd_bake)

    p = sub.add_parser("view", help="render a baked anamorph from a viewer")
    common(p)
    p.set_defaults(func=cmd_view)

    p = sub.add_parser("serve", help="run the live render service")
    p.add_argument("--scene", required=True)
    p.add_argument("--port", type=int, default=8321)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
