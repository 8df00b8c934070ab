"""Live render service: scene editing over HTTP, frames over WebSocket.

One process owns one scene. Edits are JSON merge patches applied to the
scene document and revalidated as a whole, so a rejected edit can never
leave partial state behind. Renders run on immutable scene snapshots
off the event loop; each live socket keeps at most one render in flight
and newer revisions supersede frames still being computed.
"""

from __future__ import annotations

import asyncio
import base64
import copy
import json
import threading
from pathlib import Path
from typing import Dict, Optional, Set, Tuple

from fastapi import FastAPI, Request, Response, WebSocket, WebSocketDisconnect

from .errors import SceneParseError
from .illumination import IlluminationImage, render_frame
from .imageio import pfm_bytes, png_bytes
from .scene import MockScene, parse_scene

_CACHE_CAP = 16


def merge_patch(target, patch):
    """RFC 7386 JSON merge patch: null deletes, objects recurse, anything
    else (arrays included) replaces wholesale."""
    if not isinstance(patch, dict):
        return copy.deepcopy(patch)
    result = dict(target) if isinstance(target, dict) else {}
    for key, value in patch.items():
        if value is None:
            result.pop(key, None)
        else:
            result[key] = merge_patch(result.get(key), value)
    return result


class SessionState:
    """Single-scene session: revision counter plus a W cache keyed by
    (revision, t). The lock guards state swaps only; rendering happens
    outside it on frozen snapshots."""

    def __init__(self, scene: MockScene, threads: Optional[int] = None):
        self._lock = threading.Lock()
        self.scene = scene
        self.revision = 0
        self.threads = threads
        self._w_cache: Dict[Tuple[int, float], IlluminationImage] = {}
        self.live: Set["_LiveConn"] = set()

    def snapshot(self) -> Tuple[MockScene, int]:
        with self._lock:
            return self.scene, self.revision

    def apply_patch(self, patch: dict) -> int:
        """Merge-patch the document and reparse; raises SceneParseError
        with the old state intact when validation fails."""
        with self._lock:
            doc = merge_patch(self.scene.document, patch)
            scene = parse_scene(doc, base_dir=self.scene.base_dir)
            self.scene = scene
            self.revision += 1
            self._w_cache.clear()
            return self.revision

    def render(self, scene: MockScene, revision: int, t: float):
        """Final frame plus W for a snapshot, cache-backed per (revision, t)."""
        key = (revision, float(t))
        with self._lock:
            cached = self._w_cache.get(key)
        final, w_img = render_frame(scene, t, threads=self.threads,
                                    w_image=cached)
        with self._lock:
            if revision == self.revision:
                if len(self._w_cache) >= _CACHE_CAP:
                    self._w_cache.pop(next(iter(self._w_cache)))
                self._w_cache[key] = w_img
        return final, w_img


class _LiveConn:
    def __init__(self):
        self.t = 0.0
        self.dirty = asyncio.Event()
        self.dirty.set()  # first frame pushes on connect


def create_app(scene_source, base_dir=None,
               threads: Optional[int] = None) -> FastAPI:
    """Build the service around one scene (path, JSON text, or dict)."""
    def _is_file(src) -> bool:
        if not isinstance(src, (str, Path)):
            return False
        try:
            return Path(src).is_file()
        except OSError:  # JSON text is not a valid path
            return False

    if _is_file(scene_source):
        path = Path(scene_source)
        scene = parse_scene(path.read_text(),
                            base_dir=base_dir or path.parent)
    else:
        scene = parse_scene(scene_source, base_dir=base_dir)

    state = SessionState(scene, threads=threads)
    app = FastAPI()
    app.state.session = state

    def _issues_payload(exc: SceneParseError):
        return {"issues": [str(i) for i in exc.issues]}

    @app.get("/scene")
    async def get_scene():
        scene, revision = state.snapshot()
        return Response(
            content=json.dumps({"revision": revision,
                                "scene": scene.document}),
            media_type="application/json",
            headers={"X-Revision": str(revision)},
        )

    @app.patch("/scene")
    async def patch_scene(request: Request):
        if_match = request.headers.get("if-match")
        try:
            patch = json.loads(await request.body())
        except json.JSONDecodeError:
            return Response(
                content=json.dumps({"issues": ["patch is not valid JSON"]}),
                status_code=400, media_type="application/json",
            )
        _, revision = state.snapshot()
        if if_match is not None and if_match.strip('"') != str(revision):
            return Response(
                content=json.dumps({"revision": revision}),
                status_code=409, media_type="application/json",
                headers={"X-Revision": str(revision)},
            )
        try:
            new_rev = state.apply_patch(patch)
        except SceneParseError as exc:
            return Response(
                content=json.dumps(_issues_payload(exc)),
                status_code=400, media_type="application/json",
                headers={"X-Revision": str(revision)},
            )
        for conn in list(state.live):
            conn.dirty.set()
        return Response(
            content=json.dumps({"revision": new_rev}),
            media_type="application/json",
            headers={"X-Revision": str(new_rev)},
        )

    @app.post("/render")
    async def render(t: float = 0.0):
        scene, revision = state.snapshot()
        final, _ = await asyncio.to_thread(state.render, scene, revision, t)
        return Response(content=png_bytes(final), media_type="image/png",
                        headers={"X-Revision": str(revision)})

    @app.get("/w")
    async def w_endpoint(t: float = 0.0):
        scene, revision = state.snapshot()
        _, w_img = await asyncio.to_thread(state.render, scene, revision, t)
        return Response(content=pfm_bytes(w_img.combined_w),
                        media_type="application/octet-stream",
                        headers={"X-Revision": str(revision)})

    async def _pump(ws: WebSocket, conn: _LiveConn):
        while True:
            await conn.dirty.wait()
            conn.dirty.clear()
            while True:
                scene, revision = state.snapshot()
                t = conn.t
                final, _ = await asyncio.to_thread(
                    state.render, scene, revision, t)
                _, now = state.snapshot()
                if now == revision and t == conn.t:
                    break  # else superseded mid-render; redo with fresh state
            await ws.send_json({
                "revision": revision,
                "t": t,
                "format": "png",
                "data_base64": base64.b64encode(png_bytes(final)).decode(),
            })

    @app.websocket("/live")
    async def live(ws: WebSocket):
        await ws.accept()
        conn = _LiveConn()
        state.live.add(conn)
        pump = asyncio.create_task(_pump(ws, conn))
        try:
            while True:
                msg = await ws.receive_json()
                if isinstance(msg, dict) and "t" in msg:
                    conn.t = float(msg["t"])
                    conn.dirty.set()
        except WebSocketDisconnect:
            pass
        finally:
            state.live.discard(conn)
            pump.cancel()
            try:
                await pump
            except (asyncio.CancelledError, Exception):
                pass

    return app
