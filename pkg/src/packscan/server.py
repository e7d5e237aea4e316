"""JSON-over-HTTP session API hosting the pipeline's human decision points.

The review UI is a thin client: every displayed artifact (histogram, slice
preview, z-profile with detected peaks, divider mask with cut overlays) is
fetched from here, and every decision is POSTed back, landing in the same
sidecars the headless path reads. Decisions entered through this API are
therefore byte-identical to decisions entered via config files.

GET   /api/session            step states and layout summary
GET   /api/histogram          500-bin histogram of the subsampled volume
GET   /api/slice?k=&...       PNG preview, rotation/crop applied (query overrides)
GET   /api/zprofile           z-profile, peak candidates, cuts, slabs
GET   /api/grid?tier=         per-tier rotation, cuts and axis projections
GET   /api/divider_mask?tier= PNG of the (rotated) divider mask
POST  /api/align              {angle_deg, row_range, col_range}
POST  /api/thresholds         {a_divider, b_divider, a_object[, b_object]}
POST  /api/tier_cuts          {cuts: [...]}
POST  /api/grid_cuts          {tier[, rotation_deg][, row_cuts, col_cuts]}
POST  /api/run                {through: step}

Mutating POSTs are serialized per session; everything else may run
concurrently. Static assets (the review UI bundle) are served from an
optional directory at /.
"""

from __future__ import annotations

import io
import json
import threading
import traceback
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

import numpy as np
from PIL import Image

from . import segment
from .errors import MissingDecision, PackscanError
from .imaging import area_resize, rotate
from .session import STEPS, Session
from .volume import AlignmentParams, read_slice, rotate_crop

MIME = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".map": "application/json",
    ".svg": "image/svg+xml",
    ".png": "image/png",
    ".ico": "image/x-icon",
}


def _to_png(img: np.ndarray) -> bytes:
    lo = float(img.min())
    hi = float(img.max())
    scale = 255.0 / (hi - lo) if hi > lo else 0.0
    u8 = ((np.asarray(img, dtype=np.float64) - lo) * scale).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(u8, mode="L").save(buf, format="PNG")
    return buf.getvalue()


class SessionApi:
    """Request-independent view/update logic; the handler stays dumb."""

    def __init__(self, session: Session, static_dir=None):
        self.session = session
        self.static_dir = Path(static_dir) if static_dir else None
        self.lock = threading.Lock()

    # --- GET payloads ---

    def session_view(self) -> dict:
        lay = self.session.layout()
        return {
            "steps": {s: self.session.status(s) for s in STEPS},
            "scan_id": lay.scan_id,
            "tiers": [
                {
                    "index": t.tier_index,
                    "n_rows": t.n_rows,
                    "n_cols": t.n_cols,
                    "occupied": int(t.occupancy().sum()),
                }
                for t in lay.tiers
            ],
            "occupied_total": lay.occupied_count(),
            "slice_count": self.session.stack().count,
        }

    def histogram_view(self) -> dict:
        return self.session.read_sidecar("histogram")

    def slice_preview(self, query: dict) -> bytes:
        k = int(query.get("k", ["1"])[0])
        max_px = int(query.get("max_px", ["1024"])[0])
        stack = self.session.stack()
        img = read_slice(stack, k)
        params = None
        if "angle" in query:
            params = AlignmentParams(
                angle_deg=float(query["angle"][0]),
                row_range=(int(query["r0"][0]), int(query["r1"][0])),
                col_range=(int(query["c0"][0]), int(query["c1"][0])),
            )
        elif self.session.sidecar_path("align").exists():
            params = self.session.alignment()
        if params is not None:
            view = rotate_crop(img, params)
        else:
            view = np.asarray(img, dtype=np.float32)
        h, w = view.shape
        if max(h, w) > max_px:
            s = max_px / max(h, w)
            view = area_resize(view, (max(1, int(h * s)), max(1, int(w * s))))
        return _to_png(view)

    def zprofile_view(self) -> dict:
        if self.session.sidecar_path("tiers").exists():
            return self.session.read_sidecar("tiers")
        vol = self.session.subsampled()
        profile = segment.z_profile(vol)
        out = {"profile": [float(v) for v in profile], "ratified": False}
        try:
            detection = segment.detect_tier_boundaries(
                profile, n_tiers=self.session.layout().n_tiers,
                min_width=self.session.config.min_width,
            )
            out.update(detection.to_json())
            out["profile"] = [float(v) for v in profile]
        except PackscanError as exc:
            out["error"] = {"type": type(exc).__name__, "message": str(exc)}
        return out

    def _tier_grid(self, tier_index: int):
        vol = self.session.subsampled()
        thr = self.session.thresholds()
        lay = self.session.layout()
        tiers_json = self.session.read_sidecar("tiers")
        slab = segment.TierSlab(**tiers_json["slabs"][tier_index - 1])
        tier_layout = lay.tier(tier_index)
        div = segment.divider_image(vol.data[slab.z_start:slab.z_stop], thr)
        return div, slab, tier_layout

    def grid_view(self, query: dict) -> dict:
        tier_index = int(query.get("tier", ["1"])[0])
        div, _slab, tier_layout = self._tier_grid(tier_index)
        if self.session.sidecar_path("grid").exists():
            grid = self.session.read_sidecar("grid")
            entry = next(
                e for e in grid["tiers"] if e["tier_index"] == tier_index
            )
        else:
            angle = segment.auto_rotate(div.mask)
            try:
                cuts = segment.grid_segment(
                    rotate(div.mask.astype(np.float64), angle),
                    tier_layout.n_rows, tier_layout.n_cols, rotation_deg=angle,
                )
                entry = cuts.to_json()
            except PackscanError as exc:
                entry = {
                    "rotation_deg": angle,
                    "error": {"type": type(exc).__name__, "message": str(exc)},
                }
            entry["tier_index"] = tier_index
        rotated = rotate(div.mask.astype(np.float64), float(entry["rotation_deg"]))
        entry = dict(entry)
        entry["projections"] = {
            "rows": [float(v) for v in rotated.sum(axis=1)],
            "cols": [float(v) for v in rotated.sum(axis=0)],
        }
        entry["n_rows"] = tier_layout.n_rows
        entry["n_cols"] = tier_layout.n_cols
        return entry

    def divider_mask_png(self, query: dict) -> bytes:
        tier_index = int(query.get("tier", ["1"])[0])
        div, _, _ = self._tier_grid(tier_index)
        angle = float(query.get("rotation", ["nan"])[0])
        if np.isnan(angle):
            if self.session.sidecar_path("grid").exists():
                grid = self.session.read_sidecar("grid")
                angle = next(
                    e["rotation_deg"] for e in grid["tiers"]
                    if e["tier_index"] == tier_index
                )
            else:
                angle = segment.auto_rotate(div.mask)
        img = rotate(div.mask.astype(np.float64), angle) if angle else div.mask
        return _to_png(img)

    # --- POST handlers ---

    def post(self, route: str, body: dict) -> dict:
        with self.lock:
            if route == "align":
                self.session.provide("align", body)
            elif route == "thresholds":
                self.session.provide("thresholds", body)
            elif route == "tier_cuts":
                self.session.provide("tiers", body)
            elif route == "grid_cuts":
                self.session.provide("grid", body)
            elif route == "run":
                through = body.get("through", "surface")
                report = self.session.run(through=through)
                return {"ok": True, "report": report.to_json(),
                        "steps": {s: self.session.status(s) for s in STEPS}}
            else:
                raise PackscanError(f"unknown POST route {route!r}")
            return {"ok": True, "steps": {s: self.session.status(s) for s in STEPS}}


def make_server(session: Session, bind: str = "127.0.0.1:8787",
                static_dir=None) -> ThreadingHTTPServer:
    api = SessionApi(session, static_dir=static_dir)
    host, _, port = bind.partition(":")

    class Handler(BaseHTTPRequestHandler):
        def log_message(self, fmt, *args):  # keep tests quiet
            pass

        def _send(self, code: int, body: bytes, ctype: str) -> None:
            self.send_response(code)
            self.send_header("Content-Type", ctype)
            self.send_header("Content-Length", str(len(body)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            self.wfile.write(body)

        def _send_json(self, obj, code: int = 200) -> None:
            self._send(code, json.dumps(obj).encode(), "application/json")

        def _fail(self, exc: Exception) -> None:
            code = 409 if isinstance(exc, MissingDecision) else 400
            if not isinstance(exc, PackscanError):
                code = 500
                traceback.print_exc()
            self._send_json(
                {"error": {"type": type(exc).__name__, "message": str(exc)}},
                code=code,
            )

        def do_GET(self):
            url = urlparse(self.path)
            query = parse_qs(url.query)
            try:
                if url.path == "/api/session":
                    self._send_json(api.session_view())
                elif url.path == "/api/histogram":
                    self._send_json(api.histogram_view())
                elif url.path == "/api/zprofile":
                    with api.lock:
                        self._send_json(api.zprofile_view())
                elif url.path == "/api/grid":
                    with api.lock:
                        self._send_json(api.grid_view(query))
                elif url.path == "/api/slice":
                    self._send(200, api.slice_preview(query), "image/png")
                elif url.path == "/api/divider_mask":
                    with api.lock:
                        self._send(200, api.divider_mask_png(query), "image/png")
                else:
                    self._static(url.path)
            except Exception as exc:  # noqa: BLE001 - surfaced as HTTP error
                self._fail(exc)

        def _static(self, path: str) -> None:
            if api.static_dir is None:
                self._send_json({"error": {"type": "NotFound", "message": path}}, 404)
                return
            rel = path.lstrip("/") or "index.html"
            target = (api.static_dir / rel).resolve()
            if not str(target).startswith(str(api.static_dir.resolve())) \
                    or not target.is_file():
                self._send_json({"error": {"type": "NotFound", "message": path}}, 404)
                return
            ctype = MIME.get(target.suffix, "application/octet-stream")
            self._send(200, target.read_bytes(), ctype)

        def do_POST(self):
            url = urlparse(self.path)
            try:
                length = int(self.headers.get("Content-Length", "0"))
                body = json.loads(self.rfile.read(length) or b"{}")
                if not url.path.startswith("/api/"):
                    raise PackscanError(f"unknown POST path {url.path}")
                route = url.path[len("/api/"):]
                self._send_json(api.post(route, body))
            except Exception as exc:  # noqa: BLE001
                self._fail(exc)

    server = ThreadingHTTPServer((host or "127.0.0.1", int(port or 8787)), Handler)
    server.api = api
    return server


def serve(session: Session, bind: str = "127.0.0.1:8787", static_dir=None) -> None:
    server = make_server(session, bind=bind, static_dir=static_dir)
    host, port = server.server_address[:2]
    print(f"review API on http://{host}:{port}/ (Ctrl-C to stop)")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
