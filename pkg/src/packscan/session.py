"""Pipeline orchestration: ordered steps, persisted decisions, resume safety.

A session binds one scan + layout to an output directory. Steps run in a
fixed order (align, subsample, thresholds, tiers, grid, extract, surface);
each step persists its decisions and derived artifacts as a JSON sidecar
under ``<out>/meta/``, so a killed run resumes from the last completed step
and a headless re-run with the same inputs is byte-identical. Human decisions
(alignment, thresholds, optional cut overrides) come either from the config
file or from the review API; both paths write the same sidecars.

Re-running or re-deciding a step invalidates everything downstream.
"""

from __future__ import annotations

import json
import os
import re
import shutil
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ImportError:  # Python 3.10
    import tomli as tomllib

from . import layout as layout_mod
from . import segment, surface, synth
from .errors import MissingDecision, PackscanError, SessionError, StepFailed
from .imaging import RotationResampler, rotate
from .memory import AllocationTracker
from .store import SubvolumeStore
from .volume import (
    AlignmentParams,
    SubsampledVolume,
    open_slice_stack,
    read_slice,
    subsample,
)

STEPS = ("align", "subsample", "thresholds", "tiers", "grid", "extract", "surface")

DEFAULT_MAX_MEMORY = 16 * 1024**3


def parse_memory(value) -> int:
    """'16GiB', '512MB', '2g' or a plain byte count -> bytes."""
    if isinstance(value, (int, float)):
        return int(value)
    m = re.fullmatch(r"\s*([\d.]+)\s*([KMGT]i?B?|B)?\s*", str(value), re.I)
    if not m:
        raise SessionError(f"cannot parse memory size {value!r}")
    scale = {"": 1, "B": 1, "K": 1024, "M": 1024**2, "G": 1024**3, "T": 1024**4}
    unit = (m.group(2) or "").upper().replace("IB", "").replace("B", "")
    return int(float(m.group(1)) * scale[unit])


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)


@dataclass
class SessionConfig:
    scan_dir: Path
    layout_path: Path
    out_dir: Path
    scan_id: str | None = None
    pitch_um: float | None = None
    max_memory: int = DEFAULT_MAX_MEMORY
    workers: int | None = None
    isolevel: float | None = None
    pad: int = 3
    min_width: int = 10
    align: dict | None = None
    thresholds: dict | None = None
    tier_cuts: list | None = None
    grid_overrides: dict = field(default_factory=dict)

    @classmethod
    def from_toml(cls, path, **overrides) -> "SessionConfig":
        path = Path(path)
        base = path.parent
        raw = tomllib.loads(path.read_text())
        scan = raw.get("scan", {})
        run = raw.get("run", {})
        over = raw.get("overrides", {})

        def _resolve(p):
            p = Path(p)
            return p if p.is_absolute() else base / p

        align = raw.get("align") or None
        if align and "file" in align:
            params = AlignmentParams.from_text(_resolve(align["file"]).read_text())
            align = params.to_json()

        cfg = cls(
            scan_dir=_resolve(scan.get("dir", "scan")),
            layout_path=_resolve(scan.get("layout", "layout.csv")),
            out_dir=_resolve(run.get("out", "out")),
            scan_id=scan.get("id"),
            pitch_um=scan.get("pitch_um"),
            max_memory=parse_memory(run.get("max_memory", DEFAULT_MAX_MEMORY)),
            workers=run.get("workers"),
            isolevel=run.get("isolevel"),
            pad=int(run.get("pad", 3)),
            min_width=int(run.get("min_width", 10)),
            align=align,
            thresholds=raw.get("thresholds") or None,
            tier_cuts=over.get("tier_cuts"),
            grid_overrides={str(k): v for k, v in over.get("grid", {}).items()},
        )
        for key, value in overrides.items():
            if value is not None:
                setattr(cfg, key, value)
        cfg.out_dir = Path(cfg.out_dir)
        cfg.scan_dir = Path(cfg.scan_dir)
        cfg.layout_path = Path(cfg.layout_path)
        return cfg


@dataclass
class SessionReport:
    steps_run: list
    timings: dict
    objects: int
    failures: list
    peak_tracked_bytes: int
    out_dir: str

    def to_json(self) -> dict:
        return {
            "steps_run": self.steps_run,
            "timings_s": {k: round(v, 3) for k, v in self.timings.items()},
            "objects": self.objects,
            "failures": self.failures,
            "peak_tracked_bytes": self.peak_tracked_bytes,
            "out_dir": self.out_dir,
        }


def _surface_worker(args) -> dict:
    """Surface one finalized subvolume (runs in a worker process)."""
    (store_root, identifier, isolevel, pitch_um, mesh_dir, budget) = args
    tracker = AllocationTracker()
    store = SubvolumeStore(store_root)
    vol = store.load(identifier, budget=budget, tracker=tracker)
    try:
        job = surface.SurfaceJob(
            identifier=identifier, isolevel=isolevel, pitch_um=pitch_um,
            out_dir=Path(mesh_dir),
        )
        try:
            mesh = surface.marching_cubes(vol, isolevel)
        except PackscanError as exc:
            return {"identifier": identifier, "error": type(exc).__name__,
                    "message": str(exc)}
        cleaned = surface.clean_mesh(mesh)
        path = surface.scale_and_write(cleaned.mesh, job)
        mm = pitch_um / 1000.0
        verts_mm = cleaned.mesh.vertices * mm
        meta = store.meta(identifier)
        return {
            "identifier": identifier,
            "isolevel": isolevel,
            "path": path.name,
            "watertight": cleaned.watertight,
            "n_components": cleaned.n_components,
            "dropped_faces": cleaned.dropped_faces,
            "vertices": int(cleaned.mesh.n_vertices),
            "faces": int(cleaned.mesh.n_faces),
            "bounds_mm": [
                [float(v) for v in verts_mm.min(axis=0)],
                [float(v) for v in verts_mm.max(axis=0)],
            ],
            "centroid_mm": [float(v) for v in verts_mm.mean(axis=0)],
            "box": meta.get("box", {}),
            "peak_tracked_bytes": tracker.peak,
        }
    finally:
        store.release(vol, tracker=tracker)


class Session:
    def __init__(self, config: SessionConfig):
        self.config = config
        self.out_dir = Path(config.out_dir)
        self.meta_dir = self.out_dir / "meta"
        self.sub_dir = self.out_dir / "sub"
        self.subvol_dir = self.out_dir / "subvols"
        self.mesh_dir = self.out_dir / "meshes"
        self.meta_dir.mkdir(parents=True, exist_ok=True)
        self.tracker = AllocationTracker()
        self._state = self._load_state()
        self._stack = None
        self._layout = None
        self._sub = None

    # --- state bookkeeping ---

    def _state_path(self) -> Path:
        return self.meta_dir / "session.json"

    def _load_state(self) -> dict:
        path = self._state_path()
        if path.exists():
            return json.loads(path.read_text())
        return {"steps": {s: "pending" for s in STEPS}}

    def _save_state(self) -> None:
        _write_atomic(self._state_path(), canonical_json(self._state))

    def status(self, step: str) -> str:
        return self._state["steps"].get(step, "pending")

    def _mark(self, step: str, status: str) -> None:
        self._state["steps"][step] = status
        self._save_state()

    def sidecar_path(self, name: str) -> Path:
        return self.meta_dir / f"{name}.json"

    def read_sidecar(self, name: str) -> dict:
        path = self.sidecar_path(name)
        if not path.exists():
            raise SessionError(f"sidecar {name}.json missing; run its step first")
        return json.loads(path.read_text())

    def write_sidecar(self, name: str, obj: dict) -> None:
        _write_atomic(self.sidecar_path(name), canonical_json(obj))

    def invalidate_from(self, step: str) -> None:
        """Mark `step` and everything after it pending and drop their artifacts."""
        idx = STEPS.index(step)
        for s in STEPS[idx:]:
            self._state["steps"][s] = "pending"
        sidecars = {
            "align": ["align"],
            "subsample": ["subsample", "histogram"],
            "thresholds": ["thresholds"],
            "tiers": ["tiers"],
            "grid": ["grid", "boxes"],
            "extract": ["extract"],
            "surface": ["surface"],
        }
        for s in STEPS[idx:]:
            for name in sidecars[s]:
                self.sidecar_path(name).unlink(missing_ok=True)
        if idx <= STEPS.index("subsample"):
            shutil.rmtree(self.sub_dir, ignore_errors=True)
        if idx <= STEPS.index("extract"):
            shutil.rmtree(self.subvol_dir, ignore_errors=True)
        if idx <= STEPS.index("surface"):
            shutil.rmtree(self.mesh_dir, ignore_errors=True)
        self._sub = None
        self._save_state()

    # --- decisions (config file or API, single sink) ---

    def provide(self, step: str, decision: dict) -> None:
        """Persist a human decision for a step and invalidate downstream."""
        if step == "align":
            params = AlignmentParams.from_json(decision)
            self.invalidate_from("align")
            self.write_sidecar("align", params.to_json())
            self._mark("align", "done")
        elif step == "thresholds":
            thr = segment.ThresholdSet.from_json(decision)
            self.invalidate_from("thresholds")
            self.write_sidecar("thresholds", thr.to_json())
            self._mark("thresholds", "done")
        elif step == "tiers":
            cuts = [int(c) for c in decision["cuts"]]
            self.invalidate_from("tiers")
            self._run_tiers(overrides=cuts)
        elif step == "grid":
            tier = str(decision["tier"])
            self.invalidate_from("grid")
            self.config.grid_overrides[tier] = {
                k: v for k, v in decision.items() if k != "tier"
            }
            self._run_grid()
        else:
            raise SessionError(f"step {step!r} takes no human decision")

    # --- lazy inputs ---

    def stack(self):
        if self._stack is None:
            self._stack = open_slice_stack(
                self.config.scan_dir, pitch_um=self.config.pitch_um
            )
        return self._stack

    def layout(self):
        if self._layout is None:
            self._layout = layout_mod.parse_layout(
                Path(self.config.layout_path).read_text(), scan_id=self.config.scan_id
            )
        return self._layout

    def alignment(self) -> AlignmentParams:
        return AlignmentParams.from_json(self.read_sidecar("align"))

    def thresholds(self) -> segment.ThresholdSet:
        return segment.ThresholdSet.from_json(self.read_sidecar("thresholds"))

    def subsampled(self) -> SubsampledVolume:
        if self._sub is None:
            meta = self.read_sidecar("subsample")
            data = np.load(self.sub_dir / "volume.npy")
            self.tracker.add(data.nbytes)
            self._sub = SubsampledVolume(
                data=data,
                z_factor=int(meta["z_factor"]),
                xy_scale=tuple(meta["xy_scale"]),
                params=AlignmentParams.from_json(meta["alignment"]),
                source_shape=tuple(meta["source_shape"]),
                source_count=int(meta["source_count"]),
            )
        return self._sub

    def boxes(self) -> list:
        return [segment.ObjectBox.from_json(b) for b in self.read_sidecar("boxes")["boxes"]]

    # --- steps ---

    def _run_align(self) -> None:
        if self.config.align is None:
            if self.sidecar_path("align").exists():
                self._mark("align", "done")
                return
            raise MissingDecision("align", "5 alignment values")
        params = AlignmentParams.from_json(self.config.align)
        params.validate(self.stack().shape)
        self.write_sidecar("align", params.to_json())
        self._mark("align", "done")

    def _run_subsample(self) -> None:
        stack = self.stack()
        params = self.alignment()
        vol = subsample(stack, params, tracker=self.tracker)
        self.sub_dir.mkdir(parents=True, exist_ok=True)
        np.save(self.sub_dir / "volume.npy", vol.data)
        meta = vol.to_meta()
        meta["pitch_um"] = stack.pitch_um
        self.write_sidecar("subsample", meta)
        hist = segment.histogram(vol)
        self.write_sidecar("histogram", {
            "bins": len(hist.counts),
            "edges": [float(e) for e in hist.edges],
            "counts": [int(c) for c in hist.counts],
        })
        if self._sub is not None:
            self.tracker.release(self._sub.data.nbytes)
        self._sub = vol
        self._mark("subsample", "done")

    def _run_thresholds(self) -> None:
        if self.config.thresholds is None:
            if self.sidecar_path("thresholds").exists():
                self._mark("thresholds", "done")
                return
            raise MissingDecision("thresholds", "a_divider, b_divider, a_object")
        thr = segment.ThresholdSet.from_json(self.config.thresholds)
        self.write_sidecar("thresholds", thr.to_json())
        self._mark("thresholds", "done")

    def _run_tiers(self, overrides=None) -> None:
        if overrides is None:
            overrides = self.config.tier_cuts
        vol = self.subsampled()
        profile = segment.z_profile(vol)
        detection = segment.detect_tier_boundaries(
            profile, n_tiers=self.layout().n_tiers,
            min_width=self.config.min_width, overrides=overrides,
        )
        sidecar = detection.to_json()
        sidecar["profile"] = [float(v) for v in profile]
        self.write_sidecar("tiers", sidecar)
        self._mark("tiers", "done")

    def _grid_override_for(self, tier_index: int):
        return self.config.grid_overrides.get(str(tier_index))

    def _run_grid(self) -> None:
        vol = self.subsampled()
        thr = self.thresholds()
        lay = self.layout()
        tiers_json = self.read_sidecar("tiers")
        slabs = [segment.TierSlab(**s) for s in tiers_json["slabs"]]
        grid_entries = []
        all_boxes = []
        for tier_layout, slab in zip(lay.tiers, slabs):
            override = self._grid_override_for(tier_layout.tier_index)
            div = segment.divider_image(vol.data[slab.z_start:slab.z_stop], thr)
            if override is not None and "rotation_deg" in override:
                angle = float(override["rotation_deg"])
            else:
                angle = segment.auto_rotate(div.mask)
            if override is not None and "row_cuts" in override:
                cuts = segment.grid_segment(
                    None, tier_layout.n_rows, tier_layout.n_cols,
                    rotation_deg=angle, overrides=override,
                )
            else:
                rotated = rotate(div.mask.astype(np.float64), angle)
                cuts = segment.grid_segment(
                    rotated, tier_layout.n_rows, tier_layout.n_cols,
                    rotation_deg=angle,
                )
            boxes = segment.boxes_to_fullres(
                cuts, slab, tier_layout, vol.params, vol.xy_scale, vol.z_factor,
                scan_shape=vol.source_shape, scan_count=vol.source_count,
                pad=self.config.pad, sub_size=vol.data.shape[1],
            )
            entry = cuts.to_json()
            entry["tier_index"] = tier_layout.tier_index
            grid_entries.append(entry)
            all_boxes.extend(boxes)
        self.write_sidecar("grid", {"tiers": grid_entries})
        self.write_sidecar("boxes", {"boxes": [b.to_json() for b in all_boxes]})
        self._mark("grid", "done")

    def _run_extract(self) -> None:
        stack = self.stack()
        params = self.alignment()
        boxes = self.boxes()
        store = SubvolumeStore(self.subvol_dir)
        for box in boxes:
            store.register(
                box.identifier, box.dims, box=box.to_json(),
                transform=box.provenance,
            )
        z_lo = min(b.z0 for b in boxes)
        z_hi = max(b.z1 for b in boxes)
        resampler = RotationResampler(stack.shape, params.angle_deg)
        self.tracker.add(resampler.scratch_nbytes)
        slice_f32 = stack.width * stack.height * 4
        try:
            for z in range(z_lo, z_hi):
                raw = read_slice(stack, z + 1)
                self.tracker.add(raw.nbytes + slice_f32)
                img = np.ascontiguousarray(raw, dtype=np.float32)
                self.tracker.release(raw.nbytes)
                del raw
                self.tracker.add(slice_f32)
                rotated = resampler.apply(img)
                self.tracker.release(slice_f32)
                del img
                np.rint(rotated, out=rotated)
                np.clip(rotated, 0.0, 65535.0, out=rotated)
                for box in boxes:
                    if box.z0 <= z < box.z1:
                        chunk = rotated[box.y0:box.y1, box.x0:box.x1].astype(np.uint16)
                        store.append(box.identifier, chunk, z_start=z - box.z0)
                self.tracker.release(slice_f32)
                del rotated
        finally:
            self.tracker.release(resampler.scratch_nbytes)
        for box in boxes:
            store.finalize(box.identifier)
        self.write_sidecar("extract", {
            "objects": {
                b.identifier: {"dims": list(b.dims), "raw": f"{b.identifier}.raw"}
                for b in boxes
            },
            "z_range": [z_lo, z_hi],
        })
        self._mark("extract", "done")

    def _surface_jobs(self):
        thr = self.thresholds()
        isolevel = self.config.isolevel
        if isolevel is None:
            isolevel = thr.b_divider
        pitch = self.stack().pitch_um
        store = SubvolumeStore(self.subvol_dir)
        extract = self.read_sidecar("extract")
        ids = sorted(extract["objects"])
        budget = self.config.max_memory
        largest = max(store.nbytes(i) for i in ids)
        workers = self.config.workers
        if workers is None:
            workers = max(1, min(os.cpu_count() or 1, budget // max(1, 3 * largest)))
        per_worker_budget = budget // max(1, workers)
        args = [
            (str(self.subvol_dir), i, float(isolevel), float(pitch),
             str(self.mesh_dir), per_worker_budget)
            for i in ids
        ]
        return workers, args

    def _run_surface(self) -> None:
        workers, args = self._surface_jobs()
        self.mesh_dir.mkdir(parents=True, exist_ok=True)
        if workers > 1 and len(args) > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(_surface_worker, args))
        else:
            results = [_surface_worker(a) for a in args]
        peak_child = max((r.get("peak_tracked_bytes", 0) for r in results), default=0)
        self.tracker.add(peak_child)
        self.tracker.release(peak_child)
        reports = {}
        for r in results:
            r.pop("peak_tracked_bytes", None)
            reports[r["identifier"]] = r
        self.write_sidecar("surface", {"jobs": reports})
        self._mark("surface", "done")

    # --- public driver ---

    def run(self, through: str = "surface", force: bool = False) -> SessionReport:
        if through not in STEPS:
            raise SessionError(f"unknown step {through!r}")
        if force:
            self.invalidate_from("align")
        runners = {
            "align": self._run_align,
            "subsample": self._run_subsample,
            "thresholds": self._run_thresholds,
            "tiers": self._run_tiers,
            "grid": self._run_grid,
            "extract": self._run_extract,
            "surface": self._run_surface,
        }
        steps_run = []
        timings = {}
        failures = []
        for step in STEPS[: STEPS.index(through) + 1]:
            if self.status(step) == "done" and not force:
                continue
            t0 = time.time()
            try:
                runners[step]()
            except MissingDecision:
                raise
            except PackscanError as exc:
                raise StepFailed(step, exc) from exc
            timings[step] = time.time() - t0
            steps_run.append(step)
        objects = 0
        if self.sidecar_path("surface").exists():
            jobs = self.read_sidecar("surface")["jobs"]
            objects = sum(1 for j in jobs.values() if "path" in j)
            failures = [
                {"identifier": k, "error": j.get("error"), "message": j.get("message")}
                for k, j in jobs.items() if "path" not in j
            ]
        elif self.sidecar_path("boxes").exists():
            objects = len(self.read_sidecar("boxes")["boxes"])
        return SessionReport(
            steps_run=steps_run,
            timings=timings,
            objects=objects,
            failures=failures,
            peak_tracked_bytes=self.tracker.peak,
            out_dir=str(self.out_dir),
        )

    def release(self) -> None:
        if self._sub is not None:
            self.tracker.release(self._sub.data.nbytes)
            self._sub = None


def score_session(out_dir, truth_path) -> dict:
    """Score a finished session's boxes and meshes against synthetic truth."""
    out_dir = Path(out_dir)
    truth = synth.load_truth(truth_path)
    boxes_json = json.loads((out_dir / "meta" / "boxes.json").read_text())
    boxes = [segment.ObjectBox.from_json(b) for b in boxes_json["boxes"]]
    report = synth.score_boxes(truth, boxes)
    result = report.to_json()

    surface_path = out_dir / "meta" / "surface.json"
    if surface_path.exists():
        jobs = json.loads(surface_path.read_text())["jobs"]
        sub_meta = json.loads((out_dir / "meta" / "subsample.json").read_text())
        pitch = float(sub_meta["pitch_um"])
        align_deg = float(sub_meta["alignment"]["angle_deg"])
        by_id = {b.identifier: b for b in boxes}
        centroid_checks = {}
        for ident, job in jobs.items():
            if "centroid_mm" not in job or ident not in by_id:
                centroid_checks[ident] = None
                continue
            box = by_id[ident]
            cx, cy, cz = (np.array(job["centroid_mm"]) / (pitch / 1000.0)).tolist()
            point = (box.x0 + cx, box.y0 + cy, box.z0 + cz)
            centroid_checks[ident] = synth.point_in_cell(truth, ident, point, align_deg)
        result["centroids_in_cell"] = centroid_checks
        result["all_centroids_in_cell"] = all(
            v for v in centroid_checks.values() if v is not None
        ) and all(v is not None for v in centroid_checks.values())
    return result
