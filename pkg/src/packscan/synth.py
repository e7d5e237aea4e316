"""Ground-truthed synthetic packed scans.

Builds a desk-scale stand-in for a real packed micro-CT scan: a cardboard-box
footprint with plastic divider grids stacked in tiers, ellipsoidal objects in
the occupied cells, air everywhere else, three well-separated intensity
classes, optional per-tier twist and a global in-plane rotation. The emitted
slice stack is bit-reproducible from (spec, seed), and `truth.json` records
enough analytic geometry to score every pipeline stage against it.

Geometry is evaluated analytically per pixel (no resampling), in three nested
frames: the emitted frame, the package frame (emitted rotated back by the
global angle) and per-tier frames (package rotated back by the tier twist).
"""

from __future__ import annotations

import json
import math
import string
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import tifffile

from .errors import SpecInvalid, UnknownIdentifier
from .layout import ScanLayout, TierLayout, serialize_layout
from .segment import ThresholdSet
from .volume import META_FILENAME

TRUTH_FILENAME = "truth.json"
LAYOUT_FILENAME = "layout.csv"
ALIGN_FILENAME = "align.txt"


def _fwd(points, angle_deg, ctr):
    """Forward screen-space rotation of (x, y) points about ctr."""
    th = math.radians(angle_deg)
    c, s = math.cos(th), math.sin(th)
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    dx = pts[:, 0] - ctr[0]
    dy = pts[:, 1] - ctr[1]
    out = np.column_stack([c * dx + s * dy + ctr[0], -s * dx + c * dy + ctr[1]])
    return out[0] if np.ndim(points) == 1 else out


def _inv(points, angle_deg, ctr):
    return _fwd(points, -angle_deg, ctr)


def _ellipse_extents(a: float, b: float, angle_deg: float) -> tuple:
    """Axis-aligned half-extents of an (a, b) ellipse rotated by angle_deg."""
    th = math.radians(angle_deg)
    c2, s2 = math.cos(th) ** 2, math.sin(th) ** 2
    return math.sqrt(a * a * c2 + b * b * s2), math.sqrt(a * a * s2 + b * b * c2)


@dataclass(frozen=True)
class TierSpec:
    n_rows: int
    n_cols: int
    twist_deg: float = 0.0
    empties: tuple | None = None  # ((row, col), ...) 1-based; seeded pick if None


@dataclass(frozen=True)
class SceneSpec:
    scan_id: str = "SYN1"
    width: int = 600
    height: int = 600
    depth: int = 800
    tiers: tuple = (
        TierSpec(3, 4, -8.0),
        TierSpec(3, 4, 3.0),
        TierSpec(3, 4, 7.0),
    )
    rotation_deg: float = 3.7
    offset: float = 0.0
    bottom_margin: int = 30
    top_margin: int = 50
    gap: int = 30
    footprint_frac: float = 0.82
    content_frac: float = 0.86
    wall_px: float = 4.0
    line_px: float = 7.0
    air: tuple = (2000.0, 300.0)  # (mean, sigma)
    divider: tuple = (15000.0, 500.0)
    objects: tuple = (33000.0, 1200.0)
    blob_fill_xy: float = 0.72
    blob_fill_z: float = 0.56
    perturb_amp: float = 0.08
    cardboard: bool = True
    pitch_um: float = 50.0
    seed: int = 0

    def validate(self) -> None:
        mu_a, sd_a = self.air
        mu_d, sd_d = self.divider
        mu_o, sd_o = self.objects
        if not mu_a < mu_d < mu_o:
            raise SpecInvalid("class means must be ordered air < divider < object")
        if mu_d - mu_a < 6 * max(sd_a, sd_d) or mu_o - mu_d < 6 * max(sd_d, sd_o):
            raise SpecInvalid("class means need >= 6 sigma separation")
        if not self.tiers:
            raise SpecInvalid("at least one tier required")
        if any(t.n_rows < 1 or t.n_cols < 1 for t in self.tiers):
            raise SpecInvalid("tier grids must be at least 1x1")
        if self.tier_height() < 40:
            raise SpecInvalid("tiers are too short for the requested depth/margins")
        if mu_o + 6 * sd_o + self.offset > 65535:
            raise SpecInvalid("object class + offset overflows 16-bit range")
        if not 0 <= self.perturb_amp < 0.5:
            raise SpecInvalid("perturb_amp must be in [0, 0.5)")

    def tier_height(self) -> int:
        usable = self.depth - self.bottom_margin - self.top_margin
        usable -= (len(self.tiers) - 1) * self.gap
        return usable // len(self.tiers)


def default_scene(offset: float = 0.0, seed: int = 0) -> SceneSpec:
    """The acceptance-scale scene: 3 tiers of 3x4 cells, 30 occupied."""
    return SceneSpec(offset=offset, seed=seed)


def small_scene(offset: float = 0.0, seed: int = 0) -> SceneSpec:
    """A faster scene for unit tests: 2 tiers of 2x3 cells, 10 occupied."""
    return SceneSpec(
        scan_id="SYNS",
        width=260, height=260, depth=420,
        tiers=(TierSpec(2, 3, -2.0), TierSpec(2, 3, 1.5)),
        rotation_deg=2.0,
        bottom_margin=20, top_margin=30, gap=36,
        wall_px=4.0, line_px=5.0,
        offset=offset,
        seed=seed,
    )


@dataclass
class _Blob:
    identifier: str
    tier_index: int
    row: int
    col: int
    center: tuple  # (x, y, z) tier frame == package frame for z
    semi: tuple  # (a, b, c)
    phi_deg: float  # in-plane angle of the a-axis within the tier frame
    phase: float  # perturbation phase
    cell: dict  # tier-frame cell bounds {"x": [..], "y": [..], "z": [..]}


class _Geometry:
    """All analytic scene geometry, package and tier frames."""

    def __init__(self, spec: SceneSpec):
        spec.validate()
        self.spec = spec
        w, h = spec.width, spec.height
        self.ctr = ((w - 1) / 2.0, (h - 1) / 2.0)

        fw = spec.footprint_frac * w
        fh = spec.footprint_frac * h
        self.fx = (self.ctr[0] - fw / 2.0, self.ctr[0] + fw / 2.0)
        self.fy = (self.ctr[1] - fh / 2.0, self.ctr[1] + fh / 2.0)

        self.pz0 = spec.bottom_margin
        th = spec.tier_height()
        self.tier_z = []
        z = self.pz0
        for _ in spec.tiers:
            self.tier_z.append((z, z + th))
            z += th + spec.gap
        self.pz1 = self.tier_z[-1][1]

        # grid line positions per tier, tier frame
        inner_w = fw - 2 * spec.wall_px
        inner_h = fh - 2 * spec.wall_px
        self.lines = []
        for t in spec.tiers:
            cw = inner_w * spec.content_frac
            ch = inner_h * spec.content_frac
            lx = [self.ctr[0] - cw / 2.0 + i * cw / t.n_cols for i in range(t.n_cols + 1)]
            ly = [self.ctr[1] - ch / 2.0 + i * ch / t.n_rows for i in range(t.n_rows + 1)]
            self.lines.append((lx, ly))

        rng = np.random.default_rng([spec.seed, 0xC0FFEE])
        self.occupancy = []
        for t in spec.tiers:
            if t.empties is not None:
                empt = {tuple(e) for e in t.empties}
            else:
                empt = self._pick_empties(t, rng)
            occ = [
                [(r + 1, c + 1) not in empt for c in range(t.n_cols)]
                for r in range(t.n_rows)
            ]
            self.occupancy.append(occ)

        self.blobs = self._make_blobs(rng)

    @staticmethod
    def _pick_empties(t: TierSpec, rng) -> set:
        cells = [(r + 1, c + 1) for r in range(t.n_rows) for c in range(t.n_cols)]
        if len(cells) < 3:
            return set(cells[:max(0, len(cells) - 1)])
        for _ in range(64):
            pick = rng.choice(len(cells), size=2, replace=False)
            empt = {cells[i] for i in pick}
            occ = np.array(
                [[(r + 1, c + 1) not in empt for c in range(t.n_cols)]
                 for r in range(t.n_rows)], dtype=bool
            )
            if (
                not np.array_equal(occ, occ[::-1, ::-1])
                and not np.array_equal(occ, occ[:, ::-1])
                and not np.array_equal(occ, occ[::-1, :])
            ):
                return empt
        return empt  # pathological grid; symmetric pattern gets warned downstream

    def _make_blobs(self, rng) -> list:
        spec = self.spec
        blobs = []
        for ti, t in enumerate(spec.tiers):
            lx, ly = self.lines[ti]
            z0, z1 = self.tier_z[ti]
            cz_mid = (z0 + z1) / 2.0
            c_semi_max = (z1 - z0) / 2.0 * spec.blob_fill_z
            for r in range(t.n_rows):
                for c in range(t.n_cols):
                    if not self.occupancy[ti][r][c]:
                        continue
                    cell_w = lx[c + 1] - lx[c]
                    cell_h = ly[r + 1] - ly[r]
                    jitter = rng.uniform(0.85, 1.0, size=3)
                    a = (cell_w / 2.0 - spec.line_px / 2.0 - 2.0) * spec.blob_fill_xy * jitter[0]
                    b = (cell_h / 2.0 - spec.line_px / 2.0 - 2.0) * spec.blob_fill_xy * jitter[1]
                    cs = c_semi_max * jitter[2]
                    if min(a, b, cs) < 2.0:
                        raise SpecInvalid(
                            f"cell ({r + 1},{c + 1}) of tier {ti + 1} too small for a blob"
                        )
                    ident = f"{spec.scan_id}_{ti + 1}{string.ascii_uppercase[r]}{c + 1}"
                    blobs.append(_Blob(
                        identifier=ident,
                        tier_index=ti + 1,
                        row=r + 1,
                        col=c + 1,
                        center=(
                            (lx[c] + lx[c + 1]) / 2.0,
                            (ly[r] + ly[r + 1]) / 2.0,
                            cz_mid,
                        ),
                        semi=(float(a), float(b), float(cs)),
                        phi_deg=float(rng.uniform(-20.0, 20.0)),
                        phase=float(rng.uniform(0.0, 2 * math.pi)),
                        cell={
                            "x": [lx[c], lx[c + 1]],
                            "y": [ly[r], ly[r + 1]],
                            "z": [z0, z1],
                        },
                    ))
        return blobs

    def layout(self) -> ScanLayout:
        tiers = []
        for ti, t in enumerate(self.spec.tiers):
            ids = {}
            for blob in self.blobs:
                if blob.tier_index == ti + 1:
                    ids[(blob.row, blob.col)] = blob.identifier
            rows = tuple(
                tuple(ids.get((r + 1, c + 1)) for c in range(t.n_cols))
                for r in range(t.n_rows)
            )
            tiers.append(TierLayout(tier_index=ti + 1, rows=rows))
        return ScanLayout(scan_id=self.spec.scan_id, tiers=tuple(tiers))

    def alignment(self) -> dict:
        """Recommended alignment: undo the global rotation, crop to footprint.

        The crop is applied after the rotation, i.e. in the package frame,
        so the ranges come straight from the axis-aligned footprint.
        """
        spec = self.spec
        margin = 8.0
        c0 = max(0, int(math.floor(self.fx[0] - margin)))
        c1 = min(spec.width, int(math.ceil(self.fx[1] + margin)))
        r0 = max(0, int(math.floor(self.fy[0] - margin)))
        r1 = min(spec.height, int(math.ceil(self.fy[1] + margin)))
        return {
            "angle_deg": -spec.rotation_deg,
            "row_range": [r0, r1],
            "col_range": [c0, c1],
        }

    def thresholds(self) -> ThresholdSet:
        spec = self.spec
        a_div = (spec.air[0] + spec.divider[0]) / 2.0 + spec.offset
        b_div = (spec.divider[0] + spec.objects[0]) / 2.0 + spec.offset
        return ThresholdSet(a_divider=a_div, b_divider=b_div, a_object=b_div)

    def gap_centers(self) -> list:
        return [
            (self.tier_z[i][1] + self.tier_z[i + 1][0]) / 2.0
            for i in range(len(self.tier_z) - 1)
        ]


def _blob_extent_pkg(blob: _Blob, twist_deg: float, ctr) -> dict:
    """Analytic package-frame envelope of the (unperturbed) ellipsoid."""
    cx, cy = _fwd((blob.center[0], blob.center[1]), twist_deg, ctr)
    ex, ey = _ellipse_extents(blob.semi[0], blob.semi[1], blob.phi_deg + twist_deg)
    return {
        "x": [cx - ex, cx + ex],
        "y": [cy - ey, cy + ey],
        "z": [blob.center[2] - blob.semi[2], blob.center[2] + blob.semi[2]],
    }


def generate(spec: SceneSpec, out_dir) -> dict:
    """Write the slice stack, layout CSV and truth JSON; returns the truth dict."""
    geo = _Geometry(spec)
    out_dir = Path(out_dir)
    scan_dir = out_dir / "scan"
    scan_dir.mkdir(parents=True, exist_ok=True)

    w, h = spec.width, spec.height
    ctr = geo.ctr
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)

    # package-frame coordinates of every emitted pixel: the emitted image shows
    # the package rotated by rotation_deg, so sample through the inverse map
    th = math.radians(spec.rotation_deg)
    c_g, s_g = math.cos(th), math.sin(th)
    dx = xx - ctr[0]
    dy = yy - ctr[1]
    x_pkg = c_g * dx - s_g * dy + ctr[0]
    y_pkg = s_g * dx + c_g * dy + ctr[1]

    footprint = (
        (x_pkg >= geo.fx[0]) & (x_pkg < geo.fx[1])
        & (y_pkg >= geo.fy[0]) & (y_pkg < geo.fy[1])
    )
    inner = (
        (x_pkg >= geo.fx[0] + spec.wall_px) & (x_pkg < geo.fx[1] - spec.wall_px)
        & (y_pkg >= geo.fy[0] + spec.wall_px) & (y_pkg < geo.fy[1] - spec.wall_px)
    )
    wall = footprint & ~inner

    # per-tier frames and divider-line masks
    tier_coords = []
    tier_masks = []
    for ti, t in enumerate(spec.tiers):
        tw = math.radians(t.twist_deg)
        c_t, s_t = math.cos(tw), math.sin(tw)
        dxp = x_pkg - ctr[0]
        dyp = y_pkg - ctr[1]
        x_t = c_t * dxp - s_t * dyp + ctr[0]
        y_t = s_t * dxp + c_t * dyp + ctr[1]
        lx, ly = geo.lines[ti]
        half = spec.line_px / 2.0
        band = np.zeros_like(inner)
        for pos in lx:
            band |= np.abs(x_t - pos) <= half
        for pos in ly:
            band |= np.abs(y_t - pos) <= half
        tier_coords.append((x_t, y_t))
        tier_masks.append(wall | (inner & band))

    cardboard = wall | (
        inner
        & (((np.floor(x_pkg / 3.0) + np.floor(y_pkg / 3.0)) % 5) == 0)
    )

    # per-blob pixel-bound boxes in the emitted frame (generous envelope)
    blob_windows = []
    for blob in geo.blobs:
        twist = spec.tiers[blob.tier_index - 1].twist_deg
        ext = _blob_extent_pkg(blob, twist, ctr)
        corners = np.array([
            (ext["x"][i], ext["y"][j]) for i in range(2) for j in range(2)
        ])
        emitted = _fwd(corners, spec.rotation_deg, ctr)
        x0 = max(0, int(np.floor(emitted[:, 0].min() - 2)))
        x1 = min(w, int(np.ceil(emitted[:, 0].max() + 3)))
        y0 = max(0, int(np.floor(emitted[:, 1].min() - 2)))
        y1 = min(h, int(np.ceil(emitted[:, 1].max() + 3)))
        blob_windows.append((y0, y1, x0, x1))

    gap_slices = {}
    if spec.cardboard:
        for center in geo.gap_centers():
            for z in (int(center) - 1, int(center), int(center) + 1):
                gap_slices[z] = True

    def tier_at(z: int):
        for ti, (z0, z1) in enumerate(geo.tier_z):
            if z0 <= z < z1:
                return ti
        return None

    digits = len(str(spec.depth))
    for z in range(spec.depth):
        rng = np.random.default_rng([spec.seed, 1, z])
        img = rng.normal(spec.air[0], spec.air[1], size=(h, w))
        if geo.pz0 <= z < geo.pz1:
            ti = tier_at(z)
            if ti is not None:
                mask = tier_masks[ti]
            elif z in gap_slices:
                mask = cardboard
            else:
                mask = wall
            img[mask] = rng.normal(spec.divider[0], spec.divider[1], size=int(mask.sum()))
            if ti is not None:
                x_t, y_t = tier_coords[ti]
                twist = spec.tiers[ti].twist_deg
                for blob, (wy0, wy1, wx0, wx1) in zip(geo.blobs, blob_windows):
                    if blob.tier_index != ti + 1:
                        continue
                    zr = (z - blob.center[2]) / blob.semi[2]
                    if abs(zr) >= 1.0:
                        continue
                    xs = x_t[wy0:wy1, wx0:wx1] - blob.center[0]
                    ys = y_t[wy0:wy1, wx0:wx1] - blob.center[1]
                    ph = math.radians(blob.phi_deg)
                    c_b, s_b = math.cos(ph), math.sin(ph)
                    u = c_b * xs + s_b * ys
                    v = -s_b * xs + c_b * ys
                    q = (u / blob.semi[0]) ** 2 + (v / blob.semi[1]) ** 2 + zr * zr
                    if spec.perturb_amp > 0.0:
                        theta = np.arctan2(v, u)
                        shrink = 1.0 - spec.perturb_amp * (
                            0.5 + 0.5 * np.sin(4.0 * theta + blob.phase)
                        )
                        inside = q <= shrink * shrink
                    else:
                        inside = q <= 1.0
                    n_in = int(inside.sum())
                    if n_in:
                        window = img[wy0:wy1, wx0:wx1]
                        window[inside] = rng.normal(
                            spec.objects[0], spec.objects[1], size=n_in
                        )
        img += spec.offset
        np.clip(img, 0.0, 65535.0, out=img)
        tifffile.imwrite(
            scan_dir / f"slice_{z:0{digits}d}.tif",
            img.astype(np.uint16),
        )

    (scan_dir / META_FILENAME).write_text(
        json.dumps({"pitch_um": spec.pitch_um}) + "\n"
    )

    layout = geo.layout()
    (out_dir / LAYOUT_FILENAME).write_text(serialize_layout(layout))

    align = geo.alignment()
    (out_dir / ALIGN_FILENAME).write_text(
        f"{align['angle_deg']} {align['row_range'][0]} {align['row_range'][1]} "
        f"{align['col_range'][0]} {align['col_range'][1]}\n"
    )

    truth = {
        "scan_id": spec.scan_id,
        "dims": [spec.width, spec.height, spec.depth],
        "pitch_um": spec.pitch_um,
        "rotation_deg": spec.rotation_deg,
        "offset": spec.offset,
        "seed": spec.seed,
        "alignment": align,
        "thresholds": geo.thresholds().to_json(),
        "package": {
            "footprint_x": list(geo.fx),
            "footprint_y": list(geo.fy),
            "z": [geo.pz0, geo.pz1],
            "wall_px": spec.wall_px,
            "line_px": spec.line_px,
        },
        "classes": {
            "air": list(spec.air),
            "divider": list(spec.divider),
            "object": list(spec.objects),
        },
        "tiers": [
            {
                "index": ti + 1,
                "z": list(geo.tier_z[ti]),
                "twist_deg": t.twist_deg,
                "n_rows": t.n_rows,
                "n_cols": t.n_cols,
                "col_line_x": geo.lines[ti][0],
                "row_line_y": geo.lines[ti][1],
                "gap_above_center": (
                    geo.gap_centers()[ti] if ti < len(spec.tiers) - 1 else None
                ),
            }
            for ti, t in enumerate(spec.tiers)
        ],
        "objects": {
            blob.identifier: {
                "tier": blob.tier_index,
                "row": blob.row,
                "col": blob.col,
                "center_pkg": list(
                    _fwd(
                        (blob.center[0], blob.center[1]),
                        spec.tiers[blob.tier_index - 1].twist_deg,
                        ctr,
                    )
                ) + [blob.center[2]],
                "semi": list(blob.semi),
                "inplane_deg": blob.phi_deg + spec.tiers[blob.tier_index - 1].twist_deg,
                "cell_tier_frame": blob.cell,
                "extent_pkg": _blob_extent_pkg(
                    blob, spec.tiers[blob.tier_index - 1].twist_deg, ctr
                ),
            }
            for blob in geo.blobs
        },
    }
    (out_dir / TRUTH_FILENAME).write_text(json.dumps(truth, sort_keys=True, indent=2))
    return truth


def load_truth(path) -> dict:
    path = Path(path)
    if path.is_dir():
        path = path / TRUTH_FILENAME
    return json.loads(path.read_text())


def grid_mask(angle_deg: float = 0.0, size: int = 225, n_rows: int = 3,
              n_cols: int = 4, line_px: float = 2.0, wall: bool = True,
              footprint_frac: float = 0.86, content_frac: float = 0.88,
              value: float = 20.0) -> np.ndarray:
    """Synthetic divider mask: an axis-aligned grid pattern rotated by angle_deg.

    Bands are evaluated analytically in the rotated frame with per-pixel
    coverage weighting (the same partial-volume grading a real subsampled
    divider image has), so the mask carries sub-pixel line positions at any
    angle without resampling.
    """
    ctr = ((size - 1) / 2.0, (size - 1) / 2.0)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    th = math.radians(angle_deg)
    c, s = math.cos(th), math.sin(th)
    dx = xx - ctr[0]
    dy = yy - ctr[1]
    xr = c * dx - s * dy + ctr[0]
    yr = s * dx + c * dy + ctr[1]

    def band(dist, half):
        return np.clip(half + 0.5 - np.abs(dist), 0.0, 1.0)

    fw = footprint_frac * size
    fx = (ctr[0] - fw / 2.0, ctr[0] + fw / 2.0)
    fy = (ctr[1] - fw / 2.0, ctr[1] + fw / 2.0)

    cw = (fw - 2 * line_px) * content_frac
    lx = [ctr[0] - cw / 2.0 + i * cw / n_cols for i in range(n_cols + 1)]
    ly = [ctr[1] - cw / 2.0 + i * cw / n_rows for i in range(n_rows + 1)]
    half = line_px / 2.0
    coverage = np.zeros((size, size), dtype=np.float64)
    for pos in lx:
        np.maximum(coverage, band(xr - pos, half), out=coverage)
    for pos in ly:
        np.maximum(coverage, band(yr - pos, half), out=coverage)
    if wall:
        for pos in fx:
            np.maximum(coverage, band(xr - pos, line_px), out=coverage)
        for pos in fy:
            np.maximum(coverage, band(yr - pos, line_px), out=coverage)
    inside = (
        (xr > fx[0] - line_px) & (xr < fx[1] + line_px)
        & (yr > fy[0] - line_px) & (yr < fy[1] + line_px)
    )
    return coverage * inside * value


# --- scoring against ground truth ---

@dataclass(frozen=True)
class ObjectScore:
    identifier: str
    contained: bool
    volume_ratio: float


@dataclass(frozen=True)
class ScoreReport:
    objects: tuple
    recall: float

    @property
    def all_contained(self) -> bool:
        return all(o.contained for o in self.objects)

    def to_json(self) -> dict:
        return {
            "recall": self.recall,
            "objects": [
                {
                    "identifier": o.identifier,
                    "contained": o.contained,
                    "volume_ratio": o.volume_ratio,
                }
                for o in self.objects
            ],
        }


def _aligned_envelope(truth: dict, identifier: str, align_angle_deg: float):
    """Ground-truth envelope of one object in the aligned (uncropped) frame."""
    obj = truth["objects"][identifier]
    w, h, _ = truth["dims"]
    ctr = ((w - 1) / 2.0, (h - 1) / 2.0)
    net = truth["rotation_deg"] + align_angle_deg
    cx, cy = _fwd((obj["center_pkg"][0], obj["center_pkg"][1]), net, ctr)
    ex, ey = _ellipse_extents(obj["semi"][0], obj["semi"][1], obj["inplane_deg"] + net)
    cz = obj["center_pkg"][2]
    return (
        (cx - ex, cx + ex),
        (cy - ey, cy + ey),
        (cz - obj["semi"][2], cz + obj["semi"][2]),
    )


def score_boxes(truth: dict, boxes: list) -> ScoreReport:
    """Containment and volume ratio of computed boxes versus ground truth."""
    scores = []
    contained_n = 0
    for box in boxes:
        if box.identifier not in truth["objects"]:
            raise UnknownIdentifier(f"{box.identifier!r} is not in the ground truth")
        angle = box.provenance.get("alignment", {}).get("angle_deg", 0.0)
        (x_lo, x_hi), (y_lo, y_hi), (z_lo, z_hi) = _aligned_envelope(
            truth, box.identifier, angle
        )
        contained = (
            box.x0 <= x_lo and x_hi <= box.x1 - 1
            and box.y0 <= y_lo and y_hi <= box.y1 - 1
            and box.z0 <= z_lo and z_hi <= box.z1 - 1
        )
        contained_n += bool(contained)
        ext_vol = (x_hi - x_lo) * (y_hi - y_lo) * (z_hi - z_lo)
        box_vol = (box.x1 - box.x0) * (box.y1 - box.y0) * (box.z1 - box.z0)
        scores.append(ObjectScore(
            identifier=box.identifier,
            contained=bool(contained),
            volume_ratio=float(box_vol / ext_vol) if ext_vol > 0 else math.inf,
        ))
    recall = contained_n / len(scores) if scores else 0.0
    return ScoreReport(objects=tuple(scores), recall=recall)


def point_in_cell(truth: dict, identifier: str, point_xyz,
                  align_angle_deg: float) -> bool:
    """Is an aligned-frame point inside the object's ground-truth cell?"""
    obj = truth["objects"][identifier]
    w, h, _ = truth["dims"]
    ctr = ((w - 1) / 2.0, (h - 1) / 2.0)
    net = truth["rotation_deg"] + align_angle_deg
    x, y, z = point_xyz
    px, py = _inv((x, y), net, ctr)  # back to the package frame
    tier = truth["tiers"][obj["tier"] - 1]
    tx, ty = _inv((px, py), tier["twist_deg"], ctr)
    cell = obj["cell_tier_frame"]
    return (
        cell["x"][0] <= tx <= cell["x"][1]
        and cell["y"][0] <= ty <= cell["y"][1]
        and cell["z"][0] <= z <= cell["z"][1]
    )
