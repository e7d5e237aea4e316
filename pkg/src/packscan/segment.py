"""Bounding-box identification on the subsampled proxy volume.

Five phases, run per scan after alignment and subsampling:

1. thresholds: the divider range (a_divider, b_divider) and the object range
   (a_object, b_object) are human decisions, validated here;
2. vertical segmentation: peaks in the negated per-slice mean split the scan
   into tier slabs;
3. divider imaging: per tier, count divider-range minus object-range voxels
   down each vertical column, then keep only counts above 75% of the maximum;
4. automatic tier rotation: small-angle search maximizing the ratio of
   horizontal+vertical to diagonal 2x2 detail of the rotated divider mask;
5. grid segmentation: peaks of the axis projections of the rotated mask give
   the cut lines, and occupied layout cells map back to padded full-resolution
   boxes.

Everything is arranged to be exactly invariant under a global intensity shift
applied to both the volume and the thresholds: counts compare values against
shifted thresholds, and peak selection uses only prominence relative to the
signal range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import ndimage
from scipy.signal import find_peaks

from .errors import (
    DegenerateMask,
    FlatObjective,
    InsufficientPeaks,
    OutOfBoundsAfterClamp,
    PeakCountMismatch,
    SegmentationError,
)
from .layout import TierLayout
from .volume import AlignmentParams, SubsampledVolume

PROMINENCE_FRAC = 0.10  # of the signal range; shift-invariant by construction


@dataclass(frozen=True)
class ThresholdSet:
    """Voxel-value ranges for the packing material and the objects."""

    a_divider: float
    b_divider: float
    a_object: float
    b_object: float = math.inf

    def __post_init__(self):
        if not self.a_divider < self.b_divider <= self.a_object < self.b_object:
            raise SegmentationError(
                "thresholds must satisfy a_divider < b_divider <= a_object < b_object, "
                f"got {self}"
            )

    def shifted(self, c: float) -> "ThresholdSet":
        return ThresholdSet(
            a_divider=self.a_divider + c,
            b_divider=self.b_divider + c,
            a_object=self.a_object + c,
            b_object=self.b_object if math.isinf(self.b_object) else self.b_object + c,
        )

    def to_json(self) -> dict:
        return {
            "a_divider": self.a_divider,
            "b_divider": self.b_divider,
            "a_object": self.a_object,
            "b_object": None if math.isinf(self.b_object) else self.b_object,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ThresholdSet":
        b_object = obj.get("b_object")
        return cls(
            a_divider=float(obj["a_divider"]),
            b_divider=float(obj["b_divider"]),
            a_object=float(obj["a_object"]),
            b_object=math.inf if b_object is None else float(b_object),
        )


@dataclass(frozen=True)
class TierSlab:
    z_start: int
    z_stop: int  # half-open, subsampled z units

    def to_json(self) -> dict:
        return {"z_start": self.z_start, "z_stop": self.z_stop}


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray  # bins + 1
    counts: np.ndarray


def _volume_data(vol) -> np.ndarray:
    return vol.data if isinstance(vol, SubsampledVolume) else np.asarray(vol)


def histogram(vol, bins: int = 500) -> Histogram:
    data = _volume_data(vol)
    lo = float(data.min())
    hi = float(data.max())
    counts, edges = np.histogram(data, bins=bins, range=(lo, hi))
    return Histogram(edges=edges, counts=counts)


def z_profile(vol) -> np.ndarray:
    """Mean voxel value of each subsampled z-slice."""
    data = _volume_data(vol)
    return data.mean(axis=(1, 2), dtype=np.float64)


@dataclass(frozen=True)
class PeakCandidate:
    position: int
    prominence: float
    width: float


@dataclass(frozen=True)
class TierDetection:
    candidates: tuple  # PeakCandidate, strongest first
    cuts: tuple  # chosen interior cut positions, ascending
    slabs: tuple  # TierSlab per tier, bottom (tier 1) first
    ratified: bool = False

    def to_json(self) -> dict:
        return {
            "candidates": [
                {"position": c.position, "prominence": c.prominence, "width": c.width}
                for c in self.candidates
            ],
            "cuts": list(self.cuts),
            "slabs": [s.to_json() for s in self.slabs],
            "ratified": self.ratified,
        }


def _slabs_from_cuts(cuts, depth: int) -> tuple:
    bounds = [0, *cuts, depth]
    return tuple(TierSlab(bounds[i], bounds[i + 1]) for i in range(len(bounds) - 1))


def _interior_span(profile: np.ndarray, rel: float = 0.10) -> tuple:
    """Index span of the packed region: where the mean rises above the air floor."""
    lo_v = profile.min()
    rng = profile.max() - lo_v
    if rng <= 0:
        return 0, len(profile) - 1
    inside = np.flatnonzero(profile >= lo_v + rel * rng)
    return int(inside[0]), int(inside[-1])


def detect_tier_boundaries(profile, n_tiers: int, min_width: int = 10,
                           overrides=None) -> TierDetection:
    """Split the z-profile into tier slabs at peaks of the negated mean.

    Peaks must be at least `min_width` subsampled slices wide and lie strictly
    inside the packed span of the scan; the n_tiers-1 most prominent are the
    cut points. `overrides` (ratified cut list) replaces detection entirely.
    """
    profile = np.asarray(profile, dtype=np.float64)
    depth = len(profile)
    if n_tiers < 1:
        raise SegmentationError("n_tiers must be >= 1")

    if overrides is not None:
        cuts = sorted(int(c) for c in overrides)
        if len(cuts) != n_tiers - 1:
            raise SegmentationError(
                f"override has {len(cuts)} cuts, layout needs {n_tiers - 1}"
            )
        if any(not 0 < c < depth for c in cuts) or any(
            b <= a for a, b in zip(cuts, cuts[1:])
        ):
            raise SegmentationError(f"override cuts {cuts} invalid for depth {depth}")
        return TierDetection(
            candidates=(), cuts=tuple(cuts), slabs=_slabs_from_cuts(cuts, depth),
            ratified=True,
        )

    if n_tiers == 1:
        return TierDetection(candidates=(), cuts=(), slabs=(TierSlab(0, depth),))

    neg = -profile
    rng = neg.max() - neg.min()
    if rng <= 0:
        raise InsufficientPeaks(0, n_tiers - 1)
    positions, props = find_peaks(
        neg, width=min_width, prominence=PROMINENCE_FRAC * rng
    )
    lo, hi = _interior_span(profile)
    keep = (positions > lo) & (positions < hi)
    candidates = sorted(
        (
            PeakCandidate(
                position=int(p),
                prominence=float(props["prominences"][i]),
                width=float(props["widths"][i]),
            )
            for i, p in enumerate(positions)
            if keep[i]
        ),
        key=lambda c: (-c.prominence, c.position),
    )
    needed = n_tiers - 1
    if len(candidates) < needed:
        raise InsufficientPeaks(len(candidates), needed)
    cuts = tuple(sorted(c.position for c in candidates[:needed]))
    return TierDetection(
        candidates=tuple(candidates), cuts=cuts, slabs=_slabs_from_cuts(cuts, depth),
    )


@dataclass(frozen=True)
class DividerImage:
    score: np.ndarray  # I, signed counts, int32
    mask: np.ndarray  # B = I above 75% of max(I), else 0
    cutoff: float


def divider_image(tier_data: np.ndarray, thresholds: ThresholdSet) -> DividerImage:
    """Column-wise divider-minus-object counts and the very-sure-divider mask.

    tier_data is the (nz, ny, nx) slab of the subsampled volume for one tier.
    """
    v = np.asarray(tier_data)
    if v.ndim != 3 or v.shape[0] < 1:
        raise SegmentationError(f"tier slab must be (nz, ny, nx), got {v.shape}")
    div = ((v >= thresholds.a_divider) & (v <= thresholds.b_divider)).sum(
        axis=0, dtype=np.int32
    )
    if math.isinf(thresholds.b_object):
        obj = (v >= thresholds.a_object).sum(axis=0, dtype=np.int32)
    else:
        obj = ((v >= thresholds.a_object) & (v <= thresholds.b_object)).sum(
            axis=0, dtype=np.int32
        )
    score = div - obj
    top = int(score.max())
    if top <= 0:
        raise DegenerateMask(f"divider score has no positive values (max={top})")
    cutoff = 0.75 * top
    mask = np.where(score > cutoff, score, 0).astype(np.int32)
    return DividerImage(score=score, mask=mask, cutoff=cutoff)


ROTATION_SMOOTH_SIGMA = 1.5  # light blur so gradients resolve sub-pixel tilt


@lru_cache(maxsize=8)
def _response_disk(shape: tuple) -> np.ndarray:
    """Inscribed-disk mask over the 2x2-response grid.

    Judging detail only inside the inscribed disk keeps the objective a
    function of content alone for every angle: a constant image scores 0 flat
    instead of picking up frame-corner edges.
    """
    h, w = shape
    yy, xx = np.mgrid[0:h - 1, 0:w - 1]
    cy = (h - 2) / 2.0
    cx = (w - 2) / 2.0
    r = min(h, w) / 2.0 - 2.0
    return (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r


def _gradient_field(mask: np.ndarray) -> tuple:
    """Per-pixel gradient magnitude/direction of the lightly smoothed mask.

    Gradients come from the 2x2 vertical/horizontal detail kernels
    [[1,-1],[1,-1]] and [[1,1],[-1,-1]] applied to the mask after a small
    Gaussian blur (divider lines are only a couple of pixels wide; without the
    blur, pixel staircase quantization drowns the sub-degree tilt signal).
    """
    m = np.asarray(mask, dtype=np.float64)
    smoothed = ndimage.gaussian_filter(m, ROTATION_SMOOTH_SIGMA)
    a = smoothed[:-1, :-1]
    b = smoothed[:-1, 1:]
    c = smoothed[1:, :-1]
    d = smoothed[1:, 1:]
    gx = a - b + c - d
    gy = a + b - c - d
    disk = _response_disk(smoothed.shape)
    gx = gx[disk]
    gy = gy[disk]
    r = np.hypot(gx, gy)
    keep = r > 0
    r = r[keep]
    cos_p = np.zeros(0) if not len(r) else gx[keep] / r
    sin_p = np.zeros(0) if not len(r) else gy[keep] / r
    return r, cos_p, sin_p, 1e-9 * float(m.sum())


def _objective_at(field: tuple, angle_deg: float) -> float:
    """Axis-to-diagonal gradient-energy ratio at one rotation angle.

    The rotation is applied to the gradient directions analytically, which
    measures exactly what resampling the image would, minus the interpolation
    noise that otherwise swamps the optimum (the objective is evaluated 201
    times per tier, so it also saves 200 image rotations).
    """
    r, cos_p, sin_p, eps = field
    th = np.deg2rad(angle_deg)
    ca, sa = np.cos(th), np.sin(th)
    c_rot = cos_p * ca + sin_p * sa  # cos(phi - a)
    s_rot = sin_p * ca - cos_p * sa  # sin(phi - a)
    num = float((r * (np.abs(c_rot) + np.abs(s_rot))).sum())
    sin2 = 2.0 * s_rot * c_rot
    den = float((r * sin2 * sin2).sum()) + eps
    if den == 0.0:
        return 0.0
    return num / den


def rotation_objective(mask: np.ndarray, angle_deg: float) -> float:
    """Axis-aligned to diagonal detail ratio of the mask rotated by angle_deg."""
    return _objective_at(_gradient_field(mask), angle_deg)


def rotation_curve(mask: np.ndarray, lo: float = -10.0, hi: float = 10.0,
                   step: float = 0.1) -> tuple:
    n = int(round((hi - lo) / step)) + 1
    angles = np.linspace(lo, hi, n)
    field = _gradient_field(mask)
    values = np.array([_objective_at(field, a) for a in angles])
    return angles, values


def _smooth(values: np.ndarray, window: int = 5) -> np.ndarray:
    pad = window // 2
    padded = np.pad(values, pad, mode="reflect")
    return np.convolve(padded, np.full(window, 1.0 / window), mode="valid")


def auto_rotate(mask: np.ndarray, lo: float = -10.0, hi: float = 10.0,
                step: float = 0.1, fit_halfwidth: float = 1.5) -> float:
    """Correction angle (degrees) that squares the divider mask with the axes.

    Samples the objective every `step` degrees over [lo, hi], smooths with a
    centered 5-sample moving average (the bilinear resampling is noisy near
    the optimum), then fits a quadratic around the discrete argmax and returns
    its vertex. Rotating the mask by the returned angle aligns it.
    """
    angles, raw = rotation_curve(mask, lo, hi, step)
    smooth = _smooth(raw)
    top = smooth.max()
    if top - smooth.min() < 1e-9 * max(abs(top), 1e-300) or top == 0.0:
        raise FlatObjective("rotation objective is flat; mask has no grid signal")
    i_max = int(np.argmax(smooth))
    window = np.abs(angles - angles[i_max]) <= fit_halfwidth + 1e-12
    coeffs = np.polyfit(angles[window], smooth[window], 2)
    if coeffs[0] >= 0:  # fit failed to be concave; trust the discrete argmax
        return float(angles[i_max])
    vertex = -coeffs[1] / (2 * coeffs[0])
    return float(min(hi, max(lo, vertex)))


@dataclass(frozen=True)
class GridCuts:
    row_cuts: tuple  # y coordinates of horizontal cut lines, ascending
    col_cuts: tuple  # x coordinates of vertical cut lines, ascending
    rotation_deg: float
    row_mode: str = "walls"  # "walls" | "interior"
    col_mode: str = "walls"
    ratified: bool = False

    def to_json(self) -> dict:
        return {
            "row_cuts": [float(c) for c in self.row_cuts],
            "col_cuts": [float(c) for c in self.col_cuts],
            "rotation_deg": self.rotation_deg,
            "row_mode": self.row_mode,
            "col_mode": self.col_mode,
            "ratified": self.ratified,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "GridCuts":
        return cls(
            row_cuts=tuple(float(c) for c in obj["row_cuts"]),
            col_cuts=tuple(float(c) for c in obj["col_cuts"]),
            rotation_deg=float(obj["rotation_deg"]),
            row_mode=obj.get("row_mode", "walls"),
            col_mode=obj.get("col_mode", "walls"),
            ratified=bool(obj.get("ratified", False)),
        )


def _axis_cuts(projection: np.ndarray, n_cells: int, axis: str) -> tuple:
    """Cut positions along one axis: n_cells+1 peaks, or n_cells-1 + bounds."""
    rng = projection.max() - projection.min()
    if rng <= 0:
        raise PeakCountMismatch(axis, 0, n_cells + 1)
    positions, props = find_peaks(projection, prominence=PROMINENCE_FRAC * rng)
    order = sorted(
        range(len(positions)),
        key=lambda i: (-props["prominences"][i], positions[i]),
    )
    if len(positions) >= n_cells + 1:
        chosen = sorted(int(positions[i]) for i in order[: n_cells + 1])
        return tuple(float(c) for c in chosen), "walls"
    if len(positions) == n_cells - 1:
        interior = sorted(int(positions[i]) for i in order)
        return tuple([0.0, *map(float, interior), float(len(projection))]), "interior"
    raise PeakCountMismatch(axis, len(positions), n_cells + 1)


def grid_segment(rotated_mask: np.ndarray, n_rows: int, n_cols: int,
                 rotation_deg: float = 0.0, overrides: dict | None = None) -> GridCuts:
    """Cut lines of the tier grid from axis projections of the rotated mask.

    The layout says how many rows and columns there are, hence how many peaks
    to seek: dividers plus package walls (n+1), or dividers alone (n-1) with
    the image bounds standing in for absent wall peaks. `overrides` supplies
    ratified cuts verbatim.
    """
    if overrides is not None:
        cuts = GridCuts(
            row_cuts=tuple(float(c) for c in overrides["row_cuts"]),
            col_cuts=tuple(float(c) for c in overrides["col_cuts"]),
            rotation_deg=float(overrides.get("rotation_deg", rotation_deg)),
            row_mode=overrides.get("row_mode", "override"),
            col_mode=overrides.get("col_mode", "override"),
            ratified=True,
        )
    else:
        mask = np.asarray(rotated_mask, dtype=np.float64)
        row_cuts, row_mode = _axis_cuts(mask.sum(axis=1), n_rows, "row")
        col_cuts, col_mode = _axis_cuts(mask.sum(axis=0), n_cols, "col")
        cuts = GridCuts(
            row_cuts=row_cuts, col_cuts=col_cuts, rotation_deg=rotation_deg,
            row_mode=row_mode, col_mode=col_mode,
        )
    if len(cuts.row_cuts) != n_rows + 1 or len(cuts.col_cuts) != n_cols + 1:
        raise SegmentationError(
            f"need {n_rows + 1} row cuts and {n_cols + 1} col cuts, got "
            f"{len(cuts.row_cuts)} and {len(cuts.col_cuts)}"
        )
    for seq, axis in ((cuts.row_cuts, "row"), (cuts.col_cuts, "col")):
        if any(b <= a for a, b in zip(seq, seq[1:])):
            raise SegmentationError(f"{axis} cuts {seq} are not strictly increasing")
    return cuts


@dataclass(frozen=True)
class ObjectBox:
    """Full-resolution padded box for one object, in aligned-scan coordinates."""

    identifier: str
    x0: int
    x1: int
    y0: int
    y1: int
    z0: int
    z1: int
    pad: int
    provenance: dict = field(default_factory=dict)

    @property
    def dims(self) -> tuple:
        """(nz, ny, nx) array dims of the stored subvolume."""
        return (self.z1 - self.z0, self.y1 - self.y0, self.x1 - self.x0)

    def to_json(self) -> dict:
        return {
            "identifier": self.identifier,
            "x": [self.x0, self.x1],
            "y": [self.y0, self.y1],
            "z": [self.z0, self.z1],
            "pad": self.pad,
            "provenance": self.provenance,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ObjectBox":
        return cls(
            identifier=obj["identifier"],
            x0=int(obj["x"][0]), x1=int(obj["x"][1]),
            y0=int(obj["y"][0]), y1=int(obj["y"][1]),
            z0=int(obj["z"][0]), z1=int(obj["z"][1]),
            pad=int(obj["pad"]),
            provenance=obj.get("provenance", {}),
        )


def boxes_to_fullres(cuts: GridCuts, slab: TierSlab, tier: TierLayout,
                     align: AlignmentParams, xy_scale: tuple, z_factor: int,
                     scan_shape: tuple, scan_count: int, pad: int = 3,
                     sub_size: int = 225) -> list:
    """Map occupied grid cells to padded full-resolution boxes.

    The tier rotation is inverted by taking the axis-aligned envelope of each
    rotated cell rectangle (boxes may overlap as a result), the subsampled
    scale and crop offsets are undone, then the box grows by `pad` subsampled
    units on every side and is clamped to the scan bounds.
    """
    if len(cuts.row_cuts) != tier.n_rows + 1 or len(cuts.col_cuts) != tier.n_cols + 1:
        raise SegmentationError(
            f"cuts do not match tier {tier.tier_index} layout "
            f"({tier.n_rows}x{tier.n_cols})"
        )
    sx, sy = xy_scale
    height, width = scan_shape
    ctr = (sub_size - 1) / 2.0
    th = np.deg2rad(-cuts.rotation_deg)
    m_cos, m_sin = np.cos(th), np.sin(th)

    boxes = []
    for r in range(tier.n_rows):
        for c in range(tier.n_cols):
            ident = tier.rows[r][c]
            if ident is None:
                continue
            ys = (cuts.row_cuts[r], cuts.row_cuts[r + 1])
            xs = (cuts.col_cuts[c], cuts.col_cuts[c + 1])
            corners_x = []
            corners_y = []
            for x in xs:
                for y in ys:
                    dx = x - ctr
                    dy = y - ctr
                    corners_x.append(m_cos * dx + m_sin * dy + ctr)
                    corners_y.append(-m_sin * dx + m_cos * dy + ctr)
            x0 = min(corners_x) * sx + align.col_range[0] - pad * sx
            x1 = max(corners_x) * sx + align.col_range[0] + pad * sx
            y0 = min(corners_y) * sy + align.row_range[0] - pad * sy
            y1 = max(corners_y) * sy + align.row_range[0] + pad * sy
            z0 = slab.z_start * z_factor - pad * z_factor
            z1 = min(slab.z_stop * z_factor, scan_count) + pad * z_factor
            xi0 = max(0, int(math.floor(x0)))
            yi0 = max(0, int(math.floor(y0)))
            zi0 = max(0, int(math.floor(z0)))
            xi1 = min(width, int(math.ceil(x1)))
            yi1 = min(height, int(math.ceil(y1)))
            zi1 = min(scan_count, int(math.ceil(z1)))
            if xi0 >= xi1 or yi0 >= yi1 or zi0 >= zi1:
                raise OutOfBoundsAfterClamp(ident)
            boxes.append(ObjectBox(
                identifier=ident,
                x0=xi0, x1=xi1, y0=yi0, y1=yi1, z0=zi0, z1=zi1,
                pad=pad,
                provenance={
                    "alignment": align.to_json(),
                    "tier_rotation_deg": cuts.rotation_deg,
                    "xy_scale": [sx, sy],
                    "z_factor": z_factor,
                    "slab": slab.to_json(),
                    "cell": {"tier": tier.tier_index, "row": r + 1, "col": c + 1},
                },
            ))
    return boxes
