"""Streamed access to a scan stored as one grayscale image per z-slice.

A scan never fits in memory (70+ GB at full resolution), so everything here
works one slice at a time: metadata-only open, per-slice reads, and a
streaming subsample that reduces the aligned scan to a 225 x 225 x ceil(h/10)
proxy volume while holding at most one full-resolution slice plus small
accumulators. Large buffers are registered with the allocation tracker.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import tifffile
from PIL import Image

from . import memory
from .errors import (
    DecodeError,
    InconsistentDimensions,
    NoSlices,
    OutOfRange,
    RangeOutOfBounds,
    UnsupportedSampleType,
)
from .imaging import RotationResampler, area_resize

SLICE_SUFFIXES = (".tif", ".tiff", ".png")
META_FILENAME = "scan_meta.json"
DEFAULT_PITCH_UM = 50.0
SUBSAMPLE_SIZE = 225
Z_FACTOR = 10


@dataclass(frozen=True)
class AlignmentParams:
    """The five manually identified alignment values for one scan."""

    angle_deg: float
    row_range: tuple  # (start, stop) pixel rows after rotation
    col_range: tuple

    def validate(self, shape: tuple) -> None:
        h, w = shape
        r0, r1 = self.row_range
        c0, c1 = self.col_range
        if not (0 <= r0 < r1 <= h and 0 <= c0 < c1 <= w):
            raise RangeOutOfBounds(
                f"crop rows {self.row_range} cols {self.col_range} "
                f"outside rotated image {h}x{w}"
            )

    @property
    def cropped_shape(self) -> tuple:
        return (self.row_range[1] - self.row_range[0],
                self.col_range[1] - self.col_range[0])

    @classmethod
    def from_text(cls, text: str) -> "AlignmentParams":
        parts = text.split()
        if len(parts) != 5:
            raise ValueError("alignment file must hold 5 values: "
                             "angle row_start row_stop col_start col_stop")
        angle = float(parts[0])
        r0, r1, c0, c1 = (int(float(p)) for p in parts[1:])
        return cls(angle_deg=angle, row_range=(r0, r1), col_range=(c0, c1))

    def to_text(self) -> str:
        return (f"{self.angle_deg} {self.row_range[0]} {self.row_range[1]} "
                f"{self.col_range[0]} {self.col_range[1]}\n")

    def to_json(self) -> dict:
        return {
            "angle_deg": self.angle_deg,
            "row_range": list(self.row_range),
            "col_range": list(self.col_range),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "AlignmentParams":
        return cls(
            angle_deg=float(obj["angle_deg"]),
            row_range=tuple(int(v) for v in obj["row_range"]),
            col_range=tuple(int(v) for v in obj["col_range"]),
        )


@dataclass(frozen=True)
class SliceStack:
    """Metadata for a directory of z-slices; no pixel data is resident."""

    directory: Path
    files: tuple  # slice k (1-based) is files[k-1]
    width: int  # columns
    height: int  # rows
    count: int
    pitch_um: float

    @property
    def slice_nbytes(self) -> int:
        return self.width * self.height * 2  # u16 samples

    @property
    def shape(self) -> tuple:
        return (self.height, self.width)


def _probe_header(path: Path):
    """(height, width, dtype) from the file header without decoding pixels."""
    try:
        if path.suffix.lower() in (".tif", ".tiff"):
            with tifffile.TiffFile(path) as tf:
                page = tf.pages[0]
                h, w = page.shape[:2]
                return int(h), int(w), np.dtype(page.dtype)
        with Image.open(path) as im:
            w, h = im.size
            dtype = np.dtype("uint16") if im.mode in ("I;16", "I;16B", "I;16L") else None
            return int(h), int(w), dtype
    except Exception as exc:  # noqa: BLE001 - decoding libraries vary
        raise DecodeError(str(path), exc) from exc


def open_slice_stack(directory, pitch_um: float | None = None) -> SliceStack:
    """Index a slice directory; z order is lexicographic filename order."""
    directory = Path(directory)
    files = sorted(
        p for p in directory.iterdir()
        if p.is_file() and p.suffix.lower() in SLICE_SUFFIXES
    )
    if not files:
        raise NoSlices(f"no slice images in {directory}")

    h0, w0, dtype0 = _probe_header(files[0])
    if dtype0 != np.dtype("uint16"):
        raise UnsupportedSampleType(str(files[0]), dtype0)
    for f in files[1:]:
        h, w, dtype = _probe_header(f)
        if (h, w) != (h0, w0):
            raise InconsistentDimensions(str(f), (h, w), (h0, w0))
        if dtype != np.dtype("uint16"):
            raise UnsupportedSampleType(str(f), dtype)

    if pitch_um is None:
        meta = directory / META_FILENAME
        if meta.exists():
            pitch_um = float(json.loads(meta.read_text())["pitch_um"])
        else:
            pitch_um = DEFAULT_PITCH_UM

    return SliceStack(
        directory=directory,
        files=tuple(files),
        width=w0,
        height=h0,
        count=len(files),
        pitch_um=float(pitch_um),
    )


def read_slice(stack: SliceStack, k: int) -> np.ndarray:
    """Decode slice k (1-based). Pure: re-reads return identical pixels."""
    if not 1 <= k <= stack.count:
        raise OutOfRange(f"slice {k} not in 1..{stack.count}")
    path = stack.files[k - 1]
    try:
        if path.suffix.lower() in (".tif", ".tiff"):
            img = tifffile.imread(path)
        else:
            with Image.open(path) as im:
                img = np.asarray(im)
    except Exception as exc:  # noqa: BLE001
        raise DecodeError(str(path), exc) from exc
    if img.dtype != np.uint16:
        raise UnsupportedSampleType(str(path), img.dtype)
    if img.shape != (stack.height, stack.width):
        raise InconsistentDimensions(str(path), img.shape, (stack.height, stack.width))
    return img


def rotate_crop(img: np.ndarray, params: AlignmentParams,
                resampler: RotationResampler | None = None) -> np.ndarray:
    """Rotate about the image center (fill 0 = air), then crop; float32 out."""
    params.validate(img.shape)
    if resampler is None:
        resampler = RotationResampler(img.shape, params.angle_deg)
    rotated = resampler.apply(np.ascontiguousarray(img, dtype=np.float32))
    r0, r1 = params.row_range
    c0, c1 = params.col_range
    return rotated[r0:r1, c0:c1]


@dataclass
class SubsampledVolume:
    """In-memory proxy of the aligned scan used for all bounding-box work."""

    data: np.ndarray  # float32, (depth, SUBSAMPLE_SIZE, SUBSAMPLE_SIZE) = (z, y, x)
    z_factor: int
    xy_scale: tuple  # (cropped_width / size, cropped_height / size) = (sx, sy)
    params: AlignmentParams
    source_shape: tuple  # (height, width) of the raw slices
    source_count: int

    @property
    def depth(self) -> int:
        return self.data.shape[0]

    def to_meta(self) -> dict:
        return {
            "depth": self.depth,
            "size": list(self.data.shape[1:]),
            "z_factor": self.z_factor,
            "xy_scale": list(self.xy_scale),
            "alignment": self.params.to_json(),
            "source_shape": list(self.source_shape),
            "source_count": self.source_count,
        }


def subsample(stack: SliceStack, params: AlignmentParams,
              tracker: memory.AllocationTracker | None = None,
              size: int = SUBSAMPLE_SIZE, z_factor: int = Z_FACTOR) -> SubsampledVolume:
    """Stream the aligned scan down to a size x size x ceil(h/z_factor) proxy.

    Each slice is rotated/cropped, box-averaged to size x size, and batches of
    `z_factor` consecutive results are averaged (the last batch over however
    many slices remain). Only one full-resolution slice is resident at a time.
    """
    trk = tracker if tracker is not None else memory.tracker
    params.validate(stack.shape)
    depth = math.ceil(stack.count / z_factor)

    out = np.empty((depth, size, size), dtype=np.float32)
    trk.add(out.nbytes)

    resampler = RotationResampler(stack.shape, params.angle_deg)
    trk.add(resampler.scratch_nbytes)
    slice_f32 = stack.width * stack.height * 4

    acc = np.zeros((size, size), dtype=np.float64)
    in_batch = 0
    zi = 0
    try:
        for k in range(1, stack.count + 1):
            raw = read_slice(stack, k)
            trk.add(raw.nbytes + slice_f32)  # decoded u16 + float32 cast
            img = np.ascontiguousarray(raw, dtype=np.float32)
            trk.release(raw.nbytes)
            del raw
            trk.add(slice_f32)  # rotation output
            aligned = rotate_crop(img, params, resampler)
            trk.release(slice_f32)
            del img
            acc += area_resize(aligned, (size, size))
            trk.release(slice_f32)
            del aligned
            in_batch += 1
            if in_batch == z_factor:
                out[zi] = acc / in_batch
                zi += 1
                acc[:] = 0.0
                in_batch = 0
        if in_batch:
            out[zi] = acc / in_batch
            zi += 1
    finally:
        trk.release(resampler.scratch_nbytes)

    assert zi == depth
    ch, cw = params.cropped_shape
    return SubsampledVolume(
        data=out,
        z_factor=z_factor,
        xy_scale=(cw / size, ch / size),
        params=params,
        source_shape=stack.shape,
        source_count=stack.count,
    )
