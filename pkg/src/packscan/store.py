"""In-disk append-only store for extracted object subvolumes.

Extraction walks the scan one slice at a time, so each object's subvolume is
written incrementally: raw little-endian u16 samples appended in z order to
``<id>.raw``, with a JSON sidecar ``<id>.json`` carrying dims, dtype and the
box provenance. Appending on disk instead of accumulating in memory keeps the
extraction footprint independent of subvolume size.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import memory
from .errors import (
    DimsMismatch,
    ExceedsMemoryBudget,
    NonContiguousAppend,
    NotFinalized,
    NotRegistered,
    VolumeError,
)

DTYPE = np.dtype("<u2")


def _safe_name(identifier: str) -> str:
    if not identifier or "/" in identifier or "\\" in identifier:
        raise VolumeError(f"identifier {identifier!r} is not a valid file stem")
    return identifier


@dataclass
class _ObjectState:
    dims: tuple  # (nz, ny, nx)
    z_written: int = 0
    finalized: bool = False
    meta: dict = field(default_factory=dict)


class SubvolumeStore:
    """One directory of <id>.raw/<id>.json pairs, one pair per object.

    Appends to different ids may run concurrently; appends to one id must
    come from a single producer.
    """

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._objects: dict = {}
        for sidecar in self.root.glob("*.json"):
            meta = json.loads(sidecar.read_text())
            if "dims" not in meta:
                continue
            dims = tuple(int(d) for d in meta["dims"])
            self._objects[sidecar.stem] = _ObjectState(
                dims=dims,
                z_written=dims[0] if meta.get("finalized") else 0,
                finalized=bool(meta.get("finalized")),
                meta=meta,
            )

    def _raw_path(self, identifier: str) -> Path:
        return self.root / f"{_safe_name(identifier)}.raw"

    def _sidecar_path(self, identifier: str) -> Path:
        return self.root / f"{_safe_name(identifier)}.json"

    def ids(self) -> list:
        return sorted(self._objects)

    def _state(self, identifier: str) -> _ObjectState:
        try:
            return self._objects[identifier]
        except KeyError:
            raise NotRegistered(identifier) from None

    def register(self, identifier: str, dims, box: dict | None = None,
                 transform: dict | None = None) -> None:
        """Declare an object's padded box dims; truncates any partial data."""
        dims = tuple(int(d) for d in dims)
        if len(dims) != 3 or any(d < 1 for d in dims):
            raise DimsMismatch(f"dims must be 3 positive ints, got {dims}")
        meta = {
            "dims": list(dims),
            "dtype": "u16",
            "box": box or {},
            "transform": transform or {},
            "finalized": False,
        }
        self._sidecar_path(identifier).write_text(
            json.dumps(meta, sort_keys=True, indent=2) + "\n"
        )
        self._raw_path(identifier).write_bytes(b"")
        self._objects[identifier] = _ObjectState(dims=dims, meta=meta)

    def append(self, identifier: str, chunk: np.ndarray, z_start: int | None = None) -> None:
        """Append a z-contiguous chunk of shape (nz, ny, nx) or (ny, nx)."""
        state = self._state(identifier)
        if state.finalized:
            raise NonContiguousAppend(f"{identifier!r} is already finalized")
        chunk = np.asarray(chunk)
        if chunk.ndim == 2:
            chunk = chunk[None, :, :]
        if chunk.ndim != 3 or chunk.shape[1:] != state.dims[1:]:
            raise DimsMismatch(
                f"chunk xy dims {chunk.shape[1:]} do not match box {state.dims[1:]}"
            )
        if z_start is not None and z_start != state.z_written:
            raise NonContiguousAppend(
                f"append at z={z_start} but {state.z_written} slices are written"
            )
        if state.z_written + chunk.shape[0] > state.dims[0]:
            raise DimsMismatch(
                f"append of {chunk.shape[0]} slices overruns box depth {state.dims[0]}"
            )
        data = np.ascontiguousarray(chunk, dtype=DTYPE)
        with open(self._raw_path(identifier), "ab") as fh:
            fh.write(data.tobytes())
        state.z_written += chunk.shape[0]

    def finalize(self, identifier: str) -> None:
        state = self._state(identifier)
        if state.z_written != state.dims[0]:
            raise DimsMismatch(
                f"{identifier!r}: {state.z_written} of {state.dims[0]} slices written"
            )
        state.finalized = True
        state.meta["finalized"] = True
        self._sidecar_path(identifier).write_text(
            json.dumps(state.meta, sort_keys=True, indent=2) + "\n"
        )

    def is_finalized(self, identifier: str) -> bool:
        return self._state(identifier).finalized

    def meta(self, identifier: str) -> dict:
        return dict(self._state(identifier).meta)

    def nbytes(self, identifier: str) -> int:
        nz, ny, nx = self._state(identifier).dims
        return nz * ny * nx * DTYPE.itemsize

    def load(self, identifier: str, budget: int | None = None,
             tracker: memory.AllocationTracker | None = None) -> np.ndarray:
        """Load a finalized subvolume; refuses loads that blow the budget."""
        state = self._state(identifier)
        if not state.finalized:
            raise NotFinalized(identifier)
        needed = self.nbytes(identifier)
        trk = tracker if tracker is not None else memory.tracker
        if budget is not None and trk.current + needed > budget:
            raise ExceedsMemoryBudget(needed, budget)
        raw = np.fromfile(self._raw_path(identifier), dtype=DTYPE)
        if raw.size != needed // DTYPE.itemsize:
            raise VolumeError(
                f"{identifier!r}: raw file holds {raw.size} samples, "
                f"expected {needed // DTYPE.itemsize}"
            )
        trk.add(needed)
        return raw.reshape(state.dims)

    def release(self, volume: np.ndarray,
                tracker: memory.AllocationTracker | None = None) -> None:
        trk = tracker if tracker is not None else memory.tracker
        trk.release(volume.nbytes)
