"""Isosurfacing of object subvolumes and mesh cleaning/export.

Objects are the regions at or above the isolevel. A one-voxel zero border is
treated as virtually present around every volume so surfaces clipped by the
box close up, which is what lets the cleaning rule ("largest connected
component without holes") work near box edges.

Two marching-cubes kernels produce identical meshes: a compiled extension
(packscan._surfcore, built from Cython) and a vectorized numpy fallback used
when the extension is unavailable. `marching_cubes` picks the compiled one
when present; see benchmarks/bench_surface.py for the speed comparison.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from ._mc_tables import EDGE_TABLE, TRI_TABLE
from .errors import EmptyAfterClean, EmptyMesh, WriteError

try:
    from . import _surfcore
except ImportError:  # pragma: no cover - compiled extension is optional
    _surfcore = None

HAVE_COMPILED_KERNEL = _surfcore is not None

# Cube corners in (x, y, z) offsets; edge e connects EDGE_CORNERS[e].
CORNER_OFFSETS = (
    (0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0),
    (0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1),
)
EDGE_CORNERS = (
    (0, 1), (1, 2), (2, 3), (3, 0),
    (4, 5), (5, 6), (6, 7), (7, 4),
    (0, 4), (1, 5), (2, 6), (3, 7),
)
# (axis, anchor corner offset) per edge; the anchor is the lower end along axis.
EDGE_ANCHOR = (
    (0, (0, 0, 0)), (1, (1, 0, 0)), (0, (0, 1, 0)), (1, (0, 0, 0)),
    (0, (0, 0, 1)), (1, (1, 0, 1)), (0, (0, 1, 1)), (1, (0, 0, 1)),
    (2, (0, 0, 0)), (2, (1, 0, 0)), (2, (1, 1, 0)), (2, (0, 1, 0)),
)
# Interpolation endpoints ordered low -> high along the edge axis, so a shared
# edge gets the bit-identical vertex no matter which cell computes it.
EDGE_INTERP = (
    (0, 1), (1, 2), (3, 2), (0, 3),
    (4, 5), (5, 6), (7, 6), (4, 7),
    (0, 4), (1, 5), (2, 6), (3, 7),
)

_EDGE_TABLE = np.asarray(EDGE_TABLE, dtype=np.int32)
_TRI_TABLE = np.asarray(TRI_TABLE, dtype=np.int64)
_TRI_COUNT = np.asarray([row.tolist().index(-1) // 3 if -1 in row else 5
                         for row in _TRI_TABLE], dtype=np.int64)


@dataclass
class Mesh:
    vertices: np.ndarray  # (V, 3) float64, (x, y, z) in voxel units until scaled
    faces: np.ndarray  # (F, 3) int64

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)


def _padded_plane(vol: np.ndarray, index: int) -> np.ndarray:
    """Plane `index` of the virtually zero-padded volume, padded in xy too."""
    nz, ny, nx = vol.shape
    plane = np.zeros((ny + 2, nx + 2), dtype=np.float64)
    if 1 <= index <= nz:
        plane[1:-1, 1:-1] = vol[index - 1]
    return plane


def _march_layers_py(vol: np.ndarray, isolevel: float):
    """Numpy marching cubes: returns (positions, edge keys, face edge-keys).

    Works one z-layer of cells at a time over the padded volume, so peak
    scratch memory is a couple of xy planes regardless of depth.
    """
    nz, ny, nx = vol.shape
    stride_x = nx + 2
    stride_y = ny + 2
    iso = float(isolevel)

    cy, cx = np.mgrid[0:ny + 1, 0:nx + 1]
    cell_x = cx.ravel()
    cell_y = cy.ravel()

    vert_keys = []
    vert_pos = []
    face_keys = []

    def edge_key(axis, px, py, pz):
        return axis + 3 * (px + stride_x * (py + stride_y * pz))

    bottom = _padded_plane(vol, 0)
    for cz in range(nz + 1):
        top = _padded_plane(vol, cz + 1)
        corner_vals = (
            bottom[:-1, :-1], bottom[:-1, 1:], bottom[1:, 1:], bottom[1:, :-1],
            top[:-1, :-1], top[:-1, 1:], top[1:, 1:], top[1:, :-1],
        )
        case = np.zeros((ny + 1) * (nx + 1), dtype=np.int32)
        flat_vals = []
        for bit, cv in enumerate(corner_vals):
            fv = cv.ravel()
            flat_vals.append(fv)
            case |= (fv < iso).astype(np.int32) << bit
        active = np.flatnonzero(_EDGE_TABLE[case] != 0)
        if len(active) == 0:
            bottom = top
            continue
        a_case = case[active]
        a_edges = _EDGE_TABLE[a_case]
        a_x = cell_x[active]
        a_y = cell_y[active]

        layer_keys = np.empty((len(active), 12), dtype=np.int64)
        for e in range(12):
            axis, (dx, dy, dz) = EDGE_ANCHOR[e]
            layer_keys[:, e] = edge_key(axis, a_x + dx, a_y + dy, cz + dz)
            sel = np.flatnonzero(a_edges & (1 << e))
            if len(sel) == 0:
                continue
            i_lo, i_hi = EDGE_INTERP[e]
            v_lo = flat_vals[i_lo][active[sel]]
            v_hi = flat_vals[i_hi][active[sel]]
            t = (iso - v_lo) / (v_hi - v_lo)
            # padded-frame coordinates; -1 converts to voxel coordinates
            px = (a_x + dx)[sel] - 1.0 + (t if axis == 0 else 0.0)
            py = (a_y + dy)[sel] - 1.0 + (t if axis == 1 else 0.0)
            pz = cz + dz - 1.0 + (t if axis == 2 else 0.0)
            if axis != 2:
                pz = np.full(len(sel), pz)
            vert_keys.append(layer_keys[sel, e])
            vert_pos.append(np.column_stack([px, py, pz]))

        counts = _TRI_COUNT[a_case]
        tris = _TRI_TABLE[a_case]
        for t_i in range(5):
            m = np.flatnonzero(counts > t_i)
            if len(m) == 0:
                break
            trio = tris[m, 3 * t_i:3 * t_i + 3]
            rows = np.take_along_axis(layer_keys[m], trio, axis=1)
            face_keys.append(rows)
        bottom = top

    if not face_keys:
        return (np.empty((0, 3)), np.empty(0, dtype=np.int64),
                np.empty((0, 3), dtype=np.int64))
    keys = np.concatenate(vert_keys)
    pos = np.concatenate(vert_pos)
    fkeys = np.concatenate(face_keys)
    return pos, keys, fkeys


def _assemble(pos: np.ndarray, keys: np.ndarray, face_keys: np.ndarray) -> Mesh:
    uniq, first = np.unique(keys, return_index=True)
    vertices = pos[first]
    faces = np.searchsorted(uniq, face_keys)
    return Mesh(vertices=vertices, faces=faces.astype(np.int64))


def _weld(mesh: Mesh) -> Mesh:
    """Merge bitwise-identical vertex positions and drop degenerate faces.

    Integer-valued volumes hit the isolevel exactly on some corners, which
    makes several edges interpolate to the same corner point; welding keeps
    the surface edge-manifold so the watertight test stays meaningful.
    """
    if len(mesh.vertices) == 0:
        return mesh
    v = mesh.vertices
    order = np.lexsort((v[:, 2], v[:, 1], v[:, 0]))
    sv = v[order]
    is_new = np.concatenate([[True], (sv[1:] != sv[:-1]).any(axis=1)])
    inverse = np.empty(len(v), dtype=np.int64)
    inverse[order] = np.cumsum(is_new) - 1
    vertices = sv[is_new]
    faces = inverse[mesh.faces]
    ok = (
        (faces[:, 0] != faces[:, 1])
        & (faces[:, 1] != faces[:, 2])
        & (faces[:, 0] != faces[:, 2])
    )
    faces = faces[ok]
    if len(faces):
        v = vertices[faces]
        area2 = np.linalg.norm(np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]), axis=1)
        faces = faces[area2 > 0.0]
    used = np.unique(faces)
    remap = np.full(len(vertices), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    return Mesh(vertices=vertices[used], faces=remap[faces])


def marching_cubes(vol: np.ndarray, isolevel: float, impl: str = "auto") -> Mesh:
    """Isosurface of {v >= isolevel} with linear edge interpolation.

    Vertices come out in voxel coordinates (x, y, z) for a (nz, ny, nx)
    volume. Raises EmptyMesh when nothing crosses the isolevel. The virtual
    zero border closes clipped surfaces only while isolevel > 0, which holds
    for the unsigned scan data this pipeline feeds it.
    """
    vol = np.asarray(vol)
    if vol.ndim != 3 or min(vol.shape) < 1:
        raise ValueError(f"volume must be 3-D and non-empty, got shape {vol.shape}")
    if impl == "auto":
        impl = "c" if HAVE_COMPILED_KERNEL else "py"
    if impl == "c":
        if _surfcore is None:
            raise RuntimeError("compiled kernel requested but not built")
        work = np.ascontiguousarray(vol)
        if work.dtype not in (np.uint16, np.float32, np.float64):
            work = work.astype(np.float64)
        pos, _keys, face_ids = _surfcore.march(work, float(isolevel))
        mesh = Mesh(vertices=pos, faces=face_ids)
    elif impl == "py":
        mesh = _assemble(*_march_layers_py(np.asarray(vol, dtype=np.float64),
                                           float(isolevel)))
    else:
        raise ValueError(f"unknown marching-cubes impl {impl!r}")
    if mesh.n_faces == 0:
        raise EmptyMesh(f"no voxels cross isolevel {isolevel}")
    return _weld(mesh)


# --- cleaning ---

@dataclass
class CleanResult:
    mesh: Mesh
    watertight: bool
    n_components: int
    dropped_faces: int


def _edge_ids(faces: np.ndarray, n_vertices: int) -> np.ndarray:
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    lo = e.min(axis=1).astype(np.int64)
    hi = e.max(axis=1).astype(np.int64)
    return lo * np.int64(n_vertices + 1) + hi


def clean_mesh(mesh: Mesh) -> CleanResult:
    """Keep the biggest watertight face component; fall back with a flag.

    Components are edge-connected face sets. A component is watertight when
    every one of its edges borders exactly two faces; among watertight
    components the one with the most faces wins. If none is watertight the
    largest component is returned and flagged.
    """
    if mesh.n_faces == 0:
        raise EmptyAfterClean("mesh has no faces")
    nf = mesh.n_faces
    eid = _edge_ids(mesh.faces, mesh.n_vertices)
    face_of = np.tile(np.arange(nf, dtype=np.int64), 3)
    order = np.argsort(eid, kind="stable")
    se = eid[order]
    sf = face_of[order]
    run_starts = np.flatnonzero(np.concatenate([[True], se[1:] != se[:-1]]))
    run_lengths = np.diff(np.concatenate([run_starts, [len(se)]]))

    # link faces that share an edge (consecutive rows of the same edge id)
    same = se[1:] == se[:-1]
    if same.any():
        graph = coo_matrix(
            (np.ones(int(same.sum()), dtype=np.int8),
             (sf[:-1][same], sf[1:][same])),
            shape=(nf, nf),
        )
        n_comp, comp = connected_components(graph, directed=False)
    else:
        n_comp, comp = nf, np.arange(nf)

    # an edge with a face count other than 2 breaks watertightness of its component
    bad_runs = run_starts[run_lengths != 2]
    bad_comp = np.zeros(n_comp, dtype=bool)
    bad_comp[comp[sf[bad_runs]]] = True

    sizes = np.bincount(comp, minlength=n_comp)
    watertight_ids = np.flatnonzero(~bad_comp)
    if len(watertight_ids):
        winner = watertight_ids[np.argmax(sizes[watertight_ids])]
        watertight = True
    else:
        winner = int(np.argmax(sizes))
        watertight = False

    keep = comp == winner
    faces = mesh.faces[keep]
    used = np.unique(faces)
    remap = np.full(mesh.n_vertices, -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    cleaned = Mesh(vertices=mesh.vertices[used], faces=remap[faces])
    return CleanResult(
        mesh=cleaned,
        watertight=watertight,
        n_components=int(n_comp),
        dropped_faces=int(nf - keep.sum()),
    )


# --- mesh measures ---

def mesh_area(mesh: Mesh) -> float:
    v = mesh.vertices[mesh.faces]
    return float(
        0.5 * np.linalg.norm(np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]), axis=1).sum()
    )


def mesh_volume(mesh: Mesh) -> float:
    """Enclosed volume via the divergence theorem (orientation-independent)."""
    v = mesh.vertices[mesh.faces]
    signed = np.einsum("ij,ij->i", v[:, 0], np.cross(v[:, 1], v[:, 2])).sum() / 6.0
    return float(abs(signed))


def euler_characteristic(mesh: Mesh) -> int:
    n_edges = len(np.unique(_edge_ids(mesh.faces, mesh.n_vertices)))
    return mesh.n_vertices - n_edges + mesh.n_faces


def is_watertight(mesh: Mesh) -> bool:
    eid = _edge_ids(mesh.faces, mesh.n_vertices)
    _, counts = np.unique(eid, return_counts=True)
    return bool((counts == 2).all()) if len(counts) else False


# --- scaling and PLY export ---

@dataclass(frozen=True)
class SurfaceJob:
    identifier: str
    isolevel: float
    pitch_um: float
    out_dir: Path

    @property
    def filename(self) -> str:
        level = self.isolevel
        level_txt = str(int(level)) if float(level).is_integer() else str(level)
        return f"{self.identifier}_iso{level_txt}.ply"


def write_ply(path, vertices_mm: np.ndarray, faces: np.ndarray) -> None:
    vertices_mm = np.ascontiguousarray(vertices_mm, dtype="<f4")
    faces = np.ascontiguousarray(faces, dtype="<i4")
    header = (
        "ply\n"
        "format binary_little_endian 1.0\n"
        f"element vertex {len(vertices_mm)}\n"
        "property float x\n"
        "property float y\n"
        "property float z\n"
        f"element face {len(faces)}\n"
        "property list uchar int vertex_indices\n"
        "end_header\n"
    )
    face_block = np.empty(
        len(faces), dtype=[("n", "u1"), ("idx", "<i4", (3,))]
    )
    face_block["n"] = 3
    face_block["idx"] = faces
    try:
        with open(path, "wb") as fh:
            fh.write(header.encode("ascii"))
            fh.write(vertices_mm.tobytes())
            fh.write(face_block.tobytes())
    except OSError as exc:
        raise WriteError(f"cannot write {path}: {exc}") from exc


def read_ply(path):
    """Read back the binary little-endian PLY files this module writes."""
    with open(path, "rb") as fh:
        n_vertex = n_face = None
        while True:
            line = fh.readline().decode("ascii").strip()
            if line.startswith("element vertex"):
                n_vertex = int(line.split()[-1])
            elif line.startswith("element face"):
                n_face = int(line.split()[-1])
            elif line == "end_header":
                break
        vertices = np.frombuffer(
            fh.read(n_vertex * 12), dtype="<f4"
        ).reshape(n_vertex, 3)
        block = np.frombuffer(
            fh.read(n_face * 13), dtype=[("n", "u1"), ("idx", "<i4", (3,))]
        )
        if not (block["n"] == 3).all():
            raise WriteError(f"{path}: non-triangular face in PLY")
        return vertices.copy(), block["idx"].astype(np.int64).copy()


def scale_and_write(mesh: Mesh, job: SurfaceJob):
    """Scale voxel coordinates to millimeters and write the named PLY."""
    job.out_dir.mkdir(parents=True, exist_ok=True)
    path = Path(job.out_dir) / job.filename
    mm_per_voxel = job.pitch_um / 1000.0
    write_ply(path, mesh.vertices * mm_per_voxel, mesh.faces)
    return path
