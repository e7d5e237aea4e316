# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled marching-cubes core.

Scalar sweep over cell layers of the virtually zero-padded volume with
per-plane edge-index buffers, so vertices shared between cells (and between
layers) are emitted once. Produces the same positions/keys/faces as the numpy
fallback in packscan.surface.
"""

import numpy as np

cimport numpy as cnp

from ._mc_tables import EDGE_TABLE, TRI_TABLE

cnp.import_array()

cdef int[256] EDGE_T
cdef int[256][16] TRI_T

def _init_tables():
    cdef int i, j
    for i in range(256):
        EDGE_T[i] = EDGE_TABLE[i]
        for j in range(16):
            TRI_T[i][j] = TRI_TABLE[i][j]

_init_tables()

# per-edge anchor offsets (axis, dx, dy, dz) and endpoint corner ids
cdef int[12] E_AXIS
cdef int[12] E_DX
cdef int[12] E_DY
cdef int[12] E_DZ
cdef int[12] E_C0
cdef int[12] E_C1

def _init_geometry():
    anchors = [
        (0, 0, 0, 0), (1, 1, 0, 0), (0, 0, 1, 0), (1, 0, 0, 0),
        (0, 0, 0, 1), (1, 1, 0, 1), (0, 0, 1, 1), (1, 0, 0, 1),
        (2, 0, 0, 0), (2, 1, 0, 0), (2, 1, 1, 0), (2, 0, 1, 0),
    ]
    # interpolation endpoints ordered low -> high along the edge axis, matching
    # packscan.surface.EDGE_INTERP so both kernels emit bit-identical vertices
    pairs = [
        (0, 1), (1, 2), (3, 2), (0, 3),
        (4, 5), (5, 6), (7, 6), (4, 7),
        (0, 4), (1, 5), (2, 6), (3, 7),
    ]
    cdef int e
    for e in range(12):
        E_AXIS[e] = anchors[e][0]
        E_DX[e] = anchors[e][1]
        E_DY[e] = anchors[e][2]
        E_DZ[e] = anchors[e][3]
        E_C0[e] = pairs[e][0]
        E_C1[e] = pairs[e][1]

_init_geometry()

ctypedef fused pixel_t:
    cnp.uint16_t
    cnp.float32_t
    cnp.float64_t


cdef class _Buffers:
    cdef cnp.float64_t[:, ::1] pos
    cdef cnp.int64_t[::1] keys
    cdef cnp.int64_t[:, ::1] faces
    cdef Py_ssize_t n_verts, n_faces
    cdef object pos_arr, keys_arr, faces_arr

    def __cinit__(self):
        self.pos_arr = np.empty((4096, 3), dtype=np.float64)
        self.keys_arr = np.empty(4096, dtype=np.int64)
        self.faces_arr = np.empty((8192, 3), dtype=np.int64)
        self.pos = self.pos_arr
        self.keys = self.keys_arr
        self.faces = self.faces_arr
        self.n_verts = 0
        self.n_faces = 0

    cdef void _grow_verts(self):
        self.pos_arr = np.concatenate(
            [self.pos_arr, np.empty_like(self.pos_arr)]
        )
        self.keys_arr = np.concatenate(
            [self.keys_arr, np.empty_like(self.keys_arr)]
        )
        self.pos = self.pos_arr
        self.keys = self.keys_arr

    cdef void _grow_faces(self):
        self.faces_arr = np.concatenate(
            [self.faces_arr, np.empty_like(self.faces_arr)]
        )
        self.faces = self.faces_arr

    cdef Py_ssize_t add_vertex(self, double x, double y, double z, cnp.int64_t key):
        if self.n_verts == self.pos.shape[0]:
            self._grow_verts()
        self.pos[self.n_verts, 0] = x
        self.pos[self.n_verts, 1] = y
        self.pos[self.n_verts, 2] = z
        self.keys[self.n_verts] = key
        self.n_verts += 1
        return self.n_verts - 1

    cdef void add_face(self, cnp.int64_t a, cnp.int64_t b, cnp.int64_t c):
        if self.n_faces == self.faces.shape[0]:
            self._grow_faces()
        self.faces[self.n_faces, 0] = a
        self.faces[self.n_faces, 1] = b
        self.faces[self.n_faces, 2] = c
        self.n_faces += 1


def march(pixel_t[:, :, ::1] vol, double iso):
    """Triangulate {v >= iso}; returns (positions, edge keys, face vertex ids)."""
    cdef Py_ssize_t nz = vol.shape[0]
    cdef Py_ssize_t ny = vol.shape[1]
    cdef Py_ssize_t nx = vol.shape[2]
    cdef Py_ssize_t stride_x = nx + 2
    cdef Py_ssize_t stride_y = ny + 2

    plane_shape = (ny + 2, nx + 2)
    bottom_arr = np.zeros(plane_shape, dtype=np.float64)
    top_arr = np.zeros(plane_shape, dtype=np.float64)
    # edge-vertex indices for the bottom plane (x/y edges), top plane, and
    # the vertical edges of the current layer; -1 = not yet created
    ex0_arr = np.full(plane_shape, -1, dtype=np.int64)
    ey0_arr = np.full(plane_shape, -1, dtype=np.int64)
    ex1_arr = np.full(plane_shape, -1, dtype=np.int64)
    ey1_arr = np.full(plane_shape, -1, dtype=np.int64)
    ez_arr = np.full(plane_shape, -1, dtype=np.int64)

    cdef cnp.float64_t[:, ::1] bottom = bottom_arr
    cdef cnp.float64_t[:, ::1] top = top_arr
    cdef cnp.int64_t[:, ::1] ex0 = ex0_arr
    cdef cnp.int64_t[:, ::1] ey0 = ey0_arr
    cdef cnp.int64_t[:, ::1] ex1 = ex1_arr
    cdef cnp.int64_t[:, ::1] ey1 = ey1_arr
    cdef cnp.int64_t[:, ::1] ez = ez_arr

    cdef _Buffers buf = _Buffers()

    cdef Py_ssize_t cz, cy, cx, e, t_i
    cdef int case, bit, axis, c0, c1
    cdef double vals[8]
    cdef cnp.int64_t vid[12]
    cdef double v0, v1, t, px, py, pz
    cdef cnp.int64_t key
    cdef Py_ssize_t ax_, ay_, az_

    for cz in range(nz + 1):
        # top plane = padded slice cz+1, which is volume slice cz (or virtual zeros)
        top_arr[:] = 0.0
        if cz < nz:
            top_arr[1:ny + 1, 1:nx + 1] = np.asarray(vol[cz])
        top = top_arr
        ez_arr[:] = -1
        ez = ez_arr

        for cy in range(ny + 1):
            for cx in range(nx + 1):
                vals[0] = bottom[cy, cx]
                vals[1] = bottom[cy, cx + 1]
                vals[2] = bottom[cy + 1, cx + 1]
                vals[3] = bottom[cy + 1, cx]
                vals[4] = top[cy, cx]
                vals[5] = top[cy, cx + 1]
                vals[6] = top[cy + 1, cx + 1]
                vals[7] = top[cy + 1, cx]
                case = 0
                for bit in range(8):
                    if vals[bit] < iso:
                        case |= 1 << bit
                if EDGE_T[case] == 0:
                    continue
                for e in range(12):
                    if not EDGE_T[case] & (1 << e):
                        continue
                    axis = E_AXIS[e]
                    ax_ = cx + E_DX[e]
                    ay_ = cy + E_DY[e]
                    az_ = E_DZ[e]  # 0 = bottom plane, 1 = top plane
                    if axis == 0:
                        vid[e] = ex0[ay_, ax_] if az_ == 0 else ex1[ay_, ax_]
                    elif axis == 1:
                        vid[e] = ey0[ay_, ax_] if az_ == 0 else ey1[ay_, ax_]
                    else:
                        vid[e] = ez[ay_, ax_]
                    if vid[e] >= 0:
                        continue
                    c0 = E_C0[e]
                    c1 = E_C1[e]
                    v0 = vals[c0]
                    v1 = vals[c1]
                    t = (iso - v0) / (v1 - v0)
                    px = ax_ - 1.0
                    py = ay_ - 1.0
                    pz = cz + az_ - 1.0
                    if axis == 0:
                        px = px + t
                    elif axis == 1:
                        py = py + t
                    else:
                        pz = pz + t
                    key = axis + 3 * (ax_ + stride_x * (ay_ + stride_y * (cz + az_)))
                    vid[e] = buf.add_vertex(px, py, pz, key)
                    if axis == 0:
                        if az_ == 0:
                            ex0[ay_, ax_] = vid[e]
                        else:
                            ex1[ay_, ax_] = vid[e]
                    elif axis == 1:
                        if az_ == 0:
                            ey0[ay_, ax_] = vid[e]
                        else:
                            ey1[ay_, ax_] = vid[e]
                    else:
                        ez[ay_, ax_] = vid[e]
                for t_i in range(0, 16, 3):
                    if TRI_T[case][t_i] < 0:
                        break
                    buf.add_face(
                        vid[TRI_T[case][t_i]],
                        vid[TRI_T[case][t_i + 1]],
                        vid[TRI_T[case][t_i + 2]],
                    )

        bottom_arr, top_arr = top_arr, bottom_arr
        bottom = bottom_arr
        top = top_arr
        ex0_arr, ex1_arr = ex1_arr, ex0_arr
        ey0_arr, ey1_arr = ey1_arr, ey0_arr
        ex1_arr[:] = -1
        ey1_arr[:] = -1
        ex0 = ex0_arr
        ey0 = ey0_arr
        ex1 = ex1_arr
        ey1 = ey1_arr

    pos = buf.pos_arr[:buf.n_verts].copy()
    keys = buf.keys_arr[:buf.n_verts].copy()
    faces = buf.faces_arr[:buf.n_faces].copy()
    return pos, keys, faces
