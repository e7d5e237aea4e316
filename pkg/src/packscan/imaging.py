"""2-D resampling primitives: bilinear rotation and exact box (area) resize.

Conventions used throughout the pipeline:

* images are numpy arrays indexed ``[row, col]`` = ``[y, x]``;
* rotation angles are degrees, counterclockwise positive as the image is
  displayed (origin top-left), about the image center ``((h-1)/2, (w-1)/2)``;
* samples falling outside the frame are filled with a constant (0 = air).
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy import ndimage


def rotation_coords(shape: tuple[int, int], angle_deg: float) -> np.ndarray:
    """Source-sampling grid for a bilinear rotation of an image of `shape`.

    Returns a float32 array of shape (2, h, w): [y_src, x_src] per output
    pixel. Precompute once when rotating many same-shape slices by the same
    angle; the grid is by far the largest scratch buffer of the rotation.
    """
    h, w = shape
    cy = (h - 1) / 2.0
    cx = (w - 1) / 2.0
    th = np.deg2rad(angle_deg)
    c = np.cos(th)
    s = np.sin(th)
    yy, xx = np.meshgrid(
        np.arange(h, dtype=np.float32) - cy,
        np.arange(w, dtype=np.float32) - cx,
        indexing="ij",
    )
    # Forward map of content is p' = M (p - ctr) + ctr with M = [[c, s], [-s, c]]
    # in (x, y) screen coordinates; resampling applies the inverse to each
    # output pixel.
    x_src = c * xx - s * yy + cx
    y_src = s * xx + c * yy + cy
    return np.stack([y_src, x_src])


class RotationResampler:
    """Rotate a stream of same-shape images by one fixed angle."""

    def __init__(self, shape: tuple[int, int], angle_deg: float):
        self.shape = tuple(shape)
        self.angle_deg = float(angle_deg)
        self._coords = None if angle_deg == 0.0 else rotation_coords(shape, angle_deg)

    @property
    def scratch_nbytes(self) -> int:
        return 0 if self._coords is None else self._coords.nbytes

    def apply(self, img: np.ndarray, fill: float = 0.0) -> np.ndarray:
        if img.shape != self.shape:
            raise ValueError(f"expected image of shape {self.shape}, got {img.shape}")
        if self._coords is None:
            return np.asarray(img, dtype=np.float32)
        out = np.empty(self.shape, dtype=np.float32)
        ndimage.map_coordinates(
            np.asarray(img, dtype=np.float32),
            self._coords,
            output=out,
            order=1,
            mode="grid-constant",
            cval=fill,
        )
        return out


def rotate(img: np.ndarray, angle_deg: float, fill: float = 0.0) -> np.ndarray:
    """Bilinear rotation about the image center; out-of-frame samples = fill."""
    return RotationResampler(img.shape, angle_deg).apply(img, fill=fill)


@lru_cache(maxsize=32)
def box_weights(n_in: int, n_out: int) -> np.ndarray:
    """Row-stochastic matrix averaging `n_in` samples into `n_out` boxes.

    Output bin j covers the half-open source interval
    [j*n_in/n_out, (j+1)*n_in/n_out); source pixels contribute by their
    fractional overlap. Exact area averaging for any scale, which is what the
    heavy 2500 -> 225 minification needs to avoid aliasing.
    """
    if n_in < 1 or n_out < 1:
        raise ValueError("box_weights needs positive sizes")
    w = np.zeros((n_out, n_in), dtype=np.float64)
    for j in range(n_out):
        b0 = (j * n_in) / n_out
        b1 = ((j + 1) * n_in) / n_out
        i0 = int(np.floor(b0))
        i1 = min(int(np.ceil(b1)), n_in)
        for i in range(i0, i1):
            w[j, i] = max(0.0, min(i + 1.0, b1) - max(float(i), b0))
        w[j] /= b1 - b0
    return w


def area_resize(img: np.ndarray, out_shape: tuple[int, int]) -> np.ndarray:
    """Box-average resize to `out_shape` (rows, cols); returns float64."""
    out_h, out_w = out_shape
    rh = box_weights(img.shape[0], out_h)
    rw = box_weights(img.shape[1], out_w)
    return rh @ np.asarray(img, dtype=np.float64) @ rw.T
