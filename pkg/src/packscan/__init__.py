"""packscan: memory-bounded segmentation and surfacing of packed micro-CT scans.

One packed scan (a directory of 16-bit z-slice images) plus a scan-layout CSV
in, one cleaned and correctly named PLY mesh per packed object out. The
pipeline streams the scan from disk, does all bounding-box work on a small
subsampled proxy volume, extracts per-object subvolumes by in-disk appending,
and surfaces them with marching cubes.
"""

__version__ = "0.1.0"

from .errors import PackscanError  # noqa: F401
