"""Scan-layout CSV: the map from (tier, row, column) cells to object ids.

File format, one line per strip of cells::

    scan_id,tier,row,id1,id2,...,idM

Blank fields (or the literal token ``EMPTY``, any case) mark cells that were
deliberately left unoccupied. A header line is allowed and is recognized by a
non-numeric tier field. Tiers may differ in row/column counts; within a tier
all rows must have the same length.

Conventions pinned here (confirmed at ratification time): row 1 / column 1 is
the top-left of the aligned overhead view, and tier 1 is the bottom-most tier
in z.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DuplicateIdentifier,
    EmptyLayout,
    LayoutError,
    NonConsecutiveTiers,
    OutOfBounds,
    RaggedTier,
)

EMPTY_TOKEN = "EMPTY"

Cell = "str | None"  # None encodes an empty cell


def _parse_cell(raw: str):
    value = raw.strip()
    if value == "" or value.upper() == EMPTY_TOKEN:
        return None
    if "/" in value or "\\" in value:
        raise LayoutError(f"identifier {value!r} contains a path separator")
    return value


@dataclass(frozen=True)
class TierLayout:
    tier_index: int
    rows: tuple  # tuple of tuples of (str | None)

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    @property
    def n_cols(self) -> int:
        return len(self.rows[0])

    def occupancy(self) -> np.ndarray:
        """Boolean N x M grid, True where a cell holds an object."""
        return np.array([[c is not None for c in row] for row in self.rows], dtype=bool)

    def empty_count(self) -> int:
        return int((~self.occupancy()).sum())


@dataclass(frozen=True)
class ScanLayout:
    scan_id: str
    tiers: tuple  # tuple of TierLayout, tier 1 (bottom) first

    @property
    def n_tiers(self) -> int:
        return len(self.tiers)

    def tier(self, index: int) -> TierLayout:
        if not 1 <= index <= len(self.tiers):
            raise OutOfBounds(f"tier {index} not in 1..{len(self.tiers)}")
        return self.tiers[index - 1]

    def identifiers(self) -> list:
        return [c for t in self.tiers for row in t.rows for c in row if c is not None]

    def total_cells(self) -> int:
        return sum(t.n_rows * t.n_cols for t in self.tiers)

    def occupied_count(self) -> int:
        return len(self.identifiers())


def parse_layout(csv_text: str, scan_id: str | None = None) -> ScanLayout:
    """Parse a scan-layout CSV into a validated ScanLayout.

    If the CSV describes several scans, `scan_id` selects one; with a single
    scan it may be omitted.
    """
    records = []
    for line_no, fields in enumerate(csv.reader(io.StringIO(csv_text)), start=1):
        if not fields or all(f.strip() == "" for f in fields):
            continue
        if len(fields) < 4:
            raise LayoutError(f"line {line_no}: expected scan_id,tier,row,cells...")
        sid = fields[0].strip()
        try:
            tier = int(fields[1])
            row = int(fields[2])
        except ValueError:
            if line_no == 1 or not records:
                continue  # header line
            raise LayoutError(f"line {line_no}: non-numeric tier/row field")
        records.append((sid, tier, row, fields[3:]))

    if not records:
        raise EmptyLayout("no data rows in layout CSV")

    scan_ids = {r[0] for r in records}
    if scan_id is None:
        if len(scan_ids) > 1:
            raise LayoutError(
                f"CSV contains scans {sorted(scan_ids)}; pass scan_id to choose one"
            )
        scan_id = next(iter(scan_ids))
    records = [r for r in records if r[0] == scan_id]
    if not records:
        raise EmptyLayout(f"no rows for scan {scan_id!r}")

    tier_indices = sorted({r[1] for r in records})
    if tier_indices != list(range(1, len(tier_indices) + 1)):
        raise NonConsecutiveTiers(tier_indices)

    seen = set()
    tiers = []
    for t in tier_indices:
        strip = sorted((r for r in records if r[1] == t), key=lambda r: r[2])
        rows = []
        width = None
        for _, _, _, cells in strip:
            parsed = tuple(_parse_cell(c) for c in cells)
            if width is None:
                width = len(parsed)
            elif len(parsed) != width:
                raise RaggedTier(t)
            for ident in parsed:
                if ident is not None:
                    if ident in seen:
                        raise DuplicateIdentifier(ident)
                    seen.add(ident)
            rows.append(parsed)
        tiers.append(TierLayout(tier_index=t, rows=tuple(rows)))

    return ScanLayout(scan_id=scan_id, tiers=tuple(tiers))


def serialize_layout(layout: ScanLayout) -> str:
    """Inverse of parse_layout; empty cells become blank fields."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for tier in layout.tiers:
        for row_no, row in enumerate(tier.rows, start=1):
            writer.writerow(
                [layout.scan_id, tier.tier_index, row_no]
                + ["" if c is None else c for c in row]
            )
    return buf.getvalue()


def lookup(layout: ScanLayout, tier: int, row: int, col: int):
    """Cell content at 1-based (tier, row, col); None for an empty cell."""
    t = layout.tier(tier)
    if not 1 <= row <= t.n_rows:
        raise OutOfBounds(f"row {row} not in 1..{t.n_rows} of tier {tier}")
    if not 1 <= col <= t.n_cols:
        raise OutOfBounds(f"col {col} not in 1..{t.n_cols} of tier {tier}")
    return t.rows[row - 1][col - 1]


@dataclass(frozen=True)
class TierSymmetry:
    tier_index: int
    rot180: bool
    mirror_h: bool
    mirror_v: bool

    @property
    def symmetric(self) -> bool:
        return self.rot180 or self.mirror_h or self.mirror_v


@dataclass(frozen=True)
class SymmetryReport:
    tiers: tuple
    warnings: tuple = field(default_factory=tuple)

    @property
    def all_asymmetric(self) -> bool:
        return not any(t.symmetric for t in self.tiers)


def validate_asymmetry(layout: ScanLayout) -> SymmetryReport:
    """Check each tier's empty-cell pattern rules out rotation/mirror ambiguity.

    The physical protocol leaves cells empty so the overhead view has a unique
    orientation; a tier whose occupancy survives a 180-degree rotation or a
    mirror cannot pin the orientation, which gets a warning (not an error:
    another tier may still disambiguate).
    """
    entries = []
    warnings = []
    for tier in layout.tiers:
        occ = tier.occupancy()
        sym = TierSymmetry(
            tier_index=tier.tier_index,
            rot180=bool(np.array_equal(occ, occ[::-1, ::-1])),
            mirror_h=bool(np.array_equal(occ, occ[:, ::-1])),
            mirror_v=bool(np.array_equal(occ, occ[::-1, :])),
        )
        entries.append(sym)
        if sym.symmetric:
            kinds = [
                name
                for name, flag in
                [("180-rotation", sym.rot180), ("horizontal mirror", sym.mirror_h),
                 ("vertical mirror", sym.mirror_v)]
                if flag
            ]
            warnings.append(
                f"tier {tier.tier_index}: occupancy is symmetric under "
                f"{', '.join(kinds)}; orientation cannot be recovered from it"
            )
        if tier.empty_count() < 2:
            warnings.append(
                f"tier {tier.tier_index}: fewer than 2 empty cells"
            )
    return SymmetryReport(tiers=tuple(entries), warnings=tuple(warnings))
