import pytest
from hypothesis import given, strategies as st

from packscan import errors, layout


def test_parse_full_grid():
    lines = []
    for tier in range(1, 5):
        for row in range(1, 9):
            cells = [f"T{tier}R{row}C{col}" for col in range(1, 6)]
            lines.append(f"S1,{tier},{row}," + ",".join(cells))
    # blank out three cells
    lines[0] = "S1,1,1,,T1R1C2,T1R1C3,T1R1C4,"
    lines[9] = "S1,2,2,T2R2C1,,T2R2C3,T2R2C4,T2R2C5"
    lay = layout.parse_layout("\n".join(lines))
    assert lay.n_tiers == 4
    assert all(t.n_rows == 8 and t.n_cols == 5 for t in lay.tiers)
    assert lay.total_cells() == 160
    assert lay.occupied_count() == 157


def test_parse_single_row():
    lay = layout.parse_layout("S1,1,1,A,,B")
    tier = lay.tier(1)
    assert tier.n_rows == 1 and tier.n_cols == 3
    assert tier.rows[0] == ("A", None, "B")


def test_parse_header_detected():
    text = "scan,tier,row,c1,c2\nS1,1,1,A,B\n"
    lay = layout.parse_layout(text)
    assert lay.identifiers() == ["A", "B"]


def test_empty_token_case_insensitive():
    lay = layout.parse_layout("S1,1,1,A,empty,EMPTY,B")
    assert lay.tier(1).rows[0] == ("A", None, None, "B")


def test_ragged_tier():
    with pytest.raises(errors.RaggedTier) as err:
        layout.parse_layout("S1,1,1,A,B,C\nS1,1,2,D,E,F,G")
    assert err.value.tier == 1


def test_duplicate_identifier():
    with pytest.raises(errors.DuplicateIdentifier):
        layout.parse_layout("S1,1,1,A,B\nS1,1,2,B,C")


def test_non_consecutive_tiers():
    with pytest.raises(errors.NonConsecutiveTiers):
        layout.parse_layout("S1,1,1,A\nS1,3,1,B")


def test_empty_layout():
    with pytest.raises(errors.EmptyLayout):
        layout.parse_layout("\n\n")


def test_path_separator_rejected():
    with pytest.raises(errors.LayoutError):
        layout.parse_layout("S1,1,1,a/b")


def test_multi_scan_csv_needs_scan_id():
    text = "S1,1,1,A\nS2,1,1,B\n"
    with pytest.raises(errors.LayoutError):
        layout.parse_layout(text)
    assert layout.parse_layout(text, scan_id="S2").identifiers() == ["B"]


def test_lookup():
    lay = layout.parse_layout("S1,1,1,A,,B")
    assert layout.lookup(lay, 1, 1, 1) == "A"
    assert layout.lookup(lay, 1, 1, 2) is None
    assert layout.lookup(lay, 1, 1, 3) == "B"
    with pytest.raises(errors.OutOfBounds):
        layout.lookup(lay, 1, 1, 4)
    with pytest.raises(errors.OutOfBounds):
        layout.lookup(lay, 2, 1, 1)


def test_occupied_count_matches_truth(small_scan):
    root, truth, _spec = small_scan
    lay = layout.parse_layout((root / "layout.csv").read_text())
    assert lay.occupied_count() == len(truth["objects"])


def test_asymmetry_detects_unique_pattern():
    # empties at (1,1) and (1,2) of a 4x5 grid: unique under all transforms
    rows = [["x"] * 5 for _ in range(4)]
    rows[0][0] = ""
    rows[0][1] = ""
    text = "\n".join(
        f"S1,1,{r + 1}," + ",".join(f"{c}{r}{i}" if c else "" for i, c in enumerate(row))
        for r, row in enumerate(rows)
    )
    rep = layout.validate_asymmetry(layout.parse_layout(text))
    tier = rep.tiers[0]
    assert not tier.rot180 and not tier.mirror_h and not tier.mirror_v
    assert rep.all_asymmetric


def test_asymmetry_warns_on_rot180():
    # empties at opposite corners survive a 180 rotation
    text = "S1,1,1,,B,C\nS1,1,2,D,E,\n"
    rep = layout.validate_asymmetry(layout.parse_layout(text))
    assert rep.tiers[0].rot180
    assert any("180" in w for w in rep.warnings)


def test_asymmetry_warns_on_full_tier():
    rep = layout.validate_asymmetry(layout.parse_layout("S1,1,1,A,B\nS1,1,2,C,D"))
    assert rep.tiers[0].symmetric
    assert any("fewer than 2 empty" in w for w in rep.warnings)


@st.composite
def layouts(draw):
    n_tiers = draw(st.integers(1, 3))
    tiers = []
    used = set()
    for t in range(1, n_tiers + 1):
        n_rows = draw(st.integers(1, 4))
        n_cols = draw(st.integers(1, 4))
        rows = []
        for r in range(n_rows):
            row = []
            for c in range(n_cols):
                if draw(st.booleans()):
                    ident = f"T{t}R{r}C{c}"
                    used.add(ident)
                    row.append(ident)
                else:
                    row.append(None)
            rows.append(tuple(row))
        tiers.append(layout.TierLayout(tier_index=t, rows=tuple(rows)))
    return layout.ScanLayout(scan_id=draw(st.sampled_from(["S1", "CT4"])),
                             tiers=tuple(tiers))


@given(layouts())
def test_serialize_parse_roundtrip(lay):
    again = layout.parse_layout(layout.serialize_layout(lay), scan_id=lay.scan_id)
    assert again == lay
    third = layout.parse_layout(layout.serialize_layout(again))
    assert third == lay


@given(layouts())
def test_asymmetry_depends_only_on_occupancy(lay):
    renamed = layout.ScanLayout(
        scan_id=lay.scan_id,
        tiers=tuple(
            layout.TierLayout(
                tier_index=t.tier_index,
                rows=tuple(
                    tuple(None if c is None else f"Z{t.tier_index}x{r}x{i}"
                          for i, c in enumerate(row))
                    for r, row in enumerate(t.rows)
                ),
            )
            for t in lay.tiers
        ),
    )
    a = layout.validate_asymmetry(lay)
    b = layout.validate_asymmetry(renamed)
    assert a.tiers == b.tiers
