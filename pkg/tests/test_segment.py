import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from packscan import errors, segment, synth
from packscan.imaging import rotate
from packscan.layout import parse_layout
from packscan.volume import AlignmentParams


def test_threshold_ordering_enforced():
    segment.ThresholdSet(1.0, 2.0, 2.0)
    segment.ThresholdSet(1.0, 2.0, 3.0, 9.0)
    with pytest.raises(errors.SegmentationError):
        segment.ThresholdSet(2.0, 1.0, 3.0)
    with pytest.raises(errors.SegmentationError):
        segment.ThresholdSet(1.0, 2.0, 1.5)


def test_threshold_json_roundtrip():
    t = segment.ThresholdSet(8500.0, 24000.0, 24000.0)
    assert segment.ThresholdSet.from_json(t.to_json()) == t
    assert math.isinf(t.b_object)


# --- histogram ---

def test_histogram_constant_volume():
    h = segment.histogram(np.full((4, 5, 5), 42.0))
    assert (h.counts > 0).sum() == 1
    assert h.counts.sum() == 100


def test_histogram_conservation(small_pipeline):
    sub = small_pipeline["sub"]
    h = segment.histogram(sub)
    assert len(h.counts) == 500
    assert len(h.edges) == 501
    assert h.counts.sum() == sub.data.size
    assert h.edges[0] == sub.data.min() and h.edges[-1] == sub.data.max()


def test_histogram_three_modes(small_pipeline):
    spec = small_pipeline["spec"]
    h = segment.histogram(small_pipeline["sub"])
    centers = (h.edges[:-1] + h.edges[1:]) / 2

    def mode_near(mean, sigma):
        sel = np.abs(centers - (mean + spec.offset)) <= sigma
        return h.counts[sel].max()

    air = mode_near(*spec.air)
    divider = mode_near(*spec.divider)
    objects = mode_near(*spec.objects)
    assert air > divider > objects > 0


# --- z profile and tier boundaries ---

def test_z_profile_constant():
    prof = segment.z_profile(np.full((6, 4, 4), 3.5))
    np.testing.assert_allclose(prof, 3.5)


def test_z_profile_bright_slice():
    vol = np.zeros((9, 4, 4))
    vol[4] = 100.0
    assert np.argmax(segment.z_profile(vol)) == 4


def synthetic_profile(depth, gap_centers, gap_depth=12000.0, base=14000.0,
                      air=2000.0, margin=4, seed=0):
    """Tier-like z-profile: high inside the package, dips at gaps, air outside."""
    z = np.arange(depth, dtype=np.float64)
    prof = np.full(depth, air)
    prof[margin:depth - margin] = base
    for c in gap_centers:
        prof -= gap_depth * np.exp(-0.5 * ((z - c) / 6.0) ** 2)
    prof[:margin] = air
    prof[depth - margin:] = air
    rng = np.random.default_rng(seed)
    return prof + rng.normal(0, 30.0, depth)


def test_detect_single_tier():
    det = segment.detect_tier_boundaries(synthetic_profile(40, []), n_tiers=1)
    assert det.cuts == ()
    assert det.slabs == (segment.TierSlab(0, 40),)


def test_detect_cuts_near_truth(small_pipeline):
    det = small_pipeline["detection"]
    truth = small_pipeline["truth"]
    gaps = [t["gap_above_center"] / 10 for t in truth["tiers"] if t["gap_above_center"]]
    assert len(det.cuts) == len(gaps)
    for cut, center in zip(det.cuts, gaps):
        assert abs(cut - center) <= 2
    for cand in det.candidates[: len(gaps)]:
        assert cand.width >= 10


def test_detect_insufficient_peaks():
    prof = synthetic_profile(60, [30.0])
    with pytest.raises(errors.InsufficientPeaks) as err:
        segment.detect_tier_boundaries(prof, n_tiers=3)
    assert (err.value.found, err.value.needed) == (1, 2)


def test_detect_min_width_rejects_narrow_dips():
    prof = synthetic_profile(80, [], seed=1)
    prof[40] -= 9000.0  # single-slice dip, far narrower than 10
    with pytest.raises(errors.InsufficientPeaks):
        segment.detect_tier_boundaries(prof, n_tiers=2, min_width=10)
    det = segment.detect_tier_boundaries(prof, n_tiers=2, min_width=1)
    assert det.cuts == (40,)


def test_detect_override_replaces_detection():
    prof = synthetic_profile(60, [30.0])
    det = segment.detect_tier_boundaries(prof, n_tiers=3, overrides=[20, 40])
    assert det.ratified
    assert det.cuts == (20, 40)
    assert det.slabs == (
        segment.TierSlab(0, 20), segment.TierSlab(20, 40), segment.TierSlab(40, 60),
    )
    with pytest.raises(errors.SegmentationError):
        segment.detect_tier_boundaries(prof, n_tiers=3, overrides=[20])


def test_slabs_partition_depth(small_pipeline):
    det = small_pipeline["detection"]
    depth = small_pipeline["sub"].depth
    assert det.slabs[0].z_start == 0
    assert det.slabs[-1].z_stop == depth
    for a, b in zip(det.slabs, det.slabs[1:]):
        assert a.z_stop == b.z_start


# --- divider image ---

def test_divider_counts_formula():
    thr = segment.ThresholdSet(10.0, 20.0, 30.0)
    column = np.array([12.0, 15.0, 18.0, 19.0, 11.0, 35.0, 40.0, 5.0, 25.0])
    vol = column.reshape(-1, 1, 1)
    div = segment.divider_image(vol, thr)
    assert div.score[0, 0] == 5 - 2  # 5 in divider range, 2 in object range


def test_divider_all_air_degenerate():
    thr = segment.ThresholdSet(10.0, 20.0, 30.0)
    with pytest.raises(errors.DegenerateMask):
        segment.divider_image(np.zeros((5, 4, 4)), thr)


def test_divider_mask_rule():
    thr = segment.ThresholdSet(10.0, 20.0, 30.0)
    vol = np.zeros((8, 1, 3))
    vol[:, 0, 0] = 15.0  # 8 divider hits
    vol[:5, 0, 1] = 15.0  # 5 hits: 5 <= 0.75*8 -> zeroed
    vol[:7, 0, 2] = 15.0  # 7 hits: 7 > 6 -> kept
    div = segment.divider_image(vol, thr)
    assert div.score.tolist() == [[8, 5, 7]]
    assert div.mask.tolist() == [[8, 0, 7]]


@settings(max_examples=30, deadline=None)
@given(
    seed=st.integers(0, 2**16),
    widen=st.floats(1.0, 200.0),
)
def test_divider_monotone_in_object_range(seed, widen):
    rng = np.random.default_rng(seed)
    vol = rng.uniform(0, 100, size=(6, 5, 5))
    base = segment.ThresholdSet(10.0, 30.0, 60.0, 80.0)
    wider = segment.ThresholdSet(10.0, 30.0, 60.0 - min(25.0, widen / 10), 80.0 + widen)
    thr_a = ((vol >= base.a_divider) & (vol <= base.b_divider)).sum(0) - (
        (vol >= base.a_object) & (vol <= base.b_object)
    ).sum(0)
    try:
        i_base = segment.divider_image(vol, base).score
    except errors.DegenerateMask:
        i_base = thr_a
    try:
        i_wide = segment.divider_image(vol, wider).score
    except errors.DegenerateMask:
        return
    assert (i_wide <= i_base).all()


def _tier_line_truth(truth, tier_index, sub):
    """Analytic core/interior masks of the tier's divider lines, subsampled grid."""
    tier = truth["tiers"][tier_index - 1]
    w, h, _ = truth["dims"]
    ctr = ((w - 1) / 2.0, (h - 1) / 2.0)
    align = truth["alignment"]
    sx, sy = sub.xy_scale
    jj, ii = np.meshgrid(np.arange(225), np.arange(225), indexing="xy")
    x_al = (jj + 0.5) * sx - 0.5 + align["col_range"][0]
    y_al = (ii + 0.5) * sy - 0.5 + align["row_range"][0]
    th = math.radians(-tier["twist_deg"])
    c, s = math.cos(th), math.sin(th)
    dx = x_al - ctr[0]
    dy = y_al - ctr[1]
    xt = c * dx + s * dy + ctr[0]
    yt = -s * dx + c * dy + ctr[1]
    dist_x = np.min(np.abs(xt[None] - np.array(tier["col_line_x"])[:, None, None]), axis=0)
    dist_y = np.min(np.abs(yt[None] - np.array(tier["row_line_y"])[:, None, None]), axis=0)
    dist = np.minimum(dist_x, dist_y)
    line_px = truth["package"]["line_px"]
    lx = np.array(tier["col_line_x"])
    ly = np.array(tier["row_line_y"])
    in_content = (
        (xt >= lx[0] - 1) & (xt <= lx[-1] + 1) & (yt >= ly[0] - 1) & (yt <= ly[-1] + 1)
    )
    core = in_content & (dist <= line_px / 2 - max(sx, sy) / 2 - 0.5)
    interior = in_content & (dist >= line_px / 2 + 2 * max(sx, sy))
    return core, interior


def test_divider_mask_covers_truth_lines(small_pipeline):
    sub = small_pipeline["sub"]
    truth = small_pipeline["truth"]
    thr = small_pipeline["thresholds"]
    det = small_pipeline["detection"]
    for tier_index, slab in enumerate(det.slabs, start=1):
        div = segment.divider_image(sub.data[slab.z_start:slab.z_stop], thr)
        support = div.mask > 0
        core, interior = _tier_line_truth(truth, tier_index, sub)
        assert core.sum() > 100
        coverage = support[core].mean()
        leakage = support[interior].mean()
        assert coverage >= 0.90
        assert leakage <= 0.05


# --- rotation ---

def test_objective_peaks_at_zero_for_aligned_grid():
    mask = synth.grid_mask(0.0)
    j0 = segment.rotation_objective(mask, 0.0)
    for a in np.arange(1.0, 10.5, 1.0):
        assert j0 > segment.rotation_objective(mask, a)
        assert j0 > segment.rotation_objective(mask, -a)


def test_objective_invariant_under_180_rotation():
    mask = synth.grid_mask(3.0)
    flipped = mask[::-1, ::-1]
    for a in (-7.0, -1.5, 0.0, 2.0, 8.0):
        assert segment.rotation_objective(mask, a) == pytest.approx(
            segment.rotation_objective(flipped, a), rel=1e-6
        )


@given(scale=st.floats(1e-3, 1e3))
@settings(max_examples=20, deadline=None)
def test_objective_scale_invariant(scale):
    mask = synth.grid_mask(-1.9)
    a = 1.9
    assert segment.rotation_objective(mask * scale, a) == pytest.approx(
        segment.rotation_objective(mask, a), rel=1e-9
    )


def test_flat_objective_on_constant_mask():
    with pytest.raises(errors.FlatObjective):
        segment.auto_rotate(np.full((225, 225), 5.0))
    with pytest.raises(errors.FlatObjective):
        segment.auto_rotate(np.zeros((225, 225)))


@pytest.mark.parametrize("theta", [-8.0, -4.0, 0.0, 2.5, 7.0])
def test_auto_rotate_recovers_twist(theta):
    est = segment.auto_rotate(synth.grid_mask(theta))
    assert abs(est - (-theta)) <= 0.2


def test_auto_rotate_aligned_is_near_zero():
    assert abs(segment.auto_rotate(synth.grid_mask(0.0))) <= 0.2


# --- grid segmentation ---

def make_projection_mask(row_cuts, col_cuts, size=225, value=30.0):
    img = np.zeros((size, size))
    for y in row_cuts:
        img[int(y) - 1:int(y) + 2, 10:size - 10] = value
    for x in col_cuts:
        img[10:size - 10, int(x) - 1:int(x) + 2] = value
    return img


def test_grid_segment_walls_mode():
    rows = [12, 80, 148, 212]
    cols = [12, 64, 116, 168, 212]
    cuts = segment.grid_segment(make_projection_mask(rows, cols), 3, 4)
    assert cuts.row_mode == "walls" and cuts.col_mode == "walls"
    assert len(cuts.row_cuts) == 4 and len(cuts.col_cuts) == 5
    np.testing.assert_allclose(cuts.row_cuts, rows, atol=1.0)
    np.testing.assert_allclose(cuts.col_cuts, cols, atol=1.0)


def test_grid_segment_interior_fallback():
    rows = [80, 148]  # no wall peaks
    cols = [64, 116, 168]
    cuts = segment.grid_segment(make_projection_mask(rows, cols), 3, 4)
    assert cuts.row_mode == "interior" and cuts.col_mode == "interior"
    assert cuts.row_cuts[0] == 0.0 and cuts.row_cuts[-1] == 225.0
    np.testing.assert_allclose(cuts.row_cuts[1:-1], rows, atol=1.0)


def test_grid_segment_single_cell_walls():
    cuts = segment.grid_segment(make_projection_mask([20, 200], [30, 190]), 1, 1)
    assert len(cuts.row_cuts) == 2 and len(cuts.col_cuts) == 2


def test_grid_segment_peak_count_mismatch():
    img = make_projection_mask([80, 148], [64, 116])  # 2 col peaks, need 5 or 3
    with pytest.raises(errors.PeakCountMismatch) as err:
        segment.grid_segment(img, 3, 4)
    assert err.value.axis == "col"
    assert (err.value.found, err.value.expected) == (2, 5)


def test_grid_segment_override():
    cuts = segment.grid_segment(
        None, 2, 2,
        overrides={"rotation_deg": 1.5, "row_cuts": [5, 100, 200],
                   "col_cuts": [6, 110, 210]},
    )
    assert cuts.ratified
    assert cuts.rotation_deg == 1.5
    assert cuts.row_cuts == (5.0, 100.0, 200.0)


# --- boxes ---

def identity_align():
    return AlignmentParams(0.0, (0, 10_000), (0, 10_000))


def test_boxes_arithmetic_example():
    lay = parse_layout("S1,1,1,A")
    cuts = segment.GridCuts(row_cuts=(3.0, 5.0), col_cuts=(2.0, 4.0), rotation_deg=0.0)
    align = AlignmentParams(0.0, (0, 4000), (0, 4000))
    boxes = segment.boxes_to_fullres(
        cuts, segment.TierSlab(10, 20), lay.tier(1), align,
        xy_scale=(10.0, 10.0), z_factor=10,
        scan_shape=(4000, 4000), scan_count=4000, pad=0,
    )
    box = boxes[0]
    assert (box.x0, box.x1) == (20, 40)
    assert (box.y0, box.y1) == (30, 50)
    assert (box.z0, box.z1) == (100, 200)


def test_boxes_skip_empty_cells():
    lay = parse_layout("S1,1,1,A,,B\nS1,1,2,,C,")
    cuts = segment.GridCuts(
        row_cuts=(0.0, 10.0, 20.0), col_cuts=(0.0, 10.0, 20.0, 30.0),
        rotation_deg=0.0,
    )
    boxes = segment.boxes_to_fullres(
        cuts, segment.TierSlab(0, 10), lay.tier(1), identity_align(),
        xy_scale=(2.0, 2.0), z_factor=10,
        scan_shape=(200, 200), scan_count=100, pad=1,
    )
    assert [b.identifier for b in boxes] == ["A", "B", "C"]
    assert len(boxes) == lay.occupied_count()


def test_boxes_pad_and_clamp():
    lay = parse_layout("S1,1,1,A")
    cuts = segment.GridCuts(row_cuts=(0.0, 5.0), col_cuts=(0.0, 5.0), rotation_deg=0.0)
    boxes = segment.boxes_to_fullres(
        cuts, segment.TierSlab(0, 3), lay.tier(1), identity_align(),
        xy_scale=(4.0, 4.0), z_factor=10,
        scan_shape=(18, 22), scan_count=25, pad=2,
    )
    box = boxes[0]
    assert (box.x0, box.y0, box.z0) == (0, 0, 0)  # clamped at origin
    assert (box.x1, box.y1, box.z1) == (22, 18, 25)  # clamped at scan bounds


def test_boxes_rotation_envelope_grows():
    lay = parse_layout("S1,1,1,A")
    base = segment.GridCuts(row_cuts=(100.0, 120.0), col_cuts=(100.0, 140.0),
                            rotation_deg=0.0)
    tilted = segment.GridCuts(row_cuts=(100.0, 120.0), col_cuts=(100.0, 140.0),
                              rotation_deg=5.0)
    kw = dict(
        slab=segment.TierSlab(0, 10), tier=lay.tier(1), align=identity_align(),
        xy_scale=(1.0, 1.0), z_factor=10, scan_shape=(500, 500), scan_count=100,
        pad=0,
    )
    b0 = segment.boxes_to_fullres(base, **kw)[0]
    b5 = segment.boxes_to_fullres(tilted, **kw)[0]
    assert (b5.x1 - b5.x0) > (b0.x1 - b0.x0)
    assert (b5.y1 - b5.y0) > (b0.y1 - b0.y0)


def test_boxes_degenerate_after_clamp():
    lay = parse_layout("S1,1,1,A")
    cuts = segment.GridCuts(row_cuts=(300.0, 310.0), col_cuts=(300.0, 310.0),
                            rotation_deg=0.0)
    with pytest.raises(errors.OutOfBoundsAfterClamp):
        segment.boxes_to_fullres(
            cuts, segment.TierSlab(0, 5), lay.tier(1), identity_align(),
            xy_scale=(1.0, 1.0), z_factor=10,
            scan_shape=(100, 100), scan_count=50, pad=0,
        )


def run_phases(sub_data, thr, lay, align, xy_scale, z_factor, shape, count, min_width=10):
    """Phases 2-5 on an in-memory subsampled volume; returns all boxes."""
    detection = segment.detect_tier_boundaries(
        segment.z_profile(sub_data), n_tiers=lay.n_tiers, min_width=min_width
    )
    boxes = []
    for tier_layout, slab in zip(lay.tiers, detection.slabs):
        div = segment.divider_image(sub_data[slab.z_start:slab.z_stop], thr)
        angle = segment.auto_rotate(div.mask)
        cuts = segment.grid_segment(
            rotate(div.mask.astype(np.float64), angle),
            tier_layout.n_rows, tier_layout.n_cols, rotation_deg=angle,
        )
        boxes.extend(segment.boxes_to_fullres(
            cuts, slab, tier_layout, align, xy_scale, z_factor,
            scan_shape=shape, scan_count=count, pad=3,
        ))
    return boxes


def test_shift_invariance_small_scene(small_pipeline):
    sub = small_pipeline["sub"]
    thr = small_pipeline["thresholds"]
    lay = small_pipeline["layout"]
    reference = None
    for c in (0.0, 11000.0, 21000.0):
        boxes = run_phases(
            sub.data + np.float32(c), thr.shifted(c), lay, sub.params,
            sub.xy_scale, sub.z_factor, sub.source_shape, sub.source_count,
        )
        snapshot = [(b.identifier, b.x0, b.x1, b.y0, b.y1, b.z0, b.z1) for b in boxes]
        if reference is None:
            reference = snapshot
        else:
            assert snapshot == reference


def test_boxes_contain_truth(small_pipeline):
    sub = small_pipeline["sub"]
    boxes = run_phases(
        sub.data, small_pipeline["thresholds"], small_pipeline["layout"],
        sub.params, sub.xy_scale, sub.z_factor, sub.source_shape, sub.source_count,
    )
    report = synth.score_boxes(small_pipeline["truth"], boxes)
    assert report.recall == 1.0
    assert len(boxes) == len(small_pipeline["truth"]["objects"])
