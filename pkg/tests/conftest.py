import json

import pytest

from packscan import synth
from packscan.session import Session, SessionConfig


@pytest.fixture(scope="session")
def small_scan(tmp_path_factory):
    """One small synthetic scan shared by everything that only reads it."""
    root = tmp_path_factory.mktemp("small_scan")
    spec = synth.small_scene(seed=1)
    truth = synth.generate(spec, root)
    return root, truth, spec


def make_config(scan_root, truth, out_dir, **kw):
    cfg = SessionConfig(
        scan_dir=scan_root / "scan",
        layout_path=scan_root / "layout.csv",
        out_dir=out_dir,
        align=truth["alignment"],
        thresholds=truth["thresholds"],
        max_memory=2 * 1024**3,
        workers=1,
    )
    for key, value in kw.items():
        setattr(cfg, key, value)
    return cfg


@pytest.fixture()
def small_session(small_scan, tmp_path):
    root, truth, _spec = small_scan
    return Session(make_config(root, truth, tmp_path / "out"))


@pytest.fixture(scope="session")
def small_pipeline(small_scan):
    """Subsampled volume + derived segmentation inputs for the small scan."""
    from packscan import layout as layout_mod
    from packscan import segment, volume

    root, truth, spec = small_scan
    stack = volume.open_slice_stack(root / "scan")
    align = volume.AlignmentParams.from_json(truth["alignment"])
    sub = volume.subsample(stack, align)
    lay = layout_mod.parse_layout((root / "layout.csv").read_text())
    thr = segment.ThresholdSet.from_json(truth["thresholds"])
    detection = segment.detect_tier_boundaries(segment.z_profile(sub), lay.n_tiers)
    return {
        "stack": stack,
        "sub": sub,
        "truth": truth,
        "spec": spec,
        "layout": lay,
        "thresholds": thr,
        "detection": detection,
    }


def read_json(path):
    return json.loads(path.read_text())
