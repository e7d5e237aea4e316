import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from packscan import errors
from packscan.memory import AllocationTracker
from packscan.store import SubvolumeStore


def rand_vol(rng, dims):
    return rng.integers(0, 65536, size=dims).astype(np.uint16)


def test_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    store = SubvolumeStore(tmp_path)
    vol = rand_vol(rng, (7, 5, 4))
    store.register("obj", vol.shape)
    store.append("obj", vol)
    store.finalize("obj")
    out = store.load("obj")
    np.testing.assert_array_equal(out, vol)


def test_slicewise_append_equals_oneshot(tmp_path):
    rng = np.random.default_rng(1)
    vol = rand_vol(rng, (12, 10, 8))
    a = SubvolumeStore(tmp_path / "a")
    a.register("x", vol.shape)
    a.append("x", vol)
    a.finalize("x")
    b = SubvolumeStore(tmp_path / "b")
    b.register("x", vol.shape)
    for k in range(vol.shape[0]):
        b.append("x", vol[k])
    b.finalize("x")
    assert (tmp_path / "a" / "x.raw").read_bytes() == (tmp_path / "b" / "x.raw").read_bytes()


def test_dims_mismatch(tmp_path):
    store = SubvolumeStore(tmp_path)
    store.register("x", (12, 12, 10))
    with pytest.raises(errors.DimsMismatch):
        store.append("x", np.zeros((1, 10, 10), dtype=np.uint16))


def test_overrun_depth(tmp_path):
    store = SubvolumeStore(tmp_path)
    store.register("x", (2, 4, 4))
    store.append("x", np.zeros((2, 4, 4), dtype=np.uint16))
    with pytest.raises(errors.DimsMismatch):
        store.append("x", np.zeros((1, 4, 4), dtype=np.uint16))


def test_non_contiguous_append(tmp_path):
    store = SubvolumeStore(tmp_path)
    store.register("x", (5, 4, 4))
    store.append("x", np.zeros((2, 4, 4), dtype=np.uint16), z_start=0)
    with pytest.raises(errors.NonContiguousAppend):
        store.append("x", np.zeros((1, 4, 4), dtype=np.uint16), z_start=3)


def test_not_registered(tmp_path):
    store = SubvolumeStore(tmp_path)
    with pytest.raises(errors.NotRegistered):
        store.append("ghost", np.zeros((1, 2, 2), dtype=np.uint16))


def test_not_finalized(tmp_path):
    store = SubvolumeStore(tmp_path)
    store.register("x", (2, 2, 2))
    store.append("x", np.zeros((1, 2, 2), dtype=np.uint16))
    with pytest.raises(errors.NotFinalized):
        store.load("x")
    with pytest.raises(errors.DimsMismatch):
        store.finalize("x")  # only half written


def test_memory_budget(tmp_path):
    store = SubvolumeStore(tmp_path)
    vol = np.zeros((64, 64, 64), dtype=np.uint16)  # 512 KiB
    store.register("x", vol.shape)
    store.append("x", vol)
    store.finalize("x")
    with pytest.raises(errors.ExceedsMemoryBudget):
        store.load("x", budget=256 * 1024, tracker=AllocationTracker())
    tracker = AllocationTracker()
    out = store.load("x", budget=1024 * 1024, tracker=tracker)
    assert tracker.current == out.nbytes


def test_reopen_resumes_state(tmp_path):
    rng = np.random.default_rng(2)
    vol = rand_vol(rng, (3, 4, 5))
    store = SubvolumeStore(tmp_path)
    store.register("x", vol.shape)
    store.append("x", vol)
    store.finalize("x")
    again = SubvolumeStore(tmp_path)
    assert again.ids() == ["x"]
    assert again.is_finalized("x")
    np.testing.assert_array_equal(again.load("x"), vol)


def test_register_truncates_partial(tmp_path):
    store = SubvolumeStore(tmp_path)
    store.register("x", (2, 3, 3))
    store.append("x", np.ones((1, 3, 3), dtype=np.uint16))
    store.register("x", (2, 3, 3))  # restart after an interrupted extraction
    full = np.full((2, 3, 3), 7, dtype=np.uint16)
    store.append("x", full)
    store.finalize("x")
    np.testing.assert_array_equal(store.load("x"), full)


@settings(max_examples=25, deadline=None)
@given(
    dims=st.tuples(st.integers(1, 6), st.integers(1, 5), st.integers(1, 5)),
    seed=st.integers(0, 2**16),
    split=st.integers(1, 4),
)
def test_roundtrip_property(tmp_path_factory, dims, seed, split):
    rng = np.random.default_rng(seed)
    vol = rand_vol(rng, dims)
    store = SubvolumeStore(tmp_path_factory.mktemp("store"))
    store.register("v", dims)
    z = 0
    while z < dims[0]:
        step = min(split, dims[0] - z)
        store.append("v", vol[z:z + step], z_start=z)
        z += step
    store.finalize("v")
    np.testing.assert_array_equal(store.load("v"), vol)
