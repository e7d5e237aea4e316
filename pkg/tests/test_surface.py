import numpy as np
import pytest

from packscan import errors, surface


def sphere_field(n=64, r=20.0, base=1000.0, gain=100.0):
    zz, yy, xx = np.mgrid[0:n, 0:n, 0:n].astype(np.float64)
    c = (n - 1) / 2.0
    d = np.sqrt((xx - c) ** 2 + (yy - c) ** 2 + (zz - c) ** 2)
    return base + gain * (r - d)


def canonical(mesh):
    order = np.lexsort((mesh.vertices[:, 2], mesh.vertices[:, 1], mesh.vertices[:, 0]))
    remap = np.empty(len(order), dtype=np.int64)
    remap[order] = np.arange(len(order))
    v = mesh.vertices[order]
    f = remap[mesh.faces]
    roll = np.argmin(f, axis=1)
    f = np.stack([f[np.arange(len(f)), (roll + i) % 3] for i in range(3)], axis=1)
    return v, f[np.lexsort((f[:, 2], f[:, 1], f[:, 0]))]


def test_sphere_is_watertight_genus_zero():
    mesh = surface.marching_cubes(sphere_field(), 1000.0)
    assert surface.is_watertight(mesh)
    assert surface.euler_characteristic(mesh) == 2
    area = surface.mesh_area(mesh)
    assert abs(area / (4 * np.pi * 20.0**2) - 1) < 0.05
    volume = surface.mesh_volume(mesh)
    assert abs(volume / (4 / 3 * np.pi * 20.0**3) - 1) < 0.05


def test_isolevel_monotonicity():
    field = sphere_field()
    volumes = [
        surface.mesh_volume(surface.marching_cubes(field, level))
        for level in (800.0, 1000.0, 1200.0)
    ]
    assert volumes[0] > volumes[1] > volumes[2] > 0


@pytest.mark.skipif(not surface.HAVE_COMPILED_KERNEL, reason="extension not built")
def test_kernels_emit_identical_meshes():
    cases = [
        (sphere_field(40, r=12.0), 1000.0),
        (np.random.default_rng(0).integers(0, 100, (20, 22, 24)).astype(np.uint16), 50),
    ]
    v1 = np.zeros((4, 4, 5))
    v1[1:3, 1:3, 1:3] = 10
    cases.append((v1, 5.0))
    for vol, iso in cases:
        mc = surface.marching_cubes(vol, iso, impl="c")
        mp = surface.marching_cubes(vol, iso, impl="py")
        vc, fc = canonical(mc)
        vp, fp = canonical(mp)
        np.testing.assert_array_equal(vc, vp)
        np.testing.assert_array_equal(fc, fp)


def test_single_interior_voxel_closes():
    vol = np.zeros((5, 5, 5))
    vol[2, 2, 2] = 10.0
    mesh = surface.marching_cubes(vol, 5.0)
    assert mesh.n_faces == 8
    assert surface.is_watertight(mesh)
    assert surface.euler_characteristic(mesh) == 2


def test_clipped_object_closes_against_border():
    vol = np.full((6, 6, 6), 100.0)  # object fills the box entirely
    mesh = surface.marching_cubes(vol, 50.0)
    assert surface.is_watertight(mesh)
    assert surface.euler_characteristic(mesh) == 2


def test_empty_mesh_below_isolevel():
    with pytest.raises(errors.EmptyMesh):
        surface.marching_cubes(np.full((5, 5, 5), 10.0), 50.0)


def test_exact_isolevel_hits_still_manifold():
    rng = np.random.default_rng(1)
    vol = rng.integers(0, 8, (16, 16, 16)).astype(np.uint16) * 10
    mesh = surface.marching_cubes(vol, 40)  # many voxels exactly at the level
    assert mesh.n_faces > 0
    faces = mesh.faces
    assert (faces[:, 0] != faces[:, 1]).all()
    assert (faces[:, 1] != faces[:, 2]).all()
    v = mesh.vertices[faces]
    areas = np.linalg.norm(np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]), axis=1)
    assert (areas > 0).all()


def test_clean_keeps_watertight_sphere():
    mesh = surface.marching_cubes(sphere_field(), 1000.0)
    result = surface.clean_mesh(mesh)
    assert result.watertight
    assert result.dropped_faces == 0
    assert result.mesh.n_faces == mesh.n_faces


def test_clean_drops_open_patch():
    mesh = surface.marching_cubes(sphere_field(48, r=15.0), 1000.0)
    patch_v = np.array([[90.0, 90, 90], [91, 90, 90], [90, 91, 90], [91, 91, 90]])
    patch_f = np.array([[0, 1, 2], [1, 3, 2]]) + mesh.n_vertices
    combined = surface.Mesh(
        vertices=np.vstack([mesh.vertices, patch_v]),
        faces=np.vstack([mesh.faces, patch_f]),
    )
    result = surface.clean_mesh(combined)
    assert result.watertight
    assert result.n_components == 2
    assert result.mesh.n_faces == mesh.n_faces
    assert result.mesh.vertices.max() < 50


def test_clean_two_spheres_keeps_bigger():
    n = 48
    zz, yy, xx = np.mgrid[0:n, 0:n, 0:n].astype(np.float64)
    big = 15.0 - np.sqrt((xx - 15) ** 2 + (yy - 24) ** 2 + (zz - 24) ** 2)
    small = 6.0 - np.sqrt((xx - 39) ** 2 + (yy - 24) ** 2 + (zz - 24) ** 2)
    field = 1000.0 + 100.0 * np.maximum(big, small)
    mesh = surface.marching_cubes(field, 1000.0)
    result = surface.clean_mesh(mesh)
    assert result.n_components == 2
    assert result.watertight
    spread = result.mesh.vertices[:, 0].max() - result.mesh.vertices[:, 0].min()
    assert spread > 20  # the radius-15 sphere, not the radius-6 one


def test_clean_flags_only_open_surfaces():
    verts = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]])
    faces = np.array([[0, 1, 2], [1, 3, 2]])
    result = surface.clean_mesh(surface.Mesh(vertices=verts, faces=faces))
    assert not result.watertight
    assert result.mesh.n_faces == 2


def test_clean_empty_mesh():
    with pytest.raises(errors.EmptyAfterClean):
        surface.clean_mesh(surface.Mesh(
            vertices=np.empty((0, 3)), faces=np.empty((0, 3), dtype=np.int64)
        ))


def test_ply_roundtrip_bit_exact(tmp_path):
    mesh = surface.marching_cubes(sphere_field(32, r=9.0), 1000.0)
    verts_mm = (mesh.vertices * 0.05).astype(np.float32)
    path = tmp_path / "m.ply"
    surface.write_ply(path, verts_mm, mesh.faces.astype(np.int32))
    rv, rf = surface.read_ply(path)
    np.testing.assert_array_equal(rv, verts_mm)
    np.testing.assert_array_equal(rf, mesh.faces)


def test_scale_and_write_naming(tmp_path):
    mesh = surface.Mesh(
        vertices=np.array([[10.0, 0, 0], [0, 10, 0], [0, 0, 10]]),
        faces=np.array([[0, 1, 2]]),
    )
    job = surface.SurfaceJob(
        identifier="CT4_B07", isolevel=21000, pitch_um=50.0, out_dir=tmp_path
    )
    path = surface.scale_and_write(mesh, job)
    assert path.name == "CT4_B07_iso21000.ply"
    rv, _ = surface.read_ply(path)
    np.testing.assert_allclose(rv[0], [0.5, 0.0, 0.0])  # 10 voxels at 50 um = 0.5 mm


def test_ellipsoid_bounds_match_truth(tmp_path):
    n = 60
    zz, yy, xx = np.mgrid[0:n, 0:n, 0:n].astype(np.float64)
    c = (n - 1) / 2.0
    semi = (20.0, 14.0, 9.0)  # voxels
    q = ((xx - c) / semi[0]) ** 2 + ((yy - c) / semi[1]) ** 2 + ((zz - c) / semi[2]) ** 2
    field = 1000.0 + 500.0 * (1.0 - q)
    mesh = surface.marching_cubes(field, 1000.0)
    pitch = 50.0
    job = surface.SurfaceJob("ellip", 1000, pitch_um=pitch, out_dir=tmp_path)
    path = surface.scale_and_write(surface.clean_mesh(mesh).mesh, job)
    rv, _ = surface.read_ply(path)
    mm = pitch / 1000.0
    for axis, s in enumerate(semi):
        lo, hi = rv[:, axis].min(), rv[:, axis].max()
        assert abs(hi - (c + s) * mm) <= 2 * mm
        assert abs(lo - (c - s) * mm) <= 2 * mm
