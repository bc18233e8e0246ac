"""Roof bending synthesis and training-set generation."""

import numpy as np
import pytest

from rooffit import ShapeLabel
from rooffit.synth import (
    BendSpec,
    DiskRegion,
    RectRegion,
    apply_height_field,
    bend,
    compose_complex_roof,
    crop_flat_region,
    generate_training_set,
    read_manifest,
    surface_height,
)

from conftest import make_cloud


def flat_roof(n, rng, z=7.0, extent=20.0, sigma=0.0):
    xy = rng.uniform(0, extent, (n, 2))
    zs = np.full(n, z) + (rng.normal(0, sigma, n) if sigma else 0.0)
    labels = np.zeros(n, dtype=np.int32)
    return make_cloud(np.column_stack([xy, zs]), labels=labels)


def cyl_spec(radius=12.0, hw=4.0):
    region = RectRegion(np.array([10.0, 10.0]), np.array([1.0, 0.0]), 6.0, hw)
    return BendSpec(ShapeLabel.CYLINDRICAL, region, radius)


def sph_spec(radius=10.0, disk=5.0):
    return BendSpec(ShapeLabel.SPHERICAL, DiskRegion(np.array([10.0, 10.0]), disk), radius)


class TestCropFlatRegion:
    def test_exact_plane_h0(self, rng):
        cloud = flat_roof(2000, rng, z=7.0)
        _, h0 = crop_flat_region(cloud, cyl_spec())
        assert h0 == pytest.approx(7.0, abs=1e-12)

    def test_noisy_plane_h0_statistical(self, rng):
        sigma = 0.3
        cloud = flat_roof(4000, rng, z=7.0, sigma=sigma)
        cropped, h0 = crop_flat_region(cloud, cyl_spec())
        assert abs(h0 - 7.0) < 3 * sigma / np.sqrt(cropped.n)

    def test_sparse_region_errors(self, rng):
        cloud = flat_roof(60, rng)  # ~tens of points land inside the crop
        spec = BendSpec(
            ShapeLabel.SPHERICAL, DiskRegion(np.array([100.0, 100.0]), 3.0), 5.0
        )
        with pytest.raises(ValueError, match="50"):
            crop_flat_region(cloud, spec)


class TestBend:
    def test_constant_field_is_identity(self, rng):
        cloud = flat_roof(500, rng, z=7.0, sigma=0.2)
        out = apply_height_field(cloud, 7.0, np.full(500, 7.0))
        assert np.array_equal(out.xyz, cloud.xyz)

    def test_exact_plane_lands_on_cylinder(self, rng):
        spec = cyl_spec(radius=12.0, hw=4.0)
        cloud = flat_roof(3000, rng, z=7.0)
        cropped, h0 = crop_flat_region(cloud, spec)
        bent = bend(cropped, h0, spec)
        # all points exactly on the synthesized cylinder surface
        g = surface_height(spec, bent.xyz[:, :2], h0)
        assert np.allclose(bent.xyz[:, 2], g, atol=1e-12)
        assert np.all(bent.labels == int(ShapeLabel.CYLINDRICAL))

    def test_residual_preservation_exact(self, rng):
        spec = sph_spec()
        cloud = flat_roof(3000, rng, z=7.0, sigma=0.4)
        cropped, h0 = crop_flat_region(cloud, spec)
        bent = bend(cropped, h0, spec)
        g = surface_height(spec, cropped.xyz[:, :2], h0)
        before = cropped.xyz[:, 2] - h0
        after = bent.xyz[:, 2] - g
        assert np.abs(after - before).max() < 1e-9

    def test_xy_and_color_untouched(self, rng):
        spec = cyl_spec()
        cloud = flat_roof(2000, rng, sigma=0.3)
        cropped, h0 = crop_flat_region(cloud, spec)
        bent = bend(cropped, h0, spec)
        assert np.array_equal(bent.xyz[:, :2], cropped.xyz[:, :2])
        assert np.array_equal(bent.rgb, cropped.rgb)

    def test_surface_undefined_errors(self, rng):
        spec = cyl_spec(radius=4.0, hw=4.0)
        cloud = flat_roof(3000, rng)
        cropped, h0 = crop_flat_region(cloud, spec)
        outside = make_cloud([[10.0, 30.0, 7.0]])
        with pytest.raises(ValueError):
            surface_height(spec, outside.xyz[:, :2], h0)

    def test_radius_invariant_enforced(self):
        with pytest.raises(ValueError):
            cyl_spec(radius=3.0, hw=4.0)
        with pytest.raises(ValueError):
            sph_spec(radius=4.0, disk=5.0)


class TestCompose:
    def test_single_part_identity(self, rng):
        part = flat_roof(300, rng)
        out = compose_complex_roof([part], rng_seed=3)
        assert np.array_equal(out.xyz, part.xyz)
        assert np.all(out.labels == 0)

    def test_label_histogram_is_sum(self, rng):
        flat = flat_roof(300, rng)
        spec = cyl_spec()
        cropped, h0 = crop_flat_region(flat_roof(3000, rng), spec)
        cyl = bend(cropped, h0, spec)
        out = compose_complex_roof([flat, cyl], rng_seed=9)
        hist = np.bincount(out.labels, minlength=4)
        assert hist[0] == flat.n
        assert hist[2] == cyl.n

    def test_same_seed_identical(self, rng):
        parts = [flat_roof(200, rng), flat_roof(150, rng, z=3.0)]
        a = compose_complex_roof(parts, rng_seed=42)
        b = compose_complex_roof(parts, rng_seed=42)
        assert np.array_equal(a.xyz, b.xyz)

    def test_part_count_bounds(self, rng):
        with pytest.raises(ValueError):
            compose_complex_roof([], rng_seed=0)
        parts = [flat_roof(100, rng)] * 4
        with pytest.raises(ValueError):
            compose_complex_roof(parts, rng_seed=0)


class TestGenerateTrainingSet:
    def make_sources(self, rng):
        flats = [flat_roof(4000, rng, z=z, sigma=0.2) for z in (5.0, 9.0)]
        sloped = []
        for tilt in (0.3, 0.5):
            c = flat_roof(4000, rng, z=6.0, sigma=0.2)
            xyz = c.xyz.copy()
            xyz[:, 2] += tilt * xyz[:, 0]
            sloped.append(make_cloud(xyz, labels=np.ones(c.n, dtype=np.int32)))
        return flats, sloped

    def test_counts_and_determinism(self, tmp_path, rng):
        flats, sloped = self.make_sources(rng)
        m1 = generate_training_set(flats, sloped, 2, tmp_path / "a", rng_seed=7)
        m2 = generate_training_set(flats, sloped, 2, tmp_path / "b", rng_seed=7)
        assert m1.read_text() == m2.read_text()
        entries = read_manifest(m1)
        assert len(entries) == 8  # 2 per class, 4 classes
        # every class is covered across the set
        totals = {k: 0 for k in ("flat", "sloped", "cylindrical", "spherical")}
        for _, counts in entries:
            for k, v in counts.items():
                totals[k] += v
        assert all(v > 0 for v in totals.values())

    def test_single_sample_per_class(self, tmp_path, rng):
        flats, sloped = self.make_sources(rng)
        manifest = generate_training_set(
            flats, sloped, 1, tmp_path / "c", rng_seed=1, compose_probability=0.0
        )
        entries = read_manifest(manifest)
        assert len(entries) == 4
        for path, _ in entries:
            assert path.exists()

    def test_files_round_trip_labeled(self, tmp_path, rng):
        from rooffit import read_point_cloud

        flats, sloped = self.make_sources(rng)
        manifest = generate_training_set(flats, sloped, 1, tmp_path / "d", rng_seed=2)
        path, counts = read_manifest(manifest)[0]
        cloud = read_point_cloud(path)
        assert cloud.labels is not None
        assert counts["flat"] == int((cloud.labels == 0).sum())
