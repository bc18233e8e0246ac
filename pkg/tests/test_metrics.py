"""Model rendering and 2D/3D completeness, correctness, IoU."""

import numpy as np
import pytest

from rooffit import Plane, RasterGrid, ShapeLabel
from rooffit.metrics import (
    EvalReport,
    render_model,
    score_2d,
    score_3d,
)
from rooffit.model import BuildingModel, RoofSegment, assemble


def grid(values, res=1.0, origin=(0.0, 0.0)):
    return RasterGrid(origin[0], origin[1], res, np.asarray(values, dtype=float))


def flat_model(x0, y0, x1, y1, z, ground=0.0, dtm=None):
    seg = RoofSegment(
        Plane([0, 0, 1], z),
        np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], float),
        ShapeLabel.FLAT,
    )
    if dtm is None:
        dtm = grid(np.full((20, 20), ground))
    return assemble([seg], dtm), dtm


class TestRenderModel:
    def test_flat_roof_footprint_and_height(self):
        model, dtm = flat_model(5, 5, 15, 15, 7.0)
        mask, dsm = render_model(model, dtm, 1.0)
        assert int(mask.values.sum()) == 100
        assert np.all(dsm.values[mask.values == 1.0] == 7.0)
        assert np.all(dsm.values[mask.values == 0.0] == 0.0)

    def test_empty_model_mask_zero_dsm_terrain(self):
        dtm = grid(np.full((10, 10), 3.0))
        model = BuildingModel([], [], 3.0, [])
        mask, dsm = render_model(model, dtm, 1.0)
        assert not mask.values.any()
        assert np.all(dsm.values == 3.0)

    def test_stacked_roofs_take_higher(self):
        dtm = grid(np.zeros((20, 20)))
        low = RoofSegment(
            Plane([0, 0, 1], 4.0),
            np.array([[2, 2], [18, 2], [18, 18], [2, 18]], float),
            ShapeLabel.FLAT,
        )
        high = RoofSegment(
            Plane([0, 0, 1], 9.0),
            np.array([[8, 8], [12, 8], [12, 12], [8, 12]], float),
            ShapeLabel.FLAT,
        )
        model = assemble([low, high], dtm)
        mask, dsm = render_model(model, dtm, 1.0)
        assert dsm.value_at(10.0, 10.0) == 9.0
        assert dsm.value_at(4.0, 4.0) == 4.0


class TestScore2d:
    def test_identical_masks(self):
        m = grid([[1, 0], [0, 1]])
        assert score_2d(m, m) == (1.0, 1.0, 1.0)

    def test_disjoint_equal_area(self):
        a = grid([[1, 0], [1, 0]])
        b = grid([[0, 1], [0, 1]])
        assert score_2d(a, b) == (0.0, 0.0, 0.0)

    def test_pred_covers_half_of_truth(self):
        truth = grid([[1, 1, 1, 1]])
        pred = grid([[1, 1, 0, 0]])
        comp, corr, iou = score_2d(pred, truth)
        assert (comp, corr, iou) == (0.5, 1.0, 0.5)

    def test_empty_empty_all_ones(self):
        z = grid(np.zeros((3, 3)))
        assert score_2d(z, z) == (1.0, 1.0, 1.0)

    def test_geometry_mismatch_errors(self):
        with pytest.raises(ValueError):
            score_2d(grid(np.zeros((2, 2))), grid(np.zeros((3, 3))))

    def test_symmetry_and_iou_bound(self, rng):
        for _ in range(20):
            a = grid(rng.integers(0, 2, (8, 8)).astype(float))
            b = grid(rng.integers(0, 2, (8, 8)).astype(float))
            ca, ra, ia = score_2d(a, b)
            cb, rb, ib = score_2d(b, a)
            assert ca == pytest.approx(rb) and ra == pytest.approx(cb)
            assert ia == pytest.approx(ib)
            assert ia <= min(ca, ra) + 1e-12


class TestScore3d:
    def test_identical_within_tolerance(self, rng):
        mask = grid(rng.integers(0, 2, (6, 6)).astype(float))
        dsm = grid(rng.uniform(0, 5, (6, 6)))
        noisy = grid(dsm.values + rng.uniform(-0.5, 0.5, (6, 6)))
        assert score_3d(noisy, dsm, mask, mask, 1.0) == (1.0, 1.0, 1.0)

    def test_heights_off_by_twice_tolerance(self):
        mask = grid(np.ones((4, 4)))
        dsm = grid(np.full((4, 4), 5.0))
        off = grid(np.full((4, 4), 7.0))
        assert score_3d(off, dsm, mask, mask, 1.0) == (0.0, 0.0, 0.0)

    def test_brute_force_oracle(self, rng):
        # derived oracle: per-cell python loop over a known 80%-agreement scene
        n = 20
        pm = rng.integers(0, 2, (n, n)).astype(float)
        tm = rng.integers(0, 2, (n, n)).astype(float)
        pd = grid(rng.uniform(0, 4, (n, n)))
        td = grid(pd.values + np.where(rng.uniform(size=(n, n)) < 0.8, 0.0, 5.0))
        tol = 1.0
        tp = fp = fn = 0
        for i in range(n):
            for j in range(n):
                p, t = pm[i, j] == 1, tm[i, j] == 1
                close = abs(pd.values[i, j] - td.values[i, j]) <= tol
                if p and t and close:
                    tp += 1
                else:
                    if p:
                        fp += 1
                    if t:
                        fn += 1
        expect = (
            tp / (tp + fn) if tp + fn else 1.0,
            tp / (tp + fp) if tp + fp else 1.0,
            tp / (tp + fp + fn) if tp + fp + fn else 1.0,
        )
        got = score_3d(pd, td, grid(pm), grid(tm), tol)
        assert got == pytest.approx(expect, abs=1e-15)

    def test_3d_never_exceeds_2d(self, rng):
        pm = grid(rng.integers(0, 2, (10, 10)).astype(float))
        tm = grid(rng.integers(0, 2, (10, 10)).astype(float))
        pd = grid(rng.uniform(0, 3, (10, 10)))
        td = grid(rng.uniform(0, 3, (10, 10)))
        c3, r3, i3 = score_3d(pd, td, pm, tm, 0.5)
        c2, r2, i2 = score_2d(pm, tm)
        assert c3 <= c2 + 1e-12 and r3 <= r2 + 1e-12 and i3 <= i2 + 1e-12


class TestEvalReport:
    def test_round_trip(self):
        r = EvalReport(0.9, 0.8, 0.75, 0.85, 0.7, 0.65, 1.0)
        back = EvalReport.from_text(r.to_text())
        assert back == r

    def test_invariant_enforced(self):
        with pytest.raises(ValueError):
            EvalReport(0.5, 0.5, 0.9, 1, 1, 1, 1.0)
