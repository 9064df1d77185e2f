import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from bayesbin import metrics
from bayesbin.imagecore import BinaryImage, load_image

from oracles import (
    counts,
    naive_contour_distance,
    naive_drd,
    naive_fmeasure,
    naive_mpm,
    naive_nrm,
    naive_nubn,
    naive_psnr,
    naive_weights,
)

DATA = Path(__file__).parent / "data"


def square(n=32, lo=10, hi=20):
    gt = np.zeros((n, n), bool)
    gt[lo:hi + 1, lo:hi + 1] = True
    return gt


def random_pair(seed, shape=(64, 64), p=0.3, flip=0.05):
    rng = np.random.default_rng(seed)
    gt = rng.random(shape) < p
    out = gt ^ (rng.random(shape) < flip)
    return out, gt


class TestFMeasure:
    def test_example(self):
        c = metrics.ConfusionCounts(tp=50, fp=50, tn=0, fn=0)
        assert metrics.fmeasure(c) == pytest.approx(66.67, abs=0.005)

    def test_perfect(self):
        gt = square()
        assert metrics.fmeasure(metrics.confusion(gt, gt)) == 100.0

    def test_empty_output(self):
        gt = square()
        assert metrics.fmeasure(metrics.confusion(np.zeros_like(gt), gt)) == 0.0

    def test_empty_truth(self):
        z = np.zeros((4, 4), bool)
        with pytest.raises(metrics.MetricError, match="empty ground truth"):
            metrics.fmeasure(metrics.confusion(z, z))


class TestPsnr:
    def test_one_wrong_pixel(self):
        gt = np.zeros((100, 100), bool)
        out = gt.copy()
        out[5, 5] = True
        assert metrics.psnr(out, gt) == pytest.approx(40.0, abs=1e-12)

    def test_identical(self):
        assert metrics.psnr(square(), square()) == math.inf

    def test_all_wrong(self):
        gt = square()
        assert metrics.psnr(~gt, gt) == 0.0


class TestNrm:
    def test_example(self):
        c = metrics.ConfusionCounts(tp=80, fp=10, tn=90, fn=20)
        # (20/100 + 10/100) / 2
        assert metrics.nrm(c) == pytest.approx(0.15)

    def test_undefined(self):
        with pytest.raises(metrics.MetricError, match="foreground"):
            metrics.nrm(metrics.ConfusionCounts(0, 3, 5, 0))
        with pytest.raises(metrics.MetricError, match="background"):
            metrics.nrm(metrics.ConfusionCounts(3, 0, 0, 5))


class TestDrd:
    def test_weights(self):
        w = metrics.drd_weights()
        assert w.sum() == pytest.approx(1.0)
        assert w[2, 2] == 0
        np.testing.assert_allclose(w, np.rot90(w))
        np.testing.assert_allclose(w, w.T)
        np.testing.assert_allclose(w, naive_weights(), atol=1e-15)

    def test_single_interior_flip(self):
        gt = np.zeros((32, 32), bool)
        gt[0:4, 0:4] = True  # one non-uniform block far from the flip
        out = gt.copy()
        out[20, 20] = True
        # every neighbour disagrees with the flipped pixel, so DRD_k = sum of weights
        assert metrics.nubn(gt) == 1
        assert metrics.drd(out, gt) == pytest.approx(1.0)

    def test_flip_on_stroke_edge_costs_less(self):
        gt = np.zeros((32, 32), bool)
        gt[:, 10:16] = True
        out = gt.copy()
        out[16, 16] = True
        n = metrics.nubn(gt)
        assert 0 < metrics.drd(out, gt) * n < 1

    def test_identical_is_zero(self):
        out, gt = random_pair(0)
        assert metrics.drd(gt, gt) == 0.0

    def test_uniform_truth_warns(self):
        gt = np.zeros((16, 16), bool)
        out = gt.copy()
        out[3, 3] = True
        res = metrics.drd_detail(out, gt)
        assert res.value == 0.0 and res.warning
        assert metrics.evaluate_pair(out, gt).drd_warning

    def test_nubn_partial_tiles(self):
        gt = np.zeros((10, 10), bool)
        gt[9, 9] = True
        assert metrics.nubn(gt) == naive_nubn(gt) == 1

    @pytest.mark.parametrize("seed", range(4))
    def test_matches_oracle(self, seed):
        out, gt = random_pair(seed, (24, 30))
        assert metrics.drd(out, gt) == pytest.approx(naive_drd(out, gt), abs=1e-9)


class TestMpm:
    def test_fp_at_distance_five(self):
        gt = square()
        out = gt.copy()
        out[15, 25] = True
        D = naive_contour_distance(gt).sum()
        assert naive_contour_distance(gt)[15, 25] == 5.0
        assert metrics.mpm(out, gt) == pytest.approx(2.5 / D, abs=1e-12)

    def test_perfect(self):
        assert metrics.mpm(square(), square()) == 0.0

    def test_contour(self):
        c = metrics.contour(square(8, 2, 5))
        assert c.sum() == 12
        assert not c[3:5, 3:5].any()

    def test_no_contour(self):
        with pytest.raises(metrics.MetricError, match="no contour"):
            metrics.mpm(np.zeros((5, 5), bool), np.zeros((5, 5), bool))

    def test_distance_matches_brute_force(self):
        _, gt = random_pair(3, (20, 24))
        np.testing.assert_allclose(metrics.contour_distance(gt), naive_contour_distance(gt), atol=1e-12)

    @pytest.mark.parametrize("seed", range(4))
    def test_matches_oracle(self, seed):
        out, gt = random_pair(seed, (24, 24))
        assert metrics.mpm(out, gt) == pytest.approx(naive_mpm(out, gt), abs=1e-9)


class TestAgreement:
    @settings(max_examples=25, deadline=None)
    @given(arrays(bool, (12, 14)), arrays(bool, (12, 14)))
    def test_counts_and_scalars(self, out, gt):
        c = metrics.confusion(out, gt)
        assert (c.tp, c.fp, c.tn, c.fn) == counts(out, gt)
        assert c.total == out.size
        assert metrics.psnr(out, gt) == pytest.approx(naive_psnr(out, gt), abs=1e-9)
        if gt.any():
            assert metrics.fmeasure(c) == pytest.approx(naive_fmeasure(out, gt), abs=1e-9)
        if gt.any() and not gt.all():
            assert metrics.nrm(c) == pytest.approx(naive_nrm(out, gt), abs=1e-12)
            assert metrics.drd(out, gt) == pytest.approx(naive_drd(out, gt), abs=1e-9)

    def test_monotone_degradation(self):
        rng = np.random.default_rng(8)
        gt = square(48, 12, 30)
        out = gt.copy()
        prev = metrics.evaluate_pair(out, gt)
        order = rng.permutation(gt.size)
        for step in range(1, 6):
            idx = order[(step - 1) * 40:step * 40]
            out.ravel()[idx] = ~gt.ravel()[idx]
            cur = metrics.evaluate_pair(out, gt)
            assert cur.fmeasure < prev.fmeasure
            assert cur.psnr < prev.psnr
            assert cur.drd > prev.drd
            assert cur.nrm >= prev.nrm
            assert cur.mpm >= prev.mpm
            prev = cur

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="dimension mismatch"):
            metrics.confusion(np.zeros((3, 3), bool), np.zeros((3, 4), bool))

    def test_non_boolean_rejected(self):
        with pytest.raises(TypeError):
            metrics.confusion(np.zeros((3, 3)), np.zeros((3, 3), bool))


def test_fixture_pair():
    expected = json.loads((DATA / "pair_expected.json").read_text())
    out = BinaryImage.from_gray(load_image(DATA / "pair_output.pgm"))
    gt = BinaryImage.from_gray(load_image(DATA / "pair_truth.pgm"))
    c = metrics.confusion(out, gt)
    assert [c.tp, c.fp, c.tn, c.fn] == expected["counts"]
    report = metrics.evaluate_pair(out, gt)
    for name in ("fmeasure", "psnr", "drd", "nrm", "mpm"):
        assert getattr(report, name) == pytest.approx(expected[name], abs=1e-9), name
    assert report.nrm_scaled == pytest.approx(expected["nrm"] * 100)
    assert report.mpm_scaled == pytest.approx(expected["mpm"] * 1000)


def test_report_undefined_measures():
    z = np.zeros((8, 8), bool)
    r = metrics.evaluate_pair(z, z)
    assert r.fmeasure is None and r.nrm is None and r.mpm is None
    assert r.psnr == math.inf and r.drd == 0.0
