# Smoke tests for the extension module. Run with PYTHONPATH pointing at the
# cmake build directory (ctest does this) or against an installed wheel.

import numpy as np
import pytest

try:
    import _voxelseg as vx
except ImportError:
    vx = pytest.importorskip("voxelseg")


def test_matmul_matches_numpy():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((7, 5))
    b = rng.standard_normal((5, 9))
    np.testing.assert_allclose(vx.matmul(a, b), a @ b, rtol=1e-12, atol=1e-12)


def test_conv2d_matches_naive_loops():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((2, 8, 9))
    k = rng.standard_normal((3, 2, 3, 4))
    bias = rng.standard_normal(3)
    got = vx.conv2d_valid(x, k, bias)
    want = np.empty((3, 6, 6))
    for m in range(3):
        for i in range(6):
            for j in range(6):
                want[m, i, j] = bias[m] + np.sum(x[:, i : i + 3, j : j + 4] * k[m])
    np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-12)


def test_conv3d_shape_and_constant_field():
    x = np.ones((1, 5, 5, 5))
    k = np.ones((2, 1, 2, 2, 2))
    out = vx.conv3d_valid(x, k, np.zeros(2))
    assert out.shape == (2, 4, 4, 4)
    np.testing.assert_allclose(out, 8.0)


def test_maxpool_argmax_points_at_max():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((1, 6, 6))
    out, argmax = vx.maxpool2d(x, 2, 3)
    assert out.shape == (1, 3, 2)
    flat = x.ravel()
    np.testing.assert_allclose(np.asarray(out).ravel(), flat[np.asarray(argmax)])


def test_phantom_deterministic_and_labeled():
    vol1, lab1 = vx.generate_phantom(seed=42)
    vol2, lab2 = vx.generate_phantom(seed=42)
    np.testing.assert_array_equal(vol1, vol2)
    np.testing.assert_array_equal(lab1, lab2)
    assert vol1.shape == (64, 64, 64)
    assert set(np.unique(lab1)) == {0, 1, 2}
    # labels ride on tissue, background stays empty
    assert np.all(vol1[lab1 > 0] > 0)


def test_postprocess_removes_small_positive_blob():
    lab = np.zeros((16, 16, 16), dtype=np.uint8)
    lab[2:4, 2:4, 2:4] = 1  # 8 voxels, far below threshold
    cleaned = vx.postprocess(lab, min_blob=500)
    assert not cleaned.any()


def test_postprocess_fills_hole_toward_nearer_class():
    lab = np.zeros((12, 12, 12), dtype=np.uint8)
    lab[1:11, 1:11, 1:11] = 1
    lab[6, 6, 6] = 0
    filled = vx.postprocess(lab, min_blob=500)
    assert filled[6, 6, 6] == 1


def test_connected_component_count():
    lab = np.zeros((8, 8, 8), dtype=np.uint8)
    lab[0, 0, 0] = 1
    lab[4, 4, 4] = 2
    assert vx.connected_component_count(lab) == 3


def test_segmentation_metrics_counts():
    truth = np.zeros((4, 4, 4), dtype=np.uint8)
    pred = np.zeros((4, 4, 4), dtype=np.uint8)
    truth[0, 0, 0] = 1  # missed -> false negative
    pred[1, 1, 1] = 2  # spurious -> false positive
    m = vx.segmentation_metrics(pred, truth)
    assert m["false_pos"] == 1
    assert m["false_neg"] == 1


def test_extract_patch_formats():
    vol = np.random.default_rng(3).random((32, 32, 32), dtype=np.float32)
    stacked = vx.extract_patch(vol, (16, 16, 16), "stacked2d", patch_size=12, stack=3)
    assert len(stacked) == 1 and stacked[0].shape == (3, 12, 12)
    tri = vx.extract_patch(vol, (16, 16, 16), "triplanar", patch_size=12)
    assert len(tri) == 3 and all(t.shape == (1, 12, 12) for t in tri)
    cube = vx.extract_patch(vol, (16, 16, 16), "3d", patch_size=9)
    assert len(cube) == 1 and cube[0].shape == (1, 9, 9, 9)


def test_gradient_check_preset():
    assert vx.gradient_check_preset("stacked2d", patch_size=12, stack=3, seed=42) < 1e-6
