"""Smoke test of the sgh_py extension: solve a synthetic sample, run RANSAC."""

import numpy as np
import pytest

import sgh_py


def rotation_error_deg(a, b):
    r = np.asarray(a).T @ np.asarray(b)
    return np.degrees(np.arccos(np.clip((np.trace(r) - 1.0) / 2.0, -1.0, 1.0)))


def test_lists_solvers_and_tables():
    assert sgh_py.solver_names() == ["sH5_2", "sH5_3", "sH5_4", "sH5f_2", "sH5f_3"]
    assert sgh_py.tables()["CAL_I2"] == [5] * 5


@pytest.mark.parametrize("pattern,mode", [([2, 2, 1], "calib"), ([4, 1], "calib"), ([3, 1, 1], "focal")])
def test_solve_recovers_truth(pattern, mode):
    scene = sgh_py.synthetic_scene(pattern=pattern, seed=3)
    poses = sgh_py.solve(scene["cameras"], scene["matches"], mode=mode, pinhole_k=scene["pinhole_k"])
    truth = scene["truth"]
    best = min(poses, key=lambda p: rotation_error_deg(p["rotation"], truth["rotation"]))
    assert rotation_error_deg(best["rotation"], truth["rotation"]) < 1e-6
    assert np.allclose(best["translation"], truth["translation"], atol=1e-6)
    if mode == "focal":
        assert abs(best["focal"] - truth["focal"]) < 1e-4
    else:
        assert best["focal"] is None


def test_single_camera_is_unsolvable():
    scene = sgh_py.synthetic_scene(pattern=[5], seed=1)
    with pytest.raises(sgh_py.UnsolvableError):
        sgh_py.solve(scene["cameras"], scene["matches"], pinhole_k=scene["pinhole_k"])


def test_bad_mode_is_value_error():
    scene = sgh_py.synthetic_scene(pattern=[2, 2, 1], seed=1)
    with pytest.raises(ValueError):
        sgh_py.solve(scene["cameras"], scene["matches"], mode="fisheye")


def test_ransac_finds_inliers():
    scene = sgh_py.synthetic_scene(n_points=150, noise=0.5, outliers=0.25, seed=8)
    args = (scene["cameras"], scene["matches"])
    result = sgh_py.ransac(*args, pinhole_k=scene["pinhole_k"], threshold=3.0, iterations=300, seed=5)
    again = sgh_py.ransac(*args, pinhole_k=scene["pinhole_k"], threshold=3.0, iterations=300, seed=5)
    assert result["inliers"] == again["inliers"]
    assert result["iterations"] == 300
    true_inliers = {i for i, ok in enumerate(scene["inliers"]) if ok}
    found = set(result["inliers"])
    assert len(found & true_inliers) >= 0.9 * len(true_inliers)
    assert rotation_error_deg(result["pose"]["rotation"], scene["truth"]["rotation"]) < 2.0
