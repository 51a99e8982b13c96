import numpy as np
import pytest

from hoil.utils.core.ctrefine import CTRefine, CTRefineConfig, track_major
from hoil.utils.core.errors import ContractError
from hoil.utils.core.pointcloud import KeypointSet
from hoil.utils.core.temporal import (
    FILTER_METHODS, FilterConfig, OneEuroFilter, apply_filter, compare_filters, gaussian_kernel, gaussian_smooth,
    one_euro, savitzky_golay, write_compare_csv,
)
from hoil.utils.sim.motion import gait_trajectory, make_refine_samples


def polynomial_track(num_frames=20, num_keypoints=2):
    t = np.arange(num_frames, dtype=np.float64)[:, None, None]
    base = np.array([[1.0, -2.0, 0.5], [0.0, 0.3, 2.0]])[None, :num_keypoints]
    return base + 0.1 * t + 0.02 * t ** 2 * np.array([1.0, 0.0, -1.0])


@pytest.mark.parametrize("method", FILTER_METHODS)
def test_constant_signal_is_a_fixed_point(method):
    trajectory = np.tile(np.array([[0.5, -1.0, 2.0]]), (12, 3, 1))
    np.testing.assert_allclose(apply_filter(method, trajectory), trajectory, atol=1e-12)


def test_savitzky_golay_keeps_quadratics():
    trajectory = polynomial_track()
    smoothed = savitzky_golay(trajectory, FilterConfig(sg_window=5, sg_order=2))
    np.testing.assert_allclose(smoothed[2:-2], trajectory[2:-2], atol=1e-9)


def test_gaussian_kernel_is_normalized():
    kernel = gaussian_kernel(1.5, 4.0)
    assert kernel.sum() == pytest.approx(1.0)
    assert kernel.size == 2 * 6 + 1
    np.testing.assert_allclose(kernel, kernel[::-1])


def test_gaussian_smoothing_reduces_noise(rng):
    clean = np.linspace(0.0, 2.0, 40)[:, None, None] * np.ones((1, 2, 3))
    noisy = clean + rng.normal(0, 0.05, clean.shape)
    smoothed = gaussian_smooth(noisy, FilterConfig(gaussian_sigma=1.0))
    assert np.abs(smoothed - clean)[5:-5].mean() < np.abs(noisy - clean)[5:-5].mean()


def test_one_euro_first_sample_passes_through():
    trajectory = polynomial_track(6)
    out = one_euro(trajectory, dt=0.1)
    np.testing.assert_array_equal(out[0], trajectory[0])
    filt = OneEuroFilter(0.1)
    np.testing.assert_array_equal(filt(np.ones(3)), np.ones(3))
    with pytest.raises(ContractError):
        OneEuroFilter(0.0)


def test_filters_reject_short_or_malformed_input():
    with pytest.raises(ContractError, match="sequence-length"):
        savitzky_golay(np.zeros((3, 2, 3)))
    with pytest.raises(ContractError, match="trajectory-shape"):
        gaussian_smooth(np.zeros((5, 2)))
    with pytest.raises(ContractError):
        apply_filter("median", np.zeros((5, 1, 3)))
    with pytest.raises(ContractError):
        FilterConfig(sg_window=4)


def test_compare_filters_rows(tmp_path):
    clean, _ = gait_trajectory(16, 0.1)
    noisy = clean + np.random.default_rng(0).normal(0, 0.02, clean.shape)
    gt = [KeypointSet(frame) for frame in clean]
    rows = compare_filters(noisy, gt, refiners={"identity": lambda x: x})
    assert [r.method for r in rows] == ["none", "gaussian", "sg", "oneeuro", "identity"]
    assert rows[-1].mpjpe_mm == pytest.approx(rows[0].mpjpe_mm)
    for row in rows:
        assert row.pck5 >= row.pck3
    path = tmp_path / "compare.csv"
    write_compare_csv(rows, str(path))
    lines = path.read_text().splitlines()
    assert lines[0] == "method,mpjpe_mm,pck3,pck5" and len(lines) == 6


def test_gait_trajectory_pins_stance_feet():
    trajectory, contact = gait_trajectory(20, 0.1)
    assert trajectory.shape == (20, 15, 3)
    for k in np.flatnonzero(contact.any(axis=0)):
        runs = np.flatnonzero(contact[:, k])
        for a, b in zip(runs[:-1], runs[1:]):
            if b == a + 1:
                np.testing.assert_array_equal(trajectory[a, k], trajectory[b, k])


def test_ctrefine_starts_as_identity():
    samples = make_refine_samples(1, num_frames=8)
    model = CTRefine(CTRefineConfig(hidden=8, num_heads=2, max_frames=16))
    refined = model.refine(samples[0].noisy, samples[0].contact)
    np.testing.assert_allclose(refined, samples[0].noisy, atol=1e-12)


def test_ctrefine_validates_input():
    model = CTRefine(CTRefineConfig(hidden=8, num_heads=2, max_frames=4))
    with pytest.raises(ContractError):
        model.refine(np.zeros((5, 2, 3)), np.zeros((5, 2), dtype=bool))
    with pytest.raises(ContractError):
        model.refine(np.zeros((3, 2, 3)), np.zeros((3, 1), dtype=bool))


def test_track_major_layout():
    trajectory = np.arange(2 * 3 * 3, dtype=np.float64).reshape(2, 3, 3)
    rows = track_major(trajectory)
    np.testing.assert_array_equal(rows[1], trajectory[1, 0])
    np.testing.assert_array_equal(rows[2], trajectory[0, 1])

