import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from prachml.errors import CalibrationError, ConfigError, DetectionError
from prachml.frontend import Bin
from prachml.threshold import ALPHA_RESOLUTION, ThresholdDetector, calibrate, detect, max_statistic


def brute_force_alpha(stat, target):
    allowed = math.floor(target * stat.size + 1e-9)
    j = 1
    while np.sum(stat > j * ALPHA_RESOLUTION) > allowed:
        j += 1
    return j * ALPHA_RESOLUTION


def test_detect_strict_inequality():
    det = ThresholdDetector(alpha=2.0)
    b = Bin(0, np.array([1.0, 4.0, 2.0]), noise_floor=2.0)
    assert detect(b, det).detected is False
    b = Bin(0, np.array([1.0, 4.001, 2.0]), noise_floor=2.0)
    d = detect(b, det)
    assert d.detected and d.delay_estimate_samples == 1


def test_detect_rejects_zero_floor():
    with pytest.raises(DetectionError):
        detect(Bin(0, np.ones(13), 0.0), ThresholdDetector(1.0))
    with pytest.raises(DetectionError):
        ThresholdDetector(1.0).decide(np.ones((2, 13)), np.array([1.0, 0.0]))


def test_decide_vectorized():
    det = ThresholdDetector(3.0)
    f = np.array([[0, 1, 5.0], [1, 1, 1.0]])
    hit, delay = det.decide(f, np.array([1.0, 1.0]))
    assert hit.tolist() == [True, False]
    assert delay.tolist() == [2, -1]


def test_detector_validation():
    for a in (0.0, -1.0, float("inf")):
        with pytest.raises(ConfigError):
            ThresholdDetector(a)
    with pytest.raises(ConfigError):
        ThresholdDetector(1.0, target_far=0.0)


def test_calibration_matches_brute_force():
    rng = np.random.default_rng(0)
    stat = rng.exponential(size=20000) * 2
    det = calibrate(stat, 1e-3)
    assert det.alpha == pytest.approx(brute_force_alpha(stat, 1e-3))
    assert np.sum(stat > det.alpha) <= 20
    assert np.sum(stat > det.alpha - ALPHA_RESOLUTION) > 20


def test_calibration_needs_enough_bins():
    with pytest.raises(CalibrationError):
        calibrate(np.ones(9999), 1e-3)
    calibrate(np.ones(10000), 1e-3)


def test_calibration_target_range():
    with pytest.raises(CalibrationError):
        calibrate(np.ones(100), 0.0)


def test_max_statistic():
    s = max_statistic(np.array([[1, 2, 3.0], [4, 0, 0]]), np.array([0.5, 2.0]))
    np.testing.assert_allclose(s, [6.0, 2.0])
    with pytest.raises(CalibrationError):
        max_statistic(np.ones((1, 3)), np.zeros(1))


def test_calibrated_alpha_near_exponential_theory():
    # noise-only bins are ~13 iid exponentials over a floor near their mean, so
    # 1 - (1 - exp(-alpha))**13 = 1e-3 gives alpha of about 9.47
    rng = np.random.default_rng(1)
    stat = rng.exponential(size=(200000, 13)).max(axis=1)
    alpha = calibrate(stat, 1e-3).alpha
    theory = -math.log(1 - (1 - 1e-3) ** (1 / 13))
    assert theory == pytest.approx(9.4718, abs=1e-3)
    assert alpha == pytest.approx(theory, abs=0.15)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([1e-3, 5e-3, 1e-2]))
def test_calibrated_false_alarm_never_exceeds_target(seed, target):
    stat = np.random.default_rng(seed).gamma(2.0, size=12000)
    det = calibrate(stat, target)
    assert np.mean(stat > det.alpha) <= target + 1e-12
    assert det.alpha == pytest.approx(brute_force_alpha(stat, target))


def test_target_one_detects_everything():
    stat = np.random.default_rng(2).uniform(1, 5, 50)
    det = calibrate(stat, 1.0)
    assert det.alpha <= stat.min()
    assert np.all(stat > det.alpha)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_alpha_monotone_in_target(seed):
    stat = np.random.default_rng(seed).exponential(size=20000) * 3
    alphas = [calibrate(stat, t).alpha for t in (5e-4, 1e-3, 1e-2, 1e-1, 1.0)]
    assert all(a >= b for a, b in zip(alphas, alphas[1:]))


def _noisy_bins(snr, n, seed, delay_samples=None):
    from prachml.channel import ChannelModel, TransmissionSpec, synthesize_burst
    from prachml.frontend import bin_matrix, correlate_power, estimate_noise_floor
    from prachml.zc import CellConfig

    cfg = CellConfig()
    rng = np.random.default_rng(seed)
    model = ChannelModel("AWGN", snr)
    feats, floors, delays = [], [], []
    for _ in range(n):
        d = int(rng.integers(0, 6)) if delay_samples is None else delay_samples
        phase = np.exp(2j * np.pi * rng.uniform())
        y = synthesize_burst(TransmissionSpec.from_entries([(9, d * 800 / 839, phase)]), cfg, model, rng)
        p = correlate_power(y, cfg.root_samples)
        feats.append(bin_matrix(p, cfg)[9])
        floors.append(estimate_noise_floor(p))
        delays.append(d)
    return np.array(feats), np.array(floors), np.array(delays), y


def test_scale_invariance():
    f, fl, _, _ = _noisy_bins(-16, 50, 3)
    det = ThresholdDetector(9.0)
    a, _ = det.decide(f, fl)
    b, _ = det.decide(f * 37.5, fl * 37.5)
    np.testing.assert_array_equal(a, b)


def test_delay_accuracy_at_minus_12_db():
    f, fl, d, _ = _noisy_bins(-12, 400, 4)
    hit, est = ThresholdDetector(9.5).decide(f, fl)
    assert hit.mean() > 0.95
    assert np.mean(est[hit] == d[hit]) >= 0.99


def test_missed_detection_monotone_in_snr():
    det = ThresholdDetector(9.5)
    md = []
    for snr in (-18, -16, -14, -12):
        f, fl, _, _ = _noisy_bins(snr, 400, 5)
        md.append(1 - det.decide(f, fl)[0].mean())
    sigma = [np.sqrt(max(m * (1 - m), 1e-4) / 400) for m in md]
    assert all(b <= a + s for a, b, s in zip(md, md[1:], sigma))
