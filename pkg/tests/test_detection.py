import numpy as np
import pytest

from anonphy.channel import ChannelSet, generate_channel_set
from anonphy.detection import (
    anonymity_entropy,
    detect_mle,
    detect_mmse,
    detect_mnorm,
    detector_complexity,
    energy_detect,
    false_alarm_probability,
)
from anonphy.errors import UnsupportedConfigurationError


def glrt_declare(y_block, mats, sigma2):
    """Independent likelihood-form oracle for the residual detector.

    Under CSCG noise the block log-likelihood of candidate k is
    -(1/sigma2) * sum_t ||(I - P_k) y_t||^2 up to a k-independent constant,
    with P_k the orthogonal projector onto col(H_k) built here from lstsq.
    """
    best, best_ll = None, -np.inf
    for k, h in enumerate(mats):
        coef, *_ = np.linalg.lstsq(h, y_block.T, rcond=None)
        resid = y_block.T - h @ coef
        ll = -float(np.sum(np.abs(resid) ** 2)) / sigma2
        if ll > best_ll:
            best, best_ll = k + 1, ll
    return best


def random_receive_block(rng, k, n_r, n_t, n_sym, sigma2):
    cs = generate_channel_set(k, n_r, n_t, rng)
    true = int(rng.integers(k))
    x = (rng.standard_normal((n_sym, n_t)) + 1j * rng.standard_normal((n_sym, n_t))) / np.sqrt(2)
    noise = (rng.standard_normal((n_sym, n_r)) + 1j * rng.standard_normal((n_sym, n_r)))
    y = x @ cs.matrices[true].T + noise * np.sqrt(sigma2 / 2)
    return cs, true, y


def test_mle_matches_glrt_oracle():
    rng = np.random.default_rng(2024)
    sigma2 = 0.5
    for _ in range(200):
        cs, _, y = random_receive_block(rng, 3, 4, 2, 6, sigma2)
        want = glrt_declare(y, cs.matrices, sigma2)
        got = detect_mle(y, cs)
        assert got.declared == want


def test_mle_requires_tall_channels():
    cs = generate_channel_set(2, 3, 3, 0)
    with pytest.raises(UnsupportedConfigurationError):
        detect_mle(np.ones((4, 3)), cs)


def test_mnorm_detects_matched_filter_transmission():
    # transmit along the dominant right singular vector of the true channel;
    # the matched-norm statistic should then pick the true user almost always
    rng = np.random.default_rng(55)
    hits = 0
    n_trials = 100
    for _ in range(n_trials):
        cs = generate_channel_set(4, 6, 6, rng)
        true = int(rng.integers(4))
        _, _, vh = np.linalg.svd(cs.matrices[true])
        s = np.exp(1j * rng.uniform(0, 2 * np.pi, size=30))
        x = np.outer(s, vh[0].conj())
        noise = (rng.standard_normal((30, 6)) + 1j * rng.standard_normal((30, 6))) * np.sqrt(0.005)
        y = x @ cs.matrices[true].T + noise
        if detect_mnorm(y, cs).declared == true + 1:
            hits += 1
    assert hits / n_trials > 0.9


def test_mmse_approaches_mle_when_regularizer_vanishes():
    rng = np.random.default_rng(321)
    cs, _, y = random_receive_block(rng, 4, 5, 2, 8, 0.3)
    mle = detect_mle(y, cs)
    mmse = detect_mmse(y, cs, p=1.0, sigma2=1e-10)  # regularizer 2e-10
    assert mmse.declared == mle.declared
    rel = np.abs(mmse.statistics - mle.statistics) / np.abs(mle.statistics)
    assert rel.max() < 1e-6


def test_mmse_works_in_strong_receiver_regime():
    rng = np.random.default_rng(11)
    cs, true, y = random_receive_block(rng, 3, 6, 2, 20, 0.01)
    det = detect_mmse(y, cs, p=1.0, sigma2=0.01)
    assert det.declared == true + 1
    assert det.statistics.shape == (3,)


def test_per_symbol_mode():
    rng = np.random.default_rng(9)
    cs, _, y = random_receive_block(rng, 3, 4, 2, 5, 0.2)
    per = detect_mnorm(y, cs, per_symbol=True)
    assert len(per) == 5
    block = detect_mnorm(y, cs)
    summed = np.sum([r.statistics for r in per], axis=0)
    assert np.allclose(summed, block.statistics, rtol=1e-12)
    assert block.declared == int(np.argmax(block.statistics)) + 1


def test_statistics_are_finite_nonnegative():
    rng = np.random.default_rng(3)
    cs, _, y = random_receive_block(rng, 2, 3, 2, 4, 1.0)
    for det in (detect_mle(y, cs), detect_mnorm(y, cs), detect_mmse(y, cs, 1.0, 1.0)):
        assert np.all(np.isfinite(det.statistics))
        assert np.all(det.statistics >= 0)
        assert 1 <= det.declared <= 2


# --- energy gate ---------------------------------------------------------


def test_energy_statistic_hand_computed():
    y = np.array([[3.0 + 4.0j, 0.0], [0.0, 1.0j]])  # powers 25, 1
    dec = energy_detect(y, beta=6.0, n_r=2)
    assert dec.statistic == pytest.approx((25.0 + 1.0) / 2 / 2)  # mean over 2 symbols, / n_r
    assert dec.active
    assert not energy_detect(y, beta=7.0, n_r=2).active


def test_false_alarm_closed_form_unit_case():
    # N_r = 1, sigma2 = 1: P_f = exp(-beta)
    for beta in (0.1, 0.5, 2.0):
        assert false_alarm_probability(beta, 1, 1.0) == pytest.approx(np.exp(-beta), rel=1e-12)


def test_false_alarm_matches_simulation():
    rng = np.random.default_rng(77)
    n_r, sigma2, beta = 3, 0.7, 0.9
    n_trials = 200_000
    noise = (rng.standard_normal((n_trials, n_r)) + 1j * rng.standard_normal((n_trials, n_r)))
    noise *= np.sqrt(sigma2 / 2)
    t = np.sum(np.abs(noise) ** 2, axis=1) / n_r
    empirical = np.mean(t > beta)
    pf = false_alarm_probability(beta, n_r, sigma2)
    se = np.sqrt(pf * (1 - pf) / n_trials)
    assert abs(empirical - pf) < 4 * se + 1e-4


def test_energy_validation():
    with pytest.raises(ValueError):
        energy_detect(np.ones((2, 3)), beta=-1.0, n_r=3)
    with pytest.raises(ValueError):
        energy_detect(np.ones((2, 3)), beta=0.1, n_r=4)
    with pytest.raises(ValueError):
        false_alarm_probability(0.5, 2, 0.0)


# --- entropy and complexity ----------------------------------------------


def test_entropy_uniform_and_point_mass():
    assert anonymity_entropy(np.full(5, 0.2)) == pytest.approx(np.log2(5), abs=1e-12)
    assert anonymity_entropy([1.0, 0.0, 0.0]) == 0.0
    assert anonymity_entropy([0.5, 0.5]) == pytest.approx(1.0)


def test_entropy_validation():
    with pytest.raises(ValueError):
        anonymity_entropy([0.5, 0.4])
    with pytest.raises(ValueError):
        anonymity_entropy([1.5, -0.5])
    with pytest.raises(ValueError):
        anonymity_entropy([])


def test_complexity_reference_values():
    # K=5, N_r=N_t=10
    assert detector_complexity("MLE", 5, 10, 10) == 349400
    assert detector_complexity("MNorm", 5, 10, 10) == 4400
    assert detector_complexity("MLE", 0, 4, 4) == 0
    assert detector_complexity("MNorm", 1, 1, 1) == 16


def test_complexity_rejects_unlisted_rules():
    with pytest.raises(ValueError):
        detector_complexity("MMSE", 5, 10, 10)
    with pytest.raises(ValueError):
        detector_complexity("bogus", 1, 1, 1)
    with pytest.raises(ValueError):
        detector_complexity("MLE", 2, 0, 1)
