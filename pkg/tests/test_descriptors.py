import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from phaseharmonics.descriptors import (DescriptorPlan, correlation, count_breakdown, covariance,
                                        decorrelation_mass, describe, full_correlation_matrix, harmonic_matrix,
                                        mean_flatness, mean_vector, phase_domain_matrix, select_coefficients)
from phaseharmonics.errors import SelectionError
from phaseharmonics.filterbank import build_bank_1d, frame_report
from phaseharmonics.phase_harmonics import apply_U, apply_U_hat, hhat_table, unit_filter
from phaseharmonics.signal_io import RngSpec, circular_shift, gen_white_noise
from phaseharmonics.transform import analyze


def _second_harmonics(selection, first, k, second):
    return sorted(k2 for a, k1, b, k2 in selection.corr_keys() if a == first and k1 == k and b == second)


@pytest.mark.parametrize('kwargs', [dict(delta=-1), dict(delta=9), dict(delta=2, beta=0.0),
                                    dict(delta=2, k2_max=0)])
def test_selection_rejects(bank_256, kwargs):
    with pytest.raises(SelectionError):
        select_coefficients(bank_256, **kwargs)


def test_proximity_constant_limits_second_harmonic(bank_256):
    narrow = select_coefficients(bank_256, 2, beta=0.5)
    wide = select_coefficients(bank_256, 2, beta=1.0)
    assert _second_harmonics(narrow, (3, 0), 1, (5, 0)) == list(range(2, 13))
    assert _second_harmonics(wide, (3, 0), 1, (5, 0)) == list(range(0, 17))
    assert _second_harmonics(wide, (3, 0), 1, (6, 0)) == []


def test_count_grows_with_octave_range(bank_256):
    counts = [len(select_coefficients(bank_256, delta)) for delta in (0, 1, 3)]
    assert counts[0] < counts[1] < counts[2]
    breakdown = count_breakdown(select_coefficients(bank_256, 1))
    assert breakdown['total'] == breakdown['means'] + breakdown['correlations']
    assert breakdown['means'] == 2 * bank_256.num_channels


def _scale_pairs(octaves, delta):
    return sum(octaves - s for s in range(min(delta, octaves - 1) + 1))


@pytest.mark.parametrize('delta', [1, 2, 4])
def test_unit_proximity_admits_every_second_harmonic(bank_1024, delta):
    k2_max = 16
    bandpass = select_coefficients(bank_1024, delta, k2_max=k2_max, include_lowpass=False)
    pairs = _scale_pairs(10, delta)
    # one (k, k') = (0, 1) / (1, 0) mirror per channel
    assert bandpass.num_corrs == 2 * (k2_max + 1) * pairs - 10

    full = select_coefficients(bank_1024, delta, k2_max=k2_max)
    assert full.num_corrs == bandpass.num_corrs + 4 * delta + 3
    assert len(full) == full.num_corrs + 2 * 11


def test_count_is_linear_in_octave_range(bank_1024):
    counts = {delta: len(select_coefficients(bank_1024, delta)) for delta in (1, 2, 4)}
    assert counts == {1: 665, 2: 941, 4: 1391}
    assert counts[4] / counts[2] == pytest.approx(1.478, abs=1e-3)


def test_lowpass_can_be_left_out(bank_256):
    selection = select_coefficients(bank_256, 2, include_lowpass=False)
    assert all(c != 0 and c2 != 0 for c, _, c2, _ in selection.corr_entries)
    assert all(c != 0 for c, _ in selection.mean_entries)


def test_lowpass_harmonics_stay_in_zero_and_one(bank_256):
    selection = select_coefficients(bank_256, 8)
    assert all(k2 <= 1 for _, _, c2, k2 in selection.corr_entries if c2 == 0)


def test_hermitian_mirrors_are_dropped(bank_256):
    selection = select_coefficients(bank_256, 3)
    keys = set(map(tuple, selection.corr_entries.tolist()))
    for c, k, c2, k2 in keys:
        if (c, k) != (c2, k2):
            assert (c2, k2, c, k) not in keys


def test_2d_pairs_share_angle_across_scales(bank_2d_64):
    labels = bank_2d_64.labels_all

    def crossing(selection):
        return [(a, b) for a, _, b, _ in selection.corr_entries
                if a != 0 and b != 0 and labels[a][0] != labels[b][0] and labels[a][1] != labels[b][1]]

    assert crossing(select_coefficients(bank_2d_64, 2, k2_max=4)) == []
    assert crossing(select_coefficients(bank_2d_64, 2, k2_max=4, cross_angles=True))


def test_descriptors_match_harmonic_fields(bank_256, piecewise_256):
    selection = select_coefficients(bank_256, 2, k2_max=4)
    desc = describe(piecewise_256, bank_256, selection)
    hf = apply_U_hat(analyze(piecewise_256, bank_256), unit_filter(4), range(5))
    assert_allclose(desc.corrs, correlation(hf, selection), atol=1e-13)
    assert_allclose(desc.means, mean_vector(hf, selection.mean_keys()), atol=1e-13)
    assert desc.M == len(selection)
    assert desc.shape == (256,)


@pytest.mark.parametrize('tau', [1, 5, 17, 40, 63, 100, 128, 191, 222, 255])
def test_descriptors_are_translation_invariant(bank_256, piecewise_256, tau):
    selection = select_coefficients(bank_256, 3)
    desc = describe(piecewise_256, bank_256, selection)
    shifted = describe(circular_shift(piecewise_256, tau), bank_256, selection)
    assert_allclose(shifted.corrs, desc.corrs, atol=1e-12)
    assert_allclose(shifted.means, desc.means, atol=1e-12)


def test_bandpass_means_vanish(bank_256, piecewise_256):
    desc = describe(piecewise_256, bank_256, select_coefficients(bank_256, 2))
    assert mean_flatness(desc) <= 0.05


def test_covariance_removes_mean_products(bank_256, piecewise_256):
    selection = select_coefficients(bank_256, 2, k2_max=4)
    desc = describe(piecewise_256, bank_256, selection)
    wx = analyze(piecewise_256, bank_256)
    cov = covariance(desc)
    for i, (a, k, b, k2) in enumerate(selection.corr_keys()):
        if (a, k, b, k2) == ((8, 0), 0, (8, 0), 0):
            field = np.abs(wx[a])
            assert cov[i].real == pytest.approx(field.var(), rel=1e-10)
            break
    else:
        pytest.fail('low-pass modulus pair missing from selection')


def test_plan_rejects_foreign_selection(bank_256, bank_1024):
    selection = select_coefficients(bank_256, 2)
    with pytest.raises(SelectionError):
        DescriptorPlan(bank_1024, selection)
    plan = DescriptorPlan(bank_256, selection)
    other = describe(np.ones(256), bank_256, select_coefficients(bank_256, 1))
    with pytest.raises(SelectionError):
        plan.check_target(other)


def test_loss_vanishes_on_target_and_its_shifts(bank_256, piecewise_256):
    selection = select_coefficients(bank_256, 3)
    plan = DescriptorPlan(bank_256, selection)
    target = plan.describe(piecewise_256)
    energy, grad = plan.loss_and_grad(piecewise_256, target)
    assert energy < 1e-24
    assert np.linalg.norm(grad) < 1e-10
    shifted, _ = plan.loss_and_grad(circular_shift(piecewise_256, 40), target, with_grad=False)
    assert shifted < 1e-20


def test_gradient_matches_finite_differences(bank_256, piecewise_256, random_signal):
    plan = DescriptorPlan(bank_256, select_coefficients(bank_256, 3, k2_max=8))
    target = plan.describe(piecewise_256)
    y = random_signal(256, seed=4)
    energy, grad = plan.loss_and_grad(y, target)
    assert energy > 0
    step = 1e-6 * np.linalg.norm(y)
    for seed in (1, 2, 3):
        v = random_signal(256, seed=100 + seed)
        v /= np.linalg.norm(v)
        plus, _ = plan.loss_and_grad(y + step * v, target, with_grad=False)
        minus, _ = plan.loss_and_grad(y - step * v, target, with_grad=False)
        assert (plus - minus) / (2 * step) == pytest.approx(np.dot(grad, v), abs=1e-4 * np.linalg.norm(grad))


def test_phase_domain_matrix_matches_U(bank_256, piecewise_256):
    wx = analyze(piecewise_256, bank_256)
    h = hhat_table('rectifier', 3)
    alphas = 2 * np.pi * np.arange(8) / 8
    first, second = (4, 0), (5, 0)
    direct = apply_U(wx, h, alphas)
    a = direct[bank_256.channel_index(first)]
    b = direct[bank_256.channel_index(second)]
    expected = a.T @ b / a.shape[0]
    assert_allclose(phase_domain_matrix(wx, h, first, second, alphas), expected, atol=1e-12)
    assert harmonic_matrix(wx, h, first, second).shape == (7, 7)


def test_full_correlation_matrix_is_hermitian(bank_256, piecewise_256):
    wx = analyze(piecewise_256, bank_256)
    full = full_correlation_matrix(wx, hhat_table('rectifier', 2))
    assert full.shape == (5 * bank_256.num_channels,) * 2
    assert_allclose(full, full.conj().T, atol=1e-14)


def test_decorrelation_mass_is_a_share(bank_256, piecewise_256):
    wx = analyze(piecewise_256, bank_256)
    mass = decorrelation_mass(wx, (3, 0), (4, 0), 1.0, 6)
    assert 0.0 <= mass <= 1.0
    assert decorrelation_mass(wx, (3, 0), (4, 0), 100.0, 6) == 0.0


@pytest.mark.parametrize('seed', range(5))
def test_gradient_components_match_central_differences(bank_256, piecewise_256, random_signal, seed):
    plan = DescriptorPlan(bank_256, select_coefficients(bank_256, 3))
    target = plan.describe(piecewise_256)
    y = random_signal(256, seed=200 + seed)
    _, grad = plan.loss_and_grad(y, target)
    step = 1e-5
    coords = np.random.default_rng(seed).choice(256, size=32, replace=False)
    for i in coords:
        e = np.zeros(256)
        e[i] = step
        plus, _ = plan.loss_and_grad(y + e, target, with_grad=False)
        minus, _ = plan.loss_and_grad(y - e, target, with_grad=False)
        assert (plus - minus) / (2 * step) == pytest.approx(grad[i], abs=1e-4 * np.max(np.abs(grad)))


def test_correlation_matrix_is_lipschitz(random_signal):
    bank = build_bank_1d(64, 6, 1)
    h = hhat_table('rectifier', 8)
    eta = frame_report(bank).eta
    kappa = math.sqrt(0.25 + 1 / math.pi ** 2)
    x = random_signal(64, seed=31)
    xp = x + 1e-3 * random_signal(64, seed=32)
    gap = np.linalg.norm(full_correlation_matrix(analyze(x, bank), h) - full_correlation_matrix(analyze(xp, bank), h),
                         2)
    bound = kappa ** 2 * (1 + eta) ** 2 * np.linalg.norm(x - xp) * (np.linalg.norm(x) + np.linalg.norm(xp)) / 64
    assert 0 < gap <= bound


def test_white_noise_correlations_are_sparse():
    bank = build_bank_1d(4096, 12, 1)
    wx = analyze(gen_white_noise(4096, RngSpec(seed=3)), bank)
    mass = decorrelation_mass(wx, (1, 0), (2, 0), 0.5, 2)
    assert 0.0 < mass <= 0.05
