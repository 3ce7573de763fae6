import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from phaseharmonics.errors import NotInvertibleError
from phaseharmonics.filterbank import build_bank_1d, frame_report
from phaseharmonics.phase_harmonics import (apply_U, apply_U_hat, check_alpha_grid, check_H_bilipschitz,
                                            check_harmonic_lipschitz, check_U_bounds, evaluate_phase_filter,
                                            harmonic_powers, hhat_table, invert_from_first_harmonic,
                                            lipschitz_constants, phase_harmonic, sharpen_filter,
                                            transposition_profile, unit_filter)
from phaseharmonics.signal_io import RngSpec, gen_white_noise
from phaseharmonics.transform import analyze


def _random_complex(n, seed):
    gen = np.random.default_rng(seed)
    return gen.standard_normal(n) + 1j * gen.standard_normal(n)


def test_phase_harmonic_values():
    z = np.array([2j, -3.0, 0.0])
    assert_allclose(phase_harmonic(z, 2), [-2.0, 3.0, 0.0], atol=1e-15)
    assert_allclose(phase_harmonic(z, 0), [2.0, 3.0, 0.0])
    assert_allclose(phase_harmonic(z, -1), np.conj(z), atol=1e-15)


def test_harmonic_powers_match_direct():
    z = _random_complex(100, 1)
    powers = harmonic_powers(z, [-3, 0, 1, 4])
    for k, value in powers.items():
        assert_allclose(value, phase_harmonic(z, k), rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize('kind, k, expected', [
    ('rectifier', 0, 1 / math.pi),
    ('rectifier', 1, 0.25),
    ('rectifier', -1, 0.25),
    ('rectifier', 2, 1 / (3 * math.pi)),
    ('rectifier', 3, 0.0),
    ('rectifier', 4, -1 / (15 * math.pi)),
    ('absolute', 0, 2 / math.pi),
    ('absolute', 1, 0.0),
    ('absolute', 2, 2 / (3 * math.pi)),
    ('identity', 1, 0.5),
    ('identity', 0, 0.0),
])
def test_closed_form_tables(kind, k, expected):
    assert hhat_table(kind, 4).coef(k) == pytest.approx(expected, abs=1e-14)


@pytest.mark.parametrize('kind, fn', [
    ('rectifier', lambda a: np.maximum(np.cos(a), 0.0)),
    ('absolute', lambda a: np.abs(np.cos(a))),
])
def test_tables_match_sampled_filters(kind, fn):
    n = 4096
    alphas = 2 * np.pi * np.arange(n) / n
    sampled = np.fft.fft(fn(alphas)) / n
    h = hhat_table(kind, 8)
    for k in h.ks:
        assert h.coef(int(k)) == pytest.approx(sampled[k % n], abs=1e-5)


def test_identity_filter_is_cosine():
    alphas = np.linspace(0, 2 * np.pi, 50, endpoint=False)
    assert_allclose(evaluate_phase_filter(hhat_table('identity', 3), alphas), np.cos(alphas), atol=1e-15)


def test_table_must_be_hermitian():
    with pytest.raises(ValueError, match='conj'):
        hhat_table('custom', 1, [1.0, 0.0, 2.0])
    with pytest.raises(ValueError):
        hhat_table('custom', 2, [1.0, 1.0, 1.0])
    with pytest.raises(ValueError):
        hhat_table('rectifier', 0)


def test_unit_filter():
    h = unit_filter(3)
    assert_allclose(h.hhat, np.ones(7))
    assert h.norm() == pytest.approx(math.sqrt(7))


def test_harmonics_are_lipschitz():
    gen = np.random.default_rng(2)
    z, zp = _random_complex(100000, 3), _random_complex(100000, 4)
    k = gen.integers(-8, 9, size=100000)
    assert check_harmonic_lipschitz(z, zp, k) <= 1.0 + 1e-12


def test_rectifier_bilipschitz_bounds():
    h = hhat_table('rectifier', 64)
    report = check_H_bilipschitz(h, _random_complex(20000, 5), _random_complex(20000, 6))
    constants = lipschitz_constants(h)
    assert report.lower_bound == pytest.approx(math.sqrt(2) / 4)
    assert report.upper_bound == pytest.approx(constants['kappa'])
    assert report.min_ratio >= report.lower_bound - 1e-12
    assert report.max_ratio <= report.upper_bound + 1e-12
    assert report.max_norm_deviation < 1e-12


def test_rectifier_norm_is_one_half():
    assert hhat_table('rectifier', 2048).norm() == pytest.approx(0.5, abs=1e-8)


def test_sharpened_table():
    eps = 0.2
    h = sharpen_filter(hhat_table('rectifier', 8), eps)
    assert h.kind == 'sharpened'
    assert h.coef(0) == pytest.approx(2.0)
    assert h.coef(1) == 0 and h.coef(3) == 0
    t = 2 * eps / 4
    assert h.coef(2) == pytest.approx(2 * math.sin(t) ** 4 / t ** 4)
    assert_allclose(h.g_hat[h.ks % 2 == 0] * hhat_table('rectifier', 8).hhat[h.ks % 2 == 0],
                    h.hhat[h.ks % 2 == 0])


def test_sharpened_filter_concentrates_near_zero_and_pi():
    eps = 0.2
    h = sharpen_filter(hhat_table('rectifier', 512), eps)
    n = 4096
    alphas = 2 * np.pi * np.arange(n) / n
    values = np.abs(h.evaluate(alphas))
    folded = np.mod(alphas, np.pi)
    distance = np.minimum(folded, np.pi - folded)
    assert values[distance > eps].sum() / values.sum() <= 1e-3


@pytest.mark.parametrize('kind, eps', [('identity', 0.2), ('rectifier', 1.0), ('rectifier', 0.0)])
def test_sharpen_rejects(kind, eps):
    with pytest.raises(ValueError):
        sharpen_filter(hhat_table(kind, 4), eps)


def test_invert_from_first_harmonic(bank_1024, random_signal):
    x = random_signal(1024, seed=9)
    h = hhat_table('rectifier', 4)
    hf = apply_U_hat(analyze(x, bank_1024), h, [0, 1, 2])
    assert_allclose(invert_from_first_harmonic(hf, bank_1024, h), x, atol=1e-10)


def test_absolute_value_is_not_invertible(bank_256, piecewise_256):
    h = hhat_table('absolute', 4)
    hf = apply_U_hat(analyze(piecewise_256, bank_256), h, [1])
    with pytest.raises(NotInvertibleError):
        invert_from_first_harmonic(hf, bank_256, h)


def test_harmonic_field_lookup(bank_256, piecewise_256):
    wx = analyze(piecewise_256, bank_256)
    hf = apply_U_hat(wx, unit_filter(2), [0, 2])
    label = bank_256.labels[2]
    assert_allclose(hf[label, 2], phase_harmonic(wx[label], -2))
    assert (label, 1) not in hf
    with pytest.raises(KeyError):
        hf[label, 1]
    with pytest.raises(ValueError):
        apply_U_hat(wx, unit_filter(2), [3])


def test_apply_U_with_identity_filter(bank_256, piecewise_256):
    wx = analyze(piecewise_256, bank_256)
    alphas = 2 * np.pi * np.arange(8) / 8
    ux = apply_U(wx, hhat_table('identity', 1), alphas)
    assert ux.shape == (bank_256.num_channels, 256, 8)
    expected = (wx.coeffs[..., None] * np.exp(-1j * alphas)).real
    assert_allclose(ux, expected, atol=1e-12)


def test_alpha_grid_checks():
    with pytest.raises(ValueError, match='too small'):
        check_alpha_grid([0.0, np.pi], 1)
    with pytest.raises(ValueError, match='uniform'):
        check_alpha_grid([0.0, 0.1, 0.5, 2.0], 1)
    with pytest.raises(ValueError):
        check_alpha_grid(np.linspace(0, 2 * np.pi, 4), 1)


def test_U_bounds_hold(bank_1024, random_signal):
    eta = frame_report(bank_1024).eta
    x, xp = random_signal(1024, seed=11), random_signal(1024, seed=12)
    bounds = check_U_bounds(x, xp, bank_1024, hhat_table('rectifier', 16), eta)
    assert bounds['lower'] <= bounds['ratio'] <= bounds['upper']


def test_harmonics_transpose_frequencies():
    bank = build_bank_1d(4096, 12, 1)
    x = gen_white_noise(4096, RngSpec(seed=21))
    wx = analyze(x, bank)
    label = (4, 0)
    center = bank.centers_all[bank.channel_index(label)][0]
    profile = {p['k']: p for p in transposition_profile(wx, label, [0, 1, 2, 3])}
    assert abs(profile[0]['centroid'][0]) < 1e-2
    for k in (1, 2, 3):
        assert profile[k]['centroid'][0] == pytest.approx(k * center, rel=0.2)
        assert 0.5 <= profile[k]['bandwidth'] / (k * profile[1]['bandwidth']) <= 2.0


def test_rectifier_U_approximates_positive_part(bank_256, piecewise_256):
    K = 32
    wx = analyze(piecewise_256, bank_256)
    alphas = 2 * np.pi * np.arange(128) / 128
    ux = apply_U(wx, hhat_table('rectifier', K), alphas)
    exact = np.maximum((wx.coeffs[..., None] * np.exp(-1j * alphas)).real, 0.0)
    bound = 2 / (np.pi * K) * np.abs(wx.coeffs)[..., None]
    assert np.all(np.abs(ux - exact) <= bound + 1e-12)


def test_U_spectrum_over_phases_is_U_hat(bank_256, piecewise_256):
    h = hhat_table('rectifier', 4)
    wx = analyze(piecewise_256, bank_256)
    alphas = 2 * np.pi * np.arange(16) / 16
    spectrum = np.fft.fft(apply_U(wx, h, alphas), axis=-1) / alphas.size
    hf = apply_U_hat(wx, h, range(5))
    for i, k in enumerate(hf.k_list):
        assert_allclose(spectrum[..., k], hf.values[:, i], atol=1e-10)
