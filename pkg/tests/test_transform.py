import os

import numpy as np
import pytest
from numpy.testing import assert_allclose

from phaseharmonics.filterbank import frame_report
from phaseharmonics.signal_io import circular_shift
from phaseharmonics.transform import (analytic_pair_check, analytic_part, analyze, dump_coefficients, frame_energy,
                                      reconstruct_frame, signal_energy)


@pytest.mark.parametrize('bank_name, shape', [('bank_1024', (1024,)), ('bank_2d_64', (64, 64))])
def test_frame_inverse_recovers_signal(request, random_signal, bank_name, shape):
    bank = request.getfixturevalue(bank_name)
    x = random_signal(shape, seed=3)
    wx = analyze(x, bank)
    assert len(wx) == bank.num_channels
    assert wx.shape == shape
    assert_allclose(reconstruct_frame(wx), x, atol=1e-10)


def test_lowpass_channel_is_real(bank_256, piecewise_256):
    wx = analyze(piecewise_256, bank_256)
    assert np.all(wx.coeffs[0].imag == 0.0)
    assert_allclose(wx[bank_256.lowpass_label], wx.coeffs[0])


def test_energy_within_frame_bounds(bank_1024, random_signal):
    x = random_signal(1024, seed=5)
    eta = frame_report(bank_1024).eta
    ratio = frame_energy(analyze(x, bank_1024)) / signal_energy(x)
    assert (1 - eta) ** 2 - 1e-12 <= ratio <= (1 + eta) ** 2 + 1e-12


def test_shape_mismatch_is_rejected(bank_256):
    with pytest.raises(ValueError, match='does not match'):
        analyze(np.zeros(512), bank_256)


def test_bump_bank_is_analytic(bank_1024):
    assert analytic_pair_check(bank_1024) < 1e-10


def test_analytic_pair_check_needs_1d(bank_2d_64):
    with pytest.raises(ValueError):
        analytic_pair_check(bank_2d_64)


def test_analytic_part_of_cosine():
    n = 64
    t = np.arange(n)
    assert_allclose(analytic_part(np.cos(2 * np.pi * 5 * t / n)), np.exp(2j * np.pi * 5 * t / n), atol=1e-12)


def test_dump_coefficients(tmp_path, bank_256, piecewise_256):
    wx = analyze(piecewise_256, bank_256)
    count = dump_coefficients(wx, str(tmp_path / 'coeffs'))
    assert count == 2 * bank_256.num_channels
    names = os.listdir(tmp_path / 'coeffs')
    assert len([n for n in names if n.endswith('.f64')]) == count
    assert 'ch000_8_0_re.f64' in names


def test_transform_is_linear(bank_1024, random_signal):
    x, y = random_signal(1024, seed=21), random_signal(1024, seed=22)
    combined = analyze(2.5 * x - 0.75 * y, bank_1024).coeffs
    expected = 2.5 * analyze(x, bank_1024).coeffs - 0.75 * analyze(y, bank_1024).coeffs
    assert_allclose(combined, expected, atol=1e-12)


@pytest.mark.parametrize('bank_name, shape, tau', [('bank_1024', (1024,), (37,)),
                                                    ('bank_2d_64', (64, 64), (5, -11))])
def test_transform_commutes_with_shifts(request, random_signal, bank_name, shape, tau):
    bank = request.getfixturevalue(bank_name)
    x = random_signal(shape, seed=23)
    shifted = analyze(circular_shift(x, tau), bank).coeffs
    expected = np.roll(analyze(x, bank).coeffs, tau, axis=tuple(range(1, len(shape) + 1)))
    assert_allclose(shifted, expected, atol=1e-12)
