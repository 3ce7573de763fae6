"""
Analytic wavelet transform by periodic FFT convolution, and its frame inverse.

Norms are plain grid sums; energies are divided by N^d so they compare with the
descriptor normalization. By Parseval, sum_u |x(u)|^2 = N^-d sum_w |x_hat(w)|^2.
"""
import os
import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import scipy.fft as sfft

from .filterbank import FilterBank, frequency_axis
from .signal_io import check_signal, save_signal

logger = logging.getLogger('phaseharmonics')

# None defers to scipy.fft.set_workers in the caller
FFT_WORKERS = int(os.environ['PH_FFT_WORKERS']) if os.environ.get('PH_FFT_WORKERS') else None


@dataclass(frozen=True, eq=False)
class AnalyticCoefficients:
    """Complex fields x * psi_lambda, low-pass channel first and real-valued"""
    coeffs: np.ndarray
    bank: FilterBank

    @property
    def labels(self) -> Tuple[Tuple[int, int], ...]:
        return self.bank.labels_all

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.coeffs.shape[1:]

    def __getitem__(self, label) -> np.ndarray:
        return self.coeffs[self.bank.channel_index(label)]

    def __len__(self) -> int:
        return self.coeffs.shape[0]


def _spatial_axes(ndim: int) -> Tuple[int, ...]:
    return tuple(range(1, ndim + 1))


def analyze(x: np.ndarray, bank: FilterBank, workers: Optional[int] = None) -> AnalyticCoefficients:
    """
    Wavelet transform Wx(u, lambda) = x * psi_lambda(u), periodic boundaries

    Raises:
        ValueError: signal shape differs from the bank grid
    """
    x = check_signal(x)
    if x.shape != bank.shape:
        raise ValueError(f"Signal shape {x.shape} does not match filter bank grid {bank.shape}")
    workers = workers or FFT_WORKERS

    x_hat = sfft.fftn(x, workers=workers)
    coeffs = sfft.ifftn(x_hat[None] * bank.spectra, axes=_spatial_axes(x.ndim), workers=workers)
    # symmetric low-pass: the field is real up to rounding
    coeffs[0] = coeffs[0].real
    return AnalyticCoefficients(coeffs=coeffs, bank=bank)


def reconstruct_frame(wx: AnalyticCoefficients, bank: Optional[FilterBank] = None,
                      workers: Optional[int] = None) -> np.ndarray:
    """x = sum_lambda Real(Wx(., lambda) * dual_lambda), low-pass included"""
    bank = bank or wx.bank
    if wx.coeffs.shape != bank.spectra.shape:
        raise ValueError(f"Coefficients {wx.coeffs.shape} do not match bank channels {bank.spectra.shape}")
    workers = workers or FFT_WORKERS
    axes = _spatial_axes(bank.ndim)

    spectra = sfft.fftn(wx.coeffs, axes=axes, workers=workers)
    total = np.sum(spectra * bank.dual.spectra, axis=0)
    return sfft.ifftn(total, workers=workers).real


def signal_energy(x: np.ndarray) -> float:
    x = np.asarray(x)
    return float(np.sum(np.abs(x) ** 2) / x.size)


def frame_energy(wx: AnalyticCoefficients) -> float:
    """N^-d sum_lambda w_lambda ||Wx(., lambda)||^2 with conjugate-pair multiplicities"""
    per_channel = np.sum(np.abs(wx.coeffs) ** 2, axis=_spatial_axes(len(wx.shape)))
    return float(np.dot(wx.bank.weights, per_channel) / np.prod(wx.shape))


def _analytic_weights(n: int) -> np.ndarray:
    w = frequency_axis(n)
    weights = np.where(w > 0, 2.0, 0.0)
    weights[w == np.pi] = 1.0
    return weights


def analytic_part(real_filter: np.ndarray) -> np.ndarray:
    """Analytic extension of a real 1D filter: its spectrum doubled on (0, pi), zero on w <= 0"""
    real_filter = np.asarray(real_filter, dtype=np.float64)
    if real_filter.ndim != 1:
        raise ValueError("Analytic extension is defined for 1D filters")
    return sfft.ifft(_analytic_weights(real_filter.size) * sfft.fft(real_filter))


def analytic_pair_check(bank: FilterBank) -> float:
    """
    Largest relative L2 gap between each psi_hat and the analytic extension of its real part

    A bank of analytic filters gives rounding-level values; mass at w <= 0 shows up directly.
    """
    if bank.ndim != 1:
        raise ValueError("analytic_pair_check needs a 1D bank")
    weights = _analytic_weights(bank.shape[0])
    worst = 0.0
    for label, spectrum in zip(bank.labels, bank.psi_hat):
        real_part = sfft.ifft(spectrum).real
        extended = weights * sfft.fft(real_part)
        scale = max(np.linalg.norm(spectrum), np.finfo(float).tiny)
        deviation = float(np.linalg.norm(extended - spectrum) / scale)
        if deviation > worst:
            worst = deviation
            logger.debug(f"Channel {label}: analytic deviation {deviation:.3e}")
    return worst


def dump_coefficients(wx: AnalyticCoefficients, directory: str) -> int:
    """Write real and imaginary parts of every channel as raw files; returns the file count"""
    os.makedirs(directory, exist_ok=True)
    written = 0
    for i, (label, field) in enumerate(zip(wx.labels, wx.coeffs)):
        stem = os.path.join(directory, f"ch{i:03d}_{label[0]}_{label[1]}")
        save_signal(field.real, f"{stem}_re.f64")
        save_signal(field.imag, f"{stem}_im.f64")
        written += 2
    logger.info(f"Dumped {len(wx)} channels to {directory}")
    return written
