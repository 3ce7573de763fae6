"""
Frequency-domain analytic wavelet filter banks.

Filters are evaluated from their closed forms on the DFT grid. Frequencies of
bin m are 2*pi*m/N mapped to (-pi, pi], the Nyquist bin being +pi. A Nyquist
bin stands for both +pi and -pi, so it carries the RMS of the closed form over
the two aliases.

Band-pass filters are analytic and each one stands for a conjugate pair of
real filters, hence multiplicity 2 in the frame sum; the low-pass counts once.
"""
import os
import json
import math
import logging
import itertools
from dataclasses import dataclass, field, asdict
from functools import cached_property
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import FrameError
from .signal_io import load_signal, save_signal

logger = logging.getLogger('phaseharmonics')

XI = 0.85 * np.pi
ANALYTIC_MULTIPLICITY = 2.0


def bump_window(w):
    """g(w) = exp(-w^2 / (1 - w^2)) on (-1, 1), zero elsewhere"""
    arr = np.asarray(w, dtype=np.float64)
    flat = arr.reshape(-1)
    out = np.zeros_like(flat)
    inside = np.abs(flat) < 1.0
    wi = flat[inside]
    out[inside] = np.exp(-wi * wi / (1.0 - wi * wi))
    return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)


def bump_constant_1d(Q: int) -> float:
    return 1.0 / (1.34 * math.sqrt(Q) - 0.05)


def steerable_constant(L: int) -> float:
    """Normalization of the steerable wavelet, from exact factorials"""
    ratio = math.factorial(L - 1) / math.sqrt(L * math.factorial(2 * (L - 1)))
    return 2.0 ** (L - 1) * ratio / 1.29


def lowpass_sigma(J: int, Q: int = 1, xi: float = XI) -> float:
    return 2.0 ** (-0.55 / Q) * 2.0 ** (-J + 1) * xi


def frequency_axis(n: int) -> np.ndarray:
    """DFT frequencies of an n-point grid in (-pi, pi]"""
    w = 2.0 * np.pi * np.fft.fftfreq(n)
    if n % 2 == 0 and n >= 2:
        w[n // 2] = np.pi
    return w


def frequency_grid(shape: Sequence[int]) -> List[np.ndarray]:
    axes = [frequency_axis(n) for n in shape]
    return list(np.meshgrid(*axes, indexing='ij'))


def sample_on_grid(fn: Callable[..., np.ndarray], shape: Sequence[int]) -> np.ndarray:
    """
    Evaluate a closed-form spectrum on the DFT grid

    Bins on a Nyquist line take the RMS of fn over the +pi/-pi aliases.
    """
    grids = frequency_grid(shape)
    values = np.asarray(fn(*grids), dtype=np.float64)

    nyquist = np.zeros(tuple(shape), dtype=bool)
    for g in grids:
        nyquist |= g == np.pi
    if nyquist.any():
        points = [g[nyquist] for g in grids]
        signs = list(itertools.product((1.0, -1.0), repeat=len(shape)))
        acc = np.zeros(points[0].shape)
        for combo in signs:
            coords = [np.where(p == np.pi, s * p, p) for s, p in zip(combo, points)]
            acc += np.asarray(fn(*coords), dtype=np.float64) ** 2
        values[nyquist] = np.sqrt(acc / len(signs))
    return values


def mirror(spectrum: np.ndarray, axes: Optional[Sequence[int]] = None) -> np.ndarray:
    """spectrum[-m mod N] along the given axes (default: all)"""
    axes = range(spectrum.ndim) if axes is None else axes
    out = spectrum
    for axis in axes:
        out = np.roll(np.flip(out, axis=axis), 1, axis=axis)
    return out


def bump_wavelet_hat(w, scale: float, Q: int = 1, xi: float = XI):
    """1D bump wavelet dilated to center frequency xi * 2^(-scale/Q)"""
    dilation = 2.0 ** (scale / Q)
    return bump_constant_1d(Q) * bump_window((dilation * np.asarray(w) - xi) / xi)


def steerable_wavelet_hat(w0, w1, j: int, theta: float, L: int, xi: float = XI):
    """2D bump steerable wavelet at scale 2^j, centered on 2^-j r_{-theta}(xi, 0)"""
    w0 = np.asarray(w0, dtype=np.float64)
    w1 = np.asarray(w1, dtype=np.float64)
    radius = np.hypot(w0, w1)
    radial = steerable_constant(L) * bump_window((2.0 ** j * radius - xi) / xi)
    projection = w0 * math.cos(theta) - w1 * math.sin(theta)
    cosine = np.divide(projection, radius, out=np.zeros_like(radius), where=radius > 0)
    angular = np.where(cosine > 0, np.abs(cosine) ** (L - 1), 0.0)
    return radial * angular


def gaussian_lowpass_hat(sigma: float) -> Callable[..., np.ndarray]:
    def fn(*coords):
        r2 = sum(np.asarray(c, dtype=np.float64) ** 2 for c in coords)
        return np.exp(-r2 / (2.0 * sigma ** 2))
    return fn


@dataclass(frozen=True)
class BankParams:
    d: int
    n: int
    J: int
    Q: int = 1
    L: int = 0
    xi: float = XI
    kind: str = 'bump'

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.n,) * self.d

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'BankParams':
        return cls(**{k: data[k] for k in ('d', 'n', 'J', 'Q', 'L', 'xi', 'kind') if k in data})


@dataclass(frozen=True)
class FrameReport:
    eta: float
    min_sum: float
    max_sum: float
    worst_freq: Tuple[float, ...]

    def to_dict(self) -> Dict[str, Any]:
        return {'eta': self.eta, 'min_sum': self.min_sum, 'max_sum': self.max_sum,
                'worst_freq': list(self.worst_freq)}


@dataclass(frozen=True, eq=False)
class FilterBank:
    """
    Band-pass spectra psi_hat (channels first) and a symmetric low-pass phi_hat.

    Band-pass channels are ordered coarse to fine, then by angle. In the stacked
    views (``spectra``, ``labels_all``...) the low-pass comes first.
    """
    psi_hat: np.ndarray
    phi_hat: np.ndarray
    labels: Tuple[Tuple[int, int], ...]
    center_freqs: np.ndarray
    scales: Tuple[int, ...]
    params: BankParams
    multiplicity: float = ANALYTIC_MULTIPLICITY
    lowpass_label: Tuple[int, int] = field(default=None)

    def __post_init__(self):
        psi = np.array(self.psi_hat, dtype=np.float64)
        phi = np.array(self.phi_hat, dtype=np.float64)
        if psi.shape[1:] != phi.shape:
            raise ValueError(f"Band-pass grid {psi.shape[1:]} does not match low-pass grid {phi.shape}")
        if len(self.labels) != psi.shape[0] or len(self.scales) != psi.shape[0]:
            raise ValueError("One label and one scale index are needed per band-pass channel")
        if not np.allclose(phi, mirror(phi), rtol=0.0, atol=1e-12 * max(1.0, np.abs(phi).max())):
            raise ValueError("Low-pass spectrum must be symmetric")
        centers = np.array(self.center_freqs, dtype=np.float64).reshape(psi.shape[0], phi.ndim)
        for arr in (psi, phi, centers):
            arr.setflags(write=False)
        object.__setattr__(self, 'psi_hat', psi)
        object.__setattr__(self, 'phi_hat', phi)
        object.__setattr__(self, 'center_freqs', centers)
        object.__setattr__(self, 'labels', tuple(tuple(int(v) for v in lab) for lab in self.labels))
        object.__setattr__(self, 'scales', tuple(int(s) for s in self.scales))
        if self.lowpass_label is None:
            object.__setattr__(self, 'lowpass_label', (self.params.J, 0))

    @classmethod
    def from_arrays(cls, psi_hat, phi_hat, multiplicity: float = 1.0) -> 'FilterBank':
        """Bank from hand-built spectra; labels (i, 0), centers from spectral centroids"""
        psi = np.asarray(psi_hat, dtype=np.float64)
        phi = np.asarray(phi_hat, dtype=np.float64)
        params = BankParams(d=phi.ndim, n=phi.shape[0], J=psi.shape[0], kind='custom')
        centers = _centroids(psi)
        return cls(psi_hat=psi, phi_hat=phi, labels=tuple((i, 0) for i in range(psi.shape[0])),
                   center_freqs=centers, scales=tuple(range(psi.shape[0])), params=params,
                   multiplicity=multiplicity)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.phi_hat.shape

    @property
    def ndim(self) -> int:
        return self.phi_hat.ndim

    @property
    def num_bandpass(self) -> int:
        return self.psi_hat.shape[0]

    @property
    def num_channels(self) -> int:
        return self.psi_hat.shape[0] + 1

    @cached_property
    def spectra(self) -> np.ndarray:
        out = np.concatenate([self.phi_hat[None], self.psi_hat], axis=0)
        out.setflags(write=False)
        return out

    @cached_property
    def weights(self) -> np.ndarray:
        return np.concatenate([[1.0], np.full(self.num_bandpass, float(self.multiplicity))])

    @property
    def labels_all(self) -> Tuple[Tuple[int, int], ...]:
        return (self.lowpass_label,) + self.labels

    @property
    def scales_all(self) -> Tuple[int, ...]:
        return (self.params.J * self.params.Q,) + self.scales

    @property
    def centers_all(self) -> np.ndarray:
        return np.concatenate([np.zeros((1, self.ndim)), self.center_freqs], axis=0)

    def channel_index(self, label) -> int:
        try:
            return self.labels_all.index(tuple(label))
        except ValueError:
            raise KeyError(f"No channel labeled {tuple(label)}")

    @cached_property
    def dual(self) -> 'FilterBank':
        return dual_bank(self)


def build_bank_1d(N: int, J: int, Q: int = 1, xi: float = XI) -> FilterBank:
    """
    1D bump wavelets at centers xi * 2^(-s/Q), s = 0..JQ-1, plus a Gaussian low-pass

    Args:
        N: Grid length, a power of two
        J: Number of octaves, 1..log2(N)
        Q: Scales per octave
    """
    _check_grid(N, J)
    if Q < 1:
        raise ValueError(f"Q must be at least 1, got {Q}")

    scales = list(range(J * Q - 1, -1, -1))
    psi = np.stack([sample_on_grid(lambda w, s=s: bump_wavelet_hat(w, s, Q, xi), (N,)) for s in scales])
    phi = sample_on_grid(gaussian_lowpass_hat(lowpass_sigma(J, Q, xi)), (N,))
    centers = np.array([[xi * 2.0 ** (-s / Q)] for s in scales])

    bank = FilterBank(psi_hat=psi, phi_hat=phi, labels=tuple(divmod(s, Q) for s in scales),
                      center_freqs=centers, scales=tuple(scales),
                      params=BankParams(d=1, n=N, J=J, Q=Q, xi=xi))
    logger.info(f"Built 1D bump bank N={N} J={J} Q={Q} with {bank.num_bandpass} band-pass channels")
    return bank


def build_bank_2d(N: int, J: int, L: int = 8, xi: float = XI) -> FilterBank:
    """2D bump steerable wavelets at J scales and L angles pi*l/L, -L/2 < l <= L/2"""
    _check_grid(N, J)
    if L < 4 or L % 2:
        raise ValueError(f"L must be even and at least 4, got {L}")

    labels, centers, spectra, scales = [], [], [], []
    for j in range(J - 1, -1, -1):
        for ell in range(-L // 2 + 1, L // 2 + 1):
            theta = math.pi * ell / L
            spectra.append(sample_on_grid(
                lambda w0, w1, j=j, theta=theta: steerable_wavelet_hat(w0, w1, j, theta, L, xi), (N, N)))
            labels.append((j, ell))
            centers.append([2.0 ** -j * xi * math.cos(theta), -2.0 ** -j * xi * math.sin(theta)])
            scales.append(j)
    phi = sample_on_grid(gaussian_lowpass_hat(lowpass_sigma(J, 1, xi)), (N, N))

    bank = FilterBank(psi_hat=np.stack(spectra), phi_hat=phi, labels=tuple(labels),
                      center_freqs=np.array(centers), scales=tuple(scales),
                      params=BankParams(d=2, n=N, J=J, L=L, xi=xi))
    logger.info(f"Built 2D steerable bank N={N} J={J} L={L} with {bank.num_bandpass} band-pass channels")
    return bank


def build_bank(d: int, n: int, J: Optional[int] = None, Q: int = 1, L: int = 4) -> FilterBank:
    """Dispatch on dimension; J defaults to log2(n)"""
    J = int(round(math.log2(n))) if J is None else J
    if d == 1:
        return build_bank_1d(n, J, Q)
    if d == 2:
        return build_bank_2d(n, J, L)
    raise ValueError(f"Dimension must be 1 or 2, got {d}")


def bank_from_params(params: Dict[str, Any]) -> FilterBank:
    p = BankParams.from_dict(params)
    if p.kind != 'bump':
        raise ValueError(f"Cannot rebuild a '{p.kind}' bank from parameters")
    if p.d == 1:
        return build_bank_1d(p.n, p.J, p.Q, p.xi)
    return build_bank_2d(p.n, p.J, p.L, p.xi)


def _check_grid(N: int, J: int) -> None:
    if N < 2 or N & (N - 1):
        raise ValueError(f"Grid size must be a power of two, got {N}")
    if not 1 <= J <= int(round(math.log2(N))):
        raise ValueError(f"J must be in [1, log2 N = {int(round(math.log2(N)))}], got {J}")


def littlewood_paley_sum(bank: FilterBank) -> np.ndarray:
    """A(w) = 1/2 sum_lambda w_lambda (|psi(w)|^2 + |psi(-w)|^2), low-pass included"""
    power = np.abs(bank.spectra) ** 2
    spatial = tuple(range(1, power.ndim))
    both = power + mirror(power, axes=spatial)
    return 0.5 * np.tensordot(bank.weights, both, axes=(0, 0))


def frame_report(bank: FilterBank, max_freq: Optional[float] = None) -> FrameReport:
    """
    Extrema of the Littlewood-Paley sum and the frame deviation eta

    Args:
        bank: Filter bank
        max_freq: Only consider frequencies with |w| <= max_freq. Above the finest
            center xi the analytic bank has a single wavelet, which dominates the full-grid eta.
    """
    lp = littlewood_paley_sum(bank)
    grids = frequency_grid(bank.shape)
    mask = np.ones(lp.shape, dtype=bool)
    if max_freq is not None:
        mask = np.sqrt(sum(g ** 2 for g in grids)) <= max_freq
        if not mask.any():
            raise ValueError(f"No grid frequency below max_freq={max_freq}")
    values = np.where(mask, lp, np.nan)
    lo, hi = float(np.nanmin(values)), float(np.nanmax(values))
    low_dev = 1.0 - math.sqrt(lo)
    high_dev = math.sqrt(hi) - 1.0
    eta = max(low_dev, high_dev, 0.0)

    worst = np.unravel_index(np.nanargmin(values) if low_dev >= high_dev else np.nanargmax(values), lp.shape)
    worst_freq = tuple(float(g[worst]) for g in grids)
    logger.debug(f"Frame sum in [{lo:.6f}, {hi:.6f}], eta={eta:.6f}")
    return FrameReport(eta=eta, min_sum=lo, max_sum=hi, worst_freq=worst_freq)


def frame_check(bank: FilterBank, max_freq: Optional[float] = None) -> Dict[str, Any]:
    """Full-grid frame report plus eta restricted to |w| <= max_freq (default xi/2)"""
    if max_freq is None:
        max_freq = bank.params.xi / 2
    if max_freq <= 0:
        raise ValueError(f"max_freq must be positive, got {max_freq}")
    report = frame_report(bank).to_dict()
    band = frame_report(bank, max_freq=max_freq)
    report.update({'eta_full': report['eta'], 'eta_band': band.eta, 'max_freq': float(max_freq),
                   'channels': bank.num_channels})
    return report


def dual_bank(bank: FilterBank) -> FilterBank:
    """
    Dual filters w_lambda * conj(psi_lambda) / A

    Raises:
        FrameError: eta >= 1 or A vanishes where some filter is nonzero
    """
    report = frame_report(bank)
    if report.eta >= 1.0:
        raise FrameError(f"Frame condition violated: eta={report.eta:.4f} (spectral hole at {report.worst_freq})")

    lp = littlewood_paley_sum(bank)
    support = np.any(bank.spectra != 0, axis=0)
    if np.any(lp[support] <= 1e-12 * lp.max()):
        raise FrameError("Frame condition violated: vanishing denominator inside a filter support")

    scaled = bank.weights.reshape((-1,) + (1,) * bank.ndim) * np.conj(bank.spectra)
    dual = np.divide(scaled, lp, out=np.zeros_like(scaled), where=lp > 0).real

    return FilterBank(psi_hat=dual[1:], phi_hat=dual[0], labels=bank.labels, center_freqs=bank.center_freqs,
                      scales=bank.scales, params=bank.params, multiplicity=bank.multiplicity,
                      lowpass_label=bank.lowpass_label)


def _centroids(spectra: np.ndarray) -> np.ndarray:
    power = np.abs(spectra) ** 2
    grids = frequency_grid(spectra.shape[1:])
    total = power.reshape(power.shape[0], -1).sum(axis=1)
    total = np.where(total > 0, total, 1.0)
    return np.stack([(power * g).reshape(power.shape[0], -1).sum(axis=1) / total for g in grids], axis=1)


def mean_frequencies(bank: FilterBank) -> np.ndarray:
    """Discrete mean frequency vector of |psi_hat|^2 for every band-pass channel"""
    return _centroids(bank.psi_hat)


def save_bank(bank: FilterBank, path: str) -> None:
    """Write bank metadata to path and one raw float64 array per channel next to it"""
    folder = os.path.dirname(os.path.abspath(path))
    stem = os.path.splitext(os.path.basename(path))[0]
    channels = []
    for i, (label, spectrum) in enumerate(zip(bank.labels_all, bank.spectra)):
        filename = f"{stem}_ch{i:03d}.f64"
        save_signal(np.asarray(spectrum), os.path.join(folder, filename))
        channels.append({'label': list(label), 'file': filename})

    meta = {
        'params': bank.params.to_dict(),
        'multiplicity': bank.multiplicity,
        'lowpass_label': list(bank.lowpass_label),
        'scales': list(bank.scales),
        'center_freqs': bank.center_freqs.tolist(),
        'channels': channels,
    }
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(meta, f, indent=2)
    logger.info(f"Saved filter bank with {len(channels)} channels to {path}")


def load_bank(path: str) -> FilterBank:
    """Read a bank written by save_bank; falls back to rebuilding from params when arrays are absent"""
    with open(path, 'r', encoding='utf-8') as f:
        meta = json.load(f)
    folder = os.path.dirname(os.path.abspath(path))
    channels = meta.get('channels') or []
    if not channels or not all(os.path.exists(os.path.join(folder, c['file'])) for c in channels):
        logger.info(f"Rebuilding bank from parameters in {path}")
        return bank_from_params(meta['params'])

    spectra = [load_signal(os.path.join(folder, c['file'])) for c in channels]
    return FilterBank(psi_hat=np.stack(spectra[1:]), phi_hat=spectra[0],
                      labels=tuple(tuple(c['label']) for c in channels[1:]),
                      center_freqs=np.array(meta['center_freqs']), scales=tuple(meta['scales']),
                      params=BankParams.from_dict(meta['params']), multiplicity=meta['multiplicity'],
                      lowpass_label=tuple(meta['lowpass_label']))
