"""
Phase harmonics [z]^k = |z| e^{ik arg z}, phase filters h given by Fourier
tables h_hat(k), the operators U / U_hat, phase sharpening, first-harmonic
inversion and Lipschitz checks.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.fft as sfft

from .errors import NotInvertibleError
from .filterbank import FilterBank, frequency_grid
from .transform import AnalyticCoefficients, analyze, reconstruct_frame

logger = logging.getLogger('phaseharmonics')

FILTER_KINDS = ('rectifier', 'absolute', 'identity', 'custom', 'sharpened')


def phase_harmonic(z, k):
    """[z]^k = |z| exp(i k arg z), with [0]^k = 0"""
    z = np.asarray(z, dtype=np.complex128)
    return np.abs(z) * np.exp(1j * np.asarray(k) * np.angle(z))


def unit_phase(z: np.ndarray) -> np.ndarray:
    """z / |z|, zero where z = 0"""
    r = np.abs(z)
    return np.divide(z, r, out=np.zeros_like(z, dtype=np.complex128), where=r > 0)


def harmonic_powers(z: np.ndarray, exponents: Iterable[int]) -> Dict[int, np.ndarray]:
    """[z]^n for each requested n, built from integer powers of the unit phase"""
    r = np.abs(z)
    unit = unit_phase(z)
    out = {}
    for n in sorted(set(int(n) for n in exponents)):
        base = unit if n >= 0 else np.conj(unit)
        out[n] = r * base ** abs(n) if n else r.astype(np.complex128)
    return out


@dataclass(frozen=True, eq=False)
class PhaseFilter:
    """2*pi-periodic phase filter h given by h_hat(k), |k| <= k_max"""
    kind: str
    k_max: int
    hhat: np.ndarray
    g_hat: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        if self.kind not in FILTER_KINDS:
            raise ValueError(f"Unknown phase filter kind '{self.kind}'")
        table = np.asarray(self.hhat, dtype=np.complex128)
        if table.shape != (2 * self.k_max + 1,):
            raise ValueError(f"Table needs {2 * self.k_max + 1} entries for k_max={self.k_max}")
        if not np.allclose(table[::-1], np.conj(table), rtol=0, atol=1e-14):
            raise ValueError("Table must satisfy h_hat(-k) = conj(h_hat(k)) for a real filter")
        table.setflags(write=False)
        object.__setattr__(self, 'hhat', table)

    @property
    def ks(self) -> np.ndarray:
        return np.arange(-self.k_max, self.k_max + 1)

    def coef(self, k: int) -> complex:
        return complex(self.hhat[k + self.k_max]) if abs(k) <= self.k_max else 0j

    def norm(self) -> float:
        """L2 norm of h over a normalized period"""
        return float(np.sqrt(np.sum(np.abs(self.hhat) ** 2)))

    def kappa(self) -> float:
        return float(np.sqrt(np.sum(np.where(self.ks == 0, 1, self.ks ** 2) * np.abs(self.hhat) ** 2)))

    def evaluate(self, alphas) -> np.ndarray:
        alphas = np.asarray(alphas, dtype=np.float64)
        phases = np.exp(1j * np.multiply.outer(alphas, self.ks))
        return (phases @ self.hhat).real

    def to_dict(self) -> Dict:
        return {
            'kind': self.kind,
            'kmax': self.k_max,
            'hhat': [{'k': int(k), 're': float(v.real), 'im': float(v.imag)} for k, v in zip(self.ks, self.hhat)],
        }


def _even_formula(k: int) -> float:
    # -i^k / (pi (k-1)(k+1)) with i^k = (-1)^(k/2) for even k
    return -float((-1) ** (abs(k) // 2)) / (np.pi * (k - 1) * (k + 1))


def hhat_table(kind: str, K_max: int, table: Optional[Sequence[complex]] = None) -> PhaseFilter:
    """
    Closed-form Fourier table of a phase filter

    Args:
        kind: rectifier, absolute, identity or custom
        K_max: Harmonic cutoff, at least 1
        table: Values for k = -K_max..K_max when kind is custom
    """
    if K_max < 1:
        raise ValueError(f"K_max must be at least 1, got {K_max}")
    ks = range(-K_max, K_max + 1)

    if kind == 'rectifier':
        values = [0.25 if abs(k) == 1 else (_even_formula(k) if k % 2 == 0 else 0.0) for k in ks]
    elif kind == 'absolute':
        values = [2.0 * _even_formula(k) if k % 2 == 0 else 0.0 for k in ks]
    elif kind == 'identity':
        values = [0.5 if abs(k) == 1 else 0.0 for k in ks]
    elif kind == 'custom':
        if table is None or len(table) != 2 * K_max + 1:
            raise ValueError(f"A custom filter needs {2 * K_max + 1} table values")
        values = list(table)
    else:
        raise ValueError(f"Unknown phase filter kind '{kind}'")
    return PhaseFilter(kind=kind, k_max=K_max, hhat=np.array(values, dtype=np.complex128))


def unit_filter(K_max: int) -> PhaseFilter:
    """h_hat(k) = 1 for |k| <= K_max, the table used by the descriptors"""
    return hhat_table('custom', K_max, np.ones(2 * K_max + 1))


def evaluate_phase_filter(h: PhaseFilter, alphas) -> np.ndarray:
    """h(alpha) = sum_k h_hat(k) e^{i k alpha}, real for a Hermitian table"""
    return h.evaluate(alphas)


def lipschitz_constants(h: PhaseFilter) -> Dict[str, float]:
    """Norm of h and the bi-Lipschitz constants of H from its table"""
    return {
        'norm_h': h.norm(),
        'lower': float(np.sqrt(2.0) * abs(h.coef(1))),
        'kappa': h.kappa(),
    }


def check_alpha_grid(alphas, k_max: int) -> np.ndarray:
    alphas = np.asarray(alphas, dtype=np.float64)
    size = alphas.size
    if size < 2 * k_max + 1:
        raise ValueError(f"Phase grid of size {size} is too small for K_max={k_max} (needs {2 * k_max + 1})")
    if alphas.min() < 0 or alphas.max() >= 2 * np.pi:
        raise ValueError("Phase grid values must lie in [0, 2*pi)")
    if not np.allclose(np.diff(alphas), 2 * np.pi / size, rtol=0, atol=1e-12):
        raise ValueError("Phase grid must be uniform with step 2*pi/A")
    return alphas


def apply_U(wx: AnalyticCoefficients, h: PhaseFilter, alphas) -> np.ndarray:
    """
    Ux(u, lambda, alpha) = |z| h(alpha - arg z) with z = Wx(u, lambda)

    Returns:
        Real array of shape (channels, *grid, A)
    """
    alphas = check_alpha_grid(alphas, h.k_max)
    powers = harmonic_powers(wx.coeffs, -h.ks)
    out = np.zeros(wx.coeffs.shape + (alphas.size,))
    for k in h.ks:
        coef = h.coef(int(k))
        if coef == 0:
            continue
        term = (coef * powers[-int(k)])[..., None]
        out += term.real * np.cos(k * alphas) - term.imag * np.sin(k * alphas)
    return out


@dataclass(frozen=True, eq=False)
class HarmonicField:
    """Uhat x(u, lambda, k) = h_hat(k) [Wx(u, lambda)]^-k, stored as (channels, len(k_list), *grid)"""
    values: np.ndarray
    labels: Tuple[Tuple[int, int], ...]
    k_list: Tuple[int, ...]

    def __getitem__(self, key) -> np.ndarray:
        label, k = key
        try:
            c = self.labels.index(tuple(label))
            i = self.k_list.index(int(k))
        except ValueError:
            raise KeyError(f"Harmonic field has no entry for channel {label}, k={k}")
        return self.values[c, i]

    def __contains__(self, key) -> bool:
        label, k = key
        return tuple(label) in self.labels and int(k) in self.k_list


def apply_U_hat(wx: AnalyticCoefficients, h: PhaseFilter, k_list: Sequence[int]) -> HarmonicField:
    """Exact harmonic fields for each k in k_list"""
    k_list = tuple(int(k) for k in k_list)
    if any(abs(k) > h.k_max for k in k_list):
        raise ValueError(f"k_list {k_list} exceeds K_max={h.k_max}")
    powers = harmonic_powers(wx.coeffs, [-k for k in k_list])
    values = np.stack([h.coef(k) * powers[-k] for k in k_list], axis=1)
    return HarmonicField(values=values, labels=wx.labels, k_list=k_list)


def invert_from_first_harmonic(hf: HarmonicField, bank: FilterBank, h: PhaseFilter) -> np.ndarray:
    """
    x = sum_lambda Real(conj(Uhat x(., lambda, 1)) / conj(h_hat(1)) * dual_lambda)

    Raises:
        NotInvertibleError: h_hat(1) = 0, as for the absolute value
    """
    h1 = h.coef(1)
    if h1 == 0:
        raise NotInvertibleError(f"Phase filter '{h.kind}' is not invertible from first harmonic (h_hat(1) = 0)")
    if 1 not in hf.k_list:
        raise ValueError("Harmonic field does not contain k=1")
    if hf.labels != bank.labels_all:
        raise ValueError("Harmonic field channels do not match the filter bank")
    coeffs = np.conj(hf.values[:, hf.k_list.index(1)]) / np.conj(h1)
    return reconstruct_frame(AnalyticCoefficients(coeffs=coeffs, bank=bank), bank)


def sharpen_filter(h: PhaseFilter, epsilon: float) -> PhaseFilter:
    """
    Compose h with a filter g so the result is a cubic box spline supported in
    [-epsilon, epsilon] modulo pi

    The composed table is 2 at k=0, 2 sin^4(k eps/4) / (k eps/4)^4 at even k and 0 at odd k.
    g_hat is the ratio to h_hat on even harmonics and 0 on odd ones.
    """
    if h.kind not in ('rectifier', 'absolute'):
        raise ValueError(f"Sharpening needs a rectifier or absolute filter, got '{h.kind}'")
    if not 0 < epsilon <= np.pi / 4:
        raise ValueError(f"epsilon must be in (0, pi/4], got {epsilon}")

    composed = np.zeros(2 * h.k_max + 1, dtype=np.complex128)
    g_hat = np.zeros_like(composed)
    for i, k in enumerate(h.ks):
        if k % 2:
            continue
        if k == 0:
            composed[i] = 2.0
        else:
            t = k * epsilon / 4.0
            composed[i] = 2.0 * np.sin(t) ** 4 / t ** 4
        g_hat[i] = composed[i] / h.hhat[i]
    return PhaseFilter(kind='sharpened', k_max=h.k_max, hhat=composed, g_hat=g_hat)


def check_harmonic_lipschitz(z, zp, k) -> float:
    """max |[z]^k - [z']^k| / (max(1,|k|) |z - z'|) over the samples"""
    z = np.asarray(z, dtype=np.complex128)
    zp = np.asarray(zp, dtype=np.complex128)
    k = np.broadcast_to(np.asarray(k), z.shape)
    gap = np.abs(z - zp)
    if np.any(gap == 0):
        raise ValueError("Lipschitz samples need z != z'")
    ratio = np.abs(phase_harmonic(z, k) - phase_harmonic(zp, k)) / (np.maximum(1, np.abs(k)) * gap)
    return float(ratio.max())


@dataclass(frozen=True)
class BiLipschitzReport:
    min_ratio: float
    max_ratio: float
    lower_bound: float
    upper_bound: float
    norm_h: float
    max_norm_deviation: float

    def to_dict(self) -> Dict[str, float]:
        return dict(self.__dict__)


def check_H_bilipschitz(h: PhaseFilter, z, zp, chunk: int = 4096) -> BiLipschitzReport:
    """
    Extremal ratios ||Hz - Hz'|| / |z - z'| over the samples, with
    ||Hz - Hz'||^2 = sum_k |h_hat(k)|^2 |[z]^-k - [z']^-k|^2 over the table
    """
    z = np.asarray(z, dtype=np.complex128).ravel()
    zp = np.asarray(zp, dtype=np.complex128).ravel()
    if np.any(z == zp):
        raise ValueError("Bi-Lipschitz samples need z != z'")

    weights = np.abs(h.hhat) ** 2
    ks = h.ks
    norm_h = h.norm()
    ratios = []
    worst_norm = 0.0
    for start in range(0, z.size, chunk):
        a, b = z[start:start + chunk, None], zp[start:start + chunk, None]
        ha, hb = phase_harmonic(a, -ks), phase_harmonic(b, -ks)
        diff = np.sqrt(np.sum(weights * np.abs(ha - hb) ** 2, axis=1))
        ratios.append(diff / np.abs(a[:, 0] - b[:, 0]))

        norms = np.sqrt(np.sum(weights * np.abs(ha) ** 2, axis=1))
        moduli = np.abs(a[:, 0])
        nonzero = moduli > 0
        if nonzero.any():
            worst_norm = max(worst_norm, float(np.max(np.abs(norms[nonzero] / moduli[nonzero] - norm_h))))

    ratios = np.concatenate(ratios)
    constants = lipschitz_constants(h)
    return BiLipschitzReport(min_ratio=float(ratios.min()), max_ratio=float(ratios.max()),
                             lower_bound=constants['lower'], upper_bound=constants['kappa'],
                             norm_h=norm_h, max_norm_deviation=worst_norm)


def check_U_bounds(x: np.ndarray, xp: np.ndarray, bank: FilterBank, h: PhaseFilter, eta: float) -> Dict[str, float]:
    """
    ||Ux - Ux'|| / ||x - x'|| against sqrt(2)|h_hat(1)|(1 - eta) and kappa(1 + eta)
    """
    za, zb = analyze(x, bank).coeffs, analyze(xp, bank).coeffs
    weights = np.abs(h.hhat) ** 2
    total = 0.0
    for k, weight in zip(h.ks, weights):
        if weight == 0:
            continue
        gap = np.abs(phase_harmonic(za, -k) - phase_harmonic(zb, -k)) ** 2
        per_channel = gap.reshape(gap.shape[0], -1).sum(axis=1)
        total += weight * float(np.dot(bank.weights, per_channel))
    ratio = np.sqrt(total) / np.linalg.norm(np.asarray(x) - np.asarray(xp))
    constants = lipschitz_constants(h)
    return {
        'ratio': float(ratio),
        'lower': constants['lower'] * (1.0 - eta),
        'upper': constants['kappa'] * (1.0 + eta),
    }


def transposition_profile(wx: AnalyticCoefficients, label, ks: Sequence[int]) -> List[Dict]:
    """
    Spectral centroid and RMS bandwidth of [Wx(., lambda)]^k for each k

    The centroid of the k-th harmonic sits near k times the channel center frequency.
    """
    z = wx[label]
    grids = frequency_grid(z.shape)
    profile = []
    for k in ks:
        power = np.abs(sfft.fftn(phase_harmonic(z, k))) ** 2
        total = power.sum()
        if total == 0:
            profile.append({'k': int(k), 'centroid': [0.0] * z.ndim, 'bandwidth': 0.0})
            continue
        centroid = [float(np.sum(g * power) / total) for g in grids]
        spread = sum((g - c) ** 2 for g, c in zip(grids, centroid))
        profile.append({
            'k': int(k),
            'centroid': centroid,
            'bandwidth': float(np.sqrt(np.sum(spread * power) / total)),
        })
    return profile
