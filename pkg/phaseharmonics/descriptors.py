"""
Translation-invariant phase-harmonic statistics.

With h_hat = 1 on the selected harmonics, the fields are U(lambda, k) = [Wx(., lambda)]^-k and

    M(lambda, k)              = N^-d sum_u U(lambda, k)
    C(lambda, k, lambda', k') = N^-d sum_u U(lambda, k) conj(U(lambda', k'))
    K = C - M(lambda, k) conj(M(lambda', k'))

Correlations are restricted to frequency-proximate pairs
|k lambda - k' lambda'| <= beta (max(k,1)|lambda| + max(k',1)|lambda'|) within delta octaves.
"""
import math
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.fft as sfft
from scipy import sparse

from .errors import SelectionError
from .filterbank import FilterBank
from .phase_harmonics import HarmonicField, PhaseFilter, harmonic_powers, check_alpha_grid
from .transform import AnalyticCoefficients, analyze, FFT_WORKERS

logger = logging.getLogger('phaseharmonics')

PROXIMITY_RTOL = 1e-12
PAIR_CHUNK = 1 << 22


@dataclass(frozen=True, eq=False)
class SelectionIndex:
    """
    Selected correlation entries (c, k, c', k') and mean entries (c, k).

    Channel indices refer to ``labels``, the bank channels with the low-pass first.
    """
    corr_entries: np.ndarray
    mean_entries: np.ndarray
    labels: Tuple[Tuple[int, int], ...]
    params: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        corr = np.asarray(self.corr_entries, dtype=np.int64).reshape(-1, 4)
        means = np.asarray(self.mean_entries, dtype=np.int64).reshape(-1, 2)
        corr.setflags(write=False)
        means.setflags(write=False)
        object.__setattr__(self, 'corr_entries', corr)
        object.__setattr__(self, 'mean_entries', means)
        object.__setattr__(self, 'labels', tuple(tuple(int(v) for v in lab) for lab in self.labels))

    @property
    def num_corrs(self) -> int:
        return len(self.corr_entries)

    @property
    def num_means(self) -> int:
        return len(self.mean_entries)

    def __len__(self) -> int:
        return self.num_corrs + self.num_means

    def corr_keys(self) -> List[Tuple]:
        return [(self.labels[c], int(k), self.labels[c2], int(k2)) for c, k, c2, k2 in self.corr_entries]

    def mean_keys(self) -> List[Tuple]:
        return [(self.labels[c], int(k)) for c, k in self.mean_entries]

    def matches(self, other: 'SelectionIndex') -> bool:
        return (self.labels == other.labels
                and np.array_equal(self.corr_entries, other.corr_entries)
                and np.array_equal(self.mean_entries, other.mean_entries))


@dataclass(frozen=True, eq=False)
class DescriptorSet:
    selection: SelectionIndex
    means: np.ndarray
    corrs: np.ndarray
    shape: Tuple[int, ...]
    bank_params: Dict[str, Any] = field(default_factory=dict)

    @property
    def N(self) -> int:
        return self.shape[0]

    @property
    def d(self) -> int:
        return len(self.shape)

    @property
    def M(self) -> int:
        return len(self.selection)


def count_breakdown(selection: SelectionIndex) -> Dict[str, int]:
    return {'means': selection.num_means, 'correlations': selection.num_corrs, 'total': len(selection)}


def _proximate(k: int, center: np.ndarray, k2: int, center2: np.ndarray, beta: float) -> bool:
    gap = np.linalg.norm(k * center - k2 * center2)
    bound = beta * (max(k, 1) * np.linalg.norm(center) + max(k2, 1) * np.linalg.norm(center2))
    return gap <= bound * (1.0 + PROXIMITY_RTOL)


def select_coefficients(bank: FilterBank, delta: int, beta: float = 1.0, k2_max: int = 16,
                        include_lowpass: bool = True, cross_angles: bool = False) -> SelectionIndex:
    """
    Enumerate the descriptor entries kept for reconstruction

    Args:
        bank: Filter bank the descriptors are computed on
        delta: Maximum octave separation between the two channels
        beta: Proximity constant of the frequency condition
        k2_max: Largest harmonic on the second slot
        include_lowpass: Let the low-pass channel take part with k, k' in {0, 1}
        cross_angles: 2D only; pair different angles across scales too

    Raises:
        SelectionError: delta outside [0, log2 N], beta <= 0 or k2_max < 1
    """
    log2n = int(round(math.log2(bank.params.n)))
    if not 0 <= delta <= log2n:
        raise SelectionError(f"delta must be in [0, log2 N = {log2n}], got {delta}")
    if beta <= 0:
        raise SelectionError(f"beta must be positive, got {beta}")
    if k2_max < 1:
        raise SelectionError(f"k2_max must be at least 1, got {k2_max}")

    Q = bank.params.Q if bank.ndim == 1 else 1
    labels = bank.labels_all
    scales = bank.scales_all
    centers = bank.centers_all
    channels = [c for c in range(bank.num_channels) if include_lowpass or c != 0]

    admitted = set()
    for c in channels:
        for c2 in channels:
            if not scales[c] <= scales[c2] <= scales[c] + delta * Q:
                continue
            if (bank.ndim == 2 and not cross_angles and c != 0 and c2 != 0
                    and scales[c] != scales[c2] and labels[c][1] != labels[c2][1]):
                continue
            top = 1 if c2 == 0 else k2_max
            for k in (0, 1):
                for k2 in range(top + 1):
                    if _proximate(k, centers[c], k2, centers[c2], beta):
                        admitted.add((c, k, c2, k2))

    def sort_key(entry):
        c, k, c2, k2 = entry
        return (labels[c], k, labels[c2], k2)

    # an entry and its Hermitian mirror carry the same information
    kept = [e for e in admitted
            if (e[2], e[3], e[0], e[1]) not in admitted or sort_key(e) <= sort_key((e[2], e[3], e[0], e[1]))]
    kept.sort(key=sort_key)
    means = sorted(((c, k) for c in channels for k in (0, 1)), key=lambda e: (labels[e[0]], e[1]))

    selection = SelectionIndex(
        corr_entries=np.array(kept, dtype=np.int64).reshape(-1, 4),
        mean_entries=np.array(means, dtype=np.int64).reshape(-1, 2),
        labels=labels,
        params={'delta': int(delta), 'beta': float(beta), 'k2_max': int(k2_max),
                'include_lowpass': bool(include_lowpass), 'cross_angles': bool(cross_angles)},
    )
    logger.info(f"Selected {selection.num_corrs} correlations and {selection.num_means} means "
                f"(delta={delta}, beta={beta}, k2_max={k2_max})")
    return selection


def mean_vector(hf: HarmonicField, keys: Sequence[Tuple]) -> np.ndarray:
    """N^-d sum_u of the harmonic field for each (label, k) key"""
    return np.array([hf[(label, k)].mean() for label, k in keys], dtype=np.complex128)


def correlation(hf: HarmonicField, selection: SelectionIndex) -> np.ndarray:
    """N^-d sum_u U(lambda, k) conj(U(lambda', k')) for each selected correlation"""
    return np.array([np.mean(hf[(a, k)] * np.conj(hf[(b, k2)])) for a, k, b, k2 in selection.corr_keys()],
                    dtype=np.complex128)


def covariance(desc: DescriptorSet) -> np.ndarray:
    """
    K = C - M(lambda, k) conj(M(lambda', k')); means that are not selected count as zero
    """
    lookup = {(int(c), int(k)): v for (c, k), v in zip(desc.selection.mean_entries, desc.means)}
    outer = np.array([lookup.get((int(c), int(k)), 0j) * np.conj(lookup.get((int(c2), int(k2)), 0j))
                      for c, k, c2, k2 in desc.selection.corr_entries], dtype=np.complex128)
    return desc.corrs - outer


class DescriptorPlan:
    """
    Precomputed index arrays for descriptors of signals on one bank and one selection,
    with the loss against a target and its gradient.
    """

    def __init__(self, bank: FilterBank, selection: SelectionIndex, workers: Optional[int] = None):
        if selection.labels != bank.labels_all:
            raise SelectionError("Selection was built for a different filter bank")
        self.bank = bank
        self.selection = selection
        self.workers = workers or FFT_WORKERS
        self.npts = int(np.prod(bank.shape))
        self.axes = tuple(range(1, bank.ndim + 1))

        corr = selection.corr_entries
        means = selection.mean_entries
        keys = sorted({(int(c), int(k)) for c, k in means}
                      | {(int(c), int(k)) for c, k in corr[:, :2]}
                      | {(int(c), int(k)) for c, k in corr[:, 2:]})
        index = {key: i for i, key in enumerate(keys)}
        self.num_fields = len(keys)
        self.field_channel = np.array([c for c, _ in keys], dtype=np.int64)
        self.field_exponent = np.array([-k for _, k in keys], dtype=np.int64)

        self.corr_a = np.array([index[(int(c), int(k))] for c, k in corr[:, :2]], dtype=np.int64)
        self.corr_b = np.array([index[(int(c), int(k))] for c, k in corr[:, 2:]], dtype=np.int64)
        self.mean_fields = np.array([index[(int(c), int(k))] for c, k in means], dtype=np.int64)

        mean_pos = {(int(c), int(k)): i for i, (c, k) in enumerate(means)}
        self.corr_mean_a = np.array([mean_pos.get((int(c), int(k)), -1) for c, k in corr[:, :2]], dtype=np.int64)
        self.corr_mean_b = np.array([mean_pos.get((int(c), int(k)), -1) for c, k in corr[:, 2:]], dtype=np.int64)

        self.channel_sum = sparse.csr_matrix(
            (np.ones(self.num_fields), (self.field_channel, np.arange(self.num_fields))),
            shape=(bank.num_channels, self.num_fields))

    def coefficients(self, y: np.ndarray) -> np.ndarray:
        """Wavelet coefficients flattened to (channels, N^d)"""
        return analyze(y, self.bank, workers=self.workers).coeffs.reshape(self.bank.num_channels, -1)

    def fields(self, z: np.ndarray) -> np.ndarray:
        """[z_c]^n for every (channel, exponent) the selection touches"""
        out = np.empty((self.num_fields, z.shape[1]), dtype=np.complex128)
        for n in np.unique(self.field_exponent):
            rows = np.flatnonzero(self.field_exponent == n)
            powers = harmonic_powers(z[self.field_channel[rows]], [n])
            out[rows] = powers[int(n)]
        return out

    def _pair_means(self, V: np.ndarray) -> np.ndarray:
        out = np.empty(len(self.corr_a), dtype=np.complex128)
        step = max(1, PAIR_CHUNK // max(1, V.shape[1]))
        for start in range(0, len(out), step):
            a = self.corr_a[start:start + step]
            b = self.corr_b[start:start + step]
            out[start:start + step] = np.sum(V[a] * np.conj(V[b]), axis=1) / self.npts
        return out

    def statistics(self, V: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        means = V[self.mean_fields].sum(axis=1) / self.npts
        return means, self._pair_means(V)

    def describe(self, y: np.ndarray) -> DescriptorSet:
        means, corrs = self.statistics(self.fields(self.coefficients(y)))
        return DescriptorSet(selection=self.selection, means=means, corrs=corrs,
                             shape=tuple(self.bank.shape), bank_params=self.bank.params.to_dict())

    def check_target(self, target: DescriptorSet) -> None:
        if not target.selection.matches(self.selection):
            raise SelectionError("Target descriptors were computed on a different selection")
        if tuple(target.shape) != tuple(self.bank.shape):
            raise SelectionError(f"Target grid {target.shape} does not match bank grid {self.bank.shape}")

    @staticmethod
    def _slot(values: np.ndarray, idx: np.ndarray) -> np.ndarray:
        return np.where(idx >= 0, values[np.maximum(idx, 0)], 0j) if len(values) else np.zeros(len(idx), complex)

    def loss_and_grad(self, y: np.ndarray, target: DescriptorSet, with_grad: bool = True):
        """
        E(y) = sum |Cy - Cx - My conj(M'x) - Mx conj(M'y) + 2 Mx conj(M'x)|^2 + sum |My - Mx|^2

        The first sum is |Ky - Kx + (My - Mx) conj(M'y - M'x)|^2 expanded. The gradient is taken
        with respect to the real signal y; points where a coefficient vanishes contribute zero.
        """
        self.check_target(target)
        z = self.coefficients(y)
        V = self.fields(z)
        my, cy = self.statistics(V)
        mx, cx = target.means, target.corrs

        mya, myb = self._slot(my, self.corr_mean_a), self._slot(my, self.corr_mean_b)
        mxa, mxb = self._slot(mx, self.corr_mean_a), self._slot(mx, self.corr_mean_b)
        resid = cy - cx - mya * np.conj(mxb) - mxa * np.conj(myb) + 2.0 * mxa * np.conj(mxb)
        dmean = my - mx
        energy = float(np.sum(np.abs(resid) ** 2) + np.sum(np.abs(dmean) ** 2))
        if not with_grad:
            return energy, None

        # gradients G with dE = Re(conj(G) dq) for every complex quantity q
        pair = sparse.csr_matrix((2.0 * resid / self.npts, (self.corr_a, self.corr_b)),
                                 shape=(self.num_fields, self.num_fields))
        grad_fields = pair @ V + pair.conj().T.tocsr() @ V

        grad_means = 2.0 * dmean
        valid_a = self.corr_mean_a >= 0
        valid_b = self.corr_mean_b >= 0
        np.add.at(grad_means, self.corr_mean_a[valid_a], -2.0 * resid[valid_a] * mxb[valid_a])
        np.add.at(grad_means, self.corr_mean_b[valid_b], -2.0 * np.conj(resid[valid_b]) * mxa[valid_b])
        grad_fields[self.mean_fields] += grad_means[:, None] / self.npts

        n = self.field_exponent[:, None].astype(np.float64)
        chain = np.conj(grad_fields) * V * (1.0 - n) + grad_fields * np.conj(V) * (1.0 + n)
        numerator = self.channel_sum @ chain
        modulus2 = np.abs(z) ** 2
        inverse = np.divide(z, 2.0 * modulus2, out=np.zeros_like(z), where=modulus2 > 0)
        grad_z = (numerator * inverse).reshape((self.bank.num_channels,) + self.bank.shape)

        spectra = sfft.fftn(grad_z, axes=self.axes, workers=self.workers)
        total = np.sum(spectra * np.conj(self.bank.spectra), axis=0)
        grad_y = sfft.ifftn(total, workers=self.workers).real
        return energy, grad_y


def describe(x: np.ndarray, bank: FilterBank, selection: SelectionIndex) -> DescriptorSet:
    """Means and correlations of x on the selected entries"""
    return DescriptorPlan(bank, selection).describe(x)


def mean_flatness(desc: DescriptorSet) -> float:
    """max over band-pass channels and k >= 1 of |M(lambda, k)| / M(lambda, 0); 0 when undefined"""
    lookup = {(int(c), int(k)): v for (c, k), v in zip(desc.selection.mean_entries, desc.means)}
    worst = 0.0
    for (c, k), value in lookup.items():
        if c == 0 or k < 1:
            continue
        base = lookup.get((c, 0), 0j).real
        if base <= 0:
            continue
        worst = max(worst, abs(value) / base)
    return float(worst)


def phase_domain_matrix(wx: AnalyticCoefficients, h: PhaseFilter, label, label2, alphas) -> np.ndarray:
    """
    Correlation of U(lambda, alpha) and U(lambda', alpha') over alpha x alpha', assembled from
    the (k, k') matrix h_hat(k) conj(h_hat(k')) C(lambda, k, lambda', k') by inverse Fourier series
    """
    alphas = check_alpha_grid(alphas, h.k_max)
    weighted = harmonic_matrix(wx, h, label, label2)
    basis = np.exp(1j * np.multiply.outer(alphas, h.ks))
    return (basis @ weighted @ np.conj(basis).T).real


def harmonic_matrix(wx: AnalyticCoefficients, h: PhaseFilter, label, label2) -> np.ndarray:
    """The (k, k') matrix h_hat(k) conj(h_hat(k')) C(lambda, k, lambda', k') over the table"""
    ks = h.ks
    first = np.stack([harmonic_powers(wx[label].ravel(), [-k])[-k] for k in ks])
    second = np.stack([harmonic_powers(wx[label2].ravel(), [-k])[-k] for k in ks])
    return h.hhat[:, None] * np.conj(h.hhat)[None, :] * (first @ np.conj(second).T / first.shape[1])


def full_correlation_matrix(wx: AnalyticCoefficients, h: PhaseFilter) -> np.ndarray:
    """Dense correlation over all (channel, k) pairs; meant for small grids only"""
    rows = []
    for coeff in wx.coeffs:
        powers = harmonic_powers(coeff.ravel(), -h.ks)
        rows.extend(h.coef(int(k)) * powers[-int(k)] for k in h.ks)
    U = np.stack(rows)
    return U @ np.conj(U).T / U.shape[1]


def decorrelation_mass(wx: AnalyticCoefficients, label, label2, beta: float, k_max: int) -> float:
    """
    Share of the squared Frobenius norm of C(lambda, k, lambda', k'), 0 <= k, k' <= k_max,
    carried by entries that fail the proximity condition
    """
    bank = wx.bank
    c, c2 = bank.channel_index(label), bank.channel_index(label2)
    centers = bank.centers_all
    first = harmonic_powers(wx.coeffs[c].ravel(), [-k for k in range(k_max + 1)])
    second = harmonic_powers(wx.coeffs[c2].ravel(), [-k for k in range(k_max + 1)])
    total = violating = 0.0
    for k in range(k_max + 1):
        for k2 in range(k_max + 1):
            mass = abs(np.mean(first[-k] * np.conj(second[-k2]))) ** 2
            total += mass
            if not _proximate(k, centers[c], k2, centers[c2], beta):
                violating += mass
    return violating / total if total > 0 else 0.0
