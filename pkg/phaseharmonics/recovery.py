"""
Signal reconstruction from phase-harmonic descriptors by multi-restart L-BFGS.
"""
import time
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.fft as sfft

from .descriptors import DescriptorPlan, DescriptorSet, SelectionIndex, describe, select_coefficients
from .errors import RecoveryError
from .filterbank import FilterBank
from .optimize import LbfgsResult, lbfgs
from .signal_io import RngSpec, check_signal, standard_normal

logger = logging.getLogger('phaseharmonics')

PSNR_CAP = 300.0


@dataclass(frozen=True)
class RecoveryConfig:
    restarts: int = 10
    max_iters: int = 2000
    memory: int = 10
    c1: float = 1e-4
    c2: float = 0.9
    grad_tol: float = 1e-12
    rng: RngSpec = field(default_factory=RngSpec)
    init_scale: float = 1.0
    workers: int = 1

    def __post_init__(self):
        if not 0 < self.c1 < self.c2 < 1:
            raise ValueError(f"Wolfe constants need 0 < c1 < c2 < 1, got c1={self.c1}, c2={self.c2}")
        if self.restarts < 1:
            raise ValueError(f"restarts must be at least 1, got {self.restarts}")
        if self.max_iters < 0 or self.memory < 1 or self.workers < 1:
            raise ValueError("max_iters must be >= 0, memory and workers >= 1")

    @classmethod
    def from_settings(cls, settings: Dict[str, Any]) -> 'RecoveryConfig':
        return cls(restarts=settings['restarts'], max_iters=settings['max_iters'], memory=settings['memory'],
                   c1=settings['c1'], c2=settings['c2'], grad_tol=settings['grad_tol'],
                   rng=RngSpec(settings['seed'], settings['stream']), init_scale=settings['init_scale'],
                   workers=settings['restart_workers'])


@dataclass
class RecoveryResult:
    signal: np.ndarray
    losses: List[float]
    trace: List[float]
    M: int
    psnr: Optional[float] = None
    shift: Any = None
    restarts: List[Dict[str, Any]] = field(default_factory=list)
    solutions: List[np.ndarray] = field(default_factory=list)
    timing: Dict[str, float] = field(default_factory=dict)

    @property
    def best_restart(self) -> int:
        return int(np.argmin(self.losses))

    def report(self) -> Dict[str, Any]:
        return {
            'M': self.M,
            'psnr': self.psnr,
            'shift': self.shift,
            'losses': self.losses,
            'best_restart': self.best_restart,
            'iterations': [r['iterations'] for r in self.restarts],
            'restarts': self.restarts,
            'timing': self.timing,
        }


def loss(desc_x: DescriptorSet, y: np.ndarray, bank: FilterBank,
         selection: Optional[SelectionIndex] = None) -> float:
    """Covariance-matching loss between the target descriptors and those of y"""
    plan = DescriptorPlan(bank, selection or desc_x.selection)
    return plan.loss_and_grad(check_signal(y), desc_x, with_grad=False)[0]


def loss_gradient(desc_x: DescriptorSet, y: np.ndarray, bank: FilterBank,
                  selection: Optional[SelectionIndex] = None) -> np.ndarray:
    """Gradient of the loss with respect to the real signal y"""
    plan = DescriptorPlan(bank, selection or desc_x.selection)
    return plan.loss_and_grad(check_signal(y), desc_x)[1]


def estimate_scale(desc: DescriptorSet, bank: FilterBank) -> float:
    """RMS amplitude of the target read off the diagonal correlations (frame energy)"""
    energy = {}
    for (c, k, c2, k2), value in zip(desc.selection.corr_entries, desc.corrs):
        if c == c2 and k == k2:
            energy[int(c)] = value.real
    if not energy:
        return 1.0
    total = sum(bank.weights[c] * e for c, e in energy.items())
    return float(np.sqrt(max(total, 0.0)))


def _align(x: np.ndarray, y: np.ndarray) -> Tuple[Tuple[int, ...], np.ndarray, float]:
    corr = sfft.ifftn(sfft.fftn(y) * np.conj(sfft.fftn(x))).real
    shift = np.unravel_index(int(np.argmax(corr)), corr.shape)
    aligned = np.roll(y, tuple(-s for s in shift), axis=tuple(range(y.ndim)))
    return tuple(int(s) for s in shift), aligned, float(np.linalg.norm(x - aligned))


def align_and_psnr(x: np.ndarray, y: np.ndarray):
    """
    Best circular shift of y onto x and the PSNR after alignment

    Returns:
        (shift, psnr) where y is closest to x shifted by `shift`; shift is an int for 1D
        signals and a tuple for 2D; PSNR in dB, capped at 300

    Raises:
        ValueError: x is identically zero or shapes differ
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"Shapes differ: {x.shape} vs {y.shape}")
    if not np.any(x):
        raise ValueError("PSNR is undefined for a zero reference signal")
    shift, _, error = _align(x, y)
    peak = np.sqrt(x.size) * np.max(np.abs(x))
    psnr = PSNR_CAP if error == 0 else min(PSNR_CAP, 20.0 * np.log10(peak / error))
    return (shift[0] if x.ndim == 1 else shift), float(psnr)


def _restart_summary(index: int, result: LbfgsResult) -> Dict[str, Any]:
    return {
        'restart': index,
        'status': result.status,
        'iterations': result.iterations,
        'evaluations': result.evaluations,
        'loss': result.fun,
        'grad_norm': result.grad_norm,
    }


def reconstruct(desc_x: DescriptorSet, bank: FilterBank, cfg: Optional[RecoveryConfig] = None,
                reference: Optional[np.ndarray] = None,
                progress: Optional[Callable[[int, int], None]] = None) -> RecoveryResult:
    """
    Recover a signal whose descriptors match desc_x

    Every restart starts from white noise scaled to the target energy and runs L-BFGS on the
    loss; the restart with the smallest final loss wins.

    Args:
        desc_x: Target descriptors
        bank: Filter bank the descriptors were computed on
        cfg: Optimizer settings; defaults to RecoveryConfig()
        reference: Original signal, used only for the aligned PSNR
        progress: Called with (finished restarts, total restarts)

    Raises:
        RecoveryError: every restart produced a non-finite loss
    """
    cfg = cfg or RecoveryConfig()
    plan = DescriptorPlan(bank, desc_x.selection)
    plan.check_target(desc_x)
    scale = cfg.init_scale * estimate_scale(desc_x, bank)
    logger.info(f"Reconstructing from M={desc_x.M} descriptors with {cfg.restarts} restarts, init scale {scale:.3e}")

    started = time.perf_counter()
    finished = []

    def run(index: int) -> LbfgsResult:
        y0 = scale * standard_normal(cfg.rng.spawn(index), bank.shape)
        result = lbfgs(lambda y: plan.loss_and_grad(y, desc_x), y0, memory=cfg.memory,
                       max_iters=cfg.max_iters, c1=cfg.c1, c2=cfg.c2, grad_tol=cfg.grad_tol)
        logger.info(f"Restart {index}: {result.status} after {result.iterations} iterations, loss={result.fun:.3e}")
        finished.append(index)
        if progress is not None:
            progress(len(finished), cfg.restarts)
        return result

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(run, range(cfg.restarts)))
    else:
        results = [run(i) for i in range(cfg.restarts)]

    diagnostics = [_restart_summary(i, r) for i, r in enumerate(results)]
    usable = [i for i, r in enumerate(results) if r.status != 'diverged' and np.isfinite(r.fun)]
    if not usable:
        raise RecoveryError("All restarts diverged (non-finite loss)", diagnostics)

    losses = [r.fun if np.isfinite(r.fun) else float('inf') for r in results]
    best = min(usable, key=lambda i: (losses[i], i))
    outcome = RecoveryResult(signal=results[best].x, losses=losses, trace=results[best].trace, M=desc_x.M,
                             restarts=diagnostics, solutions=[r.x for r in results])

    if reference is not None and np.any(reference):
        outcome.shift, outcome.psnr = align_and_psnr(reference, outcome.signal)
        logger.info(f"Aligned PSNR {outcome.psnr:.2f} dB (shift {outcome.shift})")
    outcome.timing = {'seconds': time.perf_counter() - started}
    return outcome


@dataclass
class SweepResult:
    rows: List[Dict[str, Any]]
    chi: Optional[float]

    def to_dict(self) -> Dict[str, Any]:
        return {'rows': self.rows, 'chi': self.chi}


def fit_decay(rows: Sequence[Dict[str, Any]]) -> Optional[float]:
    """Exponent chi of ||x - x_M|| ~ M^-chi from a least-squares fit in log-log scale"""
    points = [(r['M'], r['error']) for r in rows if r['error'] > 0]
    if len(points) < 2 or len({m for m, _ in points}) < 2:
        return None
    m, err = np.array(points, dtype=np.float64).T
    slope = np.polyfit(np.log(m), np.log(err), 1)[0]
    return float(-slope)


def decay_sweep(x: np.ndarray, bank: FilterBank, deltas: Sequence[int], cfg: Optional[RecoveryConfig] = None,
                beta: float = 1.0, k2_max: int = 16, include_lowpass: bool = True,
                cross_angles: bool = False) -> SweepResult:
    """Reconstruct x for each delta and fit the decay of the error with the descriptor count"""
    x = check_signal(x)
    deltas = [int(d) for d in deltas]
    if any(b <= a for a, b in zip(deltas, deltas[1:])):
        raise ValueError(f"Delta values must be strictly ascending, got {deltas}")

    rows = []
    for delta in deltas:
        selection = select_coefficients(bank, delta, beta, k2_max, include_lowpass, cross_angles)
        desc = describe(x, bank, selection)
        result = reconstruct(desc, bank, cfg, reference=x)
        _, _, error = _align(x, result.signal)
        rows.append({'delta': delta, 'M': desc.M, 'psnr': result.psnr, 'error': error})
        psnr_text = "n/a" if result.psnr is None else f"{result.psnr:.2f} dB"
        logger.info(f"Sweep delta={delta}: M={desc.M}, PSNR={psnr_text}")

    return SweepResult(rows=rows, chi=fit_decay(rows))


def ergodicity_report(result: RecoveryResult, loss_factor: float = 10.0,
                      distance_threshold: float = 0.1) -> Dict[str, Any]:
    """
    Compare restarts that reached a loss within loss_factor of the best one.

    Several near-optimal restarts that stay far apart after alignment mean the descriptors
    no longer pin down the signal (ergodic regime).
    """
    best_loss = min(result.losses)
    candidates = [i for i, value in enumerate(result.losses)
                  if np.isfinite(value) and value <= loss_factor * best_loss + np.finfo(float).tiny]
    distances = []
    for a in range(len(candidates)):
        for b in range(a + 1, len(candidates)):
            first = result.solutions[candidates[a]]
            second = result.solutions[candidates[b]]
            norm = np.linalg.norm(first)
            if norm == 0:
                continue
            _, _, error = _align(first, second)
            distances.append(error / norm)
    max_distance = max(distances) if distances else 0.0
    return {
        'candidates': candidates,
        'max_distance': float(max_distance),
        'median_distance': float(np.median(distances)) if distances else 0.0,
        'ergodic': bool(len(candidates) > 1 and max_distance > distance_threshold),
    }
