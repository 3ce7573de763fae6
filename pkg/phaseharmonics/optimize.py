"""
Limited-memory BFGS with a strong Wolfe line search.
"""
import logging
import warnings
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy.optimize import line_search

logger = logging.getLogger('phaseharmonics')


class CachedObjective:
    """Wraps fun(x) -> (value, gradient) so value and gradient at one point cost one call"""

    def __init__(self, fun: Callable[[np.ndarray], Tuple[float, np.ndarray]]):
        self.fun = fun
        self.evaluations = 0
        self._x = None
        self._value = None
        self._grad = None

    def _update(self, x: np.ndarray) -> None:
        if self._x is None or not np.array_equal(x, self._x):
            self._value, self._grad = self.fun(x)
            self._x = np.array(x, copy=True)
            self.evaluations += 1

    def value(self, x: np.ndarray) -> float:
        self._update(x)
        return self._value

    def grad(self, x: np.ndarray) -> np.ndarray:
        self._update(x)
        return self._grad


@dataclass
class LbfgsResult:
    x: np.ndarray
    fun: float
    grad_norm: float
    iterations: int
    evaluations: int
    status: str
    trace: List[float] = field(default_factory=list)


class InverseHessian:
    """Two-loop recursion over the last `memory` curvature pairs"""

    def __init__(self, memory: int):
        self.pairs = deque(maxlen=memory)

    def append(self, s: np.ndarray, y: np.ndarray) -> bool:
        sy = float(np.dot(s, y))
        if sy <= 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            return False
        self.pairs.append((s, y, 1.0 / sy))
        return True

    def reset(self) -> None:
        self.pairs.clear()

    def apply(self, g: np.ndarray) -> np.ndarray:
        q = g.copy()
        alphas = []
        for s, y, rho in reversed(self.pairs):
            a = rho * np.dot(s, q)
            q -= a * y
            alphas.append(a)
        if self.pairs:
            s, y, _ = self.pairs[-1]
            q *= np.dot(s, y) / np.dot(y, y)
        for (s, y, rho), a in zip(self.pairs, reversed(alphas)):
            b = rho * np.dot(y, q)
            q += (a - b) * s
        return q


def lbfgs(fun: Callable[[np.ndarray], Tuple[float, np.ndarray]], x0: np.ndarray, memory: int = 10,
          max_iters: int = 2000, c1: float = 1e-4, c2: float = 0.9, grad_tol: float = 1e-12,
          callback: Optional[Callable[[int, float], None]] = None) -> LbfgsResult:
    """
    Minimize fun from x0

    Args:
        fun: Returns (value, gradient) at a point
        x0: Starting point, any shape
        memory: Number of stored curvature pairs
        max_iters: Iteration cap
        c1, c2: Strong Wolfe constants, 0 < c1 < c2 < 1
        grad_tol: Stop when ||grad|| / max(1, value) falls below it
        callback: Called with (iteration, value) after every accepted step

    Returns:
        LbfgsResult with status 'converged', 'max_iters', 'wolfe_failure' or 'diverged'
    """
    if not 0 < c1 < c2 < 1:
        raise ValueError(f"Wolfe constants need 0 < c1 < c2 < 1, got c1={c1}, c2={c2}")

    shape = np.shape(x0)
    objective = CachedObjective(lambda v: _flat(fun, v, shape))
    x = np.asarray(x0, dtype=np.float64).ravel().copy()
    value, grad = objective.value(x), objective.grad(x)
    trace = [value]
    hessian = InverseHessian(memory)
    previous_value = None
    status = 'max_iters'
    iteration = 0

    if not np.isfinite(value) or not np.all(np.isfinite(grad)):
        status = 'diverged'
        max_iters = 0

    while iteration < max_iters:
        grad_norm = float(np.linalg.norm(grad))
        if grad_norm <= grad_tol * max(1.0, value):
            status = 'converged'
            break

        direction = -hessian.apply(grad)
        step = _wolfe_step(objective, x, direction, grad, value, previous_value, c1, c2)
        if step is None and hessian.pairs:
            logger.debug(f"Wolfe search failed at iteration {iteration}, retrying along the gradient")
            hessian.reset()
            direction = -grad
            step = _wolfe_step(objective, x, direction, grad, value, None, c1, c2)
        if step is None:
            status = 'wolfe_failure'
            break

        x_new = x + step * direction
        value_new, grad_new = objective.value(x_new), objective.grad(x_new)
        if not np.isfinite(value_new) or not np.all(np.isfinite(grad_new)):
            status = 'diverged'
            break

        hessian.append(x_new - x, grad_new - grad)
        previous_value, value = value, value_new
        x, grad = x_new, grad_new
        iteration += 1
        trace.append(value)
        if callback is not None:
            callback(iteration, value)

    grad_norm = float(np.linalg.norm(grad))
    logger.debug(f"L-BFGS stopped ({status}) after {iteration} iterations, loss={value:.3e}")
    return LbfgsResult(x=x.reshape(shape), fun=float(value), grad_norm=grad_norm, iterations=iteration,
                       evaluations=objective.evaluations, status=status, trace=trace)


def _flat(fun, v, shape):
    value, grad = fun(v.reshape(shape))
    return float(value), np.asarray(grad, dtype=np.float64).ravel()


def _wolfe_step(objective: CachedObjective, x, direction, grad, value, previous_value, c1, c2):
    if np.dot(grad, direction) >= 0:
        return None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with np.errstate(over='ignore', invalid='ignore'):
            alpha = line_search(objective.value, objective.grad, x, direction, gfk=grad, old_fval=value,
                                old_old_fval=previous_value, c1=c1, c2=c2, maxiter=50)[0]
    if alpha is None or not np.isfinite(alpha) or alpha <= 0:
        return None
    return float(alpha)
