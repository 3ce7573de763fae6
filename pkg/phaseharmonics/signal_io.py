"""
Signal storage formats, synthetic test signals and deterministic random sources.

Raw signals are little-endian float64 arrays in C order next to a JSON sidecar
``<path>.json`` holding ``{"shape": [...], "dtype": "f64le"}``. Grayscale images
are read and written as binary PGM (P5) through Pillow.
"""
import os
import json
import logging
from dataclasses import dataclass
from typing import Sequence, Tuple, Union

import numpy as np
from PIL import Image

from .errors import SignalFormatError

logger = logging.getLogger('phaseharmonics')

RAW_DTYPE = '<f8'
SIDECAR_DTYPE = 'f64le'


@dataclass(frozen=True)
class RngSpec:
    """Seed and stream id of a reproducible random source"""
    seed: int = 0
    stream: int = 0

    def __post_init__(self):
        if self.seed < 0 or self.stream < 0:
            raise ValueError(f"seed and stream must be unsigned, got ({self.seed}, {self.stream})")

    def generator(self) -> np.random.Generator:
        # Philox is counter based: a (seed, stream) pair fixes the whole stream
        return np.random.Generator(np.random.Philox(np.random.SeedSequence([self.seed, self.stream])))

    def spawn(self, index: int) -> 'RngSpec':
        """Child source for an independent sub-task, e.g. one restart"""
        return RngSpec(seed=self.seed, stream=(self.stream << 16) + index + 1)


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def check_signal(data: np.ndarray, name: str = 'signal') -> np.ndarray:
    """
    Validate a signal array and return it as float64

    Raises:
        SignalFormatError: wrong dimension, non power-of-two axes or non-finite values
    """
    arr = np.asarray(data)
    if np.iscomplexobj(arr):
        raise SignalFormatError(f"{name} must be real-valued")
    arr = arr.astype(np.float64, copy=False)
    if arr.ndim not in (1, 2):
        raise SignalFormatError(f"{name} must be 1D or 2D, got {arr.ndim} dimensions")
    for n in arr.shape:
        if not _is_power_of_two(n):
            raise SignalFormatError(f"{name} shape {arr.shape} has an axis that is not a power of two")
    if not np.all(np.isfinite(arr)):
        raise SignalFormatError(f"{name} contains NaN or Inf entries")
    return arr


def sidecar_path(path: str) -> str:
    return f"{path}.json"


def load_signal(path: str) -> np.ndarray:
    """
    Load a signal from a raw float64 file with JSON sidecar, or from a PGM image

    Args:
        path: Raw payload path, or a path ending in .pgm

    Returns:
        Validated float64 array
    """
    if not os.path.exists(path):
        raise SignalFormatError(f"Signal file not found: {path}")

    if path.lower().endswith('.pgm'):
        with Image.open(path) as image:
            if image.format != 'PPM' or image.mode != 'L':
                raise SignalFormatError(f"{path} is not an 8-bit grayscale PGM image")
            data = np.asarray(image, dtype=np.float64) / 255.0
        logger.debug(f"Loaded image {path} with shape {data.shape}")
        return check_signal(data, path)

    meta_path = sidecar_path(path)
    try:
        with open(meta_path, 'r', encoding='utf-8') as f:
            meta = json.load(f)
    except FileNotFoundError:
        raise SignalFormatError(f"Missing sidecar {meta_path}")
    except json.JSONDecodeError as e:
        raise SignalFormatError(f"Malformed sidecar {meta_path}: {e}")

    shape = meta.get('shape') if isinstance(meta, dict) else None
    if not isinstance(shape, list) or not shape or not all(isinstance(n, int) and n > 0 for n in shape):
        raise SignalFormatError(f"Sidecar {meta_path} needs a 'shape' list of positive integers")
    dtype = meta.get('dtype', SIDECAR_DTYPE)
    if dtype != SIDECAR_DTYPE:
        raise SignalFormatError(f"Unsupported dtype '{dtype}' in {meta_path}")
    for n in shape:
        if not _is_power_of_two(n):
            raise SignalFormatError(f"Shape {shape} in {meta_path} is not made of powers of two")

    payload = np.fromfile(path, dtype=RAW_DTYPE)
    expected = int(np.prod(shape))
    if payload.size != expected:
        raise SignalFormatError(f"{path} holds {payload.size} values, sidecar shape needs {expected}")
    return check_signal(payload.reshape(shape).astype(np.float64), path)


def save_signal(signal: np.ndarray, path: str) -> None:
    """Write a signal as raw float64 + sidecar, or as PGM when path ends in .pgm"""
    data = check_signal(signal)
    if path.lower().endswith('.pgm'):
        if data.ndim != 2:
            raise SignalFormatError("PGM output needs a 2D signal")
        pixels = np.round(np.clip(data, 0.0, 1.0) * 255.0).astype(np.uint8)
        Image.fromarray(pixels).save(path)
        return

    np.ascontiguousarray(data, dtype=RAW_DTYPE).tofile(path)
    with open(sidecar_path(path), 'w', encoding='utf-8') as f:
        json.dump({'shape': list(data.shape), 'dtype': SIDECAR_DTYPE}, f)
    logger.debug(f"Saved signal {data.shape} to {path}")


def standard_normal(rng: RngSpec, size: Union[int, Tuple[int, ...]]) -> np.ndarray:
    """Standard normal draws by Box-Muller on the Philox uniform stream"""
    count = int(np.prod(size))
    pairs = (count + 1) // 2
    u = rng.generator().random((2, pairs))
    radius = np.sqrt(-2.0 * np.log1p(-u[0]))
    angle = 2.0 * np.pi * u[1]
    values = np.concatenate([radius * np.cos(angle), radius * np.sin(angle)])[:count]
    return values.reshape(size)


def gen_white_noise(shape: Union[int, Sequence[int]], rng: RngSpec) -> np.ndarray:
    """I.i.d. standard normal signal"""
    shape = (shape,) if isinstance(shape, (int, np.integer)) else tuple(shape)
    if len(shape) not in (1, 2) or not all(_is_power_of_two(n) for n in shape):
        raise ValueError(f"White noise shape must be 1D or 2D powers of two, got {shape}")
    return standard_normal(rng, shape)


def gen_piecewise_regular(n: int, num_singularities: int, rng: RngSpec) -> np.ndarray:
    """
    Sum of cubic pieces joined at random jump discontinuities, max |x| = 1

    Args:
        n: Length, a power of two
        num_singularities: Number of interior breakpoints, 1..n/8
        rng: Random source
    """
    if not _is_power_of_two(n):
        raise ValueError(f"Length must be a power of two, got {n}")
    if not 1 <= num_singularities <= n // 8:
        raise ValueError(f"num_singularities must be in [1, {n // 8}], got {num_singularities}")

    gen = rng.generator()
    breaks = np.sort(gen.choice(np.arange(1, n), size=num_singularities, replace=False))
    edges = np.concatenate([[0], breaks, [n]])
    coefs = gen.uniform(-1.0, 1.0, size=(len(edges) - 1, 4))

    x = np.empty(n)
    for (start, stop), c in zip(zip(edges[:-1], edges[1:]), coefs):
        t = np.linspace(0.0, 1.0, stop - start, endpoint=False)
        x[start:stop] = c[0] + c[1] * t + c[2] * t ** 2 + c[3] * t ** 3

    peak = np.max(np.abs(x))
    if peak == 0.0:
        x[0] = 1.0
        peak = 1.0
    return x / peak


def _on_grid(freq: float, n: int) -> bool:
    m = freq * n / (2.0 * np.pi)
    return abs(m - round(m)) <= 1e-9 * max(1.0, abs(m))


def gen_modulated_cosine(n: int, nu: float, lam: float) -> np.ndarray:
    """x(u) = (1 - cos(nu u)) cos(lam u), a signal that is not recoverable from its descriptors"""
    if not _is_power_of_two(n):
        raise ValueError(f"Length must be a power of two, got {n}")
    if nu < 0 or nu >= lam or lam >= np.pi:
        raise ValueError(f"Frequencies must satisfy 0 <= nu < lam < pi, got nu={nu}, lam={lam}")
    if not (_on_grid(nu, n) and _on_grid(lam, n)):
        raise ValueError("nu and lam must be integer multiples of 2*pi/n")
    u = np.arange(n)
    return (1.0 - np.cos(nu * u)) * np.cos(lam * u)


def gen_cartoon(n: int, rng: RngSpec) -> np.ndarray:
    """n x n image: one constant disk over a constant background, values in [0, 1]"""
    if not _is_power_of_two(n) or n < 8:
        raise ValueError(f"Image side must be a power of two >= 8, got {n}")
    gen = rng.generator()
    radius = gen.uniform(n / 8.0, n / 3.0)
    center = gen.uniform(radius, n - radius, size=2)
    background, foreground = gen.uniform(0.0, 0.4), gen.uniform(0.6, 1.0)

    rows, cols = np.meshgrid(np.arange(n), np.arange(n), indexing='ij')
    inside = (rows - center[0]) ** 2 + (cols - center[1]) ** 2 <= radius ** 2
    image = np.where(inside, foreground, background)
    return image / image.max()


def circular_shift(x: np.ndarray, tau) -> np.ndarray:
    """Periodic integer shift: result[u] = x[u - tau]"""
    x = np.asarray(x)
    if np.ndim(tau) == 0:
        tau = (int(tau),) * x.ndim if x.ndim == 1 else (int(tau), 0)
    return np.roll(x, tuple(int(t) for t in tau), axis=tuple(range(x.ndim)))
