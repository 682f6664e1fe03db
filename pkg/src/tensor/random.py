"""
Seedable random sources with named, independent sub-streams.

Sub-streams are keyed by consumer name and an index (usually the training
step), so toggling one noise source never shifts the draws of another.
"""

import zlib
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from ..errors import ShapeError
from .tensor import Tensor


class RandomSource:
    """Deterministic generator identified by a seed and a key path"""

    def __init__(self, seed: int, path: Tuple[int, ...] = ()):
        if seed < 0:
            raise ValueError(f"Seed must be nonnegative, got {seed}")
        self.seed = int(seed)
        self.path = tuple(path)
        self._generator: Optional[np.random.Generator] = None

    def child(self, name: str, index: int = 0) -> "RandomSource":
        """Independent sub-stream for consumer ``name`` at ``index``"""
        return RandomSource(self.seed, self.path + (zlib.crc32(name.encode("utf-8")), int(index)))

    @property
    def generator(self) -> np.random.Generator:
        if self._generator is None:
            sequence = np.random.SeedSequence(self.seed, spawn_key=self.path)
            self._generator = np.random.Generator(np.random.PCG64(sequence))
        return self._generator

    def __repr__(self) -> str:
        return f"RandomSource(seed={self.seed}, path={self.path})"


@dataclass(frozen=True)
class Gaussian:
    sigma: float


@dataclass(frozen=True)
class Bernoulli:
    p: float


@dataclass(frozen=True)
class UniformInt:
    low: int
    high: int


NoiseKind = Union[Gaussian, Bernoulli, UniformInt]


def draw_noise(src: RandomSource, kind: NoiseKind, shape: Sequence[int],
               dtype: np.dtype = np.float64) -> Tensor:
    """
    Draw a noise tensor from one sub-stream.

    Args:
        src: Random source to advance
        kind: Gaussian(sigma), Bernoulli(p) or UniformInt(low, high) (inclusive)
        shape: Output shape
        dtype: Float width of the result

    Returns:
        Noise tensor of the requested shape
    """
    shape = tuple(int(s) for s in shape)
    generator = src.generator
    if isinstance(kind, Gaussian):
        if kind.sigma < 0:
            raise ShapeError(f"gaussian noise: sigma must be >= 0, got {kind.sigma}")
        values = generator.normal(0.0, 1.0, size=shape) * kind.sigma
    elif isinstance(kind, Bernoulli):
        if not 0.0 <= kind.p <= 1.0:
            raise ShapeError(f"bernoulli noise: p must lie in [0, 1], got {kind.p}")
        values = (generator.random(size=shape) < kind.p).astype(np.float64)
    elif isinstance(kind, UniformInt):
        if kind.low > kind.high:
            raise ShapeError(f"uniform-int noise: low {kind.low} exceeds high {kind.high}")
        values = generator.integers(kind.low, kind.high + 1, size=shape).astype(np.float64)
    else:
        raise ShapeError(f"Unknown noise kind: {kind!r}")
    return Tensor.wrap(np.asarray(values, dtype=dtype))
