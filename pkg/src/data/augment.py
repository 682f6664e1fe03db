from dataclasses import dataclass

import numpy as np

from ..errors import DataError
from ..tensor.random import Bernoulli, RandomSource, UniformInt, draw_noise

BORDER_MODES = ("zero", "reflect")


@dataclass(frozen=True)
class AugmentConfig:
    translate_max: int = 0
    flip: bool = False
    border: str = "zero"

    @property
    def identity(self) -> bool:
        return self.translate_max == 0 and not self.flip


def flip_image(example: np.ndarray) -> np.ndarray:
    """Horizontal flip of a height x width x channels image"""
    return np.ascontiguousarray(example[:, ::-1, :])


def sample_offsets(src: RandomSource, count: int, translate_max: int) -> np.ndarray:
    """``count`` (dy, dx) pairs drawn uniformly from [-translate_max, translate_max]"""
    draws = draw_noise(src.child("translate"), UniformInt(-translate_max, translate_max), (count, 2))
    return draws.data.astype(np.int64)


def translate(example: np.ndarray, dy: int, dx: int, border: str = "zero") -> np.ndarray:
    """Shift content down by ``dy`` and right by ``dx``; vacated pixels filled per ``border``"""
    pad = max(abs(dy), abs(dx))
    if pad == 0:
        return example.copy()
    mode = "constant" if border == "zero" else "reflect"
    padded = np.pad(example, ((pad, pad), (pad, pad), (0, 0)), mode=mode)
    height, width = example.shape[:2]
    top = pad - dy
    left = pad - dx
    return padded[top:top + height, left:left + width, :].copy()


def augment_batch(images: np.ndarray, cfg: AugmentConfig, src: RandomSource) -> np.ndarray:
    """
    Independent random translation and optional flip for every image.

    Args:
        images: Batch of shape (n, height, width, channels)
        cfg: Translation range, flip flag and border mode
        src: Random source for the draws

    Returns:
        Augmented copy of the batch
    """
    if images.ndim != 4:
        raise DataError(f"augment: expected (n, height, width, channels) images, got {images.shape}")
    if cfg.border not in BORDER_MODES:
        raise DataError(f"augment: border must be one of {BORDER_MODES}, got {cfg.border!r}")
    side = min(images.shape[1], images.shape[2])
    if cfg.translate_max < 0 or cfg.translate_max >= side:
        raise DataError(f"augment: translate_max {cfg.translate_max} must lie in [0, {side})")
    if cfg.identity:
        return images.copy()

    count = images.shape[0]
    offsets = sample_offsets(src, count, cfg.translate_max)
    flips = draw_noise(src.child("flip"), Bernoulli(0.5), (count,)).data.astype(bool) if cfg.flip else np.zeros(count, bool)
    out = np.empty_like(images)
    for index in range(count):
        image = translate(images[index], int(offsets[index, 0]), int(offsets[index, 1]), cfg.border)
        out[index] = flip_image(image) if flips[index] else image
    return out


def augment(example: np.ndarray, cfg: AugmentConfig, src: RandomSource) -> np.ndarray:
    """Augment a single image-shaped example"""
    return augment_batch(example[None], cfg, src)[0]
