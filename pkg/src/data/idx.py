"""
IDX reader and writer.

Images use magic 0x00000803 (unsigned bytes, n x height x width), labels use
0x00000801 (unsigned bytes, n). All header integers are big-endian. Pixel
values are scaled to [0, 1] on read.
"""

from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
import structlog

from ..errors import DataError, DataFormatError
from .datasets import Dataset

logger = structlog.get_logger()

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801

PathLike = Union[str, Path]


def _read_header(raw: bytes, expected_magic: int, ndims: int, path: str) -> Tuple[Tuple[int, ...], int]:
    header_size = 4 + 4 * ndims
    if len(raw) < 4:
        raise DataFormatError(f"file too short for magic number ({len(raw)} bytes)", offset=len(raw), path=path)
    magic = int(np.frombuffer(raw, dtype=">u4", count=1, offset=0)[0])
    if magic != expected_magic:
        raise DataFormatError(f"bad magic 0x{magic:08x}, expected 0x{expected_magic:08x}", offset=0, path=path)
    if len(raw) < header_size:
        raise DataFormatError(f"truncated header, expected {ndims} dimensions", offset=len(raw), path=path)
    dims = tuple(int(d) for d in np.frombuffer(raw, dtype=">u4", count=ndims, offset=4))
    payload = int(np.prod(dims))
    available = len(raw) - header_size
    if available < payload:
        raise DataFormatError(
            f"truncated payload: {payload} bytes expected, {available} present",
            offset=header_size + available, path=path,
        )
    if available > payload:
        raise DataFormatError(f"{available - payload} trailing bytes after payload",
                              offset=header_size + payload, path=path)
    return dims, header_size


def read_idx_images(path: PathLike) -> np.ndarray:
    raw = Path(path).read_bytes()
    dims, offset = _read_header(raw, IMAGE_MAGIC, 3, str(path))
    pixels = np.frombuffer(raw, dtype=np.uint8, offset=offset).reshape(dims + (1,))
    return pixels.astype(np.float64) / 255.0


def read_idx_labels(path: PathLike) -> np.ndarray:
    raw = Path(path).read_bytes()
    dims, offset = _read_header(raw, LABEL_MAGIC, 1, str(path))
    return np.frombuffer(raw, dtype=np.uint8, offset=offset).astype(np.int64).reshape(dims)


def load_idx(path: PathLike, labels_path: Optional[PathLike] = None,
             n_classes: Optional[int] = None) -> Dataset:
    """
    Load an IDX image file and an optional paired label file.

    Args:
        path: Image file (magic 0x00000803)
        labels_path: Label file (magic 0x00000801)
        n_classes: Class count (default: largest label + 1, or 10 without labels)

    Returns:
        Dataset of shape (n, height, width, 1) with values in [0, 1]
    """
    images = read_idx_images(path)
    labels = None
    if labels_path is not None:
        labels = read_idx_labels(labels_path)
        if labels.shape[0] != images.shape[0]:
            raise DataError(f"{labels.shape[0]} labels in {labels_path} for {images.shape[0]} images in {path}")
    if n_classes is None:
        n_classes = int(labels.max()) + 1 if labels is not None and labels.size else 10
    logger.info("IDX loaded", path=str(path), examples=int(images.shape[0]), shape=list(images.shape[1:]))
    return Dataset(examples=images, labels=labels, n_classes=n_classes, name=Path(path).stem)


def write_idx(ds: Dataset, path: PathLike, labels_path: Optional[PathLike] = None) -> None:
    """
    Write a single-channel image dataset in IDX format.

    Values are mapped to bytes with ``round(x * 255)``; values outside [0, 1]
    are rejected rather than clipped.
    """
    if not ds.is_image or ds.examples.shape[-1] != 1:
        raise DataError(f"write_idx: need single-channel images (n, h, w, 1), got {ds.examples.shape}")
    if ds.examples.min() < 0.0 or ds.examples.max() > 1.0:
        raise DataError("write_idx: pixel values must lie in [0, 1]")
    n, height, width, _ = ds.examples.shape
    pixels = np.rint(ds.examples[..., 0] * 255.0).astype(np.uint8)
    header = np.array([IMAGE_MAGIC, n, height, width], dtype=">u4").tobytes()
    Path(path).write_bytes(header + pixels.tobytes())

    if labels_path is not None:
        if ds.labels is None:
            raise DataError("write_idx: labels_path given but dataset has no labels")
        if ds.labels.max(initial=0) > 255:
            raise DataError("write_idx: labels must fit in one byte")
        label_header = np.array([LABEL_MAGIC, n], dtype=">u4").tobytes()
        Path(labels_path).write_bytes(label_header + ds.labels.astype(np.uint8).tobytes())
    logger.info("IDX written", path=str(path), examples=int(n))
