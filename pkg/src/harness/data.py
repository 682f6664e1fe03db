"""
Assemble datasets, the label split and the model description for a run.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
import structlog

from ..config.experiment import ExperimentConfig
from ..data.datasets import Dataset, SemiSupervisedSplit, holdout_split, make_glyphs, make_two_moons, remove_labels
from ..data.idx import load_idx
from ..data.normalize import TransformRecord, standardize, zca_whiten
from ..errors import DataError
from ..nn.spec import ModelSpec, canonical_convnet_spec, linear_spec, mlp_spec
from ..tensor.random import RandomSource

logger = structlog.get_logger()

# Roles used to derive independent data seeds from the run seed
DATA_ROLES = {"train": 0, "test": 1, "extra": 2}


def data_seed(seed: int, role: str) -> int:
    return int(np.random.SeedSequence([seed, DATA_ROLES[role]]).generate_state(1)[0])


@dataclass
class ExperimentData:
    train: Dataset
    test: Dataset
    split: SemiSupervisedSplit
    transform: Optional[TransformRecord]

    @property
    def labeled_train(self) -> Dataset:
        return self.train.subset(self.split.labeled_indices, name=f"{self.train.name}-labeled")

    @property
    def n_ids(self) -> int:
        extra = len(self.split.extra) if self.split.extra is not None else 0
        return len(self.train) + extra


def _raw_datasets(cfg: ExperimentConfig):
    if cfg.dataset == "two_moons":
        train = make_two_moons(cfg.train_size, cfg.data_noise, data_seed(cfg.seed, "train"))
        test = make_two_moons(cfg.test_size, cfg.data_noise, data_seed(cfg.seed, "test"))
        extra = None
        if cfg.extra_unlabeled:
            size = cfg.extra_unlabeled + cfg.extra_unlabeled % 2
            extra = make_two_moons(size, cfg.data_noise, data_seed(cfg.seed, "extra"))
            extra = extra.subset(np.arange(cfg.extra_unlabeled), name="two_moons-extra")
        return train, test, extra
    if cfg.dataset == "glyphs":
        train = make_glyphs(cfg.train_size, data_seed(cfg.seed, "train"), side=cfg.glyph_side)
        test = make_glyphs(cfg.test_size, data_seed(cfg.seed, "test"), side=cfg.glyph_side)
        extra = None
        if cfg.extra_unlabeled:
            extra = make_glyphs(max(cfg.extra_unlabeled, 10), data_seed(cfg.seed, "extra"), side=cfg.glyph_side)
            extra = extra.subset(np.arange(cfg.extra_unlabeled), name="glyphs-extra")
        return train, test, extra
    train = load_idx(cfg.idx_train_images, cfg.idx_train_labels)
    test = load_idx(cfg.idx_test_images, cfg.idx_test_labels, n_classes=train.n_classes)
    if cfg.extra_unlabeled:
        raise DataError("extra_unlabeled is only available for synthetic datasets")
    return train, test, None


def build_data(cfg: ExperimentConfig) -> ExperimentData:
    """
    Datasets, normalization and label split for ``cfg``.

    Normalization statistics come from the primary training set only and are
    reapplied to the test set and the extra pool.
    """
    train, test, extra = _raw_datasets(cfg)
    src = RandomSource(cfg.seed).child("data")
    if cfg.holdout_fraction > 0:
        train, test = holdout_split(train, cfg.holdout_fraction, src)

    transform = None
    if cfg.normalization == "standardize":
        train, transform = standardize(train)
    elif cfg.normalization == "zca":
        train, transform = zca_whiten(train, cfg.zca_epsilon)
    if transform is not None:
        test = transform.apply(test)
        extra = transform.apply(extra) if extra is not None else None

    dtype = np.float32 if cfg.float_width == 32 else np.float64
    train = _cast(train, dtype)
    test = _cast(test, dtype)
    extra = _cast(extra, dtype) if extra is not None else None

    if cfg.labels_per_class is None:
        split = SemiSupervisedSplit(train, np.arange(len(train), dtype=np.int64), np.empty(0, dtype=np.int64))
    else:
        split = remove_labels(train, cfg.labels_per_class, src)
    if extra is not None:
        split = split.with_extra(extra)

    logger.info("Data ready", dataset=cfg.dataset, train=len(train), test=len(test),
                labeled=split.labeled_count, unlabeled=split.unlabeled_count,
                normalization=cfg.normalization)
    return ExperimentData(train=train, test=test, split=split, transform=transform)


def _cast(ds: Dataset, dtype) -> Dataset:
    if ds.examples.dtype == dtype:
        return ds
    return Dataset(examples=ds.examples.astype(dtype), labels=ds.labels, n_classes=ds.n_classes, name=ds.name)


def build_model_spec(cfg: ExperimentConfig, example_shape, n_classes: int) -> ModelSpec:
    head_count = 2 if cfg.dual_head else 1
    if cfg.model == "convnet":
        return canonical_convnet_spec(
            input_shape=example_shape,
            flip_allowed=cfg.flip,
            width_scale=cfg.width_scale,
            n_classes=n_classes,
            input_noise=cfg.input_noise,
            dropout=cfg.dropout,
            slope=cfg.slope,
            head_count=head_count,
            translate_max=cfg.translate_max,
        )
    if len(example_shape) != 1:
        raise DataError(f"model={cfg.model} needs feature vectors, got example shape {tuple(example_shape)}")
    if cfg.model == "linear":
        return linear_spec(example_shape[0], n_classes, bias=True, head_count=head_count)
    return mlp_spec(example_shape[0], hidden=cfg.hidden, n_classes=n_classes, input_noise=cfg.input_noise,
                    dropout=cfg.dropout, slope=cfg.slope, head_count=head_count)


def expected_labeled_count(cfg: ExperimentConfig, split: SemiSupervisedSplit) -> float:
    """Labeled rows per minibatch on average: the quota, or the labeled share of a mixed batch"""
    if cfg.sampling == "quota":
        return float(cfg.labeled_per_batch)
    pool = split.labeled_count + split.unlabeled_count
    return cfg.batch_size * split.labeled_count / pool if pool else 0.0
