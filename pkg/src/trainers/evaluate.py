from dataclasses import dataclass

import numpy as np

from ..data.datasets import Dataset
from ..errors import DataError
from ..nn.forward import NoiseConfig, forward
from ..nn.spec import ModelSpec
from ..nn.weights import WeightSet
from ..objectives.costs import PROBABILITY_FLOOR

EVAL_BATCH = 500


@dataclass(frozen=True)
class EvalResult:
    error_rate: float
    mean_cost: float
    examples: int


def predict_probabilities(spec: ModelSpec, weights: WeightSet, examples: np.ndarray,
                          batch_size: int = EVAL_BATCH) -> np.ndarray:
    """Evaluation-mode head-0 probabilities, computed in chunks"""
    noise = NoiseConfig.evaluation_mode()
    chunks = []
    for start in range(0, examples.shape[0], batch_size):
        result = forward(spec, weights, examples[start:start + batch_size], noise)
        chunks.append(result.probabilities.data)
    return np.concatenate(chunks, axis=0)


def evaluate(spec: ModelSpec, weights: WeightSet, ds: Dataset, batch_size: int = EVAL_BATCH) -> EvalResult:
    """
    Error rate and mean cross-entropy of one weight set on a labeled dataset.

    Ties in the argmax go to the lowest class index.
    """
    if ds.labels is None:
        raise DataError(f"evaluate: dataset {ds.name} has no labels")
    if len(ds) == 0:
        raise DataError(f"evaluate: dataset {ds.name} is empty")
    probabilities = predict_probabilities(spec, weights, ds.examples, batch_size)
    predicted = np.argmax(probabilities, axis=1)
    picked = probabilities[np.arange(len(ds)), ds.labels].astype(np.float64)
    mean_cost = float(-np.mean(np.log(np.maximum(picked, PROBABILITY_FLOOR))))
    return EvalResult(error_rate=float(np.mean(predicted != ds.labels)), mean_cost=mean_cost, examples=len(ds))
