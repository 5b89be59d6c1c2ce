"""
Identity cross-entropy and batch-hard triplet loss as differentiable ops.
"""
import logging
from typing import Sequence, Tuple

import numpy as np
from scipy.special import logsumexp, softmax

from core import ops
from core.exceptions import ContractError, DataError, DimensionError
from core.tensor import DenseTensor, as_tensor, record
from models.training import LossConfig, LossReport

logger = logging.getLogger(__name__)


def _labels_array(labels: Sequence[int], n: int) -> np.ndarray:
    array = np.asarray(labels, dtype=np.int64)
    if array.shape != (n,):
        raise DimensionError(f"Expected {n} labels, got {array.shape[0] if array.ndim else 0}")
    return array


def cross_entropy(logits, labels: Sequence[int]) -> DenseTensor:
    """Mean over the batch of -log softmax(logits)[label]"""
    logits = as_tensor(logits)
    if logits.ndim != 2:
        raise DimensionError(f"cross_entropy expects [N, classes] logits, got {logits.shape}")
    n, classes = logits.shape
    y = _labels_array(labels, n)
    if y.size and (y.min() < 0 or y.max() >= classes):
        raise DataError(f"Labels must lie in [0, {classes}), got range [{y.min()}, {y.max()}]")

    log_norm = logsumexp(logits.data, axis=1)
    picked = logits.data[np.arange(n), y]
    out = np.asarray((log_norm - picked).mean(), dtype=logits.dtype)

    def _backward(g: np.ndarray):
        grad = softmax(logits.data, axis=1)
        grad[np.arange(n), y] -= 1
        return ((g * grad / n).astype(logits.dtype),)

    return record("cross_entropy", (logits,), out, _backward)


def pairwise_distances(x: np.ndarray) -> np.ndarray:
    """Euclidean distance matrix of the rows of x"""
    diff = x[:, None, :] - x[None, :, :]
    return np.sqrt((diff * diff).sum(axis=-1))


def hardest_pairs(distances: np.ndarray, labels: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Per anchor: index of the farthest same-label sample and of the nearest other-label sample"""
    same = labels[:, None] == labels[None, :]
    np.fill_diagonal(same, False)
    positive = np.where(same, distances, -np.inf).argmax(axis=1)
    different = labels[:, None] != labels[None, :]
    negative = np.where(different, distances, np.inf).argmin(axis=1)
    return positive, negative


def batch_hard_triplet(embeddings, labels: Sequence[int], margin: float = 0.3) -> DenseTensor:
    """Mean over anchors of max(0, margin + d(a, hardest positive) - d(a, hardest negative))"""
    x = as_tensor(embeddings)
    if x.ndim != 2:
        raise DimensionError(f"batch_hard_triplet expects [N, C] embeddings, got {x.shape}")
    n = x.shape[0]
    y = _labels_array(labels, n)
    unique, counts = np.unique(y, return_counts=True)
    if len(unique) < 2 or counts.min() < 2:
        raise ContractError("batch_hard_triplet needs at least 2 labels, each appearing at least twice")

    distances = pairwise_distances(x.data)
    positive, negative = hardest_pairs(distances, y)
    rows = np.arange(n)
    d_pos, d_neg = distances[rows, positive], distances[rows, negative]
    hinge = margin + d_pos - d_neg
    active = hinge > 0
    out = np.asarray(np.where(active, hinge, 0).mean(), dtype=x.dtype)

    def _backward(g: np.ndarray):
        grad = np.zeros_like(x.data)
        scale = g / n
        for a in np.flatnonzero(active):
            for other, sign in ((positive[a], 1.0), (negative[a], -1.0)):
                dist = distances[a, other]
                if dist > 0:
                    unit = (x.data[a] - x.data[other]) / dist
                    grad[a] += sign * scale * unit
                    grad[other] -= sign * scale * unit
        return (grad,)

    return record("batch_hard_triplet", (x,), out, _backward)


def batch_accuracy(logits, labels: Sequence[int]) -> float:
    data = as_tensor(logits).data
    y = _labels_array(labels, data.shape[0])
    return float((data.argmax(axis=1) == y).mean())


def combined_loss(logits, embeddings, labels: Sequence[int],
                  config: LossConfig) -> Tuple[DenseTensor, LossReport]:
    """Weighted cross-entropy + batch-hard triplet and the matching report"""
    ce = cross_entropy(logits, labels)
    triplet = batch_hard_triplet(embeddings, labels, config.triplet_margin)
    total = ops.add(ops.scale(ce, config.ce_weight), ops.scale(triplet, config.triplet_weight))
    report = LossReport(ce_loss=ce.item(), triplet_loss=triplet.item(), total=total.item(),
                        batch_accuracy=batch_accuracy(logits, labels))
    return total, report
