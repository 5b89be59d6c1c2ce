"""Identity cross-entropy and batch-hard triplet loss."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from core import ops
from core.exceptions import ContractError, DataError
from core.tensor import AutodiffTape, DenseTensor, backward
from models.training import LossConfig
from services.gradcheck_service import check_gradients
from services.loss_service import (batch_accuracy, batch_hard_triplet, combined_loss, cross_entropy,
                                   hardest_pairs, pairwise_distances)

LABELS = [0, 0, 1, 1, 2, 2, 3, 3]


def test_uniform_logits_give_log_classes():
    assert cross_entropy(DenseTensor(np.zeros((3, 4))), [0, 1, 3]).item() == pytest.approx(math.log(4), abs=1e-12)


def test_confident_correct_logits_cost_nothing():
    assert cross_entropy(DenseTensor(np.array([[50.0, 0.0, 0.0]])), [0]).item() < 1e-10


def test_cross_entropy_matches_direct_formula(rng):
    logits = rng.standard_normal((3, 5))
    labels = [4, 0, 2]
    direct = np.mean([-math.log(math.exp(logits[i, y]) / sum(math.exp(v) for v in logits[i]))
                      for i, y in enumerate(labels)])
    assert cross_entropy(DenseTensor(logits), labels).item() == pytest.approx(direct, abs=1e-10)


def test_cross_entropy_rejects_unknown_labels():
    with pytest.raises(DataError):
        cross_entropy(DenseTensor(np.zeros((2, 3))), [0, 3])


def test_identical_embeddings_cost_the_margin():
    x = DenseTensor(np.ones((4, 3)), requires_grad=True)
    with AutodiffTape() as tape:
        loss = batch_hard_triplet(x, [0, 0, 1, 1], margin=0.3)
        backward(loss, tape)
    assert loss.item() == pytest.approx(0.3)
    assert not x.grad.any()


def test_separated_clusters_cost_nothing_and_have_no_gradient():
    x = DenseTensor(np.array([[0.0, 0.0], [0.0, 0.1], [10.0, 0.0], [10.0, 0.1]]), requires_grad=True)
    with AutodiffTape() as tape:
        loss = batch_hard_triplet(x, [0, 0, 1, 1])
        backward(loss, tape)
    assert loss.item() == 0.0
    assert not x.grad.any()


def test_matches_brute_force_miner(rng):
    x = rng.standard_normal((8, 4))
    labels = np.array(LABELS)
    terms = []
    for a in range(8):
        positives = [np.linalg.norm(x[a] - x[p]) for p in range(8) if p != a and labels[p] == labels[a]]
        negatives = [np.linalg.norm(x[a] - x[n]) for n in range(8) if labels[n] != labels[a]]
        terms.append(max(0.0, 0.3 + max(positives) - min(negatives)))
    assert batch_hard_triplet(DenseTensor(x), LABELS).item() == pytest.approx(np.mean(terms), abs=1e-10)


@settings(max_examples=30)
@given(st.integers(0, 10_000), st.floats(0.01, 100.0))
def test_mining_ignores_global_scale(seed, factor):
    x = np.random.default_rng(seed).standard_normal((8, 4))
    labels = np.array(LABELS)
    plain = hardest_pairs(pairwise_distances(x), labels)
    scaled = hardest_pairs(pairwise_distances(x * factor), labels)
    for a, b in zip(plain, scaled):
        np.testing.assert_array_equal(a, b)


def test_triplet_gradient(rng):
    for seed in range(3):
        local = np.random.default_rng([seed, 5])
        fn = lambda x: batch_hard_triplet(x, LABELS, 0.3)
        assert check_gradients(fn, [0.5 * local.standard_normal((8, 4))], local) <= 1e-4


@pytest.mark.parametrize("labels", [[0, 0, 0, 0], [0, 0, 1]])
def test_degenerate_batches_are_rejected(labels):
    with pytest.raises(ContractError):
        batch_hard_triplet(DenseTensor(np.eye(len(labels))), labels)


def test_combined_loss_adds_weighted_terms(rng):
    logits = DenseTensor(rng.standard_normal((8, 4)))
    embeddings = DenseTensor(rng.standard_normal((8, 6)))
    total, report = combined_loss(logits, embeddings, LABELS, LossConfig(ce_weight=1.0, triplet_weight=2.0))
    assert report.total == pytest.approx(report.ce_loss + 2.0 * report.triplet_loss)
    assert total.item() == pytest.approx(report.total)
    assert report.batch_accuracy == batch_accuracy(logits, LABELS)


def test_gradients_reach_both_inputs(rng):
    logits = DenseTensor(rng.standard_normal((8, 4)), requires_grad=True)
    embeddings = DenseTensor(rng.standard_normal((8, 6)), requires_grad=True)
    with AutodiffTape() as tape:
        total, _ = combined_loss(logits, embeddings, LABELS, LossConfig())
        backward(ops.scale(total, 1.0), tape)
    assert logits.grad.shape == (8, 4) and embeddings.grad.shape == (8, 6)
    np.testing.assert_allclose(logits.grad.sum(axis=1), 0.0, atol=1e-12)
