"""Distances, the retrieval protocol and split embedding."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from core.exceptions import ConfigError, DataError, ProtocolError
from models.retrieval import EvalReport, RetrievalTable
from services.backbone_service import VideoReIDModel
from services.eval_service import (EvaluationService, RetrievalCalculator, average_precision, cmc_map,
                                   distance_matrix, embed_split, zero_norm_count)
from utils.data_handler import ReportHandler


def table_from(dists, query_ids, gallery_ids, query_cams=None, gallery_cams=None):
    q, g = dists.shape
    return RetrievalTable(np.zeros((q, 1)), np.zeros((g, 1)), query_ids, gallery_ids,
                          np.zeros(q) if query_cams is None else query_cams,
                          np.ones(g) if gallery_cams is None else gallery_cams)


def brute_force(dists, q_ids, g_ids, q_cams, g_cams, k):
    hits, aps = 0, []
    for i in range(len(q_ids)):
        ranked = sorted(range(len(g_ids)), key=lambda j: (dists[i, j], j))
        ranked = [j for j in ranked if not (g_ids[j] == q_ids[i] and g_cams[j] == q_cams[i])]
        matches = [g_ids[j] == q_ids[i] for j in ranked]
        if not any(matches):
            continue
        hits += matches.index(True) < k
        found, precisions = 0, []
        for position, match in enumerate(matches, start=1):
            if match:
                found += 1
                precisions.append(found / position)
        aps.append(sum(precisions) / len(precisions))
    return hits / len(aps), sum(aps) / len(aps)


class TestDistances:
    def test_identical_and_orthogonal(self):
        dists = distance_matrix(np.array([[1.0, 0.0]]), np.array([[2.0, 0.0], [0.0, 3.0]])).data
        np.testing.assert_allclose(dists, [[0.0, 1.0]], atol=1e-12)

    def test_matches_loop_oracle(self, rng):
        q, g = rng.standard_normal((3, 5)), rng.standard_normal((4, 5))
        dists = distance_matrix(q, g).data
        for i in range(3):
            for j in range(4):
                expected = 1 - q[i] @ g[j] / (np.linalg.norm(q[i]) * np.linalg.norm(g[j]))
                assert dists[i, j] == pytest.approx(expected, abs=1e-12)
        assert ((dists >= 0) & (dists <= 2)).all()

    def test_zero_norm_rows_sit_at_distance_one(self):
        q, g = np.array([[0.0, 0.0], [1.0, 1.0]]), np.array([[1.0, 0.0], [0.0, 0.0]])
        dists = distance_matrix(q, g).data
        assert dists[0, 0] == 1.0 and dists[1, 1] == 1.0
        assert zero_norm_count(q, g) == 2

    def test_euclidean(self, rng):
        q, g = rng.standard_normal((2, 3)), rng.standard_normal((3, 3))
        np.testing.assert_allclose(distance_matrix(q, g, "euclidean").data[1, 2], np.linalg.norm(q[1] - g[2]))

    def test_unknown_metric(self):
        with pytest.raises(ConfigError):
            distance_matrix(np.ones((1, 2)), np.ones((1, 2)), "manhattan")


class TestProtocol:
    def test_average_precision_example(self):
        assert average_precision(np.array([True, False, True])) == pytest.approx(5 / 6)

    def test_same_camera_matches_are_junk(self):
        dists = np.array([[0.1, 0.2, 0.3]])
        table = table_from(dists, [7], [7, 3, 7], query_cams=[0], gallery_cams=[0, 1, 1])
        report = cmc_map(table, dists)
        assert report.rank_k[1] == 0.0 and report.rank_k[5] == 1.0
        assert report.map_score == pytest.approx(0.5)

    def test_queries_without_cross_camera_match_are_skipped(self):
        dists = np.array([[0.1, 0.2], [0.3, 0.1]])
        table = table_from(dists, [1, 2], [1, 2], query_cams=[0, 0], gallery_cams=[0, 1])
        report = cmc_map(table, dists)
        assert report.num_valid_queries == 1 and report.num_skipped_queries == 1
        assert report.rank_k[1] == 1.0

    def test_no_valid_query(self):
        dists = np.array([[0.1]])
        with pytest.raises(ProtocolError):
            cmc_map(table_from(dists, [1], [1], query_cams=[0], gallery_cams=[0]), dists)

    def test_ties_keep_gallery_order(self):
        dists = np.array([[0.5, 0.5]])
        assert cmc_map(table_from(dists, [1], [2, 1]), dists).rank_k[1] == 0.0
        assert cmc_map(table_from(dists, [1], [1, 2]), dists).rank_k[1] == 1.0

    def test_requested_ranks_always_include_one_and_five(self):
        assert RetrievalCalculator((10,)).ranks == (1, 5, 10)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 8), st.integers(1, 12), st.integers(0, 10_000))
    def test_matches_brute_force(self, queries, gallery, seed):
        rng = np.random.default_rng(seed)
        dists = rng.uniform(0, 2, size=(queries, gallery))
        q_ids, g_ids = rng.integers(0, 3, queries), rng.integers(0, 3, gallery)
        q_cams, g_cams = rng.integers(0, 2, queries), rng.integers(0, 2, gallery)
        table = RetrievalTable(np.zeros((queries, 1)), np.zeros((gallery, 1)), q_ids, g_ids, q_cams, g_cams)
        try:
            report = cmc_map(table, dists)
        except ProtocolError:
            assert all(not ((g_ids == q) & (g_cams != c)).any() for q, c in zip(q_ids, q_cams))
            return
        r1, m_ap = brute_force(dists, q_ids, g_ids, q_cams, g_cams, 1)
        r5, _ = brute_force(dists, q_ids, g_ids, q_cams, g_cams, 5)
        assert report.rank_k[1] == pytest.approx(r1) and report.rank_k[5] == pytest.approx(r5)
        assert report.map_score == pytest.approx(m_ap)
        assert report.rank_k[1] <= report.rank_k[5]

    def test_gallery_order_does_not_matter(self, rng):
        dists = rng.uniform(0, 2, size=(4, 9))
        q_ids, g_ids = np.array([0, 1, 2, 0]), rng.integers(0, 3, 9)
        g_ids[:3] = [0, 1, 2]
        order = rng.permutation(9)
        plain = cmc_map(table_from(dists, q_ids, g_ids), dists)
        shuffled = cmc_map(table_from(dists[:, order], q_ids, g_ids[order]), dists[:, order])
        assert plain.rank_k == shuffled.rank_k
        assert plain.map_score == pytest.approx(shuffled.map_score)

    def test_report_rejects_decreasing_cmc(self):
        with pytest.raises(ValueError):
            EvalReport(rank_k={1: 0.8, 5: 0.6}, map_score=0.5, num_valid_queries=3)


class TestEvaluationService:
    def test_batch_size_does_not_change_embeddings(self, dataset, tiny_config):
        model = VideoReIDModel(tiny_config)
        one, ids, cams = embed_split(model, dataset, "query", 3, batch_size=1)
        many, _, _ = embed_split(model, dataset, "query", 3, batch_size=3)
        assert np.array_equal(one, many)
        assert one.shape == (4, 4)
        assert list(ids) == [0, 1, 2, 3] and set(cams) == {0}

    def test_embedding_is_deterministic(self, dataset, tiny_config):
        a, _, _ = embed_split(VideoReIDModel(tiny_config, seed=2), dataset, "gallery", 4)
        b, _, _ = embed_split(VideoReIDModel(tiny_config, seed=2), dataset, "gallery", 4)
        assert np.array_equal(a, b)

    def test_missing_split(self, tmp_path, dataset, tiny_config):
        with pytest.raises(DataError):
            embed_split(VideoReIDModel(tiny_config), dataset, "validation", 2)

    def test_evaluate_and_write_report(self, tmp_path, dataset, tiny_config):
        service = EvaluationService(VideoReIDModel(tiny_config), dataset, frames=3)
        report = service.evaluate()
        assert report.num_valid_queries == 4 and report.num_skipped_queries == 0
        service.write_report(report, str(tmp_path))
        values = ReportHandler().load_key_values(str(tmp_path / "eval_report.txt"))
        assert set(values) == {"R1", "R5", "mAP", "valid", "skipped"}
        assert values["valid"] == "4"
        table = ReportHandler().load_data(str(tmp_path / "eval_report.tsv"))
        assert list(table.columns) == ["R1", "R5", "mAP", "valid", "skipped"]
