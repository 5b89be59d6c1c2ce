"""Finite-difference harness over ops, blocks and the tiny network."""
import numpy as np
import pytest

from core.exceptions import ConfigError
from services.gradcheck_service import GradcheckService, relative_error


def test_relative_error_of_identical_vectors():
    assert relative_error(np.zeros(3), np.zeros(3)) == 0.0
    assert relative_error(np.array([1.0]), np.array([3.0])) == pytest.approx(0.5)


@pytest.mark.parametrize("name", ["mae", "bme_global", "bme_local", "bme_single"])
def test_block_gradients(name):
    case = GradcheckService().block_cases()[name]
    for seed in range(2):
        assert case(np.random.default_rng([seed, 31])) <= 1e-4


def test_network_gradient():
    service = GradcheckService(network_coordinates=24)
    assert service.network_case(np.random.default_rng([0, 31]), 0) <= 1e-3


def test_table_reports_every_check():
    table = GradcheckService(seeds=1).run(include_network=False)
    assert list(table.columns) == ["check", "rel_error", "tolerance", "seeds", "passed"]
    assert {"matmul", "cross_entropy", "mae", "bme_local"} <= set(table["check"])
    assert table["passed"].all()


def test_corruption_is_caught_per_op():
    table = GradcheckService(seeds=1, corrupt="softmax_rows").run(include_network=False)
    failed = set(table.loc[~table["passed"], "check"])
    assert "softmax_rows" in failed and "mae" in failed
    assert "matmul" not in failed


def test_invalid_harness_settings():
    with pytest.raises(ConfigError):
        GradcheckService(seeds=0)


@pytest.mark.slow
def test_full_suite_with_default_seeds():
    table = GradcheckService().run(include_network=True)
    assert table["passed"].all(), table.loc[~table["passed"]].to_string()
