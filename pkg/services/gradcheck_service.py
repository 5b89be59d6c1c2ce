"""
Finite-difference gradient checks for every op, both blocks, the losses and a tiny network.

Each check reduces the function output to a scalar with a fixed random projection,
compares tape gradients against central differences and reports the norm-based relative
error ||analytic - numeric|| / (||analytic|| + ||numeric||).
"""
import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from core import ops
from core.exceptions import ConfigError
from core.tensor import AutodiffTape, DenseTensor, ParamTensor, backward
from models.backbone import BackboneConfig
from models.blocks import BmeParams, MaeParams
from models.features import FrameFeatureBlock
from services.backbone_service import VideoReIDModel
from services.bme_service import bme_forward
from services.loss_service import batch_hard_triplet, cross_entropy
from services.mae_service import mae_forward

logger = logging.getLogger(__name__)

CORRUPTION_FACTOR = 1.5


@dataclass
class GradcheckResult:
    name: str
    rel_error: float
    tolerance: float
    seeds: int

    @property
    def passed(self) -> bool:
        return self.rel_error <= self.tolerance


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.linalg.norm(analytic) + np.linalg.norm(numeric)
    if denom == 0:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / denom)


def _corrupt_nodes(tape: AutodiffTape, op: str) -> None:
    for node in tape.nodes:
        if node.op == op:
            original = node.backward_fn
            node.backward_fn = lambda g, f=original: tuple(
                None if grad is None else grad * CORRUPTION_FACTOR for grad in f(g))


def check_gradients(fn: Callable[..., DenseTensor], inputs: Sequence[np.ndarray], rng: np.random.Generator,
                    epsilon: float = 1e-5, corrupt: Optional[str] = None,
                    max_coordinates: Optional[int] = None) -> float:
    """Relative error between tape and central-difference gradients of fn w.r.t. every input"""
    arrays = [np.array(a, dtype=np.float64) for a in inputs]
    leaves = [DenseTensor(a, requires_grad=True) for a in arrays]
    with AutodiffTape() as tape:
        out = fn(*leaves)
        projection = rng.standard_normal(out.shape)
        loss = ops.reduce_sum(ops.multiply(out, DenseTensor(projection)))
        if corrupt:
            _corrupt_nodes(tape, corrupt)
        backward(loss, tape)

    def objective() -> float:
        return float((fn(*[DenseTensor(a) for a in arrays]).data * projection).sum())

    analytic, numeric = [], []
    for array, leaf in zip(arrays, leaves):
        grad = leaf.grad if leaf.grad is not None else np.zeros_like(array)
        flat = array.reshape(-1)
        coords = np.arange(flat.size)
        if max_coordinates is not None and flat.size > max_coordinates:
            coords = rng.choice(flat.size, size=max_coordinates, replace=False)
        for i in coords:
            saved = flat[i]
            flat[i] = saved + epsilon
            plus = objective()
            flat[i] = saved - epsilon
            minus = objective()
            flat[i] = saved
            numeric.append((plus - minus) / (2 * epsilon))
            analytic.append(grad.reshape(-1)[i])
    return relative_error(np.array(analytic), np.array(numeric))


def _param_names(params: Dict[str, ParamTensor]) -> List[str]:
    return sorted(params)


def _with_params(params: Dict[str, ParamTensor], names: List[str], fn: Callable) -> Callable:
    """Adapt fn(params) into fn(*arrays) by swapping parameter values for the given leaves"""
    def wrapped(*leaves: DenseTensor) -> DenseTensor:
        saved = {n: params[n].value for n in names}
        try:
            for name, leaf in zip(names, leaves):
                params[name].value = leaf
            return fn()
        finally:
            for name in names:
                params[name].value = saved[name]
    return wrapped


def _randomized(params: Dict[str, ParamTensor], rng: np.random.Generator) -> None:
    """Give every parameter small random values so zero-initialized fusion layers are exercised"""
    for param in params.values():
        param.value.data[...] = rng.uniform(-0.5, 0.5, size=param.shape)


class GradcheckService:
    """Runs the gradient-check suites and tabulates pass/fail per check"""

    def __init__(self, seeds: int = 20, epsilon: float = 1e-5, tolerance: float = 1e-4,
                 network_tolerance: float = 1e-3, corrupt: Optional[str] = None,
                 network_coordinates: int = 48):
        if seeds < 1 or epsilon <= 0:
            raise ConfigError("gradcheck needs seeds >= 1 and a positive epsilon")
        self.seeds = seeds
        self.epsilon = epsilon
        self.tolerance = tolerance
        self.network_tolerance = network_tolerance
        self.corrupt = corrupt
        self.network_coordinates = network_coordinates

    def op_cases(self) -> Dict[str, Callable[[np.random.Generator], tuple]]:
        """name -> rng -> (function, input arrays)"""
        def normal(rng, *shape):
            return rng.standard_normal(shape)

        return {
            "matmul": lambda r: (ops.matmul, [normal(r, 3, 4), normal(r, 4, 2)]),
            "transpose": lambda r: (ops.transpose, [normal(r, 3, 5)]),
            "softmax_rows": lambda r: (ops.softmax_rows, [normal(r, 4, 6)]),
            "reduce_mean": lambda r: (lambda x: ops.reduce_mean(x, {0, 2}), [normal(r, 2, 3, 4)]),
            "reduce_sum": lambda r: (ops.reduce_sum, [normal(r, 3, 2)]),
            "pointwise_affine": lambda r: (ops.pointwise_affine,
                                           [normal(r, 2, 3, 4), normal(r, 4, 5), normal(r, 5)]),
            "pointwise_affine_relu": lambda r: (lambda x, w, b: ops.pointwise_affine(x, w, b, relu=True),
                                                [normal(r, 2, 3, 4), normal(r, 4, 5), normal(r, 5)]),
            "concat_channels": lambda r: (lambda a, b: ops.concat_channels([a, b]),
                                          [normal(r, 2, 3), normal(r, 2, 4)]),
            "broadcast_hadamard": lambda r: (ops.broadcast_hadamard,
                                             [normal(r, 2, 1, 1, 3), normal(r, 2, 3, 2, 3)]),
            "multiply": lambda r: (ops.multiply, [normal(r, 3, 4), normal(r, 3, 4)]),
            "add": lambda r: (ops.add, [normal(r, 3, 2), normal(r, 3, 2), normal(r, 3, 2)]),
            "scale": lambda r: (lambda x: ops.scale(x, 0.7), [normal(r, 4)]),
            "reshape": lambda r: (lambda x: ops.reshape(x, [6, 2]), [normal(r, 3, 4)]),
            "expand": lambda r: (lambda x: ops.expand(x, [3, 4, 2]), [normal(r, 1, 4, 1)]),
            "take_frames": lambda r: (lambda x: ops.take_frames(x, [0, 0, 2, 1]), [normal(r, 3, 2, 2)]),
            "stack": lambda r: (lambda a, b: ops.stack([a, b]), [normal(r, 2, 3), normal(r, 2, 3)]),
            "unfold_3x3": lambda r: (ops.unfold_3x3, [normal(r, 2, 3, 4, 2)]),
            "avg_pool_2x2": lambda r: (ops.avg_pool_2x2, [normal(r, 2, 4, 2, 3)]),
            "cross_entropy": lambda r: (lambda x: cross_entropy(x, [0, 2, 1]), [normal(r, 3, 4)]),
            "batch_hard_triplet": lambda r: (lambda x: batch_hard_triplet(x, [0, 0, 1, 1, 2, 2], 0.3),
                                             [0.3 * normal(r, 6, 4)]),
        }

    def _block_case(self, kind: str, rng: np.random.Generator, **options) -> float:
        if kind == "mae":
            block, block_forward = MaeParams.initialize(4, rng, np.float64), mae_forward
        else:
            block, block_forward = BmeParams.initialize(4, rng, np.float64, **options), bme_forward
        params = block.parameters()
        _randomized(params, rng)
        names = _param_names(params)

        def fn(x: DenseTensor, *leaves: DenseTensor) -> DenseTensor:
            features = FrameFeatureBlock(x)
            return _with_params(params, names, lambda: block_forward(features, block))(*leaves)

        inputs = [rng.standard_normal((3, 2, 2, 4))] + [params[n].value.data for n in names]
        return check_gradients(fn, inputs, rng, self.epsilon, self.corrupt)

    def block_cases(self) -> Dict[str, Callable[[np.random.Generator], float]]:
        return {
            "mae": lambda r: self._block_case("mae", r),
            "bme_global": lambda r: self._block_case("bme", r, manner="global"),
            "bme_local": lambda r: self._block_case("bme", r, manner="local"),
            "bme_single": lambda r: self._block_case("bme", r, direction="single"),
        }

    def network_case(self, rng: np.random.Generator, seed: int) -> float:
        """Tiny end-to-end network: T=2, 16x16 frames, 4 channels per stage, both blocks"""
        config = BackboneConfig(stage_channels=(4, 4, 4, 4), input_hw=(16, 16), num_identities=3,
                                precision="f64")
        model = VideoReIDModel(config, seed=seed)
        params = model.parameters()
        _randomized(params, rng)
        names = _param_names(params)
        clip = rng.uniform(0, 1, size=(2, 16, 16, 3))

        def fn(*leaves: DenseTensor) -> DenseTensor:
            def forward() -> DenseTensor:
                embedding = model.embed(clip)
                logits = ops.reshape(embedding.identity_logits, [1, config.num_identities])
                return ops.add(cross_entropy(logits, [1]), ops.reduce_sum(embedding.vector))
            return _with_params(params, names, forward)(*leaves)

        inputs = [params[n].value.data for n in names]
        return check_gradients(fn, inputs, rng, self.epsilon, self.corrupt,
                               max_coordinates=self.network_coordinates)

    def run(self, include_network: bool = True) -> pd.DataFrame:
        """One row per check: worst relative error over all seeds, tolerance and verdict"""
        results: List[GradcheckResult] = []

        def worst(case: Callable[[int, np.random.Generator], float]) -> float:
            return max(case(seed, np.random.default_rng([seed, 31])) for seed in range(self.seeds))

        for name, case in self.op_cases().items():
            def run_op(seed, rng, case=case):
                fn, inputs = case(rng)
                return check_gradients(fn, inputs, rng, self.epsilon, self.corrupt)
            results.append(GradcheckResult(name, worst(run_op), self.tolerance, self.seeds))

        for name, case in self.block_cases().items():
            results.append(GradcheckResult(name, worst(lambda seed, rng, c=case: c(rng)),
                                           self.tolerance, self.seeds))

        if include_network:
            results.append(GradcheckResult("network", worst(lambda seed, rng: self.network_case(rng, seed)),
                                           self.network_tolerance, self.seeds))

        frame = pd.DataFrame([{"check": r.name, "rel_error": r.rel_error, "tolerance": r.tolerance,
                               "seeds": r.seeds, "passed": r.passed} for r in results])
        failed = frame.loc[~frame["passed"], "check"].tolist()
        if failed:
            logger.error("Gradient check failed for: %s", ", ".join(failed))
        return frame
