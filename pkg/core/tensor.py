"""
Dense tensors, learnable parameters, the autodiff tape and the multiply counter.

Ops record themselves on the tape that is active in the current context
(``with AutodiffTape() as tape:``). Outside a tape, ops run forward only.
"""
import contextvars
from collections import defaultdict
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from core.exceptions import ConfigError, ContractError, NumericalError

DTYPES = {"f32": np.float32, "f64": np.float64}

_ACTIVE_TAPE: contextvars.ContextVar[Optional["AutodiffTape"]] = contextvars.ContextVar(
    "active_tape", default=None)
_ACTIVE_COUNTER: contextvars.ContextVar[Optional["OpCounter"]] = contextvars.ContextVar(
    "active_counter", default=None)
_ACTIVE_SCOPE: contextvars.ContextVar[str] = contextvars.ContextVar("active_scope", default="main")


def resolve_dtype(precision: str) -> type:
    """Map a precision name (f32/f64) to a numpy dtype"""
    try:
        return DTYPES[precision]
    except KeyError:
        raise ConfigError(f"Unknown precision '{precision}', expected one of {sorted(DTYPES)}")


class DenseTensor:
    """n-dimensional array of reals with shape metadata (Value Object pattern)"""

    def __init__(self, data, requires_grad: bool = False, dtype: Optional[type] = None):
        array = np.asarray(data, dtype=dtype)
        if array.dtype not in (np.float32, np.float64):
            array = array.astype(np.float64)
        self.data: np.ndarray = array
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.owner: Optional["ParamTensor"] = None

    @property
    def shape(self) -> List[int]:
        return list(self.data.shape)

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        """Return a copy of the underlying array"""
        return self.data.copy()

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        return f"DenseTensor(shape={self.shape}, dtype={self.dtype.name}, requires_grad={self.requires_grad})"


class ParamTensor:
    """Learnable weight with its gradient and Adam moment accumulators"""

    def __init__(self, value: np.ndarray, name: str = ""):
        self.name = name
        self.value = DenseTensor(value, requires_grad=True)
        self.value.owner = self
        self.grad = DenseTensor(np.zeros_like(self.value.data))
        self.adam_m = DenseTensor(np.zeros_like(self.value.data))
        self.adam_v = DenseTensor(np.zeros_like(self.value.data))
        self.step_count = 0

    @property
    def shape(self) -> List[int]:
        return self.value.shape

    @property
    def size(self) -> int:
        return self.value.size

    def zero_grad(self) -> None:
        self.grad.data.fill(0)

    def __repr__(self) -> str:
        return f"ParamTensor(name={self.name!r}, shape={self.shape}, step_count={self.step_count})"


@dataclass
class TapeNode:
    """One recorded operation: inputs, output and the rule mapping output grad to input grads"""
    op: str
    inputs: Tuple[DenseTensor, ...]
    output: DenseTensor
    backward_fn: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class AutodiffTape:
    """Ordered record of operations for reverse-mode differentiation"""

    def __init__(self):
        self.nodes: List[TapeNode] = []
        self._tokens: List[contextvars.Token] = []

    def __enter__(self) -> "AutodiffTape":
        self._tokens.append(_ACTIVE_TAPE.set(self))
        return self

    def __exit__(self, *exc_info) -> None:
        _ACTIVE_TAPE.reset(self._tokens.pop())

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, node: TapeNode) -> None:
        self.nodes.append(node)

    def clear(self) -> None:
        self.nodes.clear()


def active_tape() -> Optional[AutodiffTape]:
    return _ACTIVE_TAPE.get()


def as_tensor(value) -> DenseTensor:
    """Unwrap a ParamTensor or wrap raw data so ops accept either"""
    if isinstance(value, ParamTensor):
        return value.value
    if isinstance(value, DenseTensor):
        return value
    return DenseTensor(value)


def record(op: str, inputs: Sequence[DenseTensor], out_data: np.ndarray,
           backward_fn: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]) -> DenseTensor:
    """Wrap an op's forward result and put it on the active tape when gradients are needed"""
    if not np.all(np.isfinite(out_data)):
        raise NumericalError(f"{op} produced non-finite values")
    needs_grad = any(t.requires_grad for t in inputs)
    out = DenseTensor(out_data, requires_grad=needs_grad)
    tape = _ACTIVE_TAPE.get()
    if needs_grad and tape is not None:
        tape.record(TapeNode(op, tuple(inputs), out, backward_fn))
    return out


def backward(loss: DenseTensor, tape: AutodiffTape) -> None:
    """Accumulate d(loss)/d(param) into every ParamTensor reachable on the tape, then clear it"""
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")

    grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    tensors: Dict[int, DenseTensor] = {id(loss): loss}

    for node in reversed(tape.nodes):
        grad_out = grads.pop(id(node.output), None)
        tensors.pop(id(node.output), None)
        if grad_out is None:
            continue
        for tensor, grad_in in zip(node.inputs, node.backward_fn(grad_out)):
            if grad_in is None or not tensor.requires_grad:
                continue
            key = id(tensor)
            if key in grads:
                grads[key] = grads[key] + grad_in
            else:
                grads[key] = grad_in
                tensors[key] = tensor

    # whatever is left belongs to leaves
    for key, grad in grads.items():
        tensor = tensors[key]
        if tensor.owner is not None:
            tensor.owner.grad.data += grad.astype(tensor.owner.grad.dtype, copy=False)
        elif tensor.grad is None:
            tensor.grad = grad
        else:
            tensor.grad = tensor.grad + grad

    tape.clear()


class OpCounter:
    """Counts scalar multiplies per (scope, op) while active"""

    def __init__(self):
        self.counts: Dict[Tuple[str, str], int] = defaultdict(int)
        self._tokens: List[contextvars.Token] = []

    def __enter__(self) -> "OpCounter":
        self._tokens.append(_ACTIVE_COUNTER.set(self))
        return self

    def __exit__(self, *exc_info) -> None:
        _ACTIVE_COUNTER.reset(self._tokens.pop())

    def add(self, scope: str, op: str, multiplies: int) -> None:
        self.counts[(scope, op)] += int(multiplies)

    def total(self, scope: Optional[str] = None) -> int:
        return sum(n for (s, _), n in self.counts.items() if scope is None or s == scope)

    def to_frame(self) -> pd.DataFrame:
        """Counts as a table with one row per (scope, op)"""
        rows = [{"scope": s, "op": op, "multiplies": n} for (s, op), n in sorted(self.counts.items())]
        return pd.DataFrame(rows, columns=["scope", "op", "multiplies"])


def count_multiplies(op: str, multiplies: int) -> None:
    counter = _ACTIVE_COUNTER.get()
    if counter is not None:
        counter.add(_ACTIVE_SCOPE.get(), op, multiplies)


@contextmanager
def counting_scope(name: str) -> Iterator[None]:
    """Attribute multiplies counted inside the block to ``name``"""
    token = _ACTIVE_SCOPE.set(name)
    try:
        yield
    finally:
        _ACTIVE_SCOPE.reset(token)
