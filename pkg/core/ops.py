"""
Differentiable tensor operations.

Each op validates shapes, computes its forward result with numpy, counts its
multiplies, and records a backward rule on the active tape.
"""
from typing import Iterable, List, Optional, Sequence, Union

import numpy as np

from core.exceptions import DimensionError
from core.tensor import DenseTensor, ParamTensor, as_tensor, count_multiplies, record

TensorLike = Union[DenseTensor, ParamTensor]


def matmul(a: TensorLike, b: TensorLike) -> DenseTensor:
    """[m,k] x [k,n] -> [m,n]"""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    m, k = a.shape
    count_multiplies("matmul", m * k * b.shape[1])
    out = a.data @ b.data

    def _backward(g: np.ndarray):
        grad_a = g @ b.data.T if a.requires_grad else None
        grad_b = a.data.T @ g if b.requires_grad else None
        return grad_a, grad_b

    return record("matmul", (a, b), out, _backward)


def transpose(a: TensorLike) -> DenseTensor:
    a = as_tensor(a)
    if a.ndim != 2:
        raise DimensionError(f"transpose: expected a matrix, got shape {a.shape}")
    out = np.ascontiguousarray(a.data.T)
    return record("transpose", (a,), out, lambda g: (g.T,))


def softmax_rows(x: TensorLike) -> DenseTensor:
    """Row-wise softmax with max-subtraction"""
    x = as_tensor(x)
    if x.ndim != 2 or x.shape[1] < 1:
        raise DimensionError(f"softmax_rows: expected [m, n>=1], got {x.shape}")
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    exps = np.exp(shifted)
    out = exps / exps.sum(axis=1, keepdims=True)

    def _backward(g: np.ndarray):
        return (out * (g - (g * out).sum(axis=1, keepdims=True)),)

    return record("softmax_rows", (x,), out, _backward)


def _normalize_axes(axes: Iterable[int], ndim: int, op: str) -> tuple:
    normalized = set()
    for axis in axes:
        if not -ndim <= axis < ndim:
            raise DimensionError(f"{op}: axis {axis} out of range for rank {ndim}")
        normalized.add(axis % ndim)
    return tuple(sorted(normalized))


def reduce_mean(x: TensorLike, axes: Iterable[int]) -> DenseTensor:
    """Mean over the named axes; reduced axes are removed"""
    x = as_tensor(x)
    axes = _normalize_axes(axes, x.ndim, "reduce_mean")
    if not axes:
        return x
    count = int(np.prod([x.shape[a] for a in axes]))
    out = x.data.mean(axis=axes)

    def _backward(g: np.ndarray):
        expanded = np.expand_dims(g, axes)
        return (np.broadcast_to(expanded, x.data.shape) / count,)

    return record("reduce_mean", (x,), out, _backward)


def reduce_sum(x: TensorLike) -> DenseTensor:
    """Sum of all entries as a scalar tensor"""
    x = as_tensor(x)
    out = np.asarray(x.data.sum())
    return record("reduce_sum", (x,), out, lambda g: (np.full_like(x.data, g),))


def pointwise_affine(x: TensorLike, w: TensorLike, b: TensorLike, relu: bool = False) -> DenseTensor:
    """Per-position channel map y = x.w + b, optionally clamped at zero (a 1x1 convolution)"""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    if w.ndim != 2 or b.shape != [w.shape[1]]:
        raise DimensionError(f"pointwise_affine: weight {w.shape} and bias {b.shape} disagree")
    if x.ndim < 1 or x.shape[-1] != w.shape[0]:
        raise DimensionError(f"pointwise_affine: input channels of {x.shape} do not match weight {w.shape}")
    c_in, c_out = w.shape
    flat = x.data.reshape(-1, c_in)
    count_multiplies("pointwise_affine", flat.shape[0] * c_in * c_out)
    y = flat @ w.data + b.data
    mask: Optional[np.ndarray] = None
    if relu:
        # derivative at exactly zero is taken as 1 so zero-initialized layers still learn
        mask = y >= 0
        y = np.where(mask, y, y.dtype.type(0))
    out = y.reshape(x.shape[:-1] + [c_out])

    def _backward(g: np.ndarray):
        g2 = g.reshape(-1, c_out)
        if mask is not None:
            g2 = g2 * mask
        grad_x = (g2 @ w.data.T).reshape(x.data.shape) if x.requires_grad else None
        grad_w = flat.T @ g2 if w.requires_grad else None
        grad_b = g2.sum(axis=0) if b.requires_grad else None
        return grad_x, grad_w, grad_b

    return record("pointwise_affine", (x, w, b), out, _backward)


def concat_channels(parts: Sequence[TensorLike]) -> DenseTensor:
    """Concatenate along the last axis, parts in the given order"""
    if not parts:
        raise DimensionError("concat_channels: needs at least one part")
    tensors = [as_tensor(p) for p in parts]
    if len(tensors) == 1:
        return tensors[0]
    lead = tensors[0].shape[:-1]
    for t in tensors[1:]:
        if t.shape[:-1] != lead:
            raise DimensionError(f"concat_channels: leading dims {t.shape[:-1]} differ from {lead}")
    sizes = [t.shape[-1] for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=-1)

    def _backward(g: np.ndarray):
        return tuple(np.split(g, np.cumsum(sizes)[:-1], axis=-1))

    return record("concat_channels", tuple(tensors), out, _backward)


def broadcast_hadamard(g: TensorLike, l: TensorLike) -> DenseTensor:
    """out[..., h, w, c] = g[..., 0, 0, c] * l[..., h, w, c]"""
    g, l = as_tensor(g), as_tensor(l)
    if g.ndim < 3 or g.ndim != l.ndim or g.shape[-3:-1] != [1, 1]:
        raise DimensionError(f"broadcast_hadamard: cannot broadcast {g.shape} over {l.shape}")
    if g.shape[:-3] != l.shape[:-3]:
        raise DimensionError(f"broadcast_hadamard: leading dims of {g.shape} and {l.shape} differ")
    if g.shape[-1] != l.shape[-1]:
        raise DimensionError(f"broadcast_hadamard: channel mismatch between {g.shape} and {l.shape}")
    count_multiplies("broadcast_hadamard", l.size)
    out = g.data * l.data

    def _backward(grad: np.ndarray):
        grad_g = (grad * l.data).sum(axis=(-3, -2), keepdims=True) if g.requires_grad else None
        grad_l = grad * g.data if l.requires_grad else None
        return grad_g, grad_l

    return record("broadcast_hadamard", (g, l), out, _backward)


def multiply(a: TensorLike, b: TensorLike) -> DenseTensor:
    """Elementwise product of equally shaped tensors"""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise DimensionError(f"multiply: shapes {a.shape} and {b.shape} differ")
    count_multiplies("multiply", a.size)
    out = a.data * b.data
    return record("multiply", (a, b), out, lambda g: (g * b.data, g * a.data))


def add(*terms: TensorLike) -> DenseTensor:
    """Sum of equally shaped tensors"""
    tensors = [as_tensor(t) for t in terms]
    if not tensors:
        raise DimensionError("add: needs at least one term")
    for t in tensors[1:]:
        if t.shape != tensors[0].shape:
            raise DimensionError(f"add: shapes {tensors[0].shape} and {t.shape} differ")
    out = tensors[0].data.copy()
    for t in tensors[1:]:
        out = out + t.data
    return record("add", tuple(tensors), out, lambda g: tuple(g for _ in tensors))


def scale(x: TensorLike, factor: float) -> DenseTensor:
    x = as_tensor(x)
    out = x.data * x.data.dtype.type(factor)
    return record("scale", (x,), out, lambda g: (g * x.data.dtype.type(factor),))


def reshape(x: TensorLike, shape: Sequence[int]) -> DenseTensor:
    x = as_tensor(x)
    shape = [int(d) for d in shape]
    if int(np.prod(shape)) != x.size:
        raise DimensionError(f"reshape: cannot view {x.shape} as {shape}")
    out = x.data.reshape(shape)
    return record("reshape", (x,), out, lambda g: (g.reshape(x.data.shape),))


def expand(x: TensorLike, shape: Sequence[int]) -> DenseTensor:
    """Replicate size-1 axes up to ``shape`` (same rank only)"""
    x = as_tensor(x)
    shape = [int(d) for d in shape]
    if len(shape) != x.ndim or any(s != d and s != 1 for s, d in zip(x.shape, shape)):
        raise DimensionError(f"expand: cannot expand {x.shape} to {shape}")
    expanded_axes = tuple(i for i, (s, d) in enumerate(zip(x.shape, shape)) if s != d)
    out = np.broadcast_to(x.data, shape).copy()

    def _backward(g: np.ndarray):
        return (g.sum(axis=expanded_axes, keepdims=True) if expanded_axes else g,)

    return record("expand", (x,), out, _backward)


def take_frames(x: TensorLike, indices: Sequence[int]) -> DenseTensor:
    """Gather entries along the leading axis (indices may repeat)"""
    x = as_tensor(x)
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= x.shape[0]):
        raise DimensionError(f"take_frames: indices out of range for leading dim {x.shape[0]}")
    out = x.data[idx]

    def _backward(g: np.ndarray):
        grad = np.zeros_like(x.data)
        np.add.at(grad, idx, g)
        return (grad,)

    return record("take_frames", (x,), out, _backward)


def stack(tensors: Sequence[TensorLike]) -> DenseTensor:
    """Stack equally shaped tensors along a new leading axis"""
    items = [as_tensor(t) for t in tensors]
    if not items:
        raise DimensionError("stack: needs at least one tensor")
    for t in items[1:]:
        if t.shape != items[0].shape:
            raise DimensionError(f"stack: shapes {items[0].shape} and {t.shape} differ")
    out = np.stack([t.data for t in items], axis=0)
    return record("stack", tuple(items), out, lambda g: tuple(g[i] for i in range(len(items))))


def unfold_3x3(x: TensorLike) -> DenseTensor:
    """[T,H,W,C] -> [T,H,W,9C]: zero-padded 3x3 neighbourhoods, offsets in row-major order"""
    x = as_tensor(x)
    if x.ndim != 4:
        raise DimensionError(f"unfold_3x3: expected [T,H,W,C], got {x.shape}")
    t, h, w, c = x.shape
    padded = np.pad(x.data, ((0, 0), (1, 1), (1, 1), (0, 0)))
    out = np.concatenate(
        [padded[:, dy:dy + h, dx:dx + w, :] for dy in range(3) for dx in range(3)], axis=-1)

    def _backward(g: np.ndarray):
        grad = np.zeros_like(padded)
        for k, (dy, dx) in enumerate((dy, dx) for dy in range(3) for dx in range(3)):
            grad[:, dy:dy + h, dx:dx + w, :] += g[..., k * c:(k + 1) * c]
        return (grad[:, 1:h + 1, 1:w + 1, :],)

    return record("unfold_3x3", (x,), out, _backward)


def avg_pool_2x2(x: TensorLike) -> DenseTensor:
    """[T,H,W,C] -> [T,H/2,W/2,C] by mean pooling"""
    x = as_tensor(x)
    if x.ndim != 4 or x.shape[1] % 2 or x.shape[2] % 2:
        raise DimensionError(f"avg_pool_2x2: needs [T,H,W,C] with even H and W, got {x.shape}")
    t, h, w, c = x.shape
    out = x.data.reshape(t, h // 2, 2, w // 2, 2, c).mean(axis=(2, 4))

    def _backward(g: np.ndarray):
        return (np.repeat(np.repeat(g, 2, axis=1), 2, axis=2) / 4,)

    return record("avg_pool_2x2", (x,), out, _backward)


def detach(x: TensorLike) -> DenseTensor:
    """Copy without gradient tracking"""
    return DenseTensor(as_tensor(x).data.copy())


__all__: List[str] = [
    "matmul", "transpose", "softmax_rows", "reduce_mean", "reduce_sum", "pointwise_affine",
    "concat_channels", "broadcast_hadamard", "multiply", "add", "scale", "reshape", "expand",
    "take_frames", "stack", "unfold_3x3", "avg_pool_2x2", "detach",
]
