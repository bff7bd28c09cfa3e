"""
Reverse-mode differentiation over numpy arrays.

Operations executed while a Tape is active are appended to it in execution
order together with the activations their backward pass needs. backward()
walks the tape in reverse and deposits gradients on the leaf tensors that
require them. Outside a tape every operation is a plain forward computation.

Arrays keep their dtype through every operation: parameters and activations
are float32 by default, gradient checks run the same code in float64. Loss
reductions accumulate in float64.
"""

from __future__ import annotations

import contextvars
import logging
from contextlib import contextmanager
from dataclasses import dataclass
from typing import (
    Any,
    ClassVar,
    Iterable,
    Iterator,
    List,
    Optional,
    Sequence,
    Tuple,
    Union,
)

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .exceptions import AutodiffException, DimensionException, ValidationException

logger = logging.getLogger(__name__)

DEFAULT_DTYPE = np.float32

Scalar = Union[float, int]
Gradients = Tuple[Optional[np.ndarray], ...]

_ACTIVE_TAPE: contextvars.ContextVar[Optional["Tape"]] = contextvars.ContextVar(
    "toddlerlab_active_tape", default=None
)


class Tensor:
    """
    Dense numeric array with a gradient slot.

    Parameters:
    - data: anything numpy can turn into an array. Float32 and float64 arrays keep
      their dtype, everything else becomes float32 unless ``dtype`` says otherwise.
    - requires_grad: whether backward() should deposit a gradient here.
    - name: optional label used in diagnostics and checkpoints.
    """

    def __init__(
        self,
        data: Any,
        requires_grad: bool = False,
        name: Optional[str] = None,
        dtype: Optional[Any] = None,
    ) -> None:
        array = np.asarray(data)
        if dtype is None:
            dtype = (
                array.dtype if array.dtype in (np.float32, np.float64) else DEFAULT_DTYPE
            )
        self.data: np.ndarray = np.ascontiguousarray(array, dtype=dtype)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def ndim(self) -> int:
        return int(self.data.ndim)

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionException(
                f"item() needs a single element, tensor has shape {self.shape}"
            )
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        """Same data, cut from the graph."""
        return Tensor(self.data, requires_grad=False, name=self.name)

    def zero_grad(self) -> None:
        self.grad = None

    def reshape(self, *shape: int) -> "Tensor":
        return reshape(self, shape)

    def sum(self, axis: Optional[int] = None) -> "Tensor":
        return tensor_sum(self, axis=axis)

    def mean(self) -> "Tensor":
        return tensor_mean(self)

    def __add__(self, other: Union["Tensor", Scalar, np.ndarray]) -> "Tensor":
        return add(self, other)

    def __radd__(self, other: Union[Scalar, np.ndarray]) -> "Tensor":
        return add(other, self)

    def __sub__(self, other: Union["Tensor", Scalar, np.ndarray]) -> "Tensor":
        return sub(self, other)

    def __rsub__(self, other: Union[Scalar, np.ndarray]) -> "Tensor":
        return sub(other, self)

    def __mul__(self, other: Union["Tensor", Scalar, np.ndarray]) -> "Tensor":
        return mul(self, other)

    def __rmul__(self, other: Union[Scalar, np.ndarray]) -> "Tensor":
        return mul(other, self)

    def __neg__(self) -> "Tensor":
        return mul(self, -1.0)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return (
            f"Tensor(shape={self.shape}, dtype={self.dtype},"
            f" requires_grad={self.requires_grad}{label})"
        )


@dataclass
class TapeEntry:
    op: "Function"
    inputs: Tuple[Tensor, ...]
    output: Tensor


class Tape:
    """
    Ordered record of the operations executed while it is active.

    Entries are appended in execution order, so every input precedes its consumer.
    A tape supports exactly one backward pass; afterwards its saved activations
    are released.

    Usage:
        with Tape() as tape:
            loss = mse(linear(x, w, b), y)
        backward(loss, tape)
    """

    def __init__(self) -> None:
        self.entries: List[TapeEntry] = []
        self._consumed = False
        self._tokens: List[contextvars.Token[Optional[Tape]]] = []

    def __enter__(self) -> "Tape":
        self._tokens.append(_ACTIVE_TAPE.set(self))
        return self

    def __exit__(self, *exc: Any) -> None:
        _ACTIVE_TAPE.reset(self._tokens.pop())

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def consumed(self) -> bool:
        return self._consumed

    def record(self, op: "Function", inputs: Tuple[Tensor, ...], output: Tensor) -> None:
        if self._consumed:
            raise AutodiffException("Cannot record onto a tape after backward()")
        self.entries.append(TapeEntry(op, inputs, output))

    def release(self) -> None:
        self.entries = []
        self._consumed = True


ComputationRecord = Tape


@contextmanager
def no_grad() -> Iterator[None]:
    """Suspend recording inside an active tape."""
    token = _ACTIVE_TAPE.set(None)
    try:
        yield
    finally:
        _ACTIVE_TAPE.reset(token)


def _as_tensor(value: Union[Tensor, Scalar, np.ndarray], like: Tensor) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=like.dtype))


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum out the axes numpy broadcasting expanded so grad matches shape."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Function:
    """
    Base class for differentiable operations.

    Subclasses implement forward() on raw arrays, keep whatever activations
    backward() needs on ``self``, and return one gradient (or None) per input
    from backward().
    """

    name: ClassVar[str] = "function"

    def forward(self, *arrays: np.ndarray, **kwargs: Any) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> Gradients:
        raise NotImplementedError

    @classmethod
    def apply(cls, *tensors: Tensor, **kwargs: Any) -> Tensor:
        op = cls()
        out_data = op.forward(*(t.data for t in tensors), **kwargs)
        tape = _ACTIVE_TAPE.get()
        requires_grad = tape is not None and any(t.requires_grad for t in tensors)
        out = Tensor(out_data, requires_grad=requires_grad)
        if requires_grad and tape is not None:
            tape.record(op, tensors, out)
        return out


def backward(
    loss: Tensor,
    tape: Tape,
    params: Optional[Iterable[Tensor]] = None,
) -> None:
    """
    Populate ``.grad`` on every leaf tensor that requires a gradient.

    Gradients accumulate onto any gradient already present. Tensors passed in
    ``params`` that the loss does not depend on receive an all-zero gradient.

    Raises:
        AutodiffException: If the loss is not a scalar or the tape was already used.
    """
    if loss.size != 1:
        raise AutodiffException(
            f"backward() needs a scalar loss, got shape {loss.shape}"
        )
    if tape.consumed:
        raise AutodiffException(
            "backward() already ran on this record; repeat the forward pass first"
        )

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    produced = {id(entry.output) for entry in tape.entries}
    leaves: dict[int, Tensor] = {}

    for entry in reversed(tape.entries):
        for inp in entry.inputs:
            if inp.requires_grad and id(inp) not in produced:
                leaves[id(inp)] = inp
        grad_out = grads.pop(id(entry.output), None)
        if grad_out is None:
            continue
        input_grads = entry.op.backward(grad_out)
        for inp, grad in zip(entry.inputs, input_grads):
            if grad is None or not inp.requires_grad:
                continue
            grad = np.asarray(grad, dtype=inp.dtype).reshape(inp.shape)
            key = id(inp)
            grads[key] = grads[key] + grad if key in grads else grad

    for key, leaf in leaves.items():
        grad = grads.get(key)
        if grad is None:
            continue
        leaf.grad = grad.copy() if leaf.grad is None else leaf.grad + grad

    if params is not None:
        for param in params:
            if param.grad is None:
                param.grad = np.zeros_like(param.data)

    logger.debug("backward over %d recorded operations", len(tape.entries))
    tape.release()


# --------------------------------------------------------------
# Elementwise and structural operations
# --------------------------------------------------------------


class Add(Function):
    name = "add"

    def forward(self, a: np.ndarray, b: np.ndarray, **kwargs: Any) -> np.ndarray:
        self.shapes = (a.shape, b.shape)
        return a + b

    def backward(self, grad: np.ndarray) -> Gradients:
        return _unbroadcast(grad, self.shapes[0]), _unbroadcast(grad, self.shapes[1])


class Sub(Function):
    name = "sub"

    def forward(self, a: np.ndarray, b: np.ndarray, **kwargs: Any) -> np.ndarray:
        self.shapes = (a.shape, b.shape)
        return a - b

    def backward(self, grad: np.ndarray) -> Gradients:
        return _unbroadcast(grad, self.shapes[0]), _unbroadcast(-grad, self.shapes[1])


class Mul(Function):
    name = "mul"

    def forward(self, a: np.ndarray, b: np.ndarray, **kwargs: Any) -> np.ndarray:
        self.a, self.b = a, b
        return a * b

    def backward(self, grad: np.ndarray) -> Gradients:
        return (
            _unbroadcast(grad * self.b, self.a.shape),
            _unbroadcast(grad * self.a, self.b.shape),
        )


class ReLU(Function):
    name = "relu"

    def forward(self, x: np.ndarray, **kwargs: Any) -> np.ndarray:
        self.positive = x > 0
        return np.where(self.positive, x, np.zeros((), dtype=x.dtype))

    def backward(self, grad: np.ndarray) -> Gradients:
        return (grad * self.positive,)


class Sigmoid(Function):
    name = "sigmoid"

    def forward(self, x: np.ndarray, **kwargs: Any) -> np.ndarray:
        # tanh form never overflows for large |x|
        self.out = (0.5 * (1.0 + np.tanh(0.5 * x))).astype(x.dtype)
        return self.out

    def backward(self, grad: np.ndarray) -> Gradients:
        return (grad * self.out * (1.0 - self.out),)


class Tanh(Function):
    name = "tanh"

    def forward(self, x: np.ndarray, **kwargs: Any) -> np.ndarray:
        self.out = np.tanh(x)
        return self.out

    def backward(self, grad: np.ndarray) -> Gradients:
        return (grad * (1.0 - self.out * self.out),)


class Softmax(Function):
    name = "softmax"

    def forward(self, x: np.ndarray, **kwargs: Any) -> np.ndarray:
        self.out = softmax_array(x)
        return self.out

    def backward(self, grad: np.ndarray) -> Gradients:
        inner = (grad * self.out).sum(axis=-1, keepdims=True)
        return (self.out * (grad - inner),)


class LogSoftmax(Function):
    name = "log_softmax"

    def forward(self, x: np.ndarray, **kwargs: Any) -> np.ndarray:
        shifted = x - x.max(axis=-1, keepdims=True)
        log_norm = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
        out = shifted - log_norm
        self.probs = np.exp(out)
        return out

    def backward(self, grad: np.ndarray) -> Gradients:
        return (grad - self.probs * grad.sum(axis=-1, keepdims=True),)


class Reshape(Function):
    name = "reshape"

    def forward(self, x: np.ndarray, shape: Tuple[int, ...] = (), **kwargs: Any) -> np.ndarray:
        self.in_shape = x.shape
        try:
            return x.reshape(shape)
        except ValueError as e:
            raise DimensionException(
                f"Cannot reshape {x.shape} into {tuple(shape)}", axis="size"
            ) from e

    def backward(self, grad: np.ndarray) -> Gradients:
        return (grad.reshape(self.in_shape),)


class Sum(Function):
    name = "sum"

    def forward(self, x: np.ndarray, axis: Optional[int] = None, **kwargs: Any) -> np.ndarray:
        self.in_shape = x.shape
        self.axis = axis
        return np.asarray(x.sum(axis=axis), dtype=x.dtype)

    def backward(self, grad: np.ndarray) -> Gradients:
        if self.axis is not None:
            grad = np.expand_dims(grad, self.axis)
        return (np.broadcast_to(grad, self.in_shape).copy(),)


class Mean(Function):
    name = "mean"

    def forward(self, x: np.ndarray, **kwargs: Any) -> np.ndarray:
        self.in_shape = x.shape
        return np.asarray(x.astype(np.float64).mean(), dtype=x.dtype)

    def backward(self, grad: np.ndarray) -> Gradients:
        count = int(np.prod(self.in_shape)) if self.in_shape else 1
        return (np.full(self.in_shape, grad / count, dtype=grad.dtype),)


class SelectColumns(Function):
    """out[b] = x[b, index[b]] for a [B, A] input."""

    name = "select_columns"

    def forward(
        self, x: np.ndarray, index: Optional[np.ndarray] = None, **kwargs: Any
    ) -> np.ndarray:
        assert index is not None
        if x.ndim != 2 or index.shape != (x.shape[0],):
            raise DimensionException(
                f"select_columns needs [B, A] input and [B] index, got {x.shape} and"
                f" {index.shape}",
                axis="batch",
            )
        self.in_shape = x.shape
        self.index = index
        return x[np.arange(x.shape[0]), index]

    def backward(self, grad: np.ndarray) -> Gradients:
        out = np.zeros(self.in_shape, dtype=grad.dtype)
        out[np.arange(self.in_shape[0]), self.index] = grad
        return (out,)


# --------------------------------------------------------------
# Layers
# --------------------------------------------------------------


class Linear(Function):
    name = "linear"

    def forward(self, x: np.ndarray, w: np.ndarray, b: np.ndarray, **kwargs: Any) -> np.ndarray:
        if w.ndim != 2:
            raise DimensionException(f"Weight must be [O, N], got {w.shape}", axis="weight")
        if x.shape[-1] != w.shape[1]:
            raise DimensionException(
                f"Input has {x.shape[-1]} features, weight expects {w.shape[1]}",
                axis="in_features",
            )
        if b.shape != (w.shape[0],):
            raise DimensionException(
                f"Bias must have shape ({w.shape[0]},), got {b.shape}",
                axis="out_features",
            )
        self.x, self.w = x, w
        return x @ w.T + b

    def backward(self, grad: np.ndarray) -> Gradients:
        if self.x.ndim == 1:
            grad_w = np.outer(grad, self.x)
            grad_b = grad
        else:
            grad_w = grad.T @ self.x
            grad_b = grad.sum(axis=0)
        return grad @ self.w, grad_w, grad_b


def _check_conv_shapes(
    x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int, in_axis: int
) -> None:
    if stride < 1:
        raise ValidationException(f"Stride must be >= 1, got {stride}")
    if x.ndim != 4:
        raise DimensionException(
            f"Input must be [C, H, W] or [N, C, H, W], got {x.shape}", axis="rank"
        )
    if w.ndim != 4:
        raise DimensionException(f"Kernel must be rank 4, got {w.shape}", axis="rank")
    if x.shape[1] != w.shape[in_axis]:
        raise DimensionException(
            f"Input has {x.shape[1]} channels, kernel expects {w.shape[in_axis]}",
            axis="channels",
        )
    out_channels = w.shape[1 - in_axis]
    if b.shape != (out_channels,):
        raise DimensionException(
            f"Bias must have shape ({out_channels},), got {b.shape}",
            axis="out_channels",
        )


def conv_output_size(size: int, kernel: int, stride: int) -> int:
    """Valid-convolution output length: floor((size - kernel) / stride) + 1."""
    return (size - kernel) // stride + 1


class Conv2d(Function):
    """Valid (unpadded) 2-D cross-correlation, lowered to one matmul via im2col."""

    name = "conv2d"

    def forward(
        self,
        x: np.ndarray,
        w: np.ndarray,
        b: np.ndarray,
        stride: int = 1,
        **kwargs: Any,
    ) -> np.ndarray:
        self.unbatched = x.ndim == 3
        if self.unbatched:
            x = x[None]
        _check_conv_shapes(x, w, b, stride, in_axis=1)
        n, c, h, wd = x.shape
        c_out, _, kh, kw = w.shape
        if h < kh:
            raise DimensionException(f"Input height {h} < kernel height {kh}", axis="height")
        if wd < kw:
            raise DimensionException(f"Input width {wd} < kernel width {kw}", axis="width")
        oh, ow = conv_output_size(h, kh, stride), conv_output_size(wd, kw, stride)

        windows = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
        cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c * kh * kw)
        w_mat = w.reshape(c_out, -1)
        out = (cols @ w_mat.T + b).reshape(n, oh, ow, c_out).transpose(0, 3, 1, 2)

        self.cols, self.w, self.stride = cols, w, stride
        self.in_shape = x.shape
        self.out_hw = (oh, ow)
        out = np.ascontiguousarray(out)
        return out[0] if self.unbatched else out

    def backward(self, grad: np.ndarray) -> Gradients:
        if self.unbatched:
            grad = grad[None]
        n, c, h, wd = self.in_shape
        c_out, _, kh, kw = self.w.shape
        oh, ow = self.out_hw
        s = self.stride

        grad_rows = grad.transpose(0, 2, 3, 1).reshape(-1, c_out)
        grad_w = (grad_rows.T @ self.cols).reshape(self.w.shape)
        grad_b = grad_rows.sum(axis=0)
        grad_cols = (grad_rows @ self.w.reshape(c_out, -1)).reshape(n, oh, ow, c, kh, kw)
        grad_cols = grad_cols.transpose(0, 3, 4, 5, 1, 2)

        grad_x = np.zeros(self.in_shape, dtype=grad.dtype)
        for i in range(kh):
            for j in range(kw):
                grad_x[:, :, i : i + s * (oh - 1) + 1 : s, j : j + s * (ow - 1) + 1 : s] += (
                    grad_cols[:, :, i, j]
                )
        return (grad_x[0] if self.unbatched else grad_x), grad_w, grad_b


class ConvTranspose2d(Function):
    """
    Transposed convolution: the adjoint of Conv2d with the same kernel and stride.
    Kernel layout is [C_in, C_out, kh, kw]; output size is (H - 1) * stride + kh.
    """

    name = "conv_transpose2d"

    def forward(
        self,
        x: np.ndarray,
        w: np.ndarray,
        b: np.ndarray,
        stride: int = 1,
        **kwargs: Any,
    ) -> np.ndarray:
        self.unbatched = x.ndim == 3
        if self.unbatched:
            x = x[None]
        _check_conv_shapes(x, w, b, stride, in_axis=0)
        n, c_in, h, wd = x.shape
        _, c_out, kh, kw = w.shape
        oh, ow = (h - 1) * stride + kh, (wd - 1) * stride + kw

        rows = x.transpose(0, 2, 3, 1).reshape(-1, c_in)
        cols = (rows @ w.reshape(c_in, -1)).reshape(n, h, wd, c_out, kh, kw)
        cols = cols.transpose(0, 3, 4, 5, 1, 2)
        out = np.zeros((n, c_out, oh, ow), dtype=x.dtype)
        for i in range(kh):
            for j in range(kw):
                rows_out = slice(i, i + stride * (h - 1) + 1, stride)
                cols_out = slice(j, j + stride * (wd - 1) + 1, stride)
                out[:, :, rows_out, cols_out] += cols[:, :, i, j]
        out += b[None, :, None, None]

        self.rows, self.w, self.stride = rows, w, stride
        self.in_shape = x.shape
        return out[0] if self.unbatched else out

    def backward(self, grad: np.ndarray) -> Gradients:
        if self.unbatched:
            grad = grad[None]
        n, c_in, h, wd = self.in_shape
        _, c_out, kh, kw = self.w.shape
        s = self.stride

        grad_b = grad.sum(axis=(0, 2, 3))
        windows = sliding_window_view(grad, (kh, kw), axis=(2, 3))[:, :, ::s, ::s]
        grad_cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * h * wd, c_out * kh * kw)
        w_mat = self.w.reshape(c_in, -1)
        grad_x = (grad_cols @ w_mat.T).reshape(n, h, wd, c_in).transpose(0, 3, 1, 2)
        grad_w = (self.rows.T @ grad_cols).reshape(self.w.shape)
        grad_x = np.ascontiguousarray(grad_x)
        return (grad_x[0] if self.unbatched else grad_x), grad_w, grad_b


# --------------------------------------------------------------
# Losses
# --------------------------------------------------------------


class MSE(Function):
    name = "mse"

    def forward(self, pred: np.ndarray, target: np.ndarray, **kwargs: Any) -> np.ndarray:
        if pred.shape != target.shape:
            raise DimensionException(
                f"Prediction shape {pred.shape} != target shape {target.shape}",
                axis="shape",
            )
        self.diff = pred.astype(np.float64) - target.astype(np.float64)
        self.dtypes = (pred.dtype, target.dtype)
        return np.asarray(np.mean(self.diff * self.diff), dtype=np.float64)

    def backward(self, grad: np.ndarray) -> Gradients:
        scaled = grad * 2.0 * self.diff / max(self.diff.size, 1)
        return scaled.astype(self.dtypes[0]), (-scaled).astype(self.dtypes[1])


class SoftmaxCrossEntropy(Function):
    name = "softmax_cross_entropy"

    def forward(
        self, logits: np.ndarray, labels: Optional[np.ndarray] = None, **kwargs: Any
    ) -> np.ndarray:
        self.unbatched = logits.ndim == 1
        batch = logits[None] if self.unbatched else logits
        labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
        k = batch.shape[-1]
        if labels.shape != (batch.shape[0],):
            raise DimensionException(
                f"Expected {batch.shape[0]} labels, got {labels.shape}", axis="batch"
            )
        if np.any(labels < 0) or np.any(labels >= k):
            raise ValidationException(f"Label out of range [0, {k}): {labels.tolist()}")

        wide = batch.astype(np.float64)
        shifted = wide - wide.max(axis=-1, keepdims=True)
        log_norm = np.log(np.exp(shifted).sum(axis=-1))
        rows = np.arange(batch.shape[0])
        losses = log_norm - shifted[rows, labels]

        probs = np.exp(shifted - log_norm[:, None])
        probs[rows, labels] -= 1.0
        self.grad_logits = probs / batch.shape[0]
        self.dtype = logits.dtype
        return np.asarray(losses.mean(), dtype=np.float64)

    def backward(self, grad: np.ndarray) -> Gradients:
        out = (grad * self.grad_logits).astype(self.dtype)
        return (out[0] if self.unbatched else out,)


# --------------------------------------------------------------
# Functional surface
# --------------------------------------------------------------


def softmax_array(x: np.ndarray) -> np.ndarray:
    """Softmax over the last axis with max-subtraction."""
    shifted = x - x.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def add(a: Union[Tensor, Scalar, np.ndarray], b: Union[Tensor, Scalar, np.ndarray]) -> Tensor:
    a_t, b_t = _coerce_pair(a, b)
    return Add.apply(a_t, b_t)


def sub(a: Union[Tensor, Scalar, np.ndarray], b: Union[Tensor, Scalar, np.ndarray]) -> Tensor:
    a_t, b_t = _coerce_pair(a, b)
    return Sub.apply(a_t, b_t)


def mul(a: Union[Tensor, Scalar, np.ndarray], b: Union[Tensor, Scalar, np.ndarray]) -> Tensor:
    a_t, b_t = _coerce_pair(a, b)
    return Mul.apply(a_t, b_t)


def _coerce_pair(
    a: Union[Tensor, Scalar, np.ndarray], b: Union[Tensor, Scalar, np.ndarray]
) -> Tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, _as_tensor(b, a)
    if isinstance(b, Tensor):
        return _as_tensor(a, b), b
    raise ValidationException("At least one operand must be a Tensor")


def relu(x: Tensor) -> Tensor:
    return ReLU.apply(x)


def sigmoid(x: Tensor) -> Tensor:
    return Sigmoid.apply(x)


def tanh(x: Tensor) -> Tensor:
    return Tanh.apply(x)


def softmax(x: Tensor) -> Tensor:
    return Softmax.apply(x)


def log_softmax(x: Tensor) -> Tensor:
    return LogSoftmax.apply(x)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    return Reshape.apply(x, shape=tuple(shape))


def tensor_sum(x: Tensor, axis: Optional[int] = None) -> Tensor:
    return Sum.apply(x, axis=axis)


def tensor_mean(x: Tensor) -> Tensor:
    return Mean.apply(x)


def select_columns(x: Tensor, index: Union[np.ndarray, Sequence[int]]) -> Tensor:
    return SelectColumns.apply(x, index=np.asarray(index, dtype=np.int64))


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    return Linear.apply(x, weight, bias)


def conv2d(x: Tensor, kernels: Tensor, bias: Tensor, stride: int = 1) -> Tensor:
    return Conv2d.apply(x, kernels, bias, stride=stride)


def conv_transpose2d(x: Tensor, kernels: Tensor, bias: Tensor, stride: int = 1) -> Tensor:
    return ConvTranspose2d.apply(x, kernels, bias, stride=stride)


def mse(pred: Tensor, target: Union[Tensor, np.ndarray]) -> Tensor:
    target_t = target if isinstance(target, Tensor) else Tensor(target, dtype=pred.dtype)
    return MSE.apply(pred, target_t)


def softmax_cross_entropy(
    logits: Tensor, labels: Union[int, Sequence[int], np.ndarray]
) -> Tensor:
    return SoftmaxCrossEntropy.apply(logits, labels=np.asarray(labels, dtype=np.int64))
