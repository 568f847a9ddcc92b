"""Minimal reverse-mode automatic differentiation over float64 numpy arrays.

Every operation builds a node in an implicit computation graph; calling
:func:`backward` on a scalar loss walks the graph once in reverse
topological order and accumulates gradients into every tensor that has
``requires_grad=True``.  Gradients accumulate additively across repeated
backward calls until :meth:`Tensor.zero_grad` is invoked.

Only the operations needed by the classifier are provided; there is no
GPU path and broadcasting support is limited to numpy semantics on the
forward side with gradient un-broadcasting on the backward side.
"""

import numpy as np

from .errors import ShapeError

LOG_FLOOR = 1e-12


class Tensor:
    """A dense float64 array plus an optional gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def zero_grad(self):
        self.grad = None

    def item(self):
        return float(self.data)

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(np.broadcast_to(g, self.data.shape), dtype=np.float64)
        else:
            self.grad += g

    def __repr__(self):
        tag = f" name={self.name}" if self.name else ""
        return f"Tensor(shape={self.data.shape}{tag})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data, name=None):
    """A leaf tensor that participates in optimization."""
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True, name=name)


def _unbroadcast(grad, shape):
    """Sum `grad` over the axes numpy broadcast to reach its shape."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _make(data, parents, backward):
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data + b.data
    except ValueError:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} do not broadcast")

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _make(data, (a, b), backward)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data - b.data
    except ValueError:
        raise ShapeError(f"sub: shapes {a.shape} and {b.shape} do not broadcast")

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(-_unbroadcast(g, b.shape))

    return _make(data, (a, b), backward)


def mul(a, b):
    """Elementwise product with numpy broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data * b.data
    except ValueError:
        raise ShapeError(f"mul: shapes {a.shape} and {b.shape} do not broadcast")

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _make(data, (a, b), backward)


def matmul(a, b):
    """Matrix product; leading batch dimensions broadcast."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} are not conformable")
    data = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape))

    return _make(data, (a, b), backward)


def relu(x):
    x = as_tensor(x)
    mask = x.data > 0
    data = np.where(mask, x.data, 0.0)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * mask)

    return _make(data, (x,), backward)


def sqrt(x):
    """Elementwise square root; the subgradient at 0 is taken as 0."""
    x = as_tensor(x)
    if np.any(x.data < 0):
        raise ValueError("sqrt: negative input")
    data = np.sqrt(x.data)
    pos = x.data > 0

    def backward(g):
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            np.divide(0.5 * g, data, out=gx, where=pos)
            x._accumulate(gx)

    return _make(data, (x,), backward)


def log(x, floor=LOG_FLOOR):
    """Natural log with the argument clamped from below at `floor`.

    The backward rule uses 1/clamp everywhere (not zero below the floor):
    a zero subgradient would permanently freeze confidently-wrong softmax
    outputs, which stalls recovery from saturation.
    """
    x = as_tensor(x)
    clamped = np.maximum(x.data, floor)
    data = np.log(clamped)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g / clamped)

    return _make(data, (x,), backward)


def reciprocal(x):
    """1/x with 0 mapped to 0 (safe for zero-degree graph rows)."""
    x = as_tensor(x)
    nz = x.data != 0
    data = np.divide(1.0, x.data, out=np.zeros_like(x.data), where=nz)

    def backward(g):
        if x.requires_grad:
            x._accumulate(-g * data * data)

    return _make(data, (x,), backward)


def threshold(x, theta):
    """Zero out entries below `theta`; gradient flows only through kept entries."""
    x = as_tensor(x)
    mask = x.data >= theta
    data = np.where(mask, x.data, 0.0)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * mask)

    return _make(data, (x,), backward)


def softmax(x, axis=-1):
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        if x.requires_grad:
            inner = (g * data).sum(axis=axis, keepdims=True)
            x._accumulate(data * (g - inner))

    return _make(data, (x,), backward)


def log_softmax(x, axis=-1):
    """log(softmax(x)); numerically stable at extreme logits, which keeps
    cross-entropy gradients alive when the softmax itself saturates."""
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    data = shifted - lse
    probs = np.exp(data)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g - probs * g.sum(axis=axis, keepdims=True))

    return _make(data, (x,), backward)


def tsum(x, axis=None, keepdims=False):
    x = as_tensor(x)
    data = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if x.requires_grad:
            gg = np.asarray(g)
            if axis is not None and not keepdims:
                gg = np.expand_dims(gg, axis)
            x._accumulate(np.broadcast_to(gg, x.shape).copy())

    return _make(data, (x,), backward)


def tmean(x, axis=None, keepdims=False):
    x = as_tensor(x)
    count = x.data.size if axis is None else x.shape[axis]
    data = x.data.mean(axis=axis, keepdims=keepdims)

    def backward(g):
        if x.requires_grad:
            gg = np.asarray(g) / count
        else:
            return
        if axis is not None and not keepdims:
            gg = np.expand_dims(gg, axis)
        x._accumulate(np.broadcast_to(gg, x.shape).copy())

    return _make(data, (x,), backward)


def transpose(x, axes=None):
    """Permute axes; with `axes=None` the last two axes are swapped."""
    x = as_tensor(x)
    if axes is None:
        if x.ndim < 2:
            raise ShapeError(f"transpose: need at least 2 axes, got shape {x.shape}")
        axes = tuple(range(x.ndim - 2)) + (x.ndim - 1, x.ndim - 2)
    inverse = np.argsort(axes)
    data = x.data.transpose(axes)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g.transpose(inverse))

    return _make(data, (x,), backward)


def reshape(x, shape):
    x = as_tensor(x)
    data = x.data.reshape(shape)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g.reshape(x.shape))

    return _make(data, (x,), backward)


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                t._accumulate(g[tuple(idx)])

    return _make(data, tuple(tensors), backward)


def narrow(x, axis, start, length):
    """Slice `length` entries from `start` along `axis`."""
    x = as_tensor(x)
    if start < 0 or start + length > x.shape[axis]:
        raise ShapeError(
            f"narrow: [{start}, {start + length}) out of range for axis {axis} of {x.shape}"
        )
    idx = [slice(None)] * x.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)
    data = x.data[idx]

    def backward(g):
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            gx[idx] = g
            x._accumulate(gx)

    return _make(data, (x,), backward)


def pad_axis(x, axis, before, after):
    """Zero-pad along one axis."""
    x = as_tensor(x)
    widths = [(0, 0)] * x.ndim
    widths[axis] = (before, after)
    data = np.pad(x.data, widths)
    idx = [slice(None)] * x.ndim
    idx[axis] = slice(before, before + x.shape[axis])
    idx = tuple(idx)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g[idx])

    return _make(data, (x,), backward)


def causal_conv1d(x, weight, bias=None, dilation=1):
    """Causal 1-D convolution with left zero padding.

    `x` has shape (..., C_in, L), `weight` (C_out, C_in, k), `bias` (C_out,).
    The input is left-padded with (k-1)*dilation zeros so the output keeps
    length L and position t never sees inputs later than t.  weight[..., k-1]
    multiplies the current sample, weight[..., 0] the oldest.

    Internally the data moves to channels-last so each tap becomes one
    large GEMM instead of numpy's slow per-matrix batched path.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    if weight.ndim != 3:
        raise ShapeError(f"causal_conv1d: weight must be 3-D, got {weight.shape}")
    if x.ndim < 2 or x.shape[-2] != weight.shape[1]:
        raise ShapeError(
            f"causal_conv1d: input {x.shape} does not match weight {weight.shape}"
        )
    if dilation < 1:
        raise ValueError("causal_conv1d: dilation must be >= 1")
    c_out, c_in, k = weight.shape
    length = x.shape[-1]
    lead = x.shape[:-2]
    pad = (k - 1) * dilation

    # im2col in channels-last layout: one (N*L, k*C_in) GEMM per call
    xcl = np.moveaxis(x.data.reshape((-1, c_in, length)), 1, 2)
    n = xcl.shape[0]
    xp = np.zeros((n, pad + length, c_in))
    xp[:, pad:, :] = xcl
    col = np.empty((n, length, k * c_in))
    for j in range(k):
        col[:, :, j * c_in : (j + 1) * c_in] = xp[:, j * dilation : j * dilation + length, :]
    col = col.reshape(n * length, k * c_in)
    # w_mat[j*c_in + c, o] = weight[o, c, j]
    w_mat = np.ascontiguousarray(weight.data.transpose(2, 1, 0).reshape(k * c_in, c_out))
    flat = col @ w_mat
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (c_out,):
            raise ShapeError(
                f"causal_conv1d: bias {bias.shape} does not match weight {weight.shape}"
            )
        flat += bias.data[None, :]
    data = np.moveaxis(flat.reshape(n, length, c_out), 1, 2).reshape(lead + (c_out, length))
    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        gl = np.ascontiguousarray(
            np.moveaxis(g.reshape((-1, c_out, length)), 1, 2)
        ).reshape(n * length, c_out)
        if x.requires_grad:
            gcol = (gl @ w_mat.T).reshape(n, length, k * c_in)
            gxp = np.zeros_like(xp)
            for j in range(k):
                gxp[:, j * dilation : j * dilation + length, :] += gcol[
                    :, :, j * c_in : (j + 1) * c_in
                ]
            x._accumulate(np.moveaxis(gxp[:, pad:, :], 1, 2).reshape(x.shape))
        if weight.requires_grad:
            gw_mat = col.T @ gl  # (k*C_in, C_out)
            weight._accumulate(gw_mat.reshape(k, c_in, c_out).transpose(2, 1, 0))
        if bias is not None and bias.requires_grad:
            bias._accumulate(gl.sum(axis=0))

    return _make(data, parents, backward)


def backward(loss):
    """Reverse-mode sweep from a scalar loss; accumulates into leaf gradients."""
    if not isinstance(loss, Tensor):
        raise TypeError("backward expects a Tensor")
    if loss.data.size != 1:
        raise ValueError(f"backward requires a scalar loss, got shape {loss.shape}")
    topo = []
    visited = set()
    stack = [(loss, False)]
    while stack:
        node, done = stack.pop()
        if done:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))
    loss._accumulate(np.ones_like(loss.data))
    for node in reversed(topo):
        if node._backward is not None:
            node._backward(node.grad)
