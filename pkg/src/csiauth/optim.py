"""Adam with decoupled weight decay, plus named-tensor checkpoint I/O."""

import struct

import numpy as np

from .errors import FormatError, ShapeError

CHECKPOINT_MAGIC = b"NTB1"


def adamw_step(value, grad, m, v, t, *, lr, beta1=0.9, beta2=0.999, eps=1e-8,
               weight_decay=0.0):
    """One update for a single parameter array; mutates value/m/v in place.

    Decoupled weight decay shrinks the parameter before the Adam step, so a
    zero gradient with wd > 0 still contracts the parameter by (1 - lr*wd).
    `t` is the 1-based step count used for bias correction.
    """
    if grad.shape != value.shape:
        raise ShapeError(f"adamw_step: grad {grad.shape} vs param {value.shape}")
    if weight_decay:
        value *= 1.0 - lr * weight_decay
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    value -= lr * m_hat / (np.sqrt(v_hat) + eps)


class AdamW:
    """Optimizer over a name -> Tensor parameter dict."""

    def __init__(self, params, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8,
                 weight_decay=0.0):
        self.params = dict(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self._m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self._v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def step(self):
        self.t += 1
        for name, p in self.params.items():
            grad = p.grad if p.grad is not None else np.zeros_like(p.data)
            adamw_step(p.data, grad, self._m[name], self._v[name], self.t,
                       lr=self.lr, beta1=self.beta1, beta2=self.beta2,
                       eps=self.eps, weight_decay=self.weight_decay)

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()


def save_tensors(path, tensors):
    """Write a name -> ndarray dict as a little-endian float64 blob file."""
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(tensors)))
        for name, arr in tensors.items():
            arr = np.asarray(arr, dtype=np.float64)  # ascontiguousarray would promote 0-d to 1-d
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", arr.ndim))
            for dim in arr.shape:
                fh.write(struct.pack("<I", dim))
            fh.write(arr.astype("<f8").tobytes())


def load_tensors(path):
    """Read a blob file back into an ordered name -> ndarray dict."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise FormatError("bad checkpoint magic", 0)
    (count,) = struct.unpack_from("<I", blob, 4)
    offset = 8
    out = {}
    for _ in range(count):
        try:
            (name_len,) = struct.unpack_from("<H", blob, offset)
            offset += 2
            name = blob[offset : offset + name_len].decode("utf-8")
            offset += name_len
            (ndim,) = struct.unpack_from("<B", blob, offset)
            offset += 1
            shape = struct.unpack_from(f"<{ndim}I", blob, offset) if ndim else ()
            offset += 4 * ndim
            size = int(np.prod(shape)) if shape else 1
            end = offset + 8 * size
            if end > len(blob):
                raise FormatError("truncated checkpoint", offset)
            arr = np.frombuffer(blob[offset:end], dtype="<f8").reshape(shape)
            offset = end
        except struct.error:
            raise FormatError("truncated checkpoint", offset)
        out[name] = arr.astype(np.float64)
    return out
