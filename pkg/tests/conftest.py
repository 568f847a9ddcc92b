"""Shared test helpers: finite-difference gradient oracle."""

import numpy as np

import csiauth.autodiff as ad


def central_difference(f, x, h=1e-5):
    """Elementwise gradient of scalar f at x via central differences."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat, gflat = x.ravel(), grad.ravel()
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + h
        fp = f(x)
        flat[i] = keep - h
        fm = f(x)
        flat[i] = keep
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    denom = max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-12)
    return np.max(np.abs(a - b)) / denom


def gradcheck(op, arrays, h=1e-5, tol=1e-4, seed=0):
    """Compare reverse-mode gradients of op(*arrays) against the
    finite-difference oracle for every input, using a fixed random
    projection to scalarize the output."""
    arrays = [np.asarray(a, dtype=np.float64) for a in arrays]
    tensors = [ad.Tensor(a.copy(), requires_grad=True) for a in arrays]
    out = op(*tensors)
    proj = np.random.default_rng(seed).standard_normal(out.shape)
    ad.backward(ad.tsum(ad.mul(out, proj)))
    for i in range(len(arrays)):
        def scalar(x, i=i):
            args = [ad.Tensor(a) for a in arrays]
            args[i] = ad.Tensor(x)
            return float(np.sum(op(*args).data * proj))

        fd = central_difference(scalar, arrays[i].copy(), h)
        err = rel_err(tensors[i].grad, fd)
        assert err < tol, f"input {i}: autodiff/FD mismatch {err:.2e}"
