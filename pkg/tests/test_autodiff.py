"""Numerics engine: forward semantics, gradients vs finite differences,
optimizer update rules, checkpoint round trips."""

import numpy as np
import pytest

import csiauth.autodiff as ad
from conftest import gradcheck, rel_err
from csiauth.errors import FormatError, ShapeError
from csiauth.optim import AdamW, adamw_step, load_tensors, save_tensors

RNG = np.random.default_rng(1234)


def away_from_zero(shape, margin=0.3):
    """Random values with |x| bounded away from kinks."""
    x = RNG.standard_normal(shape)
    return np.sign(x) * (np.abs(x) + margin)


class TestForward:
    def test_relu(self):
        assert np.array_equal(ad.relu(np.array([-1.0, 0.0, 2.0])).data, [0.0, 0.0, 2.0])

    def test_softmax_symmetry(self):
        assert np.allclose(ad.softmax(np.array([0.0, 0.0])).data, [0.5, 0.5])

    def test_softmax_simplex(self):
        for _ in range(50):
            x = RNG.standard_normal((4, 7)) * 5
            p = ad.softmax(ad.Tensor(x), axis=-1).data
            assert np.all(p >= 0)
            assert np.max(np.abs(p.sum(axis=-1) - 1.0)) <= 1e-12

    def test_matmul_shape(self):
        out = ad.matmul(ad.Tensor(np.ones((2, 3))), ad.Tensor(np.ones((3, 4))))
        assert out.shape == (2, 4)

    def test_matmul_mismatch_names_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4, 2\)"):
            ad.matmul(ad.Tensor(np.ones((2, 3))), ad.Tensor(np.ones((4, 2))))

    def test_add_mismatch(self):
        with pytest.raises(ShapeError):
            ad.add(ad.Tensor(np.ones((2, 3))), ad.Tensor(np.ones((4, 5))))

    def test_causal_conv_hand_example(self):
        x = ad.Tensor(np.array([[1.0, 2.0, 3.0, 4.0]]))
        w = ad.Tensor(np.ones((1, 1, 2)))
        out = ad.causal_conv1d(x, w)
        assert np.allclose(out.data, [[1.0, 3.0, 5.0, 7.0]])

    def test_causal_conv_k1_identity(self):
        x = ad.Tensor(RNG.standard_normal((1, 9)))
        w = ad.Tensor(np.ones((1, 1, 1)))
        assert np.allclose(ad.causal_conv1d(x, w).data, x.data)

    def test_causal_conv_length_preserved(self):
        for k, dil in [(2, 1), (5, 1), (3, 4), (9, 2)]:
            x = ad.Tensor(RNG.standard_normal((2, 3, 21)))
            w = ad.Tensor(RNG.standard_normal((4, 3, k)))
            assert ad.causal_conv1d(x, w, dilation=dil).shape == (2, 4, 21)

    def test_causal_conv_causality(self):
        # perturbing input at t=3 leaves outputs before t=3 unchanged
        x0 = RNG.standard_normal((1, 2, 10))
        x1 = x0.copy()
        x1[..., 3] += 5.0
        w = RNG.standard_normal((3, 2, 4))
        out0 = ad.causal_conv1d(ad.Tensor(x0), ad.Tensor(w), dilation=2).data
        out1 = ad.causal_conv1d(ad.Tensor(x1), ad.Tensor(w), dilation=2).data
        assert np.array_equal(out0[..., :3], out1[..., :3])
        assert not np.array_equal(out0[..., 3:], out1[..., 3:])


class TestBackward:
    def test_square_at_three(self):
        x = ad.Tensor(3.0, requires_grad=True)
        ad.backward(ad.mul(x, x))
        assert np.allclose(x.grad, 6.0)

    def test_softmax_cross_entropy_identity(self):
        # d(mean CE)/d logits == (softmax(logits) - labels) / batch
        logits = ad.Tensor(RNG.standard_normal((5, 4)), requires_grad=True)
        y = np.zeros((5, 4))
        y[np.arange(5), RNG.integers(0, 4, 5)] = 1.0
        p = ad.softmax(logits, axis=-1)
        loss = ad.mul(ad.tmean(ad.tsum(ad.mul(ad.Tensor(y), ad.log(p)), axis=-1)), -1.0)
        ad.backward(loss)
        assert rel_err(logits.grad, (p.data - y) / 5.0) < 1e-10

    def test_composed_graph_matches_fd(self):
        def f(a, b):
            h = ad.relu(ad.matmul(a, b))
            return ad.softmax(ad.tsum(h, axis=0), axis=-1)

        gradcheck(f, [away_from_zero((3, 4)), away_from_zero((4, 2))], tol=1e-4)

    def test_non_scalar_loss_rejected(self):
        x = ad.Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(ValueError, match="scalar"):
            ad.backward(ad.mul(x, 2.0))

    def test_repeated_backward_accumulates(self):
        x = ad.Tensor(2.0, requires_grad=True)
        loss = ad.mul(x, x)
        ad.backward(loss)
        first = x.grad.copy()
        loss2 = ad.mul(x, x)
        ad.backward(loss2)
        assert np.allclose(x.grad, 2.0 * first)


class TestGradcheckEveryOp:
    """Central-difference verification (h=1e-5, 1e-4 relative) per op."""

    def test_add(self):
        gradcheck(ad.add, [RNG.standard_normal((3, 4)), RNG.standard_normal((3, 4))])

    def test_add_broadcast(self):
        gradcheck(ad.add, [RNG.standard_normal((2, 3, 4)), RNG.standard_normal((3, 1))])

    def test_sub(self):
        gradcheck(ad.sub, [RNG.standard_normal((2, 5)), RNG.standard_normal((2, 5))])

    def test_mul(self):
        gradcheck(ad.mul, [RNG.standard_normal((4, 3)), RNG.standard_normal((4, 3))])

    def test_mul_broadcast_scalar(self):
        gradcheck(ad.mul, [RNG.standard_normal((2, 6)), RNG.standard_normal(())])

    def test_matmul(self):
        gradcheck(ad.matmul, [RNG.standard_normal((3, 4)), RNG.standard_normal((4, 5))])

    def test_matmul_batched(self):
        gradcheck(ad.matmul, [RNG.standard_normal((2, 3, 4)), RNG.standard_normal((4, 2))])
        gradcheck(ad.matmul, [RNG.standard_normal((2, 3, 4)), RNG.standard_normal((2, 4, 5))])

    def test_relu(self):
        gradcheck(ad.relu, [away_from_zero((4, 4))])

    def test_sqrt(self):
        gradcheck(ad.sqrt, [np.abs(RNG.standard_normal((3, 5))) + 0.5])

    def test_log(self):
        gradcheck(ad.log, [np.abs(RNG.standard_normal((3, 3))) + 0.5])

    def test_reciprocal(self):
        gradcheck(ad.reciprocal, [away_from_zero((4, 2), margin=0.5)])

    def test_threshold(self):
        x = away_from_zero((5, 5), margin=0.4)  # keeps |x - 0.2| > 0.2
        gradcheck(lambda t: ad.threshold(t, 0.2), [x])

    def test_softmax(self):
        gradcheck(lambda t: ad.softmax(t, axis=-1), [RNG.standard_normal((4, 6))])

    def test_log_softmax(self):
        gradcheck(lambda t: ad.log_softmax(t, axis=-1), [RNG.standard_normal((3, 5))])
        x = RNG.standard_normal((4, 6)) * 3
        assert np.allclose(
            ad.log_softmax(ad.Tensor(x)).data, np.log(ad.softmax(ad.Tensor(x)).data),
            atol=1e-12,
        )

    def test_sum(self):
        gradcheck(lambda t: ad.tsum(t, axis=1), [RNG.standard_normal((3, 4, 2))])
        gradcheck(lambda t: ad.tsum(t, axis=-1, keepdims=True), [RNG.standard_normal((3, 4))])

    def test_mean(self):
        gradcheck(lambda t: ad.tmean(t, axis=0), [RNG.standard_normal((4, 3))])
        gradcheck(lambda t: ad.tmean(t, axis=-2), [RNG.standard_normal((2, 3, 4))])

    def test_transpose(self):
        gradcheck(ad.transpose, [RNG.standard_normal((3, 2, 4))])
        gradcheck(lambda t: ad.transpose(t, (2, 0, 1)), [RNG.standard_normal((2, 3, 4))])

    def test_reshape(self):
        gradcheck(lambda t: ad.reshape(t, (2, 6)), [RNG.standard_normal((3, 4))])

    def test_concat(self):
        gradcheck(
            lambda a, b: ad.concat([a, b], axis=1),
            [RNG.standard_normal((2, 3)), RNG.standard_normal((2, 4))],
        )

    def test_narrow(self):
        gradcheck(lambda t: ad.narrow(t, 1, 2, 3), [RNG.standard_normal((2, 7))])

    def test_pad(self):
        gradcheck(lambda t: ad.pad_axis(t, 1, 2, 1), [RNG.standard_normal((2, 4))])

    def test_causal_conv1d(self):
        gradcheck(
            lambda x, w, b: ad.causal_conv1d(x, w, b, dilation=2),
            [
                RNG.standard_normal((2, 3, 9)),
                RNG.standard_normal((4, 3, 3)),
                RNG.standard_normal(4),
            ],
        )


class TestAdamW:
    def test_zero_grad_no_decay_is_identity(self):
        p = ad.parameter(np.array([1.0, -2.0]))
        opt = AdamW({"p": p}, lr=0.01, weight_decay=0.0)
        before = p.data.copy()
        for _ in range(3):
            opt.step()
        assert np.array_equal(p.data, before)

    def test_first_step_magnitude(self):
        # bias-corrected t=1 update is exactly lr*g/(|g|+eps)
        lr, g, eps = 1e-3, 0.5, 1e-8
        value = np.array([1.0])
        m, v = np.zeros(1), np.zeros(1)
        adamw_step(value, np.array([g]), m, v, 1, lr=lr, eps=eps)
        assert abs(abs(value[0] - 1.0) - lr * g / (g + eps)) < 1e-15

    def test_decay_shrinks_without_gradient(self):
        p = ad.parameter(np.array([4.0]))
        lr, wd = 0.1, 0.5
        opt = AdamW({"p": p}, lr=lr, weight_decay=wd)
        opt.step()
        assert np.allclose(p.data, 4.0 * (1.0 - lr * wd))


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        tensors = {
            "a": RNG.standard_normal((3, 4)),
            "b/scalar": np.array(2.5),
            "c": RNG.standard_normal((2, 1, 5)),
        }
        path = tmp_path / "ckpt.bin"
        save_tensors(path, tensors)
        loaded = load_tensors(path)
        assert list(loaded) == list(tensors)
        for k in tensors:
            assert np.array_equal(loaded[k], tensors[k])

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(FormatError):
            load_tensors(path)

    def test_truncation(self, tmp_path):
        path = tmp_path / "ckpt.bin"
        save_tensors(path, {"a": RNG.standard_normal((4, 4))})
        blob = path.read_bytes()
        path.write_bytes(blob[:-9])
        with pytest.raises(FormatError):
            load_tensors(path)
