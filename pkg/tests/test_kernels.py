import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st

from projsynth.errors import InvalidArgumentError, PreconditionError
from projsynth.nn import (OptimizerState, ParameterStore, conv2d, cross_attention, downsample, gaussian, grad_check,
                          group_norm, layer_norm, linear, optimizer_step, silu, softmax, upsample_nearest)
from projsynth.rng import RngState, as_rng, gaussian_sample


def t64(rng, *shape):
    return torch.from_numpy(rng.standard_normal(shape))


def conv_oracle(x, k, stride, pad):
    x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    n, c, h, w = x.shape
    o, _, kh, kw = k.shape
    oh, ow = (h - kh) // stride + 1, (w - kw) // stride + 1
    out = np.zeros((n, o, oh, ow))
    for b in range(n):
        for q in range(o):
            for i in range(oh):
                for j in range(ow):
                    out[b, q, i, j] = np.sum(x[b, :, i * stride:i * stride + kh, j * stride:j * stride + kw] * k[q])
    return out


class TestConv:
    def test_identity_kernel(self, rng):
        x = t64(rng, 2, 3, 5, 5)
        k = torch.zeros(3, 3, 1, 1, dtype=torch.float64)
        k[range(3), range(3)] = 1.0
        assert torch.equal(conv2d(x, k), x)

    def test_ones_window(self):
        assert conv2d(torch.ones(1, 1, 3, 3), torch.ones(1, 1, 3, 3)).item() == 9.0

    @pytest.mark.parametrize("stride,pad", [(1, 0), (1, 1), (2, 1)])
    def test_matches_loop_oracle(self, rng, stride, pad):
        x, k = rng.standard_normal((2, 3, 7, 6)), rng.standard_normal((4, 3, 3, 3))
        out = conv2d(torch.from_numpy(x), torch.from_numpy(k), stride=stride, padding=pad).numpy()
        assert np.allclose(out, conv_oracle(x, k, stride, pad), atol=1e-12)

    def test_shape_errors(self):
        with pytest.raises(InvalidArgumentError):
            conv2d(torch.ones(1, 2, 4, 4), torch.ones(1, 3, 3, 3))
        with pytest.raises(InvalidArgumentError):
            conv2d(torch.ones(1, 1, 2, 2), torch.ones(1, 1, 3, 3))

    def test_gradient(self, rng):
        assert grad_check(lambda p: (conv2d(p[0], p[1], p[2], padding=1) ** 2).sum(),
                          [t64(rng, 2, 2, 5, 5), t64(rng, 3, 2, 3, 3), t64(rng, 3)]) < 1e-4


class TestAttention:
    def test_single_key(self, rng):
        q, k, v = t64(rng, 2, 4, 8), t64(rng, 2, 1, 8), t64(rng, 2, 1, 8)
        assert torch.allclose(cross_attention(q, k, v), v.expand(2, 4, 8), atol=1e-15)

    def test_zero_query_mean(self, rng):
        k, v = t64(rng, 1, 5, 4), t64(rng, 1, 5, 4)
        out = cross_attention(torch.zeros(1, 3, 4, dtype=torch.float64), k, v)
        assert torch.allclose(out, v.mean(1, keepdim=True).expand(1, 3, 4), atol=1e-14)

    def test_shape_error(self, rng):
        with pytest.raises(InvalidArgumentError):
            cross_attention(t64(rng, 1, 2, 4), t64(rng, 1, 3, 5), t64(rng, 1, 3, 5))

    def test_gradient(self, rng):
        assert grad_check(lambda p: cross_attention(*p).pow(2).sum(),
                          [t64(rng, 2, 3, 4), t64(rng, 2, 5, 4), t64(rng, 2, 5, 4)]) < 1e-4


class TestElementwiseKernels:
    @pytest.mark.parametrize("fn", [
        lambda p: group_norm(p[0], 2, p[1], p[2]).pow(2).mul(torch.arange(48.0, dtype=torch.float64).view(1, 4, 3, 4)).sum(),
        lambda p: layer_norm(p[0].view(4, 12), p[1].repeat(3), p[2].repeat(3)).sin().sum(),
        lambda p: silu(p[0]).pow(2).sum(),
        lambda p: softmax(p[0].view(4, 12)).pow(2).sum(),
        lambda p: upsample_nearest(p[0]).sin().sum(),
        lambda p: downsample(p[0].view(1, 4, 4, 3)[..., :2]).pow(3).sum(),
    ])
    def test_gradients(self, rng, fn):
        params = [t64(rng, 1, 4, 3, 4), t64(rng, 4), t64(rng, 4)]
        assert grad_check(fn, params) < 1e-4

    def test_linear(self, rng):
        x, w, b = t64(rng, 3, 4), t64(rng, 2, 4), t64(rng, 2)
        assert torch.allclose(linear(x, w, b), x @ w.T + b)
        assert grad_check(lambda p: linear(*p).pow(2).sum(), [x, w, b]) < 1e-4
        with pytest.raises(InvalidArgumentError):
            linear(x, t64(rng, 2, 5))

    def test_upsample_downsample(self):
        x = torch.arange(4.0).view(1, 1, 2, 2)
        up = upsample_nearest(x)
        assert up.shape == (1, 1, 4, 4) and torch.equal(downsample(up), x)
        with pytest.raises(InvalidArgumentError):
            downsample(torch.ones(1, 1, 3, 4))

    def test_softmax_rows(self, rng):
        s = softmax(t64(rng, 5, 7))
        assert torch.allclose(s.sum(-1), torch.ones(5, dtype=torch.float64))


class TestGradCheck:
    def test_quadratic(self, rng):
        x = t64(rng, 10)
        assert grad_check(lambda p: 0.5 * (p[0] ** 2).sum(), [x]) < 1e-8

    def test_constant(self, rng):
        x = t64(rng, 4).requires_grad_(True)
        f = lambda p: (p[0] * 0).sum() + 3.0  # noqa: E731
        assert grad_check(f, [x]) == 0.0
        (g,) = torch.autograd.grad(f([x]), [x])
        assert not g.any()

    def test_composite(self, rng):
        def f(p):
            h = conv2d(p[0], p[1], padding=1)
            return silu(group_norm(h, 2)).sum()
        assert grad_check(f, [t64(rng, 2, 3, 6, 6), t64(rng, 4, 3, 3, 3)]) < 1e-4

    def test_detects_wrong_gradient(self, rng):
        class Wrong(torch.autograd.Function):
            @staticmethod
            def forward(ctx, x):
                return x**2

            @staticmethod
            def backward(ctx, g):
                return g

        assert grad_check(lambda p: Wrong.apply(p[0]).sum(), [t64(rng, 5) + 3]) > 0.1


class TestOptimizer:
    def _store(self, value):
        return ParameterStore({"w": torch.tensor([value], dtype=torch.float64)})

    def test_hand_step(self):
        ps = self._store(1.0)
        ps["w"].grad = torch.tensor([1.0], dtype=torch.float64)
        optimizer_step(ps, OptimizerState("adam", lr=0.1, eps=0.0))
        assert ps["w"].item() == pytest.approx(0.9, abs=1e-15)
        assert ps["w"].grad is None

    def test_zero_lr(self):
        ps = self._store(2.5)
        ps["w"].grad = torch.tensor([3.0], dtype=torch.float64)
        optimizer_step(ps, OptimizerState("adamw", lr=0.0, weight_decay=0.1))
        assert ps["w"].item() == 2.5

    def test_adamw_decay_only(self):
        ps = self._store(2.0)
        ps["w"].grad = torch.zeros(1, dtype=torch.float64)
        optimizer_step(ps, OptimizerState("adamw", lr=0.1, weight_decay=0.5))
        assert ps["w"].item() == pytest.approx(2.0 * (1 - 0.05), abs=1e-15)

    def test_requires_gradient(self):
        with pytest.raises(PreconditionError):
            optimizer_step(self._store(1.0), OptimizerState())

    def test_moments_shape_and_step(self, rng):
        ps = ParameterStore({"a": t64(rng, 3, 2), "b": t64(rng, 4)})
        (ps["a"].sum() + ps["b"].pow(2).sum()).backward()
        st_ = OptimizerState()
        optimizer_step(ps, st_)
        assert st_.step == 1 and st_.first_moment["a"].shape == (3, 2)

    def test_minimises_quadratic(self):
        ps = self._store(5.0)
        st_ = OptimizerState("adam", lr=0.1)
        for _ in range(300):
            (ps["w"] ** 2).sum().backward()
            optimizer_step(ps, st_)
        assert abs(ps["w"].item()) < 0.05

    def test_unknown_kind(self):
        with pytest.raises(InvalidArgumentError):
            OptimizerState("sgd")


class TestParameterStore:
    def test_duplicates_rejected(self):
        ps = ParameterStore({"a": torch.zeros(1)})
        with pytest.raises(InvalidArgumentError):
            ps.add("a", torch.zeros(1))

    def test_numpy_round_trip(self, rng):
        ps = ParameterStore({"a": t64(rng, 2, 2)})
        saved = ps.to_numpy()
        with torch.no_grad():
            ps["a"].zero_()
        ps.load_numpy(saved)
        assert np.array_equal(ps["a"].detach().numpy(), saved["a"])
        with pytest.raises(InvalidArgumentError):
            ps.load_numpy({"a": np.zeros(3)})


class TestRng:
    @given(st.integers(0, 2**63), st.integers(0, 1000), st.integers(0, 1000))
    def test_identical_state_identical_draws(self, seed, stream, counter):
        a, b = RngState(seed, stream, counter), RngState(seed, stream, counter)
        assert np.array_equal(gaussian_sample(a, (7,)), gaussian_sample(b, (7,)))

    def test_counter_and_streams_independent(self):
        r = RngState(3)
        first, second = gaussian_sample(r, (5,)), gaussian_sample(r, (5,))
        assert r.counter == 2 and not np.array_equal(first, second)
        assert not np.array_equal(gaussian_sample(RngState(3, 1), (5,)), gaussian_sample(RngState(3, 0), (5,)))
        assert not np.array_equal(gaussian_sample(r.child(0), (5,)), gaussian_sample(r.child(1), (5,)))

    def test_known_values_frozen(self):
        # guards the cross-platform stream definition against accidental change
        vals = gaussian_sample(RngState(42, 7, 0), (3,))
        assert np.allclose(vals, FROZEN_42_7, atol=0, rtol=0)

    def test_gaussian_moments_and_torch(self):
        x = gaussian(RngState(1), (200000,), torch.float64)
        assert abs(x.mean().item()) < 0.01 and abs(x.var().item() - 1) < 0.01
        assert as_rng(5).seed == 5 and isinstance(as_rng(None), RngState)


FROZEN_42_7 = [0.4323740460799712, -0.4786100480284786, 0.7970314700557255]
