import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gaitmatch.errors import DomainError, StructuralError
from gaitmatch.gon import (
    FcWeights,
    GonParams,
    check_invariants,
    equal_partition,
    gon_fc_forward,
    gon_forward,
    gon_stats,
    reference_gon_forward,
)


def oracle_gon(x, strips, gamma, beta, eps):
    """Independent nested-loop evaluation; ``gamma``/``beta`` are per-strip scalars."""
    n, c, _, w = x.shape
    out = np.zeros_like(x)
    start = 0
    for i, h in enumerate(strips):
        rows = range(start, start + h)
        for b in range(n):
            vals = [x[b, ch, r, col] for ch in range(c) for r in rows for col in range(w)]
            mu = math.fsum(vals) / len(vals)
            sigma = math.sqrt(math.fsum((v - mu) ** 2 for v in vals) / len(vals))
            for ch in range(c):
                for r in rows:
                    for col in range(w):
                        out[b, ch, r, col] = gamma[i] * (x[b, ch, r, col] - mu) / (sigma + eps) + beta[i]
        start += h
    return out


def random_partition(rng, height):
    m = int(rng.integers(1, height + 1))
    cuts = np.sort(rng.choice(np.arange(1, height), size=m - 1, replace=False)) if m > 1 else []
    edges = [0, *cuts, height]
    return tuple(int(b - a) for a, b in zip(edges[:-1], edges[1:]))


class TestPartition:
    def test_equal_split_remainder_on_top(self):
        assert equal_partition(10, 4) == (3, 3, 2, 2)
        assert equal_partition(8) == (2, 2, 2, 2)

    def test_too_many_strips(self):
        with pytest.raises(StructuralError):
            equal_partition(3, 4)

    def test_mismatched_partition(self):
        with pytest.raises(StructuralError):
            gon_forward(np.zeros((1, 1, 4, 1)) + np.arange(4.0)[:, None], (2, 1))


class TestStats:
    def test_constant_strip(self):
        s = gon_stats(np.full((1, 2, 3, 4), 7.0), (3,))
        assert s.mean[0, 0] == 7.0 and s.std[0, 0] == 0.0

    def test_two_points(self):
        s = gon_stats(np.array([[[[1.0, 3.0]]]]), (1,), batch_index=0)
        assert s.mean[0] == 2.0 and s.std[0] == 1.0

    def test_against_two_pass_loop(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(3, 4, 9, 5)) * 4 + 2
        strips = (2, 4, 3)
        s = gon_stats(x, strips)
        start = 0
        for i, h in enumerate(strips):
            for b in range(3):
                vals = x[b, :, start : start + h, :].ravel().tolist()
                mu = math.fsum(vals) / len(vals)
                sd = math.sqrt(math.fsum((v - mu) ** 2 for v in vals) / len(vals))
                assert s.mean[b, i] == pytest.approx(mu, rel=1e-12)
                assert s.std[b, i] == pytest.approx(sd, rel=1e-9)
            start += h


class TestForward:
    def test_normalization_identity(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(2, 3, 8, 5))
        y = gon_forward(x, (3, 3, 2), GonParams(eps=0.0))
        for a, b in ((0, 3), (3, 6), (6, 8)):
            for n in range(2):
                z = y[n, :, a:b]
                assert abs(z.mean()) <= 1e-6
                assert abs(z.std() - 1.0) <= 1e-5

    def test_single_strip_is_whole_map_normalisation(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(2, 3, 6, 4))
        direct = (x - x.mean(axis=(1, 2, 3), keepdims=True)) / (x.std(axis=(1, 2, 3), keepdims=True) + 1e-5)
        np.testing.assert_allclose(gon_forward(x, (6,)), direct, atol=1e-9, rtol=0)

    def test_inverse_affine_round_trip(self):
        rng = np.random.default_rng(6)
        x = rng.normal(size=(1, 2, 6, 3)) * 3 + 1
        strips = (2, 4)
        s = gon_stats(x, strips, batch_index=0)
        eps = 1e-5
        y = gon_forward(x, strips, GonParams(gamma=s.std + eps, beta=s.mean, eps=eps))
        np.testing.assert_allclose(y, x, rtol=1e-6, atol=0)

    def test_per_channel_affine(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=(2, 3, 4, 2))
        gamma = rng.uniform(0.5, 2, (2, 3))
        beta = rng.normal(size=(2, 3))
        y = gon_forward(x, (2, 2), GonParams(gamma, beta))
        z = gon_forward(x, (2, 2))
        for i, (a, b) in enumerate(((0, 2), (2, 4))):
            expect = gamma[i][None, :, None, None] * z[:, :, a:b] + beta[i][None, :, None, None]
            np.testing.assert_allclose(y[:, :, a:b], expect, atol=1e-12)

    def test_bad_affine_shape(self):
        with pytest.raises(StructuralError):
            gon_forward(np.arange(8.0).reshape(1, 1, 4, 2), (2, 2), GonParams(gamma=np.ones(3)))

    def test_constant_strip_with_zero_eps(self):
        x = np.zeros((1, 1, 4, 2))
        x[0, 0, 2:] = np.arange(4.0).reshape(2, 2)
        with pytest.raises(DomainError):
            gon_forward(x, (2, 2), GonParams(eps=0.0))
        # with the default eps the constant strip maps to beta
        assert np.all(gon_forward(x, (2, 2))[0, 0, :2] == 0.0)

    def test_non_finite_input(self):
        x = np.ones((1, 1, 2, 2))
        x[0, 0, 0, 0] = np.nan
        with pytest.raises(DomainError):
            gon_forward(x, (2,))

    def test_shift_scale_removal(self):
        rng = np.random.default_rng(8)
        x = rng.normal(size=(2, 3, 6, 4))
        strips = (1, 2, 3)
        exact = GonParams(eps=0.0)
        moved = x.copy()
        start = 0
        for h in strips:
            moved[:, :, start : start + h] = rng.uniform(0.2, 5) * x[:, :, start : start + h] + rng.normal() * 10
            start += h
        np.testing.assert_allclose(gon_forward(moved, strips, exact), gon_forward(x, strips, exact), atol=1e-6)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 2), st.integers(1, 8), st.integers(1, 16), st.integers(1, 11), st.integers(0, 2**32 - 1))
def test_matches_loop_oracle(n, c, h, w, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, c, h, w)) * rng.uniform(0.1, 10) + rng.normal() * 5
    strips = random_partition(rng, h)
    gamma = rng.uniform(0.5, 2.0, len(strips))
    beta = rng.normal(size=len(strips))
    y = gon_forward(x, strips, GonParams(gamma, beta))
    assert y.shape == x.shape
    expect = oracle_gon(x, strips, gamma, beta, 1e-5)
    np.testing.assert_allclose(y, expect, rtol=1e-9, atol=1e-9)


def test_builtin_reference_matches_vectorised():
    rng = np.random.default_rng(9)
    x = rng.normal(size=(2, 3, 7, 4))
    p = GonParams(rng.uniform(0.5, 2, (3, 3)), rng.normal(size=(3, 3)))
    np.testing.assert_allclose(reference_gon_forward(x, (3, 2, 2), p), gon_forward(x, (3, 2, 2), p), rtol=1e-9,
                               atol=1e-12)


class TestFc:
    def weights(self, rng, p=3, din=4, dh=5, dout=3):
        return FcWeights(rng.normal(size=(p, din, dh)), rng.normal(size=(p, dh)),
                         rng.normal(size=(p, dh, dout)), rng.normal(size=(p, dout)))

    def test_identity_on_normalized(self):
        v = np.array([-1.0, 0.0, 1.0])
        v = (v - v.mean()) / v.std()
        w = FcWeights(np.eye(3)[None], np.zeros((1, 3)), np.eye(3)[None], np.zeros((1, 3)))
        np.testing.assert_allclose(gon_fc_forward(v[None], w, GonParams(eps=0.0)), v[None], atol=1e-6, rtol=0)
        # with the default eps each pass divides by (std + eps) instead of std
        once = v / (1 + 1e-5)
        twice = once / (once.std() + 1e-5)
        np.testing.assert_allclose(gon_fc_forward(v[None], w)[0], twice, rtol=1e-12)

    def test_stage_by_stage(self):
        f = np.array([0.5, -1.0, 2.0])
        w1 = np.array([[1.0, 2.0, 0.0], [0.0, 1.0, -1.0], [3.0, 0.0, 1.0]])
        b1 = np.array([0.1, 0.2, -0.3])
        w2 = np.array([[0.5, 0.0, 1.0], [-1.0, 1.0, 0.0], [0.0, 2.0, 1.0]])
        b2 = np.array([0.0, -0.5, 0.5])
        p1 = GonParams(gamma=[2.0], beta=[0.5], eps=1e-5)
        p2 = GonParams(gamma=[0.5], beta=[-1.0], eps=1e-5)

        def norm(v, g, b):
            return g * (v - v.mean()) / (v.std() + 1e-5) + b

        expect = norm(norm(f @ w1 + b1, 2.0, 0.5) @ w2 + b2, 0.5, -1.0)
        out = gon_fc_forward(f[None], FcWeights(w1[None], b1[None], w2[None], b2[None]), (p1, p2))
        np.testing.assert_allclose(out[0], expect, rtol=1e-12, atol=1e-12)

    def test_strips_are_independent(self):
        rng = np.random.default_rng(10)
        w = self.weights(rng)
        x = rng.normal(size=(2, 3, 4))
        y = gon_fc_forward(x, w)
        x2 = x.copy()
        x2[:, 1] += rng.normal(size=(2, 4))
        y2 = gon_fc_forward(x2, w)
        np.testing.assert_array_equal(y[:, [0, 2]], y2[:, [0, 2]])
        assert not np.array_equal(y[:, 1], y2[:, 1])

    def test_unbatched_matches_batched(self):
        rng = np.random.default_rng(11)
        w = self.weights(rng)
        x = rng.normal(size=(3, 4))
        np.testing.assert_array_equal(gon_fc_forward(x, w), gon_fc_forward(x[None], w)[0])

    def test_dimension_mismatch(self):
        rng = np.random.default_rng(12)
        with pytest.raises(StructuralError):
            gon_fc_forward(rng.normal(size=(3, 5)), self.weights(rng))
        with pytest.raises(StructuralError):
            FcWeights(np.zeros((2, 3, 4)), np.zeros((2, 4)), np.zeros((2, 5, 2)), np.zeros((2, 2)))


class TestInvariantSuite:
    def test_random_map_passes(self):
        x = np.random.default_rng(13).normal(size=(2, 3, 8, 4))
        rows = check_invariants(x, equal_partition(8))
        assert [r[0] for r in rows] == ["shape", "normalization", "affine_invariance", "reference_equality",
                                        "single_strip"]
        assert all(ok for _, ok, _ in rows)

    def test_constant_strip_is_skipped(self):
        x = np.random.default_rng(14).normal(size=(1, 2, 4, 3))
        x[:, :, :2] = 1.0
        rows = dict((name, (ok, detail)) for name, ok, detail in check_invariants(x, (2, 2)))
        assert all(ok for ok, _ in rows.values())
        assert "skipped=1" in rows["normalization"][1]
