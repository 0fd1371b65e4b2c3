"""Reference forward pass of strip-wise feature normalisation and the two-layer FC head.

A feature map ``x`` of shape ``(N, C, H, W)`` is cut into horizontal strips
along ``H``. Each (batch element, strip) slice is standardised with the mean
and population standard deviation over all of its ``C * h_i * W`` entries,
then scaled and shifted by that strip's affine parameters. Strips are
concatenated back in their original vertical order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError, StructuralError

DEFAULT_EPS = 1e-5
DEFAULT_STRIPS = 4


def equal_partition(height: int, n_strips: int = DEFAULT_STRIPS) -> tuple[int, ...]:
    """Split ``height`` into ``n_strips`` heights; the remainder goes to the topmost strips."""
    if n_strips < 1 or height < n_strips:
        raise StructuralError(f"cannot split height {height} into {n_strips} non-empty strips")
    base, rem = divmod(height, n_strips)
    return tuple(base + (1 if i < rem else 0) for i in range(n_strips))


def check_partition(strips: Sequence[int], height: int) -> tuple[int, ...]:
    strips = tuple(int(h) for h in strips)
    if not strips or any(h < 1 for h in strips):
        raise StructuralError(f"strip heights must all be >= 1, got {strips}")
    if sum(strips) != height:
        raise StructuralError(f"strip heights {strips} sum to {sum(strips)}, expected H={height}")
    return strips


def _bounds(strips: Sequence[int]) -> list[tuple[int, int]]:
    edges = np.concatenate([[0], np.cumsum(strips)])
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]


def _check_map(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 4 or min(x.shape) < 1:
        raise StructuralError(f"feature map must be (N, C, H, W) with all dims >= 1, got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise DomainError("feature map contains non-finite values")
    return x


@dataclass(frozen=True)
class GonParams:
    """Per-strip affine parameters.

    ``gamma``/``beta`` are either shape ``(m,)`` (one scalar pair per strip)
    or ``(m, C)`` (per-channel vectors). ``None`` means 1 and 0.
    """

    gamma: np.ndarray | None = None
    beta: np.ndarray | None = None
    eps: float = DEFAULT_EPS

    def __post_init__(self):
        if not (np.isfinite(self.eps) and self.eps >= 0):
            raise DomainError(f"eps must be finite and >= 0, got {self.eps}")
        for name in ("gamma", "beta"):
            v = getattr(self, name)
            if v is not None:
                v = np.asarray(v, dtype=float)
                if not np.all(np.isfinite(v)):
                    raise DomainError(f"{name} must be finite")
                object.__setattr__(self, name, v)

    def affine(self, n_strips: int, channels: int) -> tuple[np.ndarray, np.ndarray]:
        """``(m, C)`` gamma and beta broadcast from whichever mode was given."""
        out = []
        for v, default in ((self.gamma, 1.0), (self.beta, 0.0)):
            if v is None:
                out.append(np.full((n_strips, channels), default))
            elif v.shape == (n_strips,):
                out.append(np.repeat(v[:, None], channels, axis=1))
            elif v.shape == (n_strips, channels):
                out.append(v)
            else:
                raise StructuralError(
                    f"affine parameter shape {v.shape} fits neither ({n_strips},) nor ({n_strips}, {channels})"
                )
        return out[0], out[1]


@dataclass(frozen=True)
class GonStats:
    mean: np.ndarray
    std: np.ndarray


def gon_stats(x, strips: Sequence[int], batch_index: int | None = None) -> GonStats:
    """Per-strip mean and population std.

    Returns arrays of shape ``(N, m)``, or ``(m,)`` when ``batch_index`` is given.
    """
    x = _check_map(x)
    strips = check_partition(strips, x.shape[2])
    if batch_index is not None:
        x = x[batch_index : batch_index + 1]
    n = x.shape[0]
    mean = np.empty((n, len(strips)))
    std = np.empty((n, len(strips)))
    for i, (a, b) in enumerate(_bounds(strips)):
        s = x[:, :, a:b, :].reshape(n, -1)
        mu = s.mean(axis=1)
        mean[:, i] = mu
        std[:, i] = np.sqrt(np.mean((s - mu[:, None]) ** 2, axis=1))
    if batch_index is not None:
        return GonStats(mean[0], std[0])
    return GonStats(mean, std)


def gon_forward(x, strips: Sequence[int], params: GonParams | None = None) -> np.ndarray:
    """Normalise every (batch, strip) slice and apply the strip's affine map.

    Raises:
        DomainError: a slice is constant and ``eps`` is zero.
    """
    params = params or GonParams()
    x = _check_map(x)
    strips = check_partition(strips, x.shape[2])
    stats = gon_stats(x, strips)
    denom = stats.std + params.eps
    if np.any(denom <= 0):
        n, i = np.argwhere(denom <= 0)[0]
        raise DomainError(f"strip {i} of batch element {n} is constant and eps is 0; cannot normalise")
    gamma, beta = params.affine(len(strips), x.shape[1])
    out = np.empty_like(x)
    for i, (a, b) in enumerate(_bounds(strips)):
        z = (x[:, :, a:b, :] - stats.mean[:, i, None, None, None]) / denom[:, i, None, None, None]
        out[:, :, a:b, :] = gamma[i][None, :, None, None] * z + beta[i][None, :, None, None]
    return out


@dataclass(frozen=True)
class FcWeights:
    """Two per-strip linear layers.

    Shapes: ``w1 (P, D_in, D_hid)``, ``b1 (P, D_hid)``, ``w2 (P, D_hid, D_out)``,
    ``b2 (P, D_out)``; ``P`` is the number of strips.
    """

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        for name in ("w1", "b1", "w2", "b2"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        p, din, dh = self.w1.shape
        if self.b1.shape != (p, dh):
            raise StructuralError(f"b1 shape {self.b1.shape} does not match ({p}, {dh})")
        if self.w2.shape[:2] != (p, dh):
            raise StructuralError(f"w2 shape {self.w2.shape} does not chain after w1 {self.w1.shape}")
        if self.b2.shape != (p, self.w2.shape[2]):
            raise StructuralError(f"b2 shape {self.b2.shape} does not match ({p}, {self.w2.shape[2]})")

    @property
    def n_strips(self) -> int:
        return self.w1.shape[0]


def _gon_vectors(h: np.ndarray, params: GonParams) -> np.ndarray:
    # (N, P, D) viewed as P one-row strips of shape (C=D, h=1, W=1) per batch element
    n, p, d = h.shape
    x = h.transpose(0, 2, 1).reshape(n, d, p, 1)
    y = gon_forward(x, (1,) * p, params)
    return y.reshape(n, d, p).transpose(0, 2, 1)


def gon_fc_forward(features, weights: FcWeights,
                   params: GonParams | tuple[GonParams, GonParams] | None = None) -> np.ndarray:
    """linear -> GON -> linear -> GON, independently per strip.

    ``features`` is ``(P, D_in)`` or ``(N, P, D_in)``. ``params`` may be one
    :class:`GonParams` shared by both stages or a pair, one per stage.
    """
    if params is None:
        params = GonParams()
    p1, p2 = params if isinstance(params, tuple) else (params, params)
    x = np.asarray(features, dtype=float)
    squeeze = x.ndim == 2
    if squeeze:
        x = x[None]
    if x.ndim != 3 or x.shape[1:] != weights.w1.shape[:2]:
        raise StructuralError(f"features shape {x.shape} does not match weights (P, D_in)={weights.w1.shape[:2]}")
    h = np.einsum("npi,pio->npo", x, weights.w1) + weights.b1
    h = _gon_vectors(h, p1)
    h = np.einsum("npi,pio->npo", h, weights.w2) + weights.b2
    h = _gon_vectors(h, p2)
    return h[0] if squeeze else h


def reference_gon_forward(x, strips: Sequence[int], params: GonParams | None = None) -> np.ndarray:
    """Plain-loop evaluation of the same formula, used as a cross-check."""
    params = params or GonParams()
    x = _check_map(x)
    strips = check_partition(strips, x.shape[2])
    n, c, _, w = x.shape
    gamma, beta = params.affine(len(strips), c)
    out = np.empty_like(x)
    for b in range(n):
        for i, (lo, hi) in enumerate(_bounds(strips)):
            count = c * (hi - lo) * w
            total = 0.0
            for ch in range(c):
                for h in range(lo, hi):
                    for col in range(w):
                        total += x[b, ch, h, col]
            mu = total / count
            sq = 0.0
            for ch in range(c):
                for h in range(lo, hi):
                    for col in range(w):
                        sq += (x[b, ch, h, col] - mu) ** 2
            denom = math.sqrt(sq / count) + params.eps
            if denom <= 0:
                raise DomainError(f"strip {i} of batch element {b} is constant and eps is 0; cannot normalise")
            for ch in range(c):
                for h in range(lo, hi):
                    for col in range(w):
                        out[b, ch, h, col] = gamma[i, ch] * (x[b, ch, h, col] - mu) / denom + beta[i, ch]
    return out


def check_invariants(x, strips: Sequence[int], eps: float = DEFAULT_EPS, seed: int = 0) -> list[tuple[str, bool, str]]:
    """Run the normalisation invariants on ``x``; returns ``(name, passed, detail)`` rows.

    Constant (batch, strip) slices cannot be standardised exactly and are
    skipped by the exact-math checks; the count is reported.
    """
    x = _check_map(x)
    strips = check_partition(strips, x.shape[2])
    bounds = _bounds(strips)
    stats = gon_stats(x, strips)
    live = [(b, i) for b in range(x.shape[0]) for i in range(len(strips)) if stats.std[b, i] > 0]
    skipped = x.shape[0] * len(strips) - len(live)
    results = []

    y = gon_forward(x, strips, GonParams(eps=eps)) if eps > 0 or not skipped else None
    results.append(("shape", y is None or y.shape == x.shape, f"shape {x.shape}"))

    exact = GonParams(eps=0.0)
    worst_mean = worst_std = 0.0
    for b, i in live:
        lo, hi = bounds[i]
        z = gon_forward(x[b : b + 1, :, lo:hi, :], (hi - lo,), exact)
        worst_mean = max(worst_mean, abs(float(z.mean())))
        worst_std = max(worst_std, abs(float(z.std()) - 1.0))
    results.append(("normalization", worst_mean <= 1e-6 and worst_std <= 1e-5,
                    f"max|mean|={worst_mean:.3e} max|std-1|={worst_std:.3e} skipped={skipped}"))

    rng = np.random.default_rng(seed)
    worst = 0.0
    for b, i in live:
        lo, hi = bounds[i]
        s = x[b : b + 1, :, lo:hi, :]
        a, off = rng.uniform(0.5, 2.0), rng.uniform(-3.0, 3.0)
        d = gon_forward(a * s + off, (hi - lo,), exact) - gon_forward(s, (hi - lo,), exact)
        worst = max(worst, float(np.abs(d).max()))
    results.append(("affine_invariance", worst <= 1e-6, f"max abs diff={worst:.3e} skipped={skipped}"))

    params = GonParams(eps=eps)
    worst = 0.0
    for b, i in live if eps == 0 else [(b, i) for b in range(x.shape[0]) for i in range(len(strips))]:
        lo, hi = bounds[i]
        s = x[b : b + 1, :, lo:hi, :]
        fast = gon_forward(s, (hi - lo,), params)
        ref = reference_gon_forward(s, (hi - lo,), params)
        worst = max(worst, float(np.max(np.abs(fast - ref) / np.maximum(1.0, np.abs(ref)))))
    results.append(("reference_equality", worst <= 1e-9, f"max rel diff={worst:.3e}"))

    whole_ok, detail = True, "skipped (constant map)"
    sd = x.std(axis=(1, 2, 3), keepdims=True)
    if eps > 0 or np.all(sd > 0):
        direct = (x - x.mean(axis=(1, 2, 3), keepdims=True)) / (sd + eps)
        diff = float(np.max(np.abs(gon_forward(x, (x.shape[2],), params) - direct)))
        whole_ok, detail = diff <= 1e-9, f"max abs diff={diff:.3e}"
    results.append(("single_strip", whole_ok, detail))
    return results
