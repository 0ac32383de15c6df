"""Deterministic dense-vector primitives shared by every other module.

Everything in the trainable path is float64. Randomness comes from a single
fixed algorithm (counter-mode SplitMix64) so that identical seeds produce
identical streams on every platform; platform RNGs are never used.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15  # SplitMix64 increment (odd, 2^64/phi)

# Relative-error floor used by gradient checks.
REL_EPS = 1e-8


def _mix64(z: np.ndarray) -> np.ndarray:
    """SplitMix64 output function on a uint64 array (wrapping arithmetic)."""
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def _mix64_int(z: int) -> int:
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, *tags: int) -> int:
    """Derive an independent child seed from (seed, tags) by hash chaining.

    Used to split one user-facing seed into the separate streams a run needs
    (init, shuffling, dropout, data synthesis) without stream overlap.
    """
    s = seed & _MASK64
    for t in tags:
        s = _mix64_int((s + _GAMMA) ^ _mix64_int(t & _MASK64))
    return s


class SeededRng:
    """Counter-mode SplitMix64 random generator.

    The state is a 64-bit counter advanced by a fixed odd increment; each
    output is the SplitMix64 finalizer of the counter. Identical seeds give
    bit-identical streams everywhere, and blocks of draws can be produced
    vectorized without changing the stream.

    Single-owner: never share one instance mutably across threads.
    """

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def _raw(self, n: int) -> np.ndarray:
        """Next n raw uint64 outputs, advancing the counter by n."""
        if n < 0:
            raise ValueError(f"rng: draw count must be >= 0, got {n}")
        if n == 0:
            return np.empty(0, dtype=np.uint64)
        offs = np.arange(1, n + 1, dtype=np.uint64) * np.uint64(_GAMMA)
        out = _mix64(np.uint64(self._state) + offs)
        self._state = (self._state + n * _GAMMA) & _MASK64
        return out

    def uniform(self, n: int, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
        """n float64 values in [lo, hi), from the top 53 bits of each output."""
        if not lo < hi:
            raise ValueError(f"rng: invalid range, lo={lo} must be < hi={hi}")
        u = (self._raw(n) >> np.uint64(11)) * (2.0 ** -53)
        return lo + u * (hi - lo)

    def normal(self, n: int, sigma: float = 1.0) -> np.ndarray:
        """n standard-normal draws scaled by sigma, via Box-Muller.

        Consumes 2*ceil(n/2) uniforms; the draw order is fixed (all cosine
        branches first, then all sine branches, truncated to n).
        """
        m = (n + 1) // 2
        u1 = self.uniform(m)
        u2 = self.uniform(m)
        r = np.sqrt(-2.0 * np.log1p(-u1))  # 1-u1 in (0,1], no log(0)
        ang = 2.0 * np.pi * u2
        z = np.concatenate([r * np.cos(ang), r * np.sin(ang)])[:n]
        return z * sigma

    def permutation(self, n: int) -> np.ndarray:
        """Deterministic random permutation of range(n) (argsort of raw keys)."""
        return np.argsort(self._raw(n), kind="stable")

    def spawn(self, tag: int) -> "SeededRng":
        """Independent child generator; stream is a pure function of (state, tag)."""
        return SeededRng(derive_seed(self._state, tag))


def rng_uniform(rng: SeededRng, n: int, lo: float, hi: float) -> np.ndarray:
    """Module-level alias for SeededRng.uniform."""
    return rng.uniform(n, lo, hi)


def softmax_stable(logits: np.ndarray) -> np.ndarray:
    """Softmax with max-subtraction; safe for |logit| up to ~700.

    Output sums to 1 within 1e-12 and is invariant (to the same tolerance)
    under adding a constant to all logits.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.size == 0:
        raise ValueError("softmax: logits must have length >= 1")
    if not np.all(np.isfinite(logits)):
        raise ValueError("softmax: logits contain non-finite values")
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise log-softmax, max-subtracted for stability."""
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


def finite_diff_grad(
    f: Callable[[np.ndarray], float], params: np.ndarray, eps: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient of a scalar function, one coordinate at a time.

    This is the oracle every analytic backward pass is checked against; it
    never shares code with the analytic path.
    """
    if eps <= 0:
        raise ValueError(f"finite_diff_grad: eps must be > 0, got {eps}")
    params = np.asarray(params, dtype=np.float64)
    grad = np.empty_like(params)
    for i in range(params.size):
        p = params.copy()
        p[i] += eps
        fp = float(f(p))
        p[i] -= 2.0 * eps
        fm = float(f(p))
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise FloatingPointError(
                f"finite_diff_grad: non-finite f at coordinate {i} "
                f"(f+={fp}, f-={fm})"
            )
        grad[i] = (fp - fm) / (2.0 * eps)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Elementwise |a-b| / max(|a|, |b|, 1e-8)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), REL_EPS)
    return np.abs(a - b) / denom
