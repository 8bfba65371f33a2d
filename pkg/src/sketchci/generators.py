"""Synthetic token sources: Zipf, Pitman-Yor predictive, and a query mixture.

All sources take an explicit `numpy.random.Generator` on every draw; the
module owns no global randomness.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import zeta as _hurwitz_zeta

from .errors import ConfigurationError


class ZipfSampler:
    """Power-law integer tokens, ``P(Z = z) = z**-a / zeta(a)`` for z >= 1.

    Draws come from an inverse-CDF lookup over a finite table covering all
    but a sliver of the mass; draws landing past the table are resolved by
    an exact rejection sampler for the discrete power-law tail, so the
    sampled law is the untruncated distribution at every support point (no
    tail mass is discarded, for any a > 1).

    The table stops at the first N whose residual tail probability is below
    `tail_target`, or at `max_table` entries, whichever comes first.
    """

    def __init__(self, a: float, tail_target: float = 1e-12, max_table: int = 2_000_000):
        if a <= 1.0:
            raise ConfigurationError(
                f"tail exponent must exceed 1 (the series diverges), got {a}")
        self.a = float(a)
        self.zeta = float(_hurwitz_zeta(self.a, 1))
        n = self._pick_table_size(tail_target, max_table)
        probs = np.arange(1, n + 1, dtype=np.float64) ** (-self.a) / self.zeta
        self._cdf = np.cumsum(probs)
        self.table_size = n
        self.tail_prob = 1.0 - float(self._cdf[-1])

    def _pick_table_size(self, tail_target: float, max_table: int) -> int:
        n = 64
        while n < max_table and self._tail_mass(n) >= tail_target:
            n *= 2
        return min(n, max_table)

    def _tail_mass(self, n: int) -> float:
        # P(Z > n), via the Hurwitz zeta function.
        return float(_hurwitz_zeta(self.a, n + 1)) / self.zeta

    def pmf(self, z: int) -> float:
        if z < 1:
            return 0.0
        return z ** (-self.a) / self.zeta

    def sample(self, rng: np.random.Generator) -> int:
        u = rng.random()
        if u < self._cdf[-1]:
            return int(np.searchsorted(self._cdf, u, side="right")) + 1
        return self._sample_tail(rng)

    def sample_n(self, rng: np.random.Generator, n: int) -> list[int]:
        us = rng.random(n)
        out = (np.searchsorted(self._cdf, us, side="right") + 1).tolist()
        for i in np.flatnonzero(us >= self._cdf[-1]):
            out[i] = self._sample_tail(rng)
        return out

    def _sample_tail(self, rng: np.random.Generator) -> int:
        # Discrete power law conditioned on z > table_size: propose floor of
        # a continuous Pareto draw, accept against the exact tail pmf. The
        # acceptance ratio is maximal at the left edge, so it never exceeds
        # one, and it approaches one for large z; rejections are rare.
        lo = self.table_size + 1
        shape = self.a - 1.0
        s_lo = math.expm1(shape * math.log1p(1.0 / lo))
        ratio_lo = (1.0 + s_lo) / (lo * s_lo)
        while True:
            y = lo * rng.random() ** (-1.0 / shape)
            if y >= 2**62:  # absurdly deep draw; retry rather than overflow
                continue
            z = int(y)
            s = math.expm1(shape * math.log1p(1.0 / z))
            ratio = (1.0 + s) / (z * s)
            if rng.random() * ratio_lo <= ratio:
                return z


class PitmanYorSampler:
    """Sequential predictive sampler with concentration `lam`, discount `sigma`.

    Given i draws so far with k distinct values, the next draw repeats an
    existing value v (seen c_v times) with probability (c_v - sigma) /
    (lam + i), and is a brand-new value with probability (lam + k * sigma) /
    (lam + i). New values are fresh sequential integer ids; the base
    distribution only needs to produce almost-surely-distinct atoms.

    sigma = 0 is the Dirichlet-process (Chinese restaurant) special case.
    Stateful: create one sampler per stream.
    """

    def __init__(self, lam: float, sigma: float = 0.0, check: bool = False):
        if lam <= 0:
            raise ConfigurationError(f"concentration must be positive, got {lam}")
        if not 0.0 <= sigma < 1.0:
            raise ConfigurationError(f"discount must be in [0, 1), got {sigma}")
        self.lam = float(lam)
        self.sigma = float(sigma)
        self._draws: list[int] = []
        self._counts: dict[int, int] = {}
        self._next_id = 0
        self._check = check

    @property
    def total(self) -> int:
        return len(self._draws)

    @property
    def distinct(self) -> int:
        return len(self._counts)

    def prob_new(self) -> float:
        return (self.lam + self.distinct * self.sigma) / (self.lam + self.total)

    def prob_repeat(self, token: int) -> float:
        c = self._counts.get(token, 0)
        return max(0.0, c - self.sigma) / (self.lam + self.total) if c else 0.0

    def _probability_total(self) -> float:
        mass = sum(c - self.sigma for c in self._counts.values())
        return (mass + self.lam + self.distinct * self.sigma) / (self.lam + self.total)

    def next(self, rng: np.random.Generator) -> int:
        if self._check:
            assert abs(self._probability_total() - 1.0) < 1e-12
        i, k = self.total, self.distinct
        r = rng.random() * (self.lam + i)
        if r >= i - k * self.sigma:
            token = self._next_id
            self._next_id += 1
            self._counts[token] = 1
        else:
            # Propose a uniformly random past draw (weight c_v), thin by
            # (c_v - sigma) / c_v; accepted weights are exactly c_v - sigma.
            while True:
                token = self._draws[int(rng.integers(i))]
                if self.sigma == 0.0:
                    break
                c = self._counts[token]
                if rng.random() * c <= c - self.sigma:
                    break
            self._counts[token] += 1
        self._draws.append(token)
        return token

    def sample(self, rng: np.random.Generator) -> int:
        return self.next(rng)

    def sample_n(self, rng: np.random.Generator, n: int) -> list[int]:
        return [self.next(rng) for _ in range(n)]


class ShiftMixture:
    """Query source: base draw with probability 1 - pi, novel token with pi.

    Novel tokens are uniform 64-bit integers, almost surely absent from any
    realistic base stream; pi = 1 makes every query's true frequency zero.
    """

    def __init__(self, base, pi: float):
        if not 0.0 <= pi <= 1.0:
            raise ConfigurationError(f"mixing proportion must be in [0, 1], got {pi}")
        self.base = base
        self.pi = pi

    def sample(self, rng: np.random.Generator) -> int:
        if self.pi > 0.0 and rng.random() < self.pi:
            return int(rng.integers(1 << 63))
        return self.base.sample(rng)

    def sample_n(self, rng: np.random.Generator, n: int) -> list[int]:
        if self.pi == 0.0:
            return self.base.sample_n(rng, n)
        return [self.sample(rng) for _ in range(n)]
