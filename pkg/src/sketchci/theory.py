"""Distribution-of-uniques analytics for finite discrete distributions.

Sampling M items i.i.d. from a discrete distribution and then picking one
of the *distinct* observed values uniformly induces a new law over the
atoms (the "unique-pick" law). This module computes that law exactly by
combinatorial enumeration, checks it against an inclusion-exclusion form
and a brute-force oracle, and evaluates the closed forms that govern how
the law moves with the sample size M:

* `two_symbol_unique_pmf` — the two-atom unique-pick probability,
  (1 + p^M - (1-p)^M) / 2, with `unique_cubic` its M = 3 polynomial;
* `unique_law_gap` — worst-case total-variation gap between the unique-pick
  laws at two sample sizes (two-atom case), found by solving a monotone
  balance equation (`gap_curve`) by bisection;
* `unique_law_gap_limit` — its large-M limit when the sizes differ by a
  constant factor, and `worst_case_unique_coverage`, the induced coverage
  floor for group-calibrated intervals run with mismatched group size;
* `stability_threshold` — the frequency band (c, 1-c) inside which the
  unique-pick law contracts total-variation distances (`shift_contraction`).

Everything here is pure and deterministic; the only randomized helper is
the Monte-Carlo fallback `unique_element_pmf_mc` for atom counts too large
to enumerate.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError, ConfigurationError

_ENUM_GATE = 2_000_000      # composition-sum work limit for exact element pmf
_BRUTE_GATE = 10_000_000    # K**M limit for full sequence enumeration


@dataclass(frozen=True)
class DiscreteDist:
    """Finite distribution over atoms indexed 0..K-1."""
    probs: tuple[float, ...]
    labels: tuple | None = None

    def __post_init__(self):
        if not self.probs:
            raise ConfigurationError("distribution needs at least one atom")
        if any(p <= 0 for p in self.probs):
            raise ConfigurationError("all atom probabilities must be positive")
        if abs(math.fsum(self.probs) - 1.0) > 1e-12:
            raise ConfigurationError(
                f"probabilities sum to {math.fsum(self.probs)!r}, not 1")
        if self.labels is not None and len(self.labels) != len(self.probs):
            raise ConfigurationError("labels and probabilities disagree in length")

    @property
    def k(self) -> int:
        return len(self.probs)


@dataclass(frozen=True)
class UniquesPmf:
    """Law of the set of distinct values in an M-sample, keyed by atom-index
    frozensets."""
    probs: dict = field(hash=False)
    m: int = 0

    def total(self) -> float:
        return math.fsum(self.probs.values())

    def element_pmf(self, atom: int) -> float:
        """Unique-pick probability of `atom` under uniform selection from
        the set."""
        return math.fsum(p / len(s) for s, p in self.probs.items() if atom in s)


def _compositions(total: int, parts: int):
    # Ordered tuples of positive integers summing to `total`.
    for cuts in itertools.combinations(range(1, total), parts - 1):
        edges = (0,) + cuts + (total,)
        yield tuple(edges[i + 1] - edges[i] for i in range(parts))


def _multinomial(counts) -> int:
    coef = math.factorial(sum(counts))
    for c in counts:
        coef //= math.factorial(c)
    return coef


def unique_set_pmf(dist: DiscreteDist, atoms, m: int) -> float:
    """Probability that the distinct values of an M-sample are exactly
    `atoms`, summed over ordered count splits (multinomial form)."""
    atoms = tuple(atoms)
    k = len(atoms)
    if len(set(atoms)) != k or not all(0 <= j < dist.k for j in atoms):
        raise ConfigurationError("atoms must be distinct indices of the distribution")
    if k == 0 or m < 1:
        raise ConfigurationError("need at least one atom and one draw")
    if k > m:
        return 0.0
    ps = [dist.probs[j] for j in atoms]
    total = 0.0
    for counts in _compositions(m, k):
        term = _multinomial(counts)
        for p, c in zip(ps, counts):
            term *= p ** c
        total += term
    return total


def unique_set_pmf_incl_excl(dist: DiscreteDist, atoms, m: int) -> float:
    """Same probability via inclusion-exclusion over sub-sums of the atom
    probabilities; agrees with `unique_set_pmf` to rounding error."""
    atoms = tuple(atoms)
    k = len(atoms)
    if len(set(atoms)) != k or not all(0 <= j < dist.k for j in atoms):
        raise ConfigurationError("atoms must be distinct indices of the distribution")
    if k == 0 or m < 1:
        raise ConfigurationError("need at least one atom and one draw")
    if k > m:
        return 0.0
    total = 0.0
    for size in range(1, k + 1):
        for sub in itertools.combinations(atoms, size):
            total += (-1) ** (k + size) * sum(dist.probs[j] for j in sub) ** m
    return total


def unique_element_pmf(dist: DiscreteDist, atom: int, m: int) -> float:
    """Unique-pick probability of `atom`: sum over all distinct-value sets
    containing it of (set probability) / (set size).

    Exact but exponential in the atom count; guarded by a work gate that
    points large instances at `unique_element_pmf_mc`.
    """
    if not 0 <= atom < dist.k:
        raise ConfigurationError(f"atom {atom} out of range")
    if m < 1:
        raise ConfigurationError("sample size must be >= 1")
    kmax = min(m, dist.k)
    work = sum(math.comb(dist.k - 1, s - 1) * math.comb(m - 1, s - 1)
               for s in range(1, kmax + 1))
    if work > _ENUM_GATE:
        raise CapacityError(
            f"exact enumeration needs ~{work} composition terms; "
            "use unique_element_pmf_mc instead")
    others = [j for j in range(dist.k) if j != atom]
    total = 0.0
    for size in range(1, kmax + 1):
        for rest in itertools.combinations(others, size - 1):
            total += unique_set_pmf(dist, (atom,) + rest, m) / size
    return total


def unique_element_pmf_mc(dist: DiscreteDist, atom: int, m: int, draws: int,
                          rng: np.random.Generator) -> float:
    """Monte-Carlo estimate of `unique_element_pmf` from `draws` simulated
    M-samples."""
    samples = rng.choice(dist.k, size=(draws, m), p=np.asarray(dist.probs))
    present = np.stack([(samples == j).any(axis=1) for j in range(dist.k)])
    sizes = present.sum(axis=0)
    return float(np.mean(present[atom] / sizes))


def brute_force_uniques(dist: DiscreteDist, m: int) -> UniquesPmf:
    """Oracle: enumerate every one of the K**M ordered samples."""
    if m < 1:
        raise ConfigurationError("sample size must be >= 1")
    if dist.k ** m > _BRUTE_GATE:
        raise CapacityError(f"{dist.k}**{m} sequences exceed the enumeration gate")
    acc: dict = {}
    for seq in itertools.product(range(dist.k), repeat=m):
        prob = 1.0
        for j in seq:
            prob *= dist.probs[j]
        key = frozenset(seq)
        acc[key] = acc.get(key, 0.0) + prob
    return UniquesPmf(acc, m)


# -- two-symbol closed forms ---------------------------------------------------

def two_symbol_unique_pmf(p: float, m: int) -> float:
    """Unique-pick probability of a two-atom distribution's first atom:
    (1 + p^m - (1-p)^m) / 2."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must be in [0, 1], got {p}")
    if m < 1:
        raise ConfigurationError("sample size must be >= 1")
    return (1.0 + p ** m - (1.0 - p) ** m) / 2.0


def unique_cubic(p: float) -> float:
    """The two-symbol unique-pick law at sample size 3: p(2p^2 - 3p + 3)/2."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must be in [0, 1], got {p}")
    return p * (2.0 * p * p - 3.0 * p + 3.0) / 2.0


# -- worst-case gap between unique-pick laws at two sample sizes ---------------

def gap_curve(delta: float, m: int, m_prime: int) -> float:
    """Balance function whose root locates the worst-case two-atom odds
    ratio: log((1 + d^(m-1)) / (1 + d^(m'-1))) - (m - m') * log(1 + d).

    Zero at d = 0 and strictly decreasing on [0, 1) for m > m' >= 2.
    """
    if delta < 0:
        raise ValueError(f"delta must be >= 0, got {delta}")
    if not m > m_prime >= 2:
        raise ConfigurationError(f"need m > m_prime >= 2, got {m}, {m_prime}")
    return (math.log1p(delta ** (m - 1)) - math.log1p(delta ** (m_prime - 1))
            - (m - m_prime) * math.log1p(delta))


def _folded_diff(delta: float, m: int) -> float:
    # (1 - delta^m) / (1 + delta)^m, underflow-safe for large m.
    return (1.0 - delta ** m) * math.exp(-m * math.log1p(delta))


def unique_law_gap(m: int, m_prime: int) -> float:
    """Worst-case displacement between the unique-pick laws at sizes m and
    m_prime, over all two-atom distributions, measured in L1: the sum over
    both atoms of the absolute probability difference (twice the
    total-variation distance). This is the quantity whose large-m asymptote
    is `unique_law_gap_limit`.

    Symmetric in its arguments; sizes 1 and 2 give identical unique-pick
    laws, so m_prime < 2 is evaluated as 2.
    """
    if m < 1 or m_prime < 1:
        raise ConfigurationError("sample sizes must be >= 1")
    m, m_prime = max(m, m_prime), max(min(m, m_prime), 2)
    if m <= m_prime:
        return 0.0
    target = math.log(m_prime / m)
    lo, hi = 0.0, 1.0
    while hi - lo > 1e-12:
        mid = (lo + hi) / 2.0
        if gap_curve(mid, m, m_prime) > target:
            lo = mid
        else:
            hi = mid
    delta = (lo + hi) / 2.0
    return abs(_folded_diff(delta, m) - _folded_diff(delta, m_prime))


def unique_law_gap_limit(ratio: float) -> float:
    """Large-m limit of `unique_law_gap(m, m / ratio)`:
    ratio^(-1/(ratio-1)) * (1 - 1/ratio)."""
    if ratio <= 1.0:
        raise ValueError(f"ratio must exceed 1, got {ratio}")
    return ratio ** (-1.0 / (ratio - 1.0)) * (1.0 - 1.0 / ratio)


def worst_case_unique_coverage(alpha: float, ratio: float, m: int) -> float:
    """Coverage floor for group calibration run with groups m/ratio against
    query batches of size m: 1 - alpha - 2 * gap limit - 1/m, clamped at 0.

    The 1/m term reflects the first-order finite-m correction to the limit.
    """
    if m < 1:
        raise ConfigurationError("sample size must be >= 1")
    return max(0.0, 1.0 - alpha - 2.0 * unique_law_gap_limit(ratio) - 1.0 / m)


# -- total-variation contraction band ------------------------------------------

def stability_threshold(m: int) -> float:
    """The unique c in (0, 1/2) with c^(m-1) + (1-c)^(m-1) = 2/m.

    Inside (c, 1-c) the two-symbol unique-pick map has derivative below one,
    so it contracts differences; requires m >= 3 (no such band otherwise).
    """
    if m < 3:
        raise ValueError(f"stability threshold needs m >= 3, got {m}")
    lo, hi = 0.0, 0.5  # the balance is strictly decreasing in between
    while hi - lo > 1e-12:
        mid = (lo + hi) / 2.0
        if mid ** (m - 1) + (1.0 - mid) ** (m - 1) > 2.0 / m:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2.0


def shift_contraction(p: float, p_prime: float, m: int) -> tuple[float, float]:
    """(TV between unique-pick laws, TV between base laws) for two two-atom
    distributions with first-atom probabilities `p`, `p_prime`.

    Both probabilities must lie strictly inside the stability band
    (c, 1-c); then the first component is strictly smaller whenever the
    distributions differ.
    """
    c = stability_threshold(m)
    for name, value in (("p", p), ("p_prime", p_prime)):
        if not c < value < 1.0 - c:
            raise ConfigurationError(
                f"{name}={value} outside the stability band ({c:.6f}, {1 - c:.6f}) "
                f"for m={m}")
    tv_unique = abs(two_symbol_unique_pmf(p, m) - two_symbol_unique_pmf(p_prime, m))
    tv_base = abs(p - p_prime)
    return tv_unique, tv_base
