"""Split-calibrated confidence intervals for sketch frequency queries.

A nested family of candidate lower bounds is indexed by a threshold ``t``:
the fixed family shifts the sketch upper bound down by ``t``; the adaptive
family shifts it down by a fitted error quantile ``q_t(bound)``. A query's
score is the smallest ``t`` whose interval captures its exact count, so an
interval at threshold ``Q`` misses exactly when the score exceeds ``Q``.
Calibration picks ``Q`` as the ``ceil((1 - alpha) * (n + 1))``-th smallest
calibration score; when that index overflows the sample, a sentinel stands
in for "no finite threshold" and the interval falls back to the trivial
lower bound.

Three calibration regimes are provided:

* marginal        — one quantile over all calibration scores;
* conditional     — per-bin quantiles over a frequency partition, combined
  by taking the largest (valid within every bin);
* unique          — group the calibration items, score one representative
  distinct token per group, and calibrate on those (valid on average for a
  uniformly chosen distinct token of a same-size query batch).

Two-sided intervals come from a pair of one-sided families at level
``alpha / 2`` combined by a union bound.
"""

from __future__ import annotations

import math
import struct
import warnings
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import CalibrationError, ConfigurationError
from .pipeline import SupervisedPair, WarmupCounts
from .sketch import CountMinSketch

FIXED = "fixed"
ADAPTIVE = "adaptive"
SCORE_KINDS = (FIXED, ADAPTIVE)


@dataclass(frozen=True)
class CalibrationQuantile:
    """Order-statistic threshold; ``threshold=None`` is the +inf sentinel."""
    threshold: int | None
    n_used: int
    alpha: float
    score_kind: str = FIXED

    @property
    def is_sentinel(self) -> bool:
        return self.threshold is None


@dataclass(frozen=True)
class ConfidenceInterval:
    lower: int
    upper: int

    def covers(self, value: int) -> bool:
        return self.lower <= value <= self.upper

    @property
    def length(self) -> int:
        return self.upper - self.lower


def order_stat_index(n: int, alpha: float) -> int:
    """``ceil((1 - alpha) * (n + 1))`` in exact rational arithmetic."""
    return math.ceil((1 - Fraction(alpha)) * (n + 1))


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise ConfigurationError(f"alpha must be in (0, 1), got {alpha}")


# -- conformity scores -------------------------------------------------------

def score_fixed(pair: SupervisedPair) -> int:
    """Smallest downward shift of the bound that reaches the exact count."""
    if pair.count > pair.bound:
        raise ValueError(
            f"count {pair.count} exceeds sketch bound {pair.bound}; "
            "the bound must dominate the exact count")
    return pair.bound - pair.count


def score_upper(pair: SupervisedPair) -> int:
    """Score for the dual upper family that grows from zero (equals count)."""
    return pair.count


@dataclass
class AdaptiveErrorModel:
    """Binned empirical quantiles of the sketch error ``bound - count``.

    ``table[b, t]`` is the grid-level-``t`` error quantile in bound-bin
    ``b``; rows are non-decreasing in ``t``, columns non-decreasing in the
    bin (enforced by pool-adjacent-violators), and the first/last grid
    levels are pinned to 0 and ``m_cap``.
    """
    alphas: np.ndarray          # (T,) grid in [0, 1]
    cuts: np.ndarray            # (n_bins - 1,) bound values separating bins
    table: np.ndarray           # (n_bins, T) error quantiles
    m_cap: int

    @property
    def grid_size(self) -> int:
        return len(self.alphas)

    def bin_of(self, bound: int) -> int:
        return int(np.searchsorted(self.cuts, bound, side="left"))

    def row(self, bound: int) -> np.ndarray:
        return self.table[self.bin_of(bound)]

    def quantile(self, t: int, bound: int) -> float:
        return float(self.table[self.bin_of(bound), t])


def _lower_quantiles(sorted_values: np.ndarray, alphas: np.ndarray) -> np.ndarray:
    # inf{x : empirical cdf(x) >= alpha}, with the index computed in exact
    # rational arithmetic (float products like 0.01 * 100 misround the index)
    n = len(sorted_values)
    out = np.empty(len(alphas))
    for i, alpha in enumerate(alphas):
        k = min(max(math.ceil(Fraction(float(alpha)) * n), 1), n)
        out[i] = sorted_values[k - 1]
    return out


def _pava_nondecreasing(values, weights) -> np.ndarray:
    # Weighted least-squares isotonic fit (pool adjacent violators).
    blocks: list[list] = []
    for x, wt in zip(values, weights):
        blocks.append([float(x), float(wt), 1])
        while len(blocks) > 1 and blocks[-2][0] > blocks[-1][0]:
            v2, w2, c2 = blocks.pop()
            v1, w1, c1 = blocks.pop()
            w = w1 + w2
            blocks.append([(v1 * w1 + v2 * w2) / w, w, c1 + c2])
    out: list[float] = []
    for v, _, c in blocks:
        out.extend([v] * c)
    return np.array(out)


def fit_adaptive(train: list[SupervisedPair], grid_size: int = 100,
                 bound_bins: int = 20, m_cap: int | None = None) -> AdaptiveErrorModel:
    """Fit the binned conditional error quantiles on training pairs.

    ``m_cap`` should be the total sketched count (the largest error any
    query could show); it defaults to the largest training bound.
    """
    if not train:
        raise ConfigurationError("adaptive scores need a non-empty training set; "
                                 "use fixed scores when n_train = 0")
    if grid_size < 2:
        raise ConfigurationError("grid_size must be >= 2")
    bounds = np.array([p.bound for p in train], dtype=np.int64)
    errors = bounds - np.array([p.count for p in train], dtype=np.int64)
    if (errors < 0).any():
        raise ValueError("count exceeds sketch bound in training pairs")
    cap = int(bounds.max()) if m_cap is None else int(m_cap)

    fracs = np.arange(1, bound_bins) / bound_bins
    cuts = np.unique(np.quantile(bounds, fracs, method="higher")) if bound_bins > 1 \
        else np.array([], dtype=np.int64)
    # Bin b is (cuts[b-1], cuts[b]]; each cut is a data value, so keeping
    # only cuts strictly inside (min, max) makes every bin non-empty.
    cuts = cuts[(cuts > bounds.min()) & (cuts < bounds.max())]
    n_bins = len(cuts) + 1

    assignment = np.searchsorted(cuts, bounds, side="left")
    # arange/(T-1) gives the correctly rounded t/(T-1), unlike linspace's
    # accumulated steps; grid levels then sit exactly on rational quantiles
    alphas = np.arange(grid_size) / (grid_size - 1)
    table = np.empty((n_bins, grid_size))
    counts = np.empty(n_bins)
    for b in range(n_bins):
        errs = np.sort(errors[assignment == b])
        counts[b] = len(errs)
        table[b] = _lower_quantiles(errs, alphas)
    table[:, 0] = 0.0
    table[:, -1] = cap
    for t in range(grid_size):
        table[:, t] = _pava_nondecreasing(table[:, t], counts)
    return AdaptiveErrorModel(alphas, cuts.astype(np.int64), table, cap)


def score_adaptive(model: AdaptiveErrorModel, pair: SupervisedPair) -> int:
    """Smallest grid index whose shifted bound reaches the exact count."""
    err = pair.bound - pair.count
    row = model.row(pair.bound)
    t = int(np.searchsorted(row, err, side="left"))
    if t >= model.grid_size:
        raise CalibrationError(
            f"error {err} exceeds the model cap {model.m_cap}; "
            "refit with m_cap at least the total sketched count")
    return t


def compute_scores(pairs: list[SupervisedPair], score_kind: str,
                   model: AdaptiveErrorModel | None = None) -> list[int]:
    if score_kind == FIXED:
        return [score_fixed(p) for p in pairs]
    if score_kind == ADAPTIVE:
        if model is None:
            raise ConfigurationError("adaptive scoring requires a fitted model")
        return [score_adaptive(model, p) for p in pairs]
    raise ConfigurationError(f"unknown score kind {score_kind!r}")


# -- calibration regimes ------------------------------------------------------

def calibrate_marginal(scores, alpha: float, score_kind: str = FIXED) -> CalibrationQuantile:
    _check_alpha(alpha)
    scores = sorted(scores)
    n = len(scores)
    if n == 0:
        raise CalibrationError("cannot calibrate on an empty score set")
    k = order_stat_index(n, alpha)
    threshold = int(scores[k - 1]) if k <= n else None
    return CalibrationQuantile(threshold, n, alpha, score_kind)


@dataclass(frozen=True)
class FrequencyPartition:
    """Contiguous interval bins covering the count range 0..upper."""
    bins: tuple[tuple[int, int], ...]  # inclusive (lo, hi) per bin

    @property
    def n_bins(self) -> int:
        return len(self.bins)

    def bin_index(self, value: int) -> int:
        for i, (lo, hi) in enumerate(self.bins):
            if lo <= value <= hi:
                return i
        raise IndexError(f"value {value} outside partition range")


def make_partition(values, n_bins: int, upper: int) -> FrequencyPartition:
    """Equal-mass interval bins from the empirical quantiles of `values`.

    Duplicate quantile edges are merged, so fewer than `n_bins` bins can
    come back (a warning is emitted); the outer bins are stretched to cover
    the full range {0, ..., upper}.
    """
    if n_bins < 1:
        raise ConfigurationError("need at least one bin")
    values = np.asarray(list(values), dtype=np.int64)
    if len(values) == 0:
        raise ConfigurationError("cannot build a partition from no values")
    fracs = np.arange(1, n_bins) / n_bins
    cuts = np.unique(np.quantile(values, fracs, method="higher")) if n_bins > 1 \
        else np.array([], dtype=np.int64)
    # A cut at or below the smallest value would leave the lowest bin with no
    # calibration mass; merge it away.
    floor = int(values.min())
    cuts = [int(c) for c in cuts if floor < c <= upper]
    if len(cuts) < n_bins - 1:
        warnings.warn(f"partition reduced to {len(cuts) + 1} bins "
                      f"(requested {n_bins}): duplicate quantile edges",
                      stacklevel=2)
    edges = [0] + cuts + [upper + 1]
    bins = tuple((edges[i], edges[i + 1] - 1) for i in range(len(edges) - 1))
    return FrequencyPartition(bins)


def calibrate_conditional(scored, partition: FrequencyPartition, alpha: float,
                          score_kind: str = FIXED) -> CalibrationQuantile:
    """Max of per-bin quantiles; `scored` pairs each score with its count.

    Bins with too few scores (including empty ones) contribute the sentinel,
    which dominates the max.
    """
    _check_alpha(alpha)
    scored = list(scored)
    if not scored:
        raise CalibrationError("cannot calibrate on an empty score set")
    per_bin: list[list[int]] = [[] for _ in range(partition.n_bins)]
    for score, count in scored:
        per_bin[partition.bin_index(count)].append(score)
    best: int | None = None
    for bucket in per_bin:
        k = order_stat_index(len(bucket), alpha)
        if k > len(bucket):
            return CalibrationQuantile(None, len(scored), alpha, score_kind)
        q = sorted(bucket)[k - 1]
        best = q if best is None else max(best, q)
    return CalibrationQuantile(int(best), len(scored), alpha, score_kind)


def calibrate_unique(items, m_prime: int, alpha: float, rng: np.random.Generator,
                     score_kind: str = FIXED) -> CalibrationQuantile:
    """Group-representative calibration; `items` pairs each token with its score.

    The calibration items are split at random into groups of `m_prime`
    (leftovers discarded — the guarantee needs equal-size exchangeable
    groups); each group contributes the score of one token drawn uniformly
    from its distinct tokens.
    """
    _check_alpha(alpha)
    items = list(items)
    if m_prime < 1:
        raise ConfigurationError(f"m_prime must be >= 1, got {m_prime}")
    n0 = len(items)
    n_groups = n0 // m_prime
    if n_groups == 0:
        raise CalibrationError(
            f"calibration set of {n0} is too small for group size {m_prime}")
    order = rng.permutation(n0)
    rep_scores = []
    for g in range(n_groups):
        chunk = order[g * m_prime:(g + 1) * m_prime]
        distinct: dict = {}
        for i in chunk:
            token, score = items[i]
            distinct.setdefault(token, score)
        keys = list(distinct)
        pick = keys[int(rng.integers(len(keys)))]
        rep_scores.append(distinct[pick])
    k = order_stat_index(n_groups, alpha)
    rep_scores.sort()
    threshold = int(rep_scores[k - 1]) if k <= n_groups else None
    return CalibrationQuantile(threshold, n_groups, alpha, score_kind)


# -- interval construction ----------------------------------------------------

def predict_lower(token, sketch: CountMinSketch, warmup: WarmupCounts,
                  quantile: CalibrationQuantile, score_kind: str | None = None,
                  model: AdaptiveErrorModel | None = None) -> ConfidenceInterval:
    """One-sided interval [offset + shifted bound, offset + bound].

    The warm-up count of the token is a known exact offset added to both
    ends. A sentinel quantile yields the trivial lower end.
    """
    if score_kind is not None and score_kind != quantile.score_kind:
        raise ConfigurationError(
            f"quantile was calibrated for {quantile.score_kind!r} scores, "
            f"requested {score_kind!r}")
    bound = sketch.upper_bound(token)
    offset = warmup.get(token)
    upper = offset + bound
    if quantile.is_sentinel:
        return ConfidenceInterval(offset, upper)
    if quantile.score_kind == FIXED:
        lower = offset + max(0, bound - quantile.threshold)
    else:
        if model is None:
            raise ConfigurationError("adaptive prediction requires the fitted model")
        lower = offset + max(0, math.ceil(bound - model.quantile(quantile.threshold, bound)))
    return ConfidenceInterval(lower, upper)


def predict_two_sided(token, sketch: CountMinSketch, warmup: WarmupCounts,
                      q_lower: CalibrationQuantile, q_upper: CalibrationQuantile,
                      model: AdaptiveErrorModel | None = None) -> ConfidenceInterval:
    """Combine a lower-family and an upper-family quantile for one token.

    The upper family grows from zero by its threshold, capped at the sketch
    bound; if the ends cross, the lower end is clamped down.
    """
    one_sided = predict_lower(token, sketch, warmup, q_lower, model=model)
    bound = sketch.upper_bound(token)
    offset = warmup.get(token)
    upper = offset + (bound if q_upper.is_sentinel else min(bound, q_upper.threshold))
    return ConfidenceInterval(min(one_sided.lower, upper), upper)


def two_sided_bonferroni(token, sketch: CountMinSketch, warmup: WarmupCounts,
                         lower_scores, upper_scores, alpha: float,
                         model: AdaptiveErrorModel | None = None,
                         score_kind: str = FIXED) -> ConfidenceInterval:
    """Two-sided interval from one-sided families at level alpha / 2 each."""
    _check_alpha(alpha)
    q_lower = calibrate_marginal(lower_scores, alpha / 2, score_kind)
    q_upper = calibrate_marginal(upper_scores, alpha / 2, FIXED)
    return predict_two_sided(token, sketch, warmup, q_lower, q_upper, model)


@dataclass
class CalibrationResult:
    quantile: CalibrationQuantile
    model: AdaptiveErrorModel | None = None
    partition: FrequencyPartition | None = None
    upper_quantile: CalibrationQuantile | None = None  # two-sided runs only


def calibrate_pairs(pairs: list[SupervisedPair], alpha: float,
                    score_kind: str = FIXED, regime: str = "marginal",
                    freq_bins: int = 5, m_prime: int = 100,
                    n_train: int | None = None,
                    rng: np.random.Generator | None = None,
                    group_rng: np.random.Generator | None = None,
                    grid_size: int = 100, bound_bins: int = 20,
                    m_cap: int | None = None, count_upper: int | None = None,
                    two_sided: bool = False) -> CalibrationResult:
    """Full calibration flow on supervised pairs: split, fit, score, quantile.

    `n_train=None` keeps every pair for calibration with fixed scores and
    splits half for training with adaptive ones. `rng` drives the
    train/calibration split; the unique regime's grouping draws from
    `group_rng` (falling back to `rng`), so regimes sharing a seed also
    share the split.
    """
    from .pipeline import split_train_calib  # local import to avoid a cycle

    if n_train is None:
        n_train = len(pairs) // 2 if score_kind == ADAPTIVE else 0
    if rng is None:
        if n_train > 0 or (regime == "unique" and group_rng is None):
            raise ConfigurationError("this calibration consumes randomness; pass rng")
        rng = np.random.default_rng(0)
    train, calib = split_train_calib(pairs, n_train, rng)
    if not calib:
        raise CalibrationError("empty calibration split")

    model = None
    if score_kind == ADAPTIVE:
        model = fit_adaptive(train, grid_size, bound_bins, m_cap=m_cap)
    level = alpha / 2 if two_sided else alpha
    scores = compute_scores(calib, score_kind, model)

    partition = None
    if regime == "marginal":
        quantile = calibrate_marginal(scores, level, score_kind)
    elif regime == "conditional":
        upper = count_upper if count_upper is not None else max(p.count for p in calib)
        partition = make_partition([p.count for p in calib], freq_bins, upper)
        quantile = calibrate_conditional(zip(scores, (p.count for p in calib)),
                                         partition, level, score_kind)
    elif regime == "unique":
        quantile = calibrate_unique(zip((p.token for p in calib), scores),
                                    m_prime, level,
                                    group_rng if group_rng is not None else rng,
                                    score_kind)
    else:
        raise ConfigurationError(f"unknown regime {regime!r}")

    upper_quantile = None
    if two_sided:
        upper_quantile = calibrate_marginal([score_upper(p) for p in calib],
                                            level, FIXED)
    return CalibrationResult(quantile, model, partition, upper_quantile)


# -- snapshot sidecars --------------------------------------------------------

_Q_MAGIC = b"CQNT"
_Q_HEADER = struct.Struct("<4sBBBQQd")  # magic, version, kind, sentinel, thr, n, alpha
_M_MAGIC = b"CADP"
_M_HEADER = struct.Struct("<4sBIIQ")    # magic, version, grid, bins, m_cap


def dump_quantile(q: CalibrationQuantile) -> bytes:
    return _Q_HEADER.pack(_Q_MAGIC, 1, SCORE_KINDS.index(q.score_kind),
                          1 if q.is_sentinel else 0,
                          0 if q.is_sentinel else q.threshold, q.n_used, q.alpha)


def load_quantile(blob: bytes) -> CalibrationQuantile:
    magic, version, kind, sentinel, thr, n, alpha = _Q_HEADER.unpack_from(blob, 0)
    if magic != _Q_MAGIC or version != 1:
        raise ConfigurationError("not a calibration-quantile snapshot")
    return CalibrationQuantile(None if sentinel else int(thr), n, alpha,
                               SCORE_KINDS[kind])


def dump_adaptive_model(model: AdaptiveErrorModel) -> bytes:
    n_bins, grid = model.table.shape
    head = _M_HEADER.pack(_M_MAGIC, 1, grid, n_bins, model.m_cap)
    return (head + model.alphas.astype("<f8").tobytes()
            + model.cuts.astype("<i8").tobytes()
            + model.table.astype("<f8").tobytes(order="C"))


def load_adaptive_model(blob: bytes) -> AdaptiveErrorModel:
    magic, version, grid, n_bins, m_cap = _M_HEADER.unpack_from(blob, 0)
    if magic != _M_MAGIC or version != 1:
        raise ConfigurationError("not an adaptive-model snapshot")
    off = _M_HEADER.size
    alphas = np.frombuffer(blob, "<f8", count=grid, offset=off).copy()
    off += 8 * grid
    cuts = np.frombuffer(blob, "<i8", count=n_bins - 1, offset=off).copy()
    off += 8 * (n_bins - 1)
    table = np.frombuffer(blob, "<f8", count=n_bins * grid, offset=off)
    return AdaptiveErrorModel(alphas, cuts, table.reshape(n_bins, grid).copy(), int(m_cap))
