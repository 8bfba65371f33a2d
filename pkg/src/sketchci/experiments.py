"""Config-driven coverage/length experiments with CSV output.

A run draws a synthetic stream, pushes it through the warm-up pipeline,
calibrates one of the three regimes, answers a fresh batch of random
queries (optionally contaminated with never-seen tokens), and scores the
intervals against a shadow exact counter of the full stream. The shadow
counter exists only here — the library path never needs ground truth.

Repetitions are independently seeded and rows come back in repetition
order, so a fixed config yields byte-identical CSV output.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, fields

import numpy as np

from . import conformal
from .conformal import (ConfidenceInterval, FrequencyPartition, calibrate_pairs,
                        predict_lower)
from .errors import CalibrationError, ConfigurationError
from .generators import PitmanYorSampler, ShiftMixture, ZipfSampler
from .pipeline import build_supervised, run_pipeline
from .sketch import CountMinSketch

logger = logging.getLogger(__name__)

CSV_HEADER = "rep,regime,alpha,coverage,mean_length,bin_id,bin_lo,bin_hi,unique_coverage,pi"

REGIMES = ("marginal", "conditional", "unique")


@dataclass
class ExperimentConfig:
    family: str = "zipf"            # zipf | pyp
    a: float = 1.5                  # zipf tail exponent
    lam: float = 5000.0             # pyp concentration
    sigma: float = 0.0              # pyp discount
    m: int = 20000                  # stream length
    m0: int = 2000                  # warm-up length
    m0_train: int = -1              # -1: 0 for fixed scores, m0 // 2 for adaptive
    kind: str = "cmscu"             # cms | cmscu
    d: int = 3
    w: int = 200
    seed: int = 1
    score: str = "fixed"            # fixed | adaptive
    regime: str = "marginal"        # marginal | conditional | unique
    L: int = 5                      # frequency bins (conditional regime)
    m_prime: int = 100              # calibration group size (unique regime)
    queries: int = 2000
    pi: float = 0.0                 # novel-query mixing proportion
    reps: int = 10
    alpha: float = 0.05
    grid_size: int = 100            # adaptive score grid
    bound_bins: int = 20            # adaptive bound bins
    exact_warmup: bool = False      # singleton intervals for warm-up tokens

    def validate(self) -> "ExperimentConfig":
        if self.family not in ("zipf", "pyp"):
            raise ConfigurationError(f"unknown family {self.family!r}")
        if not 0 < self.m0 < self.m:
            raise ConfigurationError(f"need 0 < m0 < m, got m0={self.m0}, m={self.m}")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigurationError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.reps < 1:
            raise ConfigurationError("reps must be >= 1")
        if self.regime not in REGIMES:
            raise ConfigurationError(f"unknown regime {self.regime!r}")
        if self.score not in conformal.SCORE_KINDS:
            raise ConfigurationError(f"unknown score kind {self.score!r}")
        if not 0.0 <= self.pi <= 1.0:
            raise ConfigurationError("pi must be in [0, 1]")
        if self.m0_train >= 0 and self.m0_train > self.m0:
            raise ConfigurationError("m0_train cannot exceed m0")
        return self

    @property
    def n_train(self) -> int:
        if self.m0_train >= 0:
            return self.m0_train
        return self.m0 // 2 if self.score == "adaptive" else 0


_KEY_ALIASES = {"lambda": "lam", "bins": "L"}


def parse_config(text: str) -> ExperimentConfig:
    """Parse flat `key=value` lines; `#` starts a comment."""
    field_types = {f.name: f.type for f in fields(ExperimentConfig)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        key = _KEY_ALIASES.get(key, key)
        value = value.strip()
        if key not in field_types:
            raise ConfigurationError(f"line {lineno}: unknown key {key!r}")
        kind = field_types[key]
        try:
            if kind == "int":
                values[key] = int(value)
            elif kind == "float":
                values[key] = float(value)
            elif kind == "bool":
                values[key] = value.lower() in ("1", "true", "yes", "on")
            else:
                values[key] = value
        except ValueError as exc:
            raise ConfigurationError(f"line {lineno}: bad value for {key}: {exc}")
    return ExperimentConfig(**values).validate()


@dataclass
class MetricsRow:
    rep: int
    regime: str
    alpha: float
    coverage: float | None
    mean_length: float | None
    bin_id: int | None = None
    bin_lo: int | None = None
    bin_hi: int | None = None
    unique_coverage: float | None = None
    pi: float = 0.0


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, ".10g")
    return str(value)


def rows_to_csv(rows: list[MetricsRow]) -> str:
    lines = [CSV_HEADER]
    for r in rows:
        lines.append(",".join(_fmt(v) for v in (
            r.rep, r.regime, r.alpha, r.coverage, r.mean_length,
            r.bin_id, r.bin_lo, r.bin_hi, r.unique_coverage, r.pi)))
    return "\n".join(lines) + "\n"


# -- metric reducers -----------------------------------------------------------

def coverage_and_length(intervals: list[ConfidenceInterval], truths: list[int]
                        ) -> tuple[float, float]:
    if len(intervals) != len(truths):
        raise ValueError(f"{len(intervals)} intervals vs {len(truths)} truths")
    hits = sum(iv.covers(t) for iv, t in zip(intervals, truths))
    width = sum(iv.length for iv in intervals)
    n = len(intervals)
    return hits / n, width / n


def stratified_metrics(intervals: list[ConfidenceInterval], truths: list[int],
                       partition: FrequencyPartition
                       ) -> list[tuple[int, int, int, float | None, float | None]]:
    """Per-bin (bin_id, lo, hi, coverage, mean_length), routed by true
    frequency; bins with no queries report None metrics, not zero."""
    if len(intervals) != len(truths):
        raise ValueError(f"{len(intervals)} intervals vs {len(truths)} truths")
    grouped: list[list[int]] = [[] for _ in range(partition.n_bins)]
    for i, t in enumerate(truths):
        grouped[partition.bin_index(t)].append(i)
    out = []
    for b, (lo, hi) in enumerate(partition.bins):
        idx = grouped[b]
        if idx:
            cov, length = coverage_and_length([intervals[i] for i in idx],
                                              [truths[i] for i in idx])
        else:
            cov, length = None, None
        out.append((b, lo, hi, cov, length))
    return out


def unique_metrics(tokens, intervals: list[ConfidenceInterval], truths: list[int]
                   ) -> tuple[float, float]:
    """Coverage/length over distinct query tokens, each weighted once."""
    seen = set()
    ivs, ts = [], []
    for token, iv, t in zip(tokens, intervals, truths):
        if token in seen:
            continue
        seen.add(token)
        ivs.append(iv)
        ts.append(t)
    return coverage_and_length(ivs, ts)


# -- the runner ----------------------------------------------------------------

def _make_source(cfg: ExperimentConfig, rng: np.random.Generator):
    if cfg.family == "zipf":
        return ZipfSampler(cfg.a)
    return PitmanYorSampler(cfg.lam, cfg.sigma)


def _run_rep(cfg: ExperimentConfig, rep: int) -> list[MetricsRow]:
    streams = np.random.SeedSequence([cfg.seed, rep]).spawn(5)
    r_stream, r_hash, r_split, r_group, r_query = map(np.random.default_rng, streams)

    source = _make_source(cfg, r_stream)
    stream = source.sample_n(r_stream, cfg.m)
    shadow = Counter(stream)

    sketch = CountMinSketch(cfg.kind, cfg.d, cfg.w, seed=int(r_hash.integers(1 << 62)))
    result = run_pipeline(stream, cfg.m0, sketch)
    pairs = build_supervised(result.warmup, result.tracked, result.sketch)

    calibrated = calibrate_pairs(
        pairs, cfg.alpha, score_kind=cfg.score, regime=cfg.regime,
        freq_bins=cfg.L, m_prime=cfg.m_prime, n_train=cfg.n_train,
        rng=r_split, group_rng=r_group, grid_size=cfg.grid_size,
        bound_bins=cfg.bound_bins, m_cap=sketch.items, count_upper=cfg.m)
    quantile, model, partition = (calibrated.quantile, calibrated.model,
                                  calibrated.partition)

    if cfg.queries <= 0:
        logger.warning("rep %d: no queries requested; emitting an empty row", rep)
        return [MetricsRow(rep, cfg.regime, cfg.alpha, None, None, pi=cfg.pi)]

    query_source = ShiftMixture(source, cfg.pi) if cfg.pi > 0 else source
    q_tokens = query_source.sample_n(r_query, cfg.queries)

    cache: dict = {}
    intervals = []
    for token in q_tokens:
        iv = cache.get(token)
        if iv is None:
            if cfg.exact_warmup and token in result.warmup.counts:
                exact = result.warmup.get(token) + result.tracked.get(token)
                iv = ConfidenceInterval(exact, exact)
            else:
                iv = predict_lower(token, result.sketch, result.warmup,
                                   quantile, model=model)
            cache[token] = iv
        intervals.append(iv)
    truths = [shadow.get(t, 0) for t in q_tokens]

    cov, length = coverage_and_length(intervals, truths)
    if cfg.regime == "conditional":
        rows = [MetricsRow(rep, cfg.regime, cfg.alpha, cov, length, pi=cfg.pi)]
        for b, lo, hi, bcov, blen in stratified_metrics(intervals, truths, partition):
            rows.append(MetricsRow(rep, cfg.regime, cfg.alpha, bcov, blen,
                                   bin_id=b, bin_lo=lo, bin_hi=hi, pi=cfg.pi))
        return rows
    if cfg.regime == "unique":
        ucov, _ = unique_metrics(q_tokens, intervals, truths)
        return [MetricsRow(rep, cfg.regime, cfg.alpha, cov, length,
                           unique_coverage=ucov, pi=cfg.pi)]
    return [MetricsRow(rep, cfg.regime, cfg.alpha, cov, length, pi=cfg.pi)]


def run_experiment(cfg: ExperimentConfig) -> list[MetricsRow]:
    """All repetitions; a repetition that fails to calibrate contributes a
    diagnostic row with empty metrics instead of aborting the run."""
    cfg.validate()
    rows: list[MetricsRow] = []
    for rep in range(cfg.reps):
        try:
            rows.extend(_run_rep(cfg, rep))
        except (ConfigurationError, CalibrationError) as exc:
            logger.warning("rep %d aborted: %s", rep, exc)
            rows.append(MetricsRow(rep, cfg.regime, cfg.alpha, None, None, pi=cfg.pi))
    return rows
