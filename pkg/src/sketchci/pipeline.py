"""Warm-up-then-sketch ingestion.

The first `m0` stream items are counted exactly (the warm-up dictionary).
Every later item goes into the sketch; items that were seen during warm-up
additionally keep an exact running count. Each warm-up observation then
yields one supervised example (token, exact later count, sketch upper bound)
for calibrating sketch-error intervals downstream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .sketch import CountMinSketch


@dataclass
class WarmupCounts:
    """Exact counts of the first `size` stream items."""
    counts: dict
    size: int

    def get(self, token) -> int:
        return self.counts.get(token, 0)


@dataclass
class TrackedCounts:
    """Post-warm-up counts, kept only for tokens present in the warm-up."""
    counts: dict

    def get(self, token) -> int:
        return self.counts.get(token, 0)


@dataclass(frozen=True)
class SupervisedPair:
    token: object
    count: int  # exact post-warm-up frequency of the token
    bound: int  # sketch upper bound at query time; count <= bound


@dataclass
class PipelineResult:
    warmup: WarmupCounts
    tracked: TrackedCounts
    sketch: CountMinSketch


def run_pipeline(stream, m0: int, sketch: CountMinSketch) -> PipelineResult:
    """Consume an ordered token stream through warm-up and sketching.

    The sketch only sees items after position `m0`, is updated in stream
    order (conservative update is order-sensitive), and comes back frozen.
    """
    if m0 <= 0:
        raise ConfigurationError(f"warm-up length must be positive, got {m0}")
    if sketch.items:
        raise ConfigurationError("sketch must be empty before ingestion")
    it = iter(stream)
    warm: dict = {}
    taken = 0
    for token in it:
        warm[token] = warm.get(token, 0) + 1
        taken += 1
        if taken == m0:
            break
    if taken < m0:
        raise ConfigurationError(f"stream has only {taken} items, warm-up needs {m0}")
    tracked = {token: 0 for token in warm}
    rest = list(it)
    if not rest:
        raise ConfigurationError("warm-up consumed the entire stream (m0 >= m)")
    for token in rest:
        if token in tracked:
            tracked[token] += 1
    sketch.update_many(rest)
    sketch.freeze()
    return PipelineResult(WarmupCounts(warm, m0), TrackedCounts(tracked), sketch)


def build_supervised(warmup: WarmupCounts, tracked: TrackedCounts,
                     sketch: CountMinSketch, distinct: bool = False) -> list[SupervisedPair]:
    """One pair per warm-up observation (so a token seen k times yields k
    identical pairs); set `distinct=True` to collapse duplicates, for
    diagnostics only — calibration guarantees are stated per observation.
    """
    if not sketch.frozen:
        raise ConfigurationError("sketch must be frozen before building pairs")
    pairs = []
    for token, wcount in warmup.counts.items():
        pair = SupervisedPair(token, tracked.get(token), sketch.upper_bound(token))
        reps = 1 if distinct else wcount
        pairs.extend([pair] * reps)
    return pairs


def split_train_calib(pairs: list[SupervisedPair], n_train: int,
                      rng: np.random.Generator) -> tuple[list[SupervisedPair], list[SupervisedPair]]:
    """Uniformly random disjoint split into (train, calibration)."""
    if not 0 <= n_train <= len(pairs):
        raise ConfigurationError(
            f"train size {n_train} out of range for {len(pairs)} pairs")
    order = rng.permutation(len(pairs))
    train = [pairs[i] for i in order[:n_train]]
    calib = [pairs[i] for i in order[n_train:]]
    return train, calib


# -- tracked-count snapshot (token <TAB> warm-up count <TAB> later count) ----

def dump_counts(warmup: WarmupCounts, tracked: TrackedCounts) -> str:
    lines = [f"{token}\t{wcount}\t{tracked.get(token)}"
             for token, wcount in warmup.counts.items()]
    return "\n".join(lines) + ("\n" if lines else "")


def load_counts(text: str) -> tuple[WarmupCounts, TrackedCounts]:
    warm: dict = {}
    tracked: dict = {}
    for line in text.splitlines():
        if not line:
            continue
        token, wcount, tcount = line.rsplit("\t", 2)
        warm[token] = int(wcount)
        tracked[token] = int(tcount)
    return WarmupCounts(warm, sum(warm.values())), TrackedCounts(tracked)
