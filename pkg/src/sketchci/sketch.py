"""Count-min sketches: the vanilla linear kind and conservative update.

Both kinds keep a depth x width grid of non-negative counters addressed by a
shared `HashFamily`. Sketching a token addresses one counter per row:

* ``cms``   increments all addressed counters; every row sums to the number
  of sketched items, and the estimate ``min_j C[j, h_j(z)]`` never falls
  below the true count of ``z`` (Cormode & Muthukrishnan, 2005).
* ``cmscu`` (conservative update) increments only the counters currently
  equal to the minimum of the addressed set, ties included. The same
  min-of-rows query is still a deterministic upper bound, and every counter
  is entrywise no larger than its vanilla counterpart on the same stream.

The vanilla kind also carries the classical probabilistic lower bound
``estimate - (e / width) * items``, which holds with probability
``1 - exp(-depth)`` over the draw of the hash family. It is not valid for
conservative update, which is non-linear in the stream.

Ingestion is single-writer; call `freeze()` when done, after which the
sketch is immutable and safe for concurrent queries.
"""

from __future__ import annotations

import math
import struct
from collections import Counter

import numpy as np

from .errors import ConfigurationError
from .hashing import HashFamily

KINDS = ("cms", "cmscu")

_COUNTER_MAX = (1 << 63) - 1

_MAGIC = b"CMSK"
_VERSION = 1
_HEADER = struct.Struct("<4sBBIIQQ")  # magic, version, kind, d, w, seed, items


class CountMinSketch:
    def __init__(self, kind: str, depth: int, width: int, seed: int = 0,
                 family: HashFamily | None = None):
        if kind not in KINDS:
            raise ConfigurationError(f"kind must be one of {KINDS}, got {kind!r}")
        self.kind = kind
        self.family = family if family is not None else HashFamily(seed, depth, width)
        if (self.family.depth, self.family.width) != (depth, width):
            raise ConfigurationError("family dimensions do not match depth/width")
        self.depth = depth
        self.width = width
        self.items = 0  # number of sketched tokens
        self._rows: list[list[int]] = [[0] * width for _ in range(depth)]
        self._frozen = False
        self._bucket_cache: dict = {}

    # -- ingestion ---------------------------------------------------------

    def _buckets(self, token) -> tuple[int, ...]:
        cols = self._bucket_cache.get(token)
        if cols is None:
            cols = self.family.buckets(token)
            self._bucket_cache[token] = cols
        return cols

    def update(self, token) -> None:
        """Sketch one token."""
        if self._frozen:
            raise RuntimeError("sketch is frozen; no further updates allowed")
        cols = self._buckets(token)
        rows = self._rows
        if self.kind == "cms":
            for j, c in enumerate(cols):
                v = rows[j][c] + 1
                if v > _COUNTER_MAX:
                    raise OverflowError("counter exceeded 63-bit range")
                rows[j][c] = v
        else:
            vals = [rows[j][cols[j]] for j in range(self.depth)]
            low = min(vals)
            if low + 1 > _COUNTER_MAX:
                raise OverflowError("counter exceeded 63-bit range")
            for j, v in enumerate(vals):
                if v == low:
                    rows[j][cols[j]] = v + 1
        self.items += 1

    def update_many(self, tokens) -> None:
        """Sketch a sequence of tokens in order.

        For the vanilla kind the result is order-free, so tokens are grouped
        by value first; conservative update is replayed sequentially.
        """
        if self._frozen:
            raise RuntimeError("sketch is frozen; no further updates allowed")
        if self.kind == "cms":
            n = 0
            rows = self._rows
            for token, cnt in Counter(tokens).items():
                for j, c in enumerate(self._buckets(token)):
                    v = rows[j][c] + cnt
                    if v > _COUNTER_MAX:
                        raise OverflowError("counter exceeded 63-bit range")
                    rows[j][c] = v
                n += cnt
            self.items += n
        else:
            rows = self._rows
            depth = range(self.depth)
            n = 0
            for token in tokens:
                cols = self._buckets(token)
                vals = [rows[j][cols[j]] for j in depth]
                low = min(vals)
                for j, v in enumerate(vals):
                    if v == low:
                        rows[j][cols[j]] = v + 1
                n += 1
            if n and max(max(r) for r in rows) > _COUNTER_MAX:
                raise OverflowError("counter exceeded 63-bit range")
            self.items += n

    def freeze(self) -> "CountMinSketch":
        self._frozen = True
        return self

    @property
    def frozen(self) -> bool:
        return self._frozen

    # -- queries -----------------------------------------------------------

    def upper_bound(self, token) -> int:
        """Smallest addressed counter; never below the token's true count."""
        rows = self._rows
        return min(rows[j][c] for j, c in enumerate(self._buckets(token)))

    def classical_lower_bound(self, token) -> int:
        """Hash-randomness lower bound, valid for the vanilla kind only.

        Holds with probability at least ``1 - exp(-depth)`` over the choice
        of hash family (see `confidence`), for any fixed stream and token.
        """
        if self.kind != "cms":
            raise ConfigurationError(
                "classical lower bound is only valid for kind='cms'")
        if self.items <= 0:
            raise ConfigurationError("classical lower bound needs a non-empty sketch")
        return classical_lower_bound_value(self.upper_bound(token), self.items, self.width)

    @property
    def confidence(self) -> float:
        """Coverage level of `classical_lower_bound` over hash randomness."""
        return 1.0 - math.exp(-self.depth)

    # -- views -------------------------------------------------------------

    @property
    def grid(self) -> np.ndarray:
        """Counter grid as a (depth, width) int64 array (copy)."""
        return np.array(self._rows, dtype=np.int64)

    def row_sums(self) -> list[int]:
        return [sum(r) for r in self._rows]

    # -- snapshots ----------------------------------------------------------

    def to_bytes(self) -> bytes:
        """Binary snapshot: header then row-major little-endian counters."""
        head = _HEADER.pack(_MAGIC, _VERSION, KINDS.index(self.kind),
                            self.depth, self.width,
                            self.family.seed & ((1 << 64) - 1), self.items)
        body = self.grid.astype("<u8").tobytes(order="C")
        return head + body

    @classmethod
    def from_bytes(cls, blob: bytes) -> "CountMinSketch":
        """Restore a snapshot; the result is frozen."""
        magic, version, kind_idx, d, w, seed, items = _HEADER.unpack_from(blob, 0)
        if magic != _MAGIC:
            raise ConfigurationError("not a sketch snapshot (bad magic)")
        if version != _VERSION:
            raise ConfigurationError(f"unsupported snapshot version {version}")
        expected = _HEADER.size + 8 * d * w
        if len(blob) != expected:
            raise ConfigurationError(
                f"snapshot length {len(blob)} != expected {expected}")
        counters = np.frombuffer(blob, dtype="<u8", offset=_HEADER.size)
        sketch = cls(KINDS[kind_idx], d, w, seed=seed)
        sketch._rows = [[int(v) for v in row] for row in counters.reshape(d, w)]
        sketch.items = items
        sketch._frozen = True
        return sketch

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "CountMinSketch":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def classical_lower_bound_value(upper_bound: int, items: int, width: int) -> int:
    """``max(0, ceil(upper_bound - (e / width) * items))``."""
    return max(0, math.ceil(upper_bound - (math.e / width) * items))
