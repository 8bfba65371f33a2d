"""Seedable pairwise-independent bucket hashing.

Each row of a family is an affine (Carter-Wegman) hash

    h(x) = ((a * x + b) mod p) mod width,    p = 2^61 - 1,

with per-row coefficients derived deterministically from (seed, row) by a
counter-based mixer, so the same (seed, depth, width) always rebuilds the
exact same family, in any process.

Tokens are arbitrary byte sequences. They are first folded to a 64-bit
fingerprint with a fixed, seed-independent function (see `fingerprint`), then
passed through the affine row hash. The fold step technically weakens exact
pairwise independence; in practice fingerprint collisions (~2^-64) are far
below anything the counting layers can perceive.
"""

from __future__ import annotations

import hashlib

from .errors import ConfigurationError

MERSENNE_P = (1 << 61) - 1

_MASK64 = (1 << 64) - 1


def fingerprint(token) -> int:
    """Fold a token to a 64-bit integer, independent of any seed.

    Canonical byte form: bytes pass through unchanged, str is UTF-8 encoded,
    int uses its decimal ASCII form. The int rule makes an in-memory integer
    stream hash identically to the same stream written to / read from a
    newline-delimited text file.
    """
    if isinstance(token, bytes):
        data = token
    elif isinstance(token, str):
        data = token.encode("utf-8")
    elif isinstance(token, int):
        data = str(token).encode("ascii")
    else:
        raise TypeError(f"token must be bytes, str or int, got {type(token).__name__}")
    return int.from_bytes(hashlib.blake2b(data, digest_size=8).digest(), "little")


def _splitmix64(x: int) -> int:
    # Counter-based mixer (splitmix64 finalizer); full 64-bit avalanche.
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def _draw_mod_p(seed: int, row: int, slot: int) -> int:
    # Uniform value in [0, p) by masking to 61 bits and rejecting >= p.
    counter = 0
    while True:
        x = _splitmix64((seed & _MASK64) ^ _splitmix64((row << 20) | (slot << 10) | counter))
        v = x & MERSENNE_P  # 61-bit mask; p = 2^61 - 1 so v in [0, 2^61)
        if v < MERSENNE_P:
            return v
        counter += 1


class HashFamily:
    """`depth` independent affine row hashes into `width` buckets.

    Immutable after construction; safe to share across threads.
    """

    __slots__ = ("seed", "depth", "width", "_coeffs")

    def __init__(self, seed: int, depth: int, width: int):
        if depth < 1:
            raise ConfigurationError(f"depth must be >= 1, got {depth}")
        if width < 2:
            raise ConfigurationError(f"width must be >= 2, got {width}")
        self.seed = int(seed)
        self.depth = int(depth)
        self.width = int(width)
        coeffs = []
        for row in range(depth):
            a = _draw_mod_p(self.seed, row, 0)
            bump = 1
            while a == 0:  # degenerate row hash; redraw from the next slot
                a = _draw_mod_p(self.seed, row, 2 + bump)
                bump += 1
            b = _draw_mod_p(self.seed, row, 1)
            coeffs.append((a, b))
        self._coeffs = tuple(coeffs)

    def coefficients(self, row: int) -> tuple[int, int]:
        return self._coeffs[row]

    def bucket(self, row: int, token) -> int:
        """Bucket index in [0, width) for `token` under row hash `row`."""
        if not 0 <= row < self.depth:
            raise IndexError(f"row {row} out of range for depth {self.depth}")
        a, b = self._coeffs[row]
        return ((a * fingerprint(token) + b) % MERSENNE_P) % self.width

    def buckets(self, token) -> tuple[int, ...]:
        """Bucket indices for all rows; one fingerprint, depth reductions."""
        fp = fingerprint(token)
        w = self.width
        return tuple(((a * fp + b) % MERSENNE_P) % w for a, b in self._coeffs)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, HashFamily)
            and (self.seed, self.depth, self.width) == (other.seed, other.depth, other.width)
        )

    def __repr__(self) -> str:
        return f"HashFamily(seed={self.seed}, depth={self.depth}, width={self.width})"
