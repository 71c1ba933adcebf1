"""Deterministic 64-bit PRNG for everything stochastic in the pipeline.

Corpus generation, splits, augmentation, weight init, epoch shuffles and
query ids all draw from this generator so that identical seeds give
identical bytes on disk, independent of Python hash randomization or
numpy version.

Seed expansion is the splitmix64 recurrence:

    state  = (state + 0x9E3779B97F4A7C15) mod 2^64
    z      = state
    z      = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) mod 2^64
    z      = ((z ^ (z >> 27)) * 0x94D049BB133111EB) mod 2^64
    output = z ^ (z >> 31)

The stream generator is xorshift64*:

    x      = x ^ (x >> 12)
    x      = (x ^ (x << 25)) mod 2^64
    x      = x ^ (x >> 27)
    output = (x * 0x2545F4914F6CDD1D) mod 2^64

Its state is primed with the first nonzero splitmix64 output of the seed,
so seed 0 is usable.  String tags fold into derived seeds through FNV-1a.
"""

from __future__ import annotations

MASK64 = 0xFFFFFFFFFFFFFFFF

_SPLITMIX_GAMMA = 0x9E3779B97F4A7C15
_SPLITMIX_M1 = 0xBF58476D1CE4E5B9
_SPLITMIX_M2 = 0x94D049BB133111EB
_XORSHIFT_M = 0x2545F4914F6CDD1D

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def splitmix64(state: int) -> tuple[int, int]:
    """One splitmix64 step. Returns (new_state, output)."""
    state = (state + _SPLITMIX_GAMMA) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * _SPLITMIX_M1) & MASK64
    z = ((z ^ (z >> 27)) * _SPLITMIX_M2) & MASK64
    return state, z ^ (z >> 31)


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & MASK64
    return h


def derive_seed(seed: int, *tags: int | str) -> int:
    """Derive a substream seed from a master seed and a tag path.

    Each tag is mixed in as ``state = splitmix64(state ^ tag)[1]`` where
    string tags are first hashed with FNV-1a. Used to give every class,
    image and epoch its own independent stream.
    """
    state = seed & MASK64
    for tag in tags:
        if isinstance(tag, str):
            tag = fnv1a64(tag.encode("utf-8"))
        _, state = splitmix64(state ^ (tag & MASK64))
    return state


class Rng:
    """xorshift64* stream seeded through splitmix64."""

    def __init__(self, seed: int):
        self.seed = seed & MASK64
        state = self.seed
        x = 0
        while x == 0:
            state, x = splitmix64(state)
        self._x = x

    def next_u64(self) -> int:
        x = self._x
        x ^= x >> 12
        x = (x ^ (x << 25)) & MASK64
        x ^= x >> 27
        self._x = x
        return (x * _XORSHIFT_M) & MASK64

    def random(self) -> float:
        """Uniform float in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) * (2.0 ** -53)

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.random()

    def randrange(self, n: int) -> int:
        """Uniform integer in [0, n). Rejection sampling, no modulo bias."""
        if n <= 0:
            raise ValueError("randrange needs a positive bound")
        limit = (MASK64 + 1) - ((MASK64 + 1) % n)
        while True:
            u = self.next_u64()
            if u < limit:
                return u % n

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi] inclusive."""
        return lo + self.randrange(hi - lo + 1)

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randrange(i + 1)
            items[i], items[j] = items[j], items[i]

    def choice(self, items: list):
        if not items:
            raise ValueError("choice from empty sequence")
        return items[self.randrange(len(items))]

    def bytes(self, n: int) -> bytes:
        """n pseudo-random bytes (little-endian u64 words, truncated)."""
        words = (n + 7) // 8
        buf = b"".join(self.next_u64().to_bytes(8, "little") for _ in range(words))
        return buf[:n]

    def spawn(self, *tags: int | str) -> "Rng":
        """New independent stream derived from this stream's seed and tags."""
        return Rng(derive_seed(self.seed, *tags))
