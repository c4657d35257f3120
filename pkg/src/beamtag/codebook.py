"""Tag families: lexicode generation, rotation, and lookup-table decoding.

Codewords are held as Python ints whose most significant bit is the
top-left payload cell, continuing row-major (as seen from the front of the
tag).  String helpers convert to and from ``"0101..."`` bit strings.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (BadLength, CollisionDetected, Infeasible, LengthMismatch,
                     TooManyBadBits)

# Full enumeration of candidates is used up to this many payload bits.
_ENUMERATE_BITS = 20


def hamming(a, b) -> int:
    """Number of positions at which two equal-length bit strings differ.

    >>> hamming("1011111", "1001011")
    2
    """
    if isinstance(a, (int, np.integer)) and isinstance(b, (int, np.integer)):
        return int(a ^ b).bit_count()
    if len(a) != len(b):
        raise LengthMismatch(f"lengths differ: {len(a)} vs {len(b)}")
    return sum(x != y for x, y in zip(a, b))


def bits_to_int(bits: str) -> int:
    return int(bits, 2) if bits else 0


def int_to_bits(word: int, nbits: int) -> str:
    return format(word, f"0{nbits}b")


def _grid(word: int, d: int) -> np.ndarray:
    n = d * d
    return np.array([(word >> (n - 1 - i)) & 1 for i in range(n)],
                    dtype=np.uint8).reshape(d, d)


def _ungrid(grid: np.ndarray) -> int:
    out = 0
    for b in grid.reshape(-1):
        out = (out << 1) | int(b)
    return out


@lru_cache(maxsize=None)
def _rotation_perm(d: int, k: int) -> tuple[int, ...]:
    # perm[i] = source bit index that lands on position i after k clockwise turns
    idx = np.arange(d * d).reshape(d, d)
    return tuple(int(v) for v in np.rot90(idx, -k).reshape(-1))


def rotate_int(word: int, d: int, k: int) -> int:
    n = d * d
    perm = _rotation_perm(d, k % 4)
    out = 0
    for src in perm:
        out = (out << 1) | ((word >> (n - 1 - src)) & 1)
    return out


def rotate_codeword(code, d: int, k: int):
    """Rotate a d*d payload clockwise by ``90 * k`` degrees.

    Accepts a bit string (returns a bit string) or an int (returns an int).
    """
    if isinstance(code, str):
        if len(code) != d * d:
            raise BadLength(f"expected {d * d} bits, got {len(code)}")
        return int_to_bits(rotate_int(bits_to_int(code), d, k), d * d)
    if code < 0 or code >> (d * d):
        raise BadLength(f"word does not fit in {d * d} bits")
    return rotate_int(int(code), d, k)


def complexity(word: int, d: int) -> int:
    """Rectangle count needed to paint the payload plus its black border.

    Greedy cover: paint the black background, then repeatedly paint the
    largest rectangle whose cells are all still wrong and share a colour.
    Reported as a descriptive metric only.
    """
    target = np.zeros((d + 2, d + 2), dtype=np.uint8)
    target[1:-1, 1:-1] = _grid(word, d)
    canvas = np.zeros_like(target)
    count = 1
    while True:
        wrong = canvas != target
        if not wrong.any():
            return count
        best = None
        n = d + 2
        for r0 in range(n):
            for c0 in range(n):
                if not wrong[r0, c0]:
                    continue
                colour = target[r0, c0]
                for r1 in range(r0, n):
                    for c1 in range(c0, n):
                        block = target[r0:r1 + 1, c0:c1 + 1]
                        if not (block == colour).all():
                            break
                        area = int(wrong[r0:r1 + 1, c0:c1 + 1].sum())
                        if best is None or area > best[0]:
                            best = (area, r0, r1, c0, c1, colour)
        _, r0, r1, c0, c1, colour = best
        canvas[r0:r1 + 1, c0:c1 + 1] = colour
        count += 1


@dataclass(frozen=True)
class TagFamily:
    d: int
    h: int
    codewords: tuple[int, ...]
    name: str = ""

    @property
    def nbits(self) -> int:
        return self.d * self.d

    @property
    def max_correctable(self) -> int:
        return (self.h - 1) // 2

    def codeword_bits(self, tag_id: int) -> str:
        return int_to_bits(self.codewords[tag_id], self.nbits)

    def to_json(self) -> dict:
        width = (self.nbits + 3) // 4
        return {"name": self.name, "d": self.d, "h": self.h,
                "codewords": [format(c, f"0{width}x") for c in self.codewords]}

    @classmethod
    def from_json(cls, doc: dict) -> "TagFamily":
        d, h = int(doc["d"]), int(doc["h"])
        words = tuple(int(s, 16) for s in doc["codewords"])
        for w in words:
            if w >> (d * d):
                raise BadLength(f"codeword {w:x} does not fit in {d * d} bits")
        return cls(d, h, words, doc.get("name", ""))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n",
                              encoding="utf-8")

    @classmethod
    def load(cls, path) -> "TagFamily":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def load_hex_list(path, d: int, h: int, name: str = "") -> TagFamily:
    """Read an external codeword list, one hex word per line."""
    words = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            words.append(int(line, 16))
    return TagFamily(d, h, tuple(words), name or Path(path).stem)


def _popcount(a: np.ndarray) -> np.ndarray:
    return np.bitwise_count(a)


def _rotations_array(words: np.ndarray, d: int) -> np.ndarray:
    """(4, N) array of every word under k = 0..3 clockwise turns."""
    n = d * d
    out = np.zeros((4, len(words)), dtype=np.uint64)
    for k in range(4):
        perm = _rotation_perm(d, k)
        acc = np.zeros(len(words), dtype=np.uint64)
        for src in perm:
            acc = (acc << np.uint64(1)) | ((words >> np.uint64(n - 1 - src)) & np.uint64(1))
        out[k] = acc
    return out


def min_self_rotation_distance(word: int, d: int) -> int:
    return min(hamming(word, rotate_int(word, d, k)) for k in (1, 2, 3))


def generate_lexicode(d: int, h: int, rng_seed: int = 0,
                      max_codewords: int | None = None,
                      max_candidates: int = 1 << 20) -> TagFamily:
    """Greedy rotation-aware lexicode over a seeded shuffle of candidates.

    A candidate is accepted when it is at least ``h`` bits from each of its
    own non-trivial rotations and from every rotation of every accepted word.
    Payloads of up to 20 bits are fully enumerated; longer payloads draw
    ``max_candidates`` random words instead.
    """
    if d < 2 or h < 1:
        raise ValueError("need d >= 2 and h >= 1")
    n = d * d
    rng = np.random.default_rng(rng_seed)
    if n <= _ENUMERATE_BITS:
        cand = rng.permutation(1 << n).astype(np.uint64)
    else:
        hi = rng.integers(0, 1 << 32, size=max_candidates, dtype=np.uint64)
        lo = rng.integers(0, 1 << 32, size=max_candidates, dtype=np.uint64)
        cand = ((hi << np.uint64(32)) | lo) & np.uint64((1 << n) - 1)
    rots = _rotations_array(cand, d)
    self_dist = np.min(_popcount(rots[1:] ^ rots[0]), axis=0)
    alive = self_dist >= h
    accepted: list[int] = []
    pos = 0
    while True:
        nxt = np.flatnonzero(alive[pos:])
        if len(nxt) == 0:
            break
        pos += int(nxt[0])
        word = int(cand[pos])
        accepted.append(word)
        alive[pos] = False
        for k in range(4):
            r = np.uint64(rotate_int(word, d, k))
            alive &= _popcount(cand ^ r) >= h
        if max_codewords is not None and len(accepted) >= max_codewords:
            break
    if not accepted:
        raise Infeasible(f"no codeword satisfies d={d}, h={h}")
    return TagFamily(d, h, tuple(accepted), f"lex{n}h{h}s{rng_seed}")


def family_min_distance(family: TagFamily) -> int:
    """Exhaustive minimum distance over all distinct (codeword, rotation) entries."""
    words = np.array(family.codewords, dtype=np.uint64)
    entries = _rotations_array(words, family.d).reshape(-1)
    best = family.nbits + 1
    for i in range(len(entries)):
        rest = entries[i + 1:]
        if len(rest):
            best = min(best, int(_popcount(rest ^ entries[i]).min()))
    return best


def verify_family(family: TagFamily) -> list[str]:
    """Problems found by the exhaustive rotation-inclusive check (empty if sound)."""
    problems = []
    words = family.codewords
    d, h = family.d, family.h
    for i, a in enumerate(words):
        s = min_self_rotation_distance(a, d)
        if s < h:
            problems.append(f"codeword {i} is {s} bits from its own rotation")
        for j in range(i + 1, len(words)):
            dist = min(hamming(a, rotate_int(words[j], d, k)) for k in range(4))
            if dist < h:
                problems.append(f"codewords {i} and {j} are {dist} bits apart")
    return problems


@dataclass(frozen=True)
class DecodeResult:
    tag_id: int
    rotation_k: int
    hamming_distance: int
    corrected_bits: int


@dataclass(frozen=True, eq=False)
class DecodingTable:
    family: TagFamily
    lookup: dict = field(repr=False)
    keys: np.ndarray = field(repr=False)
    ids: np.ndarray = field(repr=False)
    ks: np.ndarray = field(repr=False)

    @property
    def max_correctable(self) -> int:
        return self.family.max_correctable

    def __len__(self):
        return len(self.lookup)


def build_hash_table(family: TagFamily) -> DecodingTable:
    """Map every rotation of every codeword to ``(tag_id, k)``."""
    lookup = {}
    for tag_id, word in enumerate(family.codewords):
        for k in range(4):
            key = rotate_int(word, family.d, k)
            if key in lookup:
                other = lookup[key]
                raise CollisionDetected(
                    f"rotation {k} of codeword {tag_id} equals rotation "
                    f"{other[1]} of codeword {other[0]}")
            lookup[key] = (tag_id, k)
    keys = np.array(list(lookup), dtype=np.uint64)
    ids = np.array([v[0] for v in lookup.values()], dtype=np.int64)
    ks = np.array([v[1] for v in lookup.values()], dtype=np.int64)
    return DecodingTable(family, lookup, keys, ids, ks)


def decode_codeword(table: DecodingTable, word, unknown_mask=0,
                    max_bad_bits: int | None = None) -> DecodeResult | None:
    """Nearest table entry within the correction radius, else ``None``.

    Bits set in ``unknown_mask`` are ignored when measuring distance but count
    toward ``corrected_bits``.  A tie at the minimal distance between two
    different entries is treated as no match.

    Raises
    ------
    TooManyBadBits
        More unknown bits than ``max_bad_bits`` (defaults to the family's
        correction radius).
    """
    n = table.family.nbits
    if isinstance(word, str):
        if len(word) != n:
            raise BadLength(f"expected {n} bits, got {len(word)}")
        word = bits_to_int(word)
    if isinstance(unknown_mask, str):
        unknown_mask = bits_to_int(unknown_mask)
    if max_bad_bits is None:
        max_bad_bits = table.max_correctable
    n_unknown = int(unknown_mask).bit_count()
    if n_unknown > max_bad_bits:
        raise TooManyBadBits(f"{n_unknown} unknown bits > {max_bad_bits}")
    if not unknown_mask:
        hit = table.lookup.get(word)
        if hit is not None:
            return DecodeResult(hit[0], hit[1], 0, 0)
    known = np.uint64(((1 << n) - 1) & ~int(unknown_mask))
    dist = _popcount((table.keys ^ np.uint64(word)) & known)
    best = int(dist.min())
    if best > table.max_correctable:
        return None
    winners = np.flatnonzero(dist == best)
    if len(winners) > 1:
        return None
    i = int(winners[0])
    return DecodeResult(int(table.ids[i]), int(table.ks[i]), best, best + n_unknown)


@lru_cache(maxsize=None)
def default_family() -> TagFamily:
    """The 16-bit, distance-5 family used when no family file is given."""
    fam = generate_lexicode(4, 5, rng_seed=1)
    return TagFamily(fam.d, fam.h, fam.codewords, "lex16h5")
