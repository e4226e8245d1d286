"""The u-invariant: canonical cyclic words over {U, S} and equivalence."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ORDER = {"U": 0, "S": 1}


class InvariantError(ValueError):
    pass


def least_rotation(word: str) -> int:
    """Start index of the lexicographically least rotation (Booth, linear time).

    Letters compare with U < S.
    """
    s = [ORDER[c] for c in word] * 2
    n = len(word)
    f = [-1] * len(s)
    k = 0
    for j in range(1, len(s)):
        sj = s[j]
        i = f[j - k - 1]
        while i != -1 and sj != s[k + i + 1]:
            if sj < s[k + i + 1]:
                k = j - i - 1
            i = f[i]
        if sj != s[k + i + 1]:  # i == -1
            if sj < s[k]:
                k = j
            f[j - k] = -1
        else:
            f[j - k] = i + 1
    return k % n if n else 0


def canonical(word: str) -> str:
    _check_letters(word)
    if not word:
        return word
    k = least_rotation(word)
    return word[k:] + word[:k]


def canonical_bruteforce(word: str) -> str:
    """O(k^2) oracle: minimum over all rotations with U < S."""
    rots = [word[i:] + word[:i] for i in range(len(word))] or [""]
    return min(rots, key=lambda w: [ORDER[c] for c in w])


def _check_letters(word: str) -> None:
    bad = set(word) - set("US")
    if bad:
        raise InvariantError(f"letters outside {{U, S}}: {sorted(bad)}")


@dataclass(frozen=True)
class UInvariant:
    word: str
    canonical_rotation: str
    n: int
    m: int

    def __str__(self) -> str:
        return self.canonical_rotation

    @classmethod
    def from_word(cls, word: str) -> "UInvariant":
        word = word.strip().upper()
        _check_letters(word)
        n, m = word.count("U"), word.count("S")
        if n < 1 or m < 1:
            raise InvariantError(f"word {word!r} needs at least one U and one S")
        return cls(word=word, canonical_rotation=canonical(word), n=n, m=m)

    def reflected(self) -> "UInvariant":
        return UInvariant.from_word(self.word[::-1])


def word_of(e) -> UInvariant:
    """u-invariant of an EquippedSet (labels read along the circle)."""
    return UInvariant.from_word("".join(label for _, label in e.points))


def equivalent(a: UInvariant, b: UInvariant, allow_reflection: bool = False) -> bool:
    if (a.n, a.m) != (b.n, b.m):
        return False
    if a.canonical_rotation == b.canonical_rotation:
        return True
    return allow_reflection and a.reflected().canonical_rotation == b.canonical_rotation


def all_canonical_words(max_n: int, max_m: int, min_n: int = 1, min_m: int = 1) -> list[str]:
    """Distinct canonical words with the given letter-count ranges."""
    out = set()
    for n in range(min_n, max_n + 1):
        for m in range(min_m, max_m + 1):
            k = n + m
            for mask in range(1 << k):
                if bin(mask).count("1") != m:
                    continue
                w = "".join("S" if mask >> i & 1 else "U" for i in range(k))
                out.add(canonical(w))
    return sorted(out, key=lambda w: (len(w), w))


@dataclass(frozen=True)
class CircleMap:
    """Degree-1 piecewise-linear circle map given by increasing lifted knots."""

    x: np.ndarray  # knots in [x0, x0 + 1)
    y: np.ndarray  # lifted images, strictly increasing, y[-1] < y[0] + 1

    def __call__(self, p):
        p = np.asarray(p, dtype=float)
        base = self.x[0]
        k = np.floor(p - base)
        q = p - k
        xs = np.append(self.x, base + 1.0)
        ys = np.append(self.y, self.y[0] + 1.0)
        return np.interp(q, xs, ys) + k

    def circle(self, p):
        return np.mod(self(p), 1.0)

    def is_homeomorphism(self) -> bool:
        ys = np.append(self.y, self.y[0] + 1.0)
        return bool(np.all(np.diff(ys) > 0))


def witness_homeomorphism(e1, e2) -> CircleMap:
    """Orientation-preserving PL circle map sending e1's points onto e2's.

    The first rotation of e2 whose label sequence matches e1 is used; the map
    is linear between consecutive points.
    """
    w1 = "".join(l for _, l in e1.points)
    w2 = "".join(l for _, l in e2.points)
    if not equivalent(UInvariant.from_word(w1), UInvariant.from_word(w2)):
        raise InvariantError(f"equipped sets are not equivalent: {canonical(w1)} vs {canonical(w2)}")
    k = len(w1)
    r = next(r for r in range(k) if w2[r:] + w2[:r] == w1)
    p1 = np.array([p for p, _ in e1.points], dtype=float)
    p2 = np.array([p for p, _ in e2.points], dtype=float)
    y = np.concatenate([p2[r:], p2[:r] + 1.0])
    return CircleMap(x=p1, y=y)
