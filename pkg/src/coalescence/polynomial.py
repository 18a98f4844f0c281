"""Dense univariate polynomials over Fraction (coefficient lists, lowest degree first)."""
from __future__ import annotations

from fractions import Fraction
from typing import Sequence

from .errors import ResourceError

MAX_DEGREE = 10**6


def trim(p: Sequence) -> list:
    p = list(p)
    while len(p) > 1 and p[-1] == 0:
        p.pop()
    return p


def add(p: Sequence, q: Sequence) -> list:
    n = max(len(p), len(q))
    zero = Fraction(0)
    return [(p[i] if i < len(p) else zero) + (q[i] if i < len(q) else zero) for i in range(n)]


def mul(p: Sequence, q: Sequence) -> list:
    if not p or not q:
        return []
    out = [Fraction(0)] * (len(p) + len(q) - 1)
    for i, a in enumerate(p):
        if a == 0:
            continue
        for j, b in enumerate(q):
            out[i + j] += a * b
    return out


def power(p: Sequence, k: int) -> list:
    out = [Fraction(1)]
    base = list(p)
    while k:
        if k & 1:
            out = mul(out, base)
        k >>= 1
        if k:
            base = mul(base, base)
    return out


def compose(outer: Sequence, inner: Sequence) -> list:
    """Coefficients of outer(inner(z)) by Horner's scheme."""
    outer, inner = trim(outer), trim(inner)
    if (len(outer) - 1) * (len(inner) - 1) > MAX_DEGREE:
        raise ResourceError(f"composed degree exceeds {MAX_DEGREE}")
    out = [outer[-1]]
    for c in reversed(outer[:-1]):
        out = add(mul(out, inner), [c])
    return trim(out)


def evaluate(p: Sequence, z):
    acc = 0 * z
    for c in reversed(p):
        acc = acc * z + c
    return acc


def derivative_at_one(p: Sequence):
    return sum(j * c for j, c in enumerate(p))
