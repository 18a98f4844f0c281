"""Coalescing mechanisms f_n: evaluation, moments, coefficients and sampling.

A mechanism is the pgf of the merge count M_n(i) drawn independently for
every box at step n. Six families are supported:

======================  ====================================  ==============
family                  pgf                                   exact?
======================  ====================================  ==============
``Affine``              1 - a + a z                           yes
``LinearFractional``    homographic, (1 - f)^-1 = a/(1-z) + b yes
``ThetaGeneral``        (zc - f)^-t = a (zc - z)^-t + b       no (eval only)
``SibuyaMixture``       1 - lam (1 - z)^a                     pmf only
``QuadraticStep``       normalized step of a(b+z)^2 - b      yes
``FiniteSupport``       sum p_j z^j                           yes
======================  ====================================  ==============

Mechanisms are immutable. Sampling never touches global state: callers pass
a ``numpy.random.Generator`` and own it.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field, fields
from fractions import Fraction
from typing import Any, ClassVar, Mapping, Optional, Sequence

import numpy as np
from scipy import special

from .errors import (
    DomainError,
    InvalidMechanismError,
    SamplingCutoffError,
    UnsupportedOperationError,
)
from .exact import Number, as_number, from_literal, is_exact, to_literal

FLOAT_TOL = 1e-12
# exact (bignum) arithmetic for the quadratic family is used up to this step
QUADRATIC_EXACT_MAX_STEP = 16
SIBUYA_CUTOFF = 1 << 31
_SIBUYA_TABLE = 1 << 16

FAMILIES: dict[str, type["Mechanism"]] = {}


def _check_z(z) -> None:
    if not (0 <= z <= 1):
        raise DomainError(f"z must lie in [0, 1], got {z!r}")


def _register(cls):
    FAMILIES[cls.family] = cls
    return cls


class Mechanism:
    """Common behaviour; concrete families are frozen dataclasses below."""

    family: ClassVar[str] = ""
    allow_degenerate: bool

    # -- family hooks -------------------------------------------------
    def _family_violations(self) -> list[str]:
        return []

    def _eval(self, z):
        raise NotImplementedError

    # -- public API -----------------------------------------------------
    def validate(self) -> list[str]:
        """Constraint violations, empty when the mechanism is usable.

        Besides the family constraints this enforces f(1) = 1 and
        0 < f(0) < 1; ``allow_degenerate`` relaxes the latter to 0 <= f(0) <= 1.
        """
        out = self._family_violations()
        if out:
            return out
        one = self._eval(Fraction(1) if self.is_exact else 1.0)
        if self.is_exact and isinstance(one, Fraction):
            if one != 1:
                out.append(f"f(1) must equal 1, got {one}")
        elif not abs(one - 1) <= FLOAT_TOL:
            out.append(f"f(1) must equal 1, got {one!r}")
        p0 = self._eval(Fraction(0) if self.is_exact else 0.0)
        if self.allow_degenerate:
            if not (0 <= p0 <= 1):
                out.append(f"f(0) must lie in [0, 1], got {p0}")
        elif not (0 < p0 < 1):
            out.append(f"f(0) must lie in (0, 1) (got {p0}); pass allow_degenerate=True to permit 0 or 1")
        return out

    def is_valid(self) -> bool:
        return not self.validate()

    def check(self) -> "Mechanism":
        errs = self.validate()
        if errs:
            raise InvalidMechanismError(errs)
        return self

    @property
    def is_exact(self) -> bool:
        return is_exact(*self.params().values())

    def __call__(self, z):
        _check_z(z)
        return self._eval(z)

    def mean(self) -> Number:
        raise NotImplementedError

    def pmf(self, jmax: int) -> list:
        raise NotImplementedError

    def sample_many(self, rng: np.random.Generator, size: int) -> np.ndarray:
        raise UnsupportedOperationError(f"{self.family} has no sampler")

    def sample(self, rng: np.random.Generator) -> int:
        return int(self.sample_many(rng, 1)[0])

    def params(self) -> dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name != "allow_degenerate"}

    def to_dict(self) -> dict:
        params = {}
        for k, v in self.params().items():
            params[k] = [to_literal(x) for x in v] if isinstance(v, tuple) else to_literal(v)
        d = {"family": self.family, "params": params}
        if self.allow_degenerate:
            d["allow_degenerate"] = True
        return d


def _table_sample(probs: Sequence, rng: np.random.Generator, size: int) -> np.ndarray:
    cdf = np.cumsum([float(p) for p in probs])
    cdf[-1] = 1.0
    return np.searchsorted(cdf, rng.random(size), side="right").astype(np.int64)


@_register
@dataclass(frozen=True)
class Affine(Mechanism):
    """Bernoulli merge count: one box with probability a, else an empty box."""

    family: ClassVar[str] = "Affine"
    a: Number
    allow_degenerate: bool = field(default=False, kw_only=True)

    def __post_init__(self):
        object.__setattr__(self, "a", as_number(self.a))

    def _family_violations(self):
        return [] if 0 < self.a < 1 else [f"Affine requires 0 < a < 1, got a={self.a}"]

    def _eval(self, z):
        return 1 - self.a + self.a * z

    def mean(self):
        return self.a

    def pmf(self, jmax):
        out = [1 - self.a, self.a] + [0 * self.a] * max(0, jmax - 1)
        return out[: jmax + 1]

    def sample_many(self, rng, size):
        return (rng.random(size) < float(self.a)).astype(np.int64)


@_register
@dataclass(frozen=True)
class LinearFractional(Mechanism):
    """Homographic mechanism: p_0 = 1 - 1/(a+b), geometric tail with ratio r/(1+r), r = b/a."""

    family: ClassVar[str] = "LinearFractional"
    a: Number
    b: Number
    allow_degenerate: bool = field(default=False, kw_only=True)

    def __post_init__(self):
        object.__setattr__(self, "a", as_number(self.a))
        object.__setattr__(self, "b", as_number(self.b))

    def _family_violations(self):
        out = []
        if not self.a > 0:
            out.append(f"LinearFractional requires a > 0, got a={self.a}")
        if not self.b > 0:
            out.append(f"LinearFractional requires b > 0, got b={self.b}")
        if not self.a + self.b > 1:
            out.append(f"LinearFractional requires a + b > 1, got a+b={self.a + self.b}")
        return out

    def _eval(self, z):
        s = self.a + self.b
        return 1 - 1 / s + (1 / s) * z / (1 + (self.b / self.a) * (1 - z))

    def mean(self):
        return 1 / self.a

    def pmf(self, jmax):
        return lf_pmf(self.a, self.b, jmax)

    def sample_many(self, rng, size):
        s = float(self.a + self.b)
        q = float(self.a / (self.a + self.b))  # 1/(1+r)
        empty = rng.random(size) < 1 - 1 / s
        geo = rng.geometric(q, size)
        return np.where(empty, 0, geo).astype(np.int64)


def lf_pmf(A, B, jmax) -> list:
    """Coefficients of 1 - 1/(A+B) + (1/(A+B)) z / (1 + (B/A)(1-z))."""
    s = A + B
    r = B / A
    out = [1 - 1 / s]
    head = (1 / s) / (1 + r)
    ratio = r / (1 + r)
    for j in range(1, jmax + 1):
        out.append(head * ratio ** (j - 1))
    return out


def cauchy_coefficients(fn, jmax: int) -> list[float]:
    """Taylor coefficients of ``fn`` at 0 by FFT on a circle inside the unit disk.

    ``fn`` must accept complex arrays and be analytic on |z| < 1.
    """
    m = max(jmax, 8)
    r = 1 - 1 / (2 * m)
    n = max(4096, 1 << math.ceil(math.log2(80 * m)))
    w = r * np.exp(2j * np.pi * np.arange(n) / n)
    c = np.fft.fft(fn(w)) / n
    return [float(x) for x in c[: jmax + 1].real / r ** np.arange(jmax + 1)]


@_register
@dataclass(frozen=True)
class ThetaGeneral(Mechanism):
    """Linear-fractional family with exponent theta and singular point zc >= 1.

    With zc > 1 and ``b`` omitted, b = (zc - 1)^-theta (1 - a) is filled in
    so that f(1) = 1. Evaluation-only: coefficients come from a numeric
    contour integral and there is no sampler.
    """

    family: ClassVar[str] = "ThetaGeneral"
    theta: float
    a: float
    b: Optional[float] = None
    zc: float = 1.0
    allow_degenerate: bool = field(default=False, kw_only=True)

    def __post_init__(self):
        for name in ("theta", "a", "zc"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if self.b is None:
            if self.zc <= 1:
                raise ValueError("ThetaGeneral needs b when zc = 1")
            object.__setattr__(self, "b", (self.zc - 1) ** (-self.theta) * (1 - self.a))
        else:
            object.__setattr__(self, "b", float(self.b))

    @property
    def is_exact(self):
        return False

    def _family_violations(self):
        out = []
        if not (-1 <= self.theta <= 1) or self.theta == 0:
            out.append(f"ThetaGeneral requires theta in [-1, 1] without 0, got {self.theta}")
        if not self.zc >= 1:
            out.append(f"ThetaGeneral requires zc >= 1, got {self.zc}")
        if not self.a > 0:
            out.append(f"ThetaGeneral requires a > 0, got {self.a}")
        if not self.b >= 0:
            # b = 0 is the only choice giving f(1) = 1 when theta < 0 and zc = 1
            out.append(f"ThetaGeneral requires b >= 0, got {self.b}")
        return out

    def validate(self):
        out = super().validate()
        if not out:
            coeffs = self.pmf(64)
            if min(coeffs) < -1e-9:
                out.append("ThetaGeneral parameters do not give a pgf (negative coefficient)")
        return out

    def _eval(self, z):
        t = self.theta
        if np.isscalar(z) and z == self.zc:
            return self.zc if t > 0 else self.zc - self.b ** (-1 / t)
        return self.zc - (self.a * (self.zc - z) ** (-t) + self.b) ** (-1 / t)

    def mean(self):
        t, zc = self.theta, self.zc
        if zc > 1:
            return self.a * (self.a + self.b * (zc - 1) ** t) ** (-(1 + t) / t)
        return self.a ** (-1 / t)

    def pmf(self, jmax):
        return cauchy_coefficients(lambda w: self._eval(w.astype(complex)), jmax)


@functools.lru_cache(maxsize=32)
def _sibuya_survival_table(a: float) -> np.ndarray:
    j = np.arange(1, _SIBUYA_TABLE + 1, dtype=float)
    return np.concatenate(([1.0], np.cumprod(1.0 - a / j)))


def sibuya_survival(a: float, k) -> np.ndarray:
    """P(X > k) for X ~ Sibuya(a): Gamma(k+1-a) / (Gamma(k+1) Gamma(1-a))."""
    return special.poch(np.asarray(k, dtype=float) + 1, -a) / special.gamma(1 - a)


def sample_sibuya(rng: np.random.Generator, a: float, size: int) -> np.ndarray:
    """Sibuya(a) variates by inversion of the survival function.

    Values up to 2^16 come from the running product of (1 - a/j); the rare
    tail beyond is located by bisection on the closed-form survival function.
    Draws above ``SIBUYA_CUTOFF`` raise ``SamplingCutoffError``.
    """
    v = 1.0 - rng.random(size)  # in (0, 1]
    surv = _sibuya_survival_table(a)
    k = np.searchsorted(-surv, -v, side="left").astype(np.int64)
    np.maximum(k, 1, out=k)
    tail = k > _SIBUYA_TABLE
    if tail.any():
        vt = v[tail]
        if (sibuya_survival(a, SIBUYA_CUTOFF) > vt).any():
            raise SamplingCutoffError(f"Sibuya({a}) draw exceeded cutoff {SIBUYA_CUTOFF}")
        lo = np.full(vt.shape, _SIBUYA_TABLE, dtype=np.int64)
        hi = np.full(vt.shape, SIBUYA_CUTOFF, dtype=np.int64)
        while (hi - lo > 1).any():
            mid = (lo + hi) // 2
            ok = sibuya_survival(a, mid) <= vt
            hi = np.where(ok, mid, hi)
            lo = np.where(ok, lo, mid)
        k[tail] = hi
    return k


@_register
@dataclass(frozen=True)
class SibuyaMixture(Mechanism):
    """Zero with probability 1 - lam, otherwise a Sibuya(a) count. Infinite mean."""

    family: ClassVar[str] = "SibuyaMixture"
    a: Number
    lam: Number = Fraction(1)
    allow_degenerate: bool = field(default=False, kw_only=True)

    def __post_init__(self):
        object.__setattr__(self, "a", as_number(self.a))
        object.__setattr__(self, "lam", as_number(self.lam))

    def _family_violations(self):
        out = []
        if not 0 < self.a < 1:
            out.append(f"SibuyaMixture requires 0 < a < 1, got a={self.a}")
        if not 0 < self.lam <= 1:
            out.append(f"SibuyaMixture requires 0 < lam <= 1, got lam={self.lam}")
        return out

    def _eval(self, z):
        if z == 1:
            return 1 + 0 * self.lam
        if isinstance(z, Fraction) and z == 0:
            return 1 - self.lam
        return 1 - float(self.lam) * (1 - z) ** float(self.a)

    def mean(self):
        return math.inf

    def pmf(self, jmax):
        return sibuya_pmf(self.lam, self.a, jmax)

    def sample_many(self, rng, size):
        keep = rng.random(size) < float(self.lam)
        out = np.zeros(size, dtype=np.int64)
        n = int(keep.sum())
        if n:
            out[keep] = sample_sibuya(rng, float(self.a), n)
        return out


def sibuya_pmf(lam, a, jmax) -> list:
    """Coefficients of 1 - lam (1 - z)^a."""
    out = [1 - lam]
    if jmax >= 1:
        out.append(lam * a)
    for j in range(1, jmax):
        out.append(out[-1] * (j - a) / (j + 1))
    return out[: jmax + 1]


def quadratic_power(a, b, n):
    """(a(b+1))^(2^n) as an exact Fraction, or None when it must be done in floats."""
    if is_exact(a, b) and n <= QUADRATIC_EXACT_MAX_STEP:
        return (a * (b + 1)) ** (1 << n)
    return None


@_register
@dataclass(frozen=True)
class QuadraticStep(Mechanism):
    """Step n+1 of the normalized quadratic iteration.

    f_{n+1}(z) = ((ab + (c^(2^n) - ab) z)^2 - ab) / (c^(2^(n+1)) - ab), c = a(b+1).
    Requires a, b > 0 and ab >= 1; ab = 1 gives f(0) = 0.
    """

    family: ClassVar[str] = "QuadraticStep"
    a: Number
    b: Number
    n: int = 0
    allow_degenerate: bool = field(default=False, kw_only=True)

    def __post_init__(self):
        object.__setattr__(self, "a", as_number(self.a))
        object.__setattr__(self, "b", as_number(self.b))
        object.__setattr__(self, "n", int(self.n))

    @property
    def is_exact(self):
        return is_exact(self.a, self.b)

    def _family_violations(self):
        out = []
        if not (self.a > 0 and self.b > 0):
            out.append(f"QuadraticStep requires a, b > 0, got a={self.a}, b={self.b}")
        elif not self.a * self.b >= 1:
            out.append(f"QuadraticStep requires ab >= 1, got ab={self.a * self.b}")
        if self.n < 0:
            out.append(f"QuadraticStep requires n >= 0, got n={self.n}")
        return out

    def validate(self):
        out = self._family_violations()
        if out:
            return out
        # f(1) = 1 by construction and f(0) = ab(ab - 1)/(c^(2^(n+1)) - ab), whose
        # sign is decided here because the float path underflows for large n
        if self.a * self.b == 1 and not self.allow_degenerate:
            out.append("f(0) must lie in (0, 1) (got 0 since ab = 1); pass allow_degenerate=True to permit 0 or 1")
        return out

    def coefficients(self) -> list:
        u = self.a * self.b
        cn = quadratic_power(self.a, self.b, self.n)
        if cn is not None:
            v = cn - u
            d = cn * cn - u
            return [(u * u - u) / d, 2 * u * v / d, v * v / d]
        # normalized by c^(2^(n+1)); t = ab / c^(2^n) -> 0
        u = float(u)
        t = u * math.exp(-(2.0 ** self.n) * math.log(float(self.a) * (float(self.b) + 1)))
        d = 1 - t * t / u
        return [(t * t - t * t / u) / d, 2 * t * (1 - t) / d, (1 - t) ** 2 / d]

    def _eval(self, z):
        p0, p1, p2 = self.coefficients()
        return p0 + z * (p1 + z * p2)

    def mean(self):
        _, p1, p2 = self.coefficients()
        return p1 + 2 * p2

    def pmf(self, jmax):
        c = self.coefficients()
        return (c + [0 * c[0]] * max(0, jmax - 2))[: jmax + 1]

    def sample_many(self, rng, size):
        return _table_sample(self.coefficients(), rng, size)


@_register
@dataclass(frozen=True)
class FiniteSupport(Mechanism):
    """Arbitrary law on {0, ..., K} given by its probability vector."""

    family: ClassVar[str] = "FiniteSupport"
    p: tuple
    allow_degenerate: bool = field(default=False, kw_only=True)

    def __post_init__(self):
        object.__setattr__(self, "p", tuple(as_number(x) for x in self.p))

    @property
    def is_exact(self):
        return is_exact(*self.p)

    def _family_violations(self):
        out = []
        if not self.p:
            return ["FiniteSupport requires a non-empty probability vector"]
        if any(x < 0 for x in self.p):
            out.append("FiniteSupport probabilities must be non-negative")
        total = sum(self.p)
        if self.is_exact:
            if total != 1:
                out.append(f"FiniteSupport probabilities must sum to 1, got {total}")
        elif abs(total - 1) > FLOAT_TOL:
            out.append(f"FiniteSupport probabilities must sum to 1, got {total!r}")
        return out

    def _eval(self, z):
        acc = 0 * z
        for c in reversed(self.p):
            acc = acc * z + c
        return acc

    def mean(self):
        return sum(j * x for j, x in enumerate(self.p))

    def pmf(self, jmax):
        zero = 0 * self.p[0]
        return [self.p[j] if j < len(self.p) else zero for j in range(jmax + 1)]

    def sample_many(self, rng, size):
        return _table_sample(self.p, rng, size)


# ---------------------------------------------------------------------------
# schedules


_SCHEDULE_KINDS = ("Constant", "PowerPerturbed", "ExplicitList", "Telescoped", "PowerTied")


@dataclass(frozen=True)
class Schedule:
    """A per-step parameter sequence, indexed by step n >= 1.

    ``PowerPerturbed`` gives base * (1 +/- (n+1)^-exponent). ``Telescoped``
    and ``PowerTied`` are derived from the same step's ``a`` value:
    scale * (1 - a_n) and base^(1 - a_n) respectively.
    """

    kind: str
    value: Optional[Number] = None
    base: Optional[Number] = None
    exponent: Optional[Number] = None
    sign: str = "-"
    values: tuple = ()
    scale: Optional[Number] = None

    def __post_init__(self):
        if self.kind not in _SCHEDULE_KINDS:
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.sign not in ("+", "-"):
            raise ValueError("sign must be '+' or '-'")
        for name in ("value", "base", "exponent", "scale"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, as_number(v))
        object.__setattr__(self, "values", tuple(as_number(v) for v in self.values))
        required = {
            "Constant": ("value",),
            "PowerPerturbed": ("base", "exponent"),
            "ExplicitList": (),
            "Telescoped": ("scale",),
            "PowerTied": ("base",),
        }[self.kind]
        for name in required:
            if getattr(self, name) is None:
                raise ValueError(f"{self.kind} schedule needs {name!r}")
        if self.kind == "PowerPerturbed" and not self.exponent > 0:
            raise ValueError("PowerPerturbed exponent must be > 0")
        if self.kind == "ExplicitList" and not self.values:
            raise ValueError("ExplicitList schedule needs values")

    @classmethod
    def constant(cls, value):
        return cls("Constant", value=value)

    @classmethod
    def power(cls, base, exponent, sign="-"):
        return cls("PowerPerturbed", base=base, exponent=exponent, sign=sign)

    @classmethod
    def explicit(cls, values):
        return cls("ExplicitList", values=tuple(values))

    @classmethod
    def telescoped(cls, scale):
        return cls("Telescoped", scale=scale)

    @classmethod
    def tied_power(cls, base):
        return cls("PowerTied", base=base)

    @property
    def derived(self) -> bool:
        return self.kind in ("Telescoped", "PowerTied")

    def perturbation(self, n: int) -> Number:
        e = self.exponent
        if isinstance(e, Fraction) and e.denominator == 1:
            return Fraction(1, (n + 1) ** int(e))
        return (n + 1) ** (-float(e))

    def at(self, n: int, a_n=None) -> Number:
        if n < 1:
            raise ValueError("schedules are indexed from step 1")
        if self.kind == "Constant":
            return self.value
        if self.kind == "PowerPerturbed":
            eps = self.perturbation(n)
            return self.base * (1 - eps) if self.sign == "-" else self.base * (1 + eps)
        if self.kind == "ExplicitList":
            if n > len(self.values):
                raise ValueError(f"ExplicitList schedule has no value for step {n}")
            return self.values[n - 1]
        if a_n is None:
            raise ValueError(f"{self.kind} schedule needs the step's a value")
        if self.kind == "Telescoped":
            return self.scale * (1 - a_n)
        return float(self.base) ** (1 - float(a_n))

    def limit(self, a_limit=None) -> Optional[Number]:
        """Value as n -> infinity, or None if undefined (explicit lists)."""
        if self.kind == "Constant":
            return self.value
        if self.kind == "PowerPerturbed":
            return self.base
        if self.kind == "ExplicitList" or a_limit is None:
            return None
        if self.kind == "Telescoped":
            return self.scale * (1 - a_limit)
        return float(self.base) ** (1 - float(a_limit))

    def horizon(self) -> Optional[int]:
        return len(self.values) if self.kind == "ExplicitList" else None

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"kind": self.kind}
        if self.kind == "Constant":
            d["value"] = to_literal(self.value)
        elif self.kind == "PowerPerturbed":
            d.update(base=to_literal(self.base), exponent=to_literal(self.exponent), sign=self.sign)
        elif self.kind == "ExplicitList":
            d["values"] = [to_literal(v) for v in self.values]
        elif self.kind == "Telescoped":
            d["scale"] = to_literal(self.scale)
        else:
            d["base"] = to_literal(self.base)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "Schedule":
        d = dict(d)
        unknown = set(d) - {"kind", "value", "base", "exponent", "sign", "values", "scale"}
        if unknown:
            raise ValueError(f"unknown schedule keys: {sorted(unknown)}")
        kw = {}
        for k, v in d.items():
            if k in ("value", "base", "exponent", "scale"):
                kw[k] = from_literal(v)
            elif k == "values":
                kw[k] = tuple(from_literal(x) for x in v)
            else:
                kw[k] = v
        return cls(**kw)


@dataclass(frozen=True)
class MechanismSchedule:
    """One family with per-step parameters; ``at(n)`` builds f_n.

    ``params`` maps parameter names to constants or ``Schedule`` objects.
    For ``QuadraticStep`` the step index is filled in as n - 1.
    """

    family: str
    params: Mapping[str, Any]
    allow_degenerate: bool = False

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        fixed = {}
        for k, v in dict(self.params).items():
            if isinstance(v, Schedule):
                fixed[k] = v
            elif isinstance(v, (list, tuple)):
                fixed[k] = tuple(as_number(x) for x in v)
            else:
                fixed[k] = as_number(v)
        object.__setattr__(self, "params", fixed)

    @classmethod
    def constant(cls, mech: Mechanism) -> "MechanismSchedule":
        return cls(mech.family, mech.params(), allow_degenerate=mech.allow_degenerate)

    def at(self, n: int) -> Mechanism:
        values = {}
        derived = []
        for k, v in self.params.items():
            if isinstance(v, Schedule):
                if v.derived:
                    derived.append((k, v))
                else:
                    values[k] = v.at(n)
            else:
                values[k] = v
        for k, v in derived:
            values[k] = v.at(n, values.get("a"))
        if self.family == "QuadraticStep":
            values.setdefault("n", n - 1)
        return FAMILIES[self.family](**values, allow_degenerate=self.allow_degenerate)

    def mechanisms(self, horizon: int) -> list[Mechanism]:
        return [self.at(n) for n in range(1, horizon + 1)]

    def violations(self, horizon: int) -> list[str]:
        out = []
        for n in range(1, horizon + 1):
            try:
                m = self.at(n)
            except (ValueError, TypeError) as exc:
                out.append(f"step {n}: {exc}")
                continue
            out.extend(f"step {n}: {v}" for v in m.validate())
        return out

    def limit_mean(self) -> Optional[Number]:
        """mean(f_n) as n -> infinity, when the schedule determines it."""
        if self.family == "QuadraticStep":
            return Fraction(2)  # f_{n+1} -> z^2
        if self.family == "SibuyaMixture":
            return math.inf
        if self.family == "FiniteSupport":
            p = self.params.get("p")
            return sum(j * x for j, x in enumerate(p)) if isinstance(p, tuple) else None
        lim = {}
        for k, v in self.params.items():
            if isinstance(v, Schedule) and not v.derived:
                lim[k] = v.limit()
            elif not isinstance(v, Schedule):
                lim[k] = v
        for k, v in self.params.items():
            if isinstance(v, Schedule) and v.derived:
                lim[k] = v.limit(lim.get("a"))
        if any(x is None for x in lim.values()):
            return None
        a = lim.get("a")
        if self.family == "Affine":
            return a
        if self.family == "LinearFractional":
            return 1 / a
        if self.family == "ThetaGeneral":
            t = float(lim["theta"])
            zc = float(lim.get("zc", 1.0))
            return float(a) if zc > 1 else float(a) ** (-1 / t)
        return None

    def to_dict(self) -> dict:
        params, schedule = {}, {}
        for k, v in self.params.items():
            if isinstance(v, Schedule):
                schedule[k] = v.to_dict()
            elif isinstance(v, tuple):
                params[k] = [to_literal(x) for x in v]
            else:
                params[k] = to_literal(v)
        d: dict[str, Any] = {"family": self.family, "params": params}
        if schedule:
            d["schedule"] = schedule
        if self.allow_degenerate:
            d["allow_degenerate"] = True
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "MechanismSchedule":
        unknown = set(d) - {"family", "params", "schedule", "allow_degenerate"}
        if unknown:
            raise ValueError(f"unknown mechanism keys: {sorted(unknown)}")
        if "family" not in d:
            raise ValueError("mechanism needs a 'family'")
        params: dict[str, Any] = {}
        for k, v in dict(d.get("params", {})).items():
            params[k] = tuple(from_literal(x) for x in v) if isinstance(v, list) else from_literal(v)
        for k, v in dict(d.get("schedule", {})).items():
            params[k] = Schedule.from_dict(v)
        return cls(d["family"], params, allow_degenerate=bool(d.get("allow_degenerate", False)))


def mechanism_from_dict(d: Mapping) -> Mechanism:
    """Inverse of ``Mechanism.to_dict``; float literals become exact rationals."""
    sched = MechanismSchedule.from_dict(d)
    if any(isinstance(v, Schedule) for v in sched.params.values()):
        raise ValueError("a single mechanism cannot carry a schedule; use MechanismSchedule")
    return FAMILIES[sched.family](**sched.params, allow_degenerate=sched.allow_degenerate)


def named_schedule(name: str, **params) -> MechanismSchedule:
    """The parameter schedules studied for each solvable family.

    ``affine``: a_n = mu (1 - (n+1)^-alpha).
    ``homographic``: a_n = a (1 -/+ (n+1)^-alpha), b_n = b (1 - a_n).
    ``sibuya``: a_n = a (1 - (n+1)^-alpha) (constant a when alpha is None),
    lam_n = lam^(1 - a_n).
    ``quadratic``: the normalized iteration of a(b+z)^2 - b.
    """
    p = {k: (v if k == "sign" or v is None else from_literal(v)) for k, v in params.items()}
    try:
        if name == "affine":
            return MechanismSchedule("Affine", {"a": Schedule.power(p["mu"], p.get("alpha", 1), p.get("sign", "-"))})
        if name == "homographic":
            a, b = p["a"], p["b"]
            if a == 1:
                raise ValueError("homographic schedule needs a != 1")
            sign = p.get("sign", "-" if a < 1 else "+")
            return MechanismSchedule(
                "LinearFractional",
                {"a": Schedule.power(a, p.get("alpha", 2), sign), "b": Schedule.telescoped(b)},
            )
        if name == "sibuya":
            alpha = p.get("alpha")
            a_sched = Schedule.constant(p["a"]) if alpha is None else Schedule.power(p["a"], alpha, "-")
            return MechanismSchedule("SibuyaMixture", {"a": a_sched, "lam": Schedule.tied_power(p["lam"])})
        if name == "quadratic":
            a, b = p["a"], p["b"]
            return MechanismSchedule("QuadraticStep", {"a": a, "b": b}, allow_degenerate=(a * b == 1))
    except KeyError as exc:
        raise ValueError(f"schedule {name!r} is missing parameter {exc.args[0]!r}") from None
    raise ValueError(f"unknown schedule {name!r}")
