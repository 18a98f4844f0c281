"""Closed-form composition of mechanism chains.

``compose_chain`` turns f_{n2+1}, ..., f_{n1} into the composed pgf
Phi_{n1,n2} = f_{n1} o ... o f_{n2+1} (phi*_N is the window (N, 0)).
Each solvable family is closed under composition and keeps a small
parameter set; finite-support chains are composed as exact polynomials.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import ClassVar, Optional, Sequence, Union

import numpy as np

from . import polynomial as poly
from .errors import DomainError, UnsupportedCombinationError, WindowMismatchError
from .exact import Number, as_number, is_exact, log_of, to_literal
from .mechanisms import (
    QUADRATIC_EXACT_MAX_STEP,
    Affine,
    FiniteSupport,
    LinearFractional,
    Mechanism,
    MechanismSchedule,
    QuadraticStep,
    SibuyaMixture,
    ThetaGeneral,
    cauchy_coefficients,
    lf_pmf,
    sibuya_pmf,
)

CRITICALITY_TOL = 1e-9
BFL_CONSTANT_TERM = "bfl-constant-term"

Window = tuple[int, int]


def _check_z(z):
    if not (0 <= z <= 1):
        raise DomainError(f"z must lie in [0, 1], got {z!r}")


class ComposedPgf:
    variant: ClassVar[str] = ""
    window: Window

    def __call__(self, z):
        _check_z(z)
        return self._eval(z)

    def _eval(self, z):
        raise NotImplementedError

    def empty_prob(self):
        return self._eval(Fraction(0) if self.is_exact else 0.0)

    def mean(self) -> Number:
        raise NotImplementedError

    def pmf(self, jmax: int) -> list:
        raise NotImplementedError

    @property
    def is_exact(self) -> bool:
        return False

    @property
    def flags(self) -> tuple[str, ...]:
        return ()

    def identity(self, n: int) -> "ComposedPgf":
        """The empty window (n, n) of this variant."""
        raise NotImplementedError

    def _concat(self, inner):
        raise NotImplementedError

    def params(self) -> dict:
        raise NotImplementedError

    def to_dict(self) -> dict:
        params = {k: ([to_literal(x) for x in v] if isinstance(v, (list, tuple)) else to_literal(v))
                  for k, v in self.params().items()}
        return {"variant": self.variant, "params": params, "window": list(self.window)}


def _exact_fields(obj, *names) -> None:
    """Store int parameters as Fractions so closed forms never fall back to float division."""
    for name in names:
        object.__setattr__(obj, name, as_number(getattr(obj, name)))


@dataclass(frozen=True)
class AffineChain(ComposedPgf):
    variant: ClassVar[str] = "AffineChain"
    A: Number
    window: Window = (1, 0)

    def __post_init__(self):
        _exact_fields(self, "A")

    def _eval(self, z):
        return 1 - self.A + self.A * z

    @property
    def is_exact(self):
        return is_exact(self.A)

    def mean(self):
        return self.A

    def pmf(self, jmax):
        return [1 - self.A, self.A, *([0 * self.A] * max(0, jmax - 1))][: jmax + 1]

    def identity(self, n):
        return AffineChain(Fraction(1), (n, n))

    def _concat(self, inner):
        return AffineChain(self.A * inner.A, (self.window[0], inner.window[1]))

    def params(self):
        return {"A": self.A}


@dataclass(frozen=True)
class LFChain(ComposedPgf):
    """(1 - phi)^-1 = A (1 - z)^-1 + B."""

    variant: ClassVar[str] = "LFChain"
    A: Number
    B: Number
    window: Window = (1, 0)

    def __post_init__(self):
        _exact_fields(self, "A", "B")

    def _eval(self, z):
        s = self.A + self.B
        return 1 - 1 / s + (1 / s) * z / (1 + (self.B / self.A) * (1 - z))

    @property
    def is_exact(self):
        return is_exact(self.A, self.B)

    def mean(self):
        return 1 / self.A

    def pmf(self, jmax):
        return lf_pmf(self.A, self.B, jmax)

    def identity(self, n):
        return LFChain(Fraction(1), Fraction(0), (n, n))

    def _concat(self, inner):
        return LFChain(self.A * inner.A, self.B + self.A * inner.B, (self.window[0], inner.window[1]))

    def params(self):
        return {"A": self.A, "B": self.B}


@dataclass(frozen=True)
class ThetaChain(ComposedPgf):
    """(zc - phi)^-theta = A (zc - z)^-theta + B; evaluation and numeric coefficients only."""

    variant: ClassVar[str] = "ThetaChain"
    theta: float
    zc: float
    A: float
    B: float
    window: Window = (1, 0)

    def _eval(self, z):
        t, zc = self.theta, self.zc
        if np.isscalar(z) and z == zc:
            return zc if t > 0 else zc - self.B ** (-1 / t)
        return zc - (self.A * (zc - z) ** (-t) + self.B) ** (-1 / t)

    def mean(self):
        t, zc = self.theta, self.zc
        if zc > 1:
            return self.A * (self.A + self.B * (zc - 1) ** t) ** (-(1 + t) / t)
        return self.A ** (-1 / t)

    def pmf(self, jmax):
        return cauchy_coefficients(lambda w: self._eval(w.astype(complex)), jmax)

    def identity(self, n):
        return ThetaChain(self.theta, self.zc, 1.0, 0.0, (n, n))

    def _concat(self, inner):
        if (self.theta, self.zc) != (inner.theta, inner.zc):
            raise UnsupportedCombinationError("theta chains with different theta or zc")
        return ThetaChain(self.theta, self.zc, self.A * inner.A, self.B + self.A * inner.B,
                          (self.window[0], inner.window[1]))

    def params(self):
        return {"theta": self.theta, "zc": self.zc, "A": self.A, "B": self.B}


@dataclass(frozen=True)
class SibuyaChain(ComposedPgf):
    """phi(z) = 1 - Lam (1 - z)^A."""

    variant: ClassVar[str] = "SibuyaChain"
    Lam: Number
    A: Number
    window: Window = (1, 0)

    def __post_init__(self):
        _exact_fields(self, "Lam", "A")

    def _eval(self, z):
        if z == 1:
            return 1.0
        return 1 - float(self.Lam) * (1 - z) ** float(self.A)

    def empty_prob(self):
        return 1 - self.Lam

    def mean(self):
        return math.inf if self.A < 1 else self.Lam

    def pmf(self, jmax):
        return sibuya_pmf(self.Lam, self.A, jmax)

    def identity(self, n):
        return SibuyaChain(Fraction(1), Fraction(1), (n, n))

    def _concat(self, inner):
        return SibuyaChain(self.Lam * inner.Lam ** self.A, self.A * inner.A, (self.window[0], inner.window[1]))

    def params(self):
        return {"Lam": self.Lam, "A": self.A}


@dataclass(frozen=True)
class QuadraticChain(ComposedPgf):
    """Window (n1, n2) of the normalized quadratic iteration.

    With C_m = (a(b+1))^(2^m) and k = n1 - n2,
    Phi_{n1,n2}(z) = ((ab + (C_{n2} - ab) z)^(2^k) - ab) / (C_{n1} - ab),
    so phi*_n is the window (n, 0). Exact for rational a, b while
    n1 <= 20; beyond that the float path works relative to C_{n1}.
    """

    variant: ClassVar[str] = "QuadraticChain"
    a: Number
    b: Number
    n1: int
    n2: int = 0

    def __post_init__(self):
        _exact_fields(self, "a", "b")
        if not 0 <= self.n2 <= self.n1:
            raise ValueError(f"window needs 0 <= n2 <= n1, got ({self.n1}, {self.n2})")

    @property
    def window(self):
        return (self.n1, self.n2)

    @property
    def is_exact(self):
        return is_exact(self.a, self.b) and self.n1 <= QUADRATIC_EXACT_MAX_STEP

    @property
    def flags(self):
        return (BFL_CONSTANT_TERM,)

    @property
    def k(self):
        return self.n1 - self.n2

    def _C(self, m):
        return (self.a * (self.b + 1)) ** (1 << m)

    def _inv_C(self, m) -> float:
        return math.exp(-(2.0 ** m) * math.log(float(self.a) * (float(self.b) + 1)))

    def _eval(self, z):
        ab = self.a * self.b
        if self.is_exact and is_exact(z):
            c2 = self._C(self.n2)
            return ((ab + (c2 - ab) * z) ** (1 << self.k) - ab) / (c2 ** (1 << self.k) - ab)
        ab = float(ab)
        r = z + ab * (1 - z) * self._inv_C(self.n2)
        inv1 = self._inv_C(self.n1)
        return (r ** (2.0 ** self.k) - ab * inv1) / (1 - ab * inv1)

    def mean(self):
        ab = self.a * self.b
        if self.is_exact:
            c1, c2 = self._C(self.n1), self._C(self.n2)
            return (1 << self.k) * c1 * (c2 - ab) / (c2 * (c1 - ab))
        ab = float(ab)
        return 2.0 ** self.k * (1 - ab * self._inv_C(self.n2)) / (1 - ab * self._inv_C(self.n1))

    def pmf(self, jmax):
        """Coefficients [z^j] for j <= jmax (zero beyond degree 2^k).

        The constant term is ((ab)^K - ab) / (C_{n1} - ab), K = 2^k; the
        bare binomial expression is only valid for j >= 1.
        """
        ab = self.a * self.b
        K = 1 << self.k if self.k < 64 else None
        if self.is_exact:
            c1, c2 = self._C(self.n1), self._C(self.n2)
            d = c1 - ab
            v = c2 - ab
            out = [(ab ** K - ab) / d]
            binom = 1
            for j in range(1, jmax + 1):
                if j > K:
                    out.append(Fraction(0))
                    continue
                binom = binom * (K - j + 1) // j
                out.append(binom * ab ** (K - j) * v ** j / d)
            return out
        ab = float(ab)
        Kf = 2.0 ** self.k
        lc = math.log(float(self.a) * (float(self.b) + 1))
        inv1, inv2 = self._inv_C(self.n1), self._inv_C(self.n2)
        scale = math.log(ab) - 2.0 ** self.n2 * lc  # log(ab / C_{n2}) <= 0
        log_den = math.log1p(-ab * inv1)
        if ab == 1:
            out = [0.0]
        else:
            out = [math.exp(Kf * scale) * (1 - ab ** (1 - Kf)) / (1 - ab * inv1)]
        for j in range(1, jmax + 1):
            if K is not None and j > K:
                out.append(0.0)
                continue
            lb = math.lgamma(Kf + 1) - math.lgamma(j + 1) - math.lgamma(Kf - j + 1)
            out.append(math.exp(lb + (Kf - j) * scale + j * math.log1p(-ab * inv2) - log_den))
        return out

    def identity(self, n):
        return QuadraticChain(self.a, self.b, n, n)

    def _concat(self, inner):
        if (self.a, self.b) != (inner.a, inner.b):
            raise UnsupportedCombinationError("quadratic chains with different (a, b)")
        return QuadraticChain(self.a, self.b, self.n1, inner.n2)

    def params(self):
        return {"a": self.a, "b": self.b}


@dataclass(frozen=True)
class PolynomialChain(ComposedPgf):
    variant: ClassVar[str] = "PolynomialChain"
    coeffs: tuple
    window: Window = (1, 0)

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(poly.trim([as_number(c) for c in self.coeffs])))

    @property
    def is_exact(self):
        return is_exact(*self.coeffs)

    def _eval(self, z):
        return poly.evaluate(self.coeffs, z)

    def mean(self):
        return poly.derivative_at_one(self.coeffs)

    def pmf(self, jmax):
        zero = 0 * self.coeffs[0]
        return [self.coeffs[j] if j < len(self.coeffs) else zero for j in range(jmax + 1)]

    def identity(self, n):
        return PolynomialChain((Fraction(0), Fraction(1)), (n, n))

    def _concat(self, inner):
        return PolynomialChain(tuple(poly.compose(self.coeffs, inner.coeffs)), (self.window[0], inner.window[1]))

    def params(self):
        return {"coeffs": self.coeffs}


def single(m: Mechanism, step: int = 1) -> ComposedPgf:
    """The one-step chain f_step, window (step, step - 1)."""
    w = (step, step - 1)
    if isinstance(m, Affine):
        return AffineChain(m.a, w)
    if isinstance(m, LinearFractional):
        return LFChain(m.a, m.b, w)
    if isinstance(m, ThetaGeneral):
        return ThetaChain(m.theta, m.zc, m.a, m.b, w)
    if isinstance(m, SibuyaMixture):
        return SibuyaChain(m.lam, m.a, w)
    if isinstance(m, QuadraticStep):
        if m.n != step - 1:
            raise UnsupportedCombinationError(f"QuadraticStep with n={m.n} cannot sit at step {step}")
        return QuadraticChain(m.a, m.b, step, step - 1)
    if isinstance(m, FiniteSupport):
        return PolynomialChain(m.p, w)
    raise UnsupportedCombinationError(f"no closed form for {type(m).__name__}")


def concatenate(outer: ComposedPgf, inner: ComposedPgf) -> ComposedPgf:
    """Phi_{n1,n3} = Phi_{n1,n2} o Phi_{n2,n3}."""
    if type(outer) is not type(inner):
        raise UnsupportedCombinationError(f"cannot concatenate {outer.variant} with {inner.variant}")
    if outer.window[1] != inner.window[0]:
        raise WindowMismatchError(f"outer window {outer.window} does not meet inner window {inner.window}")
    return outer._concat(inner)


def compose_chain(mechs: Sequence[Mechanism], window: Optional[Window] = None) -> ComposedPgf:
    """Closed form of f_{n1} o ... o f_{n2+1}; ``mechs[0]`` is step n2 + 1."""
    mechs = list(mechs)
    if not mechs:
        raise ValueError("compose_chain needs at least one mechanism")
    if window is None:
        window = (len(mechs), 0)
    n1, n2 = window
    if not (0 <= n2 < n1) or n1 - n2 != len(mechs):
        raise WindowMismatchError(f"window {window} does not match {len(mechs)} mechanisms")
    kinds = {type(m) for m in mechs}
    if len(kinds) > 1:
        names = sorted(k.__name__ for k in kinds)
        raise UnsupportedCombinationError(f"mixed families have no closed form: {names}")
    chain = single(mechs[0], n2 + 1)
    for i, m in enumerate(mechs[1:], start=n2 + 2):
        chain = concatenate(single(m, i), chain)
    return chain


def eval_chain(c: ComposedPgf, z):
    return c(z)


def empty_prob(c: ComposedPgf):
    """P(K = 0) = phi(0); never 1 for a finite chain of valid mechanisms."""
    return c.empty_prob()


def pmf_chain(c: ComposedPgf, jmax: int) -> list:
    return c.pmf(jmax)


def chain_mean(c: ComposedPgf) -> Number:
    """phi'(1) from the variant's closed form."""
    return c.mean()


def mean_chain(mechs: Sequence[Mechanism]) -> Number:
    """E(K*_N) = product of the step means; inf when any step has infinite mean."""
    out: Number = Fraction(1)
    for m in mechs:
        mu = m.mean()
        if mu == math.inf:
            return math.inf
        out = out * mu
    return out


class Criticality(str, enum.Enum):
    SUBCRITICAL = "Subcritical"
    CRITICAL = "Critical"
    SUPERCRITICAL = "Supercritical"
    STRONGLY_SUPERCRITICAL = "StronglySupercritical"


@dataclass(frozen=True)
class CriticalityReport:
    cls: Criticality
    mu: float
    trajectory: tuple[float, ...]
    mu_source: str = "trajectory"

    def to_dict(self):
        return {"class": self.cls.value, "mu": self.mu, "mu_source": self.mu_source,
                "trajectory": list(self.trajectory)}


def log_mean_trajectory(mechs: Sequence[Mechanism]) -> list[float]:
    """log E(K*_N) for N = 1..len(mechs); +inf once a step has infinite mean."""
    out, acc = [], 0.0
    for m in mechs:
        mu = m.mean()
        acc = math.inf if (mu == math.inf or acc == math.inf) else acc + log_of(mu)
        out.append(acc)
    return out


def classify(schedule: Union[MechanismSchedule, Sequence[Mechanism]], horizon: int) -> CriticalityReport:
    """Criticality from E(K*_N)^(1/N).

    When ``schedule`` is a ``MechanismSchedule`` whose limiting step mean is
    known, that limit is mu; otherwise mu is the trajectory value at the
    horizon, compared with 1 at tolerance ``CRITICALITY_TOL``.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if isinstance(schedule, MechanismSchedule):
        mechs = schedule.mechanisms(horizon)
        limit = schedule.limit_mean()
    else:
        mechs = list(schedule)[:horizon]
        limit = None
    logs = log_mean_trajectory(mechs)
    traj = tuple(math.inf if L == math.inf else math.exp(L / n) for n, L in enumerate(logs, start=1))
    if any(L == math.inf for L in logs):
        return CriticalityReport(Criticality.STRONGLY_SUPERCRITICAL, math.inf, traj, "infinite step mean")
    if limit is not None and limit == math.inf:
        return CriticalityReport(Criticality.STRONGLY_SUPERCRITICAL, math.inf, traj, "schedule limit")
    if limit is not None:
        mu, source = limit, "schedule limit"
    else:
        mu, source = traj[-1], "trajectory"
    if isinstance(mu, Fraction):
        cls = (Criticality.CRITICAL if mu == 1 else
               Criticality.SUBCRITICAL if mu < 1 else Criticality.SUPERCRITICAL)
    elif abs(mu - 1) <= CRITICALITY_TOL:
        cls = Criticality.CRITICAL
    else:
        cls = Criticality.SUBCRITICAL if mu < 1 else Criticality.SUPERCRITICAL
    return CriticalityReport(cls, float(mu), traj, source)


def chain_from_dict(d: dict) -> ComposedPgf:
    from .exact import from_literal

    v, p, w = d["variant"], d["params"], tuple(d.get("window", (1, 0)))
    if v == "AffineChain":
        return AffineChain(from_literal(p["A"]), w)
    if v == "LFChain":
        return LFChain(from_literal(p["A"]), from_literal(p["B"]), w)
    if v == "ThetaChain":
        return ThetaChain(float(p["theta"]), float(p["zc"]), float(p["A"]), float(p["B"]), w)
    if v == "SibuyaChain":
        return SibuyaChain(from_literal(p["Lam"]), from_literal(p["A"]), w)
    if v == "QuadraticChain":
        return QuadraticChain(from_literal(p["a"]), from_literal(p["b"]), w[0], w[1])
    if v == "PolynomialChain":
        return PolynomialChain(tuple(from_literal(x) for x in p["coeffs"]), w)
    raise ValueError(f"unknown variant {v!r}")
