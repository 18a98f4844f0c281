"""Limiting empty-box probabilities and convergence-rate tables for the named schedules.

Every table row pairs an exact value computed from the composition closed
forms with an asymptotic prediction. Predictions never replace exact
values; where a published asymptotic does not hold, the row carries the
corrected prediction, the printed value and a discrepancy flag.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from .composition import QuadraticChain, compose_chain, log_mean_trajectory
from .exact import exact_str, from_literal, log_of
from .mechanisms import MechanismSchedule, Schedule, named_schedule

SCHEDULES = ("affine", "homographic", "sibuya", "quadratic")

FLAG_PRINTED_RATE = "printed-rate-suspect"
FLAG_EMPIRICAL_FIT = "empirical-fit"
FLAG_NOT_PGF = "not-a-pgf"
FLAG_DEGENERATE = "degenerate-ab-1"

ZETA_MAX_TERMS = 10**8


@dataclass(frozen=True)
class RateRow:
    N: int
    exact: object
    predicted: Optional[object]
    ratio: Optional[float]
    schedule: str
    quantity: str
    flag: str = ""
    printed_form: Optional[float] = None


@dataclass
class RateReport:
    schedule: str
    params: dict
    rho: object
    rate_class: str
    quantity: str
    rows: list[RateRow]
    flags: tuple[str, ...] = ()
    notes: dict = field(default_factory=dict)

    def column(self, name: str) -> list:
        return [getattr(r, name) for r in self.rows]

    def to_csv(self) -> str:
        return rows_to_csv(self.rows)

    def to_dict(self) -> dict:
        return {
            "schedule": self.schedule,
            "params": {k: exact_str(v) if v is not None else None for k, v in self.params.items()},
            "rho": exact_str(self.rho),
            "rate_class": self.rate_class,
            "quantity": self.quantity,
            "flags": list(self.flags),
            "notes": self.notes,
            "rows": [_row_dict(r) for r in self.rows],
        }


def _decimal(x) -> Optional[float]:
    if x is None:
        return None
    if isinstance(x, Fraction):
        try:
            return float(x)
        except OverflowError:
            return math.inf
    return float(x)


def _row_dict(r: RateRow) -> dict:
    return {
        "N": r.N,
        "exact": _decimal(r.exact),
        "exact_rational": str(r.exact) if isinstance(r.exact, Fraction) else None,
        "predicted": _decimal(r.predicted),
        "ratio": r.ratio,
        "flag": r.flag,
        "printed_form": r.printed_form,
    }


def rows_to_csv(rows: list[RateRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["N", "exact", "exact_rational", "predicted", "ratio", "flag", "printed_form"])
    for r in rows:
        d = _row_dict(r)
        w.writerow([d["N"]] + ["" if d[k] is None else (repr(d[k]) if isinstance(d[k], float) else d[k])
                               for k in ("exact", "exact_rational", "predicted", "ratio", "flag", "printed_form")])
    return buf.getvalue()


def _ratio(exact, predicted) -> Optional[float]:
    if predicted is None or predicted == 0 or exact == 0:
        return None
    return math.exp(log_of(exact) - log_of(predicted))


# ---------------------------------------------------------------------------
# special constants


def zeta(alpha: float, tol: float = 1e-12) -> float:
    """Riemann zeta at real alpha > 1 to absolute tolerance ``tol``.

    Sums the first M terms directly and replaces the tail by the midpoint
    integral (M + 1/2)^(1-alpha)/(alpha-1). By convexity the tail estimate
    overshoots by at most alpha M^(-alpha-1)/24; M is chosen so that this
    is a quarter of ``tol``.
    """
    alpha = float(alpha)
    if not alpha > 1:
        raise ValueError(f"zeta needs alpha > 1, got {alpha}")
    if not tol > 0:
        raise ValueError("tol must be positive")
    M = max(16, math.ceil((alpha / (6 * tol)) ** (1 / (alpha + 1))))
    if M > ZETA_MAX_TERMS:
        raise ValueError(f"zeta({alpha}) to tolerance {tol} needs {M} terms")
    n = np.arange(M, 0, -1, dtype=np.float64)
    head = math.fsum(n ** -alpha)
    return head + (M + 0.5) ** (1 - alpha) / (alpha - 1)


def product_constant(alpha: float, terms: int = 10**6) -> float:
    """c_alpha = prod_{m>=2} (1 - m^-alpha) for alpha > 1.

    c_2 = 1/2 and c_4 = sinh(pi)/(4 pi). The tail beyond ``terms`` is
    approximated by its first-order log term.
    """
    alpha = float(alpha)
    if not alpha > 1:
        raise ValueError("the product converges only for alpha > 1")
    m = np.arange(2, terms + 1, dtype=np.float64)
    log_head = math.fsum(np.log1p(-m ** -alpha))
    log_tail = -((terms + 0.5) ** (1 - alpha)) / (alpha - 1)
    return math.exp(log_head + log_tail)


# ---------------------------------------------------------------------------
# mean trajectory


def mu_trajectory(schedule: MechanismSchedule, N_max: int) -> list[float]:
    """E(K*_N)^(1/N) for N = 1..N_max (inf once a step mean is infinite)."""
    logs = log_mean_trajectory(schedule.mechanisms(N_max))
    return [math.inf if L == math.inf else math.exp(L / n) for n, L in enumerate(logs, start=1)]


# ---------------------------------------------------------------------------
# rate tables


def limit_report(name: str, n_max: int = 20, **params) -> RateReport:
    """rho, the rate class and an exact-vs-predicted table for N = 1..n_max."""
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    builders = {"affine": _affine, "homographic": _homographic, "sibuya": _sibuya, "quadratic": _quadratic}
    if name not in builders:
        raise ValueError(f"unknown schedule {name!r}; expected one of {', '.join(SCHEDULES)}")
    p = {k: (v if k == "sign" or v is None else from_literal(v)) for k, v in params.items()}
    return builders[name](n_max, p)


def _affine(n_max, p) -> RateReport:
    mu = p.get("mu", Fraction(1))
    alpha = p.get("alpha", Fraction(1))
    sched = named_schedule("affine", mu=mu, alpha=alpha)
    A, survival = 1, []
    for m in sched.mechanisms(n_max):
        A = A * m.a
        survival.append(A)
    desc = f"affine(mu={exact_str(mu)}, alpha={exact_str(alpha)})"
    rows, flags, notes = [], [], {}
    if alpha == 1:
        rate_class = "mu^N/(N+1)"
        for N, s in enumerate(survival, start=1):
            pred = mu ** N / (N + 1)
            rows.append(RateRow(N, s, pred, _ratio(s, pred), desc, "survival"))
    elif alpha > 1:
        rate_class = "mu^N * c_alpha"
        c = product_constant(alpha)
        z = zeta(alpha, 1e-12)
        notes.update(c_alpha=c, zeta_alpha=z)
        flags.append(FLAG_PRINTED_RATE)
        for N, s in enumerate(survival, start=1):
            pred = float(mu) ** N * c
            printed = float(mu) ** N * (z - 1) / N
            rows.append(RateRow(N, s, pred, _ratio(s, pred), desc, "survival", FLAG_PRINTED_RATE, printed))
    else:
        rate_class = "mu^N * exp(-s (N+1)^(1-alpha) + C)"
        flags += [FLAG_PRINTED_RATE, FLAG_EMPIRICAL_FIT]
        a = float(alpha)
        Ns = np.arange(1, n_max + 1)
        y = np.array([log_of(s) for s in survival]) - Ns * log_of(mu)
        x = (Ns + 1.0) ** (1 - a)
        corr = _affine_higher_order(Ns, a)
        tail = Ns >= max(1, n_max // 2)
        slope, intercept = np.polyfit(x[tail], (y - corr)[tail], 1)
        notes.update(fit_slope=float(slope), fit_intercept=float(intercept),
                     slope_theory=-1 / (1 - a))
        for N, s in enumerate(survival, start=1):
            pred = float(mu) ** N * math.exp(slope * (N + 1) ** (1 - a) + corr[N - 1] + intercept)
            printed = float(mu) ** N * N ** -a / (1 - a)
            rows.append(RateRow(N, s, pred, _ratio(s, pred), desc, "survival",
                                f"{FLAG_PRINTED_RATE};{FLAG_EMPIRICAL_FIT}", printed))
    rho = Fraction(1) if mu <= 1 else None
    return RateReport("affine", {"mu": mu, "alpha": alpha}, rho, rate_class, "survival", rows, tuple(flags), notes)


def _affine_higher_order(Ns: np.ndarray, a: float) -> np.ndarray:
    """Divergent parts of -sum_k k^-1 sum_{m<=N+1} m^(-k a) for k >= 2.

    log prod (1 - m^-a) expands into these power sums; the k = 1 term is
    left to the fit, terms with k a > 1 converge and fold into its constant.
    """
    out = np.zeros(len(Ns))
    x = Ns + 1.0
    k = 2
    while k * a <= 1:
        e = 1 - k * a
        out -= (np.log(x) if e == 0 else x ** e / e) / k
        k += 1
    return out


def _lf_params(a_sched: Schedule, b_scale, n_max):
    """(a_n, b_n) with b_n = b (1 - a_n), straight from the schedule values."""
    a_n = [a_sched.at(n) for n in range(1, n_max + 1)]
    return a_n, [b_scale * (1 - x) for x in a_n]


def _lf_accumulate(a_n, b_n):
    """A*_N, B*_N by the chain recursion A*_n = a_n A*_{n-1}, B*_n = b_n + a_n B*_{n-1}."""
    A, B, out = 1, 0, []
    for a, b in zip(a_n, b_n):
        A, B = a * A, b + a * B
        out.append((A, B))
    return out


def _homographic(n_max, p) -> RateReport:
    a, b = p["a"], p["b"]
    alpha = p.get("alpha", Fraction(2))
    sched = named_schedule("homographic", a=a, b=b, alpha=alpha)
    a_sched = sched.params["a"]
    a_n, b_n = _lf_params(a_sched, b, n_max)
    desc = f"homographic(a={exact_str(a)}, b={exact_str(b)}, alpha={exact_str(alpha)})"
    flags, notes = [], {}
    if a < 1:
        if not b > 1:
            raise ValueError("the supercritical telescoped schedule needs b > 1")
        chain = compose_chain(sched.mechanisms(n_max))
        AB = _lf_accumulate(a_n, b_n)
        assert chain.A == AB[-1][0] and chain.B == AB[-1][1]
        rho = (b - 1) / b
        rows = []
        for N, (A, B) in enumerate(AB, start=1):
            p0 = 1 - 1 / (A + B)
            pred = rho * (1 - A / b)
            rows.append(RateRow(N, p0, pred, _ratio(p0, pred), desc, "empty_prob"))
        return RateReport("homographic", {"a": a, "b": b, "alpha": alpha}, rho,
                          "geometric: rho (1 - A*_N/b)", "empty_prob", rows, (), notes)
    if not b < 1:
        raise ValueError("the subcritical telescoped schedule needs b < 1")
    row_flag = ""
    if b >= 0:
        # b_n = b (1 - a_n) <= 0 once a_n > 1: the closed forms still evaluate
        flags.append(FLAG_NOT_PGF)
        row_flag = FLAG_NOT_PGF
    rows = []
    for N, (A, B) in enumerate(_lf_accumulate(a_n, b_n), start=1):
        surv = 1 / (A + B)
        pred = 1 / ((1 - b) * A)
        rows.append(RateRow(N, surv, pred, _ratio(surv, pred), desc, "survival", row_flag))
    return RateReport("homographic", {"a": a, "b": b, "alpha": alpha}, Fraction(1),
                      "geometric: A*_N^-1/(1-b)", "survival", rows, tuple(flags), notes)


def _sibuya(n_max, p) -> RateReport:
    a, lam = p["a"], p["lam"]
    alpha = p.get("alpha")
    sched = named_schedule("sibuya", a=a, lam=lam, alpha=alpha)
    a_sched = sched.params["a"]
    desc = f"sibuya(a={exact_str(a)}, lam={exact_str(lam)}, alpha={exact_str(alpha) if alpha else 'none'})"
    log_inv_lam = -math.log(float(lam))
    rows, A = [], 1
    for N in range(1, n_max + 1):
        A = A * a_sched.at(N)
        # |P(K*_N = 0) - rho| = lam (lam^(-A*_N) - 1), computed without cancellation
        resid = float(lam) * math.expm1(float(A) * log_inv_lam)
        pred = float(lam) * float(A) * log_inv_lam
        rows.append(RateRow(N, resid, pred, _ratio(resid, pred), desc, "residual"))
    return RateReport("sibuya", {"a": a, "lam": lam, "alpha": alpha}, 1 - lam,
                      "geometric in A*_N (lam^-1 P(K>0) = lam^-A*_N)", "residual", rows)


def sibuya_empty_prob(a, lam, alpha, N) -> float:
    """P(K*_N = 0) from the composed chain, for cross-checking the closed form 1 - lam^(1-A*_N)."""
    return float(compose_chain(named_schedule("sibuya", a=a, lam=lam, alpha=alpha).mechanisms(N)).empty_prob())


def _quadratic(n_max, p) -> RateReport:
    a, b = p["a"], p["b"]
    desc = f"quadratic(a={exact_str(a)}, b={exact_str(b)})"
    degenerate = a * b == 1
    rows = []
    for N in range(1, n_max + 1):
        p0 = QuadraticChain(a, b, N).empty_prob()
        pred = (b / (b + 1)) ** (2 ** N)
        if degenerate:
            rows.append(RateRow(N, p0, pred, None, desc, "empty_prob", FLAG_DEGENERATE))
        else:
            rows.append(RateRow(N, p0, pred, _ratio(p0, pred), desc, "empty_prob"))
    flags = (FLAG_DEGENERATE,) if degenerate else ()
    return RateReport("quadratic", {"a": a, "b": b}, Fraction(0),
                      "double exponential: (b/(b+1))^(2^N)", "empty_prob", rows, flags)


def bfl_printed(a, b, N: int, j: int) -> Fraction:
    """[z^j] phi*_N exactly as the closed binomial display reads, for j = 0..2^N.

    Correct for j >= 1. At j = 0 it drops the -ab correction, so it differs
    from the true empty probability ((ab)^K - ab)/((a(b+1))^K - ab); the
    composition module uses the latter and marks chains with
    ``bfl-constant-term``.
    """
    a, b = from_literal(a), from_literal(b)
    K = 2 ** N
    if not 0 <= j <= K:
        return Fraction(0)
    return a ** (K - 1) * math.comb(K, j) * b ** (K - j) / (a ** (K - 1) * (b + 1) ** K - b)


def quadratic_mean_printed(a, b, N: int) -> Fraction:
    """E(K*_N) from the closed display a^(K-1) K (b+1)^(K-1) / (a^(K-1) (b+1)^K - b), K = 2^N."""
    a, b = from_literal(a), from_literal(b)
    K = 2 ** N
    return a ** (K - 1) * K * (b + 1) ** (K - 1) / (a ** (K - 1) * (b + 1) ** K - b)
