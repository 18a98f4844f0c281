import csv
import io
import math
from fractions import Fraction as F

import pytest
import scipy.special

from coalescence.analytics import (
    FLAG_DEGENERATE,
    FLAG_EMPIRICAL_FIT,
    FLAG_NOT_PGF,
    FLAG_PRINTED_RATE,
    bfl_printed,
    limit_report,
    mu_trajectory,
    product_constant,
    quadratic_mean_printed,
    sibuya_empty_prob,
    zeta,
)
from coalescence.composition import QuadraticChain, compose_chain
from coalescence.mechanisms import LinearFractional, MechanismSchedule, Schedule, named_schedule


# -- zeta ------------------------------------------------------------------


def test_zeta_known_values():
    assert abs(zeta(2, 1e-10) - math.pi ** 2 / 6) <= 1e-10
    assert abs(zeta(4, 1e-10) - math.pi ** 4 / 90) <= 1e-10


def test_zeta_self_consistency():
    coarse = zeta(1.5, 1e-8)
    fine = zeta(1.5, 1e-11)
    assert abs(coarse - fine) <= 1e-8
    assert abs(coarse - float(scipy.special.zeta(1.5))) <= 1e-8


def test_zeta_domain():
    for a in (1, 0.5, -2):
        with pytest.raises(ValueError):
            zeta(a)


def test_product_constant():
    assert product_constant(2) == pytest.approx(0.5, abs=1e-9)
    assert product_constant(4) == pytest.approx(math.sinh(math.pi) / (4 * math.pi), abs=1e-9)
    with pytest.raises(ValueError):
        product_constant(1)


# -- trajectories ----------------------------------------------------------


def test_mu_trajectory_lf_constant():
    sched = MechanismSchedule("LinearFractional", {"a": Schedule.constant(F(1, 2)), "b": Schedule.constant(F(4, 5))})
    assert mu_trajectory(sched, 30) == pytest.approx([2.0] * 30, abs=1e-12)


def test_mu_trajectory_affine():
    traj = mu_trajectory(named_schedule("affine", mu="0.9", alpha=1), 1000)
    assert all(t < 0.9 for t in traj)
    assert abs(traj[-1] - 0.9) <= 0.01
    assert traj == sorted(traj)


def test_mu_trajectory_quadratic():
    traj = mu_trajectory(named_schedule("quadratic", a=1, b=1), 200)
    assert abs(traj[199] - 2) <= 0.01
    traj = mu_trajectory(named_schedule("quadratic", a=1, b=2), 400)
    assert abs(traj[-1] - 2) < abs(traj[99] - 2)


def test_mu_trajectory_sibuya_infinite():
    assert mu_trajectory(named_schedule("sibuya", a="0.5", lam="0.5"), 3) == [math.inf] * 3


# -- affine ----------------------------------------------------------------


def test_affine_critical_table():
    r = limit_report("affine", n_max=9, mu=1, alpha=1)
    assert r.column("exact") == [F(1, N + 1) for N in range(1, 10)]
    assert r.column("predicted") == r.column("exact")
    assert r.column("ratio") == pytest.approx([1.0] * 9)
    assert r.rho == 1 and r.flags == ()


def test_affine_subcritical_rate():
    r = limit_report("affine", n_max=12, mu="0.9", alpha=1)
    for row in r.rows:
        assert row.exact == F(9, 10) ** row.N / (row.N + 1)


def test_affine_empty_prob_increasing():
    for params in ({"mu": 1, "alpha": 1}, {"mu": "0.9", "alpha": 2}, {"mu": "0.95", "alpha": "0.5"}):
        surv = limit_report("affine", n_max=30, **params).column("exact")
        empty = [1 - s for s in surv]
        assert all(x < y for x, y in zip(empty, empty[1:]))


def test_affine_alpha_above_one():
    r = limit_report("affine", n_max=200, mu=1, alpha=2)
    assert FLAG_PRINTED_RATE in r.flags
    assert r.rows[-1].ratio == pytest.approx(1.0, abs=0.01)
    assert r.notes["c_alpha"] == pytest.approx(0.5, abs=1e-9)
    # exact product is (N+2)/(2(N+1)); printed rate is (zeta(2)-1)/N
    for row in r.rows[:20]:
        assert row.exact == F(row.N + 2, 2 * (row.N + 1))
        assert row.printed_form == pytest.approx((math.pi ** 2 / 6 - 1) / row.N)


def test_affine_alpha_below_one():
    r = limit_report("affine", n_max=200, mu=1, alpha="0.5")
    assert {FLAG_PRINTED_RATE, FLAG_EMPIRICAL_FIT} <= set(r.flags)
    assert all(abs(x - 1) < 0.01 for x in r.column("ratio")[100:])
    assert r.notes["fit_slope"] == pytest.approx(r.notes["slope_theory"], rel=0.01)


# -- homographic -----------------------------------------------------------


def test_homographic_supercritical():
    r = limit_report("homographic", n_max=50, a="1/2", b=2)
    assert r.rho == F(1, 2)
    last = r.rows[-1]
    assert abs(float(last.exact) - 0.5) <= 1e-6
    assert all(abs(x - 1) < 1e-6 for x in r.column("ratio")[20:])


def test_homographic_telescoped_b_identity():
    sched = named_schedule("homographic", a="1/2", b=3)
    for N in (1, 4, 9, 16):
        c = compose_chain(sched.mechanisms(N))
        assert c.B == 3 * (1 - c.A)
        assert 1 - 1 / (c.A + c.B) == limit_report("homographic", n_max=N, a="1/2", b=3).rows[-1].exact


def test_homographic_subcritical():
    r = limit_report("homographic", n_max=40, a=2, b=-1)
    assert r.rho == 1 and FLAG_NOT_PGF not in r.flags
    assert r.rows[-1].ratio == pytest.approx(1.0, abs=1e-6)
    flagged = limit_report("homographic", n_max=5, a=2, b="1/2")
    assert FLAG_NOT_PGF in flagged.flags


def test_homographic_bad_scale():
    with pytest.raises(ValueError):
        limit_report("homographic", n_max=5, a="1/2", b="1/2")


# -- sibuya ----------------------------------------------------------------


def test_sibuya_table():
    r = limit_report("sibuya", n_max=30, a="0.5", lam="0.5")
    assert r.rho == F(1, 2)
    resid = r.column("exact")
    assert all(x > y for x, y in zip(resid, resid[1:]))
    assert r.rows[-1].ratio == pytest.approx(1.0, abs=1e-6)
    for N in (1, 2, 5):
        p0 = sibuya_empty_prob("0.5", "0.5", None, N)
        assert abs(p0 - 0.5) == pytest.approx(r.rows[N - 1].exact, rel=1e-9)
        assert p0 == pytest.approx(1 - 0.5 ** (1 - 0.5 ** N), rel=1e-12)


# -- quadratic -------------------------------------------------------------


def test_quadratic_rates():
    r = limit_report("quadratic", n_max=8, a=1, b=2)
    assert r.rho == 0
    exact = r.column("exact")
    assert all(x > y for x, y in zip(exact, exact[1:]))
    assert all(0.99 <= x <= 1.01 for x in r.column("ratio")[2:])
    assert exact[2] == F(2 ** 8 - 2, 3 ** 8 - 2)


def test_quadratic_degenerate():
    r = limit_report("quadratic", n_max=5, a=1, b=1)
    assert FLAG_DEGENERATE in r.flags
    assert r.column("exact") == [0] * 5
    assert r.rows[2].predicted == F(1, 256)


def test_printed_quadratic_forms():
    for N in (1, 2, 3, 4):
        c = QuadraticChain(1, 2, N)
        pmf = c.pmf(2 ** N)
        assert quadratic_mean_printed(1, 2, N) == c.mean()
        assert bfl_printed(1, 2, N, 0) != pmf[0]
        assert [bfl_printed(1, 2, N, j) for j in range(1, 2 ** N + 1)] == pmf[1:]
    assert quadratic_mean_printed(1, 2, 4) == F(229582512, 43046719)


# -- export and errors -----------------------------------------------------


def test_unknown_schedule():
    with pytest.raises(ValueError, match="unknown schedule"):
        limit_report("logistic", n_max=3)


def test_csv_export():
    r = limit_report("affine", n_max=3, mu=1, alpha=1)
    rows = list(csv.DictReader(io.StringIO(r.to_csv())))
    assert [row["N"] for row in rows] == ["1", "2", "3"]
    assert {"N", "exact", "predicted", "ratio", "flag"} <= set(rows[0])
    assert rows[2]["exact_rational"] == "1/4"
    d = r.to_dict()
    assert d["rho"] == "1" and len(d["rows"]) == 3


def test_exact_column_is_reproducible_from_chain():
    sched = named_schedule("affine", mu="0.9", alpha=1)
    r = limit_report("affine", n_max=10, mu="0.9", alpha=1)
    for row in r.rows:
        c = compose_chain(sched.mechanisms(row.N))
        assert 1 - c.empty_prob() == row.exact
    lf = compose_chain([LinearFractional(F(1, 2), F(4, 5))] * 3)
    assert lf.mean() == 8
