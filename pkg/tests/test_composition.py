import json
import math
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coalescence.composition import (
    BFL_CONSTANT_TERM,
    AffineChain,
    Criticality,
    LFChain,
    PolynomialChain,
    QuadraticChain,
    SibuyaChain,
    ThetaChain,
    chain_from_dict,
    classify,
    compose_chain,
    concatenate,
    empty_prob,
    eval_chain,
    mean_chain,
    pmf_chain,
)
from coalescence.errors import DomainError, UnsupportedCombinationError, WindowMismatchError
from coalescence.mechanisms import (
    Affine,
    FiniteSupport,
    LinearFractional,
    QuadraticStep,
    SibuyaMixture,
    ThetaGeneral,
    named_schedule,
)

from oracles import compose_all

# -- compose_chain ---------------------------------------------------------


def test_affine_telescoping():
    mechs = [Affine(1 - F(1, n + 1)) for n in range(1, 5)]
    c = compose_chain(mechs)
    assert c == AffineChain(F(1, 5), (4, 0))
    assert empty_prob(c) == F(4, 5)
    assert mean_chain(mechs) == F(1, 5)


def test_lf_recursion():
    c = compose_chain([LinearFractional(2, 1)] * 2)
    assert (c.A, c.B, c.window) == (4, 3, (2, 0))
    assert empty_prob(c) == F(6, 7)
    assert pmf_chain(c, 2) == [F(6, 7), F(1, 7) * F(4, 7), F(1, 7) * F(4, 7) * F(3, 7)]
    assert c.mean() == F(1, 4)


def test_single_step_is_the_mechanism():
    for m in (Affine(F(1, 3)), LinearFractional(F(1, 2), F(4, 5)), QuadraticStep(1, 2),
              FiniteSupport([F(1, 2), 0, F(1, 2)])):
        c = compose_chain([m])
        for z in (F(0), F(1, 3), F(1)):
            assert eval_chain(c, z) == m(z)


def test_lf_telescoped_b():
    sched = named_schedule("homographic", a="1/2", b=3)
    for N in (1, 5, 12):
        c = compose_chain(sched.mechanisms(N))
        assert c.B == 3 * (1 - c.A)


def test_mixed_families_rejected():
    with pytest.raises(UnsupportedCombinationError):
        compose_chain([Affine(F(1, 2)), LinearFractional(2, 1)])


def test_sibuya_chain_value():
    lam_n = 0.5 ** 0.5
    c = compose_chain([SibuyaMixture(0.5, lam_n)] * 2)
    assert c.A == pytest.approx(0.25)
    assert eval_chain(c, 0) == pytest.approx(1 - 0.5 ** 0.75, abs=1e-15)
    assert eval_chain(c, 0) == pytest.approx(0.405396, abs=1e-6)
    direct = SibuyaMixture(0.5, lam_n)(SibuyaMixture(0.5, lam_n)(0.0))
    assert eval_chain(c, 0) == pytest.approx(direct, abs=1e-15)
    assert mean_chain([SibuyaMixture(0.5, 0.5)]) == math.inf


def test_theta_chain_matches_iteration():
    ms = [ThetaGeneral(0.5, 0.8, 0.4), ThetaGeneral(0.5, 1.2, 0.1), ThetaGeneral(0.5, 0.9, 0.3)]
    c = compose_chain(ms)
    assert isinstance(c, ThetaChain)
    for z in (0.0, 0.4, 0.95):
        w = z
        for m in ms:
            w = m(w)
        assert eval_chain(c, z) == pytest.approx(w, abs=1e-13)


def test_eval_domain():
    with pytest.raises(DomainError):
        eval_chain(AffineChain(F(1, 5)), 1.2)


# -- quadratic -------------------------------------------------------------


def test_quadratic_golden():
    c = QuadraticChain(1, 2, 1)
    assert eval_chain(c, 0) == F(2, 7)
    assert pmf_chain(c, 2) == [F(2, 7), F(4, 7), F(1, 7)]
    assert mean_chain([QuadraticStep(1, 2)]) == F(6, 7)
    assert c.mean() == F(6, 7)


@pytest.mark.parametrize("a,b", [(1, 2), (F(3, 2), 1), (2, F(1, 3)), (1, 1)])
@pytest.mark.parametrize("N", [1, 2, 3, 4])
def test_quadratic_closed_forms_against_expansion(a, b, N):
    mechs = [QuadraticStep(a, b, n, allow_degenerate=True) for n in range(N)]
    oracle = compose_all([m.pmf(2) for m in mechs])
    c = QuadraticChain(a, b, N)
    K = 2 ** N
    assert c.pmf(K) == oracle + [0] * (K + 1 - len(oracle))
    assert sum(c.pmf(K)) == 1
    ab, cc = F(a) * b, F(a) * (b + 1)
    assert c.empty_prob() == (ab ** K - ab) / (cc ** K - ab)
    printed_mean = F(a) ** (K - 1) * K * (b + 1) ** (K - 1) / (F(a) ** (K - 1) * (b + 1) ** K - b)
    assert mean_chain(mechs) == c.mean() == printed_mean
    assert BFL_CONSTANT_TERM in c.flags


def test_quadratic_ab_one_is_never_empty():
    for N in range(1, 8):
        assert QuadraticChain(1, 1, N).empty_prob() == 0


def test_quadratic_float_path():
    exact = QuadraticChain(F(3, 2), 1, 6)
    approx = QuadraticChain(1.5, 1.0, 6)
    assert approx.pmf(64) == pytest.approx([float(x) for x in exact.pmf(64)], rel=1e-9, abs=1e-300)
    assert approx.mean() == pytest.approx(float(exact.mean()), rel=1e-12)
    far = QuadraticChain(F(3, 2), 1, 40)
    assert not far.is_exact
    assert far.mean() == pytest.approx(2.0 ** 40 / 2, rel=1e-9)


def test_quadratic_window_concatenation():
    whole = QuadraticChain(1, 2, 4, 0)
    outer, inner = QuadraticChain(1, 2, 4, 2), QuadraticChain(1, 2, 2, 0)
    assert concatenate(outer, inner) == whole
    for z in (F(0), F(1, 3), F(5, 6)):
        assert eval_chain(outer, eval_chain(inner, z)) == eval_chain(whole, z)


# -- concatenation ---------------------------------------------------------


def _split(mechs, cut):
    n = len(mechs)
    outer = compose_chain(mechs[cut:], window=(n, cut))
    inner = compose_chain(mechs[:cut], window=(cut, 0))
    return outer, inner


def test_lf_concatenation_example():
    outer, inner = _split([LinearFractional(2, 1)] * 2, 1)
    assert concatenate(outer, inner) == LFChain(4, 3, (2, 0))


def test_identity_window():
    c = compose_chain([Affine(F(1, 2))] * 3)
    assert concatenate(c, c.identity(0)) == c


def test_window_mismatch():
    a = compose_chain([Affine(F(1, 2))], window=(3, 2))
    b = compose_chain([Affine(F(1, 2))], window=(1, 0))
    with pytest.raises(WindowMismatchError):
        concatenate(a, b)


families = st.sampled_from(["affine", "lf", "poly", "sibuya"])


@st.composite
def chain_and_cut(draw):
    fam = draw(families)
    n = draw(st.integers(2, 4))
    fr = st.fractions(min_value=F(1, 10), max_value=F(9, 10), max_denominator=10)
    if fam == "affine":
        mechs = [Affine(draw(fr)) for _ in range(n)]
    elif fam == "lf":
        mechs = [LinearFractional(draw(fr) + F(1, 2), draw(fr) + F(1, 2)) for _ in range(n)]
    elif fam == "sibuya":
        mechs = [SibuyaMixture(draw(fr), draw(fr)) for _ in range(n)]
    else:
        mechs = []
        for _ in range(n):
            w = draw(st.lists(st.integers(1, 5), min_size=2, max_size=3))
            mechs.append(FiniteSupport([F(x, sum(w)) for x in w]))
    return mechs, draw(st.integers(1, n - 1))


@settings(max_examples=80, deadline=None)
@given(chain_and_cut())
def test_concatenation_identity(case):
    mechs, cut = case
    outer, inner = _split(mechs, cut)
    whole = concatenate(outer, inner)
    direct = compose_chain(mechs)
    for z in [F(k, 10) for k in range(11)]:
        lhs = eval_chain(whole, z)
        rhs = eval_chain(outer, eval_chain(inner, z))
        ref = eval_chain(direct, z)
        if whole.is_exact and isinstance(lhs, F) and isinstance(rhs, F):
            assert lhs == rhs == ref
        else:
            assert abs(float(lhs) - float(rhs)) <= 1e-12
            assert abs(float(lhs) - float(ref)) <= 1e-12


# -- invariants ------------------------------------------------------------


@st.composite
def finite_chain(draw):
    n = draw(st.integers(1, 4))
    mechs = []
    for _ in range(n):
        w = draw(st.lists(st.integers(0, 6), min_size=2, max_size=3))
        w[0] += 1
        w[1] += 1
        mechs.append(FiniteSupport([F(x, sum(w)) for x in w]))
    return mechs


@settings(max_examples=60, deadline=None)
@given(finite_chain())
def test_polynomial_chain_matches_expansion(mechs):
    c = compose_chain(mechs)
    assert isinstance(c, PolynomialChain)
    oracle = compose_all([m.p for m in mechs])
    assert list(c.coeffs) == oracle
    assert all(x >= 0 for x in c.coeffs) and sum(c.coeffs) == 1
    assert eval_chain(c, F(1)) == 1
    assert empty_prob(c) < 1
    assert mean_chain(mechs) == c.mean()


@settings(max_examples=60, deadline=None)
@given(chain_and_cut())
def test_mean_matches_finite_difference(case):
    mechs, _ = case
    c = compose_chain(mechs)
    if not math.isfinite(float(c.mean())):
        return

    def d(h):
        return (1 - eval_chain(c, 1 - h)) / h

    h = F(1, 10**5)
    est = 2 * d(h) - d(2 * h)
    assert abs(float(est) - float(c.mean())) <= 1e-6
    assert empty_prob(c) < 1


def test_pmf_sums_with_tail():
    c = compose_chain([LinearFractional(F(1, 2), F(4, 5))] * 3)
    p = [float(x) for x in c.pmf(400)]
    assert sum(p) == pytest.approx(1.0, abs=1e-12)
    assert min(p) >= 0


# -- criticality -----------------------------------------------------------


def test_classify_examples():
    r = classify(named_schedule("affine", mu="0.9", alpha=1), 200)
    assert r.cls is Criticality.SUBCRITICAL and r.mu == pytest.approx(0.9)
    assert all(t < 0.9 for t in r.trajectory)
    r = classify([LinearFractional(F(1, 2), F(4, 5))] * 10, 10)
    assert r.cls is Criticality.SUPERCRITICAL and r.mu == pytest.approx(2.0)
    r = classify(named_schedule("sibuya", a="0.5", lam="0.5"), 5)
    assert r.cls is Criticality.STRONGLY_SUPERCRITICAL and r.mu == math.inf
    r = classify(named_schedule("affine", mu=1, alpha=1), 50)
    assert r.cls is Criticality.CRITICAL
    r = classify(named_schedule("quadratic", a=1, b=2), 30)
    assert r.cls is Criticality.SUPERCRITICAL and r.mu == 2


def test_classify_without_schedule_uses_trajectory():
    r = classify([Affine(F(1, 2))] * 5, 5)
    assert r.mu_source == "trajectory" and r.mu == pytest.approx(0.5)


# -- serialization ---------------------------------------------------------


@pytest.mark.parametrize(
    "c",
    [
        AffineChain(F(1, 5), (4, 0)),
        LFChain(F(4), F(3), (2, 0)),
        SibuyaChain(F(1, 2), F(1, 4), (2, 0)),
        QuadraticChain(1, 2, 3, 1),
        PolynomialChain((F(1, 4), F(1, 4), F(1, 2)), (1, 0)),
    ],
)
def test_chain_json_round_trip(c):
    d = json.loads(json.dumps(c.to_dict()))
    assert set(d) == {"variant", "params", "window"}
    assert chain_from_dict(d) == c


def test_pmf_csv_exactness():
    p = pmf_chain(QuadraticChain(1, 2, 2), 4)
    assert all(isinstance(x, F) for x in p)
    assert np.isclose(sum(float(x) for x in p), 1.0)
