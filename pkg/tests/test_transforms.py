import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from apriori_lab.quadrature import cumulative_integral
from apriori_lab.solvers import NormSeries
from apriori_lab.transforms import (
    FAMILIES,
    TransformParams,
    driving_norm,
    invariant_report,
    norm_transfer,
    s_of_t,
)

FAMILY_PARAMS = [
    TransformParams("NS-Hk", "+", 0.7, k=3),
    TransformParams("NS-Hk", "-", 0.7, k=4),
    TransformParams("NS-Lp", "+", 0.3, p=4.0),
    TransformParams("NS-Lp", "-", 0.3, p=6.0),
    TransformParams("QG-Wkp", "+", 0.5, k=3, p=2.0),
    TransformParams("QG-Wkp", "-", 0.5, k=2, p=4.0),
    TransformParams("QG-Besov", "+", 0.4, lam=0.5),
    TransformParams("QG-Besov", "-", 0.4, lam=2.0),
]


def synthetic_series(t, values: dict[str, np.ndarray | float]) -> NormSeries:
    cols = {k: np.broadcast_to(np.asarray(v, dtype=float), t.shape).copy() for k, v in values.items()}
    return NormSeries(t, cols)


def all_columns(t, fn):
    names = ["l2", "lp_3", "lp_4", "lp_6", "lp_inf", "dkl_3_2", "dkl_4_2", "dkl_2_4", "grad_linf", "besov_b0inf1"]
    return synthetic_series(t, {n: fn(i, t) for i, n in enumerate(names)})


def test_driving_exponents():
    assert TransformParams("NS-Hk", k=3).driving_exponent == pytest.approx(5 / 6)
    assert TransformParams("NS-Lp", p=4.0).driving_exponent == 8.0
    assert TransformParams("QG-Besov").driving_exponent == 1.0
    assert TransformParams("QG-Wkp", k=3, p=2.0).driving_exponent == pytest.approx(2 / 3)
    t = np.linspace(0, 1, 5)
    s = synthetic_series(t, {"dkl_3_2": 2.0, "lp_4": 1.5, "besov_b0inf1": 3.0})
    assert np.allclose(driving_norm(s, TransformParams("NS-Hk", k=3)), 2.0 ** (5 / 6), rtol=1e-15)
    assert np.allclose(driving_norm(s, TransformParams("NS-Lp", p=4.0)), 1.5**8, rtol=1e-15)
    assert np.allclose(driving_norm(s, TransformParams("QG-Besov")), 3.0, rtol=1e-15)


def test_driving_norm_missing_column():
    s = synthetic_series(np.linspace(0, 1, 3), {"l2": 1.0})
    with pytest.raises(KeyError, match="dkl_3_2"):
        driving_norm(s, TransformParams("NS-Hk"))


def test_params_validation():
    with pytest.raises(ValueError, match="family"):
        TransformParams("Euler")
    with pytest.raises(ValueError, match="k >= 3"):
        TransformParams("NS-Hk", k=2)
    for p in (3.0, 2.0, math.inf):
        with pytest.raises(ValueError, match="NS-Lp"):
            TransformParams("NS-Lp", p=p)
    with pytest.raises(ValueError, match="2/p"):
        TransformParams("QG-Wkp", k=2, p=2.0)
    with pytest.raises(ValueError, match="lambda"):
        TransformParams("QG-Besov", lam=-1.0)
    with pytest.raises(ValueError, match="gamma"):
        TransformParams("NS-Hk", gamma=0.0)
    with pytest.raises(ValueError, match="sign"):
        TransformParams("NS-Hk", sign="*")


def test_invariant_exponents():
    assert TransformParams("NS-Hk").invariant_exponent == pytest.approx(2.0)
    assert TransformParams("NS-Lp", p=5.0).invariant_exponent == pytest.approx(3.0)
    assert TransformParams("QG-Wkp", k=3, p=4.0).invariant_exponent == pytest.approx(4.0)
    assert TransformParams("QG-Besov", lam=1.0).invariant_exponent == pytest.approx(2.0)
    assert TransformParams("QG-Besov", lam=0.0).invariant_exponent == math.inf
    assert TransformParams("QG-Besov", lam=-0.5).invariant_exponent is None


@pytest.mark.parametrize("params", FAMILY_PARAMS, ids=lambda p: f"{p.family}{p.sign}")
def test_invariant_transfer_factor_exact(params):
    q = params.invariant_exponent
    assert abs(params.transfer_exponent(0, q)) <= 1e-15 * params.gamma
    # driving norm of the new field carries exp(-+gamma I)
    m_q = {"NS-Hk": (params.k, 2.0), "NS-Lp": (0, params.p), "QG-Wkp": (params.k, params.p), "QG-Besov": (1, math.inf)}[params.family]
    assert params.driving_exponent * params.transfer_exponent(*m_q) == pytest.approx(-params.gamma, rel=1e-14)


# --- s(t) ------------------------------------------------------------------------


@pytest.mark.parametrize("method", ["spline", "trapezoid"])
def test_s_zero_driving(method):
    t = np.linspace(0, 2, 17)
    s, I = s_of_t(t, np.zeros_like(t), 0.9, "+", method)
    assert np.array_equal(I, np.zeros_like(t))
    assert np.allclose(s, t, rtol=0, atol=1e-15)


def test_s_constant_closed_form():
    A0, gamma = 1.3, 0.8
    for sign in ("+", "-"):
        sg = 1 if sign == "+" else -1
        errs = []
        for m in (51, 101):
            t = np.linspace(0, 1, m)
            s, I = s_of_t(t, np.full(m, A0), gamma, sign)
            assert np.allclose(I, A0 * t, rtol=1e-13, atol=1e-15)
            exact = (np.exp(sg * gamma * A0 * t) - 1) / (sg * gamma * A0)
            errs.append(np.max(np.abs(s - exact) / np.maximum(exact, 1e-300)))
        assert errs[1] < 1e-7
        assert errs[0] / errs[1] > 10


def test_s_random_driving_refinement(rng):
    for _ in range(3):
        amps = rng.uniform(-0.4, 0.4, 3)
        freqs = rng.uniform(1, 4, 3)

        def A(t):
            return 1.0 + sum(a * np.sin(f * t) for a, f in zip(amps, freqs))

        coarse = np.linspace(0, 1, 201)
        fine = np.linspace(0, 1, 2001)
        s_c, _ = s_of_t(coarse, A(coarse), 0.7, "+")
        s_f, _ = s_of_t(fine, A(fine), 0.7, "+")
        assert np.max(np.abs(s_c[1:] - s_f[::10][1:]) / s_f[::10][1:]) < 1e-8
        # independent adaptive quadrature of the nested integral at t = 1
        def inner(tau):
            return quad(A, 0, tau, epsabs=1e-13, epsrel=1e-13)[0]

        ref = quad(lambda tau: math.exp(0.7 * inner(tau)), 0, 1, epsabs=1e-13, epsrel=1e-13)[0]
        assert s_c[-1] == pytest.approx(ref, rel=1e-8)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), gamma=st.floats(0.01, 3))
def test_s_bounds(seed, gamma):
    rng = np.random.default_rng(seed)
    t = np.sort(rng.uniform(0, 2, 40))
    t = np.concatenate([[0.0], t[t > 0]])
    t = np.unique(t)
    A = rng.uniform(0, 2, t.size)
    for method in ("spline", "trapezoid"):
        s_plus, _ = s_of_t(t, A, gamma, "+", method)
        s_minus, _ = s_of_t(t, A, gamma, "-", method)
        assert s_plus[0] == s_minus[0] == 0
        assert np.all(np.diff(s_plus) > 0) and np.all(np.diff(s_minus) > 0)
        assert np.all(s_plus >= t - 1e-12) and np.all(s_minus <= t + 1e-12)


def test_s_rejects_bad_driving():
    t = np.linspace(0, 1, 5)
    with pytest.raises(ValueError):
        s_of_t(t, np.array([1.0, -1.0, 1.0, 1.0, 1.0]), 1.0)
    with pytest.raises(ValueError):
        s_of_t(t, np.array([1.0, np.nan, 1.0, 1.0, 1.0]), 1.0)


def test_quadrature_edge_cases():
    assert np.array_equal(cumulative_integral(np.array([0.0]), np.array([3.0])), [0.0])
    t = np.array([0.0, 0.5, 1.0])
    assert np.allclose(cumulative_integral(t, 2 * t), [0.0, 0.25, 1.0])
    t = np.linspace(0, 1, 9)
    assert cumulative_integral(t, t**3)[-1] == pytest.approx(0.25, rel=1e-14)
    with pytest.raises(ValueError):
        cumulative_integral(t, t, "simpson")


# --- norm transfer ----------------------------------------------------------------


@pytest.mark.parametrize("params", FAMILY_PARAMS, ids=lambda p: f"{p.family}{p.sign}")
def test_transfer_identities(params, rng):
    t = np.linspace(0, 1, 41)
    series = all_columns(t, lambda i, t: 1 + 0.3 * np.sin((i + 1) * t) ** 2)
    ts = norm_transfer(series, params)
    assert ts.s[0] == 0 and ts.E[0] == 1 and ts.L[0] == 1
    assert np.all(np.diff(ts.s) > 0)
    d = params.dims
    for name, col in ts.columns.items():
        m, q = params.column_scaling(name)
        dq = 0.0 if math.isinf(q) else d / q
        expect = series[name] / ts.E * ts.L ** (dq - m)
        assert np.allclose(col, expect, rtol=1e-12, atol=0)
    q = params.invariant_exponent
    inv = {2.0: "l2", 3.0: "lp_3", 4.0: "lp_4", 6.0: "lp_6", math.inf: "lp_inf"}.get(q)
    if inv:
        assert np.max(np.abs(ts.columns[inv] / series[inv] - 1)) <= 1e-12


def test_named_invariants():
    t = np.linspace(0, 1, 21)
    series = all_columns(t, lambda i, t: 2 + np.cos(t + i))
    for params, col in [
        (TransformParams("NS-Hk", "+", 1.1), "l2"),
        (TransformParams("NS-Lp", "-", 0.2, p=4.0), "lp_3"),
        (TransformParams("QG-Wkp", "+", 0.6, k=2, p=4.0), "lp_4"),
        (TransformParams("QG-Wkp", "-", 0.6, k=3, p=2.0), "l2"),
    ]:
        ts = norm_transfer(series, params)
        assert np.max(np.abs(ts.columns[col] / series[col] - 1)) <= 1e-12


def test_sign_flip_reciprocal():
    t = np.linspace(0, 1, 21)
    series = all_columns(t, lambda i, t: 1 + 0.1 * t * i)
    for fam in FAMILIES:
        p = 4.0 if fam == "NS-Lp" else 2.0
        plus = norm_transfer(series, TransformParams(fam, "+", 0.5, p=p))
        minus = norm_transfer(series, TransformParams(fam, "-", 0.5, p=p))
        assert np.allclose(plus.E * minus.E, 1.0, rtol=1e-14)
        assert np.allclose(plus.L * minus.L, 1.0, rtol=1e-14)


def test_transformed_csv(tmp_path):
    t = np.linspace(0, 1, 6)
    series = synthetic_series(t, {"l2": 1.0, "dkl_3_2": 2.0, "dissipation": 0.1})
    ts = norm_transfer(series, TransformParams("NS-Hk", "-", 0.3))
    ts.to_csv(tmp_path / "x.csv")
    lines = (tmp_path / "x.csv").read_text().splitlines()
    assert lines[0] == "t,s,E,L,l2,dkl_3_2"
    data = np.loadtxt(tmp_path / "x.csv", delimiter=",", skiprows=1)
    assert np.array_equal(data[:, 1], ts.s)


# --- invariant report -----------------------------------------------------------


@pytest.mark.parametrize("params", FAMILY_PARAMS, ids=lambda p: f"{p.family}{p.sign}")
def test_invariant_constant_series_closed_form(params):
    t = np.linspace(0, 1, 201)
    series = all_columns(t, lambda i, t: 1.5 + 0 * t)
    rep = invariant_report(series, params)
    A0 = float(driving_norm(series, params)[0])
    assert rep.lhs[0] == 0 and rep.rhs[0] == 0
    assert np.allclose(rep.lhs, A0 * t, rtol=1e-13, atol=1e-15)
    assert np.max(rep.rel_err[1:]) < 1e-6
    assert rep.passed
    assert params.family in rep.summary()


def test_invariant_variable_series_converges():
    errs = []
    for m in (41, 81):
        t = np.linspace(0, 1, m)
        series = all_columns(t, lambda i, t: 1 + 0.5 * np.sin(2 * t + i))
        errs.append(invariant_report(series, TransformParams("QG-Wkp", "+", 0.8, k=3, p=2.0)).max_rel_err)
    assert errs[1] < 1e-6
    assert errs[0] / errs[1] > 10


def test_invariant_single_sample():
    series = all_columns(np.array([0.0]), lambda i, t: 1.0 + 0 * t)
    rep = invariant_report(series, TransformParams("NS-Hk"))
    assert rep.passed and rep.max_rel_err == 0


def test_invariant_no_scale_invariant_norm():
    t = np.linspace(0, 1, 11)
    rep = invariant_report(all_columns(t, lambda i, t: 1 + t), TransformParams("QG-Besov", lam=-0.5))
    assert rep.invariant_q is None and rep.factor is None
    assert "none" in rep.summary()
