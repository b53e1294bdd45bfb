import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from apriori_lab.estimates import (
    THEOREMS,
    EstimateParams,
    GammaBelowThreshold,
    calibrated_c0,
    check_denominator,
    check_main,
    compose_c0,
    denominator_bound,
    gamma_sweep,
    gronwall_oracle,
    ode_comparison,
)
from apriori_lab.norms import CalibrationReport
from apriori_lab.solvers import NormSeries

from oracles import (
    LAYOUT,
    LOWER,
    constant_oracle,
    constant_series,
    growing_besov_series,
    params_for,
    sweep_closed_form,
    wavy_series,
)

# --- parameters ---------------------------------------------------------------


def test_params_validation():
    with pytest.raises(ValueError, match="unknown theorem"):
        EstimateParams("2.1", 1.0, 1.0)
    with pytest.raises(ValueError, match="k >= 3"):
        EstimateParams("1.1i", 1.0, 1.0, k=2)
    with pytest.raises(ValueError, match="p in"):
        EstimateParams("1.2", 1.0, 1.0, p=3.0)
    with pytest.raises(ValueError, match="2/p"):
        EstimateParams("1.3i", 1.0, 1.0, k=2, p=2.0)
    with pytest.raises(ValueError, match="C0"):
        EstimateParams("1.4upper", 1.0, 0.0)
    with pytest.raises(ValueError, match="lower bound"):
        EstimateParams("1.1ii", 1.0, 1.0, direction="upper")
    assert EstimateParams("1.3ii", 1.0, 1.0).direction == "lower"


@pytest.mark.parametrize("th", THEOREMS)
def test_rejects_gamma_below_threshold(th):
    t = np.linspace(0, 0.5, 11)
    series = constant_series(th, t, 1.1)
    probe = params_for(th, 1.0, 0.8)
    g0 = probe.threshold(series)
    with pytest.raises(GammaBelowThreshold) as err:
        check_main(series, params_for(th, 0.9 * g0, 0.8))
    assert err.value.threshold == pytest.approx(g0)
    assert f"{g0:.6g}" in str(err.value)


def test_missing_column_named():
    t = np.linspace(0, 1, 5)
    series = NormSeries(t, {"dkl_3_2": np.ones(5)})
    with pytest.raises(KeyError, match="l2"):
        check_main(series, EstimateParams("1.1i", 2.0, 1.0))


def test_inviscid_only_theorems_reject_viscous_series():
    t = np.linspace(0, 1, 5)
    series = NormSeries(t, {"dkl_3_2": np.ones(5), "l2": np.ones(5)}, {"nu": 0.01})
    with pytest.raises(ValueError, match="inviscid"):
        check_main(series, EstimateParams("1.1ii", 5.0, 1.0))
    check_main(series, EstimateParams("1.1i", 5.0, 1.0))


# --- main estimate --------------------------------------------------------------


@pytest.mark.parametrize("th", THEOREMS)
def test_rhs_equals_lhs_at_origin(th, rng):
    t = np.linspace(0, 0.3, 31)
    series = wavy_series(th, t, rng)
    for c0 in (0.3, 1.0, 2.5):
        g0 = params_for(th, 1.0, c0).threshold(series)
        for factor in (1.0, 1.7, 10.0):
            ms = check_main(series, params_for(th, factor * g0, c0))
            assert abs(ms.rhs[0] - ms.lhs[0]) <= 1e-12 * abs(ms.lhs[0])


@pytest.mark.parametrize("th", THEOREMS)
def test_constant_series_closed_form(th):
    t = np.linspace(0, 0.4, 2001)
    X0, c0 = 1.1, 0.7
    A0 = 0.8 if th.startswith("1.4") else None
    series = constant_series(th, t, X0, A0=A0)
    g0 = params_for(th, 1.0, c0).threshold(series)
    gamma = 2.5 * g0
    rhs, *_ = constant_oracle(th, t, X0, gamma, c0, A0=A0)
    ms = check_main(series, params_for(th, gamma, c0, rtol=1e-8))
    live = np.isfinite(rhs)
    assert np.array_equal(~live, ms.void)
    assert np.max(np.abs(ms.rhs[live] / rhs[live] - 1)) < 1e-8


@pytest.mark.parametrize("th", THEOREMS)
def test_gronwall_reduction(th, rng):
    t = np.linspace(0, 0.5, 101)
    series = wavy_series(th, t, rng)
    c0 = 0.9
    g0 = params_for(th, 1.0, c0).threshold(series)
    params = params_for(th, g0, c0)
    ms = check_main(series, params)
    k, p, tracked, driving, _ = LAYOUT[th]
    sig = params.sigma
    A = series[driving] if driving else series[tracked] ** sig
    from apriori_lab.quadrature import cumulative_integral

    I = cumulative_integral(t, A)
    sg = -1 if th in LOWER else 1
    pure = series[tracked][0] * np.exp(sg * g0 * I / sig)
    assert np.max(np.abs(ms.rhs / pure - 1)) < 1e-10
    if th != "1.4upper":
        den = check_denominator(series, params)
        assert np.max(np.abs(den.lhs - 1)) < 1e-10
        assert np.max(np.abs(den.rhs - 1)) < 1e-10


def test_lower_bound_voids_and_stays_void():
    t = np.linspace(0, 3, 301)
    series = constant_series("1.4lower", t, 1.0, A0=0.1)
    ms = check_main(series, params_for("1.4lower", 50.0, 1.0))
    assert ms.first_void is not None
    start = np.flatnonzero(ms.void)[0]
    assert np.all(ms.void[start:]) and not np.any(ms.void[:start])
    assert np.all(np.isnan(ms.rhs[start:]))
    assert "void" in ms.summary()


def test_margin_semantics():
    t = np.linspace(0, 1, 11)
    up = NormSeries(t, {"grad_linf": 1 + 10 * t, "besov_b0inf1": np.full(11, 0.01)})
    ms = check_main(up, EstimateParams("1.4upper", 1.0, 1.0, rtol=1e-3))
    assert not ms.passed and ms.first_violation is not None
    assert np.array_equal(ms.ok, ms.margin >= -1e-3 * np.abs(ms.rhs))
    assert "FAIL" in ms.summary() and "C0=1" in ms.summary()


def test_margin_csv(tmp_path):
    t = np.linspace(0, 1, 6)
    ms = check_main(constant_series("1.3i", t, 1.0), params_for("1.3i", 3.0, 1.0))
    ms.to_csv(tmp_path / "m.csv")
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == "t,lhs,rhs,margin,ok,void"
    assert len(lines) == 7 and lines[1].endswith(",1,0")


# --- denominator bounds -----------------------------------------------------------


@pytest.mark.parametrize("th", ["1.1i", "1.1ii", "1.2", "1.3i", "1.3ii", "1.4lower"])
def test_denominator_constant_closed_form(th):
    X0, c0 = 1.1, 0.7
    A0 = 1.3 if th.startswith("1.4") else None  # Besov norm dominates the gradient sup
    probe = constant_series(th, np.array([0.0]), X0, A0=A0)
    g0 = params_for(th, 1.0, c0).threshold(probe)
    gamma = 1.8 * g0
    _, _, _, t_star = constant_oracle(th, np.array([0.0]), X0, gamma, c0, A0=A0)
    horizon = 1.5 * t_star if t_star else 2.0
    t = np.linspace(0, horizon, 3001)
    series = constant_series(th, t, X0, A0=A0)
    _, y, bound, t_star = constant_oracle(th, t, X0, gamma, c0, A0=A0)
    den = check_denominator(series, params_for(th, gamma, c0, rtol=1e-8))
    assert np.max(np.abs(den.lhs / y - 1)) < 1e-8
    live = ~den.void
    assert np.max(np.abs(den.rhs[live] / bound[live] - 1)) < 1e-12
    assert den.passed
    if th in LOWER:
        assert den.t_star is None and not den.void.any()
        assert np.all(y >= bound - 1e-12)
    else:
        assert den.t_star == pytest.approx(t_star, rel=1e-10)
        assert np.array_equal(den.void, t >= t_star)
        assert np.all(y[live] <= bound[live] * (1 + 1e-12))


def test_denominator_not_defined_for_14upper():
    t = np.linspace(0, 1, 5)
    with pytest.raises(ValueError, match="no denominator"):
        check_denominator(constant_series("1.4upper", t, 1.0), params_for("1.4upper", 2.0, 1.0))


def test_denominator_bound_direct():
    t = np.array([0.0, 0.25, 0.5, 1.0])
    bound, void, t_star = denominator_bound(t, 3.0, 1.0, 2.0, lower=False)
    assert t_star == 0.5
    assert np.array_equal(void, [False, False, True, True])
    assert bound[1] == pytest.approx(0.5**-2)
    bound, void, t_star = denominator_bound(t, 3.0, 1.0, 2.0, lower=True)
    assert t_star is None and not void.any()
    assert bound[3] == pytest.approx(3.0**-2)


# --- comparison ODE --------------------------------------------------------------


def test_ode_trivial_cases():
    r = ode_comparison(0.0, 0.5, 2.0, 1.0)
    assert np.all(r.closed == 2.0) and np.all(r.numeric == 2.0)
    r = ode_comparison(1.3, 0.5, 0.0, 1.0)
    assert np.all(r.closed == 0.0) and np.all(r.numeric == 0.0)
    with pytest.raises(ValueError):
        ode_comparison(1.0, 0.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        ode_comparison(1.0, 1.0, -1.0, 1.0)


@pytest.mark.parametrize("c", [0.4, 1.7, -0.3])
@pytest.mark.parametrize("lower", [False, True])
def test_ode_closed_form_vs_rk4(c, lower):
    r = ode_comparison(c, 5 / 6, 1.2, 1.0, lower=lower)
    if r.blowup:
        assert r.s[-1] < r.s_blowup and r.max_rel_diff < 1e-5
    else:
        assert r.s[-1] == 1.0 and r.max_rel_diff < 1e-9
    # closed form from the separable solution
    sg = -1 if lower else 1
    expect = 1.2 / (1 + sg * c * (5 / 6) * 1.2 ** (5 / 6) * r.s) ** (6 / 5)
    assert np.allclose(r.closed, expect, rtol=1e-14)


def test_ode_blowup_truncation():
    r = ode_comparison(-2.0, 1.0, 1.0, 1.0)
    assert r.blowup and r.s_blowup == pytest.approx(0.5)
    assert r.s[-1] < 0.5 and np.all(np.isfinite(r.closed))
    assert r.max_rel_diff < 1e-6


# --- Gronwall oracle ---------------------------------------------------------------


def test_gronwall_oracle_examples():
    t = np.linspace(0, 1, 51)
    series = NormSeries(t, {"dkl_3_2": np.full(51, 2.0), "grad_linf": np.full(51, 0.5)})
    assert np.allclose(gronwall_oracle(series, 3, 1.4), 2.0 * np.exp(1.4 * 0.5 * t), rtol=1e-14)
    zero = NormSeries(t, {"dkl_3_2": np.zeros(51), "grad_linf": np.zeros(51)})
    assert np.all(gronwall_oracle(zero, 3, 1.4) == 0)


def test_gronwall_matches_reduction(rng):
    # with C0 composed from the commutator and interpolation constants, the
    # gamma = threshold bound equals the classical exponential bound once the
    # gradient is replaced by its interpolation estimate
    t = np.linspace(0, 0.5, 101)
    series = wavy_series("1.1i", t, rng)
    c1, c2, k = 1.2, 0.3, 3
    sig = 5 / (2 * k)
    c0 = compose_c0(c1, c2, 3, sig)
    params = EstimateParams("1.1i", 1.0, c0, k)
    g0 = params.threshold(series)
    ms = check_main(series, EstimateParams("1.1i", g0, c0, k))
    F = series["l2"][0] ** (1 - sig)
    gn = c2 * F * series["dkl_3_2"] ** sig
    bound = gronwall_oracle(series, k, 2 * 3 * c1, integrand=gn)
    assert np.max(np.abs(ms.rhs / bound - 1)) < 1e-12


def test_calibrated_c0_checks_reports():
    def rep(kind, c, k=3, p=2.0, dims=3):
        return CalibrationReport(kind, 10, 0, c, {}, k=k, p=p, dims=dims, history=[c])

    reports = {"C1": rep("C1", 1.0), "C2": rep("C2", 0.1), "C_CZ": rep("C_CZ", 1.05, None, None, 2)}
    assert calibrated_c0("1.1i", reports) == pytest.approx(5 / 6 * 6 * 0.1)
    assert calibrated_c0("1.4lower", reports) == 1.05
    with pytest.raises(ValueError, match="dims"):
        calibrated_c0("1.3i", reports)
    with pytest.raises(ValueError, match="1.2"):
        calibrated_c0("1.2", reports)


# --- gamma sweep -------------------------------------------------------------------


def test_sweep_matches_scan_oracle():
    t = np.linspace(0, 1, 2001)
    gammas = np.linspace(1.0, 20.0, 96)
    with np.errstate(divide="ignore"):
        table = gamma_sweep(growing_besov_series(t), "1.4upper", gammas, c0=1.0)
    opt = minimize_scalar(lambda g: sweep_closed_form(g, 1.0), bounds=(1.0, 20.0), method="bounded", options={"xatol": 1e-10})
    cell = gammas[1] - gammas[0]
    assert 1.0 < opt.x < 20.0
    assert abs(table.tightest_gamma[-1] - opt.x) <= cell
    assert table.improves
    assert np.allclose(table.rhs[:, -1], sweep_closed_form(table.gammas, 1.0), rtol=1e-6)


def test_sweep_examples(rng):
    t = np.linspace(0, 0.5, 51)
    series = wavy_series("1.3i", t, rng)
    g0 = params_for("1.3i", 1.0, 0.5).threshold(series)
    single = gamma_sweep(series, "1.3i", [g0], 0.5)
    reduction = check_main(series, params_for("1.3i", g0, 0.5))
    assert np.array_equal(single.rhs[0], reduction.rhs)
    assert not single.improves
    table = gamma_sweep(series, "1.3i", g0 * np.array([1.0, 1.5, 3.0]), 0.5)
    assert np.allclose(table.rhs[:, 0], series["dkl_3_2"][0], rtol=1e-15)
    with pytest.warns(UserWarning, match="dropped 1"):
        table = gamma_sweep(series, "1.3i", g0 * np.array([0.5, 1.0, 2.0]), 0.5)
    assert table.dropped == 1 and table.gammas.size == 2
    with pytest.raises(ValueError, match="no admissible"):
        gamma_sweep(series, "1.3i", [0.1 * g0], 0.5)


def test_sweep_csv(tmp_path):
    t = np.linspace(0, 0.5, 4)
    table = gamma_sweep(constant_series("1.1i", t, 1.0), "1.1i", [2.0, 3.0], 1.0)
    table.to_csv(tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "gamma,t,rhs,tightest_flag"
    assert len(lines) == 1 + 2 * 4
    flags = np.loadtxt(tmp_path / "s.csv", delimiter=",", skiprows=1)[:, 3]
    assert flags.sum() == 4
