import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tanglab.bernstein import (
    FAMILIES,
    AssumptionWitness,
    DomainError,
    certify,
    check_A6,
    check_Hup,
    check_structure,
    finite_difference_prime,
    fit_A3,
    fit_lower_scaling,
    log_grid,
    make_family,
    phi_eval,
    phi_prime,
    verify_global_inequalities,
)

# one representative member per family, parameters inside the stated ranges
REPRESENTATIVES = [
    ("stable", dict(alpha=1.0)),
    ("power_mix", dict(alpha=0.5, kappa=0.5)),
    ("relativistic", dict(alpha=1.0, m=1.0)),
    ("stable_sum", dict(alpha=1.5, kappa=0.5)),
    ("stable_log", dict(alpha=1.0, kappa=0.2)),
    ("geometric", dict(alpha=1.0)),
    ("relativistic_geometric", dict(alpha=1.0, m=1.0)),
]


@pytest.fixture(params=REPRESENTATIVES, ids=[r[0] for r in REPRESENTATIVES])
def family(request):
    name, params = request.param
    return make_family(name, **params)


def test_registry_has_seven_families():
    assert len(FAMILIES) == 7
    assert {r[0] for r in REPRESENTATIVES} == set(FAMILIES)


def test_phi_examples():
    assert phi_eval(make_family("stable", 1.0), 4.0) == 2.0
    assert phi_eval(make_family("stable_sum", 1.0, kappa=0.5), 1.0) == 2.0
    geo = make_family("geometric", 1.0)
    assert phi_eval(geo, 1e-300) < 1e-149


def test_phi_prime_examples():
    assert phi_prime(make_family("stable", 1.0), 4.0) == pytest.approx(0.25, rel=1e-15)
    # d/dlam log(1 + lam^(1/2)) = (1/2) lam^(-1/2) / (1 + lam^(1/2)) -> 1/4 at lam = 1
    assert phi_prime(make_family("geometric", 1.0), 1.0) == pytest.approx(0.25, rel=1e-15)


def test_domain_errors():
    f = make_family("stable", 1.0)
    with pytest.raises(DomainError):
        phi_eval(f, 0.0)
    with pytest.raises(DomainError):
        phi_eval(f, np.array([1.0, -1.0]))
    with pytest.raises(DomainError):
        make_family("stable", 2.0)
    with pytest.raises(DomainError):
        make_family("stable_sum", 1.0, kappa=0.0)  # phi(0+) = 1
    with pytest.raises(DomainError):
        make_family("stable_log", 1.0, kappa=0.6)
    with pytest.raises(DomainError):
        make_family("relativistic", 1.0, m=0.0)
    with pytest.raises(DomainError):
        make_family("nope", 1.0)


def test_finite_difference_matches_closed_form(family):
    lam = log_grid(1e-3, 1e3, 50)
    fd = finite_difference_prime(family, lam)
    np.testing.assert_allclose(fd, family.prime(lam), rtol=1e-6)


def test_finite_difference_fallback_used_without_closed_form():
    f = make_family("geometric", 1.0)
    g = type(f)(f.family, f.params, f._phi, None, None)
    lam = log_grid(1e-3, 1e3, 20)
    np.testing.assert_allclose(g.prime(lam), f.prime(lam), rtol=1e-6)
    np.testing.assert_allclose(g.second(lam), f.second(lam), rtol=1e-4)


def test_second_derivative_against_finite_difference(family):
    lam = log_grid(1e-3, 1e3, 20)
    h = lam * 1e-5
    fd = (family.prime(lam + h) - family.prime(lam - h)) / (2 * h)
    np.testing.assert_allclose(family.second(lam), fd, rtol=1e-5)


def test_structure_all_families(family):
    rep = check_structure(family)
    assert rep.holds, rep.checks


def test_global_inequalities_all_families(family):
    rep = verify_global_inequalities(family, log_grid(1e-6, 1e6, 40), log_grid(1, 1e6, 40))
    assert rep.holds, rep.violations[:3]
    assert rep.worst_scaling_slack >= -1e-12
    assert rep.worst_derivative_slack >= -1e-12


def test_global_inequality_examples():
    f = make_family("stable", 1.0)
    assert f(1.0) - 1.0 * f.prime(1.0) == pytest.approx(0.5)
    g = make_family("geometric", 1.0)
    assert g.prime(1.0) == pytest.approx(0.25)
    assert g(1.0) == pytest.approx(math.log(2))


def test_global_inequalities_detect_violation():
    f = make_family("stable", 1.0)
    # phi(lam) = lam^2 is not Bernstein: substitute closed forms
    bad = type(f)("bad", (("alpha", 4.0),), lambda x: x**2, lambda x: 2 * x, lambda x: 2 + 0 * x)
    rep = verify_global_inequalities(bad, log_grid(1e-2, 1e2, 5), log_grid(1, 10, 5))
    assert not rep.holds
    assert {v[0] for v in rep.violations} == {"scaling", "derivative"}


def test_empty_grid_rejected():
    with pytest.raises(ValueError):
        verify_global_inequalities(make_family("stable", 1.0), np.array([]), np.array([1.0]))


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
def test_fit_A3_stable_exact(alpha):
    fit = fit_A3(make_family("stable", alpha))
    assert fit.verdict == "holds"
    assert abs(fit.delta - (1 - alpha / 2)) <= 1e-3
    assert 1.0 <= fit.sigma <= 1.001


def test_fit_A3_geometric_tends_to_one():
    # phi'(lam) ~ (alpha/2)/lam for large lam: the exponent approaches 1
    f = make_family("geometric", 1.0)
    lam = 1e6
    ratio = f.prime(lam * 10) / f.prime(lam)
    assert ratio == pytest.approx(0.1, rel=2e-3)
    assert fit_A3(f, lambda0=1e4, lam_max=1e8).delta >= 0.995
    assert fit_A3(f, lambda0=1.0).delta >= 0.98


def test_fit_A3_stable_sum_bracketed():
    alpha, kappa = 1.5, 0.5
    fit = fit_A3(make_family("stable_sum", alpha, kappa=kappa))
    assert 1 - alpha / 2 - 1e-3 <= fit.delta <= 1 - kappa / 2 + 1e-3


def test_fit_A3_requires_long_t_range():
    with pytest.raises(ValueError):
        fit_A3(make_family("stable", 1.0), t_max=100)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
def test_fit_A4_stable(alpha):
    f = make_family("stable", alpha)
    delta = fit_A3(f).delta
    a4 = fit_lower_scaling(f, "A4", delta, d=2)
    assert a4.verdict == "holds"
    assert abs(a4.delta - (1 - alpha / 2)) <= 1e-3
    assert 0.999 <= a4.sigma <= 1.0
    assert fit_lower_scaling(f, "A4", delta, d=3).verdict == "not-required"


def test_fit_A5_stable():
    # A-5 is needed when delta <= 1/2, i.e. alpha >= 1 for the stable family
    f = make_family("stable", 1.0)
    a5 = fit_lower_scaling(f, "A5", fit_A3(f).delta)
    assert a5.verdict == "holds" and a5.delta == pytest.approx(0.5, abs=1e-3)
    f = make_family("stable", 1.5)
    a5 = fit_lower_scaling(f, "A5", fit_A3(f).delta)
    assert a5.verdict == "holds" and a5.delta == pytest.approx(0.25, abs=1e-3)
    f = make_family("stable", 0.5)
    assert fit_lower_scaling(f, "A5", fit_A3(f).delta).verdict == "not-required"


def test_fit_A5_geometric_not_required():
    f = make_family("geometric", 1.0)
    assert fit_lower_scaling(f, "A5", fit_A3(f).delta).verdict == "not-required"


def test_fit_lower_scaling_bad_tag():
    with pytest.raises(ValueError):
        fit_lower_scaling(make_family("stable", 1.0), "A7", 0.5)


def test_check_A6_examples():
    assert check_A6(make_family("stable", 1.0), 2).converges
    assert check_A6(make_family("stable", 2.0, strict=False), 2).verdict == "diverges"
    # the geometric family needs d > alpha
    assert check_A6(make_family("geometric", 1.0), 2).converges
    assert check_A6(make_family("geometric", 2.0), 2).verdict == "diverges"
    assert check_A6(make_family("geometric", 2.0), 3).converges


def test_check_A6_integral_value():
    # lam^0 / lam^(1/2) on (0, 1) integrates to 2
    res = check_A6(make_family("stable", 1.0), 2, theta=1.0)
    assert res.integral == pytest.approx(2.0, rel=1e-8)
    assert res.exponent == pytest.approx(-0.5, abs=1e-9)
    # d = 3: lam^(1/2) / lam^(1/4) -> 1 / (5/4)
    res = check_A6(make_family("stable", 0.5), 3, theta=1.0)
    assert res.integral == pytest.approx(0.8, rel=1e-8)


@pytest.mark.parametrize("name,params", REPRESENTATIVES)
def test_check_A6_matches_dimension_constraints(name, params):
    f = make_family(name, **params)
    info = FAMILIES[name]
    for d in (2, 3):
        assert check_A6(f, d).converges == info.min_dim_ok(d, params["alpha"])


def test_check_Hup():
    f = make_family("stable", 1.0)
    assert check_Hup(f, 0.0, delta=0.5).c == pytest.approx(1.0, rel=1e-12)
    assert check_Hup(f, 0.3, delta=0.5).c == pytest.approx(1.0, rel=1e-12)
    g = make_family("stable_sum", 1.5, kappa=0.5)
    res = check_Hup(g, 0.01, delta=fit_A3(g).delta)
    assert res.holds and 1.0 <= res.c < 1e6


def test_certify_and_json_roundtrip():
    f = make_family("stable", 1.0)
    w = certify(f, d=2)
    assert w.verdicts["A3"] == "holds"
    assert w.verdicts["A4"] == "holds"
    assert w.verdicts["A5"] == "holds"
    assert w.verdicts["A6"] == "holds"
    assert w.delta0 < 2 * w.delta
    back = AssumptionWitness.from_json(w.to_json())
    assert back == w
    assert json.loads(w.to_json())["grid"]["per_decade"] == 200
    assert back.recheck(f)


def test_witness_recheck_catches_tampering():
    f = make_family("stable", 1.5)
    w = certify(f, d=2)
    w.sigma = 0.5
    assert not w.recheck(f)


@settings(max_examples=60, deadline=None)
@given(
    alpha=st.floats(0.05, 1.95),
    lam=st.floats(1e-6, 1e6),
    t=st.floats(1.0, 1e6),
)
def test_stable_scaling_property(alpha, lam, t):
    f = make_family("stable", alpha)
    assert f(t * lam) <= t * f(lam) * (1 + 1e-12)
    assert lam * f.prime(lam) <= f(lam) * (1 + 1e-12)


@settings(max_examples=60, deadline=None)
@given(
    alpha=st.floats(0.05, 1.95),
    m=st.floats(0.1, 5.0),
    lam=st.floats(1e-6, 1e6),
    t=st.floats(1.0, 1e4),
)
def test_relativistic_geometric_property(alpha, m, lam, t):
    f = make_family("relativistic_geometric", alpha, m=m)
    assert f(t * lam) <= t * f(lam) * (1 + 1e-12)
    assert lam * f.prime(lam) <= f(lam) * (1 + 1e-12)
    assert f.second(lam) <= 1e-12 * f.prime(lam) / lam
