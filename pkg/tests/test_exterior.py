import csv
import math

import numpy as np
import pytest
from scipy import integrate
from scipy.special import beta as beta_fn
from scipy.special import gamma as G

from tanglab.bernstein import DomainError, fit_A3, make_family
from tanglab.exterior import (
    DegenerateRegion,
    ExteriorFunction,
    ball_integral_check,
    boundary_limit,
    boundary_mean,
    export_trace_csv,
    exterior_from_config,
    holder_seminorm,
    lemma31_check,
    oscillation_functionals,
    q_midpoint,
)
from tanglab.geometry import BallDomain, GraphDomain, Profile

HALF = GraphDomain(Profile("flat"), 2)
HALF3 = GraphDomain(Profile("flat"), 3)
BALL = BallDomain(np.zeros(2), 1.0)
XI_BALL = np.array([0.0, -1.0])
# a generic point, away from the symmetry axes
XI_GEN = np.array([math.sin(0.37), -math.cos(0.37)])


def unit_ball_volume(k):
    return math.pi ** (k / 2) / G(k / 2 + 1)


def half_ball_power_mean(d, beta):
    """Mean of |y_d|^beta over the unit half-ball, by slicing along y_d."""
    num = integrate.quad(lambda t: t**beta * unit_ball_volume(d - 1) * (1 - t * t) ** ((d - 1) / 2),
                         0, 1, epsrel=1e-12)[0]
    return num / (unit_ball_volume(d) / 2)


def test_exterior_function_families():
    y = np.array([[0.3, -0.4], [0.0, -2.0]])
    assert np.all(ExteriorFunction("constant", {"value": 3.0})(y) == 3.0)
    p = ExteriorFunction("power", {"cap": 1.0}, beta=0.5)
    np.testing.assert_allclose(p(y), [math.sqrt(0.5), 1.0])
    n = ExteriorFunction("normal_power", {}, beta=0.5)
    np.testing.assert_allclose(n(y), [math.sqrt(0.4), math.sqrt(2.0)])
    m = ExteriorFunction("mollified_indicator", {"normal": np.array([1.0, 0.0]), "width": 0.1})
    assert m(np.array([0.0, -1.0])) == 0.5
    ind = ExteriorFunction("indicator", {"normal": np.array([1.0, 0.0])}, p=2.0, beta=0.5)
    np.testing.assert_array_equal(ind(y), [1.0, 0.0])
    s = exterior_from_config({"family": "singular", "z0": [0.0, -0.5], "p": 2, "beta": 0.5}, d=2)
    assert s.exponent == pytest.approx(0.9 * (2 / 2 - 0.5))
    assert not s.bounded


def test_exterior_function_errors():
    with pytest.raises(DomainError):
        ExteriorFunction("constant", p=1.0)
    with pytest.raises(DomainError):
        ExteriorFunction("singular", {"z0": np.zeros(2), "s": 0.1})
    with pytest.raises(DomainError):
        ExteriorFunction("nope")
    with pytest.raises(DomainError):
        exterior_from_config({"family": "singular", "z0": [0, 0], "p": 2, "beta": 1.5}, d=2)
    with pytest.raises(DomainError):
        exterior_from_config({"family": "singular", "p": 2, "beta": 0.5}, d=2)
    assert exterior_from_config({"family": "indicator", "p": 4}).beta == 0.25


# ------------------------------------------------------------ Holder seminorm

SHIFTS = np.array([[h * math.cos(a), h * math.sin(a)] for h in np.geomspace(1e-3, 0.3, 8)
                   for a in (0.3, 1.9)])
WINDOW = ([-1.0, -1.0], [1.0, 1.0])


def test_holder_constant_zero():
    fit = holder_seminorm(ExteriorFunction("constant", {"value": 2.0}), SHIFTS, WINDOW, n_nodes=4096)
    assert fit.c == 0.0 and not fit.diverges


def test_holder_power_sup_norm():
    for beta in (0.3, 0.7, 1.0):
        f = ExteriorFunction("power", {"cap": 1.0}, p=math.inf, beta=beta)
        fit = holder_seminorm(f, SHIFTS, WINDOW)
        assert 0 < fit.c <= 1.0 + 1e-12
        assert not fit.diverges


def test_holder_singular_finite():
    f = exterior_from_config({"family": "singular", "z0": [0.0, -0.5], "p": 2, "beta": 0.5}, d=2)
    fit = holder_seminorm(f, SHIFTS, WINDOW)
    assert np.isfinite(fit.c) and not fit.diverges


def test_holder_detects_overclaimed_order():
    # an indicator only has order 1/p; declaring beta = 1 blows up as |y| -> 0
    f = ExteriorFunction("indicator", {"normal": np.array([1.0, 0.0])}, p=2.0, beta=1.0)
    fit = holder_seminorm(f, SHIFTS, WINDOW)
    assert fit.diverges
    g = exterior_from_config({"family": "indicator", "normal": [1.0, 0.0], "p": 2})
    assert not holder_seminorm(g, SHIFTS, WINDOW).diverges


# ------------------------------------------------------------ boundary means

def test_mean_of_constant_exact():
    m = boundary_mean(BALL, ExteriorFunction("constant", {"value": 3.0}), XI_BALL, 0.1)
    assert m.value == 3.0 and m.se == 0.0
    assert m.n_accepted >= 90_000


@pytest.mark.parametrize("D,d", [(HALF, 2), (HALF3, 3)])
@pytest.mark.parametrize("beta", [0.3, 0.8])
def test_mean_flat_power_matches_slicing_oracle(D, d, beta):
    f = ExteriorFunction("normal_power", {}, beta=beta)
    oracle = half_ball_power_mean(d, beta)
    for r in (0.2, 0.01):
        m = boundary_mean(D, f, np.zeros(d), r)
        assert m.value / r**beta == pytest.approx(oracle, rel=1e-3)


def test_mean_ball_half_space_indicator():
    f = ExteriorFunction("indicator", {"normal": np.array([1.0, 0.0])}, p=2.0, beta=0.5)
    m = boundary_mean(BALL, f, XI_BALL, 0.05)
    assert abs(m.value - 0.5) <= 3 * m.se + 1e-3


def test_mean_continuous_function_tends_to_value():
    f = ExteriorFunction("mollified_indicator", {"y0": np.array([0.1, -1.0]), "normal": np.array([1.0, 0.0]),
                                                  "width": 0.3})
    target = float(f(XI_BALL))
    m = boundary_mean(BALL, f, XI_BALL, 1e-4)
    assert m.value == pytest.approx(target, abs=1e-4)


def test_mean_preconditions():
    f = ExteriorFunction("constant")
    with pytest.raises(DomainError):
        boundary_mean(BALL, f, XI_BALL, 0.3)
    # a point deep inside has no exterior nearby
    with pytest.raises(DegenerateRegion):
        boundary_mean(BALL, f, np.array([0.0, -0.5]), 0.2)


def test_mean_bounded_by_sup():
    f = ExteriorFunction("power", {"y0": np.array([0.3, -1.2]), "cap": 0.7}, beta=0.6)
    for r in (0.2, 0.05):
        assert abs(boundary_mean(BALL, f, XI_GEN, r).value) <= 0.7


def test_boundary_limit_constant():
    bl = boundary_limit(BALL, ExteriorFunction("constant", {"value": 2.5}), XI_GEN, 0.2, 9, n=8192)
    assert bl.limit == 2.5 and bl.diagnostic == 0.0 and bl.cauchy


def test_boundary_limit_flat_power():
    beta = 0.6
    f = ExteriorFunction("normal_power", {}, beta=beta)
    bl = boundary_limit(HALF, f, np.zeros(2), 0.3, 12)
    assert bl.limit == pytest.approx(0.0, abs=2 ** (-12 * beta) * 1.1)
    diffs = np.abs(np.diff(bl.means))
    slope = np.polyfit(np.arange(len(diffs)), np.log2(diffs), 1)[0]
    assert slope == pytest.approx(-beta, abs=1e-6)
    assert bl.cauchy and np.isfinite(bl.diagnostic)


def test_boundary_limit_continuous():
    f = ExteriorFunction("power", {"y0": np.array([0.2, -1.3]), "cap": 5.0}, beta=1.0)
    bl = boundary_limit(BALL, f, XI_BALL, 0.5, 14)
    assert bl.limit == pytest.approx(float(f(XI_BALL)), abs=2e-4)
    assert bl.cauchy


def test_boundary_limit_needs_depth():
    with pytest.raises(DomainError):
        boundary_limit(BALL, ExteriorFunction("constant"), XI_BALL, 0.2, 7)


def test_boundary_limit_flags_oscillation():
    # oscillation at every dyadic scale: the means never settle
    class Zigzag(ExteriorFunction):
        def __call__(self, y):
            r = np.linalg.norm(np.atleast_2d(y) - XI_BALL, axis=1)
            return np.sign(np.sin(math.pi * np.log2(r) + 0.25))

    f = Zigzag("constant")
    bl = boundary_limit(BALL, f, XI_BALL, 0.2, 12, n=16384)
    assert not bl.cauchy


# ------------------------------------------------------------ oscillation functionals

def test_oscillation_constant_zero():
    o = oscillation_functionals(BALL, ExteriorFunction("constant"), make_family("stable", 1.0), XI_GEN, 0.1, 0.3)
    assert (o.E, o.F) == (0.0, 0.0)


@pytest.mark.parametrize("phi", [make_family("stable", 1.0), make_family("geometric", 1.0)],
                         ids=["stable", "geometric"])
def test_oscillation_decay_rate(phi):
    beta, gamma = 0.8, 0.3
    f = ExteriorFunction("normal_power", {}, beta=beta)
    radii = 2.0 ** -np.arange(3, 11)
    vals = [oscillation_functionals(HALF, f, phi, np.zeros(2), r, gamma) for r in radii]
    E = np.array([v.E for v in vals])
    F = np.array([v.F for v in vals])
    assert np.all(np.diff(F) < 0)
    slope_F = np.polyfit(np.log(radii), np.log(F), 1)[0]
    assert slope_F == pytest.approx(beta - gamma, rel=0.15)
    if phi.family == "stable":
        slope_E = np.polyfit(np.log(radii), np.log(E), 1)[0]
        assert slope_E == pytest.approx(beta - gamma, rel=0.15)
    assert E[-1] < E[0]


def test_oscillation_grows_when_gamma_exceeds_beta():
    f = ExteriorFunction("normal_power", {}, beta=0.3)
    phi = make_family("stable", 1.0)
    radii = 2.0 ** -np.arange(3, 9)
    F = [oscillation_functionals(HALF, f, phi, np.zeros(2), r, 0.6).F for r in radii]
    assert np.all(np.diff(F) > 0)


# ------------------------------------------------------------ slab integrals

@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
@pytest.mark.parametrize("M", [1.0, 2.0])
def test_slab_flat_stable_oracle(alpha, M):
    phi = make_family("stable", alpha)
    for D, d in ((HALF, 2), (HALF3, 3)):
        omega = unit_ball_volume(d - 1)
        expected = 2 * omega * M ** (1 - alpha / 2) / (1 - alpha / 2)
        for r in (2**-4, 2**-9):
            # the tangential rule is exact here, a coarse one suffices
            chk = lemma31_check(D, phi, np.zeros(d), 0.25, r, q=1.0, M=M, n_tangent=8)
            assert chk.ratio == pytest.approx(expected, rel=1e-9)


def test_slab_gauss_matches_adaptive():
    for phi in (make_family("stable", 1.0), make_family("geometric", 1.0)):
        a = lemma31_check(BALL, phi, XI_GEN, 0.25, 2**-6, q=1.2, method="gauss")
        b = lemma31_check(BALL, phi, XI_GEN, 0.25, 2**-6, q=1.2, method="adaptive")
        assert a.lhs == pytest.approx(b.lhs, rel=1e-6)


def test_q_midpoint():
    assert q_midpoint(0.5) == 1.5
    assert q_midpoint(1.0) == 2.0
    assert q_midpoint(0.99) == 2.0


FAMILIES = [("stable", dict(alpha=1.0)), ("power_mix", dict(alpha=0.5, kappa=0.5)),
            ("relativistic", dict(alpha=1.0, m=1.0)), ("stable_sum", dict(alpha=1.5, kappa=0.5)),
            ("stable_log", dict(alpha=1.0, kappa=0.2)), ("geometric", dict(alpha=1.0)),
            ("relativistic_geometric", dict(alpha=1.0, m=1.0))]


@pytest.mark.parametrize("name,kw", FAMILIES, ids=[f[0] for f in FAMILIES])
def test_slab_ratio_bounded_all_families(name, kw):
    phi = make_family(name, **kw)
    delta = fit_A3(phi).delta
    for q in (1.0, q_midpoint(delta)):
        ratios = [lemma31_check(BALL, phi, XI_GEN, 0.25, 2.0**-k, q=q, delta=delta).ratio
                  for k in range(4, 11)]
        assert np.all(np.isfinite(ratios)) and min(ratios) > 0
        assert max(ratios) / min(ratios) < 10


def test_slab_larger_q_gives_larger_ratio():
    phi = make_family("stable", 1.0)
    lo = lemma31_check(HALF, phi, np.zeros(2), 0.25, 2**-6, q=1.0).ratio
    hi = lemma31_check(HALF, phi, np.zeros(2), 0.25, 2**-6, q=2 - 0.01).ratio
    assert hi > 10 * lo


def test_slab_preconditions():
    phi = make_family("stable", 1.0)
    with pytest.raises(DomainError):
        lemma31_check(BALL, phi, XI_BALL, 0.25, 2**-6, q=2.0)
    with pytest.raises(DomainError):
        lemma31_check(BALL, phi, XI_BALL, 0.3, 2**-6)
    with pytest.raises(DomainError):
        lemma31_check(BALL, phi, XI_BALL, 0.25, 0.2, M=2.0)
    with pytest.raises(DomainError):
        lemma31_check(BALL, phi, XI_BALL, 0.25, 2**-6, q=0.5)


@pytest.mark.parametrize("name,kw", FAMILIES, ids=[f[0] for f in FAMILIES])
def test_ball_integral_ratio_bounded(name, kw):
    phi = make_family(name, **kw)
    ratios = [ball_integral_check(BALL, phi, XI_GEN, 2.0**-k).ratio for k in range(3, 11)]
    assert max(ratios) / min(ratios) < 10


def test_ball_integral_flat_stable_oracle():
    # over B(0, r) the weight |y_d|^(-1/2) integrates to 2 B(1/4, 3/2) r^(3/2)
    phi = make_family("stable", 1.0)
    exact = 2 * beta_fn(0.25, 1.5)
    for r in (2**-3, 2**-7):
        assert ball_integral_check(HALF, phi, np.zeros(2), r).ratio == pytest.approx(exact, rel=1e-7)


def test_trace_csv(tmp_path):
    p = export_trace_csv([(0.5, 1.0, 2.0, 3.0)], tmp_path / "t.csv")
    rows = list(csv.reader(p.open()))
    assert rows[0] == ["r", "E_val", "F_val", "A"] and len(rows) == 2
