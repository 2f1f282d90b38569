import math

import numpy as np
import pytest
from scipy import integrate, stats
from scipy.special import gamma as G

from tanglab.bernstein import DomainError, make_family
from tanglab.exterior import ExteriorFunction
from tanglab.geometry import ApproachRegion, BallDomain, tangential_curve
from tanglab.kernels import KernelSuite, PoissonEnvelope
from tanglab.montecarlo import (
    HeavyTailWarning,
    _batch_stats,
    MissingDensity,
    RadialBins,
    StepControl,
    SubordinatorStepper,
    block_rng,
    boundary_decay_check,
    estimate_exit_histogram,
    estimate_u_f,
    export_histogram_csv,
    fit_sandwich,
    harmonicity_check,
    load_spool,
    oracle_comparison,
    positive_stable,
    sample_exit,
    sample_subordinator_increment,
    simulate_exits,
    spool_exits,
    stable_ball_kernel,
    stable_ball_shell_mass,
)

BALL = BallDomain(np.zeros(2), 1.0)
ORIGIN = np.zeros(2)
COARSE = StepControl(c_time=0.01)


@pytest.fixture(scope="module")
def cauchy():
    return SubordinatorStepper(make_family("stable", 1.0))


def cauchy_ball_kernel(z):
    """Oracle: d = 2, alpha = 1 ball kernel from the center, written out directly."""
    r2 = z[0] ** 2 + z[1] ** 2
    return 1 / (math.pi**2 * math.sqrt(r2 - 1) * r2)


# ---------------------------------------------------------------- increments

SAMPLED = [
    ("stable", dict(alpha=1.0)),
    ("stable", dict(alpha=0.6)),
    ("stable_sum", dict(alpha=1.5, kappa=0.5)),
    ("power_mix", dict(alpha=0.5, kappa=0.5)),
    ("geometric", dict(alpha=1.0)),
    ("geometric", dict(alpha=2.0)),
    ("relativistic", dict(alpha=1.0, m=1.0)),
    ("relativistic_geometric", dict(alpha=1.2, m=0.5)),
]


@pytest.mark.parametrize("name,kw", SAMPLED)
def test_laplace_identity(name, kw):
    f = make_family(name, **kw)
    st = SubordinatorStepper(f)
    S = st.sample(np.full(10**6, 0.1), block_rng(11, 0))
    assert np.all(S >= 0)
    for lam in (0.5, 1.0, 5.0):
        v = np.exp(-lam * S)
        se = v.std(ddof=1) / math.sqrt(len(v))
        assert abs(v.mean() - math.exp(-0.1 * f(lam))) < 3 * se


def test_positive_stable_half_against_levy_law():
    s = positive_stable(0.5, 200_000, block_rng(3, 0))
    # one-sided 1/2-stable with exponent sqrt(lam) is Levy with scale 1/2
    assert stats.kstest(s, stats.levy(scale=0.5).cdf).pvalue > 0.01
    t = positive_stable(0.3, 100_000, block_rng(3, 1))
    assert abs(np.exp(-t).mean() - math.exp(-1)) < 3 * np.exp(-t).std() / math.sqrt(len(t))


def test_stable_self_similarity():
    st = SubordinatorStepper(make_family("stable", 1.0))
    a = st.sample(np.full(50_000, 0.2), block_rng(5, 0))
    b = st.sample(np.full(50_000, 0.1), block_rng(5, 1)) * 2.0 ** (2 / 1.0)
    assert stats.ks_2samp(a, b).pvalue > 0.01
    q = [0.1, 0.25, 0.5, 0.75]
    np.testing.assert_allclose(np.quantile(a, q), np.quantile(b, q), rtol=0.05)


def test_compound_poisson_constants_for_stable():
    a, eps = 0.5, 1e-4
    st = SubordinatorStepper(make_family("stable", 1.0), eps=eps, method="cp")
    assert st.mode == "cp"
    assert st.tail_rate == pytest.approx(eps**-a / G(1 - a), rel=1e-9)
    assert st.drift == pytest.approx(a * eps ** (1 - a) / ((1 - a) * G(1 - a)), rel=1e-9)


def test_compound_poisson_mean_and_small_dt():
    f = make_family("relativistic", 1.0, m=1.0)
    st = SubordinatorStepper(f)
    # E S_dt = dt phi'(0+) = dt * a * c^(a-1) with c = m^(2/alpha) = 1
    S = st.sample(np.full(400_000, 0.05), block_rng(2, 0))
    assert abs(S.mean() - 0.05 * 0.5) < 3 * S.std() / math.sqrt(len(S))
    big = [np.mean(st.sample(np.full(100_000, dt), block_rng(2, k)) > 1e-3)
           for k, dt in enumerate((1e-1, 1e-2, 1e-3, 1e-4))]
    assert all(x > y for x, y in zip(big, big[1:]))
    assert big[-1] < 0.01


def test_missing_density_errors():
    with pytest.raises(MissingDensity):
        SubordinatorStepper(make_family("stable_log", 1.0, kappa=0.2))
    with pytest.raises(MissingDensity):
        SubordinatorStepper(make_family("geometric", 1.0), method="cp")
    with pytest.raises(MissingDensity):
        SubordinatorStepper(make_family("relativistic", 1.0, m=1.0), method="exact")
    st = SubordinatorStepper(make_family("stable", 1.0))
    with pytest.raises(DomainError):
        st.sample([0.1, 0.0], block_rng(0, 0))
    assert isinstance(sample_subordinator_increment(st, 0.1, block_rng(0, 0)), float)


# ---------------------------------------------------------------- exits

def test_exit_sample_invariants(cauchy):
    s = sample_exit(BALL, ORIGIN, cauchy, n=20_000, seed=4)
    assert s.censored_fraction < 1e-3
    v = s.valid
    assert np.all(~BALL.contains(s.exit_pos[v]))
    assert np.all(BALL.contains(s.pre_pos[v]))
    assert np.all(s.jump_size[v] > 0)
    assert np.all(s.tau[v] > 0) and np.all(s.steps[v] >= 1)
    assert np.all(s.min_delta[v] > 0)


def test_censoring_flag(cauchy):
    s = sample_exit(BALL, ORIGIN, cauchy, StepControl(max_steps=3), n=2000, seed=1)
    assert s.censored.any() and np.all(s.steps[s.censored] == 3)
    with pytest.raises(DomainError):
        sample_exit(BALL, np.array([2.0, 0.0]), cauchy, n=10)


def test_exit_angles_uniform(cauchy):
    s = sample_exit(BALL, ORIGIN, cauchy, COARSE, n=20_000, seed=8)
    ang = np.arctan2(s.exit_pos[:, 1], s.exit_pos[:, 0])
    counts = np.histogram(ang, bins=12, range=(-math.pi, math.pi))[0]
    assert stats.chisquare(counts).pvalue > 0.05


def test_resolution_flag_vanishes_under_refinement(cauchy):
    fr = [sample_exit(BALL, ORIGIN, cauchy, StepControl(c), n=10_000, seed=2).bias.mean()
          for c in (0.05, 0.01, 0.002)]
    assert fr[0] > fr[1] > fr[2]
    assert fr[2] < 0.005


def test_reproducible_across_workers(cauchy):
    starts = np.tile([0.2, 0.1], (70_000, 1))  # two blocks
    a = simulate_exits(BALL, starts, cauchy, COARSE, seed=9, workers=1)
    b = simulate_exits(BALL, starts, cauchy, COARSE, seed=9, workers=2)
    for k in ("tau", "exit_pos", "steps", "bias"):
        assert np.array_equal(getattr(a, k), getattr(b, k))
    c = simulate_exits(BALL, starts[:100], cauchy, COARSE, seed=10)
    assert not np.array_equal(a.exit_pos[:100], c.exit_pos)


def test_spool_roundtrip(tmp_path, cauchy):
    s = sample_exit(BALL, ORIGIN, cauchy, COARSE, n=500, seed=0)
    back = load_spool(spool_exits(s, tmp_path / "exits.npz"))
    for k in ("x", "tau", "exit_pos", "pre_pos", "steps", "min_delta", "bias", "censored"):
        assert np.array_equal(getattr(s, k), getattr(back, k))


# ---------------------------------------------------------------- harmonic extension

def test_u_constant_is_exact(cauchy):
    est = estimate_u_f(BALL, ExteriorFunction("constant"), ORIGIN, 2000, cauchy, seed=1,
                       ctrl=COARSE)
    assert est.value == 1.0 and est.se == 0.0 and est.n == 2000
    with pytest.raises(DomainError):
        estimate_u_f(BALL, ExteriorFunction("constant"), ORIGIN, 999, cauchy)


def test_u_half_space_indicator(cauchy):
    f = ExteriorFunction("indicator", {"normal": np.array([0.0, 1.0])}, p=2.0, beta=0.5)
    est = estimate_u_f(BALL, f, ORIGIN, 20_000, cauchy, seed=3, ctrl=COARSE)
    assert abs(est.value - 0.5) < 3 * est.se


def test_u_small_exterior_ball_against_closed_form(cauchy):
    zs, rad = np.array([1.5, 0.0]), 0.2

    def inner(rho):
        return integrate.quad(lambda t: cauchy_ball_kernel(zs + rho * np.array([math.cos(t), math.sin(t)])),
                              0, 2 * math.pi, epsrel=1e-11)[0] * rho

    expected = integrate.quad(inner, 0, rad, epsrel=1e-10)[0]
    ind = lambda z: (np.linalg.norm(np.atleast_2d(z) - zs, axis=1) < rad).astype(float)  # noqa: E731
    est = estimate_u_f(BALL, ind, ORIGIN, 100_000, cauchy, seed=21)
    assert abs(est.value - expected) < 3 * est.se


def test_heavy_tail_flag():
    vals = np.zeros(20_000)
    vals[123] = 1e9
    value, se, heavy = _batch_stats(vals)
    assert heavy and value == 1e9 / 20_000
    rng = np.random.default_rng(0)
    assert not _batch_stats(rng.normal(size=20_000))[2]
    assert not _batch_stats(rng.random(20_000) < 0.05)[2]


def test_heavy_tail_warning(cauchy):
    def spiky(z):
        out = np.zeros(len(np.atleast_2d(z)))
        out[7] = 1e12
        return out

    with pytest.warns(HeavyTailWarning):
        est = estimate_u_f(BALL, spiky, ORIGIN, 5000, cauchy, seed=0, ctrl=COARSE)
    assert est.heavy_tail


def test_closed_form_kernel_function():
    z = np.array([[1.3, 0.4], [0.0, -2.0]])
    np.testing.assert_allclose(stable_ball_kernel(ORIGIN, z, 1.0),
                               [cauchy_ball_kernel(p) for p in z], rtol=1e-13)
    # the kernel integrates to one over the exterior (quadrature in polar form)
    for d, alpha in [(2, 1.0), (3, 0.5), (2, 1.5)]:
        area = 2 * math.pi ** (d / 2) / G(d / 2)
        tot = integrate.quad(lambda r: area * r ** (d - 1) * stable_ball_kernel(
            np.zeros(d), np.eye(d)[0] * r, alpha)[0], 1, np.inf, limit=400)[0]
        assert tot == pytest.approx(1.0, rel=1e-6)
        assert stable_ball_shell_mass(d, alpha, 1.0, np.inf) == pytest.approx(1.0, rel=1e-10)


# ---------------------------------------------------------------- histograms

@pytest.fixture(scope="module")
def histogram(cauchy):
    bins = RadialBins.around_ball(BALL)
    return estimate_exit_histogram(BALL, ORIGIN, bins, 100_000, cauchy, seed=12)


def test_histogram_mass_and_oracle(histogram):
    h = histogram
    assert h.total_mass() == 1.0
    assert h.inside == 0 and h.censored == 0
    e = h.bins.edges
    arcsec = lambda x: np.arccos(1 / x)  # noqa: E731
    expected = 2 / math.pi * (arcsec(e[1:]) - arcsec(e[:-1]))
    cmp = oracle_comparison(h, expected)
    assert cmp.per_bin_ok and cmp.p_value > 0.05
    assert abs(h.tail_mass - 2 / math.pi * (math.pi / 2 - arcsec(2.0))) < 3 * math.sqrt(2 / 9 / h.n)


def test_histogram_volumes_and_flags(histogram):
    bins = histogram.bins
    np.testing.assert_allclose(bins.volumes, math.pi * np.diff(bins.edges**2), rtol=1e-14)
    assert not histogram.undersampled.any()
    with pytest.raises(DomainError):
        estimate_exit_histogram(BALL, ORIGIN, bins, 1000, None)


def test_sandwich_constant(histogram):
    env = PoissonEnvelope(KernelSuite(make_family("stable", 1.0), 2), BALL)
    fit = fit_sandwich(histogram, env, ORIGIN)
    assert 1.0 <= fit.c <= 20
    assert fit.used.sum() >= 4
    assert fit.shape_constant < 3


def test_histogram_csv(tmp_path, histogram):
    p = export_histogram_csv(histogram, tmp_path / "h.csv")
    lines = p.read_text().splitlines()
    assert lines[0].startswith("r_lo") and len(lines) == len(histogram.bins) + 2


# ---------------------------------------------------------------- harmonicity and decay

def test_harmonicity_constant_and_symmetric(cauchy):
    rep = harmonicity_check(BALL, ExteriorFunction("constant"), ORIGIN, 0.3, 2000, cauchy,
                            n_inner=2, ctrl=COARSE)
    assert rep.lhs == 1.0 and rep.rhs == 1.0 and rep.ok
    f = ExteriorFunction("indicator", {"normal": np.array([0.0, 1.0])}, p=2.0, beta=0.5)
    rep = harmonicity_check(BALL, f, ORIGIN, 0.3, 4000, cauchy, n_inner=4, ctrl=COARSE, seed=2)
    assert rep.ok
    assert abs(rep.lhs - 0.5) < 3 * rep.lhs_se and abs(rep.rhs - 0.5) < 3 * rep.rhs_se


def test_harmonicity_off_center(cauchy):
    far = lambda z: (np.linalg.norm(np.atleast_2d(z), axis=1) > 1.3).astype(float)  # noqa: E731
    rep = harmonicity_check(BALL, far, np.array([0.3, 0.1]), 0.25, 4000, cauchy, n_inner=4,
                            ctrl=COARSE, seed=5)
    assert rep.ok
    with pytest.raises(DomainError):
        harmonicity_check(BALL, far, np.array([0.8, 0.0]), 0.25, 1000, cauchy)


def test_boundary_decay_along_normal(cauchy):
    xi = np.array([0.0, -1.0])
    pts = xi + np.outer(0.1 * 0.5 ** np.arange(6), [0.0, 1.0])
    tab = boundary_decay_check(BALL, xi, 1.0, pts, 4000, cauchy, seed=1, ctrl=COARSE)
    assert tab.monotone and tab.decreasing
    # u2 ~ delta^(alpha/2) for the stable process
    assert 0.3 < tab.slope < 0.7
    deep = estimate_u_f(BALL, lambda z: (np.linalg.norm(np.atleast_2d(z) - xi, axis=1) >= 1.0) * 1.0,
                        ORIGIN, 2000, cauchy, ctrl=COARSE)
    assert deep.value > 0.3
    with pytest.raises(DomainError):
        boundary_decay_check(BALL, xi, 1.0, [[0.0, -0.5]], 1000, cauchy)


def test_boundary_decay_along_tangential_curve(cauchy):
    xi = np.array([0.0, -1.0])
    reg = ApproachRegion(BALL, make_family("stable", 1.0), xi, 0.3)
    curve = tangential_curve(reg, 2.0 ** -np.arange(5, 11))
    tab = boundary_decay_check(BALL, xi, 1.0, curve.points, 4000, cauchy, seed=3, ctrl=COARSE)
    assert tab.monotone and tab.decreasing
    assert tab.u2[-1] < tab.u2[0] / 2


def test_refinement_consistency(cauchy):
    near = lambda z: (np.linalg.norm(np.atleast_2d(z), axis=1) < 1.1).astype(float)  # noqa: E731
    a = estimate_u_f(BALL, near, ORIGIN, 40_000, cauchy, seed=6, ctrl=StepControl(0.004))
    b = estimate_u_f(BALL, near, ORIGIN, 40_000, cauchy, seed=7, ctrl=StepControl(0.002))
    assert abs(a.value - b.value) < 2 * math.hypot(a.se, b.se)
