"""Complete Bernstein functions and numerical certification of their scaling.

A :class:`BernsteinFunction` bundles closed forms for phi, phi' and phi'' of one
of seven built-in families, plus the Levy density chi of the associated
subordinator when it has a closed form.  The ``fit_*`` and ``check_*``
functions scan log-spaced grids and report the constants of the upper and
lower scaling conditions used throughout the package.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate
from scipy.special import gamma as gamma_fn

__all__ = [
    "DomainError",
    "BernsteinFunction",
    "FamilyInfo",
    "FAMILIES",
    "make_family",
    "from_config",
    "log_grid",
    "phi_eval",
    "phi_prime",
    "finite_difference_prime",
    "InequalityReport",
    "StructureReport",
    "verify_global_inequalities",
    "check_structure",
    "ScalingFit",
    "fit_A3",
    "fit_lower_scaling",
    "A6Result",
    "check_A6",
    "HupResult",
    "check_Hup",
    "AssumptionWitness",
    "certify",
]

FD_REL_STEP = 1e-6
DELTA_STEP = 1e-3
SIGMA_SAFETY = 1.001
SIGMA_MAX = 1e6
# Admissible growth exponent of the fitted constant over the upper half of the
# log t-range; half a scan step.
GROWTH_TOL = 0.5 * DELTA_STEP


class DomainError(ValueError):
    """Argument outside the domain of an evaluator or family."""


ArrayFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class BernsteinFunction:
    family: str
    params: tuple
    _phi: ArrayFn = field(repr=False, compare=False)
    _dphi: Optional[ArrayFn] = field(repr=False, compare=False)
    _d2phi: Optional[ArrayFn] = field(repr=False, compare=False)
    chi: Optional[ArrayFn] = field(default=None, repr=False, compare=False)
    drift: float = 0.0

    @property
    def param_dict(self) -> dict:
        return dict(self.params)

    def __getattr__(self, name):
        # alpha / kappa / m shortcuts
        params = object.__getattribute__(self, "params")
        for key, value in params:
            if key == name:
                return value
        raise AttributeError(name)

    @property
    def has_chi(self) -> bool:
        return self.chi is not None

    def __call__(self, lam):
        return phi_eval(self, lam)

    def prime(self, lam):
        return phi_prime(self, lam)

    def second(self, lam):
        lam = _checked(lam)
        if self._d2phi is None:
            if self._dphi is None:
                # second difference of phi; a wider step keeps round-off small
                h = lam * 1e-4
                out = (self._phi(lam + h) - 2 * self._phi(lam) + self._phi(lam - h)) / h**2
                return _unwrap(out)
            h = lam * FD_REL_STEP
            return _unwrap((self._dphi(lam + h) - self._dphi(lam - h)) / (2 * h))
        return _unwrap(self._d2phi(lam))

    def label(self) -> str:
        inner = ", ".join(f"{k}={v:g}" for k, v in self.params)
        return f"{self.family}({inner})"

    def to_config(self) -> dict:
        return {"family": self.family, **dict(self.params)}


def _checked(lam) -> np.ndarray:
    arr = np.asarray(lam, dtype=float)
    if np.any(~(arr > 0)):
        raise DomainError("phi is evaluated only at lambda > 0")
    return arr


def _unwrap(arr):
    arr = np.asarray(arr, dtype=float)
    return float(arr) if arr.ndim == 0 else arr


def phi_eval(f: BernsteinFunction, lam):
    return _unwrap(f._phi(_checked(lam)))


def phi_prime(f: BernsteinFunction, lam):
    lam = _checked(lam)
    if f._dphi is None:
        return finite_difference_prime(f, lam)
    return _unwrap(f._dphi(lam))


def finite_difference_prime(f: BernsteinFunction, lam):
    """Central difference with step ``lam * 1e-6``."""
    lam = _checked(lam)
    h = lam * FD_REL_STEP
    return _unwrap((f._phi(lam + h) - f._phi(lam - h)) / (2 * h))


# ---------------------------------------------------------------------------
# family registry


@dataclass(frozen=True)
class FamilyInfo:
    tag: str
    formula: str
    ranges: str
    dim_constraint: str
    exact_sampler: bool

    def min_dim_ok(self, d: int, alpha: float) -> bool:
        if self.dim_constraint == "d>2":
            return d > 2
        if self.dim_constraint == "d>alpha":
            return d > alpha
        return d >= 2


FAMILIES: dict[str, FamilyInfo] = {
    "stable": FamilyInfo(
        "stable", "lam^(alpha/2)", "alpha in (0,2)", "d>=2", True
    ),
    "power_mix": FamilyInfo(
        "power_mix", "(lam + lam^alpha)^kappa", "alpha, kappa in (0,1)", "d>=2", True
    ),
    "relativistic": FamilyInfo(
        "relativistic",
        "(lam + m^(2/alpha))^(alpha/2) - m",
        "alpha in (0,2), m > 0",
        "d>2",
        False,
    ),
    "stable_sum": FamilyInfo(
        "stable_sum",
        "lam^(alpha/2) + lam^(kappa/2)",
        "0 < kappa < alpha < 2",
        "d>=2",
        True,
    ),
    "stable_log": FamilyInfo(
        "stable_log",
        "lam^(alpha/2) * log(1+lam)^kappa",
        "alpha in (0,2), kappa in (-alpha/2, 1-alpha/2)",
        "d>=2",
        False,
    ),
    "geometric": FamilyInfo(
        "geometric", "log(1 + lam^(alpha/2))", "alpha in (0,2]", "d>alpha", True
    ),
    "relativistic_geometric": FamilyInfo(
        "relativistic_geometric",
        "log(1 + (lam + m^(2/alpha))^(alpha/2) - m)",
        "alpha in (0,2), m > 0",
        "d>2",
        False,
    ),
}


def _require(cond: bool, msg: str):
    if not cond:
        raise DomainError(msg)


def _stable_chi(a: float) -> ArrayFn:
    c = a / gamma_fn(1.0 - a)
    return lambda t: c * np.asarray(t, dtype=float) ** (-1.0 - a)


def _stable(alpha: float, strict: bool) -> BernsteinFunction:
    _require(alpha > 0 and (alpha < 2 or (not strict and alpha == 2)),
             f"stable family needs alpha in (0,2), got {alpha}")
    a = alpha / 2
    return BernsteinFunction(
        "stable",
        (("alpha", alpha),),
        lambda x: x**a,
        lambda x: a * x ** (a - 1),
        lambda x: a * (a - 1) * x ** (a - 2),
        _stable_chi(a) if a < 1 else None,
    )


def _power_mix(alpha: float, kappa: float) -> BernsteinFunction:
    _require(0 < alpha < 1 and 0 < kappa < 1,
             f"power_mix needs alpha, kappa in (0,1), got {alpha}, {kappa}")

    def s(x):
        return x + x**alpha

    def s1(x):
        return 1 + alpha * x ** (alpha - 1)

    def d2(x):
        sx = s(x)
        return (kappa * (kappa - 1) * sx ** (kappa - 2) * s1(x) ** 2
                + kappa * sx ** (kappa - 1) * alpha * (alpha - 1) * x ** (alpha - 2))

    return BernsteinFunction(
        "power_mix",
        (("alpha", alpha), ("kappa", kappa)),
        lambda x: s(x) ** kappa,
        lambda x: kappa * s(x) ** (kappa - 1) * s1(x),
        d2,
    )


def _relativistic_parts(alpha: float, m: float):
    a = alpha / 2
    c = m ** (2 / alpha)

    # m * ((1 + x/c)^a - 1) avoids cancellation at small x
    def psi(x):
        return m * np.expm1(a * np.log1p(x / c))

    def dpsi(x):
        return a * (x + c) ** (a - 1)

    def d2psi(x):
        return a * (a - 1) * (x + c) ** (a - 2)

    const = a / gamma_fn(1 - a)

    def chi(t):
        t = np.asarray(t, dtype=float)
        return const * t ** (-1 - a) * np.exp(-c * t)

    return psi, dpsi, d2psi, chi


def _relativistic(alpha: float, m: float) -> BernsteinFunction:
    _require(0 < alpha < 2 and m > 0,
             f"relativistic needs alpha in (0,2), m > 0, got {alpha}, {m}")
    psi, dpsi, d2psi, chi = _relativistic_parts(alpha, m)
    return BernsteinFunction(
        "relativistic", (("alpha", alpha), ("m", m)), psi, dpsi, d2psi, chi
    )


def _stable_sum(alpha: float, kappa: float) -> BernsteinFunction:
    _require(0 < alpha < 2, f"stable_sum needs alpha in (0,2), got {alpha}")
    _require(0 < kappa < alpha,
             f"stable_sum needs 0 < kappa < alpha (kappa=0 gives phi(0+)=1), got {kappa}")
    a, k = alpha / 2, kappa / 2
    chi_a, chi_k = _stable_chi(a), _stable_chi(k)
    return BernsteinFunction(
        "stable_sum",
        (("alpha", alpha), ("kappa", kappa)),
        lambda x: x**a + x**k,
        lambda x: a * x ** (a - 1) + k * x ** (k - 1),
        lambda x: a * (a - 1) * x ** (a - 2) + k * (k - 1) * x ** (k - 2),
        lambda t: chi_a(t) + chi_k(t),
    )


def _stable_log(alpha: float, kappa: float) -> BernsteinFunction:
    _require(0 < alpha < 2, f"stable_log needs alpha in (0,2), got {alpha}")
    a = alpha / 2
    _require(-a < kappa < 1 - a,
             f"stable_log needs kappa in (-alpha/2, 1-alpha/2), got {kappa}")

    def d1(x):
        L = np.log1p(x)
        return a * x ** (a - 1) * L**kappa + kappa * x**a * L ** (kappa - 1) / (1 + x)

    def d2(x):
        L = np.log1p(x)
        return (a * (a - 1) * x ** (a - 2) * L**kappa
                + 2 * a * kappa * x ** (a - 1) * L ** (kappa - 1) / (1 + x)
                + kappa * (kappa - 1) * x**a * L ** (kappa - 2) / (1 + x) ** 2
                - kappa * x**a * L ** (kappa - 1) / (1 + x) ** 2)

    return BernsteinFunction(
        "stable_log",
        (("alpha", alpha), ("kappa", kappa)),
        lambda x: x**a * np.log1p(x) ** kappa,
        d1,
        d2,
    )


def _geometric(alpha: float) -> BernsteinFunction:
    _require(0 < alpha <= 2, f"geometric needs alpha in (0,2], got {alpha}")
    a = alpha / 2

    def d2(x):
        u = x**a
        return (a * (a - 1) * x ** (a - 2) / (1 + u)
                - a * a * x ** (2 * a - 2) / (1 + u) ** 2)

    return BernsteinFunction(
        "geometric",
        (("alpha", alpha),),
        lambda x: np.log1p(x**a),
        lambda x: a * x ** (a - 1) / (1 + x**a),
        d2,
    )


def _relativistic_geometric(alpha: float, m: float) -> BernsteinFunction:
    _require(0 < alpha < 2 and m > 0,
             f"relativistic_geometric needs alpha in (0,2), m > 0, got {alpha}, {m}")
    psi, dpsi, d2psi, _ = _relativistic_parts(alpha, m)

    def d2(x):
        p = 1 + psi(x)
        return d2psi(x) / p - dpsi(x) ** 2 / p**2

    return BernsteinFunction(
        "relativistic_geometric",
        (("alpha", alpha), ("m", m)),
        lambda x: np.log1p(psi(x)),
        lambda x: dpsi(x) / (1 + psi(x)),
        d2,
    )


def make_family(family: str, alpha: float | None = None, kappa: float | None = None,
                m: float | None = None, *, strict: bool = True) -> BernsteinFunction:
    """Build a member of one of the seven built-in families.

    ``strict=False`` admits the closed endpoint alpha = 2 of the stable family
    (Brownian motion), which is useful only as a divergence edge case.
    """
    if family not in FAMILIES:
        raise DomainError(f"unknown family {family!r}; known: {sorted(FAMILIES)}")
    _require(alpha is not None, f"{family} requires alpha")
    alpha = float(alpha)
    if family == "stable":
        return _stable(alpha, strict)
    if family == "geometric":
        return _geometric(alpha)
    if family in ("power_mix", "stable_sum", "stable_log"):
        _require(kappa is not None, f"{family} requires kappa")
        builder = {"power_mix": _power_mix, "stable_sum": _stable_sum,
                   "stable_log": _stable_log}[family]
        return builder(alpha, float(kappa))
    _require(m is not None, f"{family} requires m")
    builder = _relativistic if family == "relativistic" else _relativistic_geometric
    return builder(alpha, float(m))


def from_config(spec: dict) -> BernsteinFunction:
    spec = dict(spec)
    family = spec.pop("family")
    strict = spec.pop("strict", True)
    unknown = set(spec) - {"alpha", "kappa", "m"}
    if unknown:
        raise DomainError(f"unknown family parameters {sorted(unknown)}")
    return make_family(family, strict=strict, **spec)


# ---------------------------------------------------------------------------
# grids and structural checks


def log_grid(lo: float, hi: float, per_decade: int = 200) -> np.ndarray:
    decades = math.log10(hi / lo)
    n = max(2, int(round(per_decade * decades)) + 1)
    return np.logspace(math.log10(lo), math.log10(hi), n)


@dataclass
class InequalityReport:
    holds: bool
    worst_scaling_slack: float
    worst_derivative_slack: float
    violations: list = field(default_factory=list)


def verify_global_inequalities(f: BernsteinFunction, lam_grid=None, t_grid=None,
                               rtol: float = 1e-12) -> InequalityReport:
    """Check phi(t lam) <= t phi(lam) (t >= 1) and lam phi'(lam) <= phi(lam).

    Slacks are relative: ``1 - phi(t lam) / (t phi(lam))`` and
    ``1 - lam phi'(lam) / phi(lam)``; the worst (smallest) value is reported.
    """
    lam = log_grid(1e-6, 1e6) if lam_grid is None else np.asarray(lam_grid, float)
    t = log_grid(1.0, 1e6) if t_grid is None else np.asarray(t_grid, float)
    if lam.size == 0 or t.size == 0:
        raise ValueError("empty grid")
    if np.any(t < 1):
        raise ValueError("scaling inequality needs t >= 1")
    phi_lam = f(lam)
    violations = []

    worst_scaling = np.inf
    for chunk in np.array_split(np.arange(lam.size), max(1, lam.size // 256)):
        lt = lam[chunk, None] * t[None, :]
        slack = 1.0 - f(lt) / (t[None, :] * phi_lam[chunk, None])
        worst_scaling = min(worst_scaling, float(slack.min()))
        bad = np.argwhere(slack < -rtol)
        for i, j in bad[:10]:
            violations.append(("scaling", float(lam[chunk][i]), float(t[j]),
                               float(slack[i, j])))

    slack1 = 1.0 - lam * f.prime(lam) / phi_lam
    for i in np.flatnonzero(slack1 < -rtol)[:10]:
        violations.append(("derivative", float(lam[i]), None, float(slack1[i])))
    return InequalityReport(not violations, worst_scaling, float(slack1.min()), violations)


@dataclass
class StructureReport:
    holds: bool
    checks: dict


def check_structure(f: BernsteinFunction, lam_grid=None, rtol: float = 1e-12) -> StructureReport:
    """Sign conditions, monotone phi/lam, zero drift and the (A-2) limits."""
    lam = log_grid(1e-6, 1e6) if lam_grid is None else np.asarray(lam_grid, float)
    p, d1, d2 = f(lam), f.prime(lam), f.second(lam)
    ratio = p / lam
    # d2 is compared on the natural scale phi'/lam
    checks = {
        "phi_positive": bool(np.all(p > 0)),
        "phi_prime_positive": bool(np.all(d1 > 0)),
        "phi_second_nonpositive": bool(np.all(d2 <= rtol * d1 / lam)),
        "phi_over_lambda_nonincreasing": bool(np.all(ratio[1:] <= ratio[:-1] * (1 + rtol))),
        "zero_drift": f.drift == 0.0,
    }
    small = np.array([1e-12, 1e-9, 1e-6])
    ps = f(small)
    slope0 = np.polyfit(np.log(small), np.log(ps), 1)[0]
    checks["vanishes_at_zero"] = bool(slope0 > 1e-3 and ps[0] < ps[-1] < f(1.0))
    big = f(np.array([1e6, 1e9, 1e12]))
    # bounded Bernstein functions saturate: increments per 3 decades collapse
    checks["unbounded_at_infinity"] = bool(
        big[2] - big[1] >= 0.5 * (big[1] - big[0]) > 0
    )
    return StructureReport(all(checks.values()), checks)


# ---------------------------------------------------------------------------
# scaling fits


@dataclass
class ScalingFit:
    assumption: str
    verdict: str  # "holds" | "fails" | "not-required"
    sigma: float | None = None
    delta: float | None = None
    growth: float | None = None
    note: str = ""


def _ratio_envelopes(f: BernsteinFunction, lambda0: float, lam_max: float,
                     t_max: float, per_decade: int, use_prime: bool):
    lam = log_grid(lambda0, lam_max, per_decade)
    t = log_grid(1.0, t_max, per_decade)
    g = f.prime if use_prime else f
    base = g(lam)
    upper = np.full(t.size, -np.inf)
    lower = np.full(t.size, np.inf)
    for chunk in np.array_split(np.arange(lam.size), max(1, lam.size // 256)):
        r = g(lam[chunk, None] * t[None, :]) / base[chunk, None]
        upper = np.maximum(upper, r.max(axis=0))
        lower = np.minimum(lower, r.min(axis=0))
    return t, upper, lower


def _round_sig(x, digits: int = 12):
    """Drop floating noise below the evaluators' accuracy."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        mag = np.floor(np.log10(np.abs(x)))
    scale = 10.0 ** (digits - 1 - mag)
    return np.round(x * scale) / scale


def _scan(t, env, exponents, upper: bool):
    """Constant and growth exponent of env(t) * t^e for each exponent e.

    For upper envelopes the constant is the sup; for lower ones the inf.  The
    growth exponent compares the constant over the whole t-range with the one
    over the lower half of log t.
    """
    logt = np.log(t)
    half = t <= math.sqrt(t[-1])
    vals = np.log(env)[None, :] + exponents[:, None] * logt[None, :]
    span = logt[-1] - logt[half][-1]
    if upper:
        full, part = vals.max(axis=1), vals[:, half].max(axis=1)
        return _round_sig(np.exp(full)), (full - part) / span
    full, part = vals.min(axis=1), vals[:, half].min(axis=1)
    return _round_sig(np.exp(full)), (part - full) / span


def fit_A3(f: BernsteinFunction, lambda0: float = 1.0, lam_max: float = 1e6,
           t_max: float = 1e6, per_decade: int = 200) -> ScalingFit:
    """Largest delta (step 1e-3) with phi'(lam t)/phi'(lam) <= sigma t^-delta.

    A candidate delta is admissible when the fitted sigma stops growing over
    the upper half of the log t-range (growth exponent below half a step).
    """
    if t_max < 1e3:
        raise ValueError("fit_A3 needs t_max >= 1e3")
    t, upper, _ = _ratio_envelopes(f, lambda0, lam_max, t_max, per_decade, True)
    deltas = np.arange(1000, 0, -1) / 1000.0
    sigma, growth = _scan(t, upper, deltas, upper=True)
    ok = np.flatnonzero((growth <= GROWTH_TOL) & (sigma * SIGMA_SAFETY <= SIGMA_MAX))
    if ok.size == 0:
        return ScalingFit("A3", "fails", note="no delta > 0 with bounded sigma")
    i = ok[0]
    return ScalingFit("A3", "holds", float(sigma[i] * SIGMA_SAFETY), float(deltas[i]),
                      float(growth[i]))


def fit_lower_scaling(f: BernsteinFunction, which: str, delta: float, d: int = 2,
                      lambda0: float = 1.0, lam_max: float = 1e6, t_max: float = 1e6,
                      per_decade: int = 200) -> ScalingFit:
    """Lower scaling fits: ``which="A4"`` for phi', ``"A5"`` for phi.

    ``delta`` is the exponent returned by :func:`fit_A3`.  A-4 is only
    required in dimension two, A-5 only when ``delta <= 1/2``.
    """
    if which == "A4":
        if d != 2:
            return ScalingFit("A4", "not-required", note=f"d = {d}")
        t, _, lower = _ratio_envelopes(f, lambda0, lam_max, t_max, per_decade, True)
        exps = np.arange(1, 2001) / 1000.0  # delta0 in (0, 2]
        sigma, decay = _scan(t, lower, exps, upper=False)
        ok = np.flatnonzero(decay <= GROWTH_TOL)
        if ok.size == 0:
            return ScalingFit("A4", "fails", note="no admissible delta0 on grid")
        i = ok[0]
        d0 = float(exps[i])
        verdict = "holds" if d0 < 2 * delta else "fails"
        note = "" if verdict == "holds" else f"delta0={d0} not < 2*delta={2 * delta}"
        return ScalingFit("A4", verdict, float(sigma[i] / SIGMA_SAFETY), d0,
                          float(decay[i]), note)
    if which == "A5":
        if delta > 0.5:
            return ScalingFit("A5", "not-required", note=f"delta = {delta} > 1/2")
        t, _, lower = _ratio_envelopes(f, lambda0, lam_max, t_max, per_decade, False)
        d1s = np.arange(0, 1001) / 1000.0
        sigma, decay = _scan(t, lower, d1s - 1.0, upper=False)
        ok = np.flatnonzero(decay <= GROWTH_TOL)
        if ok.size == 0:
            return ScalingFit("A5", "fails", note="no admissible delta1 on grid")
        i = ok[0]
        # a bound with delta1 also holds for any larger delta1 (t >= 1)
        d1 = max(float(d1s[i]), delta)
        sig = float(sigma[i] / SIGMA_SAFETY)
        verdict = "holds" if d1 < 1 else "fails"
        return ScalingFit("A5", verdict, sig, d1, float(decay[i]),
                          "" if verdict == "holds" else "delta1 must be < 1")
    raise ValueError(f"which must be 'A4' or 'A5', got {which!r}")


@dataclass
class HupResult:
    c: float
    epsilon: float
    holds: bool


def check_Hup(f: BernsteinFunction, epsilon: float, delta: float, lambda0: float = 1.0,
              lam_max: float = 1e6, x_max: float = 1e6, per_decade: int = 200) -> HupResult:
    """Smallest c with phi(lam x)/phi(lam) <= c x^(1 - delta + epsilon) on the grid."""
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    x, upper, _ = _ratio_envelopes(f, lambda0, lam_max, x_max, per_decade, False)
    c = float(np.max(upper * x ** -(1 - delta + epsilon)))
    return HupResult(c, epsilon, c <= SIGMA_MAX)


@dataclass
class A6Result:
    d: int
    theta: float
    exponent: float
    converges: bool
    integral: float
    verdict: str


A6_WINDOW = (1e-12, 1e-4)
A6_MARGIN = 1e-4


def check_A6(f: BernsteinFunction, d: int, theta: float = 1.0) -> A6Result:
    """Convergence at 0 of the integral of lam^(d/2-1)/phi(lam) over (0, theta)."""
    if theta <= 0:
        raise ValueError("theta must be positive")
    lam = log_grid(*A6_WINDOW, per_decade=20)
    integrand = lam ** (d / 2 - 1) / f(lam)
    exponent = float(np.polyfit(np.log(lam), np.log(integrand), 1)[0])
    converges = exponent > -1 + A6_MARGIN
    if not converges:
        return A6Result(d, theta, exponent, False, math.inf, "diverges")

    # lam = theta e^{-s}: the integrand becomes lam^(d/2)/phi(lam) on (0, inf)
    def g(s):
        x = theta * math.exp(-s)
        return 0.0 if x == 0.0 else x ** (d / 2) / float(f(x))

    value, _ = integrate.quad(g, 0, np.inf, epsrel=1e-8, epsabs=0, limit=400)
    return A6Result(d, theta, exponent, True, float(value), "converges")


# ---------------------------------------------------------------------------
# witness


@dataclass
class AssumptionWitness:
    family: dict
    d: int
    lambda0: float
    sigma: float | None
    delta: float | None
    sigma0: float | None
    delta0: float | None
    sigma1: float | None
    delta1: float | None
    theta: float
    verdicts: dict
    grid: dict
    structure: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_json(cls, text: str) -> "AssumptionWitness":
        return cls(**json.loads(text))

    def recheck(self, f: BernsteinFunction, rtol: float = 1e-9) -> bool:
        """Re-verify every reported 'holds' inequality on the stored grid."""
        g = self.grid
        lam = log_grid(self.lambda0, g["lam_max"], g["per_decade"])
        t = log_grid(1.0, g["t_max"], g["per_decade"])
        lt = lam[:, None] * t[None, :]
        ok = True
        if self.verdicts.get("A3") == "holds":
            r = f.prime(lt) / f.prime(lam)[:, None]
            ok &= bool(np.all(r <= self.sigma * t ** -self.delta * (1 + rtol)))
        if self.verdicts.get("A4") == "holds":
            r = f.prime(lt) / f.prime(lam)[:, None]
            ok &= bool(np.all(r >= self.sigma0 * t ** -self.delta0 * (1 - rtol)))
            ok &= self.delta0 < 2 * self.delta
        if self.verdicts.get("A5") == "holds":
            r = f(lt) / f(lam)[:, None]
            ok &= bool(np.all(r >= self.sigma1 * t ** (1 - self.delta1) * (1 - rtol)))
        return ok


def certify(f: BernsteinFunction, d: int, lambda0: float = 1.0, lam_max: float = 1e6,
            t_max: float = 1e6, per_decade: int = 200, theta: float = 1.0) -> AssumptionWitness:
    """Run every check for one family and dimension."""
    structure = check_structure(f)
    ineq = verify_global_inequalities(f, log_grid(1e-6, 1e6, 50), log_grid(1, 1e6, 50))
    a3 = fit_A3(f, lambda0, lam_max, t_max, per_decade)
    delta = a3.delta if a3.delta is not None else 0.0
    a4 = fit_lower_scaling(f, "A4", delta, d, lambda0, lam_max, t_max, per_decade)
    a5 = fit_lower_scaling(f, "A5", delta, d, lambda0, lam_max, t_max, per_decade)
    a6 = check_A6(f, d, theta)
    verdicts = {
        "A1": "holds",  # every registered family is complete Bernstein
        "A2": "holds" if (structure.checks["vanishes_at_zero"]
                          and structure.checks["unbounded_at_infinity"]) else "fails",
        "A3": a3.verdict,
        "A4": a4.verdict,
        "A5": a5.verdict,
        "A6": "holds" if a6.converges else "fails",
        "global_inequalities": "holds" if ineq.holds else "fails",
    }
    return AssumptionWitness(
        family=f.to_config(), d=d, lambda0=lambda0,
        sigma=a3.sigma, delta=a3.delta,
        sigma0=a4.sigma, delta0=a4.delta,
        sigma1=a5.sigma, delta1=a5.delta,
        theta=theta, verdicts=verdicts,
        grid={"lam_max": lam_max, "t_max": t_max, "per_decade": per_decade},
        structure={**structure.checks, "A6_exponent": a6.exponent, "A6_integral": a6.integral},
    )
