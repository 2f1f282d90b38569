"""Subordinators, subordinate Brownian motion and first exits from domains.

Subordinator increments are sampled exactly where a composition of stable,
gamma and tempered pieces is available, and otherwise by a compound-Poisson
approximation of the Levy measure.  Paths X_t = B_{S_t} (B with generator the
Laplacian, so variance 2t per coordinate) are advanced on an adaptive skeleton
until the first skeleton point outside the domain.

Samples are split into fixed blocks of ``BLOCK`` indices, each with its own
Philox stream keyed by (seed, stream, block).  Results therefore do not depend
on how blocks are distributed over worker processes.
"""

from __future__ import annotations

import csv
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate, stats
from scipy.special import gamma as gamma_fn

from .bernstein import BernsteinFunction, DomainError, from_config
from .geometry import BallDomain, Domain

__all__ = [
    "MissingDensity",
    "HeavyTailWarning",
    "StepControl",
    "SubordinatorStepper",
    "positive_stable",
    "sample_subordinator_increment",
    "block_rng",
    "ExitSample",
    "sample_exit",
    "simulate_exits",
    "HarmonicEstimate",
    "estimate_u_f",
    "RadialBins",
    "ExitHistogram",
    "estimate_exit_histogram",
    "stable_ball_kernel",
    "stable_ball_constant",
    "stable_ball_shell_mass",
    "oracle_comparison",
    "OracleComparison",
    "SandwichFit",
    "fit_sandwich",
    "HarmonicityReport",
    "harmonicity_check",
    "DecayTable",
    "boundary_decay_check",
    "spool_exits",
    "load_spool",
    "export_histogram_csv",
]

BLOCK = 65536
DEFAULT_EPS = 1e-4
DEFAULT_C_TIME = 0.002
DEFAULT_BUDGET = 1_000_000
TABLE_SIZE = 20001
TAIL_REL = 1e-13
N_BATCHES = 20
CHECK_BATCHES = 100
MIN_HITS = 50
CHI2_MIN_HITS = 200
DELTA_FLOOR = 1e-150


class MissingDensity(RuntimeError):
    """The family has neither an exact sampler nor a registered Levy density."""


class HeavyTailWarning(UserWarning):
    pass


@dataclass(frozen=True)
class StepControl:
    c_time: float = DEFAULT_C_TIME
    max_steps: int = DEFAULT_BUDGET

    def __post_init__(self):
        if not (self.c_time > 0 and self.max_steps >= 1):
            raise DomainError("need c_time > 0 and max_steps >= 1")


# ---------------------------------------------------------------- increments

def positive_stable(rho: float, size, rng: np.random.Generator) -> np.ndarray:
    """One-sided rho-stable variables with E exp(-lam S) = exp(-lam^rho).

    Kanter's representation with U uniform on (0, pi] and E standard exponential.
    """
    if not 0 < rho <= 1:
        raise DomainError(f"need rho in (0, 1], got {rho}")
    if rho == 1:
        return np.ones(size)
    if rho == 0.5:
        # Levy distribution
        return 0.5 / rng.standard_normal(size) ** 2
    u = math.pi * (1.0 - rng.random(size))
    e = rng.standard_exponential(size)
    return (np.sin(rho * u) / np.sin(u) ** (1 / rho)
            * (np.sin((1 - rho) * u) / e) ** ((1 - rho) / rho))


def _relativistic_chi_family(f: BernsteinFunction) -> BernsteinFunction:
    # the tempered stable part of the geometric-relativistic family
    return from_config({"family": "relativistic", "alpha": f.alpha, "m": f.m})


_EXACT = {"stable", "stable_sum", "power_mix", "geometric"}


@dataclass(eq=False)
class SubordinatorStepper:
    """Increment sampler for the subordinator with Laplace exponent ``f``.

    ``method`` is ``"auto"`` (exact where possible, else compound Poisson),
    ``"exact"`` or ``"cp"``.  For compound Poisson, jumps below ``eps`` are
    replaced by their mean ``drift = int_0^eps t chi(t) dt`` and jumps above
    occur at rate ``tail_rate = int_eps^inf chi(t) dt`` with sizes drawn by
    inverse CDF from a log-spaced table.
    """

    f: BernsteinFunction
    eps: float = DEFAULT_EPS
    method: str = "auto"
    mode: str = field(init=False)
    tail_rate: float = field(init=False, default=math.nan)
    drift: float = field(init=False, default=math.nan)
    _log_t: np.ndarray = field(init=False, repr=False, default=None)
    _cdf: np.ndarray = field(init=False, repr=False, default=None)

    def __post_init__(self):
        if not self.eps > 0:
            raise DomainError("eps must be positive")
        fam = self.f.family
        if self.method not in ("auto", "exact", "cp"):
            raise ValueError(f"unknown method {self.method!r}")
        chi_source = self.f
        if fam == "relativistic_geometric":
            chi_source = _relativistic_chi_family(self.f)
        if self.method == "exact" and fam not in _EXACT:
            raise MissingDensity(f"no exact sampler for {fam}")
        if self.method == "cp" and not self.f.has_chi:
            raise MissingDensity(f"{fam} has no registered Levy density")
        if self.method == "cp" or (self.method == "auto" and fam not in _EXACT):
            if not chi_source.has_chi:
                raise MissingDensity(f"{fam} has no exact sampler and no registered Levy density")
            self.mode = "gamma-cp" if fam == "relativistic_geometric" else "cp"
        else:
            self.mode = "exact"
        if chi_source.has_chi:
            self._build_table(chi_source.chi)

    @property
    def exact(self) -> bool:
        return self.mode == "exact"

    def _build_table(self, chi: Callable):
        eps = self.eps

        def tail(lo, epsabs=0.0):
            # in log t the power-law tail becomes exponential
            mid = max(lo, 1.0)
            far = integrate.quad(lambda u: math.exp(u) * chi(math.exp(u)), math.log(mid), 690.0,
                                 limit=400, epsabs=epsabs, epsrel=1e-10)[0]
            return integrate.quad(chi, lo, mid, limit=200, epsabs=epsabs, epsrel=1e-10)[0] + far

        rate = tail(eps)
        drift = integrate.quad(lambda t: t * chi(t), 0, eps, limit=200, epsrel=1e-10)[0]
        if not (np.isfinite(rate) and np.isfinite(drift)):
            raise DomainError("Levy measure is not integrable against 1 ^ t")
        top = eps
        while tail(top, 1e-3 * TAIL_REL * rate) > TAIL_REL * rate and top < 1e300:
            top *= 10.0
        log_t = np.linspace(math.log(eps), math.log(top), TABLE_SIZE)
        t = np.exp(log_t)
        dens = t * chi(t)  # density in log t
        cdf = integrate.cumulative_trapezoid(dens, log_t, initial=0.0)
        self._log_t, self._cdf = log_t, cdf / cdf[-1]
        self.tail_rate, self.drift = float(rate), float(drift)

    def _cp(self, dt: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        counts = rng.poisson(self.tail_rate * dt)
        total = int(counts.sum())
        out = self.drift * dt
        if total:
            sizes = np.exp(np.interp(rng.random(total), self._cdf, self._log_t))
            owner = np.repeat(np.arange(len(dt)), counts)
            out = out + np.bincount(owner, weights=sizes, minlength=len(dt))
        return out

    def sample(self, dt, rng: np.random.Generator) -> np.ndarray:
        dt = np.atleast_1d(np.asarray(dt, dtype=float))
        if np.any(~(dt > 0)):
            raise DomainError("dt must be positive")
        n = dt.shape
        fam = self.f.family
        if self.mode == "cp":
            return self._cp(dt, rng)
        if self.mode == "gamma-cp":
            time = rng.gamma(dt)
            out = np.zeros(n)
            pos = time > 0
            if pos.any():
                out[pos] = self._cp(time[pos], rng)
            return out
        if fam == "stable":
            a = self.f.alpha / 2
            return dt ** (1 / a) * positive_stable(a, n, rng)
        if fam == "stable_sum":
            a, k = self.f.alpha / 2, self.f.kappa / 2
            return dt ** (1 / a) * positive_stable(a, n, rng) + dt ** (1 / k) * positive_stable(k, n, rng)
        if fam == "power_mix":
            # exponent (lam + lam^alpha)^kappa: kappa-stable time change of drift plus alpha-stable
            al, ka = self.f.alpha, self.f.kappa
            time = dt ** (1 / ka) * positive_stable(ka, n, rng)
            return time + time ** (1 / al) * positive_stable(al, n, rng)
        # geometric: exponent log(1 + lam^a), an a-stable subordinator at a gamma time
        a = self.f.alpha / 2
        time = rng.gamma(dt)
        return time if a == 1 else time ** (1 / a) * positive_stable(a, n, rng)


def sample_subordinator_increment(stepper: SubordinatorStepper, dt, rng: np.random.Generator):
    out = stepper.sample(dt, rng)
    return float(out[0]) if np.ndim(dt) == 0 else out


# ---------------------------------------------------------------- streams and workers

def block_rng(seed: int, block: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator for one block of sample indices."""
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, ((stream & 0xFFFFFFFF) << 32) | (block & 0xFFFFFFFF)],
                   dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _blocks(n: int) -> list[tuple[int, int]]:
    return [(b, min(BLOCK, n - b * BLOCK)) for b in range((n + BLOCK - 1) // BLOCK)]


@lru_cache(maxsize=16)
def _cached_stepper(cfg: tuple, eps: float, method: str) -> SubordinatorStepper:
    return SubordinatorStepper(from_config(dict(cfg)), eps, method)


def _stepper_key(st: SubordinatorStepper) -> tuple:
    return tuple(sorted(st.f.to_config().items())), st.eps, st.method


def _run_block(args):
    D, starts, key, ctrl, seed, stream, block = args
    st = _cached_stepper(*key)
    return _exit_block(D, starts, st, ctrl, block_rng(seed, block, stream))


def _map_blocks(D, starts: np.ndarray, stepper, ctrl, seed, stream, workers) -> list:
    n = len(starts)
    jobs = []
    key = _stepper_key(stepper)
    for b, size in _blocks(n):
        s = starts[b * BLOCK: b * BLOCK + size]
        jobs.append((D, s, key, ctrl, seed, stream, b))
    if workers and workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(_run_block, jobs))
    return [_exit_block(D, j[1], stepper, ctrl, block_rng(seed, j[6], stream)) for j in jobs]


# ---------------------------------------------------------------- exits

@dataclass
class ExitSample:
    """Columnar batch of first-exit records, one row per path."""

    x: np.ndarray
    tau: np.ndarray
    exit_pos: np.ndarray
    pre_pos: np.ndarray
    steps: np.ndarray
    min_delta: np.ndarray
    bias: np.ndarray
    censored: np.ndarray

    def __len__(self) -> int:
        return len(self.tau)

    @property
    def valid(self) -> np.ndarray:
        return ~self.censored

    @property
    def censored_fraction(self) -> float:
        return float(self.censored.mean()) if len(self) else 0.0

    @property
    def jump_size(self) -> np.ndarray:
        return np.linalg.norm(self.exit_pos - self.pre_pos, axis=1)

    @staticmethod
    def concat(parts: Sequence["ExitSample"]) -> "ExitSample":
        return ExitSample(*(np.concatenate([getattr(p, k) for p in parts])
                            for k in ExitSample.__dataclass_fields__))


def _exit_block(D: Domain, starts: np.ndarray, stepper: SubordinatorStepper, ctrl: StepControl,
                rng: np.random.Generator) -> ExitSample:
    n, d = starts.shape
    exit_pos = np.empty((n, d))
    pre = np.empty((n, d))
    tau = np.zeros(n)
    steps = np.zeros(n, dtype=np.int64)
    censored = np.zeros(n, dtype=bool)
    bias = np.zeros(n, dtype=bool)
    min_delta = np.empty(n)
    f = stepper.f

    # working set; finished paths stay frozen in it until the next compaction
    idx = np.arange(n)
    X = starts.astype(float).copy()
    sd = np.asarray(D.signed_distance(X), dtype=float)
    if np.any(sd <= 0):
        raise DomainError("start points must lie in D")
    t_w = np.zeros(n)
    k_w = np.zeros(n, dtype=np.int64)
    m_w = sd.copy()
    live = np.ones(n, dtype=bool)
    while idx.size:
        dt = ctrl.c_time / np.asarray(f(np.where(live, np.maximum(sd, DELTA_FLOOR), 1.0) ** -2.0), dtype=float)
        S = stepper.sample(dt, rng)
        Y = X + np.sqrt(2.0 * S)[:, None] * rng.standard_normal(X.shape)
        sy = np.asarray(D.signed_distance(Y), dtype=float)
        t_w += dt
        k_w += 1
        out = live & (sy <= 0)
        if out.any():
            j = idx[out]
            exit_pos[j], pre[j] = Y[out], X[out]
            tau[j], steps[j], min_delta[j] = t_w[out], k_w[out], m_w[out]
            # landing closer to the boundary than the step resolution
            bias[j] = -sy[out] < ctrl.c_time * sd[out]
            live &= ~out
        X, sd = Y, sy
        np.minimum(m_w, sd, out=m_w, where=live)
        over = live & (k_w >= ctrl.max_steps)
        if over.any():
            j = idx[over]
            exit_pos[j], pre[j] = X[over], X[over]
            tau[j], steps[j], min_delta[j] = t_w[over], k_w[over], m_w[over]
            censored[j] = True
            live &= ~over
        if live.sum() < 0.75 * live.size:
            idx, X, sd, t_w, k_w, m_w = idx[live], X[live], sd[live], t_w[live], k_w[live], m_w[live]
            live = np.ones(idx.size, dtype=bool)
    return ExitSample(starts.astype(float), tau, exit_pos, pre, steps, min_delta, bias, censored)


def simulate_exits(D: Domain, starts, stepper: SubordinatorStepper, ctrl: Optional[StepControl] = None,
                   seed: int = 0, stream: int = 0, workers: int = 1) -> ExitSample:
    """Exit records for the given start points (one path per row)."""
    ctrl = ctrl or StepControl()
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    return ExitSample.concat(_map_blocks(D, starts, stepper, ctrl, seed, stream, workers))


def sample_exit(D: Domain, x, stepper: SubordinatorStepper, ctrl: Optional[StepControl] = None,
                n: int = 1, seed: int = 0, stream: int = 0, workers: int = 1) -> ExitSample:
    """``n`` independent exits of X started at ``x``."""
    x = np.asarray(x, dtype=float)
    if not bool(D.contains(x)):
        raise DomainError("x must lie in D")
    return simulate_exits(D, np.tile(x, (n, 1)), stepper, ctrl, seed, stream, workers)


# ---------------------------------------------------------------- harmonic extension

@dataclass
class HarmonicEstimate:
    x: np.ndarray
    value: float
    se: float
    n: int
    seed: int
    f_id: str
    censored: int = 0
    heavy_tail: bool = False


def _batch_stats(vals: np.ndarray, n_batches: int = N_BATCHES) -> tuple[float, float, bool]:
    """Mean, batch-means standard error and a heavy-tail flag.

    The flag uses finer batches (``CHECK_BATCHES``): with few batches a single
    outlier can never sit more than (k-1)/sqrt(k) deviations from the mean.
    """
    vals = np.asarray(vals, dtype=float)
    value = float(vals.sum() / len(vals))
    if np.ptp(vals) == 0:
        return float(vals[0]), 0.0, False
    means = np.array([b.mean() for b in np.array_split(vals, n_batches)])
    se = float(means.std(ddof=1)) / math.sqrt(n_batches)
    k = min(CHECK_BATCHES, len(vals))
    fine = np.array([b.mean() for b in np.array_split(vals, k)])
    sb = float(fine.std(ddof=1))
    heavy = bool(sb > 0 and np.max(np.abs(fine - value)) > 5 * sb)
    return value, se, heavy


def _f_id(f) -> str:
    fam = getattr(f, "family", None)
    if fam is None:
        return getattr(f, "__name__", "callable")
    params = {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in getattr(f, "params", {}).items()}
    return f"{fam}{params}"


def _u_from_exits(f, sample: ExitSample, x, seed: int) -> HarmonicEstimate:
    vals = np.asarray(f(sample.exit_pos[sample.valid]), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise DomainError("f is not finite on the sampled exit positions")
    value, se, heavy = _batch_stats(vals)
    if heavy:
        warnings.warn("batch means disagree beyond 5 standard errors", HeavyTailWarning)
    return HarmonicEstimate(np.asarray(x, dtype=float), value, se, len(vals), seed, _f_id(f),
                            int(sample.censored.sum()), heavy)


def estimate_u_f(D: Domain, f, x, N: int, stepper: SubordinatorStepper, seed: int = 0,
                 ctrl: Optional[StepControl] = None, stream: int = 0, workers: int = 1,
                 return_sample: bool = False):
    """Mean of f(X_tau) over N exits from D started at x, with batch-means SE."""
    if N < 1000:
        raise DomainError("need N >= 1000")
    sample = sample_exit(D, x, stepper, ctrl, N, seed, stream, workers)
    est = _u_from_exits(f, sample, x, seed)
    return (est, sample) if return_sample else est


# ---------------------------------------------------------------- histograms

@dataclass(frozen=True)
class RadialBins:
    """Spherical shells edges[i] <= |z - center| < edges[i+1]; the rest is the tail."""

    center: np.ndarray
    edges: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=float)
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        object.__setattr__(self, "edges", e)
        if e.ndim != 1 or len(e) < 2 or np.any(np.diff(e) <= 0) or e[0] < 0:
            raise DomainError("edges must be increasing and non-negative")

    @classmethod
    def around_ball(cls, D: BallDomain, offsets=None) -> "RadialBins":
        offs = np.array([0, .01, .03, .06, .1, .15, .2, .3, .4, .5, .65, .8, 1.0]) \
            if offsets is None else np.asarray(offsets, dtype=float)
        return cls(D.center, D.radius + offs)

    @property
    def d(self) -> int:
        return self.center.size

    def __len__(self) -> int:
        return len(self.edges) - 1

    @property
    def volumes(self) -> np.ndarray:
        d = self.d
        unit = math.pi ** (d / 2) / gamma_fn(d / 2 + 1)
        return unit * np.diff(self.edges**d)

    @property
    def mean_radius(self) -> np.ndarray:
        e, d = self.edges, self.d
        return d / (d + 1) * np.diff(e ** (d + 1)) / np.diff(e**d)

    def assign(self, z) -> np.ndarray:
        r = np.linalg.norm(np.atleast_2d(z) - self.center, axis=1)
        idx = np.searchsorted(self.edges, r, side="right") - 1
        idx[(idx < 0) | (idx >= len(self))] = -1
        return idx


@dataclass
class ExitHistogram:
    bins: RadialBins
    counts: np.ndarray
    tail: int
    inside: int
    n: int
    censored: int

    @property
    def probs(self) -> np.ndarray:
        return self.counts / self.n

    @property
    def prob_se(self) -> np.ndarray:
        p = self.probs
        return np.sqrt(p * (1 - p) / self.n)

    @property
    def tail_mass(self) -> float:
        return self.tail / self.n

    @property
    def kernel(self) -> np.ndarray:
        return self.probs / self.bins.volumes

    @property
    def kernel_se(self) -> np.ndarray:
        return self.prob_se / self.bins.volumes

    @property
    def undersampled(self) -> np.ndarray:
        return self.counts < MIN_HITS

    def total_mass(self) -> float:
        return float((self.counts.sum() + self.tail + self.inside) / self.n)

    def merged(self, other: "ExitHistogram") -> "ExitHistogram":
        """Pool the counts of two independent runs over the same shells."""
        if not np.array_equal(self.bins.edges, other.bins.edges):
            raise DomainError("histograms use different shells")
        return ExitHistogram(self.bins, self.counts + other.counts, self.tail + other.tail,
                             self.inside + other.inside, self.n + other.n,
                             self.censored + other.censored)


def estimate_exit_histogram(D: Domain, x, bins: RadialBins, N: int, stepper: SubordinatorStepper,
                            seed: int = 0, ctrl: Optional[StepControl] = None, stream: int = 0,
                            workers: int = 1, min_n: int = 100_000, return_sample: bool = False):
    """Bin the exit positions of N paths from x.

    Exit points that fall in no shell count towards the tail bin, except the
    ones inside the innermost shell radius, which are reported as ``inside``
    (for a ball these are points of the boundary sphere itself).
    """
    if N < min_n:
        raise DomainError(f"need N >= {min_n}")
    sample = sample_exit(D, x, stepper, ctrl, N, seed, stream, workers)
    z = sample.exit_pos[sample.valid]
    idx = bins.assign(z)
    counts = np.bincount(idx[idx >= 0], minlength=len(bins)).astype(np.int64)
    r = np.linalg.norm(z - bins.center, axis=1)
    inside = int(np.sum((idx < 0) & (r < bins.edges[0])))
    tail = int(np.sum(idx < 0)) - inside
    hist = ExitHistogram(bins, counts, tail, inside, len(z), int(sample.censored.sum()))
    return (hist, sample) if return_sample else hist


# ---------------------------------------------------------------- stable ball closed form

def stable_ball_constant(d: int, alpha: float) -> float:
    return gamma_fn(d / 2) * math.pi ** (-d / 2 - 1) * math.sin(math.pi * alpha / 2)


def stable_ball_kernel(x, z, alpha: float, radius: float = 1.0, center=None) -> np.ndarray:
    """Poisson kernel of the isotropic alpha-stable process for a ball."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    d = z.shape[1]
    c = np.zeros(d) if center is None else np.asarray(center, dtype=float)
    x = np.asarray(x, dtype=float) - c
    z = z - c
    rx2 = radius**2 - x @ x
    rz2 = np.sum(z * z, axis=1) - radius**2
    if rx2 <= 0 or np.any(rz2 <= 0):
        raise DomainError("need x inside and z outside the closed ball")
    dist = np.linalg.norm(z - x, axis=1)
    return stable_ball_constant(d, alpha) * (rx2 / rz2) ** (alpha / 2) * dist ** (-d)


def stable_ball_shell_mass(d: int, alpha: float, a: float, b: float, radius: float = 1.0) -> float:
    """Exit probability from the center into the shell a <= |z| < b (quadrature)."""
    if not radius <= a < b:
        raise DomainError("shell must lie outside the ball")
    area = 2 * math.pi ** (d / 2) / gamma_fn(d / 2)
    c = stable_ball_constant(d, alpha) * area * radius**alpha

    # t = r^2 - R^2 turns the edge singularity into an algebraic weight t^(-alpha/2)
    def smooth(t):
        return 0.5 / (t + radius**2)

    lo, hi = a * a - radius**2, (b * b - radius**2 if b < np.inf else np.inf)
    top = hi if hi < np.inf else max(2 * lo, 1.0)
    total = integrate.quad(smooth, lo, top, weight="alg", wvar=(-alpha / 2, 0.0), limit=200,
                           epsabs=0, epsrel=1e-12)[0] if lo == 0 else integrate.quad(
        lambda t: smooth(t) * t ** (-alpha / 2), lo, top, limit=200, epsabs=0, epsrel=1e-12)[0]
    if hi == np.inf:
        total += integrate.quad(lambda t: smooth(t) * t ** (-alpha / 2), top, np.inf,
                                limit=200, epsabs=0, epsrel=1e-12)[0]
    return c * total


@dataclass
class OracleComparison:
    expected: np.ndarray
    z_scores: np.ndarray
    per_bin_ok: bool
    chi2: float
    dof: int
    p_value: float
    used: np.ndarray

    @property
    def ok(self) -> bool:
        return self.per_bin_ok and self.p_value > 0.05


def oracle_comparison(hist: ExitHistogram, expected_probs, min_hits: int = CHI2_MIN_HITS,
                      z_max: float = 3.0) -> OracleComparison:
    """Per-bin z-scores and a Pearson test over bins with enough hits.

    The bins used in the joint test plus one lumped remainder category form a
    multinomial, so the statistic has (#bins used) degrees of freedom.
    """
    p = np.asarray(expected_probs, dtype=float)
    n = hist.n
    se = np.sqrt(p * (1 - p) / n)
    z = (hist.probs - p) / se
    used = hist.counts >= min_hits
    obs = np.append(hist.counts[used], n - hist.counts[used].sum())
    exp = n * np.append(p[used], 1 - p[used].sum())
    chi2 = float(np.sum((obs - exp) ** 2 / exp))
    dof = int(used.sum())
    pval = float(stats.chi2.sf(chi2, dof)) if dof else 1.0
    return OracleComparison(p, z, bool(np.all(np.abs(z[used]) <= z_max)), chi2, dof, pval, used)


@dataclass
class SandwichFit:
    c: float
    ratios: np.ndarray
    radii: np.ndarray
    used: np.ndarray

    @property
    def shape_constant(self) -> float:
        r = self.ratios[self.used]
        return float(math.sqrt(r.max() / r.min()))


def fit_sandwich(hist: ExitHistogram, envelope, x, direction=None, dmin: float = 0.05,
                 dmax: float = 0.5, domain: Optional[Domain] = None) -> SandwichFit:
    """Smallest c with E/c <= K_hat <= c E over shells whose boundary distance is in [dmin, dmax].

    The envelope is evaluated at the volume-weighted mean radius of each shell
    along ``direction``; the ratio K_hat / E is taken for every qualifying shell.
    """
    bins = hist.bins
    d = bins.d
    u = np.eye(d)[0] if direction is None else np.asarray(direction, dtype=float)
    u = u / np.linalg.norm(u)
    radii = bins.mean_radius
    pts = bins.center + radii[:, None] * u
    dom = domain if domain is not None else envelope.domain
    delta = np.asarray(dom.dist_to_boundary(pts), dtype=float)
    x = np.asarray(x, dtype=float)
    used = ((delta >= dmin) & (delta <= dmax) & (hist.counts > 0)
            & (np.linalg.norm(pts - x, axis=1) < 2))
    ratios = np.full(len(bins), np.nan)
    for i in np.flatnonzero(used):
        ratios[i] = hist.kernel[i] / envelope(x, pts[i])
    r = ratios[used]
    if not len(r):
        raise DomainError("no shell qualifies for the sandwich fit")
    c = float(max(r.max(), 1 / r.min(), 1.0))
    return SandwichFit(c, ratios, radii, used)


# ---------------------------------------------------------------- harmonicity and decay

@dataclass
class HarmonicityReport:
    lhs: float
    lhs_se: float
    rhs: float
    rhs_se: float
    z: float
    ok: bool


def harmonicity_check(D: Domain, f, x, rho: float, N: int, stepper: SubordinatorStepper,
                      seed: int = 0, n_inner: int = 16, ctrl: Optional[StepControl] = None,
                      workers: int = 1) -> HarmonicityReport:
    """Compare u_f(x) with the mean of u_f at the exit point of B(x, rho).

    Each exit point of the small ball inside D starts ``n_inner`` fresh paths
    in D; exit points already outside D contribute f directly.
    """
    x = np.asarray(x, dtype=float)
    if not float(D.signed_distance(x)) > rho:
        raise DomainError("closure of B(x, rho) must lie in D")
    lhs = estimate_u_f(D, f, x, N, stepper, seed, ctrl, stream=1, workers=workers)
    small = BallDomain(x, rho)
    first = sample_exit(small, x, stepper, ctrl, N, seed, stream=2, workers=workers)
    y = first.exit_pos[first.valid]
    vals = np.empty(len(y))
    out = ~np.asarray(D.contains(y))
    vals[out] = f(y[out])
    inner_idx = np.flatnonzero(~out)
    if inner_idx.size:
        starts = np.repeat(y[inner_idx], n_inner, axis=0)
        second = simulate_exits(D, starts, stepper, ctrl, seed, stream=3, workers=workers)
        fv = np.where(second.censored, np.nan, f(second.exit_pos))
        vals[inner_idx] = np.nanmean(fv.reshape(-1, n_inner), axis=1)
    rhs = float(vals.mean())
    rhs_se = float(vals.std(ddof=1) / math.sqrt(len(vals))) if np.ptp(vals) > 0 else 0.0
    comb = math.hypot(lhs.se, rhs_se)
    diff = abs(lhs.value - rhs)
    z = diff / comb if comb > 0 else (0.0 if diff == 0 else math.inf)
    return HarmonicityReport(lhs.value, lhs.se, rhs, rhs_se, float(z), bool(z <= 3))


@dataclass
class DecayTable:
    dist: np.ndarray
    delta: np.ndarray
    u2: np.ndarray
    se: np.ndarray
    slope: float
    slope_se: float
    monotone: bool

    @property
    def decreasing(self) -> bool:
        return self.monotone and self.slope > 3 * self.slope_se


def boundary_decay_check(D: Domain, xi, r0: float, points, N: int, stepper: SubordinatorStepper,
                         seed: int = 0, ctrl: Optional[StepControl] = None,
                         workers: int = 1) -> DecayTable:
    """Probability that the exit from D lands outside B(xi, r0), along a curve.

    ``monotone`` holds when no estimate exceeds its predecessor by more than
    three combined standard errors; ``slope`` is the weighted least-squares
    slope of log u2 against log delta_D (positive means decay).
    """
    xi = np.asarray(xi, dtype=float)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if np.any(np.linalg.norm(pts - xi, axis=1) >= r0 / 8):
        raise DomainError("points must lie in B(xi, r0/8)")
    far = lambda z: (np.linalg.norm(np.atleast_2d(z) - xi, axis=1) >= r0).astype(float)  # noqa: E731
    u2, se = [], []
    for k, x in enumerate(pts):
        est = estimate_u_f(D, far, x, N, stepper, seed, ctrl, stream=100 + k, workers=workers)
        u2.append(est.value)
        se.append(max(est.se, math.sqrt(max(est.value * (1 - est.value), 1 / N) / N)))
    u2, se = np.array(u2), np.array(se)
    delta = np.asarray(D.dist_to_boundary(pts), dtype=float)
    monotone = bool(np.all(np.diff(u2) <= 3 * np.hypot(se[1:], se[:-1])))
    pos = u2 > 0
    slope, slope_se = math.nan, math.inf
    if pos.sum() >= 3:
        w = u2[pos] / se[pos]
        A = np.vstack([np.log(delta[pos]), np.ones(pos.sum())]).T
        coef, *_ = np.linalg.lstsq(A * w[:, None], np.log(u2[pos]) * w, rcond=None)
        resid = (np.log(u2[pos]) - A @ coef) * w
        dof = max(1, pos.sum() - 2)
        cov = np.linalg.inv((A * w[:, None]).T @ (A * w[:, None])) * max(1.0, resid @ resid / dof)
        slope, slope_se = float(coef[0]), float(math.sqrt(cov[0, 0]))
    return DecayTable(np.linalg.norm(pts - xi, axis=1), delta, u2, se, slope, slope_se, monotone)


# ---------------------------------------------------------------- files

def spool_exits(sample: ExitSample, path) -> Path:
    """Write the exit records as a columnar binary (npz) file."""
    path = Path(path)
    with path.open("wb") as fh:
        np.savez(fh, **{k: getattr(sample, k) for k in ExitSample.__dataclass_fields__})
    return path


def load_spool(path) -> ExitSample:
    with np.load(Path(path)) as data:
        return ExitSample(**{k: data[k] for k in ExitSample.__dataclass_fields__})


def export_histogram_csv(hist: ExitHistogram, path, expected=None) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["r_lo", "r_hi", "count", "prob", "prob_se", "kernel", "kernel_se", "expected_prob"])
        e = hist.bins.edges
        exp = np.full(len(hist.bins), np.nan) if expected is None else np.asarray(expected, dtype=float)
        for i in range(len(hist.bins)):
            w.writerow([repr(float(e[i])), repr(float(e[i + 1])), int(hist.counts[i]),
                        repr(float(hist.probs[i])), repr(float(hist.prob_se[i])),
                        repr(float(hist.kernel[i])), repr(float(hist.kernel_se[i])),
                        repr(float(exp[i]))])
        w.writerow(["tail", "inf", hist.tail, repr(hist.tail_mass), "", "", "", ""])
    return path
