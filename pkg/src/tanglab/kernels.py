"""Jump and Green kernels of subordinate Brownian motion and their surrogates.

Exact kernels are available in closed form for the stable family and by
subordination quadrature whenever the Levy density chi of the subordinator is
known.  For every family the surrogate expressions built from phi and phi'
are available on (0, M]; they are comparable to the exact kernels, and
:func:`verify_comparability` measures the constants on a grid.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import integrate
from scipy.special import gamma as gamma_fn

from .bernstein import BernsteinFunction, DomainError

__all__ = [
    "SurrogateOnly",
    "ComparabilityError",
    "jump_constant",
    "riesz_constant",
    "KernelSuite",
    "jump_density",
    "jump_surrogate",
    "green_surrogate",
    "green_exact_stable",
    "Comparability",
    "verify_comparability",
    "gdec_constant",
    "PoissonEnvelope",
    "poisson_envelope_eval",
    "export_kernel_csv",
    "export_envelope_csv",
]

QUAD_RTOL = 1e-8
MAX_RATIO_SPAN = 1e6


class SurrogateOnly(RuntimeError):
    """Raised when an exact kernel is requested for a family without chi."""


class ComparabilityError(RuntimeError):
    """Raised when exact/surrogate ratios are not numerically comparable."""


def jump_constant(d: int, alpha: float) -> float:
    """Constant A(d, alpha) of the isotropic stable jump density r^{-d-alpha}."""
    return (alpha * 2 ** (alpha - 1) * math.pi ** (-d / 2)
            * gamma_fn((d + alpha) / 2) / gamma_fn(1 - alpha / 2))


def riesz_constant(d: int, alpha: float) -> float:
    """Constant of the Riesz kernel r^{alpha-d}."""
    return gamma_fn((d - alpha) / 2) / (2**alpha * math.pi ** (d / 2) * gamma_fn(alpha / 2))


def _as_radii(r) -> np.ndarray:
    arr = np.asarray(r, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr <= 0):
        raise DomainError("radii must be positive and finite")
    return arr


def _out(arr: np.ndarray, like):
    return float(arr) if np.ndim(like) == 0 else arr


@dataclass(frozen=True)
class KernelSuite:
    """Kernels attached to a Bernstein function in dimension d.

    ``M`` bounds the range on which surrogates are evaluated.
    """

    f: BernsteinFunction
    d: int
    M: float = 2.0

    def __post_init__(self):
        if self.d < 2:
            raise DomainError(f"dimension must be >= 2, got {self.d}")
        if not self.M > 0:
            raise DomainError("M must be positive")

    @property
    def is_stable(self) -> bool:
        return self.f.family == "stable" and self.f.alpha < 2

    @property
    def has_exact_jump(self) -> bool:
        return self.f.has_chi

    def _surrogate_radii(self, r) -> np.ndarray:
        arr = _as_radii(r)
        if np.any(arr > self.M):
            raise DomainError(f"surrogate only asserted for r <= M = {self.M}")
        return arr

    def j(self, r, method: str = "auto"):
        return jump_density(self, r, method=method)

    def j_tilde(self, r):
        return jump_surrogate(self, r)

    def g_tilde(self, r):
        return green_surrogate(self, r)

    def g(self, r):
        if not self.is_stable:
            raise SurrogateOnly(f"exact Green profile only for the stable family, not {self.f.family}")
        return green_exact_stable(self.d, self.f.alpha, r)


def _subordination_integral(chi: Callable, d: int, r: float) -> float:
    # t = r^2 u; the Gaussian factor peaks near u = 1/(2d)
    r2 = r * r

    def integrand(u):
        return (4 * math.pi * r2 * u) ** (-d / 2) * math.exp(-0.25 / u) * float(chi(r2 * u)) * r2

    def safe(u):
        return 0.0 if u <= 0.0 else integrand(u)

    lo, _ = integrate.quad(safe, 0.0, 1.0, epsrel=QUAD_RTOL, epsabs=0.0, limit=200)
    hi, _ = integrate.quad(safe, 1.0, np.inf, epsrel=QUAD_RTOL, epsabs=0.0, limit=200)
    return lo + hi


def jump_density(suite: KernelSuite, r, method: str = "auto"):
    """Jump density j(r).

    ``method`` is ``"auto"`` (closed form for stable, quadrature otherwise),
    ``"closed"`` or ``"quad"``.
    """
    arr = _as_radii(r)
    f = suite.f
    if method not in ("auto", "closed", "quad"):
        raise ValueError(f"unknown method {method!r}")
    if method in ("auto", "closed") and suite.is_stable:
        out = jump_constant(suite.d, f.alpha) * arr ** (-suite.d - f.alpha)
        return _out(out, r)
    if method == "closed":
        raise SurrogateOnly(f"no closed-form jump density for {f.family}")
    if not f.has_chi:
        raise SurrogateOnly(f"{f.label()} has no registered Levy density; use jump_surrogate")
    flat = np.array([_subordination_integral(f.chi, suite.d, float(x)) for x in arr.ravel()])
    return _out(flat.reshape(arr.shape), r)


def jump_surrogate(suite: KernelSuite, r):
    """phi'(r^-2) / r^(d+2)."""
    arr = suite._surrogate_radii(r)
    out = np.asarray(suite.f.prime(arr**-2.0)) / arr ** (suite.d + 2)
    return _out(out, r)


def green_surrogate(suite: KernelSuite, r):
    """phi'(r^-2) / (r^(d+2) phi(r^-2)^2)."""
    arr = suite._surrogate_radii(r)
    lam = arr**-2.0
    out = np.asarray(suite.f.prime(lam)) / (arr ** (suite.d + 2) * np.asarray(suite.f(lam)) ** 2)
    return _out(out, r)


def green_exact_stable(d: int, alpha: float, r):
    """Whole-space Green profile of the isotropic alpha-stable process."""
    if not d > alpha:
        raise DomainError(f"stable process is recurrent for d={d} <= alpha={alpha}")
    arr = _as_radii(r)
    return _out(riesz_constant(d, alpha) * arr ** (alpha - d), r)


@dataclass(frozen=True)
class Comparability:
    c_low: float
    c_high: float

    @property
    def c(self) -> float:
        return max(1.0 / self.c_low, self.c_high)


def verify_comparability(exact: Callable, surrogate: Callable, r_grid: Sequence[float]) -> Comparability:
    """Inf and sup of exact/surrogate over ``r_grid``."""
    r = _as_radii(r_grid)
    if r.size == 0:
        raise ValueError("empty grid")
    ratio = np.asarray(exact(r), dtype=float) / np.asarray(surrogate(r), dtype=float)
    if np.any(~np.isfinite(ratio)) or np.any(ratio <= 0):
        raise ComparabilityError("non-positive or non-finite kernel ratio")
    lo, hi = float(ratio.min()), float(ratio.max())
    if hi / lo > MAX_RATIO_SPAN:
        raise ComparabilityError(f"ratio spans {hi / lo:.3g} > {MAX_RATIO_SPAN:g}")
    return Comparability(lo, hi)


def gdec_constant(suite: KernelSuite, s: float, n: int = 400) -> float:
    """Smallest c with g~(t) <= c g~(u) for s <= u <= t <= min(2, M), on a log grid."""
    top = min(2.0, suite.M)
    if not 0 < s < top:
        raise DomainError(f"need 0 < s < {top}")
    t = np.geomspace(s, top, n)
    g = np.asarray(green_surrogate(suite, t))
    return float(max(1.0, np.max(g / np.minimum.accumulate(g))))


@dataclass(frozen=True)
class PoissonEnvelope:
    """Two-sided Poisson kernel envelope of a bounded C^{1,1} set.

    ``domain`` must provide ``contains(x)`` and ``dist_to_boundary(x)``.
    """

    suite: KernelSuite
    domain: object

    @property
    def source(self) -> str:
        return "exact" if self.suite.has_exact_jump else "surrogate"

    def __call__(self, x, z) -> float:
        return poisson_envelope_eval(self, x, z)


def poisson_envelope_eval(env: PoissonEnvelope, x, z) -> float:
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    dom = env.domain
    if not dom.contains(x):
        raise DomainError("x must lie in U")
    dz = float(dom.dist_to_boundary(z))
    if dom.contains(z) or dz <= 0:
        raise DomainError("z must lie outside the closure of U")
    dist = float(np.linalg.norm(x - z))
    if not dist < 2:
        raise DomainError("envelope only used for |x - z| < 2")
    dx = float(dom.dist_to_boundary(x))
    f = env.suite.f
    pz = float(f(dz**-2))
    jr = env.suite.j(dist) if env.source == "exact" else jump_surrogate(env.suite, dist)
    return (math.sqrt(pz) / (math.sqrt(float(f(dx**-2))) * float(f(dist**-2)) * (1 + pz**-0.5))
            * float(jr))


def export_kernel_csv(suite: KernelSuite, r_grid, path, kind: str = "j") -> Path:
    """Write columns r, exact, surrogate, ratio for the jump or Green kernel."""
    r = _as_radii(r_grid)
    if kind == "j":
        exact, sur = suite.j(r), jump_surrogate(suite, r)
    elif kind == "g":
        exact, sur = suite.g(r), green_surrogate(suite, r)
    else:
        raise ValueError(f"kind must be 'j' or 'g', got {kind!r}")
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["r", "exact", "surrogate", "ratio"])
        for row in zip(r, exact, sur, np.asarray(exact) / np.asarray(sur)):
            w.writerow([repr(float(v)) for v in row])
    return path


def export_envelope_csv(env: PoissonEnvelope, x, directions, s_grid, path) -> Path:
    """Evaluate the envelope along rays z = x + s * u and write ray, s, value.

    Points that fall inside the closure of U or too far from x are skipped.
    """
    x = np.asarray(x, dtype=float)
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["ray", "s", "envelope", "source"])
        for k, u in enumerate(np.atleast_2d(np.asarray(directions, dtype=float))):
            u = u / np.linalg.norm(u)
            for s in s_grid:
                z = x + s * u
                try:
                    val = poisson_envelope_eval(env, x, z)
                except DomainError:
                    continue
                w.writerow([k, repr(float(s)), repr(val), env.source])
    return path
