"""Exterior data, boundary means and the local integral functionals.

Exterior functions are given by global formulas, which also serve as the local
Holder representative.  Integrals over exterior pieces of small balls use
scrambled Sobol points with rejection; slab integrals of phi(delta^-2)^{q/2}
use Gauss rules across the boundary and adaptive quadrature along the normal.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import integrate
from scipy.special import gamma as gamma_fn
from scipy.stats import qmc

from .bernstein import BernsteinFunction, DomainError, fit_A3
from .geometry import Domain

__all__ = [
    "DegenerateRegion",
    "ExteriorFunction",
    "exterior_from_config",
    "HolderFit",
    "holder_seminorm",
    "MeanEstimate",
    "boundary_mean",
    "BoundaryMean",
    "boundary_limit",
    "Oscillation",
    "oscillation_functionals",
    "SlabCheck",
    "lemma31_check",
    "ball_integral_check",
    "q_midpoint",
    "export_trace_csv",
]

DEFAULT_NODES = 100_000
MIN_ACCEPT = 1e-3
W_MAX = 300.0
DECAY_MIN = 0.05


class DegenerateRegion(RuntimeError):
    """Rejection sampling accepted too few nodes."""


# ---------------------------------------------------------------- functions

@dataclass(frozen=True)
class ExteriorFunction:
    """Boundary data with declared L^p-Holder class (p, beta).

    Families: ``constant``, ``power`` min(|y-y0|^beta, cap), ``normal_power``
    min(|n.(y-y0)|^beta, cap), ``mollified_indicator`` (1+tanh(n.(y-y0)/w))/2,
    ``singular`` |y-z0|^-s, and ``indicator`` 1{n.(y-y0) > 0}.
    """

    family: str
    params: dict = field(default_factory=dict)
    p: float = math.inf
    beta: float = 1.0

    def __post_init__(self):
        if not self.p > 1:
            raise DomainError(f"need p in (1, inf], got {self.p}")
        if not self.beta > 0:
            raise DomainError("beta must be positive")
        if self.family == "singular" and self.p == math.inf:
            raise DomainError("the singular family is unbounded; use p < inf")
        if self.family not in _FAMILIES:
            raise DomainError(f"unknown exterior family {self.family!r}")

    def _vec(self, key, d):
        v = np.asarray(self.params.get(key, np.zeros(d)), dtype=float)
        if v.shape != (d,):
            raise DomainError(f"parameter {key} must have length {d}")
        return v

    def _normal(self, d):
        n = np.asarray(self.params.get("normal", np.eye(d)[-1]), dtype=float)
        return n / np.linalg.norm(n)

    @property
    def exponent(self) -> float:
        """Singularity exponent s of the singular family."""
        return float(self.params.get("s", 0.0))

    @property
    def bounded(self) -> bool:
        return self.family != "singular"

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        single = y.ndim == 1
        y = np.atleast_2d(y)
        d = y.shape[1]
        fam, P = self.family, self.params
        if fam == "constant":
            out = np.full(len(y), float(P.get("value", 1.0)))
        elif fam == "power":
            r = np.linalg.norm(y - self._vec("y0", d), axis=1)
            out = np.minimum(r**self.beta, float(P.get("cap", 1.0)))
        elif fam == "normal_power":
            h = np.abs((y - self._vec("y0", d)) @ self._normal(d))
            out = np.minimum(h**self.beta, float(P.get("cap", np.inf)))
        elif fam == "mollified_indicator":
            h = (y - self._vec("y0", d)) @ self._normal(d)
            out = 0.5 * (1 + np.tanh(h / float(P.get("width", 0.1))))
        elif fam == "indicator":
            out = ((y - self._vec("y0", d)) @ self._normal(d) > 0).astype(float)
        else:  # singular
            r = np.linalg.norm(y - self._vec("z0", d), axis=1)
            with np.errstate(divide="ignore"):
                out = r ** (-self.exponent)
        return out[0] if single else out


_FAMILIES = ("constant", "power", "normal_power", "mollified_indicator", "singular", "indicator")


def singular_exponent(d: int, p: float, beta: float) -> float:
    """Default exponent keeping |y|^-s locally L^p-Holder of order beta."""
    if not d / p > beta:
        raise DomainError(f"singular family needs d/p > beta, got d={d}, p={p}, beta={beta}")
    return 0.9 * (d / p - beta)


def exterior_from_config(cfg: dict, d: int = 2) -> ExteriorFunction:
    """Build from ``{family, p, beta, ...params}``; vectors are lists."""
    cfg = dict(cfg)
    family = cfg.pop("family")
    p = cfg.pop("p", math.inf)
    p = math.inf if p in ("inf", None) else float(p)
    beta = float(cfg.pop("beta", 1.0))
    params = {k: (np.asarray(v, dtype=float) if isinstance(v, (list, tuple)) else v)
              for k, v in cfg.items()}
    if family == "singular" and "s" not in params:
        params["s"] = singular_exponent(d, p, beta)
    if family == "singular" and "z0" not in params:
        raise DomainError("singular family needs z0")
    if family == "indicator":
        beta = 1 / p if p < math.inf else beta
    return ExteriorFunction(family, params, p, beta)


# ---------------------------------------------------------------- nodes

def _sobol(dim: int, n: int, seed: int) -> np.ndarray:
    m = max(1, math.ceil(math.log2(max(n, 2))))
    return qmc.Sobol(dim, scramble=True, seed=seed).random_base2(m)


def _ball_nodes(d: int, n_accept: int, seed: int) -> np.ndarray:
    """Sobol points of the unit ball, by rejection from the cube; deterministic in seed."""
    vol_frac = math.pi ** (d / 2) / gamma_fn(d / 2 + 1) / 2**d
    n = int(n_accept / vol_frac * 1.05) + 64
    pts = 2 * _sobol(d, n, seed) - 1
    return pts[np.sum(pts * pts, axis=1) < 1]


# ---------------------------------------------------------------- Holder seminorm

@dataclass
class HolderFit:
    c: float
    shifts: np.ndarray
    ratios: np.ndarray
    slope: float
    diverges: bool


def holder_seminorm(f: ExteriorFunction, shifts, window, n_nodes: int = DEFAULT_NODES,
                    seed: int = 0) -> HolderFit:
    """sup over shifts y of ||f(.+y) - f||_p / |y|^beta on the window box.

    ``window`` is a pair (lo, hi) of corners.  A log-log slope of the ratio
    against |y| below -0.05 flags a class violation.
    """
    lo, hi = (np.asarray(w, dtype=float) for w in window)
    d = lo.size
    nodes = lo + (hi - lo) * _sobol(d, n_nodes, seed)[:n_nodes]
    vol = float(np.prod(hi - lo))
    base = f(nodes)
    shifts = np.atleast_2d(np.asarray(shifts, dtype=float))
    norms = np.linalg.norm(shifts, axis=1)
    if np.any(norms <= 0):
        raise DomainError("shifts must be nonzero")
    ratios = np.empty(len(shifts))
    for k, y in enumerate(shifts):
        diff = np.abs(f(nodes + y) - base)
        diff = np.where(np.isfinite(diff), diff, 0.0)
        if f.p == math.inf:
            val = float(diff.max())
        else:
            val = float((vol * np.mean(diff**f.p)) ** (1 / f.p))
        ratios[k] = val / norms[k] ** f.beta
    pos = ratios > 0
    slope = 0.0
    if pos.sum() >= 3 and np.ptp(np.log(norms[pos])) > 0:
        slope = float(np.polyfit(np.log(norms[pos]), np.log(ratios[pos]), 1)[0])
    return HolderFit(float(ratios.max()), shifts, ratios, slope, slope < -0.05)


# ---------------------------------------------------------------- boundary means

@dataclass
class MeanEstimate:
    value: float
    se: float
    n_accepted: int
    acceptance: float


def _exterior_nodes(D: Domain, xi, r: float, n: int, seed: int):
    unit = _ball_nodes(D.d, n, seed)
    pts = np.asarray(xi, dtype=float) + r * unit
    keep = D.signed_distance(pts) < 0
    return pts[keep], keep.mean()


def boundary_mean(D: Domain, f: ExteriorFunction, xi, r: float, n: int = DEFAULT_NODES,
                  seed: int = 0) -> MeanEstimate:
    """Integral mean of f over B(xi, r) minus the closure of D.

    The unit-ball node set depends only on ``seed``, so means at different r
    share their nodes.
    """
    if not 0 < r < D.R_lip / 2:
        raise DomainError(f"need 0 < r < R_lip/2 = {D.R_lip / 2}")
    # draw enough cube points that about n land outside D
    pts, frac = _exterior_nodes(D, xi, r, 2 * n, seed)
    if frac < MIN_ACCEPT:
        raise DegenerateRegion(f"exterior fraction {frac:.2e} below {MIN_ACCEPT:g}")
    vals = f(pts)
    return MeanEstimate(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(len(vals))),
                        len(vals), float(frac))


@dataclass
class BoundaryMean:
    xi: np.ndarray
    radii: np.ndarray
    means: np.ndarray
    ses: np.ndarray
    limit: float
    diagnostic: float
    cauchy: bool


def boundary_limit(D: Domain, f: ExteriorFunction, xi, gamma: float, k_max: int,
                   k_min: Optional[int] = None, n: int = DEFAULT_NODES, seed: int = 0) -> BoundaryMean:
    """Means at r_k = 2^-k and the diagnostic sup r^-gamma |A(2r) - A(r)|.

    Differences below three combined standard errors count as converged;
    the sequence is flagged non-Cauchy when the last difference is
    significant and significant differences shrink slower than 2^(-0.05 k).
    """
    if k_max < 8:
        raise DomainError("need k_max >= 8")
    if k_min is None:
        k_min = max(1, math.floor(-math.log2(D.R_lip / 2)) + 1)
    ks = np.arange(k_min, k_max + 1)
    radii = 2.0 ** -ks.astype(float)
    est = [boundary_mean(D, f, xi, r, n=n, seed=seed) for r in radii]
    means = np.array([e.value for e in est])
    ses = np.array([e.se for e in est])
    diffs = np.abs(np.diff(means))
    noise = 3 * np.hypot(ses[1:], ses[:-1])
    diagnostic = float(np.max(radii[1:] ** -gamma * diffs)) if len(diffs) else 0.0
    sig = diffs > noise
    cauchy = True
    if sig.sum() >= 2:
        slope = np.polyfit(ks[1:][sig], np.log2(diffs[sig]), 1)[0]
        cauchy = bool(slope < -DECAY_MIN or not sig[-1])
    elif sig.sum() == 1:
        cauchy = not sig[-1] or len(sig) == 1
    return BoundaryMean(np.asarray(xi, dtype=float), radii, means, ses, float(means[-1]),
                        diagnostic, cauchy)


# ---------------------------------------------------------------- oscillation functionals

@dataclass
class Oscillation:
    r: float
    E: float
    F: float
    E_se: float
    F_se: float
    n_pairs: int


def oscillation_functionals(D: Domain, f: ExteriorFunction, phi: BernsteinFunction, xi, r: float,
                            gamma: float, n: int = DEFAULT_NODES, seed: int = 0) -> Oscillation:
    """Double integrals over pairs of exterior points of B(xi, r).

    E weights |f(y) - f(z)| by phi(delta(y)^-2)^{1/2} and divides by
    r^{2d+gamma} phi(r^-2)^{1/2}; F divides the plain double integral by
    r^{2d+gamma}.
    """
    d = D.d
    xi = np.asarray(xi, dtype=float)
    u = 2 * _sobol(2 * d, n, seed)[:n] - 1
    y, z = xi + r * u[:, :d], xi + r * u[:, d:]
    ok = (np.sum(u[:, :d] ** 2, 1) < 1) & (np.sum(u[:, d:] ** 2, 1) < 1)
    sy, sz = D.signed_distance(y), D.signed_distance(z)
    ok &= (sy < 0) & (sz < 0)
    cube = (2 * r) ** (2 * d)
    osc = np.zeros(n)
    osc[ok] = np.abs(f(y[ok]) - f(z[ok]))
    w = np.zeros(n)
    w[ok] = np.sqrt(phi(sy[ok] ** -2.0))
    osc = np.where(np.isfinite(osc), osc, 0.0)
    e_terms = cube * w * osc / (r ** (2 * d + gamma) * math.sqrt(float(phi(r**-2.0))))
    f_terms = cube * osc / r ** (2 * d + gamma)
    root = math.sqrt(n)
    return Oscillation(r, float(e_terms.mean()), float(f_terms.mean()),
                       float(e_terms.std(ddof=1) / root), float(f_terms.std(ddof=1) / root),
                       int(ok.sum()))


# ---------------------------------------------------------------- slab integrals

@dataclass
class SlabCheck:
    lhs: float
    ratio: float
    q: float
    r: float
    s: float


def q_midpoint(delta: float, cap: float = 3.0) -> float:
    """Midpoint of [1, 1/(1-delta)), with the upper end capped."""
    top = cap if delta >= 1 else min(1 / (1 - delta), cap)
    return 0.5 * (1 + top)


def _tangent_nodes(d: int, s: float, n: int, seed: int, round_edge: bool = False):
    """Nodes and weights for the (d-1)-ball |y~| < s.

    With ``round_edge`` the radius is written as s sin(theta), which removes
    the square-root edge of integrands supported on a full ball.
    """
    m = d - 1
    x, w = np.polynomial.legendre.leggauss(n)
    if m == 1:
        if round_edge:
            th, wt = 0.5 * math.pi * x, 0.5 * math.pi * w
            return (s * np.sin(th))[:, None], wt * s * np.cos(th)
        return (s * x)[:, None], s * w
    if m == 2:
        if round_edge:
            th, wt = 0.25 * math.pi * (x + 1), 0.25 * math.pi * w
            rad, wr = s * np.sin(th), wt * s * np.cos(th)
        else:
            rad, wr = 0.5 * s * (x + 1), 0.5 * s * w
        n_ang = 2 * n
        ang = 2 * math.pi * np.arange(n_ang) / n_ang
        R, A = np.meshgrid(rad, ang, indexing="ij")
        W = (wr * rad)[:, None] * np.full(n_ang, 2 * math.pi / n_ang)[None]
        return np.column_stack([(R * np.cos(A)).ravel(), (R * np.sin(A)).ravel()]), W.ravel()
    u = 2 * _sobol(m, n**2, seed) - 1
    u = u[np.sum(u * u, axis=1) < 1]
    vol = math.pi ** (m / 2) / gamma_fn(m / 2 + 1) * s**m
    return s * u, np.full(len(u), vol / len(u))


def _panel_rule(width: float = 4.0, order: int = 20):
    """Composite Gauss-Legendre nodes and weights on [0, W_MAX].

    The integrand in w decays at most like exp(-w) on each panel, which a
    20-point rule integrates to rounding error for panels of width 4.
    """
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.arange(0.0, W_MAX + width, width)
    nodes = (0.5 * (edges[:-1, None] + edges[1:, None]) + 0.5 * width * x[None]).ravel()
    return nodes, np.tile(0.5 * width * w, len(edges) - 1)


def _vertical_integral(D: Domain, xi, Q, yt, lo, hi, split, weight, psi=None,
                       method: str = "gauss"):
    """Integrate weight(delta_D(y)) along vertical lines from lo to hi.

    ``split`` marks where the line crosses the boundary; each side is
    mapped to (0, inf) by t = split +- L e^{-w} to remove the endpoint
    singularity.  The w-range stops at W_MAX, where the boundary distance is
    still representable; the tail beyond is below exp(-W_MAX (1 - a)) for an
    integrand growing like delta^-a.  Near the boundary the computed distance
    loses all relative accuracy, so it is clamped to the exact sandwich
    |rho|/(1+Lam_lip) <= delta <= |rho| with rho = t - psi.
    """
    if psi is None:
        psi = split
    total = np.zeros(len(yt))
    for sign, length in ((1.0, hi - split), (-1.0, split - lo)):
        length = np.maximum(length, 0.0)
        if not np.any(length > 0):
            continue

        def integrand(w):
            step = sign * length * math.exp(-w)
            t = split + step
            y = xi + np.column_stack([yt, t]) @ Q
            # (split - psi) + step keeps full relative accuracy near the boundary
            rho = np.abs((split - psi) + step)
            delta = np.clip(D.dist_to_boundary(y), rho / (1 + D.Lam_lip), rho)
            delta = np.maximum(delta, 1e-150)
            return weight(delta) * length * math.exp(-w)

        if method == "adaptive":
            val, _ = integrate.quad_vec(integrand, 0.0, W_MAX, epsrel=1e-8, epsabs=0.0, limit=400)
        else:
            val = sum(wk * integrand(wn) for wn, wk in zip(*_panel_rule()))
        total += val
    return total


def lemma31_check(D: Domain, phi: BernsteinFunction, xi, s: float, r: float, q: float = 1.0,
                  M: float = 1.0, delta: Optional[float] = None, lambda0: float = 1.0,
                  n_tangent: int = 48, seed: int = 0, method: str = "gauss") -> SlabCheck:
    """Integral of phi(delta_D^-2)^{q/2} over {|y~| < s, |rho_xi| < M r}.

    Returns it together with its ratio to r s^{d-1} phi(r^-2)^{q/2}.
    ``method`` selects the rule along the normal: ``"gauss"`` (composite
    Gauss-Legendre) or ``"adaptive"``.
    """
    if delta is None:
        delta = fit_A3(phi, lambda0=lambda0).delta
    if not (q >= 1 and (delta >= 1 or q < 1 / (1 - delta))):
        raise DomainError(f"need 1 <= q < 1/(1-delta) = {1 / (1 - delta) if delta < 1 else math.inf}")
    if not 0 < s <= D.R_lip / 2:
        raise DomainError(f"need 0 < s <= R_lip/2 = {D.R_lip / 2}")
    if not M >= 1:
        raise DomainError("need M >= 1")
    rmax = min(D.R_lip, lambda0**-0.5) / (2 * M)
    if not 0 < r <= rmax:
        raise DomainError(f"need 0 < r <= {rmax}")
    xi = np.asarray(xi, dtype=float)
    _, Q = D.frame(xi)
    yt, wts = _tangent_nodes(D.d, s, n_tangent, seed)
    psi = D.local_psi(xi, yt)
    inner = _vertical_integral(D, xi, Q, yt, psi - M * r, psi + M * r, psi,
                               lambda dl: phi(dl**-2.0) ** (q / 2), method=method)
    lhs = float(np.sum(wts * inner))
    return SlabCheck(lhs, lhs / (r * s ** (D.d - 1) * float(phi(r**-2.0)) ** (q / 2)), q, r, s)


def ball_integral_check(D: Domain, phi: BernsteinFunction, xi, r: float, lambda0: float = 1.0,
                        n_tangent: int = 48, seed: int = 0, method: str = "gauss") -> SlabCheck:
    """Integral of phi(delta_D^-2)^{1/2} over B(xi, r) and its ratio to r^d phi(r^-2)^{1/2}."""
    rmax = min(D.R_lip, lambda0**-0.5) / (2 + 2 * D.Lam_lip)
    if not 0 < r <= rmax:
        raise DomainError(f"need 0 < r <= {rmax}")
    xi = np.asarray(xi, dtype=float)
    _, Q = D.frame(xi)
    yt, wts = _tangent_nodes(D.d, r, n_tangent, seed, round_edge=True)
    h = np.sqrt(np.maximum(r * r - np.sum(yt * yt, axis=1), 0.0))
    psi = D.local_psi(xi, yt)
    inner = _vertical_integral(D, xi, Q, yt, -h, h, np.clip(psi, -h, h),
                               lambda dl: np.sqrt(phi(dl**-2.0)), psi=psi, method=method)
    lhs = float(np.sum(wts * inner))
    return SlabCheck(lhs, lhs / (r ** D.d * math.sqrt(float(phi(r**-2.0)))), 1.0, r, r)


def export_trace_csv(rows, path) -> Path:
    """Write (r, E_val, F_val, A) rows."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["r", "E_val", "F_val", "A"])
        for row in rows:
            w.writerow([repr(float(v)) for v in row])
    return path
