"""Domains, boundary distances and approach regions.

Two shapes are supported: balls and domains above a smooth graph clipped to a
box.  Both expose a vectorized signed distance (positive inside) from which
membership, boundary distance and the approach-region predicates are built.
:func:`localize` produces a smooth convex piece of a ball or half-space near a
boundary point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import ndtri
from scipy.stats import qmc

from .bernstein import BernsteinFunction, DomainError

__all__ = [
    "UnsupportedShape",
    "BisectionFailure",
    "Profile",
    "PROFILES",
    "Domain",
    "BallDomain",
    "GraphDomain",
    "LocalizedDomain",
    "domain_from_config",
    "dist_to_boundary",
    "vertical_distance",
    "ApproachRegion",
    "in_region",
    "ContainmentReport",
    "containment_check",
    "TangentialCurve",
    "tangential_curve",
    "localize",
    "sample_near",
]

PROJ_MAX_ITER = 200
BISECT_TOL = 1e-13
DEFAULT_L = 10.0


class UnsupportedShape(ValueError):
    pass


class BisectionFailure(RuntimeError):
    pass


def _points(x, d: int) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.shape[-1] != d:
        raise DomainError(f"expected points in R^{d}, got shape {arr.shape}")
    return arr, single


def _ret(arr: np.ndarray, single: bool):
    return arr[0] if single else arr


# ---------------------------------------------------------------- profiles

@dataclass(frozen=True)
class Profile:
    """A smooth function on R^{d-1} with bounded gradient and Hessian."""

    name: str
    params: tuple = ()

    def _p(self, key, default):
        return dict(self.params).get(key, default)

    def value(self, y: np.ndarray) -> np.ndarray:
        n = self.name
        if n == "flat":
            return np.zeros(y.shape[0])
        if n == "bump":
            a, w = self._p("amp", 0.2), self._p("width", 1.0)
            return a * np.exp(-np.sum(y * y, axis=1) / (2 * w * w))
        if n == "smooth_cone":
            s, e = self._p("slope", 0.5), self._p("eps", 0.05)
            return s * (np.sqrt(np.sum(y * y, axis=1) + e * e) - e)
        if n == "wave":
            a, k = self._p("amp", 0.05), self._p("k", 2 * math.pi)
            return a * np.sin(k * y[:, 0])
        raise UnsupportedShape(f"unknown profile {n!r}")

    def grad(self, y: np.ndarray) -> np.ndarray:
        n = self.name
        if n == "flat":
            return np.zeros_like(y)
        if n == "bump":
            w = self._p("width", 1.0)
            return -self.value(y)[:, None] * y / (w * w)
        if n == "smooth_cone":
            s, e = self._p("slope", 0.5), self._p("eps", 0.05)
            return s * y / np.sqrt(np.sum(y * y, axis=1) + e * e)[:, None]
        if n == "wave":
            a, k = self._p("amp", 0.05), self._p("k", 2 * math.pi)
            g = np.zeros_like(y)
            g[:, 0] = a * k * np.cos(k * y[:, 0])
            return g
        raise UnsupportedShape(f"unknown profile {n!r}")

    def hess(self, y: np.ndarray) -> np.ndarray:
        n, m = self.name, y.shape[1]
        eye = np.eye(m)[None]
        if n == "flat":
            return np.zeros((y.shape[0], m, m))
        if n == "bump":
            w = self._p("width", 1.0)
            v = self.value(y)[:, None, None]
            return v * (y[:, :, None] * y[:, None, :] / w**4 - eye / w**2)
        if n == "smooth_cone":
            s, e = self._p("slope", 0.5), self._p("eps", 0.05)
            q = np.sqrt(np.sum(y * y, axis=1) + e * e)[:, None, None]
            return s * (eye / q - y[:, :, None] * y[:, None, :] / q**3)
        if n == "wave":
            a, k = self._p("amp", 0.05), self._p("k", 2 * math.pi)
            h = np.zeros((y.shape[0], m, m))
            h[:, 0, 0] = -a * k * k * np.sin(k * y[:, 0])
            return h
        raise UnsupportedShape(f"unknown profile {n!r}")

    @property
    def lipschitz(self) -> float:
        n = self.name
        if n == "flat":
            return 0.0
        if n == "bump":
            return self._p("amp", 0.2) / self._p("width", 1.0) * math.exp(-0.5)
        if n == "smooth_cone":
            return self._p("slope", 0.5)
        return self._p("amp", 0.05) * self._p("k", 2 * math.pi)

    @property
    def hessian_bound(self) -> float:
        n = self.name
        if n == "flat":
            return 0.0
        if n == "bump":
            return self._p("amp", 0.2) / self._p("width", 1.0) ** 2
        if n == "smooth_cone":
            return self._p("slope", 0.5) / self._p("eps", 0.05)
        return self._p("amp", 0.05) * self._p("k", 2 * math.pi) ** 2


PROFILES = ("flat", "bump", "smooth_cone", "wave")


# ---------------------------------------------------------------- domains

class Domain:
    """Common interface; subclasses implement ``signed_distance``."""

    shape: str
    d: int
    R: float
    Lam: float
    R_lip: float
    Lam_lip: float

    def signed_distance(self, x):
        raise NotImplementedError

    def contains(self, x):
        return self.signed_distance(x) > 0

    def dist_to_boundary(self, x):
        return np.abs(self.signed_distance(x))

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def frame(self, xi) -> tuple[np.ndarray, np.ndarray]:
        """Origin and rotation Q of the local frame; local coords are Q @ (x - xi)."""
        raise NotImplementedError

    def local_psi(self, xi, yt: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def inward_normal(self, xi) -> np.ndarray:
        return self.frame(xi)[1][-1]

    def is_boundary_point(self, xi, tol: float = 1e-9) -> bool:
        return bool(abs(self.signed_distance(np.asarray(xi, dtype=float))) <= tol)


@dataclass(frozen=True, eq=False)
class BallDomain(Domain):
    center: np.ndarray
    radius: float
    shape: str = field(default="ball", init=False)

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float)
        object.__setattr__(self, "center", c)
        if c.size < 2 or not self.radius > 0:
            raise DomainError("ball needs d >= 2 and a positive radius")

    @property
    def d(self) -> int:
        return self.center.size

    # C^{1,1}: over |y~| <= R/2 the local graph has gradient <= 1/sqrt(3)
    # and second derivative <= (4/3)^{3/2} / radius
    @property
    def R(self) -> float:
        return self.radius / 2

    @property
    def Lam(self) -> float:
        return max(1 / math.sqrt(3), (4 / 3) ** 1.5 / self.radius)

    @property
    def R_lip(self) -> float:
        return min(self.radius / 2, 0.99)

    @property
    def Lam_lip(self) -> float:
        return 1 / math.sqrt(3)

    def signed_distance(self, x):
        # R - |x-c| = (2 x.c - |x|^2 - (|c|^2 - R^2)) / (R + |x-c|): exact near the
        # origin when the origin lies on the sphere, no worse than R - |x-c| elsewhere
        pts, single = _points(x, self.d)
        c, R = self.center, self.radius
        q = c @ c - R * R
        num = 2 * pts @ c - np.einsum("ij,ij->i", pts, pts) - q
        return _ret(num / (R + np.linalg.norm(pts - c, axis=1)), single)

    def project(self, x):
        pts, single = _points(x, self.d)
        v = pts - self.center
        nv = np.linalg.norm(v, axis=1, keepdims=True)
        v = np.where(nv > 0, v / np.where(nv > 0, nv, 1), np.eye(self.d)[-1])
        return _ret(self.center + self.radius * v, single)

    def bounding_box(self):
        return self.center - self.radius, self.center + self.radius

    def frame(self, xi):
        xi = np.asarray(xi, dtype=float)
        if not self.is_boundary_point(xi):
            raise DomainError("xi must lie on the sphere")
        n = (self.center - xi) / self.radius
        basis = np.linalg.qr(np.column_stack([n, np.eye(self.d)]))[0][:, : self.d]
        basis[:, 0] *= np.sign(basis[:, 0] @ n)
        # rows: tangents first, inward normal last
        Q = np.vstack([basis[:, 1:].T, n])
        return xi, Q

    def local_psi(self, xi, yt):
        s2 = np.sum(np.atleast_2d(yt) ** 2, axis=1)
        return self.radius - np.sqrt(np.maximum(self.radius**2 - s2, 0.0))


@dataclass(frozen=True, eq=False)
class GraphDomain(Domain):
    """{x_d > psi(x~)} intersected with the open box center +- half."""

    profile: Profile
    d: int = 2
    box_center: Optional[np.ndarray] = None
    half: float = 10.0
    shape: str = field(default="graph", init=False)

    def __post_init__(self):
        if self.d < 2:
            raise DomainError("graph domain needs d >= 2")
        c = self.box_center
        if c is None:
            c = np.zeros(self.d)
            c[-1] = float(self.profile.value(np.zeros((1, self.d - 1)))[0])
        object.__setattr__(self, "box_center", np.asarray(c, dtype=float))

    @property
    def R(self) -> float:
        return 1.0

    @property
    def Lam(self) -> float:
        return max(self.profile.lipschitz, self.profile.hessian_bound)

    @property
    def R_lip(self) -> float:
        return 0.99

    @property
    def Lam_lip(self) -> float:
        return self.profile.lipschitz

    def _graph_distance(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Distance to the graph and the foot point, by damped Newton."""
        xt, xd = pts[:, :-1], pts[:, -1]
        if self.profile.name == "flat":
            foot = pts.copy()
            foot[:, -1] = 0.0
            return np.abs(xd), foot
        prof = self.profile
        y = xt.copy()

        def objective(y):
            return 0.5 * (np.sum((y - xt) ** 2, axis=1) + (prof.value(y) - xd) ** 2)

        F = objective(y)
        mu = np.full(len(y), 1e-3)
        eye = np.eye(y.shape[1])[None]
        active = np.ones(len(y), dtype=bool)
        for _ in range(PROJ_MAX_ITER):
            if not active.any():
                break
            ya = y[active]
            res = prof.value(ya) - xd[active]
            g = prof.grad(ya)
            grad_f = (ya - xt[active]) + res[:, None] * g
            H = eye + g[:, :, None] * g[:, None, :] + res[:, None, None] * prof.hess(ya)
            step = -np.linalg.solve(H + mu[active][:, None, None] * eye, grad_f[:, :, None])[:, :, 0]
            trial = ya + step
            xt_a, xd_a = xt[active], xd[active]
            Ft = 0.5 * (np.sum((trial - xt_a) ** 2, axis=1) + (prof.value(trial) - xd_a) ** 2)
            ok = Ft <= F[active]
            idx = np.flatnonzero(active)
            y[idx[ok]] = trial[ok]
            F[idx[ok]] = Ft[ok]
            mu[idx] = np.where(ok, mu[idx] / 3, mu[idx] * 10)
            small = np.linalg.norm(step, axis=1) <= 1e-15 * (1 + np.linalg.norm(ya, axis=1))
            active[idx[(ok & small) | (mu[idx] > 1e12)]] = False
        foot = np.column_stack([y, prof.value(y)])
        return np.sqrt(2 * F), foot

    def _box_depth(self, pts):
        return np.min(self.half - np.abs(pts - self.box_center), axis=1)

    def signed_distance(self, x):
        pts, single = _points(x, self.d)
        dg, _ = self._graph_distance(pts)
        above = pts[:, -1] > self.profile.value(pts[:, :-1])
        depth = self._box_depth(pts)
        outside_box = np.linalg.norm(np.maximum(np.abs(pts - self.box_center) - self.half, 0), axis=1)
        out = np.where(above, np.minimum(dg, depth), -dg)
        # beyond the box only the distance to the box is used
        out = np.where(depth <= 0, -np.maximum(outside_box, 0.0), out)
        return _ret(out, single)

    def project(self, x):
        pts, single = _points(x, self.d)
        _, foot = self._graph_distance(pts)
        return _ret(foot, single)

    def bounding_box(self):
        return self.box_center - self.half, self.box_center + self.half

    def is_boundary_point(self, xi, tol: float = 1e-9) -> bool:
        xi = np.asarray(xi, dtype=float)
        return bool(abs(xi[-1] - self.profile.value(xi[None, :-1])[0]) <= tol)

    def frame(self, xi):
        xi = np.asarray(xi, dtype=float)
        if not self.is_boundary_point(xi):
            raise DomainError("xi must lie on the graph")
        return xi, np.eye(self.d)

    def local_psi(self, xi, yt):
        xi = np.asarray(xi, dtype=float)
        yt = np.atleast_2d(yt)
        return self.profile.value(xi[:-1] + yt) - xi[-1]

    def inward_normal(self, xi):
        xi = np.asarray(xi, dtype=float)
        g = self.profile.grad(xi[None, :-1])[0]
        n = np.append(-g, 1.0)
        return n / np.linalg.norm(n)


def domain_from_config(cfg: dict, d: int = 2) -> Domain:
    """Build a domain from ``{shape, radius, center, psi, box}``."""
    cfg = dict(cfg)
    shape = cfg.get("shape")
    d = int(cfg.get("d", d))
    if shape == "ball":
        center = cfg.get("center", [0.0] * d)
        return BallDomain(np.asarray(center, dtype=float), float(cfg.get("radius", 1.0)))
    if shape == "graph":
        psi = cfg.get("psi", "flat")
        if isinstance(psi, str):
            prof = Profile(psi)
        else:
            psi = dict(psi)
            name = psi.pop("name")
            prof = Profile(name, tuple(sorted((k, float(v)) for k, v in psi.items())))
        if prof.name not in PROFILES:
            raise UnsupportedShape(f"unknown profile {prof.name!r}")
        box = float(cfg.get("box", 20.0))
        center = cfg.get("box_center")
        return GraphDomain(prof, d, None if center is None else np.asarray(center, dtype=float), box / 2)
    raise UnsupportedShape(f"unknown shape {shape!r}")


def dist_to_boundary(D: Domain, x):
    return D.dist_to_boundary(x)


def vertical_distance(D: Domain, xi, x):
    """x_d - psi_xi(x~) in the local frame at xi."""
    xi = np.asarray(xi, dtype=float)
    pts, single = _points(x, D.d)
    if np.any(np.linalg.norm(pts - xi, axis=1) >= D.R_lip):
        raise DomainError(f"vertical distance needs |x - xi| < R_lip = {D.R_lip}")
    origin, Q = D.frame(xi)
    y = (pts - origin) @ Q.T
    return _ret(y[:, -1] - D.local_psi(xi, y[:, :-1]), single)


# ---------------------------------------------------------------- localization

@dataclass(frozen=True)
class _Convex:
    """Ball (kind='ball': center c, radius s) or half-space {nu.x > b}."""

    kind: str
    c: np.ndarray
    s: float

    def sd(self, x):
        if self.kind == "ball":
            return self.s - np.linalg.norm(x - self.c, axis=1)
        return x @ self.c - self.s

    def project(self, x):
        if self.kind == "ball":
            v = x - self.c
            nv = np.linalg.norm(v, axis=1, keepdims=True)
            scale = np.minimum(1.0, self.s / np.where(nv > 0, nv, 1))
            return self.c + v * scale
        return x + np.maximum(0.0, self.s - x @ self.c)[:, None] * self.c


def _rim(A: _Convex, B: _Convex):
    """Center, normal and radius of the sphere where boundary A meets boundary B."""
    if A.kind == "ball":
        gap = B.c - A.c
        D = np.linalg.norm(gap)
        nu = gap / D
        t = (D * D + A.s**2 - B.s**2) / (2 * D)
        return A.c + t * nu, nu, math.sqrt(max(A.s**2 - t * t, 0.0))
    nu = A.c
    off = A.s - nu @ B.c
    return B.c + off * nu, nu, math.sqrt(max(B.s**2 - off * off, 0.0))


@dataclass(frozen=True, eq=False)
class LocalizedDomain(Domain):
    """Opening of D n B(xi, 3r/4) at scale rho: the rho-neighbourhood of
    W = {delta_D > rho} n B(xi, 3r/4 - rho)."""

    parent: Domain
    xi: np.ndarray
    r: float
    rho: float
    A: _Convex
    B: _Convex
    shape: str = field(default="localized", init=False)

    @property
    def d(self) -> int:
        return self.parent.d

    @property
    def R(self) -> float:
        return self.rho / 2

    @property
    def Lam(self) -> float:
        return max(1 / math.sqrt(3), (4 / 3) ** 1.5 / self.rho)

    @property
    def R_lip(self) -> float:
        return min(self.rho / 2, 0.99)

    @property
    def Lam_lip(self) -> float:
        return 1 / math.sqrt(3)

    def _dist_W(self, x):
        A, B = self.A, self.B
        inA, inB = A.sd(x) >= 0, B.sd(x) >= 0
        pA, pB = A.project(x), B.project(x)
        m, nu, rad = _rim(A, B)
        h = (x - m) @ nu
        xp = x - h[:, None] * nu
        rim = np.sqrt(h * h + (np.linalg.norm(xp - m, axis=1) - rad) ** 2)
        out = np.where(A.sd(pB) >= -1e-14, np.linalg.norm(x - pB, axis=1), rim)
        out = np.where(B.sd(pA) >= -1e-14, np.linalg.norm(x - pA, axis=1), out)
        return np.where(inA & inB, 0.0, out)

    def signed_distance(self, x):
        pts, single = _points(x, self.d)
        a, b = self.A.sd(pts), self.B.sd(pts)
        inside_w = (a >= 0) & (b >= 0)
        out = np.where(inside_w, self.rho + np.minimum(a, b), self.rho - self._dist_W(pts))
        return _ret(out, single)

    def bounding_box(self):
        return self.xi - 0.75 * self.r, self.xi + 0.75 * self.r


def localize(D: Domain, xi, r: float, L: float = DEFAULT_L, n_check: int = 1000,
             seed: int = 0) -> LocalizedDomain:
    """Smooth convex U with D n B(xi, r/2) in U in D n B(xi, r).

    Only convex shapes are supported: balls and flat graphs.
    """
    xi = np.asarray(xi, dtype=float)
    if isinstance(D, BallDomain):
        A = _Convex("ball", D.center, None)
    elif isinstance(D, GraphDomain) and D.profile.name == "flat":
        A = _Convex("half", np.eye(D.d)[-1], None)
    else:
        raise UnsupportedShape(f"localize supports balls and flat graphs, not {D.shape}")
    if not 0 < r <= min(D.R, 1.0):
        raise DomainError(f"need 0 < r <= min(R, 1) = {min(D.R, 1.0)}")
    if not D.is_boundary_point(xi):
        raise DomainError("xi must lie on the boundary")
    rho = r / (2 * L)
    if A.kind == "ball":
        A = _Convex("ball", A.c, D.radius - rho)
    else:
        A = _Convex("half", A.c, rho)
    B = _Convex("ball", xi, 0.75 * r - rho)
    U = LocalizedDomain(D, xi, r, rho, A, B)
    pts = sample_near(D, xi, r, n_check, seed=seed, inside=False)
    inD = D.contains(pts)
    dist = np.linalg.norm(pts - xi, axis=1)
    inU = U.contains(pts)
    if np.any(inD & (dist < r / 2) & ~inU) or np.any(inU & ~(inD & (dist < r))):
        raise RuntimeError("localized set fails the sandwich check")
    return U


# ---------------------------------------------------------------- sampling

def sample_near(D: Domain, xi, radius: float, n: int, seed: int = 0, inside: bool = True,
                r_min: Optional[float] = None) -> np.ndarray:
    """Scrambled Sobol points in B(xi, radius).

    With ``r_min`` the distance to xi is log-uniform on [r_min, radius];
    otherwise points are uniform in the ball.  ``inside`` keeps only points
    of D; the returned array may then hold fewer than n points.
    """
    xi = np.asarray(xi, dtype=float)
    d = D.d
    sob = qmc.Sobol(d + 1, scramble=True, seed=seed)
    u = sob.random(1 << max(1, math.ceil(math.log2(max(n, 2)))))[:n]
    g = ndtri(np.clip(u[:, :d], 1e-12, 1 - 1e-12))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    if r_min is None:
        rad = radius * u[:, d] ** (1 / d)
    else:
        rad = r_min * (radius / r_min) ** u[:, d]
    pts = xi + rad[:, None] * g
    if inside:
        pts = pts[D.contains(pts)]
    return pts


# ---------------------------------------------------------------- approach regions

@dataclass(frozen=True, eq=False)
class ApproachRegion:
    domain: Domain
    f: BernsteinFunction
    xi: np.ndarray
    gamma: float
    a: float = 1.0
    M: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "xi", np.asarray(self.xi, dtype=float))
        if not (self.gamma > 0 and self.a > 0 and self.M > 1):
            raise DomainError("need gamma > 0, a > 0, M > 1")
        if not self.domain.is_boundary_point(self.xi):
            raise DomainError("xi must lie on the boundary")

    def _parts(self, x):
        pts, single = _points(x, self.domain.d)
        delta = self.domain.signed_distance(pts)
        r = np.linalg.norm(pts - self.xi, axis=1)
        return pts, single, delta, r

    def _lhs(self, r):
        d = self.domain.d
        return r ** (self.gamma + d) * np.sqrt(self.f(r**-2.0))

    def _rhs_T(self, delta):
        d = self.domain.d
        lam = delta**-2.0
        return self.a * delta ** (d + 2) * self.f(lam) ** 1.5 / self.f.prime(lam)

    def _rhs_Tprime(self, delta):
        return delta ** self.domain.d * np.sqrt(self.f(delta**-2.0))

    def member(self, x, which: str = "T"):
        pts, single, delta, r = self._parts(x)
        ok = (delta > 0) & (r > 0)
        out = np.zeros(len(pts), dtype=bool)
        if ok.any():
            dd, rr = delta[ok], r[ok]
            if which == "T":
                out[ok] = self._lhs(rr) <= self._rhs_T(dd)
            elif which == "Tprime":
                out[ok] = self._lhs(rr) <= self._rhs_Tprime(dd)
            elif which == "Stolz":
                out[ok] = (rr <= self.M * dd) & (rr < self.M ** (-self.domain.d / self.gamma))
            else:
                raise ValueError(f"unknown region {which!r}")
        return _ret(out, single)


def in_region(reg: ApproachRegion, x, which: str = "T"):
    return reg.member(x, which)


@dataclass
class ContainmentReport:
    n: int
    n_stolz: int
    n_tprime: int
    n_t: int
    violations: np.ndarray
    t_not_tprime: np.ndarray

    @property
    def ok(self) -> bool:
        return len(self.violations) == 0


def containment_check(reg: ApproachRegion, points) -> ContainmentReport:
    """Check S_M -> T' -> T pointwise; T' in T needs a >= 1."""
    if reg.a < 1:
        raise DomainError("the inclusion T' in T needs a >= 1")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if len(pts) == 0:
        raise ValueError("need at least one point")
    s = reg.member(pts, "Stolz")
    tp = reg.member(pts, "Tprime")
    t = reg.member(pts, "T")
    bad = (s & ~tp) | (tp & ~t)
    return ContainmentReport(len(pts), int(s.sum()), int(tp.sum()), int(t.sum()),
                             pts[bad], pts[t & ~tp])


# ---------------------------------------------------------------- tangential curves

@dataclass
class TangentialCurve:
    which: str
    radii: np.ndarray
    points: np.ndarray
    deltas: np.ndarray
    companions: np.ndarray
    companion_deltas: np.ndarray
    companion_in_region: np.ndarray


def _tangent(D: Domain, xi, n, tangent):
    if tangent is None:
        _, Q = D.frame(xi)
        tangent = Q[0]
    e = np.asarray(tangent, dtype=float)
    e = e - (e @ n) * n
    norm = np.linalg.norm(e)
    if norm < 1e-12:
        raise DomainError("tangent direction is parallel to the normal")
    return e / norm


def _bisect(pred, lo: float, hi: float) -> float:
    """Largest theta with pred true, given pred(lo) and not pred(hi)."""
    while hi - lo > BISECT_TOL * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if pred(mid):
            lo = mid
        else:
            hi = mid
    return lo


def tangential_curve(reg: ApproachRegion, radii, which: str = "T", tangent=None,
                     n_scan: int = 256) -> TangentialCurve:
    """Points at distance r_k from xi on the edge of the region.

    Each point lies on the circle through xi spanned by the inward normal and a
    tangent direction; the angle is pushed towards the boundary as far as the
    region allows.  A companion point on the same circle has half the boundary
    distance.
    """
    D, xi = reg.domain, reg.xi
    radii = np.asarray(radii, dtype=float)
    if np.any(radii <= 0) or np.any(np.diff(radii) >= 0):
        raise DomainError("radii must be positive and decreasing")
    if np.any(radii >= D.R / 8):
        raise DomainError(f"radii must be below R/8 = {D.R / 8}")
    n = D.inward_normal(xi)
    e = _tangent(D, xi, n, tangent)

    pts, deltas, comps, cdel = [], [], [], []
    for r in radii:
        def x_of(th):
            return xi + r * (math.cos(th) * n + math.sin(th) * e)

        def sd(th):
            return float(D.signed_distance(x_of(th)))

        if which == "normal":
            th = 0.0
        else:
            def pred(th):
                return bool(reg.member(x_of(th), which))

            if not pred(0.0):
                raise BisectionFailure(f"normal point at r={r:g} is not in {which}")
            grid = np.linspace(0.0, math.pi, n_scan)
            hi = next((g for g in grid[1:] if not pred(g)), None)
            if hi is None:
                raise BisectionFailure(f"no sign change on the circle at r={r:g}")
            lo = grid[np.searchsorted(grid, hi) - 1]
            th = _bisect(pred, lo, hi)
        x = x_of(th)
        dx = sd(th)
        # companion: same circle, beyond th, boundary distance halved
        target = 0.5 * dx
        grid = np.linspace(th, math.pi, n_scan)
        hi = next((g for g in grid[1:] if sd(g) <= target), None)
        if hi is None:
            raise BisectionFailure(f"no companion point at r={r:g}")
        lo = grid[np.searchsorted(grid, hi) - 1]
        tc = _bisect(lambda t: sd(t) > target, lo, hi)
        pts.append(x)
        deltas.append(dx)
        comps.append(x_of(tc))
        cdel.append(sd(tc))
    comps = np.array(comps)
    return TangentialCurve(which, radii, np.array(pts), np.array(deltas), comps,
                           np.array(cdel), np.asarray(reg.member(comps, "T")))
