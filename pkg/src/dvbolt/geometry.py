"""Bounded spatial domains: normals, backward exit times, reflections.

Conventions: the domain is the level set {delta > 0} of a signed-distance
function; the outward normal is n = -grad(delta)/|grad(delta)|.  Velocities
at a boundary point x split into outgoing (n.v > 0), incoming (n.v < 0) and
grazing (|n.v| below a relative tolerance); grazing rays are treated as
specular by the tracer.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "GRAZING_RTOL",
    "BoundaryHit",
    "Slab",
    "Cylinder",
    "Disk",
    "SignedDistance",
    "specular_reflect",
    "backward_exit",
    "zeta_S",
    "auxiliary_n1",
]

GRAZING_RTOL = 1e-12


@dataclass(frozen=True)
class BoundaryHit:
    t_exit: float              # inf when the backward ray never leaves
    x_hit: np.ndarray | None   # point on the boundary, None when t_exit = inf
    panel: str                 # "base_left" | "base_right" | "lateral" | "boundary" | "none"
    classification: str        # "outgoing" | "incoming" | "grazing" | "none"


def _classify(n: np.ndarray, v: np.ndarray) -> str:
    nv = float(np.dot(n, v))
    if abs(nv) < GRAZING_RTOL * max(1.0, float(np.linalg.norm(v))):
        return "grazing"
    return "outgoing" if nv > 0 else "incoming"


@dataclass(frozen=True)
class Slab:
    """Axial strip (-L, L) x R^2; the transverse directions are homogeneous.

    Boundary panels are the two planes x1 = -L ("base_left", n = (-1,0,0))
    and x1 = +L ("base_right", n = (+1,0,0)).
    """

    L: float

    @property
    def volume(self) -> float:
        # unit transverse cross-section
        return 2.0 * self.L

    def contains(self, x) -> bool:
        return abs(float(np.asarray(x)[0])) < self.L

    def delta(self, x) -> float:
        return self.L - abs(float(np.asarray(x)[0]))

    def normal(self, x) -> np.ndarray:
        x1 = float(np.asarray(x)[0])
        return np.array([1.0 if x1 > 0 else -1.0, 0.0, 0.0])


@dataclass(frozen=True)
class Cylinder:
    """Right circular cylinder (-L, L) x disk(R).

    Panels: bases "base_left"/"base_right" (diffusive under the mixed wall
    model) and the curved "lateral" surface (specular).
    """

    L: float
    R: float

    @property
    def volume(self) -> float:
        return 2.0 * self.L * np.pi * self.R**2

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return abs(x[0]) < self.L and x[1] ** 2 + x[2] ** 2 < self.R**2

    def delta(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return min(self.L - abs(x[0]), self.R - float(np.hypot(x[1], x[2])))

    def normal(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        d_ax = self.L - abs(x[0])
        r = float(np.hypot(x[1], x[2]))
        if d_ax <= self.R - r:
            return np.array([1.0 if x[0] > 0 else -1.0, 0.0, 0.0])
        return np.array([0.0, x[1] / r, x[2] / r])

    def panel_of(self, x, tol: float = 1e-9) -> str:
        x = np.asarray(x, dtype=float)
        if abs(abs(x[0]) - self.L) < tol:
            return "base_left" if x[0] < 0 else "base_right"
        return "lateral"


@dataclass(frozen=True)
class Disk:
    """Disk of radius R in the (x2, x3) plane crossed with the homogeneous axis."""

    R: float

    @property
    def volume(self) -> float:
        return np.pi * self.R**2

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return x[1] ** 2 + x[2] ** 2 < self.R**2

    def delta(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return self.R - float(np.hypot(x[1], x[2]))

    def normal(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        r = float(np.hypot(x[1], x[2]))
        return np.array([0.0, x[1] / r, x[2] / r])


@dataclass(frozen=True)
class SignedDistance:
    """Generic domain {delta > 0} with user-supplied delta and gradient.

    `reach` bounds the step of the bracketing march used for exit times; the
    root is polished by bisection + Newton.
    """

    delta_fn: Callable[[np.ndarray], float]
    grad_fn: Callable[[np.ndarray], np.ndarray]
    reach: float
    t_max: float = 1e3

    def contains(self, x) -> bool:
        return self.delta_fn(np.asarray(x, dtype=float)) > 0

    def delta(self, x) -> float:
        return float(self.delta_fn(np.asarray(x, dtype=float)))

    def normal(self, x) -> np.ndarray:
        g = np.asarray(self.grad_fn(np.asarray(x, dtype=float)), dtype=float)
        return -g / np.linalg.norm(g)


def specular_reflect(n: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Mirror reflection v - 2 (n.v) n for a unit normal n."""
    n = np.asarray(n, dtype=float)
    v = np.asarray(v, dtype=float)
    if abs(np.linalg.norm(n) - 1.0) > 1e-10:
        raise ValueError("normal must be a unit vector")
    return v - 2.0 * np.dot(n, v) * n


def _hit(dom, x, v, t) -> BoundaryHit:
    x_hit = np.asarray(x, dtype=float) - np.asarray(v, dtype=float) * t
    if isinstance(dom, Cylinder):
        panel = dom.panel_of(x_hit)
    elif isinstance(dom, Slab):
        panel = "base_left" if x_hit[0] < 0 else "base_right"
    else:
        panel = "boundary"
    n = dom.normal(x_hit)
    return BoundaryHit(t_exit=float(t), x_hit=x_hit, panel=panel,
                       classification=_classify(n, v))


def _lateral_exit_time(xp: np.ndarray, vp: np.ndarray, R: float) -> float:
    """Smallest s > 0 with |xp - vp s| = R, or inf."""
    a = float(vp @ vp)
    if a == 0.0:
        return np.inf
    b = -2.0 * float(xp @ vp)
    c = float(xp @ xp) - R * R
    disc = b * b - 4 * a * c
    if disc <= 0:
        return np.inf
    s = (-b + np.sqrt(disc)) / (2 * a)
    return s if s > 0 else np.inf


def backward_exit(dom, x, v) -> BoundaryHit:
    """First boundary crossing of the backward ray s -> x - v s, s > 0."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if not dom.contains(x):
        raise ValueError(f"point {x} is not inside the domain")
    if isinstance(dom, Slab):
        v1 = v[0]
        if v1 == 0.0:
            return BoundaryHit(np.inf, None, "none", "none")
        # x1 - v1 s = -L (v1 > 0) or +L (v1 < 0)
        t = (x[0] + dom.L) / v1 if v1 > 0 else (x[0] - dom.L) / v1
        return _hit(dom, x, v, t)
    if isinstance(dom, Cylinder):
        v1 = v[0]
        t_ax = np.inf
        if v1 != 0.0:
            t_ax = (x[0] + dom.L) / v1 if v1 > 0 else (x[0] - dom.L) / v1
        t_lat = _lateral_exit_time(x[1:], v[1:], dom.R)
        t = min(t_ax, t_lat)
        if not np.isfinite(t):
            return BoundaryHit(np.inf, None, "none", "none")
        return _hit(dom, x, v, t)
    if isinstance(dom, Disk):
        t = _lateral_exit_time(x[1:], v[1:], dom.R)
        if not np.isfinite(t):
            return BoundaryHit(np.inf, None, "none", "none")
        return _hit(dom, x, v, t)
    if isinstance(dom, SignedDistance):
        return _sdf_exit(dom, x, v)
    raise TypeError(f"unsupported domain {type(dom)!r}")


def _sdf_exit(dom: SignedDistance, x: np.ndarray, v: np.ndarray) -> BoundaryHit:
    speed = float(np.linalg.norm(v))
    if speed == 0.0:
        return BoundaryHit(np.inf, None, "none", "none")
    # march with steps bounded by the reach until delta changes sign
    step = dom.reach / speed
    t0, d0 = 0.0, dom.delta(x)
    t1 = step
    while t1 * speed <= dom.t_max:
        d1 = dom.delta(x - v * t1)
        if d1 <= 0:
            break
        t0, d0 = t1, d1
        t1 += step
    else:
        return BoundaryHit(np.inf, None, "none", "none")
    # bisection to tight bracket
    for _ in range(80):
        tm = 0.5 * (t0 + t1)
        dm = dom.delta(x - v * tm)
        if dm > 0:
            t0, d0 = tm, dm
        else:
            t1 = tm
        if t1 - t0 < 1e-14 * max(1.0, t1):
            break
    # Newton polish on t -> delta(x - v t)
    t = 0.5 * (t0 + t1)
    for _ in range(4):
        p = x - v * t
        g = np.asarray(dom.grad_fn(p), dtype=float)
        dd = -float(g @ v)
        if dd == 0.0:
            break
        t -= dom.delta(p) / dd
        t = min(max(t, t0), t1)
    return _hit(dom, x, v, t)


def zeta_S(dom, x) -> float:
    """Quadratic ramp d^2/(1+d^2) of the distance d to the cylinder rim; 1 elsewhere.

    The rim is the pair of circles {x1 = +-L, |x_perp| = R} where the bases
    meet the lateral surface.
    """
    if not isinstance(dom, Cylinder):
        return 1.0
    x = np.asarray(x, dtype=float)
    if abs(dom.delta(x)) > 1e-7:
        raise ValueError("zeta_S expects a boundary point")
    r = float(np.hypot(x[1], x[2]))
    d = min(np.hypot(x[0] - dom.L, r - dom.R), np.hypot(x[0] + dom.L, r - dom.R))
    return float(d * d / (1.0 + d * d))


def auxiliary_n1(dom: Cylinder, x) -> np.ndarray:
    """Axial vector field (x1/L, 0, 0): matches n on the bases, orthogonal to n on the side."""
    if not isinstance(dom, Cylinder):
        raise TypeError("auxiliary_n1 is defined for cylinders")
    x = np.asarray(x, dtype=float)
    return np.array([x[0] / dom.L, 0.0, 0.0])
