"""Quadrature rules shared across the package.

Everything here is a thin layer over Gauss-Legendre nodes: 1D rules on
intervals, product rules on the unit sphere (Gauss in cos(theta) times
uniform trapezoid in phi, which is exact for the periodic direction), and
radial x sphere product rules for balls.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def _leggauss(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


def gauss_legendre(a: float, b: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of the n-point Gauss-Legendre rule on [a, b]."""
    if n < 1:
        raise ValueError(f"need at least one node, got n={n}")
    x, w = _leggauss(n)
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return mid + half * x, half * w


def gauss_legendre_composite(edges: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss rule with `order` nodes per subinterval of `edges`."""
    nodes, weights = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        if b <= a:
            continue
        x, w = gauss_legendre(float(a), float(b), order)
        nodes.append(x)
        weights.append(w)
    if not nodes:
        return np.empty(0), np.empty(0)
    return np.concatenate(nodes), np.concatenate(weights)


@dataclass(frozen=True)
class SphereRule:
    """Product quadrature on the unit sphere S^2.

    Gauss-Legendre in cos(theta) (n_theta nodes) times a uniform periodic
    rule in phi (n_phi nodes).  Integrates spherical polynomials of degree
    up to 2*n_theta - 1 exactly in theta and all azimuthal modes below
    n_phi exactly; the weights sum to 4*pi.
    """

    n_theta: int = 16
    n_phi: int = 32
    points: np.ndarray = field(init=False, repr=False, compare=False)
    weights: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n_theta < 1 or self.n_phi < 1:
            raise ValueError("sphere rule orders must be positive")
        ct, wt = _leggauss(self.n_theta)
        st = np.sqrt(1.0 - ct**2)
        phi = 2.0 * np.pi * np.arange(self.n_phi) / self.n_phi
        wphi = 2.0 * np.pi / self.n_phi
        cp, sp = np.cos(phi), np.sin(phi)
        pts = np.empty((self.n_theta, self.n_phi, 3))
        pts[..., 0] = st[:, None] * cp[None, :]
        pts[..., 1] = st[:, None] * sp[None, :]
        pts[..., 2] = ct[:, None]
        w = (wt[:, None] * wphi) * np.ones_like(phi)[None, :]
        object.__setattr__(self, "points", pts.reshape(-1, 3))
        object.__setattr__(self, "weights", w.reshape(-1))

    @property
    def size(self) -> int:
        return self.points.shape[0]


def ball_rule(radius: float, n_radial: int, sphere: SphereRule) -> tuple[np.ndarray, np.ndarray]:
    """Product rule for the ball of given radius.

    Returns points (n_radial*sphere.size, 3) and weights including the r^2
    Jacobian, so that sum(w * f(pts)) approximates the volume integral.
    """
    r, wr = gauss_legendre(0.0, radius, n_radial)
    pts = r[:, None, None] * sphere.points[None, :, :]
    w = (wr * r**2)[:, None] * sphere.weights[None, :]
    return pts.reshape(-1, 3), w.reshape(-1)


def cube_rule(half_width: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Product Gauss rule on the cube [-half_width, half_width]^3."""
    x, w = gauss_legendre(-half_width, half_width, n)
    X, Y, Z = np.meshgrid(x, x, x, indexing="ij")
    pts = np.stack([X, Y, Z], axis=-1).reshape(-1, 3)
    W = (w[:, None, None] * w[None, :, None] * w[None, None, :]).reshape(-1)
    return pts, W
