"""Smooth compactly supported profiles used for data and test functions.

Two families:

- ``poly_bump``: (1 - s^2)^3 on |s| < 1, a C^2 polynomial bump.  Initial
  data built from it have analytic norms and are exactly integrable by
  Gauss rules of moderate order.
- ``SmoothBump1d``: exp(-1/(1 - u^2)) scaled to a center/width, C-infinity
  with analytic first and second derivatives; used for weak-formulation
  test functions where derivatives enter the integrand analytically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import beta as beta_fn


def poly_bump(s):
    """C^2 bump (1 - s^2)^3 on |s| < 1, else 0."""
    s = np.asarray(s, dtype=float)
    w = 1.0 - s * s
    return np.where(w > 0.0, w * w * w, 0.0)


def poly_bump_deriv(s):
    """d/ds of poly_bump: -6 s (1 - s^2)^2 on |s| < 1."""
    s = np.asarray(s, dtype=float)
    w = 1.0 - s * s
    return np.where(w > 0.0, -6.0 * s * w * w, 0.0)


def poly_bump_ball_integral(radius: float) -> float:
    """Integral of poly_bump(|x|/radius) over R^3 (analytic, 64 pi R^3/315)."""
    return 64.0 * np.pi * radius**3 / 315.0


def poly_bump_ball_power_integral(radius: float, p: float) -> float:
    """Integral of poly_bump(|x|/radius)^p over R^3.

    4 pi R^3 int_0^1 s^2 (1-s^2)^(3p) ds = 2 pi R^3 B(3/2, 3p+1).
    """
    return 2.0 * np.pi * radius**3 * beta_fn(1.5, 3.0 * p + 1.0)


@dataclass(frozen=True)
class SmoothBump1d:
    """exp(-1/(1-u^2)) with u = (s - center)/width, supported on |u| < 1."""

    center: float = 0.0
    width: float = 1.0

    def _u(self, s):
        return (np.asarray(s, dtype=float) - self.center) / self.width

    def __call__(self, s):
        u = self._u(s)
        w = 1.0 - u * u
        out = np.zeros_like(u)
        m = w > 1e-12
        out[m] = np.exp(-1.0 / w[m])
        return out

    def deriv(self, s):
        u = self._u(s)
        w = 1.0 - u * u
        out = np.zeros_like(u)
        m = w > 1e-12
        out[m] = np.exp(-1.0 / w[m]) * (-2.0 * u[m] / w[m] ** 2) / self.width
        return out

    def deriv2(self, s):
        u = self._u(s)
        w = 1.0 - u * u
        out = np.zeros_like(u)
        m = w > 1e-12
        um, wm = u[m], w[m]
        phi = np.exp(-1.0 / wm)
        out[m] = phi * (4.0 * um * um / wm**4 - 2.0 * (1.0 + 3.0 * um * um) / wm**3) / self.width**2
        return out

    @property
    def support(self) -> tuple[float, float]:
        return (self.center - self.width, self.center + self.width)


@dataclass(frozen=True)
class SeparableBump3d:
    """Product of three 1D smooth bumps, with analytic gradient and Laplacian."""

    fx: SmoothBump1d
    fy: SmoothBump1d
    fz: SmoothBump1d

    @classmethod
    def cube(cls, center, width: float) -> "SeparableBump3d":
        c = np.asarray(center, dtype=float)
        return cls(SmoothBump1d(c[0], width), SmoothBump1d(c[1], width),
                   SmoothBump1d(c[2], width))

    def _parts(self, X):
        X = np.asarray(X, dtype=float)
        return (self.fx(X[..., 0]), self.fy(X[..., 1]), self.fz(X[..., 2]))

    def __call__(self, X):
        a, b, c = self._parts(X)
        return a * b * c

    def gradient(self, X):
        X = np.asarray(X, dtype=float)
        a, b, c = self._parts(X)
        g = np.empty(X.shape)
        g[..., 0] = self.fx.deriv(X[..., 0]) * b * c
        g[..., 1] = a * self.fy.deriv(X[..., 1]) * c
        g[..., 2] = a * b * self.fz.deriv(X[..., 2])
        return g

    def laplacian(self, X):
        X = np.asarray(X, dtype=float)
        a, b, c = self._parts(X)
        return (self.fx.deriv2(X[..., 0]) * b * c
                + a * self.fy.deriv2(X[..., 1]) * c
                + a * b * self.fz.deriv2(X[..., 2]))

    def support_center_radius(self) -> tuple[np.ndarray, float]:
        """Center and covering radius of the product support box."""
        c = np.array([self.fx.center, self.fy.center, self.fz.center])
        w = np.array([self.fx.width, self.fy.width, self.fz.width])
        return c, float(np.linalg.norm(w))
