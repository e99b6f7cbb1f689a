"""Bessel kernels and mollifiers for the field formulas.

The explicit solution of the linear Klein-Gordon equation involves the
kernel factors J1(xi)/xi and (J1(xi)/xi)' with xi = sqrt(t^2 - |y|^2);
both have removable singularities at xi = 0 and are evaluated here by
even/odd power series near zero and via J0, J1 elsewhere.  J0 and J1
themselves use the alternating power series up to the switch point 12 and
the Hankel asymptotic expansion beyond, where the optimally truncated
asymptotic error is below 2e-12.

The mollifier pair (d_n, delta_n = d_n * d_n) used to regularize the
coupling is built from the standard radial bump exp(-1/(1-|n x|^2)); the
self-convolution is reduced to one-dimensional radial integrals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .quadrature import gauss_legendre

MAX_BESSEL_ARG = 1.0e4
_SERIES_SWITCH = 12.0          # power series below, Hankel asymptotic above
_RATIO_SWITCH = 1.0e-2         # J1(x)/x by its own even series below this
_DERIV_SWITCH = 0.75           # (J1(x)/x)' by its odd series below this

# J1 series: J1(x) = (x/2) * sum_k c_k w^k, w = (x/2)^2
_J1_COEF = np.array(
    [(-1.0) ** k / (math.factorial(k) * math.factorial(k + 1)) for k in range(36)]
)
# J0 series: J0(x) = sum_k c_k w^k
_J0_COEF = np.array([(-1.0) ** k / math.factorial(k) ** 2 for k in range(36)])


def _hankel_ak(nu: int, count: int) -> np.ndarray:
    mu = 4 * nu * nu
    a = [1.0]
    for k in range(1, count):
        a.append(a[-1] * (mu - (2 * k - 1) ** 2) / (8.0 * k))
    return np.array(a)


_AK = {0: _hankel_ak(0, 22), 1: _hankel_ak(1, 22)}


def _poly_even(coef: np.ndarray, w: np.ndarray) -> np.ndarray:
    s = np.full_like(w, coef[-1])
    for c in coef[-2::-1]:
        s = s * w + c
    return s


def _check_domain(xi: np.ndarray, name: str) -> None:
    if np.any(xi < 0.0):
        raise ValueError(f"{name}: negative argument")
    if np.any(xi > MAX_BESSEL_ARG):
        raise ValueError(f"{name}: argument above supported maximum {MAX_BESSEL_ARG:g}")


def _as_flat(xi) -> tuple[np.ndarray, tuple, bool]:
    x = np.asarray(xi, dtype=float)
    return x.ravel(), x.shape, x.ndim == 0


def _restore(out: np.ndarray, shape: tuple, scalar: bool):
    return float(out[0]) if scalar else out.reshape(shape)


def _bessel(nu: int, xi: np.ndarray) -> np.ndarray:
    x = np.asarray(xi, dtype=float)
    out = np.empty_like(x)
    small = x <= _SERIES_SWITCH

    xs = x[small]
    w = (0.5 * xs) ** 2
    if nu == 1:
        out[small] = _poly_even(_J1_COEF, w) * (0.5 * xs)
    else:
        out[small] = _poly_even(_J0_COEF, w)

    xl = x[~small]
    if xl.size:
        a = _AK[nu]
        inv = 1.0 / xl
        inv2 = inv * inv
        P = np.zeros_like(xl)
        Q = np.zeros_like(xl)
        # even-index terms -> P, odd-index -> Q; 11 terms each (optimal
        # truncation near the switch point)
        pw = np.ones_like(xl)
        for m in range(11):
            P += (-1.0) ** m * a[2 * m] * pw
            Q += (-1.0) ** m * a[2 * m + 1] * pw * inv
            pw = pw * inv2
        om = xl - (0.5 * nu + 0.25) * np.pi
        out[~small] = np.sqrt(2.0 / (np.pi * xl)) * (np.cos(om) * P - np.sin(om) * Q)
    return out


def bessel_j0(xi):
    """Bessel function J0 for 0 <= xi <= MAX_BESSEL_ARG."""
    x, shape, scalar = _as_flat(xi)
    _check_domain(x, "bessel_j0")
    return _restore(_bessel(0, x), shape, scalar)


def bessel_j1(xi):
    """Bessel function J1 for 0 <= xi <= MAX_BESSEL_ARG.

    Absolute error below 3e-12 over the whole range (power series up to
    the switch point 12, Hankel asymptotic beyond; the two branches agree
    to about 1e-12 at the switch).
    """
    x, shape, scalar = _as_flat(xi)
    _check_domain(x, "bessel_j1")
    return _restore(_bessel(1, x), shape, scalar)


def j1_ratio(xi):
    """J1(xi)/xi with the removable singularity at 0 (value 1/2).

    Below the switch point 1e-2 the truncated even series
    1/2 - xi^2/16 + xi^4/384 is used (truncation error < 1e-16 there);
    above it the value is bessel_j1(xi)/xi.
    """
    x, shape, scalar = _as_flat(xi)
    _check_domain(x, "j1_ratio")
    out = np.empty_like(x)
    small = x < _RATIO_SWITCH
    xs2 = x[small] ** 2
    out[small] = 0.5 - xs2 / 16.0 + xs2**2 / 384.0
    xl = x[~small]
    out[~small] = _bessel(1, xl) / xl
    return _restore(out, shape, scalar)


def _deriv_series(x: np.ndarray) -> np.ndarray:
    # sum_{k>=1} (-1)^k 2k x^(2k-1) / (2^(2k+1) k! (k+1)!), 12 terms:
    # -x/8 + x^3/96 - x^5/3072 + ...
    w = x * x
    s = np.zeros_like(x)
    for k in range(12, 0, -1):
        c = (-1.0) ** k * 2.0 * k / (2.0 ** (2 * k + 1) * math.factorial(k) * math.factorial(k + 1))
        s = s * w + c
    return s * x


def j1_ratio_deriv(xi):
    """Derivative (J1(xi)/xi)' with the removable zero at xi = 0.

    Near zero this is the odd series -xi/8 + xi^3/96 - ...; away from zero
    the identity (J1(x)/x)' = (J0(x) - 2 J1(x)/x)/x is used.
    """
    x, shape, scalar = _as_flat(xi)
    _check_domain(x, "j1_ratio_deriv")
    out = np.empty_like(x)
    small = x < _DERIV_SWITCH
    out[small] = _deriv_series(x[small])
    xl = x[~small]
    if xl.size:
        out[~small] = (_bessel(0, xl) - 2.0 * _bessel(1, xl) / xl) / xl
    return _restore(out, shape, scalar)


def j1_ratio_deriv_over_xi(xi):
    """(J1(xi)/xi)'/xi, the even kernel factor of the homogeneous ball term.

    Finite at xi = 0 with value -1/8; this form avoids the 0/0 that would
    arise from dividing j1_ratio_deriv by a vanishing xi.
    """
    x, shape, scalar = _as_flat(xi)
    _check_domain(x, "j1_ratio_deriv_over_xi")
    out = np.empty_like(x)
    small = x < _DERIV_SWITCH
    xs = x[small]
    w = xs * xs
    s = np.zeros_like(xs)
    for k in range(12, 0, -1):
        c = (-1.0) ** k * 2.0 * k / (2.0 ** (2 * k + 1) * math.factorial(k) * math.factorial(k + 1))
        s = s * w + c
    out[small] = s
    xl = x[~small]
    if xl.size:
        out[~small] = (_bessel(0, xl) - 2.0 * _bessel(1, xl) / xl) / (xl * xl)
    return _restore(out, shape, scalar)


@dataclass(frozen=True)
class KernelTable:
    """Uniform table of the field kernel factors with cubic interpolation.

    Tabulates J1(xi)/xi, its derivative, and the derivative divided by xi
    on [0, max_argument] with the given spacing.  Interpolation is local
    4-point Lagrange, whose error at spacing 1e-3 is O(1e-13); direct
    evaluation stays available through the module functions.
    """

    max_argument: float = 40.0
    spacing: float = 1.0e-3
    nodes: np.ndarray = field(init=False, repr=False, compare=False)
    ratio: np.ndarray = field(init=False, repr=False, compare=False)
    deriv: np.ndarray = field(init=False, repr=False, compare=False)
    deriv_over: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.max_argument <= 0 or self.spacing <= 0:
            raise ValueError("table extent and spacing must be positive")
        n = int(round(self.max_argument / self.spacing)) + 1
        xi = self.spacing * np.arange(n)
        object.__setattr__(self, "nodes", xi)
        object.__setattr__(self, "ratio", j1_ratio(xi))
        object.__setattr__(self, "deriv", j1_ratio_deriv(xi))
        object.__setattr__(self, "deriv_over", j1_ratio_deriv_over_xi(xi))

    def _interp(self, samples: np.ndarray, xi: np.ndarray) -> np.ndarray:
        x = np.asarray(xi, dtype=float)
        if np.any(x < 0) or np.any(x > self.max_argument + 1e-12):
            raise ValueError("KernelTable: argument outside tabulated range")
        u = x / self.spacing
        i = np.clip(u.astype(np.int64), 1, len(self.nodes) - 3)
        s = u - i
        sm, sp = s + 1.0, s - 1.0
        sq = s - 2.0
        w0 = -s * sp * sq / 6.0
        w1 = sm * sp * sq / 2.0
        w2 = -sm * s * sq / 2.0
        w3 = sm * s * sp / 6.0
        return (w0 * samples[i - 1] + w1 * samples[i] + w2 * samples[i + 1]
                + w3 * samples[i + 2])

    def eval_ratio(self, xi):
        return self._interp(self.ratio, xi)

    def eval_deriv(self, xi):
        return self._interp(self.deriv, xi)

    def eval_deriv_over(self, xi):
        return self._interp(self.deriv_over, xi)

    def dump_csv(self, path) -> None:
        """Write columns xi, j1_ratio, j1_ratio_deriv for plotting."""
        data = np.column_stack([self.nodes, self.ratio, self.deriv])
        np.savetxt(path, data, fmt="%.17g", delimiter=",",
                   header="xi,j1_ratio,j1_ratio_deriv", comments="")


@dataclass(frozen=True)
class RadialProfile:
    """Radial function sampled on a uniform grid with spline evaluation.

    Evaluates to 0 beyond support_radius; derivative available for
    gradients of radial fields.
    """

    grid: np.ndarray
    values: np.ndarray
    support_radius: float
    _spline: CubicSpline = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_spline", CubicSpline(self.grid, self.values))

    def __call__(self, r):
        r, shape, scalar = _as_flat(r)
        out = np.zeros_like(r)
        m = r <= self.support_radius
        out[m] = self._spline(np.clip(r[m], self.grid[0], self.grid[-1]))
        return _restore(out, shape, scalar)

    def derivative(self, r):
        r, shape, scalar = _as_flat(r)
        out = np.zeros_like(r)
        m = r <= self.support_radius
        out[m] = self._spline(np.clip(r[m], self.grid[0], self.grid[-1]), 1)
        return _restore(out, shape, scalar)

    def integral(self) -> float:
        """3D integral of the radial function, 4*pi int r^2 f(r) dr."""
        r, w = gauss_legendre(0.0, self.support_radius, 200)
        return float(4.0 * np.pi * np.sum(w * r**2 * self(r)))


def radial_convolve(f: "RadialProfile | tuple", g, n_grid: int = 1024) -> RadialProfile:
    """Convolution of two radial functions on R^3, returned as a profile.

    Uses (f*g)(r) = (2 pi / r) int s f(s) [G(r+s) - G(|r-s|)] ds with
    G(t) = int_0^t tau g(tau) dtau, and the r -> 0 limit 4 pi int s^2 f g.
    Both inputs are callables on radii together with their support radius:
    either RadialProfile or a (callable, support_radius) pair.
    """
    def unpack(h):
        if isinstance(h, RadialProfile):
            return h, h.support_radius
        fn, rad = h
        return fn, rad

    ffun, Rf = unpack(f)
    gfun, Rg = unpack(g)

    # cumulative G on a fine grid, then spline
    tg = np.linspace(0.0, Rg, 4097)
    xq, wq = gauss_legendre(0.0, 1.0, 6)
    seg_nodes = tg[:-1, None] + np.diff(tg)[:, None] * xq[None, :]
    seg_w = np.diff(tg)[:, None] * wq[None, :]
    seg_int = np.sum(seg_w * seg_nodes * gfun(seg_nodes), axis=1)
    G = np.concatenate([[0.0], np.cumsum(seg_int)])
    Gsp = CubicSpline(tg, G)
    Gtot = G[-1]

    def Geval(t):
        t = np.asarray(t)
        out = np.where(t >= Rg, Gtot, Gsp(np.clip(t, 0.0, Rg)))
        return out

    R = Rf + Rg
    r = np.linspace(0.0, R, n_grid + 1)
    s, ws = gauss_legendre(0.0, Rf, 512)
    fs = ws * s * ffun(s)

    vals = np.empty_like(r)
    rr = r[1:][:, None]
    inner = Geval(rr + s[None, :]) - Geval(np.abs(rr - s[None, :]))
    vals[1:] = (2.0 * np.pi / r[1:]) * np.sum(fs[None, :] * inner, axis=1)
    vals[0] = 4.0 * np.pi * np.sum(ws * s**2 * ffun(s) * gfun(s))
    return RadialProfile(r, vals, R)


# normalization integral of the standard bump: int_0^1 s^2 exp(-1/(1-s^2)) ds
def _bump_norm_integral() -> float:
    s, w = gauss_legendre(0.0, 1.0, 256)
    return float(np.sum(w * s**2 * np.exp(-1.0 / (1.0 - s**2))))


_BUMP_I = _bump_norm_integral()


def bump_seed(n: int):
    """Normalized radial bump profile c * exp(-1/(1-(n r)^2)) on r < 1/n."""
    c = n**3 / (4.0 * np.pi * _BUMP_I)

    def prof(r):
        r, shape, scalar = _as_flat(r)
        s = n * r
        out = np.zeros_like(s)
        m = s < 1.0
        out[m] = c * np.exp(-1.0 / (1.0 - s[m] ** 2))
        return _restore(out, shape, scalar)

    return prof


def bump_seed_deriv(n: int):
    """Radial derivative of bump_seed(n) (analytic)."""
    c = n**3 / (4.0 * np.pi * _BUMP_I)

    def dprof(r):
        r, shape, scalar = _as_flat(r)
        s = n * r
        out = np.zeros_like(s)
        m = (s < 1.0 - 1e-12)
        w = 1.0 - s[m] ** 2
        out[m] = c * np.exp(-1.0 / w) * (-2.0 * s[m] / w**2) * n
        return _restore(out, shape, scalar)

    return dprof


@dataclass(frozen=True)
class Mollifier:
    """Regularization pair (d_n, delta_n = d_n * d_n).

    d_n is the normalized radial bump supported in B_{1/n}; delta_n is its
    self-convolution, radial with support radius 2/n, precomputed on a
    radial grid.  Both evaluators accept 3-vectors (shape (..., 3)).
    """

    n: int
    seed_radius: float = field(init=False)
    pair_profile: RadialProfile = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("mollifier index must be a positive integer")
        object.__setattr__(self, "seed_radius", 1.0 / self.n)
        prof = bump_seed(self.n)
        pair = radial_convolve((prof, self.seed_radius), (prof, self.seed_radius))
        object.__setattr__(self, "pair_profile", pair)

    @property
    def pair_radius(self) -> float:
        return 2.0 / self.n

    def seed_radial(self, r):
        return bump_seed(self.n)(r)

    def seed_radial_deriv(self, r):
        return bump_seed_deriv(self.n)(r)

    def seed(self, x):
        """d_n at 3-vectors x, shape (..., 3)."""
        x = np.asarray(x, dtype=float)
        return self.seed_radial(np.sqrt(np.sum(x * x, axis=-1)))

    def pair_radial(self, r):
        # spline interpolation may undershoot zero by rounding near the
        # support edge; the kernel is nonnegative by construction
        return np.maximum(self.pair_profile(r), 0.0)

    def pair(self, x):
        """delta_n = d_n * d_n at 3-vectors x, shape (..., 3)."""
        x = np.asarray(x, dtype=float)
        return self.pair_radial(np.sqrt(np.sum(x * x, axis=-1)))


def make_mollifier(n: int) -> Mollifier:
    """Mollifier pair for index n (seed support 1/n, pair support 2/n)."""
    return Mollifier(n)
