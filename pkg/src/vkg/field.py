"""Explicit solver for the linear inhomogeneous Klein-Gordon equation.

The solution with initial data (u1, u2) and right hand side g splits as
u = u_hom + u_inh.  The homogeneous part is the six-term formula

    u_hom(t,x) = (1/4 pi t^2) S_t[u1] - (1/4 pi t^2) S_t[grad u1 . y]
               - (1/8 pi) S_t[u1] - (1/4 pi) B_t[u1 * K'(xi) t/xi]
               + (1/4 pi t) S_t[u2] - (1/4 pi) B_t[u2 * K(xi)]

with K(xi) = J1(xi)/xi, xi = sqrt(t^2 - |y|^2), S_t a sphere integral over
|y| = t and B_t a ball integral over |y| <= t.  The inhomogeneous part is
the retarded integral

    u_inh(t,x) = (1/4 pi) int_0^t (t-s) S_1[g(s, x + (t-s) w)] ds
               - (1/4 pi) int_0^t B_{t-s}[g(s, x+y) K(xi)] dy ds

where writing the surface integral over the unit sphere absorbs the
1/(t-s) factor, so the integrand is regular as s -> t.  All integrals are
evaluated by product Gauss rules; evaluation is vectorized over batches of
spatial points that share the quadrature geometry.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import specfun
from .lattice import BoxLattice, trilinear, trilinear_vec
from .quadrature import SphereRule, gauss_legendre, gauss_legendre_composite

_DEFAULT_TABLE: specfun.KernelTable | None = None


def _kernel_table() -> specfun.KernelTable:
    global _DEFAULT_TABLE
    if _DEFAULT_TABLE is None:
        _DEFAULT_TABLE = specfun.KernelTable(max_argument=40.0, spacing=1e-3)
    return _DEFAULT_TABLE


@dataclass(frozen=True)
class QuadSpec:
    """Quadrature resolution for the field formulas.

    sphere rule n_theta x n_phi, n_radial Gauss nodes for ball integrals,
    time_order Gauss nodes per source interval for the retarded integral,
    and finite-difference steps for the derivative evaluations.
    """

    n_theta: int = 16
    n_phi: int = 32
    n_radial: int = 24
    time_order: int = 3
    time_min_nodes: int = 32
    h_t: float = 1.0e-3
    h_x: float = 1.0e-3
    use_table: bool = True

    def sphere(self) -> SphereRule:
        return SphereRule(self.n_theta, self.n_phi)

    def doubled(self) -> "QuadSpec":
        return replace(self, n_theta=2 * self.n_theta, n_phi=2 * self.n_phi,
                       n_radial=2 * self.n_radial)

    def kernel_ratio(self, xi):
        if self.use_table and np.max(xi, initial=0.0) <= _kernel_table().max_argument:
            return _kernel_table().eval_ratio(xi)
        return specfun.j1_ratio(xi)

    def kernel_deriv_over(self, xi):
        if self.use_table and np.max(xi, initial=0.0) <= _kernel_table().max_argument:
            return _kernel_table().eval_deriv_over(xi)
        return specfun.j1_ratio_deriv_over_xi(xi)


@dataclass(frozen=True)
class FieldData:
    """Initial data for the field: u(0) = u1, dt u(0) = u2.

    Evaluators take point arrays of shape (..., 3); support_radius is None
    for unbounded data (e.g. plane waves).
    """

    u1: callable
    grad_u1: callable
    u2: callable
    support_radius: float | None = None

    @property
    def is_zero(self) -> bool:
        return self.support_radius == 0.0

    @classmethod
    def zero(cls) -> "FieldData":
        z = lambda X: np.zeros(np.asarray(X).shape[:-1])
        gz = lambda X: np.zeros(np.asarray(X).shape)
        return cls(z, gz, z, support_radius=0.0)

    @classmethod
    def uniform(cls, c1: float, c2: float) -> "FieldData":
        u1 = lambda X: np.full(np.asarray(X).shape[:-1], float(c1))
        u2 = lambda X: np.full(np.asarray(X).shape[:-1], float(c2))
        gz = lambda X: np.zeros(np.asarray(X).shape)
        return cls(u1, gz, u2, support_radius=None)

    @classmethod
    def plane_wave(cls, k) -> "FieldData":
        """u1 = cos(k.x), u2 = omega sin(k.x); exact solution cos(k.x - omega t)
        with dispersion omega^2 = 1 + |k|^2."""
        k = np.asarray(k, dtype=float)
        omega = np.sqrt(1.0 + k @ k)
        u1 = lambda X: np.cos(np.asarray(X) @ k)
        grad = lambda X: -np.sin(np.asarray(X) @ k)[..., None] * k
        u2 = lambda X: omega * np.sin(np.asarray(X) @ k)
        return cls(u1, grad, u2, support_radius=None)

    @classmethod
    def from_radial(cls, profile1: specfun.RadialProfile | None,
                    profile2: specfun.RadialProfile | None) -> "FieldData":
        """Radial profiles for u1 and u2 (either may be None for zero)."""
        def radius(p):
            return 0.0 if p is None else p.support_radius

        def scalar(p):
            if p is None:
                return lambda X: np.zeros(np.asarray(X).shape[:-1])
            return lambda X: p(np.linalg.norm(np.asarray(X, dtype=float), axis=-1))

        def grad1(X):
            X = np.asarray(X, dtype=float)
            if profile1 is None:
                return np.zeros(X.shape)
            r = np.linalg.norm(X, axis=-1)
            dp = profile1.derivative(r)
            with np.errstate(invalid="ignore", divide="ignore"):
                unit = np.where(r[..., None] > 1e-300, X / r[..., None], 0.0)
            return dp[..., None] * unit

        return cls(scalar(profile1), grad1, scalar(profile2),
                   support_radius=max(radius(profile1), radius(profile2)))

    def mollified(self, kernel_profile, kernel_radius: float) -> "FieldData":
        """Convolve radial data with a radial kernel (used for d_n / delta_n).

        Only data constructed from radial profiles can be mollified this
        way; the result is again radial FieldData.
        """
        if not hasattr(self, "_radial_parts"):
            raise ValueError("mollified() needs FieldData built by radial_field_data")
        p1, p2 = self._radial_parts
        conv1 = None if p1 is None else specfun.radial_convolve(p1, (kernel_profile, kernel_radius))
        conv2 = None if p2 is None else specfun.radial_convolve(p2, (kernel_profile, kernel_radius))
        out = FieldData.from_radial(conv1, conv2)
        object.__setattr__(out, "_radial_parts", (conv1, conv2))
        return out


def radial_field_data(amplitude1: float, radius1: float,
                      amplitude2: float, radius2: float,
                      n_grid: int = 512) -> FieldData:
    """C^2 radial bump data: u_i(x) = a_i (1 - (|x|/R_i)^2)^3."""
    from .profiles import poly_bump

    def prof(a, R):
        if a == 0.0 or R <= 0.0:
            return None
        r = np.linspace(0.0, R, n_grid)
        return specfun.RadialProfile(r, a * poly_bump(r / R), R)

    p1, p2 = prof(amplitude1, radius1), prof(amplitude2, radius2)
    data = FieldData.from_radial(p1, p2)
    object.__setattr__(data, "_radial_parts", (p1, p2))
    return data


@dataclass(frozen=True)
class SourceHistory:
    """Right-hand side g sampled on time nodes x a spatial lattice.

    Interpolation is linear in time and trilinear in space; queries outside
    the lattice evaluate to 0 (the lattice must cover the source support).
    """

    times: np.ndarray
    lattice: BoxLattice
    values: np.ndarray  # (n_times, nx, ny, nz)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t[0] != 0.0:
            raise ValueError("source history must start at t = 0")
        if np.any(np.diff(t) <= 0):
            raise ValueError("source time nodes must be increasing")
        if self.values.shape != (len(t),) + self.lattice.shape:
            raise ValueError("source value array shape mismatch")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("source values must be finite")

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def step(self) -> float:
        return float(np.max(np.diff(self.times)))

    @classmethod
    def zero(cls, horizon: float, lattice: BoxLattice, n_times: int = 2) -> "SourceHistory":
        t = np.linspace(0.0, horizon, n_times)
        return cls(t, lattice, np.zeros((n_times,) + lattice.shape))

    @classmethod
    def constant(cls, value: float, horizon: float, lattice: BoxLattice,
                 n_times: int = 2) -> "SourceHistory":
        t = np.linspace(0.0, horizon, n_times)
        return cls(t, lattice, np.full((n_times,) + lattice.shape, float(value)))

    @classmethod
    def from_function(cls, fn, times: np.ndarray, lattice: BoxLattice) -> "SourceHistory":
        pts = lattice.points()
        vals = np.stack([np.asarray(fn(float(s), pts)).reshape(lattice.shape)
                         for s in times])
        return cls(np.asarray(times, dtype=float), lattice, vals)

    def _bracket(self, s: float) -> tuple[int, float]:
        t = self.times
        if s < t[0] - 1e-12 or s > t[-1] + 1e-12:
            raise ValueError(f"time {s} outside covered history [0, {t[-1]}]")
        k = int(np.clip(np.searchsorted(t, s, side="right") - 1, 0, len(t) - 2))
        theta = (s - t[k]) / (t[k + 1] - t[k])
        return k, float(np.clip(theta, 0.0, 1.0))

    def eval(self, s: float, points: np.ndarray) -> np.ndarray:
        # blend the two bracketing slices first (O(lattice)), then do a
        # single interpolation sweep over the query points
        k, theta = self._bracket(s)
        if theta == 0.0:
            vals = self.values[k]
        else:
            vals = (1.0 - theta) * self.values[k] + theta * self.values[k + 1]
        return trilinear(self.lattice, vals, points)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))

    def save_csv(self, path) -> None:
        """Lattice dump: header (horizon, steps, box), then one row-major
        flattened slice per time node."""
        o = self.lattice.origin
        with open(path, "w") as fh:
            fh.write("# horizon,n_times,spacing,ox,oy,oz,nx,ny,nz\n")
            fh.write(f"{self.horizon:.17g},{len(self.times)},{self.lattice.spacing:.17g},"
                     f"{o[0]:.17g},{o[1]:.17g},{o[2]:.17g},"
                     f"{self.lattice.shape[0]},{self.lattice.shape[1]},{self.lattice.shape[2]}\n")
            fh.write("# times\n")
            fh.write(",".join(f"{t:.17g}" for t in self.times) + "\n")
            np.savetxt(fh, self.values.reshape(len(self.times), -1),
                       fmt="%.17g", delimiter=",")

    @classmethod
    def load_csv(cls, path) -> "SourceHistory":
        with open(path) as fh:
            fh.readline()
            head = fh.readline().strip().split(",")
            _, n_times, spacing = float(head[0]), int(head[1]), float(head[2])
            origin = (float(head[3]), float(head[4]), float(head[5]))
            shape = (int(head[6]), int(head[7]), int(head[8]))
            fh.readline()
            times = np.array([float(v) for v in fh.readline().strip().split(",")])
            vals = np.loadtxt(fh, delimiter=",")
        lat = BoxLattice(origin, spacing, shape)
        return cls(times, lat, vals.reshape((n_times,) + shape))


def _hom_terms(data: FieldData, t: float, X: np.ndarray, quad: QuadSpec) -> np.ndarray:
    """The six homogeneous terms at points X (n, 3); returns (6, n)."""
    if t <= 0.0:
        raise ValueError("homogeneous formula requires t > 0")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    sph = quad.sphere()
    omega, wS = sph.points, sph.weights

    terms = np.zeros((6, X.shape[0]))

    # sphere terms: y = t*omega, dS = t^2 dOmega
    Ys = X[:, None, :] - t * omega[None, :, :]
    u1_s = data.u1(Ys)
    terms[0] = (1.0 / (4.0 * np.pi)) * (u1_s @ wS)
    g1_s = data.grad_u1(Ys)
    dot = np.einsum("nqk,qk->nq", g1_s, omega) * t
    terms[1] = -(1.0 / (4.0 * np.pi)) * (dot @ wS)
    terms[2] = -(t * t / (8.0 * np.pi)) * (u1_s @ wS)
    u2_s = data.u2(Ys)
    terms[4] = (t / (4.0 * np.pi)) * (u2_s @ wS)

    # ball terms: radial Gauss x sphere rule; xi = sqrt(t^2 - r^2)
    r, wr = gauss_legendre(0.0, t, quad.n_radial)
    xi = np.sqrt(np.maximum(t * t - r * r, 0.0))
    k_deriv = quad.kernel_deriv_over(xi) * t          # (J1/xi)' t/xi
    k_ratio = quad.kernel_ratio(xi)
    Yb = X[:, None, None, :] - r[None, :, None, None] * omega[None, None, :, :]
    u1_b = data.u1(Yb)
    u2_b = data.u2(Yb)
    wball = (wr * r * r)[:, None] * wS[None, :]       # (nr, nq)
    terms[3] = -(1.0 / (4.0 * np.pi)) * np.einsum("nrq,rq,r->n", u1_b, wball, k_deriv, optimize=True)
    terms[5] = -(1.0 / (4.0 * np.pi)) * np.einsum("nrq,rq,r->n", u2_b, wball, k_ratio, optimize=True)
    return terms


def eval_homogeneous(data: FieldData, t: float, x, quad: QuadSpec | None = None):
    """Homogeneous Klein-Gordon evolution of the initial data at time t > 0.

    `x` may be a single 3-vector or an (n, 3) batch.
    """
    quad = quad or QuadSpec()
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    out = _hom_terms(data, t, x, quad).sum(axis=0)
    return float(out[0]) if single else out


def eval_inhomogeneous(source: SourceHistory, t: float, x,
                       quad: QuadSpec | None = None):
    """Retarded integral of the source at time 0 < t <= horizon.

    Surface part tau * S^2-average minus ball part against J1(xi)/xi; the
    time integral is composite Gauss over the source intervals.
    """
    quad = quad or QuadSpec()
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    multi = MultiSource(source.times, source.lattice,
                        source.values.reshape(len(source.times), -1, 1))
    out = eval_inhomogeneous_multi(multi, t, X, quad)[:, 0]
    return float(out[0]) if single else out


@dataclass(frozen=True)
class MultiSource:
    """Several source components sharing one lattice and time grid.

    Used to evaluate the retarded integral of a source and its spatial
    gradient in a single pass: the kernel weights and the interpolation
    gathers are shared across components.
    """

    times: np.ndarray
    lattice: BoxLattice
    values: np.ndarray  # (n_times, n_points, m)

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def m(self) -> int:
        return self.values.shape[-1]

    def _blend(self, s: float) -> np.ndarray:
        t = self.times
        if s < t[0] - 1e-12 or s > t[-1] + 1e-12:
            raise ValueError(f"time {s} outside covered history [0, {t[-1]}]")
        k = int(np.clip(np.searchsorted(t, s, side="right") - 1, 0, len(t) - 2))
        th = float(np.clip((s - t[k]) / (t[k + 1] - t[k]), 0.0, 1.0))
        return self.values[k] if th == 0.0 else \
            (1.0 - th) * self.values[k] + th * self.values[k + 1]

    def eval(self, s: float, points: np.ndarray) -> np.ndarray:
        return trilinear_vec(self.lattice, self._blend(s), points)

    def component(self, i: int) -> SourceHistory:
        return SourceHistory(self.times, self.lattice,
                             self.values[..., i].reshape(
                                 (len(self.times),) + self.lattice.shape))


def eval_inhomogeneous_multi(source: MultiSource, t: float, X: np.ndarray,
                             quad: QuadSpec) -> np.ndarray:
    """Retarded integral of every component of a MultiSource at points X.

    Returns (n, m).  The surface sphere is folded into the radial rule as
    an extra node at r = tau, so each s-node costs one interpolation sweep.
    """
    if t <= 0.0 or t > source.horizon + 1e-12:
        raise ValueError(f"time {t} outside covered history (0, {source.horizon}]")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    sph = quad.sphere()
    omega, wS = sph.points, sph.weights
    r01, wr01 = gauss_legendre(0.0, 1.0, quad.n_radial)

    edges = np.unique(np.clip(np.concatenate([source.times, [0.0, t]]), 0.0, t))
    n_iv = max(len(edges) - 1, 1)
    order = max(quad.time_order, -(-quad.time_min_nodes // n_iv))
    s_nodes, s_w = gauss_legendre_composite(edges, order)

    acc = np.zeros((X.shape[0], source.m))
    for s, ws in zip(s_nodes, s_w):
        tau = t - s
        if tau <= 0.0:
            continue
        r = np.concatenate([tau * r01, [tau]])
        xi = np.sqrt(np.maximum(tau * tau - r * r, 0.0))
        # radial weights: ball part -r^2 K(xi) wr, surface node +tau
        w_rad = np.concatenate([-(tau * wr01 * r[:-1] ** 2
                                  * quad.kernel_ratio(xi[:-1])), [tau]])
        Y = X[:, None, None, :] + r[None, :, None, None] * omega[None, None, :, :]
        g = source.eval(s, Y)                        # (n, nr+1, nq, m)
        acc += ws * np.einsum("nrqm,r,q->nm", g, w_rad, wS, optimize=True)
    return acc / (4.0 * np.pi)


@dataclass(frozen=True)
class FieldSolution:
    """Assembled field u = u_hom + u_inh with derivative evaluation."""

    data: FieldData
    source: SourceHistory | None = None
    quad: QuadSpec = field(default_factory=QuadSpec)

    @property
    def horizon(self) -> float:
        return self.source.horizon if self.source is not None else np.inf

    def u(self, t: float, x) -> np.ndarray:
        """Field value at time t >= 0, batched over x of shape (..., 3)."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        X = np.atleast_2d(x)
        if t == 0.0:
            out = np.asarray(self.data.u1(X), dtype=float)
        else:
            if self.data.is_zero:
                out = np.zeros(X.shape[0])
            else:
                out = _hom_terms(self.data, t, X, self.quad).sum(axis=0)
            if self.source is not None:
                out = out + eval_inhomogeneous(self.source, t, X, self.quad)
        return float(out[0]) if single else out


def eval_field(sol: FieldSolution, t: float, x,
               quad: QuadSpec | None = None):
    """(u, du/dt, grad u) at (t, x) with central finite differences.

    At t = 0 the initial data are returned directly (the formulas carry
    1/t^2 prefactors); for 0 < t < h_t the time difference shrinks to
    [0, 2t] so no negative times are evaluated.
    """
    quad = quad or sol.quad
    working = sol if quad is sol.quad else replace(sol, quad=quad)
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)

    if t < 0.0:
        raise ValueError("field evaluation requires t >= 0")
    if t == 0.0:
        u = np.asarray(working.data.u1(X), dtype=float)
        du = np.asarray(working.data.u2(X), dtype=float)
        grad = np.asarray(working.data.grad_u1(X), dtype=float)
    else:
        u = working.u(t, X)
        ht = min(quad.h_t, t)
        if t + ht <= working.horizon:
            du = (working.u(t + ht, X) - working.u(t - ht, X)) / (2.0 * ht)
        else:
            # second-order one-sided difference at the covered-history edge
            du = (3.0 * u - 4.0 * working.u(t - ht, X)
                  + working.u(t - 2.0 * ht, X)) / (2.0 * ht)
        hx = quad.h_x
        grad = np.empty_like(X)
        for i in range(3):
            e = np.zeros(3)
            e[i] = hx
            grad[:, i] = (working.u(t, X + e) - working.u(t, X - e)) / (2.0 * hx)
    if single:
        return float(u[0]), float(du[0]), grad[0]
    return u, du, grad


@dataclass(frozen=True)
class SupNormReport:
    t: float
    max_abs_u: float
    bound_factor: float
    ratio: float


def supnorm_monitor(sol: FieldSolution, t: float, sample_points: np.ndarray,
                    data_sup: tuple[float, float, float] | None = None) -> SupNormReport:
    """Crude growth diagnostic: max |u| over samples against (1+t)^4 times
    the data and source sup-norms.

    The sup-norms of (u1, grad u1, u2) are estimated from the sample set
    unless given; the ratio is recorded, not asserted against a constant.
    """
    pts = np.atleast_2d(np.asarray(sample_points, dtype=float))
    if pts.shape[0] == 0:
        raise ValueError("sample set must be nonempty")
    umax = float(np.max(np.abs(sol.u(t, pts)))) if t > 0 else \
        float(np.max(np.abs(sol.data.u1(pts))))
    if data_sup is None:
        s1 = float(np.max(np.abs(sol.data.u1(pts))))
        sg = float(np.max(np.linalg.norm(sol.data.grad_u1(pts), axis=-1)))
        s2 = float(np.max(np.abs(sol.data.u2(pts))))
    else:
        s1, sg, s2 = data_sup
    gsup = sol.source.max_abs() if sol.source is not None else 0.0
    bound = (1.0 + t) ** 4 * (s1 + sg + s2 + gsup)
    ratio = umax / bound if bound > 0 else 0.0
    return SupNormReport(t=t, max_abs_u=umax, bound_factor=bound, ratio=ratio)
