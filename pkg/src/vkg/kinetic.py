"""Phase-space layer: relativistic characteristics and velocity moments.

A phase point is a 6-vector z = (x, v).  The density at time t is the
pullback f(t, z) = f0(Z(0, t, z)) through the characteristic flow

    dx/ds = v / sqrt(1 + |v|^2),     dv/ds = -grad_u(s, x),

integrated with classical RK4 at a fixed step.  Forces are supplied by any
callable force(s, X) -> grad_u values of shape (n, 3); passing None means
free streaming.  Moments (spatial density, current, kinetic energy, mass)
are Gauss quadratures in v over the momentum support box.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .quadrature import cube_rule, gauss_legendre
from .profiles import (poly_bump, poly_bump_ball_integral,
                       poly_bump_ball_power_integral)


def relativistic_velocity(v):
    """v / sqrt(1 + |v|^2); the result has norm strictly below 1."""
    v = np.asarray(v, dtype=float)
    g = np.sqrt(1.0 + np.sum(v * v, axis=-1, keepdims=True))
    return v / g


def phase_point(x, v) -> np.ndarray:
    """Pack position and momentum into a 6-vector (or batch thereof)."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    return np.concatenate([x, v], axis=-1)


def _rhs(s: float, Z: np.ndarray, force) -> np.ndarray:
    out = np.empty_like(Z)
    out[:, :3] = relativistic_velocity(Z[:, 3:])
    out[:, 3:] = 0.0 if force is None else -force(s, Z[:, :3])
    return out


def trace_characteristic(force, t: float, z, s: float,
                         step: float = 1.0 / 64.0) -> np.ndarray:
    """Flow value Z(s, t, z): start at z at time t, integrate to time s.

    Works on batches z of shape (..., 6); backward integration (s < t) is
    the same RK4 applied with a negative step.  s = t returns z exactly.
    """
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    Z = np.atleast_2d(z).copy()
    if step <= 0:
        raise ValueError("integrator step must be positive")
    span = s - t
    if span == 0.0:
        return z.copy()
    if force is None:
        # free streaming: momenta constant, straight lines (RK4 is exact
        # here, so the closed form is used directly)
        Z[:, :3] += span * relativistic_velocity(Z[:, 3:])
        return Z[0] if single else Z
    n = max(1, int(np.ceil(abs(span) / step - 1e-12)))
    h = span / n
    tk = t
    for _ in range(n):
        k1 = _rhs(tk, Z, force)
        k2 = _rhs(tk + 0.5 * h, Z + 0.5 * h * k1, force)
        k3 = _rhs(tk + 0.5 * h, Z + 0.5 * h * k2, force)
        k4 = _rhs(tk + h, Z + h * k3, force)
        Z += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        tk += h
    return Z[0] if single else Z


@dataclass(frozen=True)
class InitialDensity:
    """Initial phase-space density with support radii and norms.

    `f` maps (..., 6) arrays to nonnegative values, vanishing for
    |x| > space_radius or |v| > momentum_radius.  Norms carry quadrature
    error estimates; for the standard bump family they are analytic.
    """

    f: callable
    space_radius: float
    momentum_radius: float
    p: float
    norm_1: float
    norm_p: float
    norm_kin: float
    norm_sup: float
    norm_error: float = 1.0e-12

    def __call__(self, z):
        return self.f(z)

    def scaled(self, lam: float) -> "InitialDensity":
        """Density lam * f with norms rescaled in closed form."""
        fn = self.f
        return InitialDensity(
            f=lambda z: lam * fn(z),
            space_radius=self.space_radius,
            momentum_radius=self.momentum_radius,
            p=self.p,
            norm_1=lam * self.norm_1,
            norm_p=lam * self.norm_p,
            norm_kin=lam * self.norm_kin,
            norm_sup=lam * self.norm_sup,
            norm_error=lam * self.norm_error,
        )


def standard_bump_density(amplitude: float, space_radius: float,
                          momentum_radius: float, p: float = np.inf) -> InitialDensity:
    """C^2 product bump a (1-(|x|/R)^2)^3 (1-(|v|/P)^2)^3 with analytic norms."""
    if amplitude < 0:
        raise ValueError("amplitude must be nonnegative")
    R, P = float(space_radius), float(momentum_radius)

    def f(z):
        z = np.asarray(z, dtype=float)
        rx = np.linalg.norm(z[..., :3], axis=-1) / R
        rv = np.linalg.norm(z[..., 3:], axis=-1) / P
        return amplitude * poly_bump(rx) * poly_bump(rv)

    Ix = poly_bump_ball_integral(R)
    Iv = poly_bump_ball_integral(P)
    norm_1 = amplitude * Ix * Iv
    if np.isinf(p):
        norm_p = amplitude
    else:
        norm_p = amplitude * (poly_bump_ball_power_integral(R, p)
                              * poly_bump_ball_power_integral(P, p)) ** (1.0 / p)
    # kinetic norm: radial quadrature of sqrt(1+|v|^2) against the v-bump
    r, w = gauss_legendre(0.0, P, 64)
    kin_v = 4.0 * np.pi * np.sum(w * r**2 * np.sqrt(1.0 + r**2) * poly_bump(r / P))
    norm_kin = amplitude * Ix * kin_v
    return InitialDensity(f=f, space_radius=R, momentum_radius=P, p=p,
                          norm_1=norm_1, norm_p=norm_p, norm_kin=norm_kin,
                          norm_sup=amplitude)


def density_from_evaluator(f, space_radius: float, momentum_radius: float,
                           p: float = np.inf, n_nodes: int = 16) -> InitialDensity:
    """Wrap an arbitrary evaluator; norms by 6D product Gauss quadrature."""
    R, P = float(space_radius), float(momentum_radius)
    xp, xw = cube_rule(R, n_nodes)
    vp, vw = cube_rule(P, n_nodes)
    # block over x to bound memory
    n1 = n1_sum = kin_sum = 0.0
    sup = 0.0
    p_sum = 0.0
    gamma = np.sqrt(1.0 + np.einsum("ij,ij->i", vp, vp))
    for i0 in range(0, len(xp), 256):
        xs = xp[i0:i0 + 256]
        ws = xw[i0:i0 + 256]
        Z = np.concatenate([
            np.repeat(xs[:, None, :], len(vp), axis=1),
            np.repeat(vp[None, :, :], len(xs), axis=0)], axis=-1)
        vals = np.asarray(f(Z))
        n1_sum += float(np.einsum("i,ij,j->", ws, vals, vw))
        kin_sum += float(np.einsum("i,ij,j->", ws, vals * gamma[None, :], vw))
        if not np.isinf(p):
            p_sum += float(np.einsum("i,ij,j->", ws, np.abs(vals) ** p, vw))
        sup = max(sup, float(np.max(np.abs(vals))))
    norm_p = sup if np.isinf(p) else p_sum ** (1.0 / p)
    err = abs(n1_sum) * 1.0e-3 + 1.0e-12  # product-Gauss estimate for C^2 data
    return InitialDensity(f=f, space_radius=R, momentum_radius=P, p=p,
                          norm_1=n1_sum, norm_p=norm_p, norm_kin=kin_sum,
                          norm_sup=sup, norm_error=err)


@dataclass(frozen=True)
class KineticState:
    """f(t, .) represented as the pullback of f0 through the flow.

    `force` is the grad_u evaluator over [0, t] (None = free streaming);
    `force_sup` bounds sup |grad_u| and controls the momentum support
    estimate P(t) = P0 + t * force_sup used by the short-circuit and the
    moment quadrature.
    """

    initial: InitialDensity
    force: object
    t: float
    force_sup: float = 0.0
    step: float = 1.0 / 64.0

    @property
    def space_radius(self) -> float:
        return self.initial.space_radius + self.t  # speeds are below 1

    @property
    def momentum_radius(self) -> float:
        return self.initial.momentum_radius + self.t * self.force_sup

    def pulled_back(self, z) -> np.ndarray:
        return trace_characteristic(self.force, self.t, z, 0.0, self.step)

    def eval_f(self, z) -> np.ndarray:
        """Density values at phase points z of shape (..., 6)."""
        z = np.asarray(z, dtype=float)
        single = z.ndim == 1
        Z = np.atleast_2d(z)
        out = np.zeros(Z.shape[0])
        if self.t == 0.0:
            out = np.asarray(self.initial(Z), dtype=float)
            return float(out[0]) if single else out
        rx = np.linalg.norm(Z[:, :3], axis=-1)
        rv = np.linalg.norm(Z[:, 3:], axis=-1)
        live = (rx <= self.space_radius) & (rv <= self.momentum_radius)
        if np.any(live):
            out[live] = self.initial(self.pulled_back(Z[live]))
        return float(out[0]) if single else out


def eval_f(state: KineticState, z):
    return state.eval_f(z)


def _momentum_rule(state: KineticState, n_nodes: int):
    return cube_rule(state.momentum_radius, n_nodes)


def density_rho(state: KineticState, x, n_nodes: int = 16):
    """Spatial density rho(t, x) = int f dv, batched over x (..., 3)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    vp, vw = _momentum_rule(state, n_nodes)
    Z = np.concatenate([np.repeat(X[:, None, :], len(vp), axis=1),
                        np.repeat(vp[None, :, :], len(X), axis=0)], axis=-1)
    vals = state.eval_f(Z.reshape(-1, 6)).reshape(len(X), len(vp))
    out = vals @ vw
    return float(out[0]) if single else out


def current_j(state: KineticState, x, n_nodes: int = 16):
    """Current density j(t, x) = int vhat f dv; |j| <= rho pointwise."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    vp, vw = _momentum_rule(state, n_nodes)
    vhat = relativistic_velocity(vp)
    Z = np.concatenate([np.repeat(X[:, None, :], len(vp), axis=1),
                        np.repeat(vp[None, :, :], len(X), axis=0)], axis=-1)
    vals = state.eval_f(Z.reshape(-1, 6)).reshape(len(X), len(vp))
    out = np.einsum("nq,q,qk->nk", vals, vw, vhat)
    return out[0] if single else out


def _phase_rule(state: KineticState, nx: int, nv: int):
    xp, xw = cube_rule(state.space_radius, nx)
    vp, vw = cube_rule(state.momentum_radius, nv)
    return xp, xw, vp, vw


def _phase_integral(state: KineticState, weight, nx: int, nv: int) -> float:
    xp, xw, vp, vw = _phase_rule(state, nx, nv)
    wv = vw * weight(vp)
    total = 0.0
    for i0 in range(0, len(xp), 128):
        xs, ws = xp[i0:i0 + 128], xw[i0:i0 + 128]
        Z = np.concatenate([np.repeat(xs[:, None, :], len(vp), axis=1),
                            np.repeat(vp[None, :, :], len(xs), axis=0)], axis=-1)
        vals = state.eval_f(Z.reshape(-1, 6)).reshape(len(xs), len(vp))
        total += float(ws @ (vals @ wv))
    return total


def mass(state: KineticState, nx: int = 12, nv: int = 12) -> float:
    """Total mass int f dx dv (conserved by the measure-preserving flow)."""
    return _phase_integral(state, lambda v: np.ones(len(v)), nx, nv)


def kinetic_energy(state: KineticState, nx: int = 12, nv: int = 12) -> float:
    """Relativistic kinetic energy int sqrt(1+|v|^2) f dx dv (>= mass)."""
    return _phase_integral(
        state, lambda v: np.sqrt(1.0 + np.einsum("ij,ij->i", v, v)), nx, nv)


def export_density_csv(path, lattice, rho_values, j_values=None) -> None:
    """Snapshot dump: x, y, z, rho[, jx, jy, jz] rows over lattice nodes."""
    pts = lattice.points()
    cols = [pts, np.asarray(rho_values).reshape(-1, 1)]
    header = "x,y,z,rho"
    if j_values is not None:
        cols.append(np.asarray(j_values).reshape(-1, 3))
        header += ",jx,jy,jz"
    np.savetxt(path, np.hstack(cols), fmt="%.17g", delimiter=",",
               header=header, comments="")


def export_f_slice_csv(path, state: KineticState, plane: str, coords,
                       fixed) -> None:
    """CSV slice of f(t): fixed v (plane='x') or fixed x (plane='v').

    `coords` is an (n, 3) array of the varying block, `fixed` the frozen
    3-vector of the other block.
    """
    coords = np.atleast_2d(np.asarray(coords, dtype=float))
    fixed = np.asarray(fixed, dtype=float)
    blk = np.repeat(fixed[None, :], len(coords), axis=0)
    if plane == "x":
        Z = np.concatenate([coords, blk], axis=-1)
    elif plane == "v":
        Z = np.concatenate([blk, coords], axis=-1)
    else:
        raise ValueError("plane must be 'x' or 'v'")
    vals = state.eval_f(Z)
    np.savetxt(path, np.column_stack([coords, vals]), fmt="%.17g",
               delimiter=",", header="c1,c2,c3,f", comments="")
