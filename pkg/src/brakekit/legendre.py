"""Fenchel/Legendre duality between Lagrangian and Hamiltonian specs.

The fiberwise conjugates are computed by a damped Newton iteration; the
Tonelli conditions make the fiber maps p = L_v and v = H_p mutually inverse
diffeomorphisms, so Newton with backtracking converges globally.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonConvergence
from .model import HamiltonianSpec, LagrangianSpec, PhasePoint, TangentPoint

__all__ = [
    "dual_momentum",
    "dual_velocity",
    "fenchel_L_from_H",
    "fenchel_H_from_L",
    "legendre_map",
    "lagrangian_from_hamiltonian",
    "hamiltonian_from_lagrangian",
    "DualPair",
]

DEFAULT_TOL = 1e-12
DEFAULT_MAXIT = 50


def _newton_fiber(residual, jacobian, x0, tol, maxit, label):
    """Damped Newton on a fiber map with monotone backtracking."""
    x = np.array(x0, dtype=float)
    r = residual(x)
    norm = np.linalg.norm(r)
    for _ in range(maxit):
        if norm <= tol:
            return x
        step = np.linalg.solve(jacobian(x), -r)
        alpha = 1.0
        for _ in range(40):
            trial = x + alpha * step
            r_trial = residual(trial)
            n_trial = np.linalg.norm(r_trial)
            if n_trial < norm:
                x, r, norm = trial, r_trial, n_trial
                break
            alpha *= 0.5
        else:
            raise NonConvergence(f"{label}: line search stalled at residual {norm:.3e}")
    if norm <= tol:
        return x
    raise NonConvergence(f"{label}: residual {norm:.3e} after {maxit} iterations")


def dual_momentum(H: HamiltonianSpec, t, q, v, p0=None,
                  tol=DEFAULT_TOL, maxit=DEFAULT_MAXIT):
    """Solve H_p(t, q, p) = v for the unique momentum p."""
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    x0 = np.zeros_like(v) if p0 is None else np.asarray(p0, dtype=float)
    return _newton_fiber(
        lambda p: np.asarray(H.grad_p(t, q, p)) - v,
        lambda p: np.asarray(H.hess_pp(t, q, p)),
        x0, tol, maxit, "dual_momentum",
    )


def dual_velocity(L: LagrangianSpec, t, q, p, v0=None,
                  tol=DEFAULT_TOL, maxit=DEFAULT_MAXIT):
    """Solve L_v(t, q, v) = p for the unique velocity v."""
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    x0 = np.zeros_like(p) if v0 is None else np.asarray(v0, dtype=float)
    return _newton_fiber(
        lambda v: np.asarray(L.grad_v(t, q, v)) - p,
        lambda v: np.asarray(L.hess_vv(t, q, v)),
        x0, tol, maxit, "dual_velocity",
    )


def fenchel_L_from_H(H: HamiltonianSpec, t, q, v, p0=None,
                     tol=DEFAULT_TOL, maxit=DEFAULT_MAXIT):
    """max_p { p.v - H(t,q,p) }; returns (L value, maximizing p)."""
    p_star = dual_momentum(H, t, q, v, p0=p0, tol=tol, maxit=maxit)
    val = float(np.dot(p_star, np.asarray(v, dtype=float)) - H.value(t, q, p_star))
    return val, p_star


def fenchel_H_from_L(L: LagrangianSpec, t, q, p, v0=None,
                     tol=DEFAULT_TOL, maxit=DEFAULT_MAXIT):
    """max_v { p.v - L(t,q,v) }; returns (H value, maximizing v)."""
    v_star = dual_velocity(L, t, q, p, v0=v0, tol=tol, maxit=maxit)
    val = float(np.dot(np.asarray(p, dtype=float), v_star) - L.value(t, q, v_star))
    return val, v_star


def legendre_map(H: HamiltonianSpec, x: PhasePoint, t=0.0) -> TangentPoint:
    """(q, p) -> (q, H_p(t, q, p))."""
    return TangentPoint(x.q, np.asarray(H.grad_p(t, x.q, x.p)), x.torus)


def lagrangian_from_hamiltonian(H: HamiltonianSpec, tol=DEFAULT_TOL,
                                maxit=DEFAULT_MAXIT) -> LagrangianSpec:
    """Fenchel-dual LagrangianSpec with partials from the implicit function rule.

    With p* = p*(t,q,v) the fiber maximizer:
        L_v = p*,   L_q = -H_q(t,q,p*),   L_vv = H_pp^{-1},
        L_qv = -H_qp H_pp^{-1},  L_qq = -H_qq + H_qp H_pp^{-1} H_qp^T,
    all evaluated at (t, q, p*).  Each call performs the fiber Newton solve,
    so this path is meant for moderate point counts.
    """

    def _solve_batch(t, q, v):
        q = np.atleast_2d(np.asarray(q, dtype=float))
        v = np.atleast_2d(np.asarray(v, dtype=float))
        tt = np.broadcast_to(np.asarray(t, dtype=float), (q.shape[0],))
        return np.stack([
            dual_momentum(H, tt[i], q[i], v[i], tol=tol, maxit=maxit)
            for i in range(q.shape[0])
        ])

    def _wrap(fn):
        def inner(t, q, v):
            q_arr = np.asarray(q, dtype=float)
            batched = q_arr.ndim > 1
            out = fn(t, np.atleast_2d(q_arr), np.atleast_2d(np.asarray(v, dtype=float)))
            return out if batched else out[0]

        return inner

    def value(t, q, v):
        ps = _solve_batch(t, q, v)
        tt = np.broadcast_to(np.asarray(t, dtype=float), (ps.shape[0],))
        return np.sum(ps * v, axis=-1) - H.value(tt, q, ps)

    def grad_q(t, q, v):
        ps = _solve_batch(t, q, v)
        tt = np.broadcast_to(np.asarray(t, dtype=float), (ps.shape[0],))
        return -H.grad_q(tt, q, ps)

    def grad_v(t, q, v):
        return _solve_batch(t, q, v)

    def hess_vv(t, q, v):
        ps = _solve_batch(t, q, v)
        tt = np.broadcast_to(np.asarray(t, dtype=float), (ps.shape[0],))
        return np.linalg.inv(H.hess_pp(tt, q, ps))

    def hess_qv(t, q, v):
        ps = _solve_batch(t, q, v)
        tt = np.broadcast_to(np.asarray(t, dtype=float), (ps.shape[0],))
        hpp_inv = np.linalg.inv(H.hess_pp(tt, q, ps))
        return -np.einsum("...ik,...kj->...ij", H.hess_qp(tt, q, ps), hpp_inv)

    def hess_qq(t, q, v):
        ps = _solve_batch(t, q, v)
        tt = np.broadcast_to(np.asarray(t, dtype=float), (ps.shape[0],))
        hqp = H.hess_qp(tt, q, ps)
        hpp_inv = np.linalg.inv(H.hess_pp(tt, q, ps))
        return -H.hess_qq(tt, q, ps) + np.einsum(
            "...ik,...kl,...jl->...ij", hqp, hpp_inv, hqp)

    return LagrangianSpec(
        H.torus, _wrap(value), _wrap(grad_q), _wrap(grad_v),
        _wrap(hess_vv), _wrap(hess_qv), _wrap(hess_qq),
        reversible=H.reversible, autonomous=H.autonomous,
        name=f"dual({H.name})",
    )


def hamiltonian_from_lagrangian(L: LagrangianSpec, tol=DEFAULT_TOL,
                                maxit=DEFAULT_MAXIT) -> HamiltonianSpec:
    """Fenchel-dual HamiltonianSpec, mirror of lagrangian_from_hamiltonian."""

    def _solve_batch(t, q, p):
        q = np.atleast_2d(np.asarray(q, dtype=float))
        p = np.atleast_2d(np.asarray(p, dtype=float))
        tt = np.broadcast_to(np.asarray(t, dtype=float), (q.shape[0],))
        return np.stack([
            dual_velocity(L, tt[i], q[i], p[i], tol=tol, maxit=maxit)
            for i in range(q.shape[0])
        ])

    def _wrap(fn):
        def inner(t, q, p):
            q_arr = np.asarray(q, dtype=float)
            batched = q_arr.ndim > 1
            out = fn(t, np.atleast_2d(q_arr), np.atleast_2d(np.asarray(p, dtype=float)))
            return out if batched else out[0]

        return inner

    def value(t, q, p):
        vs = _solve_batch(t, q, p)
        tt = np.broadcast_to(np.asarray(t, dtype=float), (vs.shape[0],))
        return np.sum(np.asarray(p) * vs, axis=-1) - L.value(tt, q, vs)

    def grad_q(t, q, p):
        vs = _solve_batch(t, q, p)
        tt = np.broadcast_to(np.asarray(t, dtype=float), (vs.shape[0],))
        return -L.grad_q(tt, q, vs)

    def grad_p(t, q, p):
        return _solve_batch(t, q, p)

    def hess_pp(t, q, p):
        vs = _solve_batch(t, q, p)
        tt = np.broadcast_to(np.asarray(t, dtype=float), (vs.shape[0],))
        return np.linalg.inv(L.hess_vv(tt, q, vs))

    def hess_qp(t, q, p):
        vs = _solve_batch(t, q, p)
        tt = np.broadcast_to(np.asarray(t, dtype=float), (vs.shape[0],))
        hvv_inv = np.linalg.inv(L.hess_vv(tt, q, vs))
        return -np.einsum("...ik,...kj->...ij", L.hess_qv(tt, q, vs), hvv_inv)

    def hess_qq(t, q, p):
        vs = _solve_batch(t, q, p)
        tt = np.broadcast_to(np.asarray(t, dtype=float), (vs.shape[0],))
        hqv = L.hess_qv(tt, q, vs)
        hvv_inv = np.linalg.inv(L.hess_vv(tt, q, vs))
        return -L.hess_qq(tt, q, vs) + np.einsum(
            "...ik,...kl,...jl->...ij", hqv, hvv_inv, hqv)

    return HamiltonianSpec(
        L.torus, _wrap(value), _wrap(grad_q), _wrap(grad_p),
        _wrap(hess_pp), _wrap(hess_qp), _wrap(hess_qq),
        reversible=L.reversible, autonomous=L.autonomous,
        name=f"dual({L.name})",
    )


@dataclass
class DualPair:
    """A Lagrangian and its Fenchel-dual Hamiltonian with solve settings."""

    lagrangian: LagrangianSpec
    hamiltonian: HamiltonianSpec
    newton_tol: float = DEFAULT_TOL
    max_iterations: int = DEFAULT_MAXIT

    @classmethod
    def from_lagrangian(cls, L: LagrangianSpec, **kw) -> "DualPair":
        return cls(L, hamiltonian_from_lagrangian(L), **kw)

    @classmethod
    def from_hamiltonian(cls, H: HamiltonianSpec, **kw) -> "DualPair":
        return cls(lagrangian_from_hamiltonian(H), H, **kw)

    def roundtrip_violation(self, samples=100, rng=None, v_scale=1.0) -> float:
        """Max |L(t,q,v) - (p*.v - H(t,q,p*))| at p* = L_v(t,q,v) over samples."""
        rng = np.random.default_rng(0 if rng is None else rng)
        torus = self.lagrangian.torus
        worst = 0.0
        for _ in range(samples):
            t = float(rng.uniform(0, 1))
            q = rng.uniform(0, 1, torus.dim) * torus.periods
            v = v_scale * rng.normal(size=torus.dim)
            p = np.asarray(self.lagrangian.grad_v(t, q, v))
            lhs = float(self.lagrangian.value(t, q, v))
            rhs = float(np.dot(p, v) - self.hamiltonian.value(t, q, p))
            worst = max(worst, abs(lhs - rhs))
        return worst
