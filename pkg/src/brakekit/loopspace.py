"""Discretized symmetric loop space: metric, mean action, gradients, search.

A symmetric loop gamma(-t) = gamma(t) of integer period m is stored on the
half grid t_j = j m / n, j = 0..n/2 (n even); the full grid is reconstructed
by reflection, so evenness is exact by construction rather than a penalty.
Loop values are continuous lifts in R^N; all system functions are lattice
periodic, so lifts are evaluated directly.

Velocities use centered differences and integrals the periodic trapezoid
rule, which makes every quantity here an O(h^2) discretization.  The action
gradient is the exact derivative of the discrete mean action, so line
searches and Newton refinement are mutually consistent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import GridMismatch, SolverFailure
from .model import LagrangianSpec, TorusSpace

__all__ = [
    "SymmetricLoop",
    "LoopTangent",
    "CriticalPointReport",
    "w12_inner",
    "mean_action",
    "action_differential",
    "action_gradient_even",
    "riesz_gradient",
    "iterate",
    "time_rescale",
    "time_rescale_loop",
    "find_critical",
    "full_gradient_check",
    "assemble_hessian",
    "assemble_gram",
    "even_embedding",
    "loop_distance",
]

DEFAULT_GRID_PER_UNIT = 256


@dataclass(frozen=True)
class SymmetricLoop:
    """Even loop of integer period m sampled on the half grid [0, m/2]."""

    period: int
    half_values: np.ndarray  # (n/2 + 1, N) lift coordinates
    torus: TorusSpace
    winding: np.ndarray = None

    def __post_init__(self):
        vals = np.asarray(self.half_values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        object.__setattr__(self, "half_values", vals)
        if self.period < 1:
            raise ValueError("period must be a positive integer")
        if self.winding is None:
            object.__setattr__(self, "winding", np.zeros(self.torus.dim, dtype=int))

    # -- grid bookkeeping ---------------------------------------------------
    @property
    def n(self) -> int:
        """Full grid size over one period."""
        return 2 * (self.half_values.shape[0] - 1)

    @property
    def dim(self) -> int:
        return self.half_values.shape[1]

    @property
    def h(self) -> float:
        return self.period / self.n

    def full_values(self) -> np.ndarray:
        """Assemble the full grid by reflection: gamma_{n-j} = gamma_j."""
        half = self.half_values
        return np.concatenate([half[:-1], half[::-1][:-1]])

    def full_times(self) -> np.ndarray:
        return np.arange(self.n) * self.h

    def velocities(self) -> np.ndarray:
        """Centered-difference velocities on the full grid."""
        g = self.full_values()
        return (np.roll(g, -1, axis=0) - np.roll(g, 1, axis=0)) / (2.0 * self.h)

    def max_speed(self) -> float:
        return float(np.max(np.linalg.norm(self.velocities(), axis=1)))

    def spline(self) -> CubicSpline:
        g = self.full_values()
        ts = np.append(self.full_times(), self.period)
        vals = np.vstack([g, g[:1]])
        return CubicSpline(ts, vals, bc_type="periodic")

    def shifted_half_period(self) -> "SymmetricLoop":
        """The loop t -> gamma(t + m/2); still even for even loops."""
        g = np.roll(self.full_values(), -self.n // 2, axis=0)
        return SymmetricLoop(self.period, g[: self.n // 2 + 1], self.torus)

    def with_values(self, half_values) -> "SymmetricLoop":
        return SymmetricLoop(self.period, half_values, self.torus)

    # -- constructors ---------------------------------------------------------
    @classmethod
    def constant(cls, q, period=1, torus=None, n_per_unit=DEFAULT_GRID_PER_UNIT):
        q = np.atleast_1d(np.asarray(q, dtype=float))
        torus = torus or TorusSpace(q.shape[0])
        n = n_per_unit * period
        return cls(period, np.tile(q, (n // 2 + 1, 1)), torus)

    @classmethod
    def from_function(cls, fn, period=1, torus=None, n_per_unit=DEFAULT_GRID_PER_UNIT,
                      check_even=True, tol=1e-12):
        """Sample an even function fn(t) -> lift point on the half grid."""
        n = n_per_unit * period
        ts = np.arange(n // 2 + 1) * (period / n)
        vals = np.stack([np.atleast_1d(np.asarray(fn(t), dtype=float)) for t in ts])
        torus = torus or TorusSpace(vals.shape[1])
        if check_even:
            bad = max(np.max(np.abs(np.asarray(fn(-ts[1]), dtype=float) - vals[1])),
                      np.max(np.abs(np.asarray(fn(period - ts[1]), dtype=float) - vals[1])))
            if bad > tol:
                raise ValueError(f"sampled function is not even (residual {bad:.2e})")
        return cls(period, vals, torus)

    @classmethod
    def from_full_samples(cls, period, values, torus, tol=1e-12):
        values = np.asarray(values, dtype=float)
        n = values.shape[0]
        if n % 2:
            raise GridMismatch("full grid size must be even")
        resid = float(np.max(np.abs(values[1:] - values[1:][::-1])))
        if resid > tol:
            raise ValueError(f"samples are not even under reflection (residual {resid:.2e})")
        return cls(period, values[: n // 2 + 1], torus)


@dataclass(frozen=True)
class LoopTangent:
    """Even W^{1,2} section along a symmetric loop, on the same half grid."""

    period: int
    half_values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.half_values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        object.__setattr__(self, "half_values", vals)

    @property
    def n(self) -> int:
        return 2 * (self.half_values.shape[0] - 1)

    def full_values(self) -> np.ndarray:
        half = self.half_values
        return np.concatenate([half[:-1], half[::-1][:-1]])


@dataclass
class CriticalPointReport:
    loop: SymmetricLoop
    gradient_norm: float
    action: float
    converged: bool
    max_speed: float
    iterations: int = 0


# ---------------------------------------------------------------------------
# metric and action
# ---------------------------------------------------------------------------

def _full_tangent(obj):
    if isinstance(obj, (LoopTangent,)):
        return obj.full_values(), obj.period
    raise GridMismatch("expected a LoopTangent")


def w12_inner(xi: LoopTangent, zeta: LoopTangent, period=None) -> float:
    """W^{1,2} inner product: trapezoid of xi.zeta + xi'.zeta' over the period."""
    a, pa = _full_tangent(xi)
    b, pb = _full_tangent(zeta)
    if a.shape != b.shape or pa != pb:
        raise GridMismatch("tangents live on different grids")
    m = period if period is not None else pa
    h = m / a.shape[0]
    da = (np.roll(a, -1, axis=0) - np.roll(a, 1, axis=0)) / (2.0 * h)
    db = (np.roll(b, -1, axis=0) - np.roll(b, 1, axis=0)) / (2.0 * h)
    return float(h * (np.sum(a * b) + np.sum(da * db)))


def _eval_along(L: LagrangianSpec, loop: SymmetricLoop):
    ts = loop.full_times()
    g = loop.full_values()
    v = loop.velocities()
    return ts, g, v


def mean_action(L: LagrangianSpec, loop: SymmetricLoop) -> float:
    """(1/m) trapezoid of L(t, gamma, gamma') with centered-difference velocities."""
    ts, g, v = _eval_along(L, loop)
    return float(loop.h * np.sum(L.value(ts, g, v)) / loop.period)


def _gradient_full(L: LagrangianSpec, loop: SymmetricLoop) -> np.ndarray:
    """Exact gradient of the discrete mean action w.r.t. full-grid values."""
    ts, g, v = _eval_along(L, loop)
    c = loop.h / loop.period
    lq = np.asarray(L.grad_q(ts, g, v))
    lv = np.asarray(L.grad_v(ts, g, v))
    # d/d gamma_j of sum_k L(t_k, g_k, (g_{k+1}-g_{k-1})/2h)
    return c * (lq + (np.roll(lv, 1, axis=0) - np.roll(lv, -1, axis=0)) / (2.0 * loop.h))


def even_embedding(n_full: int, dim: int) -> np.ndarray:
    """Matrix mapping half-grid DOF to full-grid values (reflection)."""
    n_half = n_full // 2 + 1
    E = np.zeros((n_full, n_half))
    for j in range(n_full):
        E[j, min(j, n_full - j)] = 1.0
    return np.kron(E, np.eye(dim))


def action_gradient_even(L: LagrangianSpec, loop: SymmetricLoop) -> np.ndarray:
    """Gradient of the discrete mean action w.r.t. the half-grid DOF, flattened."""
    g_full = _gradient_full(L, loop)
    n = loop.n
    b = g_full[: n // 2 + 1].copy()
    b[1: n // 2] += g_full[n // 2 + 1:][::-1]
    return b.ravel()


def action_differential(L: LagrangianSpec, loop: SymmetricLoop, xi: LoopTangent) -> float:
    """dEA(gamma)[xi] for an even variation, exact for the discrete action."""
    if xi.n != loop.n:
        raise GridMismatch("tangent grid does not match the loop grid")
    return float(action_gradient_even(L, loop) @ xi.half_values.ravel())


def _gram_w12_full(n: int, dim: int, period: float) -> np.ndarray:
    """Matrix of the trapezoid/centered W^{1,2} inner product on the full grid.

    D^T D for the centered difference has the closed form
    (2 I - shift(2) - shift(-2)) / (4 h^2).
    """
    h = period / n
    eye = np.eye(n)
    DtD = (2.0 * eye - np.roll(eye, 2, axis=1) - np.roll(eye, -2, axis=1)) / (4 * h * h)
    G = h * (eye + DtD)
    return np.kron(G, np.eye(dim)) if dim > 1 else G


def riesz_gradient(L: LagrangianSpec, loop: SymmetricLoop) -> LoopTangent:
    """W^{1,2} Riesz representative of the action differential on the even subspace."""
    b = action_gradient_even(L, loop)
    G = gram_even_w12(loop)
    try:
        g = np.linalg.solve(G, b)
    except np.linalg.LinAlgError as exc:
        raise SolverFailure(f"Gram system is singular: {exc}") from exc
    return LoopTangent(loop.period, g.reshape(-1, loop.dim))


def gram_even_w12(loop: SymmetricLoop) -> np.ndarray:
    E = even_embedding(loop.n, loop.dim)
    return E.T @ _gram_w12_full(loop.n, loop.dim, loop.period) @ E


def gradient_norm_w12(L: LagrangianSpec, loop: SymmetricLoop) -> float:
    b = action_gradient_even(L, loop)
    G = gram_even_w12(loop)
    try:
        g = np.linalg.solve(G, b)
    except np.linalg.LinAlgError as exc:
        raise SolverFailure(f"Gram system is singular: {exc}") from exc
    return float(np.sqrt(max(b @ g, 0.0)))


def full_gradient_check(L: LagrangianSpec, loop: SymmetricLoop) -> float:
    """W^{1,2} norm of the unrestricted action gradient at an even loop.

    Symmetric criticality forces full criticality; discretely the reflection
    symmetry of the scheme makes the odd gradient part vanish to round-off,
    so this is a consistency check rather than new information.
    """
    b = _gradient_full(L, loop).ravel()
    G = _gram_w12_full(loop.n, loop.dim, loop.period)
    g = np.linalg.solve(G, b)
    return float(np.sqrt(max(b @ g, 0.0)))


# ---------------------------------------------------------------------------
# iteration and rescaling
# ---------------------------------------------------------------------------

def iterate(loop: SymmetricLoop, k: int) -> SymmetricLoop:
    """Compose with the k-fold covering: same curve read as a (k m)-periodic loop."""
    if k < 1:
        raise ValueError("iteration order must be >= 1")
    if k == 1:
        return loop
    full = loop.full_values()
    tiled = np.tile(full, (k, 1))
    n_new = loop.n * k
    return SymmetricLoop(loop.period * k, tiled[: n_new // 2 + 1], loop.torus)


def time_rescale(L: LagrangianSpec, factor: int) -> LagrangianSpec:
    """Rescaled Lagrangian L~(t, q, v) = L(factor t, q, v / factor).

    A factor-periodic orbit of L corresponds to a 1-periodic orbit of L~ with
    the same mean action.  factor must be a power of two.
    """
    if factor < 1 or factor & (factor - 1):
        raise ValueError("rescaling factor must be a power of two")
    if factor == 1:
        return L
    f = float(factor)

    def value(t, q, v):
        return L.value(f * np.asarray(t), q, np.asarray(v) / f)

    def grad_q(t, q, v):
        return L.grad_q(f * np.asarray(t), q, np.asarray(v) / f)

    def grad_v(t, q, v):
        return L.grad_v(f * np.asarray(t), q, np.asarray(v) / f) / f

    def hess_vv(t, q, v):
        return L.hess_vv(f * np.asarray(t), q, np.asarray(v) / f) / (f * f)

    def hess_qv(t, q, v):
        return L.hess_qv(f * np.asarray(t), q, np.asarray(v) / f) / f

    def hess_qq(t, q, v):
        return L.hess_qq(f * np.asarray(t), q, np.asarray(v) / f)

    return LagrangianSpec(L.torus, value, grad_q, grad_v, hess_vv, hess_qv, hess_qq,
                          reversible=L.reversible, autonomous=L.autonomous,
                          name=f"rescale[{factor}]({L.name})")


def coarsen(loop: SymmetricLoop, factor: int = 2) -> SymmetricLoop:
    """Drop samples to a grid coarser by the factor (must divide n/2)."""
    if (loop.n // 2) % factor:
        raise GridMismatch("coarsening factor must divide half the grid size")
    return SymmetricLoop(loop.period, loop.half_values[::factor], loop.torus)


def refine(loop: SymmetricLoop, factor: int = 2) -> SymmetricLoop:
    """Resample on a grid refined by the factor via the periodic cubic spline.

    The spline of even data is even, so evenness survives exactly.
    """
    sp = loop.spline()
    n_new = loop.n * factor
    ts = np.arange(n_new // 2 + 1) * (loop.period / n_new)
    return SymmetricLoop(loop.period, sp(ts), loop.torus)


def time_rescale_loop(loop: SymmetricLoop, factor: int) -> SymmetricLoop:
    """The loop gamma~(t) = gamma(factor t); period must be divisible by factor.

    Sample values are reused unchanged (the grid density per unit period grows
    by the factor), so rescaled mean actions match to round-off.
    """
    if loop.period % factor:
        raise ValueError("factor must divide the loop period")
    return SymmetricLoop(loop.period // factor, loop.half_values, loop.torus)


# ---------------------------------------------------------------------------
# Hessian assembly (shared with the index machinery)
# ---------------------------------------------------------------------------

def _coefficients_along(L: LagrangianSpec, loop: SymmetricLoop, k: int = 1):
    """P, Q, R along the k-iterated lifted curve, sampled on the iterate grid."""
    it = iterate(loop, k)
    ts, g, v = _eval_along(L, it)
    P = np.asarray(L.hess_vv(ts, g, v))
    Q = np.asarray(L.hess_qv(ts, g, v))
    R = np.asarray(L.hess_qq(ts, g, v))
    return it, ts, P, Q, R


def _scatter_blocks(H, rows, cols, vals, dim):
    """H[rows*dim + a, cols*dim + b] += vals[:, a, b], accumulating duplicates."""
    for a in range(dim):
        for b in range(dim):
            np.add.at(H, (rows * dim + a, cols * dim + b), vals[:, a, b])


def _fold_even(H: np.ndarray, M: int, dim: int) -> np.ndarray:
    """Restrict a full-grid matrix to the even subspace (E^T H E by folding)."""
    n_half = M // 2 + 1
    dof = np.minimum(np.arange(M), M - np.arange(M))
    row_map = (dof[:, None] * dim + np.arange(dim)[None, :]).ravel()
    folded = np.zeros((n_half * dim, H.shape[1]))
    np.add.at(folded, row_map, H)
    out = np.zeros((n_half * dim, n_half * dim))
    np.add.at(out.T, row_map, folded.T)
    return out


def assemble_hessian(L: LagrangianSpec, loop: SymmetricLoop, k: int = 1,
                     subspace: str = "full", scheme: str = "fem") -> np.ndarray:
    """Discretized Hessian of the mean action EA^{[k m]} at the iterated loop.

    scheme "fem" uses P1 elements (positive kinetic part on every mode, used
    for index counting); scheme "centered" is the exact Hessian of the
    centered-difference discrete action (used by Newton refinement).
    Returns a dense symmetric matrix on the requested subspace.
    """
    it, ts, P, Q, R = _coefficients_along(L, loop, k)
    M, dim = it.n, it.dim
    h = it.h
    c = 1.0 / (k * loop.period)
    H = np.zeros((M * dim, M * dim))
    idx = np.arange(M)
    QT = np.swapaxes(Q, -1, -2)

    if scheme == "fem":
        nxt = (idx + 1) % M
        Pm = 0.5 * (P + P[nxt])
        Qm = 0.5 * (Q + Q[nxt])
        Rm = 0.5 * (R + R[nxt])
        kin = c * Pm / h
        mix = c * 0.5 * Qm
        mixT = np.swapaxes(mix, -1, -2)
        pot = c * h * 0.25 * Rm
        for r, sr in ((idx, -1.0), (nxt, 1.0)):
            for s, ss in ((idx, -1.0), (nxt, 1.0)):
                _scatter_blocks(H, r, s, sr * ss * kin + pot, dim)
        for r in (idx, nxt):
            _scatter_blocks(H, r, nxt, mix, dim)
            _scatter_blocks(H, r, idx, -mix, dim)
            _scatter_blocks(H, nxt, r, mixT, dim)
            _scatter_blocks(H, idx, r, -mixT, dim)
    elif scheme == "centered":
        jm, jp = (idx - 1) % M, (idx + 1) % M
        mix = c * Q * 0.5
        mixT = np.swapaxes(mix, -1, -2)
        kin = c * P / (4.0 * h)
        _scatter_blocks(H, idx, idx, c * h * R, dim)
        _scatter_blocks(H, idx, jp, mix, dim)
        _scatter_blocks(H, jp, idx, mixT, dim)
        _scatter_blocks(H, idx, jm, -mix, dim)
        _scatter_blocks(H, jm, idx, -mixT, dim)
        _scatter_blocks(H, jp, jp, kin, dim)
        _scatter_blocks(H, jm, jm, kin, dim)
        _scatter_blocks(H, jp, jm, -kin, dim)
        _scatter_blocks(H, jm, jp, -np.swapaxes(kin, -1, -2), dim)
    else:
        raise ValueError("scheme must be 'fem' or 'centered'")

    H = 0.5 * (H + H.T)
    if subspace == "full":
        return H
    if subspace == "even":
        return _fold_even(H, M, dim)
    raise ValueError("subspace must be 'full' or 'even'")


def assemble_gram(loop: SymmetricLoop, k: int = 1, subspace: str = "full",
                  scheme: str = "fem") -> np.ndarray:
    """W^{1,2} Gram matrix on the (iterated) grid, P1 or trapezoid/centered."""
    it = iterate(loop, k)
    M, dim = it.n, it.dim
    h = it.h
    if scheme == "centered":
        G = _gram_w12_full(M, dim, it.period)
    else:
        # exact P1 mass and stiffness, circulant over the periodic grid
        base = np.zeros((M, M))
        i = np.arange(M)
        base[i, i] = 2.0 * h / 3.0 + 2.0 / h
        base[i, (i + 1) % M] = h / 6.0 - 1.0 / h
        base[i, (i - 1) % M] = h / 6.0 - 1.0 / h
        G = np.kron(base, np.eye(dim)) if dim > 1 else base
    if subspace == "full":
        return G
    return _fold_even(G, M, dim)


# ---------------------------------------------------------------------------
# critical point search
# ---------------------------------------------------------------------------

def find_critical(L: LagrangianSpec, loop0: SymmetricLoop, grad_tol: float = 1e-9,
                  max_iter: int = 200, newton_first: bool = True) -> CriticalPointReport:
    """Critical point search on the even subspace: Newton on the discrete
    gradient with a W^{1,2} gradient-descent fallback.

    Each iteration first tries a (damped) Newton step built from the exact
    Hessian of the discrete action; when that step fails to reduce the
    gradient norm (indefinite or singular Hessian far from a critical point),
    a descent step with Armijo line search on the action is taken instead.
    Newton is what makes saddle-type orbits reachable, so seeds converge to
    the nearest critical point rather than sliding to minima.
    """
    loop = loop0
    G = gram_even_w12(loop)
    import scipy.linalg as sla

    G_chol = sla.cho_factor(G)

    def solve_g(rhs):
        return sla.cho_solve(G_chol, rhs)

    def grad_and_norm(lp):
        b = action_gradient_even(L, lp)
        g = solve_g(b)
        return b, g, float(np.sqrt(max(b @ g, 0.0)))

    b, g, norm = grad_and_norm(loop)
    iters = 0

    for _ in range(max_iter):
        if norm <= grad_tol:
            break
        iters += 1
        improved = False
        if newton_first:
            # FEM Hessian: same O(h^2) operator, but with a positive kinetic
            # part on every mode, so steps cannot excite the checkerboard
            # null direction of the centered scheme.
            H = assemble_hessian(L, loop, k=1, subspace="even", scheme="fem")
            try:
                step = np.linalg.solve(H, -b)
            except np.linalg.LinAlgError:
                step, *_ = np.linalg.lstsq(H, -b, rcond=1e-12)
            if not np.all(np.isfinite(step)):
                step, *_ = np.linalg.lstsq(H, -b, rcond=1e-12)
            alpha = 1.0
            for _ in range(25):
                trial = loop.with_values(loop.half_values + alpha * step.reshape(-1, loop.dim))
                b_t, g_t, n_t = grad_and_norm(trial)
                if n_t < norm:
                    loop, b, g, norm = trial, b_t, g_t, n_t
                    improved = True
                    break
                alpha *= 0.5
        if not improved:
            # Armijo descent on the action along -grad
            action = mean_action(L, loop)
            step = -g.reshape(-1, loop.dim)
            alpha = 1.0
            for _ in range(40):
                trial = loop.with_values(loop.half_values + alpha * step)
                if mean_action(L, trial) < action - 1e-4 * alpha * norm ** 2:
                    loop = trial
                    b, g, norm = grad_and_norm(loop)
                    improved = True
                    break
                alpha *= 0.5
        if not improved:
            break

    return CriticalPointReport(loop, norm, mean_action(L, loop), norm <= grad_tol,
                               loop.max_speed(), iterations=iters)


def loop_distance(a: SymmetricLoop, b: SymmetricLoop) -> float:
    """W^{1,2} distance after the best even-preserving time shift {0, m/2}.

    Loops are compared through minimal per-node lattice displacements, so the
    result does not depend on the chosen lifts.
    """
    if a.period != b.period or a.n != b.n:
        return float("inf")
    torus = a.torus

    def dist_to(bb):
        d = np.array([torus.displacement(av, bv)
                      for av, bv in zip(a.full_values(), bb.full_values())])
        t = LoopTangent(a.period, d[: a.n // 2 + 1])
        return float(np.sqrt(max(w12_inner(t, t), 0.0)))

    return min(dist_to(b), dist_to(b.shifted_half_period()))
