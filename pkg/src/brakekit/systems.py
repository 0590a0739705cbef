"""Built-in system families and the JSON system-definition grammar.

A system document looks like

    {
      "dim": 1,
      "periods": [1.0],
      "theta": ["0.3"],
      "lagrangian": {"builtin": "kinetic_potential",
                     "mass": 1.0,
                     "potential": "cos(2*pi*q1)"},
      "numerics": {"grid": 256, "grad_tol": 1e-9,
                   "integrator_tol": 1e-10, "seed": 0}
    }

Expression grammar for "theta" components and "potential": arithmetic
(+ - * / ** and parentheses), decimal literals, the constant pi, the
functions sin and cos, and the coordinates q1..qN.  Expressions must be
lattice-periodic; this is validated by sampling at load time.

The "lagrangian" entry defines the reversible mechanical Lagrangian
L_theta(t, q, v) (even in v).  The loader derives the companions:
L = L_theta - theta[v], its dual Hamiltonian H on the twisted side
(which satisfies the R1 symmetry by construction), and the shifted dual
H_theta = H o Phi on the standard side.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import sympy as sp

from .errors import PreconditionViolated
from .model import (
    HamiltonianSpec,
    LagrangianSpec,
    OneForm,
    TorusSpace,
    magnetic_lagrangian,
)

__all__ = [
    "parse_scalar_field",
    "one_form_from_expressions",
    "kinetic_potential_lagrangian",
    "quartic_kinetic_lagrangian",
    "kinetic_hamiltonian",
    "magnetic_kinetic_hamiltonian",
    "shifted_hamiltonian",
    "MagneticSystem",
    "load_system",
    "DEFAULT_NUMERICS",
]

DEFAULT_NUMERICS = {
    "grid": 256,
    "grad_tol": 1e-9,
    "integrator_tol": 1e-10,
    "seed": 0,
    "blowup_ceiling": 1e6,
}

_ALLOWED_FUNCS = {"sin": sp.sin, "cos": sp.cos, "pi": sp.pi}


def _coords(dim):
    return sp.symbols(" ".join(f"q{i + 1}" for i in range(dim)), real=True) if dim > 1 \
        else (sp.Symbol("q1", real=True),)


def _parse_expr(text, syms):
    local = dict(_ALLOWED_FUNCS)
    local.update({str(s): s for s in syms})
    try:
        expr = sp.sympify(text, locals=local)
    except (sp.SympifyError, SyntaxError) as exc:
        raise ValueError(f"cannot parse expression {text!r}: {exc}") from exc
    extra = expr.free_symbols - set(syms)
    if extra:
        raise ValueError(f"expression {text!r} uses unknown symbols {sorted(map(str, extra))}")
    return expr


def _lambdify_batched(syms, expr, out_shape):
    """Element-wise lambdify that broadcasts constants to the batch shape of q.

    Matrix expressions with mixed constant and varying entries do not batch
    cleanly through a single lambdify call, so each entry gets its own.
    """
    if out_shape == ():
        fn = sp.lambdify(syms, expr, modules="numpy")

        def wrapped_scalar(q):
            q = np.asarray(q, dtype=float)
            cols = [q[..., i] for i in range(len(syms))]
            val = np.asarray(fn(*cols), dtype=float)
            target = q.shape[:-1]
            return np.broadcast_to(val, target).copy() if val.shape != target else val

        return wrapped_scalar

    entries = [sp.lambdify(syms, e, modules="numpy") for e in expr]

    def wrapped(q):
        q = np.asarray(q, dtype=float)
        cols = [q[..., i] for i in range(len(syms))]
        batch = q.shape[:-1]
        flat = [np.broadcast_to(np.asarray(fn(*cols), dtype=float), batch)
                for fn in entries]
        return np.stack(flat, axis=-1).reshape(batch + out_shape)

    return wrapped


def parse_scalar_field(torus: TorusSpace, text: str):
    """Parse a scalar field of q into (value, gradient, hessian) evaluators."""
    syms = _coords(torus.dim)
    expr = _parse_expr(text, syms)
    grad = sp.Matrix([sp.diff(expr, s) for s in syms])
    hess = sp.Matrix([[sp.diff(expr, a, b) for b in syms] for a in syms])
    value = _lambdify_batched(syms, expr, ())
    gradient = _lambdify_batched(syms, grad.T, (1, torus.dim))
    hessian = _lambdify_batched(syms, hess, (torus.dim, torus.dim))

    def grad_fn(q):
        return gradient(q)[..., 0, :]

    return value, grad_fn, hessian


def one_form_from_expressions(torus: TorusSpace, exprs, validate: bool = True) -> OneForm:
    """Build a OneForm from one expression string per component."""
    if len(exprs) != torus.dim:
        raise ValueError("need one component expression per coordinate")
    syms = _coords(torus.dim)
    comps = [_parse_expr(e, syms) for e in exprs]
    comp_mat = sp.Matrix(comps).T  # row vector
    jac = sp.Matrix([[sp.diff(c, s) for s in syms] for c in comps])
    hess_rows = [sp.Matrix([[sp.diff(c, a, b) for b in syms] for a in syms]) for c in comps]

    comp_fn = _lambdify_batched(syms, comp_mat, (1, torus.dim))
    jac_fn = _lambdify_batched(syms, jac, (torus.dim, torus.dim))
    hess_fns = [_lambdify_batched(syms, h, (torus.dim, torus.dim)) for h in hess_rows]

    def components(q):
        return comp_fn(q)[..., 0, :]

    def hessian(q):
        q = np.asarray(q, dtype=float)
        return np.stack([h(q) for h in hess_fns], axis=-3)

    form = OneForm(torus, components, jac_fn, hessian, name=f"[{', '.join(exprs)}]")
    if validate:
        bad = form.periodicity_violation()
        if bad > 1e-12:
            raise PreconditionViolated(
                f"one-form components are not lattice-periodic (violation {bad:.2e})")
    return form


def kinetic_potential_lagrangian(torus: TorusSpace, potential: str = "0",
                                 mass: float = 1.0) -> LagrangianSpec:
    """Reversible mechanical Lagrangian L = m|v|^2/2 - V(q)."""
    vval, vgrad, vhess = parse_scalar_field(torus, potential)
    n = torus.dim
    eye = np.eye(n)

    def value(t, q, v):
        v = np.asarray(v, dtype=float)
        return 0.5 * mass * np.sum(v * v, axis=-1) - vval(q)

    def grad_q(t, q, v):
        return -vgrad(q)

    def grad_v(t, q, v):
        return mass * np.asarray(v, dtype=float)

    def hess_vv(t, q, v):
        q = np.asarray(q, dtype=float)
        return np.broadcast_to(mass * eye, q.shape[:-1] + (n, n)).copy()

    def hess_qv(t, q, v):
        q = np.asarray(q, dtype=float)
        return np.zeros(q.shape[:-1] + (n, n))

    def hess_qq(t, q, v):
        return -vhess(q)

    return LagrangianSpec(torus, value, grad_q, grad_v, hess_vv, hess_qv, hess_qq,
                          reversible=True, autonomous=True,
                          name=f"m|v|^2/2 - ({potential})")


def quartic_kinetic_lagrangian(torus: TorusSpace, potential: str = "0") -> LagrangianSpec:
    """Tonelli Lagrangian with quartic kinetic growth, |v|^4/4 + |v|^2/2 - V(q).

    Not of quadratic growth: the fiber Hessian is unbounded in v, which makes
    this the standard witness for the growth-certificate failure path.
    """
    vval, vgrad, vhess = parse_scalar_field(torus, potential)
    n = torus.dim
    eye = np.eye(n)

    def value(t, q, v):
        v = np.asarray(v, dtype=float)
        s = np.sum(v * v, axis=-1)
        return 0.25 * s * s + 0.5 * s - vval(q)

    def grad_q(t, q, v):
        return -vgrad(q)

    def grad_v(t, q, v):
        v = np.asarray(v, dtype=float)
        s = np.sum(v * v, axis=-1)
        return (s + 1.0)[..., None] * v

    def hess_vv(t, q, v):
        v = np.asarray(v, dtype=float)
        s = np.sum(v * v, axis=-1)
        outer = v[..., :, None] * v[..., None, :]
        return (s + 1.0)[..., None, None] * eye + 2.0 * outer

    def hess_qv(t, q, v):
        q = np.asarray(q, dtype=float)
        return np.zeros(q.shape[:-1] + (n, n))

    def hess_qq(t, q, v):
        return -vhess(q)

    return LagrangianSpec(torus, value, grad_q, grad_v, hess_vv, hess_qv, hess_qq,
                          reversible=True, autonomous=True,
                          name=f"|v|^4/4 + |v|^2/2 - ({potential})")


def kinetic_hamiltonian(torus: TorusSpace, potential: str = "0",
                        mass: float = 1.0) -> HamiltonianSpec:
    """Classical H = |p|^2/(2m) + V(q), symmetric under R0."""
    vval, vgrad, vhess = parse_scalar_field(torus, potential)
    n = torus.dim
    eye = np.eye(n)

    def value(t, q, p):
        p = np.asarray(p, dtype=float)
        return np.sum(p * p, axis=-1) / (2.0 * mass) + vval(q)

    def grad_q(t, q, p):
        return vgrad(q)

    def grad_p(t, q, p):
        return np.asarray(p, dtype=float) / mass

    def hess_pp(t, q, p):
        q = np.asarray(q, dtype=float)
        return np.broadcast_to(eye / mass, q.shape[:-1] + (n, n)).copy()

    def hess_qp(t, q, p):
        q = np.asarray(q, dtype=float)
        return np.zeros(q.shape[:-1] + (n, n))

    def hess_qq(t, q, p):
        return vhess(q)

    return HamiltonianSpec(torus, value, grad_q, grad_p, hess_pp, hess_qp, hess_qq,
                           reversible=True, autonomous=True,
                           name=f"|p|^2/{2 * mass} + ({potential})")


def magnetic_kinetic_hamiltonian(torus: TorusSpace, theta: OneForm,
                                 potential: str = "0", mass: float = 1.0) -> HamiltonianSpec:
    """H = |p + theta(q)|^2/(2m) + V(q), the dual of L_theta - theta[v].

    This is the closed-form Hamiltonian whose twisted flow corresponds to the
    mechanical Lagrangian m|v|^2/2 - V; it satisfies H(-t, R1(q,p)) = H(t,q,p).
    """
    vval, vgrad, vhess = parse_scalar_field(torus, potential)
    n = torus.dim
    eye = np.eye(n)

    def shifted(q, p):
        return np.asarray(p, dtype=float) + theta.components(q)

    def value(t, q, p):
        u = shifted(q, p)
        return np.sum(u * u, axis=-1) / (2.0 * mass) + vval(q)

    def grad_q(t, q, p):
        u = shifted(q, p)
        jac = theta.jacobian(q)  # [i, j] = d theta_i / d q_j
        return np.einsum("...i,...ij->...j", u, jac) / mass + vgrad(q)

    def grad_p(t, q, p):
        return shifted(q, p) / mass

    def hess_pp(t, q, p):
        q = np.asarray(q, dtype=float)
        return np.broadcast_to(eye / mass, q.shape[:-1] + (n, n)).copy()

    def hess_qp(t, q, p):
        # d2H/dq_i dp_j = jac[j, i] / m
        jac = theta.jacobian(q)
        return np.swapaxes(jac, -1, -2) / mass

    def hess_qq(t, q, p):
        u = shifted(q, p)
        jac = theta.jacobian(q)
        hs = theta.hessian(q)
        quad = np.einsum("...ki,...kj->...ij", jac, jac) / mass
        curv = np.einsum("...k,...kij->...ij", u, hs) / mass
        return quad + curv + vhess(q)

    return HamiltonianSpec(torus, value, grad_q, grad_p, hess_pp, hess_qp, hess_qq,
                           reversible=True, autonomous=True,
                           name=f"|p+theta|^2/{2 * mass} + ({potential})")


def shifted_hamiltonian(H: HamiltonianSpec, theta: OneForm) -> HamiltonianSpec:
    """H_theta = H o Phi, i.e. H_theta(t, q, p) = H(t, q, p - theta(q))."""

    def sh(q, p):
        return np.asarray(p, dtype=float) - theta.components(q)

    def value(t, q, p):
        return H.value(t, q, sh(q, p))

    def grad_p(t, q, p):
        return H.grad_p(t, q, sh(q, p))

    def grad_q(t, q, p):
        u = sh(q, p)
        jac = theta.jacobian(q)
        return H.grad_q(t, q, u) - np.einsum("...i,...ij->...j", H.grad_p(t, q, u), jac)

    def hess_pp(t, q, p):
        return H.hess_pp(t, q, sh(q, p))

    def hess_qp(t, q, p):
        u = sh(q, p)
        # d/dq_i of H_p_j(q, p - theta) = H_qp[i,j] - sum_k H_pp[j,k] jac[k,i]
        return H.hess_qp(t, q, u) - np.einsum("...jk,...ki->...ij", H.hess_pp(t, q, u),
                                              theta.jacobian(q))

    def hess_qq(t, q, p):
        u = sh(q, p)
        jac = theta.jacobian(q)
        hs = theta.hessian(q)
        hqp = H.hess_qp(t, q, u)
        hpp = H.hess_pp(t, q, u)
        gp = H.grad_p(t, q, u)
        term1 = H.hess_qq(t, q, u)
        term2 = -np.einsum("...ik,...kj->...ij", hqp, jac)
        term3 = np.swapaxes(term2, -1, -2)
        term4 = np.einsum("...kl,...ki,...lj->...ij", hpp, jac, jac)
        term5 = -np.einsum("...k,...kij->...ij", gp, hs)
        return term1 + term2 + term3 + term4 + term5

    return HamiltonianSpec(H.torus, value, grad_q, grad_p, hess_pp, hess_qp, hess_qq,
                           reversible=False, autonomous=H.autonomous,
                           name=f"{H.name} o Phi")


@dataclass
class MagneticSystem:
    """Bundle of the dual descriptions of one magnetic Tonelli system."""

    torus: TorusSpace
    theta: OneForm
    L_theta: LagrangianSpec      # reversible mechanical Lagrangian on M
    L: LagrangianSpec            # L = L_theta - theta[v], dual of H
    H: HamiltonianSpec           # Hamiltonian on the twisted side, R1-symmetric
    H_theta: HamiltonianSpec     # H o Phi on the standard side, dual of L_theta
    numerics: dict = field(default_factory=lambda: dict(DEFAULT_NUMERICS))
    config: Optional[dict] = None

    @property
    def dim(self):
        return self.torus.dim


_BUILTINS = {
    "kinetic_potential": kinetic_potential_lagrangian,
    "quartic_kinetic": quartic_kinetic_lagrangian,
}


def load_system(doc) -> MagneticSystem:
    """Assemble a MagneticSystem from a JSON document, dict, or file path."""
    if isinstance(doc, (str,)):
        with open(doc) as fh:
            doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ValueError("system document must be a dict or a path to a JSON file")

    dim = int(doc.get("dim", 1))
    torus = TorusSpace(dim, np.asarray(doc.get("periods", [1.0] * dim), dtype=float))
    theta_exprs = doc.get("theta", ["0"] * dim)
    theta = one_form_from_expressions(torus, theta_exprs)

    lag = dict(doc.get("lagrangian", {"builtin": "kinetic_potential"}))
    builtin = lag.pop("builtin", "kinetic_potential")
    if builtin not in _BUILTINS:
        raise ValueError(f"unknown lagrangian builtin {builtin!r}; "
                         f"available: {sorted(_BUILTINS)}")
    L_theta = _BUILTINS[builtin](torus, **lag)

    minus_theta = OneForm(
        torus,
        lambda q: -theta.components(q),
        lambda q: -theta.jacobian(q),
        lambda q: -theta.hessian(q),
        name=f"-{theta.name}",
    )
    L = magnetic_lagrangian(L_theta, minus_theta)
    L.reversible = False

    if builtin == "kinetic_potential":
        H = magnetic_kinetic_hamiltonian(torus, theta,
                                         potential=lag.get("potential", "0"),
                                         mass=lag.get("mass", 1.0))
        H_theta = kinetic_hamiltonian(torus, potential=lag.get("potential", "0"),
                                      mass=lag.get("mass", 1.0))
    else:
        from .legendre import hamiltonian_from_lagrangian

        H = hamiltonian_from_lagrangian(L)
        H_theta = hamiltonian_from_lagrangian(L_theta)

    numerics = dict(DEFAULT_NUMERICS)
    numerics.update(doc.get("numerics", {}))
    return MagneticSystem(torus, theta, L_theta, L, H, H_theta, numerics, config=doc)
