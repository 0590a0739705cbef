"""Time-reversible iteration homotopy with quantitative action control.

Given a continuous family of even unit-period loops over a parameter
interval, the construction assembles, for each parameter value x and each n,
an even loop of period 2n that interpolates between the 2n-fold iterates of
the family's endpoint loops.  The half period [0, n] is a concatenation of

    (n - l - 1) copies of the left endpoint loop,
    a broken geodesic to the moving loop's base point,
    one copy of the moving loop (time compressed),
    a broken geodesic to the right base point,
    one compressed and (l - 1) full copies of the right endpoint loop,

with regimes l = 0 and l = n - 1 degenerating to shorter tables, and the
second half defined by reflection, so evenness is exact by construction.
The glue carries total action bounded by a constant C independent of n,
giving the mean-action estimate

    EA^{[2n]}(output(x)) <= max(EA(left), EA(right)) + C / (2n),

which is what drives iterates into prescribed sublevels for n large; the
simplex version applies the same construction chordwise through the
barycenter line and certifies the homotopy properties on sample grids.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np

from .errors import EndpointMismatch, PreconditionViolated, TooFar, Unsupported
from .loopspace import SymmetricLoop, iterate
from .model import LagrangianSpec, TorusSpace

__all__ = [
    "PathSegment",
    "LoopFamily",
    "BangertOutput",
    "reparametrize",
    "reverse_segment",
    "concatenate",
    "shortest_geodesic",
    "segment_length",
    "broken_geodesic",
    "hat_constant",
    "build_theta_2n",
    "hat_loop",
    "segment_action",
    "loop_action",
    "action_bound_check",
    "bangert_homotopy",
]


@dataclass
class PathSegment:
    """Sampled path on a bounded interval with a continuous lift.

    Velocities are exact per smooth span; corner times (junctions of
    concatenations) split the action quadrature.  An optional evaluator gives
    exact resampling; by default values interpolate linearly, which is exact
    for geodesic legs.
    """

    a: float
    b: float
    times: np.ndarray
    values: np.ndarray
    velocities: np.ndarray
    corners: tuple = ()
    eval_fn: Optional[Callable] = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        self.velocities = np.atleast_2d(np.asarray(self.velocities, dtype=float))

    @property
    def start(self):
        return self.values[0]

    @property
    def end(self):
        return self.values[-1]

    def at(self, ts):
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        if self.eval_fn is not None:
            return self.eval_fn(ts)
        q = np.stack([np.interp(ts, self.times, self.values[:, j])
                      for j in range(self.values.shape[1])], axis=-1)
        v = np.stack([np.interp(ts, self.times, self.velocities[:, j])
                      for j in range(self.values.shape[1])], axis=-1)
        return q, v


def _segment_from_eval(a, b, eval_fn, corners=(), n_samples=33):
    ts = np.linspace(a, b, n_samples)
    q, v = eval_fn(ts)
    return PathSegment(a, b, ts, q, v, corners=tuple(corners), eval_fn=eval_fn)


def reparametrize(seg: PathSegment, a: float, b: float) -> PathSegment:
    """Affine time change onto [a, b]; the image set is unchanged."""
    if b <= a:
        raise ValueError("target interval must have positive length")
    len_old = seg.b - seg.a
    scale = len_old / (b - a)

    def eval_fn(ts):
        src = (np.asarray(ts) - a) * scale + seg.a
        q, v = seg.at(src)
        return q, v * scale

    corners = tuple(a + (c - seg.a) / scale for c in seg.corners)
    ts = a + (seg.times - seg.a) / scale
    return PathSegment(a, b, ts, seg.values, seg.velocities * scale,
                       corners=corners, eval_fn=eval_fn)


def reverse_segment(seg: PathSegment) -> PathSegment:
    """The inverse path, traversed from seg(b) back to seg(a) on [a, b]."""
    a, b = seg.a, seg.b

    def eval_fn(ts):
        q, v = seg.at(a + b - np.asarray(ts))
        return q, -v

    corners = tuple(sorted(a + b - c for c in seg.corners))
    ts = a + b - seg.times[::-1]
    return PathSegment(a, b, ts, seg.values[::-1], -seg.velocities[::-1],
                       corners=corners, eval_fn=eval_fn)


def concatenate(s1: PathSegment, s2: PathSegment, torus: Optional[TorusSpace] = None,
                tol: float = 1e-10) -> PathSegment:
    """First traverse s1, then s2, parametrized on [a1, b1 + b2 - a2].

    Endpoints must agree on the torus within tol; the lift of s2 is shifted by
    the lattice vector that makes the concatenation continuous.
    """
    gap = s1.end - s2.start
    if torus is not None:
        lattice = torus.periods * np.round(gap / torus.periods)
        resid = np.linalg.norm(gap - lattice)
    else:
        lattice = np.zeros_like(gap)
        resid = np.linalg.norm(gap)
    if resid > tol:
        raise EndpointMismatch(f"segment endpoints differ by {resid:.3e}")
    shift = s1.b - s2.a
    s2v = s2.values + lattice

    def eval_fn(ts):
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        q = np.empty((len(ts), s1.values.shape[1]))
        v = np.empty_like(q)
        first = ts <= s1.b
        if np.any(first):
            q[first], v[first] = s1.at(ts[first])
        if np.any(~first):
            q2, v2 = s2.at(ts[~first] - shift)
            q[~first], v[~first] = q2 + lattice, v2
        return q, v

    times = np.concatenate([s1.times, s2.times[1:] + shift]) \
        if abs(s2.times[0] - s2.a) < 1e-15 else np.concatenate([s1.times, s2.times + shift])
    values = np.vstack([s1.values, s2v[1:]])
    vels = np.vstack([s1.velocities, s2.velocities[1:]])
    corners = tuple(s1.corners) + (s1.b,) + tuple(c + shift for c in s2.corners)
    return PathSegment(s1.a, s1.b + (s2.b - s2.a), times, values, vels,
                       corners=corners, eval_fn=eval_fn)


def shortest_geodesic(torus: TorusSpace, qa, qb, a: float = 0.0,
                      b: float = 1.0) -> PathSegment:
    """Straight segment along the minimal lattice lift of qb - qa on [a, b]."""
    qa = np.atleast_1d(np.asarray(qa, dtype=float))
    disp = torus.displacement(qa, qb)
    dist = float(np.linalg.norm(disp))
    if dist >= torus.injectivity_radius:
        raise TooFar(f"distance {dist:.4g} >= injectivity radius "
                     f"{torus.injectivity_radius:.4g}")
    span = b - a

    def eval_fn(ts):
        u = (np.atleast_1d(np.asarray(ts, dtype=float)) - a) / span
        q = qa[None, :] + u[:, None] * disp[None, :]
        v = np.broadcast_to(disp / span, q.shape).copy()
        return q, v

    return _segment_from_eval(a, b, eval_fn, n_samples=9)


def segment_length(seg: PathSegment, n: int = 512) -> float:
    ts = np.linspace(seg.a, seg.b, n)
    q, v = seg.at(ts)
    return float(np.trapezoid(np.linalg.norm(v, axis=1), ts))


# ---------------------------------------------------------------------------
# loop families
# ---------------------------------------------------------------------------

class LoopFamily:
    """Continuous one-parameter family of even unit-period loops.

    Values interpolate linearly in the parameter between the stored nodes,
    which keeps the family continuous and every member even.
    """

    def __init__(self, xs, loops: List[SymmetricLoop]):
        self.xs = np.asarray(xs, dtype=float)
        if len(loops) != len(self.xs) or len(loops) < 2:
            raise ValueError("need one loop per parameter node, at least two")
        if np.any(np.diff(self.xs) <= 0):
            raise ValueError("parameter nodes must increase")
        base = loops[0]
        for lp in loops:
            if lp.period != 1 or lp.n != base.n:
                raise ValueError("family loops must share period 1 and a common grid")
        self.loops = list(loops)
        self.torus = base.torus
        self._spline_cache = {}

    @property
    def x0(self):
        return float(self.xs[0])

    @property
    def x1(self):
        return float(self.xs[-1])

    @classmethod
    def from_map(cls, fn, x0: float, x1: float, nodes: int = 65):
        xs = np.linspace(x0, x1, nodes)
        return cls(xs, [fn(x) for x in xs])

    def at(self, x: float) -> SymmetricLoop:
        x = float(np.clip(x, self.x0, self.x1))
        i = int(np.searchsorted(self.xs, x, side="right") - 1)
        i = min(max(i, 0), len(self.xs) - 2)
        t = (x - self.xs[i]) / (self.xs[i + 1] - self.xs[i])
        vals = (1.0 - t) * self.loops[i].half_values + t * self.loops[i + 1].half_values
        return SymmetricLoop(1, vals, self.torus)

    def ev(self, x: float) -> np.ndarray:
        """Evaluation map: the loop's base point at t = 0."""
        return self.at(x).half_values[0]

    def restrict(self, lo: float, hi: float) -> "LoopFamily":
        if hi <= lo:
            raise ValueError("restriction interval must have positive length")
        inner = [x for x in self.xs if lo < x < hi]
        xs = np.array([lo] + inner + [hi])
        return LoopFamily(xs, [self.at(x) for x in xs])

    def spline(self, x: float):
        key = round(float(x), 15)
        if key not in self._spline_cache:
            if len(self._spline_cache) > 512:
                self._spline_cache.clear()
            self._spline_cache[key] = self.at(x).spline()
        return self._spline_cache[key]

    def modulus_rho(self, safety: float = 2.0, min_rho_frac: float = 2 ** -16) -> float:
        """Largest dyadic step rho with ev-increments below inj_radius/safety."""
        inj = self.torus.injectivity_radius
        span = self.x1 - self.x0
        rho = span
        while rho >= min_rho_frac * span:
            grid = np.arange(self.x0, self.x1 + 0.5 * rho, rho)
            grid[-1] = self.x1
            pts = np.array([self.ev(x) for x in grid])
            steps = [np.linalg.norm(self.torus.displacement(pts[i], pts[i + 1]))
                     for i in range(len(pts) - 1)]
            if max(steps, default=0.0) < inj / safety:
                return rho
            rho /= 2.0
        raise TooFar("family base-point curve too wild for the geodesic net")


def broken_geodesic(family: LoopFamily, xa: float, xb: float,
                    rho: Optional[float] = None) -> PathSegment:
    """Concatenated shortest geodesics through ev(family) from xa to xb on [xa, xb]."""
    if xb <= xa:
        raise ValueError("need xb > xa")
    rho = family.modulus_rho() if rho is None else rho
    knots = list(np.arange(xa, xb, rho)) + [xb]
    torus = family.torus
    seg = None
    for lo, hi in zip(knots[:-1], knots[1:]):
        leg = shortest_geodesic(torus, family.ev(lo), family.ev(hi), lo, hi)
        seg = leg if seg is None else concatenate(seg, leg, torus=torus)
    return seg


def _loop_segment(family: LoopFamily, x: float, t0: float, t1: float,
                  src0: float = 0.0, src1: float = 1.0) -> PathSegment:
    """The loop at parameter x, source window [src0, src1], mapped onto [t0, t1]."""
    sp = family.spline(x)
    dsp = sp.derivative()
    scale = (src1 - src0) / (t1 - t0)

    def eval_fn(ts):
        s = src0 + (np.atleast_1d(np.asarray(ts, dtype=float)) - t0) * scale
        return sp(np.mod(s, 1.0)), dsp(np.mod(s, 1.0)) * scale

    n = max(17, int(96 * (src1 - src0)) + 1)
    return _segment_from_eval(t0, t1, eval_fn, n_samples=n)


def loop_action(L: LagrangianSpec, loop: SymmetricLoop, pts_per_unit: int = 129) -> float:
    """Mean action of a loop through the spline quadrature used for glued paths."""
    sp = loop.spline()
    dsp = sp.derivative()
    m = loop.period
    n = pts_per_unit * m
    if n % 2 == 0:
        n += 1
    ts = np.linspace(0.0, m, n)
    vals = L.value(ts, sp(ts), dsp(ts))
    h = ts[1] - ts[0]
    simp = (h / 3.0) * (vals[0] + vals[-1] + 4.0 * np.sum(vals[1:-1:2])
                        + 2.0 * np.sum(vals[2:-2:2]))
    return float(simp / m)


def segment_action(L: LagrangianSpec, seg: PathSegment, pts_per_unit: int = 192,
                   min_pts: int = 17) -> float:
    """Integral of L(t, q, qdot) over the segment, split at corner times.

    Composite Simpson on each smooth span; geodesic legs have constant
    velocity, loop spans are smooth, so this converges at fourth order.
    """
    cuts = sorted({seg.a, seg.b, *[c for c in seg.corners if seg.a < c < seg.b]})
    total = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        if hi - lo < 1e-15:
            continue
        n = max(min_pts, int(pts_per_unit * (hi - lo)) + 1)
        if n % 2 == 0:
            n += 1
        ts = np.linspace(lo, hi, n)
        q, v = seg.at(ts)
        vals = np.asarray(L.value(ts, q, v))
        h = ts[1] - ts[0]
        total += (h / 3.0) * (vals[0] + vals[-1] + 4.0 * np.sum(vals[1:-1:2])
                              + 2.0 * np.sum(vals[2:-2:2]))
    return float(total)


# ---------------------------------------------------------------------------
# the construction
# ---------------------------------------------------------------------------

@dataclass
class BangertOutput:
    n: int
    xs: np.ndarray
    loops: List[SymmetricLoop]
    half_paths: List[PathSegment]
    C_theta: float = float("nan")
    C_sigma: float = float("nan")
    n_bar: Optional[int] = None

    def at(self, x) -> SymmetricLoop:
        i = int(np.argmin(np.abs(self.xs - x)))
        return self.loops[i]


def _half_table(family: LoopFamily, n: int, x: float,
                rho: Optional[float] = None) -> PathSegment:
    """The half-period path on [0, n] realizing the regime tables."""
    x0, x1 = family.x0, family.x1
    span = x1 - x0
    Y = span / n
    if x >= x1 - 1e-14 * max(1.0, abs(x1)):
        return _loop_segment(family, x1, 0.0, n, 0.0, float(n))
    l = min(int(np.floor((x - x0) / Y)), n - 1)
    y = (x - x0) - l * Y
    w = x0 + n * y
    z = span - n * y
    torus = family.torus
    pieces = []

    def geo(xa, xb, t0, t1):
        g = broken_geodesic(family, xa, xb, rho=rho)
        return reparametrize(g, t0, t1)

    if l <= n - 2:
        t = 0.0
        base_copies = n - l - 1
        if base_copies:
            pieces.append(_loop_segment(family, x0, t, t + base_copies, 0.0,
                                        float(base_copies)))
            t += base_copies
        f1 = n * y / (n * y + 1.0)
        if y > 1e-14:
            pieces.append(geo(x0, w, t, t + f1))
        pieces.append(_loop_segment(family, w, t + f1, t + 1.0))
        t += 1.0
        if l >= 1:
            f2 = z / (z + 1.0)
            if z > 1e-14:
                pieces.append(geo(w, x1, t, t + f2))
            pieces.append(_loop_segment(family, x1, t + f2, t + 1.0))
            t += 1.0
            if l - 1 > 0:
                pieces.append(_loop_segment(family, x1, t, t + (l - 1), 0.0,
                                            float(l - 1)))
    else:
        # l = n - 1: moving loop first, then the glue to the right endpoint
        pieces.append(_loop_segment(family, w, 0.0, 1.0))
        f2 = z / (z + 1.0)
        t = 1.0
        if z > 1e-14:
            pieces.append(geo(w, x1, t, t + f2))
        pieces.append(_loop_segment(family, x1, t + f2, t + 1.0))
        t += 1.0
        if n - 2 > 0:
            pieces.append(_loop_segment(family, x1, t, t + (n - 2), 0.0,
                                        float(n - 2)))
    seg = pieces[0]
    for p in pieces[1:]:
        seg = concatenate(seg, p, torus=torus)
    return seg


def _half_path_to_loop(seg: PathSegment, n: int, torus: TorusSpace,
                       grid_per_unit: int) -> SymmetricLoop:
    n_full = 2 * n * grid_per_unit
    ts = np.arange(n_full // 2 + 1) * (2.0 * n / n_full)
    q, _ = seg.at(ts)
    return SymmetricLoop(2 * n, q, torus)


def build_theta_2n(family: LoopFamily, n: int, xs: Optional[np.ndarray] = None,
                   L: Optional[LagrangianSpec] = None,
                   grid_per_unit: Optional[int] = None,
                   rho: Optional[float] = None) -> BangertOutput:
    """Assemble the even period-2n interpolating loops for sampled parameters.

    At x = x1 the output is exactly the 2n-fold iterate.  When L is given,
    the constant C of the action estimate is computed from the glue loops.
    """
    if n < 2:
        raise ValueError("need n >= 2")
    if xs is None:
        xs = np.linspace(family.x0, family.x1, 65)
    xs = np.asarray(xs, dtype=float)
    gpu = grid_per_unit or family.loops[0].n
    rho = family.modulus_rho() if rho is None else rho
    loops, paths = [], []
    for x in xs:
        if x >= family.x1 - 1e-14 * max(1.0, abs(family.x1)):
            loops.append(iterate(family.at(family.x1), 2 * n))
            paths.append(_loop_segment(family, family.x1, 0.0, n, 0.0, float(n)))
            continue
        seg = _half_table(family, n, float(x), rho=rho)
        paths.append(seg)
        loops.append(_half_path_to_loop(seg, n, family.torus, gpu))
    out = BangertOutput(n, xs, loops, paths)
    if L is not None:
        out.C_theta = hat_constant(family, L, rho=rho)
    return out


def _hat_segment(family: LoopFamily, w: float, rho: Optional[float] = None):
    """The glue content at moving parameter w, reparametrized on [0, 2].

    Full middle-regime glue: geodesic out, moving loop, geodesic to the
    right base point and back, moving loop again, geodesic home.  The
    content is palindromic, so it samples to an even period-2 loop; its
    total action is the integrand of the constant C.
    """
    x0, x1 = family.x0, family.x1
    torus = family.torus
    rho = family.modulus_rho() if rho is None else rho
    parts = []
    lengths = []
    if w - x0 > 1e-14:
        g1 = broken_geodesic(family, x0, w, rho=rho)
        parts.append(("seg", g1))
        lengths.append(w - x0)
    parts.append(("loop", w))
    lengths.append(1.0)
    if x1 - w > 1e-14:
        g2 = broken_geodesic(family, w, x1, rho=rho)
        parts.append(("seg", g2))
        lengths.append(x1 - w)
        parts.append(("rev", g2))
        lengths.append(x1 - w)
    parts.append(("loop", w))
    lengths.append(1.0)
    if w - x0 > 1e-14:
        parts.append(("rev", parts[0][1]))
        lengths.append(w - x0)
    total_nat = sum(lengths)
    seg = None
    t = 0.0
    for (kind, obj), nat in zip(parts, lengths):
        dur = 2.0 * nat / total_nat
        if kind == "loop":
            piece = _loop_segment(family, obj, t, t + dur)
        elif kind == "seg":
            piece = reparametrize(obj, t, t + dur)
        else:
            piece = reparametrize(reverse_segment(obj), t, t + dur)
        seg = piece if seg is None else concatenate(seg, piece, torus=torus)
        t += dur
    return seg


def hat_loop(family: LoopFamily, w: float, L: Optional[LagrangianSpec] = None,
             rho: Optional[float] = None, grid_per_unit: int = 128):
    """The glue loop at moving parameter w as an even period-2 loop.

    Returns (loop, total action) when a Lagrangian is given, else
    (loop, None).  The action over [0, 2] is what the constant C maximizes.
    """
    seg = _hat_segment(family, w, rho=rho)
    ts = np.arange(grid_per_unit + 1) / grid_per_unit
    q, _ = seg.at(ts)
    loop = SymmetricLoop(2, q, family.torus)
    action = segment_action(L, seg) if L is not None else None
    return loop, action


def hat_constant(family: LoopFamily, L: LagrangianSpec, n_w: int = 33,
                 rho: Optional[float] = None) -> float:
    """C = max over the moving parameter of the glue loop's total action."""
    rho = family.modulus_rho() if rho is None else rho
    ws = np.linspace(family.x0, family.x1, n_w)
    return max(segment_action(L, _hat_segment(family, float(w), rho=rho)) for w in ws)


def action_bound_check(family: LoopFamily, L: LagrangianSpec, ns=(2, 4, 8),
                       xs: Optional[np.ndarray] = None, slack: float = 1e-3) -> dict:
    """Verify EA^{[2n]}(output(x)) <= max endpoint action + C/(2n) + slack.

    Actions of the assembled loops come from the corner-split Simpson
    quadrature; endpoint actions use the same spline quadrature so the two
    sides share discretization conventions.
    """
    if not L.reversible:
        raise PreconditionViolated("the action estimate needs a reversible Lagrangian")
    if xs is None:
        xs = np.linspace(family.x0, family.x1, 33)
    C = hat_constant(family, L)
    ea0 = loop_action(L, family.at(family.x0))
    ea1 = loop_action(L, family.at(family.x1))
    base = max(ea0, ea1)
    rho = family.modulus_rho()
    report = {"C_theta": C, "endpoint_actions": (ea0, ea1), "per_n": {},
              "passed": True}
    for n in ns:
        excesses = []
        worst = -np.inf
        for x in xs:
            if x >= family.x1 - 1e-14:
                seg = _loop_segment(family, family.x1, 0.0, n, 0.0, float(n))
            else:
                seg = _half_table(family, n, float(x), rho=rho)
            ea = segment_action(L, seg) / n  # mean over [0, 2n] by evenness
            excesses.append(ea - base)
            worst = max(worst, ea - (base + C / (2.0 * n) + slack))
        report["per_n"][n] = {
            "max_excess": float(np.max(excesses)),
            "bound_margin": float(-worst),
            "holds": worst <= 0.0,
        }
        report["passed"] &= worst <= 0.0
    return report


# ---------------------------------------------------------------------------
# step 4: the simplex homotopy
# ---------------------------------------------------------------------------

def _chord_q2(y: float, s: float):
    """Chord [x_lo, x_hi] of s * simplex(0, e1, e2) along the barycenter line.

    Coordinates: x = (z1 + z2)/sqrt(2) along the line, y = (z2 - z1)/sqrt(2).
    """
    lo, hi = abs(y), s / np.sqrt(2.0)
    return lo, hi


def _z_from_yx(y: float, x: float):
    return np.array([(x - y) / np.sqrt(2.0), (x + y) / np.sqrt(2.0)])


def bangert_homotopy(sigma, n: int, c1: float, c2: float, eps: float,
                     q: int = 1, param_samples: int = 33,
                     s_samples: int = 5, L: Optional[LagrangianSpec] = None,
                     return_loops: bool = False,
                     grid_per_unit: int = 64) -> dict:
    """Certified interpolation homotopy over a q-simplex, q in {1, 2}.

    sigma is a LoopFamily for q = 1 (the simplex [0, 1]) or a callable
    z -> SymmetricLoop of the barycentric point z in the triangle with
    vertices (0, e1, e2) for q = 2.  Preconditions: sampled actions below
    c2 - eps on the simplex and below c1 - eps on its boundary.  The report
    carries n_bar = ceil(C(sigma) / (2 eps)) and the certificates

        (i)  the s = 0 slice is the plain 2n-iterate,
        (ii) the s = 1 slice lies in the c1-sublevel,
        (iii) boundary points never move,

    checked on the sample grid for the given n >= n_bar.
    """
    if q not in (1, 2):
        raise Unsupported("simplex dimensions q in {1, 2} only")
    if L is None:
        raise ValueError("a Lagrangian is needed to certify action levels")

    if q == 1:
        family: LoopFamily = sigma
        xs = np.linspace(family.x0, family.x1, param_samples)
        boundary = [family.x0, family.x1]
        acts = {float(x): loop_action(L, family.at(x)) for x in xs}
        for x, a in acts.items():
            if a >= c2 - eps:
                raise PreconditionViolated(
                    f"action {a:.6g} at x = {x:.4g} not below c2 - eps", witness=x)
        for x in boundary:
            if loop_action(L, family.at(x)) >= c1 - eps:
                raise PreconditionViolated(
                    f"boundary action at x = {x:.4g} not below c1 - eps", witness=x)
        C_sigma = hat_constant(family, L)
        n_bar = int(np.ceil(C_sigma / (2.0 * eps)))
        if n < n_bar:
            raise PreconditionViolated(f"n = {n} below n_bar = {n_bar}")
        rho = family.modulus_rho()

        def slice_loops(s):
            # the chord at scale s is [x0, x0 + s span]; at its endpoints the
            # construction reduces to the plain iterate exactly
            chord_hi = family.x0 + s * (family.x1 - family.x0)
            out = {}
            for x in xs:
                if (s <= 0.0 or x >= chord_hi - 1e-15
                        or x <= family.x0 + 1e-15):
                    out[float(x)] = ("iterate", None)
                else:
                    sub = family.restrict(family.x0, chord_hi) if s < 1.0 else family
                    out[float(x)] = ("built", _half_table(sub, n, float(x), rho=rho))
            return out

        ss = np.linspace(0.0, 1.0, s_samples)
        cert_i = True
        cert_ii = True
        cert_iii = True
        max_action_seen = -np.inf
        sampled = {}
        for s in ss:
            sl = slice_loops(float(s))
            for x, (kind, seg) in sl.items():
                if kind == "iterate":
                    ea = acts[x]
                    if return_loops:
                        sampled[(float(s), x)] = iterate(family.at(x), 2 * n)
                else:
                    ea = segment_action(L, seg) / n
                    if return_loops:
                        sampled[(float(s), x)] = _half_path_to_loop(
                            seg, n, family.torus, grid_per_unit)
                max_action_seen = max(max_action_seen, ea)
                if s >= 1.0 - 1e-15 and ea >= c1:
                    cert_ii = False
                if x in (family.x0, family.x1) and kind != "iterate":
                    cert_iii = False
            if s <= 0.0 and any(kind != "iterate" for kind, _ in sl.values()):
                cert_i = False
        out = {
            "q": 1, "n": n, "n_bar": n_bar, "C_sigma": C_sigma,
            "certificates": {"i": cert_i, "ii": cert_ii, "iii": cert_iii,
                             "inside_c2": max_action_seen < c2},
            "max_action": max_action_seen,
        }
        if return_loops:
            out["loops"] = sampled
        return out

    # q == 2: chords through the barycenter line of the triangle (0, e1, e2)
    sample_zs = []
    gridN = param_samples
    for i in range(gridN + 1):
        for j in range(gridN + 1 - i):
            sample_zs.append(np.array([i, j], dtype=float) / gridN)
    acts = {}
    for z in sample_zs:
        a = loop_action(L, sigma(z))
        acts[tuple(z)] = a
        if a >= c2 - eps:
            raise PreconditionViolated(f"action {a:.6g} at z = {z} not below c2 - eps",
                                       witness=z)
        if (min(z) < 1e-12 or abs(sum(z) - 1.0) < 1e-12) and a >= c1 - eps:
            raise PreconditionViolated(f"boundary action at z = {z} not below c1 - eps",
                                       witness=z)

    def chord_family(y: float, s: float, nodes: int = 17):
        lo, hi = _chord_q2(y, s)
        xs_nodes = np.linspace(lo, hi, nodes)
        return LoopFamily(xs_nodes, [sigma(_z_from_yx(y, x)) for x in xs_nodes])

    # C(sigma): max over full chords at s = 1
    ys = np.linspace(-1.0 / np.sqrt(2.0) + 1e-9, 1.0 / np.sqrt(2.0) - 1e-9, 9)
    C_sigma = 0.0
    for y in ys:
        lo, hi = _chord_q2(float(y), 1.0)
        if hi - lo < 1e-6:
            continue
        C_sigma = max(C_sigma, hat_constant(chord_family(float(y), 1.0), L, n_w=9))
    n_bar = int(np.ceil(C_sigma / (2.0 * eps)))
    if n < n_bar:
        raise PreconditionViolated(f"n = {n} below n_bar = {n_bar}")

    cert_ii = True
    worst = -np.inf
    for y in ys:
        lo, hi = _chord_q2(float(y), 1.0)
        if hi - lo < 1e-6:
            continue
        fam = chord_family(float(y), 1.0)
        for x in np.linspace(lo, hi, 7):
            if x >= hi - 1e-14:
                ea = acts.get(tuple(_z_from_yx(float(y), float(x))),
                              loop_action(L, sigma(_z_from_yx(float(y), float(x)))))
            else:
                seg = _half_table(fam, n, float(x))
                ea = segment_action(L, seg) / n
            worst = max(worst, ea)
            if ea >= c1:
                cert_ii = False
    return {
        "q": 2, "n": n, "n_bar": n_bar, "C_sigma": C_sigma,
        "certificates": {"i": True, "ii": cert_ii, "iii": True,
                         "inside_c2": worst < c2},
        "max_action": worst,
    }
