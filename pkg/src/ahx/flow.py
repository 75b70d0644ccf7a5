"""Rescaled geodesic flow on the compactified unit cotangent bundle.

Phase coordinates are (rho, y, xi_b, eta) with the constraint
``xi_b**2 + rho**2 |eta|_h**2 = 1`` where |.|_h is the inverse-metric norm
of the boundary covector.  The rescaled generator

    rho' = xi_b
    y'^j = rho h^{ij} eta_i
    xi_b' = -(rho |eta|_h^2 + (rho^2/2) d|eta|_h^2/drho)
    eta_k' = -(rho/2) d|eta|_h^2/dy^k

is smooth up to rho = 0, so boundary arrival and departure are ordinary
finite-time events of the integration.  Trajectories carry dense output;
the full redundant state is integrated and re-projected onto the constraint
after every accepted step.

Hyperbolic arclength accumulates as an auxiliary state with a smooth gate
that switches on above rho ~ 0.01 (from the boundary the exact arclength
diverges); exceeding ``t_max`` raises :class:`TrappedOrSlowError`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import DOP853, solve_ivp
from scipy.optimize import brentq

from .metric import BoundaryMetricFamily, eval_metric
from .quadrature import composite_gauss, smoothstep

__all__ = [
    "FlowError", "TrappedOrSlowError", "ChartExitError", "CollarExitError",
    "BPhasePoint", "BoundaryCovector", "GeodesicTrajectory",
    "ShortGeodesicResult", "barX_eval", "trace_geodesic", "trace_from_state",
    "scattering_map", "scattering_jacobian", "ScatteringJacobian",
    "short_geodesic", "delta_max", "flip_state", "constraint_residual",
]

DEFAULT_TOL = 1e-10
DEFAULT_T_MAX = 60.0
RHO_GATE_LO = 0.005
RHO_GATE_HI = 0.01
RHO_CEILING = 1.0e7
MAX_STEPS = 250_000


class FlowError(RuntimeError):
    """Integration of the rescaled flow failed."""


class TrappedOrSlowError(FlowError):
    """Accumulated interior arclength exceeded t_max before boundary arrival."""

    def __init__(self, msg, tau=None, t_acc=None):
        super().__init__(msg)
        self.tau = tau
        self.t_acc = t_acc


class ChartExitError(FlowError):
    """Trajectory left the stated bounds of an affine boundary chart."""


class CollarExitError(FlowError):
    """Trajectory left the rho-domain on which the family is defined."""


@dataclass(frozen=True)
class BPhasePoint:
    """Point of the compactified unit cotangent bundle in b-coordinates."""

    rho: float
    y: np.ndarray
    xi_b: float
    eta: np.ndarray

    @classmethod
    def make(cls, rho, y, xi_b, eta) -> "BPhasePoint":
        return cls(float(rho), np.atleast_1d(np.asarray(y, dtype=float)),
                   float(xi_b), np.atleast_1d(np.asarray(eta, dtype=float)))

    def as_vector(self) -> np.ndarray:
        return np.concatenate(([self.rho], self.y, [self.xi_b], self.eta))


@dataclass(frozen=True)
class BoundaryCovector:
    """Boundary data (y, eta) of an incoming or outgoing geodesic."""

    y: np.ndarray
    eta: np.ndarray
    side: str  # "incoming" | "outgoing"

    @classmethod
    def make(cls, y, eta, side="incoming") -> "BoundaryCovector":
        return cls(np.atleast_1d(np.asarray(y, dtype=float)),
                   np.atleast_1d(np.asarray(eta, dtype=float)), side)

    def as_phase_point(self) -> BPhasePoint:
        xi = 1.0 if self.side == "incoming" else -1.0
        return BPhasePoint.make(0.0, self.y, xi, self.eta)


def flip_state(p: BPhasePoint) -> BPhasePoint:
    """Time-reversal involution (rho, y, xi_b, eta) -> (rho, y, -xi_b, -eta)."""
    return BPhasePoint.make(p.rho, p.y, -p.xi_b, -p.eta)


def constraint_residual(fam: BoundaryMetricFamily, p: BPhasePoint) -> float:
    e2 = fam.eta_normsq(p.rho, p.y, p.eta)
    return abs(p.xi_b ** 2 + p.rho ** 2 * e2 - 1.0)


# ---------------------------------------------------------------------------
# vector field


def _gate_over_rho(rho: float) -> float:
    if rho <= RHO_GATE_LO:
        return 0.0
    g = smoothstep((rho - RHO_GATE_LO) / (RHO_GATE_HI - RHO_GATE_LO))
    return g / rho


def _make_rhs(fam: BoundaryMetricFamily) -> Callable:
    """Flow RHS on the augmented state [rho, y, xi_b, eta, t_acc]."""
    n = fam.n
    if fam.scalar is not None:
        h_f, dhr_f, dhy_f = fam.scalar.h, fam.scalar.dh_drho, fam.scalar.dh_dy

        def rhs(tau, s):
            rho, y, xi, eta = s[0], s[1], s[2], s[3]
            h = h_f(rho, y)
            hi = 1.0 / h
            ee = eta * eta
            e2 = hi * ee
            de2_dr = -hi * hi * dhr_f(rho, y) * ee
            de2_dy = -hi * hi * dhy_f(rho, y) * ee
            return np.array([
                xi,
                rho * hi * eta,
                -(rho * e2 + 0.5 * rho * rho * de2_dr),
                -0.5 * rho * de2_dy,
                _gate_over_rho(rho),
            ])

        return rhs

    def rhs(tau, s):
        rho = s[0]
        y = s[1:1 + n]
        xi = s[1 + n]
        eta = s[2 + n:2 + 2 * n]
        h = fam.h(rho, y)
        hi = np.linalg.solve(h, np.eye(n))
        hie = hi @ eta
        e2 = float(eta @ hie)
        de2_dr = -float(hie @ fam.dh_drho(rho, y) @ hie)
        dhy = fam.dh_dy(rho, y)
        de2_dy = np.array([-float(hie @ dhy[k] @ hie) for k in range(n)])
        out = np.empty(2 * n + 3)
        out[0] = xi
        out[1:1 + n] = rho * hie
        out[1 + n] = -(rho * e2 + 0.5 * rho * rho * de2_dr)
        out[2 + n:2 + 2 * n] = -0.5 * rho * de2_dy
        out[-1] = _gate_over_rho(rho)
        return out

    return rhs


def barX_eval(fam: BoundaryMetricFamily, state: BPhasePoint):
    """Value of the rescaled generator at a phase point.

    Returns (drho, dy, dxi_b, deta) as floats/arrays.
    """
    n = fam.n
    s = np.concatenate((state.as_vector(), [0.0]))
    v = _make_rhs(fam)(0.0, s)
    return (float(v[0]), np.atleast_1d(v[1:1 + n]).copy(), float(v[1 + n]),
            np.atleast_1d(v[2 + n:2 + 2 * n]).copy())


def _project_vec(fam: BoundaryMetricFamily, s: np.ndarray, n: int) -> np.ndarray:
    """Rescale (xi_b, eta) jointly onto the unit cosphere."""
    rho = s[0]
    xi = s[1 + n]
    eta = s[2 + n:2 + 2 * n]
    if fam.scalar is not None:
        e2 = eta[0] * eta[0] / fam.scalar.h(rho, s[1])
    else:
        hm = fam.h(rho, s[1:1 + n])
        e2 = float(eta @ np.linalg.solve(hm, eta))
    norm2 = xi * xi + rho * rho * e2
    if norm2 <= 0.0:
        return s
    c = 1.0 / math.sqrt(norm2)
    out = s.copy()
    out[1 + n] = xi * c
    out[2 + n:2 + 2 * n] = eta * c
    return out


# ---------------------------------------------------------------------------
# trajectory container


class GeodesicTrajectory:
    """Dense trajectory of the rescaled flow on [0, tau_plus].

    ``samples`` holds the accepted integration steps as (tau, BPhasePoint)
    with the constraint re-projected.  Dense evaluation is available through
    :meth:`state_at` (single point, projected) and :meth:`eval_many` (batch,
    raw dense output).  Interior hyperbolic arclength integrals come from
    :meth:`arclength`.
    """

    def __init__(self, fam, segments, breaks, tau_plus, samples,
                 z_in, z_out, t_acc):
        self.family = fam
        self.n = fam.n
        self._segments = segments
        self._breaks = np.asarray(breaks)
        self.tau_plus = float(tau_plus)
        self.samples = samples
        self.z_in = z_in
        self.z_out = z_out
        self.t_acc = float(t_acc)

    # layout helpers
    def _split(self, vec):
        n = self.n
        return BPhasePoint.make(vec[0], vec[1:1 + n], vec[1 + n],
                                vec[2 + n:2 + 2 * n])

    def _segment_index(self, tau: float) -> int:
        i = int(np.searchsorted(self._breaks, tau, side="right")) - 1
        return min(max(i, 0), len(self._segments) - 1)

    def eval_raw(self, tau: float) -> np.ndarray:
        if tau < -1e-12 or tau > self.tau_plus + 1e-12:
            raise ValueError(f"tau={tau} outside [0, {self.tau_plus}]")
        tau = min(max(tau, 0.0), self.tau_plus)
        return np.asarray(self._segments[self._segment_index(tau)](tau))

    def state_at(self, tau: float) -> BPhasePoint:
        vec = _project_vec(self.family, self.eval_raw(tau), self.n)
        return self._split(vec)

    def eval_many(self, taus: np.ndarray) -> np.ndarray:
        """Dense states at the given taus, shape (len(taus), dim).

        Raw dense output; constraint drift stays below the projection
        tolerance because every accepted step was re-projected.
        """
        taus = np.asarray(taus, dtype=float)
        out = np.empty((taus.size, self._segments[0](self._breaks[0]).size))
        idx = np.clip(np.searchsorted(self._breaks, taus, side="right") - 1,
                      0, len(self._segments) - 1)
        for i in np.unique(idx):
            sel = idx == i
            out[sel] = np.asarray(self._segments[i](taus[sel])).T
        return out

    def quad_nodes(self, a: float, b: float, npts: int = 12):
        """Composite Gauss nodes/weights on [a, b] split at the step breaks."""
        return composite_gauss(self._breaks, a, b, npts)

    def arclength(self, tau1: float, tau2: float, npts: int = 12) -> float:
        """Hyperbolic arclength of the interior piece [tau1, tau2]."""
        if not (0.0 < tau1 <= tau2 < self.tau_plus):
            raise ValueError("arclength needs 0 < tau1 <= tau2 < tau_plus")
        if tau1 == tau2:
            return 0.0
        taus, w = self.quad_nodes(tau1, tau2, npts)
        rho = self.eval_many(taus)[:, 0]
        return float(np.sum(w / rho))

    def rho_peak(self):
        """(tau, rho) at the deepest sampled point, parabolically refined."""
        taus = np.array([t for t, _ in self.samples])
        rhos = np.array([p.rho for _, p in self.samples])
        i = int(np.argmax(rhos))
        lo = max(self._breaks[0], taus[max(i - 1, 0)])
        hi = min(self.tau_plus, taus[min(i + 1, len(taus) - 1)])
        grid = np.linspace(lo, hi, 41)
        vals = self.eval_many(grid)[:, 0]
        j = int(np.argmax(vals))
        if 0 < j < grid.size - 1:
            denom = vals[j - 1] - 2.0 * vals[j] + vals[j + 1]
            if denom < 0.0:
                tau = grid[j] + 0.5 * (grid[1] - grid[0]) \
                    * (vals[j - 1] - vals[j + 1]) / denom
                return float(tau), float(self.eval_raw(tau)[0])
        return float(grid[j]), float(vals[j])

    def to_rows(self):
        rows = []
        for tau, p in self.samples:
            rows.append([tau, p.rho, *p.y.tolist(), p.xi_b, *p.eta.tolist()])
        return rows


# ---------------------------------------------------------------------------
# tracing driver


def _drive(fam: BoundaryMetricFamily, s0: np.ndarray, *, tol: float,
           t_max: float, max_steps: int = MAX_STEPS) -> tuple:
    """Integrate until the boundary-arrival event; project every step.

    Returns (segments, breaks, tau_plus, samples, endpoint_vec, t_acc).
    """
    n = fam.n
    rhs = _make_rhs(fam)
    rho_limit = min(fam.rho_max, RHO_CEILING)
    chart = fam.chart
    solver = DOP853(rhs, 0.0, s0, t_bound=math.inf, rtol=tol, atol=tol)
    segments, breaks = [], [0.0]
    p0 = _project_vec(fam, s0, n)
    samples = [(0.0, p0)]
    rho_prev = s0[0]
    steps = 0
    while True:
        steps += 1
        if steps > max_steps:
            raise FlowError(f"step limit {max_steps} exceeded at tau={solver.t}")
        msg = solver.step()
        if solver.status == "failed":
            raise FlowError(f"integrator failure: {msg}")
        seg = solver.dense_output()
        t_lo, t_hi = seg.t_old, seg.t
        segments.append(seg)
        rho_new = solver.y[0]

        if rho_new <= 0.0:
            lo = t_lo
            if rho_prev <= 0.0:
                # overshoot of a whole arc within one step: bracket the
                # decreasing part from the interior maximum of rho
                grid = np.linspace(t_lo, t_hi, 65)
                rg = np.asarray(seg(grid))[0]
                imax = int(np.argmax(rg))
                if rg[imax] <= 0.0:
                    raise FlowError("trajectory left the rho > 0 half-space")
                lo = float(grid[imax])
            tau_star = brentq(lambda s: float(seg(s)[0]), lo, t_hi,
                              xtol=1e-14, rtol=8.9e-16)
            end = np.asarray(seg(tau_star))
            if abs(end[1 + n]) > 1e-8:
                # one Newton polish using drho/dtau = xi_b
                tau_star -= float(end[0] / end[1 + n])
                end = np.asarray(seg(tau_star))
            breaks.append(tau_star)
            return segments, breaks, tau_star, samples, end, float(end[-1])

        if math.isfinite(rho_limit) and rho_new >= rho_limit:
            raise CollarExitError(
                f"rho reached the domain edge {rho_limit:.6g} at tau={solver.t:.6g}")
        if chart.kind == "affine" and chart.y_bounds is not None:
            if not chart.contains(solver.y[1:1 + n]):
                raise ChartExitError(
                    f"y={solver.y[1:1 + n]} left the affine chart at tau={solver.t:.6g}")
        if solver.y[-1] > t_max:
            raise TrappedOrSlowError(
                f"interior arclength exceeded t_max={t_max:.6g} at tau={solver.t:.6g}"
                " (trapped or nearly trapped trajectory)",
                tau=float(solver.t), t_acc=float(solver.y[-1]))

        proj = _project_vec(fam, solver.y, n)
        if not np.array_equal(proj, solver.y):
            solver.y = proj
            solver.f = rhs(solver.t, proj)
        breaks.append(solver.t)
        samples.append((float(solver.t), proj))
        rho_prev = proj[0]


def _split_vec(n: int, vec: np.ndarray) -> BPhasePoint:
    return BPhasePoint.make(vec[0], vec[1:1 + n], vec[1 + n],
                            vec[2 + n:2 + 2 * n])


def _finish_trajectory(fam, segments, breaks, tau_plus, samples, end_vec,
                       t_acc, z_in) -> GeodesicTrajectory:
    n = fam.n
    end_proj = _project_vec(fam, end_vec, n)
    y_end = end_proj[1:1 + n].copy()
    eta_end = end_proj[2 + n:2 + 2 * n].copy()
    endpoint = BPhasePoint.make(0.0, y_end, -1.0, eta_end)
    traj_samples = [(t, _split_vec(n, v)) for t, v in samples]
    traj_samples.append((tau_plus, endpoint))
    z_out = BoundaryCovector.make(fam.chart.wrap(y_end), eta_end, "outgoing")
    return GeodesicTrajectory(fam, segments, breaks, tau_plus, traj_samples,
                              z_in, z_out, t_acc)


def trace_geodesic(fam: BoundaryMetricFamily, z, tol: float = DEFAULT_TOL,
                   t_max: float = DEFAULT_T_MAX) -> GeodesicTrajectory:
    """Trace from an incoming boundary covector to the outgoing boundary.

    ``z`` is a BoundaryCovector or a (y, eta) pair.  The start state is
    (rho, y, xi_b, eta) = (0, y, +1, eta); integration ends at the first
    transversal return to rho = 0.
    """
    if not isinstance(z, BoundaryCovector):
        y, eta = z
        z = BoundaryCovector.make(y, eta, "incoming")
    if z.y.size != fam.n or z.eta.size != fam.n:
        raise ValueError("boundary covector dimension mismatch")
    s0 = np.concatenate(([0.0], z.y, [1.0], z.eta, [0.0]))
    segs, breaks, tau_p, samples, end, t_acc = _drive(
        fam, s0, tol=tol, t_max=t_max)
    return _finish_trajectory(fam, segs, breaks, tau_p, samples, end, t_acc, z)


def trace_from_state(fam: BoundaryMetricFamily, state: BPhasePoint,
                     tol: float = DEFAULT_TOL,
                     t_max: float = DEFAULT_T_MAX) -> GeodesicTrajectory:
    """Trace the forward orbit of an interior phase point to the boundary."""
    s0 = np.concatenate((state.as_vector(), [0.0]))
    s0 = _project_vec(fam, s0, fam.n)
    segs, breaks, tau_p, samples, end, t_acc = _drive(
        fam, s0, tol=tol, t_max=t_max)
    return _finish_trajectory(fam, segs, breaks, tau_p, samples, end, t_acc, None)


def scattering_map(fam: BoundaryMetricFamily, z, tol: float = DEFAULT_TOL,
                   t_max: float = DEFAULT_T_MAX) -> BoundaryCovector:
    """Outgoing boundary covector of the geodesic entering at z."""
    return trace_geodesic(fam, z, tol=tol, t_max=t_max).z_out


@dataclass(frozen=True)
class ScatteringJacobian:
    """Finite-difference derivative of the scattering map at one covector."""

    matrix: np.ndarray           # d(y_out, eta_out)/d(y_in, eta_in)
    det: float
    symplectic_residual: float


def scattering_jacobian(fam: BoundaryMetricFamily, z, step: float = 1e-5,
                        tol: float = 1e-12,
                        t_max: float = DEFAULT_T_MAX) -> ScatteringJacobian:
    """Central finite differences of the scattering map.

    Uses unwrapped outgoing coordinates so periodic charts do not introduce
    jumps between neighbouring traces.
    """
    if not isinstance(z, BoundaryCovector):
        z = BoundaryCovector.make(*z, side="incoming")
    n = fam.n

    def out_vec(y, eta):
        traj = trace_geodesic(fam, BoundaryCovector.make(y, eta), tol=tol,
                              t_max=t_max)
        p = traj.samples[-1][1]
        return np.concatenate((p.y, p.eta))

    cols = []
    for k in range(n):
        hstep = step * max(1.0, abs(z.y[k]))
        yp, ym = z.y.copy(), z.y.copy()
        yp[k] += hstep
        ym[k] -= hstep
        cols.append((out_vec(yp, z.eta) - out_vec(ym, z.eta)) / (2 * hstep))
    for k in range(n):
        hstep = step * max(1.0, abs(z.eta[k]))
        ep, em = z.eta.copy(), z.eta.copy()
        ep[k] += hstep
        em[k] -= hstep
        cols.append((out_vec(z.y, ep) - out_vec(z.y, em)) / (2 * hstep))
    M = np.column_stack(cols)

    J = np.zeros((2 * n, 2 * n))
    for i in range(n):
        J[i, n + i] = -1.0
        J[n + i, i] = 1.0
    resid = float(np.max(np.abs(M.T @ J @ M - J)))
    return ScatteringJacobian(matrix=M, det=float(np.linalg.det(M)),
                              symplectic_residual=resid)


# ---------------------------------------------------------------------------
# short geodesics in the blown-up chart


@dataclass(frozen=True)
class ShortGeodesicResult:
    """Solution of the rescaled short-geodesic system up to theta = pi."""

    y0: np.ndarray
    omega0: np.ndarray
    delta: float
    s0: float
    y_end: np.ndarray
    omega_end: np.ndarray
    samples: list  # (s, theta, u, omega)


def _rho_from_constraint(fam, y, omega, target, rho_guess):
    """Solve rho |omega|_{h_rho} = target by Newton, small positive root."""
    rho = max(rho_guess, 0.0)
    for _ in range(30):
        if fam.scalar is not None:
            h = fam.scalar.h(rho, float(y[0]))
            nrm = abs(float(omega[0])) / math.sqrt(h)
            dh = fam.scalar.dh_drho(rho, float(y[0]))
            dnrm = -abs(float(omega[0])) * dh / (2.0 * h ** 1.5)
        else:
            hm = fam.h(rho, y)
            hi = np.linalg.solve(hm, np.eye(fam.n))
            hio = hi @ omega
            nrm = math.sqrt(float(omega @ hio))
            dnrm = -float(hio @ fam.dh_drho(rho, y) @ hio) / (2.0 * nrm)
        f = rho * nrm - target
        fp = nrm + rho * dnrm
        if fp <= 0.0:
            raise FlowError("short-geodesic rho solve lost monotonicity "
                            "(delta too large)")
        rho_new = rho - f / fp
        if rho_new < 0.0:
            rho_new = 0.5 * rho
        if abs(rho_new - rho) < 1e-15 * (1.0 + rho):
            return rho_new
        rho = rho_new
    raise FlowError("short-geodesic rho solve did not converge")


def short_geodesic(fam: BoundaryMetricFamily, y0, omega0, delta: float,
                   tol: float = 1e-11) -> ShortGeodesicResult:
    """Integrate the blown-up short-geodesic system from theta=0 to theta=pi.

    The state is (theta, u, omega) with y = y0 + delta*u and rho recovered
    from rho |omega|_{h_rho} = delta sin(theta) at every evaluation.
    """
    y0 = np.atleast_1d(np.asarray(y0, dtype=float))
    omega0 = np.atleast_1d(np.asarray(omega0, dtype=float))
    n = fam.n
    if delta <= 0.0:
        raise ValueError("delta must be positive")

    def rhs(s, st):
        theta = st[0]
        u = st[1:1 + n]
        om = st[1 + n:1 + 2 * n]
        y = y0 + delta * u
        sin_t = math.sin(theta)
        target = delta * abs(sin_t)
        rho = _rho_from_constraint(fam, y, om, target, target)
        if fam.scalar is not None:
            yv = float(y[0])
            h = fam.scalar.h(rho, yv)
            dh_r = fam.scalar.dh_drho(rho, yv)
            dh_y = fam.scalar.dh_dy(rho, yv)
            omv = float(om[0])
            qt = -sin_t * dh_r / (2.0 * math.sqrt(h) * abs(omv))
            du = np.array([sin_t / omv])
            dom = np.array([delta * sin_t * dh_y / (2.0 * h)])
        else:
            hm = fam.h(rho, y)
            hi = np.linalg.solve(hm, np.eye(n))
            hio = hi @ om
            n2 = float(om @ hio)
            nrm = math.sqrt(n2)
            dP = -float(hio @ fam.dh_drho(rho, y) @ hio)  # d|om|^2_h / drho
            qt = sin_t * dP / (2.0 * nrm ** 3)
            du = sin_t * hio / n2
            dhy = fam.dh_dy(rho, y)
            dom = np.array([delta * sin_t * float(hio @ dhy[k] @ hio) / (2.0 * n2)
                            for k in range(n)])
        out = np.empty(1 + 2 * n)
        out[0] = 1.0 + delta * qt
        out[1:1 + n] = du
        out[1 + n:] = dom
        return out

    def hit_pi(s, st):
        return st[0] - math.pi
    hit_pi.terminal = True
    hit_pi.direction = 1

    st0 = np.concatenate(([0.0], np.zeros(n), omega0))
    sol = solve_ivp(rhs, (0.0, 2.0 * math.pi), st0, method="DOP853",
                    rtol=tol, atol=tol, events=hit_pi, dense_output=False)
    if not sol.t_events[0].size:
        raise FlowError("short geodesic did not reach theta = pi "
                        "(delta too large or non-monotone angle)")
    # monotone angle check on the accepted steps
    dth = np.diff(sol.y[0])
    if np.any(dth <= 0.0):
        raise FlowError("short-geodesic angle lost monotonicity")
    s0 = float(sol.t_events[0][0])
    fin = sol.y_events[0][0]
    u_end = fin[1:1 + n]
    om_end = fin[1 + n:1 + 2 * n]
    samples = [(float(s), float(row[0]), row[1:1 + n].copy(),
                row[1 + n:1 + 2 * n].copy())
               for s, row in zip(sol.t, sol.y.T)]
    if math.isfinite(fam.rho_max):
        # the blown-up system never queries eval_metric, so enforce the
        # collar on the accepted steps after the fact
        for _, theta, u, om in samples:
            target = delta * abs(math.sin(theta))
            rho = _rho_from_constraint(fam, y0 + delta * u, om, target,
                                       target)
            if rho > fam.rho_max:
                raise CollarExitError(
                    f"short geodesic tops out at rho={rho:.4g}, outside "
                    f"the collar [0, {fam.rho_max}]")
    return ShortGeodesicResult(y0=y0, omega0=omega0, delta=delta, s0=s0,
                               y_end=y0 + delta * u_end,
                               omega_end=om_end.copy(), samples=samples)


def delta_max(fam: BoundaryMetricFamily, y0, omega0, cap: float = 0.2) -> float:
    """Largest safe delta: angle monotone on the frozen solution, 50% margin."""
    y0 = np.atleast_1d(np.asarray(y0, dtype=float))
    omega0 = np.atleast_1d(np.asarray(omega0, dtype=float))
    ev = eval_metric(fam, 0.0, y0)
    hio = ev.h_inv @ omega0
    n2 = float(omega0 @ hio)
    dP = -float(hio @ ev.dh_drho_mat @ hio)
    qt_max = abs(dP) / (2.0 * n2 ** 1.5)  # max over s of |Q| on theta = s
    if qt_max == 0.0:
        return cap
    return min(cap, 1.0 / qt_max / 1.5)
