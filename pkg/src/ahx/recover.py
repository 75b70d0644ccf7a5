"""Boundary jet recovery from renormalized lengths of short geodesics.

For a family in normal form, the renormalized length of the short geodesic
shot from ``y0`` with covector ``omega0 / delta`` behaves like

    L = 2 log(2 delta) - 2 log |omega0|_{h_0} + O(delta),

so extrapolating ``L - 2 log(2 delta)`` to ``delta = 0`` recovers the
boundary norm of every direction, hence ``h_0`` by polarization.  The next
Taylor coefficient of the remainder determines the first radial derivative
of ``h`` at the boundary, after subtracting correction terms that only
involve the already-recovered ``h_0`` and its tangential derivatives.

Two independent routes are provided: the asymptotic extraction above
(``recover_h0`` / ``recover_first_jet``) and a forward-model least-squares
fit over a truncated radial Taylor family (``recover_jet_fit``).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import least_squares

from .metric import BoundaryMetricFamily, MetricError, taylor1d_family
from .flow import FlowError, delta_max, trace_geodesic
from .renorm import renormalized_length

__all__ = [
    "RecoveryError", "LengthSampleSet", "H0Recovery", "JetEstimate",
    "synthesize_samples", "recover_h0", "recover_first_jet",
    "recover_jet_fit", "DELTA_GRID",
]

#: geometric ratio-1/2 grid; small end limited by double-precision fitting
DELTA_GRID = tuple(0.2 / 2 ** k for k in range(7))

#: condition-number ceiling for the polarization solve
POLAR_COND_MAX = 1e8


class RecoveryError(ValueError):
    """Recovery preconditions violated or extraction failed."""


# ---------------------------------------------------------------------------
# sample synthesis (forward model)


@dataclass(frozen=True)
class LengthSampleSet:
    """Renormalized lengths of short geodesics at one boundary point.

    ``lengths[j, k]`` is the renormalized length for direction
    ``directions[j]`` at scale ``deltas[k]`` (covector directions[j] /
    deltas[k]).  ``noise`` records the amplitude of any synthetic additive
    noise baked into the table.
    """

    y0: np.ndarray
    directions: np.ndarray
    deltas: np.ndarray
    lengths: np.ndarray
    noise: float = 0.0

    def validate(self) -> None:
        m, k = self.lengths.shape
        if self.directions.shape[0] != m or self.deltas.shape[0] != k:
            raise RecoveryError("length table shape mismatch")
        if np.any(np.diff(self.deltas) >= 0.0):
            raise RecoveryError("deltas must be strictly decreasing")
        if np.any(self.deltas <= 0.0):
            raise RecoveryError("deltas must be positive")
        if not np.all(np.isfinite(self.lengths)):
            raise RecoveryError("length table incomplete")

    def to_json(self) -> str:
        return json.dumps({
            "y0": self.y0.tolist(),
            "directions": self.directions.tolist(),
            "deltas": self.deltas.tolist(),
            "lengths": self.lengths.tolist(),
            "noise": self.noise,
        })


def synthesize_samples(fam: BoundaryMetricFamily, y0, directions,
                       deltas: Sequence[float] = DELTA_GRID,
                       tol: float = 1e-12, noise: float = 0.0,
                       seed: int = 0) -> LengthSampleSet:
    """Trace the short geodesics and tabulate renormalized lengths.

    Directions are raw covectors; no boundary normalization is applied
    (the recovery side treats the boundary metric as unknown).
    """
    y0 = np.atleast_1d(np.asarray(y0, dtype=float))
    dirs = np.atleast_2d(np.asarray(directions, dtype=float))
    dd = np.asarray(sorted(set(float(d) for d in deltas), reverse=True))
    if dd.size < 3:
        raise RecoveryError("need at least 3 delta values")
    table = np.empty((dirs.shape[0], dd.size))
    for j, om in enumerate(dirs):
        cap = delta_max(fam, y0, om)
        if dd[0] > cap:
            raise RecoveryError(
                "largest delta %g exceeds the safe scale %g for direction %s"
                % (dd[0], cap, om))
        for k, d in enumerate(dd):
            traj = trace_geodesic(fam, (y0, om / d), tol=tol)
            table[j, k] = renormalized_length(traj).value
    if noise:
        rng = np.random.default_rng(seed)
        table = table + rng.uniform(-noise, noise, size=table.shape)
    out = LengthSampleSet(y0=y0, directions=dirs, deltas=dd,
                          lengths=table, noise=noise)
    out.validate()
    return out


# ---------------------------------------------------------------------------
# asymptotic route


def _poly_coeffs(deltas: np.ndarray, vals: np.ndarray,
                 order: int) -> np.ndarray:
    """Least-squares coefficients (c_0 .. c_order) of vals ~ sum c_k d^k."""
    van = np.vander(deltas, order + 1, increasing=True)
    coef, *_ = np.linalg.lstsq(van, vals, rcond=None)
    return coef


def _sym_basis(n: int):
    """Index pairs (i <= j) enumerating independent symmetric entries."""
    return [(i, j) for i in range(n) for j in range(i, n)]


def _polarize(dirs: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Solve M[i,j] from quadratic-form samples M(w, w) = values per row w."""
    n = dirs.shape[1]
    pairs = _sym_basis(n)
    if dirs.shape[0] < len(pairs):
        raise RecoveryError(
            "need at least %d directions for polarization in dimension %d"
            % (len(pairs), n))
    a = np.empty((dirs.shape[0], len(pairs)))
    for r, w in enumerate(dirs):
        for c, (i, j) in enumerate(pairs):
            a[r, c] = w[i] * w[j] * (1.0 if i == j else 2.0)
    if np.linalg.cond(a) > POLAR_COND_MAX:
        raise RecoveryError("polarization ill-conditioned: "
                            "directions too clustered")
    entries, *_ = np.linalg.lstsq(a, values, rcond=None)
    m = np.empty((n, n))
    for c, (i, j) in enumerate(pairs):
        m[i, j] = m[j, i] = entries[c]
    return m


@dataclass(frozen=True)
class H0Recovery:
    """Boundary metric at one point recovered from length asymptotics."""

    y0: np.ndarray
    norms: np.ndarray          # recovered |omega|_{h_0} per direction
    h0: np.ndarray             # boundary metric (covariant components)
    h0_inv: np.ndarray         # inverse boundary metric
    fit_residual: float        # worst per-direction extrapolation residual


def recover_h0(samples: LengthSampleSet, fit_order: int = 2) -> H0Recovery:
    """Extrapolate L - 2 log(2 delta) to delta = 0 and polarize.

    The constant term c0 of the per-direction fit gives
    |omega|^2_{h_0} = e^{-c0}; the quadratic form values over all
    directions determine the inverse boundary metric, whose inverse is
    h_0.
    """
    samples.validate()
    dd = samples.deltas
    qvals = np.empty(samples.directions.shape[0])
    worst = 0.0
    for j in range(samples.directions.shape[0]):
        f = samples.lengths[j] - 2.0 * np.log(2.0 * dd)
        coef = _poly_coeffs(dd, f, fit_order)
        van = np.vander(dd, fit_order + 1, increasing=True)
        worst = max(worst, float(np.max(np.abs(van @ coef - f))))
        qvals[j] = math.exp(-coef[0])
    h0_inv = _polarize(samples.directions, qvals)
    eigs = np.linalg.eigvalsh(h0_inv)
    if np.any(eigs <= 0.0):
        raise RecoveryError("recovered quadratic form is not positive "
                            "definite (eigenvalues %s)" % eigs)
    h0 = np.linalg.inv(h0_inv)
    norms = np.array([math.sqrt(float(w @ h0_inv @ w))
                      for w in samples.directions])
    return H0Recovery(y0=samples.y0, norms=norms, h0=h0, h0_inv=h0_inv,
                      fit_residual=worst)


@dataclass(frozen=True)
class JetEstimate:
    """Recovered radial jet of the metric family at boundary points."""

    y0s: np.ndarray            # (m, n) sample points
    h0: np.ndarray             # (m, n, n) boundary metric
    drho_h: np.ndarray         # (m, n, n) first radial derivative
    order: int
    fit_residuals: np.ndarray  # (m,) per-point misfit summary
    d2rho_h: Optional[np.ndarray] = None   # (m, n, n) when order >= 2
    jacobian_sv: Optional[np.ndarray] = None  # fit-route singular values
    unresolved: Optional[np.ndarray] = None   # near-null parameter direction

    def validate(self) -> None:
        for mat in self.h0:
            if np.any(np.linalg.eigvalsh(mat) <= 0.0):
                raise RecoveryError("h0 estimate not positive definite")

    def to_json(self) -> str:
        payload = {
            "y0s": self.y0s.tolist(),
            "h0": self.h0.tolist(),
            "drho_h": self.drho_h.tolist(),
            "order": self.order,
            "fit_residuals": self.fit_residuals.tolist(),
        }
        if self.d2rho_h is not None:
            payload["d2rho_h"] = self.d2rho_h.tolist()
        if self.jacobian_sv is not None:
            payload["jacobian_sv"] = self.jacobian_sv.tolist()
        if self.unresolved is not None:
            payload["unresolved"] = self.unresolved.tolist()
        return json.dumps(payload)


def _uniform_spacing(y0s: np.ndarray, period: Optional[float]) -> float:
    """Common spacing of a sorted 1-d sample grid (validated uniform)."""
    diffs = np.diff(y0s)
    if diffs.size == 0 or np.any(diffs <= 0.0):
        raise RecoveryError("sample points must be strictly increasing")
    step = float(diffs[0])
    if np.max(np.abs(diffs - step)) > 1e-9 * (1.0 + step):
        raise RecoveryError("tangential derivatives need a uniform "
                            "sample-point grid")
    if period is not None:
        wrap = period - (float(y0s[-1]) - float(y0s[0]))
        if abs(wrap - step) > 1e-9 * (1.0 + step):
            raise RecoveryError("grid does not close up over the stated "
                                "period")
    return step


def recover_first_jet(sample_sets: Sequence[LengthSampleSet],
                      h0_results: Optional[Sequence[H0Recovery]] = None,
                      fit_order: int = 3,
                      period: Optional[float] = 2.0 * math.pi
                      ) -> JetEstimate:
    """First radial derivative of h at each sample point.

    Normalizing each direction by its recovered boundary norm turns the
    sample table into values of the smooth remainder
    F(d) = L - 2 log(2 d); its slope at d = 0 equals

        -(w^sharp)^k T_k - h0(w', w) - (pi/2) * drho(h^{ij}) w_i w_j

    where T_k is the tangential derivative of the inverse-form values
    (finite-differenced across neighboring sample points) and w' is the
    closed-form linearized direction shift, with components -T_k.  Solving
    for the last term and polarizing yields the radial derivative of the
    inverse metric, converted to the metric itself at the end.

    Currently restricted to one boundary dimension (scalar h); the
    correction terms are evaluated literally even though they cancel
    pairwise there.
    """
    if len(sample_sets) < 3:
        raise RecoveryError("need at least 3 neighboring sample points "
                            "for tangential derivatives")
    n = sample_sets[0].y0.size
    if n != 1:
        raise NotImplementedError("first-jet extraction is implemented "
                                  "for one boundary dimension")
    if h0_results is None:
        h0_results = [recover_h0(s) for s in sample_sets]
    if len(h0_results) != len(sample_sets):
        raise RecoveryError("one h0 result per sample set required")
    m = len(sample_sets)
    ys = np.array([float(s.y0[0]) for s in sample_sets])
    step = _uniform_spacing(ys, period)

    y0s = np.empty((m, 1))
    h0_out = np.empty((m, 1, 1))
    drho_out = np.empty((m, 1, 1))
    resid = np.empty(m)
    for i, (samp, rec) in enumerate(zip(sample_sets, h0_results)):
        y0s[i, 0] = ys[i]
        h0_out[i] = rec.h0
        pvals = np.empty(samp.directions.shape[0])
        worst = 0.0
        for j, om in enumerate(samp.directions):
            w_hat = om / rec.norms[j]
            d_hat = samp.deltas / rec.norms[j]
            f = samp.lengths[j] - 2.0 * np.log(2.0 * d_hat)
            coef = _poly_coeffs(d_hat, f, fit_order)
            van = np.vander(d_hat, fit_order + 1, increasing=True)
            worst = max(worst, float(np.max(np.abs(van @ coef - f))))
            fprime = coef[1]
            # tangential derivative of the inverse form at fixed w_hat,
            # centered across the neighboring sample points
            ip = (i + 1) % m
            im = (i - 1) % m
            if period is None and (i == 0 or i == m - 1):
                raise RecoveryError("interior sample point required for "
                                    "tangential derivatives")
            q_p = float(w_hat @ h0_results[ip].h0_inv @ w_hat)
            q_m = float(w_hat @ h0_results[im].h0_inv @ w_hat)
            t_k = np.array([(q_p - q_m) / (2.0 * step)])
            w_sharp = rec.h0_inv @ w_hat
            corr1 = -float(w_sharp @ t_k)
            w_shift = -t_k          # linearized direction shift at theta=pi
            corr2 = -float(w_shift @ rec.h0_inv @ w_hat)
            pvals[j] = (corr1 + corr2 - fprime) * 2.0 / math.pi
        dirs_hat = samp.directions / rec.norms[:, None]
        dh_inv = _polarize(dirs_hat, pvals)
        drho_out[i] = -rec.h0 @ dh_inv @ rec.h0
        resid[i] = worst
    est = JetEstimate(y0s=y0s, h0=h0_out, drho_h=drho_out, order=1,
                      fit_residuals=resid)
    est.validate()
    return est


# ---------------------------------------------------------------------------
# forward-model fitting route


def _forward_lengths(y0, dirs: np.ndarray, deltas: np.ndarray,
                     params: np.ndarray, rho_cap: float,
                     tol: float) -> np.ndarray:
    h0, c1, c2 = params
    fam = taylor1d_family(h0, c1, c2, rho_max=rho_cap)
    out = np.empty((dirs.shape[0], deltas.size))
    for j, om in enumerate(dirs):
        for k, d in enumerate(deltas):
            traj = trace_geodesic(fam, (y0, om / d), tol=tol)
            out[j, k] = renormalized_length(traj).value
    return out


def recover_jet_fit(sample_sets: Sequence[LengthSampleSet], k_max: int = 2,
                    tol: float = 1e-12, rho_cap: float = 0.35,
                    rank_tol: float = 1e-4) -> JetEstimate:
    """Levenberg-Marquardt fit of a truncated radial Taylor model.

    Per sample point, the parameters (h0, first and second radial
    derivative) of a radially-truncated family are adjusted until its
    simulated length table matches the samples in least squares.  The
    final Jacobian's singular values are reported; a near-null direction
    flags coefficients the delta-range cannot resolve.
    """
    if k_max not in (1, 2):
        raise RecoveryError("k_max must be 1 or 2")
    m = len(sample_sets)
    n = sample_sets[0].y0.size
    if n != 1:
        raise NotImplementedError("fit route is implemented for one "
                                  "boundary dimension")
    y0s = np.empty((m, 1))
    h0_out = np.empty((m, 1, 1))
    drho_out = np.empty((m, 1, 1))
    d2_out = np.empty((m, 1, 1))
    resid = np.empty(m)
    svs = np.empty((m, k_max + 1))
    unresolved = np.zeros((m, k_max + 1))
    for i, samp in enumerate(sample_sets):
        samp.validate()
        y0s[i, 0] = float(samp.y0[0])
        target = samp.lengths.ravel()

        def misfit(p):
            full = np.array([p[0], p[1], p[2] if k_max >= 2 else 0.0])
            try:
                sim = _forward_lengths(samp.y0, samp.directions,
                                       samp.deltas, full, rho_cap, tol)
            except (MetricError, FlowError):
                return np.full(target.size, 1e3)
            return sim.ravel() - target

        x0 = np.array([1.0, 0.0, 0.0][:k_max + 1])
        # the finite-difference step must clear the forward model's
        # integration noise floor, else the Jacobian is swamped and the
        # solver stalls far from the minimum
        res = least_squares(misfit, x0, method="lm", diff_step=1e-6)
        if not res.success:
            raise RecoveryError("fit did not converge at y0=%s: %s"
                                % (samp.y0, res.message))
        h0_out[i, 0, 0] = res.x[0]
        drho_out[i, 0, 0] = res.x[1]
        d2_out[i, 0, 0] = res.x[2] if k_max >= 2 else 0.0
        resid[i] = float(np.linalg.norm(res.fun))
        u, s, vt = np.linalg.svd(res.jac)
        svs[i] = s
        if s[-1] < rank_tol * s[0]:
            unresolved[i] = vt[-1]
    est = JetEstimate(y0s=y0s, h0=h0_out, drho_h=drho_out,
                      order=k_max, fit_residuals=resid,
                      d2rho_h=d2_out if k_max >= 2 else None,
                      jacobian_sv=svs, unresolved=unresolved)
    est.validate()
    return est
