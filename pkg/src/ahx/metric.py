"""Boundary metric families for asymptotically hyperbolic metrics in normal form.

A family describes g = (d rho**2 + h_rho) / rho**2 near (or on all of) a
manifold-with-boundary through the rho-dependent boundary metric h_rho and
its first derivatives in rho and y.  Everything downstream consumes only
h, dh/drho and dh/dy; second derivatives, where needed, are obtained by
central differences of the supplied first derivatives.

Built-in families:

* ``half-plane``     n=1, h = dy**2, affine chart, domain unbounded in rho.
* ``disc-normal``    n=1, h = (1 - rho**2/4)**2 dy**2, periodic chart.  This
  is the full hyperbolic disc written globally in normal form; rho = 2 is
  the coordinate image of the disc centre and is excluded from the domain.
* ``perturbed``      n=1, h = exp(2(rho*a(y) + rho**2*b(y))) dy**2 with trig
  polynomials a, b; collar domain [0, rho_max].
* ``taylor1d``       n=1, h = h0 + c1*rho + c2*rho**2/2, used as the forward
  model of jet fitting.
* ``product``        n=2, block-diagonal combination of two n=1 families.

Any n=1 family accepts an optional multiplicative interior bump, supported
away from the boundary, for gauge-insensitivity experiments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .quadrature import poly_bump, poly_bump_dt

__all__ = [
    "MetricError",
    "Chart",
    "ScalarMetric1D",
    "BoundaryMetricFamily",
    "MetricEval",
    "make_family",
    "halfplane_family",
    "disc_family",
    "perturbed_family",
    "taylor1d_family",
    "product_family",
    "eval_metric",
    "gauss_curvature",
    "christoffel_symbols",
]

TWO_PI = 2.0 * math.pi

# step for second derivatives of h taken from supplied first derivatives
FD2_STEP = 1e-5


class MetricError(ValueError):
    """Invalid family specification or evaluation outside the stated domain."""


@dataclass(frozen=True, eq=False)
class Chart:
    """Boundary chart: periodic (angles mod 2 pi per coordinate) or affine."""

    kind: str  # "periodic" | "affine"
    y_bounds: Optional[tuple] = None  # affine only: ((lo, hi), ...) or None

    def __post_init__(self):
        if self.kind not in ("periodic", "affine"):
            raise MetricError(f"unknown chart kind {self.kind!r}")

    def wrap(self, y: np.ndarray) -> np.ndarray:
        if self.kind == "periodic":
            return np.mod(y, TWO_PI)
        return np.asarray(y, dtype=float)

    def wrapped_diff(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Representative of a - b, reduced to (-pi, pi] per periodic coord."""
        d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
        if self.kind == "periodic":
            d = np.mod(d + math.pi, TWO_PI) - math.pi
            d = np.where(d == -math.pi, math.pi, d)
        return d

    def contains(self, y: np.ndarray) -> bool:
        if self.kind == "periodic" or self.y_bounds is None:
            return True
        y = np.atleast_1d(y)
        for yi, (lo, hi) in zip(y, self.y_bounds):
            if yi < lo or yi > hi:
                return False
        return True


@dataclass(frozen=True, eq=False)
class ScalarMetric1D:
    """Fast scalar path for n=1: h11 and first derivatives as plain floats."""

    h: Callable[[float, float], float]
    dh_drho: Callable[[float, float], float]
    dh_dy: Callable[[float, float], float]


@dataclass(frozen=True, eq=False)
class BoundaryMetricFamily:
    """h_rho(y) together with first derivatives on a stated domain."""

    dim_boundary: int
    chart: Chart
    h: Callable[[float, np.ndarray], np.ndarray]
    dh_drho: Callable[[float, np.ndarray], np.ndarray]
    dh_dy: Callable[[float, np.ndarray], np.ndarray]  # shape (n, n, n), [k] = d/dy^k
    rho_max: float
    open_at_max: bool = False  # domain is [0, rho_max) when True
    scalar: Optional[ScalarMetric1D] = None
    name: str = ""
    params: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.dim_boundary

    def spec(self) -> dict:
        """JSON-serializable document that reconstructs this family."""
        return {"family": self.name, "params": dict(self.params)}

    def eta_normsq(self, rho: float, y: np.ndarray, eta: np.ndarray) -> float:
        """|eta|^2 with respect to h_rho, i.e. the inverse-metric form."""
        if self.scalar is not None:
            return float(eta[0]) ** 2 / self.scalar.h(rho, float(y[0]))
        hm = self.h(rho, y)
        return float(eta @ np.linalg.solve(hm, eta))


@dataclass(frozen=True, eq=False)
class MetricEval:
    """Pointwise data of h_rho: value, inverse, first derivatives."""

    rho: float
    y: np.ndarray
    h_mat: np.ndarray
    h_inv: np.ndarray
    dh_drho_mat: np.ndarray
    dh_dy_mats: np.ndarray  # (n, n, n)

    def eta_normsq(self, eta: np.ndarray) -> float:
        eta = np.atleast_1d(np.asarray(eta, dtype=float))
        return float(eta @ self.h_inv @ eta)


# ---------------------------------------------------------------------------
# trig polynomials


class TrigPoly:
    """c[k]*cos(k y) + s[k]*sin(k y) with finitely many coefficients."""

    def __init__(self, cos_coeffs=(), sin_coeffs=()):
        self.c = tuple(float(v) for v in cos_coeffs)
        self.s = tuple(float(v) for v in sin_coeffs)

    def __call__(self, y: float) -> float:
        out = 0.0
        for k, v in enumerate(self.c):
            if v:
                out += v * math.cos(k * y)
        for k, v in enumerate(self.s):
            if v:
                out += v * math.sin(k * y)
        return out

    def deriv(self, y: float) -> float:
        out = 0.0
        for k, v in enumerate(self.c):
            if v and k:
                out -= v * k * math.sin(k * y)
        for k, v in enumerate(self.s):
            if v and k:
                out += v * k * math.cos(k * y)
        return out

    def is_zero(self) -> bool:
        return not any(self.c) and not any(self.s)


# ---------------------------------------------------------------------------
# family constructors


def _family_from_scalar(scalar: ScalarMetric1D, chart: Chart, rho_max: float,
                        name: str, params: dict, open_at_max: bool = False,
                        validate: bool = True) -> BoundaryMetricFamily:
    def h(rho, y):
        return np.array([[scalar.h(rho, float(y[0]))]])

    def dh_drho(rho, y):
        return np.array([[scalar.dh_drho(rho, float(y[0]))]])

    def dh_dy(rho, y):
        return np.array([[[scalar.dh_dy(rho, float(y[0]))]]])

    fam = BoundaryMetricFamily(
        dim_boundary=1, chart=chart, h=h, dh_drho=dh_drho, dh_dy=dh_dy,
        rho_max=rho_max, open_at_max=open_at_max, scalar=scalar,
        name=name, params=params)
    if validate:
        _validate_family(fam)
    return fam


def _apply_bump(scalar: ScalarMetric1D, amplitude: float, rho_lo: float,
                rho_hi: float) -> ScalarMetric1D:
    """Multiply h by 1 + amplitude * bump(rho), supported in [rho_lo, rho_hi]."""
    if rho_hi <= rho_lo:
        raise MetricError("interior bump needs rho_lo < rho_hi")
    width = rho_hi - rho_lo

    def factor(rho):
        return 1.0 + amplitude * poly_bump((rho - rho_lo) / width)

    def dfactor(rho):
        return amplitude * poly_bump_dt((rho - rho_lo) / width) / width

    base_h, base_dr, base_dy = scalar.h, scalar.dh_drho, scalar.dh_dy
    return ScalarMetric1D(
        h=lambda rho, y: base_h(rho, y) * factor(rho),
        dh_drho=lambda rho, y: base_dr(rho, y) * factor(rho) + base_h(rho, y) * dfactor(rho),
        dh_dy=lambda rho, y: base_dy(rho, y) * factor(rho),
    )


def halfplane_family(y_bounds=None, rho_max: float = math.inf) -> BoundaryMetricFamily:
    scalar = ScalarMetric1D(
        h=lambda rho, y: 1.0,
        dh_drho=lambda rho, y: 0.0,
        dh_dy=lambda rho, y: 0.0,
    )
    chart = Chart("affine", y_bounds=y_bounds)
    params = {}
    if y_bounds is not None:
        params["y_bounds"] = [list(b) for b in y_bounds]
    if math.isfinite(rho_max):
        params["rho_max"] = rho_max
    return _family_from_scalar(scalar, chart, rho_max, "half-plane", params)


def disc_family() -> BoundaryMetricFamily:
    # global normal form of the hyperbolic disc; rho = 2 is the centre
    scalar = ScalarMetric1D(
        h=lambda rho, y: (1.0 - 0.25 * rho * rho) ** 2,
        dh_drho=lambda rho, y: -rho * (1.0 - 0.25 * rho * rho),
        dh_dy=lambda rho, y: 0.0,
    )
    return _family_from_scalar(scalar, Chart("periodic"), 2.0,
                               "disc-normal", {}, open_at_max=True)


def perturbed_family(a_cos=(), a_sin=(), b_cos=(), b_sin=(),
                     rho_max: float = 0.5, bump=None) -> BoundaryMetricFamily:
    """h = exp(2 (rho a(y) + rho**2 b(y))) dy**2 on a collar [0, rho_max]."""
    a = TrigPoly(a_cos, a_sin)
    b = TrigPoly(b_cos, b_sin)

    def h(rho, y):
        return math.exp(2.0 * rho * (a(y) + rho * b(y)))

    def dh_drho(rho, y):
        return h(rho, y) * (2.0 * a(y) + 4.0 * rho * b(y))

    def dh_dy(rho, y):
        return h(rho, y) * (2.0 * rho * a.deriv(y) + 2.0 * rho * rho * b.deriv(y))

    scalar = ScalarMetric1D(h=h, dh_drho=dh_drho, dh_dy=dh_dy)
    params = {"a_cos": list(a.c), "a_sin": list(a.s),
              "b_cos": list(b.c), "b_sin": list(b.s), "rho_max": rho_max}
    if bump is not None:
        scalar = _apply_bump(scalar, bump["amplitude"], bump["rho_lo"], bump["rho_hi"])
        params["bump"] = dict(bump)
    return _family_from_scalar(scalar, Chart("periodic"), rho_max,
                               "perturbed", params)


def radial_power_family(amp: float, power: int,
                        rho_max: float = math.inf) -> BoundaryMetricFamily:
    """Flat boundary metric with monomial radial profile h = 1 + amp rho^p.

    Used for deformation paths whose metric derivative vanishes to a
    prescribed order at the boundary.
    """
    p = int(power)
    if p < 1:
        raise MetricError("radial power must be a positive integer")

    scalar = ScalarMetric1D(
        h=lambda rho, y: 1.0 + amp * rho ** p,
        dh_drho=lambda rho, y: amp * p * rho ** (p - 1),
        dh_dy=lambda rho, y: 0.0,
    )
    params = {"amp": amp, "power": p}
    if math.isfinite(rho_max):
        params["rho_max"] = rho_max
    return _family_from_scalar(scalar, Chart("affine"), rho_max,
                               "radial-power", params)


def taylor1d_family(h0: float, c1: float, c2: float,
                    rho_max: float = 0.25) -> BoundaryMetricFamily:
    """Truncated radial Taylor model h = h0 + c1 rho + c2 rho**2 / 2."""
    scalar = ScalarMetric1D(
        h=lambda rho, y: h0 + c1 * rho + 0.5 * c2 * rho * rho,
        dh_drho=lambda rho, y: c1 + c2 * rho,
        dh_dy=lambda rho, y: 0.0,
    )
    params = {"h0": h0, "c1": c1, "c2": c2, "rho_max": rho_max}
    return _family_from_scalar(scalar, Chart("periodic"), rho_max,
                               "taylor1d", params)


def product_family(fam1: BoundaryMetricFamily,
                   fam2: BoundaryMetricFamily) -> BoundaryMetricFamily:
    """Block-diagonal n=2 family from two n=1 factors (shared rho)."""
    if fam1.n != 1 or fam2.n != 1:
        raise MetricError("product factors must have n=1")
    if fam1.chart.kind != fam2.chart.kind:
        raise MetricError("product factors must share chart kind")
    s1, s2 = fam1.scalar, fam2.scalar

    def h(rho, y):
        return np.diag([s1.h(rho, float(y[0])), s2.h(rho, float(y[1]))])

    def dh_drho(rho, y):
        return np.diag([s1.dh_drho(rho, float(y[0])), s2.dh_drho(rho, float(y[1]))])

    def dh_dy(rho, y):
        out = np.zeros((2, 2, 2))
        out[0, 0, 0] = s1.dh_dy(rho, float(y[0]))
        out[1, 1, 1] = s2.dh_dy(rho, float(y[1]))
        return out

    chart = Chart(fam1.chart.kind)
    rho_max = min(fam1.rho_max, fam2.rho_max)
    fam = BoundaryMetricFamily(
        dim_boundary=2, chart=chart, h=h, dh_drho=dh_drho, dh_dy=dh_dy,
        rho_max=rho_max, open_at_max=fam1.open_at_max or fam2.open_at_max,
        scalar=None, name="product",
        params={"factors": [fam1.spec(), fam2.spec()]})
    _validate_family(fam)
    return fam


def make_family(spec: dict) -> BoundaryMetricFamily:
    """Build a family from a metric-spec document (parsed JSON)."""
    if not isinstance(spec, dict) or "family" not in spec:
        raise MetricError("metric spec must be a dict with a 'family' key")
    kind = spec["family"]
    params = dict(spec.get("params", {}))
    if kind == "half-plane":
        yb = params.get("y_bounds")
        if yb is not None:
            yb = tuple(tuple(float(v) for v in b) for b in yb)
        return halfplane_family(y_bounds=yb,
                                rho_max=float(params.get("rho_max", math.inf)))
    if kind == "disc-normal":
        return disc_family()
    if kind == "perturbed":
        return perturbed_family(
            a_cos=params.get("a_cos", ()), a_sin=params.get("a_sin", ()),
            b_cos=params.get("b_cos", ()), b_sin=params.get("b_sin", ()),
            rho_max=float(params.get("rho_max", 0.5)),
            bump=params.get("bump"))
    if kind == "radial-power":
        return radial_power_family(float(params["amp"]), int(params["power"]),
                                   rho_max=float(params.get("rho_max",
                                                            math.inf)))
    if kind == "taylor1d":
        return taylor1d_family(float(params["h0"]), float(params.get("c1", 0.0)),
                               float(params.get("c2", 0.0)),
                               rho_max=float(params.get("rho_max", 0.25)))
    if kind == "product":
        f1, f2 = (make_family(s) for s in params["factors"])
        return product_family(f1, f2)
    raise MetricError(f"unknown family {kind!r}")


# ---------------------------------------------------------------------------
# validation


def _validation_grid(fam: BoundaryMetricFamily):
    rho_cap = min(fam.rho_max, 8.0)
    rhos = np.linspace(0.0, rho_cap, 9)
    if fam.open_at_max and rhos[-1] >= fam.rho_max:
        rhos[-1] = fam.rho_max * (1.0 - 1e-6)
    if fam.chart.kind == "periodic":
        ys = np.linspace(0.0, TWO_PI, 8, endpoint=False)
    else:
        lo, hi = (-3.0, 3.0)
        if fam.chart.y_bounds is not None:
            lo, hi = fam.chart.y_bounds[0]
        ys = np.linspace(lo, hi, 8)
    return rhos, ys


def _validate_family(fam: BoundaryMetricFamily) -> None:
    rhos, ys = _validation_grid(fam)
    step = 1e-6
    for rho in rhos:
        for y0 in ys:
            y = np.full(fam.n, y0)
            hm = fam.h(rho, y)
            if not np.allclose(hm, hm.T, atol=1e-14):
                raise MetricError("h is not symmetric on the validation grid")
            try:
                np.linalg.cholesky(hm)
            except np.linalg.LinAlgError:
                raise MetricError(
                    f"h not positive definite at rho={rho:.4g}, y={y0:.4g}")
            # consistency of supplied first derivatives (scaled central FD)
            hr = step * max(1.0, abs(rho))
            fd_r = (fam.h(rho + hr, y) - fam.h(rho - hr, y)) / (2 * hr)
            an_r = fam.dh_drho(rho, y)
            if not np.allclose(fd_r, an_r, rtol=2e-6, atol=2e-6):
                raise MetricError("dh_drho inconsistent with h")
            an_y = fam.dh_dy(rho, y)
            for k in range(fam.n):
                yp, ym = y.copy(), y.copy()
                yp[k] += step
                ym[k] -= step
                fd_y = (fam.h(rho, yp) - fam.h(rho, ym)) / (2 * step)
                if not np.allclose(fd_y, an_y[k], rtol=2e-6, atol=2e-6):
                    raise MetricError("dh_dy inconsistent with h")


# ---------------------------------------------------------------------------
# pointwise operations


def _check_domain(fam: BoundaryMetricFamily, rho: float) -> None:
    if rho < 0.0:
        raise MetricError(f"rho={rho} below 0")
    if fam.open_at_max:
        if rho >= fam.rho_max:
            raise MetricError(f"rho={rho} outside [0, {fam.rho_max})")
    elif rho > fam.rho_max:
        raise MetricError(f"rho={rho} outside [0, {fam.rho_max}]")


def eval_metric(fam: BoundaryMetricFamily, rho: float, y) -> MetricEval:
    """Evaluate h_rho, its inverse and first derivatives at (rho, y)."""
    _check_domain(fam, rho)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    hm = fam.h(rho, y)
    try:
        h_inv = np.linalg.solve(hm, np.eye(fam.n))
    except np.linalg.LinAlgError:
        raise MetricError(f"singular h at rho={rho}, y={y}")
    return MetricEval(rho=rho, y=y, h_mat=hm, h_inv=h_inv,
                      dh_drho_mat=fam.dh_drho(rho, y),
                      dh_dy_mats=fam.dh_dy(rho, y))


def gauss_curvature(fam: BoundaryMetricFamily, rho: float, y) -> float:
    """Gauss curvature of g at an interior point (n=1 only).

    Written as -1 plus correction terms so the constant-curvature part is
    exact and the result stays accurate as rho -> 0.  Only the second
    rho-derivative of h is differenced, with a fixed step; family profiles
    extend real-analytically through rho = 0, so the stencil may cross zero.
    """
    if fam.n != 1:
        raise MetricError("gauss_curvature requires a 1-dimensional boundary")
    if rho <= 0.0:
        raise MetricError("gauss_curvature needs rho > 0")
    yv = float(np.atleast_1d(y)[0])
    if fam.scalar is not None:
        h_of = fam.scalar.h
        dh_of = fam.scalar.dh_drho
    else:
        h_of = lambda r, yy: float(fam.h(r, np.array([yy]))[0, 0])
        dh_of = lambda r, yy: float(fam.dh_drho(r, np.array([yy]))[0, 0])
    h = h_of(rho, yv)
    dh = dh_of(rho, yv)
    d2h = (dh_of(rho + FD2_STEP, yv) - dh_of(rho - FD2_STEP, yv)) \
        / (2.0 * FD2_STEP)
    return (-1.0 + rho * dh / (2.0 * h)
            - rho * rho * (d2h / (2.0 * h) - dh * dh / (4.0 * h * h)))


def christoffel_symbols(fam: BoundaryMetricFamily, rho: float, y) -> np.ndarray:
    """Christoffel symbols Gamma[c, a, b] of g at (rho, y), rho > 0.

    Index 0 is rho, indices 1..n are the y coordinates.
    """
    if rho <= 0.0:
        raise MetricError("christoffel_symbols needs rho > 0")
    ev = eval_metric(fam, rho, y)
    n = fam.n
    dim = n + 1
    G = np.zeros((dim, dim, dim))
    h, hi, dhr, dhy = ev.h_mat, ev.h_inv, ev.dh_drho_mat, ev.dh_dy_mats
    inv_rho = 1.0 / rho

    G[0, 0, 0] = -inv_rho
    # Gamma^0_ij = -1/2 dh_ij/drho + h_ij / rho
    G[0, 1:, 1:] = -0.5 * dhr + h * inv_rho
    # Gamma^k_0i = 1/2 (h^-1 dh/drho)^k_i - delta^k_i / rho
    mixed = 0.5 * (hi @ dhr) - inv_rho * np.eye(n)
    G[1:, 0, 1:] = mixed
    G[1:, 1:, 0] = mixed  # symmetric in the lower index pair
    # tangential Christoffels of h_rho at fixed rho
    # Gamma^k_ij = 1/2 h^{kl} (d_i h_lj + d_j h_li - d_l h_ij)
    for k in range(n):
        for i in range(n):
            for j in range(n):
                s = 0.0
                for l in range(n):
                    s += hi[k, l] * (dhy[i, l, j] + dhy[j, l, i] - dhy[l, i, j])
                G[1 + k, 1 + i, 1 + j] = 0.5 * s
    return G
