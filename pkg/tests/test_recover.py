"""Boundary-jet recovery from renormalized-length tables.

The study family h = exp(2 rho (0.1 cos y + 0.05 rho)) has its radial jet
in closed form (see conftest.jet_truth), giving exact targets for both
recovery routes.  On the flat half-plane every table entry is exactly
2 log(2 delta), so the whole pipeline must return the identity metric with
zero slope to solver precision.
"""
import json
import math

import numpy as np
import pytest

from ahx import halfplane_family
from ahx.recover import (
    DELTA_GRID,
    LengthSampleSet,
    RecoveryError,
    recover_first_jet,
    recover_h0,
    recover_jet_fit,
    synthesize_samples,
)
from conftest import jet_truth

RING_POINTS = 8


def ring(npts):
    return np.linspace(0.0, 2.0 * math.pi, npts, endpoint=False)


def subset(s, sl):
    """Same sample set restricted to a slice of the delta grid."""
    return LengthSampleSet(y0=s.y0, directions=s.directions,
                           deltas=s.deltas[sl], lengths=s.lengths[:, sl])


@pytest.fixture(scope="module")
def ring_sets(jet_family):
    """Length tables at eight boundary points of the study family."""
    return [synthesize_samples(jet_family, float(y), [[1.0]])
            for y in ring(RING_POINTS)]


@pytest.fixture(scope="module")
def hp_sets(halfplane):
    """Length tables at three points of the flat model."""
    return [synthesize_samples(halfplane, float(y), [[1.0]])
            for y in ring(3)]


# ---------------------------------------------------------------------------
# boundary metric at a point


def test_flat_model_recovers_identity(hp_sets):
    rec = recover_h0(hp_sets[0])
    assert rec.h0[0, 0] == pytest.approx(1.0, abs=1e-8)
    assert rec.norms[0] == pytest.approx(1.0, abs=1e-8)
    assert rec.fit_residual < 1e-8


def test_direction_scaling_is_homogeneous(halfplane):
    samples = synthesize_samples(halfplane, 0.0, [[1.0], [2.0], [-1.0]])
    rec = recover_h0(samples)
    assert rec.h0[0, 0] == pytest.approx(1.0, abs=1e-8)
    assert np.allclose(rec.norms, [1.0, 2.0, 1.0], atol=1e-8)


def test_study_family_h0(ring_sets):
    for s in ring_sets:
        rec = recover_h0(s)
        assert rec.h0[0, 0] == pytest.approx(1.0, abs=1e-4)


# ---------------------------------------------------------------------------
# first radial derivative (asymptotic route)


def test_flat_model_first_jet_is_zero(hp_sets):
    jet = recover_first_jet(hp_sets)
    assert np.max(np.abs(jet.h0 - 1.0)) < 1e-8
    assert np.max(np.abs(jet.drho_h)) < 1e-6


def test_study_family_first_jet(ring_sets):
    jet = recover_first_jet(ring_sets)
    for i, y in enumerate(ring(RING_POINTS)):
        _, dh, _ = jet_truth(float(y))
        assert jet.h0[i, 0, 0] == pytest.approx(1.0, abs=1e-4)
        assert jet.drho_h[i, 0, 0] == pytest.approx(dh, abs=5e-4)


def test_deeper_delta_grids_do_not_degrade(ring_sets):
    """Error of the slope extraction improves with the grid depth."""
    worst = []
    for hi in (4, 5, 6, 7):
        jet = recover_first_jet([subset(s, slice(0, hi)) for s in ring_sets])
        errs = [abs(jet.drho_h[i, 0, 0] - jet_truth(float(y))[1])
                for i, y in enumerate(ring(RING_POINTS))]
        worst.append(max(errs))
    assert worst[0] < 1e-4
    for shallow, deep in zip(worst, worst[1:]):
        assert deep <= shallow * 1.05


def test_noise_degrades_gracefully(ring_sets):
    rng = np.random.default_rng(42)
    noisy = [LengthSampleSet(
        y0=s.y0, directions=s.directions, deltas=s.deltas,
        lengths=s.lengths + rng.uniform(-1e-6, 1e-6, s.lengths.shape),
        noise=1e-6) for s in ring_sets]
    jet = recover_first_jet(noisy)
    for i, y in enumerate(ring(RING_POINTS)):
        assert jet.h0[i, 0, 0] == pytest.approx(1.0, abs=1e-4)
        assert jet.drho_h[i, 0, 0] == pytest.approx(jet_truth(float(y))[1],
                                                    abs=1e-3)


def test_deep_interior_bump_is_invisible(bump_family, hp_sets):
    """The tables only see the collar the short geodesics sweep.

    The bump family differs from the flat model only on rho > 0.3, beyond
    the reach of every delta in the grid, so tables and recovered jets
    must coincide with the flat ones.
    """
    bump_sets = [synthesize_samples(bump_family, float(y), [[1.0]])
                 for y in ring(3)]
    for sb, sf in zip(bump_sets, hp_sets):
        assert np.max(np.abs(sb.lengths - sf.lengths)) < 1e-9
    jet = recover_first_jet(bump_sets)
    assert np.max(np.abs(jet.h0 - 1.0)) < 1e-8
    assert np.max(np.abs(jet.drho_h)) < 1e-6


# ---------------------------------------------------------------------------
# forward-model fitting route


def test_fit_route_flat_model(hp_sets):
    jet = recover_jet_fit([hp_sets[0]])
    assert jet.h0[0, 0, 0] == pytest.approx(1.0, abs=1e-6)
    assert abs(jet.drho_h[0, 0, 0]) < 1e-4
    assert abs(jet.d2rho_h[0, 0, 0]) < 1e-2
    assert jet.jacobian_sv.shape == (1, 3)
    assert np.all(jet.unresolved[0] == 0.0)


def test_fit_route_study_family(ring_sets):
    # y = 0 is a tangentially symmetric point, where the radial Taylor
    # model introduces no second-order bias
    jet = recover_jet_fit([ring_sets[0]])
    h0, dh, d2h = jet_truth(0.0)
    assert jet.h0[0, 0, 0] == pytest.approx(h0, abs=1e-4)
    assert jet.drho_h[0, 0, 0] == pytest.approx(dh, abs=1e-3)
    assert jet.d2rho_h[0, 0, 0] == pytest.approx(d2h, abs=5e-2)


def test_fit_route_flags_unresolvable_grid(ring_sets):
    """A narrow small-delta grid cannot pin the second derivative.

    The final-Jacobian singular values must expose this and the near-null
    direction must point along the second-derivative coefficient.
    """
    narrow = subset(ring_sets[0], slice(4, 7))
    jet = recover_jet_fit([narrow])
    sv = jet.jacobian_sv[0]
    assert sv[-1] / sv[0] < 1e-4
    flag = jet.unresolved[0]
    assert np.any(flag != 0.0)
    assert abs(flag[2]) > 0.9


def test_fit_route_first_order_only(ring_sets):
    jet = recover_jet_fit([ring_sets[0]], k_max=1)
    assert jet.d2rho_h is None
    assert jet.h0[0, 0, 0] == pytest.approx(1.0, abs=1e-3)


# ---------------------------------------------------------------------------
# validation and serialization


def _fake_set(deltas, lengths, y0=0.0):
    return LengthSampleSet(y0=np.array([y0]), directions=np.array([[1.0]]),
                           deltas=np.asarray(deltas, dtype=float),
                           lengths=np.asarray(lengths, dtype=float))


def test_sample_set_validation_errors():
    with pytest.raises(RecoveryError, match="decreasing"):
        _fake_set([0.1, 0.2, 0.4], [[0.0, 0.0, 0.0]]).validate()
    with pytest.raises(RecoveryError, match="shape"):
        _fake_set([0.2, 0.1], [[0.0, 0.0, 0.0]]).validate()
    with pytest.raises(RecoveryError, match="incomplete"):
        _fake_set([0.4, 0.2, 0.1], [[0.0, np.nan, 0.0]]).validate()
    with pytest.raises(RecoveryError, match="positive"):
        _fake_set([0.2, 0.1, -0.1], [[0.0, 0.0, 0.0]]).validate()


def test_synthesis_guards(halfplane):
    with pytest.raises(RecoveryError, match="at least 3"):
        synthesize_samples(halfplane, 0.0, [[1.0]], deltas=(0.2, 0.1))
    with pytest.raises(RecoveryError, match="safe scale"):
        synthesize_samples(halfplane, 0.0, [[1.0]], deltas=(0.5, 0.25, 0.125))


def test_first_jet_grid_guards(ring_sets):
    with pytest.raises(RecoveryError, match="at least 3 neighboring"):
        recover_first_jet(ring_sets[:2])
    relabeled = [LengthSampleSet(y0=np.array([y]), directions=s.directions,
                                 deltas=s.deltas, lengths=s.lengths)
                 for y, s in zip([0.0, 1.0, 2.0], ring_sets[:3])]
    with pytest.raises(RecoveryError, match="close up"):
        recover_first_jet(relabeled)
    with pytest.raises(RecoveryError, match="interior"):
        recover_first_jet(relabeled, period=None)


def test_fit_route_order_guard(ring_sets):
    with pytest.raises(RecoveryError, match="k_max"):
        recover_jet_fit([ring_sets[0]], k_max=3)


def test_json_round_trips(ring_sets):
    payload = json.loads(ring_sets[0].to_json())
    assert payload["deltas"] == list(DELTA_GRID)
    assert np.asarray(payload["lengths"]).shape == ring_sets[0].lengths.shape
    jet = recover_first_jet(ring_sets)
    out = json.loads(jet.to_json())
    assert np.allclose(out["drho_h"], jet.drho_h)
    assert out["order"] == 1
