import math

import numpy as np
import pytest

from carleman_ratio import (
    ManufacturedPair,
    PhasePair1D,
    carleman_geometry,
    carleman_ratio,
    ratio_spread,
    ratio_sweep,
    sweep_frame,
)
from lab_errors import CarlemanPreconditionError
from plate_model import make_model

H_SWEEP = [0.1, 0.05, 0.025, 0.0125]


@pytest.fixture
def model():
    return make_model({})


def test_zero_solution_gives_zero_ratio(model):
    result = carleman_ratio(model, PhasePair1D(), 0.05, ManufacturedPair(amplitude=0.0))
    assert result.lhs == 0.0
    assert result.rhs == 0.0
    assert result.ratio == 0.0


def test_all_terms_are_reported(model):
    result = carleman_ratio(model, PhasePair1D(), 0.05)
    assert len(result.lhs_terms) == 10
    assert {"f1_interior", "f2_interior", "w1_gamma1", "dn_w1_gamma1", "e1_gamma", "grad_e1_gamma",
            "e2_gamma"} == set(result.rhs_terms)
    assert all(v >= 0 for v in result.lhs_terms.values())
    # continuous manufactured pair: no interface mismatch
    assert result.rhs_terms["e1_gamma"] == 0.0
    assert result.rhs_terms["e2_gamma"] == 0.0
    assert result.ball_radius == pytest.approx(0.05)


def test_ratio_is_invariant_under_scaling(model):
    single = carleman_ratio(model, PhasePair1D(), 0.025, ManufacturedPair(amplitude=1.0))
    double = carleman_ratio(model, PhasePair1D(), 0.025, ManufacturedPair(amplitude=2.0))
    assert double.lhs == pytest.approx(4.0 * single.lhs, rel=1e-14)
    assert double.rhs == pytest.approx(4.0 * single.rhs, rel=1e-14)
    assert double.ratio == pytest.approx(single.ratio, rel=1e-14)


def test_ratio_stays_bounded_over_the_sweep(model):
    results = ratio_sweep(model, PhasePair1D(), H_SWEEP, ManufacturedPair())
    assert all(r.ratio > 0 and math.isfinite(r.ratio) for r in results)
    assert ratio_spread(results) <= 10.0

    frame = sweep_frame(results)
    assert list(frame["h"]) == H_SWEEP
    assert {"lhs", "rhs", "ratio", "log_scale", "rhs_f1_interior", "lhs_w1_interior"} <= set(frame.columns)


def test_ratio_with_transmission_speeds():
    model = make_model({"c1": 1.0, "c2": 2.0})
    results = ratio_sweep(model, PhasePair1D(), H_SWEEP)
    assert all(r.ratio > 0 for r in results)


def test_w2_must_vanish_on_outer_boundary(model):
    with pytest.raises(CarlemanPreconditionError, match="w2 must vanish"):
        carleman_ratio(model, PhasePair1D(), 0.05, ManufacturedPair(w2_shift=0.1))


def test_phase_trace_mismatch_rejected(model):
    with pytest.raises(CarlemanPreconditionError, match="traces differ"):
        carleman_ratio(model, PhasePair1D(shift=0.1), 0.05)


def test_phase_slopes_must_be_ordered(model):
    with pytest.raises(CarlemanPreconditionError, match="kappa1 > kappa2"):
        carleman_ratio(model, PhasePair1D(kappa1=1.0, kappa2=2.0), 0.05)


@pytest.mark.parametrize("h", [0.0, -0.1, 0.3])
def test_h_out_of_range(model, h):
    with pytest.raises(CarlemanPreconditionError, match="must lie in"):
        carleman_ratio(model, PhasePair1D(), h)


def test_geometry_and_ball_radius(model):
    geometry = carleman_geometry(model)
    assert geometry.omega1 == [(0.3, pytest.approx(0.45)), (pytest.approx(0.55), 0.7)]
    assert geometry.gamma == [(0.3, -1.0), (0.7, 1.0)]
    assert geometry.gamma2 == [(0.0, -1.0), (1.0, 1.0)]
    with pytest.raises(CarlemanPreconditionError, match="ball_radius"):
        carleman_geometry(model, ball_radius=0.25)


def test_phase_pair_values(model):
    pair = PhasePair1D(kappa1=2.0, kappa2=1.0)
    x = np.array([0.3, 0.7])
    psi1, _ = pair.psi(1, x, model)
    psi2, _ = pair.psi(2, x, model)
    assert np.allclose(psi1, 0.0) and np.allclose(psi2, 0.0)
    phi, dphi = pair.phi(1, np.array([0.4]), model)
    assert phi[0] == pytest.approx(math.exp(0.2))
    assert dphi[0] == pytest.approx(2.0 * math.exp(0.2))
