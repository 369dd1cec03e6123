import numpy as np
import pytest

from phase_functions import (
    FlowComposedPhase,
    FlowMap,
    GaussianDip,
    LinearPhase,
    QuadraticPhase,
    RadialDistance,
    SquaredNorm,
    TubeField,
    septic_step,
)

STEP = 1e-5


def numeric_derivatives(phase, x):
    """Central differences of the value (gradient) and of the exact gradient (hessian)."""
    grad = np.zeros_like(x)
    hess = np.zeros((x.shape[0], 2, 2))
    for j in range(2):
        e = np.zeros(2)
        e[j] = STEP
        grad[:, j] = (phase.value(x + e) - phase.value(x - e)) / (2 * STEP)
        hess[:, :, j] = (phase.gradient(x + e) - phase.gradient(x - e)) / (2 * STEP)
    return grad, hess


def sample_tube():
    return TubeField(center=(0.2, -0.1), direction=(1.0, 1.0), length=0.1,
                     core_axial=0.15, core_radial=0.05, taper=0.1)


PHASES = {
    "linear": LinearPhase((0.3, -1.2), offset=0.5),
    "squared": SquaredNorm((0.1, 0.2)),
    "radial": RadialDistance((0.3, 0.0)),
    "quadratic": QuadraticPhase(np.array([[1.0, 0.4], [0.2, -0.5]]), (0.1, 0.3)),
    "dip": GaussianDip((-0.4, 0.1), depth=0.7, s_along=0.15, s_across=0.08, angle=0.6),
    "sum": RadialDistance((0.3, 0.0)) + 0.5 * GaussianDip((-0.4, 0.1), 0.7, 0.15, 0.08),
}


@pytest.mark.parametrize("name", sorted(PHASES))
def test_closed_form_derivatives(name, rng):
    phase = PHASES[name]
    x = rng.uniform(-0.8, -0.1, size=(12, 2))
    grad, hess = numeric_derivatives(phase, x)
    value, exact_grad, exact_hess = phase.evaluate(x)
    assert value.shape == (12,)
    assert np.allclose(exact_grad, grad, atol=1e-7)
    assert np.allclose(exact_hess, hess, atol=1e-5)
    assert np.allclose(exact_hess, np.transpose(exact_hess, (0, 2, 1)))


def test_quadratic_symmetrizes_its_matrix():
    phase = QuadraticPhase(np.array([[0.0, 2.0], [0.0, 0.0]]), (0.0, 0.0))
    assert np.allclose(phase.hessian(np.zeros((1, 2)))[0], [[0.0, 1.0], [1.0, 0.0]])


def test_septic_step_is_c3():
    u = np.array([0.0, 0.5, 1.0])
    value, first, second = septic_step(u)
    assert value.tolist() == [0.0, 0.5, 1.0]
    assert first[0] == first[2] == 0.0
    assert second[0] == second[2] == 0.0
    assert first[1] == pytest.approx(140.0 / 64)
    # clipped outside [0, 1]
    assert septic_step(np.array([-1.0, 2.0]))[0].tolist() == [0.0, 1.0]


def test_tube_bump_derivatives(rng):
    tube = sample_tube()
    corners = tube.support_corners()
    x = tube.center + rng.uniform(-0.2, 0.2, size=(20, 2))
    value, grad, hess = tube.bump(x)
    assert np.all((value >= 0) & (value <= 1))
    assert tube.bump(tube.center[None, :])[0][0] == 1.0
    assert np.all(tube.bump(corners * 1.0001 + tube.center * -0.0001)[0] == 0.0)

    for j in range(2):
        e = np.zeros(2)
        e[j] = STEP
        numeric = (tube.bump(x + e)[0] - tube.bump(x - e)[0]) / (2 * STEP)
        assert np.allclose(grad[:, j], numeric, atol=1e-5)
        numeric_h = (tube.bump(x + e)[1] - tube.bump(x - e)[1]) / (2 * STEP)
        assert np.allclose(hess[:, :, j], numeric_h, rtol=1e-5, atol=1e-3)


def test_flow_translates_the_core_exactly():
    tube = sample_tube()
    start = tube.center - tube.velocity
    y, J, H = FlowMap([tube], steps=16)(start[None, :])
    assert np.allclose(y[0], tube.center, atol=1e-12)
    assert np.allclose(J[0], np.eye(2), atol=1e-12)
    assert np.allclose(H[0], 0.0, atol=1e-10)


def test_flow_is_identity_outside_the_tubes():
    tube = sample_tube()
    far = np.array([[0.9, 0.0], [-0.9, 0.1]])
    y, J, H = FlowMap([tube])(far)
    assert np.array_equal(y, far)
    assert np.array_equal(J, np.tile(np.eye(2), (2, 1, 1)))
    assert not H.any()


def test_flow_jacobian_matches_differences(rng):
    flow = FlowMap([sample_tube()], steps=32)
    x = sample_tube().center + rng.uniform(-0.15, 0.15, size=(10, 2))
    _, J, _ = flow(x)
    for j in range(2):
        e = np.zeros(2)
        e[j] = STEP
        numeric = (flow(x + e)[0] - flow(x - e)[0]) / (2 * STEP)
        assert np.allclose(J[:, :, j], numeric, atol=1e-6)


def test_composed_phase_derivatives(rng):
    base = RadialDistance((0.6, 0.3)) + GaussianDip((0.1, -0.1), 0.3, 0.2, 0.1)
    phase = FlowComposedPhase(base, FlowMap([sample_tube()], steps=32))
    x = sample_tube().center + rng.uniform(-0.15, 0.15, size=(10, 2))
    grad, hess = numeric_derivatives(phase, x)
    assert np.allclose(phase.gradient(x), grad, atol=1e-6)
    assert np.allclose(phase.hessian(x), hess, atol=1e-4)
