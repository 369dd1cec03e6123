import math

import numpy as np
import pytest

from lab_errors import GeneratorInvariantError, LayoutError
from plate_generator import (
    StateVector,
    apply_generator,
    assemble_generator,
    energy,
    verify_dissipativity,
)
from plate_model import make_model
from transmission_grid import build_grid


def random_state(rng, n):
    return StateVector(rng.standard_normal(n), rng.standard_normal(n))


def test_dissipation_identity_on_random_states(damped_generator, rng):
    gen = damped_generator
    for _ in range(10):
        state = random_state(rng, gen.n)
        lhs = gen.inner(apply_generator(gen, state), state).real
        assert abs(lhs + gen.dissipation_rate(state.v)) <= 1e-10 * gen.energy_norm_sq(state)
        assert lhs <= 1e-10 * gen.energy_norm_sq(state)


def test_undamped_generator_is_skew(undamped_generator, rng):
    report = verify_dissipativity(undamped_generator, rng)
    assert report["identity_residual"] <= 1e-12
    assert report["skew_residual"] <= 1e-12


def test_transmission_coefficients_keep_identity(rng):
    model = make_model({"c1": 1.0, "c2": 2.0, "damping": {"a_max": 3.0, "shape": "plateau-bump"}})
    gen = assemble_generator(model, build_grid(model, 100), seed=3)
    report = verify_dissipativity(gen, rng)
    assert report["identity_residual"] <= 1e-10


def test_failing_identity_is_reported(damped_generator, rng):
    with pytest.raises(GeneratorInvariantError) as info:
        verify_dissipativity(damped_generator, rng, rtol=0.0)
    assert "identity_residual" in info.value.details


def test_sine_mode_energy(undamped_model):
    grid = build_grid(undamped_model, 100)
    gen = assemble_generator(undamped_model, grid)
    u = np.sin(math.pi * grid.nodes)
    u[-1] = 0.0
    state = StateVector.from_nodal(grid, u, np.zeros_like(u))
    assert energy(gen, state) == pytest.approx(math.pi ** 4 / 4, rel=0.01)


def test_energy_is_nonnegative(damped_generator, rng):
    assert energy(damped_generator, StateVector.zeros(damped_generator.n)) == 0.0
    assert energy(damped_generator, random_state(rng, damped_generator.n)) > 0.0


def test_apply_is_linear(damped_generator, rng):
    gen = damped_generator
    first, second = random_state(rng, gen.n), random_state(rng, gen.n)
    combined = apply_generator(gen, first + second).as_vector()
    separate = (apply_generator(gen, first) + apply_generator(gen, second)).as_vector()
    assert np.linalg.norm(combined - separate) <= 1e-12 * np.linalg.norm(combined)


def test_layout_mismatch(damped_generator):
    with pytest.raises(LayoutError):
        apply_generator(damped_generator, StateVector.zeros(damped_generator.n + 1))


def test_nodal_state_needs_hinged_ends(undamped_model):
    grid = build_grid(undamped_model, 20)
    with pytest.raises(LayoutError, match="hinged"):
        StateVector.from_nodal(grid, np.ones(21), np.zeros(21))


def test_energy_coordinates_are_isometric(damped_generator, rng):
    gen = damped_generator
    state = random_state(rng, gen.n)
    y = gen.to_energy_coords(state)
    assert 0.5 * float(y @ y) == pytest.approx(energy(gen, state), rel=1e-12)
    back = gen.from_energy_coords(y)
    assert np.allclose(back.u, state.u, atol=1e-9)
    assert np.allclose(back.v, state.v)


def test_zero_velocity_gives_no_dissipation(damped_generator, rng):
    gen = damped_generator
    state = StateVector(rng.standard_normal(gen.n), np.zeros(gen.n))
    lhs = gen.inner(apply_generator(gen, state), state).real
    assert abs(lhs) <= 1e-12 * gen.energy_norm_sq(state)


def test_velocity_inside_damping_region_dissipates(damped_generator, rng):
    gen = damped_generator
    v = gen.damping_nodal * (1.0 + rng.uniform(size=gen.n))
    state = StateVector(np.zeros(gen.n), v)
    lhs = gen.inner(apply_generator(gen, state), state).real
    assert lhs < 0
    assert lhs == pytest.approx(-gen.dissipation_rate(v), rel=1e-8)


def test_unit_velocity_on_damped_material(damped_generator):
    gen = damped_generator
    grid, model = gen.grid, gen.model
    inside = (grid.nodes >= model.a_if - 1e-12) & (grid.nodes <= model.b_if + 1e-12)
    state = StateVector.from_nodal(grid, np.zeros(grid.n_cells + 1), inside.astype(float))
    assert abs(energy(gen, state) - 0.2) <= grid.spacing


def test_generator_maps_displacement_to_force(damped_generator, rng):
    gen = damped_generator
    u = rng.standard_normal(gen.n)
    image = apply_generator(gen, StateVector(u, np.zeros(gen.n)))
    assert np.all(image.u == 0.0)
    assert np.allclose(image.v, -(gen.B @ u))
