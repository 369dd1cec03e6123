import math

import numpy as np
import pytest

from lab_errors import LabValidationError
from plate_generator import assemble_generator
from plate_model import make_model
from spectral_analysis import (
    ResolventSample,
    distance_to_spectrum,
    fit_envelope,
    log_spaced_grid,
    resolvent_norm,
    resolvent_sweep,
    spectral_abscissa,
    spectrum,
)
from transmission_grid import build_grid


def test_undamped_spectrum_matches_closed_form(undamped_generator):
    values = spectrum(undamped_generator)
    upper = np.sort(values[values.imag > 0].imag)
    h = undamped_generator.grid.spacing
    k = np.arange(1, 21)
    closed = (4.0 / h ** 2) * np.sin(k * math.pi * h / 2) ** 2
    assert np.allclose(upper[:20], closed, rtol=1e-8)
    # the squared modulus is the bilaplacian eigenvalue
    assert upper[0] ** 2 == pytest.approx(math.pi ** 4, rel=0.005)
    assert spectral_abscissa(values) <= 1e-10


def test_damped_spectrum_in_left_half_plane(damped_generator):
    values = spectrum(damped_generator)
    assert len(values) == damped_generator.dim
    assert spectral_abscissa(values) <= 1e-10
    assert np.all(np.diff(values.imag) >= 0)


def test_transmission_undamped_spectrum_is_imaginary():
    model = make_model({"c1": 1.0, "c2": 2.0, "damping": {"shape": "none"}})
    gen = assemble_generator(model, build_grid(model, 100))
    assert np.max(np.abs(spectrum(gen).real)) <= 1e-10


def test_spectrum_dimension_limit():
    model = make_model({})
    gen = assemble_generator(model, build_grid(model, 2010))
    with pytest.raises(LabValidationError, match="dense limit"):
        spectrum(gen)


def test_skew_resolvent_is_inverse_distance(undamped_generator, rng):
    values = spectrum(undamped_generator)
    for i, mu in enumerate(rng.uniform(0.0, 300.0, size=10)):
        sample = resolvent_norm(undamped_generator, mu, seed=i)
        assert sample.norm == pytest.approx(1.0 / distance_to_spectrum(values, mu), rel=1e-6)
        assert sample.residual <= 1e-8


def test_resolvent_between_first_modes(undamped_generator):
    lam = undamped_generator.lap.eigenvalues(2)
    mu = 0.5 * (lam[0] + lam[1])
    sample = resolvent_norm(undamped_generator, mu)
    assert sample.norm == pytest.approx(2.0 / (lam[1] - lam[0]), rel=1e-6)


def test_resolvent_at_zero(undamped_generator):
    lam = undamped_generator.lap.eigenvalues(1)[0]
    assert resolvent_norm(undamped_generator, 0.0).norm == pytest.approx(1.0 / lam, rel=1e-6)


def test_damped_resolvent_dominates_inverse_distance(damped_generator):
    values = spectrum(damped_generator)
    for mu in (5.0, 40.0, 250.0):
        sample = resolvent_norm(damped_generator, mu, seed=7)
        assert sample.norm >= (1.0 - 1e-6) / distance_to_spectrum(values, mu)


def test_envelope_lies_above_every_sample():
    samples = [ResolventSample(mu=mu, norm=math.exp(0.5 + 0.01 * mu + 0.1 * math.sin(mu)), iterations=1,
                               residual=0.0) for mu in np.linspace(5, 400, 40)]
    envelope = fit_envelope(samples)
    assert min(slopes) >= 0
    assert envelope.samples_used == 40
    assert all(s.log_norm <= envelope.bound(s.mu) + 1e-12 for s in samples)
    assert envelope.C_b == pytest.approx(0.01, abs=3e-3)


def test_envelope_skips_singular_points():
    finite = ResolventSample(mu=10.0, norm=3.0, iterations=4, residual=1e-12)
    singular = ResolventSample(mu=20.0, norm=math.inf, iterations=0, residual=0.0, method="singular")
    assert singular.is_singular
    envelope = fit_envelope([finite, singular])
    assert envelope.samples_used == 1
    assert envelope.bound(10.0) >= math.log(3.0) - 1e-12
    assert fit_envelope([singular]) is None


def test_sweep_does_not_depend_on_worker_count(damped_generator):
    grid = log_spaced_grid(5.0, 400.0, 6)
    one = resolvent_sweep(damped_generator, grid, seed=11, workers=1)
    three = resolvent_sweep(damped_generator, grid, seed=11, workers=3)
    assert [s.norm for s in one.samples] == [s.norm for s in three.samples]
    frame = one.to_frame()
    assert list(frame.columns) == ["mu", "norm", "log_norm", "iterations", "residual"]
    assert len(frame) == 6


def test_log_spaced_grid():
    grid = log_spaced_grid(5.0, 400.0, 40)
    assert grid[0] == pytest.approx(5.0)
    assert grid[-1] == pytest.approx(400.0)
    assert np.allclose(np.diff(np.log(grid)), np.log(80.0) / 39)
    assert list(log_spaced_grid(7.0, 9.0, 1)) == [7.0]
    with pytest.raises(LabValidationError):
        log_spaced_grid(5.0, 400.0, 0)


def test_resolvent_at_undamped_eigenvalue_is_infinite(undamped_generator):
    mu = float(undamped_generator.lap.eigenvalues(1)[0])
    sample = resolvent_norm(undamped_generator, mu)
    assert sample.is_singular
    assert sample.norm == math.inf
    sweep = resolvent_sweep(undamped_generator, [mu, 20.0], workers=1)
    frame = sweep.to_frame()
    assert math.isinf(frame["norm"].iloc[0])
    assert math.isfinite(frame["norm"].iloc[1])
    assert sweep.envelope.samples_used == 1


def test_envelope_from_the_single_point_zero(damped_generator):
    sweep = resolvent_sweep(damped_generator, [0.0], workers=1)
    assert sweep.envelope.samples_used == 1
    assert sweep.envelope.C_b == 0.0
    assert sweep.envelope.C_a == pytest.approx(math.log(sweep.samples[0].norm), abs=1e-9)


@pytest.mark.slow
def test_damped_envelope_is_stable_under_refinement(damped_model):
    mu_grid = log_spaced_grid(5.0, 400.0, 100)
    slopes = []
    for n_cells in (150, 300):
        gen = assemble_generator(damped_model, build_grid(damped_model, n_cells), seed=1)
        sweep = resolvent_sweep(gen, mu_grid, seed=0, workers=2)
        assert not any(s.is_singular for s in sweep.samples)
        envelope = sweep.envelope
        assert envelope.samples_used == 100
        assert all(s.log_norm <= envelope.bound(s.mu) + 1e-12 for s in sweep.samples)
        slopes.append(envelope.C_b)
    assert min(slopes) >= 0
    assert abs(slopes[0] - slopes[1]) <= 0.2 * max(slopes) + 1e-9
