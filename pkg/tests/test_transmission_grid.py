import math

import numpy as np
import pytest
import scipy.io

from lab_errors import GridError
from plate_model import make_model
from transmission_grid import assemble_bilaplacian, assemble_G, build_grid, export_matrix


def test_grid_refines_until_interfaces_are_nodes():
    grid = build_grid(make_model({}), 32)
    assert grid.n_cells == 40
    assert grid.nodes[grid.ia] == pytest.approx(0.3)
    assert grid.nodes[grid.ib] == pytest.approx(0.7)
    assert grid.n_unknowns == 39
    assert len(grid.omega1_nodes) + len(grid.omega2_nodes) + 2 == grid.n_unknowns


def test_too_few_cells():
    with pytest.raises(GridError, match="n_cells"):
        build_grid(make_model({}), 8)


def test_dilated_support_reaching_interface():
    model = make_model({"damping": {"m": 0.5, "w": 0.19}})
    with pytest.raises(GridError, match="reaches an interface"):
        build_grid(model, 20)
    assert build_grid(model, 200).n_cells == 200


def test_nodal_round_trip_pads_boundary():
    grid = build_grid(make_model({}), 20)
    interior = np.arange(1.0, grid.n_unknowns + 1)
    nodal = grid.to_nodal(interior)
    assert nodal[0] == nodal[-1] == 0.0
    assert np.array_equal(grid.to_unknowns(nodal), interior)
    with pytest.raises(GridError):
        grid.to_unknowns(interior)


def test_weighted_self_adjointness():
    model = make_model({"c1": 1.0, "c2": 2.0})
    lap = assemble_G(model, build_grid(model, 100))
    assert lap.self_adjointness_defect() <= 1e-12


def test_lowest_eigenvalue_is_pi_squared():
    model = make_model({"damping": {"shape": "none"}})
    lap = assemble_G(model, build_grid(model, 100))
    assert lap.eigenvalues(1)[0] == pytest.approx(math.pi ** 2, rel=0.01)


@pytest.mark.parametrize("n_cells", [50, 100, 200])
def test_lowest_eigenvalue_bounded_below(n_cells):
    model = make_model({"c1": 1.0, "c2": 2.0})
    lap = assemble_G(model, build_grid(model, n_cells))
    assert lap.eigenvalues(1)[0] >= 1.0 * math.pi ** 2 / 2


def test_second_order_consistency():
    model = make_model({"damping": {"shape": "none"}})
    errors = []
    for n in (50, 100, 200):
        grid = build_grid(model, n)
        lap = assemble_G(model, grid)
        x = grid.interior
        errors.append(np.max(np.abs(lap.G @ np.sin(math.pi * x) - math.pi ** 2 * np.sin(math.pi * x))))
    slopes = [math.log2(errors[i] / errors[i + 1]) for i in range(2)]
    assert min(slopes) >= 1.9


def test_bilaplacian_is_square_of_G():
    model = make_model({"damping": {"shape": "none"}})
    grid = build_grid(model, 50)
    lap = assemble_G(model, grid)
    B = assemble_bilaplacian(model, grid, lap)
    values = np.sort(np.linalg.eigvals(B.toarray()).real)
    assert np.allclose(values[:10], lap.eigenvalues(10) ** 2, rtol=1e-8)


def test_bilaplacian_grid_mismatch():
    model = make_model({})
    lap = assemble_G(model, build_grid(model, 40))
    with pytest.raises(GridError, match="different grid"):
        assemble_bilaplacian(model, build_grid(model, 50), lap)


def test_modes_are_mass_orthonormal():
    model = make_model({"c1": 1.0, "c2": 2.0})
    lap = assemble_G(model, build_grid(model, 100))
    values, vectors = lap.modes(5)
    gram = vectors.T @ (lap.mass[:, None] * vectors)
    assert np.allclose(gram, np.eye(5), atol=1e-10)
    assert np.allclose(lap.G @ vectors, vectors * values, atol=1e-8 * values.max())


def test_export_matrix(tmp_path):
    model = make_model({})
    lap = assemble_G(model, build_grid(model, 20))
    path = export_matrix(lap.K, tmp_path / "nested" / "K.mtx")
    assert path.exists()
    loaded = scipy.io.mmread(str(path))
    assert np.allclose(loaded.toarray(), lap.K.toarray())


@pytest.mark.parametrize("k", [1, 2])
def test_bilaplacian_form_converges_on_sine_modes(k):
    model = make_model({"damping": {"shape": "none"}})
    errors = []
    for n in (50, 100, 200):
        grid = build_grid(model, n)
        lap = assemble_G(model, grid)
        B = assemble_bilaplacian(model, grid, lap)
        u = np.sin(k * math.pi * grid.interior)
        form = float(u @ (lap.mass * (B @ u)))
        errors.append(abs(form - (k * math.pi) ** 4 / 2))
    slopes = [math.log2(errors[i] / errors[i + 1]) for i in range(2)]
    assert min(slopes) >= 1.9
