import math

import numpy as np
import pytest

from lab_errors import ModelConfigError
from plate_model import AnnularDomain2D, DampingProfile, eval_damping, make_model


def test_defaults():
    model = make_model({})
    assert (model.L, model.a_if, model.b_if, model.c1, model.c2) == (1.0, 0.3, 0.7, 1.0, 1.0)
    assert model.damping.shape == "smooth-bump"
    assert model.damping.support == pytest.approx((0.4, 0.6))


def test_unknown_key_names_its_path():
    with pytest.raises(ModelConfigError, match=r"model\.damping\.colour: unknown key"):
        make_model({"damping": {"colour": "red"}})
    with pytest.raises(ModelConfigError, match=r"model\.speed: unknown key"):
        make_model({"speed": 3})


@pytest.mark.parametrize("key", ["c1", "c2"])
@pytest.mark.parametrize("value", [0.0, -1.0])
def test_nonpositive_speed_rejected(key, value):
    with pytest.raises(ModelConfigError, match=f"model.{key}"):
        make_model({key: value})


def test_damping_touching_interface_rejected():
    with pytest.raises(ModelConfigError, match="strictly inside"):
        make_model({"damping": {"m": 0.5, "w": 0.2}})


def test_zero_amplitude_needs_shape_none():
    with pytest.raises(ModelConfigError, match="shape 'none'"):
        make_model({"damping": {"a_max": 0.0}})
    model = make_model({"damping": {"a_max": 0.0, "shape": "none"}})
    assert not model.damping.is_damped


def test_bad_interfaces_rejected():
    with pytest.raises(ModelConfigError, match="a_if/b_if"):
        make_model({"a_if": 0.7, "b_if": 0.3})


def test_speed_is_piecewise_constant():
    model = make_model({"c1": 1.0, "c2": 2.0})
    assert list(model.speed(np.array([0.1, 0.5, 0.9]))) == [2.0, 1.0, 2.0]


def test_eval_damping_values():
    model = make_model({})
    assert eval_damping(model, 0.5) == pytest.approx(1.0)
    assert eval_damping(model, 0.35) == 0.0
    assert eval_damping(model, 0.6) == 0.0
    # half-width plateau: a >= a_max/2 for the smooth bump
    assert eval_damping(model, 0.55) == pytest.approx(math.exp(-1.0 / 3.0))


def test_eval_damping_outside_domain():
    with pytest.raises(ModelConfigError, match="outside"):
        eval_damping(make_model({}), 1.5)


def test_plateau_bump_is_flat_in_the_core():
    profile = DampingProfile(shape="plateau-bump", a_max=2.0)
    x = np.linspace(0.45, 0.55, 11)
    assert np.allclose(profile.values(x), 2.0)
    assert profile.values(np.array([0.4, 0.6, 0.65])).tolist() == [0.0, 0.0, 0.0]
    assert np.all(np.diff(profile.values(np.linspace(0.55, 0.6, 20))) <= 0)


def test_undamped_profile_is_zero():
    assert not np.any(DampingProfile(shape="none").values(np.linspace(0, 1, 9)))


def test_annulus_rejects_hole_crossing_outer_circle():
    with pytest.raises(ModelConfigError, match="hole"):
        AnnularDomain2D(outer_radius=1.0, hole_center=(0.85, 0.0), hole_radius=0.2)


def test_annulus_geometry():
    domain = AnnularDomain2D(hole_center=(0.3, 0.0), hole_radius=0.2)
    assert domain.contains(np.array([[-0.5, 0.0]]))[0]
    assert not domain.contains(np.array([[0.3, 0.1]]))[0]
    assert not domain.contains(np.array([[1.1, 0.0]]))[0]

    pts, normals = domain.outer_boundary(16)
    assert np.allclose(np.linalg.norm(pts, axis=1), 1.0)
    assert np.allclose(np.sum(pts * normals, axis=1), 1.0)

    pts, normals = domain.hole_boundary(16)
    assert np.allclose(np.linalg.norm(pts - domain.center, axis=1), 0.2)
    # annulus normals point into the hole
    assert np.allclose(np.sum((pts - domain.center) * normals, axis=1), -0.2)

    grid = domain.sample_grid(41, margin=0.01)
    assert np.all(domain.boundary_distance(grid) > 0.01)
