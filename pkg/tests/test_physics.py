"""Model terms, energies, initial conditions, and error metrics."""

import numpy as np
import pytest

from acpara.errors import ConfigurationError, StructuralError
from acpara.grid import Field, make_grid
from acpara.physics import (
    MASS_BOUND,
    ModelKind,
    PhysicsParams,
    bounds_for,
    discrete_energy,
    f_nonlinear,
    ic_bubbles,
    ic_random,
    ic_star,
    nonlocal_g,
    potential_density,
    rel_l2_error,
    total_mass,
)

from conftest import random_field


def test_model_kind_parse_round_trip():
    assert ModelKind.parse("classic") is ModelKind.CLASSIC
    assert ModelKind.parse("mass") is ModelKind.MASS_CONSERVATIVE
    with pytest.raises(ConfigurationError):
        ModelKind.parse("spectral")


def test_physics_params_bounds():
    assert PhysicsParams(ModelKind.CLASSIC, 0.01).bounds == (-1.0, 1.0)
    mass = PhysicsParams(ModelKind.MASS_CONSERVATIVE, 0.01)
    assert mass.bounds == pytest.approx((-MASS_BOUND, MASS_BOUND))
    with pytest.raises(ConfigurationError):
        PhysicsParams(ModelKind.CLASSIC, -0.5)
    with pytest.raises(ConfigurationError):
        PhysicsParams(ModelKind.CLASSIC, 0.01, bounds=(-2.0, 2.0))


def test_f_nonlinear_values():
    assert f_nonlinear(0.0) == 0.0
    assert f_nonlinear(1.0) == 0.0
    assert f_nonlinear(-1.0) == 0.0
    assert f_nonlinear(0.5) == pytest.approx(0.375)


def test_f_nonlinear_odd_symmetry():
    us = np.linspace(-2.0, 2.0, 41)
    assert np.max(np.abs(f_nonlinear(-us) + f_nonlinear(us))) == 0.0


def test_potential_density_values():
    assert potential_density(1.0) == 0.0
    assert potential_density(-1.0) == 0.0
    assert potential_density(0.0) == pytest.approx(0.25)
    assert potential_density(2.0) == pytest.approx(2.25)


def test_potential_density_nonnegative_wells_only():
    us = np.linspace(-1.5, 1.5, 301)
    vals = potential_density(us)
    assert np.all(vals >= 0.0)
    zero = us[vals == 0.0]
    assert set(np.round(zero, 12)) == {-1.0, 1.0}


class TestNonlocalTerm:
    def test_classic_always_zero(self, grid2d_small, classic):
        u = random_field(grid2d_small, seed=1)
        assert nonlocal_g(u, classic) == 0.0

    def test_constant_field_gives_f_of_c(self, grid2d_small, conservative):
        u = Field(grid2d_small, np.full(grid2d_small.shape, 0.3))
        assert nonlocal_g(u, conservative) == pytest.approx(f_nonlinear(0.3), abs=1e-15)

    def test_matches_explicit_loop(self, conservative):
        grid = make_grid(2, 4, 1.0)
        u = random_field(grid, seed=2)
        explicit = sum(f_nonlinear(v) for v in u.data.ravel()) / 16
        assert abs(nonlocal_g(u, conservative) - explicit) < 1e-14


class TestTotalMass:
    def test_unit_volume(self):
        grid = make_grid(2, 16, 1.0)
        assert total_mass(Field(grid, np.ones(grid.shape))) == pytest.approx(1.0)

    def test_zero_field(self, grid2d_small):
        assert total_mass(Field(grid2d_small, np.zeros(grid2d_small.shape))) == 0.0

    def test_checkerboard_cancels(self):
        grid = make_grid(2, 8, 1.0)
        i = np.arange(8)
        board = np.where((i[:, None] + i[None, :]) % 2 == 0, 1.0, -1.0)
        assert total_mass(Field(grid, board)) == 0.0


class TestDiscreteEnergy:
    def test_well_state_zero(self, grid2d, classic):
        assert discrete_energy(Field(grid2d, np.ones(grid2d.shape)), classic) == 0.0

    def test_zero_state_quarter_volume(self, grid2d, classic):
        e = discrete_energy(Field(grid2d, np.zeros(grid2d.shape)), classic)
        assert e == pytest.approx(0.25)

    def test_matches_refined_quadrature(self):
        # u = sin(2 pi x): compare against a 4096-point periodic-trapezoid
        # quadrature of the continuum energy (exact to machine precision for
        # this smooth integrand).
        grid = make_grid(2, 64, 1.0)
        eps = 0.01
        phys = PhysicsParams(ModelKind.CLASSIC, eps)
        x, _ = grid.coords()
        u = Field(grid, np.broadcast_to(np.sin(2 * np.pi * x), grid.shape).copy())
        fine_x = -0.5 + np.arange(4096) / 4096
        ux = 2 * np.pi * np.cos(2 * np.pi * fine_x)
        dens = 0.5 * eps**2 * ux**2 + potential_density(np.sin(2 * np.pi * fine_x))
        reference = float(np.mean(dens))  # y-direction integrates to factor 1
        assert discrete_energy(u, phys) == pytest.approx(reference, rel=1e-3)

    def test_translation_invariance(self, grid2d, classic):
        u = random_field(grid2d, seed=3)
        shifted = Field(grid2d, np.roll(u.data, (5, 11), axis=(0, 1)))
        assert abs(discrete_energy(u, classic) - discrete_energy(shifted, classic)) < 1e-10


class TestBubblesIC:
    def test_requires_2d(self, grid3d_small):
        with pytest.raises(ConfigurationError):
            ic_bubbles(grid3d_small, 0.01)

    def test_center_of_right_bubble(self):
        grid = make_grid(2, 64, 1.0)
        u = ic_bubbles(grid, 0.01)
        i = round((0.14 + 0.5) / grid.h)
        j = round(0.5 / grid.h)
        assert u.data[j, i] == pytest.approx(np.tanh(20.0), abs=1e-15)

    def test_far_corner_negative(self):
        grid = make_grid(2, 64, 1.0)
        u = ic_bubbles(grid, 0.01)
        assert u.data[0, 0] < 0.0  # corner (-0.5, -0.5) is far outside both bubbles

    def test_mirror_symmetry_in_x(self):
        grid = make_grid(2, 64, 1.0)
        u = ic_bubbles(grid, 0.01)
        idx = (-np.arange(64)) % 64
        assert np.max(np.abs(u.data - u.data[:, idx])) < 1e-14

    def test_values_in_open_interval(self):
        # wide enough interface that tanh does not saturate to exactly +-1
        grid = make_grid(2, 32, 1.0)
        u = ic_bubbles(grid, 0.05)
        assert np.all(u.data > -1.0) and np.all(u.data < 1.0)


class TestRandomIC:
    def test_deterministic(self, grid2d):
        a = ic_random(grid2d, 0.9, seed=123)
        b = ic_random(grid2d, 0.9, seed=123)
        assert np.array_equal(a.data, b.data)

    def test_different_seeds_differ(self, grid2d):
        a = ic_random(grid2d, 0.9, seed=123)
        b = ic_random(grid2d, 0.9, seed=124)
        assert not np.array_equal(a.data, b.data)

    def test_amplitude_bound(self, grid2d):
        u = ic_random(grid2d, 0.9, seed=5)
        assert np.all(np.abs(u.data) <= 0.9)

    def test_sample_mean_near_zero(self):
        grid = make_grid(2, 256, 1.0)
        u = ic_random(grid, 0.9, seed=7)
        # standard error 0.9/sqrt(3*256^2) ~ 0.002; 0.02 is a 10-sigma bound
        assert abs(u.data.mean()) < 0.02

    def test_rejects_nonpositive_amplitude(self, grid2d_small):
        with pytest.raises(ConfigurationError):
            ic_random(grid2d_small, 0.0, seed=1)


class TestStarIC:
    def test_requires_3d(self, grid2d_small):
        with pytest.raises(ConfigurationError):
            ic_star(grid2d_small, 0.02)

    def test_deep_inside_at_origin(self):
        grid = make_grid(3, 16, 1.0)
        u = ic_star(grid, 0.02)
        center = grid.n // 2
        assert u.data[center, center, center] == pytest.approx(1.0, abs=1e-8)

    def test_far_outside_at_corner(self):
        grid = make_grid(3, 16, 1.0)
        u = ic_star(grid, 0.02)
        assert u.data[0, 0, 0] == pytest.approx(-1.0, abs=1e-6)

    def test_values_strictly_inside_tanh_range(self):
        grid = make_grid(3, 12, 1.0)
        u = ic_star(grid, 0.05)
        assert np.all(u.data > -1.0) and np.all(u.data < 1.0)


class TestRelL2Error:
    def test_identical_fields(self, grid2d_small):
        u = random_field(grid2d_small, seed=8)
        assert rel_l2_error(u, u) == 0.0

    def test_scaling(self, grid2d_small):
        ref = random_field(grid2d_small, seed=9)
        u = Field(grid2d_small, 1.01 * ref.data)
        assert rel_l2_error(u, ref) == pytest.approx(0.01, abs=1e-12)

    def test_zero_reference_flags_absolute(self, grid2d_small):
        ref = Field(grid2d_small, np.zeros(grid2d_small.shape))
        u = random_field(grid2d_small, seed=10)
        err, absolute = rel_l2_error(u, ref, return_flag=True)
        assert absolute
        assert err == pytest.approx(np.linalg.norm(u.data.ravel()))

    def test_grid_mismatch(self):
        a = random_field(make_grid(2, 8, 1.0), seed=11)
        b = random_field(make_grid(2, 16, 1.0), seed=12)
        with pytest.raises(StructuralError):
            rel_l2_error(a, b)


def test_bounds_for_both_kinds():
    assert bounds_for(ModelKind.CLASSIC) == (-1.0, 1.0)
    lo, hi = bounds_for(ModelKind.MASS_CONSERVATIVE)
    assert hi == pytest.approx(2.0 * np.sqrt(3.0) / 3.0)
    assert lo == -hi
