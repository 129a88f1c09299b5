"""
Tests for the age steppers: accuracy, positivity, guards and the
decoupled limits of the coupled evolution
"""
import numpy as np
import pytest
from hypothesis import given, settings as hyp_settings, strategies as st

from apps.common.exceptions import (
    CoefficientFloorError,
    PositivityGuardError,
    ShapeMismatchError,
    StepperDivergenceError,
)
from apps.evolve.steppers import (
    StepperConfig,
    coupled_step,
    evolve_conservative,
    evolve_coupled,
    evolve_duhamel,
    evolve_linear,
    evolve_semitrivial,
    evolve_semitrivial_flipped,
    semitrivial_step,
)

from .conftest import make_disc
from .factories import DecoupledParamsFactory, ModelParamsFactory


def _sine(disc):
    return np.sin(np.pi * disc.space.nodes)


def _age_error(n_a, n_x=8):
    disc = make_disc(n_x=n_x, n_a=n_a)
    lam = disc.laplacian.closed_form_eigenvalue()
    z = evolve_linear(disc, 0.0, _sine(disc))
    exact = np.exp(-lam * disc.ages.nodes)[:, None] * _sine(disc)[None, :]
    return np.abs(z - exact).max()


def _space_error(n_x, n_a=16):
    disc = make_disc(n_x=n_x, n_a=n_a)
    z = evolve_linear(disc, 0.0, _sine(disc))
    levels = (1.0 + disc.da * np.pi ** 2) ** -np.arange(n_a + 1)
    exact = levels[:, None] * _sine(disc)[None, :]
    return np.abs(z - exact).max()


class TestLinearEvolution:

    @pytest.mark.slow
    def test_first_order_in_age(self):
        errors = [_age_error(n_a) for n_a in (128, 256, 512)]
        orders = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
        assert np.all(orders >= 0.9)

    def test_second_order_in_space(self):
        errors = [_space_error(n_x) for n_x in (7, 15, 31)]
        orders = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
        assert np.all(orders >= 1.9)

    def test_batch_matches_columns(self, disc):
        rng = np.random.default_rng(3)
        phi = rng.random((disc.n_x, 4))
        h = rng.random((disc.n_a + 1, disc.n_x))
        batched = evolve_linear(disc, h, phi)
        for j in range(4):
            np.testing.assert_allclose(batched[:, :, j], evolve_linear(disc, h, phi[:, j]), atol=1e-12)

    def test_restarting_midway_reproduces_the_full_run(self):
        full_disc = make_disc(n_x=16, n_a=32, a_m=1.0)
        head_disc = make_disc(n_x=16, n_a=12, a_m=12 / 32)
        tail_disc = make_disc(n_x=16, n_a=20, a_m=20 / 32)
        rng = np.random.default_rng(17)
        h = rng.random((full_disc.n_a + 1, full_disc.n_x))
        phi = rng.random(full_disc.n_x)
        full = evolve_linear(full_disc, h, phi)
        head = evolve_linear(head_disc, h[:13], phi)
        tail = evolve_linear(tail_disc, h[12:], head[-1])
        np.testing.assert_allclose(head, full[:13], atol=1e-15)
        np.testing.assert_allclose(tail, full[12:], atol=1e-14)

    def test_own_coefficient_reproduces_the_logistic_field(self, disc):
        phi = np.linspace(0.5, 2.0, disc.n_x)
        z = evolve_semitrivial(disc, phi, 1.3)
        np.testing.assert_allclose(evolve_linear(disc, 1.3 * z, phi), z, atol=1e-10)

    def test_vanishing_logistic_coefficient_is_linear(self, disc):
        phi = np.linspace(0.5, 2.0, disc.n_x)
        np.testing.assert_allclose(evolve_semitrivial(disc, phi, 1e-12), evolve_linear(disc, 0.0, phi),
                                   atol=1e-8)

    def test_guard_names_required_resolution(self, disc):
        with pytest.raises(PositivityGuardError) as info:
            evolve_linear(disc, -40.0, np.ones(disc.n_x))
        assert info.value.diagnostics['n_a_required'] > disc.n_a
        assert 'n_a >=' in info.value.message

    def test_shape_mismatch(self, disc):
        with pytest.raises(ShapeMismatchError):
            evolve_linear(disc, 0.0, np.ones(disc.n_x + 1))
        with pytest.raises(ShapeMismatchError):
            evolve_linear(disc, np.ones(disc.n_x + 2), np.ones(disc.n_x))

    @hyp_settings(max_examples=25, deadline=None, derandomize=True)
    @given(seed=st.integers(min_value=0, max_value=2 ** 32 - 1),
           shift=st.floats(min_value=-20.0, max_value=20.0))
    def test_nonnegative_traces_stay_nonnegative(self, seed, shift):
        disc = make_disc(n_x=10, n_a=32)
        rng = np.random.default_rng(seed)
        h = shift + rng.standard_normal((disc.n_a + 1, disc.n_x))
        phi = rng.random(disc.n_x)
        z = evolve_linear(disc, h, phi)
        assert np.all(z >= 0.0)

    def test_larger_coefficient_gives_smaller_field(self, disc):
        phi = np.ones(disc.n_x)
        low = evolve_linear(disc, 0.5, phi)
        high = evolve_linear(disc, 2.0, phi)
        assert np.all(high[1:] < low[1:])


class TestConservativeAndForced:

    def test_unit_diffusion_reduces_to_linear(self, disc):
        rng = np.random.default_rng(5)
        c = rng.random((disc.n_a + 1, disc.n_x))
        phi = rng.random(disc.n_x)
        np.testing.assert_allclose(evolve_conservative(disc, 1.0, c, phi), evolve_linear(disc, c, phi),
                                   atol=1e-14)

    def test_doubled_diffusion_decays_the_principal_mode(self, disc):
        lam, e1 = disc.principal
        z = evolve_conservative(disc, 2.0, 0.0, e1)
        levels = (1.0 + 2.0 * disc.da * lam) ** -np.arange(disc.n_a + 1)
        np.testing.assert_allclose(z, levels[:, None] * e1[None, :], atol=1e-10)

    def test_constant_principal_forcing_relaxes_to_its_mode(self):
        disc = make_disc(n_x=16, n_a=64, a_m=8.0)
        lam, e1 = disc.principal
        f = np.tile(lam * e1, (disc.n_a + 1, 1))
        z = evolve_duhamel(disc, 0.0, f)
        levels = 1.0 - (1.0 + disc.da * lam) ** -np.arange(disc.n_a + 1)
        np.testing.assert_allclose(z, levels[:, None] * e1[None, :], atol=1e-10)
        np.testing.assert_allclose(z[-1], e1, atol=1e-10)

    def test_diffusion_floor(self, disc):
        with pytest.raises(CoefficientFloorError):
            evolve_conservative(disc, 0.4, 0.0, np.ones(disc.n_x), floor=0.5)

    def test_conservative_keeps_positivity(self, disc):
        rng = np.random.default_rng(7)
        d = 1.0 + rng.random((disc.n_a + 1, disc.n_x))
        z = evolve_conservative(disc, d, 0.3, rng.random(disc.n_x))
        assert np.all(z >= 0.0)

    def test_duhamel_superposition(self, disc):
        rng = np.random.default_rng(11)
        h = rng.random(disc.n_x)
        f = rng.random((disc.n_a + 1, disc.n_x))
        phi = rng.random(disc.n_x)
        combined = evolve_duhamel(disc, h, f, phi)
        np.testing.assert_allclose(combined, evolve_linear(disc, h, phi) + evolve_duhamel(disc, h, f),
                                   atol=1e-13)

    def test_duhamel_without_forcing_is_linear(self, disc):
        phi = np.linspace(0.1, 1.0, disc.n_x)
        np.testing.assert_allclose(evolve_duhamel(disc, 0.2, disc.zeros(), phi),
                                   evolve_linear(disc, 0.2, phi), atol=1e-15)

    def test_duhamel_forcing_shape(self, disc):
        with pytest.raises(ShapeMismatchError):
            evolve_duhamel(disc, 0.0, np.ones((disc.n_a, disc.n_x)))


class TestNonlinearEvolution:

    def test_semitrivial_satisfies_its_step_equation(self, disc):
        phi = 2.0 * np.ones(disc.n_x)
        z = evolve_semitrivial(disc, phi, 1.5)
        lap = disc.laplacian.matrix
        for k in range(disc.n_a):
            residual = z[k + 1] - disc.da * (lap @ z[k + 1]) + disc.da * 1.5 * z[k + 1] ** 2 - z[k]
            assert np.abs(residual).max() <= 1e-10

    def test_semitrivial_is_nonnegative_and_below_linear(self, disc):
        phi = np.linspace(0.0, 3.0, disc.n_x)
        z = evolve_semitrivial(disc, phi, 1.0)
        assert np.all(z >= 0.0)
        assert np.all(z <= evolve_linear(disc, 0.0, phi) + 1e-12)

    def test_flipped_grows_above_linear(self, disc):
        phi = 0.1 * np.ones(disc.n_x)
        w = evolve_semitrivial_flipped(disc, phi, 1.0)
        assert np.all(w >= evolve_linear(disc, 0.0, phi) - 1e-14)

    def test_alpha_must_be_positive(self, disc):
        with pytest.raises(ValueError):
            evolve_semitrivial(disc, np.ones(disc.n_x), 0.0)

    def test_divergence_reports_step(self, disc):
        with pytest.raises(StepperDivergenceError) as info:
            semitrivial_step(disc, 100.0 * np.ones(disc.n_x), 1.0, StepperConfig(max_iter=1), step=4)
        assert info.value.diagnostics['step'] == 4

    def test_coupled_decouples_without_interaction(self, disc):
        params = DecoupledParamsFactory(alpha1=1.2, beta1=0.8)
        phi_u = np.linspace(0.2, 1.0, disc.n_x)
        phi_v = np.linspace(1.0, 0.3, disc.n_x)
        u, v = evolve_coupled(disc, phi_u, phi_v, params)
        np.testing.assert_allclose(u, evolve_semitrivial(disc, phi_u, 1.2), atol=1e-10)
        np.testing.assert_allclose(v, evolve_semitrivial(disc, phi_v, 0.8), atol=1e-10)

    def test_coupled_with_zero_predator_is_prey_only(self, disc):
        params = ModelParamsFactory()
        phi_u = np.ones(disc.n_x)
        u, v = evolve_coupled(disc, phi_u, np.zeros(disc.n_x), params)
        assert not np.any(v)
        np.testing.assert_allclose(u, evolve_semitrivial(disc, phi_u, params.alpha1), atol=1e-12)

    def test_coupled_batch_matches_columns(self, disc):
        params = ModelParamsFactory()
        rng = np.random.default_rng(13)
        u_prev = rng.random((disc.n_x, 3))
        v_prev = rng.random((disc.n_x, 3))
        u_next, v_next, _ = coupled_step(disc, u_prev, v_prev, params)
        for j in range(3):
            u_j, v_j, _ = coupled_step(disc, u_prev[:, j], v_prev[:, j], params)
            np.testing.assert_allclose(u_next[:, j], u_j, atol=1e-10)
            np.testing.assert_allclose(v_next[:, j], v_j, atol=1e-10)

    def test_coupled_columns_converge_independently(self, disc):
        params = ModelParamsFactory()
        u_prev = np.column_stack([np.linspace(0.2, 1.5, disc.n_x), np.linspace(1.0, 0.4, disc.n_x)])
        v_prev = np.column_stack([np.zeros(disc.n_x), np.linspace(0.3, 0.9, disc.n_x)])
        u_next, v_next, _ = coupled_step(disc, u_prev, v_prev, params)
        for j in range(2):
            u_j, v_j, _ = coupled_step(disc, u_prev[:, j], v_prev[:, j], params)
            np.testing.assert_allclose(u_next[:, j], u_j, rtol=0, atol=1e-12)
            np.testing.assert_allclose(v_next[:, j], v_j, rtol=0, atol=1e-12)
        prey_only, _ = semitrivial_step(disc, u_prev[:, 0], params.alpha1)
        assert not np.any(v_next[:, 0])
        np.testing.assert_allclose(u_next[:, 0], prey_only, rtol=0, atol=1e-12)

    def test_semitrivial_columns_converge_independently(self, disc):
        prev = np.column_stack([1e-3 * np.ones(disc.n_x), 50.0 * np.ones(disc.n_x)])
        batched, _ = semitrivial_step(disc, prev, 1.0)
        for j in range(2):
            alone, _ = semitrivial_step(disc, prev[:, j], 1.0)
            np.testing.assert_allclose(batched[:, j], alone, rtol=0, atol=1e-12 * (1.0 + prev[:, j].max()))

    def test_predation_lowers_prey(self, disc):
        phi = np.ones(disc.n_x)
        u_alone = evolve_semitrivial(disc, phi, 1.0)
        u, _ = evolve_coupled(disc, phi, phi, ModelParamsFactory(gamma=0.0))
        assert np.all(u[1:] <= u_alone[1:] + 1e-12)
