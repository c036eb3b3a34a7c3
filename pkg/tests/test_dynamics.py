import numpy as np
import pytest

from chdarcy import diagnostics as dg
from chdarcy import dynamics as dyn
from chdarcy import model as md
from chdarcy import spectral as sp

from conftest import make_model, make_params, random_state


def linear_test_potential(kappa):
    """psi'(t) = kappa t: turns the IMEX update into exact backward Euler."""
    return md.Potential(
        kind="linear-test",
        psi=lambda t: 0.5 * kappa * t * t,
        dpsi=lambda t: kappa * t,
        d2psi=lambda t: np.full_like(np.asarray(t, float), kappa),
        R1=0.125, R2=1.0,
    )


class TestProjection:
    def test_constant_data(self, rect_basis):
        alpha, gamma = dyn.project_initial_data(
            lambda x, y: np.full_like(x, 0.5),
            lambda x, y: np.zeros_like(x), rect_basis)
        assert abs(alpha.data[0] - 0.5 * np.sqrt(rect_basis.domain.volume)) < 1e-14
        assert np.max(np.abs(alpha.data[1:])) < 1e-14

    def test_in_span_data_is_exact(self, interval_basis):
        grid = sp.default_grid(interval_basis)
        alpha, _ = dyn.project_initial_data(
            lambda x: np.cos(np.pi * x), lambda x: np.zeros_like(x),
            interval_basis)
        x = grid.nodes[0]
        err = np.max(np.abs(sp.to_grid(alpha, grid).values - np.cos(np.pi * x)))
        assert err < 1e-13

    def test_tanh_front_error_decreases_with_modes(self):
        domain = sp.Domain("interval", (1.0,))
        phi0 = lambda x: np.tanh((x - 0.5) / 0.1)
        errors = []
        for k in (8, 16, 32):
            basis = sp.build_basis(domain, k)
            alpha, _ = dyn.project_initial_data(
                phi0, lambda x: np.zeros_like(x), basis)
            dense = basis.quadrature_grid(oversample=6.0)
            x = dense.nodes[0]
            diff = sp.to_grid(alpha, dense).values - phi0(x)
            errors.append(np.sqrt(dense.integrate(diff ** 2)))
        assert errors[0] > errors[1] > errors[2]

    def test_h1_stability_of_projection(self):
        # |P_k phi0|_{H1} <= |phi0|_{H1}: orthogonal projection in both inner
        # products for this basis
        domain = sp.Domain("interval", (1.0,))
        phi0 = lambda x: np.tanh((x - 0.5) / 0.1)
        big = sp.build_basis(domain, 64)
        ref, _ = dyn.project_initial_data(phi0, lambda x: np.zeros_like(x), big)
        h1_ref = sp.norm(ref, "H1")
        for k in (8, 16, 32):
            basis = sp.build_basis(domain, k)
            alpha, _ = dyn.project_initial_data(
                phi0, lambda x: np.zeros_like(x), basis)
            assert sp.norm(alpha, "H1") <= h1_ref * (1 + 1e-12)

    def test_nonfinite_rejected(self, interval_basis):
        with pytest.raises(ValueError):
            dyn.project_initial_data(
                lambda x: np.full_like(x, np.nan),
                lambda x: np.zeros_like(x), interval_basis)

    def test_basis_mismatch_rejected(self, interval_basis, rect_basis):
        c = sp.constant_field(interval_basis, 1.0)
        with pytest.raises(sp.BasisMismatchError):
            dyn.project_initial_data(c, c, rect_basis)


class TestRhs:
    def test_double_well_equilibrium(self, interval_basis):
        model = make_model(make_params(b=0.1), sources="zero", sigma_inf=0.0)
        config = dyn.StepperConfig(dt=1e-3)
        state = dyn.SimState(0.0, sp.constant_field(interval_basis, 1.0),
                             sp.constant_field(interval_basis, 0.0))
        da, dgm = dyn.rhs(state, model, config)
        assert np.max(np.abs(da)) < 1e-13
        assert np.max(np.abs(dgm)) < 1e-13

    def test_constant_mode_conserved_without_sources(self, rect_basis):
        model = make_model(make_params(b=0.0), sources="zero")
        config = dyn.StepperConfig(dt=1e-3)
        state = random_state(rect_basis, 17)
        da, dgm = dyn.rhs(state, model, config)
        assert abs(da[0]) < 1e-13
        assert abs(dgm[0]) < 1e-13

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_dense_oracle_1d(self, seed):
        basis = sp.build_basis(sp.Domain("interval", (1.0,)), 8)
        model = make_model()
        config = dyn.StepperConfig(dt=1e-3)
        state = random_state(basis, seed, scale=0.3)
        da, dgm = dyn.rhs(state, model, config)
        da2, dg2 = dyn.dense_rhs(state, model, config)
        scale = max(1.0, np.max(np.abs(da2)), np.max(np.abs(dg2)))
        assert np.max(np.abs(da - da2)) / scale < 1e-8
        assert np.max(np.abs(dgm - dg2)) / scale < 1e-8

    def test_darcy_weak_divergence_matches_volume_source(self, rect_basis):
        # weak divergence of the Darcy velocity reproduces Gamma_v / nothing
        model = make_model()
        config = dyn.StepperConfig(dt=1e-3)
        state = random_state(rect_basis, 23)
        der = dyn.derive(state, model, config)
        div_v = sp.divergence_to_coeffs(der.v)
        assert np.max(np.abs(div_v.data)) < 1e-11

        data = np.zeros(rect_basis.n_modes)
        data[rect_basis.modes[1]] = 0.7  # mode (1, 0)
        gv = sp.FieldCoeffs(rect_basis, data)
        model_gv = make_model(gamma_v=lambda t: gv)
        state2 = random_state(rect_basis, 24)
        der2 = dyn.derive(state2, model_gv, config)
        div_v2 = sp.divergence_to_coeffs(der2.v)
        assert np.max(np.abs(div_v2.data - gv.data)) < 1e-11

    def test_no_flow_skips_darcy(self, interval_basis):
        model = make_model(make_params(K=0.0))
        config = dyn.StepperConfig(dt=1e-3, no_flow=True)
        state = random_state(interval_basis, 3)
        der = dyn.derive(state, model, config)
        assert all(np.all(vi.values == 0.0) for vi in der.v)

    def test_k_zero_with_darcy_active_is_an_error(self, interval_basis):
        model = make_model(make_params(K=0.0))
        config = dyn.StepperConfig(dt=1e-3)
        state = random_state(interval_basis, 3)
        with pytest.raises(ValueError):
            dyn.derive(state, model, config)

    def test_no_chemotaxis_equals_chi_zero_model(self, interval_basis):
        model = make_model(make_params(chi=0.3))
        chi0 = model.with_params(model.params.with_(chi=0.0))
        state = random_state(interval_basis, 8)
        cfg_limit = dyn.StepperConfig(dt=1e-3, no_chemotaxis=True)
        cfg_plain = dyn.StepperConfig(dt=1e-3)
        da1, dg1 = dyn.rhs(state, model, cfg_limit)
        da2, dg2 = dyn.rhs(state.copy(), chi0, cfg_plain)
        assert np.max(np.abs(da1 - da2)) < 1e-14
        assert np.max(np.abs(dg1 - dg2)) < 1e-14


class TestDenseOperators:
    def test_constant_mobility_stiffness_is_diagonal(self, interval_basis):
        model = make_model(m=0.7)
        config = dyn.StepperConfig(dt=1e-3)
        state = random_state(interval_basis, 4)
        ops = dyn.dense_galerkin_operators(state, model, config)
        assert np.max(np.abs(ops.S_m - 0.7 * np.diag(interval_basis.eigenvalues))) < 1e-10

    def test_stiffness_symmetric_psd(self, rect_basis):
        model = make_model()
        config = dyn.StepperConfig(dt=1e-3)
        state = random_state(rect_basis, 6)
        ops = dyn.dense_galerkin_operators(state, model, config)
        for M in (ops.S_m, ops.S_n, ops.M_bdry):
            assert np.max(np.abs(M - M.T)) < 1e-10
            assert np.min(np.linalg.eigvalsh(M)) > -1e-10

    def test_psi_vector_vanishes_at_zero(self, interval_basis):
        model = make_model()
        config = dyn.StepperConfig(dt=1e-3)
        state = dyn.SimState(0.0, sp.constant_field(interval_basis, 0.0),
                             sp.constant_field(interval_basis, 0.0))
        ops = dyn.dense_galerkin_operators(state, model, config)
        assert np.max(np.abs(ops.psi_vec)) < 1e-14

    def test_convection_zero_in_no_flow(self, interval_basis):
        model = make_model()
        config = dyn.StepperConfig(dt=1e-3, no_flow=True)
        state = random_state(interval_basis, 5)
        ops = dyn.dense_galerkin_operators(state, model, config)
        assert np.all(ops.C == 0.0)


class TestImex:
    def test_equilibrium_fixed_point(self, interval_basis):
        model = make_model(make_params(b=0.0), sources="zero")
        config = dyn.StepperConfig(dt=1e-2)
        state = dyn.SimState(0.0, sp.constant_field(interval_basis, 1.0),
                             sp.constant_field(interval_basis, 0.0))
        new = dyn.step_imex(state, config, model)
        assert np.max(np.abs(new.alpha.data - state.alpha.data)) < 1e-14
        assert np.max(np.abs(new.gamma.data - state.gamma.data)) < 1e-14

    def test_linear_mode_is_backward_euler(self):
        kappa = 2.0
        basis = sp.build_basis(sp.Domain("interval", (1.0,)), 6)
        params = make_params(chi=0.0, b=0.0)
        model = make_model(params, sources="zero",
                           potential=linear_test_potential(kappa))
        config = dyn.StepperConfig(dt=1e-2, kappa=kappa, no_flow=True)
        data = np.zeros(basis.n_modes)
        data[2] = 1.0
        state = dyn.SimState(0.0, sp.FieldCoeffs(basis, data),
                             sp.constant_field(basis, 0.0))
        new = dyn.step_imex(state, config, model)
        lam = basis.eigenvalues[2]
        L = params.B * lam ** 2 + params.A * kappa * lam
        expect = 1.0 / (1.0 + config.dt * L)
        assert abs(new.alpha.data[2] - expect) < 1e-13

    def test_first_order_richardson(self, interval_basis):
        model = make_model()
        state = random_state(interval_basis, 12, scale=0.3)
        T = 0.02

        def final(dt):
            traj = dyn.run(state.copy(), dyn.StepperConfig(dt=dt), model, T)
            return traj.states[-1]

        ref = final(1.25e-4)
        e1 = np.max(np.abs(final(1e-3).alpha.data - ref.alpha.data))
        e2 = np.max(np.abs(final(5e-4).alpha.data - ref.alpha.data))
        assert 1.5 < e1 / e2 < 2.7

    def test_energy_guard_halves_and_eventually_fails(self, interval_basis):
        model = make_model(make_params(b=0.0), sources="zero")
        state = random_state(interval_basis, 30, scale=0.5)
        config = dyn.StepperConfig(dt=5.0, energy_guard=True, tol_E=0.0,
                                   max_halvings=0)
        with pytest.raises(dyn.StepFailureError):
            dyn.step_imex(state, config, model)

    def test_energy_guard_accepts_decaying_step(self, interval_basis):
        model = make_model(make_params(b=0.0), sources="zero")
        state = random_state(interval_basis, 30, scale=0.2)
        config = dyn.StepperConfig(dt=1e-3, energy_guard=True, tol_E=0.0,
                                   max_halvings=6)
        e0 = dg.energy(state, model, config).total
        new = dyn.step_imex(state, config, model)
        assert dg.energy(new, model, config).total <= e0 + 1e-12


class TestRk4:
    def test_linear_mode_matches_exponential(self):
        kappa = 2.0
        basis = sp.build_basis(sp.Domain("interval", (1.0,)), 6)
        params = make_params(chi=0.0, b=0.0)
        model = make_model(params, sources="zero",
                           potential=linear_test_potential(kappa))
        dt = 1e-3
        config = dyn.StepperConfig(dt=dt, scheme="rk4-explicit", no_flow=True)
        data = np.zeros(basis.n_modes)
        data[1] = 1.0
        state = dyn.SimState(0.0, sp.FieldCoeffs(basis, data),
                             sp.constant_field(basis, 0.0))
        new = dyn.step_rk4_explicit(state, config, model)
        lam = basis.eigenvalues[1]
        L = params.B * lam ** 2 + params.A * kappa * lam
        assert abs(new.alpha.data[1] - np.exp(-L * dt)) < (L * dt) ** 5

    def test_blowup_detected(self, interval_basis):
        model = make_model()
        state = random_state(interval_basis, 1, scale=1.0)
        config = dyn.StepperConfig(dt=50.0, scheme="rk4-explicit")
        with pytest.raises(dyn.BlowUpError), np.errstate(all="ignore"):
            for _ in range(40):
                state = dyn.step_rk4_explicit(state, config, model)

    def test_consistent_with_imex_at_small_dt(self, rect_basis):
        model = make_model()
        state = random_state(rect_basis, 7)
        dt = 1e-6
        s1 = dyn.step_imex(state, dyn.StepperConfig(dt=dt), model)
        s2 = dyn.step_rk4_explicit(
            state.copy(), dyn.StepperConfig(dt=dt, scheme="rk4-explicit"), model)
        assert np.max(np.abs(s1.alpha.data - s2.alpha.data)) < 1e-5 * dt ** 0.0 * 1e-1


class TestRun:
    def test_t_zero_returns_initial_only(self, interval_basis):
        model = make_model()
        state = random_state(interval_basis, 2)
        traj = dyn.run(state, dyn.StepperConfig(dt=1e-3), model, 0.0)
        assert len(traj) == 1 and traj.states[0] is state

    def test_cadence_and_final_snapshot(self, interval_basis):
        model = make_model()
        state = random_state(interval_basis, 2)
        seen = []
        traj = dyn.run(state, dyn.StepperConfig(dt=1e-3), model, 0.01,
                       observer=lambda i, t, s: seen.append(i), cadence=3)
        assert seen == [0, 3, 6, 9, 10]
        assert len(traj) == len(seen)

    def test_determinism(self, interval_basis):
        model = make_model()
        state = random_state(interval_basis, 2)
        t1 = dyn.run(state.copy(), dyn.StepperConfig(dt=1e-3), model, 0.01)
        t2 = dyn.run(state.copy(), dyn.StepperConfig(dt=1e-3), model, 0.01)
        assert np.array_equal(t1.states[-1].alpha.data, t2.states[-1].alpha.data)
        assert np.array_equal(t1.states[-1].gamma.data, t2.states[-1].gamma.data)

    def test_mass_laws_per_step(self, rect_basis):
        model = make_model()
        config = dyn.StepperConfig(dt=1e-3)
        state = random_state(rect_basis, 19)
        traj = dyn.run(state, config, model, 0.01)
        mb = dg.mass_balance_residuals(traj, model, config)
        norm = 1.0 + state.norm()
        assert np.max(np.abs(mb.phi_residuals)) < 1e-12 * norm
        assert np.max(np.abs(mb.sigma_residuals)) < 1e-12 * norm
