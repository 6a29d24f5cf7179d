"""Integrator tests: meshes, histories, steppers, full runs, refinement."""

import numpy as np
import pytest

from nddc.core import (
    Classification,
    ConstantDatum,
    DerivativeMode,
    LinearDatum,
    MeshAlignmentError,
    ModelKind,
    NonFiniteStateError,
    SampledDatum,
    SimConfig,
)
from nddc.integrator import (
    Mesh,
    aligned_t_end,
    init_history,
    refine_oracle,
    run,
    step_reaction,
    step_transmission,
)
from nddc.weights import make_random_row_stochastic, make_random_symmetric_bistochastic, make_uniform

# Step-halving cascade limit for the transmission gap at t = 1 (tau = 0.25,
# lambda = 0, constant datum 1), frozen once the levels agreed to 1e-6.
GAP_AT_T1_REFERENCE = 0.053967995447


def _gap_config(model=ModelKind.TWO_AGENT_TRANSMISSION, tau=0.25, lam=0.0,
                m=32, t_end=5.0, value=1.0, mode=DerivativeMode.BACKWARD_DIFFERENCE):
    return SimConfig(model=model, tau=tau, lam=lam, datum=ConstantDatum([[value]]),
                     n=1, d=1, steps_per_delay=m, t_end=t_end, derivative_mode=mode)


class TestMesh:
    def test_exact_multiples(self):
        mesh = Mesh.build(tau=0.25, steps_per_delay=64, t_end=25.0)
        assert mesh.total_steps == 6400
        assert mesh.step_size == pytest.approx(0.25 / 64)

    def test_misaligned_horizon_rejected(self):
        with pytest.raises(MeshAlignmentError):
            Mesh.build(tau=0.3, steps_per_delay=32, t_end=50.0)

    def test_zero_delay_steps_per_unit_time(self):
        mesh = Mesh.build(tau=0.0, steps_per_delay=32, t_end=50.0)
        assert mesh.step_size == pytest.approx(1.0 / 32)
        assert mesh.total_steps == 1600

    def test_aligned_t_end_is_mesh_multiple(self):
        for tau in (0.3, 0.85, 0.123):
            t_end = aligned_t_end(tau, 32, 100.0)
            assert t_end >= 100.0 - 1e-9
            Mesh.build(tau, 32, t_end)  # must not raise


class TestInitHistory:
    def test_constant_datum(self):
        mesh = Mesh.build(tau=0.4, steps_per_delay=4, t_end=4.0)
        buf = init_history(ConstantDatum([[1.0], [1.0]]), mesh, n=2, d=1)
        for k in range(-4, 1):
            assert np.all(buf.state(k) == 1.0)
            assert np.all(buf.deriv(k) == 0.0)

    def test_linear_datum(self):
        mesh = Mesh.build(tau=0.5, steps_per_delay=2, t_end=2.0)
        buf = init_history(LinearDatum(start=[[0.0]], slope=[[1.0]]), mesh, n=1, d=1)
        np.testing.assert_allclose(
            [buf.state(k)[0, 0] for k in (-2, -1, 0)], [-0.5, -0.25, 0.0]
        )
        assert all(buf.deriv(k)[0, 0] == 1.0 for k in (-2, -1, 0))

    def test_misaligned_table_rejected(self):
        mesh = Mesh.build(tau=0.4, steps_per_delay=2, t_end=2.0)
        table = SampledDatum(times=np.array([-0.4, -0.15, 0.0]),
                             states=np.zeros((3, 1, 1)), derivs=np.zeros((3, 1, 1)))
        with pytest.raises(MeshAlignmentError):
            init_history(table, mesh, n=1, d=1)


class TestSteppers:
    def test_transmission_consensus_is_exact_fixed_point(self):
        mesh = Mesh.build(tau=0.3, steps_per_delay=8, t_end=3.0)
        wm = make_random_row_stochastic(5, 0.1, seed=4)
        buf = init_history(ConstantDatum(np.full((5, 3), 0.7)), mesh, n=5, d=3)
        for _ in range(60):
            new = step_transmission(buf, wm, lam=1.9)
            assert np.all(new == 0.7)

    def test_reaction_consensus_is_exact_fixed_point(self):
        mesh = Mesh.build(tau=0.3, steps_per_delay=8, t_end=3.0)
        wm = make_random_symmetric_bistochastic(4, seed=2)
        buf = init_history(ConstantDatum(np.full((4, 2), -1.3)), mesh, n=4, d=2)
        for _ in range(60):
            new = step_reaction(buf, wm, lam=0.4)
            assert np.all(new == -1.3)

    @pytest.mark.filterwarnings("ignore:overflow:RuntimeWarning")
    def test_overflowing_step_raises(self):
        mesh = Mesh.build(tau=0.04, steps_per_delay=4, t_end=1.0)
        table = SampledDatum(times=mesh.datum_times,
                             states=np.zeros((5, 2, 1)),
                             derivs=np.full((5, 2, 1), 1.7e308))
        buf = init_history(table, mesh, n=2, d=1)
        with pytest.raises(NonFiniteStateError):
            step_transmission(buf, make_uniform(2), lam=1e3)

    def test_transmission_requires_row_stochastic(self):
        mesh = Mesh.build(tau=0.3, steps_per_delay=4, t_end=3.0)
        wm = make_random_symmetric_bistochastic(4, seed=0)  # full rows sum to 1, off-diag < 1
        buf = init_history(ConstantDatum(np.zeros((4, 1))), mesh, n=4, d=1)
        with pytest.raises(ValueError):
            step_transmission(buf, wm, lam=0.0)


class TestRun:
    def test_reaction_conserves_mean_exactly(self):
        rng = np.random.default_rng(12)
        wm = make_random_symmetric_bistochastic(6, seed=12)
        cfg = SimConfig(model=ModelKind.REACTION, tau=0.2, lam=0.5,
                        datum=ConstantDatum(rng.uniform(-1, 1, size=(6, 2))),
                        n=6, d=2, steps_per_delay=16, t_end=40.0, weights=wm)
        traj = run(cfg)
        drifts = np.linalg.norm(traj.means - traj.means[0], axis=1)
        assert drifts.max() <= 1e-10
        per_step = np.abs(np.diff(np.linalg.norm(traj.means, axis=1)))
        assert per_step.max() <= 1e-12

    def test_reaction_two_agents_unstable_above_critical_delay(self):
        # 2 * tau = 1.7 exceeds pi/2, so the gap amplitude must keep growing.
        cfg = SimConfig(model=ModelKind.REACTION, tau=0.85, lam=0.0,
                        datum=ConstantDatum([[1.0], [0.0]]), n=2, d=1,
                        steps_per_delay=128,
                        t_end=aligned_t_end(0.85, 128, 60.0),
                        weights=make_uniform(2))
        traj = run(cfg)
        early = traj.diameters[(traj.times > 5) & (traj.times <= 30)].max()
        late = traj.diameters[traj.times > 30].max()
        assert late > early

    def test_translation_equivariance(self):
        rng = np.random.default_rng(3)
        base_values = rng.uniform(-1, 1, size=(4, 2))
        shift = np.array([10.0, -7.0])
        wm = make_random_row_stochastic(4, 0.1, seed=3)
        kwargs = dict(model=ModelKind.TRANSMISSION, tau=0.25, lam=0.8, n=4, d=2,
                      steps_per_delay=16, t_end=10.0, weights=wm)
        plain = run(SimConfig(datum=ConstantDatum(base_values), **kwargs))
        moved = run(SimConfig(datum=ConstantDatum(base_values + shift), **kwargs))
        np.testing.assert_allclose(moved.states, plain.states + shift, atol=1e-10)
        np.testing.assert_allclose(moved.diameters, plain.diameters, atol=1e-10)

    def test_derivative_modes_agree(self):
        # The recorded right-hand side equals the backward difference for this
        # scheme, so the two modes cross-validate each other.
        for model in (ModelKind.TWO_AGENT_TRANSMISSION, ModelKind.TWO_AGENT_REACTION):
            a = run(_gap_config(model=model, tau=0.3, lam=1.2, m=16, t_end=6.0,
                                mode=DerivativeMode.BACKWARD_DIFFERENCE))
            b = run(_gap_config(model=model, tau=0.3, lam=1.2, m=16, t_end=6.0,
                                mode=DerivativeMode.STORED_RHS))
            np.testing.assert_allclose(a.states, b.states, rtol=0, atol=1e-9)

    def test_divergence_guard_aborts(self):
        traj = run(_gap_config(tau=0.25, lam=8.0, m=32, t_end=200.0))
        assert traj.classification is Classification.DIVERGED
        assert traj.evidence.aborted
        assert traj.times[-1] < 200.0

    def test_consensus_datum_converges_every_model(self):
        wm = make_uniform(3)
        for model in ModelKind:
            if model.is_scalar:
                cfg = _gap_config(model=model, value=0.0, t_end=2.0, m=8, tau=0.25)
            else:
                cfg = SimConfig(model=model, tau=0.25, lam=1.0,
                                datum=ConstantDatum(np.full((3, 1), 2.0)),
                                n=3, d=1, steps_per_delay=8, t_end=2.0, weights=wm)
            traj = run(cfg)
            assert traj.classification is Classification.CONVERGED
            assert np.all(traj.diameters == 0.0)

    def test_zero_delay_runs_decay(self):
        wm = make_uniform(3)
        datum = ConstantDatum(np.array([[0.0], [1.0], [2.0]]))
        for model in (ModelKind.TRANSMISSION, ModelKind.REACTION):
            cfg = SimConfig(model=model, tau=0.0, lam=3.0, datum=datum,
                            n=3, d=1, steps_per_delay=32, t_end=50.0, weights=wm)
            traj = run(cfg)
            assert traj.classification is Classification.CONVERGED
        for model in (ModelKind.TWO_AGENT_TRANSMISSION, ModelKind.TWO_AGENT_REACTION):
            traj = run(_gap_config(model=model, tau=0.0, lam=3.0, m=32, t_end=50.0))
            assert traj.classification is Classification.CONVERGED

    def test_non_finite_datum_rejected(self):
        cfg = _gap_config()
        cfg.datum = ConstantDatum([[np.nan]])
        with pytest.raises(NonFiniteStateError):
            run(cfg)

    def test_recorded_diameters_match_brute_force(self):
        rng = np.random.default_rng(9)
        wm = make_random_row_stochastic(5, 0.1, seed=9)
        cfg = SimConfig(model=ModelKind.TRANSMISSION, tau=0.25, lam=0.5,
                        datum=ConstantDatum(rng.uniform(-1, 1, size=(5, 2))),
                        n=5, d=2, steps_per_delay=8, t_end=5.0, weights=wm)
        traj = run(cfg)
        for k in range(0, len(traj.times), 17):
            values = traj.states[k]
            best = max(
                float(np.linalg.norm(values[i] - values[j]))
                for i in range(5) for j in range(i + 1, 5)
            )
            assert traj.diameters[k] == pytest.approx(best, rel=1e-14, abs=1e-300)


class TestFrozenOracle:
    def test_gap_value_at_t1(self):
        # First-order error at m = 2048 is about 4.2e-5 against the cascade
        # limit; the tolerance carries a 2x margin.
        traj = run(_gap_config(m=2048, t_end=1.0))
        assert abs(traj.states[-1, 0, 0] - GAP_AT_T1_REFERENCE) <= 8.5e-5

    def test_monotone_decay_no_sign_change(self):
        traj = run(_gap_config(m=64, t_end=5.0))
        x = traj.states[:, 0, 0]
        assert np.all(x > 0.0)
        assert np.all(np.diff(x) < 0.0)


class TestRefineOracle:
    def test_first_order_ratios(self):
        result = refine_oracle(_gap_config(tau=0.25, lam=1.0, m=32, t_end=5.0), levels=4)
        assert all(1.7 <= r <= 2.3 for r in result.ratios)

    def test_consensus_datum_gives_zero_differences(self):
        result = refine_oracle(_gap_config(value=0.0, m=8, t_end=2.0), levels=3)
        assert all(d == 0.0 for d in result.end_state_diffs)

    def test_rejects_divergent_config(self):
        with pytest.raises(ValueError):
            refine_oracle(_gap_config(tau=0.25, lam=8.0, m=32, t_end=200.0), levels=2)

    def test_rejects_single_level(self):
        with pytest.raises(ValueError):
            refine_oracle(_gap_config(), levels=1)
