"""Stability-grid sweeps, boundary bisection, and analytic overlay curves."""

import math

import numpy as np
import pytest

from nddc.core import Classification, ModelKind
from nddc.models import react_two_agent_sufficient, trans_two_agent_stable
from nddc.sweep import (
    CRITICAL_TAU_NO_ANTICIPATION,
    SweepSettings,
    analytic_overlays,
    boundary_bisect,
    grid_sweep,
)


class TestGridSweep:
    def test_zero_delay_row_converges(self):
        settings = SweepSettings(model=ModelKind.TWO_AGENT_REACTION)
        grid = grid_sweep(settings, lam_values=[0.0, 1.0, 2.0], tau_values=[0.0])
        assert np.all(grid.raster == Classification.CONVERGED.value)

    def test_sufficient_condition_cells_converge(self):
        # every reaction cell inside 2 (1 + lam) tau < 1 must classify Converged
        settings = SweepSettings(model=ModelKind.TWO_AGENT_REACTION)
        lam_values = np.linspace(0.0, 3.0, 7)
        tau_values = np.linspace(0.0, 0.45, 10)
        grid = grid_sweep(settings, lam_values, tau_values)
        for i, tau in enumerate(tau_values):
            for j, lam in enumerate(lam_values):
                if react_two_agent_sufficient(lam, tau):
                    assert grid.raster[i, j] == Classification.CONVERGED.value, (lam, tau)

    def test_transmission_grid_matches_exact_criterion(self):
        # Converged iff lam * tau < 1, up to one cell of boundary blur.
        settings = SweepSettings(model=ModelKind.TWO_AGENT_TRANSMISSION,
                                 steps_per_delay=32, t_end=120.0)
        lam_values = np.array([0.5, 1.0, 2.0, 4.0])
        tau_values = np.linspace(0.1, 1.2, 12)
        grid = grid_sweep(settings, lam_values, tau_values)
        blur = tau_values[1] - tau_values[0]
        for i, tau in enumerate(tau_values):
            for j, lam in enumerate(lam_values):
                got = grid.raster[i, j]
                if lam * tau < 1 - blur * lam:
                    assert got == Classification.CONVERGED.value, (lam, tau, got)
                elif lam * tau > 1 + blur * lam:
                    assert got == Classification.DIVERGED.value, (lam, tau, got)

    def test_parallel_matches_serial_bit_for_bit(self):
        settings = SweepSettings(model=ModelKind.TWO_AGENT_REACTION, t_end=60.0)
        lam_values = np.linspace(0.0, 1.0, 4)
        tau_values = np.linspace(0.1, 0.9, 4)
        serial = grid_sweep(settings, lam_values, tau_values, workers=1)
        parallel = grid_sweep(settings, lam_values, tau_values, workers=3)
        assert np.array_equal(serial.raster, parallel.raster)
        assert np.array_equal(serial.final_dx, parallel.final_dx)
        ok = np.isnan(serial.trailing_ratio) & np.isnan(parallel.trailing_ratio)
        ok |= serial.trailing_ratio == parallel.trailing_ratio
        assert np.all(ok)

    def test_boundary_bracketed(self):
        settings = SweepSettings(model=ModelKind.TWO_AGENT_REACTION, t_end=200.0)
        lam_values = np.array([0.0])
        tau_values = np.linspace(0.5, 1.1, 13)
        grid = grid_sweep(settings, lam_values, tau_values)
        boundary = grid.boundary[0]
        assert not math.isnan(boundary)
        below = tau_values[tau_values < boundary]
        above = tau_values[tau_values > boundary]
        i_below = np.searchsorted(tau_values, below[-1])
        i_above = np.searchsorted(tau_values, above[0])
        assert grid.raster[i_below, 0] == Classification.CONVERGED.value
        assert grid.raster[i_above, 0] in (Classification.DIVERGED.value,
                                           Classification.INCONCLUSIVE.value)
        assert any(grid.raster[i, 0] == Classification.DIVERGED.value
                   for i in range(i_above, len(tau_values)))

    def test_rejects_matrix_models(self):
        with pytest.raises(ValueError):
            SweepSettings(model=ModelKind.TRANSMISSION)


class TestBoundaryBisect:
    def test_invalid_bracket_rejected(self):
        settings = SweepSettings(model=ModelKind.TWO_AGENT_REACTION, t_end=100.0)
        with pytest.raises(ValueError):
            boundary_bisect(settings, lam=0.0, tau_low=1.0, tau_high=1.2)
        with pytest.raises(ValueError):
            boundary_bisect(settings, lam=0.0, tau_low=0.5, tau_high=0.3)

    def test_transmission_boundary_monotone(self):
        taus = {}
        for lam in (1.0, 2.0):
            settings = SweepSettings(model=ModelKind.TWO_AGENT_TRANSMISSION,
                                     steps_per_delay=32, t_end=200.0 / lam)
            taus[lam] = boundary_bisect(settings, lam, 0.5 / lam, 1.6 / lam,
                                        iterations=12)
        assert taus[2.0] < taus[1.0]
        assert abs(taus[1.0] * 1.0 - 1.0) < 0.1
        assert abs(taus[2.0] * 2.0 - 1.0) < 0.1


class TestOverlays:
    def test_reaction_curves(self):
        curves = {c.label: c for c in analytic_overlays(ModelKind.TWO_AGENT_REACTION,
                                                        [0.0, 1.0])}
        suff = curves["sufficient-condition"]
        np.testing.assert_allclose(suff.tau, [0.5, 0.25])
        critical = curves["no-anticipation-critical"]
        np.testing.assert_allclose(critical.tau, CRITICAL_TAU_NO_ANTICIPATION)

    def test_transmission_curve(self):
        curves = analytic_overlays(ModelKind.TWO_AGENT_TRANSMISSION, [0.0, 0.5, 2.0])
        assert curves[0].tau[0] == np.inf
        np.testing.assert_allclose(curves[0].tau[1:], [2.0, 0.5])

    def test_theorem_curves_for_matrix_models(self):
        trans = analytic_overlays(ModelKind.TRANSMISSION, [2.0])
        assert trans[0].tau[0] == pytest.approx(0.5)
        react = analytic_overlays(ModelKind.REACTION, [1.0])
        assert react[0].tau[0] == pytest.approx(0.25)

    def test_stability_predicates_agree_with_overlay(self):
        lam = 1.5
        curves = analytic_overlays(ModelKind.TWO_AGENT_TRANSMISSION, [lam])
        tau_boundary = curves[0].tau[0]
        assert trans_two_agent_stable(lam, tau_boundary * 0.99)
        assert not trans_two_agent_stable(lam, tau_boundary * 1.01)
