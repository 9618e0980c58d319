"""Adaptive damped Richardson iteration: guarantees and bookkeeping."""

import numpy as np
import pytest

from framesolve import OperatorSpec, SparseVector, estimate_spectrum, oracle
from framesolve.frame import AggregatedFrame, Patch1D, analyze
from framesolve.solve import SolveConfig, rhs, solve
from framesolve.coeffs import axpy, coarse
from conftest import random_sparse


@pytest.fixture(scope="module")
def poisson_setup(frame_j5, laplace, spectrum_j5):
    f_vec = analyze(frame_j5, lambda x: 2.0 * np.ones_like(x))
    snap = oracle.assemble(frame_j5, laplace, f_vec)
    return frame_j5, laplace, spectrum_j5, f_vec, snap


class TestRhs:
    def test_everything_removable(self):
        rng = np.random.default_rng(30)
        v = random_sparse(rng, 40, 20)
        assert len(rhs(v, v.norm() * (1 + 1e-12))) == 0

    def test_zero_tolerance_returns_target(self):
        rng = np.random.default_rng(31)
        v = random_sparse(rng, 40, 20)
        assert rhs(v, 0.0) == v

    def test_tail_bound(self):
        rng = np.random.default_rng(32)
        for _ in range(20):
            v = random_sparse(rng, 60, 40)
            out = rhs(v, 0.1)
            assert axpy(-1.0, out, v).norm() <= 0.1
            assert out == coarse(0.1, v)


class TestSolveConfig:
    def test_theta_range(self, spectrum_j5):
        with pytest.raises(ValueError, match="theta"):
            SolveConfig(0.4, 9999, spectrum_j5, 1e-3)

    def test_contraction_budget(self, spectrum_j5):
        with pytest.raises(ValueError, match="3 \\* rho"):
            SolveConfig(0.3, 1, spectrum_j5, 1e-3)

    def test_from_spectrum_satisfies_invariant(self, spectrum_j5):
        cfg = SolveConfig.from_spectrum(spectrum_j5, 1e-3)
        assert 3 * spectrum_j5.rho ** cfg.k_inner < cfg.theta


class TestIdentityFixture:
    def test_one_shot_convergence(self):
        # single coarse hat: weight 1/2 against stiffness 4 gives exactly [[1.0]]
        frame = AggregatedFrame([Patch1D(0.0, 1.0)], max_level=1)
        spec = OperatorSpec(diffusion=1.0)
        ws = frame.workspace()
        assert np.abs(ws.matrix(spec) - 1.0).max() < 1e-12
        est = estimate_spectrum(frame, spec)
        assert est.rho <= 1e-12
        f_vec = ws.from_dense(np.array([0.75]))
        cfg = SolveConfig.from_spectrum(est, 1e-10)
        v, hist = solve(frame, spec, f_vec, cfg)
        assert axpy(-1.0, v, f_vec).norm() <= 1e-10
        assert len(hist.rows) == 1


class TestPoissonFixture:
    # frozen on the J=5 two-patch fixture
    NODE_ERROR_OVER_EPS = 0.2          # includes the discretization floor
    H1_KAPPA = 1.0                     # error vs the truncated reference

    def test_node_error(self, poisson_setup):
        frame, spec, est, f_vec, _ = poisson_setup
        eps = 1e-3
        v, _ = solve(frame, spec, f_vec, SolveConfig.from_spectrum(est, eps))
        ws = frame.workspace()
        xs = np.linspace(0.0, 1.0, 101)
        uh = ws.synth_at(ws.to_dense(v), xs)
        assert np.abs(uh - xs * (1 - xs)).max() <= self.NODE_ERROR_OVER_EPS * eps

    def test_h1_error_vs_reference(self, poisson_setup):
        frame, spec, est, f_vec, snap = poisson_setup
        ws = frame.workspace()
        ref = ws.to_dense(oracle.least_squares_solve(snap, f_vec))
        for eps in (1e-2, 1e-3):
            v, _ = solve(frame, spec, f_vec, SolveConfig.from_spectrum(est, eps))
            err = ws.to_dense(v) - ref
            h1 = float(np.sqrt(err @ ws.h1_gram() @ err))
            assert h1 <= self.H1_KAPPA * eps

    def test_projected_error_tracks_schedule(self, poisson_setup):
        frame, spec, est, f_vec, snap = poisson_setup
        ws = frame.workspace()
        u_range = snap.pinv @ ws.to_dense(f_vec)
        v, hist = solve(frame, spec, f_vec,
                        SolveConfig.from_spectrum(est, 1e-3),
                        keep_iterates=True)
        for row, it in zip(hist.rows, hist.iterates):
            err = np.linalg.norm(snap.projector @ (u_range - ws.to_dense(it)))
            assert err <= row.epsilon

    def test_inner_loop_contract(self, poisson_setup):
        # pre-coarsening iterates stay within (2 theta/3) eps_j of the
        # range solution shifted by the kernel part of the previous iterate
        frame, spec, est, f_vec, snap = poisson_setup
        ws = frame.workspace()
        cfg = SolveConfig.from_spectrum(est, 1e-3)
        v, hist = solve(frame, spec, f_vec, cfg, keep_iterates=True)
        p = snap.projector
        pu = p @ (snap.pinv @ ws.to_dense(f_vec))
        prev = np.zeros(ws.size)
        for k, (row, raw) in enumerate(zip(hist.rows, hist.raw_iterates)):
            kernel_part = prev - p @ prev
            gap = np.linalg.norm(pu - kernel_part - ws.to_dense(raw))
            assert gap <= (2.0 * cfg.theta / 3.0) * row.epsilon
            prev = ws.to_dense(hist.iterates[k])

    def test_tolerance_ledger(self, poisson_setup):
        frame, spec, est, f_vec, _ = poisson_setup
        cfg = SolveConfig.from_spectrum(est, 1e-3)
        _, hist = solve(frame, spec, f_vec, cfg)
        for row in hist.rows:
            assert row.injected_bound <= cfg.theta * row.epsilon / 2.0

    def test_schedule_strictly_decreasing(self, poisson_setup):
        frame, spec, est, f_vec, _ = poisson_setup
        _, hist = solve(frame, spec, f_vec, SolveConfig.from_spectrum(est, 1e-3))
        eps = hist.epsilons()
        assert all(a > b for a, b in zip(eps, eps[1:]))
        shrink = 3.0 * est.rho ** SolveConfig.from_spectrum(est, 1e-3).k_inner / 0.3
        for a, b in zip(eps, eps[1:]):
            assert b == pytest.approx(a * shrink, rel=1e-12)


class TestManufacturedCoefficients:
    def test_projected_error_bound(self, frame_j5, laplace, spectrum_j5):
        ws = frame_j5.workspace()
        snap = oracle.assemble(frame_j5, laplace)
        rng = np.random.default_rng(33)
        x0 = ws.from_dense(np.round(rng.standard_normal(ws.size), 3))
        f_vec = ws.from_dense(snap.matrix @ ws.to_dense(x0))
        for eps in (1e-2, 1e-4):
            v, _ = solve(frame_j5, laplace, f_vec,
                         SolveConfig.from_spectrum(spectrum_j5, eps))
            err = np.linalg.norm(snap.projector @ (ws.to_dense(x0) - ws.to_dense(v)))
            assert err <= eps


class TestDeterminismAndErrors:
    def test_bit_identical_reruns(self, poisson_setup):
        frame, spec, est, f_vec, _ = poisson_setup
        cfg = SolveConfig.from_spectrum(est, 1e-2)
        a, _ = solve(frame, spec, f_vec, cfg)
        b, _ = solve(frame, spec, f_vec, cfg)
        assert a == b

    def test_rhs_slack_budget_guard(self, poisson_setup):
        frame, spec, est, f_vec, _ = poisson_setup
        cfg = SolveConfig.from_spectrum(est, 1e-3)
        with pytest.raises(ValueError, match="rhs_slack"):
            solve(frame, spec, f_vec, cfg, rhs_slack=1.0)

    def test_history_csv_shape(self, poisson_setup):
        frame, spec, est, f_vec, snap = poisson_setup
        _, hist = solve(frame, spec, f_vec, SolveConfig.from_spectrum(est, 1e-2),
                        residual_snapshot=snap)
        lines = hist.to_csv().splitlines()
        assert lines[0] == "j,epsilon_j,support,residual,entry_evals,touches"
        assert len(lines) == len(hist.rows) + 1
        assert all(len(ln.split(",")) == 6 for ln in lines[1:])
