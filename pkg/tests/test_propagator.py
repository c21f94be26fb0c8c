import numpy as np
import pytest

from kgz2d.energy_diag import energy
from kgz2d.grid import Field, FieldPair, make_grid
from kgz2d.propagator import (
    InstabilityError,
    LinearOperator,
    forced_step,
    free_step,
    solve_linear,
)

from conftest import gaussian_pair


def cos_pair(grid):
    u = Field(grid, np.cos(grid.X1))
    return FieldPair(u, Field(grid, np.zeros_like(u.values)))


class TestFreeStep:
    def test_single_mode_eigensolution(self, grid32):
        # cos(x1) has omega = sqrt(1 + 1); exact solution cos(sqrt(2) t) cos(x1)
        op = LinearOperator(grid32, 1)
        p = cos_pair(grid32)
        t = 1.3
        q = free_step(op, p, t)
        exact = np.cos(np.sqrt(2.0) * t) * np.cos(grid32.X1)
        assert np.max(np.abs(q.u.values[0] - exact)) < 1e-13

    def test_zero_dt_identity(self, grid32):
        op = LinearOperator(grid32, 1)
        p = cos_pair(grid32)
        q = free_step(op, p, 0.0)
        assert np.max(np.abs(q.u.values - p.u.values)) <= 1e-15
        assert np.max(np.abs(q.ut.values - p.ut.values)) <= 1e-15

    def test_forward_backward_identity(self, grid64):
        op = LinearOperator(grid64, 1)
        p = gaussian_pair(grid64)
        q = free_step(op, free_step(op, p, 0.37), -0.37)
        assert np.max(np.abs(q.u.values - p.u.values)) <= 1e-12

    def test_semigroup(self, grid64):
        op = LinearOperator(grid64, 0)
        p = gaussian_pair(grid64)
        one = free_step(op, p, 0.9)
        two = free_step(op, free_step(op, p, 0.5), 0.4)
        assert np.max(np.abs(one.u.values - two.u.values)) <= 1e-12
        assert np.max(np.abs(one.ut.values - two.ut.values)) <= 1e-12

    def test_wave_zero_mode_linear_growth(self, grid32):
        # constant data (0, 1): u(t) = t for the m=0 zero mode
        op = LinearOperator(grid32, 0)
        p = FieldPair(Field(grid32, np.zeros((1, 32, 32))),
                      Field(grid32, np.ones((1, 32, 32))))
        q = free_step(op, p, 2.5)
        assert np.max(np.abs(q.u.values - 2.5)) < 1e-13
        assert np.max(np.abs(q.ut.values - 1.0)) < 1e-13

    def test_mass_validation(self, grid32):
        with pytest.raises(ValueError):
            LinearOperator(grid32, 2)

    def test_conservation_thousand_steps(self, grid64):
        op = LinearOperator(grid64, 1)
        p = gaussian_pair(grid64)
        e0 = energy(p, 1)
        for _ in range(1000):
            p = free_step(op, p, 0.1)
        assert abs(energy(p, 1) - e0) / e0 <= 1e-11


class TestForcedStep:
    def test_zero_source_matches_free(self, grid64):
        op = LinearOperator(grid64, 1)
        p = gaussian_pair(grid64)
        zero = Field(grid64, np.zeros((1, 64, 64)))
        a = forced_step(op, p, lambda t: zero, 0.0, 0.2)
        b = free_step(op, p, 0.2)
        assert np.max(np.abs(a.u.values - b.u.values)) < 1e-14

    def test_constant_source_second_order(self, grid32):
        # -box u + u = c cos(x1): particular solution c/2 cos(x1);
        # Richardson order check against the exact mode solution
        op = LinearOperator(grid32, 1)
        c = 0.3
        src = Field(grid32, c * np.cos(grid32.X1))
        T = 1.0
        omega = np.sqrt(2.0)

        def run(dt):
            p = FieldPair(Field(grid32, np.zeros((1, 32, 32))),
                          Field(grid32, np.zeros((1, 32, 32))))
            t = 0.0
            for _ in range(int(round(T / dt))):
                p = forced_step(op, p, lambda _t: src, t, dt)
                t += dt
            return p.u.values[0]

        exact = (c / omega**2) * (1 - np.cos(omega * T)) * np.cos(grid32.X1)
        errs = [np.max(np.abs(run(dt) - exact)) for dt in (0.05, 0.025)]
        assert np.log2(errs[0] / errs[1]) >= 1.9

    def test_rejects_nonpositive_dt(self, grid32):
        op = LinearOperator(grid32, 1)
        p = cos_pair(grid32)
        with pytest.raises(ValueError):
            forced_step(op, p, lambda t: p.u, 0.0, -0.1)

    def test_nonfinite_source_rejected(self, grid32):
        op = LinearOperator(grid32, 1)
        p = cos_pair(grid32)
        bad = np.zeros((1, 32, 32))
        bad[0, 0, 0] = np.inf

        def src(t):
            f = Field(grid32, np.ones((1, 32, 32)))
            object.__setattr__(f, "values", bad)
            return f

        with pytest.raises(ValueError):
            forced_step(op, p, src, 0.0, 0.1)

    def test_time_symmetric_source_reversible(self, grid64):
        # source even about the interval midpoint: marching forward then
        # backward through mirrored steps returns the data (Strang symmetry)
        op = LinearOperator(grid64, 1)
        bump = Field(grid64, np.exp(-grid64.R**2))
        T, dt = 1.0, 0.1

        def src(t):
            return Field(grid64, np.cos(np.pi * (t - T / 2)) * bump.values)

        p = gaussian_pair(grid64)
        q = p
        t = 0.0
        for _ in range(int(T / dt)):
            q = forced_step(op, q, src, t, dt)
            t += dt
        # reverse: negate velocities, use the mirrored source, march again
        q = FieldPair(q.u, -1.0 * q.ut)
        t = 0.0
        for _ in range(int(T / dt)):
            q = forced_step(op, q, lambda s: src(T - s), t, dt)
            t += dt
        assert np.max(np.abs(q.u.values - p.u.values)) <= 1e-10


class TestSolveLinear:
    def test_zero_everything(self, grid64):
        op = LinearOperator(grid64, 1)
        z = Field(grid64, np.zeros((1, 64, 64)))
        traj = solve_linear(op, FieldPair(z, z), None, 1.0, 0.1)
        assert len(traj) == 11
        assert all(np.all(p.u.values == 0) for p in traj.pairs)

    def test_first_snapshot_is_data(self, grid64):
        op = LinearOperator(grid64, 1)
        p = gaussian_pair(grid64)
        traj = solve_linear(op, p, None, 0.5, 0.1)
        assert traj.pairs[0] is p

    def test_free_energy_constant(self, grid64):
        op = LinearOperator(grid64, 1)
        traj = solve_linear(op, gaussian_pair(grid64), None, 5.0, 0.1)
        energies = [energy(p, 1) for p in traj.pairs]
        drift = (max(energies) - min(energies)) / energies[0]
        assert drift <= 1e-12

    def test_dt_must_divide(self, grid64):
        op = LinearOperator(grid64, 1)
        with pytest.raises(ValueError):
            solve_linear(op, gaussian_pair(grid64), None, 1.0, 0.3)

    def test_instability_abort(self, grid32):
        op = LinearOperator(grid32, 0)
        p = cos_pair(grid32)

        def exploding(t):
            return Field(grid32, np.full((1, 32, 32), np.exp(t * 40.0)))

        with pytest.raises(InstabilityError):
            solve_linear(op, p, exploding, 2.0, 0.1)

    def test_wave_self_convergence(self):
        # Gaussian data, m=0: coarse run against a 2x-resolution, dt/2 oracle
        results = {}
        for n, dt in ((48, 0.1), (96, 0.05)):
            g = make_grid(n, 12.0)
            op = LinearOperator(g, 0)
            traj = solve_linear(op, gaussian_pair(g, amplitude=1.0), None, 4.0, dt)
            results[n] = np.max(np.abs(traj.pairs[-1].u.values))
        rel = abs(results[48] - results[96]) / abs(results[96])
        assert rel <= 1e-4
