import numpy as np
import pytest

from kgz2d.grid import Field, FieldPair, bump_window, laplacian, make_grid, partial
from kgz2d.propagator import LinearOperator, solve_linear
from kgz2d.vector_fields import (
    GammaWord,
    JetField,
    all_words,
    apply_gamma,
    apply_letters,
    check_commutators,
    good_derivative,
)

from conftest import windowed_random_field, windowed_random_jet


def kg_jet_from_pair(pair, t):
    """Free Klein-Gordon jet: u_tt = lap(u) - u."""
    utt = laplacian(pair.u).values - pair.u.values
    return JetField(pair.grid, t, pair.u.values, pair.ut.values, utt)


class TestWords:
    def test_order_cap(self):
        with pytest.raises(ValueError):
            GammaWord(("dt", "L1", "L2"))

    def test_unknown_letter(self):
        with pytest.raises(ValueError):
            GammaWord(("dx",))

    def test_word_count(self):
        assert len(all_words(0)) == 1
        assert len(all_words(1)) == 7
        assert len(all_words(2)) == 43

    def test_budget_exhaustion(self, grid64):
        jet = windowed_random_jet(grid64, 1)
        with pytest.raises(ValueError):
            apply_letters(("dt", "L1", "L2"), jet)


class TestApplyGamma:
    def test_rotation_kills_radial(self, grid64):
        u = np.exp(-grid64.R**2 / 4.0)
        jet = JetField(grid64, 0.5, u, 0.0 * u, 0.0 * u)
        rot = apply_gamma(GammaWord(("rot",)), jet)
        assert np.max(np.abs(rot.values)) <= 1e-10 * np.max(np.abs(u))

    def test_boost_of_coordinate_field(self):
        # u = x1 (windowed), u_t = 0: L1 u = t d1(x1) = t on the plateau;
        # an exact-plateau C-infinity bump keeps the window out of the value
        g = make_grid(128, 12.0)

        def f(s):
            out = np.zeros_like(s)
            pos = s > 0
            out[pos] = np.exp(-1.0 / s[pos])
            return out

        a = f((10.0 - g.R) / 8.5)
        b = f((g.R - 1.5) / 8.5)
        w = a / (a + b + 1e-300)
        u = g.X1 * w
        jet = JetField(g, 0.0, u, 0.0 * u, 0.0 * u)
        t = 1.7
        val = apply_gamma(GammaWord(("L1",)), jet, t=t).values[0]
        plateau = g.R < 1.2
        assert np.max(np.abs(val[plateau] - t)) <= 1e-5 * t

    def test_identity_word(self, grid64):
        jet = windowed_random_jet(grid64, 5)
        out = apply_gamma(GammaWord(()), jet)
        assert np.array_equal(out.values, jet.u)

    def test_dt_returns_ut(self, grid64):
        jet = windowed_random_jet(grid64, 6)
        out = apply_gamma(GammaWord(("dt",)), jet)
        assert np.array_equal(out.values, jet.ut)

    def test_boost_against_time_stencil(self):
        # free KG plane-wave packet; independent 4-point stencil in t for
        # the time-derivative part of L1
        g = make_grid(96, 12.0)
        w = bump_window(g, 4.0)
        u0 = Field(g, np.cos(3.0 * g.X1) * w)
        pair = FieldPair(u0, Field(g, np.zeros_like(u0.values)))
        dt = 0.02
        traj = solve_linear(LinearOperator(g, 1), pair, None, 8 * dt, dt)
        k = 4
        t = traj.times[k]
        jet = kg_jet_from_pair(traj.pairs[k], t)
        lhs = apply_gamma(GammaWord(("L1",)), jet).values
        us = [traj.pairs[k + j].u.values for j in (-2, -1, 1, 2)]
        ut_fd = (us[0] - 8 * us[1] + 8 * us[2] - us[3]) / (12 * dt)
        oracle = g.X1 * ut_fd + t * partial(traj.pairs[k].u, 1).values
        scale = np.max(np.abs(lhs))
        assert np.max(np.abs(lhs - oracle)) <= 1e-4 * scale

    def test_leibniz_first_order(self, grid64):
        # Gamma(fg) = Gamma(f) g + f Gamma(g) for order-1 words
        f_levels = [windowed_random_field(grid64, s) for s in (10, 11, 12)]
        g_levels = [windowed_random_field(grid64, s) for s in (20, 21, 22)]
        prod_levels = [
            f_levels[0] * g_levels[0],
            f_levels[1] * g_levels[0] + f_levels[0] * g_levels[1],
            (f_levels[2] * g_levels[0] + 2 * f_levels[1] * g_levels[1]
             + f_levels[0] * g_levels[2]),
        ]
        t = 0.6
        jf = JetField(grid64, t, *f_levels)
        jg = JetField(grid64, t, *g_levels)
        jfg = JetField(grid64, t, *prod_levels)
        scale = np.max(np.abs(prod_levels[0]))
        for letter in ("dt", "d1", "d2", "rot", "L1", "L2"):
            word = GammaWord((letter,))
            left = apply_gamma(word, jfg).values
            right = (apply_gamma(word, jf).values * g_levels[0]
                     + f_levels[0] * apply_gamma(word, jg).values)
            assert np.max(np.abs(left - right)) <= 1e-7 * scale, letter


class TestCommutators:
    def test_zero_field(self, grid64):
        z = np.zeros((1, 64, 64))
        rep = check_commutators(JetField(grid64, 1.0, z, z, z))
        assert rep.max_residual == 0.0

    def test_windowed_polynomial(self, grid64):
        # u = x1 x2 (windowed), with an arbitrary jet continuation
        w = bump_window(grid64, 0.4 * grid64.length)
        u = grid64.X1 * grid64.X2 * w
        ut = grid64.X2 * w
        utt = 0.3 * w
        rep = check_commutators(JetField(grid64, 0.9, u, ut, utt))
        assert rep.max_relative() <= 1e-8

    @pytest.mark.parametrize("seed", range(3))
    def test_seeded_random_fields(self, grid64, seed):
        rep = check_commutators(windowed_random_jet(grid64, 100 + seed))
        assert rep.max_relative() <= 1e-8

    def test_report_names(self, grid64):
        rep = check_commutators(windowed_random_jet(grid64, 3))
        assert "[dt,L1]-d1" in rep.residuals
        assert "[d1,rot]-d2" in rep.residuals
        assert len(rep.residuals) == 9


class TestFlowCommutation:
    def test_boost_commutes_with_free_flow(self):
        # evolve L1-data freely vs apply L1 to the evolved jet
        g = make_grid(96, 12.0)
        amp = np.exp(-g.R**2 / 2.0)
        u0 = Field(g, amp)
        ut0 = Field(g, 0.5 * amp)
        op = LinearOperator(g, 1)
        T, dt = 2.0, 0.05
        traj = solve_linear(op, FieldPair(u0, ut0), None, T, dt)
        jet0 = kg_jet_from_pair(traj.pairs[0], 0.0)
        v0 = Field(g, g.X1 * jet0.ut)          # L1 u at t=0
        v1 = Field(g, g.X1 * jet0.utt + partial(u0, 1).values)
        vtraj = solve_linear(op, FieldPair(v0, v1), None, T, dt)
        jetT = kg_jet_from_pair(traj.pairs[-1], T)
        direct = apply_gamma(GammaWord(("L1",)), jetT).values
        evolved = vtraj.pairs[-1].u.values
        scale = max(np.max(np.abs(direct)), 1e-30)
        assert np.max(np.abs(direct - evolved)) <= 1e-6 * scale


class TestGoodDerivative:
    def test_constant_field(self, grid64):
        ones = np.ones((1, 64, 64))
        jet = JetField(grid64, 1.0, ones, 0 * ones, 0 * ones)
        for a in (1, 2):
            assert np.max(np.abs(good_derivative(a, jet).values)) <= 1e-12

    def test_finite_at_origin(self, grid64):
        jet = windowed_random_jet(grid64, 42)
        for a in (1, 2):
            vals = good_derivative(a, jet).values
            assert np.all(np.isfinite(vals))

    def test_invalid_axis(self, grid64):
        jet = windowed_random_jet(grid64, 43)
        with pytest.raises(ValueError):
            good_derivative(3, jet)

    def test_outgoing_wave_improvement(self):
        # along the light cone the good derivative beats the full gradient
        g = make_grid(128, 16.0)
        amp = np.exp(-g.R**2 / 2.0)
        op = LinearOperator(g, 0)
        traj = solve_linear(op, FieldPair(Field(g, amp),
                                          Field(g, np.zeros_like(amp))),
                            None, 6.0, 0.1)
        k = len(traj.pairs) - 1
        t = traj.times[k]
        pair = traj.pairs[k]
        jet = JetField(g, t, pair.u.values, pair.ut.values,
                       laplacian(pair.u).values)
        shell = np.abs(g.R - t) <= 1.0
        good = np.sqrt(sum(good_derivative(a, jet).values[0] ** 2
                           for a in (1, 2)))
        full = np.sqrt(pair.ut.values[0] ** 2
                       + partial(pair.u, 1).values[0] ** 2
                       + partial(pair.u, 2).values[0] ** 2)
        ratio = np.max(good[shell]) / np.max(full[shell])
        assert ratio < 1.0
