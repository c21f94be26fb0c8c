"""
Energy functionals, ghost-weight machinery, weighted norms, multiplier
identity residuals and decay-inequality ratio diagnostics.

Conventions used throughout:

* Japanese bracket <x> = sqrt(1 + x^2).
* chi is the fixed smooth increasing cut-off: 0 for s <= 1, 1 for s >= 2,
  realised as the quintic smoothstep in between (C^2, chi' >= 0).
* Spacetime integrals over [t0, t] x box accumulate by the trapezoid rule
  on snapshot data, matching the second-order stepper.
* Norms over solution-space weights truncate the vector-field order at
  <= 2 (the analysis commutes far more); every weighted quantity reported
  here is the truncated version.

Trajectory arguments are duck-typed: anything with .grid, .times, .states,
.jet(k, which) and .snapshot_source(k, which) works.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .grid import Field, FieldPair, Grid, partial
from .vector_fields import (
    GammaWord,
    JetField,
    all_words,
    apply_gamma,
    apply_letters,
    good_derivative,
)

__all__ = [
    "chi",
    "chi_prime",
    "jbracket",
    "ghost_weight_q",
    "energy",
    "ghost_energy",
    "multiplier_residual",
    "weighted_exterior_energy",
    "WeightSpec",
    "XNORM_TERMS",
    "xnorm_terms",
    "xnorm_distance",
    "ks_ratio",
    "hessian_decay_ratio",
    "kg_extra_decay_ratio",
    "wave_reexpression_residual",
    "DiagnosticsReport",
]


# ---------------------------------------------------------------------------
# cut-off, brackets, ghost weight
# ---------------------------------------------------------------------------

def chi(s):
    """Smooth increasing cut-off: 0 for s <= 1, 1 for s >= 2, quintic between."""
    sigma = np.clip(np.asarray(s, dtype=np.float64) - 1.0, 0.0, 1.0)
    return sigma**3 * (10.0 - 15.0 * sigma + 6.0 * sigma**2)


def chi_prime(s):
    """Derivative of chi; supported in [1, 2], nonnegative."""
    arr = np.asarray(s, dtype=np.float64)
    sigma = np.clip(arr - 1.0, 0.0, 1.0)
    out = 30.0 * sigma**2 * (1.0 - sigma) ** 2
    return np.where((arr > 1.0) & (arr < 2.0), out, 0.0)


def jbracket(x):
    """<x> = sqrt(1 + x^2)."""
    return np.sqrt(1.0 + np.asarray(x, dtype=np.float64) ** 2)


_Q_TABLE: dict[float, tuple[np.ndarray, np.ndarray, float]] = {}
_Q_ZMAX = 160.0
_Q_STEP = 1e-3


def _q_table(delta: float):
    table = _Q_TABLE.get(delta)
    if table is None:
        zs = np.arange(0.0, _Q_ZMAX + _Q_STEP, _Q_STEP)
        f = (1.0 + zs**2) ** (-(1.0 + delta) / 2.0)
        odd = np.concatenate([[0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * _Q_STEP)])
        half = 0.5 * math.sqrt(math.pi) * math.gamma(delta / 2.0) \
            / math.gamma((1.0 + delta) / 2.0)
        table = (zs, odd, half)
        _Q_TABLE[delta] = table
    return table


def ghost_weight_q(z, delta: float):
    """q(z) = delta * int_{-inf}^{z} <s>^{-1-delta} ds (bounded, increasing).

    The multiplier weight of the ghost energy identity is e^q evaluated at
    z = r - t.  delta = 0 returns 0 (the weight degenerates to 1).
    """
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    if delta == 0.0:
        return np.zeros_like(np.asarray(z, dtype=np.float64))
    zs, odd, half = _q_table(delta)
    za = np.asarray(z, dtype=np.float64)
    g = np.interp(np.abs(za), zs, odd)
    return delta * (half + np.sign(za) * g)


# ---------------------------------------------------------------------------
# energies
# ---------------------------------------------------------------------------

def _grad_sq(f: Field) -> np.ndarray:
    return np.sum(partial(f, 1).values ** 2 + partial(f, 2).values ** 2, axis=0)


def energy(p: FieldPair, m: int) -> float:
    """Natural energy: int |u_t|^2 + |grad u|^2 + m^2 |u|^2 dx."""
    dens = np.sum(p.ut.values**2, axis=0) + _grad_sq(p.u) \
        + float(m) ** 2 * np.sum(p.u.values**2, axis=0)
    return float(np.sum(dens) * p.grid.cell_area)


def _good_sq(jet: JetField) -> np.ndarray:
    """Sum over a of |G_a u|^2, summed over components."""
    out = 0.0
    for a in (1, 2):
        out = out + np.sum(good_derivative(a, jet).values ** 2, axis=0)
    return out


def _ghost_integrand(jet: JetField, m: int, delta: float) -> float:
    g = jet.grid
    w = jbracket(jet.t - g.R) ** (-(1.0 + delta))
    dens = delta * (_good_sq(jet) + float(m) ** 2 * np.sum(jet.u**2, axis=0))
    return float(np.sum(w * dens) * g.cell_area)


_MASS = {"E": 1, "n": 0, "n_delta": 0}


def _pair_of(state, which: str) -> FieldPair:
    return {"E": state.E, "n": state.n, "n_delta": state.n_delta}[which]


def ghost_energy(traj, which: str = "n", delta: float = 0.1,
                 m: int | None = None) -> np.ndarray:
    """Ghost-weight energy series: E_m(t) plus the running spacetime integrals
    of delta |G_a u|^2 / <tau - r>^{1+delta} and delta m^2 |u|^2 / <...>.

    Equals the natural energy exactly at the first snapshot.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    mass = _MASS[which] if m is None else m
    out = np.empty(len(traj.states))
    acc = 0.0
    prev = None
    for k, state in enumerate(traj.states):
        jet = traj.jet(k, which)
        integ = _ghost_integrand(jet, mass, delta)
        if prev is not None:
            acc += 0.5 * (prev + integ) * (traj.times[k] - traj.times[k - 1])
        prev = integ
        out[k] = energy(_pair_of(state, which), mass) + acc
    return out


def multiplier_residual(traj, which: str = "E", delta: float = 0.1,
                        kappa: float = 0.05, m: int | None = None) -> np.ndarray:
    """Imbalance of the ghost-weight multiplier identity, per snapshot.

    The multiplier <t>^{-kappa} e^q d_t u against -box(u) + m^2 u = F gives,
    once the periodic flux term drops out,

        int_0^t int e_w d_t(u) F dx dtau
      = [ (1/2) int e_w (|du|^2 + m^2 u^2) dx ]_0^t
        + int_0^t int (delta/2) e_w <rho-tau>^{-1-delta}
              ( |G u|^2 + (1 - |grad rho|^2) |d_t u|^2 + m^2 u^2 )
        + int_0^t int (kappa/2) tau <tau>^{-kappa-2} e^q (|du|^2 + m^2 u^2)

    with e_w = <t>^{-kappa} e^{q(rho-t)}.  The radius inside the weight is
    smoothed to rho = sqrt(r^2 + h^2), matching the regularised good
    derivatives; this keeps the identity exact (the unregularised identity
    is its h -> 0 limit), so for the exact semidiscrete solution the
    returned imbalance is pure time-quadrature error, O(dt^2).
    """
    mass = _MASS[which] if m is None else m
    g = traj.grid
    rho = np.sqrt(g.R**2 + g.h**2)
    grad_rho_defect = g.h**2 / (g.R**2 + g.h**2)  # 1 - |grad rho|^2
    out = np.empty(len(traj.states))
    src_acc = ghost_acc = kap_acc = 0.0
    prev = None
    b0 = None
    for k, state in enumerate(traj.states):
        t = traj.times[k]
        jet = traj.jet(k, which)
        eq = np.exp(ghost_weight_q(rho - t, delta))
        tw = jbracket(t) ** (-kappa)
        ut_sq = np.sum(jet.ut**2, axis=0)
        e_dens = ut_sq + _grad_sq(Field(g, jet.u)) \
            + mass**2 * np.sum(jet.u**2, axis=0)
        b_term = 0.5 * float(np.sum(tw * eq * e_dens) * g.cell_area)
        ghost_dens = 0.5 * delta * jbracket(rho - t) ** (-(1.0 + delta)) \
            * (_good_sq(jet) + grad_rho_defect * ut_sq
               + mass**2 * np.sum(jet.u**2, axis=0))
        ghost_term = float(np.sum(tw * eq * ghost_dens) * g.cell_area)
        kap_term = 0.5 * kappa * t * jbracket(t) ** (-kappa - 2.0)
        kap_int = float(np.sum(kap_term * eq * e_dens) * g.cell_area)
        F = traj.snapshot_source(k, which)
        src = float(np.sum(tw * eq * np.sum(jet.ut * F.values, axis=0))
                    * g.cell_area)
        if prev is not None:
            h = traj.times[k] - traj.times[k - 1]
            src_acc += 0.5 * (prev[0] + src) * h
            ghost_acc += 0.5 * (prev[1] + ghost_term) * h
            kap_acc += 0.5 * (prev[2] + kap_int) * h
        prev = (src, ghost_term, kap_int)
        if b0 is None:
            b0 = b_term
        out[k] = abs(src_acc - (b_term - b0 + ghost_acc + kap_acc))
    return out


def weighted_exterior_energy(traj, which: str = "n_delta", eta: float = 0.5,
                             m: int | None = None) -> "DiagnosticsReport":
    """Exterior <r-t>^{2 eta}-weighted and interior (t-r)^{-eta}-weighted
    energies with their source-coupling right-hand sides.

    Series: exterior, exterior_rhs, interior, interior_rhs.  The multiplier
    identities guarantee LHS <= C * RHS for a constant C of order one; the
    quotient is reported by the caller, not asserted here.
    """
    if not 0 < eta <= 1:
        raise ValueError("eta must lie in (0, 1]")
    mass = _MASS[which] if m is None else m
    g = traj.grid
    R = g.R
    n_snap = len(traj.states)
    ext = np.empty(n_snap)
    ext_rhs = np.empty(n_snap)
    inter = np.empty(n_snap)
    inter_rhs = np.empty(n_snap)

    state0 = traj.states[0]
    p0 = _pair_of(state0, which)
    rb = jbracket(R) ** (2.0 * eta)
    dens0 = np.sum(p0.ut.values**2, axis=0) + _grad_sq(p0.u)
    ext_data = float(np.sum(rb * dens0) * g.cell_area)
    if mass:
        ext_data += float(np.sum(rb * np.sum(p0.u.values**2, axis=0)) * g.cell_area)
    int_data = energy(p0, mass)

    src_ext_acc = src_int_acc = 0.0
    prev = None
    for k, state in enumerate(traj.states):
        t = traj.times[k]
        p = _pair_of(state, which)
        dens = np.sum(p.ut.values**2, axis=0) + _grad_sq(p.u) \
            + mass**2 * np.sum(p.u.values**2, axis=0)
        w_ext = chi(R - t) * jbracket(R - t) ** (2.0 * eta)
        tr = t - R
        # chi(tr) vanishes for tr <= 1, so the (t-r)^(-eta) factor is only
        # ever evaluated where tr > 1
        w_int = np.maximum(tr, 1.0) ** (-eta) * chi(tr) + 1.0 - chi(tr)
        ext[k] = float(np.sum(w_ext * dens) * g.cell_area)
        inter[k] = float(np.sum(w_int * dens) * g.cell_area)
        F = traj.snapshot_source(k, which)
        coupling = np.abs(np.sum(F.values * p.ut.values, axis=0))
        s_ext = float(np.sum(w_ext * coupling) * g.cell_area)
        s_int = float(np.sum(w_int * coupling) * g.cell_area)
        if prev is not None:
            h = traj.times[k] - traj.times[k - 1]
            src_ext_acc += 0.5 * (prev[0] + s_ext) * h
            src_int_acc += 0.5 * (prev[1] + s_int) * h
        prev = (s_ext, s_int)
        ext_rhs[k] = ext_data + src_ext_acc
        inter_rhs[k] = int_data + src_int_acc
    return DiagnosticsReport(
        times=np.asarray(traj.times, dtype=float),
        series={"exterior": ext, "exterior_rhs": ext_rhs,
                "interior": inter, "interior_rhs": inter_rhs},
        meta={"which": which, "eta": repr(eta), "m": str(mass)},
    )


# ---------------------------------------------------------------------------
# solution-space (X-norm) terms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WeightSpec:
    """Selects one solution-space norm term by name with its parameters."""

    name: str
    gamma_cap: int = 1
    delta: float = 0.1
    eta: float = 0.5
    kappa: float = 0.05

    def __post_init__(self):
        if not 0 <= self.gamma_cap <= 2:
            raise ValueError("gamma_cap must be 0, 1 or 2")
        for p in ("delta", "eta", "kappa"):
            v = getattr(self, p)
            if not 0 < v < 1:
                raise ValueError(f"{p} must lie in (0, 1), got {v}")


def _word_values(traj, k: int, which: str, cap: int) -> list[Field]:
    jet = traj.jet(k, which)
    return [apply_gamma(w, jet) for w in all_words(cap)]


def _sum_l2(traj, k, which, cap, weight) -> float:
    total = 0.0
    for val in _word_values(traj, k, which, cap):
        total += float(np.sqrt(np.sum(weight * np.sum(val.values**2, axis=0))
                               * traj.grid.cell_area))
    return total


def _max_sup(traj, k, which, cap, weight) -> float:
    best = 0.0
    for val in _word_values(traj, k, which, cap):
        mag = np.sqrt(np.sum(val.values**2, axis=0))
        best = max(best, float(np.max(weight * mag)))
    return best


class _GhostEnergyTracker:
    """Running E_gst(t, Gamma^I u) for every word up to a cap."""

    def __init__(self, traj, which: str, cap: int, delta: float, m: int):
        self.traj, self.which, self.delta, self.m = traj, which, delta, m
        self.words = all_words(cap)
        self.acc = np.zeros(len(self.words))
        self.prev = None
        self.k_done = -1
        self.values = None

    def advance(self, k: int) -> np.ndarray:
        if k != self.k_done + 1:
            raise ValueError("ghost tracker must advance one snapshot at a time")
        traj = self.traj
        integ = np.empty(len(self.words))
        vals = np.empty(len(self.words))
        max_budget = max(w.time_budget() for w in self.words)
        jet = traj.jet(k, self.which, depth=3 if max_budget >= 2 else 2)
        for i, w in enumerate(self.words):
            val = apply_gamma(w, jet)
            vt = apply_letters(("dt",) + w.letters, jet)
            gjet = JetField(traj.grid, traj.times[k], val.values, vt.values,
                            np.zeros_like(val.values))
            integ[i] = _ghost_integrand(gjet, self.m, self.delta)
            dens = np.sum(vt.values**2, axis=0) + _grad_sq(val) \
                + float(self.m) ** 2 * np.sum(val.values**2, axis=0)
            vals[i] = float(np.sum(dens) * traj.grid.cell_area)
        if self.prev is not None:
            h = traj.times[k] - traj.times[k - 1]
            self.acc += 0.5 * (self.prev + integ) * h
        self.prev = integ
        self.k_done = k
        self.values = vals + self.acc
        return self.values


def _term_series(traj, spec: WeightSpec) -> np.ndarray:
    """Instantaneous series of one X-norm term (running integrals inside)."""
    g = traj.grid
    R = g.R
    d = spec.delta
    cap = spec.gamma_cap
    n_snap = len(traj.states)
    out = np.empty(n_snap)
    name = spec.name

    if name in ("kg_energy", "kg_energy_uniform", "wave_energy_uniform"):
        which = "E" if name.startswith("kg") else "n"
        tracker = _GhostEnergyTracker(traj, which, cap, d, _MASS[which])
        for k in range(n_snap):
            vals = tracker.advance(k)
            total = float(np.sum(np.sqrt(np.maximum(vals, 0.0))))
            w = jbracket(traj.times[k]) ** (-d) if name == "kg_energy" else 1.0
            out[k] = w * total
        return out

    if name == "kg_spacetime":
        words = all_words(cap)
        acc = np.zeros(len(words))
        prev = None
        for k in range(n_snap):
            t = traj.times[k]
            weight = (jbracket(t) ** (-d) * jbracket(t - R) ** (-0.5 - 0.5 * d)) ** 2
            vals = _word_values(traj, k, "E", cap)
            integ = np.array([
                float(np.sum(weight * np.sum(v.values**2, axis=0)) * g.cell_area)
                for v in vals])
            if prev is not None:
                acc += 0.5 * (prev + integ) * (t - traj.times[k - 1])
            prev = integ
            out[k] = jbracket(t) ** (-0.5 * d) * float(np.sqrt(np.sum(acc)))
        return out

    for k in range(n_snap):
        t = traj.times[k]
        tb = jbracket(t)
        if name == "wave_l2":
            out[k] = tb ** (-d) * _sum_l2(traj, k, "n", cap, 1.0)
        elif name == "kg_cone_l2":
            w = (jbracket(t + R) / jbracket(t - R)) ** 2
            out[k] = tb ** (-d) * _sum_l2(traj, k, "E", cap, w)
        elif name == "wave_interior_l2":
            w = (1.0 - chi(R - 2.0 * t)) * jbracket(t - R) ** 2
            out[k] = tb ** (-d) * _sum_l2(traj, k, "n", cap, w)
        elif name == "wave_interior_strong":
            w = (1.0 - chi(R - 2.0 * t)) * jbracket(t - R) ** (2.0 * (1.0 - d))
            out[k] = _sum_l2(traj, k, "n", cap, w)
        elif name in ("wave_exterior_l2", "wave_exterior_low"):
            w = chi(R - t) * jbracket(t - R) ** 2
            pref = tb ** (-0.5 - d) if name == "wave_exterior_l2" else tb ** (-d)
            out[k] = pref * _sum_l2(traj, k, "n", cap, w)
        elif name in ("kg_exterior_l2", "kg_exterior_low"):
            w = chi(R - t) * jbracket(t - R) ** 2
            pref = tb ** (-0.5 - d) if name == "kg_exterior_l2" else tb ** (-d)
            total = _sum_l2(traj, k, "E", cap, w)
            jet = traj.jet(k, "E", depth=3 if cap >= 2 else 2)
            for word in all_words(cap):
                for dletter in ("dt", "d1", "d2"):
                    dval = apply_letters((dletter,) + word.letters, jet)
                    total += float(np.sqrt(
                        np.sum(w * np.sum(dval.values**2, axis=0)) * g.cell_area))
            out[k] = pref * total
        elif name == "kg_sup":
            out[k] = _max_sup(traj, k, "E", cap, jbracket(t + R))
        elif name == "kg_sup_cone":
            w = jbracket(t - R) ** (-1.0) * jbracket(t + R) ** 2
            out[k] = _max_sup(traj, k, "E", cap, w)
        elif name == "wave_sup":
            w = jbracket(t - R) ** (1.0 - d) * jbracket(t + R) ** 0.5
            out[k] = _max_sup(traj, k, "n", cap, w)
        elif name == "kg_sup_exterior":
            w = chi(R - t) * jbracket(t + R) ** (1.25 - d)
            out[k] = _max_sup(traj, k, "E", cap, w)
        else:
            raise ValueError(f"unknown X-norm term {name!r}")
    return out


XNORM_TERMS = (
    "wave_l2", "kg_energy", "kg_spacetime", "kg_cone_l2",
    "wave_energy_uniform", "kg_energy_uniform",
    "wave_interior_l2", "wave_interior_strong",
    "wave_exterior_l2", "wave_exterior_low",
    "kg_exterior_l2", "kg_exterior_low",
    "kg_sup", "kg_sup_cone", "wave_sup", "kg_sup_exterior",
)


def xnorm_terms(traj, specs: list[WeightSpec]) -> "DiagnosticsReport":
    """Evaluate the requested solution-space norm terms along a trajectory."""
    series = {}
    for spec in specs:
        if spec.name not in XNORM_TERMS:
            raise ValueError(f"unknown X-norm term {spec.name!r}")
        series[spec.name] = _term_series(traj, spec)
    return DiagnosticsReport(
        times=np.asarray(traj.times, dtype=float), series=series,
        meta={"terms": ",".join(s.name for s in specs)},
    )


def xnorm_distance(a, b, delta: float = 0.1, gamma_cap: int = 1,
                   include_spacetime: bool = False) -> float:
    """Truncated discrete X-seminorm distance between two trajectories.

    sup over t of sum_{|I| <= cap} of <t>^{-delta} ( E_1(Gamma^I dE)^{1/2}
    + ||Gamma^I dn|| + ||(<t+r>/<t-r>) Gamma^I dE|| ), where d* are the
    snapshot differences.  With include_spacetime the running integral term
    of the full norm is added (kept optional; see module notes).
    """
    if len(a.times) != len(b.times) or not np.allclose(a.times, b.times):
        raise ValueError("trajectories cover different time grids")
    g = a.grid
    R = g.R
    words = all_words(gamma_cap)
    best = 0.0
    st_acc = np.zeros(len(words))
    st_prev = None
    for k in range(len(a.times)):
        t = a.times[k]
        tb = jbracket(t)
        jet_E = _diff_jet(a, b, k, "E")
        jet_n = _diff_jet(a, b, k, "n")
        cone_w = (jbracket(t + R) / jbracket(t - R)) ** 2
        total = 0.0
        st_integ = np.empty(len(words))
        for i, w in enumerate(words):
            vE = apply_gamma(w, jet_E)
            vEt = apply_letters(("dt",) + w.letters, jet_E)
            dens = np.sum(vEt.values**2, axis=0) + _grad_sq(vE) \
                + np.sum(vE.values**2, axis=0)
            e1 = float(np.sum(dens) * g.cell_area)
            vn = apply_gamma(w, jet_n)
            l2n = float(np.sqrt(np.sum(vn.values**2) * g.cell_area))
            cone = float(np.sqrt(np.sum(cone_w * np.sum(vE.values**2, axis=0))
                                 * g.cell_area))
            total += tb ** (-delta) * (math.sqrt(max(e1, 0.0)) + l2n + cone)
            if include_spacetime:
                stw = (tb ** (-0.5 * delta)
                       * jbracket(t - R) ** (-0.5 - 0.5 * delta)) ** 2
                st_integ[i] = float(np.sum(stw * np.sum(vE.values**2, axis=0))
                                    * g.cell_area)
        if include_spacetime:
            if st_prev is not None:
                st_acc += 0.5 * (st_prev + st_integ) * (t - a.times[k - 1])
            st_prev = st_integ
            total += tb ** (-0.5 * delta) * float(np.sqrt(np.sum(st_acc)))
        best = max(best, total)
    return best


def _diff_jet(a, b, k: int, which: str) -> JetField:
    ja = a.jet(k, which)
    jb_ = b.jet(k, which)
    return JetField(a.grid, ja.t, ja.u - jb_.u, ja.ut - jb_.ut, ja.utt - jb_.utt)


# ---------------------------------------------------------------------------
# inequality-ratio diagnostics
# ---------------------------------------------------------------------------

def ks_ratio(traj, which: str = "n", gamma_cap: int = 2):
    """Klainerman-Sobolev ratio series (no scaling field, order capped at 2).

    ratio(t) = sup_x <t+|x|>^{1/2} |u(t,x)|
               / sup_{s <= 2t, |I| <= 2} ||Gamma^I u(s)||

    The trajectory must reach 2t for every reported t, so the series covers
    snapshot times up to half the horizon.  0/0 is reported as 0.
    """
    g = traj.grid
    words = all_words(gamma_cap)
    times = np.asarray(traj.times, dtype=float)
    t_end = times[-1]
    valid = [k for k in range(len(times)) if 2.0 * times[k] <= t_end + 1e-9]
    if not valid:
        raise ValueError("trajectory horizon too short for any K-S query")
    w_snap = np.empty(len(times))
    for k in range(len(times)):
        jet = traj.jet(k, which)
        w_snap[k] = max(
            float(np.sqrt(np.sum(apply_gamma(w, jet).values ** 2) * g.cell_area))
            for w in words)
    out_t = np.empty(len(valid))
    out_v = np.empty(len(valid))
    for i, k in enumerate(valid):
        t = times[k]
        pair = _pair_of(traj.states[k], which)
        num = float(np.max(jbracket(t + g.R) ** 0.5 * pair.u.magnitude()))
        den = float(np.max(w_snap[times <= 2.0 * t + 1e-9]))
        out_t[i] = t
        out_v[i] = num / den if den > 0 else 0.0
    return out_t, out_v


def _second_derivatives(jet: JetField) -> np.ndarray:
    """Pointwise Frobenius norm of the spacetime Hessian, over components."""
    g = jet.grid
    d1u = _dx_arr(g, jet.u, 1)
    d2u = _dx_arr(g, jet.u, 2)
    parts = [jet.utt,
             _dx_arr(g, jet.ut, 1), _dx_arr(g, jet.ut, 2),
             _dx_arr(g, d1u, 1), _dx_arr(g, d1u, 2), _dx_arr(g, d2u, 2)]
    weights = [1.0, 2.0, 2.0, 1.0, 2.0, 1.0]  # off-diagonal pairs twice
    total = 0.0
    for w, p in zip(weights, parts):
        total = total + w * np.sum(p**2, axis=0)
    return np.sqrt(total)


def _dx_arr(g: Grid, arr: np.ndarray, axis: int) -> np.ndarray:
    return g.irfft(g.spectral["d1" if axis == 1 else "d2"] * g.rfft(arr))


def _first_derivatives(jet: JetField) -> np.ndarray:
    g = jet.grid
    total = np.sum(jet.ut**2, axis=0) \
        + np.sum(_dx_arr(g, jet.u, 1) ** 2, axis=0) \
        + np.sum(_dx_arr(g, jet.u, 2) ** 2, axis=0)
    return np.sqrt(total)


def _gamma_first_derivatives(traj, k: int, which: str) -> np.ndarray:
    """sqrt(sum over Gamma, alpha of |d_alpha Gamma u|^2) pointwise."""
    jet = traj.jet(k, which)
    total = 0.0
    for letter in ("dt", "d1", "d2", "rot", "L1", "L2"):
        for dletter in ("dt", "d1", "d2"):
            val = apply_gamma(GammaWord((dletter, letter)), jet)
            total = total + np.sum(val.values**2, axis=0)
    return np.sqrt(total)


def _masked_max_ratio(lhs: np.ndarray, rhs: np.ndarray, mask: np.ndarray) -> float:
    """Max of lhs/rhs over mask, ignoring points where rhs is noise-level."""
    floor = 1e-8 * float(np.max(rhs[mask])) if np.any(mask) else 0.0
    good = mask & (rhs > floor)
    if not np.any(good):
        return 0.0
    return float(np.max(lhs[good] / rhs[good]))


def hessian_pointwise(jet: JetField, gamma_first: np.ndarray,
                      source_mag: np.ndarray):
    """Pointwise (lhs, rhs) of the wave-Hessian extra-decay inequality."""
    g = jet.grid
    tr_b = jbracket(jet.t - g.R)
    lhs = _second_derivatives(jet)
    rhs = (gamma_first + _first_derivatives(jet)) / tr_b \
        + jet.t * source_mag / tr_b
    return lhs, rhs


def hessian_decay_ratio(traj, which: str = "n_delta"):
    """Wave-Hessian extra-decay ratio series, masked to |x| <= 3t, t >= 1.

    ratio(t) = max over the mask of
        |dd w| / ( <t-r>^{-1} (|d Gamma w| + |d w|) + t <t-r>^{-1} |F_w| ).
    """
    g = traj.grid
    out_t, out_v = [], []
    for k in range(len(traj.times)):
        t = traj.times[k]
        if t < 1.0:
            continue
        jet = traj.jet(k, which)
        F = traj.snapshot_source(k, which)
        lhs, rhs = hessian_pointwise(
            jet, _gamma_first_derivatives(traj, k, which),
            np.sqrt(np.sum(F.values**2, axis=0)))
        out_t.append(t)
        out_v.append(_masked_max_ratio(lhs, rhs, g.R <= 3.0 * t))
    return np.asarray(out_t), np.asarray(out_v)


def kg_pointwise(jet: JetField, gamma_first: np.ndarray,
                 source_mag: np.ndarray):
    """Pointwise (lhs, rhs) of the Klein-Gordon extra-decay inequality."""
    g = jet.grid
    tb = jbracket(jet.t)
    lhs = np.sqrt(np.sum(jet.u**2, axis=0))
    rhs = (np.abs(jet.t - g.R) / tb) * _second_derivatives(jet) \
        + gamma_first / tb + _first_derivatives(jet) / tb + source_mag
    return lhs, rhs


def kg_extra_decay_ratio(traj, which: str = "E"):
    """Klein-Gordon extra-decay ratio series, masked to |x| <= 3t, t >= 1.

    ratio(t) = max over the mask of
        |v| / ( (|t-r|/<t>) |dd v| + <t>^{-1} |d Gamma v|
                + <t>^{-1} |d v| + |F_v| ).
    """
    g = traj.grid
    out_t, out_v = [], []
    for k in range(len(traj.times)):
        t = traj.times[k]
        if t < 1.0:
            continue
        jet = traj.jet(k, which)
        F = traj.snapshot_source(k, which)
        lhs, rhs = kg_pointwise(
            jet, _gamma_first_derivatives(traj, k, which),
            np.sqrt(np.sum(F.values**2, axis=0)))
        out_t.append(t)
        out_v.append(_masked_max_ratio(lhs, rhs, g.R <= 3.0 * t))
    return np.asarray(out_t), np.asarray(out_v)


def wave_reexpression_residual(jet: JetField) -> float:
    """Residual of the wave-operator re-expression through d_t and boosts:

    -box = ((t-r)(t+r)/t^2) dt dt + (x^a/t^2) dt L_a - (1/t) d^a L_a
           + (2/t) dt - (x^a/t^2) d_a,     (t >= 1)

    evaluated on a jet; returns the max-norm difference of the two sides.
    """
    g = jet.grid
    t = jet.t
    if t < 1.0:
        raise ValueError("re-expression check requires t >= 1")
    lhs = jet.utt - _dx_arr(g, _dx_arr(g, jet.u, 1), 1) \
        - _dx_arr(g, _dx_arr(g, jet.u, 2), 2)
    X = (g.X1, g.X2)
    R2 = g.R**2
    rhs = ((t**2 - R2) / t**2) * jet.utt
    for a, (la, da) in enumerate((("L1", "d1"), ("L2", "d2")), start=1):
        xa = X[a - 1]
        rhs = rhs + (xa / t**2) * apply_gamma(GammaWord(("dt", la)), jet).values
        rhs = rhs - (1.0 / t) * apply_gamma(GammaWord((da, la)), jet).values
        rhs = rhs - (xa / t**2) * _dx_arr(g, jet.u, a)
    rhs = rhs + (2.0 / t) * jet.ut
    return float(np.max(np.abs(lhs - rhs)))


# ---------------------------------------------------------------------------
# report container
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class DiagnosticsReport:
    """Named scalar time series plus run metadata; serialises to CSV."""

    times: np.ndarray
    series: dict
    meta: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        for name, vals in self.series.items():
            vals = np.asarray(vals, dtype=float)
            if vals.shape != self.times.shape:
                raise ValueError(f"series {name!r} length mismatch")
            if not np.all(np.isfinite(vals)):
                raise ValueError(f"series {name!r} contains non-finite values")
            self.series[name] = vals

    def write_csv(self, path) -> None:
        cols = ["t"] + list(self.series)
        lines = [",".join(cols)]
        for i in range(len(self.times)):
            row = [f"{self.times[i]:.17g}"]
            row += [f"{self.series[name][i]:.17g}" for name in self.series]
            lines.append(",".join(row))
        with open(path, "w", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def read_csv(cls, path) -> "DiagnosticsReport":
        with open(path) as fh:
            header = fh.readline().strip().split(",")
            rows = [list(map(float, line.split(","))) for line in fh if line.strip()]
        data = np.asarray(rows)
        times = data[:, 0]
        series = {name: data[:, j + 1] for j, name in enumerate(header[1:])}
        return cls(times=times, series=series)
