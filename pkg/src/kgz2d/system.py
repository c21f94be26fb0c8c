"""
The coupled Klein-Gordon-Zakharov evolution on the periodic box:

    -box(E) + E = -n E        (Klein-Gordon, 2 components)
    -box(n)     = lap(|E|^2)  (wave)

evolved in the divergence form n = lap(n_delta), -box(n_delta) = |E|^2,
plus the Picard solution mapping that sends a guessed trajectory to the
solution of the corresponding *linear* system with sources read off the
guess.

Stepping is a Strang composition built on the exact mode-wise propagator:
half free step, source kick at the interval midpoint, half free step.  The
kick sources of every step are recorded, which makes the discrete solution
an exact fixed point of the Picard map and makes Duhamel reconstructions
exact up to round-off.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import (
    Field,
    FieldPair,
    Grid,
    dealias,
    laplacian,
)
from .propagator import InstabilityError, LinearOperator, _free_step_hat
from .vector_fields import JetField

__all__ = [
    "KGZState",
    "Trajectory",
    "InitialData",
    "gaussian_data",
    "ring_data",
    "evolve",
    "evolve_direct_n",
    "free_flow",
    "picard_map",
    "picard_solve",
    "PicardNonConvergence",
]

SUPPORT_FLOOR = 1e-14  # sample threshold defining the effective data radius


@dataclass(frozen=True, eq=False)
class KGZState:
    """Full simulation state at one time: (E, dE), (n, dn), (nD, dnD)."""

    E: FieldPair
    n: FieldPair
    n_delta: FieldPair
    t: float


@dataclass(eq=False)
class Trajectory:
    """Time-ordered KGZ snapshots plus per-step midpoint source records.

    source_history holds (Q, S) = (-nE, |E|^2) sampled along this
    trajectory at every step midpoint (2/3-dealiased, exactly the products
    a solution map would feed to the linear equations).  kick_history holds
    the sources that were actually applied as kicks: identical to
    source_history for the nonlinear evolution, zero (None) for free flow,
    and the guess's history for a Picard iterate.
    """

    grid: Grid
    dt: float
    store_every: int
    times: np.ndarray
    states: list
    source_times: np.ndarray | None
    source_history: list | None
    kick_history: list | None
    source_mode: str  # "self" | "none" | "replay"
    kind: str
    # equation sources at snapshot times, recorded when they cannot be
    # reconstructed from the states alone (Picard iterates)
    snapshot_sources: list | None = None

    def __post_init__(self):
        dts = np.diff(self.times)
        if len(dts) and not np.allclose(dts, dts[0], rtol=1e-9, atol=1e-12):
            raise ValueError("trajectory times are not uniformly spaced")
        if len(dts) and np.any(dts <= 0):
            raise ValueError("trajectory times must be strictly increasing")

    def __len__(self):
        return len(self.states)

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    def index_at(self, t: float) -> int:
        k = int(round((t - self.times[0]) / (self.times[1] - self.times[0])))
        if k < 0 or k >= len(self.times) or abs(self.times[k] - t) > 1e-9:
            raise ValueError(f"no snapshot at t={t}")
        return k

    # -- equation sources at snapshot times (for jets and identities) --

    def snapshot_source(self, k: int, which: str) -> Field:
        state = self.states[k]
        g = self.grid
        if self.source_mode == "none":
            comps = 2 if which == "E" else 1
            return Field(g, np.zeros((comps, g.n, g.n)))
        if self.source_mode == "self":
            q, s = _products_at(state)
            if which == "E":
                return q
            return laplacian(s) if which == "n" else s
        if self.snapshot_sources is not None:
            q, s = self.snapshot_sources[k]
            if which == "E":
                return q
            return laplacian(s) if which == "n" else s
        # fallback: average the midpoint kicks bracketing the snapshot
        step = k * self.store_every
        idx = 0 if which == "E" else 1
        lo = self.kick_history[max(step - 1, 0)][idx]
        hi = self.kick_history[min(step, len(self.kick_history) - 1)][idx]
        mid = Field(self.grid, 0.5 * (lo.values + hi.values))
        return laplacian(mid) if which == "n" else mid

    def snapshot_source_dt(self, k: int, which: str) -> Field:
        """Time derivative of the snapshot source (for depth-3 jets)."""
        state = self.states[k]
        g = self.grid
        if self.source_mode == "none":
            comps = 2 if which == "E" else 1
            return Field(g, np.zeros((comps, g.n, g.n)))
        if self.source_mode == "self":
            if which == "E":
                prod = (state.n.ut.values[0] * state.E.u.values
                        + state.n.u.values[0] * state.E.ut.values)
                return -1.0 * dealias(Field(g, prod))
            s = dealias(Field(g, 2.0 * np.sum(state.E.u.values
                                              * state.E.ut.values, axis=0)))
            return laplacian(s) if which == "n" else s
        # replay: one-sided difference of the bracketing kicks
        step = k * self.store_every
        idx = 0 if which == "E" else 1
        lo = self.kick_history[max(step - 1, 0)][idx]
        hi = self.kick_history[min(step, len(self.kick_history) - 1)][idx]
        der = Field(self.grid, (hi.values - lo.values) / self.dt)
        return laplacian(der) if which == "n" else der

    def products(self, k: int) -> tuple[Field, Field]:
        """Dealiased (-nE, |E|^2) evaluated on snapshot k's own fields."""
        return _products_at(self.states[k])

    def jet(self, k: int, which: str, depth: int = 2) -> JetField:
        """Snapshot jet (u, u_t, u_tt[, u_ttt]) with time derivatives
        supplied by the field's own equation."""
        state = self.states[k]
        pair = {"E": state.E, "n": state.n, "n_delta": state.n_delta}[which]
        m_sq = 1.0 if which == "E" else 0.0
        source = self.snapshot_source(k, which)
        utt = laplacian(pair.u).values - m_sq * pair.u.values + source.values
        uttt = None
        if depth >= 3:
            uttt = (laplacian(pair.ut).values - m_sq * pair.ut.values
                    + self.snapshot_source_dt(k, which).values)
        return JetField(self.grid, state.t, pair.u.values, pair.ut.values,
                        utt, uttt)


def _products_at(state: KGZState) -> tuple[Field, Field]:
    """The quadratic products (-nE, |E|^2) of one state, 2/3-dealiased."""
    g = state.E.grid
    q = -1.0 * dealias(Field(g, state.n.u.values[0] * state.E.u.values))
    s = dealias(Field(g, np.sum(state.E.u.values**2, axis=0)))
    return q, s


@dataclass(frozen=True, eq=False)
class InitialData:
    """Cauchy data (E0, E1, n0_delta, n1_delta); n0, n1 are their Laplacians."""

    E0: Field
    E1: Field
    n0_delta: Field
    n1_delta: Field
    radius: float = field(init=False)

    def __post_init__(self):
        if self.E0.components != 2 or self.E1.components != 2:
            raise ValueError("E data must have 2 components")
        if self.n0_delta.components != 1 or self.n1_delta.components != 1:
            raise ValueError("n_delta data must be scalar")
        r = self.grid.R
        radius = 0.0
        # the derived n data spreads further than n_delta (Laplacian adds a
        # polynomial factor), so include it in the effective support; the
        # floor is relative to each field's peak, with extra headroom for
        # the spectral-differentiation round-off of the derived fields
        fields = [(f, SUPPORT_FLOOR) for f in
                  (self.E0, self.E1, self.n0_delta, self.n1_delta)]
        fields += [(f, 10.0 * SUPPORT_FLOOR) for f in (self.n0, self.n1)]
        for f, floor in fields:
            peak = float(np.max(np.abs(f.values)))
            if peak == 0.0:
                continue
            hit = np.any(np.abs(f.values) > floor * peak, axis=0)
            if np.any(hit):
                radius = max(radius, float(np.max(r[hit])))
        object.__setattr__(self, "radius", radius)

    @property
    def grid(self) -> Grid:
        return self.E0.grid

    @property
    def n0(self) -> Field:
        return laplacian(self.n0_delta)

    @property
    def n1(self) -> Field:
        return laplacian(self.n1_delta)


def gaussian_data(grid: Grid, amplitude: float, width: float = 1.0,
                  center: tuple[float, float] = (0.0, 0.0)) -> InitialData:
    """Gaussian bump data: E0 = (a g, 0), n0_delta = a g, velocities zero."""
    g = np.exp(-(((grid.X1 - center[0]) ** 2 + (grid.X2 - center[1]) ** 2)
                 / (2.0 * width**2)))
    zero = np.zeros_like(g)
    return InitialData(
        E0=Field(grid, np.stack([amplitude * g, zero])),
        E1=Field(grid, np.stack([zero, zero])),
        n0_delta=Field(grid, amplitude * g),
        n1_delta=Field(grid, zero),
    )


def ring_data(grid: Grid, amplitude: float, width: float = 1.0,
              ring_radius: float = 3.0,
              center: tuple[float, float] = (0.0, 0.0)) -> InitialData:
    """Annular bump centered on r = ring_radius."""
    r = np.sqrt((grid.X1 - center[0]) ** 2 + (grid.X2 - center[1]) ** 2)
    g = np.exp(-((r - ring_radius) ** 2) / (2.0 * width**2))
    zero = np.zeros_like(g)
    return InitialData(
        E0=Field(grid, np.stack([amplitude * g, zero])),
        E1=Field(grid, np.stack([zero, zero])),
        n0_delta=Field(grid, amplitude * g),
        n1_delta=Field(grid, zero),
    )


# ---------------------------------------------------------------------------
# coupled stepper
# ---------------------------------------------------------------------------

def _steps_for(T: float, dt: float) -> int:
    steps = int(round(T / dt))
    if steps < 1 or abs(steps * dt - T) > 1e-9 * max(1.0, T):
        raise ValueError(f"dt={dt} does not divide T={T}")
    return steps


def _march(data: InitialData, T: float, dt: float, *, apply_sources: bool,
           direct_n: bool, store_every: int, record_sources: bool,
           replay: list | None = None, kind: str) -> Trajectory:
    """Shared Strang march for every evolution flavour.

    apply_sources  -- kick with this trajectory's own midpoint products
    replay         -- kick with the given midpoint source list instead
                      (the linear solution map); overrides apply_sources
    direct_n       -- additionally evolve n directly with source lap(|E|^2)
                      and take the state's n from that integration
    """
    g = data.grid
    if not T + data.radius < g.length:
        raise ValueError(
            f"wrap-free window violated: T + R = {T + data.radius:.3g} "
            f">= L = {g.length:.3g}")
    steps = _steps_for(T, dt)
    if replay is not None and len(replay) != steps:
        raise ValueError(f"replay history has {len(replay)} steps, need {steps}")

    op_kg = LinearOperator(g, 1)
    op_w = LinearOperator(g, 0)
    mask = g.spectral["dealias_mask"]
    k_sq = g.spectral["k_sq"]

    # spectral state, dealiased once so quadratic products stay alias-free
    Eu = mask * g.rfft(data.E0.values)
    Eut = mask * g.rfft(data.E1.values)
    Du = mask * g.rfft(data.n0_delta.values)
    Dut = mask * g.rfft(data.n1_delta.values)
    Nu, Nut = (-k_sq * Du, -k_sq * Dut) if direct_n else (None, None)

    def snapshot(t: float) -> KGZState:
        E = FieldPair(Field(g, g.irfft(Eu)), Field(g, g.irfft(Eut)))
        nD = FieldPair(Field(g, g.irfft(Du)), Field(g, g.irfft(Dut)))
        if direct_n:
            n = FieldPair(Field(g, g.irfft(Nu)), Field(g, g.irfft(Nut)))
            resid = np.max(np.abs(laplacian(nD.u).values - n.u.values))
            scale = max(np.max(np.abs(n.u.values)), 1e-300)
            if resid > 1e-8 * scale and scale > 1e-13:
                raise InstabilityError(
                    f"divergence-form consistency lost at t={t:.6g}: "
                    f"|lap(nD) - n| = {resid:.3e} vs scale {scale:.3e}")
        else:
            n = FieldPair(Field(g, g.irfft(-k_sq * Du)),
                          Field(g, g.irfft(-k_sq * Dut)))
        return KGZState(E=E, n=n, n_delta=nD, t=t)

    def scale_now() -> float:
        vals = [np.max(np.abs(Eu)), np.max(np.abs(Eut)),
                np.max(np.abs(Du)), np.max(np.abs(Dut))]
        return float(max(vals))

    limit = 1e6 * (scale_now() + 1e-300)
    states = [snapshot(0.0)]
    times = [0.0]
    history = [] if record_sources else None
    source_times = []

    for k in range(steps):
        t = k * dt
        Eu, Eut = _free_step_hat(op_kg, Eu, Eut, 0.5 * dt)
        Du, Dut = _free_step_hat(op_w, Du, Dut, 0.5 * dt)
        if direct_n:
            Nu, Nut = _free_step_hat(op_w, Nu, Nut, 0.5 * dt)

        # midpoint products from the half-stepped positions
        if apply_sources or record_sources:
            E_mid = g.irfft(Eu)
            n_mid = g.irfft(Nu) if direct_n else g.irfft(-k_sq * Du)
            Q_hat = mask * g.rfft(-n_mid[0] * E_mid)
            S_hat = mask * g.rfft(np.sum(E_mid**2, axis=0)[None])
            if record_sources:
                history.append((Field(g, g.irfft(Q_hat)),
                                Field(g, g.irfft(S_hat))))
                source_times.append(t + 0.5 * dt)

        if replay is not None:
            Qk, Sk = replay[k]
            Eut = Eut + dt * (mask * g.rfft(Qk.values))
            Dut = Dut + dt * (mask * g.rfft(Sk.values))
        elif apply_sources:
            Eut = Eut + dt * Q_hat
            Dut = Dut + dt * S_hat
            if direct_n:
                Nut = Nut + dt * (-k_sq * S_hat)

        Eu, Eut = _free_step_hat(op_kg, Eu, Eut, 0.5 * dt)
        Du, Dut = _free_step_hat(op_w, Du, Dut, 0.5 * dt)
        if direct_n:
            Nu, Nut = _free_step_hat(op_w, Nu, Nut, 0.5 * dt)

        if scale_now() > limit:
            raise InstabilityError(
                f"evolution unstable at t={t + dt:.6g}: "
                "amplitude exceeded 1e6 x initial")
        if (k + 1) % store_every == 0 or k + 1 == steps:
            states.append(snapshot((k + 1) * dt))
            times.append((k + 1) * dt)

    if replay is not None:
        kick, mode = replay, "replay"
    elif apply_sources:
        kick, mode = history, "self"
    else:
        kick, mode = None, "none"
    return Trajectory(
        grid=g, dt=dt, store_every=store_every,
        times=np.asarray(times), states=states,
        source_times=np.asarray(source_times) if record_sources else None,
        source_history=history, kick_history=kick,
        source_mode=mode, kind=kind,
    )


def evolve(data: InitialData, T: float, dt: float, *, store_every: int = 1,
           record_sources: bool = True) -> Trajectory:
    """Nonlinear KGZ evolution in divergence form (n reconstructed as lap nD)."""
    return _march(data, T, dt, apply_sources=True, direct_n=False,
                  store_every=store_every, record_sources=record_sources,
                  kind="coupled")


def evolve_direct_n(data: InitialData, T: float, dt: float, *,
                    store_every: int = 1, record_sources: bool = True) -> Trajectory:
    """Same system with n evolved directly from -box(n) = lap(|E|^2)."""
    return _march(data, T, dt, apply_sources=True, direct_n=True,
                  store_every=store_every, record_sources=record_sources,
                  kind="direct")


def free_flow(data: InitialData, T: float, dt: float, *, store_every: int = 1,
              record_sources: bool = True) -> Trajectory:
    """Source-free flow of the same data; still records -nE and |E|^2."""
    return _march(data, T, dt, apply_sources=False, direct_n=False,
                  store_every=store_every, record_sources=record_sources,
                  kind="free")


# ---------------------------------------------------------------------------
# Picard solution mapping
# ---------------------------------------------------------------------------

class PicardNonConvergence(RuntimeError):
    def __init__(self, ratios, distances):
        self.ratios = list(ratios)
        self.distances = list(distances)
        super().__init__(
            f"Picard iteration did not converge: distances={distances}, "
            f"contraction ratios={ratios} (data may be outside the "
            "contraction regime)")


def picard_map(guess: Trajectory, data: InitialData) -> Trajectory:
    """One application of the solution mapping.

    Solves the linear system with sources (-phi*Psi, |Psi|^2) sampled along
    the guess (its recorded midpoint products) and the fixed initial data.
    The discrete nonlinear solution is an exact fixed point.
    """
    if guess.grid != data.grid:
        raise ValueError("guess and data live on different grids")
    if guess.store_every != 1 or guess.source_history is None:
        raise ValueError("picard_map needs a dense guess with recorded sources")
    out = _march(data, guess.t_end, guess.dt, apply_sources=False,
                 direct_n=False, store_every=1, record_sources=True,
                 replay=guess.source_history, kind="picard")
    # the iterate solves the linear system whose sources are the guess's
    # products; record them at snapshot times so jets are exact
    out.snapshot_sources = [_products_at(s) for s in guess.states]
    return out


def picard_solve(data: InitialData, T: float, dt: float, *,
                 max_iter: int = 12, tol: float = 1e-6):
    """Iterate the solution mapping from the free-flow guess to a fixed point.

    Returns (trajectory, contraction_ratios).  Distances between successive
    iterates are measured in the truncated discrete X-seminorm
    (energy_diag.xnorm_distance); ratios are successive distance quotients.
    Raises PicardNonConvergence with the ratio history when tol is not
    reached within max_iter iterations.
    """
    from .energy_diag import xnorm_distance

    if max_iter < 2:
        raise ValueError("max_iter must be >= 2")
    current = free_flow(data, T, dt)
    distances: list[float] = []
    ratios: list[float] = []
    for _ in range(max_iter):
        new = picard_map(current, data)
        d = xnorm_distance(new, current)
        if distances and distances[-1] > 0:
            ratios.append(d / distances[-1])
        distances.append(d)
        current = new
        if d < tol:
            return current, ratios
    raise PicardNonConvergence(ratios, distances)
