"""
Discrete Klainerman vector-field calculus on snapshot jets.

A jet holds a field together with enough time derivatives (u_t, and u_tt
supplied by the field's equation) to evaluate any word of length <= 2 over
the alphabet

    dt, d1, d2        translations
    rot               rotation  x1 d2 - x2 d1
    L1, L2            Lorentz boosts  x_a dt + t d_a

at a single time.  Spatial derivatives are spectral; time derivatives come
from the jet, never from differencing across snapshots.  The scaling field
t dt + r dr is deliberately absent.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .grid import Field, Grid

__all__ = [
    "LETTERS",
    "GammaWord",
    "JetField",
    "all_words",
    "apply_gamma",
    "apply_letters",
    "good_derivative",
    "check_commutators",
    "CommutatorReport",
]

LETTERS = ("dt", "d1", "d2", "rot", "L1", "L2")
MAX_ORDER = 2


@dataclass(frozen=True)
class GammaWord:
    """An ordered product of vector fields; letters[0] acts last (outermost)."""

    letters: tuple[str, ...]

    def __post_init__(self):
        for ell in self.letters:
            if ell not in LETTERS:
                raise ValueError(f"unknown vector field {ell!r}")
        if len(self.letters) > MAX_ORDER:
            raise ValueError(
                f"word order {len(self.letters)} exceeds the cap {MAX_ORDER}")

    @property
    def order(self) -> int:
        return len(self.letters)

    def time_budget(self) -> int:
        """Jet depth consumed: one unit per dt or boost letter."""
        return sum(1 for ell in self.letters if ell in ("dt", "L1", "L2"))


def all_words(max_order: int, letters: tuple[str, ...] = LETTERS) -> list[GammaWord]:
    """Every word with order <= max_order, identity first."""
    words = [GammaWord(())]
    for m in range(1, max_order + 1):
        words.extend(GammaWord(w) for w in itertools.product(letters, repeat=m))
    return words


@dataclass(frozen=True, eq=False)
class JetField:
    """Snapshot values u plus u_t and the equation-supplied u_tt.

    An optional third time derivative extends the budget for diagnostics
    that time-differentiate an order-2 word (e.g. energies of Gamma^I u).
    """

    grid: Grid
    t: float
    u: np.ndarray
    ut: np.ndarray
    utt: np.ndarray
    uttt: np.ndarray | None = None

    def __post_init__(self):
        for name in ("u", "ut", "utt", "uttt"):
            arr = getattr(self, name)
            if arr is None:
                continue
            arr = np.asarray(arr, dtype=np.float64)
            if arr.ndim == 2:
                arr = arr[None]
            if arr.shape != ((arr.shape[0],) + (self.grid.n, self.grid.n)):
                raise ValueError(f"bad jet array shape {arr.shape}")
            object.__setattr__(self, name, arr)
        shapes = {self.u.shape, self.ut.shape, self.utt.shape}
        if self.uttt is not None:
            shapes.add(self.uttt.shape)
        if len(shapes) != 1:
            raise ValueError("jet levels must share one shape")

    @property
    def components(self) -> int:
        return self.u.shape[0]

    def levels(self) -> list[np.ndarray]:
        if self.uttt is None:
            return [self.u, self.ut, self.utt]
        return [self.u, self.ut, self.utt, self.uttt]


def _dx(grid: Grid, arr: np.ndarray, axis: int) -> np.ndarray:
    mult = grid.spectral["d1" if axis == 1 else "d2"]
    return grid.irfft(mult * grid.rfft(arr))


def _apply_letter(grid: Grid, t: float, levels: list[np.ndarray], letter: str):
    """Push one vector field through a jet level stack.

    Level j of the result is the j-th time derivative of (letter applied to
    the base field); dt and boosts consume one level of depth, the purely
    spatial letters preserve it.
    """
    if letter == "dt":
        if len(levels) < 2:
            raise ValueError("jet depth exhausted applying dt")
        return levels[1:]
    if letter in ("d1", "d2"):
        axis = 1 if letter == "d1" else 2
        return [_dx(grid, lv, axis) for lv in levels]
    if letter == "rot":
        x1, x2 = grid.X1, grid.X2
        return [x1 * _dx(grid, lv, 2) - x2 * _dx(grid, lv, 1) for lv in levels]
    if letter in ("L1", "L2"):
        if len(levels) < 2:
            raise ValueError("jet depth exhausted applying a boost")
        axis = 1 if letter == "L1" else 2
        xa = grid.X1 if axis == 1 else grid.X2
        out = []
        for j in range(len(levels) - 1):
            val = xa * levels[j + 1] + t * _dx(grid, levels[j], axis)
            if j >= 1:
                val = val + j * _dx(grid, levels[j - 1], axis)
            out.append(val)
        return out
    raise ValueError(f"unknown vector field {letter!r}")


def apply_letters(letters: tuple[str, ...], jet: JetField,
                  t: float | None = None) -> Field:
    """Apply a raw letter sequence to a jet, right to left (no order cap).

    Raises when the sequence consumes more time derivatives than the jet
    provides.
    """
    budget = sum(1 for ell in letters if ell in ("dt", "L1", "L2"))
    if budget > len(jet.levels()) - 1:
        raise ValueError(f"letters {letters} exceed the jet's derivative budget")
    tv = jet.t if t is None else t
    levels = jet.levels()
    for letter in reversed(letters):
        levels = _apply_letter(jet.grid, tv, levels, letter)
    return Field(jet.grid, levels[0])


def apply_gamma(word: GammaWord, jet: JetField, t: float | None = None) -> Field:
    """Evaluate a Gamma word on a jet; letters apply right to left."""
    return apply_letters(word.letters, jet, t)


def good_derivative(a: int, jet: JetField) -> Field:
    """G_a u = (x_a / r) u_t + d_a u, with r regularised to sqrt(r^2 + h^2).

    The regularisation perturbs only the cells next to the origin, where the
    exact prefactor x_a/r is direction-ambiguous.
    """
    g = jet.grid
    if a not in (1, 2):
        raise ValueError(f"axis must be 1 or 2, got {a}")
    xa = g.X1 if a == 1 else g.X2
    r_reg = np.sqrt(g.R**2 + g.h**2)
    return Field(g, (xa / r_reg) * jet.ut + _dx(g, jet.u, a))


@dataclass(frozen=True)
class CommutatorReport:
    """Max-norm commutator residuals, normalised by the jet's field scale."""

    residuals: dict
    scale: float

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values())

    def max_relative(self) -> float:
        return self.max_residual / self.scale if self.scale > 0 else 0.0


def check_commutators(jet: JetField) -> CommutatorReport:
    """Residuals of the first-order commutator identities.

    Checks [dt, L_b] = d_b, [d_a, L_b] = delta_ab dt, [dt, rot] = 0,
    [d1, rot] = d2 and [d2, rot] = -d1, each evaluated as
    |Gamma_1 Gamma_2 u - Gamma_2 Gamma_1 u - expected| in max norm.
    Fields should be effectively supported inside the box (box emulation of
    the plane), otherwise boundary jumps of x_a * u pollute the spectra.
    """
    def word(*letters):
        return apply_gamma(GammaWord(letters), jet).values

    def comm(a: str, b: str) -> np.ndarray:
        return word(a, b) - word(b, a)

    residuals = {}
    for b, db in (("L1", "d1"), ("L2", "d2")):
        residuals[f"[dt,{b}]-{db}"] = float(
            np.max(np.abs(comm("dt", b) - word(db))))
    for a, da in (("L1", "d1"), ("L2", "d2")):
        for bname, db in (("d1", "d1"), ("d2", "d2")):
            expected = word("dt") if da == db else 0.0
            residuals[f"[{db},{a}]" + ("-dt" if da == db else "")] = float(
                np.max(np.abs(comm(db, a) - expected)))
    residuals["[dt,rot]"] = float(np.max(np.abs(comm("dt", "rot"))))
    residuals["[d1,rot]-d2"] = float(np.max(np.abs(comm("d1", "rot") - word("d2"))))
    residuals["[d2,rot]+d1"] = float(np.max(np.abs(comm("d2", "rot") + word("d1"))))

    scale = float(max(np.max(np.abs(jet.u)), np.max(np.abs(jet.ut)),
                      np.max(np.abs(jet.utt)), 1e-300))
    return CommutatorReport(residuals, scale)
