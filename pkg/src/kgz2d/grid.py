"""
Periodic spectral grid for the square box [-L, L)^2 and the differential
calculus built on it: Laplacian, first derivatives, Sobolev norms, 2/3-rule
dealiasing and the binary field-dump format.

The box emulates R^2: both the wave and the Klein-Gordon operator propagate
at speed <= 1, so runs that keep t_max + data_radius < L never see their own
wrap-around inside the observation window.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Grid",
    "Field",
    "FieldPair",
    "make_grid",
    "laplacian",
    "partial",
    "dealias",
    "dealiased_product",
    "l2_norm",
    "h_norm",
    "sobolev_norm",
    "SobolevNorms",
    "write_field",
    "read_field",
]


@dataclass(frozen=True)
class Grid:
    """Square periodic grid: n points per axis on [-L, L), spacing h = 2L/n.

    Wavenumbers are the angular frequencies pi*j/L for j in the symmetric
    integer range [-n/2, n/2), stored in FFT order.  All derived arrays are
    precomputed once; instances are immutable and safe to share.
    """

    n: int
    length: float

    h: float = field(init=False, compare=False)
    cell_area: float = field(init=False, compare=False)
    xs: np.ndarray = field(init=False, repr=False, compare=False)
    k1: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n < 8 or self.n % 2 != 0:
            raise ValueError(f"points_per_axis must be even and >= 8, got {self.n}")
        if not self.length > 0:
            raise ValueError(f"box half-width must be positive, got {self.length}")
        h = 2.0 * self.length / self.n
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "cell_area", h * h)
        object.__setattr__(self, "xs", -self.length + h * np.arange(self.n))
        # 2*pi*fftfreq(n, d=h) == pi*j/L for j in [-n/2, n/2), FFT ordered
        object.__setattr__(self, "k1", 2.0 * np.pi * np.fft.fftfreq(self.n, d=h))

    # -- cached spectral machinery (built lazily, stored on the instance) --

    def _build(self):
        kx = self.k1[:, None]                       # (n, 1), axis 0 = x1
        kr = self.k1[: self.n // 2 + 1].copy()      # rfft frequencies along x2
        kr[-1] = abs(self.k1[self.n // 2])          # Nyquist, positive sign
        ky = kr[None, :]                            # (1, n//2+1)
        k_sq = kx**2 + ky**2
        kmax = np.pi / self.h
        # first-derivative multipliers: Nyquist zeroed (sign-ambiguous mode)
        d1 = 1j * np.where(np.abs(kx) < kmax - 1e-12, kx, 0.0) + 0.0 * ky
        d2 = 1j * np.where(np.abs(ky) < kmax - 1e-12, ky, 0.0) + 0.0 * kx
        cut = (2.0 / 3.0) * kmax
        mask = (np.abs(kx) <= cut + 1e-12) & (np.abs(ky) <= cut + 1e-12)
        X1, X2 = np.meshgrid(self.xs, self.xs, indexing="ij")
        cache = {
            "k_sq": k_sq, "d1": d1, "d2": d2, "dealias_mask": mask,
            "X1": X1, "X2": X2, "R": np.sqrt(X1**2 + X2**2),
        }
        object.__setattr__(self, "_cache", cache)
        return cache

    @property
    def spectral(self) -> dict:
        return getattr(self, "_cache", None) or self._build()

    @property
    def X1(self) -> np.ndarray:
        return self.spectral["X1"]

    @property
    def X2(self) -> np.ndarray:
        return self.spectral["X2"]

    @property
    def R(self) -> np.ndarray:
        return self.spectral["R"]

    def rfft(self, values: np.ndarray) -> np.ndarray:
        return np.fft.rfft2(values, axes=(-2, -1))

    def irfft(self, hat: np.ndarray) -> np.ndarray:
        return np.fft.irfft2(hat, s=(self.n, self.n), axes=(-2, -1))


def make_grid(points_per_axis: int, length: float) -> Grid:
    """Build a grid; rejects odd or tiny sizes and nonpositive boxes."""
    return Grid(points_per_axis, float(length))


@dataclass(frozen=True, eq=False)
class Field:
    """Real scalar (1 component) or R^2-valued (2 components) grid samples.

    values has shape (components, n, n) with axes (component, x1, x2).
    """

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim == 2:
            v = v[None]
        if v.ndim != 3 or v.shape[1:] != (self.grid.n, self.grid.n):
            raise ValueError(f"bad field shape {v.shape} for n={self.grid.n}")
        if v.shape[0] not in (1, 2):
            raise ValueError(f"component count must be 1 or 2, got {v.shape[0]}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field contains non-finite values")
        object.__setattr__(self, "values", v)

    @property
    def components(self) -> int:
        return self.values.shape[0]

    def __add__(self, other: "Field") -> "Field":
        return Field(self.grid, self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        return Field(self.grid, self.values - other.values)

    def __mul__(self, a: float) -> "Field":
        return Field(self.grid, self.values * a)

    __rmul__ = __mul__

    def __neg__(self) -> "Field":
        return Field(self.grid, -self.values)

    def abs_max(self) -> float:
        return float(np.max(np.abs(self.values)))

    def magnitude(self) -> np.ndarray:
        """Pointwise Euclidean norm over components, shape (n, n)."""
        if self.components == 1:
            return np.abs(self.values[0])
        return np.sqrt(self.values[0] ** 2 + self.values[1] ** 2)


@dataclass(frozen=True, eq=False)
class FieldPair:
    """A field together with its time derivative (position/velocity)."""

    u: Field
    ut: Field

    def __post_init__(self):
        if self.u.grid is not self.ut.grid and self.u.grid != self.ut.grid:
            raise ValueError("u and ut live on different grids")
        if self.u.components != self.ut.components:
            raise ValueError("u and ut have different component counts")

    @property
    def grid(self) -> Grid:
        return self.u.grid

    def __sub__(self, other: "FieldPair") -> "FieldPair":
        return FieldPair(self.u - other.u, self.ut - other.ut)


def zero_field(grid: Grid, components: int = 1) -> Field:
    return Field(grid, np.zeros((components, grid.n, grid.n)))


def zero_pair(grid: Grid, components: int = 1) -> FieldPair:
    return FieldPair(zero_field(grid, components), zero_field(grid, components))


# ---------------------------------------------------------------------------
# spectral calculus
# ---------------------------------------------------------------------------

def laplacian(f: Field) -> Field:
    """Spectral Laplacian: mode (k1, k2) multiplied by -(k1^2 + k2^2)."""
    g = f.grid
    hat = g.rfft(f.values)
    return Field(g, g.irfft(-g.spectral["k_sq"] * hat))


def partial(f: Field, axis: int) -> Field:
    """Spectral first derivative along axis 1 or 2."""
    g = f.grid
    if axis not in (1, 2):
        raise ValueError(f"axis must be 1 or 2, got {axis}")
    mult = g.spectral["d1" if axis == 1 else "d2"]
    return Field(g, g.irfft(mult * g.rfft(f.values)))


def dealias(f: Field) -> Field:
    """Zero every mode above the 2/3 cutoff in either wavenumber component."""
    g = f.grid
    return Field(g, g.irfft(g.spectral["dealias_mask"] * g.rfft(f.values)))


def dealiased_product(f: Field, g_field: Field) -> Field:
    """Pointwise product of a scalar with a field, 2/3-rule truncated.

    Both factors are assumed band-limited to the 2/3 ball (the solvers keep
    them there); the product is truncated so the quadratic term stays
    alias-free.
    """
    if f.components != 1:
        raise ValueError("first factor must be scalar")
    prod = Field(f.grid, f.values[0] * g_field.values)
    return dealias(prod)


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------

def bump_window(grid: Grid, radius: float) -> np.ndarray:
    """Smooth radial window exp(-(r/radius)^4), ~1 inside, ~1e-15 by 2.4r.

    Used to embed constructions with unbounded coefficients (x_a u and
    friends) in the periodic box: the windowed field vanishes at the wrap
    boundary to near round-off while staying analytic, so spectral
    derivatives remain accurate.
    """
    return np.exp(-((grid.R / radius) ** 4))


def l2_norm(f: Field) -> float:
    """Grid-quadrature L^2 norm, cell-area weighted."""
    return float(np.sqrt(np.sum(f.values**2) * f.grid.cell_area))


def h_norm(f: Field, s: float) -> float:
    """Spectral Sobolev norm: sum over modes of (1+|k|^2)^s |u_hat|^2.

    Normalised so h_norm(f, 0) equals the grid L^2 norm (Parseval).
    """
    if s < 0:
        raise ValueError(f"Sobolev index must be >= 0, got {s}")
    g = f.grid
    hat = np.fft.fft2(f.values, axes=(-2, -1))
    kx = g.k1[:, None]
    ky = g.k1[None, :]
    weight = (1.0 + kx**2 + ky**2) ** s
    total = np.sum(weight * np.abs(hat) ** 2)
    return float(np.sqrt(total * g.cell_area / g.n**2))


@dataclass(frozen=True)
class SobolevNorms:
    """H^s report for a pair: ||u||_{H^s} and ||ut||_{H^{s-1}}."""

    s: float
    u: float
    ut: float

    @property
    def total(self) -> float:
        return self.u + self.ut


def sobolev_norm(p: FieldPair, s: float):
    """H^s norm of a pair.

    For s >= 1 returns a SobolevNorms report (||u||_{H^s}, ||ut||_{H^{s-1}});
    for 0 <= s < 1 returns ||u||_{H^s} alone.
    """
    if s < 0:
        raise ValueError(f"Sobolev index must be >= 0, got {s}")
    if s >= 1:
        return SobolevNorms(s, h_norm(p.u, s), h_norm(p.ut, s - 1.0))
    return h_norm(p.u, s)


# ---------------------------------------------------------------------------
# binary dump format
# ---------------------------------------------------------------------------
# One ASCII header line `kgzfield v1 <components> <points_per_axis> <L> <t>\n`
# followed by little-endian float64, row-major over (component, x2, x1).

def write_field(path, f: Field, t: float = 0.0) -> None:
    header = (
        f"kgzfield v1 {f.components} {f.grid.n} "
        f"{f.grid.length!r} {float(t)!r}\n"
    )
    data = np.ascontiguousarray(
        np.swapaxes(f.values, 1, 2), dtype="<f8"
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(data.tobytes())


def read_field(path, grid: Grid | None = None) -> tuple[Field, float]:
    """Read a dumped field; returns (field, t).  Builds the grid if absent."""
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii")
        parts = header.split()
        if len(parts) != 6 or parts[0] != "kgzfield" or parts[1] != "v1":
            raise ValueError(f"not a kgzfield v1 dump: {header!r}")
        comps, n = int(parts[2]), int(parts[3])
        length, t = float(parts[4]), float(parts[5])
        raw = fh.read(comps * n * n * 8)
    if grid is None:
        grid = make_grid(n, length)
    elif grid.n != n or grid.length != length:
        raise ValueError("dump does not match the supplied grid")
    data = np.frombuffer(raw, dtype="<f8").reshape(comps, n, n)
    return Field(grid, np.swapaxes(data, 1, 2).copy()), t
