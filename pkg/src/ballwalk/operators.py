"""Discrete representations of the ball-average operator and its relatives.

Four operators on a truncated uniform grid:

  * T-bar, the plain ball average: banded quadrature scheme or periodic
    Fourier-multiplier scheme,
  * T-tilde = D_a T-bar D_a, the symmetric conjugation by the weight a_h,
  * T, the Markov form (row-stochastic, similar to T-tilde),
  * L = -d^2/dx^2 + V, the Schrodinger comparison operator (positive
    Laplacian sign convention), second-order stencil with Dirichlet walls.

Grid nodes are cell centers, x_i = -L + (i + 1/2) delta. The banded scheme
restricts the infinite banded matrix to the box (zero extension); the
multiplier scheme works on the periodic box and tapers the conjugation
weight to zero inside a buffer strip so wrap-around never sees mass.

Banded stencil. Interior cells get weight delta; the two outermost cells
on each side get the pair (u, v) fixed by matching the mass 2h and second
moment 2h^3/3 of the exact kernel. Plain cell-overlap edge weights carry
an O(delta^2/h^2) second-moment error, which shifts eigenvalues by more
than the cross-scheme budget; the matched pair removes the theta^2 symbol
error entirely, leaving O(theta^4).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .densities import ball_mass, ball_mass_grid, eval_density, eval_potential
from .errors import ConfigError, KernelUnderResolved, NumericalError
from .multiplier import eval_Gd, unit_ball_volume

BANDED = "banded"
MULTIPLIER = "multiplier"


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centered grid on [-L, L]^d with N cells per axis."""

    dim: int
    L: float
    N: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ConfigError(f"grid dim must be 1 or 2, got {self.dim}")
        if self.N < 8 or self.N % 2 != 0:
            raise ConfigError("N must be even and at least 8")
        if not (self.L > 0):
            raise ConfigError("L must be positive")

    @property
    def delta(self):
        return 2.0 * self.L / self.N

    def axis_nodes(self):
        return -self.L + (np.arange(self.N) + 0.5) * self.delta

    def nodes(self):
        """Node coordinates; (N,) for d=1, (N^2, 2) row-major for d=2."""
        x = self.axis_nodes()
        if self.dim == 1:
            return x
        X, Y = np.meshgrid(x, x, indexing="ij")
        return np.column_stack([X.ravel(), Y.ravel()])

    @property
    def size(self):
        return self.N**self.dim

    def interior_mask(self, h):
        """Nodes farther than h from every box wall."""
        x = self.axis_nodes()
        ax = np.abs(x) < self.L - h
        if self.dim == 1:
            return ax
        return np.outer(ax, ax).ravel()

    def truncation_ratio(self, density):
        """rho at the wall relative to the center; < 1e-12 is the usual gate.

        Not enforced at construction: the essential-band check deliberately
        runs in a tight box (the walls push the core state up, which is the
        conservative direction there), so the gate belongs to the analyses
        that rely on eigenfunction decay.
        """
        wall = self.L if self.dim == 1 else np.array([self.L, 0.0])
        zero = 0.0 if self.dim == 1 else np.zeros(2)
        return float(eval_density(density, wall) / eval_density(density, zero))


def band_weights(h, delta):
    """One-sided stencil weights c_0..c_K for the d=1 ball kernel.

    c_m = delta for m <= K-2; the edge pair (c_{K-1}, c_K) matches mass
    and second moment of 1_{|t|<h} dt exactly. K is the largest integer
    with K delta < h, so every weight multiplies a cell with |x_j - x_i|
    strictly inside the ball.
    """
    K = int(math.floor(h / delta))
    if K * delta >= h:
        K -= 1
    if K < 2:
        raise KernelUnderResolved(f"h={h} needs at least 3 cells per radius, delta={delta}")
    c = np.full(K + 1, delta)
    mass = h - (K - 1.5) * delta  # u + v
    m2 = (h**3 / 3.0 - delta**3 * np.sum(np.arange(1, K - 1, dtype=float) ** 2)) / delta**2
    # solve u (K-1)^2 + v K^2 = m2 with u + v = mass
    u = (mass * K * K - m2) / (2.0 * K - 1.0)
    v = mass - u
    if u <= 0 or v <= 0:
        raise NumericalError(f"edge weights not positive at h/delta={h/delta}")
    c[K - 1] = u
    c[K] = v
    return c


def _require_resolved(grid, h):
    if h < 3.0 * grid.delta:
        raise KernelUnderResolved(
            f"h={h} < 3 delta={3 * grid.delta}: ball kernel under-resolved"
        )


def _smootherstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (t * (6.0 * t - 15.0) + 10.0)


def taper_profile(grid, h, alpha):
    """Multiplier-scheme wall taper: 1 in the bulk, smooth drop to 0 over a
    buffer strip of width max(5h, 5/sqrt(alpha)) at each wall."""
    buf = max(5.0 * h, 5.0 / math.sqrt(alpha))
    if buf >= grid.L:
        raise ConfigError(f"box half-width {grid.L} smaller than taper buffer {buf}")
    x = grid.axis_nodes()
    prof = _smootherstep((grid.L - np.abs(x)) / buf)
    if grid.dim == 1:
        return prof
    return np.outer(prof, prof).ravel()


@dataclass
class DiscreteOperator:
    """Grid operator in one of the two schemes.

    banded: y = lscale * conv(rscale * u, stencil); the stencil is the
    one-sided c array mirrored, scale factors fold in 1/(alpha_d h^d) and
    the conjugation weights.
    multiplier: y = weight * idft(symbol * dft(weight * u)) on the
    periodic box (weight absent for the plain ball average).
    """

    scheme: str
    kind: str  # ball_average | conjugated | markov
    grid: Grid
    h: float
    symmetric: bool
    stencil: np.ndarray = None
    lscale: np.ndarray = None
    rscale: np.ndarray = None
    symbol: np.ndarray = None
    weight: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def matvec(self, u):
        u = np.asarray(u, dtype=float)
        if u.shape != (self.grid.size,):
            raise ValueError(f"expected vector of length {self.grid.size}")
        if self.scheme == BANDED:
            w = u if self.rscale is None else self.rscale * u
            full = np.concatenate([self.stencil[:0:-1], self.stencil])
            y = np.convolve(w, full, mode="same")
            return y if self.lscale is None else self.lscale * y
        w = u if self.weight is None else self.weight * u
        if self.grid.dim == 1:
            y = np.fft.irfft(np.fft.rfft(w) * self.symbol, n=self.grid.N)
        else:
            W = w.reshape(self.grid.N, self.grid.N)
            y = np.fft.irfft2(np.fft.rfft2(W) * self.symbol, s=(self.grid.N, self.grid.N)).ravel()
        return y if self.weight is None else self.weight * y

    def to_dense(self):
        n = self.grid.size
        if n > 4096:
            raise NumericalError(f"refusing dense assembly at N={n}")
        if self.scheme == BANDED:
            c = self.stencil
            A = np.zeros((n, n))
            idx = np.arange(n)
            for m in range(len(c)):
                A[idx[: n - m], idx[: n - m] + m] = c[m]
                A[idx[: n - m] + m, idx[: n - m]] = c[m]
            if self.rscale is not None:
                A = A * self.rscale[None, :]
            if self.lscale is not None:
                A = A * self.lscale[:, None]
            return A
        if self.grid.dim != 1:
            raise NumericalError("dense assembly of the 2-D multiplier scheme is not supported")
        # circulant kernel from the symbol, then the diagonal conjugation
        kernel = np.fft.irfft(self.symbol, n=self.grid.N)
        j = np.arange(n)
        C = kernel[(j[None, :] - j[:, None]) % n]
        if self.weight is None:
            return C
        return self.weight[:, None] * C * self.weight[None, :]

    def to_banded(self):
        """Symmetric banded storage bands[k, i] = A[i, i+k], k = 0..K."""
        if self.scheme != BANDED or not self.symmetric:
            raise NumericalError("banded storage needs the symmetric banded scheme")
        c = self.stencil
        n = self.grid.size
        K = len(c) - 1
        bands = np.zeros((K + 1, n))
        s = np.ones(n) if self.lscale is None else self.lscale
        for k in range(K + 1):
            bands[k, : n - k] = c[k] * s[: n - k] * s[k:] if k else c[0] * s * s
        return bands


def _multiplier_symbol(grid, h, d):
    if d == 1:
        xi = 2.0 * math.pi * np.fft.rfftfreq(grid.N, grid.delta)
        return eval_Gd(1, h * xi)
    kx = 2.0 * math.pi * np.fft.fftfreq(grid.N, grid.delta)
    ky = 2.0 * math.pi * np.fft.rfftfreq(grid.N, grid.delta)
    r = h * np.sqrt(kx[:, None] ** 2 + ky[None, :] ** 2)
    return eval_Gd(2, r)


def build_ball_average(grid, h, scheme=MULTIPLIER):
    """Plain ball average T-bar (no density attached)."""
    _require_resolved(grid, h)
    if scheme == BANDED:
        if grid.dim != 1:
            raise ConfigError("banded scheme is implemented for d = 1")
        c = band_weights(h, grid.delta)
        s = np.full(grid.size, 1.0 / math.sqrt(2.0 * h))
        return DiscreteOperator(BANDED, "ball_average", grid, h, True,
                                stencil=c, lscale=s, rscale=s)
    if scheme != MULTIPLIER:
        raise ConfigError(f"unknown scheme {scheme!r}")
    sym = _multiplier_symbol(grid, h, grid.dim)
    return DiscreteOperator(MULTIPLIER, "ball_average", grid, h, True, symbol=sym)


def discrete_mass(grid, density, h):
    """Stencil-consistent ball mass: m_i = sum_m c_m rho(x_i + m delta).

    rho is evaluated off-grid past the walls, so rows near the boundary
    see the true one-sided mass rather than an artificial cliff.
    """
    if grid.dim != 1:
        raise ConfigError("discrete mass is a d=1 banded-scheme notion")
    c = band_weights(h, grid.delta)
    x = grid.axis_nodes()
    K = len(c) - 1
    m = c[0] * eval_density(density, x)
    for k in range(1, K + 1):
        m = m + c[k] * (
            eval_density(density, x + k * grid.delta)
            + eval_density(density, x - k * grid.delta)
        )
    return m


def build_conjugated(grid, density, h, scheme=MULTIPLIER, mass_mode="discrete"):
    """Symmetric conjugated operator T-tilde = D_a T-bar D_a.

    mass_mode picks the a_h samples for the banded scheme: "discrete" uses
    the stencil-consistent mass (making the similarity to the Markov form
    exact in floating point), "quadrature" uses the continuum ball mass
    (used when comparing against the multiplier scheme, which has no
    stencil). The multiplier scheme always uses quadrature mass and tapers
    a to zero at the walls.
    """
    if density.dim != grid.dim:
        raise ConfigError("grid and density dimension mismatch")
    _require_resolved(grid, h)
    vol = unit_ball_volume(grid.dim) * h**grid.dim
    x = grid.nodes()
    rho = eval_density(density, x)
    if scheme == BANDED:
        if grid.dim != 1:
            raise ConfigError("banded scheme is implemented for d = 1")
        if mass_mode == "discrete":
            m = discrete_mass(grid, density, h)
        elif mass_mode == "quadrature":
            m = ball_mass_grid(density, x, h)
        else:
            raise ConfigError(f"unknown mass_mode {mass_mode!r}")
        a = np.sqrt(vol * rho / m)
        c = band_weights(h, grid.delta)
        s = a / math.sqrt(2.0 * h)  # split the 1/(2h) across both factors
        op = DiscreteOperator(BANDED, "conjugated", grid, h, True,
                              stencil=c, lscale=s, rscale=s)
        op.meta["a"] = a
        op.meta["mass"] = m
        op.meta["density"] = density
        op.meta["mass_mode"] = mass_mode
        return op
    if scheme != MULTIPLIER:
        raise ConfigError(f"unknown scheme {scheme!r}")
    if grid.dim == 1:
        m = ball_mass_grid(density, x, h)
    else:
        m = np.array([ball_mass(density, p, h) for p in x])
    a = np.sqrt(vol * rho / m) * taper_profile(grid, h, density.alpha)
    sym = _multiplier_symbol(grid, h, grid.dim)
    op = DiscreteOperator(MULTIPLIER, "conjugated", grid, h, True,
                          symbol=sym, weight=a)
    op.meta["a"] = a
    op.meta["mass"] = m
    op.meta["density"] = density
    return op


def build_markov(grid, density, h):
    """Markov form T (banded, non-symmetric): row i averages against
    rho over the ball, normalized by the stencil-consistent mass.

    Exactly similar to the mass_mode="discrete" conjugated operator via
    the diagonal (rho * m)^{-1/2}, so their spectra coincide in floating
    point; nu proportional to rho * m is the stationary row vector.
    """
    if grid.dim != 1 or density.dim != 1:
        raise ConfigError("the Markov form is implemented for d = 1")
    _require_resolved(grid, h)
    c = band_weights(h, grid.delta)
    x = grid.axis_nodes()
    rho = eval_density(density, x)
    m = discrete_mass(grid, density, h)
    op = DiscreteOperator(BANDED, "markov", grid, h, False,
                          stencil=c, lscale=1.0 / m, rscale=rho)
    op.meta["mass"] = m
    op.meta["rho"] = rho
    op.meta["stationary"] = rho * m / np.sum(rho * m)
    op.meta["density"] = density
    return op


# ---------------------------------------------------------------------------
# Schrodinger comparison operator

@dataclass
class SchrodingerOperator:
    """L = -Laplacian + V, second-order stencil, Dirichlet walls.

    bands[k, i] = A[i, i+k]; d=1 has k in {0, 1}, d=2 (row-major grid)
    k in {0, 1, N}.
    """

    grid: Grid
    potential: np.ndarray
    bands: np.ndarray
    offsets: tuple

    def matvec(self, u):
        u = np.asarray(u, dtype=float)
        y = self.bands[0] * u
        for row, k in zip(self.bands[1:], self.offsets[1:]):
            y[: -k] += row[: u.size - k] * u[k:]
            y[k:] += row[: u.size - k] * u[: -k]
        return y

    def to_dense(self):
        n = self.grid.size
        if n > 4096:
            raise NumericalError(f"refusing dense assembly at N={n}")
        A = np.diag(self.bands[0])
        i = np.arange(n)
        for row, k in zip(self.bands[1:], self.offsets[1:]):
            A[i[: n - k], i[: n - k] + k] = row[: n - k]
            A[i[: n - k] + k, i[: n - k]] = row[: n - k]
        return A


def build_schrodinger(grid, density):
    x = grid.nodes()
    V = np.asarray(eval_potential(density, x), dtype=float)
    if not np.all(np.isfinite(V)):
        raise NumericalError("potential not finite on the grid")
    d2 = grid.delta**2
    n = grid.size
    if grid.dim == 1:
        bands = np.zeros((2, n))
        bands[0] = 2.0 / d2 + V
        bands[1, : n - 1] = -1.0 / d2
        return SchrodingerOperator(grid, V, bands, (0, 1))
    N = grid.N
    bands = np.zeros((3, n))
    bands[0] = 4.0 / d2 + V
    bands[1, : n - 1] = -1.0 / d2
    bands[1, N - 1 :: N] = 0.0  # no coupling across row ends
    bands[2, : n - N] = -1.0 / d2
    return SchrodingerOperator(grid, V, bands, (0, 1, N))


# ---------------------------------------------------------------------------
# on-disk banded format

_BANDED_MAGIC = "ballwalk-banded v1"


def write_banded(op, path):
    """Text export of a symmetric banded operator (regression format).

    Header line with the geometry, then one line per band, %.17g entries
    (lossless for binary64 round trips).
    """
    bands = op.to_banded() if isinstance(op, DiscreteOperator) else op.bands
    grid, h = op.grid, getattr(op, "h", 0.0)
    scheme = op.scheme if isinstance(op, DiscreteOperator) else "schrodinger"
    with open(path, "w") as f:
        f.write(
            f"# {_BANDED_MAGIC} d={grid.dim} N={grid.N} L={grid.L!r} "
            f"h={h!r} scheme={scheme} rows={bands.shape[0]}\n"
        )
        for row in bands:
            f.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def read_banded(path):
    with open(path) as f:
        header = f.readline()
        if _BANDED_MAGIC not in header:
            raise ConfigError(f"{path}: not a banded operator file")
        fields = dict(
            kv.split("=", 1) for kv in header.split("#", 1)[1].split()[2:]
        )
        bands = np.loadtxt(f, ndmin=2)
    meta = {
        "d": int(fields["d"]),
        "N": int(fields["N"]),
        "L": float(fields["L"]),
        "h": float(fields["h"]),
        "scheme": fields["scheme"],
    }
    if bands.shape != (int(fields["rows"]), meta["N"] ** meta["d"]):
        raise ConfigError(f"{path}: band shape mismatch")
    return meta, bands
