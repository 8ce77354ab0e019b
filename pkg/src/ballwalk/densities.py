"""Density families and the derived quantities the walk analysis needs.

Two families, both radial:

  * gaussian:  rho(x) = (alpha/pi)^{d/2} exp(-alpha |x|^2),  d in {1, 2}
  * tempered:  rho(x) = beta exp(-alpha s(|x|)),  d = 1, where s(u) = u for
    u >= R and an even quartic on [-R, R] chosen so s is C^2 at the joints
    (s(R) = R, s'(R) = 1, s''(R) = 0) with a single smooth bump at 0.

Derived quantities: the Schrodinger potential V = (Delta rho)/rho, the ball
mass m_h(x) = integral of rho over the radius-h ball at x, the conjugation
weight a_h = (alpha_d h^d rho / m_h)^{1/2}, and the tail constants kappa
(liminf of V) and A_h (limsup of a_h^2).

For the tempered tail the mass integral is elementary,
m_h(x) = rho(x) * 2 sinh(alpha h)/alpha for |x| >= R + h, which makes
A_h = alpha h / sinh(alpha h) exact rather than a probe estimate.
"""

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import erfc, i0e

from .errors import ConfigError, ProbeInsideCore, QuadratureNotConverged
from .multiplier import gamma_d, unit_ball_volume

GAUSSIAN = "gaussian"
TEMPERED = "tempered"

MASS_RTOL = 1e-10


@dataclass(frozen=True)
class Density:
    """Immutable density model. Build through make_density."""

    kind: str
    dim: int
    alpha: float
    R: float  # tempered transition radius; 0.0 for gaussian
    beta: float  # normalization, integral of rho is 1


def make_density(kind, dim, alpha, R=None):
    if kind not in (GAUSSIAN, TEMPERED):
        raise ConfigError(f"unknown density kind {kind!r}")
    if dim not in (1, 2):
        raise ConfigError(f"dim must be 1 or 2, got {dim!r}")
    if not (alpha > 0):
        raise ConfigError(f"alpha must be positive, got {alpha!r}")
    if kind == GAUSSIAN:
        if R is not None and R != 0.0:
            raise ConfigError("gaussian density takes no transition radius R")
        beta = (alpha / math.pi) ** (dim / 2.0)
        return Density(GAUSSIAN, dim, float(alpha), 0.0, beta)
    # tempered
    if dim != 1:
        raise ConfigError("tempered density is implemented for d = 1 only")
    if R is None or not (R > 0):
        raise ConfigError("tempered density needs a transition radius R > 0")
    beta = 1.0 / _tempered_norm_integral(float(alpha), float(R))
    dens = Density(TEMPERED, 1, float(alpha), float(R), beta)
    # construction self-check: the tail potential must sit at alpha^2
    for u in (R + 1.0, 2.0 * R + 5.0):
        if abs(eval_potential(dens, u) - alpha * alpha) > 1e-3:
            raise ConfigError("tempered tail potential failed the alpha^2 check")
    return dens


# ---------------------------------------------------------------------------
# smooth core of the tempered exponent

def _s(R, u):
    """Even C^2 exponent: s(u) = |u| outside [-R, R], quartic inside."""
    u = np.abs(u)
    core = 3.0 * R / 8.0 + 3.0 * u * u / (4.0 * R) - u**4 / (8.0 * R**3)
    return np.where(u >= R, u, core)


def _ds(R, u):
    sign = np.sign(u)
    u = np.abs(u)
    core = 3.0 * u / (2.0 * R) - u**3 / (2.0 * R**3)
    return sign * np.where(u >= R, 1.0, core)


def _d2s(R, u):
    u = np.abs(u)
    core = 3.0 / (2.0 * R) - 3.0 * u * u / (2.0 * R**3)
    return np.where(u >= R, 0.0, core)


def _tempered_norm_integral(alpha, R):
    # 2 * (core quadrature + exact exponential tail)
    core = _adaptive_gl(
        lambda u: np.exp(-alpha * _s(R, u)), 0.0, R, rel_tol=1e-13
    )
    return 2.0 * (core + math.exp(-alpha * R) / alpha)


# ---------------------------------------------------------------------------
# evaluation

def eval_density(density, x):
    """rho(x). For d = 2, x has the coordinate pair on its last axis."""
    r = _radius(density, x)
    if density.kind == GAUSSIAN:
        return density.beta * np.exp(-density.alpha * r * r)
    return density.beta * np.exp(-density.alpha * _s(density.R, r))


def eval_potential(density, x):
    """Potential V = (Delta rho)/rho.

    Gaussian: 4 alpha^2 |x|^2 - 2 d alpha. Tempered d=1 with rho = beta
    e^{-alpha s}: alpha^2 s'^2 - alpha s'', which is the constant alpha^2
    on the tail.
    """
    r = _radius(density, x)
    a = density.alpha
    if density.kind == GAUSSIAN:
        return 4.0 * a * a * r * r - 2.0 * density.dim * a
    ds = _ds(density.R, r)
    return a * a * ds * ds - a * _d2s(density.R, r)


def kappa_analytic(density):
    """liminf of V at infinity: alpha^2 (tempered) or +inf (gaussian)."""
    if density.kind == GAUSSIAN:
        return math.inf
    return density.alpha**2


def _radius(density, x):
    x = np.asarray(x, dtype=float)
    if density.dim == 1:
        return np.abs(x)
    if x.shape[-1] != 2:
        raise ValueError("d=2 points need a trailing axis of length 2")
    return np.sqrt(np.sum(x * x, axis=-1))


# ---------------------------------------------------------------------------
# ball mass

def ball_mass(density, x, h):
    """m_h(x), the rho-measure of the radius-h ball at x.

    Adaptive composite Gauss-Legendre to relative tolerance 1e-10, with
    panel splits at the tempered transition radius. d=2 (gaussian) reduces
    to a 1-D radial integral through the scaled Bessel i0e, which keeps
    the integrand O(1) even far out in the tail.
    """
    if not (h > 0):
        raise ValueError("h must be positive")
    r = float(_radius(density, x))
    a = density.alpha
    if density.dim == 1:
        if density.kind == TEMPERED and r >= density.R + h:
            return eval_density(density, r) * 2.0 * math.sinh(a * h) / a
        splits = () if density.kind == GAUSSIAN else (-density.R, density.R)
        return _adaptive_gl(
            lambda t: eval_density(density, t), r - h, r + h,
            rel_tol=MASS_RTOL, splits=splits,
        )
    # d = 2 gaussian: rotate around x; the angular integral is
    # 2 pi I_0(2 alpha r t), written with i0e to avoid overflow
    def radial(t):
        return 2.0 * a * t * np.exp(-a * (r - t) ** 2) * i0e(2.0 * a * r * t)

    return _adaptive_gl(radial, 0.0, h, rel_tol=MASS_RTOL)


def ball_mass_grid(density, x, h):
    """Vectorized m_h over an array of d=1 points.

    Same values as ball_mass (tested against it); closed forms where they
    exist. Gaussian uses the erfc difference on |x|, which is cancellation
    safe because the two arguments sit 2*alpha*h*|x| apart in exponent.
    """
    x = np.asarray(x, dtype=float)
    if density.dim != 1:
        return np.array([ball_mass(density, p, h) for p in x])
    r = np.abs(x)
    a = density.alpha
    if density.kind == GAUSSIAN:
        sq = math.sqrt(a)
        return 0.5 * (erfc(sq * (r - h)) - erfc(sq * (r + h)))
    out = np.empty_like(r)
    tail = r >= density.R + h
    out[tail] = eval_density(density, r[tail]) * 2.0 * math.sinh(a * h) / a
    near = np.flatnonzero(~tail)
    for i in near:
        out[i] = ball_mass(density, r[i], h)
    return out


def weight_a_h(density, x, h):
    """Conjugation weight a_h(x) = (alpha_d h^d rho(x) / m_h(x))^{1/2}."""
    vol = unit_ball_volume(density.dim) * h**density.dim
    m = ball_mass(density, x, h)
    return math.sqrt(vol * float(eval_density(density, x)) / m)


# ---------------------------------------------------------------------------
# tail constants

class TailConstants(NamedTuple):
    kappa_est: float
    A_h_est: float
    lemma_residual: float  # |A_h - 1 + kappa h^2/(2(d+2))|; nan for gaussian


def tail_constants(density, h, probe_radii):
    """Probe-shell estimates of kappa and A_h.

    kappa_est is the inf of V over the probes, A_h_est the sup of a_h^2.
    For the tempered family the returned residual checks the second-order
    law A_h = 1 - kappa h^2 / (2(d+2)) + O(h^4) against the analytic
    kappa = alpha^2. Probes must sit strictly outside the smoothed core.
    """
    radii = np.atleast_1d(np.asarray(probe_radii, dtype=float))
    if radii.size == 0:
        raise ValueError("need at least one probe radius")
    if np.any(radii <= density.R):
        raise ProbeInsideCore(
            f"probe radii must exceed the transition radius {density.R}"
        )
    if density.dim == 2:
        pts = np.column_stack([radii, np.zeros_like(radii)])
    else:
        pts = radii
    kappa_est = float(np.min(eval_potential(density, pts)))
    a_sq = np.array([weight_a_h(density, p, h) ** 2 for p in np.atleast_1d(pts)])
    A_h_est = float(np.max(a_sq))
    if density.kind == TEMPERED:
        resid = abs(A_h_est - 1.0 + kappa_analytic(density) * h * h * gamma_d(density.dim))
    else:
        resid = math.nan
    return TailConstants(kappa_est, A_h_est, resid)


def tempered_A_h(density, h):
    """Exact A_h = alpha h / sinh(alpha h) for the tempered family.

    On |x| >= R + h the ball sits entirely in the pure-exponential region,
    so a_h^2 = 2 h rho / m_h = alpha h / sinh(alpha h) exactly, independent
    of x; the limsup is attained everywhere on that shell.
    """
    if density.kind != TEMPERED:
        raise ConfigError("exact A_h formula applies to the tempered family")
    ah = density.alpha * h
    return ah / math.sinh(ah)


# ---------------------------------------------------------------------------
# config round trip

def density_to_config(density):
    cfg = {"kind": density.kind, "dim": density.dim, "alpha": density.alpha}
    if density.kind == TEMPERED:
        cfg["R"] = density.R
    return cfg


def density_from_config(cfg):
    allowed = {"kind", "dim", "alpha", "R"}
    unknown = set(cfg) - allowed
    if unknown:
        raise ConfigError(f"unknown density config keys: {sorted(unknown)}")
    for key in ("kind", "dim", "alpha"):
        if key not in cfg:
            raise ConfigError(f"density config missing {key!r}")
    return make_density(cfg["kind"], cfg["dim"], cfg["alpha"], cfg.get("R"))


# ---------------------------------------------------------------------------
# quadrature

_GL_LO = np.polynomial.legendre.leggauss(16)
_GL_HI = np.polynomial.legendre.leggauss(32)
_MAX_PANEL_SPLITS = 48


def _gl_panel(f, a, b, rule):
    nodes, weights = rule
    half = 0.5 * (b - a)
    t = 0.5 * (a + b) + half * nodes
    return half * float(np.dot(weights, f(t)))


def _adaptive_gl(f, a, b, rel_tol, splits=()):
    """Adaptive Gauss-Legendre for a nonnegative integrand.

    Positivity means panel-local relative control implies global relative
    control, so each panel is bisected until its 16/32-point estimates
    agree. splits lists interior kink locations that seed panel edges.
    """
    edges = [a] + sorted(p for p in splits if a < p < b) + [b]
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        stack = [(lo, hi, 0)]
        while stack:
            p, q, depth = stack.pop()
            coarse = _gl_panel(f, p, q, _GL_LO)
            fine = _gl_panel(f, p, q, _GL_HI)
            if abs(fine - coarse) <= rel_tol * max(abs(fine), 1e-300):
                total += fine
            elif depth >= _MAX_PANEL_SPLITS:
                raise QuadratureNotConverged(
                    f"panel [{p}, {q}] failed to reach rel_tol={rel_tol}"
                )
            else:
                mid = 0.5 * (p + q)
                stack.append((p, mid, depth + 1))
                stack.append((mid, q, depth + 1))
    return total
