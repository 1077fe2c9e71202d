"""Predictor-side quantities: tail integrals, energy densities, decay
profiles, and the transition prediction.

The incoming packet fixes an energy density Q(E) = exp(-G/eps^2)
* exp(-i J/eps^2) * P(E, eps).  The crossing contributes the contour
action gamma(E).  The transition is governed by

    alpha(E) = G(E) + Im gamma(E),
    kappa(E) = J(E) - Re gamma(E) + omega_out(E),

whose minimizer E* determines the outgoing packet parameters and the
exponentially small amplitude.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq, minimize_scalar

from .coherent import CoherentState, hermite_poly
from .contour import (
    ContourLoop,
    geometric_prefactor,
    level_action,
    loop_integrals,
    make_loop,
)
from .errors import (
    CutoffClipsMass,
    DegenerateMinimum,
    MinimumAtBoundary,
    MultipleMinima,
    SlowDecay,
    WindowTooLow,
)
from .models import CrossingPoint, ElectronicModel, find_complex_crossing

__all__ = [
    "EnergyWindow",
    "EnergyDensity",
    "DecayProfile",
    "TransitionPrediction",
    "LzExpansion",
    "omega_tail",
    "make_window",
    "auto_window",
    "crossing_search_box",
    "build_density_from_state",
    "decay_profile",
    "lz_expansions",
    "predict",
    "transition_setup",
]

_GL_X, _GL_W = np.polynomial.legendre.leggauss(64)


# -- tail integrals ----------------------------------------------------------


def omega_tail(model, delta, level, sigma, direction, E,
               tol=1e-13, t_cap=512.0):
    """Channel phase-correction integral.

    int_0^{direction*inf} sigma * (k(y, E) - k(direction*inf, E)) dy with
    k = sqrt(2 (E - e_level(y, delta))).  ``E`` may be an array.  Outward
    panels are added until their contribution drops below ``tol``; hitting
    the cap triggers a fit of the empirical tail exponent, and ``SlowDecay``
    is raised when it falls below 1 + nu/2.
    """
    E = np.asarray(E, dtype=float)
    e_inf = model.level_inf(level, direction, delta)
    if np.any(E <= e_inf):
        raise ValueError("energy below the asymptotic level; channel closed")
    k_inf = np.sqrt(2.0 * (E - e_inf))

    def panel(u0, u1):
        u = 0.5 * (u0 + u1) + 0.5 * (u1 - u0) * _GL_X
        y = direction * u
        e = model.levels(y, delta)[..., level]
        k = np.sqrt(2.0 * (E[..., None] - e))
        g = sigma * (k - k_inf[..., None])
        return direction * 0.5 * (u1 - u0) * np.sum(g * _GL_W, axis=-1)

    total = np.zeros_like(E, dtype=float)
    u0, u1 = 0.0, 1.0
    while True:
        contrib = panel(u0, u1)
        total = total + contrib
        if np.max(np.abs(contrib)) < tol and u1 >= 8.0:
            break
        if u1 >= t_cap:
            e1 = np.max(np.abs(
                model.levels(direction * u1 / 2.0, delta)[..., level] - e_inf))
            e2 = np.max(np.abs(
                model.levels(direction * u1, delta)[..., level] - e_inf))
            mu = np.log(max(e1, 1e-300) / max(e2, 1e-300)) / np.log(2.0)
            if mu < 1.0 + model.nu / 2.0:
                raise SlowDecay(
                    f"tail exponent {mu:.2f} below 1 + nu/2 at y = {u1}"
                )
            break
        u0, u1 = u1, 2.0 * u1
    return total if total.ndim else float(total)


# -- energy windows ----------------------------------------------------------


@dataclass(frozen=True)
class EnergyWindow:
    """Compact energy interval with its sampling grid."""

    e1: float
    e2: float
    n: int = 512

    def __post_init__(self):
        if not (self.e2 > self.e1):
            raise ValueError("window must have positive length")
        if self.n < 16:
            raise ValueError("window grid too coarse")

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(self.e1, self.e2, self.n)

    @property
    def span(self) -> float:
        return self.e2 - self.e1


def make_window(model, delta, e1, e2, n=512, *, x_span=25.0) -> EnergyWindow:
    """Energy window validated against the spectrum and the strip.

    Requires the window to sit strictly above the real spectrum and checks
    min |E - e_j(z)| > 0 over a sampled grid of the analyticity strip (both
    continuation branches of the levels).
    """
    if not model.has_limits:
        raise WindowTooLow(
            f"model {model.name!r} has no scattering limits; windows are "
            "undefined for it"
        )
    top = model.spectrum_top(delta)
    if e1 <= top:
        raise WindowTooLow(f"window floor {e1} not above spectrum top {top}")
    y_max = min(model.alpha_strip * 0.98, 1.4)
    xs = np.linspace(-x_span, x_span, 81)
    ys = np.linspace(-y_max, y_max, 21)
    z = xs[None, :] + 1j * ys[:, None]
    s = np.sqrt(model.rho(z, delta).astype(complex))
    e_branches = np.stack([0.5 * s, -0.5 * s])
    e_grid = np.linspace(e1, e2, 33)
    dist = np.min(
        np.abs(e_grid[:, None, None, None] - e_branches[None]), axis=(1, 2, 3)
    )
    if np.min(dist) <= 1e-9:
        raise WindowTooLow(
            f"window touches a continued level (min distance {np.min(dist):.2e})"
        )
    return EnergyWindow(e1=float(e1), e2=float(e2), n=int(n))


def crossing_search_box(model, delta):
    """Default complex search box bracketing the upper crossing point."""
    seed = model.crossing_seed(delta)
    w = 0.6 * abs(seed)
    return (
        seed.real - w + 1j * 0.45 * seed.imag,
        seed.real + w + 1j * 1.25 * seed.imag,
    )


def auto_window(model, delta, state, level_in, n=512, n_sigmas=9.0):
    """Window centered on the incoming mean energy, H7-validated.

    Spans n_sigmas momentum standard deviations of the incoming packet
    (inflated for Hermite excitations) plus twice the estimated minimizer
    shift, clipped from below just above the spectrum top.
    """
    e_in = model.level_inf(level_in, -1, delta)
    E0 = state.eta ** 2 / 2.0 + e_in
    top = model.spectrum_top(delta)
    if E0 <= top:
        raise WindowTooLow(f"incoming mean energy {E0} below spectrum top {top}")
    spread = max(1.0, np.sqrt((2.0 * state.m + 1.0) / 2.0))
    dk = n_sigmas * state.eps * abs(state.B) * spread
    sigma_e = state.eta * dk + 0.5 * dk ** 2
    shift = 0.0
    if delta > 0:
        try:
            exp = lz_expansions(model, delta, E0)
            g = 1.0 / (state.eta * abs(state.B)) ** 2
            shift = exp.gamma0 / (g * exp.kc(E0) ** 3)
        except Exception:
            shift = 0.0
    e1 = max(top + 0.03 * (E0 - top), E0 - sigma_e)
    e2 = E0 + sigma_e + 2.5 * shift
    return make_window(model, delta, e1, e2, n=n)


# -- energy densities --------------------------------------------------------


@dataclass
class EnergyDensity:
    """G / J / P decomposition of the incoming energy density."""

    state: CoherentState
    level_in: int
    e_in: float
    E0: float
    g: float
    window: EnergyWindow
    plateau: tuple[float, float]
    _omega_in: CubicSpline
    _domega_in: CubicSpline
    _d2omega_in: CubicSpline

    def k_in(self, E):
        return np.sqrt(2.0 * (np.asarray(E, dtype=float) - self.e_in))

    # Gaussian exponent and its derivatives
    def G(self, E):
        return (self.k_in(E) - self.state.eta) ** 2 / (2.0 * abs(self.state.B) ** 2)

    def dG(self, E):
        k = self.k_in(E)
        return (k - self.state.eta) / (abs(self.state.B) ** 2 * k)

    def d2G(self, E):
        k = self.k_in(E)
        return self.state.eta / (abs(self.state.B) ** 2 * k ** 3)

    # oscillatory exponent (includes the incoming channel phase correction)
    def J(self, E):
        k = self.k_in(E)
        dk = k - self.state.eta
        ratio = np.imag(self.state.A / self.state.B)
        return ratio * dk ** 2 / 2.0 + self.state.a * dk - self._omega_in(E)

    def dJ(self, E):
        k = self.k_in(E)
        dk = k - self.state.eta
        ratio = np.imag(self.state.A / self.state.B)
        return (ratio * dk + self.state.a) / k - self._domega_in(E)

    def d2J(self, E):
        k = self.k_in(E)
        ratio = np.imag(self.state.A / self.state.B)
        return (ratio * self.state.eta - self.state.a) / k ** 3 - self._d2omega_in(E)

    def omega_in(self, E):
        return self._omega_in(E)

    # smooth cutoff: 1 on the plateau, order-7 smoothstep on the margins
    def F(self, E):
        E = np.asarray(E, dtype=float)
        p1, p2 = self.plateau
        lo = np.clip((E - self.window.e1) / (p1 - self.window.e1), 0.0, 1.0)
        hi = np.clip((self.window.e2 - E) / (self.window.e2 - p2), 0.0, 1.0)
        return _smoothstep7(lo) * _smoothstep7(hi)

    def P_raw(self, E, eps):
        """Pre-exponential factor without the cutoff."""
        k = self.k_in(E)
        m = self.state.m
        B = self.state.B
        base = np.pi ** -0.75 * eps ** -1.5 / (np.sqrt(complex(B)) * np.sqrt(k))
        if m == 0:
            return base
        pref = (
            (-1j) ** m
            * 2.0 ** (-m / 2.0)
            / math.sqrt(math.factorial(m))
            * complex(B) ** (-m / 2.0)
            * np.conj(complex(B)) ** (m / 2.0)
        )
        return base * pref * hermite_poly(m, (k - self.state.eta) / (eps * abs(B)))

    def P(self, E, eps):
        return self.P_raw(E, eps) * self.F(E)

    def Q(self, E, eps):
        """Full density exp(-G/eps^2) exp(-i J/eps^2) P(E, eps)."""
        return (
            np.exp(-self.G(E) / eps ** 2)
            * np.exp(-1j * self.J(E) / eps ** 2)
            * self.P(E, eps)
        )


def _smoothstep7(u):
    u = np.clip(u, 0.0, 1.0)
    return u ** 4 * (35.0 - 84.0 * u + 70.0 * u ** 2 - 20.0 * u ** 3)


def build_density_from_state(state, level_in, model, window, delta,
                             cutoff_margin=0.1) -> EnergyDensity:
    """Energy density realizing an incoming coherent state on one level.

    The mean energy E0 = eta^2/2 + e_in(-inf) must lie inside the cutoff
    plateau, which occupies the window shrunk by ``cutoff_margin`` on each
    side.
    """
    e_in = model.level_inf(level_in, -1, delta)
    E0 = state.eta ** 2 / 2.0 + e_in
    top = model.spectrum_top(delta)
    if window.e1 <= top:
        raise WindowTooLow(
            f"window floor {window.e1} not above spectrum top {top}"
        )
    # margins stay clear of the mean energy even for floor-clipped windows
    p1 = min(window.e1 + cutoff_margin * window.span, 0.5 * (window.e1 + E0))
    p2 = max(window.e2 - cutoff_margin * window.span, 0.5 * (E0 + window.e2))
    if not (p1 < E0 < p2):
        raise WindowTooLow(f"mean energy {E0} outside cutoff plateau ({p1}, {p2})")
    grid = window.grid
    om = omega_tail(model, delta, level_in, -1, -1, grid)
    dom = _fd4_first(om, grid[1] - grid[0])
    d2om = _fd4_second(om, grid[1] - grid[0])
    return EnergyDensity(
        state=state,
        level_in=level_in,
        e_in=e_in,
        E0=E0,
        g=1.0 / (state.eta * abs(state.B)) ** 2,
        window=window,
        plateau=(p1, p2),
        _omega_in=CubicSpline(grid, om),
        _domega_in=CubicSpline(grid, dom),
        _d2omega_in=CubicSpline(grid, d2om),
    )


def _fd4_first(f, h):
    """Fourth-order central first derivative on a uniform grid."""
    d = np.gradient(f, h, edge_order=2)
    d[2:-2] = (f[:-4] - 8.0 * f[1:-3] + 8.0 * f[3:-1] - f[4:]) / (12.0 * h)
    return d

def _fd4_second(f, h):
    d = np.empty_like(f)
    d[2:-2] = (
        -f[:-4] + 16.0 * f[1:-3] - 30.0 * f[2:-2] + 16.0 * f[3:-1] - f[4:]
    ) / (12.0 * h * h)
    d[:2] = d[2]
    d[-2:] = d[-3]
    return d


# -- decay profiles ----------------------------------------------------------


@dataclass
class DecayProfile:
    """Tabulated alpha / kappa machinery over one energy window."""

    model: ElectronicModel
    delta: float
    level_in: int
    level_out: int
    window: EnergyWindow
    density: EnergyDensity
    loop: ContourLoop
    theta: complex
    gamma_table: np.ndarray
    omega_out_table: np.ndarray
    _splines: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        grid = self.window.grid
        h = grid[1] - grid[0]
        for name, tab in (
            ("im_g", np.imag(self.gamma_table)),
            ("re_g", np.real(self.gamma_table)),
            ("om", self.omega_out_table),
        ):
            self._splines[name] = CubicSpline(grid, tab)
            self._splines["d_" + name] = CubicSpline(grid, _fd4_first(tab, h))
            self._splines["d2_" + name] = CubicSpline(grid, _fd4_second(tab, h))

    def gamma(self, E):
        return self._splines["re_g"](E) + 1j * self._splines["im_g"](E)

    def im_gamma(self, E):
        return self._splines["im_g"](E)

    def omega_out(self, E):
        return self._splines["om"](E)

    def alpha(self, E):
        return self.density.G(E) + self._splines["im_g"](E)

    def dalpha(self, E):
        return self.density.dG(E) + self._splines["d_im_g"](E)

    def d2alpha(self, E):
        return self.density.d2G(E) + self._splines["d2_im_g"](E)

    def kappa(self, E):
        return self.density.J(E) - self._splines["re_g"](E) + self._splines["om"](E)

    def dkappa(self, E):
        return (
            self.density.dJ(E) - self._splines["d_re_g"](E)
            + self._splines["d_om"](E)
        )

    def d2kappa(self, E):
        return (
            self.density.d2J(E) - self._splines["d2_re_g"](E)
            + self._splines["d2_om"](E)
        )


def decay_profile(model, density, loop, levels, delta, window) -> DecayProfile:
    """Tabulate gamma and the outgoing channel correction on the window grid.

    ``levels`` is the ordered pair (incoming, outgoing); the loop must be
    the one matching that transition direction (conjugate loop when coming
    in on the upper level) so that Im gamma > 0 on the window.
    """
    level_in, level_out = levels
    grid = window.grid
    li = loop_integrals(model, delta, loop, level_in, grid)
    om_out = omega_tail(model, delta, level_out, -1, +1, grid)
    theta, target = geometric_prefactor(model, loop, level_in, delta)
    if target != level_out:
        raise ValueError(
            f"loop monodromy maps level {level_in} to {target}, "
            f"not to requested {level_out}"
        )
    profile = DecayProfile(
        model=model,
        delta=delta,
        level_in=level_in,
        level_out=level_out,
        window=window,
        density=density,
        loop=loop,
        theta=theta,
        gamma_table=np.atleast_1d(li.gamma),
        omega_out_table=np.atleast_1d(om_out),
    )
    if np.any(np.imag(profile.gamma_table) <= 0.0):
        raise ValueError("Im gamma not positive on the window; wrong loop?")
    return profile


# -- small-gap expansions ----------------------------------------------------


@dataclass(frozen=True)
class LzExpansion:
    """Leading small-gap behavior of the contour action."""

    gamma0: float
    closed_form: float        # delta^2 * (pi/4) (b^2/a - c^2/a^3)
    e_c: float
    crossing: CrossingPoint
    delta: float

    def kc(self, E):
        return np.sqrt(2.0 * (np.asarray(E, dtype=float) - self.e_c))

    def leading(self, E):
        return self.gamma0 / self.kc(E)

    def dE_leading(self, E):
        return -self.gamma0 / self.kc(E) ** 3

    def d2E_leading(self, E):
        return 3.0 * self.gamma0 / self.kc(E) ** 5


def lz_expansions(model, delta, E=None) -> LzExpansion:
    """Adiabatic decay constant and the leading action expressions.

    gamma0 is computed by contour quadrature of the level itself; the
    closed form (pi/4)(b^2/a - c^2/a^3) delta^2 from the local gap
    constants is attached for comparison.
    """
    crossing = find_complex_crossing(
        model, (0, 1), delta, crossing_search_box(model, delta)
    )
    loop = make_loop(model, crossing)
    gamma0 = abs(level_action(model, loop, 0, delta).imag)
    a, b, c = model.h6 if model.h6 else (np.nan, np.nan, np.nan)
    closed = delta ** 2 * (np.pi / 4.0) * (b * b / a - c * c / a ** 3)
    return LzExpansion(
        gamma0=gamma0,
        closed_form=float(closed),
        e_c=0.0,
        crossing=crossing,
        delta=float(delta),
    )


# -- the prediction ----------------------------------------------------------


@dataclass
class TransitionPrediction:
    """Outgoing packet parameters and transition amplitude."""

    E_star: float
    k_star: float
    k_in_star: float
    alpha_star: float
    alpha_E2: float          # alpha''(E*)
    alpha_k2: float          # d^2 alpha / dk^2 at k*
    kappa_d1: float          # kappa'(E*)
    kappa_k2: float          # d^2 kappa / dk^2 at k*
    eta_plus: float
    a_plus: float
    B_plus: complex
    A_plus: complex
    theta: complex
    phase_exponent: float    # kappa(E*) - k*^2 kappa'(E*)
    amplitude: complex
    probability: float
    probability_quadrature: float
    eta_naive: float
    E0: float
    eps: float
    m: int
    e_out_inf: float
    clip_fraction: float
    local_minima: list = field(default_factory=list)

    @property
    def s_plus_rate(self) -> float:
        """Action rate of the outgoing free packet, k*^2/2 - e_out(inf)."""
        return self.k_star ** 2 / 2.0 - self.e_out_inf


def predict(profile: DecayProfile, eps: float, m: int | None = None,
            theta: complex | None = None, clip_tol: float = 1e-2,
            edge_frac: float = 0.02) -> TransitionPrediction:
    """Locate the decay-rate minimizer and assemble the outgoing packet.

    Grid scan (window grid, at least 400 points) plus golden-section and a
    derivative root polish.  Raises ``MinimumAtBoundary`` when the minimum
    sits within ``edge_frac`` of the window edge, ``MultipleMinima`` when a
    second local minimum comes within 1e-3 of the global value, and
    ``DegenerateMinimum`` for non-convex minima.
    """
    density = profile.density
    if m is None:
        m = density.state.m
    if theta is None:
        theta = profile.theta
    if profile.window.n < 400:
        raise ValueError("window grid must have at least 400 points")
    grid = profile.window.grid
    alpha_g = profile.alpha(grid)

    interior = np.arange(1, len(grid) - 1)
    is_min = (alpha_g[interior] < alpha_g[interior - 1]) & (
        alpha_g[interior] <= alpha_g[interior + 1]
    )
    minima_idx = list(interior[is_min])
    if not minima_idx:
        raise MinimumAtBoundary("no interior local minimum of alpha")
    i0 = min(minima_idx, key=lambda i: alpha_g[i])
    if i0 < edge_frac * len(grid) or i0 > (1.0 - edge_frac) * len(grid):
        raise MinimumAtBoundary(
            f"alpha minimum at grid index {i0} of {len(grid)}"
        )
    others = [
        i for i in minima_idx if abs(i - i0) > 3
        and alpha_g[i] - alpha_g[i0] < 1e-3
    ]
    if others:
        raise MultipleMinima(
            f"second local minimum within 1e-3 at E = {grid[others[0]]}"
        )

    res = minimize_scalar(
        profile.alpha, bounds=(grid[i0 - 1], grid[i0 + 1]),
        method="bounded", options={"xatol": 1e-13},
    )
    e_star = float(res.x)
    lo, hi = grid[max(i0 - 2, 0)], grid[min(i0 + 2, len(grid) - 1)]
    if profile.dalpha(lo) < 0.0 < profile.dalpha(hi):
        e_star = float(brentq(profile.dalpha, lo, hi, xtol=1e-14))

    alpha_star = float(profile.alpha(e_star))
    a2 = float(profile.d2alpha(e_star))
    if a2 <= 0.0:
        raise DegenerateMinimum(f"alpha''(E*) = {a2}")

    e_out = profile.model.level_inf(profile.level_out, +1, profile.delta)
    k_star = float(np.sqrt(2.0 * (e_star - e_out)))
    k_in_star = float(density.k_in(e_star))
    alpha_k2 = k_star ** 2 * a2
    kappa1 = float(profile.dkappa(e_star))
    kappa_k2 = k_star ** 2 * float(profile.d2kappa(e_star)) + kappa1

    b_plus = 1.0 / np.sqrt(alpha_k2)
    a_plus_param = (alpha_k2 + 1j * kappa_k2) / np.sqrt(alpha_k2)
    a_pos = k_star * kappa1
    phase_exp = float(profile.kappa(e_star)) - k_star ** 2 * kappa1

    p_star = complex(density.P(e_star, eps))
    amplitude = (
        np.exp(-1j * theta)
        * eps ** 1.5
        * np.pi ** 0.75
        * alpha_k2 ** -0.25
        * np.sqrt(k_star)
        * p_star
        * np.exp(-alpha_star / eps ** 2)
        * np.exp(-1j * phase_exp / eps ** 2)
    )

    weight = np.exp(2.0 * np.imag(theta)) * np.pi * eps ** 2
    half_width = (12.0 + 2.0 * m) * eps / np.sqrt(a2)
    e_fine = np.linspace(
        max(grid[0], e_star - half_width),
        min(grid[-1], e_star + half_width),
        4097,
    )
    integ_full = np.abs(density.P_raw(e_fine, eps)) ** 2 * np.exp(
        -2.0 * (profile.alpha(e_fine) - alpha_star) / eps ** 2
    )
    integ_cut = integ_full * density.F(e_fine) ** 2
    scale = np.exp(-2.0 * alpha_star / eps ** 2)
    prob_quad = weight * scale * float(np.trapezoid(integ_cut, e_fine))
    full_quad = weight * scale * float(np.trapezoid(integ_full, e_fine))
    clip = max(full_quad - prob_quad, 0.0)
    if full_quad > 0 and clip / full_quad > clip_tol:
        raise CutoffClipsMass(
            f"cutoff clips {clip / full_quad:.2e} of the transition mass "
            f"(tolerance {clip_tol})"
        )

    e_in = density.e_in
    eta_naive = float(np.sqrt(2.0 * (density.E0 - e_out)))
    prediction = TransitionPrediction(
        E_star=e_star,
        k_star=k_star,
        k_in_star=k_in_star,
        alpha_star=alpha_star,
        alpha_E2=a2,
        alpha_k2=alpha_k2,
        kappa_d1=kappa1,
        kappa_k2=kappa_k2,
        eta_plus=k_star,
        a_plus=a_pos,
        B_plus=complex(b_plus),
        A_plus=complex(a_plus_param),
        theta=complex(theta),
        phase_exponent=phase_exp,
        amplitude=complex(amplitude),
        probability=float(abs(amplitude) ** 2),
        probability_quadrature=prob_quad,
        eta_naive=eta_naive,
        E0=density.E0,
        eps=float(eps),
        m=int(m),
        e_out_inf=float(e_out),
        clip_fraction=float(clip / full_quad) if full_quad > 0 else 0.0,
        local_minima=[float(grid[i]) for i in minima_idx],
    )
    norm = np.real(np.conj(prediction.A_plus) * prediction.B_plus)
    if abs(norm - 1.0) > 1e-10:
        raise DegenerateMinimum(
            f"outgoing normalization Re(conj(A+) B+) = {norm}"
        )
    return prediction


def transition_setup(model, delta, state, level_in, level_out,
                     window=None, n_grid=512):
    """Build the (density, profile) pair for one avoided-crossing transition.

    Locates the crossing, chooses the loop orientation matching the
    transition direction, and tabulates the profile on the window (built
    automatically from the incoming state when not supplied).
    """
    if delta <= 0:
        raise ValueError("predictor requires a positive gap parameter")
    if window is None:
        window = auto_window(model, delta, state, level_in, n=n_grid)
    crossing = find_complex_crossing(
        model, (min(level_in, level_out), max(level_in, level_out)),
        delta, crossing_search_box(model, delta),
    )
    loop = make_loop(model, crossing, conjugate=level_in > level_out)
    density = build_density_from_state(state, level_in, model, window, delta)
    profile = decay_profile(
        model, density, loop, (level_in, level_out), delta, window
    )
    return density, profile
