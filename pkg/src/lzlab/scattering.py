"""Stationary scattering: the coupled-channel coefficient ODE, the
S-matrix, and energy superpositions of generalized eigenvectors.

At fixed energy E above the spectrum, bounded solutions decompose over the
channel basis with slowly varying coefficients c_j^tau(x) satisfying

    d/dx c_j^tau = sum_{l,sigma} a_{jl}^{tau sigma}(x, E)
                   * exp(i (tau phi_j - sigma phi_l)/eps^2) c_l^sigma,

with phi_j(x) = int_0^x k_j(y, E) dy kept as auxiliary ODE states so the
oscillatory phases stay exact.  tau index 0 is the '+' (left-moving)
channel, index 1 the '-' (right-moving) channel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .errors import TailTooFat, ToleranceNotMet
from .models import ElectronicModel
from .pde import SimulationGrid, WaveField, smooth_frames
from .semiclassical import EnergyDensity

__all__ = [
    "CoefficientState",
    "SMatrix",
    "couplings",
    "integrate_coefficients",
    "s_matrix",
    "symmetry_residual",
    "flux",
    "wavepacket_synthesis",
]

TAU = (1.0, -1.0)  # channel signs: index 0 <-> '+', index 1 <-> '-'


@dataclass
class CoefficientState:
    """Channel coefficients and accumulated phases at one position."""

    x: float
    c: np.ndarray        # (2, m) or (2, m, n_cols) complex
    phases: np.ndarray   # (m,) real, int_0^x k_j dy
    E: float
    eps: float

    def flux(self) -> float:
        return flux(self.c)


@dataclass
class SMatrix:
    """Channel map c(-inf) -> c(+inf) in the (+, -) block layout."""

    matrix: np.ndarray   # (2m, 2m)
    E: float
    eps: float

    def block(self, row_sign: str, col_sign: str) -> np.ndarray:
        m = self.matrix.shape[0] // 2
        r = 0 if row_sign == "+" else m
        c = 0 if col_sign == "+" else m
        return self.matrix[r : r + m, c : c + m]


def flux(c) -> float:
    """Indefinite channel form sum_j (|c_j^+|^2 - |c_j^-|^2)."""
    c = np.asarray(c)
    return float(np.sum(np.abs(c[0]) ** 2) - np.sum(np.abs(c[1]) ** 2))


def _eigen_data(model, x, delta):
    """p, q, levels, frame-rotation rate theta'(x) for the 2x2 family."""
    p = np.real(model.p(x, delta))
    q = np.real(model.q(x, delta))
    dp = np.real(model.dp(x, delta))
    dq = np.real(model.dq(x, delta))
    rho = p * p + q * q
    s = np.sqrt(rho)
    dtheta = (dq * p - q * dp) / (2.0 * rho)
    de = 0.5 * (p * dp + q * dq) / s      # e' of the upper level
    return s, dtheta, de


def couplings(model, x, E, delta):
    """Channel coupling matrix a[tau, j, sigma, l] at one position.

    Built from the closed form with the frame derivative <phi_j, phi_l'>
    and the momentum derivative dk_l/dx = -e_l'/k_l; diagonal couplings
    vanish in the parallel-transport phase convention except for the
    counter-propagating (reflection) pairing.
    """
    s, dtheta, de_up = _eigen_data(model, x, delta)
    e = np.array([-0.5, 0.5]) * s
    de = np.array([-de_up, de_up])
    k = np.sqrt(2.0 * (E - e))
    dk = -de / k
    phi_d = np.array([[0.0, dtheta], [-dtheta, 0.0]])  # <phi_j, phi_l'>

    a = np.zeros((2, 2, 2, 2))
    for it, tau in enumerate(TAU):
        for isig, sig in enumerate(TAU):
            ts = tau * sig
            for j in range(2):
                for l in range(2):
                    term = phi_d[j, l] * (k[j] + ts * k[l])
                    if j == l:
                        term += (ts - k[j] / k[l]) * 0.5 * dk[l]
                    a[it, j, isig, l] = -0.5 * term / np.sqrt(k[j] * k[l])
    return a


def _coupling_tail(model, delta, E, L):
    """Crude bound on int_L^4L of the coupling magnitude."""
    y = np.linspace(L, 4.0 * L, 65)
    tot = 0.0
    for side in (1.0, -1.0):
        mags = [np.abs(couplings(model, side * yy, E, delta)).max() for yy in y]
        tot += float(np.trapezoid(mags, y))
    return tot


def _phase_offsets(model, delta, E, x0):
    """int_0^{x0} k_j dy per level by Gauss-Legendre panels."""
    gx, gw = np.polynomial.legendre.leggauss(32)
    panels = np.linspace(0.0, x0, 33)
    out = np.zeros(2)
    for a, b in zip(panels[:-1], panels[1:]):
        y = 0.5 * (a + b) + 0.5 * (b - a) * gx
        e = model.levels(y, delta)
        k = np.sqrt(2.0 * (E - e))
        out += 0.5 * (b - a) * gw @ k
    return out


def _rhs_factory(model, delta, E, eps):
    eps2 = eps ** 2

    def rhs(x, y, n_cols):
        c = y[: 4 * n_cols].reshape(2, 2, n_cols)
        phases = np.real(y[4 * n_cols : 4 * n_cols + 2])
        a = couplings(model, x, E, delta)
        ph = np.exp(1j * phases / eps2)
        # exp(i(tau phi_j - sigma phi_l)/eps^2)
        f_tau = np.stack([ph, 1.0 / ph])           # (2, m): tau index first
        pha = f_tau[:, :, None, None] / f_tau[None, None, :, :]
        dc = np.einsum("tjsl,tjsl,slc->tjc", a, pha, c)
        e = model.levels(x, delta)
        k = np.sqrt(2.0 * (E - e))
        return np.concatenate([dc.ravel(), k.astype(complex)])

    return rhs


def integrate_coefficients(model, E, eps, delta, incoming=(1, "-"),
                           x_span=(-30.0, 30.0), rtol=1e-11, atol=1e-11,
                           x_eval=None, tail_tol=1e-10):
    """Integrate the coefficient ODE across the line at fixed energy.

    ``incoming`` is (level, sign) seeding a unit coefficient at the left
    end, or the string "all" for the full fundamental system (all 2m
    channels as columns).  Returns the final CoefficientState, or the list
    of states at ``x_eval`` when given.
    """
    if eps < 0.05:
        raise ValueError("oscillation period below the resolvable desk scale")
    x0, x1 = x_span
    if _coupling_tail(model, delta, E, max(abs(x0), abs(x1))) > tail_tol:
        raise TailTooFat(
            f"coupling tail beyond |x| = {max(abs(x0), abs(x1))} exceeds "
            f"{tail_tol}"
        )
    if incoming == "all":
        c0 = np.eye(4, dtype=complex).reshape(2, 2, 4)
        n_cols = 4
    else:
        level, sign = incoming
        c0 = np.zeros((2, 2, 1), dtype=complex)
        c0[0 if sign == "+" else 1, level, 0] = 1.0
        n_cols = 1
    phases0 = _phase_offsets(model, delta, E, x0)
    y0 = np.concatenate([c0.ravel(), phases0.astype(complex)])
    rhs = _rhs_factory(model, delta, E, eps)
    sol = solve_ivp(
        lambda x, y: rhs(x, y, n_cols), (x0, x1), y0,
        method="DOP853", rtol=rtol, atol=atol,
        t_eval=None if x_eval is None else np.asarray(x_eval, dtype=float),
        dense_output=False,
    )
    if not sol.success:
        raise ToleranceNotMet(f"coefficient ODE failed: {sol.message}")

    def unpack(col, x):
        c = col[: 4 * n_cols].reshape(2, 2, n_cols)
        if n_cols == 1:
            c = c[:, :, 0]
        return CoefficientState(
            x=float(x), c=c, phases=np.real(col[4 * n_cols :]),
            E=float(E), eps=float(eps),
        )

    if x_eval is None:
        return unpack(sol.y[:, -1], sol.t[-1])
    return [unpack(sol.y[:, i], sol.t[i]) for i in range(sol.y.shape[1])]


def s_matrix(model, E, eps, delta, L=30.0, **kw) -> SMatrix:
    """S-matrix from the fundamental system over [-L, L].

    Columns follow the (+ block, - block) channel ordering of the
    coefficient vector.
    """
    state = integrate_coefficients(
        model, E, eps, delta, incoming="all", x_span=(-L, L), **kw
    )
    mat = state.c.reshape(4, 4)
    return SMatrix(matrix=mat, E=float(E), eps=float(eps))


def symmetry_residual(sm: SMatrix) -> float:
    """Deviation from S^-1 = R S* R with R = diag(I, -I)."""
    m = sm.matrix.shape[0] // 2
    r = np.diag([1.0] * m + [-1.0] * m)
    lhs = np.linalg.inv(sm.matrix)
    rhs = r @ sm.matrix.conj().T @ r
    return float(np.max(np.abs(lhs - rhs)))


def wavepacket_synthesis(model, density: EnergyDensity, eps, x_grid, t,
                         delta, level_in=None, L=None, n_energy=192,
                         max_refine=3, rtol=2e-4):
    """Superpose generalized eigenvectors into a time-dependent solution.

    psi(x, t) = int_W Q(E) Psi(x, E) exp(-i t E / eps^2) dE evaluated on
    ``x_grid``, with Q from the incoming density and Psi built from the
    coefficient trajectories (WKB channel form).  The energy quadrature is
    Gauss-Legendre with node doubling until the field changes by less than
    ``rtol`` in relative L2.
    """
    if level_in is None:
        level_in = density.level_in
    x_grid = np.asarray(x_grid, dtype=float)
    if L is None:
        L = max(30.0, np.max(np.abs(x_grid)) + 2.0)
    if np.max(np.abs(x_grid)) > L:
        raise ValueError("x grid extends beyond the integration range")
    window = density.window
    _, vectors = smooth_frames(model, x_grid, delta)

    prev = None
    n = n_energy
    for _ in range(max_refine + 1):
        psi = _synthesis_pass(
            model, density, eps, x_grid, t, delta, level_in, L, n, vectors
        )
        if prev is not None:
            scale = np.linalg.norm(psi)
            if scale == 0.0 or np.linalg.norm(psi - prev) <= rtol * scale:
                return psi
        prev = psi
        n *= 2
    return prev


def _synthesis_pass(model, density, eps, x_grid, t, delta, level_in, L,
                    n_energy, vectors):
    window = density.window
    gx, gw = np.polynomial.legendre.leggauss(n_energy)
    e_nodes = 0.5 * (window.e1 + window.e2) + 0.5 * window.span * gx
    e_w = 0.5 * window.span * gw
    eps2 = eps ** 2

    field = np.zeros((len(x_grid), 2), dtype=complex)
    for E, w in zip(e_nodes, e_w):
        q_val = density.Q(E, eps)
        if abs(q_val) * abs(w) < 1e-290:
            continue
        states = integrate_coefficients(
            model, E, eps, delta, incoming=(level_in, "-"),
            x_span=(-L, L), x_eval=x_grid,
        )
        e_lv = model.levels(x_grid, delta)
        k = np.sqrt(2.0 * (E - e_lv))            # (n, m)
        c = np.stack([st.c for st in states])    # (n, 2, m)
        ph = np.stack([st.phases for st in states])  # (n, m)
        osc = np.exp(-1j * ph / eps2)
        comp = (c[:, 0, :] * osc + c[:, 1, :] / osc) / np.sqrt(2.0 * k)
        field += (w * q_val * np.exp(-1j * t * E / eps2)) * np.einsum(
            "nj,nij->ni", comp, vectors
        )
    return field


def synthesis_field(model, density, eps, grid: SimulationGrid, t, delta,
                    **kw) -> WaveField:
    """Wavepacket synthesis wrapped as a WaveField on a simulation grid."""
    psi = wavepacket_synthesis(
        model, density, eps, grid.x, t, delta, **kw
    )
    return WaveField(psi=psi, t=float(t), eps=float(eps), model=model,
                     delta=delta, grid=grid)
