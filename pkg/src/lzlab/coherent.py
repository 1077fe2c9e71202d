"""Gaussian coherent states, their Hermite excitations, and free flow.

The ground state is

    phi_0(A, B, eps^2, a, eta, x) =
        (pi^(1/4) eps^(1/2) A^(1/2))^(-1)
        * exp(-B (x-a)^2 / (2 A eps^2) + i eta (x-a) / eps^2)

with Re(conj(B) A) = 1, localized at position a and momentum eta.  The
m-th excited state multiplies phi_0 by a Hermite polynomial of
(x-a)/(eps |A|) and the unit-modulus factor (conj(A)/A)^(m/2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import GridTooNarrow

__all__ = ["CoherentState", "FreeFlow", "hermite_poly", "evaluate", "flow",
           "momentum_density"]

MAX_HERMITE = 20


@dataclass(frozen=True)
class CoherentState:
    """Parameter bundle (A, B, eps^2, a, eta, m) of one wavepacket."""

    A: complex
    B: complex
    eps2: float
    a: float = 0.0
    eta: float = 0.0
    m: int = 0

    def __post_init__(self):
        norm = np.real(np.conj(self.B) * self.A)
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"Re(conj(B) A) = {norm!r}, expected 1")
        if self.eps2 <= 0:
            raise ValueError("eps^2 must be positive")
        if not (0 <= self.m <= MAX_HERMITE):
            raise ValueError(f"excitation index must be in [0, {MAX_HERMITE}]")

    @property
    def eps(self) -> float:
        return float(np.sqrt(self.eps2))

    @property
    def position_width(self) -> float:
        """Std of the position density, eps |A| / sqrt(2)."""
        return self.eps * abs(self.A) / np.sqrt(2.0)

    @property
    def momentum_width(self) -> float:
        return self.eps * abs(self.B) / np.sqrt(2.0)


@dataclass(frozen=True)
class FreeFlow:
    """Result of free evolution in a constant potential level."""

    e_inf: float
    t: float
    state: CoherentState
    action: float

    @property
    def phase(self) -> complex:
        return np.exp(1j * self.action / self.state.eps2)


def hermite_poly(m: int, u):
    """Physicists' Hermite polynomial by the three-term recurrence."""
    if not (0 <= m <= MAX_HERMITE):
        raise ValueError(f"Hermite order must be in [0, {MAX_HERMITE}]")
    u = np.asarray(u)
    h_prev = np.ones_like(u)
    if m == 0:
        return h_prev
    h = 2.0 * u
    for k in range(1, m):
        h, h_prev = 2.0 * u * h - 2.0 * k * h_prev, h
    return h


def evaluate(state: CoherentState, x, check_grid: bool = True):
    """Pointwise values of phi_m on a real grid.

    With ``check_grid`` (default), raises ``GridTooNarrow`` when the grid is
    too coarse (spacing above eps|A|/8) or drops more than 1e-10 of the mass.
    The (conj(A)/A)^(m/2) factor uses the principal branch; callers that
    track the winding of A(t) should apply the extra phase themselves.
    """
    x = np.asarray(x, dtype=float)
    eps = state.eps
    u = (x - state.a) / (eps * abs(state.A))
    core = np.exp(
        -state.B * (x - state.a) ** 2 / (2.0 * state.A * state.eps2)
        + 1j * state.eta * (x - state.a) / state.eps2
    )
    psi = core / (np.pi ** 0.25 * np.sqrt(eps) * np.sqrt(complex(state.A)))
    if state.m > 0:
        w = np.conj(state.A) / state.A
        pref = (
            2.0 ** (-state.m / 2.0)
            / np.sqrt(float(math.factorial(state.m)))
            * np.exp(0.5 * state.m * np.log(w))
        )
        psi = pref * hermite_poly(state.m, u) * psi
    if check_grid and x.ndim == 1 and x.size > 1:
        dx = float(np.min(np.diff(x)))
        if dx > eps * abs(state.A) / 8.0 * (1.0 + 1e-12):
            raise GridTooNarrow(
                f"grid spacing {dx:.3e} above eps|A|/8 = "
                f"{eps * abs(state.A) / 8.0:.3e}"
            )
        mass = float(np.sum(np.abs(psi) ** 2) * dx)
        if 1.0 - mass > 1e-10:
            raise GridTooNarrow(f"mass defect {1.0 - mass:.3e} > 1e-10")
    return psi


def flow(state: CoherentState, t: float, e_inf: float) -> FreeFlow:
    """Free-evolution parameter flow in the constant potential e_inf.

    A(t) = A + i t B, a(t) = a + eta t, action S(t) = t (eta^2/2 - e_inf);
    B and eta are constant, and Re(conj(B) A(t)) = 1 is preserved exactly.
    """
    flowed = replace(
        state,
        A=state.A + 1j * t * state.B,
        a=state.a + state.eta * t,
    )
    action = t * (state.eta ** 2 / 2.0 - e_inf)
    return FreeFlow(e_inf=e_inf, t=t, state=flowed, action=action)


def momentum_density(state: CoherentState):
    """Normalized momentum density k -> |phi_m(B, A, eps^2, eta, -a, k)|^2.

    The swap (A, B) -> (B, A) with center eta realizes the rescaled Fourier
    transform; the density integrates to 1 over k.
    """
    swapped = CoherentState(
        A=state.B, B=state.A, eps2=state.eps2,
        a=state.eta, eta=-state.a, m=state.m,
    )

    def density(k):
        return np.abs(evaluate(swapped, np.asarray(k, float),
                               check_grid=False)) ** 2

    return density
