"""Split-step Fourier integration of the two-level molecular equation.

    i eps^2 d_t psi = ( -(eps^4/2) d_xx + h(x) ) psi,   psi(x) in C^m,

on a periodic grid, with Strang splitting: half kinetic step
exp(-i dt eps^2 k^2 / 4) in Fourier space, full potential step
exp(-i dt h(x) / eps^2) pointwise, half kinetic step.  Level-resolved
observables come from the pointwise adiabatic projection onto the smooth
eigenframes.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.fft as sfft

from .coherent import CoherentState, evaluate, flow
from .errors import (
    BoundaryContamination,
    ConfigError,
    MassTooSmall,
    NyquistViolation,
)
from .models import ElectronicModel, _frame_arrays

__all__ = [
    "SimulationGrid",
    "WaveField",
    "LevelObservables",
    "GaussianFit",
    "SplitStepper",
    "smooth_frames",
    "initial_field",
    "step",
    "project_levels",
    "gaussian_fit",
    "band_stats",
    "energy_expectation",
    "run_scattering_experiment",
    "ExperimentResult",
]


@dataclass(frozen=True)
class SimulationGrid:
    """Periodic spatial grid with its dual momentum grid."""

    x_min: float
    x_max: float
    n: int

    def __post_init__(self):
        if self.n & (self.n - 1):
            raise ConfigError(f"grid size {self.n} is not a power of two")
        if not self.x_max > self.x_min:
            raise ConfigError("empty spatial domain")

    @property
    def length(self) -> float:
        return self.x_max - self.x_min

    @property
    def dx(self) -> float:
        return self.length / self.n

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n)

    @property
    def wavenumbers(self) -> np.ndarray:
        """Angular wavenumbers in FFT layout."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.dx)


@dataclass
class WaveField:
    """Vector wavefunction sample on a grid at one time."""

    psi: np.ndarray            # (n, m) complex
    t: float
    eps: float
    model: ElectronicModel
    delta: float
    grid: SimulationGrid

    @property
    def norm_sq(self) -> float:
        return float(np.sum(np.abs(self.psi) ** 2) * self.grid.dx)

    def boundary_mass(self, fraction: float = 0.05) -> float:
        n_edge = max(1, int(self.grid.n * fraction))
        d = np.sum(np.abs(self.psi) ** 2, axis=1)
        return float(
            (np.sum(d[:n_edge]) + np.sum(d[-n_edge:])) * self.grid.dx
        )


@dataclass(frozen=True)
class GaussianFit:
    center: float
    width: float
    residual: float
    excess_kurtosis: float


@dataclass
class LevelObservables:
    """Level-resolved masses and momentum statistics at one time."""

    t: float
    mass: np.ndarray
    mean_k: np.ndarray
    var_k: np.ndarray
    left_mass: np.ndarray
    norm_sq: float
    boundary_mass: float
    x: np.ndarray | None = None
    position_density: np.ndarray | None = None
    k_phys: np.ndarray | None = None
    momentum_density: np.ndarray | None = None

    def slim(self) -> "LevelObservables":
        return replace(
            self, x=None, position_density=None,
            k_phys=None, momentum_density=None,
        )


def smooth_frames(model, x, delta):
    """Eigenvalues/eigenvectors on a grid with sign-aligned columns."""
    values, vectors = _frame_arrays(model, x, delta)
    ov = np.einsum("nik,nik->nk", vectors[:-1], vectors[1:])
    flips = np.cumprod(np.where(ov < 0, -1.0, 1.0), axis=0)
    vectors[1:] *= flips[:, None, :]
    return values, vectors


class SplitStepper:
    """Precomputed Strang propagator for one (grid, dt) combination."""

    def __init__(self, model, delta, grid, eps, dt):
        self.model = model
        self.delta = delta
        self.grid = grid
        self.eps = float(eps)
        self.dt = float(dt)
        k = grid.wavenumbers
        self.kin_half = np.exp(-0.25j * dt * eps ** 2 * k ** 2)
        self.kin_full = self.kin_half ** 2
        if model.dim == 2:
            x = grid.x
            p = np.real(model.p(x, delta))
            q = np.real(model.q(x, delta))
            s = np.hypot(p, q)
            ang = 0.5 * dt * s / eps ** 2
            c = np.cos(ang)
            sinc = np.where(s > 1e-300, np.sin(ang) / np.where(s > 0, s, 1.0),
                            0.5 * dt / eps ** 2)
            self.u00 = c - 1j * sinc * p
            self.u01 = -1j * sinc * q
            self.u11 = c + 1j * sinc * p
            self._u_mat = None
        else:
            h = model.matrix(grid.x, delta)
            evals, evecs = np.linalg.eigh(h)
            phase = np.exp(-1j * dt * evals / eps ** 2)
            self._u_mat = np.einsum(
                "nij,nj,nkj->nik", evecs, phase, np.conj(evecs)
            )

    def _apply_potential_t(self, psi_t):
        """Potential factor on the transposed (m, n) layout."""
        if self._u_mat is None:
            out = np.empty_like(psi_t)
            out[0] = self.u00 * psi_t[0] + self.u01 * psi_t[1]
            out[1] = self.u01 * psi_t[0] + self.u11 * psi_t[1]
            return out
        return np.einsum("nik,kn->in", self._u_mat, psi_t)

    def advance(self, psi, n_steps: int):
        """n_steps Strang steps with merged interior kinetic factors."""
        if n_steps <= 0:
            return psi
        psi_t = np.ascontiguousarray(psi.T)
        psi_k = sfft.fft(psi_t, axis=1)
        psi_k *= self.kin_half
        for j in range(n_steps):
            psi_t = self._apply_potential_t(sfft.ifft(psi_k, axis=1))
            psi_k = sfft.fft(psi_t, axis=1)
            psi_k *= self.kin_full if j < n_steps - 1 else self.kin_half
        return np.ascontiguousarray(sfft.ifft(psi_k, axis=1).T)


def step(fld: WaveField, dt: float) -> WaveField:
    """One Strang step; raises ``NyquistViolation`` on spectral overflow."""
    stepper = SplitStepper(fld.model, fld.delta, fld.grid, fld.eps, dt)
    psi = stepper.advance(fld.psi, 1)
    out = replace(fld, psi=psi, t=fld.t + dt)
    nyquist_check(out)
    return out


def nyquist_check(fld: WaveField, tol: float = 1e-8):
    """Mass fraction in the top decade of wavenumbers must stay tiny."""
    psi_k = np.fft.fft(fld.psi, axis=0)
    power = np.sum(np.abs(psi_k) ** 2, axis=1)
    k = np.abs(fld.grid.wavenumbers)
    top = power[k > 0.9 * np.max(k)].sum()
    frac = float(top / power.sum())
    if frac > tol:
        raise NyquistViolation(
            f"{frac:.2e} of the spectral mass in the top wavenumber decade"
        )
    return frac


def initial_field(model, delta, grid, state: CoherentState, level: int,
                  t0: float, include_phase: bool = True) -> WaveField:
    """Incoming free packet on one adiabatic level at time t0."""
    e_in = model.level_inf(level, -1, delta)
    fl = flow(state, t0, e_in)
    packet = evaluate(fl.state, grid.x)
    if include_phase:
        packet = packet * fl.phase
    _, vectors = smooth_frames(model, grid.x, delta)
    psi = packet[:, None] * vectors[:, :, level]
    return WaveField(
        psi=psi, t=t0, eps=state.eps, model=model, delta=delta, grid=grid
    )


def project_levels(fld: WaveField, densities: bool = True) -> LevelObservables:
    """Pointwise adiabatic projection and level-resolved observables."""
    grid = fld.grid
    _, vectors = smooth_frames(fld.model, grid.x, fld.delta)
    # c_j(x) = <phi_j(x), psi(x)>
    c = np.einsum("nij,ni->nj", np.conj(vectors), fld.psi)
    dx = grid.dx
    mass = np.sum(np.abs(c) ** 2, axis=0) * dx

    c_k = np.fft.fft(c, axis=0)
    eps2 = fld.eps ** 2
    k_phys = np.fft.fftshift(fld.grid.wavenumbers) * eps2
    rho_k = np.fft.fftshift(np.abs(c_k) ** 2, axes=0) * dx ** 2 / (
        2.0 * np.pi * eps2
    )
    dk = k_phys[1] - k_phys[0]
    mass_k = np.sum(rho_k, axis=0) * dk
    with np.errstate(invalid="ignore", divide="ignore"):
        mean_k = np.sum(k_phys[:, None] * rho_k, axis=0) * dk / mass_k
        var_k = (
            np.sum((k_phys[:, None] - mean_k[None, :]) ** 2 * rho_k, axis=0)
            * dk / mass_k
        )
    left = np.sum(rho_k[k_phys < 0.0, :], axis=0) * dk

    obs = LevelObservables(
        t=fld.t,
        mass=mass,
        mean_k=mean_k,
        var_k=var_k,
        left_mass=left,
        norm_sq=fld.norm_sq,
        boundary_mass=fld.boundary_mass(),
    )
    if densities:
        obs.x = grid.x.copy()
        obs.position_density = np.abs(c) ** 2
        obs.k_phys = k_phys
        obs.momentum_density = rho_k
    return obs


def gaussian_fit(obs: LevelObservables, level: int,
                 k_band: tuple | None = None) -> GaussianFit:
    """Moment-matched Gaussian fit of one level's momentum density.

    The residual is the L1 distance between the normalized density and the
    Gaussian with the same mean and variance.  ``k_band = (k_lo, k_hi)``
    restricts the density to one spectral band first (use (0, inf) for the
    transmitted right-moving component).
    """
    if obs.momentum_density is None:
        raise ValueError("observables were collected without densities")
    k = obs.k_phys
    rho = obs.momentum_density[:, level]
    if k_band is not None:
        sel = (k >= k_band[0]) & (k <= k_band[1])
        k, rho = k[sel], rho[sel]
    dk = obs.k_phys[1] - obs.k_phys[0]
    mass = float(np.sum(rho) * dk)
    if mass < 1e-14:
        raise MassTooSmall(f"level {level} mass {mass:.2e}")
    rho = rho / mass
    mean = float(np.sum(k * rho) * dk)
    var = float(np.sum((k - mean) ** 2 * rho) * dk)
    sigma = np.sqrt(var)
    gauss = np.exp(-((k - mean) ** 2) / (2.0 * var)) / (
        sigma * np.sqrt(2.0 * np.pi)
    )
    residual = float(np.sum(np.abs(rho - gauss)) * dk)
    mu4 = float(np.sum((k - mean) ** 4 * rho) * dk)
    return GaussianFit(
        center=mean,
        width=sigma,
        residual=residual,
        excess_kurtosis=mu4 / var ** 2 - 3.0,
    )


def band_stats(obs: LevelObservables, level: int, k_lo: float = 0.0,
               k_hi: float = np.inf):
    """Mass and momentum moments of one level inside a spectral band."""
    if obs.momentum_density is None:
        raise ValueError("observables were collected without densities")
    k = obs.k_phys
    sel = (k >= k_lo) & (k <= k_hi)
    rho = obs.momentum_density[sel, level]
    kk = k[sel]
    dk = k[1] - k[0]
    mass = float(np.sum(rho) * dk)
    if mass <= 0.0:
        return mass, float("nan"), float("nan")
    mean = float(np.sum(kk * rho) * dk / mass)
    var = float(np.sum((kk - mean) ** 2 * rho) * dk / mass)
    return mass, mean, var


def energy_expectation(fld: WaveField) -> float:
    """<psi, H psi> with H = -(eps^4/2) d_xx + h(x)."""
    grid = fld.grid
    psi_k = np.fft.fft(fld.psi, axis=0)
    k2 = grid.wavenumbers ** 2
    kin = np.sum(k2[:, None] * np.abs(psi_k) ** 2) * fld.eps ** 4 / 2.0
    kin *= grid.dx / grid.n
    h = fld.model.matrix(grid.x, fld.delta)
    pot = np.real(
        np.sum(np.conj(fld.psi) * np.einsum("nij,nj->ni", h, fld.psi))
    ) * grid.dx
    return float(kin + pot)


@dataclass
class ExperimentResult:
    """Output bundle of one scattering run."""

    times: list
    series: list
    snapshots: list
    initial: LevelObservables
    final: LevelObservables
    field: WaveField
    params: dict
    comparison: dict | None = None


def run_scattering_experiment(
    model, delta, state: CoherentState, level: int,
    t0: float, t1: float, grid: SimulationGrid,
    dt: float | None = None,
    series_stride: float = 0.25,
    snapshot_times: tuple = (),
    prediction=None,
    boundary_tol: float = 1e-10,
    min_widths_from_edge: float = 15.0,
) -> ExperimentResult:
    """Evolve an incoming packet through the crossing and collect observables.

    Aborts with ``BoundaryContamination`` (carrying the partial result in
    ``exc.partial``) if mass reaches the box edge.  When a
    TransitionPrediction is supplied, a comparison block is attached.
    """
    if dt is None:
        dt = 0.01 * state.eps2
    fl = flow(state, t0, model.level_inf(level, -1, delta))
    width = fl.state.position_width
    a0 = fl.state.a
    if (a0 - grid.x_min < min_widths_from_edge * width
            or grid.x_max - a0 < min_widths_from_edge * width):
        raise ConfigError(
            f"initial packet at {a0} within {min_widths_from_edge} widths "
            f"({width:.3g}) of the box edge"
        )
    fld = initial_field(model, delta, grid, state, level, t0)
    initial = project_levels(fld)

    checkpoints = sorted(
        {round(v, 12) for v in np.arange(t0, t1, series_stride).tolist()}
        | {float(t1)} | {float(s) for s in snapshot_times if t0 < s <= t1}
    )
    checkpoints = [c for c in checkpoints if c > t0]
    snap_set = {float(s) for s in snapshot_times}

    times, series, snapshots = [t0], [initial.slim()], []
    if t0 in snap_set:
        snapshots.append(initial)
    t_cur = t0
    psi = fld.psi
    for t_next in checkpoints:
        n_steps = max(1, int(round((t_next - t_cur) / dt)))
        dt_seg = (t_next - t_cur) / n_steps
        stepper = SplitStepper(model, delta, grid, state.eps, dt_seg)
        psi = stepper.advance(psi, n_steps)
        t_cur = t_next
        fld = WaveField(psi=psi, t=t_cur, eps=state.eps, model=model,
                        delta=delta, grid=grid)
        want_full = t_cur in snap_set or t_cur == checkpoints[-1]
        obs = project_levels(fld, densities=want_full)
        times.append(t_cur)
        series.append(obs.slim())
        if t_cur in snap_set:
            snapshots.append(obs)
        if obs.boundary_mass > boundary_tol:
            partial = ExperimentResult(
                times=times, series=series, snapshots=snapshots,
                initial=initial, final=obs, field=fld,
                params=_run_params(model, delta, state, level, t0, t1,
                                   grid, dt),
            )
            exc = BoundaryContamination(
                f"boundary mass {obs.boundary_mass:.2e} at t = {t_cur}"
            )
            exc.partial = partial
            raise exc

    final = obs if obs.momentum_density is not None else project_levels(fld)
    result = ExperimentResult(
        times=times, series=series, snapshots=snapshots,
        initial=initial, final=final, field=fld,
        params=_run_params(model, delta, state, level, t0, t1, grid, dt),
    )
    if prediction is not None:
        result.comparison = compare_with_prediction(result, prediction, level)
    return result


def _run_params(model, delta, state, level, t0, t1, grid, dt):
    return {
        "model": model.name,
        "delta": delta,
        "eps": state.eps,
        "A": complex(state.A),
        "B": complex(state.B),
        "a": state.a,
        "eta": state.eta,
        "m": state.m,
        "level": level,
        "t0": t0,
        "t1": t1,
        "x_min": grid.x_min,
        "x_max": grid.x_max,
        "n": grid.n,
        "dt": dt,
    }


def compare_with_prediction(result: ExperimentResult, prediction,
                            level_in: int) -> dict:
    """Deltas between a simulation and a transition prediction.

    The transmitted statistics restrict to the right-moving band k > 0,
    which excludes the (exponentially smaller) reflected component parked
    near the crossing.
    """
    level_out = 1 - level_in
    final = result.final
    mass_t, mean_t, var_t = band_stats(final, level_out, k_lo=0.0)
    fit = gaussian_fit(final, level_out, k_band=(0.0, np.inf))
    return {
        "eta_plus_predicted": prediction.eta_plus,
        "eta_naive": prediction.eta_naive,
        "mean_k_simulated": mean_t,
        "momentum_delta": mean_t - prediction.eta_plus,
        "probability_predicted": prediction.probability,
        "probability_quadrature": prediction.probability_quadrature,
        "probability_simulated": mass_t,
        "probability_ratio": (
            prediction.probability / mass_t if mass_t else np.inf
        ),
        "fit_residual": fit.residual,
        "fit_center": fit.center,
        "fit_width": fit.width,
        "reflected_mass": [float(v) for v in final.left_mass],
        "transmitted_position": float(
            prediction.a_plus + prediction.eta_plus * result.final.t
        ),
    }
