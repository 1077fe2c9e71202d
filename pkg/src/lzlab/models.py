"""Analytic electron-Hamiltonian families and their eigen-data.

Every built-in family is a real-symmetric, trace-free 2x2 matrix

    h(z, delta) = 0.5 * [[p(z, delta), q(z, delta)],
                         [q(z, delta), -p(z, delta)]]

with p, q analytic and real on the real axis.  The adiabatic levels are
e(z) = -/+ 0.5*sqrt(rho(z)) with discriminant rho = p**2 + q**2, so the
complex crossing points are the zeros of rho.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import (
    DegenerateSpectrum,
    MultipleRoots,
    NoRootInBox,
    PathTooCoarse,
)

__all__ = [
    "ElectronicModel",
    "EigenFrame",
    "CrossingPoint",
    "get_model",
    "MODEL_NAMES",
    "eigenframe",
    "transport_frame",
    "find_complex_crossing",
]

_GAP_TOL = 1e-12


@dataclass(frozen=True)
class EigenFrame:
    """Sorted eigen-decomposition of h at one real position.

    ``vectors[:, j]`` is the unit eigenvector for ``values[j]``,
    ``values`` ascending.
    """

    x: float
    values: np.ndarray
    vectors: np.ndarray


@dataclass(frozen=True)
class CrossingPoint:
    """Zero of the discriminant in the closed upper half strip."""

    z0: complex
    levels: tuple[int, int]
    residual: float
    delta: float


@dataclass
class ElectronicModel:
    """A 2x2 analytic family in the trace-free real-symmetric form.

    Parameters
    ----------
    name : str
        Registry key.
    p, q : callable
        Entry functions of ``(z, delta)``; accept complex arrays.
    dp, dq : callable
        Their z-derivatives.
    p_inf, q_inf : callable or None
        ``(sign, delta) -> float`` limits at sign*infinity; ``None`` when the
        family has no limits (purely local model).
    nu : float
        Declared tail-decay exponent (H2-style bound ``<x>**-(2+nu)``).
    alpha_strip : float
        Half-width of the analyticity strip.
    h6 : tuple or None
        Local gap constants (a, b, c) with gap**2 ~ a x**2 + 2 c x delta
        + b**2 delta**2 near the crossing.
    """

    name: str
    p: Callable
    q: Callable
    dp: Callable
    dq: Callable
    p_inf: Callable | None
    q_inf: Callable | None
    nu: float
    alpha_strip: float
    h6: tuple[float, float, float] | None = None
    dim: int = 2
    params: dict = field(default_factory=dict)

    # -- matrix evaluation -------------------------------------------------

    @property
    def has_limits(self) -> bool:
        return self.p_inf is not None

    def matrix(self, z, delta):
        """h(z, delta); z may be scalar or array, result shape (..., 2, 2)."""
        z = np.asarray(z)
        p = self.p(z, delta)
        q = self.q(z, delta)
        out = np.empty(z.shape + (2, 2), dtype=complex)
        out[..., 0, 0] = 0.5 * p
        out[..., 0, 1] = 0.5 * q
        out[..., 1, 0] = 0.5 * q
        out[..., 1, 1] = -0.5 * p
        return out

    def matrix_inf(self, sign: int, delta: float) -> np.ndarray:
        if not self.has_limits:
            raise ValueError(f"model {self.name!r} has no limits at infinity")
        p = self.p_inf(sign, delta)
        q = self.q_inf(sign, delta)
        return 0.5 * np.array([[p, q], [q, -p]], dtype=float)

    # -- scalar eigen-data -------------------------------------------------

    def rho(self, z, delta):
        """Discriminant (squared gap) p**2 + q**2."""
        return self.p(z, delta) ** 2 + self.q(z, delta) ** 2

    def drho(self, z, delta):
        return 2.0 * (
            self.p(z, delta) * self.dp(z, delta)
            + self.q(z, delta) * self.dq(z, delta)
        )

    def pq_inf(self, sign: int, delta: float) -> tuple[float, float]:
        if not self.has_limits:
            raise ValueError(f"model {self.name!r} has no limits at infinity")
        return self.p_inf(sign, delta), self.q_inf(sign, delta)

    def levels(self, x, delta):
        """Real-axis eigenvalues, shape (..., 2), ascending."""
        x = np.asarray(x, dtype=float)
        s = np.hypot(self.p(x, delta).real, self.q(x, delta).real)
        return np.stack([-0.5 * s, 0.5 * s], axis=-1)

    def level_inf(self, level: int, sign: int, delta: float) -> float:
        p, q = self.pq_inf(sign, delta)
        s = float(np.hypot(p, q))
        return -0.5 * s if level == 0 else 0.5 * s

    def spectrum_top(self, delta, x_span=40.0, n=2001):
        """sup over the real line of the highest level (limits included)."""
        x = np.linspace(-x_span, x_span, n)
        top = float(np.max(self.levels(x, delta)[..., 1]))
        if self.has_limits:
            top = max(
                top,
                self.level_inf(1, +1, delta),
                self.level_inf(1, -1, delta),
            )
        return top

    def crossing_seed(self, delta: float) -> complex:
        """Rough location of the upper-half-plane discriminant zero."""
        a, b, c = self.h6 if self.h6 else (1.0, 1.0, 0.0)
        return delta * complex(-c, np.sqrt(a * b * b - c * c)) / a


def _frame_arrays(model: ElectronicModel, x, delta):
    """Eigenvalues/vectors on a real grid from the closed 2x2 form.

    Returns values (n, 2) ascending and vectors (n, 2, 2) with
    vectors[:, :, j] the j-th eigenvector (real).
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    p = np.real(model.p(x, delta))
    q = np.real(model.q(x, delta))
    s = np.hypot(p, q)
    theta = 0.5 * np.arctan2(q, p)
    ct, st = np.cos(theta), np.sin(theta)
    values = np.stack([-0.5 * s, 0.5 * s], axis=-1)
    vectors = np.empty(x.shape + (2, 2))
    vectors[..., 0, 0] = -st
    vectors[..., 1, 0] = ct
    vectors[..., 0, 1] = ct
    vectors[..., 1, 1] = st
    return values, vectors


def eigenframe(model, x, delta, prev: EigenFrame | None = None) -> EigenFrame:
    """Sorted eigen-decomposition at one real point (or +/-inf).

    When ``prev`` is given, eigenvector phases are aligned with it so that
    repeated calls along a path realize the parallel-transport convention.
    """
    if np.isinf(x):
        h = model.matrix_inf(int(np.sign(x)), delta)
        values, vectors = np.linalg.eigh(h)
    elif model.dim == 2:
        values, vectors = _frame_arrays(model, x, delta)
        values, vectors = values[0], vectors[0]
    else:
        h = model.matrix(x, delta)
        values, vectors = np.linalg.eigh(h)
    gaps = np.diff(values)
    if np.min(gaps) < _GAP_TOL:
        raise DegenerateSpectrum(
            f"gap {np.min(gaps):.3e} below {_GAP_TOL} at x={x!r}"
        )
    vectors = np.array(vectors, dtype=complex)
    if prev is not None:
        for j in range(len(values)):
            ov = np.vdot(prev.vectors[:, j], vectors[:, j])
            if abs(ov) == 0.0:
                raise PathTooCoarse("orthogonal successive eigenvectors")
            vectors[:, j] *= np.conj(ov) / abs(ov)
    return EigenFrame(x=float(x), values=np.real(values), vectors=vectors)


def transport_frame(model, path, delta) -> list[EigenFrame]:
    """Eigenframes along a sampled real path with smooth phases.

    Each new frame is rotated by the phase of its overlap with the previous
    one, which discretizes the <phi_j, phi_j'> = 0 convention.  Raises
    ``PathTooCoarse`` if any successive overlap drops to 0.9 or below.
    """
    path = np.asarray(path, dtype=float)
    if model.dim == 2 and path.ndim == 1 and len(path) > 1:
        values, vectors = _frame_arrays(model, path, delta)
        if np.min(values[:, 1] - values[:, 0]) < _GAP_TOL:
            raise DegenerateSpectrum("gap collapsed along path")
        # sign-align both columns sequentially (real frames)
        ov = np.einsum("nik,nik->nk", vectors[:-1], vectors[1:])
        if np.any(np.abs(ov) <= 0.9):
            raise PathTooCoarse(
                f"min successive overlap {np.min(np.abs(ov)):.3f} <= 0.9"
            )
        flips = np.cumprod(np.where(ov < 0, -1.0, 1.0), axis=0)
        vectors[1:] *= flips[:, None, :]
        return [
            EigenFrame(x=float(x), values=v, vectors=w.astype(complex))
            for x, v, w in zip(path, values, vectors)
        ]
    frames = [eigenframe(model, path[0], delta)]
    for x in path[1:]:
        new = eigenframe(model, x, delta, prev=frames[-1])
        ov = [
            abs(np.vdot(frames[-1].vectors[:, j], new.vectors[:, j]))
            for j in range(model.dim)
        ]
        if min(ov) <= 0.9:
            raise PathTooCoarse(f"min successive overlap {min(ov):.3f} <= 0.9")
        frames.append(new)
    return frames


def _boundary_winding(model, delta, corners, n_side=400):
    """Winding number of rho around a rectangular box boundary."""
    zmin, zmax = corners
    x0, x1 = zmin.real, zmax.real
    y0, y1 = zmin.imag, zmax.imag
    t = np.linspace(0.0, 1.0, n_side, endpoint=False)
    edges = [
        x0 + t * (x1 - x0) + 1j * y0,
        x1 + 1j * (y0 + t * (y1 - y0)),
        x1 + (x0 - x1) * t + 1j * y1,
        x0 + 1j * (y1 + (y0 - y1) * t),
    ]
    z = np.concatenate(edges)
    vals = model.rho(z, delta)
    if np.min(np.abs(vals)) < 1e-14:
        # root sits on the boundary; nudge the caller to move the box
        raise MultipleRoots("discriminant zero on the search-box boundary")
    dphase = np.angle(vals / np.roll(vals, 1))
    if np.max(np.abs(dphase)) > 0.5 * np.pi:
        return _boundary_winding(model, delta, corners, n_side=2 * n_side)
    return int(round(np.sum(dphase) / (2.0 * np.pi)))


def find_complex_crossing(model, pair, delta, box) -> CrossingPoint:
    """Locate the discriminant zero of a level pair inside a complex box.

    Parameters
    ----------
    pair : (int, int)
        Adjacent level indices (held in the result; the 2x2 discriminant
        does not depend on them).
    box : (complex, complex)
        Lower-left and upper-right corners of the search rectangle.

    Returns the root with the smallest positive imaginary part; a root on
    the real axis (delta = 0 limit) is reported with Im z0 = 0.
    """
    if model.dim != 2:
        raise NoRootInBox("crossing search implemented for 2x2 models only")
    zmin, zmax = complex(box[0]), complex(box[1])
    winding = _boundary_winding(model, delta, (zmin, zmax))
    if winding == 0:
        raise NoRootInBox(f"no discriminant zero in box {box}")

    nx = ny = 25
    xs = np.linspace(zmin.real, zmax.real, nx)
    ys = np.linspace(zmin.imag, zmax.imag, ny)
    zg = xs[None, :] + 1j * ys[:, None]
    seeds = zg.ravel()[np.argsort(np.abs(model.rho(zg, delta).ravel()))][:8]

    roots = []
    for z in seeds:
        z = complex(z)
        for _ in range(60):
            f = model.rho(z, delta)
            df = model.drho(z, delta)
            if df == 0:
                break
            step = f / df
            z = z - step
            if abs(step) < 1e-15 * max(1.0, abs(z)):
                break
        if not (
            zmin.real - 1e-12 <= z.real <= zmax.real + 1e-12
            and zmin.imag - 1e-12 <= z.imag <= zmax.imag + 1e-12
        ):
            continue
        df = model.drho(z, delta)
        if df == 0 or abs(model.rho(z, delta) / df) > 1e-12 * max(1.0, abs(z)):
            continue
        if not any(abs(z - r) < 1e-8 for r in roots):
            roots.append(z)
    if not roots:
        raise NoRootInBox(f"Newton found no converged root in box {box}")
    if winding > 1 and len(roots) > 1:
        raise MultipleRoots(f"{len(roots)} crossings in box {box}; shrink it")
    positive = [r for r in roots if r.imag > 1e-13]
    z0 = min(positive, key=lambda r: r.imag) if positive else roots[0]
    if abs(z0.imag) <= 1e-13:
        z0 = complex(z0.real, 0.0)
    residual = float(np.abs(np.sqrt(model.rho(z0, delta))))
    return CrossingPoint(
        z0=z0, levels=tuple(pair), residual=residual, delta=float(delta)
    )


# -- registry ----------------------------------------------------------------


def _tanh_model() -> ElectronicModel:
    return ElectronicModel(
        name="tanh",
        p=lambda z, d: d * np.ones_like(np.asarray(z, dtype=complex)),
        q=lambda z, d: np.tanh(np.asarray(z, dtype=complex)),
        dp=lambda z, d: np.zeros_like(np.asarray(z, dtype=complex)),
        dq=lambda z, d: 1.0 / np.cosh(np.asarray(z, dtype=complex)) ** 2,
        p_inf=lambda sign, d: d,
        q_inf=lambda sign, d: float(sign),
        nu=1.5,
        alpha_strip=1.45,
        h6=(1.0, 1.0, 0.0),
    )


def _lz_model() -> ElectronicModel:
    # bounded realization of the generic gap sqrt(x**2 + delta**2):
    # the diabatic sweep saturates at +/-1 so scattering limits exist
    return ElectronicModel(
        name="lz",
        p=lambda z, d: np.tanh(np.asarray(z, dtype=complex)),
        q=lambda z, d: d * np.ones_like(np.asarray(z, dtype=complex)),
        dp=lambda z, d: 1.0 / np.cosh(np.asarray(z, dtype=complex)) ** 2,
        dq=lambda z, d: np.zeros_like(np.asarray(z, dtype=complex)),
        p_inf=lambda sign, d: float(sign),
        q_inf=lambda sign, d: d,
        nu=1.5,
        alpha_strip=1.45,
        h6=(1.0, 1.0, 0.0),
    )


def _h6_model(a=1.0, b=1.0, c=0.0) -> ElectronicModel:
    if not (a > 0 and b > 0 and c * c < a * b * b):
        raise ValueError("h6 family needs a > 0, b > 0, c**2 < a*b**2")
    sa = np.sqrt(a)
    qc = np.sqrt(b * b - c * c / a)
    return ElectronicModel(
        name="h6",
        p=lambda z, d: sa * np.asarray(z, dtype=complex) + (c / sa) * d,
        q=lambda z, d: qc * d * np.ones_like(np.asarray(z, dtype=complex)),
        dp=lambda z, d: sa * np.ones_like(np.asarray(z, dtype=complex)),
        dq=lambda z, d: np.zeros_like(np.asarray(z, dtype=complex)),
        p_inf=None,
        q_inf=None,
        nu=1.5,
        alpha_strip=np.inf,
        h6=(a, b, c),
        params={"a": a, "b": b, "c": c},
    )


MODEL_NAMES = ("tanh", "lz", "h6")


def get_model(name: str, **params) -> ElectronicModel:
    """Instantiate a registry family by name.

    ``tanh``  - the fixed-structure model with constant diagonal delta and
                tanh off-diagonal (delta = 1 reproduces the standard setup
                with minimum gap 1 and crossing at i*pi/4).
    ``lz``    - bounded diabatic-sweep family, gap sqrt(tanh(x)**2+delta**2).
    ``h6``    - exact linear local family with parameters a, b, c; gap**2
                is exactly a x**2 + 2 c x delta + b**2 delta**2 (no limits
                at infinity, contour/expansion work only).
    """
    if name == "tanh":
        return _tanh_model()
    if name == "lz":
        return _lz_model()
    if name == "h6":
        return _h6_model(**params)
    raise ValueError(f"unknown model {name!r}; choose from {MODEL_NAMES}")
