"""Branch-tracked contour integrals around complex crossing points.

Loops are closed paths based at the origin: a straight stem from 0 to the
circle around the crossing point, the circle itself, and the stem back.
All integrands are continued along the path by keeping the square roots
(inner: the discriminant; outer: the local momentum) continuous from their
real-axis values at the base point.  After one negatively oriented circuit
the levels swap sheets, so the two stem traversals do not cancel; their sum
carries the branch-cut part of the action and is reported for diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BranchJump, LoopHitsCrossing
from .models import CrossingPoint, ElectronicModel, _frame_arrays

__all__ = [
    "ContourLoop",
    "LoopIntegrals",
    "make_loop",
    "make_circle_loop",
    "loop_integrals",
    "action_integral",
    "geometric_prefactor",
    "level_action",
]

_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)
_LEVEL_SIGN = (-1.0, 1.0)


@dataclass(frozen=True)
class ContourLoop:
    """Closed integration path based at ``base``.

    ``segments`` is an ordered list of ("line", za, zb) and
    ("arc", center, radius, th0, th1) entries; th1 < th0 gives the negative
    (clockwise) orientation used for crossings in the upper half plane.
    """

    segments: tuple
    orientation: int
    crossing: CrossingPoint | None = None
    base: complex = 0.0 + 0.0j

    def nodes(self, refine: int = 0):
        """Gauss-Legendre nodes and weights along the path, in path order."""
        zs, ws = [], []
        for seg in self.segments:
            if seg[0] == "line":
                _, za, zb = seg
                length = abs(zb - za)
                if length == 0.0:
                    continue
                scale = self._panel_scale()
                n_pan = max(2, int(np.ceil(length / scale))) * 2 ** refine
                cuts = np.linspace(0.0, 1.0, n_pan + 1)
                for t0, t1 in zip(cuts[:-1], cuts[1:]):
                    tm = 0.5 * (t0 + t1) + 0.5 * (t1 - t0) * _GL_X
                    zs.append(za + (zb - za) * tm)
                    ws.append((zb - za) * 0.5 * (t1 - t0) * _GL_W)
            else:
                _, zc, r, th0, th1 = seg
                n_pan = 8 * 2 ** refine
                cuts = np.linspace(th0, th1, n_pan + 1)
                for t0, t1 in zip(cuts[:-1], cuts[1:]):
                    tm = 0.5 * (t0 + t1) + 0.5 * (t1 - t0) * _GL_X
                    zs.append(zc + r * np.exp(1j * tm))
                    ws.append(1j * r * np.exp(1j * tm) * 0.5 * (t1 - t0) * _GL_W)
        return np.concatenate(zs), np.concatenate(ws)

    def _panel_scale(self) -> float:
        for seg in self.segments:
            if seg[0] == "arc":
                return max(seg[2] / 2.0, 1e-6)
        return max(
            max(abs(s[2] - s[1]) for s in self.segments if s[0] == "line")
            / 8.0,
            1e-6,
        )

    def winding_about(self, z: complex, refine: int = 2) -> int:
        zs, _ = self.nodes(refine)
        rel = zs - z
        dphi = np.angle(rel / np.roll(rel, 1))
        return int(round(np.sum(dphi) / (2.0 * np.pi)))


@dataclass
class LoopIntegrals:
    """Tracked contour integrals of momentum powers at fixed level."""

    gamma: np.ndarray
    dgamma: np.ndarray
    d2gamma: np.ndarray
    level_action: complex
    refine: int
    parts: dict = field(default_factory=dict)


def make_circle_loop(center: complex, radius: float, orientation: int = -1,
                     base: complex = 0.0) -> ContourLoop:
    """Circle + two-way stem from ``base``; orientation -1 is clockwise."""
    center = complex(center)
    direction = center - base
    if abs(direction) <= radius:
        raise ValueError("base point lies inside the circle")
    z_entry = center - radius * direction / abs(direction)
    th0 = float(np.angle(z_entry - center))
    th1 = th0 - orientation * (-2.0 * np.pi)
    segments = (
        ("line", complex(base), z_entry),
        ("arc", center, float(radius), th0, th1),
        ("line", z_entry, complex(base)),
    )
    return ContourLoop(segments=segments, orientation=orientation, base=base)


def make_loop(model: ElectronicModel, crossing: CrossingPoint,
              radius: float | None = None,
              conjugate: bool = False) -> ContourLoop:
    """Standard loop for a crossing: clockwise circle for Im z0 > 0.

    With ``conjugate`` the loop encircles the mirror crossing conj(z0) with
    the opposite (counterclockwise) orientation; this is the loop that makes
    the decay rate of an incoming *upper*-level wave positive.  The radius
    defaults to min(|Im z0|/2, 90% of the remaining strip width) and must
    clear the crossing by at least 1e-3 |Im z0|.
    """
    z0 = crossing.z0
    if z0.imag == 0.0:
        raise LoopHitsCrossing("crossing sits on the real axis (delta = 0)")
    if conjugate:
        z0 = np.conj(z0)
    margin = (model.alpha_strip - abs(z0.imag)) * 0.9
    if not np.isfinite(margin):
        margin = abs(z0.imag) / 2.0
    r = radius if radius is not None else min(abs(z0.imag) / 2.0, margin)
    if r < 1e-3 * abs(z0.imag):
        raise LoopHitsCrossing(
            f"loop radius {r:.3e} below 1e-3 |Im z0| = {1e-3 * abs(z0.imag):.3e}"
        )
    orientation = -1 if z0.imag > 0 else +1
    return ContourLoop(
        segments=make_circle_loop(z0, r, orientation).segments,
        orientation=orientation,
        crossing=crossing,
    )


def _track_discriminant_root(model, delta, zs):
    """Continued sqrt(rho) along ordered nodes, starting on the real sheet."""
    rho = model.rho(zs, delta)
    s_raw = np.sqrt(rho.astype(complex))
    s0 = np.sqrt(complex(model.rho(0.0, delta)))
    out = np.empty_like(s_raw)
    run = s0
    for i, cand in enumerate(s_raw):
        pick = cand if abs(cand - run) <= abs(-cand - run) else -cand
        if abs(pick - run) > 0.5 * (abs(pick) + abs(run)) + 1e-14:
            raise BranchJump(
                f"discriminant-root jump at node {i} (z={zs[i]:.4f})"
            )
        out[i] = pick
        run = pick
    return out


def _track_momentum(e_vals, E, k0):
    """Continued sqrt(2(E - e)) along nodes, vectorized over energies E."""
    run = np.array(k0, dtype=complex)
    n = len(e_vals)
    out = np.empty((n,) + run.shape, dtype=complex)
    for i in range(n):
        cand = np.sqrt(2.0 * (E - e_vals[i]).astype(complex))
        flip = np.abs(cand - run) > np.abs(-cand - run)
        cand = np.where(flip, -cand, cand)
        if np.any(np.abs(cand - run) > 0.5 * (np.abs(cand) + np.abs(run)) + 1e-14):
            raise BranchJump(f"momentum-branch jump at node {i}")
        out[i] = cand
        run = cand
    return out


def _loop_pass(model, delta, loop, level, E, refine):
    zs, ws = loop.nodes(refine)
    if loop.crossing is not None:
        z0 = loop.crossing.z0
        if np.min(np.abs(zs - z0)) < 1e-3 * abs(z0.imag):
            raise LoopHitsCrossing("contour node within 1e-3 |Im z0| of z0")
    s = _track_discriminant_root(model, delta, zs)
    sign = _LEVEL_SIGN[level]
    e_vals = sign * 0.5 * s
    E = np.atleast_1d(np.asarray(E, dtype=float))
    e0 = sign * 0.5 * np.sqrt(complex(model.rho(0.0, delta)))
    k0 = np.sqrt(2.0 * (E - e0))
    k = _track_momentum(e_vals, E, k0)
    gamma = np.einsum("n,n...->...", ws, k)
    dgamma = np.einsum("n,n...->...", ws, 1.0 / k)
    d2gamma = -np.einsum("n,n...->...", ws, 1.0 / k ** 3)
    lev = complex(np.sum(ws * e_vals))
    return gamma, dgamma, d2gamma, lev


def loop_integrals(model, delta, loop, level, E,
                   rtol: float = 1e-10, atol: float = 5e-13,
                   max_refine: int = 6) -> LoopIntegrals:
    """Contour action and its first two energy derivatives.

    gamma(E) is the closed-loop integral of the continued momentum
    sqrt(2(E - e_level(z))); dgamma and d2gamma integrate 1/k and -1/k^3.
    Node panels are doubled until two consecutive levels agree to ``rtol``
    relative (``atol`` floor, which also serves null loops).
    """
    prev = None
    for refine in range(max_refine + 1):
        try:
            vals = _loop_pass(model, delta, loop, level, E, refine)
        except BranchJump:
            if refine == max_refine:
                raise
            continue
        if prev is not None:
            err = np.max(np.abs(vals[0] - prev[0]))
            if err <= max(rtol * np.max(np.abs(vals[0])), atol):
                gamma, dgamma, d2gamma, lev = vals
                scalar = np.isscalar(E) or np.asarray(E).ndim == 0
                if scalar:
                    gamma, dgamma, d2gamma = (
                        complex(gamma[0]), complex(dgamma[0]),
                        complex(d2gamma[0]),
                    )
                return LoopIntegrals(
                    gamma=gamma, dgamma=dgamma, d2gamma=d2gamma,
                    level_action=lev, refine=refine,
                )
        prev = vals
    raise BranchJump(
        f"contour quadrature did not converge within {max_refine} refinements"
    )


def action_integral(model, loop, level, E, delta, **kw):
    """Closed-loop momentum action for one level; E scalar or array."""
    return loop_integrals(model, delta, loop, level, E, **kw).gamma


def level_action(model, loop, level, delta, **kw):
    """Closed-loop integral of the electronic level itself."""
    probe = np.array([1.0 + model.spectrum_top(delta) if model.has_limits
                      else 10.0])
    return loop_integrals(model, delta, loop, level, probe, **kw).level_action


def _eigvec_candidate(p, q, s, sign):
    """Bilinearly normalized eigenvector for eigenvalue sign*s/2."""
    ss = sign * s
    if abs(ss + p) >= abs(ss - p):
        v = np.array([p + ss, q], dtype=complex)
        nrm2 = 2.0 * ss * (ss + p)
    else:
        v = np.array([q, ss - p], dtype=complex)
        nrm2 = 2.0 * ss * (ss - p)
    return v / np.sqrt(nrm2)


def geometric_prefactor(model, loop, level, delta,
                        rtol: float = 1e-9, max_refine: int = 6):
    """Eigenvector monodromy phase theta of one circuit of the loop.

    The level-``level`` eigenvector is continued along the loop with the
    bilinear (unconjugated) pairing; on return to the base point it equals
    exp(-i theta) times the real-axis frame vector of the permuted level.
    Returns (theta, permuted_level).
    """
    base = complex(loop.base)
    s_base = np.sqrt(complex(model.rho(base, delta)))
    sign = _LEVEL_SIGN[level]
    prev_theta = None
    for refine in range(max_refine + 1):
        zs, _ = loop.nodes(refine)
        zs = np.append(zs, base)  # finish exactly at the base point
        s = _track_discriminant_root(model, delta, zs)
        p = model.p(zs, delta)
        q = model.q(zs, delta)

        _, vecs0 = _frame_arrays(model, base.real, delta)
        vec = vecs0[0][:, level].astype(complex)
        ok = True
        for i in range(len(zs)):
            cand = _eigvec_candidate(complex(p[i]), complex(q[i]),
                                     complex(s[i]), sign)
            ov = np.sum(vec * cand)
            if abs(ov) < 0.5:
                ok = False
                break
            if abs(ov - 1.0) > abs(ov + 1.0):
                cand = -cand
            vec = cand
        if not ok:
            if refine == max_refine:
                raise BranchJump("eigenvector continuation lost the sheet")
            continue
        # the tracked root at the base tells which level the vector landed on
        swapped = abs(s[-1] + s_base) < abs(s[-1] - s_base)
        target = (1 - level) if swapped else level
        phi_target = vecs0[0][:, target].astype(complex)
        w = np.sum(phi_target * vec)
        theta = complex(1j * np.log(w))
        if prev_theta is not None and abs(theta - prev_theta) <= rtol:
            return theta, target
        prev_theta = theta
    raise BranchJump("monodromy phase did not converge")
