"""Exception hierarchy shared across the package."""


class LzlabError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(LzlabError):
    """Invalid or inconsistent run configuration."""


class DegenerateSpectrum(LzlabError):
    """Eigenvalue gap fell below the resolvable threshold at a real point."""


class PathTooCoarse(LzlabError):
    """Successive eigenvector overlap too small for reliable phase transport."""


class NoRootInBox(LzlabError):
    """Complex root search found no discriminant zero in the given box."""


class MultipleRoots(LzlabError):
    """Complex root search box contains more than one discriminant zero."""


class BranchJump(LzlabError):
    """Branch tracking detected an unresolvable jump between samples."""


class LoopHitsCrossing(LzlabError):
    """Integration contour passes too close to a crossing point."""


class SlowDecay(LzlabError):
    """Tail of an asymptotic integrand decays slower than the declared rate."""


class WindowTooLow(LzlabError):
    """Energy window does not sit above the electronic spectrum."""


class CutoffClipsMass(LzlabError):
    """Energy cutoff removes a non-negligible share of the predicted transition."""


class MinimumAtBoundary(LzlabError):
    """Decay-rate minimizer sits at (or too close to) the window edge."""


class DegenerateMinimum(LzlabError):
    """Decay-rate minimum has vanishing or negative curvature."""


class MultipleMinima(LzlabError):
    """Two local minima of the decay rate are too close to disambiguate."""


class GridTooNarrow(LzlabError):
    """Spatial grid does not contain the wavepacket to the required mass."""


class NyquistViolation(LzlabError):
    """Significant wavefunction mass in the top decade of the momentum grid."""


class BoundaryContamination(LzlabError):
    """Wavefunction mass reached the edge of the periodic simulation box."""


class QuadratureStalled(LzlabError):
    """Adaptive quadrature failed to converge within the refinement budget."""


class ToleranceNotMet(LzlabError):
    """ODE integration could not meet the requested local tolerance."""


class TailTooFat(LzlabError):
    """Coupling tail beyond the integration range exceeds the error budget."""


class MassTooSmall(LzlabError):
    """Level population too small for a meaningful moment fit."""
