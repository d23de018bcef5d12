"""Exception taxonomy shared across the package."""

from __future__ import annotations


class CausticDesignError(Exception):
    """Base class for all package errors."""


# --- measures ---------------------------------------------------------------

class AllBlackImage(CausticDesignError):
    """Every pixel of a target image is zero."""


class HemisphereViolation(CausticDesignError):
    """A target direction falls outside the admissible hemisphere/region."""


class EmptySupport(CausticDesignError):
    """A source specification has identically-zero density."""


# --- optics -----------------------------------------------------------------

class TotalInternalReflection(CausticDesignError):
    """Refraction is impossible at the given incidence angle."""


class DegenerateDirection(CausticDesignError):
    """Facet slope is undefined for this outgoing direction."""


class DenominatorSign(CausticDesignError):
    """A point-source lens radial denominator is non-positive on the domain."""


class NonPositiveWeight(CausticDesignError):
    """Point-source weights must be strictly positive."""


class DegeneratePair(CausticDesignError):
    """Incident/outgoing pair does not determine a surface normal."""


# --- solver -----------------------------------------------------------------

class InitialEmptyCell(CausticDesignError):
    """Some cell has zero mass at the initial weights."""


class BacktrackExhausted(CausticDesignError):
    """Damped Newton backtracking exceeded the allowed number of halvings."""


class IterationLimit(CausticDesignError):
    """Newton iteration budget exhausted before reaching the tolerance."""


class LinearSolveFailure(CausticDesignError):
    """Conjugate gradient failed to reach its tolerance."""


# --- nearfield / surface ----------------------------------------------------

class EmptyCell(CausticDesignError):
    """Requested a centroid of an empty cell."""


class EmptyCellMesh(CausticDesignError):
    """Cannot mesh a diagram that has empty cells."""


# --- simulate ---------------------------------------------------------------

class NoIntersectionMesh(CausticDesignError):
    """Most rays missed the mesh; geometry is misconfigured."""


class DimensionMismatch(CausticDesignError):
    """Simulation result and target measure have different sizes."""
