"""The eight component variants: Snell operations, facet slopes, weighted
points, direct cell predicates, surface parameterizations and the change of
variables used by the transport solver.

Conventions
-----------
Collimated sources travel along +e_z from a z=0 planar domain; point sources
radiate from the origin through a spherical-cap domain. For the point-source
variants the natural weight psi_i > 0 is the radial parameter of the i-th
primitive (paraboloid for mirrors, conic for lenses):

    mirror: r_i(x) = psi_i / (1 - <x, y_i>)
    lens:   r_i(x) = psi_i / (kappa <x, y_i> - 1),  kappa <x, y> > 1 on the domain

A convex component is the boundary of the intersection of the solid
primitives (argmin of r_i over i); a concave one is the boundary of their
union (argmax). In all eight cases the cells are power (Laguerre) cells of a
weighted point set, and in the transport variables (psi itself for collimated
sources, +-ln psi for point sources) the mass Jacobian is symmetric negative
semidefinite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateDirection,
    DegeneratePair,
    DenominatorSign,
    NonPositiveWeight,
    TotalInternalReflection,
)
from .measures import TargetMeasure

EZ = np.array([0.0, 0.0, 1.0])

VARIANT_NAMES = {
    "cs-mirror-convex": ("collimated", "mirror", "convex"),
    "cs-mirror-concave": ("collimated", "mirror", "concave"),
    "cs-lens-convex": ("collimated", "lens", "convex"),
    "cs-lens-concave": ("collimated", "lens", "concave"),
    "ps-mirror-intersection": ("point", "mirror", "convex"),
    "ps-mirror-union": ("point", "mirror", "concave"),
    "ps-lens-intersection": ("point", "lens", "convex"),
    "ps-lens-union": ("point", "lens", "concave"),
}


@dataclass(frozen=True)
class ProblemSpec:
    """One of the eight design problems.

    envelope "convex" means intersection of the solid primitives (max-type
    graph for collimated sources), "concave" the union (min-type graph).
    kappa is the refraction-index ratio of the lens problems.
    """

    source_kind: str = "collimated"     # "collimated" | "point"
    component: str = "mirror"           # "mirror" | "lens"
    envelope: str = "convex"            # "convex" | "concave"
    kappa: float = 1.5

    def __post_init__(self) -> None:
        if self.source_kind not in ("collimated", "point"):
            raise ValueError(f"unknown source kind {self.source_kind!r}")
        if self.component not in ("mirror", "lens"):
            raise ValueError(f"unknown component {self.component!r}")
        if self.envelope not in ("convex", "concave"):
            raise ValueError(f"unknown envelope {self.envelope!r}")
        if self.component == "lens":
            if self.kappa <= 0:
                raise ValueError("lens problems require kappa > 0")
            if self.source_kind == "point" and self.kappa <= 1:
                raise ValueError("point-source lens requires kappa > 1")

    @property
    def name(self) -> str:
        for name, tup in VARIANT_NAMES.items():
            if tup == (self.source_kind, self.component, self.envelope):
                return name
        raise AssertionError

    @staticmethod
    def from_name(name: str, kappa: float = 1.5) -> "ProblemSpec":
        try:
            src, comp, env = VARIANT_NAMES[name]
        except KeyError:
            raise ValueError(f"unknown problem variant {name!r}") from None
        return ProblemSpec(src, comp, env, kappa)

    @property
    def is_union(self) -> bool:
        return self.envelope == "concave"

    @property
    def hemisphere(self) -> str:
        """Admissible hemisphere for far-field target directions."""
        return "lower" if self.component == "mirror" else "upper"

    @property
    def snell_ratio(self) -> float | None:
        """Effective Snell ratio (sin_out = ratio * sin_in) realized by the
        designed surface; None for mirrors.

        The collimated lens refracts at its top face leaving the dense medium
        (ratio kappa); the point-source lens conics refract into the dense
        medium (ratio 1/kappa).
        """
        if self.component == "mirror":
            return None
        return self.kappa if self.source_kind == "collimated" else 1.0 / self.kappa

    @property
    def domain_kind(self) -> str:
        return "plane" if self.source_kind == "collimated" else "sphere"


@dataclass
class WeightVector:
    """Design weights, either natural psi or transport variables psi-tilde."""

    values: np.ndarray
    representation: str = "natural"     # "natural" | "transport"

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.representation not in ("natural", "transport"):
            raise ValueError(f"unknown representation {self.representation!r}")

    def __len__(self) -> int:
        return len(self.values)

    def natural(self, spec: ProblemSpec) -> np.ndarray:
        if self.representation == "natural":
            return self.values
        return from_transport_vars(spec, self.values)

    def transport(self, spec: ProblemSpec) -> np.ndarray:
        if self.representation == "transport":
            return self.values
        return to_transport_vars(spec, self.values)


def _as_natural(spec: ProblemSpec, psi) -> np.ndarray:
    if isinstance(psi, WeightVector):
        return psi.natural(spec)
    return np.atleast_1d(np.asarray(psi, dtype=np.float64))


# ---------------------------------------------------------------------------
# Snell primitives
# ---------------------------------------------------------------------------

def reflect(d: np.ndarray, n: np.ndarray) -> np.ndarray:
    """Mirror reflection d - 2<n,d>n; broadcasts over leading axes."""
    d = np.asarray(d, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    dn = np.sum(d * n, axis=-1, keepdims=True)
    return d - 2.0 * dn * n


def refract_many(d: np.ndarray, n: np.ndarray, kappa: float) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized refraction with sin_out = kappa * sin_in.

    Requires <d, n> < 0 (the normal faces the incoming ray). Returns the unit
    outgoing directions and a boolean mask that is False where total internal
    reflection occurs (those output rows are unspecified).
    """
    d = np.asarray(d, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    cos_in = -np.sum(d * n, axis=-1)
    disc = 1.0 - kappa**2 * (1.0 - cos_in**2)
    ok = disc >= 0.0
    root = np.sqrt(np.where(ok, disc, 0.0))
    gamma = kappa * cos_in - root
    return kappa * d + gamma[..., None] * n, ok


def refract(d: np.ndarray, n: np.ndarray, kappa: float) -> np.ndarray:
    """Single-bundle refraction; raises TotalInternalReflection when impossible."""
    t, ok = refract_many(d, n, kappa)
    if not np.all(ok):
        raise TotalInternalReflection("refraction impossible at this incidence")
    return t


def normal_from_snell(spec: ProblemSpec, d: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Exact unit surface normal sending incident d to outgoing y.

    Mirror: n ~ d - y; lens: n ~ q d - y with q the variant's Snell ratio.
    The sign is fixed so that <n, d> < 0. Broadcasts over leading axes.
    """
    d = np.asarray(d, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    q = 1.0 if spec.component == "mirror" else spec.snell_ratio
    v = q * d - y
    nv = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(nv < 1e-12):
        raise DegeneratePair("incident and outgoing rays do not determine a normal")
    n = v / nv
    sign = np.where(np.sum(n * d, axis=-1, keepdims=True) > 0, -1.0, 1.0)
    return n * sign


# ---------------------------------------------------------------------------
# Facet slopes and weighted points
# ---------------------------------------------------------------------------

def facet_slope(spec: ProblemSpec, y: np.ndarray) -> np.ndarray:
    """Slope p of the plane z = <x, p> that sends vertical rays to y.

    Collimated variants only; the same slope serves both envelopes (the
    envelope changes how facets assemble, not each facet's optics).
    """
    if spec.source_kind != "collimated":
        raise ValueError("facet slopes are defined for collimated sources only")
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    kappa = 1.0 if spec.component == "mirror" else spec.kappa
    den = y[:, 2] - kappa
    if np.any(np.abs(den) < 1e-12):
        raise DegenerateDirection("outgoing direction makes the slope singular")
    return -y[:, :2] / den[:, None]


def weighted_point(spec: ProblemSpec, y: np.ndarray, psi) -> tuple[np.ndarray, np.ndarray]:
    """Weighted points (p_i, omega_i) whose power cells are the visibility cells.

    Returns (N, 3) points and (N,) weights for the comparison
    ||x - p_i||^2 + omega_i restricted to the source domain. Concave/union
    rows carry the opposite point sign from their convex/intersection
    counterparts.
    """
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    psi = _as_natural(spec, psi)
    if spec.source_kind == "collimated":
        slope = facet_slope(spec, y)
        sign = -1.0 if spec.is_union else 1.0
        p = np.zeros((len(y), 3))
        p[:, :2] = sign * slope
        omega = 2.0 * psi - np.einsum("ij,ij->i", p, p)
        return p, omega

    if np.any(psi <= 0):
        raise NonPositiveWeight("point-source weights must be positive")
    if spec.component == "mirror":
        p = -y / (2.0 * psi[:, None])
        c = -1.0 / psi
    else:
        p = spec.kappa * y / (2.0 * psi[:, None])
        c = 1.0 / psi
    if spec.is_union:
        p = -p
        c = -c
    omega = c - np.einsum("ij,ij->i", p, p)
    return p, omega


# ---------------------------------------------------------------------------
# Direct cell predicates and parameterization
# ---------------------------------------------------------------------------

def _target_directions(targets) -> np.ndarray:
    if isinstance(targets, TargetMeasure):
        return targets.directions
    return np.atleast_2d(np.asarray(targets, dtype=np.float64))


def radial_denominators(spec: ProblemSpec, x: np.ndarray, targets) -> np.ndarray:
    """a(x, y_i): 1 - <x,y_i> for mirrors, kappa <x,y_i> - 1 for lenses; (B, N)."""
    y = _target_directions(targets)
    dots = np.atleast_2d(x) @ y.T
    if spec.component == "mirror":
        return 1.0 - dots
    return spec.kappa * dots - 1.0


def _radial_values(spec: ProblemSpec, psi: np.ndarray, x: np.ndarray, targets) -> np.ndarray:
    a = radial_denominators(spec, x, targets)
    if spec.component == "lens" and np.any(a <= 0):
        raise DenominatorSign("point-source lens denominator non-positive at a query point")
    if np.any(psi <= 0):
        raise NonPositiveWeight("point-source weights must be positive")
    with np.errstate(divide="ignore"):
        return np.where(a > 0, psi[None, :] / np.where(a > 0, a, 1.0), np.inf)


def cell_predicate(spec: ProblemSpec, targets, psi, x: np.ndarray) -> np.ndarray:
    """Cell index owning each domain point, by the direct inequalities.

    Independent of the power-diagram reduction (it serves as its oracle).
    Ties break toward the smaller index.
    """
    values = _as_natural(spec, psi)
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if spec.source_kind == "collimated":
        slopes = facet_slope(spec, _target_directions(targets))
        proj = x[:, :2] @ slopes.T
        scores = proj + values[None, :] if spec.is_union else values[None, :] - proj
        return np.argmin(scores, axis=1)

    r = _radial_values(spec, values, x, targets)
    return np.argmax(r, axis=1) if spec.is_union else np.argmin(r, axis=1)


def parameterize(spec: ProblemSpec, targets, psi, x: np.ndarray) -> np.ndarray:
    """Surface point above (collimated) or along (point source) each x."""
    values = _as_natural(spec, psi)
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if spec.source_kind == "collimated":
        slopes = facet_slope(spec, _target_directions(targets))
        proj = x[:, :2] @ slopes.T
        if spec.is_union:
            z = (proj + values[None, :]).min(axis=1)
        else:
            z = (proj - values[None, :]).max(axis=1)
        return np.column_stack([x[:, 0], x[:, 1], z])

    xhat = x / np.linalg.norm(x, axis=1, keepdims=True)
    r = _radial_values(spec, values, xhat, targets)
    rad = r.max(axis=1) if spec.is_union else r.min(axis=1)
    return rad[:, None] * xhat


# ---------------------------------------------------------------------------
# Initial weights and transport variables
# ---------------------------------------------------------------------------

def initial_weights(spec: ProblemSpec, targets: TargetMeasure,
                    source=None, fill: float = 0.85) -> WeightVector:
    """Default initial weights.

    Collimated: psi_i = ||p_i||^2 / 2, which zeroes every power weight and
    turns the diagram into the Voronoi diagram of the points. Point source:
    uniform e^-1 (scale-equivalent to all-ones, and already normalized so the
    transport variables peak at -1).

    For collimated problems a source may be passed, in which case the
    diagram is instead the Voronoi diagram of the points affinely rescaled
    to cover ``fill`` of the source extent (psi_i = ||q_i||^2 / (2 s) with
    q_i = c + s (p_i - mean p)); this balances the initial masses when the
    screen geometry concentrates or spreads the points relative to the
    source, and reduces to the plain rule when s = 1, c = mean p.
    """
    if spec.source_kind != "collimated":
        return WeightVector(np.full(targets.count, np.exp(-1.0)), "natural")

    slopes = facet_slope(spec, targets.directions)
    sign = -1.0 if spec.is_union else 1.0
    p = sign * slopes
    if source is None or len(p) < 2:
        return WeightVector(0.5 * np.einsum("ij,ij->i", p, p), "natural")

    v = source.mesh.vertices[:, :2]
    src_lo, src_hi = v.min(axis=0), v.max(axis=0)
    p_lo, p_hi = p.min(axis=0), p.max(axis=0)
    span = np.maximum(p_hi - p_lo, 1e-12 * max(np.max(src_hi - src_lo), 1.0))
    s = float(fill * np.min((src_hi - src_lo) / span))
    if not np.isfinite(s) or s <= 0:
        return WeightVector(0.5 * np.einsum("ij,ij->i", p, p), "natural")
    q = (src_lo + src_hi) / 2 + s * (p - p.mean(axis=0))
    return WeightVector(0.5 * np.einsum("ij,ij->i", q, q) / s, "natural")


def to_transport_vars(spec: ProblemSpec, psi: np.ndarray) -> np.ndarray:
    """psi -> psi-tilde: identity (collimated), +-ln psi (point source).

    Union point-source variants use -ln psi so that the transport Jacobian is
    negative semidefinite for every variant.
    """
    psi = np.asarray(psi, dtype=np.float64)
    if spec.source_kind == "collimated":
        return psi.copy()
    if np.any(psi <= 0):
        raise NonPositiveWeight("cannot take the log of non-positive weights")
    return -np.log(psi) if spec.is_union else np.log(psi)


def from_transport_vars(spec: ProblemSpec, phi: np.ndarray) -> np.ndarray:
    phi = np.asarray(phi, dtype=np.float64)
    if spec.source_kind == "collimated":
        return phi.copy()
    return np.exp(-phi) if spec.is_union else np.exp(phi)


def renormalize_transport(spec: ProblemSpec, phi: np.ndarray) -> np.ndarray:
    """Shift point-source transport variables so max = -1 (cells unchanged)."""
    if spec.source_kind == "collimated":
        return phi
    return phi - (phi.max() + 1.0)
