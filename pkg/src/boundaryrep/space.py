"""Model-independent hyperbolic-space operations.

Everything here works through a small oracle surface that each concrete
model (free-group tree, hyperbolic disk) implements:

    basepoint, delta, quotient_radius, critical_exponent,
    dist(x, y), gromov(x, y, base), is_boundary(obj),
    direction(q), ray_point(q, s), thicken(U, a)

The generic layer stores no coordinates of its own; tree quantities stay
exact (Fractions), disk quantities are floats.  ``gromov`` may return
``math.inf`` for coincident boundary points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any


class GeometryError(ValueError):
    pass


class InfiniteProductError(GeometryError):
    """Gromov product of a boundary point with itself."""


def _as_float(v) -> float:
    return float(v)


def gromov_product(model, x, y, base=None):
    """(x|y)_base = (d(x,base) + d(y,base) - d(x,y)) / 2, extended to the boundary.

    Returns the model's exact scalar type for interior arguments; boundary
    arguments delegate to the model oracle.  Coincident boundary points give
    an infinite product, reported as an error so callers never silently
    propagate inf through exact code paths.
    """
    if base is None:
        base = model.basepoint
    p = model.gromov(x, y, base)
    if p == math.inf:
        raise InfiniteProductError("Gromov product of a boundary point with itself")
    return p


def busemann_cocycle(model, b, x, y):
    """Horofunction increment along b between interior points x and y.

    Defined as d(x,y) - 2*(y|b)_x; satisfies the cocycle identity
    beta_b(x,y) + beta_b(y,z) = beta_b(x,z) (exactly on the tree, to
    rounding on the disk) and beta_b(p,q) = -d(p,q) when q lies on the
    ray from p to b.
    """
    if not model.is_boundary(b):
        raise GeometryError("first argument must be a boundary point")
    if model.is_boundary(x) or model.is_boundary(y):
        raise GeometryError("cocycle endpoints must be interior points")
    return model.dist(x, y) - 2 * model.gromov(y, b, x)


def visual_distance(model, b, c):
    """The visual metric at the basepoint: exp(-(b|c)_p); 0 iff b == c."""
    if not (model.is_boundary(b) and model.is_boundary(c)):
        raise GeometryError("visual distance takes two boundary points")
    p = model.gromov(b, c, model.basepoint)
    if p == math.inf:
        return 0.0
    return math.exp(-_as_float(p))


@dataclass(frozen=True)
class BoundaryBall:
    """Open visual ball {b : sigma_p(center, b) < exp(-threshold)}.

    The radius is carried through its negative logarithm so tree
    membership tests stay exact (integer-vs-Fraction comparisons).  A
    ``threshold`` of None denotes the whole boundary.
    """

    center: Any
    threshold: Any  # Fraction (tree) or float (disk); None = everything

    @property
    def radius(self) -> float:
        if self.threshold is None:
            return math.inf
        return math.exp(-_as_float(self.threshold))

    def contains(self, model, b) -> bool:
        if self.threshold is None:
            return True
        prod = model.gromov(self.center, b, model.basepoint)
        if prod == math.inf:
            return True
        return prod > self.threshold


def shadow(model, q) -> BoundaryBall:
    """Visual ball of radius exp(-d(p,q)) around the ray direction of q.

    By convention the shadow of the basepoint itself is the whole boundary.
    """
    d = model.dist(model.basepoint, q)
    if d == 0:
        return BoundaryBall(center=None, threshold=None)
    return BoundaryBall(center=model.direction(q), threshold=d)


def chopped_product(model, q, b):
    """min{ (z_p^q | b)_p , d(p,q) }: the product against the ray direction,
    capped at the distance to q."""
    if model.is_boundary(q) or not model.is_boundary(b):
        raise GeometryError("chopped product takes an interior point and a boundary point")
    d = model.dist(model.basepoint, q)
    if d == 0:
        return d
    prod = model.gromov(model.direction(q), b, model.basepoint)
    if prod == math.inf:
        return d
    return min(prod, d)


def chopped_cocycle(model, q, b):
    """d(p,q) - 2*min{(z_p^q|b), d(p,q)}: the chopped horofunction increment."""
    return model.dist(model.basepoint, q) - 2 * chopped_product(model, q, b)


def thicken(model, U, a):
    """Open visual a-neighborhood {b : sigma_p(b, U) < exp(-a)} of a boundary set."""
    if a <= 0:
        raise GeometryError("thickening scale must be positive")
    return model.thicken(U, a)


def annulus_cone_membership(model, r, q, window=None) -> bool:
    """Is r in the cone-annulus determined by q?

    True iff the ray direction of r lies in the shadow of q and d(p,r)
    falls (closed comparison) in the distance window centered at
    d(p,q) + 2*delta + R, of half-width R.  An explicit ``window``
    overrides the derived one.
    """
    p = model.basepoint
    if model.is_boundary(r) or model.is_boundary(q):
        raise GeometryError("cone membership takes interior points")
    dq = model.dist(p, q)
    if dq == 0:
        raise GeometryError("cone of the basepoint is undefined")
    R = model.quotient_radius
    if window is None:
        center = dq + 2 * model.delta + R
        window = (center - R, center + R)
    dr = model.dist(p, r)
    if not (window[0] <= dr <= window[1]):
        return False
    if dr == 0:
        return False
    return shadow(model, q).contains(model, model.direction(r))
