"""Lattices, masked domains, node fields and closed-form samplers.

Every solver in the package works on a uniform Cartesian lattice with a
domain mask.  A mask classifies nodes as interior, boundary or exterior and
precomputes, for every interior node, the wide-stencil rays used by the
discrete operator.  Rays that leave the domain between two lattice nodes are
clipped at the exact surface intersection; the value there is taken from the
field's boundary sampler when one is attached, otherwise by linear
interpolation between the two lattice nodes that bracket the crossing.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

EXTERIOR, INTERIOR, BOUNDARY = 0, 1, 2

_SNAP = 1e-9


class MaskError(ValueError):
    pass


class ShapeOutOfBounds(MaskError):
    pass


class EmptyInterior(MaskError):
    pass


class SampleError(ValueError):
    pass


# --------------------------------------------------------------------------
# lattice


@dataclass(frozen=True)
class Grid:
    """Uniform lattice ``origin + h * i`` with ``extents`` nodes per axis."""

    dim: int
    h: float
    origin: tuple
    extents: tuple
    stencil_radius: int = 1
    directions: str = "default"

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        if not (self.h > 0 and math.isfinite(self.h)):
            raise ValueError(f"spacing must be positive, got {self.h}")
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))
        object.__setattr__(self, "extents", tuple(int(n) for n in self.extents))
        if len(self.origin) != self.dim or len(self.extents) != self.dim:
            raise ValueError("origin and extents must have length dim")
        if min(self.extents) < 3:
            raise ValueError("need at least 3 nodes per axis")
        if self.stencil_radius < 1:
            raise ValueError("stencil_radius must be >= 1")
        if self.directions not in ("default", "ring"):
            raise ValueError(f"unknown direction set {self.directions!r}")

    @classmethod
    def centered(cls, dim, h, half_width, stencil_radius=1, directions="default"):
        """Lattice containing ``[-half_width, half_width]^dim`` whose nodes are
        integer multiples of ``h`` (so grids of different sizes share nodes)."""
        m = int(math.ceil(half_width / h - 1e-12)) + stencil_radius
        return cls(dim, h, (-m * h,) * dim, (2 * m + 1,) * dim, stencil_radius, directions)

    @classmethod
    def spanning(cls, lo, hi, h, stencil_radius=1, directions="default"):
        """Lattice whose first and last nodes sit on ``lo`` and ``hi``."""
        lo = np.atleast_1d(np.asarray(lo, float))
        hi = np.atleast_1d(np.asarray(hi, float))
        n = np.rint((hi - lo) / h).astype(int) + 1
        return cls(len(lo), h, tuple(lo), tuple(n), stencil_radius, directions)

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.extents))

    @property
    def strides(self) -> np.ndarray:
        s = np.ones(self.dim, dtype=np.int64)
        for k in range(self.dim - 2, -1, -1):
            s[k] = s[k + 1] * self.extents[k + 1]
        return s

    def multi_index(self) -> np.ndarray:
        """(n_nodes, dim) integer lattice coordinates in C order."""
        axes = [np.arange(n) for n in self.extents]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def coords(self) -> np.ndarray:
        return np.asarray(self.origin) + self.h * self.multi_index()

    def stencil(self) -> np.ndarray:
        return stencil_directions(self.dim, self.stencil_radius, self.directions)


def stencil_directions(dim: int, radius: int = 1, kind: str = "default") -> np.ndarray:
    """Integer direction vectors of the wide stencil.

    ``default`` gives axis and diagonal directions scaled by ``radius`` (2, 8
    and 26 vectors in 1, 2, 3 dimensions).  ``ring`` gives every lattice
    vector with max-norm ``radius``; each is a distinct direction, which
    refines the angular resolution as the radius grows.
    """
    if kind == "default":
        base = [v for v in itertools.product((-1, 0, 1), repeat=dim) if any(v)]
        return radius * np.array(base, dtype=np.int64)
    if kind == "ring":
        rng = range(-radius, radius + 1)
        vecs = [v for v in itertools.product(rng, repeat=dim) if max(abs(c) for c in v) == radius]
        return np.array(vecs, dtype=np.int64)
    raise ValueError(f"unknown direction set {kind!r}")


# --------------------------------------------------------------------------
# shapes


def _as_point(p, dim=None) -> np.ndarray:
    p = np.atleast_1d(np.asarray(p, dtype=float))
    if dim is not None and p.shape != (dim,):
        raise ValueError(f"expected a point of dimension {dim}, got shape {p.shape}")
    return p


def _sphere_exit(p, v, center, radius):
    # largest root of |p + t v - c|^2 = r^2; p strictly inside the ball
    w = p - center
    a = float(v @ v)
    b = 2.0 * (w @ v)
    c = np.einsum("ij,ij->i", w, w) - radius**2
    disc = np.maximum(b * b - 4 * a * c, 0.0)
    return (-b + np.sqrt(disc)) / (2 * a)


@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(np.atleast_1d(np.asarray(self.center, float))))
        if not self.radius > 0:
            raise ValueError("radius must be positive")

    @property
    def dim(self):
        return len(self.center)

    def inside(self, x):
        d = x - np.asarray(self.center)
        return np.einsum("ij,ij->i", d, d) < self.radius**2 * (1 - 1e-14)

    def exit_time(self, p, v):
        return _sphere_exit(p, v, np.asarray(self.center), self.radius)

    def distance_to_boundary(self, x):
        return self.radius - np.linalg.norm(x - np.asarray(self.center), axis=1)

    def bounds(self):
        c = np.asarray(self.center)
        return c - self.radius, c + self.radius

    def inscribed_ball(self):
        return self


@dataclass(frozen=True)
class Annulus:
    center: tuple
    r_in: float
    r_out: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(np.atleast_1d(np.asarray(self.center, float))))
        if not 0 < self.r_in < self.r_out:
            raise ValueError("need 0 < r_in < r_out")

    @property
    def dim(self):
        return len(self.center)

    def inside(self, x):
        d = x - np.asarray(self.center)
        r2 = np.einsum("ij,ij->i", d, d)
        return (r2 < self.r_out**2 * (1 - 1e-14)) & (r2 > self.r_in**2 * (1 + 1e-14))

    def exit_time(self, p, v):
        c = np.asarray(self.center)
        t = _sphere_exit(p, v, c, self.r_out)
        w = p - c
        a = float(v @ v)
        b = 2.0 * (w @ v)
        cc = np.einsum("ij,ij->i", w, w) - self.r_in**2
        disc = b * b - 4 * a * cc
        hit = disc > 0
        t_in = np.full_like(t, np.inf)
        t_in[hit] = (-b[hit] - np.sqrt(disc[hit])) / (2 * a)
        t_in[t_in <= 0] = np.inf
        return np.minimum(t, t_in)

    def distance_to_boundary(self, x):
        r = np.linalg.norm(x - np.asarray(self.center), axis=1)
        return np.minimum(self.r_out - r, r - self.r_in)

    def bounds(self):
        c = np.asarray(self.center)
        return c - self.r_out, c + self.r_out

    def inscribed_ball(self):
        c = np.asarray(self.center).copy()
        c[0] += 0.5 * (self.r_in + self.r_out)
        return Ball(tuple(c), 0.5 * (self.r_out - self.r_in))


@dataclass(frozen=True)
class Box:
    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, float))
        hi = np.atleast_1d(np.asarray(self.hi, float))
        if lo.shape != hi.shape or np.any(hi <= lo):
            raise ValueError("need lo < hi componentwise")
        object.__setattr__(self, "lo", tuple(lo))
        object.__setattr__(self, "hi", tuple(hi))

    @property
    def dim(self):
        return len(self.lo)

    def inside(self, x):
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        span = hi - lo
        return np.all((x > lo + 1e-14 * span) & (x < hi - 1e-14 * span), axis=1)

    def exit_time(self, p, v):
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        t = np.full(len(p), np.inf)
        for k in range(len(v)):
            if v[k] > 0:
                t = np.minimum(t, (hi[k] - p[:, k]) / v[k])
            elif v[k] < 0:
                t = np.minimum(t, (lo[k] - p[:, k]) / v[k])
        return t

    def distance_to_boundary(self, x):
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        return np.min(np.minimum(x - lo, hi - x), axis=1)

    def bounds(self):
        return np.asarray(self.lo), np.asarray(self.hi)

    def inscribed_ball(self):
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        return Ball(tuple(0.5 * (lo + hi)), 0.5 * float(np.min(hi - lo)))


Shape = Union[Ball, Annulus, Box]


# --------------------------------------------------------------------------
# masks and rays


@dataclass(frozen=True, eq=False)
class RaySet:
    """Rays of one direction set from every interior node.

    ``target[i, j]`` indexes the extended value vector ``concat(node values,
    crossing values)``; ``length[i, j]`` is the geometric arm length.
    """

    directions: np.ndarray
    target: np.ndarray
    length: np.ndarray
    crossing_points: np.ndarray
    crossing_lo: np.ndarray
    crossing_hi: np.ndarray
    crossing_weight: np.ndarray

    @property
    def n_crossings(self) -> int:
        return len(self.crossing_points)


@dataclass(frozen=True, eq=False)
class DomainMask:
    grid: Grid
    shape: Shape
    kind: np.ndarray
    rays: RaySet
    axis_rays: RaySet
    interior: np.ndarray = field(init=False)
    boundary: np.ndarray = field(init=False)
    active: np.ndarray = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "interior", np.flatnonzero(self.kind == INTERIOR))
        object.__setattr__(self, "boundary", np.flatnonzero(self.kind == BOUNDARY))
        object.__setattr__(self, "active", np.flatnonzero(self.kind != EXTERIOR))

    @property
    def n_interior(self) -> int:
        return len(self.interior)

    def coords(self, which="interior") -> np.ndarray:
        idx = {"interior": self.interior, "boundary": self.boundary, "active": self.active}[which]
        return np.asarray(self.grid.origin) + self.grid.h * self.grid.multi_index()[idx]

    def min_arm(self) -> np.ndarray:
        """Shortest wide-stencil arm per interior node."""
        return self.rays.length.min(axis=1)


def _build_rays(grid, shape, interior, dirs, kind, multi, pts):
    h = grid.h
    strides = grid.strides
    ext = np.asarray(grid.extents)
    n_int, n_dir = len(interior), len(dirs)
    target = np.empty((n_int, n_dir), dtype=np.int64)
    length = np.empty((n_int, n_dir))
    cross_pts, cross_lo, cross_hi, cross_w = [], [], [], []
    n_nodes = grid.n_nodes
    n_cross = 0
    for j, d in enumerate(dirs):
        g = int(np.gcd.reduce(np.abs(d)))
        step = d // g
        t = shape.exit_time(pts, d * h)
        full = np.linalg.norm(d) * h
        s = t * g  # exit position in lattice sub-steps
        near = np.abs(s - np.rint(s)) < _SNAP * max(1.0, g)
        s = np.where(near, np.rint(s), s)
        unclipped = s >= g
        jumps = np.where(unclipped, g, np.ceil(s)).astype(np.int64)
        end = multi[interior] + jumps[:, None] * step
        if np.any(end < 0) or np.any(end >= ext):
            raise ShapeOutOfBounds("stencil rays leave the lattice; enlarge the grid margin")
        end_flat = end @ strides
        on_node = unclipped | near
        # nodes reached at or after the surface belong to the boundary layer
        outside = ~unclipped | near
        hit = end_flat[outside]
        kind[hit[kind[hit] != INTERIOR]] = BOUNDARY
        if np.any(kind[end_flat] == EXTERIOR):
            kind[end_flat[kind[end_flat] == EXTERIOR]] = BOUNDARY
        target[:, j] = end_flat
        length[:, j] = np.where(unclipped, full, np.minimum(s, g) / g * full)
        clip = ~on_node
        if np.any(clip):
            rows = np.flatnonzero(clip)
            ids = n_nodes + n_cross + np.arange(len(rows))
            n_cross += len(rows)
            target[rows, j] = ids
            frac = s[rows]
            lo_j = np.floor(frac).astype(np.int64)
            lo_node = (multi[interior[rows]] + lo_j[:, None] * step) @ strides
            cross_pts.append(pts[rows] + t[rows, None] * (d * h))
            cross_lo.append(lo_node)
            cross_hi.append(end_flat[rows])
            cross_w.append(frac - lo_j)
    cat = lambda xs, shape_, dt: np.concatenate(xs) if xs else np.empty(shape_, dtype=dt)
    return RaySet(
        directions=dirs,
        target=target,
        length=length,
        crossing_points=cat(cross_pts, (0, grid.dim), float),
        crossing_lo=cat(cross_lo, (0,), np.int64),
        crossing_hi=cat(cross_hi, (0,), np.int64),
        crossing_weight=cat(cross_w, (0,), float),
    )


def build_mask(grid: Grid, shape: Shape) -> DomainMask:
    """Classify every lattice node against ``shape`` and precompute rays."""
    if shape.dim != grid.dim:
        raise ValueError("shape and grid dimensions differ")
    if isinstance(shape, Ball) and shape.radius < grid.h:
        raise EmptyInterior(f"ball radius {shape.radius} is below the spacing {grid.h}")
    x = grid.coords()
    inside = shape.inside(x)
    if not inside.any():
        raise EmptyInterior("no lattice node lies strictly inside the shape")
    kind = np.zeros(grid.n_nodes, dtype=np.int8)
    kind[inside] = INTERIOR
    interior = np.flatnonzero(inside)
    multi = grid.multi_index()
    pts = x[interior]
    rays = _build_rays(grid, shape, interior, grid.stencil(), kind, multi, pts)
    axis = np.concatenate([np.eye(grid.dim, dtype=np.int64), -np.eye(grid.dim, dtype=np.int64)])
    axis_rays = _build_rays(grid, shape, interior, axis, kind, multi, pts)
    return DomainMask(grid, shape, kind, rays, axis_rays)


# --------------------------------------------------------------------------
# samplers and fields


@dataclass(frozen=True)
class Sampler:
    """Deterministic closed-form function of position.

    ``fn`` maps an ``(n, dim)`` array of points to ``(n,)`` values (or
    ``(n, dim)`` for vector samplers such as a drift).
    """

    fn: Callable[[np.ndarray], np.ndarray]
    support: str = "R^d"
    note: str = ""
    vector: bool = False

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.asarray(self.fn(x), dtype=float)
        if self.vector:
            return np.broadcast_to(out, x.shape).copy()
        return np.broadcast_to(out, (len(x),)).copy()

    @classmethod
    def constant(cls, value: float) -> "Sampler":
        return cls(lambda x: np.full(len(x), float(value)), note=f"constant {value}")

    @classmethod
    def zero_vector(cls) -> "Sampler":
        return cls(lambda x: np.zeros_like(x), note="zero drift", vector=True)

    @classmethod
    def radial(cls, profile: Callable[[np.ndarray], np.ndarray], center=None, note="") -> "Sampler":
        def fn(x):
            c = 0.0 if center is None else np.asarray(center, float)
            return profile(np.linalg.norm(x - c, axis=1))

        return cls(fn, note=note or "radial")


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Node values on a masked lattice.

    Exterior entries are NaN.  ``bc`` (optional) supplies exact values at ray
    crossings of the domain surface.
    """

    mask: DomainMask
    values: np.ndarray
    bc: Optional[Sampler] = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float)  # own copy, frozen below
        if v.shape != (self.mask.grid.n_nodes,):
            raise ValueError("values must have one entry per lattice node")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def grid(self) -> Grid:
        return self.mask.grid

    def crossing_values(self, rays: RaySet) -> np.ndarray:
        if rays.n_crossings == 0:
            return np.empty(0)
        if self.bc is not None:
            return self.bc(rays.crossing_points)
        w = rays.crossing_weight
        return (1 - w) * self.values[rays.crossing_lo] + w * self.values[rays.crossing_hi]

    def interior_values(self) -> np.ndarray:
        return self.values[self.mask.interior]

    def replace(self, values=None, bc=...) -> "ScalarField":
        return ScalarField(
            self.mask,
            self.values if values is None else values,
            self.bc if bc is ... else bc,
        )

    def oscillation(self) -> float:
        a = self.values[self.mask.active]
        return float(a.max() - a.min())


def sample(sampler: Sampler, mask: DomainMask, grid: Optional[Grid] = None) -> ScalarField:
    """Evaluate ``sampler`` at Interior and Boundary nodes (exactly)."""
    grid = grid or mask.grid
    if grid is not mask.grid and grid != mask.grid:
        raise ValueError("grid does not match the mask")
    vals = np.full(grid.n_nodes, np.nan)
    idx = mask.active
    got = sampler(grid.coords()[idx])
    bad = ~np.isfinite(got)
    if bad.any():
        where = grid.coords()[idx][np.flatnonzero(bad)[0]]
        raise SampleError(f"non-finite sample value at node {tuple(where)}")
    vals[idx] = got
    return ScalarField(mask, vals, sampler)


def node_field(mask: DomainMask, interior: np.ndarray, boundary_values, bc=None) -> ScalarField:
    vals = np.full(mask.grid.n_nodes, np.nan)
    vals[mask.interior] = interior
    vals[mask.boundary] = boundary_values
    return ScalarField(mask, vals, bc)


def bump(epsilon: float, center: Sequence[float] = None) -> Sampler:
    """Compactly supported bump ``exp(-1/(1-|eps (x - z)|^2))``, zero outside."""

    def fn(x):
        z = 0.0 if center is None else np.asarray(center, float)
        s = 1.0 - (epsilon * np.linalg.norm(x - z, axis=1)) ** 2
        out = np.zeros(len(x))
        pos = s > 0
        with np.errstate(under="ignore"):
            out[pos] = np.exp(-1.0 / s[pos])
        return out

    return Sampler(fn, support=f"|x - z| < {1 / epsilon}", note="C-infinity bump")
