"""Deterministic and seeded constructors for fractal test configurations.

Randomness is counter-based: every keep/drop decision hashes (seed, level,
cube corner) through a splitmix64 finalizer, so identical specs reproduce
byte-identical sets and subtree generation is order-independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    DeltaSet,
    DimensionMismatchError,
    ParameterError,
    PlacementError,
    Resolution,
)

#: Guard against accidental combinatorial blow-ups of dense generators.
MAX_POINTS = 1 << 22

_MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


def _splitmix(x: np.ndarray) -> np.ndarray:
    x = (x + _GOLDEN) & _MASK64
    x = ((x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)) & _MASK64
    x = ((x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)) & _MASK64
    return x ^ (x >> np.uint64(31))


def _cube_hash(seed: int, level: int, corners: np.ndarray) -> np.ndarray:
    """Uniform [0,1) value per cube, independent of enumeration order."""
    h = np.full(len(corners), np.uint64(seed & 0xFFFFFFFFFFFFFFFF), dtype=np.uint64)
    level_salt = np.uint64(((level + 1) * 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF)
    h = _splitmix(h ^ level_salt)
    for ax in range(corners.shape[1]):
        h = _splitmix(h ^ corners[:, ax].astype(np.uint64))
    return h.astype(np.float64) / float(2**64)


def _parse_axis_mask(mask: str, J: int):
    """Allowed binary digits per position 1..J from a cyclic mask over {0,1,*}."""
    if not mask:
        raise ParameterError("axis mask is empty (no digits allowed)")
    table = {"0": (0,), "1": (1,), "*": (0, 1)}
    allowed = []
    for p in range(J):
        ch = mask[p % len(mask)]
        if ch not in table:
            raise ParameterError(f"mask character {ch!r} not in {{0,1,*}}")
        allowed.append(table[ch])
    return allowed


def gen_cantor(n: int, J: int, masks) -> DeltaSet:
    """Digit-constrained Cantor-type set: per axis, binary digit p obeys masks[axis].

    The per-axis exponent is log2(#allowed)/period of the cyclic mask; the
    cardinality is the exact product of per-axis admissible-string counts.
    """
    if len(masks) != n:
        raise DimensionMismatchError(f"{len(masks)} masks for dimension {n}")
    axes = []
    total = 1
    for mask in masks:
        allowed = _parse_axis_mask(mask, J)
        vals = np.zeros(1, dtype=np.int64)
        for digits in allowed:
            vals = (vals[:, None] * 2 + np.asarray(digits, dtype=np.int64)[None, :]).ravel()
        axes.append(np.sort(vals))
        total *= len(vals)
        if total > MAX_POINTS:
            raise ParameterError(f"mask configuration generates more than {MAX_POINTS} points")
    grids = np.meshgrid(*axes, indexing="ij")
    coords = np.stack([g.ravel() for g in grids], axis=1)
    return DeltaSet(coords, Resolution(J))


def gen_lattice(n: int, J: int) -> DeltaSet:
    return gen_cantor(n, J, ["*"] * n)


def gen_random_delta_s(n: int, J: int, s: float, seed: int) -> DeltaSet:
    """Seeded random (delta,s)-set by top-down dyadic thinning.

    Each occupied cube keeps its lowest-hash child unconditionally (the
    tree never dies) and each other child independently with a probability
    calibrated so level l carries about 2^(l*s) cubes; a deterministic trim
    enforces the hard cap of 2 * 2^(l*s). For s >= n this is the full
    lattice, for s = 0 a single lineage.
    """
    if s < 0:
        raise ParameterError(f"exponent s must be >= 0, got {s}")
    if 2.0 ** (J * min(s, n)) > MAX_POINTS:
        raise ParameterError(f"target cardinality exceeds {MAX_POINTS}")
    cubes = np.zeros((1, n), dtype=np.int64)
    branch = 1 << n
    offsets = np.stack(np.meshgrid(*([np.arange(2)] * n), indexing="ij"), axis=-1).reshape(-1, n)
    for lvl in range(J):
        target = 2.0 ** ((lvl + 1) * s)
        count = len(cubes)
        children = (cubes[:, None, :] * 2 + offsets[None, :, :]).reshape(-1, n)
        u = _cube_hash(seed, lvl + 1, children)
        u_mat = u.reshape(count, branch)
        forced = np.zeros_like(u_mat, dtype=bool)
        forced[np.arange(count), np.argmin(u_mat, axis=1)] = True
        p = min(1.0, max(0.0, (target - count) / (count * (branch - 1))))
        keep = (forced | (u_mat < p)).ravel()
        kept = children[keep]
        cap = max(1, int(math.floor(2.0 * target)))
        if len(kept) > cap:
            ku = u[keep]
            order = np.lexsort(tuple(kept[:, ax] for ax in reversed(range(n))) + (ku,))
            kept = kept[order[:cap]]
        cubes = kept
    order = np.lexsort(tuple(cubes[:, ax] for ax in reversed(range(n))))
    return DeltaSet(cubes[order], Resolution(J))


@dataclass
class GeneratorSpec:
    """Reproducible recipe for one point configuration."""

    kind: str
    n: int
    J: int
    params: dict = field(default_factory=dict)

    KINDS = ("lattice", "cantor_digits", "product", "random_delta_s", "plane_subset", "pair_config")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ParameterError(f"unknown generator kind {self.kind!r}")

    def with_resolution(self, J: int) -> "GeneratorSpec":
        return GeneratorSpec(self.kind, self.n, J, dict(self.params))

    def generate(self) -> DeltaSet:
        if self.kind == "lattice":
            return gen_lattice(self.n, self.J)
        if self.kind == "cantor_digits":
            return gen_cantor(self.n, self.J, self.params["masks"])
        if self.kind == "random_delta_s":
            return gen_random_delta_s(self.n, self.J, float(self.params["s"]), int(self.params.get("seed", 0)))
        if self.kind == "product":
            return self._generate_product()
        if self.kind == "plane_subset":
            return self._generate_plane_subset()
        raise ParameterError("pair_config specs are generated through gen_pair")

    def _generate_product(self) -> DeltaSet:
        specs = self.params["axes"]
        if len(specs) != self.n:
            raise DimensionMismatchError(f"{len(specs)} axis specs for dimension {self.n}")
        axes = []
        total = 1
        for sub in specs:
            if sub.n != 1:
                raise DimensionMismatchError("product components must be one-dimensional")
            pts = sub.with_resolution(self.J).generate()
            axes.append(pts.coords[:, 0])
            total *= len(pts)
            if total > MAX_POINTS:
                raise ParameterError(f"product generates more than {MAX_POINTS} points")
        grids = np.meshgrid(*axes, indexing="ij")
        coords = np.stack([g.ravel() for g in grids], axis=1)
        return DeltaSet(coords, Resolution(self.J))

    def _generate_plane_subset(self) -> DeltaSet:
        plane_axes = list(self.params["plane_axes"])
        inner: GeneratorSpec = self.params["inner"]
        if inner.n != len(plane_axes):
            raise DimensionMismatchError("inner spec dimension must match the number of plane axes")
        pts = inner.with_resolution(self.J).generate()
        coords = np.zeros((len(pts), self.n), dtype=np.int64)
        for i, ax in enumerate(plane_axes):
            coords[:, ax] = pts.coords[:, i]
        return DeltaSet(coords, Resolution(self.J))


@dataclass
class PairConfig:
    """Two separated configurations placed in small balls inside [0,1]^n."""

    E: DeltaSet
    F: DeltaSet
    center_E: np.ndarray
    center_F: np.ndarray
    ball_radius: float
    separation: float
    shift: int

    @property
    def n(self) -> int:
        return self.E.n

    @property
    def axis(self) -> np.ndarray:
        v = self.center_F - self.center_E
        return v / np.linalg.norm(v)

    def verify(self):
        """Exact checks of the ball containment and separation invariants."""
        for pts, center in ((self.E, self.center_E), (self.F, self.center_F)):
            d = np.linalg.norm(pts.floats() - center, axis=1)
            if d.size and d.max() > self.ball_radius * (1 + 1e-12):
                raise PlacementError(f"point at distance {d.max():.6g} exceeds ball radius {self.ball_radius:.6g}")
        if len(self.E) * len(self.F) <= 4_000_000:
            diff = self.E.floats()[:, None, :] - self.F.floats()[None, :, :]
            dmin = float(np.sqrt((diff**2).sum(axis=2)).min())
        else:
            dmin = float(np.linalg.norm(self.center_F - self.center_E)) - 2 * self.ball_radius
        if dmin < self.separation:
            raise PlacementError(f"set distance {dmin:.6g} below separation {self.separation:.6g}")
        return dmin


def _default_centers(n: int) -> tuple:
    cE = np.full(n, 0.5)
    cF = np.full(n, 0.5)
    cE[0], cF[0] = 0.125, 0.875
    return cE, cF


def place_in_ball(X: DeltaSet, J: int, shift: int, center: np.ndarray) -> DeltaSet:
    """Dyadic contraction by 2^-shift followed by an exact lattice translation."""
    if X.J != J - shift:
        raise PlacementError(f"set resolution {X.J} != J - shift = {J - shift}")
    offset = center - 2.0 ** (-shift - 1)
    offset_cells = np.round(offset * (1 << J)).astype(np.int64)
    if not np.allclose(offset_cells * 2.0 ** (-J), offset, atol=1e-12):
        raise PlacementError("ball center does not sit on the target lattice")
    coords = X.coords + offset_cells
    if coords.min() < 0 or coords.max() >= (1 << J):
        raise PlacementError("placed set leaves the unit cube")
    return DeltaSet(coords, Resolution(J))


def gen_pair(
    spec_E: GeneratorSpec,
    spec_F: GeneratorSpec,
    J: int,
    shift: int = 5,
    centers=None,
    separation: float | None = None,
) -> PairConfig:
    """Generate two sets and place them into separated balls, lattice-exactly.

    Each set is generated at resolution J - shift in the unit cube, scaled
    by 2^-shift and translated to its ball center; offsets are dyadic so
    the placement is an integer shift at resolution J. The defaults put
    the centers 3/4 apart with ball radius sqrt(n)/2 * 2^-shift.
    """
    if spec_E.n != spec_F.n:
        raise DimensionMismatchError("pair components must share the ambient dimension")
    n = spec_E.n
    if shift < 1 or shift >= J:
        raise ParameterError(f"shift must lie in [1, J), got {shift}")
    cE, cF = _default_centers(n) if centers is None else (np.asarray(centers[0], float), np.asarray(centers[1], float))
    lam = 2.0**-shift
    radius = lam * math.sqrt(n) / 2
    for c in (cE, cF):
        if (c - lam / 2 < 0).any() or (c + lam / 2 > 1).any():
            raise PlacementError(f"ball at {c} does not fit inside [0,1]^n")
    E = place_in_ball(spec_E.with_resolution(J - shift).generate(), J, shift, cE)
    F = place_in_ball(spec_F.with_resolution(J - shift).generate(), J, shift, cF)
    if separation is None:
        separation = float(np.linalg.norm(cF - cE)) - 2 * radius
    pair = PairConfig(E=E, F=F, center_E=cE, center_F=cF, ball_radius=radius, separation=separation, shift=shift)
    pair.verify()
    return pair


def measured_box_exponent(X: DeltaSet) -> tuple:
    """Least-squares slope of log2(occupied cubes at level l) against l."""
    J = X.J
    xs, ys = [], []
    for lvl in range(J + 1):
        cells = np.unique(X.cells_at_level(lvl), axis=0)
        xs.append(lvl)
        ys.append(math.log2(len(cells)))
    xs = np.asarray(xs, float)
    ys = np.asarray(ys, float)
    slope, intercept = np.polyfit(xs, ys, 1)
    pred = slope * xs + intercept
    ss_res = float(((ys - pred) ** 2).sum())
    ss_tot = float(((ys - ys.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), r2
