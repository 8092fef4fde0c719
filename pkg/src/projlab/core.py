"""Dyadic lattice geometry shared by every other module.

Points live on the 2^-J lattice of the unit cube: a point is an integer
vector c identified with the half-open cell prod_i [c_i 2^-J, (c_i+1) 2^-J).
Snapping happens once, on ingestion; after that, cube membership,
parent/child moves and separation thresholds are integer computations, so
no geometric predicate depends on a floating-point tie.

Distances are Euclidean, dyadic cubes carry the l-infinity structure; the
two views differ by at most a factor sqrt(n), which appears as an explicit
constant wherever both are used together.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

#: Hard cap on the dyadic level, bounding lattice memory at 2^(n*MAX_LEVEL).
MAX_LEVEL = 26


class LabError(Exception):
    """Base class for errors raised by this package."""


class DimensionMismatchError(LabError):
    pass


class ResolutionError(LabError):
    pass


class ParameterError(LabError):
    pass


class DegenerateViewpointError(LabError):
    pass


class ApertureError(LabError):
    pass


class PlacementError(LabError):
    pass


class ConfigError(LabError):
    pass


def fmt(x: float) -> str:
    """Canonical fixed-precision float formatting for reproducible CSV bytes."""
    return f"{float(x):.12g}"


@dataclass(frozen=True)
class Resolution:
    """Dyadic resolution 2^-J, stored as the integer level J."""

    J: int

    def __post_init__(self):
        if not isinstance(self.J, (int, np.integer)) or not 0 <= int(self.J) <= MAX_LEVEL:
            raise ResolutionError(f"level J must be an integer in [0, {MAX_LEVEL}], got {self.J!r}")
        object.__setattr__(self, "J", int(self.J))

    @property
    def delta(self) -> float:
        return 2.0 ** (-self.J)

    @property
    def cells(self) -> int:
        """Lattice cells per axis."""
        return 1 << self.J

    @classmethod
    def for_delta(cls, delta: float, margin: int = 2) -> "Resolution":
        """Finest resolution with a little margin below delta, clamped to MAX_LEVEL."""
        if not delta > 0:
            raise ParameterError(f"delta must be positive, got {delta}")
        J = max(0, math.ceil(-math.log2(delta))) + margin
        return cls(min(J, MAX_LEVEL))


@dataclass(frozen=True)
class DyadicCube:
    """Axis-parallel half-open cube prod_i [c_i 2^-k, (c_i+1) 2^-k) at level k."""

    level: int
    corner: tuple

    def __post_init__(self):
        object.__setattr__(self, "corner", tuple(int(c) for c in self.corner))
        if not 0 <= self.level <= MAX_LEVEL:
            raise ResolutionError(f"cube level {self.level} outside [0, {MAX_LEVEL}]")
        top = 1 << self.level
        if not all(0 <= c < top for c in self.corner):
            raise ParameterError(f"corner {self.corner} outside lattice at level {self.level}")

    @property
    def n(self) -> int:
        return len(self.corner)

    @property
    def side(self) -> float:
        return 2.0 ** (-self.level)

    def parent(self) -> "DyadicCube":
        if self.level == 0:
            raise ResolutionError("root cube has no parent")
        return DyadicCube(self.level - 1, tuple(c >> 1 for c in self.corner))

    def children(self):
        for off in range(1 << self.n):
            bits = tuple((off >> i) & 1 for i in range(self.n))
            yield DyadicCube(self.level + 1, tuple((c << 1) | b for c, b in zip(self.corner, bits)))

    def contains_cell(self, cell, J: int) -> bool:
        """Exact test whether a level-J lattice cell lies inside this cube."""
        if J < self.level:
            raise ResolutionError("cell is coarser than the cube")
        shift = J - self.level
        return all((int(c) >> shift) == q for c, q in zip(cell, self.corner))

    def contains_cube(self, other: "DyadicCube") -> bool:
        if other.level < self.level:
            return False
        return self.contains_cell(other.corner, other.level)

    def key(self):
        return (self.level, self.corner)


class DeltaSet:
    """A finite set of distinct lattice cells of [0,1)^n at resolution 2^-J.

    Coordinates are held as an immutable (N, n) int64 array in input order;
    duplicates after snapping are dropped, keeping first occurrences (the
    set is a disjoint union of delta-cells).
    """

    __slots__ = ("coords", "resolution")

    def __init__(self, coords, resolution):
        res = resolution if isinstance(resolution, Resolution) else Resolution(resolution)
        arr = np.asarray(coords, dtype=np.int64)
        if arr.ndim != 2:
            raise DimensionMismatchError(f"coords must be a (N, n) array, got shape {arr.shape}")
        if arr.shape[0] and (arr.min() < 0 or arr.max() >= res.cells):
            raise ParameterError(f"lattice coordinates outside [0, 2^{res.J})")
        if arr.shape[0]:
            _, first = np.unique(arr, axis=0, return_index=True)
            if len(first) != arr.shape[0]:
                arr = arr[np.sort(first)]
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        object.__setattr__(self, "coords", arr)
        object.__setattr__(self, "resolution", res)

    def __setattr__(self, name, value):
        raise AttributeError("DeltaSet is immutable")

    @classmethod
    def from_floats(cls, points, resolution) -> "DeltaSet":
        res = resolution if isinstance(resolution, Resolution) else Resolution(resolution)
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        if pts.shape[0] and (pts.min() < 0.0 or pts.max() > 1.0):
            bad = int(np.argmax(np.any((pts < 0.0) | (pts > 1.0), axis=1)))
            raise ParameterError(f"point {bad} lies outside [0,1]^n")
        coords = snap_to_lattice(pts, res)
        return cls(coords, res)

    @property
    def n(self) -> int:
        return self.coords.shape[1]

    @property
    def J(self) -> int:
        return self.resolution.J

    @property
    def delta(self) -> float:
        return self.resolution.delta

    def __len__(self) -> int:
        return self.coords.shape[0]

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, DeltaSet)
            and self.resolution == other.resolution
            and self.coords.shape == other.coords.shape
            and bool(np.array_equal(self.coords, other.coords))
        )

    def __repr__(self) -> str:
        return f"DeltaSet(#{len(self)} points, n={self.n}, J={self.J})"

    def floats(self) -> np.ndarray:
        """Exact dyadic float coordinates (cell corners)."""
        return self.coords * self.delta

    def cells_at_level(self, level: int) -> np.ndarray:
        if level > self.J:
            raise ResolutionError(f"level {level} finer than resolution J={self.J}")
        return self.coords >> np.int64(self.J - level)

    def subset(self, index) -> "DeltaSet":
        return DeltaSet(self.coords[index], self.resolution)

    def save_csv(self, path):
        save_points_csv(self, path)


def snap_to_lattice(points: np.ndarray, resolution: Resolution) -> np.ndarray:
    """Snap float points in [0,1]^n to lattice cells; 1.0 joins the last cell."""
    cells = resolution.cells
    return np.minimum(np.floor(points * cells), cells - 1).astype(np.int64)


def _neighbor_offsets(n: int) -> np.ndarray:
    grids = np.meshgrid(*([np.array([-1, 0, 1])] * n), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def greedy_separated_indices(coords: np.ndarray, threshold_cells: float) -> np.ndarray:
    """Indices of the greedy (input-order) threshold-separated subset.

    `coords` are integer lattice vectors and `threshold_cells` is the
    separation threshold in lattice units; squared distances are exact
    int64 sums, compared against the squared float threshold, so the
    accept/reject decision is exact.
    """
    N, n = coords.shape
    if N == 0:
        return np.empty(0, dtype=np.int64)
    thr2 = float(threshold_cells) * float(threshold_cells)
    b = max(1, math.ceil(threshold_cells))
    offsets = _neighbor_offsets(n)
    buckets: dict = {}
    accepted: list = []
    for i in range(N):
        c = coords[i]
        bk = c // b
        ok = True
        for off in offsets:
            members = buckets.get((bk + off).tobytes())
            if not members:
                continue
            diffs = coords[members] - c
            d2 = np.einsum("ij,ij->i", diffs, diffs)
            if (d2 < thr2).any():
                ok = False
                break
        if ok:
            accepted.append(i)
            buckets.setdefault(bk.tobytes(), []).append(i)
    return np.asarray(accepted, dtype=np.int64)


def separated_subset(points, delta: float, resolution=None) -> DeltaSet:
    """Greedy maximal delta-separated subset, taken in input order.

    A maximal (not maximum) family in the style of |X|_delta: the output
    cardinality agrees with the delta-covering count up to the standard
    factor-2^n equivalence. Order-determinism is part of the contract.
    """
    if not delta > 0:
        raise ParameterError(f"delta must be positive, got {delta}")
    if isinstance(points, DeltaSet):
        ds = points
    else:
        res = resolution if resolution is not None else Resolution.for_delta(delta)
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        if pts.shape[0] == 0:
            raise ParameterError("separated_subset of an empty point list")
        ds = DeltaSet.from_floats(pts, res)
        # Re-run with duplicates kept: greedy semantics act on the raw input
        # order, so snapping collisions are rejected by the distance test,
        # not silently merged.
        coords = snap_to_lattice(pts, ds.resolution)
        idx = greedy_separated_indices(coords, delta * ds.resolution.cells)
        return DeltaSet(coords[idx], ds.resolution)
    idx = greedy_separated_indices(ds.coords, delta * ds.resolution.cells)
    return ds.subset(idx)


def covering_number(X, delta: float, resolution=None) -> int:
    """|X|_delta: size of the greedy maximal delta-separated subset of X."""
    if isinstance(X, DeltaSet):
        if len(X) == 0:
            return 0
        return len(separated_subset(X, delta))
    pts = np.asarray(X, dtype=np.float64)
    if pts.size == 0:
        return 0
    return len(separated_subset(pts, delta, resolution=resolution))


def cube_membership(X: DeltaSet, D: DyadicCube) -> int:
    """Exact count of points of X inside the half-open cube D."""
    if D.n != X.n:
        raise DimensionMismatchError(f"cube dimension {D.n} != point dimension {X.n}")
    if D.level > X.J:
        raise ResolutionError(f"cube level {D.level} finer than lattice J={X.J}")
    if len(X) == 0:
        return 0
    shift = np.int64(X.J - D.level)
    corner = np.asarray(D.corner, dtype=np.int64)
    return int(np.all((X.coords >> shift) == corner, axis=1).sum())


@dataclass
class ExponentParams:
    """Dimension exponents and thickening parameters used across experiments.

    Ranges are validated per experiment (e.g. 0 < sigma <= s < k for the
    witness runs, a in (k, k+1] for the exceptional-set scans), not
    globally.
    """

    s: float = 0.5
    t: float = 1.0
    a: float = 1.5
    sigma: float = 0.5
    alpha: float = 0.5
    k: int = 1
    m: int = 1
    tau0: float = 0.1
    eps: float = 0.05
    eta: float = 0.1
    K: float = 16.0

    def __post_init__(self):
        for name in ("tau0", "eps", "eta"):
            if getattr(self, name) <= 0:
                raise ParameterError(f"{name} must be positive")
        if self.K < 1:
            raise ParameterError("K must be >= 1")

    def validate_witness(self, n: int):
        if not (0 < self.sigma <= self.s < self.k):
            raise ParameterError(
                f"witness experiments need 0 < sigma <= s < k, got sigma={self.sigma}, s={self.s}, k={self.k}"
            )
        if not self.k < n:
            raise ParameterError(f"k must be < n, got k={self.k}, n={n}")

    def validate_exceptional(self, n: int):
        if not (self.k < self.a <= self.k + 1):
            raise ParameterError(f"exceptional-set experiments need a in (k, k+1], got a={self.a}, k={self.k}")
        if not (0 < self.s < self.k):
            raise ParameterError(f"need 0 < s < k, got s={self.s}, k={self.k}")


def save_points_csv(X: DeltaSet, path):
    """CSV format: one header row `n,J`, then one row of lattice ints per point."""
    path = Path(path)
    lines = [f"{X.n},{X.J}"]
    for row in X.coords:
        lines.append(",".join(str(int(v)) for v in row))
    path.write_text("\n".join(lines) + "\n")


def load_points_csv(path) -> DeltaSet:
    path = Path(path)
    lines = [ln for ln in path.read_text().strip().splitlines() if ln.strip()]
    if not lines:
        raise ParameterError(f"{path}: empty point file")
    head = lines[0].split(",")
    if len(head) != 2:
        raise ParameterError(f"{path}: header must be 'n,J'")
    n, J = int(head[0]), int(head[1])
    rows = []
    for ln in lines[1:]:
        vals = [int(v) for v in ln.split(",")]
        if len(vals) != n:
            raise DimensionMismatchError(f"{path}: row has {len(vals)} coordinates, expected {n}")
        rows.append(vals)
    coords = np.asarray(rows, dtype=np.int64).reshape(len(rows), n)
    return DeltaSet(coords, Resolution(J))
