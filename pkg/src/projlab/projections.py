"""Radial projections with cap statistics, orthogonal projections, Grassmann nets.

Two counting regimes coexist here. Pair-separated configurations confine
all viewing directions to a small cap, which a single gnomonic chart
represents with exact dyadic nesting (CapGrid); that chart is what the
tube machinery builds on. Scans whose viewpoints are interleaved with the
target set see directions all over the sphere, so there |X|_delta of a
direction set is measured directly: angular bins for n = 2, greedy
delta-separation of the unit vectors for n >= 3. Both counters agree with
the cap count up to small documented constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import (
    ApertureError,
    DegenerateViewpointError,
    DeltaSet,
    DimensionMismatchError,
    ParameterError,
    Resolution,
    covering_number,
    fmt,
    greedy_separated_indices,
    snap_to_lattice,
)

#: Aperture cap keeping the gnomonic chart distortion below 1.01.
MAX_APERTURE = 0.1


def radial_project(y, X: DeltaSet, min_distance: float | None = None) -> np.ndarray:
    """Unit direction vectors (x - y)/|x - y| for x in X, in X's order."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (X.n,):
        raise DimensionMismatchError(f"viewpoint shape {y.shape} does not match dimension {X.n}")
    if min_distance is None:
        min_distance = X.delta
    diff = X.floats() - y
    norms = np.linalg.norm(diff, axis=1)
    if len(X) and norms.min() < min_distance:
        bad = int(np.argmin(norms))
        raise DegenerateViewpointError(f"viewpoint within {min_distance:.3g} of point {bad}")
    return diff / norms[:, None]


def _tangent_basis(axis: np.ndarray) -> np.ndarray:
    """Deterministic orthonormal basis of axis^perp via a Householder reflection."""
    n = len(axis)
    e0 = np.zeros(n)
    e0[0] = 1.0
    v = e0 - axis
    nv = np.linalg.norm(v)
    if nv < 1e-14:
        H = np.eye(n)
    else:
        v = v / nv
        H = np.eye(n) - 2.0 * np.outer(v, v)
    # Columns 1.. of H form an orthonormal basis orthogonal to H e0 = axis.
    return H[:, 1:] if nv >= 1e-14 else np.eye(n)[:, 1:]


@dataclass
class CapGrid:
    """Dyadic grid on the gnomonic chart of a small spherical cap.

    Chart coordinate of a direction d: u = (B^T d) / (axis . d), an
    (n-1)-vector; cap cells at level k are the images of the dyadic
    2^-k-cubes of the normalized chart square [-aperture, aperture]^(n-1).
    Nesting is inherited from the dyadic cubes, hence exact. Over an
    aperture of at most 0.1 radians the chart's metric distortion is below
    1.01, so occupied-cell counts match |.|_delta up to a factor 4.
    """

    axis: np.ndarray
    aperture: float = MAX_APERTURE
    tangent: np.ndarray = field(init=False)

    def __post_init__(self):
        axis = np.asarray(self.axis, dtype=np.float64)
        nrm = np.linalg.norm(axis)
        if nrm < 1e-12:
            raise ParameterError("cap axis must be a nonzero vector")
        self.axis = axis / nrm
        if not 0 < self.aperture <= MAX_APERTURE:
            raise ApertureError(f"aperture must lie in (0, {MAX_APERTURE}], got {self.aperture}")
        self.tangent = _tangent_basis(self.axis)

    @property
    def n(self) -> int:
        return len(self.axis)

    def cell_width(self, level: int) -> float:
        """Chart-side of a cap cell at the level (approximately its angular size)."""
        return 2.0 * self.aperture * 2.0 ** (-level)

    def level_for_delta(self, delta: float) -> int:
        """Coarsest level whose cells have angular size in [delta, 2*delta)."""
        return max(0, math.floor(math.log2(2.0 * self.aperture / delta)))

    def chart(self, vectors: np.ndarray) -> np.ndarray:
        """Chart coordinates of directions (or unnormalized difference vectors)."""
        vectors = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
        axial = vectors @ self.axis
        if (axial <= 0).any():
            bad = int(np.argmax(axial <= 0))
            raise ApertureError(f"direction {bad} points away from the cap axis")
        u = (vectors @ self.tangent) / axial[:, None]
        out = np.abs(u).max(axis=1) if u.size else np.zeros(0)
        if u.size and out.max() > self.aperture:
            bad = int(np.argmax(np.abs(u).max(axis=1) > self.aperture))
            raise ApertureError(f"direction {bad} outside aperture {self.aperture}")
        return u

    def cells(self, vectors: np.ndarray, level: int) -> np.ndarray:
        """Occupied-cell indices (one row per input direction) at the level."""
        u = self.chart(vectors)
        side = 1 << level
        v = (u + self.aperture) / (2.0 * self.aperture)
        return np.minimum(np.floor(v * side), side - 1).astype(np.int64)

    def cell_center_u(self, cell, level: int) -> np.ndarray:
        side = 1 << level
        v = (np.asarray(cell, dtype=np.float64) + 0.5) / side
        return v * 2.0 * self.aperture - self.aperture


def cap_count(dirs: np.ndarray, grid: CapGrid, level: int) -> int:
    """Number of occupied cap cells at the level (a |.|_delta proxy, factor <= 4)."""
    dirs = np.atleast_2d(np.asarray(dirs, dtype=np.float64))
    if dirs.shape[0] == 0:
        return 0
    cells = grid.cells(dirs, level)
    return len(np.unique(cells, axis=0))


@dataclass
class Subspace:
    """An m-plane in R^n as an orthonormal frame of column vectors."""

    frame: np.ndarray

    def __post_init__(self):
        self.frame = np.asarray(self.frame, dtype=np.float64)
        if self.frame.ndim != 2:
            raise DimensionMismatchError("frame must be an (n, m) matrix")
        gram = self.frame.T @ self.frame
        if np.abs(gram - np.eye(self.m)).max() > 1e-12:
            raise ParameterError("frame columns are not orthonormal to 1e-12")

    @property
    def n(self) -> int:
        return self.frame.shape[0]

    @property
    def m(self) -> int:
        return self.frame.shape[1]

    def projector(self) -> np.ndarray:
        return self.frame @ self.frame.T

    def complement_basis(self) -> np.ndarray:
        """Deterministic orthonormal basis of the orthogonal complement."""
        q, _ = np.linalg.qr(self.frame, mode="complete")
        comp = q[:, self.m :]
        signs = np.sign(comp[np.abs(comp).argmax(axis=0), np.arange(comp.shape[1])])
        signs[signs == 0] = 1.0
        return comp * signs

    @classmethod
    def random(cls, n: int, m: int, rng: np.random.Generator) -> "Subspace":
        g = rng.standard_normal((n, m))
        q, r = np.linalg.qr(g)
        signs = np.sign(np.diag(r))
        signs[signs == 0] = 1.0
        return cls(q * signs)


def grass_distance(V1: Subspace, V2: Subspace) -> float:
    """Operator-norm distance ||P_V1 - P_V2||_2 between projection operators."""
    if V1.n != V2.n or V1.m != V2.m:
        raise DimensionMismatchError("subspaces live on different Grassmannians")
    return float(np.linalg.norm(V1.projector() - V2.projector(), 2))


def rho_distance(V1: Subspace, V2: Subspace) -> float:
    """Hausdorff-style distance: smallest rho with B cap V1 inside N_rho(B cap V2).

    Equals the sine of the largest principal angle; kept as the oracle for
    the metric-comparability test rather than the production metric.
    """
    resid = V1.frame - V2.projector() @ V1.frame
    return float(np.linalg.norm(resid, 2))


def _rep_vector(V: Subspace) -> np.ndarray:
    """Unit representative for the fast metric path (m = 1 or m = n-1)."""
    if V.m == 1:
        u = V.frame[:, 0]
    elif V.m == V.n - 1:
        u = V.complement_basis()[:, 0]
    else:
        raise ParameterError("representative vectors exist only for lines and hyperplanes")
    i = int(np.abs(u).argmax())
    return u * (1.0 if u[i] >= 0 else -1.0)


def ortho_project(V: Subspace, X: DeltaSet) -> np.ndarray:
    """Coordinates frame^T x of each point of X in the subspace, X's order."""
    if V.n != X.n:
        raise DimensionMismatchError(f"subspace ambient {V.n} != point dimension {X.n}")
    return X.floats() @ V.frame


def embed_in_unit_cube(points: np.ndarray) -> tuple:
    """Affine map of arbitrary points into [0,1]^m; returns (mapped, scale).

    Covering numbers transfer as |X|_delta = |mapped|_(delta * scale).
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    lo = points.min(axis=0)
    span = float(max((points.max(axis=0) - lo).max(), 1e-30))
    scale = 1.0 / span
    return (points - lo) * scale, scale


@dataclass
class GrassmannNet:
    """Delta-separated sample of G(m, n) in the projection-operator metric."""

    elements: list
    Delta: float
    m: int
    n: int
    rep_vectors: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.elements)

    @property
    def dim(self) -> int:
        return self.m * (self.n - self.m)

    def pairwise_separated(self) -> bool:
        for i in range(len(self.elements)):
            for j in range(i + 1, len(self.elements)):
                if grass_distance(self.elements[i], self.elements[j]) < self.Delta * (1 - 1e-12):
                    return False
        return True

    def metric_regularity(self, max_centers: int = 256, seed: int = 0) -> float:
        """Max over sampled centers and dyadic r of #(net cap B_r) / (r/Delta)^dim."""
        M = len(self.elements)
        rng = np.random.default_rng(seed)
        centers = range(M) if M <= max_centers else sorted(rng.choice(M, size=max_centers, replace=False))
        projs = np.stack([V.projector() for V in self.elements])
        best = 0.0
        r = self.Delta
        radii = []
        while r <= 2.0:
            radii.append(r)
            r *= 2
        for ci in centers:
            diffs = projs - projs[ci]
            dists = np.linalg.eigvalsh(diffs)
            dists = np.abs(dists).max(axis=1)
            for r in radii:
                count = int((dists <= r).sum())
                best = max(best, count / (r / self.Delta) ** self.dim)
        return best

    def save_csv(self, path):
        path = Path(path)
        lines = []
        for V in self.elements:
            lines.append(",".join(f"{v:.17g}" for v in V.frame.T.ravel()))
        path.write_text("\n".join(lines) + "\n")


def grassmann_net(m: int, n: int, Delta: float, seed: int, saturation_factor: int = 4) -> GrassmannNet:
    """Randomized-greedy Delta-net of G(m, n), stopping at rejection saturation.

    Seeded random frames are accepted while Delta-separated from everything
    accepted so far; construction stops after saturation_factor *
    Delta^-dim consecutive rejections. m = 1 and m = n - 1 use the exact
    representative-vector distance (sin of the principal angle), other
    (m, n) the batched operator norm.
    """
    if not 1 <= m < n <= 4:
        raise ParameterError(f"need 1 <= m < n <= 4, got m={m}, n={n}")
    if Delta <= 0:
        raise ParameterError("Delta must be positive")
    dim = m * (n - m)
    rng = np.random.default_rng(seed)
    fast = m in (1, n - 1)
    accepted: list = []
    reps: list = []
    projs: list = []
    max_rejects = int(saturation_factor * Delta ** (-dim)) + 1
    rejects = 0
    while rejects < max_rejects:
        V = Subspace.random(n, m, rng)
        if fast:
            u = _rep_vector(V)
            if reps:
                dots = np.abs(np.asarray(reps) @ u)
                dmin = float(np.sqrt(np.maximum(0.0, 1.0 - np.minimum(1.0, dots.max()) ** 2)))
            else:
                dmin = np.inf
        else:
            P = V.projector()
            if projs:
                diffs = np.stack(projs) - P
                dmin = float(np.abs(np.linalg.eigvalsh(diffs)).max(axis=1).min())
            else:
                dmin = np.inf
        if dmin >= Delta:
            accepted.append(V)
            if fast:
                reps.append(_rep_vector(V))
            else:
                projs.append(V.projector())
            rejects = 0
        else:
            rejects += 1
    net = GrassmannNet(
        elements=accepted,
        Delta=Delta,
        m=m,
        n=n,
        rep_vectors=np.asarray(reps) if fast else None,
    )
    return net


def direction_covering_count(dirs: np.ndarray, delta: float) -> int:
    """|dirs|_delta on the sphere: angular bins for n = 2, greedy otherwise."""
    dirs = np.atleast_2d(np.asarray(dirs, dtype=np.float64))
    if dirs.shape[0] == 0:
        return 0
    n = dirs.shape[1]
    if n == 2:
        nbins = max(1, math.ceil(2.0 * math.pi / delta))
        theta = np.arctan2(dirs[:, 1], dirs[:, 0])
        idx = np.floor((theta + math.pi) / delta).astype(np.int64) % nbins
        return int(np.count_nonzero(np.bincount(idx, minlength=nbins)))
    # Chordal greedy count; chord vs arc differ by < 3% at these scales.
    mapped = (dirs + 1.0) / 2.0
    res = Resolution.for_delta(delta / 2.0)
    coords = snap_to_lattice(mapped, res)
    return len(greedy_separated_indices(coords, (delta / 2.0) * res.cells))


@dataclass
class ScanResult:
    """Per-viewpoint direction counts with the exceptional-set verdict."""

    viewpoints: DeltaSet
    counts: np.ndarray
    degenerate: np.ndarray
    exceptional: np.ndarray
    threshold: float
    delta: float
    s: float

    @property
    def exceptional_viewpoints(self) -> DeltaSet:
        return self.viewpoints.subset(self.exceptional)

    def to_csv(self, path):
        path = Path(path)
        lines = ["viewpoint_index,cap_count,exceptional"]
        for i, (c, e) in enumerate(zip(self.counts, self.exceptional)):
            lines.append(f"{i},{int(c)},{str(bool(e)).lower()}")
        path.write_text("\n".join(lines) + "\n")


def exceptional_scan(
    A: DeltaSet,
    s: float,
    viewpoints: DeltaSet,
    delta: float | None = None,
    grid: CapGrid | None = None,
    level: int | None = None,
) -> ScanResult:
    """Viewpoints whose direction count |pi_y(A)|_delta falls below delta^-s.

    Degenerate viewpoints (within delta of A) are recorded with count -1
    and excluded from the exceptional set instead of aborting the scan.
    When a CapGrid is supplied the count is its occupied-cell count at
    `level`; otherwise the full-sphere covering counter is used.
    """
    if viewpoints.n != A.n:
        raise DimensionMismatchError("viewpoints and target set have different dimensions")
    if delta is None:
        delta = A.delta
    threshold = delta ** (-s)
    pts = A.floats()
    counts = np.empty(len(viewpoints), dtype=np.int64)
    degenerate = np.zeros(len(viewpoints), dtype=bool)
    delta2 = delta * delta
    for i, y in enumerate(viewpoints.floats()):
        diff = pts - y
        d2 = np.einsum("ij,ij->i", diff, diff)
        if d2.min() < delta2:
            counts[i] = -1
            degenerate[i] = True
            continue
        if grid is not None:
            lv = level if level is not None else grid.level_for_delta(delta)
            counts[i] = cap_count(diff, grid, lv)
        else:
            counts[i] = direction_covering_count(diff / np.sqrt(d2)[:, None], delta)
    exceptional = (~degenerate) & (counts < threshold)
    return ScanResult(
        viewpoints=viewpoints,
        counts=counts,
        degenerate=degenerate,
        exceptional=exceptional,
        threshold=threshold,
        delta=delta,
        s=s,
    )
