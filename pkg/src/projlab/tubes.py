"""Delta-tubes, bushes, slabs, and point-tube incidence statistics.

Tubes are keyed by a quantized line lattice: the pair (direction cell,
offset cell) of the tube's core line in the shared cap chart. Two tubes
within the delta-neighborhood of the same line land on the same key, so
the identification of comparable tubes is an exact equivalence relation
and the anchor multiplicity n_T is well-defined. Tube radius and offset
pitch both equal the chart cell width of the bush level; with membership
slack 0.5 this guarantees that every point of a cap cell lies inside the
cell's canonical tube despite the offset quantization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .content import check_regularity, extract_subset
from .core import (
    DeltaSet,
    DimensionMismatchError,
    ParameterError,
    Resolution,
    fmt,
)
from .projections import CapGrid, GrassmannNet, Subspace

#: Comparable-tube membership tolerance: points within radius*(1+SLACK) count.
DEFAULT_SLACK = 0.5


@dataclass(frozen=True)
class Tube:
    """Canonical delta-tube: a quantized line with a radius and an axial range."""

    grid: CapGrid
    level: int
    dir_cell: tuple
    off_cell: tuple
    radius: float
    lo: float
    hi: float
    slack: float = DEFAULT_SLACK

    @property
    def key(self):
        return (self.level, self.dir_cell, self.off_cell)

    def core_direction_u(self) -> np.ndarray:
        return self.grid.cell_center_u(self.dir_cell, self.level)

    def core_offset_w(self) -> np.ndarray:
        pitch = self.radius
        return (np.asarray(self.off_cell, dtype=np.float64) + 0.5) * pitch

    def membership(self, points: np.ndarray) -> np.ndarray:
        """Boolean mask: tangent residual <= radius*(1+slack) and axial in range.

        The residual is measured in the chart's tangent plane at equal
        axial coordinate; it differs from the true perpendicular distance
        by a factor cos(tilt) >= 0.995 over the aperture, absorbed in the
        slack.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        axial = pts @ self.grid.axis
        tang = pts @ self.grid.tangent
        u_c = self.core_direction_u()
        w_c = self.core_offset_w()
        resid = tang - (w_c[None, :] + axial[:, None] * u_c[None, :])
        dist = np.linalg.norm(resid, axis=1)
        return (dist <= self.radius * (1.0 + self.slack)) & (axial >= self.lo) & (axial <= self.hi)

    def count(self, X: DeltaSet, shell=None, anchor=None) -> int:
        mask = self.membership(X.floats())
        if shell is not None:
            if anchor is None:
                raise ParameterError("shell truncation needs the anchor point")
            d = np.linalg.norm(X.floats() - np.asarray(anchor, float), axis=1)
            mask &= (d >= shell[0]) & (d <= shell[1])
        return int(mask.sum())


@dataclass
class Bush:
    """Family of tubes through one anchor, one per occupied cap cell."""

    anchor: np.ndarray
    grid: CapGrid
    level: int
    tubes: list
    shell: tuple | None = None

    def __len__(self) -> int:
        return len(self.tubes)

    def by_key(self) -> dict:
        return {T.key: T for T in self.tubes}

    def direction_set(self) -> DeltaSet:
        """Occupied direction cells as a lattice set in the chart square."""
        cells = np.asarray([T.dir_cell for T in self.tubes], dtype=np.int64)
        return DeltaSet(cells, Resolution(self.level))


@dataclass(frozen=True)
class Slab:
    """k flat unit directions and n-k thin directions of width `thickness`."""

    center: np.ndarray
    flat_frame: np.ndarray  # (n, k) orthonormal columns
    thin_frame: np.ndarray  # (n, n-k) orthonormal columns
    thickness: float
    flat_extent: float = 1.0

    @classmethod
    def around_subspace(cls, V: Subspace, thickness: float, flat_extent: float = 1.0) -> "Slab":
        return cls(
            center=np.zeros(V.n),
            flat_frame=V.frame,
            thin_frame=V.complement_basis(),
            thickness=thickness,
            flat_extent=flat_extent,
        )

    def membership(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64)) - self.center
        thin = np.abs(pts @ self.thin_frame)
        flat = np.abs(pts @ self.flat_frame)
        return (thin <= self.thickness).all(axis=1) & (flat <= self.flat_extent).all(axis=1)


def build_bush(
    y,
    X: DeltaSet,
    grid: CapGrid,
    level: int,
    shell: tuple | None = None,
    radius: float | None = None,
    slack: float = DEFAULT_SLACK,
    axial_range: tuple | None = None,
) -> Bush:
    """One canonical tube per occupied cap cell of X seen from y.

    Every x in X lies in at least one tube of the bush (multi-membership
    at cell borders allowed). Raises ApertureError when X is not inside
    the chart's cap as seen from y.
    """
    y = np.asarray(y, dtype=np.float64)
    diffs = X.floats() - y
    cells = grid.cells(diffs, level)
    if radius is None:
        radius = grid.cell_width(level)
    if axial_range is None:
        axial = X.floats() @ grid.axis
        lo = float(axial.min() - radius)
        hi = float(axial.max() + radius)
    else:
        lo, hi = float(axial_range[0]), float(axial_range[1])
    y_ax = float(y @ grid.axis)
    y_tg = y @ grid.tangent
    tubes = []
    for cell in sorted({tuple(int(c) for c in row) for row in cells}):
        u_c = grid.cell_center_u(cell, level)
        w = y_tg - y_ax * u_c
        off_cell = tuple(int(v) for v in np.floor(w / radius))
        tubes.append(
            Tube(grid=grid, level=level, dir_cell=cell, off_cell=off_cell, radius=radius, lo=lo, hi=hi, slack=slack)
        )
    return Bush(anchor=y, grid=grid, level=level, tubes=tubes, shell=shell)


def thin_bush_directions(bush: Bush, sigma: float, budget_per_cube: float = 1.0) -> Bush:
    """Prune a bush so its direction set becomes a (delta,sigma)-set in the chart."""
    dirs = bush.direction_set()
    kept = extract_subset(dirs, sigma, budget_per_cube=budget_per_cube)
    keep_cells = {tuple(int(v) for v in row) for row in kept.coords}
    tubes = [T for T in bush.tubes if T.dir_cell in keep_cells]
    return Bush(anchor=bush.anchor, grid=bush.grid, level=bush.level, tubes=tubes, shell=bush.shell)


def scale_partition(bush: Bush, F: DeltaSet) -> dict:
    """Partition tubes by the dyadic class j = floor(log2 #(T cap F)); empty tubes drop."""
    classes: dict = {}
    for T in bush.tubes:
        c = T.count(F, shell=bush.shell, anchor=bush.anchor)
        if c == 0:
            continue
        j = int(math.floor(math.log2(c)))
        classes.setdefault(j, []).append(T)
    return classes


def spacing_check(bush: Bush, sigma: float) -> tuple:
    """Regularity of the bush's direction set inside the cap chart.

    Realizes r-tubes through the anchor as cap-chart ancestors: returns
    the max over dyadic r of #(sub-tubes in an r-tube) / (r/delta)^sigma
    plus the witness ancestor cell, by running the cube regularity check
    on the direction cells.
    """
    if len(bush.tubes) == 0:
        raise ParameterError("spacing check of an empty bush")
    report = check_regularity(bush.direction_set(), sigma, threshold=math.inf)
    return report.best_C, report


@dataclass
class IncidenceReport:
    """Exact point-tube incidence statistics over a canonical tube table."""

    I: int
    per_tube: dict  # key -> #(T cap E)
    per_point: np.ndarray  # index in E -> number of incident tubes
    n_T: dict  # key -> number of anchors owning the tube
    second_moment: int  # sum n_T^2
    count_second_moment: int  # sum (#(T cap E))^2
    pair_count: int  # sum over ordered pairs (y, y') of #{T: y, y' in T}
    ownership_pair_form: int  # sum over T of n_T * #(T cap E)
    bush_identity_holds: bool

    def summary(self) -> dict:
        return {
            "I": self.I,
            "tubes": len(self.per_tube),
            "sum_nT": int(sum(self.n_T.values())),
            "sum_nT_sq": self.second_moment,
            "sum_count_sq": self.count_second_moment,
            "pair_count": self.pair_count,
            "ownership_pair_form": self.ownership_pair_form,
            "bush_identity_holds": self.bush_identity_holds,
        }

    def to_csv(self, path):
        path = Path(path)
        lines = ["tube_id,count,n_T"]
        for key in sorted(self.per_tube):
            tube_id = f"{key[0]}|" + ";".join(map(str, key[1])) + "|" + ";".join(map(str, key[2]))
            lines.append(f"{tube_id},{self.per_tube[key]},{self.n_T.get(key, 0)}")
        path.write_text("\n".join(lines) + "\n")


def incidences(E: DeltaSet, families: dict, assert_bush_identity: bool = False) -> IncidenceReport:
    """Exact incidence counts between E and the canonical tubes of `families`.

    `families` maps an anchor id to its tubes; tubes sharing a key are the
    same canonical tube (first instance wins). Both sides of the
    double-count identity and of the second-moment identity
    sum_T count^2 = sum_{y,y'} #{T containing both} are computed
    independently and compared exactly.
    """
    table: dict = {}
    owners: dict = {}
    for anchor_id, tubes in families.items():
        seen = set()
        for T in tubes:
            key = T.key
            if key not in table:
                table[key] = T
            if key not in seen:
                owners[key] = owners.get(key, 0) + 1
                seen.add(key)

    pts = E.floats()
    per_tube: dict = {}
    per_point = np.zeros(len(E), dtype=np.int64)
    point_keys = [set() for _ in range(len(E))]
    for key in sorted(table):
        mask = table[key].membership(pts)
        per_tube[key] = int(mask.sum())
        per_point += mask
        for i in np.nonzero(mask)[0]:
            point_keys[int(i)].add(key)

    I_tubes = int(sum(per_tube.values()))
    I_points = int(per_point.sum())
    if I_tubes != I_points:
        raise AssertionError(f"double-count identity violated: {I_tubes} != {I_points}")

    count_second = int(sum(c * c for c in per_tube.values()))
    pair_count = 0
    for i in range(len(E)):
        Si = point_keys[i]
        if not Si:
            continue
        for j in range(len(E)):
            pair_count += len(Si & point_keys[j]) if j != i else len(Si)
    if count_second != pair_count:
        raise AssertionError(f"second-moment identity violated: {count_second} != {pair_count}")

    n_T = {key: owners.get(key, 0) for key in table}
    second = int(sum(v * v for v in n_T.values()))
    ownership_pair = int(sum(n_T[key] * per_tube[key] for key in table))
    bush_identity = second == ownership_pair
    if assert_bush_identity and not bush_identity:
        raise AssertionError(
            f"bush ownership identity violated: sum n_T^2 = {second}, pair form = {ownership_pair}"
        )
    return IncidenceReport(
        I=I_tubes,
        per_tube=per_tube,
        per_point=per_point,
        n_T=n_T,
        second_moment=second,
        count_second_moment=count_second,
        pair_count=pair_count,
        ownership_pair_form=ownership_pair,
        bush_identity_holds=bush_identity,
    )


def connecting_tubes(
    targets: DeltaSet, anchors: DeltaSet, grid: CapGrid, level: int, slack: float = DEFAULT_SLACK
) -> dict:
    """Membership-closed tube families over the anchors connecting to targets.

    Builds one tube per (anchor, occupied cap cell of the targets) with an
    axial range spanning both sets, then redefines each anchor's family as
    {T : anchor in T}. With that closure n_T = #(T cap anchors) exactly,
    so the ownership identity sum n_T^2 = sum_{y,y'} #{T in T^y : y' in T}
    holds when incidences are counted against the anchor set.
    """
    ax_t = targets.floats() @ grid.axis
    ax_a = anchors.floats() @ grid.axis
    radius = grid.cell_width(level)
    rng = (float(min(ax_t.min(), ax_a.min()) - radius), float(max(ax_t.max(), ax_a.max()) + radius))
    table: dict = {}
    for y in anchors.floats():
        for T in build_bush(y, targets, grid, level, slack=slack, axial_range=rng).tubes:
            table.setdefault(T.key, T)
    ordered = [table[key] for key in sorted(table)]
    closed: dict = {}
    for i, y in enumerate(anchors.floats()):
        closed[i] = [T for T in ordered if bool(T.membership(y[None, :])[0])]
    return closed


@dataclass
class HighLowSplit:
    """Tube families split by the anchor multiplicity threshold."""

    high: dict  # anchor -> {j: [tubes]}
    low: dict
    threshold: float
    mass_high: int
    mass_low: int


def high_density_filter(partitions: dict, n_T: dict, threshold: float) -> HighLowSplit:
    """Split each dyadic class by n_T >= threshold ('high-density tubes')."""
    high: dict = {}
    low: dict = {}
    mass_high = mass_low = 0
    for anchor_id, classes in partitions.items():
        high[anchor_id] = {}
        low[anchor_id] = {}
        for j, tubes in classes.items():
            hi = [T for T in tubes if n_T.get(T.key, 0) >= threshold]
            lo = [T for T in tubes if n_T.get(T.key, 0) < threshold]
            if hi:
                high[anchor_id][j] = hi
            if lo:
                low[anchor_id][j] = lo
            mass_high += len(hi)
            mass_low += len(lo)
    return HighLowSplit(high=high, low=low, threshold=threshold, mass_high=mass_high, mass_low=mass_low)


@dataclass
class OverlapProfile:
    """Per-probe slab multiplicities outside the K^-1 ball."""

    radii: np.ndarray
    counts: np.ndarray
    Delta: float
    K: float

    @property
    def max_overlap(self) -> int:
        return int(self.counts.max()) if len(self.counts) else 0

    @property
    def mean_overlap(self) -> float:
        return float(self.counts.mean()) if len(self.counts) else 0.0

    def to_csv(self, path):
        path = Path(path)
        lines = ["probe_index,radius,overlap"]
        for i, (r, c) in enumerate(zip(self.radii, self.counts)):
            lines.append(f"{i},{fmt(r)},{int(c)}")
        path.write_text("\n".join(lines) + "\n")


def slab_overlap_profile(net: GrassmannNet, Delta: float, K: float, probes: np.ndarray) -> OverlapProfile:
    """Multiplicity of {N_Delta(V) cap B(0,1)}_{V in net} at each probe point.

    Probes must lie in B(0,1) outside B(0, 1/K). Slab membership is the
    frame-coordinate box test |b_i . xi| <= Delta over the complement
    basis of V.
    """
    probes = np.atleast_2d(np.asarray(probes, dtype=np.float64))
    radii = np.linalg.norm(probes, axis=1)
    if (radii < 1.0 / K - 1e-12).any():
        bad = int(np.argmax(radii < 1.0 / K - 1e-12))
        raise ParameterError(f"probe {bad} lies inside the excluded ball of radius 1/K")
    if (radii > 1.0 + 1e-12).any():
        bad = int(np.argmax(radii > 1.0 + 1e-12))
        raise ParameterError(f"probe {bad} lies outside the unit ball")
    thin_frames = [V.complement_basis() for V in net.elements]
    counts = np.zeros(len(probes), dtype=np.int64)
    for thin in thin_frames:
        inside = (np.abs(probes @ thin) <= Delta).all(axis=1)
        counts += inside
    return OverlapProfile(radii=radii, counts=counts, Delta=Delta, K=K)
