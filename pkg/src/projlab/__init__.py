"""Desk-scale laboratory for delta-discretized radial and orthogonal projections."""

__version__ = "0.1.0"

from .core import (
    DeltaSet,
    DyadicCube,
    ExponentParams,
    LabError,
    Resolution,
    covering_number,
    cube_membership,
    separated_subset,
)
from .content import check_regularity, extract_subset, hausdorff_content, robust_min_content
from .generators import GeneratorSpec, PairConfig, gen_cantor, gen_pair, gen_random_delta_s
from .projections import CapGrid, GrassmannNet, Subspace, cap_count, exceptional_scan, grassmann_net, ortho_project, radial_project
from .tubes import Bush, IncidenceReport, Tube, build_bush, high_density_filter, incidences, scale_partition, slab_overlap_profile, spacing_check
from .highlow import FreqMask, GridFunction, decompose, low_part_bound_check, second_moment_vs_bound, tube_field
