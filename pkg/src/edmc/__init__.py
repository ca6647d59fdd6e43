"""Euclidean distance matrix completion from partial squared-distance samples.

Core pieces: the Gram<->EDM operator algebra (:mod:`edmc.ops`), spectral
initialization plus preconditioned gradient descent (:mod:`edmc.solver`),
success metrics (:mod:`edmc.metrics`), an empirical identity/bound checker
(:mod:`edmc.checks`), Monte-Carlo experiment drivers (:mod:`edmc.experiments`),
and a PDB coordinate ingester (:mod:`edmc.pdb`).
"""

from edmc.linalg import (
    double_center,
    procrustes_align,
    spectral_norm,
    truncated_psd_factor,
)
from edmc.ops import (
    DistanceData,
    SampleMask,
    adjoint_g,
    apply_pomega,
    apply_romega,
    apply_romega_adjoint,
    build_hw,
    draw_mask,
    forward_edm,
    gram_from_edm,
    sample_distances,
)
from edmc.solver import (
    DivergenceError,
    SolveResult,
    SolverConfig,
    Trajectory,
    apgd,
    estimate_params,
    osmds_init,
    pseudo_gradient,
    sstress_gd,
    sstress_gradient,
    trim,
)
from edmc.metrics import (
    GroundTruthStats,
    ground_truth_stats,
    quotient_dist,
    recovery_error,
    spectral_error,
)

__version__ = "0.1.0"
