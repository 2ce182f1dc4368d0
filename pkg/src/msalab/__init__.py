"""Finite-volume laboratory for multi-scale analysis of Anderson localization on graphs."""
import os as _os

# Single-threaded BLAS keeps eigensolver output bit-identical between runs.
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    _os.environ.setdefault(_var, "1")

from .errors import *  # noqa: E402,F401,F403
from .graph import (  # noqa: E402
    FiniteGraph,
    SubgraphView,
    ball,
    boundary,
    build_box_graph,
    build_interval_graph,
    ball_growth_constant,
)
from .operators import (  # noqa: E402
    Ensemble,
    Realization,
    assemble_hamiltonian,
    eigendecompose,
    green,
    sample_potential,
    spectral_gap,
    verify_gre,
)
from .classify import (  # noqa: E402
    ScaleParams,
    classify_cnr,
    classify_m_localized,
    classify_resonant,
    classify_singular,
    classify_tunneling,
    gamma,
    max_disjoint_singular,
    scale_sequence,
)
from .subharmonic import annuli_bound, is_lq_subharmonic, radial_bound, two_ball_bound  # noqa: E402
from .montecarlo import (  # noqa: E402
    coverage_check,
    estimate_Pk,
    estimate_Qk,
    estimate_wegner,
    induction_audit,
    lattice_ball_setting,
    parameter_schedule,
)
from .dynamics import correlator_decay, ef_correlator, evolution_amplitude, gk_bound_audit  # noqa: E402
from .seeding import derive_seed  # noqa: E402

__version__ = "0.1.0"

__all__ = [
    "FiniteGraph", "SubgraphView", "ball", "boundary", "build_box_graph", "build_interval_graph",
    "ball_growth_constant", "Ensemble", "Realization", "assemble_hamiltonian", "eigendecompose", "green",
    "sample_potential", "spectral_gap", "verify_gre", "ScaleParams", "classify_cnr", "classify_m_localized",
    "classify_resonant", "classify_singular", "classify_tunneling", "gamma", "max_disjoint_singular",
    "scale_sequence", "annuli_bound", "is_lq_subharmonic", "radial_bound", "two_ball_bound", "coverage_check",
    "estimate_Pk", "estimate_Qk", "estimate_wegner", "induction_audit", "lattice_ball_setting",
    "parameter_schedule", "correlator_decay", "ef_correlator", "evolution_amplitude", "gk_bound_audit",
    "derive_seed",
]
