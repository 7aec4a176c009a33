"""Asian option price, cdf and pdf estimation by preintegration over the
leading Gaussian coordinate and randomly shifted rank-1 lattice rules."""

from .estimate import (
    CSV_HEADER,
    PAPER_LADDER,
    Estimate,
    Method,
    PdfCurve,
    StudyRow,
    convergence_study,
    mc_estimate,
    mc_preint_estimate,
    pdf_curve,
    qmc_estimate,
    qmc_preint_estimate,
)
from .lattice import (
    LatticeRule,
    ShiftedPointSet,
    cbc_construct,
    criterion,
    generate_points,
    inverse_normal_cdf,
    load_rule,
    sample_shifts,
    save_rule,
    trivial_rule,
)
from .model import BrownianFactor, MarketParams, dphi, pca_factor, phi
from .preintegrate import (
    OracleFailure,
    RootResult,
    SolverFailure,
    Target,
    TargetKind,
    preint_batch,
    preint_cdf,
    preint_pdf,
    preint_price,
    reference_preintegrate,
    solve_xi,
)
from .weights import (
    TheoryConstants,
    ThetaKind,
    WeightSpec,
    b_constant,
    kappa_beta,
    pod_weights,
    product_weights,
    theory_constants,
)

__version__ = "0.1.0"

__all__ = [
    "BrownianFactor",
    "CSV_HEADER",
    "Estimate",
    "LatticeRule",
    "MarketParams",
    "Method",
    "OracleFailure",
    "PAPER_LADDER",
    "PdfCurve",
    "RootResult",
    "ShiftedPointSet",
    "SolverFailure",
    "StudyRow",
    "Target",
    "TargetKind",
    "TheoryConstants",
    "ThetaKind",
    "WeightSpec",
    "b_constant",
    "cbc_construct",
    "convergence_study",
    "criterion",
    "dphi",
    "generate_points",
    "inverse_normal_cdf",
    "kappa_beta",
    "load_rule",
    "mc_estimate",
    "mc_preint_estimate",
    "pca_factor",
    "pdf_curve",
    "phi",
    "pod_weights",
    "preint_batch",
    "preint_cdf",
    "preint_pdf",
    "preint_price",
    "product_weights",
    "qmc_estimate",
    "qmc_preint_estimate",
    "reference_preintegrate",
    "sample_shifts",
    "save_rule",
    "solve_xi",
    "theory_constants",
    "trivial_rule",
]
