//! Band-structured self-adjoint model operators and their p-subordinated perturbations.

pub mod bands;
pub mod model;
pub mod perturbation;

pub use bands::{
    abs_pow, check_gap_condition, gap_condition_holds, make_power_gap_bands, midpoint_separation_index, Band,
    BandSpec, Gap, GapMargin, GapParams,
};
pub use model::{
    add_ingap_eigenvalues, build_band_operator, placements, BandPlacement, InGapAssignment, ModelOperator,
    SpectralTag,
};
pub use perturbation::{
    build_subordinated_perturbation, count_subordination_violations, estimate_subordination, perturbation_kinds,
    scaled_contraction, BoundKind, Perturbation, PerturbationKind, SubordinationCertificate,
};
