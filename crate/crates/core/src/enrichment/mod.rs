//! Gene-set enrichment: hypergeometric over-representation, principal-angle
//! scoring, top-n overlap curves and distance-ordered window profiles.

mod angle;
mod hypergeom;
mod overlap;
mod profile;
mod quadrature;

pub use angle::{
    angle_enrich, angle_null_density, angle_null_pvalue, angle_to_tsv, principal_angle,
    subspace_angle_pvalue, AngleEnrichmentResult, PrincipalAngle, ANGLE_TSV_HEADER,
};
pub use hypergeom::{
    hypergeom_enrich, hypergeom_tail, hypergeom_to_tsv, EnrichmentResult, HYPERGEOM_TSV_HEADER,
};
pub use overlap::{
    aggregate_ratios, aggregate_to_tsv, overlap_curve, AggregatedRatio, OverlapPoint, Ratio,
    AGGREGATE_TSV_HEADER,
};
pub use profile::{
    parse_associations_tsv, prepare_associations, profile_to_tsv, sliding_window_profile,
    Association, ProfilePoint, PROFILE_TSV_HEADER,
};
