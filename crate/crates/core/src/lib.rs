pub mod error;
pub mod expr_data;
pub mod linalg;
pub mod rng;
pub mod chdir;
pub mod baseline;
pub mod special;
pub mod enrichment;
pub mod numeric;
pub mod projection;
pub mod simulate;
pub mod cli;
