//! Symbolic analysis of definable topologies on bounded subsets of the
//! rational line: validation, closures, shadow sets, affinizability
//! decisions, piecewise-linear embeddings, and a brute-force cross-checking
//! oracle.

pub mod decide;
pub mod dsl;
pub mod embed;
pub mod genspec;
pub mod geom;
pub mod lra;
pub mod oracle;
pub mod rat;
pub mod shadow;
