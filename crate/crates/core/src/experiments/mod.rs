//! Experiment driver: problem generators, error metrics, convergence and
//! eigenvalue studies with CSV output.

mod cache;
mod config;
mod generators;
mod runs;
mod table;

pub use cache::ReferenceCache;
pub use config::{CoefficientSpec, ExperimentConfig, LayerSpec, PotentialSpec, Problem, ScalarFn};
pub use generators::{error_norms, gen_checkerboard_kappa, gen_harmonic_v, gen_kronig_penney_v};
pub use runs::{eoc, run, run_bvp, run_evp, run_gpe, run_poisson_convergence};
pub use table::{Field, ResultTable};
