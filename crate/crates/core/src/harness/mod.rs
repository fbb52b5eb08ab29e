//! Configuration, Monte Carlo ensembles, convergence studies and output.

mod config;
mod convergence;
mod ensemble;
mod output;

pub use config::{parse_config, NoiseChoice, RunConfig};
pub use convergence::{
    convergence_study, fit_order, ledger_refinement, scheme_agreement, ConvergenceReport,
    LedgerRefinement, SchemeAgreement,
};
pub use ensemble::{
    noise_statistics, run_ensemble, EnsembleReport, MemberOutcome, MemberSummary,
    NoiseStatsReport,
};
pub use output::{emit_csv, read_csv, simulate, write_report, SimulationOutput, CSV_HEADER};

use crate::error::{Error, Result};

/// Runs `f` on a rayon pool with the requested number of threads (rayon's
/// default when `None`).
pub(crate) fn with_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(k) = workers {
        builder = builder.num_threads(k);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::usage(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}
