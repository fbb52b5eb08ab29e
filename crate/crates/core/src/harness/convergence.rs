use std::fmt::Write as _;

use rayon::prelude::*;

use super::{with_pool, RunConfig};
use crate::diagnostics::{ito_ledger_with, LedgerConvention};
use crate::dynamics::{solve, solve_with_path, Scheme, Trajectory};
use crate::error::{Error, Result};
use crate::noise::NoisePath;

/// Least-squares slope of `log err` against `log dt`. Non-positive errors
/// are skipped; fewer than two usable points give NaN.
pub fn fit_order(dts: &[f64], errors: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = dts
        .iter()
        .zip(errors)
        .filter(|(_, &e)| e > 0.0 && e.is_finite())
        .map(|(&d, &e)| (d.ln(), e.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Checks a refinement list: strictly decreasing, each entry dividing
/// `t_final` and an integer multiple of the finest. Returns the coarsening
/// factor of each entry relative to the finest.
fn refinement_factors(dts: &[f64], t_final: f64) -> Result<Vec<usize>> {
    if dts.len() < 2 {
        return Err(Error::usage("dt_list needs at least two entries"));
    }
    if dts.windows(2).any(|w| !(w[0] > w[1])) || !(dts[dts.len() - 1] > 0.0) {
        return Err(Error::usage("dt_list must be positive and strictly decreasing"));
    }
    let finest = dts[dts.len() - 1];
    dts.iter()
        .map(|&dt| {
            let steps = t_final / dt;
            let factor = dt / finest;
            if (steps - steps.round()).abs() > 1e-9 * steps || steps.round() < 1.0 {
                return Err(Error::usage(format!("dt {dt} does not divide t_final {t_final}")));
            }
            if (factor - factor.round()).abs() > 1e-9 * factor {
                return Err(Error::usage(format!("dt {dt} is not a multiple of the finest dt {finest}")));
            }
            Ok(factor.round() as usize)
        })
        .collect()
}

/// Runs `cfg` at time step `dt` driven by the finest path coarsened by
/// `factor` (or without noise for deterministic schemes).
fn run_at(cfg: &RunConfig, scheme: Scheme, dt: f64, fine: Option<&NoisePath>, factor: usize, stream: u64) -> Result<Trajectory> {
    let mut c = cfg.clone();
    c.dt = dt;
    c.scheme = scheme;
    c.snapshot_stride = 1;
    let solver = c.solver_config(stream)?;
    match fine {
        Some(p) if scheme.is_stochastic() => solve_with_path(&solver, p.coarsen(factor)?),
        _ => solve(&solver),
    }
}

fn fine_path(cfg: &RunConfig, scheme: Scheme, finest: f64, stream: u64) -> Result<Option<NoisePath>> {
    if !scheme.is_stochastic() {
        return Ok(None);
    }
    let grid = cfg.grid()?;
    let spec = cfg.noise_spec(&grid)?;
    let steps = (cfg.t_final / finest).round() as usize;
    Ok(Some(NoisePath::generate(&spec, finest, steps, cfg.master_seed, stream)?))
}

/// Time-step refinement of a single realisation.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceReport {
    pub scheme: Scheme,
    pub dts: Vec<f64>,
    /// `‖u_dt(T) − u_{dt_min}(T)‖_{L²}` for every dt except the finest.
    pub errors_vs_finest: Vec<f64>,
    /// `‖u_{dt_i}(T) − u_{dt_{i+1}}(T)‖_{L²}` for consecutive entries.
    pub successive_differences: Vec<f64>,
    /// Order fitted to the successive differences.
    pub observed_order: f64,
    /// Order fitted to the errors against the finest run.
    pub order_vs_finest: f64,
}

impl ConvergenceReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "scheme = {}", self.scheme.name());
        let _ = writeln!(s, "# dt error_vs_finest successive_difference");
        for (i, dt) in self.dts.iter().enumerate() {
            let e = self.errors_vs_finest.get(i).map_or("-".into(), |e| e.to_string());
            let d = self.successive_differences.get(i).map_or("-".into(), |d| d.to_string());
            let _ = writeln!(s, "{dt} {e} {d}");
        }
        let _ = writeln!(s, "observed_order = {}", self.observed_order);
        let _ = writeln!(s, "order_vs_finest = {}", self.order_vs_finest);
        s
    }
}

/// Runs the configured scheme at every entry of `dts` (coarse to fine) on
/// one noise realisation drawn at the finest step and summed onto the
/// coarser grids.
pub fn convergence_study(cfg: &RunConfig, dts: &[f64]) -> Result<ConvergenceReport> {
    let factors = refinement_factors(dts, cfg.t_final)?;
    let fine = fine_path(cfg, cfg.scheme, dts[dts.len() - 1], 0)?;
    let finals: Vec<Result<_>> = with_pool(cfg.workers, || {
        dts.par_iter()
            .zip(&factors)
            .map(|(&dt, &f)| run_at(cfg, cfg.scheme, dt, fine.as_ref(), f, 0).map(|t| t.final_u()))
            .collect()
    })?;
    let finals = finals.into_iter().collect::<Result<Vec<_>>>()?;
    let reference = &finals[finals.len() - 1];
    let errors_vs_finest: Vec<f64> = finals[..finals.len() - 1].iter().map(|u| u.l2_distance(reference)).collect();
    let successive_differences: Vec<f64> = finals.windows(2).map(|w| w[0].l2_distance(&w[1])).collect();
    Ok(ConvergenceReport {
        scheme: cfg.scheme,
        dts: dts.to_vec(),
        observed_order: fit_order(&dts[..dts.len() - 1], &successive_differences),
        order_vs_finest: fit_order(&dts[..dts.len() - 1], &errors_vs_finest),
        errors_vs_finest,
        successive_differences,
    })
}

/// Distance between the direct and Da Prato–Debussche solutions driven by
/// the same increments.
#[derive(Clone, Debug, PartialEq)]
pub struct SchemeAgreement {
    pub dts: Vec<f64>,
    /// Root mean square over members of `‖u_direct(T) − u_dpd(T)‖_{L²}`.
    pub distances: Vec<f64>,
    pub order: f64,
    pub members: usize,
}

/// Runs both stochastic schemes at each dt for `members` realisations
/// (streams `0..members`), each realisation drawn once at the finest dt.
pub fn scheme_agreement(cfg: &RunConfig, dts: &[f64], members: usize) -> Result<SchemeAgreement> {
    let factors = refinement_factors(dts, cfg.t_final)?;
    if members == 0 {
        return Err(Error::usage("need at least one member"));
    }
    let finest = dts[dts.len() - 1];
    let per_member: Vec<Result<Vec<f64>>> = with_pool(cfg.workers, || {
        (0..members as u64)
            .into_par_iter()
            .map(|m| {
                let fine = fine_path(cfg, Scheme::Direct, finest, m)?;
                dts.iter()
                    .zip(&factors)
                    .map(|(&dt, &f)| {
                        let a = run_at(cfg, Scheme::Direct, dt, fine.as_ref(), f, m)?;
                        let b = run_at(cfg, Scheme::Dpd, dt, fine.as_ref(), f, m)?;
                        Ok(a.final_u().l2_distance(&b.final_u()))
                    })
                    .collect()
            })
            .collect()
    })?;
    let per_member = per_member.into_iter().collect::<Result<Vec<_>>>()?;
    let distances: Vec<f64> = (0..dts.len())
        .map(|i| (per_member.iter().map(|d| d[i] * d[i]).sum::<f64>() / members as f64).sqrt())
        .collect();
    Ok(SchemeAgreement {
        dts: dts.to_vec(),
        order: fit_order(dts, &distances),
        distances,
        members,
    })
}

/// Final ledger residuals of one realisation under time-step refinement.
#[derive(Clone, Debug, PartialEq)]
pub struct LedgerRefinement {
    /// Coarse to fine.
    pub dts: Vec<f64>,
    pub literal: Vec<f64>,
    pub balanced: Vec<f64>,
    /// Literal residuals are non-increasing in magnitude and at least halve
    /// from the coarsest to the finest step.
    pub literal_converges: bool,
    /// Explanation produced whenever the literal ledger does not converge.
    pub discrepancy: Option<String>,
}

fn converges(residuals: &[f64]) -> bool {
    let mags: Vec<f64> = residuals.iter().map(|r| r.abs()).collect();
    mags.windows(2).all(|w| w[1] <= w[0]) && mags[mags.len() - 1] <= 0.5 * mags[0]
}

impl LedgerRefinement {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# dt literal_residual balanced_residual");
        for i in 0..self.dts.len() {
            let _ = writeln!(s, "{} {} {}", self.dts[i], self.literal[i], self.balanced[i]);
        }
        let _ = writeln!(s, "literal_converges = {}", self.literal_converges);
        if let Some(d) = &self.discrepancy {
            let _ = writeln!(s, "\n[discrepancy]\n{d}");
        }
        s
    }
}

/// Runs the configured stochastic scheme at `dt·2^{L−1}, …, 2dt, dt` with
/// `L = cfg.refinement_levels`, all levels driven by one realisation, and
/// records the final residual of both ledger conventions.
pub fn ledger_refinement(cfg: &RunConfig) -> Result<LedgerRefinement> {
    let levels = cfg.refinement_levels;
    let dts: Vec<f64> = (0..levels).map(|l| cfg.dt * (1u64 << (levels - 1 - l)) as f64).collect();
    let factors = refinement_factors(&dts, cfg.t_final)?;
    let fine = fine_path(cfg, cfg.scheme, cfg.dt, 0)?;
    let pairs: Vec<Result<(f64, f64)>> = with_pool(cfg.workers, || {
        dts.par_iter()
            .zip(&factors)
            .map(|(&dt, &f)| {
                let t = run_at(cfg, cfg.scheme, dt, fine.as_ref(), f, 0)?;
                let lit = ito_ledger_with(&t, LedgerConvention::Literal)?;
                let bal = ito_ledger_with(&t, LedgerConvention::ItoBalanced)?;
                Ok((lit.final_residual(), bal.final_residual()))
            })
            .collect()
    })?;
    let pairs = pairs.into_iter().collect::<Result<Vec<_>>>()?;
    let literal: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let balanced: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let literal_converges = converges(&literal);
    let discrepancy = (!literal_converges).then(|| {
        let grid = cfg.grid().ok();
        let drift = grid
            .and_then(|g| cfg.noise_spec(&g).ok())
            .map(|spec| spec.hs_norm_homogeneous(1.0).powi(2) + crate::noise::hs_norm(&spec, 0.0).powi(2))
            .unwrap_or(f64::NAN);
        format!(
            "The literal ledger does not close: its residual settles near {:.6e} instead of 0.\n\
             Increments here satisfy E|dβ|² = dt, for which Itô's formula gives the drift \
             t/2·(‖φ‖²_{{HS(L²;Ḣ¹)}} + ‖φ‖²_{{HS(L²;L²)}}) = {:.6e} at t = {} and the quadratic-variation \
             integrand |v*|² + 2Re v*.\n\
             The literal drift is twice that and its integrand is |v*|² + (Im v*)² + 4Re v*.\n\
             With the balanced terms the residual at the finest step is {:.6e} \
             (coarse to fine: {:?}).",
            literal[literal.len() - 1],
            0.5 * drift * cfg.t_final,
            cfg.t_final,
            balanced[balanced.len() - 1],
            balanced,
        )
    });
    Ok(LedgerRefinement {
        dts,
        literal,
        balanced,
        literal_converges,
        discrepancy,
    })
}
