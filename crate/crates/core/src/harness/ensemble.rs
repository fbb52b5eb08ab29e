use std::fmt::Write as _;

use rayon::prelude::*;

use super::{with_pool, RunConfig};
use crate::diagnostics::{
    energy, energy_bound_from_sups, ito_ledger_with, partition_intervals, EnergyBoundReport,
    LedgerConvention,
};
use crate::dynamics::solve;
use crate::error::Result;
use crate::lattice::{sobolev_norm, ComplexField};
use crate::noise::{hs_norm, step_stochastic_convolution, MomentEstimate, NoiseStream, SpectralPsi};

/// Diagnostics of one completed ensemble member.
#[derive(Clone, Debug, PartialEq)]
pub struct MemberSummary {
    pub index: usize,
    pub final_energy: f64,
    pub sup_energy: f64,
    /// Interval count of the greedy partition at the configured `eta`.
    pub partition_count: usize,
    pub ham3_final: f64,
    /// Final ledger residual, literal convention.
    pub residual_final: f64,
    /// Final ledger residual, Itô-balanced convention.
    pub balanced_residual_final: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum MemberOutcome {
    Completed(MemberSummary),
    Failed { index: usize, reason: String },
}

#[derive(Clone, Debug)]
pub struct EnsembleReport {
    pub config_hash: String,
    pub master_seed: u64,
    pub version: &'static str,
    pub members: Vec<MemberOutcome>,
    /// Aggregates over completed members; `None` when every member failed.
    pub final_energy: Option<MomentEstimate>,
    pub energy_bound: Option<EnergyBoundReport>,
    pub partition_count: Option<MomentEstimate>,
    pub ham3_final: Option<MomentEstimate>,
    pub residual_final: Option<MomentEstimate>,
    pub balanced_residual_final: Option<MomentEstimate>,
}

impl EnsembleReport {
    pub fn completed(&self) -> impl Iterator<Item = &MemberSummary> {
        self.members.iter().filter_map(|m| match m {
            MemberOutcome::Completed(s) => Some(s),
            MemberOutcome::Failed { .. } => None,
        })
    }

    pub fn failed_count(&self) -> usize {
        self.members
            .iter()
            .filter(|m| matches!(m, MemberOutcome::Failed { .. }))
            .count()
    }

    /// Plain-text report: provenance, aggregates, one line per member.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[provenance]");
        let _ = writeln!(s, "config_hash = {}", self.config_hash);
        let _ = writeln!(s, "master_seed = {}", self.master_seed);
        let _ = writeln!(s, "version = {}", self.version);
        let _ = writeln!(s, "\n[aggregate]");
        let _ = writeln!(s, "members = {}", self.members.len());
        let _ = writeln!(s, "failed = {}", self.failed_count());
        let est = |s: &mut String, name: &str, e: &Option<MomentEstimate>| {
            if let Some(e) = e {
                let _ = writeln!(s, "{name}_mean = {}", e.mean);
                let _ = writeln!(s, "{name}_se = {}", e.std_error);
            }
        };
        est(&mut s, "final_energy", &self.final_energy);
        est(&mut s, "sup_energy", &self.energy_bound.as_ref().map(|b| b.sup_energy));
        if let Some(b) = &self.energy_bound {
            for (q, v) in &b.quantiles {
                let _ = writeln!(s, "sup_energy_q{:02} = {v}", (q * 100.0).round() as u32);
            }
        }
        est(&mut s, "partition_count", &self.partition_count);
        est(&mut s, "ham3_final", &self.ham3_final);
        est(&mut s, "residual_final", &self.residual_final);
        est(&mut s, "balanced_residual_final", &self.balanced_residual_final);
        let _ = writeln!(s, "\n[members]");
        let _ = writeln!(
            s,
            "# index status final_energy sup_energy partition_count ham3_final residual_final balanced_residual_final"
        );
        for m in &self.members {
            match m {
                MemberOutcome::Completed(m) => {
                    let _ = writeln!(
                        s,
                        "{} ok {} {} {} {} {} {}",
                        m.index,
                        m.final_energy,
                        m.sup_energy,
                        m.partition_count,
                        m.ham3_final,
                        m.residual_final,
                        m.balanced_residual_final
                    );
                }
                MemberOutcome::Failed { index, reason } => {
                    let _ = writeln!(s, "{index} failed {reason}");
                }
            }
        }
        s
    }
}

fn run_member(cfg: &RunConfig, index: usize) -> Result<MemberSummary> {
    let solver = cfg.solver_config(index as u64)?;
    let traj = solve(&solver)?;
    let literal = ito_ledger_with(&traj, LedgerConvention::Literal)?;
    let balanced = ito_ledger_with(&traj, LedgerConvention::ItoBalanced)?;
    let partition = partition_intervals(&traj, cfg.eta)?;
    Ok(MemberSummary {
        index,
        final_energy: energy(&traj.v_star(traj.len() - 1)),
        sup_energy: literal.energy.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        partition_count: partition.count(),
        ham3_final: *literal.ham3.last().unwrap_or(&0.0),
        residual_final: literal.final_residual(),
        balanced_residual_final: balanced.final_residual(),
    })
}

fn estimate(xs: Vec<f64>) -> Option<MomentEstimate> {
    (!xs.is_empty()).then(|| MomentEstimate::from_samples(&xs))
}

/// Runs `cfg.ensemble_size` independent members (member `i` draws from
/// stream `i` of `cfg.master_seed`) on a pool of `cfg.workers` threads.
/// A member that fails is recorded and the rest continue. Results do not
/// depend on the worker count. When `cfg.output_dir` is set the text
/// report is written there as `report.txt`.
pub fn run_ensemble(cfg: &RunConfig) -> Result<EnsembleReport> {
    // Surface configuration errors once instead of per member.
    cfg.solver_config(0)?;
    let members: Vec<MemberOutcome> = with_pool(cfg.workers, || {
        (0..cfg.ensemble_size)
            .into_par_iter()
            .map(|i| match run_member(cfg, i) {
                Ok(s) => MemberOutcome::Completed(s),
                Err(e) => MemberOutcome::Failed {
                    index: i,
                    reason: e.to_string(),
                },
            })
            .collect()
    })?;

    let done: Vec<&MemberSummary> = members
        .iter()
        .filter_map(|m| match m {
            MemberOutcome::Completed(s) => Some(s),
            MemberOutcome::Failed { .. } => None,
        })
        .collect();
    let collect = |f: fn(&MemberSummary) -> f64| estimate(done.iter().map(|m| f(m)).collect());
    let sups: Vec<f64> = done.iter().map(|m| m.sup_energy).collect();
    let report = EnsembleReport {
        config_hash: cfg.config_hash(),
        master_seed: cfg.master_seed,
        version: env!("CARGO_PKG_VERSION"),
        final_energy: collect(|m| m.final_energy),
        energy_bound: if sups.is_empty() {
            None
        } else {
            Some(energy_bound_from_sups(sups)?)
        },
        partition_count: collect(|m| m.partition_count as f64),
        ham3_final: collect(|m| m.ham3_final),
        residual_final: collect(|m| m.residual_final),
        balanced_residual_final: collect(|m| m.balanced_residual_final),
        members,
    };
    if let Some(dir) = &cfg.output_dir {
        super::write_report(&dir.join("report.txt"), &report.to_text())?;
    }
    Ok(report)
}

/// Monte Carlo moments of the stochastic convolution at `t_final`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseStatsReport {
    pub t: f64,
    /// `E‖Ψ(t)‖²_{L²}` and its prediction `t‖φ‖²_{HS(L²;L²)}`.
    pub l2: MomentEstimate,
    pub l2_predicted: f64,
    /// `E‖Ψ(t)‖²_{H¹}` and its prediction `t‖φ‖²_{HS(L²;H¹)}`.
    pub h1: MomentEstimate,
    pub h1_predicted: f64,
    /// `E sup_{τ≤t}‖Ψ(τ)‖²_{H¹}` over the snapshot grid.
    pub h1_sup: MomentEstimate,
}

impl NoiseStatsReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "t = {}", self.t);
        let _ = writeln!(s, "samples = {}", self.h1.samples);
        for (name, e, p) in [("l2", self.l2, self.l2_predicted), ("h1", self.h1, self.h1_predicted)] {
            let _ = writeln!(s, "{name}_mean = {}", e.mean);
            let _ = writeln!(s, "{name}_se = {}", e.std_error);
            let _ = writeln!(s, "{name}_predicted = {p}");
            let _ = writeln!(s, "{name}_z = {}", (e.mean - p) / e.std_error);
        }
        let _ = writeln!(s, "h1_sup_mean = {}", self.h1_sup.mean);
        let _ = writeln!(s, "h1_sup_se = {}", self.h1_sup.std_error);
        s
    }
}

/// Samples `Ψ` alone for every ensemble member (no solver run) and
/// compares its second moments at `t_final` with their exact values.
/// Members are reduced to scalars as they go, so memory stays flat in the
/// ensemble size.
pub fn noise_statistics(cfg: &RunConfig) -> Result<NoiseStatsReport> {
    let grid = cfg.grid()?;
    let spec = cfg.noise_spec(&grid)?;
    let steps = cfg.solver_config(0)?.steps();
    let stride = cfg.snapshot_stride;
    let per_member: Vec<Result<[f64; 3]>> = with_pool(cfg.workers, || {
        (0..cfg.ensemble_size)
            .into_par_iter()
            .map(|i| {
                let mut stream = NoiseStream::new(cfg.master_seed, i as u64);
                let mut sup_h1 = 0.0f64;
                if let Some(mut fast) = SpectralPsi::new(&spec, cfg.dt) {
                    for step in 1..=steps {
                        fast.step(&mut stream);
                        if step % stride == 0 {
                            sup_h1 = sup_h1.max(fast.sobolev_sq(1.0));
                        }
                    }
                    return Ok([fast.sobolev_sq(0.0), fast.sobolev_sq(1.0), sup_h1]);
                }
                let mut psi = ComplexField::zeros(&grid);
                for step in 1..=steps {
                    psi = step_stochastic_convolution(&psi, &spec, cfg.dt, &mut stream)?.0;
                    if step % stride == 0 {
                        sup_h1 = sup_h1.max(sobolev_norm(&psi, 1.0, false).powi(2));
                    }
                }
                Ok([
                    sobolev_norm(&psi, 0.0, false).powi(2),
                    sobolev_norm(&psi, 1.0, false).powi(2),
                    sup_h1,
                ])
            })
            .collect()
    })?;
    let per_member = per_member.into_iter().collect::<Result<Vec<_>>>()?;
    let column = |j: usize| MomentEstimate::from_samples(&per_member.iter().map(|m| m[j]).collect::<Vec<_>>());
    let t = cfg.t_final;
    Ok(NoiseStatsReport {
        t,
        l2: column(0),
        l2_predicted: t * hs_norm(&spec, 0.0).powi(2),
        h1: column(1),
        h1_predicted: t * hs_norm(&spec, 1.0).powi(2),
        h1_sup: column(2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::parse_config;

    fn small() -> RunConfig {
        parse_config(
            "[grid]\ndim = 1\npoints = 16\n[time]\ndt = 0.01\nt_final = 0.1\n[ensemble]\nsize = 6\nmaster_seed = 3\n",
        )
        .unwrap()
    }

    #[test]
    fn ensemble_is_worker_independent() {
        let mut a = small();
        a.workers = Some(1);
        let mut b = small();
        b.workers = Some(3);
        let ra = run_ensemble(&a).unwrap();
        let rb = run_ensemble(&b).unwrap();
        assert_eq!(ra.members, rb.members);
        assert_eq!(ra.to_text(), rb.to_text());
        assert_eq!(ra.failed_count(), 0);
        assert_eq!(ra.completed().count(), 6);
        // distinct streams give distinct members
        let e: Vec<f64> = ra.completed().map(|m| m.final_energy).collect();
        assert!(e.windows(2).all(|w| w[0] != w[1]));
    }

    #[test]
    fn failed_members_are_recorded() {
        let mut cfg = small();
        cfg.noise = crate::harness::NoiseChoice::Multiplier {
            amplitude: 1e200,
            sigma: 0.0,
            cutoff: None,
        };
        let r = run_ensemble(&cfg).unwrap();
        assert_eq!(r.failed_count(), 6);
        assert!(r.final_energy.is_none());
        assert!(r.to_text().contains("failed"));
    }

    #[test]
    fn report_written_to_output_dir() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small();
        cfg.output_dir = Some(dir.path().to_path_buf());
        let r = run_ensemble(&cfg).unwrap();
        let text = std::fs::read_to_string(dir.path().join("report.txt")).unwrap();
        assert_eq!(text, r.to_text());
        assert!(text.contains(&cfg.config_hash()));
    }

    #[test]
    fn noise_stats_shape() {
        let mut cfg = small();
        cfg.ensemble_size = 200;
        let r = noise_statistics(&cfg).unwrap();
        assert_eq!(r.h1.samples, 200);
        assert!(r.h1_sup.mean >= r.h1.mean);
        assert!((r.h1.mean - r.h1_predicted).abs() < 5.0 * r.h1.std_error);
    }
}
