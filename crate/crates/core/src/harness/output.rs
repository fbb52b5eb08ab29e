use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::RunConfig;
use crate::diagnostics::{
    ito_ledger_with, partition_intervals, EnergyLedger, IntervalPartition, LedgerConvention,
};
use crate::dynamics::{solve, Trajectory};
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "time,energy,ham1,ham2,ham3,residual,x1_cum,l6_cum";

/// Writes the ledger as CSV, one row per snapshot. Floats use Rust's
/// shortest round-trip formatting. Overwrites `path`.
pub fn emit_csv(ledger: &EnergyLedger, path: &Path) -> Result<()> {
    let mut s = String::with_capacity(64 * (ledger.len() + 1));
    s.push_str(CSV_HEADER);
    s.push('\n');
    for i in 0..ledger.len() {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            ledger.times[i],
            ledger.energy[i],
            ledger.ham1[i],
            ledger.ham2[i],
            ledger.ham3[i],
            ledger.residual[i],
            ledger.x1_cum[i],
            ledger.l6_cum[i]
        );
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Reads a file written by [`emit_csv`].
pub fn read_csv(path: &Path) -> Result<EnergyLedger> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(bad("missing or wrong header".into()));
    }
    let mut ledger = EnergyLedger::default();
    for (i, line) in lines.enumerate() {
        let cols: Vec<f64> = line
            .split(',')
            .map(|c| c.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| bad(format!("row {}: {e}", i + 1)))?;
        if cols.len() != 8 {
            return Err(bad(format!("row {}: expected 8 columns, got {}", i + 1, cols.len())));
        }
        ledger.times.push(cols[0]);
        ledger.energy.push(cols[1]);
        ledger.ham1.push(cols[2]);
        ledger.ham2.push(cols[3]);
        ledger.ham3.push(cols[4]);
        ledger.residual.push(cols[5]);
        ledger.x1_cum.push(cols[6]);
        ledger.l6_cum.push(cols[7]);
    }
    Ok(ledger)
}

/// Writes a text report, creating parent directories as needed.
pub fn write_report(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Everything produced by a single run.
#[derive(Clone, Debug)]
pub struct SimulationOutput {
    pub trajectory: Trajectory,
    pub ledger: EnergyLedger,
    pub balanced_ledger: EnergyLedger,
    pub partition: IntervalPartition,
    pub config_hash: String,
    /// Files written, in order.
    pub files: Vec<PathBuf>,
}

impl SimulationOutput {
    pub fn report_text(&self) -> String {
        let mut s = String::new();
        let cfg = &self.trajectory.config;
        let _ = writeln!(s, "[provenance]");
        let _ = writeln!(s, "config_hash = {}", self.config_hash);
        let _ = writeln!(s, "seed = {}", cfg.seed);
        let _ = writeln!(s, "stream = {}", cfg.stream_id);
        let _ = writeln!(s, "version = {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(s, "\n[run]");
        let _ = writeln!(s, "scheme = {}", cfg.scheme.name());
        let _ = writeln!(s, "steps = {}", cfg.steps());
        let _ = writeln!(s, "snapshots = {}", self.trajectory.len());
        let last = self.ledger.len() - 1;
        let _ = writeln!(s, "\n[energy]");
        let _ = writeln!(s, "initial = {}", self.ledger.energy[0]);
        let _ = writeln!(s, "final = {}", self.ledger.energy[last]);
        let _ = writeln!(s, "sup = {}", self.ledger.energy.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        let _ = writeln!(s, "ham1_final = {}", self.ledger.ham1[last]);
        let _ = writeln!(s, "ham2_final = {}", self.ledger.ham2[last]);
        let _ = writeln!(s, "ham3_final = {}", self.ledger.ham3[last]);
        let _ = writeln!(s, "residual_final = {}", self.ledger.residual[last]);
        let _ = writeln!(s, "balanced_residual_final = {}", self.balanced_ledger.residual[last]);
        let _ = writeln!(s, "x1_total = {}", self.ledger.x1_cum[last]);
        let _ = writeln!(s, "l6_total = {}", self.ledger.l6_cum[last]);
        let _ = writeln!(s, "\n[partition]");
        let _ = writeln!(s, "eta = {}", self.partition.eta);
        let _ = writeln!(s, "intervals = {}", self.partition.count());
        let _ = writeln!(s, "irreducible = {}", self.partition.irreducible_count());
        s
    }
}

/// Solves member 0 of `cfg` and, when `out_dir` is given, writes
/// `trajectory.bin` and `noise.bin` (if `emit_snapshots`),
/// `diagnostics.csv` and `report.txt` there.
pub fn simulate(cfg: &RunConfig, out_dir: Option<&Path>) -> Result<SimulationOutput> {
    let solver = cfg.solver_config(0)?;
    let trajectory = solve(&solver)?;
    let ledger = ito_ledger_with(&trajectory, LedgerConvention::Literal)?;
    let balanced_ledger = ito_ledger_with(&trajectory, LedgerConvention::ItoBalanced)?;
    let partition = partition_intervals(&trajectory, cfg.eta)?;
    let mut out = SimulationOutput {
        trajectory,
        ledger,
        balanced_ledger,
        partition,
        config_hash: cfg.config_hash(),
        files: Vec::new(),
    };
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        if cfg.emit_snapshots {
            let p = dir.join("trajectory.bin");
            out.trajectory.save(&p)?;
            out.files.push(p);
            if let Some(path) = &out.trajectory.noise_path {
                let p = dir.join("noise.bin");
                path.save(out.trajectory.grid(), &p)?;
                out.files.push(p);
            }
        }
        let p = dir.join("diagnostics.csv");
        emit_csv(&out.ledger, &p)?;
        out.files.push(p);
        let p = dir.join("report.txt");
        write_report(&p, &out.report_text())?;
        out.files.push(p);
    }
    Ok(out)
}
