//! Run configuration and its `key = value` text grammar.
//!
//! ```text
//! # comment
//! [grid]
//! dim = 2
//! points = 64
//! box_length = 2pi
//!
//! [time]
//! dt = 1e-3
//! t_final = 1
//! scheme = direct
//! ```
//!
//! Sections: `[grid]`, `[time]`, `[noise]`, `[initial]`, `[ensemble]`,
//! `[output]`. Numbers may carry a `pi` suffix (`2pi`, `0.5pi`, `pi`).

use std::collections::HashSet;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::PathBuf;

use sha2::{Digest, Sha256};

use crate::dynamics::{InitialData, Scheme, SolverConfig};
use crate::error::{ConfigError, Error, Result};
use crate::lattice::{make_grid, GridSpec};
use crate::noise::NoiseSpec;

#[derive(Clone, Debug, PartialEq)]
pub enum NoiseChoice {
    Zero,
    Multiplier {
        amplitude: f64,
        sigma: f64,
        cutoff: Option<f64>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub dim: usize,
    pub points_per_axis: usize,
    pub box_length: f64,
    pub dt: f64,
    pub t_final: f64,
    pub snapshot_stride: usize,
    pub scheme: Scheme,
    pub nonlinear: bool,
    /// Time steps for `converge`; defaults to `4dt, 2dt, dt, dt/2`.
    pub dt_list: Option<Vec<f64>>,
    /// Number of dt-halvings + 1 used by `verify-energy`.
    pub refinement_levels: usize,
    pub noise: NoiseChoice,
    pub initial: InitialData,
    pub ensemble_size: usize,
    pub master_seed: u64,
    pub eta: f64,
    pub workers: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub emit_snapshots: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dim: 2,
            points_per_axis: 64,
            box_length: 2.0 * PI,
            dt: 1e-3,
            t_final: 1.0,
            snapshot_stride: 1,
            scheme: Scheme::Direct,
            nonlinear: true,
            dt_list: None,
            refinement_levels: 4,
            noise: NoiseChoice::Multiplier {
                amplitude: 0.1,
                sigma: 3.5,
                cutoff: None,
            },
            initial: InitialData::GaussianBump {
                amplitude: 0.5,
                width: 1.0,
            },
            ensemble_size: 1,
            master_seed: 0,
            eta: 0.1,
            workers: None,
            output_dir: None,
            emit_snapshots: true,
        }
    }
}

impl RunConfig {
    pub fn grid(&self) -> Result<GridSpec> {
        make_grid(self.dim, self.points_per_axis, self.box_length)
    }

    pub fn noise_spec(&self, grid: &GridSpec) -> Result<NoiseSpec> {
        match &self.noise {
            NoiseChoice::Zero => Ok(NoiseSpec::zero(grid)),
            NoiseChoice::Multiplier {
                amplitude,
                sigma,
                cutoff,
            } => NoiseSpec::multiplier(grid, *amplitude, *sigma, *cutoff),
        }
    }

    /// Solver configuration for ensemble member `stream_id`.
    pub fn solver_config(&self, stream_id: u64) -> Result<SolverConfig> {
        let grid = self.grid()?;
        let cfg = SolverConfig {
            grid: grid.clone(),
            t_final: self.t_final,
            dt: self.dt,
            scheme: self.scheme,
            noise: self.noise_spec(&grid)?,
            initial_v: self.initial.build(&grid)?,
            snapshot_stride: self.snapshot_stride,
            seed: self.master_seed,
            stream_id,
            nonlinear: self.nonlinear,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn dt_list(&self) -> Vec<f64> {
        self.dt_list
            .clone()
            .unwrap_or_else(|| vec![4.0 * self.dt, 2.0 * self.dt, self.dt, 0.5 * self.dt])
    }

    /// Fully resolved configuration in the input grammar. Parsing this text
    /// reproduces `self`.
    pub fn canonical_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[grid]\ndim = {}\npoints = {}\nbox_length = {}", self.dim, self.points_per_axis, self.box_length);
        let _ = writeln!(
            s,
            "\n[time]\ndt = {}\nt_final = {}\nsnapshot_stride = {}\nscheme = {}\nnonlinear = {}\nrefinement_levels = {}",
            self.dt,
            self.t_final,
            self.snapshot_stride,
            self.scheme.name(),
            self.nonlinear,
            self.refinement_levels
        );
        if let Some(list) = &self.dt_list {
            let items: Vec<String> = list.iter().map(|d| d.to_string()).collect();
            let _ = writeln!(s, "dt_list = {}", items.join(", "));
        }
        match &self.noise {
            NoiseChoice::Zero => {
                let _ = writeln!(s, "\n[noise]\nkind = zero");
            }
            NoiseChoice::Multiplier {
                amplitude,
                sigma,
                cutoff,
            } => {
                let _ = writeln!(s, "\n[noise]\nkind = multiplier\namplitude = {amplitude}\nsigma = {sigma}");
                if let Some(c) = cutoff {
                    let _ = writeln!(s, "cutoff = {c}");
                }
            }
        }
        let _ = writeln!(s, "\n[initial]");
        match &self.initial {
            InitialData::Constant { phase } => {
                let _ = writeln!(s, "kind = constant\nphase = {phase}");
            }
            InitialData::PlaneWave { modes } => {
                let items: Vec<String> = modes.iter().map(|m| m.to_string()).collect();
                let _ = writeln!(s, "kind = plane_wave\nmodes = {}", items.join(", "));
            }
            InitialData::GaussianBump { amplitude, width } => {
                let _ = writeln!(s, "kind = gaussian_bump\namplitude = {amplitude}\nwidth = {width}");
            }
            InitialData::RandomBandLimited { h1_norm, band, seed } => {
                let _ = writeln!(s, "kind = random\nh1_norm = {h1_norm}\nband = {band}\nseed = {seed}");
            }
        }
        let _ = writeln!(
            s,
            "\n[ensemble]\nsize = {}\nmaster_seed = {}\neta = {}",
            self.ensemble_size, self.master_seed, self.eta
        );
        if let Some(w) = self.workers {
            let _ = writeln!(s, "workers = {w}");
        }
        let _ = writeln!(s, "\n[output]\nemit_snapshots = {}", self.emit_snapshots);
        if let Some(d) = &self.output_dir {
            let _ = writeln!(s, "dir = {}", d.display());
        }
        s
    }

    /// `[provenance]` block shared by every text report.
    pub fn provenance_text(&self) -> String {
        format!(
            "[provenance]\nconfig_hash = {}\nmaster_seed = {}\nversion = {}\n",
            self.config_hash(),
            self.master_seed,
            env!("CARGO_PKG_VERSION")
        )
    }

    /// SHA-256 of the canonical text, excluding output location and worker
    /// count (neither affects results).
    pub fn config_hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        c.workers = None;
        hex::encode(Sha256::digest(c.canonical_text().as_bytes()))
    }
}

const SECTIONS: [&str; 6] = ["grid", "time", "noise", "initial", "ensemble", "output"];

fn parse_number(raw: &str) -> std::result::Result<f64, String> {
    let v = raw.trim();
    let parsed = if let Some(coef) = v.strip_suffix("pi") {
        let coef = coef.trim().trim_end_matches('*').trim();
        let c = if coef.is_empty() {
            Ok(1.0)
        } else {
            coef.parse::<f64>()
        };
        c.map(|c| c * PI)
    } else {
        v.parse::<f64>()
    };
    match parsed {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(format!("expected a number, got `{raw}`")),
    }
}

fn parse_uint(raw: &str) -> std::result::Result<u64, String> {
    raw.trim()
        .parse::<u64>()
        .map_err(|_| format!("expected a non-negative integer, got `{raw}`"))
}

fn parse_bool(raw: &str) -> std::result::Result<bool, String> {
    match raw.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(format!("expected true/false, got `{other}`")),
    }
}

fn parse_list<T>(raw: &str, item: impl Fn(&str) -> std::result::Result<T, String>) -> std::result::Result<Vec<T>, String> {
    raw.split(',').map(|s| item(s.trim())).collect()
}

/// Raw initial-data parameters collected before the family is known.
#[derive(Default)]
struct InitialFields {
    kind: Option<(usize, String)>,
    phase: Option<f64>,
    modes: Option<Vec<i64>>,
    amplitude: Option<f64>,
    width: Option<f64>,
    h1_norm: Option<f64>,
    band: Option<usize>,
    seed: Option<u64>,
}

#[derive(Default)]
struct NoiseFields {
    kind: Option<(usize, String)>,
    amplitude: Option<f64>,
    sigma: Option<f64>,
    cutoff: Option<f64>,
}

/// Parses and validates a configuration document. All problems found are
/// returned together, each with its line number.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let mut errors: Vec<ConfigError> = Vec::new();
    let mut section: Option<String> = None;
    let mut seen: HashSet<(String, String)> = HashSet::new();
    let mut key_lines: Vec<(String, usize)> = Vec::new();
    let mut init = InitialFields::default();
    let mut noise = NoiseFields::default();

    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |field: &str, message: String| ConfigError {
            line: line_no,
            field: field.to_string(),
            message,
        };
        if let Some(name) = line.strip_prefix('[') {
            let Some(name) = name.strip_suffix(']') else {
                errors.push(err("section", format!("malformed section header `{line}`")));
                continue;
            };
            let name = name.trim();
            if SECTIONS.contains(&name) {
                section = Some(name.to_string());
            } else {
                errors.push(err(name, "unknown section".into()));
                section = None;
            }
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            errors.push(err("syntax", format!("expected `key = value`, got `{line}`")));
            continue;
        };
        let key = key.trim();
        let value = value.trim();
        let Some(sec) = section.clone() else {
            errors.push(err(key, "key outside a known section".into()));
            continue;
        };
        if !seen.insert((sec.clone(), key.to_string())) {
            errors.push(err(key, "duplicate key".into()));
            continue;
        }
        let field = format!("{sec}.{key}");
        key_lines.push((key.to_string(), line_no));
        let outcome: std::result::Result<(), String> = (|| {
            match (sec.as_str(), key) {
                ("grid", "dim") => cfg.dim = parse_uint(value)? as usize,
                ("grid", "points") | ("grid", "n") => cfg.points_per_axis = parse_uint(value)? as usize,
                ("grid", "box_length") | ("grid", "L") => cfg.box_length = parse_number(value)?,
                ("time", "dt") => cfg.dt = parse_number(value)?,
                ("time", "t_final") => cfg.t_final = parse_number(value)?,
                ("time", "snapshot_stride") => cfg.snapshot_stride = parse_uint(value)? as usize,
                ("time", "scheme") => {
                    cfg.scheme = Scheme::parse(value).ok_or_else(|| {
                        format!("unknown scheme `{value}` (direct, dpd, deterministic_gp, deterministic_cubic)")
                    })?
                }
                ("time", "nonlinear") => cfg.nonlinear = parse_bool(value)?,
                ("time", "dt_list") => cfg.dt_list = Some(parse_list(value, parse_number)?),
                ("time", "refinement_levels") => cfg.refinement_levels = parse_uint(value)? as usize,
                ("noise", "kind") => noise.kind = Some((line_no, value.to_string())),
                ("noise", "amplitude") => noise.amplitude = Some(parse_number(value)?),
                ("noise", "sigma") => noise.sigma = Some(parse_number(value)?),
                ("noise", "cutoff") => noise.cutoff = Some(parse_number(value)?),
                ("initial", "kind") => init.kind = Some((line_no, value.to_string())),
                ("initial", "phase") => init.phase = Some(parse_number(value)?),
                ("initial", "modes") => {
                    init.modes = Some(parse_list(value, |s| {
                        s.parse::<i64>().map_err(|_| format!("expected an integer, got `{s}`"))
                    })?)
                }
                ("initial", "amplitude") => init.amplitude = Some(parse_number(value)?),
                ("initial", "width") => init.width = Some(parse_number(value)?),
                ("initial", "h1_norm") => init.h1_norm = Some(parse_number(value)?),
                ("initial", "band") => init.band = Some(parse_uint(value)? as usize),
                ("initial", "seed") => init.seed = Some(parse_uint(value)?),
                ("ensemble", "size") => cfg.ensemble_size = parse_uint(value)? as usize,
                ("ensemble", "master_seed") => cfg.master_seed = parse_uint(value)?,
                ("ensemble", "eta") => cfg.eta = parse_number(value)?,
                ("ensemble", "workers") => cfg.workers = Some(parse_uint(value)? as usize),
                ("output", "dir") => cfg.output_dir = Some(PathBuf::from(value)),
                ("output", "emit_snapshots") => cfg.emit_snapshots = parse_bool(value)?,
                _ => return Err("unknown key".into()),
            }
            Ok(())
        })();
        if let Err(message) = outcome {
            errors.push(ConfigError {
                line: line_no,
                field,
                message,
            });
        }
    }

    let line_of = |key: &str| {
        key_lines
            .iter()
            .rev()
            .find(|(k, _)| k == key)
            .map(|(_, l)| *l)
            .unwrap_or(0)
    };

    // noise family
    let (amp_default, sigma_default) = match &cfg.noise {
        NoiseChoice::Multiplier { amplitude, sigma, .. } => (*amplitude, *sigma),
        NoiseChoice::Zero => (0.0, 0.0),
    };
    match noise.kind.as_ref().map(|(l, k)| (*l, k.as_str())) {
        Some((_, "zero")) => cfg.noise = NoiseChoice::Zero,
        None | Some((_, "multiplier")) => {
            cfg.noise = NoiseChoice::Multiplier {
                amplitude: noise.amplitude.unwrap_or(amp_default),
                sigma: noise.sigma.unwrap_or(sigma_default),
                cutoff: noise.cutoff,
            }
        }
        Some((l, other)) => errors.push(ConfigError {
            line: l,
            field: "noise.kind".into(),
            message: format!("unknown noise kind `{other}` (zero, multiplier)"),
        }),
    }

    // initial-data family
    let kind = init.kind.as_ref().map(|(l, k)| (*l, k.as_str()));
    match kind {
        None | Some((_, "gaussian_bump")) => {
            if let InitialData::GaussianBump { amplitude, width } = cfg.initial.clone() {
                cfg.initial = InitialData::GaussianBump {
                    amplitude: init.amplitude.unwrap_or(amplitude),
                    width: init.width.unwrap_or(width),
                };
            }
        }
        Some((_, "constant")) => {
            cfg.initial = InitialData::Constant {
                phase: init.phase.unwrap_or(0.0),
            }
        }
        Some((l, "plane_wave")) => match init.modes.clone() {
            Some(modes) => cfg.initial = InitialData::PlaneWave { modes },
            None => errors.push(ConfigError {
                line: l,
                field: "initial.modes".into(),
                message: "plane_wave requires `modes`".into(),
            }),
        },
        Some((_, "random")) => {
            cfg.initial = InitialData::RandomBandLimited {
                h1_norm: init.h1_norm.unwrap_or(1.0),
                band: init.band.unwrap_or(4),
                seed: init.seed.unwrap_or(0),
            }
        }
        Some((l, other)) => errors.push(ConfigError {
            line: l,
            field: "initial.kind".into(),
            message: format!("unknown initial kind `{other}` (constant, plane_wave, gaussian_bump, random)"),
        }),
    }

    // cross-field invariants
    let mut invariant = |key: &str, ok: bool, message: String| {
        if !ok {
            errors.push(ConfigError {
                line: line_of(key),
                field: key.to_string(),
                message,
            });
        }
    };
    invariant("dim", (1..=4).contains(&cfg.dim), format!("must be 1..=4, got {}", cfg.dim));
    invariant(
        "points",
        cfg.points_per_axis >= 8 && cfg.points_per_axis.is_power_of_two(),
        format!("must be a power of two >= 8, got {}", cfg.points_per_axis),
    );
    invariant("box_length", cfg.box_length > 0.0, "must be positive".into());
    invariant("dt", cfg.dt > 0.0, format!("dt must be positive, got {}", cfg.dt));
    invariant("t_final", cfg.t_final > 0.0, format!("must be positive, got {}", cfg.t_final));
    if cfg.dt > 0.0 && cfg.t_final > 0.0 {
        let ratio = cfg.t_final / cfg.dt;
        invariant(
            "t_final",
            cfg.dt <= cfg.t_final && (ratio - ratio.round()).abs() <= 1e-9 * ratio,
            format!("t_final / dt = {ratio} must be a positive integer"),
        );
        let steps = ratio.round() as usize;
        invariant(
            "snapshot_stride",
            cfg.snapshot_stride >= 1 && steps > 0 && steps % cfg.snapshot_stride.max(1) == 0,
            format!("must divide the step count {steps}"),
        );
    }
    invariant("size", cfg.ensemble_size >= 1, "ensemble size must be >= 1".into());
    invariant("eta", cfg.eta > 0.0, format!("eta must be positive, got {}", cfg.eta));
    invariant("workers", cfg.workers != Some(0), "workers must be >= 1".into());
    invariant("refinement_levels", cfg.refinement_levels >= 2, "need at least 2 levels".into());
    if let NoiseChoice::Multiplier { amplitude, sigma, cutoff } = &cfg.noise {
        invariant("amplitude", *amplitude >= 0.0, "noise amplitude must be >= 0".into());
        invariant("sigma", *sigma >= 0.0, "noise sigma must be >= 0".into());
        invariant("cutoff", cutoff.map_or(true, |c| c >= 0.0), "cutoff must be >= 0".into());
    }

    if errors.is_empty() {
        // Surface any remaining constructor-level problem (e.g. band too large).
        match cfg.grid().and_then(|g| cfg.initial.build(&g).map(|_| ())) {
            Ok(()) => Ok(cfg),
            Err(e) => Err(Error::ConfigFields(vec![ConfigError {
                line: 0,
                field: "initial".into(),
                message: e.to_string(),
            }])),
        }
    } else {
        Err(Error::ConfigFields(errors))
    }
}
