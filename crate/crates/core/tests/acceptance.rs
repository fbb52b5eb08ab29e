//! Acceptance suite. Runs every criterion in sequence, prints one
//! `PASS`/`FAIL` line each and exits non-zero if any fails.
//!
//! Reference values come from the small oracles at the bottom of this file,
//! which share no code with the library's spectral kernels.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;
use snls_core::harness::{
    convergence_study, ledger_refinement, noise_statistics, run_ensemble, scheme_agreement,
    simulate, NoiseChoice,
};
use snls_core::{
    dpd_nonlinearity, gauge_transform, make_grid, parse_config, partition_intervals, solve,
    Complex64, ComplexField, GridSpec, InitialData, RunConfig, Scheme, SolverConfig, Trajectory,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

type Criterion = (&'static str, Duration, fn() -> Outcome);

fn main() -> ExitCode {
    let only: Option<usize> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    let criteria: [Criterion; 12] = [
        ("decomposed nonlinearity identity", Duration::from_secs(1), c01_identity),
        ("stationary state", Duration::from_secs(10), c02_stationary),
        ("deterministic energy conservation", Duration::from_secs(60), c03_energy),
        ("Strang order", Duration::from_secs(300), c04_strang_order),
        ("gauge equivalence", Duration::from_secs(60), c05_gauge),
        ("stochastic convolution isometry and scaling", Duration::from_secs(120), c06_isometry),
        ("martingale term mean zero", Duration::from_secs(600), c07_martingale),
        ("energy ledger refinement", Duration::from_secs(600), c08_ledger),
        ("direct vs remainder solver", Duration::from_secs(300), c09_cross_solver),
        ("partition monotonicity", Duration::from_secs(60), c10_partition),
        ("energy-bound estimator", Duration::from_secs(600), c11_energy_bound),
        ("4-d smoke test", Duration::from_secs(300), c12_smoke_4d),
    ];
    let mut failures = 0;
    for (i, (name, budget, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        if only.is_some_and(|k| k != n) {
            continue;
        }
        let start = Instant::now();
        let out = run();
        let elapsed = start.elapsed();
        let status = if out.pass { "PASS" } else { "FAIL" };
        if !out.pass {
            failures += 1;
        }
        let slow = if elapsed > *budget { " [over runtime budget]" } else { "" };
        println!(
            "{status} {n:>2} {name}: {} ({:.2}s of {}s){slow}",
            out.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} criterion(s) failed");
        ExitCode::FAILURE
    }
}

fn sci(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(", ")
}

fn config(text: &str) -> RunConfig {
    parse_config(text).expect("acceptance config")
}

fn box_2pi(dim: usize, n: usize) -> GridSpec {
    make_grid(dim, n, 2.0 * PI).unwrap()
}

fn bump(grid: &GridSpec) -> ComplexField {
    InitialData::GaussianBump { amplitude: 0.5, width: 1.0 }.build(grid).unwrap()
}

fn c01_identity() -> Outcome {
    let g = make_grid(1, 1024, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    // uniform in the disc of radius 2
    let mut sample = || {
        let r = 2.0 * ((rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64).sqrt();
        let th = 2.0 * PI * (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        Complex64::from_polar(r, th)
    };
    let v: Vec<Complex64> = (0..1024).map(|_| sample()).collect();
    let p: Vec<Complex64> = (0..1024).map(|_| sample()).collect();
    let got = dpd_nonlinearity(
        &ComplexField::new(&g, v.clone()).unwrap(),
        &ComplexField::new(&g, p.clone()).unwrap(),
    )
    .unwrap();
    let worst = v
        .iter()
        .zip(&p)
        .zip(got.values())
        .map(|((&v, &p), &n)| {
            let u = v + 1.0 + p;
            (n - (u.norm_sqr() - 1.0) * u).norm()
        })
        .fold(0.0, f64::max);
    outcome(worst <= 1e-12, format!("max deviation {worst:.3e} over 1024 samples (tol 1e-12)"))
}

fn c02_stationary() -> Outcome {
    let g = box_2pi(2, 64);
    let cfg = SolverConfig::new(&g, Scheme::DeterministicGp, ComplexField::zeros(&g), 1e-3, 1.0).with_stride(1000);
    let tr = solve(&cfg).unwrap();
    let norm = tr.v_snapshots.last().unwrap().l2_norm();
    outcome(norm <= 1e-12, format!("final ||v|| = {norm:.3e} (tol 1e-12)"))
}

fn c03_energy() -> Outcome {
    let g = box_2pi(2, 64);
    let cfg = SolverConfig::new(&g, Scheme::DeterministicGp, bump(&g), 1e-3, 1.0).with_stride(1000);
    let tr = solve(&cfg).unwrap();
    let e0 = oracle_energy(&tr.v_star(0));
    let e1 = oracle_energy(&tr.v_star(tr.len() - 1));
    let drift = ((e1 - e0) / e0).abs();
    outcome(drift <= 1e-6, format!("E0 = {e0:.9}, relative drift {drift:.3e} (tol 1e-6)"))
}

fn c04_strang_order() -> Outcome {
    // 32² keeps every listed dt below the splitting resonance dt·|k|²_max = π;
    // the 64² figure is printed for reference only.
    let dts = [4e-3, 2e-3, 1e-3, 5e-4];
    let study = |n: usize| {
        let cfg = config(&format!("[grid]\npoints = {n}\n[time]\nt_final = 1\nscheme = deterministic_gp\n"));
        convergence_study(&cfg, &dts).unwrap()
    };
    let r = study(32);
    let fine_grid = study(64);
    let ok = (1.7..=2.2).contains(&r.observed_order);
    outcome(
        ok,
        format!(
            "32^2: order {:.3} from successive differences [{}], vs finest {:.3} (accept [1.7, 2.2]); 64^2 for reference: {:.3}",
            r.observed_order,
            sci(&r.successive_differences),
            r.order_vs_finest,
            fine_grid.observed_order
        ),
    )
}

fn c05_gauge() -> Outcome {
    let g = box_2pi(2, 64);
    let v0 = bump(&g);
    let gp = solve(&SolverConfig::new(&g, Scheme::DeterministicGp, v0.clone(), 1e-3, 1.0).with_stride(100)).unwrap();
    let cubic = solve(&SolverConfig::new(&g, Scheme::DeterministicCubic, v0, 1e-3, 1.0).with_stride(100)).unwrap();
    let gauged = gauge_transform(&gp);
    let dist = gauged.final_u().l2_distance(&cubic.final_u());
    outcome(dist <= 1e-6, format!("final L2 distance {dist:.3e} (tol 1e-6)"))
}

fn c06_isometry() -> Outcome {
    let text = "[grid]\npoints = 32\n[time]\ndt = 1e-3\nt_final = 0.5\nsnapshot_stride = 500\n[ensemble]\nsize = 1000\nmaster_seed = 6\n";
    let base = config(text);
    let (amplitude, sigma) = match base.noise {
        NoiseChoice::Multiplier { amplitude, sigma, .. } => (amplitude, sigma),
        NoiseChoice::Zero => unreachable!(),
    };
    let r1 = noise_statistics(&base).unwrap();
    let mut doubled = base.clone();
    doubled.noise = NoiseChoice::Multiplier {
        amplitude: 2.0 * amplitude,
        sigma,
        cutoff: None,
    };
    let r2 = noise_statistics(&doubled).unwrap();

    let predicted = 0.5 * oracle_hs_sq(2, 32, 2.0 * PI, amplitude, sigma, 1.0);
    let z = (r1.h1.mean - predicted) / r1.h1.std_error;
    let ratio = r2.h1.mean / r1.h1.mean;
    // delta-method standard error of the ratio; matched seeds make the two
    // samples perfectly correlated, so this bound is conservative
    let ratio_se = ratio * ((r1.h1.std_error / r1.h1.mean).powi(2) + (r2.h1.std_error / r2.h1.mean).powi(2)).sqrt();
    let ok = z.abs() <= 3.0 && (ratio - 4.0).abs() <= 3.0 * ratio_se && (r1.h1_predicted - predicted).abs() <= 1e-12 * predicted;
    outcome(
        ok,
        format!(
            "E||Psi||^2_H1 = {:.6e} +- {:.2e}, predicted {predicted:.6e} (z = {z:.2}); doubling ratio {ratio:.6} +- {ratio_se:.2e}",
            r1.h1.mean, r1.h1.std_error
        ),
    )
}

fn c07_martingale() -> Outcome {
    let cfg = config(
        "[grid]\npoints = 32\n[time]\ndt = 1e-3\nt_final = 0.5\nscheme = direct\n[ensemble]\nsize = 1000\nmaster_seed = 7\n",
    );
    let r = run_ensemble(&cfg).unwrap();
    let m = r.ham3_final.unwrap();
    let z = m.mean / m.std_error;
    outcome(
        z.abs() <= 3.0 && r.failed_count() == 0,
        format!(
            "mean ham3(T) = {:.3e} +- {:.2e} (z = {z:.2}) over {} members, {} failed",
            m.mean,
            m.std_error,
            m.samples,
            r.failed_count()
        ),
    )
}

fn c08_ledger() -> Outcome {
    let cfg = config(
        "[grid]\npoints = 32\n[time]\ndt = 5e-4\nt_final = 0.5\nrefinement_levels = 4\n[ensemble]\nmaster_seed = 8\n",
    );
    let r = ledger_refinement(&cfg).unwrap();
    let mags = |xs: &[f64]| sci(&xs.iter().map(|x| x.abs()).collect::<Vec<_>>());
    let detail = format!(
        "|literal residual| [{}], |balanced residual| [{}]",
        mags(&r.literal),
        mags(&r.balanced)
    );
    if r.literal_converges {
        outcome(true, format!("literal ledger converges; {detail}"))
    } else {
        let report_ok = r.discrepancy.as_deref().is_some_and(|d| d.contains("does not close"));
        outcome(report_ok, format!("literal ledger does not converge, discrepancy report produced; {detail}"))
    }
}

fn c09_cross_solver() -> Outcome {
    let cfg = config("[grid]\npoints = 32\n[time]\nt_final = 0.5\n[ensemble]\nmaster_seed = 9\n");
    let r = scheme_agreement(&cfg, &[2e-3, 1e-3, 5e-4], 4).unwrap();
    let decreasing = r.distances.windows(2).all(|w| w[1] < w[0]);
    let ratios: Vec<String> = r.distances.windows(2).map(|w| format!("{:.4}", w[0] / w[1])).collect();
    outcome(
        decreasing && r.order >= 1.0,
        format!(
            "RMS distances [{}] over {} paths, halving ratios [{}], order {:.4} (need >= 1)",
            sci(&r.distances),
            r.members,
            ratios.join(", "),
            r.order
        ),
    )
}

fn c10_partition() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("[grid]\npoints = 32\n[time]\ndt = 1e-3\nt_final = 0.5\n[noise]\namplitude = 0.2\n[ensemble]\nmaster_seed = 10\n");
    simulate(&cfg, Some(dir.path())).unwrap();
    let tr = Trajectory::load(&dir.path().join("trajectory.bin")).unwrap();

    let gv: Vec<f64> = tr.v_snapshots.iter().map(oracle_grad_l125).collect();
    let gp: Vec<f64> = tr.psi_snapshots.iter().map(oracle_grad_l125).collect();
    let total = oracle_x1(&tr.times, &gv, 0, tr.len() - 1) + oracle_x1(&tr.times, &gp, 0, tr.len() - 1);
    let etas: Vec<f64> = (0..=8).map(|k| total * 10f64.powf(-2.0 + 0.25 * k as f64)).collect();
    let mut counts = Vec::new();
    let mut worst_excess = f64::NEG_INFINITY;
    let mut tiling = true;
    for &eta in &etas {
        let p = partition_intervals(&tr, eta).unwrap();
        counts.push(p.count());
        tiling &= p.intervals.first().map(|i| i.start) == Some(0)
            && p.intervals.last().map(|i| i.end) == Some(tr.len() - 1)
            && p.intervals.windows(2).all(|w| w[0].end == w[1].start);
        for (iv, &irr) in p.intervals.iter().zip(&p.irreducible) {
            if irr {
                tiling &= iv.end == iv.start + 1;
                continue;
            }
            let norm = oracle_x1(&tr.times, &gv, iv.start, iv.end) + oracle_x1(&tr.times, &gp, iv.start, iv.end);
            worst_excess = worst_excess.max(norm / eta - 1.0);
        }
    }
    let monotone = counts.windows(2).all(|w| w[1] <= w[0]);
    outcome(
        monotone && tiling && worst_excess <= 1e-9,
        format!(
            "J over eta in [{:.3e}, {:.3e}]: {counts:?}; max recomputed norm/eta - 1 = {worst_excess:.2e}",
            etas[0], etas[8]
        ),
    )
}

fn c11_energy_bound() -> Outcome {
    let mut estimates = Vec::new();
    for amplitude in [0.05, 0.1, 0.2] {
        let cfg = config(&format!(
            "[grid]\npoints = 32\n[time]\ndt = 1e-3\nt_final = 0.5\n[noise]\namplitude = {amplitude}\n[ensemble]\nsize = 100\nmaster_seed = 11\n"
        ));
        let r = run_ensemble(&cfg).unwrap();
        estimates.push((amplitude, r.energy_bound.unwrap().sup_energy));
    }
    let finite = estimates
        .iter()
        .all(|(_, e)| e.mean.is_finite() && e.std_error.is_finite() && e.std_error > 0.0 && e.samples == 100);
    let monotone = estimates.windows(2).all(|w| w[1].1.mean >= w[0].1.mean);
    let detail = estimates
        .iter()
        .map(|(a, e)| format!("A={a}: {:.6} +- {:.2e}", e.mean, e.std_error))
        .collect::<Vec<_>>()
        .join("; ");
    outcome(finite && monotone, format!("E[sup E] {detail}"))
}

fn c12_smoke_4d() -> Outcome {
    let g = box_2pi(4, 16);
    let cfg = SolverConfig::new(&g, Scheme::DeterministicGp, bump(&g), 1e-3, 0.1).with_stride(100);
    let tr = solve(&cfg).unwrap();
    let e0 = oracle_energy(&tr.v_star(0));
    let e1 = oracle_energy(&tr.v_star(tr.len() - 1));
    let drift = ((e1 - e0) / e0).abs();
    outcome(drift <= 1e-5, format!("E0 = {e0:.9}, relative drift {drift:.3e} (tol 1e-5)"))
}

// ---------------------------------------------------------------- oracles

/// Unnormalised forward DFT along every axis (axis 0 slowest).
fn oracle_fft(dim: usize, n: usize, data: &mut [Complex64]) {
    let fft = FftPlanner::new().plan_fft_forward(n);
    let mut line = vec![Complex64::new(0.0, 0.0); n];
    for axis in 0..dim {
        let stride = n.pow((dim - 1 - axis) as u32);
        for base in 0..data.len() {
            if (base / stride) % n != 0 {
                continue;
            }
            for j in 0..n {
                line[j] = data[base + j * stride];
            }
            fft.process(&mut line);
            for j in 0..n {
                data[base + j * stride] = line[j];
            }
        }
    }
}

fn signed_mode(i: usize, n: usize) -> f64 {
    if i <= n / 2 {
        i as f64
    } else {
        i as f64 - n as f64
    }
}

fn mode_vector(idx: usize, dim: usize, n: usize) -> Vec<f64> {
    (0..dim)
        .map(|axis| signed_mode((idx / n.pow((dim - 1 - axis) as u32)) % n, n))
        .collect()
}

/// `½∫|∇w|² + ¼∫(|w|² + 2Re w)²` with the gradient term from Parseval.
fn oracle_energy(w: &ComplexField) -> f64 {
    let g = w.grid();
    let (dim, n, l) = (g.dim(), g.points_per_axis(), g.box_length());
    let total = n.pow(dim as u32);
    let h_d = (l / n as f64).powi(dim as i32);
    let mut hat = w.values().to_vec();
    oracle_fft(dim, n, &mut hat);
    let kscale = 2.0 * PI / l;
    // ∫|∇w|² = (h^d / N) Σ |k|² |ŵ|²
    let grad: f64 = hat
        .iter()
        .enumerate()
        .map(|(i, z)| mode_vector(i, dim, n).iter().map(|m| (m * kscale).powi(2)).sum::<f64>() * z.norm_sqr())
        .sum::<f64>()
        * h_d
        / total as f64;
    let pot: f64 = w.values().iter().map(|z| (z.norm_sqr() + 2.0 * z.re).powi(2)).sum::<f64>() * h_d;
    0.5 * grad + 0.25 * pot
}

/// `Σ_k (1 + |k|²)^s φ̂(k)²` for `φ̂(k) = A(1 + |k|²)^{−σ/2}` on the grid's
/// wavevectors.
fn oracle_hs_sq(dim: usize, n: usize, l: f64, amplitude: f64, sigma: f64, s: f64) -> f64 {
    let kscale = 2.0 * PI / l;
    (0..n.pow(dim as u32))
        .map(|i| {
            let k2: f64 = mode_vector(i, dim, n).iter().map(|m| (m * kscale).powi(2)).sum();
            (1.0 + k2).powf(s) * amplitude * amplitude * (1.0 + k2).powf(-sigma)
        })
        .sum()
}

/// `‖∇w‖_{L^{12/5}}` with the gradient taken spectrally (Nyquist mode
/// counted as positive).
fn oracle_grad_l125(w: &ComplexField) -> f64 {
    let g = w.grid();
    let (dim, n, l) = (g.dim(), g.points_per_axis(), g.box_length());
    let total = n.pow(dim as u32);
    let h_d = (l / n as f64).powi(dim as i32);
    let mut hat = w.values().to_vec();
    oracle_fft(dim, n, &mut hat);
    let inverse = FftPlanner::new().plan_fft_inverse(n);
    let mut mag2 = vec![0.0; total];
    for axis in 0..dim {
        let mut d: Vec<Complex64> = hat
            .iter()
            .enumerate()
            .map(|(i, z)| {
                let j = (i / n.pow((dim - 1 - axis) as u32)) % n;
                let k = signed_mode(j, n) * 2.0 * PI / l;
                Complex64::new(0.0, k) * z
            })
            .collect();
        // inverse transform axis by axis
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        for ax in 0..dim {
            let stride = n.pow((dim - 1 - ax) as u32);
            for base in 0..total {
                if (base / stride) % n != 0 {
                    continue;
                }
                for j in 0..n {
                    line[j] = d[base + j * stride];
                }
                inverse.process(&mut line);
                for j in 0..n {
                    d[base + j * stride] = line[j];
                }
            }
        }
        for (m, z) in mag2.iter_mut().zip(&d) {
            *m += (z / total as f64).norm_sqr();
        }
    }
    let r = 12.0 / 5.0;
    (mag2.iter().map(|m| m.sqrt().powf(r)).sum::<f64>() * h_d).powf(1.0 / r)
}

/// `(∫ g(t)⁶ dt)^{1/6}` over snapshots `a..=b`, trapezoid rule.
fn oracle_x1(times: &[f64], g: &[f64], a: usize, b: usize) -> f64 {
    (a..b)
        .map(|j| 0.5 * (times[j + 1] - times[j]) * (g[j].powi(6) + g[j + 1].powi(6)))
        .sum::<f64>()
        .powf(1.0 / 6.0)
}
