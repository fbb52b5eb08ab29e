//! Energy functional, the Itô energy ledger, Strichartz-family norms and
//! the greedy interval partition.

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::lattice::{
    lr_norm_of_magnitudes, time_norm, ComplexField, SpacetimeInterval, X1_SPACE_EXPONENT,
    X1_TIME_EXPONENT,
};
use crate::noise::{hs_norm, MomentEstimate};

/// Ginzburg–Landau energy in terms of `v* = u − 1`:
/// `½∫|∇v*|² + ¼∫(|v*|² + 2Re v*)²`.
pub fn energy(v_star: &ComplexField) -> f64 {
    let grid = v_star.grid();
    let gradient: f64 = v_star
        .to_spectral()
        .iter()
        .zip(grid.k_squared())
        .map(|(c, &k2)| k2 * c.norm_sqr())
        .sum();
    let potential: f64 = v_star
        .values()
        .iter()
        .map(|z| (z.norm_sqr() + 2.0 * z.re).powi(2))
        .sum::<f64>()
        * grid.cell_measure();
    0.5 * gradient + 0.25 * potential
}

/// Which form of the quadratic-variation terms the ledger uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LedgerConvention {
    /// Drift `t(‖φ‖²_{HS(L²;Ḣ¹)} + ‖φ‖²_{HS(L²;L²)})` and ham2 integrand
    /// `|v*|² + (Im v*)² + 4Re v*`, taken as printed.
    Literal,
    /// Itô's formula worked out for increments with `E|Δβ|² = dt`:
    /// drift `t/2·(‖φ‖²_{HS(L²;Ḣ¹)} + ‖φ‖²_{HS(L²;L²)})` and ham2 integrand
    /// `|v*|² + 2Re v*`.
    ItoBalanced,
}

/// Per-snapshot energy decomposition.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EnergyLedger {
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
    pub ham1: Vec<f64>,
    pub ham2: Vec<f64>,
    pub ham3: Vec<f64>,
    pub residual: Vec<f64>,
    /// `‖u‖_{X¹([0, t])}`.
    pub x1_cum: Vec<f64>,
    /// `‖u − 1‖_{L⁶_{t,x}([0, t])}`.
    pub l6_cum: Vec<f64>,
}

impl EnergyLedger {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_residual(&self) -> f64 {
        *self.residual.last().unwrap_or(&0.0)
    }
}

/// [`ito_ledger_with`] using the literal convention.
pub fn ito_ledger(trajectory: &Trajectory) -> Result<EnergyLedger> {
    ito_ledger_with(trajectory, LedgerConvention::Literal)
}

/// Builds the energy ledger `E(t) = E(0) + ham1 + ham2 + ham3 + residual`.
///
/// ham2 is a trapezoid sum over snapshot times; ham3 is a left-point (Itô)
/// sum of the integrand at each snapshot against the increments recorded
/// up to the next snapshot.
pub fn ito_ledger_with(trajectory: &Trajectory, convention: LedgerConvention) -> Result<EnergyLedger> {
    let path = trajectory.increments()?;
    let grid = trajectory.grid();
    let noise = trajectory.config.effective_noise();
    let cell = grid.cell_measure();
    let stride = trajectory.config.snapshot_stride;
    let n = trajectory.len();

    let drift_rate = noise.hs_norm_homogeneous(1.0).powi(2) + hs_norm(&noise, 0.0).powi(2);
    let (drift_scale, integrand): (f64, fn(crate::Complex64) -> f64) = match convention {
        LedgerConvention::Literal => (1.0, |z| z.norm_sqr() + z.im * z.im + 4.0 * z.re),
        LedgerConvention::ItoBalanced => (0.5, |z| z.norm_sqr() + 2.0 * z.re),
    };
    let density = noise.mode_density();
    let noisy = path.is_some() && !noise.is_zero();

    let mut ledger = EnergyLedger::default();
    let mut ham2_density = Vec::with_capacity(n);
    let mut ham3 = 0.0;
    let mut x1_spatial = Vec::with_capacity(n);
    let mut l6_spatial = Vec::with_capacity(n);
    let mut e0 = 0.0;

    for i in 0..n {
        let v_star = trajectory.v_star(i);
        let t = trajectory.times[i];
        let e = energy(&v_star);
        if i == 0 {
            e0 = e;
        }
        let grad = v_star.gradient_magnitude();
        x1_spatial.push(lr_norm_of_magnitudes(grid, grad.into_iter(), X1_SPACE_EXPONENT));
        l6_spatial.push(lr_norm_of_magnitudes(grid, v_star.values().iter().map(|z| z.norm()), 6.0));

        let h2 = if noisy {
            v_star
                .values()
                .iter()
                .zip(&density)
                .map(|(&z, &rho)| integrand(z) * rho)
                .sum::<f64>()
                * cell
        } else {
            0.0
        };
        ham2_density.push(h2);
        let ham2 = crate::lattice::trapezoid(&trajectory.times[..=i], &ham2_density);
        let ham1 = drift_scale * drift_rate * t;

        ledger.times.push(t);
        ledger.energy.push(e);
        ledger.ham1.push(ham1);
        ledger.ham2.push(ham2);
        ledger.ham3.push(ham3);
        ledger.residual.push(e - e0 - ham1 - ham2 - ham3);
        ledger.x1_cum.push(time_norm(&trajectory.times[..=i], &x1_spatial, X1_TIME_EXPONENT));
        ledger.l6_cum.push(time_norm(&trajectory.times[..=i], &l6_spatial, 6.0));

        // Itô increment over (t_i, t_{i+1}] with the integrand frozen at t_i.
        if noisy && i + 1 < n {
            let path = path.unwrap();
            let mut increment = path.increments[i * stride].clone();
            for inc in &path.increments[i * stride + 1..(i + 1) * stride] {
                increment.add_assign(inc);
            }
            let lap_conj = v_star.laplacian().map(|z| z.conj());
            let pairing: f64 = v_star
                .values()
                .iter()
                .zip(lap_conj.values())
                .zip(increment.values())
                .map(|((&z, &lap), &g)| {
                    let zc = z.conj();
                    let f = zc * z.norm_sqr() - lap + z.norm_sqr() + zc * (2.0 * z.re) + 2.0 * z.re;
                    (f * g).im
                })
                .sum();
            ham3 += pairing * cell;
        }
    }
    Ok(ledger)
}

/// Sample quantile by linear interpolation on sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.len() == 1 {
        return sorted[0];
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub const REPORT_QUANTILES: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

#[derive(Clone, Debug, PartialEq)]
pub struct EnergyBoundReport {
    /// Monte Carlo estimate of `E[sup_{t≤T} E(u)(t)]`.
    pub sup_energy: MomentEstimate,
    /// `(q, value)` pairs over [`REPORT_QUANTILES`].
    pub quantiles: Vec<(f64, f64)>,
    pub per_path_sup: Vec<f64>,
}

pub(crate) fn sup_energy(trajectory: &Trajectory) -> f64 {
    (0..trajectory.len())
        .map(|i| energy(&trajectory.v_star(i)))
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn energy_bound_from_sups(per_path_sup: Vec<f64>) -> Result<EnergyBoundReport> {
    if per_path_sup.is_empty() {
        return Err(Error::usage("empty ensemble"));
    }
    let mut sorted = per_path_sup.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(EnergyBoundReport {
        sup_energy: MomentEstimate::from_samples(&per_path_sup),
        quantiles: REPORT_QUANTILES.iter().map(|&q| (q, quantile(&sorted, q))).collect(),
        per_path_sup,
    })
}

/// Monte Carlo estimate of `E[sup_{t≤T} E(u)(t)]` with quantiles of the
/// per-path suprema.
pub fn energy_bound_report(trajectories: &[Trajectory]) -> Result<EnergyBoundReport> {
    energy_bound_from_sups(trajectories.iter().map(sup_energy).collect())
}

/// Result of [`partition_intervals`].
#[derive(Clone, Debug, PartialEq)]
pub struct IntervalPartition {
    pub eta: f64,
    pub intervals: Vec<SpacetimeInterval>,
    /// `‖v‖_{X¹(I_j)} + ‖Ψ‖_{X¹(I_j)}` per interval.
    pub norms: Vec<f64>,
    /// Single-step intervals whose norm already exceeds `eta`.
    pub irreducible: Vec<bool>,
}

impl IntervalPartition {
    /// The interval count `J`.
    pub fn count(&self) -> usize {
        self.intervals.len()
    }

    pub fn irreducible_count(&self) -> usize {
        self.irreducible.iter().filter(|&&b| b).count()
    }
}

fn x1_spatial_norms(fields: &[ComplexField]) -> Vec<f64> {
    fields
        .iter()
        .map(|f| lr_norm_of_magnitudes(f.grid(), f.gradient_magnitude().into_iter(), X1_SPACE_EXPONENT))
        .collect()
}

/// Greedy left-to-right partition into maximal intervals on which
/// `‖v‖_{X¹} + ‖Ψ‖_{X¹} ≤ eta`.
pub fn partition_intervals(trajectory: &Trajectory, eta: f64) -> Result<IntervalPartition> {
    if !(eta > 0.0) {
        return Err(Error::usage(format!("eta must be positive, got {eta}")));
    }
    let gv = x1_spatial_norms(&trajectory.v_snapshots);
    let gp = x1_spatial_norms(&trajectory.psi_snapshots);
    Ok(partition_from_spatial(&trajectory.times, &gv, &gp, eta))
}

pub(crate) fn partition_from_spatial(times: &[f64], gv: &[f64], gp: &[f64], eta: f64) -> IntervalPartition {
    let q = X1_TIME_EXPONENT;
    let last = times.len().saturating_sub(1);
    let mut out = IntervalPartition {
        eta,
        intervals: Vec::new(),
        norms: Vec::new(),
        irreducible: Vec::new(),
    };
    if last == 0 {
        out.intervals.push(SpacetimeInterval::new(0, 0));
        out.norms.push(0.0);
        out.irreducible.push(false);
        return out;
    }
    let segment = |g: &[f64], j: usize| 0.5 * (times[j + 1] - times[j]) * (g[j].powf(q) + g[j + 1].powf(q));
    let norm = |av: f64, ap: f64| av.powf(1.0 / q) + ap.powf(1.0 / q);

    let mut start = 0;
    while start < last {
        let (mut av, mut ap) = (segment(gv, start), segment(gp, start));
        let mut end = start + 1;
        if norm(av, ap) > eta {
            out.intervals.push(SpacetimeInterval::new(start, end));
            out.norms.push(norm(av, ap));
            out.irreducible.push(true);
            start = end;
            continue;
        }
        while end < last {
            let (nv, np) = (av + segment(gv, end), ap + segment(gp, end));
            if norm(nv, np) > eta {
                break;
            }
            av = nv;
            ap = np;
            end += 1;
        }
        out.intervals.push(SpacetimeInterval::new(start, end));
        out.norms.push(norm(av, ap));
        out.irreducible.push(false);
        start = end;
    }
    out
}

/// Strichartz-family norms of a trajectory over one interval.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StrichartzReport {
    /// `‖∇u‖_{L²_t L⁴_x}`
    pub grad_l2_l4: f64,
    /// `‖∇u‖_{L⁶_t L^{12/5}_x}`
    pub grad_l6_l12_5: f64,
    /// `‖∇u‖_{L^∞_t L²_x}`
    pub grad_linf_l2: f64,
    /// `‖u − 1‖_{L⁶_{t,x}}`
    pub l6_u_minus_one: f64,
    /// `‖u‖_{X¹}`; equals `grad_l6_l12_5`.
    pub x1: f64,
    /// Maximum over the three gradient entries, standing in for `‖u‖_{Ṡ¹}`.
    pub s1_proxy: f64,
}

pub fn strichartz_report(trajectory: &Trajectory, interval: SpacetimeInterval) -> Result<StrichartzReport> {
    interval.validate(trajectory.len())?;
    let range = interval.start..=interval.end;
    let times = &trajectory.times[range.clone()];
    let grid = trajectory.grid();
    let mut g4 = Vec::new();
    let mut g125 = Vec::new();
    let mut g2 = Vec::new();
    let mut l6 = Vec::new();
    for i in range {
        let v_star = trajectory.v_star(i);
        let grad = v_star.gradient_magnitude();
        g4.push(lr_norm_of_magnitudes(grid, grad.iter().copied(), 4.0));
        g125.push(lr_norm_of_magnitudes(grid, grad.iter().copied(), X1_SPACE_EXPONENT));
        g2.push(lr_norm_of_magnitudes(grid, grad.iter().copied(), 2.0));
        l6.push(lr_norm_of_magnitudes(grid, v_star.values().iter().map(|z| z.norm()), 6.0));
    }
    let grad_l2_l4 = time_norm(times, &g4, 2.0);
    let grad_l6_l12_5 = time_norm(times, &g125, X1_TIME_EXPONENT);
    let grad_linf_l2 = time_norm(times, &g2, f64::INFINITY);
    Ok(StrichartzReport {
        grad_l2_l4,
        grad_l6_l12_5,
        grad_linf_l2,
        l6_u_minus_one: time_norm(times, &l6, 6.0),
        x1: grad_l6_l12_5,
        s1_proxy: grad_l2_l4.max(grad_l6_l12_5).max(grad_linf_l2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{gauge_transform, solve, InitialData, Scheme, SolverConfig};
    use crate::lattice::{make_grid, spacetime_norm, x1_norm, Complex64, GridSpec};
    use crate::noise::NoiseSpec;
    use std::f64::consts::PI;

    fn grid() -> GridSpec {
        make_grid(2, 32, 2.0 * PI).unwrap()
    }

    #[test]
    fn energy_trivial_values() {
        let g = grid();
        assert_eq!(energy(&ComplexField::zeros(&g)), 0.0);
        let v = ComplexField::plane_wave(&g, &[1, 2]).map(|z| z - 1.0);
        let expected = 0.5 * 5.0 * g.volume();
        assert!((energy(&v) - expected).abs() < 1e-10 * expected);
    }

    /// Brute-force quadrature oracle: the closed-form integrand of
    /// `v* = ε cos(k·x)` summed on a grid four times finer per axis.
    #[test]
    fn energy_cosine_against_fine_quadrature() {
        let eps = 0.1;
        let g = make_grid(2, 16, 2.0 * PI).unwrap();
        let v = ComplexField::from_fn(&g, |x| Complex64::new(eps * (x[0] + 2.0 * x[1]).cos(), 0.0));
        let fine_n = 64;
        let h = 2.0 * PI / fine_n as f64;
        let mut oracle = 0.0;
        for i in 0..fine_n {
            for j in 0..fine_n {
                let (x, y) = (i as f64 * h, j as f64 * h);
                let phase = x + 2.0 * y;
                let grad2 = eps * eps * phase.sin().powi(2) * 5.0;
                let w = eps * phase.cos();
                oracle += (0.5 * grad2 + 0.25 * (w * w + 2.0 * w).powi(2)) * h * h;
            }
        }
        assert!((energy(&v) - oracle).abs() < 1e-10 * oracle, "{} vs {oracle}", energy(&v));
    }

    #[test]
    fn energy_nonnegative_on_random_fields() {
        let g = make_grid(2, 8, 1.0).unwrap();
        for s in 0..20 {
            let v = InitialData::RandomBandLimited { h1_norm: 3.0, band: 3, seed: s }.build(&g).unwrap();
            assert!(energy(&v) >= 0.0);
        }
    }

    fn bump(g: &GridSpec) -> ComplexField {
        InitialData::GaussianBump { amplitude: 0.5, width: 1.0 }.build(g).unwrap()
    }

    #[test]
    fn ledger_without_noise_is_pure_drift() {
        let g = grid();
        let tr = solve(&SolverConfig::new(&g, Scheme::Direct, bump(&g), 1e-3, 0.1).with_stride(10)).unwrap();
        let l = ito_ledger(&tr).unwrap();
        assert!(l.ham1.iter().chain(&l.ham2).chain(&l.ham3).all(|&x| x == 0.0));
        assert_eq!(l.residual[0], 0.0);
        let e0 = l.energy[0];
        let worst = l.residual.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        assert!(worst <= 1e-6 * e0, "{worst} vs {e0}");
    }

    #[test]
    fn ledger_structure_with_noise() {
        let g = make_grid(2, 16, 2.0 * PI).unwrap();
        let noise = NoiseSpec::multiplier(&g, 0.3, 3.0, None).unwrap();
        let cfg = SolverConfig::new(&g, Scheme::Direct, bump(&g), 0.01, 0.4).with_noise(noise.clone());
        let tr = solve(&cfg).unwrap();
        let l = ito_ledger(&tr).unwrap();
        assert_eq!(l.residual[0], 0.0);
        let rate = noise.hs_norm_homogeneous(1.0).powi(2) + hs_norm(&noise, 0.0).powi(2);
        for (t, h) in l.times.iter().zip(&l.ham1) {
            assert!((h - t * rate).abs() <= 1e-15 * rate.max(1.0));
        }
        // prefix property: a shorter run on the same stream gives the prefix
        let short = solve(&SolverConfig { t_final: 0.2, ..cfg.clone() }).unwrap();
        let ls = ito_ledger(&short).unwrap();
        for i in 0..ls.len() {
            assert_eq!(ls.residual[i], l.residual[i]);
            assert_eq!(ls.ham3[i], l.ham3[i]);
        }
        // missing path
        let mut broken = tr.clone();
        broken.noise_path = None;
        assert!(ito_ledger(&broken).is_err());
    }

    #[test]
    fn ham2_vanishes_on_vacuum_segment() {
        let g = make_grid(2, 16, 2.0 * PI).unwrap();
        let noise = NoiseSpec::multiplier(&g, 0.3, 3.0, None).unwrap();
        let mut tr = solve(&SolverConfig::new(&g, Scheme::Direct, bump(&g), 0.01, 0.1).with_noise(noise)).unwrap();
        for v in tr.v_snapshots.iter_mut().take(4) {
            *v = ComplexField::zeros(&g);
        }
        let l = ito_ledger(&tr).unwrap();
        assert_eq!(l.ham2[3], 0.0);
    }

    #[test]
    fn energy_bound_deterministic_and_errors() {
        let g = make_grid(2, 16, 2.0 * PI).unwrap();
        assert!(energy_bound_report(&[]).is_err());
        let tr = solve(&SolverConfig::new(&g, Scheme::DeterministicGp, bump(&g), 1e-3, 0.05)).unwrap();
        let e0 = energy(&tr.v_star(0));
        let rep = energy_bound_report(&[tr.clone(), tr]).unwrap();
        assert!((rep.sup_energy.mean - e0).abs() <= 1e-6 * e0);
        assert_eq!(rep.quantiles.len(), 5);
    }

    #[test]
    fn partition_examples() {
        let g = make_grid(2, 16, 2.0 * PI).unwrap();
        let tr = solve(&SolverConfig::new(&g, Scheme::DeterministicGp, ComplexField::zeros(&g), 0.01, 0.1)).unwrap();
        let p = partition_intervals(&tr, 0.1).unwrap();
        assert_eq!(p.count(), 1);
        assert_eq!(p.intervals[0], SpacetimeInterval::new(0, tr.len() - 1));
        assert!(partition_intervals(&tr, 0.0).is_err());

        let noise = NoiseSpec::multiplier(&g, 0.5, 2.5, None).unwrap();
        let tr = solve(&SolverConfig::new(&g, Scheme::Dpd, bump(&g), 0.01, 0.5).with_noise(noise)).unwrap();
        let whole = x1_norm(&tr.times, &tr.v_snapshots, SpacetimeInterval::new(0, tr.len() - 1)).unwrap()
            + x1_norm(&tr.times, &tr.psi_snapshots, SpacetimeInterval::new(0, tr.len() - 1)).unwrap();
        assert_eq!(partition_intervals(&tr, whole * 1.0001).unwrap().count(), 1);

        let mut prev = usize::MAX;
        for k in 0..20 {
            let eta = whole * 0.01 * 10f64.powf(k as f64 / 10.0);
            let p = partition_intervals(&tr, eta).unwrap();
            assert!(p.count() <= prev);
            prev = p.count();
            // tiling
            assert_eq!(p.intervals[0].start, 0);
            assert_eq!(p.intervals.last().unwrap().end, tr.len() - 1);
            for w in p.intervals.windows(2) {
                assert_eq!(w[0].end, w[1].start);
            }
            for ((iv, &n), &flag) in p.intervals.iter().zip(&p.norms).zip(&p.irreducible) {
                if flag {
                    assert_eq!(iv.len(), 2);
                    assert!(n > eta);
                } else {
                    let recomputed = x1_norm(&tr.times, &tr.v_snapshots, *iv).unwrap()
                        + x1_norm(&tr.times, &tr.psi_snapshots, *iv).unwrap();
                    assert!(recomputed <= eta);
                }
            }
        }
    }

    #[test]
    fn strichartz_report_consistency() {
        let g = make_grid(2, 16, 2.0 * PI).unwrap();
        let zero = solve(&SolverConfig::new(&g, Scheme::DeterministicGp, ComplexField::zeros(&g), 0.01, 0.05)).unwrap();
        let r = strichartz_report(&zero, SpacetimeInterval::new(0, 5)).unwrap();
        assert_eq!(r.s1_proxy, 0.0);
        assert_eq!(r.l6_u_minus_one, 0.0);
        assert!(strichartz_report(&zero, SpacetimeInterval::new(0, 6)).is_err());

        let tr = solve(&SolverConfig::new(&g, Scheme::DeterministicGp, bump(&g), 0.01, 0.1)).unwrap();
        let iv = SpacetimeInterval::new(2, 9);
        let r = strichartz_report(&tr, iv).unwrap();
        let u = tr.u_snapshots();
        let check = |got: f64, q: f64, rr: f64, j: u8| {
            let want = spacetime_norm(&tr.times, &u, iv, q, rr, j).unwrap();
            assert!((got - want).abs() <= 1e-12 * want, "{got} vs {want}");
        };
        check(r.grad_l2_l4, 2.0, 4.0, 1);
        check(r.grad_l6_l12_5, 6.0, 2.4, 1);
        check(r.grad_linf_l2, f64::INFINITY, 2.0, 1);
        let vs = tr.v_star_snapshots();
        let want = spacetime_norm(&tr.times, &vs, iv, 6.0, 6.0, 0).unwrap();
        assert!((r.l6_u_minus_one - want).abs() <= 1e-12 * want);

        let gauged = strichartz_report(&gauge_transform(&tr), iv).unwrap();
        for (a, b) in [
            (r.grad_l2_l4, gauged.grad_l2_l4),
            (r.grad_l6_l12_5, gauged.grad_l6_l12_5),
            (r.grad_linf_l2, gauged.grad_linf_l2),
        ] {
            assert!((a - b).abs() <= 1e-10 * a);
        }
    }
}
