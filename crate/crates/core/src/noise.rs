//! Hilbert–Schmidt noise operators, cylindrical Wiener increments and the
//! stochastic convolution `Ψ(t) = −i ∫₀ᵗ S(t − t′) φ dW(t′)`.
//!
//! The orthonormal basis underlying the cylindrical Wiener process is the
//! set of lattice exponentials `e_k = exp(ik·x)/√V`, so a multiplier-type
//! `φ` is diagonal and `Ψ` can be sampled mode by mode without any time
//! discretisation error in its law. Every complex Brownian increment has
//! `E|Δβ|² = dt`, split evenly between real and imaginary parts.
//!
//! Randomness is counter-based: the Gaussians for step `n` of stream `s`
//! under master seed `m` are a pure function of `(m, s, n, mode)`, so paths
//! replay bit-identically regardless of thread scheduling.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::lattice::{apply_schrodinger_group, sobolev_norm, Complex64, ComplexField, GridSpec};

/// How the operator `φ` is described.
#[derive(Clone, Debug, PartialEq)]
pub enum NoiseKind {
    Zero,
    /// Diagonal spectral multiplier `φ̂(k) = A (1 + |k|²)^{−σ/2}`, optionally
    /// truncated to `|k| ≤ cutoff`.
    Multiplier {
        amplitude: f64,
        sigma: f64,
        cutoff: Option<f64>,
    },
    /// Explicit images `φ_n = φ e_n` of finitely many basis vectors.
    RankList(Vec<ComplexField>),
}

#[derive(Clone, Debug)]
pub struct NoiseSpec {
    grid: GridSpec,
    kind: NoiseKind,
    /// `φ̂(k)` per flat spectral index (multiplier kind only).
    profile: Option<Vec<f64>>,
}

impl NoiseSpec {
    pub fn zero(grid: &GridSpec) -> Self {
        NoiseSpec {
            grid: grid.clone(),
            kind: NoiseKind::Zero,
            profile: None,
        }
    }

    pub fn multiplier(grid: &GridSpec, amplitude: f64, sigma: f64, cutoff: Option<f64>) -> Result<Self> {
        if !(amplitude.is_finite() && amplitude >= 0.0) {
            return Err(Error::Config(format!("noise amplitude must be >= 0, got {amplitude}")));
        }
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::Config(format!("noise sigma must be >= 0, got {sigma}")));
        }
        if let Some(c) = cutoff {
            if !(c >= 0.0) {
                return Err(Error::Config(format!("noise cutoff must be >= 0, got {c}")));
            }
        }
        let profile = grid
            .k_squared()
            .iter()
            .map(|&k2| {
                if cutoff.is_some_and(|c| k2 > c * c) {
                    0.0
                } else {
                    amplitude * (1.0 + k2).powf(-0.5 * sigma)
                }
            })
            .collect();
        Ok(NoiseSpec {
            grid: grid.clone(),
            kind: NoiseKind::Multiplier {
                amplitude,
                sigma,
                cutoff,
            },
            profile: Some(profile),
        })
    }

    pub fn rank_list(grid: &GridSpec, columns: Vec<ComplexField>) -> Result<Self> {
        for col in &columns {
            if col.grid() != grid {
                return Err(Error::usage("rank-list column lives on a different grid"));
            }
        }
        Ok(NoiseSpec {
            grid: grid.clone(),
            kind: NoiseKind::RankList(columns),
            profile: None,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn kind(&self) -> &NoiseKind {
        &self.kind
    }

    /// `φ̂(k)` per flat spectral index, for multiplier-type operators.
    pub fn profile(&self) -> Option<&[f64]> {
        self.profile.as_deref()
    }

    /// True when every increment is identically zero.
    pub fn is_zero(&self) -> bool {
        match &self.kind {
            NoiseKind::Zero => true,
            NoiseKind::Multiplier { amplitude, .. } => *amplitude == 0.0,
            NoiseKind::RankList(cols) => cols.iter().all(|c| c.values().iter().all(|z| *z == Complex64::new(0.0, 0.0))),
        }
    }

    /// The same operator multiplied by `c ≥ 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        match &self.kind {
            NoiseKind::Zero => Ok(self.clone()),
            NoiseKind::Multiplier {
                amplitude,
                sigma,
                cutoff,
            } => Self::multiplier(&self.grid, amplitude * c, *sigma, *cutoff),
            NoiseKind::RankList(cols) => Self::rank_list(
                &self.grid,
                cols.iter().map(|f| f.scale(Complex64::new(c, 0.0))).collect(),
            ),
        }
    }

    /// `‖φ‖_{HS(L²; Ḣ^s)}`; the zero mode is dropped for `s ≠ 0`.
    pub fn hs_norm_homogeneous(&self, s: f64) -> f64 {
        self.hs_norm_weighted(s, true)
    }

    fn hs_norm_weighted(&self, s: f64, homogeneous: bool) -> f64 {
        match &self.kind {
            NoiseKind::Zero => 0.0,
            NoiseKind::Multiplier { .. } => {
                let profile = self.profile.as_ref().expect("multiplier profile");
                profile
                    .iter()
                    .zip(self.grid.k_squared())
                    .map(|(&p, &k2)| {
                        let w = if homogeneous {
                            if k2 == 0.0 {
                                if s == 0.0 {
                                    1.0
                                } else {
                                    0.0
                                }
                            } else {
                                k2.powf(s)
                            }
                        } else {
                            (1.0 + k2).powf(s)
                        };
                        w * p * p
                    })
                    .sum::<f64>()
                    .sqrt()
            }
            NoiseKind::RankList(cols) => cols
                .iter()
                .map(|c| sobolev_norm(c, s, homogeneous).powi(2))
                .sum::<f64>()
                .sqrt(),
        }
    }

    /// Pointwise `Σ_n |φ_n(x)|²`. For multiplier kind this is the constant
    /// `Σ_k φ̂(k)² / V`.
    pub fn mode_density(&self) -> Vec<f64> {
        let total = self.grid.total_points();
        match &self.kind {
            NoiseKind::Zero => vec![0.0; total],
            NoiseKind::Multiplier { .. } => {
                let sum: f64 = self.profile.as_ref().unwrap().iter().map(|p| p * p).sum();
                vec![sum / self.grid.volume(); total]
            }
            NoiseKind::RankList(cols) => {
                let mut acc = vec![0.0; total];
                for col in cols {
                    acc.iter_mut()
                        .zip(col.values())
                        .for_each(|(a, z)| *a += z.norm_sqr());
                }
                acc
            }
        }
    }
}

/// `‖φ‖_{HS(L²; H^s)} = (Σ_n ‖φ e_n‖²_{H^s})^{1/2}`.
pub fn hs_norm(spec: &NoiseSpec, s: f64) -> f64 {
    spec.hs_norm_weighted(s, false)
}

/// Counter-based random state: `(master seed, stream id, step counter)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NoiseStream {
    pub seed: u64,
    pub stream_id: u64,
    pub step: u64,
}

/// Words reserved per step in the ChaCha keystream (2³⁶ words).
const STEP_WORD_SHIFT: u32 = 36;

impl NoiseStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        NoiseStream {
            seed,
            stream_id,
            step: 0,
        }
    }

    /// `count` independent standard complex normals `(z_re, z_im)` with
    /// unit-variance real and imaginary parts, for the given step.
    pub fn standard_normals(&self, step: u64, count: usize) -> Vec<(f64, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng.set_word_pos((step as u128) << STEP_WORD_SHIFT);
        (0..count)
            .map(|_| {
                let u1 = unit_open(rng.next_u64());
                let u2 = unit_open(rng.next_u64());
                let r = (-2.0 * u1.ln()).sqrt();
                let (s, c) = (2.0 * PI * u2).sin_cos();
                (r * c, r * s)
            })
            .collect()
    }
}

/// Maps 64 random bits to `(0, 1]`.
fn unit_open(bits: u64) -> f64 {
    ((bits >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Draws `φ ΔW` over a step of length `dt` and advances the stream by one
/// step. Each spectral mode gets total variance `dt·φ̂(k)²`.
pub fn sample_wiener_increment(spec: &NoiseSpec, dt: f64, stream: &mut NoiseStream) -> Result<ComplexField> {
    if !(dt > 0.0) {
        return Err(Error::usage(format!("dt must be positive, got {dt}")));
    }
    let step = stream.step;
    stream.step += 1;
    let grid = spec.grid();
    let half_var = (0.5 * dt).sqrt();
    match &spec.kind {
        NoiseKind::Zero => Ok(ComplexField::zeros(grid)),
        NoiseKind::Multiplier { .. } => {
            let profile = spec.profile.as_ref().unwrap();
            let z = stream.standard_normals(step, profile.len());
            let coeffs = profile
                .iter()
                .zip(z)
                .map(|(&p, (a, b))| Complex64::new(a, b) * (p * half_var))
                .collect();
            ComplexField::from_spectral(grid, coeffs)
        }
        NoiseKind::RankList(cols) => {
            let z = stream.standard_normals(step, cols.len());
            let mut acc = ComplexField::zeros(grid);
            for (col, (a, b)) in cols.iter().zip(z) {
                let beta = Complex64::new(a, b) * half_var;
                acc.values_mut()
                    .iter_mut()
                    .zip(col.values())
                    .for_each(|(o, c)| *o += c * beta);
            }
            Ok(acc)
        }
    }
}

/// Deterministic half of the exact Ψ update: `S(dt)Ψ − i·increment`.
pub fn advance_stochastic_convolution(psi: &ComplexField, increment: &ComplexField, dt: f64) -> ComplexField {
    let mut next = apply_schrodinger_group(psi, dt);
    next.values_mut()
        .iter_mut()
        .zip(increment.values())
        .for_each(|(p, g)| *p += Complex64::new(g.im, -g.re));
    next
}

/// Advances `Ψ(t)` to `Ψ(t + dt)` exactly in law. Returns the new `Ψ`
/// together with the consumed increment `φΔW`, so the same realisation can
/// drive the direct solver.
pub fn step_stochastic_convolution(
    psi: &ComplexField,
    spec: &NoiseSpec,
    dt: f64,
    stream: &mut NoiseStream,
) -> Result<(ComplexField, ComplexField)> {
    if psi.grid() != spec.grid() {
        return Err(Error::usage("psi and noise operator live on different grids"));
    }
    let inc = sample_wiener_increment(spec, dt, stream)?;
    Ok((advance_stochastic_convolution(psi, &inc, dt), inc))
}

/// `Ψ` for multiplier noise held as orthonormal spectral coefficients,
/// advanced with cached phases. Consumes the same draws as
/// [`step_stochastic_convolution`] and agrees with it to round-off, without
/// any transforms per step.
pub(crate) struct SpectralPsi {
    coeffs: Vec<Complex64>,
    phases: Vec<Complex64>,
    /// `φ̂(k)·(dt/2)^{1/2}`
    weights: Vec<f64>,
    k_squared: Vec<f64>,
}

impl SpectralPsi {
    /// `None` unless `spec` is of multiplier kind.
    pub(crate) fn new(spec: &NoiseSpec, dt: f64) -> Option<Self> {
        let profile = spec.profile.as_ref()?;
        let k_squared = spec.grid.k_squared().to_vec();
        Some(SpectralPsi {
            coeffs: vec![Complex64::new(0.0, 0.0); profile.len()],
            phases: k_squared.iter().map(|&k2| Complex64::from_polar(1.0, -k2 * dt)).collect(),
            weights: profile.iter().map(|p| p * (0.5 * dt).sqrt()).collect(),
            k_squared,
        })
    }

    pub(crate) fn step(&mut self, stream: &mut NoiseStream) {
        let z = stream.standard_normals(stream.step, self.coeffs.len());
        stream.step += 1;
        for (((c, ph), &w), (a, b)) in self.coeffs.iter_mut().zip(&self.phases).zip(&self.weights).zip(z) {
            // S(dt)Ψ − i·Ĝ
            *c = *c * ph + Complex64::new(b * w, -a * w);
        }
    }

    /// `‖Ψ‖²_{H^s}`.
    pub(crate) fn sobolev_sq(&self, s: f64) -> f64 {
        self.coeffs
            .iter()
            .zip(&self.k_squared)
            .map(|(c, &k2)| (1.0 + k2).powf(s) * c.norm_sqr())
            .sum()
    }
}

/// A recorded noise realisation: one `φΔW` field per solver step.
#[derive(Clone, Debug, PartialEq)]
pub struct NoisePath {
    pub dt: f64,
    pub increments: Vec<ComplexField>,
    pub seed: u64,
    pub stream_id: u64,
}

const NOISE_MAGIC: &[u8; 8] = b"SNLSNSE1";

impl NoisePath {
    /// Draws `steps` consecutive increments starting at step 0 of the stream.
    pub fn generate(spec: &NoiseSpec, dt: f64, steps: usize, seed: u64, stream_id: u64) -> Result<Self> {
        let mut stream = NoiseStream::new(seed, stream_id);
        let increments = (0..steps)
            .map(|_| sample_wiener_increment(spec, dt, &mut stream))
            .collect::<Result<Vec<_>>>()?;
        Ok(NoisePath {
            dt,
            increments,
            seed,
            stream_id,
        })
    }

    pub fn steps(&self) -> usize {
        self.increments.len()
    }

    /// Sums consecutive groups of `factor` increments: the same Brownian
    /// path seen on a grid `factor` times coarser.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || self.steps() % factor != 0 {
            return Err(Error::usage(format!(
                "cannot coarsen {} steps by a factor of {factor}",
                self.steps()
            )));
        }
        let increments = self
            .increments
            .chunks(factor)
            .map(|chunk| {
                let mut acc = chunk[0].clone();
                for f in &chunk[1..] {
                    acc.add_assign(f);
                }
                acc
            })
            .collect();
        Ok(NoisePath {
            dt: self.dt * factor as f64,
            increments,
            seed: self.seed,
            stream_id: self.stream_id,
        })
    }

    pub fn write_to(&self, grid: &GridSpec, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(NOISE_MAGIC)?;
        w.write_all(&(grid.dim() as u64).to_le_bytes())?;
        w.write_all(&(grid.points_per_axis() as u64).to_le_bytes())?;
        w.write_all(&(self.steps() as u64).to_le_bytes())?;
        w.write_all(&self.dt.to_le_bytes())?;
        for inc in &self.increments {
            write_complex(&mut w, inc.values())?;
        }
        w.flush()
    }

    pub fn save(&self, grid: &GridSpec, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(grid, std::io::BufWriter::new(file))
            .map_err(|e| Error::io(path, e))
    }

    /// Reads a path written by [`NoisePath::write_to`]. The box length is
    /// not part of the format and is supplied through `grid`, whose `dim`
    /// and `points_per_axis` must match the header.
    pub fn read_from(grid: &GridSpec, mut r: impl Read) -> std::io::Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != NOISE_MAGIC {
            return Err(invalid("bad noise-path magic"));
        }
        let dim = read_u64(&mut r)? as usize;
        let n = read_u64(&mut r)? as usize;
        let steps = read_u64(&mut r)? as usize;
        let dt = read_f64(&mut r)?;
        if dim != grid.dim() || n != grid.points_per_axis() {
            return Err(invalid("noise-path grid does not match"));
        }
        let increments = (0..steps)
            .map(|_| {
                let values = read_complex(&mut r, grid.total_points())?;
                ComplexField::new(grid, values).map_err(|e| invalid(&e.to_string()))
            })
            .collect::<std::io::Result<Vec<_>>>()?;
        Ok(NoisePath {
            dt,
            increments,
            seed: 0,
            stream_id: 0,
        })
    }

    pub fn load(grid: &GridSpec, path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(grid, std::io::BufReader::new(file)).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }
}

pub(crate) fn invalid(msg: &str) -> std::io::Error {
    std::io::Error::new(std::io::ErrorKind::InvalidData, msg.to_string())
}

pub(crate) fn write_complex(w: &mut impl Write, values: &[Complex64]) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(values.len() * 16);
    for z in values {
        buf.extend_from_slice(&z.re.to_le_bytes());
        buf.extend_from_slice(&z.im.to_le_bytes());
    }
    w.write_all(&buf)
}

pub(crate) fn read_complex(r: &mut impl Read, count: usize) -> std::io::Result<Vec<Complex64>> {
    let mut buf = vec![0u8; count * 16];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..].try_into().unwrap()),
            )
        })
        .collect())
}

pub(crate) fn read_u64(r: &mut impl Read) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn read_f64(r: &mut impl Read) -> std::io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// Snapshots of `Ψ` alone, as produced by the exact sampler.
#[derive(Clone, Debug)]
pub struct PsiPath {
    pub times: Vec<f64>,
    pub snapshots: Vec<ComplexField>,
}

impl PsiPath {
    /// Samples `Ψ` on `[0, steps·dt]`, keeping every `stride`-th state
    /// (plus `Ψ(0) = 0`).
    pub fn sample(spec: &NoiseSpec, dt: f64, steps: usize, stride: usize, stream: &mut NoiseStream) -> Result<Self> {
        if stride == 0 || steps % stride != 0 {
            return Err(Error::usage("stride must divide the step count"));
        }
        let mut psi = ComplexField::zeros(spec.grid());
        let mut times = vec![0.0];
        let mut snapshots = vec![psi.clone()];
        for step in 1..=steps {
            psi = step_stochastic_convolution(&psi, spec, dt, stream)?.0;
            if step % stride == 0 {
                times.push(step as f64 * dt);
                snapshots.push(psi.clone());
            }
        }
        Ok(PsiPath { times, snapshots })
    }
}

/// Monte Carlo mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MomentEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

impl MomentEstimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let std_error = if n > 1 {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        MomentEstimate {
            mean,
            std_error,
            samples: n,
        }
    }
}

/// Estimates `E[sup_{0≤τ≤t} ‖Ψ(τ)‖^p_{H^s}]` over the stored snapshots of
/// each path.
pub fn psi_moment_estimate(paths: &[PsiPath], t: f64, s: f64, p: f64) -> Result<MomentEstimate> {
    if paths.is_empty() {
        return Err(Error::usage("empty ensemble"));
    }
    if !(p >= 2.0) {
        return Err(Error::usage(format!("moment order p must be >= 2, got {p}")));
    }
    let tol = 1e-9 * t.abs().max(1.0);
    let sups: Vec<f64> = paths
        .iter()
        .map(|path| {
            path.times
                .iter()
                .zip(&path.snapshots)
                .filter(|(&tau, _)| tau <= t + tol)
                .map(|(_, psi)| sobolev_norm(psi, s, false).powf(p))
                .fold(0.0, f64::max)
        })
        .collect();
    Ok(MomentEstimate::from_samples(&sups))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::make_grid;

    fn grid1d() -> GridSpec {
        make_grid(1, 8, 2.0 * PI).unwrap()
    }

    #[test]
    fn hs_norm_examples() {
        let g = grid1d();
        assert_eq!(hs_norm(&NoiseSpec::zero(&g), 1.0), 0.0);
        // amplitude only on k = 0
        let only_zero = NoiseSpec::multiplier(&g, 0.7, 1.0, Some(0.0)).unwrap();
        for s in [-1.0, 0.0, 1.0, 3.5] {
            assert!((hs_norm(&only_zero, s) - 0.7).abs() < 1e-15);
        }
        // explicit sum over the 8 grid modes m = -3..=4
        let spec = NoiseSpec::multiplier(&g, 1.0, 2.0, None).unwrap();
        let oracle: f64 = (-3..=4).map(|m: i32| 1.0 / (1.0 + (m * m) as f64).powi(2)).sum::<f64>().sqrt();
        assert!((hs_norm(&spec, 0.0) - oracle).abs() < 1e-14);
    }

    #[test]
    fn rank_list_matches_multiplier() {
        // φ e_k for each k, written out explicitly, must give the same norms.
        let g = grid1d();
        let spec = NoiseSpec::multiplier(&g, 0.5, 1.5, None).unwrap();
        let cols: Vec<ComplexField> = (0..8)
            .map(|i| {
                let mut c = vec![Complex64::new(0.0, 0.0); 8];
                c[i] = Complex64::new(spec.profile().unwrap()[i], 0.0);
                ComplexField::from_spectral(&g, c).unwrap()
            })
            .collect();
        let ranked = NoiseSpec::rank_list(&g, cols).unwrap();
        for s in [0.0, 1.0] {
            assert!((hs_norm(&ranked, s) - hs_norm(&spec, s)).abs() < 1e-12);
        }
        let a = ranked.mode_density();
        let b = spec.mode_density();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_spec_gives_zero_increment_and_free_flow() {
        let g = grid1d();
        let spec = NoiseSpec::zero(&g);
        let mut st = NoiseStream::new(1, 2);
        let inc = sample_wiener_increment(&spec, 0.1, &mut st).unwrap();
        assert!(inc.values().iter().all(|z| z.norm() == 0.0));
        let psi = ComplexField::plane_wave(&g, &[2]);
        let (next, _) = step_stochastic_convolution(&psi, &spec, 0.3, &mut st).unwrap();
        assert_eq!(next, apply_schrodinger_group(&psi, 0.3));
        assert_eq!(st.step, 2);
    }

    #[test]
    fn increment_rejects_nonpositive_dt() {
        let g = grid1d();
        let spec = NoiseSpec::multiplier(&g, 1.0, 2.0, None).unwrap();
        let mut st = NoiseStream::new(0, 0);
        assert!(sample_wiener_increment(&spec, 0.0, &mut st).is_err());
        assert!(sample_wiener_increment(&spec, -1.0, &mut st).is_err());
    }

    #[test]
    fn spectral_psi_matches_field_recursion() {
        let g = make_grid(2, 8, 3.0).unwrap();
        let spec = NoiseSpec::multiplier(&g, 0.7, 2.0, None).unwrap();
        let mut a = NoiseStream::new(11, 4);
        let mut b = a;
        let mut psi = ComplexField::zeros(&g);
        let mut fast = SpectralPsi::new(&spec, 0.01).unwrap();
        for _ in 0..20 {
            psi = step_stochastic_convolution(&psi, &spec, 0.01, &mut a).unwrap().0;
            fast.step(&mut b);
        }
        assert_eq!(a, b);
        for s in [0.0, 1.0] {
            let slow = sobolev_norm(&psi, s, false).powi(2);
            assert!((fast.sobolev_sq(s) - slow).abs() <= 1e-12 * slow);
        }
        assert!(SpectralPsi::new(&NoiseSpec::zero(&g), 0.01).is_none());
    }

    #[test]
    fn tiny_step_leaves_psi_unchanged() {
        let g = make_grid(2, 8, 2.0 * PI).unwrap();
        let spec = NoiseSpec::multiplier(&g, 1.0, 3.0, None).unwrap();
        let psi = ComplexField::plane_wave(&g, &[1, 1]);
        let mut st = NoiseStream::new(5, 0);
        let (next, _) = step_stochastic_convolution(&psi, &spec, 1e-12, &mut st).unwrap();
        assert!(next.l2_distance(&psi) < 1e-5 * hs_norm(&spec, 0.0));
    }

    #[test]
    fn grid_mismatch_is_usage_error() {
        let g = grid1d();
        let other = make_grid(1, 16, 2.0 * PI).unwrap();
        let spec = NoiseSpec::multiplier(&g, 1.0, 2.0, None).unwrap();
        let mut st = NoiseStream::new(0, 0);
        assert!(step_stochastic_convolution(&ComplexField::zeros(&other), &spec, 0.1, &mut st).is_err());
    }

    #[test]
    fn replay_is_bit_identical() {
        let g = make_grid(2, 8, 3.0).unwrap();
        let spec = NoiseSpec::multiplier(&g, 0.3, 2.5, None).unwrap();
        let a = NoisePath::generate(&spec, 0.01, 5, 42, 7).unwrap();
        let b = NoisePath::generate(&spec, 0.01, 5, 42, 7).unwrap();
        assert_eq!(a, b);
        let c = NoisePath::generate(&spec, 0.01, 5, 42, 8).unwrap();
        assert_ne!(a.increments[0], c.increments[0]);
        // random access: step 3 alone equals the 4th draw
        let mut st = NoiseStream { seed: 42, stream_id: 7, step: 3 };
        assert_eq!(sample_wiener_increment(&spec, 0.01, &mut st).unwrap(), a.increments[3]);
    }

    #[test]
    fn increments_scale_linearly_with_amplitude() {
        let g = make_grid(2, 8, 3.0).unwrap();
        let spec = NoiseSpec::multiplier(&g, 0.3, 2.5, None).unwrap();
        let doubled = spec.scaled(2.5).unwrap();
        let mut s1 = NoiseStream::new(9, 1);
        let mut s2 = NoiseStream::new(9, 1);
        let a = sample_wiener_increment(&spec, 0.02, &mut s1).unwrap();
        let b = sample_wiener_increment(&doubled, 0.02, &mut s2).unwrap();
        let expected = a.scale(Complex64::new(2.5, 0.0));
        assert!(b.l2_distance(&expected) <= 1e-14 * expected.l2_norm());
    }

    #[test]
    fn coarsening_sums_increments() {
        let g = grid1d();
        let spec = NoiseSpec::multiplier(&g, 1.0, 2.0, None).unwrap();
        let fine = NoisePath::generate(&spec, 0.01, 8, 3, 0).unwrap();
        let coarse = fine.coarsen(4).unwrap();
        assert_eq!(coarse.steps(), 2);
        assert!((coarse.dt - 0.04).abs() < 1e-15);
        let manual = fine.increments[4]
            .add(&fine.increments[5])
            .add(&fine.increments[6])
            .add(&fine.increments[7]);
        assert!(coarse.increments[1].l2_distance(&manual) < 1e-15);
        assert!(fine.coarsen(3).is_err());
    }

    #[test]
    fn binary_round_trip() {
        let g = make_grid(2, 8, 1.0).unwrap();
        let spec = NoiseSpec::multiplier(&g, 1.0, 2.0, None).unwrap();
        let path = NoisePath::generate(&spec, 0.05, 3, 1, 1).unwrap();
        let mut buf = Vec::new();
        path.write_to(&g, &mut buf).unwrap();
        assert_eq!(&buf[..8], b"SNLSNSE1");
        assert_eq!(u64::from_le_bytes(buf[8..16].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(buf[16..24].try_into().unwrap()), 8);
        assert_eq!(u64::from_le_bytes(buf[24..32].try_into().unwrap()), 3);
        assert_eq!(f64::from_le_bytes(buf[32..40].try_into().unwrap()), 0.05);
        assert_eq!(buf.len(), 40 + 3 * 64 * 16);
        let back = NoisePath::read_from(&g, buf.as_slice()).unwrap();
        assert_eq!(back.increments, path.increments);
        assert!(NoisePath::read_from(&make_grid(1, 8, 1.0).unwrap(), buf.as_slice()).is_err());
    }

    /// Monte Carlo oracle: mean and variance of a fixed spectral mode.
    #[test]
    fn increment_mode_statistics() {
        let g = grid1d();
        let spec = NoiseSpec::multiplier(&g, 1.0, 1.0, None).unwrap();
        let dt = 0.01;
        let n = 10_000;
        let idx = 2; // m = 2
        let phi2 = spec.profile().unwrap()[idx].powi(2);
        let mut st = NoiseStream::new(2024, 0);
        let samples: Vec<Complex64> = (0..n)
            .map(|_| sample_wiener_increment(&spec, dt, &mut st).unwrap().to_spectral()[idx])
            .collect();
        let mean = samples.iter().sum::<Complex64>() / n as f64;
        let var = samples.iter().map(|z| (z - mean).norm_sqr()).sum::<f64>() / (n - 1) as f64;
        let se = (dt * phi2 / 2.0 / n as f64).sqrt();
        assert!(mean.re.abs() < 4.0 * se && mean.im.abs() < 4.0 * se);
        assert!((var / (dt * phi2) - 1.0).abs() < 0.1, "variance ratio {}", var / (dt * phi2));
    }

    #[test]
    fn distinct_modes_uncorrelated() {
        let g = grid1d();
        let spec = NoiseSpec::multiplier(&g, 1.0, 0.0, None).unwrap();
        let n = 10_000;
        let mut st = NoiseStream::new(77, 3);
        let mut a = Vec::with_capacity(n);
        let mut b = Vec::with_capacity(n);
        for _ in 0..n {
            let c = sample_wiener_increment(&spec, 1.0, &mut st).unwrap().to_spectral();
            a.push(c[1].re);
            b.push(c[5].re);
        }
        let corr = pearson(&a, &b);
        assert!(corr.abs() < 4.0 / (n as f64).sqrt(), "correlation {corr}");
    }

    fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    /// Itô-isometry oracle: after n exact steps the mode variance is n·dt·φ̂².
    #[test]
    fn psi_mode_variance_after_several_steps() {
        let g = grid1d();
        let spec = NoiseSpec::multiplier(&g, 1.0, 1.0, None).unwrap();
        let (dt, steps, n) = (0.02, 5, 10_000);
        let idx = 3;
        let phi2 = spec.profile().unwrap()[idx].powi(2);
        let samples: Vec<Complex64> = (0..n)
            .map(|m| {
                let mut st = NoiseStream::new(11, m as u64);
                let path = PsiPath::sample(&spec, dt, steps, steps, &mut st).unwrap();
                path.snapshots[1].to_spectral()[idx]
            })
            .collect();
        let var = samples.iter().map(|z| z.norm_sqr()).sum::<f64>() / n as f64;
        let expected = steps as f64 * dt * phi2;
        assert!((var / expected - 1.0).abs() < 0.1, "ratio {}", var / expected);
    }

    #[test]
    fn moment_estimate_examples() {
        let g = make_grid(2, 8, 2.0 * PI).unwrap();
        assert!(psi_moment_estimate(&[], 1.0, 1.0, 2.0).is_err());
        let zero = NoiseSpec::zero(&g);
        let paths: Vec<PsiPath> = (0..10)
            .map(|m| PsiPath::sample(&zero, 0.1, 3, 1, &mut NoiseStream::new(1, m)).unwrap())
            .collect();
        assert_eq!(psi_moment_estimate(&paths, 0.3, 1.0, 2.0).unwrap().mean, 0.0);

        // one step: E‖Ψ(dt)‖²_{H¹} = dt·‖φ‖²_{HS(L²;H¹)}
        let spec = NoiseSpec::multiplier(&g, 1.0, 3.0, None).unwrap();
        let dt = 0.05;
        let sample = |spec: &NoiseSpec| -> Vec<PsiPath> {
            (0..2000)
                .map(|m| PsiPath::sample(spec, dt, 1, 1, &mut NoiseStream::new(8, m)).unwrap())
                .collect()
        };
        let est = psi_moment_estimate(&sample(&spec), dt, 1.0, 2.0).unwrap();
        let expected = dt * hs_norm(&spec, 1.0).powi(2);
        assert!((est.mean - expected).abs() < 3.0 * est.std_error, "{est:?} vs {expected}");
        // amplitude doubling with common random numbers
        let est2 = psi_moment_estimate(&sample(&spec.scaled(2.0).unwrap()), dt, 1.0, 2.0).unwrap();
        assert!((est2.mean / est.mean - 4.0).abs() < 1e-10);
    }
}
