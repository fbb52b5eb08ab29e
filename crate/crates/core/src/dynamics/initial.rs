use crate::error::{Error, Result};
use crate::lattice::{sobolev_norm, Complex64, ComplexField, GridSpec};
use crate::noise::NoiseStream;

/// Initial-data families. Each builds `v₀ = u₀ − 1`.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialData {
    /// `u₀ ≡ e^{iθ}`.
    Constant { phase: f64 },
    /// `u₀ = exp(i k·x)` with `k = 2π·modes/L`.
    PlaneWave { modes: Vec<i64> },
    /// `u₀ = 1 + a·exp(−|x − c|²/(2w²))`, centred in the box; `v₀` is real.
    GaussianBump { amplitude: f64, width: f64 },
    /// `u₀ = 1 + v₀` with `v₀` band-limited to `0 < |m|_∞ ≤ band` and
    /// rescaled to the given `Ḣ¹` norm.
    RandomBandLimited { h1_norm: f64, band: usize, seed: u64 },
}

impl InitialData {
    pub fn build(&self, grid: &GridSpec) -> Result<ComplexField> {
        match self {
            InitialData::Constant { phase } => {
                let alpha = Complex64::from_polar(1.0, *phase);
                Ok(ComplexField::constant(grid, alpha - 1.0))
            }
            InitialData::PlaneWave { modes } => {
                if modes.len() > grid.dim() {
                    return Err(Error::Config(format!(
                        "plane wave has {} modes for a {}-d grid",
                        modes.len(),
                        grid.dim()
                    )));
                }
                Ok(ComplexField::plane_wave(grid, modes).map(|z| z - 1.0))
            }
            InitialData::GaussianBump { amplitude, width } => {
                if !(*width > 0.0) {
                    return Err(Error::Config("bump width must be positive".into()));
                }
                let centre = 0.5 * grid.box_length();
                let inv = 1.0 / (2.0 * width * width);
                Ok(ComplexField::from_fn(grid, |x| {
                    let r2: f64 = x.iter().map(|xi| (xi - centre).powi(2)).sum();
                    Complex64::new(amplitude * (-r2 * inv).exp(), 0.0)
                }))
            }
            InitialData::RandomBandLimited { h1_norm, band, seed } => {
                let n = grid.points_per_axis();
                if *band == 0 || *band >= n / 2 {
                    return Err(Error::Config(format!(
                        "band must lie in 1..{}, got {band}",
                        n / 2
                    )));
                }
                let normals = NoiseStream::new(*seed, u64::MAX).standard_normals(0, grid.total_points());
                let dim = grid.dim();
                let coeffs: Vec<Complex64> = normals
                    .into_iter()
                    .enumerate()
                    .map(|(idx, (a, b))| {
                        let mut rest = idx;
                        let mut max_m = 0usize;
                        for _ in 0..dim {
                            let i = rest % n;
                            let m = if i <= n / 2 { i } else { n - i };
                            max_m = max_m.max(m);
                            rest /= n;
                        }
                        if max_m == 0 || max_m > *band {
                            Complex64::new(0.0, 0.0)
                        } else {
                            Complex64::new(a, b)
                        }
                    })
                    .collect();
                let v = ComplexField::from_spectral(grid, coeffs)?;
                let norm = sobolev_norm(&v, 1.0, true);
                Ok(v.scale(Complex64::new(h1_norm / norm, 0.0)))
            }
        }
    }
}
