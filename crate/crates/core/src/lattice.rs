//! Periodic lattice geometry, spectral transforms and norm kernels.
//!
//! Fields live on a `dim`-dimensional periodic box `[0, L)^dim` sampled with
//! `n` points per axis, stored flat in row-major order (last axis fastest).
//! Spectral coefficients are taken against the orthonormal exponentials
//! `e_k(x) = exp(i k·x) / √V`, so Plancherel holds with the physical cell
//! measure `h^dim` and no extra factors appear in any norm.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

pub use rustfft::num_complex::Complex64;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

struct GridInner {
    dim: usize,
    n: usize,
    length: f64,
    spacing: f64,
    /// Per-axis wavenumbers in FFT storage order.
    wavenumbers: Vec<f64>,
    /// |k|² for every flat spectral index.
    k_squared: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

/// Periodic grid geometry plus its cached FFT plans.
///
/// Cloning is cheap; all clones share the same plans.
#[derive(Clone)]
pub struct GridSpec {
    inner: Arc<GridInner>,
}

impl PartialEq for GridSpec {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
            || (self.dim() == other.dim()
                && self.points_per_axis() == other.points_per_axis()
                && self.box_length() == other.box_length())
    }
}

impl fmt::Debug for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GridSpec")
            .field("dim", &self.dim())
            .field("points_per_axis", &self.points_per_axis())
            .field("box_length", &self.box_length())
            .finish()
    }
}

/// Builds a periodic grid. `points_per_axis` must be a power of two ≥ 8.
pub fn make_grid(dim: usize, points_per_axis: usize, box_length: f64) -> Result<GridSpec> {
    if !(1..=4).contains(&dim) {
        return Err(Error::Config(format!("dim must be 1..=4, got {dim}")));
    }
    if points_per_axis < 8 || !points_per_axis.is_power_of_two() {
        return Err(Error::Config(format!(
            "points_per_axis must be a power of two >= 8, got {points_per_axis}"
        )));
    }
    if !(box_length.is_finite() && box_length > 0.0) {
        return Err(Error::Config(format!(
            "box_length must be positive and finite, got {box_length}"
        )));
    }
    let n = points_per_axis;
    let wavenumbers: Vec<f64> = (0..n)
        .map(|i| {
            let m = if i <= n / 2 { i as f64 } else { i as f64 - n as f64 };
            2.0 * PI * m / box_length
        })
        .collect();
    let total = n.pow(dim as u32);
    let mut k_squared = vec![0.0; total];
    for (idx, k2) in k_squared.iter_mut().enumerate() {
        let mut rest = idx;
        let mut acc = 0.0;
        for _ in 0..dim {
            let k = wavenumbers[rest % n];
            acc += k * k;
            rest /= n;
        }
        *k2 = acc;
    }
    let mut planner = FftPlanner::new();
    let forward = planner.plan_fft_forward(n);
    let inverse = planner.plan_fft_inverse(n);
    Ok(GridSpec {
        inner: Arc::new(GridInner {
            dim,
            n,
            length: box_length,
            spacing: box_length / n as f64,
            wavenumbers,
            k_squared,
            forward,
            inverse,
        }),
    })
}

impl GridSpec {
    pub fn dim(&self) -> usize {
        self.inner.dim
    }

    pub fn points_per_axis(&self) -> usize {
        self.inner.n
    }

    pub fn box_length(&self) -> f64 {
        self.inner.length
    }

    pub fn spacing(&self) -> f64 {
        self.inner.spacing
    }

    pub fn total_points(&self) -> usize {
        self.inner.k_squared.len()
    }

    /// `L^dim`.
    pub fn volume(&self) -> f64 {
        self.inner.length.powi(self.inner.dim as i32)
    }

    /// `h^dim`, the quadrature weight of one lattice point.
    pub fn cell_measure(&self) -> f64 {
        self.inner.spacing.powi(self.inner.dim as i32)
    }

    /// Axis wavenumbers `2πm/L` in FFT storage order (`m = 0, 1, …, n/2, −n/2+1, …, −1`).
    pub fn wavenumbers(&self) -> &[f64] {
        &self.inner.wavenumbers
    }

    /// `|k|²` for every flat spectral index.
    pub fn k_squared(&self) -> &[f64] {
        &self.inner.k_squared
    }

    /// Component `axis` of the wave vector at flat spectral index `idx`.
    /// Axis 0 is the slowest-varying index.
    pub fn wavevector_component(&self, idx: usize, axis: usize) -> f64 {
        let n = self.inner.n;
        let stride = n.pow((self.inner.dim - 1 - axis) as u32);
        self.inner.wavenumbers[(idx / stride) % n]
    }

    /// Physical coordinates of the lattice point with flat index `idx`.
    pub fn coordinates(&self, idx: usize) -> [f64; 4] {
        let n = self.inner.n;
        let mut x = [0.0; 4];
        let mut rest = idx;
        for axis in (0..self.inner.dim).rev() {
            x[axis] = (rest % n) as f64 * self.inner.spacing;
            rest /= n;
        }
        x
    }

    /// Unnormalised forward DFT over every axis, in place.
    pub fn fft_forward(&self, data: &mut [Complex64]) {
        self.transform(data, &self.inner.forward);
    }

    /// Inverse DFT over every axis, in place, including the `1/N` factor,
    /// so that `fft_inverse(fft_forward(x)) == x`.
    pub fn fft_inverse(&self, data: &mut [Complex64]) {
        self.transform(data, &self.inner.inverse);
        let scale = 1.0 / data.len() as f64;
        data.iter_mut().for_each(|z| *z *= scale);
    }

    fn transform(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.inner.n;
        let dim = self.inner.dim;
        assert_eq!(data.len(), self.total_points(), "field length does not match grid");
        let mut scratch = vec![ZERO; plan.get_inplace_scratch_len()];
        // Last axis is contiguous.
        plan.process_with_scratch(data, &mut scratch);
        if dim == 1 {
            return;
        }
        let mut line = vec![ZERO; n];
        for axis in 0..dim - 1 {
            let stride = n.pow((dim - 1 - axis) as u32);
            let block = stride * n;
            for block_start in (0..data.len()).step_by(block) {
                for offset in 0..stride {
                    let base = block_start + offset;
                    for (m, z) in line.iter_mut().enumerate() {
                        *z = data[base + m * stride];
                    }
                    plan.process_with_scratch(&mut line, &mut scratch);
                    for (m, z) in line.iter().enumerate() {
                        data[base + m * stride] = *z;
                    }
                }
            }
        }
    }

    /// Ratio between orthonormal coefficients and the raw DFT: `√V / N`.
    fn spectral_scale(&self) -> f64 {
        self.volume().sqrt() / self.total_points() as f64
    }
}

/// Complex-valued lattice function.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexField {
    grid: GridSpec,
    values: Vec<Complex64>,
}

impl ComplexField {
    pub fn new(grid: &GridSpec, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.total_points() {
            return Err(Error::usage(format!(
                "field has {} values but grid has {} points",
                values.len(),
                grid.total_points()
            )));
        }
        Ok(ComplexField {
            grid: grid.clone(),
            values,
        })
    }

    pub fn zeros(grid: &GridSpec) -> Self {
        Self::constant(grid, ZERO)
    }

    pub fn constant(grid: &GridSpec, value: Complex64) -> Self {
        ComplexField {
            grid: grid.clone(),
            values: vec![value; grid.total_points()],
        }
    }

    /// Samples `f` at every lattice point; `f` receives the point's
    /// coordinates (only the first `dim` entries are meaningful).
    pub fn from_fn(grid: &GridSpec, f: impl Fn(&[f64]) -> Complex64) -> Self {
        let dim = grid.dim();
        let values = (0..grid.total_points())
            .map(|idx| f(&grid.coordinates(idx)[..dim]))
            .collect();
        ComplexField {
            grid: grid.clone(),
            values,
        }
    }

    /// Plane wave `exp(i k·x)` for the integer mode vector `modes`
    /// (so `k = 2π·modes / L`).
    pub fn plane_wave(grid: &GridSpec, modes: &[i64]) -> Self {
        let scale = 2.0 * PI / grid.box_length();
        Self::from_fn(grid, |x| {
            let phase: f64 = x
                .iter()
                .zip(modes.iter().chain(std::iter::repeat(&0)))
                .map(|(xi, &m)| xi * m as f64 * scale)
                .sum();
            Complex64::from_polar(1.0, phase)
        })
    }

    /// Builds a field from orthonormal spectral coefficients.
    pub fn from_spectral(grid: &GridSpec, mut coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.total_points() {
            return Err(Error::usage("spectral coefficient count does not match grid"));
        }
        grid.fft_inverse(&mut coeffs);
        let scale = 1.0 / grid.spectral_scale();
        coeffs.iter_mut().for_each(|z| *z *= scale);
        Ok(ComplexField {
            grid: grid.clone(),
            values: coeffs,
        })
    }

    /// Orthonormal spectral coefficients `⟨u, e_k⟩`, in FFT storage order.
    pub fn to_spectral(&self) -> Vec<Complex64> {
        let mut c = self.values.clone();
        self.grid.fft_forward(&mut c);
        let scale = self.grid.spectral_scale();
        c.iter_mut().for_each(|z| *z *= scale);
        c
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn same_grid(&self, other: &ComplexField) -> bool {
        self.grid == other.grid
    }

    pub(crate) fn check_same_grid(&self, other: &ComplexField) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::usage(format!(
                "grid mismatch: {:?} vs {:?}",
                self.grid, other.grid
            )))
        }
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        ComplexField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&z| f(z)).collect(),
        }
    }

    /// Pointwise combination of two fields on the same grid.
    ///
    /// Panics if the grids differ; use [`ComplexField::check_same_grid`]
    /// style validation at API boundaries.
    pub fn zip_map(&self, other: &ComplexField, f: impl Fn(Complex64, Complex64) -> Complex64) -> Self {
        assert!(self.same_grid(other), "grid mismatch");
        ComplexField {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn add(&self, other: &ComplexField) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ComplexField) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, c: Complex64) -> Self {
        self.map(|z| z * c)
    }

    pub fn add_assign(&mut self, other: &ComplexField) {
        assert!(self.same_grid(other), "grid mismatch");
        self.values
            .iter_mut()
            .zip(&other.values)
            .for_each(|(a, b)| *a += b);
    }

    /// Applies a spectral multiplier `m(idx)` indexed by flat FFT index.
    pub fn apply_multiplier(&self, m: impl Fn(usize) -> Complex64) -> Self {
        let mut data = self.values.clone();
        self.grid.fft_forward(&mut data);
        data.iter_mut().enumerate().for_each(|(i, z)| *z *= m(i));
        self.grid.fft_inverse(&mut data);
        ComplexField {
            grid: self.grid.clone(),
            values: data,
        }
    }

    /// Spectral partial derivatives `∂_j u`, one field per axis.
    pub fn gradient(&self) -> Vec<ComplexField> {
        let mut spec = self.values.clone();
        self.grid.fft_forward(&mut spec);
        (0..self.grid.dim())
            .map(|axis| {
                let mut d: Vec<Complex64> = spec
                    .iter()
                    .enumerate()
                    .map(|(i, &z)| z * Complex64::new(0.0, self.grid.wavevector_component(i, axis)))
                    .collect();
                self.grid.fft_inverse(&mut d);
                ComplexField {
                    grid: self.grid.clone(),
                    values: d,
                }
            })
            .collect()
    }

    /// Pointwise `|∇u|(x) = (Σ_j |∂_j u(x)|²)^{1/2}`.
    pub fn gradient_magnitude(&self) -> Vec<f64> {
        let grads = self.gradient();
        (0..self.values.len())
            .map(|i| grads.iter().map(|g| g.values[i].norm_sqr()).sum::<f64>().sqrt())
            .collect()
    }

    /// Spectral Laplacian.
    pub fn laplacian(&self) -> Self {
        let k2 = self.grid.k_squared();
        self.apply_multiplier(|i| Complex64::new(-k2[i], 0.0))
    }

    /// `(Σ |u|² h^dim)^{1/2}`.
    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.cell_measure()).sqrt()
    }

    /// L² distance to another field on the same grid.
    pub fn l2_distance(&self, other: &ComplexField) -> f64 {
        assert!(self.same_grid(other), "grid mismatch");
        (self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            * self.grid.cell_measure())
        .sqrt()
    }

    /// `∫ u dx` by the lattice rule.
    pub fn integral(&self) -> Complex64 {
        self.values.iter().sum::<Complex64>() * self.grid.cell_measure()
    }
}

/// Applies the free Schrödinger group `S(t) = exp(itΔ)`: the spectral
/// coefficient at `k` is multiplied by `exp(−i|k|²t)`.
pub fn apply_schrodinger_group(field: &ComplexField, t: f64) -> ComplexField {
    if t == 0.0 {
        return field.clone();
    }
    let k2 = field.grid().k_squared();
    field.apply_multiplier(|i| Complex64::from_polar(1.0, -k2[i] * t))
}

/// `(Σ_k w(k)^s |û(k)|²)^{1/2}` with `w = |k|²` (homogeneous) or `1 + |k|²`.
///
/// For the homogeneous norm with `s ≠ 0` the zero mode is excluded.
pub fn sobolev_norm(field: &ComplexField, s: f64, homogeneous: bool) -> f64 {
    let coeffs = field.to_spectral();
    let k2 = field.grid().k_squared();
    coeffs
        .iter()
        .zip(k2)
        .map(|(c, &k2)| {
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
            } else if s == 0.0 {
                1.0
            } else {
                (1.0 + k2).powf(s)
            };
            w * c.norm_sqr()
        })
        .sum::<f64>()
        .sqrt()
}

/// Discrete `L^r` norm of a nonnegative density sampled on the grid.
pub(crate) fn lr_norm_of_magnitudes(grid: &GridSpec, mags: impl Iterator<Item = f64>, r: f64) -> f64 {
    assert!(r >= 1.0, "Lebesgue exponent must be >= 1, got {r}");
    if r.is_infinite() {
        return mags.fold(0.0, f64::max);
    }
    let sum: f64 = if r == 2.0 {
        mags.map(|m| m * m).sum()
    } else {
        mags.map(|m| m.powf(r)).sum()
    };
    (sum * grid.cell_measure()).powf(1.0 / r)
}

/// `(Σ |u(x)|^r h^dim)^{1/r}`, or `max |u|` for `r = ∞`.
pub fn lebesgue_norm(field: &ComplexField, r: f64) -> f64 {
    lr_norm_of_magnitudes(field.grid(), field.values().iter().map(|z| z.norm()), r)
}

/// Closed range of snapshot indices `[start, end]` into a time series.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SpacetimeInterval {
    pub start: usize,
    pub end: usize,
}

impl SpacetimeInterval {
    pub fn new(start: usize, end: usize) -> Self {
        SpacetimeInterval { start, end }
    }

    /// Checks `start ≤ end < len`.
    pub fn validate(&self, len: usize) -> Result<()> {
        if self.start > self.end || self.end >= len {
            return Err(Error::usage(format!(
                "interval [{}, {}] is not inside a series of {} snapshots",
                self.start, self.end, len
            )));
        }
        Ok(())
    }

    pub fn times(&self, times: &[f64]) -> (f64, f64) {
        (times[self.start], times[self.end])
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Spatial norm `‖∇^j u‖_{L^r}` of one snapshot, `j ∈ {0, 1}`.
pub fn spatial_norm(field: &ComplexField, r: f64, derivative_order: u8) -> f64 {
    match derivative_order {
        0 => lebesgue_norm(field, r),
        _ => lr_norm_of_magnitudes(field.grid(), field.gradient_magnitude().into_iter(), r),
    }
}

/// Combines per-snapshot spatial norms into an `L^q_t` norm by the
/// trapezoid rule on the snapshot times (`q = ∞` takes the maximum).
pub fn time_norm(times: &[f64], spatial: &[f64], q: f64) -> f64 {
    debug_assert_eq!(times.len(), spatial.len());
    if q.is_infinite() {
        return spatial.iter().copied().fold(0.0, f64::max);
    }
    let powered: Vec<f64> = spatial.iter().map(|g| g.powf(q)).collect();
    trapezoid(times, &powered).powf(1.0 / q)
}

pub(crate) fn trapezoid(times: &[f64], values: &[f64]) -> f64 {
    times
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum()
}

fn check_exponent(name: &str, e: f64) -> Result<()> {
    if e.is_nan() || e < 1.0 {
        return Err(Error::usage(format!("{name} must lie in [1, inf], got {e}")));
    }
    Ok(())
}

/// `‖∇^j u‖_{L^q_t L^r_x(I)}` over a snapshot series, with trapezoid time
/// quadrature and spectral gradients.
pub fn spacetime_norm(
    times: &[f64],
    fields: &[ComplexField],
    interval: SpacetimeInterval,
    q: f64,
    r: f64,
    derivative_order: u8,
) -> Result<f64> {
    if times.len() != fields.len() {
        return Err(Error::usage("times and fields differ in length"));
    }
    interval.validate(fields.len())?;
    check_exponent("q", q)?;
    check_exponent("r", r)?;
    if derivative_order > 1 {
        return Err(Error::usage("derivative_order must be 0 or 1"));
    }
    let range = interval.start..=interval.end;
    let spatial: Vec<f64> = fields[range.clone()]
        .iter()
        .map(|f| spatial_norm(f, r, derivative_order))
        .collect();
    Ok(time_norm(&times[range], &spatial, q))
}

/// Exponent of the auxiliary space: `‖∇u‖_{L⁶_t L^{12/5}_x}`.
pub const X1_TIME_EXPONENT: f64 = 6.0;
pub const X1_SPACE_EXPONENT: f64 = 12.0 / 5.0;

pub fn x1_norm(times: &[f64], fields: &[ComplexField], interval: SpacetimeInterval) -> Result<f64> {
    spacetime_norm(times, fields, interval, X1_TIME_EXPONENT, X1_SPACE_EXPONENT, 1)
}
