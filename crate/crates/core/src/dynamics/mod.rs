//! Time integration of the stochastic Gross–Pitaevskii equation.
//!
//! The state is always stored as `v` with `u = 1 + v` (or `u = 1 + v + Ψ`
//! for the Da Prato–Debussche route). Every scheme is a Strang splitting
//! `S(dt/2) ∘ N(dt) ∘ S(dt/2)` where the linear flow is exact in Fourier
//! space.

mod initial;
mod io;

pub use initial::InitialData;

use crate::error::{Error, Result};
use crate::lattice::{Complex64, ComplexField, GridSpec};
use crate::noise::{sample_wiener_increment, NoisePath, NoiseSpec, NoiseStream};

const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// Split-step on `u = 1 + v` with the noise increment added after each
    /// Strang sandwich.
    Direct,
    /// Split-step on `v = u − 1 − Ψ` with `Ψ` sampled exactly.
    Dpd,
    /// Noise-free Gross–Pitaevskii.
    DeterministicGp,
    /// Noise-free cubic NLS `i∂ₜu + Δu = |u|²u`.
    DeterministicCubic,
}

impl Scheme {
    pub fn tag(self) -> u8 {
        match self {
            Scheme::Direct => 0,
            Scheme::Dpd => 1,
            Scheme::DeterministicGp => 2,
            Scheme::DeterministicCubic => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Some(match tag {
            0 => Scheme::Direct,
            1 => Scheme::Dpd,
            2 => Scheme::DeterministicGp,
            3 => Scheme::DeterministicCubic,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Direct => "direct",
            Scheme::Dpd => "dpd",
            Scheme::DeterministicGp => "deterministic_gp",
            Scheme::DeterministicCubic => "deterministic_cubic",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Scheme::Direct, Scheme::Dpd, Scheme::DeterministicGp, Scheme::DeterministicCubic]
            .into_iter()
            .find(|sch| sch.name() == s)
    }

    pub fn is_stochastic(self) -> bool {
        matches!(self, Scheme::Direct | Scheme::Dpd)
    }
}

/// Which equation the stored snapshots solve.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Frame {
    GrossPitaevskii,
    /// After the gauge map `ũ = e^{−it}u`.
    CubicNls,
}

/// Pointwise potential entering the phase substep.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Potential {
    /// `|u|² − 1`
    GinzburgLandau,
    /// `|u|²`
    Cubic,
    /// linear debugging mode
    Off,
}

impl Potential {
    /// Nonlinear term `V(u)·u` evaluated on `u = 1 + v`.
    fn term(self, v: Complex64) -> Complex64 {
        let u = ONE + v;
        match self {
            Potential::GinzburgLandau => u * (v.norm_sqr() + 2.0 * v.re),
            Potential::Cubic => u * u.norm_sqr(),
            Potential::Off => Complex64::new(0.0, 0.0),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub grid: GridSpec,
    pub t_final: f64,
    pub dt: f64,
    pub scheme: Scheme,
    pub noise: NoiseSpec,
    pub initial_v: ComplexField,
    pub snapshot_stride: usize,
    pub seed: u64,
    pub stream_id: u64,
    /// `false` switches the nonlinear substep off (linear debugging runs).
    pub nonlinear: bool,
}

impl SolverConfig {
    pub fn new(grid: &GridSpec, scheme: Scheme, initial_v: ComplexField, dt: f64, t_final: f64) -> Self {
        SolverConfig {
            grid: grid.clone(),
            t_final,
            dt,
            scheme,
            noise: NoiseSpec::zero(grid),
            initial_v,
            snapshot_stride: 1,
            seed: 0,
            stream_id: 0,
            nonlinear: true,
        }
    }

    pub fn with_noise(mut self, noise: NoiseSpec) -> Self {
        self.noise = noise;
        self
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.snapshot_stride = stride;
        self
    }

    pub fn with_stream(mut self, seed: u64, stream_id: u64) -> Self {
        self.seed = seed;
        self.stream_id = stream_id;
        self
    }

    /// Number of solver steps, `t_final / dt`.
    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(Error::Config(format!("t_final must be positive, got {}", self.t_final)));
        }
        if self.dt > self.t_final {
            return Err(Error::Config("dt exceeds t_final".into()));
        }
        let ratio = self.t_final / self.dt;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio {
            return Err(Error::Config(format!(
                "t_final / dt = {ratio} is not an integer"
            )));
        }
        if self.snapshot_stride == 0 || self.steps() % self.snapshot_stride != 0 {
            return Err(Error::Config(format!(
                "snapshot_stride {} does not divide the {} steps",
                self.snapshot_stride,
                self.steps()
            )));
        }
        if self.initial_v.grid() != &self.grid || self.noise.grid() != &self.grid {
            return Err(Error::Config("initial data or noise on a different grid".into()));
        }
        if !self.initial_v.is_finite() {
            return Err(Error::Config("initial data is not finite".into()));
        }
        Ok(())
    }

    pub(crate) fn potential(&self) -> Potential {
        if !self.nonlinear {
            Potential::Off
        } else if self.scheme == Scheme::DeterministicCubic {
            Potential::Cubic
        } else {
            Potential::GinzburgLandau
        }
    }

    /// The noise actually driving the scheme (zero for deterministic ones).
    pub fn effective_noise(&self) -> NoiseSpec {
        if self.scheme.is_stochastic() {
            self.noise.clone()
        } else {
            NoiseSpec::zero(&self.grid)
        }
    }
}

/// Snapshot series produced by [`solve`].
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub config: SolverConfig,
    pub times: Vec<f64>,
    pub v_snapshots: Vec<ComplexField>,
    /// Zero fields except for the Da Prato–Debussche scheme.
    pub psi_snapshots: Vec<ComplexField>,
    pub noise_path: Option<NoisePath>,
    pub frame: Frame,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn grid(&self) -> &GridSpec {
        &self.config.grid
    }

    /// `v* = u − 1 = v + Ψ`.
    pub fn v_star(&self, i: usize) -> ComplexField {
        self.v_snapshots[i].add(&self.psi_snapshots[i])
    }

    pub fn v_star_snapshots(&self) -> Vec<ComplexField> {
        (0..self.len()).map(|i| self.v_star(i)).collect()
    }

    /// `u = 1 + v + Ψ`.
    pub fn u(&self, i: usize) -> ComplexField {
        self.v_snapshots[i].zip_map(&self.psi_snapshots[i], |v, p| ONE + v + p)
    }

    pub fn u_snapshots(&self) -> Vec<ComplexField> {
        (0..self.len()).map(|i| self.u(i)).collect()
    }

    pub fn final_u(&self) -> ComplexField {
        self.u(self.len() - 1)
    }

    /// Noise increments, with zeros standing in for deterministic schemes.
    pub(crate) fn increments(&self) -> Result<Option<&NoisePath>> {
        match (&self.noise_path, self.config.scheme.is_stochastic()) {
            (Some(p), _) => Ok(Some(p)),
            (None, false) => Ok(None),
            (None, true) => Err(Error::usage(
                "stochastic trajectory carries no noise path",
            )),
        }
    }

    /// Number of solver steps between consecutive snapshots.
    pub(crate) fn stride(&self) -> usize {
        self.config.snapshot_stride
    }
}

/// Pointwise `(|u|² − 1) u`.
pub fn gp_nonlinearity(u: &ComplexField) -> ComplexField {
    u.map(|z| z * (z.norm_sqr() - 1.0))
}

/// `|v|²v + g(v, ψ)` at one point, summed term by term.
pub(crate) fn dpd_pointwise(v: Complex64, p: Complex64) -> Complex64 {
    let v2 = v.norm_sqr();
    let p2 = p.norm_sqr();
    let re_v = 2.0 * v.re;
    let re_p = 2.0 * p.re;
    let re_vp = 2.0 * (v.conj() * p).re;
    let cubic = v * v2;
    let g = v * re_v
        + v * re_p
        + v * re_vp
        + v * p2
        + v2
        + re_v
        + re_p
        + re_vp
        + p2
        + p * v2
        + p * re_v
        + p * re_p
        + p * re_vp
        + p * p2;
    cubic + g
}

/// `|v|²v + g(v, Ψ)`, the full nonlinearity of the remainder equation.
pub fn dpd_nonlinearity(v: &ComplexField, psi: &ComplexField) -> Result<ComplexField> {
    v.check_same_grid(psi)?;
    Ok(v.zip_map(psi, dpd_pointwise))
}

/// Exact flow of `i∂ₜu = (|u|² − 1)u`: `u·exp(−i(|u|² − 1)dt)`.
pub fn nonlinear_phase_substep(u: &ComplexField, dt: f64) -> ComplexField {
    u.map(|z| z * Complex64::from_polar(1.0, -(z.norm_sqr() - 1.0) * dt))
}

/// Phase substep in the `v`-frame, `v ← (1+v)e^{iθ} − 1`, written to avoid
/// cancellation when `v` is small.
fn phase_substep_v(v: &mut [Complex64], potential: Potential, dt: f64) {
    if potential == Potential::Off {
        return;
    }
    for z in v.iter_mut() {
        let pot = match potential {
            Potential::GinzburgLandau => z.norm_sqr() + 2.0 * z.re,
            Potential::Cubic => (ONE + *z).norm_sqr(),
            Potential::Off => unreachable!(),
        };
        let theta = -pot * dt;
        if theta == 0.0 {
            continue;
        }
        let (s, c) = theta.sin_cos();
        let half = (0.5 * theta).sin();
        // e^{iθ} − 1 = −2 sin²(θ/2) + i sin θ
        let em1 = Complex64::new(-2.0 * half * half, s);
        *z = *z * Complex64::new(c, s) + em1;
    }
}

/// Cached `exp(−i|k|²τ)` multipliers.
struct Propagator {
    grid: GridSpec,
    phases: Vec<Complex64>,
}

impl Propagator {
    fn new(grid: &GridSpec, tau: f64) -> Self {
        Propagator {
            grid: grid.clone(),
            phases: grid
                .k_squared()
                .iter()
                .map(|&k2| Complex64::from_polar(1.0, -k2 * tau))
                .collect(),
        }
    }

    fn apply(&self, data: &mut [Complex64]) {
        self.grid.fft_forward(data);
        data.iter_mut().zip(&self.phases).for_each(|(z, p)| *z *= p);
        self.grid.fft_inverse(data);
    }
}

fn add_minus_i(v: &mut [Complex64], inc: &ComplexField) {
    v.iter_mut()
        .zip(inc.values())
        .for_each(|(z, g)| *z += Complex64::new(g.im, -g.re));
}

fn direct_sandwich(v: &mut [Complex64], half: &Propagator, potential: Potential, dt: f64) {
    half.apply(v);
    phase_substep_v(v, potential, dt);
    half.apply(v);
}

/// One direct split-step of the stochastic equation in the `u = 1 + v`
/// frame. Draws the increment from `stream` and returns it alongside the
/// new `v`.
pub fn strang_step_direct(
    v: &ComplexField,
    noise: &NoiseSpec,
    dt: f64,
    stream: &mut NoiseStream,
) -> Result<(ComplexField, ComplexField)> {
    v.check_same_grid(&ComplexField::zeros(noise.grid()))?;
    let inc = sample_wiener_increment(noise, dt, stream)?;
    let half = Propagator::new(v.grid(), 0.5 * dt);
    let mut data = v.values().to_vec();
    direct_sandwich(&mut data, &half, Potential::GinzburgLandau, dt);
    if !noise.is_zero() {
        add_minus_i(&mut data, &inc);
    }
    Ok((ComplexField::new(v.grid(), data)?, inc))
}

/// One fourth-order Runge–Kutta step of `dv/dt = −i F(v, ψ)` at a point.
fn rk4_dpd(v: Complex64, p: Complex64, dt: f64) -> Complex64 {
    let mi = Complex64::new(0.0, -1.0);
    let f = |w: Complex64| mi * dpd_pointwise(w, p);
    let k1 = f(v);
    let k2 = f(v + k1 * (0.5 * dt));
    let k3 = f(v + k2 * (0.5 * dt));
    let k4 = f(v + k3 * dt);
    v + (k1 + 2.0 * k2 + 2.0 * k3 + k4) * (dt / 6.0)
}

fn dpd_sandwich(v: &mut [Complex64], psi: &[Complex64], half: &Propagator, nonlinear: bool, dt: f64) {
    half.apply(v);
    if nonlinear {
        v.iter_mut()
            .zip(psi)
            .for_each(|(z, &p)| *z = rk4_dpd(*z, p, dt));
    }
    half.apply(v);
}

/// One Strang step of the remainder equation
/// `i∂ₜv + Δv = |v|²v + g(v, Ψ)` with `Ψ` frozen at the step start.
pub fn strang_step_dpd(v: &ComplexField, psi: &ComplexField, dt: f64) -> Result<ComplexField> {
    v.check_same_grid(psi)?;
    let half = Propagator::new(v.grid(), 0.5 * dt);
    let mut data = v.values().to_vec();
    dpd_sandwich(&mut data, psi.values(), &half, true, dt);
    ComplexField::new(v.grid(), data)
}

/// Runs the configured scheme, drawing the noise from
/// `(config.seed, config.stream_id)`.
pub fn solve(config: &SolverConfig) -> Result<Trajectory> {
    config.validate()?;
    let path = if config.scheme.is_stochastic() {
        Some(NoisePath::generate(
            &config.noise,
            config.dt,
            config.steps(),
            config.seed,
            config.stream_id,
        )?)
    } else {
        None
    };
    integrate(config, path)
}

/// Runs the configured scheme driven by a pre-recorded noise path (which
/// must have exactly one increment per step of size `config.dt`).
pub fn solve_with_path(config: &SolverConfig, path: NoisePath) -> Result<Trajectory> {
    config.validate()?;
    if path.steps() != config.steps() || (path.dt - config.dt).abs() > 1e-12 * config.dt {
        return Err(Error::usage(format!(
            "noise path has {} steps of {} but the run needs {} steps of {}",
            path.steps(),
            path.dt,
            config.steps(),
            config.dt
        )));
    }
    integrate(config, Some(path))
}

fn integrate(config: &SolverConfig, path: Option<NoisePath>) -> Result<Trajectory> {
    let grid = &config.grid;
    let steps = config.steps();
    let stride = config.snapshot_stride;
    let half = Propagator::new(grid, 0.5 * config.dt);
    let full = Propagator::new(grid, config.dt);
    let potential = config.potential();
    let noisy = config.scheme.is_stochastic() && !config.noise.is_zero();

    let mut v = config.initial_v.values().to_vec();
    let mut psi = vec![Complex64::new(0.0, 0.0); grid.total_points()];
    let mut times = vec![0.0];
    let mut v_snaps = vec![config.initial_v.clone()];
    let mut psi_snaps = vec![ComplexField::zeros(grid)];

    for step in 0..steps {
        match config.scheme {
            Scheme::Dpd => {
                dpd_sandwich(&mut v, &psi, &half, config.nonlinear, config.dt);
                if let Some(p) = path.as_ref().filter(|_| noisy) {
                    full.apply(&mut psi);
                    add_minus_i(&mut psi, &p.increments[step]);
                }
            }
            _ => {
                direct_sandwich(&mut v, &half, potential, config.dt);
                if let Some(p) = path.as_ref().filter(|_| noisy) {
                    add_minus_i(&mut v, &p.increments[step]);
                }
            }
        }
        let done = step + 1;
        let finite = v.iter().chain(&psi).all(|z| z.re.is_finite() && z.im.is_finite());
        if !finite {
            return Err(Error::BlowUp {
                step: done,
                time: done as f64 * config.dt,
            });
        }
        if done % stride == 0 {
            times.push(done as f64 * config.dt);
            v_snaps.push(ComplexField::new(grid, v.clone())?);
            psi_snaps.push(ComplexField::new(grid, psi.clone())?);
        }
    }
    Ok(Trajectory {
        config: config.clone(),
        times,
        v_snapshots: v_snaps,
        psi_snapshots: psi_snaps,
        noise_path: path,
        frame: Frame::GrossPitaevskii,
    })
}

/// The Ψ route of [`crate::noise::advance_stochastic_convolution`] composed over a path:
/// `Σ_{n<m} S(t_m − t_{n+1})(−i G_n)` in raw Fourier coefficients.
fn discrete_convolution_hat(grid: &GridSpec, path: &NoisePath, steps: usize, t: f64) -> Vec<Complex64> {
    let mut acc = vec![Complex64::new(0.0, 0.0); grid.total_points()];
    let k2 = grid.k_squared();
    for (n, inc) in path.increments[..steps].iter().enumerate() {
        let mut g = inc.values().to_vec();
        grid.fft_forward(&mut g);
        let tau = t - (n + 1) as f64 * path.dt;
        for ((a, z), &k2) in acc.iter_mut().zip(&g).zip(k2) {
            *a += Complex64::new(z.im, -z.re) * Complex64::from_polar(1.0, -k2 * tau);
        }
    }
    acc
}

/// L² norm of the Duhamel defect
/// `u(t) − S(t)u₀ + i∫₀ᵗ S(t−t′)N(u)(t′)dt′ − Ψ(t)`
/// at snapshot `time_index`, with trapezoid quadrature over the stored
/// snapshots and `Ψ` rebuilt from the recorded increments.
pub fn duhamel_residual(trajectory: &Trajectory, time_index: usize) -> Result<f64> {
    if time_index >= trajectory.len() {
        return Err(Error::usage(format!(
            "time index {time_index} outside trajectory of {} snapshots",
            trajectory.len()
        )));
    }
    let path = trajectory.increments()?;
    let grid = trajectory.grid();
    let k2 = grid.k_squared();
    let t = trajectory.times[time_index];
    let potential = match trajectory.frame {
        Frame::GrossPitaevskii => trajectory.config.potential(),
        Frame::CubicNls => {
            if trajectory.config.nonlinear {
                Potential::Cubic
            } else {
                Potential::Off
            }
        }
    };
    let propagate = |f: &ComplexField, tau: f64| -> Vec<Complex64> {
        let mut d = f.values().to_vec();
        grid.fft_forward(&mut d);
        d.iter_mut()
            .zip(k2)
            .for_each(|(z, &k2)| *z *= Complex64::from_polar(1.0, -k2 * tau));
        d
    };

    // residual accumulated in raw Fourier space
    let mut res = trajectory.u(time_index).values().to_vec();
    grid.fft_forward(&mut res);
    let free = propagate(&trajectory.u(0), t);
    res.iter_mut().zip(&free).for_each(|(r, f)| *r -= f);

    for j in 0..time_index {
        let (ta, tb) = (trajectory.times[j], trajectory.times[j + 1]);
        let w = 0.5 * (tb - ta);
        for (idx, tp) in [(j, ta), (j + 1, tb)] {
            let v_star = trajectory.v_star(idx);
            let nl = v_star.map(|z| potential.term(z));
            let term = propagate(&nl, t - tp);
            // + i·w·S(t−t′)N
            res.iter_mut()
                .zip(&term)
                .for_each(|(r, z)| *r += Complex64::new(-z.im, z.re) * w);
        }
    }
    if let Some(path) = path {
        let steps = time_index * trajectory.stride();
        let psi = discrete_convolution_hat(grid, path, steps, t);
        let phase = if trajectory.frame == Frame::CubicNls {
            Complex64::from_polar(1.0, -t)
        } else {
            ONE
        };
        res.iter_mut().zip(&psi).for_each(|(r, p)| *r -= p * phase);
    }
    grid.fft_inverse(&mut res);
    Ok(ComplexField::new(grid, res)?.l2_norm())
}

/// `ũ(t) = e^{−it}u(t)` on every snapshot; the result solves the cubic NLS.
pub fn gauge_transform(trajectory: &Trajectory) -> Trajectory {
    let mut out = trajectory.clone();
    for (i, &t) in trajectory.times.iter().enumerate() {
        let phase = Complex64::from_polar(1.0, -t);
        out.v_snapshots[i] = trajectory.v_snapshots[i].map(|v| (ONE + v) * phase - ONE);
        out.psi_snapshots[i] = trajectory.psi_snapshots[i].scale(phase);
    }
    out.frame = Frame::CubicNls;
    out
}
