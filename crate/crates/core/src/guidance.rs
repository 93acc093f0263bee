//! 1D continuum demonstrator: two separated wave packets evolved on a grid,
//! with trajectories integrated along the guidance velocity v = Im(ψ′/ψ)
//! (units ħ = m = 1).
//!
//! The point being demonstrated is geometric: once the packets never overlap
//! in space over the whole run, a trajectory that starts under one packet
//! stays under it, so the initial box decides every later box reading. The
//! run aborts at startup if the analytic free-spreading bound cannot
//! guarantee the required separation.
//!
//! Evolution is split-step spectral (kinetic half-steps in momentum space,
//! potential full steps in position space) on a periodic grid.

use num_complex::Complex64 as C64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

use crate::rng::CounterRng;
use crate::stats::{ks_one_sample, KsResult};
use crate::{Error, Result};

/// Riemann-sum norm tolerance for constructed wavefunctions.
const GRID_NORM_TOL: f64 = 1e-10;
/// Density fraction below which a grid point counts as a node for the
/// velocity clamp.
const NODE_FLOOR: f64 = 1e-24;
/// Gaussian support radius used by the bounds checks, in widths.
const SUPPORT_SIGMAS: f64 = 8.0;
/// Largest admissible density cross-overlap between the two packets.
const OVERLAP_LIMIT: f64 = 1e-10;
/// RK4 substeps per stored frame interval.
const SUBSTEPS: usize = 2;

/// Uniform periodic spatial grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D {
    pub x_min: f64,
    pub x_max: f64,
    pub n: usize,
    pub dx: f64,
}

impl Grid1D {
    /// `n` must be a power of two, at least 256; points are `x_min + j·dx`
    /// for `j < n`, with `x_max` identified with `x_min` (periodic).
    pub fn new(x_min: f64, x_max: f64, n: usize) -> Result<Self> {
        if !x_min.is_finite() || !x_max.is_finite() || x_max <= x_min {
            return Err(Error::InvalidParameter(
                "grid needs finite x_min < x_max".into(),
            ));
        }
        if n < 256 || !n.is_power_of_two() {
            return Err(Error::InvalidParameter(format!(
                "grid size must be a power of two >= 256, got {n}"
            )));
        }
        Ok(Grid1D {
            x_min,
            x_max,
            n,
            dx: (x_max - x_min) / n as f64,
        })
    }

    pub fn point(&self, j: usize) -> f64 {
        self.x_min + j as f64 * self.dx
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(|j| self.point(j))
    }

    /// Angular wavenumber of FFT bin `j`, negative branch above n/2.
    fn wavenumber(&self, j: usize) -> f64 {
        let span = self.n as f64 * self.dx;
        let j = if j <= self.n / 2 {
            j as f64
        } else {
            j as f64 - self.n as f64
        };
        2.0 * std::f64::consts::PI * j / span
    }
}

/// Complex samples over a grid, unit Riemann-sum norm.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunction1D {
    pub grid: Grid1D,
    samples: Vec<C64>,
}

impl WaveFunction1D {
    pub fn new(grid: Grid1D, samples: Vec<C64>) -> Result<Self> {
        if samples.len() != grid.n {
            return Err(Error::DimensionMismatch {
                expected: grid.n,
                got: samples.len(),
            });
        }
        let psi = WaveFunction1D { grid, samples };
        let norm = psi.norm();
        if (norm - 1.0).abs() > GRID_NORM_TOL {
            return Err(Error::NotNormalized { norm });
        }
        Ok(psi)
    }

    pub fn samples(&self) -> &[C64] {
        &self.samples
    }

    /// √(Σ |ψ|² dx)
    pub fn norm(&self) -> f64 {
        (self
            .samples
            .iter()
            .map(|a| a.norm_sqr())
            .sum::<f64>()
            * self.grid.dx)
            .sqrt()
    }

    pub fn density(&self) -> Vec<f64> {
        self.samples.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Probability mass on `x < boundary` (cells split at the nearest edge).
    pub fn mass_below(&self, boundary: f64) -> f64 {
        self.samples
            .iter()
            .enumerate()
            .filter(|(j, _)| self.grid.point(*j) < boundary)
            .map(|(_, a)| a.norm_sqr() * self.grid.dx)
            .sum()
    }

    /// Mean and standard deviation of the position distribution.
    pub fn position_moments(&self) -> (f64, f64) {
        let dx = self.grid.dx;
        let mut mass = 0.0;
        let mut mean = 0.0;
        for (j, a) in self.samples.iter().enumerate() {
            let w = a.norm_sqr() * dx;
            mass += w;
            mean += w * self.grid.point(j);
        }
        mean /= mass;
        let mut var = 0.0;
        for (j, a) in self.samples.iter().enumerate() {
            let d = self.grid.point(j) - mean;
            var += a.norm_sqr() * dx * d * d;
        }
        (mean, (var / mass).sqrt())
    }
}

/// One Gaussian packet: exp(−(x−c)²/(4σ²) + i k x), weight-scaled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacketSpec {
    pub center: f64,
    pub sigma: f64,
    pub momentum: f64,
    pub weight: C64,
}

impl PacketSpec {
    pub fn new(center: f64, sigma: f64) -> Self {
        PacketSpec {
            center,
            sigma,
            momentum: 0.0,
            weight: C64::new(1.0, 0.0),
        }
    }

    pub fn with_weight(mut self, weight: C64) -> Self {
        self.weight = weight;
        self
    }

    pub fn with_momentum(mut self, momentum: f64) -> Self {
        self.momentum = momentum;
        self
    }
}

/// Sum of Gaussian packets, normalized once globally; weights act as
/// relative amplitudes.
pub fn init_packets(grid: Grid1D, packets: &[PacketSpec]) -> Result<WaveFunction1D> {
    if packets.is_empty() {
        return Err(Error::InvalidParameter("no packets".into()));
    }
    for p in packets {
        if p.sigma <= 0.0 || !p.sigma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "packet width must be positive, got {}",
                p.sigma
            )));
        }
        if p.center - SUPPORT_SIGMAS * p.sigma < grid.x_min
            || p.center + SUPPORT_SIGMAS * p.sigma > grid.x_max
        {
            return Err(Error::PacketOutsideGrid);
        }
    }
    let mut samples = vec![C64::new(0.0, 0.0); grid.n];
    for p in packets {
        let norm = (2.0 * std::f64::consts::PI * p.sigma * p.sigma).powf(-0.25);
        for (j, s) in samples.iter_mut().enumerate() {
            let x = grid.point(j);
            let envelope = norm * (-(x - p.center).powi(2) / (4.0 * p.sigma * p.sigma)).exp();
            let phase = C64::new(0.0, p.momentum * x).exp();
            *s += p.weight * envelope * phase;
        }
    }
    let total: f64 = samples.iter().map(|a| a.norm_sqr()).sum::<f64>() * grid.dx;
    if total <= 0.0 || !total.is_finite() {
        return Err(Error::DegenerateState);
    }
    let scale = total.sqrt().recip();
    for s in &mut samples {
        *s *= scale;
    }
    Ok(WaveFunction1D { grid, samples })
}

/// Width of a freely spreading Gaussian at time `t`: σ√(1 + t²/(4σ⁴)).
pub fn free_gaussian_width(sigma0: f64, t: f64) -> f64 {
    sigma0 * (1.0 + t * t / (4.0 * sigma0.powi(4))).sqrt()
}

/// Upper bound on the density cross-overlap ∫|g1||g2| dx of two freely
/// evolving Gaussian packets anywhere in [0, t_total]; uses the analytic
/// width-growth and center-drift formulas, sampled densely in t.
pub fn free_overlap_bound(a: &PacketSpec, b: &PacketSpec, t_total: f64) -> f64 {
    let overlap_at = |t: f64| {
        let sa = free_gaussian_width(a.sigma, t);
        let sb = free_gaussian_width(b.sigma, t);
        let d = (a.center + a.momentum * t) - (b.center + b.momentum * t);
        let s2 = sa * sa + sb * sb;
        (2.0 * sa * sb / s2).sqrt() * (-d * d / (4.0 * s2)).exp()
    };
    let samples = 256;
    (0..=samples)
        .map(|i| overlap_at(t_total * i as f64 / samples as f64))
        .fold(0.0, f64::max)
}

/// Abort unless the two packets are guaranteed to stay essentially disjoint
/// for the whole run.
pub fn check_separation(a: &PacketSpec, b: &PacketSpec, t_total: f64) -> Result<()> {
    let bound = free_overlap_bound(a, b, t_total);
    if bound > OVERLAP_LIMIT {
        return Err(Error::PacketsOverlap {
            bound,
            limit: OVERLAP_LIMIT,
        });
    }
    Ok(())
}

/// Stored evolution: wavefunction frames at evenly spaced times.
#[derive(Debug, Clone)]
pub struct WaveTimeline {
    pub grid: Grid1D,
    times: Vec<f64>,
    frames: Vec<Vec<C64>>,
}

impl WaveTimeline {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn frame(&self, i: usize) -> WaveFunction1D {
        WaveFunction1D {
            grid: self.grid,
            samples: self.frames[i].clone(),
        }
    }

    pub fn final_state(&self) -> WaveFunction1D {
        self.frame(self.frames.len() - 1)
    }
}

fn kinetic_phase(grid: &Grid1D, dt_half: f64) -> Vec<C64> {
    (0..grid.n)
        .map(|j| {
            let k = grid.wavenumber(j);
            C64::new(0.0, -k * k * 0.5 * dt_half).exp()
        })
        .collect()
}

struct Spectral {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    n_inv: f64,
}

impl Spectral {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Spectral {
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            n_inv: 1.0 / n as f64,
        }
    }

    fn to_momentum(&self, buf: &mut [C64]) {
        self.forward.process(buf);
    }

    fn to_position(&self, buf: &mut [C64]) {
        self.inverse.process(buf);
        for b in buf.iter_mut() {
            *b *= self.n_inv;
        }
    }
}

/// Evolve and keep a frame every `store_every` steps (frame 0 is the initial
/// state; the final state is always stored).
pub fn evolve_with_frames(
    psi: &WaveFunction1D,
    dt: f64,
    steps: usize,
    store_every: usize,
    potential: &[f64],
) -> Result<WaveTimeline> {
    if dt <= 0.0 || !dt.is_finite() {
        return Err(Error::InvalidParameter("dt must be positive".into()));
    }
    if store_every == 0 {
        return Err(Error::InvalidParameter("store_every must be >= 1".into()));
    }
    if potential.len() != psi.grid.n {
        return Err(Error::DimensionMismatch {
            expected: psi.grid.n,
            got: potential.len(),
        });
    }
    let grid = psi.grid;
    let spectral = Spectral::new(grid.n);
    let half_kick = kinetic_phase(&grid, dt / 2.0);
    let potential_phase: Vec<C64> = potential
        .iter()
        .map(|&v| C64::new(0.0, -v * dt).exp())
        .collect();

    let mut buf = psi.samples.clone();
    let mut times = vec![0.0];
    let mut frames = vec![buf.clone()];
    for step in 0..steps {
        spectral.to_momentum(&mut buf);
        for (b, k) in buf.iter_mut().zip(&half_kick) {
            *b *= k;
        }
        spectral.to_position(&mut buf);
        for (b, v) in buf.iter_mut().zip(&potential_phase) {
            *b *= v;
        }
        spectral.to_momentum(&mut buf);
        for (b, k) in buf.iter_mut().zip(&half_kick) {
            *b *= k;
        }
        spectral.to_position(&mut buf);
        let done = step + 1;
        if done % store_every == 0 || done == steps {
            times.push(done as f64 * dt);
            frames.push(buf.clone());
        }
    }
    Ok(WaveTimeline {
        grid,
        times,
        frames,
    })
}

/// Evolve without storing intermediate frames.
pub fn split_step_evolve(
    psi: &WaveFunction1D,
    dt: f64,
    steps: usize,
    potential: &[f64],
) -> Result<WaveFunction1D> {
    if steps == 0 {
        return Ok(psi.clone());
    }
    let timeline = evolve_with_frames(psi, dt, steps, steps, potential)?;
    Ok(timeline.final_state())
}

fn velocity_of(grid: &Grid1D, samples: &[C64], spectral: &Spectral) -> Vec<f64> {
    // Spectral derivative, but of the real and imaginary planes separately:
    // the derivative of a real array is structurally real, so the imaginary
    // rounding leakage of each transform is discarded instead of being
    // divided by a tiny |ψ| later. A real wavefunction then gets an exactly
    // zero velocity field.
    let derivative_plane = |plane: fn(&C64) -> f64| -> Vec<f64> {
        let mut hat: Vec<C64> = samples.iter().map(|s| C64::new(plane(s), 0.0)).collect();
        spectral.to_momentum(&mut hat);
        for (j, h) in hat.iter_mut().enumerate() {
            // zero the (sign-ambiguous) Nyquist bin
            let k = if j == grid.n / 2 {
                0.0
            } else {
                grid.wavenumber(j)
            };
            *h *= C64::new(0.0, k);
        }
        spectral.to_position(&mut hat);
        hat.iter().map(|h| h.re).collect()
    };
    let d_re = derivative_plane(|s| s.re);
    let d_im = derivative_plane(|s| s.im);

    let density: Vec<f64> = samples.iter().map(|a| a.norm_sqr()).collect();
    let peak = density.iter().cloned().fold(0.0, f64::max);
    let floor = NODE_FLOOR * peak;
    // v = Im(ψ′ · conj ψ) / |ψ|²
    let mut v: Vec<f64> = (0..grid.n)
        .map(|j| {
            let rho = density[j];
            if rho > floor {
                (d_im[j] * samples[j].re - d_re[j] * samples[j].im) / rho
            } else {
                f64::NAN // filled below from the nearest live point
            }
        })
        .collect();
    // clamp node regions to the nearest above-threshold value
    let live: Vec<usize> = (0..grid.n).filter(|&j| density[j] > floor).collect();
    if live.is_empty() {
        return vec![0.0; grid.n];
    }
    for j in 0..grid.n {
        if v[j].is_nan() {
            let nearest = match live.binary_search(&j) {
                Ok(_) => unreachable!("live points are not NaN"),
                Err(pos) => {
                    let after = live.get(pos).copied();
                    let before = pos.checked_sub(1).map(|p| live[p]);
                    match (before, after) {
                        (Some(b), Some(a)) => {
                            if j - b <= a - j {
                                b
                            } else {
                                a
                            }
                        }
                        (Some(b), None) => b,
                        (None, Some(a)) => a,
                        (None, None) => unreachable!("live is non-empty"),
                    }
                }
            };
            v[j] = v[nearest];
        }
    }
    v
}

/// Guidance velocity v(x) = Im(ψ′(x)/ψ(x)) at every grid point, with node
/// regions clamped to the nearest live value.
pub fn velocity_field(psi: &WaveFunction1D) -> Vec<f64> {
    let spectral = Spectral::new(psi.grid.n);
    velocity_of(&psi.grid, &psi.samples, &spectral)
}

/// One integrated trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct BohmTrajectory1D {
    pub initial: f64,
    /// Position at every stored frame time, truncated at grid exit.
    pub positions: Vec<f64>,
    /// Sign of (x − boundary) per stored position.
    pub boxes: Vec<i8>,
    /// Left the grid during integration; excluded from statistics.
    pub escaped: bool,
}

/// Velocity linearly interpolated in x (periodic at the seam); `None` when
/// the position is outside the grid.
fn lerp_velocity(grid: &Grid1D, field: &[f64], x: f64) -> Option<f64> {
    if x < grid.x_min || x > grid.x_max || !x.is_finite() {
        return None;
    }
    let u = (x - grid.x_min) / grid.dx;
    let j = (u.floor() as usize).min(grid.n - 1);
    let frac = u - j as f64;
    let next = if j + 1 < grid.n { field[j + 1] } else { field[0] };
    Some(field[j] * (1.0 - frac) + frac * next)
}

fn integrate_one(
    grid: &Grid1D,
    times: &[f64],
    fields: &[Vec<f64>],
    x0: f64,
    boundary: f64,
) -> BohmTrajectory1D {
    let sign = |x: f64| -> i8 {
        if x > boundary {
            1
        } else if x < boundary {
            -1
        } else {
            0
        }
    };
    let mut positions = vec![x0];
    let mut boxes = vec![sign(x0)];
    let mut escaped = lerp_velocity(grid, &fields[0], x0).is_none();
    let mut x = x0;
    'frames: for f in 0..times.len() - 1 {
        if escaped {
            break;
        }
        let (t0, t1) = (times[f], times[f + 1]);
        let h = (t1 - t0) / SUBSTEPS as f64;
        // v(x, t) by linear interpolation between the two bracketing frames
        let v = |x: f64, t: f64| -> Option<f64> {
            let w = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
            let va = lerp_velocity(grid, &fields[f], x)?;
            let vb = lerp_velocity(grid, &fields[f + 1], x)?;
            Some(va * (1.0 - w) + w * vb)
        };
        for s in 0..SUBSTEPS {
            let t = t0 + s as f64 * h;
            let step = (|| {
                let k1 = v(x, t)?;
                let k2 = v(x + 0.5 * h * k1, t + 0.5 * h)?;
                let k3 = v(x + 0.5 * h * k2, t + 0.5 * h)?;
                let k4 = v(x + h * k3, t + h)?;
                let next = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
                if next < grid.x_min || next > grid.x_max {
                    None
                } else {
                    Some(next)
                }
            })();
            match step {
                Some(next) => x = next,
                None => {
                    escaped = true;
                    break 'frames;
                }
            }
        }
        positions.push(x);
        boxes.push(sign(x));
    }
    BohmTrajectory1D {
        initial: x0,
        positions,
        boxes,
        escaped,
    }
}

/// Integrate trajectories from `initial_positions` through the stored
/// timeline (RK4, velocity interpolated linearly in x and t). Box labels are
/// signs relative to `boundary`. Deterministic for any `workers` count.
pub fn integrate_trajectories(
    timeline: &WaveTimeline,
    initial_positions: &[f64],
    boundary: f64,
    workers: usize,
) -> Result<Vec<BohmTrajectory1D>> {
    if initial_positions.is_empty() {
        return Err(Error::InvalidParameter("no initial positions".into()));
    }
    let spectral = Spectral::new(timeline.grid.n);
    let fields: Vec<Vec<f64>> = timeline
        .frames
        .iter()
        .map(|f| velocity_of(&timeline.grid, f, &spectral))
        .collect();
    let n = initial_positions.len();
    let workers = workers.max(1).min(n);
    if workers == 1 {
        return Ok(initial_positions
            .iter()
            .map(|&x0| integrate_one(&timeline.grid, &timeline.times, &fields, x0, boundary))
            .collect());
    }
    let chunk = n.div_ceil(workers);
    let pieces: Vec<Vec<BohmTrajectory1D>> = std::thread::scope(|scope| {
        let handles: Vec<_> = initial_positions
            .chunks(chunk)
            .map(|xs| {
                let fields = &fields;
                let grid = &timeline.grid;
                let times = &timeline.times;
                scope.spawn(move || {
                    xs.iter()
                        .map(|&x0| integrate_one(grid, times, fields, x0, boundary))
                        .collect()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .collect()
    });
    Ok(pieces.into_iter().flatten().collect())
}

/// Draw positions from |ψ|² by inverting the piecewise CDF; draw `k` uses the
/// counter stream `(seed, k)`.
pub fn sample_positions(psi: &WaveFunction1D, n: usize, seed: u64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidParameter("no samples requested".into()));
    }
    let dx = psi.grid.dx;
    let mut cumulative = Vec::with_capacity(psi.grid.n);
    let mut acc = 0.0;
    for a in &psi.samples {
        acc += a.norm_sqr() * dx;
        cumulative.push(acc);
    }
    let total = acc;
    if total <= 0.0 {
        return Err(Error::DegenerateState);
    }
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let mut rng = CounterRng::at_step(seed, k as u64, 0);
        let u = rng.next_f64() * total;
        let cell = cumulative.partition_point(|&c| c < u).min(psi.grid.n - 1);
        let below = if cell == 0 { 0.0 } else { cumulative[cell - 1] };
        let mass = cumulative[cell] - below;
        let frac = if mass > 0.0 {
            ((u - below) / mass).clamp(0.0, 1.0)
        } else {
            0.5
        };
        out.push(psi.grid.point(cell) + frac * dx);
    }
    Ok(out)
}

/// Box-membership summary over the non-escaped trajectories.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxStats {
    pub n: usize,
    pub escaped: usize,
    /// Fraction starting in box 1.
    pub p_box1_start: f64,
    /// Fraction ending in box 1.
    pub p_box1_end: f64,
    /// Fraction in box 1 at every stored step.
    pub p_box1_throughout: f64,
    /// Fraction whose box sign ever differs from its initial sign.
    pub crossing_fraction: f64,
}

/// Count box membership; box 1 is the side with sign `box1_sign`.
pub fn box_statistics(trajectories: &[BohmTrajectory1D], box1_sign: i8) -> BoxStats {
    let mut kept = 0usize;
    let mut escaped = 0usize;
    let mut start = 0usize;
    let mut end = 0usize;
    let mut throughout = 0usize;
    let mut crossed = 0usize;
    for t in trajectories {
        if t.escaped {
            escaped += 1;
            continue;
        }
        kept += 1;
        let first = t.boxes[0];
        if first == box1_sign {
            start += 1;
        }
        if *t.boxes.last().unwrap() == box1_sign {
            end += 1;
        }
        if t.boxes.iter().all(|&b| b == box1_sign) {
            throughout += 1;
        }
        if t.boxes.iter().any(|&b| b != first) {
            crossed += 1;
        }
    }
    let denom = kept.max(1) as f64;
    BoxStats {
        n: kept,
        escaped,
        p_box1_start: start as f64 / denom,
        p_box1_end: end as f64 / denom,
        p_box1_throughout: throughout as f64 / denom,
        crossing_fraction: crossed as f64 / denom,
    }
}

/// Parameters of a full guidance run. `weights` are probability masses of
/// the two packets (amplitudes are their square roots).
#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub n_grid: usize,
    pub sigma: f64,
    pub centers: (f64, f64),
    pub weights: (f64, f64),
    pub t_total: f64,
    pub dt: f64,
    pub store_every: usize,
    pub n_traj: usize,
    pub seed: u64,
    /// 0 = use all available cores (results are identical either way).
    pub workers: usize,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        GuidanceConfig {
            x_min: -40.0,
            x_max: 40.0,
            n_grid: 2048,
            sigma: 1.0,
            centers: (-8.0, 8.0),
            weights: (1.0, 1.0),
            t_total: 1.0,
            dt: 1e-3,
            store_every: 5,
            n_traj: 10_000,
            seed: 1,
            workers: 0,
        }
    }
}

/// Summary statistics of a guidance run.
#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceReport {
    pub n: usize,
    pub escaped: usize,
    pub frames: usize,
    pub norm_drift: f64,
    pub overlap_bound: f64,
    pub p_box1_start: f64,
    pub p_box1_end: f64,
    pub p_box1_throughout: f64,
    pub crossing_fraction: f64,
    /// Final positions against the final Born density.
    pub ks: KsResult,
}

/// A completed guidance run: summary plus the raw trajectories and frame
/// times for dumping.
#[derive(Debug, Clone)]
pub struct GuidanceRun {
    pub report: GuidanceReport,
    pub trajectories: Vec<BohmTrajectory1D>,
    pub times: Vec<f64>,
    pub boundary: f64,
}

/// Run the whole demonstrator: build the two packets, verify separation,
/// evolve, integrate trajectories from Born-sampled starts, and test final
/// positions against the final density.
pub fn run_guidance(cfg: &GuidanceConfig) -> Result<GuidanceRun> {
    if cfg.n_traj == 0 {
        return Err(Error::InvalidParameter("need at least one trajectory".into()));
    }
    if cfg.t_total <= 0.0 || !cfg.t_total.is_finite() {
        return Err(Error::InvalidParameter("t_total must be positive".into()));
    }
    if cfg.weights.0 < 0.0 || cfg.weights.1 < 0.0 || cfg.weights.0 + cfg.weights.1 <= 0.0 {
        return Err(Error::InvalidParameter(
            "weights must be non-negative with positive sum".into(),
        ));
    }
    let grid = Grid1D::new(cfg.x_min, cfg.x_max, cfg.n_grid)?;
    let p1 = PacketSpec::new(cfg.centers.0, cfg.sigma)
        .with_weight(C64::new(cfg.weights.0.sqrt(), 0.0));
    let p2 = PacketSpec::new(cfg.centers.1, cfg.sigma)
        .with_weight(C64::new(cfg.weights.1.sqrt(), 0.0));
    check_separation(&p1, &p2, cfg.t_total)?;
    let overlap_bound = free_overlap_bound(&p1, &p2, cfg.t_total);

    let psi0 = init_packets(grid, &[p1, p2])?;
    let steps = (cfg.t_total / cfg.dt).round().max(1.0) as usize;
    let timeline = evolve_with_frames(&psi0, cfg.dt, steps, cfg.store_every, &vec![0.0; grid.n])?;
    let psi_t = timeline.final_state();
    let norm_drift = (psi_t.norm() - 1.0).abs();

    let starts = sample_positions(&psi0, cfg.n_traj, cfg.seed)?;
    let boundary = 0.5 * (cfg.centers.0 + cfg.centers.1);
    let workers = if cfg.workers == 0 {
        std::thread::available_parallelism().map(|t| t.get()).unwrap_or(1)
    } else {
        cfg.workers
    };
    let trajectories = integrate_trajectories(&timeline, &starts, boundary, workers)?;
    let box1_sign = if cfg.centers.0 < boundary { -1 } else { 1 };
    let stats = box_statistics(&trajectories, box1_sign);

    let finals: Vec<f64> = trajectories
        .iter()
        .filter(|t| !t.escaped)
        .map(|t| *t.positions.last().unwrap())
        .collect();
    let cdf = density_cdf(&psi_t);
    let ks = ks_one_sample(&finals, cdf)?;

    Ok(GuidanceRun {
        report: GuidanceReport {
            n: stats.n,
            escaped: stats.escaped,
            frames: timeline.n_frames(),
            norm_drift,
            overlap_bound,
            p_box1_start: stats.p_box1_start,
            p_box1_end: stats.p_box1_end,
            p_box1_throughout: stats.p_box1_throughout,
            crossing_fraction: stats.crossing_fraction,
            ks,
        },
        trajectories,
        times: timeline.times.clone(),
        boundary,
    })
}

/// Piecewise-linear CDF of the wavefunction's position density.
pub fn density_cdf(psi: &WaveFunction1D) -> impl Fn(f64) -> f64 {
    let grid = psi.grid;
    let dx = grid.dx;
    let mut cumulative = Vec::with_capacity(grid.n + 1);
    cumulative.push(0.0);
    let mut acc = 0.0;
    for a in &psi.samples {
        acc += a.norm_sqr() * dx;
        cumulative.push(acc);
    }
    let total = acc.max(f64::MIN_POSITIVE);
    move |x: f64| {
        if x <= grid.x_min {
            return 0.0;
        }
        if x >= grid.x_max {
            return 1.0;
        }
        let u = (x - grid.x_min) / dx;
        let j = (u.floor() as usize).min(grid.n - 1);
        let frac = u - j as f64;
        let below = cumulative[j];
        let cell = cumulative[j + 1] - cumulative[j];
        ((below + frac * cell) / total).clamp(0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_grid() -> Grid1D {
        Grid1D::new(-40.0, 40.0, 2048).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(Grid1D::new(-1.0, 1.0, 128).is_err()); // too small
        assert!(Grid1D::new(-1.0, 1.0, 300).is_err()); // not a power of two
        assert!(Grid1D::new(1.0, -1.0, 512).is_err()); // inverted bounds
        let g = Grid1D::new(-2.0, 2.0, 512).unwrap();
        assert!((g.dx - 4.0 / 512.0).abs() < 1e-15);
        assert_eq!(g.point(0), -2.0);
    }

    #[test]
    fn two_packets_normalize_and_stay_disjoint() {
        let grid = default_grid();
        let p1 = PacketSpec::new(-8.0, 1.0);
        let p2 = PacketSpec::new(8.0, 1.0);
        let psi = init_packets(grid, &[p1, p2]).unwrap();
        assert!((psi.norm() - 1.0).abs() < 1e-10);
        // numeric cross-overlap of the two halves ~ exp(-32)
        let g1 = init_packets(grid, &[p1]).unwrap();
        let g2 = init_packets(grid, &[p2]).unwrap();
        let overlap: f64 = g1
            .samples()
            .iter()
            .zip(g2.samples())
            .map(|(a, b)| (a.conj() * b).norm())
            .sum::<f64>()
            * grid.dx;
        assert!(overlap < 1e-13, "overlap {overlap}");
        assert!((overlap - (-32.0f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn packet_weights_set_box_masses() {
        let grid = default_grid();
        let p1 = PacketSpec::new(-8.0, 1.0).with_weight(C64::new(0.3f64.sqrt(), 0.0));
        let p2 = PacketSpec::new(8.0, 1.0).with_weight(C64::new(0.7f64.sqrt(), 0.0));
        let psi = init_packets(grid, &[p1, p2]).unwrap();
        assert!((psi.mass_below(0.0) - 0.3).abs() < 1e-6);
    }

    #[test]
    fn packet_support_is_enforced() {
        let grid = default_grid();
        assert_eq!(
            init_packets(grid, &[PacketSpec::new(-38.0, 1.0)]),
            Err(Error::PacketOutsideGrid)
        );
        assert!(matches!(
            init_packets(grid, &[PacketSpec::new(0.0, -1.0)]),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn zero_steps_is_identity() {
        let grid = default_grid();
        let psi = init_packets(grid, &[PacketSpec::new(0.0, 1.0)]).unwrap();
        let out = split_step_evolve(&psi, 1e-3, 0, &vec![0.0; grid.n]).unwrap();
        assert_eq!(psi, out);
    }

    #[test]
    fn free_gaussian_spreads_at_the_analytic_rate() {
        let grid = default_grid();
        let sigma0 = 1.0;
        let psi = init_packets(grid, &[PacketSpec::new(0.0, sigma0)]).unwrap();
        let t = 1.0;
        let out = split_step_evolve(&psi, 1e-3, 1000, &vec![0.0; grid.n]).unwrap();
        let (_, width) = out.position_moments();
        let want = free_gaussian_width(sigma0, t);
        assert!(
            ((width - want) / want).abs() < 1e-6,
            "width {width}, want {want}"
        );
    }

    #[test]
    fn norm_survives_many_steps() {
        let grid = Grid1D::new(-20.0, 20.0, 512).unwrap();
        let psi = init_packets(grid, &[PacketSpec::new(0.0, 1.0)]).unwrap();
        let out = split_step_evolve(&psi, 1e-4, 10_000, &vec![0.0; grid.n]).unwrap();
        assert!((out.norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn harmonic_potential_keeps_packet_bound() {
        // coherent-state-ish check: packet in x²/2 well oscillates, norm kept
        let grid = Grid1D::new(-20.0, 20.0, 512).unwrap();
        let psi = init_packets(grid, &[PacketSpec::new(2.0, 1.0 / 2f64.sqrt())]).unwrap();
        let potential: Vec<f64> = grid.points().map(|x| 0.5 * x * x).collect();
        // half period: packet should sit at -2
        let out = split_step_evolve(&psi, 1e-3, 3142, &potential).unwrap();
        let (mean, _) = out.position_moments();
        assert!((mean + 2.0).abs() < 1e-2, "mean {mean}");
        assert!((out.norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn stationary_gaussian_has_zero_velocity() {
        let grid = default_grid();
        let psi = init_packets(grid, &[PacketSpec::new(0.0, 1.0)]).unwrap();
        let v = velocity_field(&psi);
        let max = v.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
        assert!(max < 1e-10, "max |v| = {max}");
    }

    #[test]
    fn plane_wave_phase_reads_back_as_uniform_velocity() {
        let grid = default_grid();
        let k = 1.75;
        let psi = init_packets(grid, &[PacketSpec::new(0.0, 2.0).with_momentum(k)]).unwrap();
        let v = velocity_field(&psi);
        for (j, x) in grid.points().enumerate() {
            if x.abs() < 4.0 {
                assert!((v[j] - k).abs() < 1e-8, "v({x}) = {}", v[j]);
            }
        }
    }

    #[test]
    fn node_region_velocity_is_clamped_finite() {
        let grid = default_grid();
        let psi = init_packets(
            grid,
            &[PacketSpec::new(-8.0, 1.0), PacketSpec::new(8.0, 1.0)],
        )
        .unwrap();
        let v = velocity_field(&psi);
        assert!(v.iter().all(|x| x.is_finite()));
        // midpoint density is ~exp(-32); it must carry its neighbors' value
        let mid = grid.n / 2;
        assert!(v[mid].abs() < 1.0, "clamped v = {}", v[mid]);
    }

    #[test]
    fn sampling_is_deterministic_and_weighted() {
        let grid = default_grid();
        let p1 = PacketSpec::new(-8.0, 1.0).with_weight(C64::new(0.3f64.sqrt(), 0.0));
        let p2 = PacketSpec::new(8.0, 1.0).with_weight(C64::new(0.7f64.sqrt(), 0.0));
        let psi = init_packets(grid, &[p1, p2]).unwrap();
        let a = sample_positions(&psi, 20_000, 9).unwrap();
        let b = sample_positions(&psi, 20_000, 9).unwrap();
        assert_eq!(a, b);
        let left = a.iter().filter(|&&x| x < 0.0).count() as f64 / a.len() as f64;
        let bound = 3.0 * (0.3 * 0.7 / 20_000.0_f64).sqrt();
        assert!((left - 0.3).abs() < bound, "left fraction {left}");
    }

    #[test]
    fn trajectories_stay_in_their_boxes() {
        let cfg = GuidanceConfig {
            n_traj: 2000,
            t_total: 0.5,
            ..GuidanceConfig::default()
        };
        let run = run_guidance(&cfg).unwrap();
        let r = &run.report;
        assert_eq!(r.escaped, 0);
        assert_eq!(r.crossing_fraction, 0.0);
        assert!((r.p_box1_start - 0.5).abs() < 3.0 * (0.25f64 / 2000.0).sqrt());
        assert_eq!(r.p_box1_start, r.p_box1_end);
        assert_eq!(r.p_box1_start, r.p_box1_throughout);
        assert!(r.norm_drift < 1e-10);
        assert!(r.ks.p_value >= 1e-2, "KS p = {}", r.ks.p_value);
        assert!(r.frames >= 100);
    }

    #[test]
    fn trajectory_order_is_preserved() {
        let cfg = GuidanceConfig {
            n_traj: 500,
            t_total: 0.5,
            ..GuidanceConfig::default()
        };
        let run = run_guidance(&cfg).unwrap();
        let mut initial_order: Vec<usize> = (0..run.trajectories.len()).collect();
        initial_order.sort_by(|&a, &b| {
            run.trajectories[a]
                .initial
                .total_cmp(&run.trajectories[b].initial)
                .then(a.cmp(&b))
        });
        let mut final_order: Vec<usize> = (0..run.trajectories.len()).collect();
        final_order.sort_by(|&a, &b| {
            run.trajectories[a]
                .positions
                .last()
                .unwrap()
                .total_cmp(run.trajectories[b].positions.last().unwrap())
                .then(a.cmp(&b))
        });
        assert_eq!(initial_order, final_order);
    }

    #[test]
    fn close_packets_fail_the_startup_check() {
        let cfg = GuidanceConfig {
            centers: (-1.0, 1.0),
            ..GuidanceConfig::default()
        };
        assert!(matches!(
            run_guidance(&cfg),
            Err(Error::PacketsOverlap { .. })
        ));
        // the bound itself: exp(-4/8) ~ 0.6 at t=0
        let a = PacketSpec::new(-1.0, 1.0);
        let b = PacketSpec::new(1.0, 1.0);
        assert!(free_overlap_bound(&a, &b, 0.0) > 0.5);
    }

    #[test]
    fn default_separation_margin() {
        // defaults stay separated; doubling the runtime would not
        let a = PacketSpec::new(-8.0, 1.0);
        let b = PacketSpec::new(8.0, 1.0);
        assert!(check_separation(&a, &b, 1.0).is_ok());
        assert!(check_separation(&a, &b, 2.0).is_err());
    }

    #[test]
    fn integration_is_worker_count_invariant() {
        let grid = Grid1D::new(-20.0, 20.0, 512).unwrap();
        let psi = init_packets(grid, &[PacketSpec::new(-4.0, 1.0), PacketSpec::new(12.0, 1.0)])
            .unwrap();
        let tl = evolve_with_frames(&psi, 1e-3, 200, 5, &vec![0.0; grid.n]).unwrap();
        let starts = sample_positions(&psi, 200, 3).unwrap();
        let one = integrate_trajectories(&tl, &starts, 4.0, 1).unwrap();
        let many = integrate_trajectories(&tl, &starts, 4.0, 7).unwrap();
        assert_eq!(one, many);
    }

    #[test]
    fn out_of_grid_start_is_flagged_escaped() {
        let grid = Grid1D::new(-20.0, 20.0, 512).unwrap();
        let psi = init_packets(grid, &[PacketSpec::new(0.0, 1.0)]).unwrap();
        let tl = evolve_with_frames(&psi, 1e-3, 10, 5, &vec![0.0; grid.n]).unwrap();
        let trajs = integrate_trajectories(&tl, &[25.0, 0.0], 0.0, 1).unwrap();
        assert!(trajs[0].escaped);
        assert!(!trajs[1].escaped);
        let stats = box_statistics(&trajs, -1);
        assert_eq!(stats.escaped, 1);
        assert_eq!(stats.n, 1);
    }

    #[test]
    fn box_statistics_counts_crossings() {
        let stay = BohmTrajectory1D {
            initial: -1.0,
            positions: vec![-1.0, -1.1, -0.9],
            boxes: vec![-1, -1, -1],
            escaped: false,
        };
        let cross = BohmTrajectory1D {
            initial: -1.0,
            positions: vec![-1.0, 0.5, 0.7],
            boxes: vec![-1, 1, 1],
            escaped: false,
        };
        let stats = box_statistics(&[stay.clone(), cross], -1);
        assert_eq!(stats.n, 2);
        assert!((stats.crossing_fraction - 0.5).abs() < 1e-15);
        assert!((stats.p_box1_start - 1.0).abs() < 1e-15);
        assert!((stats.p_box1_throughout - 0.5).abs() < 1e-15);
        let single = box_statistics(&[stay], -1);
        assert_eq!(single.p_box1_start, 1.0);
        assert_eq!(single.crossing_fraction, 0.0);
    }
}
