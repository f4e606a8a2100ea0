//! Monte Carlo trials of the postselected two-meter experiment.
//!
//! Each trial draws the postselection outcome `tau` and then the pointer
//! readouts `(x, y)` from the corresponding branch density on the pointer
//! grid: `|F|^2` for success, `rho_cl - |F><F|` for failure. Both densities
//! contain interference terms of either sign, so they are sampled by
//! tabulated inverse CDF: `y` from its marginal, then `x` from the
//! conditional at that `y` node. The conditional is a quadratic form in the
//! two meter-A states, so its CDF is a fixed combination of four cumulative
//! tables and needs no per-trial tabulation. A uniform jitter within the
//! grid cell and optional Gaussian readout noise are added last.
//!
//! Trials are generated in fixed-size batches; batch `b` draws from
//! ChaCha8 stream `b` of the run seed, so the trial sequence does not
//! depend on the number of worker threads.

use std::io::{Read, Write};
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::dynamics::{BranchWeights, PointerDensity, SampledBranches, BRANCHES};
use crate::error::{Error, Result};
use crate::meter::{Grid, GridMeter, Weight};
use crate::qsystem::TransitionAmplitudes;

/// Trials per RNG stream.
pub const BATCH_SIZE: usize = 4096;
/// Standard deviations required by [`NoiseRow::n_required`].
pub const DETECTION_SIGMAS: f64 = 5.0;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialRecord {
    /// `+1` for a successful postselection, `-1` otherwise.
    pub tau: i8,
    pub x: f64,
    pub y: f64,
}

impl TrialRecord {
    #[inline]
    pub fn signed_product(&self) -> f64 {
        f64::from(self.tau) * self.x * self.y
    }
}

/// Independent zero-mean Gaussian readout noise with standard deviations
/// `nu_a`, `nu_b` (pointer units), applied in both postselection branches.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NoiseModel {
    pub nu_a: f64,
    pub nu_b: f64,
}

impl NoiseModel {
    pub fn new(nu_a: f64, nu_b: f64) -> Result<Self> {
        for (field, nu) in [("noise_a", nu_a), ("noise_b", nu_b)] {
            if !(nu.is_finite() && nu >= 0.0) {
                return Err(Error::validation(field, format!("{nu} must be finite and >= 0")));
            }
        }
        Ok(Self { nu_a, nu_b })
    }

    pub fn none() -> Self {
        Self::default()
    }
}

/// Inverse-CDF tables for one postselection branch.
#[derive(Debug, Clone)]
struct BranchTable {
    density: PointerDensity,
    /// Running sum of the `y` marginal over grid nodes.
    y_cdf: Vec<f64>,
}

impl BranchTable {
    fn new(density: PointerDensity, x_cum: &[[Vec<Complex64>; 2]; 2]) -> Self {
        let b = density.branches();
        let last = x_cum[0][0].len() - 1;
        let mut y_cdf = Vec::with_capacity(b.b_states[0].len());
        let mut acc = 0.0;
        for iy in 0..b.b_states[0].len() {
            let q = conditional_form(&density, iy);
            let mass: f64 = (0..2)
                .flat_map(|a| (0..2).map(move |c| (a, c)))
                .map(|(a, c)| (q[a][c] * x_cum[a][c][last]).re)
                .sum();
            acc += mass.max(0.0);
            y_cdf.push(acc);
        }
        Self { density, y_cdf }
    }

    fn mass(&self) -> f64 {
        *self.y_cdf.last().unwrap_or(&0.0)
    }
}

/// `Q_ac(y) = sum K_ik B_i(y) B_k*(y)` over branches whose meter-A states are `a`, `c`.
fn conditional_form(density: &PointerDensity, iy: usize) -> [[Complex64; 2]; 2] {
    let b = density.branches();
    let k = density.kernel();
    let mut q = [[ZERO; 2]; 2];
    for (i, &(ai, bi)) in BRANCHES.iter().enumerate() {
        for (j, &(aj, bj)) in BRANCHES.iter().enumerate() {
            q[ai][aj] += k[i][j] * b.b_states[bi][iy] * b.b_states[bj][iy].conj();
        }
    }
    q
}

/// Smallest index whose cumulative value reaches `target`.
fn invert(len: usize, target: f64, cdf: impl Fn(usize) -> f64) -> usize {
    let (mut lo, mut hi) = (0usize, len - 1);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if cdf(mid) >= target {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    lo
}

/// Tabulated trial generator for fixed amplitudes, meters and noise.
#[derive(Debug, Clone)]
pub struct TrialEngine {
    success: BranchTable,
    failure: BranchTable,
    /// `sum_{m <= n} A_a(x_m) A_c*(x_m)` for meter-A states `a, c`.
    x_cumulative: [[Vec<Complex64>; 2]; 2],
    p_success: f64,
    noise: NoiseModel,
    grid_a: Grid,
    grid_b: Grid,
}

impl TrialEngine {
    pub fn new(
        amps: &TransitionAmplitudes,
        weights: &BranchWeights,
        meter_a: &GridMeter,
        g_a: f64,
        meter_b: &GridMeter,
        g_b: f64,
        noise: NoiseModel,
    ) -> Result<Self> {
        let branches = Arc::new(SampledBranches::new(meter_a, g_a, meter_b, g_b)?);
        let success = PointerDensity::success(branches.clone(), amps);
        let failure = PointerDensity::failure(branches.clone(), amps, weights)?;

        let mut x_cumulative: [[Vec<Complex64>; 2]; 2] = Default::default();
        for a in 0..2 {
            for c in 0..2 {
                let mut acc = ZERO;
                x_cumulative[a][c] = branches.a_states[a]
                    .iter()
                    .zip(&branches.a_states[c])
                    .map(|(u, v)| {
                        acc += u * v.conj();
                        acc
                    })
                    .collect();
            }
        }
        let success = BranchTable::new(success, &x_cumulative);
        let failure = BranchTable::new(failure, &x_cumulative);
        let total = success.mass() + failure.mass();
        if !(total > 0.0) {
            return Err(Error::Consistency("branch densities carry no probability".into()));
        }
        let p_success = success.mass() / total;
        Ok(Self {
            success,
            failure,
            x_cumulative,
            p_success,
            noise,
            grid_a: *meter_a.grid(),
            grid_b: *meter_b.grid(),
        })
    }

    /// Gaussian meters sampled on the default pointer grid.
    pub fn gaussian(
        amps: &TransitionAmplitudes,
        weights: &BranchWeights,
        g_a: f64,
        g_b: f64,
        noise: NoiseModel,
    ) -> Result<Self> {
        let meter = GridMeter::gaussian(Grid::default())?;
        Self::new(amps, weights, &meter, g_a, &meter, g_b, noise)
    }

    pub fn with_noise(mut self, noise: NoiseModel) -> Self {
        self.noise = noise;
        self
    }

    /// Probability that a trial is postselected, as tabulated.
    pub fn p_success(&self) -> f64 {
        self.p_success
    }

    pub fn success_density(&self) -> &PointerDensity {
        &self.success.density
    }

    pub fn failure_density(&self) -> &PointerDensity {
        &self.failure.density
    }

    /// Expectation of `tau x y` under the tabulated densities.
    pub fn expected_indicator(&self) -> f64 {
        let s = self.success.density.moment(Weight::Position, Weight::Position);
        let f = self.failure.density.moment(Weight::Position, Weight::Position);
        s - f
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> TrialRecord {
        let success = rng.random::<f64>() < self.p_success;
        let table = if success { &self.success } else { &self.failure };

        let target = rng.random::<f64>() * table.mass();
        let iy = invert(table.y_cdf.len(), target, |k| table.y_cdf[k]);

        let q = conditional_form(&table.density, iy);
        let cdf = |n: usize| -> f64 {
            let mut s = 0.0;
            for a in 0..2 {
                for c in 0..2 {
                    s += (q[a][c] * self.x_cumulative[a][c][n]).re;
                }
            }
            s
        };
        let nx = self.grid_a.points();
        let target = rng.random::<f64>() * cdf(nx - 1);
        let ix = invert(nx, target, cdf);

        let jitter_x = rng.random::<f64>() - 0.5;
        let jitter_y = rng.random::<f64>() - 0.5;
        let noise_x: f64 = rng.sample(StandardNormal);
        let noise_y: f64 = rng.sample(StandardNormal);
        TrialRecord {
            tau: if success { 1 } else { -1 },
            x: self.grid_a.x(ix) + jitter_x * self.grid_a.dx() + self.noise.nu_a * noise_x,
            y: self.grid_b.x(iy) + jitter_y * self.grid_b.dx() + self.noise.nu_b * noise_y,
        }
    }

    fn batch(&self, seed: u64, index: usize, len: usize) -> Vec<TrialRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index as u64);
        (0..len).map(|_| self.draw(&mut rng)).collect()
    }

    /// `n` trials, bit-identical for a given seed regardless of thread count.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<TrialRecord> {
        let batches = n.div_ceil(BATCH_SIZE);
        let chunks: Vec<Vec<TrialRecord>> = (0..batches)
            .into_par_iter()
            .map(|b| self.batch(seed, b, BATCH_SIZE.min(n - b * BATCH_SIZE)))
            .collect();
        chunks.into_iter().flatten().collect()
    }
}

/// `n` trials with Gaussian meters on the default grid.
pub fn sample_trials(
    amps: &TransitionAmplitudes,
    weights: &BranchWeights,
    g_a: f64,
    g_b: f64,
    noise: NoiseModel,
    n: usize,
    seed: u64,
) -> Result<Vec<TrialRecord>> {
    if n == 0 {
        return Err(Error::TooFewTrials { needed: 1, got: 0 });
    }
    Ok(TrialEngine::gaussian(amps, weights, g_a, g_b, noise)?.sample(n, seed))
}

/// Running sum with Neumaier compensation.
#[derive(Debug, Clone, Copy, Default)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorOutput {
    /// `(1/n) sum tau_j x_j y_j`.
    pub c_hat: f64,
    /// Sample standard deviation of `tau x y` over `sqrt(n)`.
    pub std_error: f64,
    /// Fraction of postselected trials.
    pub p_hat: f64,
    pub n_trials: usize,
}

impl EstimatorOutput {
    pub fn z_score(&self, reference: f64) -> f64 {
        (self.c_hat - reference) / self.std_error
    }

    /// Per-trial standard deviation of `tau x y`.
    pub fn trial_std(&self) -> f64 {
        self.std_error * (self.n_trials as f64).sqrt()
    }
}

/// The signed cross-moment over every trial, postselected or not.
pub fn estimate_cheshire(trials: &[TrialRecord]) -> Result<EstimatorOutput> {
    let n = trials.len();
    if n < 2 {
        return Err(Error::TooFewTrials { needed: 2, got: n });
    }
    let mut sum = CompensatedSum::default();
    let mut successes = 0usize;
    for t in trials {
        sum.add(t.signed_product());
        if t.tau > 0 {
            successes += 1;
        }
    }
    let mean = sum.value() / n as f64;
    let mut sq = CompensatedSum::default();
    for t in trials {
        let d = t.signed_product() - mean;
        sq.add(d * d);
    }
    let variance = sq.value() / (n - 1) as f64;
    Ok(EstimatorOutput {
        c_hat: mean,
        std_error: (variance / n as f64).sqrt(),
        p_hat: successes as f64 / n as f64,
        n_trials: n,
    })
}

/// Ratio `nu_A nu_B / |C|`; a clean observation needs this well below one.
pub fn noise_to_signal(noise: &NoiseModel, c_value: f64) -> f64 {
    noise.nu_a * noise.nu_b / c_value.abs()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseRow {
    pub nu_a: f64,
    pub nu_b: f64,
    pub c_hat: f64,
    pub std_error: f64,
    /// Trials needed for a [`DETECTION_SIGMAS`] detection of `C != 0`.
    pub n_required: f64,
    pub noise_to_signal: f64,
}

/// Estimator behaviour across readout-noise levels, all from one seed so the
/// underlying pointer draws are shared between rows.
pub fn noise_robustness(
    engine: &TrialEngine,
    levels: &[NoiseModel],
    n: usize,
    seed: u64,
) -> Result<Vec<NoiseRow>> {
    let reference = engine.expected_indicator();
    levels
        .iter()
        .map(|&noise| {
            let trials = engine.clone().with_noise(noise).sample(n, seed);
            let est = estimate_cheshire(&trials)?;
            let sigma = est.trial_std();
            Ok(NoiseRow {
                nu_a: noise.nu_a,
                nu_b: noise.nu_b,
                c_hat: est.c_hat,
                std_error: est.std_error,
                n_required: (DETECTION_SIGMAS * sigma / reference.abs()).powi(2).ceil(),
                noise_to_signal: noise_to_signal(&noise, reference),
            })
        })
        .collect()
}

/// Writes `tau,x,y` rows with 17 significant digits.
pub fn write_trials_csv<W: Write>(writer: W, trials: &[TrialRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["tau", "x", "y"])?;
    for t in trials {
        w.write_record([
            t.tau.to_string(),
            format!("{:.16e}", t.x),
            format!("{:.16e}", t.y),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trials_csv<R: Read>(reader: R) -> Result<Vec<TrialRecord>> {
    let mut r = csv::Reader::from_reader(reader);
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["tau", "x", "y"] {
        return Err(Error::Parse {
            line: 1,
            reason: format!("expected header tau,x,y, found {}", headers.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut out = Vec::new();
    for (k, record) in r.records().enumerate() {
        let record = record?;
        let bad = |what: &str| Error::Parse {
            line: k + 2,
            reason: format!("bad {what}"),
        };
        let tau: i8 = record[0].parse().map_err(|_| bad("tau"))?;
        if tau != 1 && tau != -1 {
            return Err(bad("tau"));
        }
        out.push(TrialRecord {
            tau,
            x: record[1].parse().map_err(|_| bad("x"))?,
            y: record[2].parse().map_err(|_| bad("y"))?,
        });
    }
    Ok(out)
}
