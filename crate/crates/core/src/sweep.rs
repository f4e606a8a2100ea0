//! Indicator, success probability and negativity along `g_A = g_B = g`.

use rayon::prelude::*;

use crate::dynamics::{mixed_moment_from, MeterPair};
use crate::entanglement::{embed, negativity};
use crate::error::{Error, Result};
use crate::indicator::cheshire_analytic;
use crate::meter::{Grid, MeterShape, Weight};
use crate::qsystem::{transition_amplitudes, PhotonDensity, PhotonEffect, PhotonKet, TransitionAmplitudes};

/// Preparation and postselection, either as kets or as operators.
#[derive(Debug, Clone, PartialEq)]
pub enum PhotonSystem {
    Pure { prep: PhotonKet, post: PhotonKet },
    Mixed { effect: PhotonEffect, rho: PhotonDensity },
}

impl PhotonSystem {
    pub fn effect(&self) -> PhotonEffect {
        match self {
            PhotonSystem::Pure { post, .. } => post.effect(),
            PhotonSystem::Mixed { effect, .. } => *effect,
        }
    }

    pub fn rho(&self) -> PhotonDensity {
        match self {
            PhotonSystem::Pure { prep, .. } => prep.density(),
            PhotonSystem::Mixed { rho, .. } => *rho,
        }
    }

    /// Transition amplitudes; only defined for pure states.
    pub fn amplitudes(&self) -> Option<TransitionAmplitudes> {
        match self {
            PhotonSystem::Pure { prep, post } => Some(transition_amplitudes(prep, post)),
            PhotonSystem::Mixed { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub g_a: f64,
    pub g_b: f64,
    /// Closed form for Gaussian meters.
    pub c_analytic: f64,
    /// `2 <x y>` by quadrature with the sampled meter.
    pub c_grid: f64,
    /// Success probability by quadrature.
    pub p_success: f64,
    /// NaN for mixed systems, where the success state is not a ket.
    pub negativity: f64,
}

/// `steps` evenly spaced couplings from `g_min` to `g_max` inclusive.
pub fn coupling_range(g_min: f64, g_max: f64, steps: usize) -> Result<Vec<f64>> {
    if !(g_min.is_finite() && g_max.is_finite() && 0.0 <= g_min && g_min <= g_max) {
        return Err(Error::validation(
            "sweep range",
            format!("need 0 <= g_min <= g_max, got [{g_min}, {g_max}]"),
        ));
    }
    if steps < 2 {
        return Err(Error::validation("steps", format!("need at least 2, got {steps}")));
    }
    let h = (g_max - g_min) / (steps - 1) as f64;
    Ok((0..steps).map(|k| g_min + h * k as f64).collect())
}

/// One row at `g_A = g_B = g`.
pub fn sweep_point(system: &PhotonSystem, meter: &MeterShape, grid: Grid, g: f64) -> Result<SweepRow> {
    let sampled = MeterShape::Grid(meter.to_grid(grid)?);
    row(system, meter, &sampled, g)
}

/// `meter` gives the negativity, `sampled` (its lattice version) the quadratures.
fn row(system: &PhotonSystem, meter: &MeterShape, sampled: &MeterShape, g: f64) -> Result<SweepRow> {
    let effect = system.effect();
    let rho = system.rho();
    let c_analytic = cheshire_analytic(&effect, &rho, g, g)?.c_value;
    let matrices = MeterPair::new(sampled.clone(), g, sampled.clone(), g)?.branch_matrices()?;
    let position = matrices.elements(Weight::Position, Weight::Position);
    let c_grid = 2.0 * mixed_moment_from(&effect, &rho, &position);
    let p_success = mixed_moment_from(&effect, &rho, &matrices.elements(Weight::One, Weight::One));
    let negativity = match system.amplitudes() {
        Some(amps) => {
            let pair = MeterPair::new(meter.clone(), g, meter.clone(), g)?;
            negativity(&embed(&amps, &pair)?).negativity
        }
        None => f64::NAN,
    };
    Ok(SweepRow {
        g_a: g,
        g_b: g,
        c_analytic,
        c_grid,
        p_success,
        negativity,
    })
}

/// Rows in increasing `g`, computed in parallel.
pub fn diagonal_sweep(
    system: &PhotonSystem,
    meter: &MeterShape,
    grid: Grid,
    g_min: f64,
    g_max: f64,
    steps: usize,
) -> Result<Vec<SweepRow>> {
    let sampled = MeterShape::Grid(meter.to_grid(grid)?);
    coupling_range(g_min, g_max, steps)?
        .into_par_iter()
        .map(|g| row(system, meter, &sampled, g))
        .collect()
}

/// Index of the row with the largest `|c_grid|`; the first one on ties.
pub fn locate_maximum(rows: &[SweepRow]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (k, row) in rows.iter().enumerate() {
        match best {
            Some(b) if rows[b].c_grid.abs() >= row.c_grid.abs() => {}
            _ => best = Some(k),
        }
    }
    best
}
