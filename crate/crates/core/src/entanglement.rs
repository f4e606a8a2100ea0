//! Partial-transpose test on the postselected meter state.
//!
//! `F` lives in `span{A0, A1} (x) span{B0, B+, B-}`, at most a 2x3 system,
//! where positivity of the partial transpose is necessary and sufficient
//! for separability. The spans are orthonormalized from the meter Gram
//! matrices, and vectors that add no new direction (e.g. every shifted
//! state at `g = 0`) are dropped.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::dynamics::{MeterPair, BRANCHES};
use crate::error::{Error, Result};
use crate::indicator::PROBABILITY_EPSILON;
use crate::meter::Weight;
use crate::qsystem::TransitionAmplitudes;

/// Residual squared norm below which a Gram-Schmidt vector is discarded.
pub const DEGENERACY_TOLERANCE: f64 = 1e-14;
/// Partial-transpose eigenvalues above `-NEGATIVITY_TOLERANCE` count as non-negative.
pub const NEGATIVITY_TOLERANCE: f64 = 1e-14;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Coordinates of a set of vectors in an orthonormal basis of their span,
/// computed from the Gram matrix `gram[i][j] = <v_i|v_j>` alone.
///
/// Returns `coords[j][alpha] = <e_alpha|v_j>`, all rows of equal length.
pub fn gram_schmidt_coordinates(gram: &[Vec<Complex64>]) -> Vec<Vec<Complex64>> {
    let n = gram.len();
    // basis[alpha][k]: coefficient of v_k in e_alpha
    let mut basis: Vec<Vec<Complex64>> = Vec::new();
    let mut coords: Vec<Vec<Complex64>> = Vec::with_capacity(n);
    for j in 0..n {
        let proj: Vec<Complex64> = basis
            .iter()
            .map(|e| (0..n).map(|k| e[k].conj() * gram[k][j]).sum())
            .collect();
        let residual_sq = gram[j][j].re - proj.iter().map(|p| p.norm_sqr()).sum::<f64>();
        let mut row = proj.clone();
        if residual_sq > DEGENERACY_TOLERANCE {
            let norm = residual_sq.sqrt();
            let mut e = vec![ZERO; n];
            e[j] = Complex64::new(1.0 / norm, 0.0);
            for (alpha, p) in proj.iter().enumerate() {
                for k in 0..n {
                    e[k] -= basis[alpha][k] * p / norm;
                }
            }
            basis.push(e);
            row.push(Complex64::new(norm, 0.0));
        }
        coords.push(row);
    }
    let dim = basis.len();
    for row in coords.iter_mut() {
        row.resize(dim, ZERO);
    }
    coords
}

/// Normalized success-branch state in an orthonormal product basis.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedMeterState {
    pub dim_a: usize,
    pub dim_b: usize,
    /// Row-major `dim_a x dim_b` coefficients of `F / sqrt(P)`.
    pub coefficients: Vec<Complex64>,
    /// `<F|F>` before normalization.
    pub p_success: f64,
}

impl EmbeddedMeterState {
    pub fn density(&self) -> DMatrix<Complex64> {
        let v = DMatrix::from_column_slice(self.coefficients.len(), 1, &self.coefficients);
        &v * v.adjoint()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.coefficients.iter().map(|c| c.norm_sqr()).sum()
    }
}

/// Embeds `F` using the default ordering of the shifted meter states.
pub fn embed(amps: &TransitionAmplitudes, meters: &MeterPair) -> Result<EmbeddedMeterState> {
    embed_with_order(amps, meters, [0, 1], [0, 1, 2])
}

pub fn embed_gaussian(amps: &TransitionAmplitudes, g_a: f64, g_b: f64) -> Result<EmbeddedMeterState> {
    embed(amps, &MeterPair::gaussian(g_a, g_b)?)
}

/// Embeds `F`, orthonormalizing `{A1, A0}` and `{B0, B+, B-}` in the given
/// orders (permutations of state indices).
pub fn embed_with_order(
    amps: &TransitionAmplitudes,
    meters: &MeterPair,
    order_a: [usize; 2],
    order_b: [usize; 3],
) -> Result<EmbeddedMeterState> {
    let gram_a = meters.meter_a.state_matrices(&meters.a_shifts())?;
    let gram_b = meters.meter_b.state_matrices(&meters.b_shifts())?;
    let permuted = |g: &[Vec<Complex64>], order: &[usize]| -> Vec<Vec<Complex64>> {
        order
            .iter()
            .map(|&i| order.iter().map(|&j| g[i][j]).collect())
            .collect()
    };
    let coords_a = gram_schmidt_coordinates(&permuted(gram_a.get(Weight::One), &order_a));
    let coords_b = gram_schmidt_coordinates(&permuted(gram_b.get(Weight::One), &order_b));
    let slot = |order: &[usize], state: usize| order.iter().position(|&s| s == state).unwrap();

    let dim_a = coords_a[0].len();
    let dim_b = coords_b[0].len();
    let mut coefficients = vec![ZERO; dim_a * dim_b];
    for (c, &(a, b)) in amps.as_array().iter().zip(BRANCHES.iter()) {
        let va = &coords_a[slot(&order_a, a)];
        let vb = &coords_b[slot(&order_b, b)];
        for alpha in 0..dim_a {
            for beta in 0..dim_b {
                coefficients[alpha * dim_b + beta] += c * va[alpha] * vb[beta];
            }
        }
    }
    let p_success: f64 = coefficients.iter().map(|c| c.norm_sqr()).sum();
    if p_success <= PROBABILITY_EPSILON {
        return Err(Error::OrthogonalPostselection {
            overlap: p_success.sqrt(),
        });
    }
    let scale = 1.0 / p_success.sqrt();
    for c in coefficients.iter_mut() {
        *c *= scale;
    }
    Ok(EmbeddedMeterState {
        dim_a,
        dim_b,
        coefficients,
        p_success,
    })
}

/// Transpose of the second factor of a `dim_a*dim_b` square matrix.
pub fn partial_transpose_b(rho: &DMatrix<Complex64>, dim_a: usize, dim_b: usize) -> DMatrix<Complex64> {
    let n = dim_a * dim_b;
    assert_eq!(rho.nrows(), n);
    DMatrix::from_fn(n, n, |row, col| {
        let (i, j) = (row / dim_b, row % dim_b);
        let (k, l) = (col / dim_b, col % dim_b);
        rho[(i * dim_b + l, k * dim_b + j)]
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NegativityReport {
    /// Sum of the magnitudes of the negative partial-transpose eigenvalues.
    pub negativity: f64,
    pub min_pt_eigenvalue: f64,
    pub dim_a: usize,
    pub dim_b: usize,
}

impl NegativityReport {
    /// For `dim_a * dim_b <= 6` a vanishing negativity means the state is separable.
    pub fn ppt_is_exact(&self) -> bool {
        self.dim_a * self.dim_b <= 6
    }

    pub fn entangled(&self) -> bool {
        self.negativity > 0.0
    }
}

pub fn negativity(state: &EmbeddedMeterState) -> NegativityReport {
    let pt = partial_transpose_b(&state.density(), state.dim_a, state.dim_b);
    let hermitian = (&pt + pt.adjoint()).scale(0.5);
    let eigenvalues = hermitian.symmetric_eigenvalues();
    let min_pt_eigenvalue = eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let negativity = eigenvalues
        .iter()
        .filter(|&&ev| ev < -NEGATIVITY_TOLERANCE)
        .fold(0.0, |acc, ev| acc - ev);
    NegativityReport {
        negativity,
        min_pt_eigenvalue,
        dim_a: state.dim_a,
        dim_b: state.dim_b,
    }
}
