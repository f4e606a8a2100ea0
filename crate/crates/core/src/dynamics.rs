//! Joint photon-meter evolution followed by postselection.
//!
//! After the nondemolition interaction the meters sit in one of three product
//! states, one per photon branch:
//!
//! | branch | photon     | meter A | meter B |
//! |--------|------------|---------|---------|
//! | 0      | left arm   | `A1`    | `B0`    |
//! | 1      | `R,+`      | `A0`    | `B+`    |
//! | 2      | `R,-`      | `A0`    | `B-`    |
//!
//! with `A1 = psi0(x - g_A)`, `B+- = psi0(y -+ g_B)`. A successful
//! postselection leaves `F = l |A1,B0> + r+ |A0,B+> + r- |A0,B->`; a failed
//! one leaves `rho_cl - |F><F|`.

use std::sync::Arc;

use nalgebra::{Matrix3, Matrix4, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::meter::{gaussian_overlap0, GridMeter, MeterShape, StateMatrices, Weight};
use crate::qsystem::{PhotonDensity, PhotonEffect, PhotonKet, TransitionAmplitudes, NORM_TOLERANCE};

pub const PROBABILITY_TOLERANCE: f64 = 1e-10;
pub const POSITIVITY_TOLERANCE: f64 = 1e-10;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Meter-A and meter-B state index for each branch.
pub const BRANCHES: [(usize, usize); 3] = [(0, 0), (1, 1), (1, 2)];

/// Branch of each photon basis vector `|L,+>, |L,->, |R,+>, |R,->`.
const PHOTON_BRANCH: [usize; 4] = [0, 0, 1, 2];

/// Preparation weights on `|L,sigma>, |R,+>, |R,->`.
///
/// For a general preparation `a = |pi_L psi|`; the left polarization
/// `sigma` absorbs the phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchWeights {
    pub a: Complex64,
    pub b: Complex64,
    pub c: Complex64,
}

impl BranchWeights {
    pub fn new(a: Complex64, b: Complex64, c: Complex64) -> Result<Self> {
        let total = a.norm_sqr() + b.norm_sqr() + c.norm_sqr();
        if (total - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::validation(
                "weights",
                format!("|a|^2 + |b|^2 + |c|^2 = {total}, expected 1"),
            ));
        }
        Ok(Self { a, b, c })
    }

    pub fn from_prep(prep: &PhotonKet) -> Self {
        let psi = prep.amplitudes();
        let left = (psi[0].norm_sqr() + psi[1].norm_sqr()).sqrt();
        Self {
            a: Complex64::new(left, 0.0),
            b: psi[2],
            c: psi[3],
        }
    }

    /// Diagonal of the classical mixture in the branch basis.
    pub fn populations(&self) -> [f64; 3] {
        [self.a.norm_sqr(), self.b.norm_sqr(), self.c.norm_sqr()]
    }
}

fn check_coupling(field: &'static str, g: f64) -> Result<()> {
    if !(g.is_finite() && g >= 0.0) {
        return Err(Error::validation(field, format!("coupling {g} must be finite and >= 0")));
    }
    Ok(())
}

/// The two meters and their couplings.
#[derive(Debug, Clone, PartialEq)]
pub struct MeterPair {
    pub meter_a: MeterShape,
    pub g_a: f64,
    pub meter_b: MeterShape,
    pub g_b: f64,
}

impl MeterPair {
    pub fn new(meter_a: MeterShape, g_a: f64, meter_b: MeterShape, g_b: f64) -> Result<Self> {
        check_coupling("g_a", g_a)?;
        check_coupling("g_b", g_b)?;
        Ok(Self {
            meter_a,
            g_a,
            meter_b,
            g_b,
        })
    }

    pub fn gaussian(g_a: f64, g_b: f64) -> Result<Self> {
        Self::new(MeterShape::Gaussian, g_a, MeterShape::Gaussian, g_b)
    }

    /// Pointer shifts of `A1, A0`.
    pub fn a_shifts(&self) -> [f64; 2] {
        [self.g_a, 0.0]
    }

    /// Pointer shifts of `B0, B+, B-`.
    pub fn b_shifts(&self) -> [f64; 3] {
        [0.0, self.g_b, -self.g_b]
    }

    /// Meter-state matrix elements for both weights.
    pub fn branch_matrices(&self) -> Result<BranchMatrices> {
        Ok(BranchMatrices {
            a: self.meter_a.state_matrices(&self.a_shifts())?,
            b: self.meter_b.state_matrices(&self.b_shifts())?,
        })
    }

    /// `<psi_i| X_A X_B |psi_j>` between the branch product states.
    pub fn branch_elements(&self, wx: Weight, wy: Weight) -> Result<[[Complex64; 3]; 3]> {
        Ok(self.branch_matrices()?.elements(wx, wy))
    }
}

/// Matrix elements among `A1, A0` and among `B0, B+, B-`.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchMatrices {
    pub a: StateMatrices,
    pub b: StateMatrices,
}

impl BranchMatrices {
    pub fn elements(&self, wx: Weight, wy: Weight) -> [[Complex64; 3]; 3] {
        let (ma, mb) = (self.a.get(wx), self.b.get(wy));
        let mut out = [[ZERO; 3]; 3];
        for (i, &(ai, bi)) in BRANCHES.iter().enumerate() {
            for (j, &(aj, bj)) in BRANCHES.iter().enumerate() {
                out[i][j] = ma[ai][aj] * mb[bi][bj];
            }
        }
        out
    }
}

/// Success-branch meter state `F` for given amplitudes and meters.
#[derive(Debug, Clone, PartialEq)]
pub struct JointMeterState {
    pub amps: TransitionAmplitudes,
    pub meters: MeterPair,
}

impl JointMeterState {
    pub fn new(amps: TransitionAmplitudes, meters: MeterPair) -> Self {
        Self { amps, meters }
    }

    pub fn gaussian(amps: TransitionAmplitudes, g_a: f64, g_b: f64) -> Result<Self> {
        Ok(Self::new(amps, MeterPair::gaussian(g_a, g_b)?))
    }

    /// `<F| X_A X_B |F>`.
    pub fn moment(&self, wx: Weight, wy: Weight) -> Result<f64> {
        let elements = self.meters.branch_elements(wx, wy)?;
        let c = self.amps.as_array();
        let mut sum = ZERO;
        for i in 0..3 {
            for j in 0..3 {
                sum += c[i].conj() * c[j] * elements[i][j];
            }
        }
        Ok(sum.re)
    }

    /// `<F|F>`.
    pub fn success_probability(&self) -> Result<f64> {
        check_probability(self.moment(Weight::One, Weight::One)?)
    }
}

fn check_probability(p: f64) -> Result<f64> {
    if !(-PROBABILITY_TOLERANCE..=1.0 + PROBABILITY_TOLERANCE).contains(&p) {
        return Err(Error::Consistency(format!(
            "success probability {p} outside [0, 1]"
        )));
    }
    Ok(p.clamp(0.0, 1.0))
}

/// Closed form of `<F|F>` for Gaussian meters:
/// `|l|^2 + |r+|^2 + |r-|^2 + 2 w_A w_B Re[l*(r+ + r-)] + 2 exp(-g_B^2/2) Re[r+* r-]`.
pub fn success_probability(amps: &TransitionAmplitudes, g_a: f64, g_b: f64) -> Result<f64> {
    check_coupling("g_a", g_a)?;
    check_coupling("g_b", g_b)?;
    let TransitionAmplitudes { l, r_plus, r_minus } = *amps;
    let w = gaussian_overlap0(g_a) * gaussian_overlap0(g_b);
    let p = l.norm_sqr()
        + r_plus.norm_sqr()
        + r_minus.norm_sqr()
        + 2.0 * w * (l.conj() * (r_plus + r_minus)).re
        + 2.0 * gaussian_overlap0(2.0 * g_b) * (r_plus.conj() * r_minus).re;
    check_probability(p)
}

/// `Tr(X_A X_B rho_cl)` for the classical mixture of branch products.
pub fn classical_mixture_moment(
    weights: &BranchWeights,
    meters: &MeterPair,
    wx: Weight,
    wy: Weight,
) -> Result<f64> {
    let elements = meters.branch_elements(wx, wy)?;
    Ok(weights
        .populations()
        .iter()
        .enumerate()
        .map(|(i, p)| p * elements[i][i].re)
        .sum())
}

/// `Tr[(E (x) X_A X_B) U (rho (x) |A0,B0><A0,B0|) U^dagger]` for a mixed
/// preparation and postselection effect.
pub fn mixed_moment(
    effect: &PhotonEffect,
    rho: &PhotonDensity,
    meters: &MeterPair,
    wx: Weight,
    wy: Weight,
) -> Result<f64> {
    Ok(mixed_moment_from(effect, rho, &meters.branch_elements(wx, wy)?))
}

/// [`mixed_moment`] from precomputed branch elements.
pub fn mixed_moment_from(effect: &PhotonEffect, rho: &PhotonDensity, elements: &[[Complex64; 3]; 3]) -> f64 {
    let (e, r): (&Matrix4<Complex64>, &Matrix4<Complex64>) = (effect.matrix(), rho.matrix());
    let mut sum = ZERO;
    for k in 0..4 {
        for kp in 0..4 {
            sum += r[(k, kp)] * e[(kp, k)] * elements[PHOTON_BRANCH[kp]][PHOTON_BRANCH[k]];
        }
    }
    sum.re
}

/// Success probability for mixed preparation and postselection.
pub fn success_probability_mixed(
    effect: &PhotonEffect,
    rho: &PhotonDensity,
    meters: &MeterPair,
) -> Result<f64> {
    check_probability(mixed_moment(effect, rho, meters, Weight::One, Weight::One)?)
}

/// The five shifted meter states sampled on their lattices.
#[derive(Debug, Clone)]
pub struct SampledBranches {
    pub meter_a: GridMeter,
    pub meter_b: GridMeter,
    /// `A1, A0`
    pub a_states: [Vec<Complex64>; 2],
    /// `B0, B+, B-`
    pub b_states: [Vec<Complex64>; 3],
}

impl SampledBranches {
    pub fn new(meter_a: &GridMeter, g_a: f64, meter_b: &GridMeter, g_b: f64) -> Result<Self> {
        check_coupling("g_a", g_a)?;
        check_coupling("g_b", g_b)?;
        let a_states = [meter_a.shifted(g_a)?, meter_a.shifted(0.0)?];
        let b_states = [
            meter_b.shifted(0.0)?,
            meter_b.shifted(g_b)?,
            meter_b.shifted(-g_b)?,
        ];
        Ok(Self {
            meter_a: meter_a.clone(),
            meter_b: meter_b.clone(),
            a_states,
            b_states,
        })
    }

    #[inline]
    pub fn branch_value(&self, branch: usize, ix: usize, iy: usize) -> Complex64 {
        let (a, b) = BRANCHES[branch];
        self.a_states[a][ix] * self.b_states[b][iy]
    }
}

/// Pointer-diagonal density `p(x, y) = sum_ik K_ik psi_i(x,y) psi_k*(x,y)`
/// of a (possibly unnormalized) meter state, with `K` a 3x3 Hermitian
/// kernel in the branch basis.
#[derive(Debug, Clone)]
pub struct PointerDensity {
    branches: Arc<SampledBranches>,
    kernel: [[Complex64; 3]; 3],
}

/// Failed-postselection meter density `rho_cl - |F><F|` on the pointer grid.
pub type FailureBranch = PointerDensity;

impl PointerDensity {
    pub fn new(branches: Arc<SampledBranches>, kernel: [[Complex64; 3]; 3]) -> Self {
        Self { branches, kernel }
    }

    /// `|F(x, y)|^2`.
    pub fn success(branches: Arc<SampledBranches>, amps: &TransitionAmplitudes) -> Self {
        let c = amps.as_array();
        let mut kernel = [[ZERO; 3]; 3];
        for i in 0..3 {
            for k in 0..3 {
                kernel[i][k] = c[i] * c[k].conj();
            }
        }
        Self::new(branches, kernel)
    }

    /// `diag rho_cl - |F(x, y)|^2`, checked for pointwise positivity.
    pub fn failure(
        branches: Arc<SampledBranches>,
        amps: &TransitionAmplitudes,
        weights: &BranchWeights,
    ) -> Result<Self> {
        let mut density = Self::success(branches, amps);
        for row in density.kernel.iter_mut() {
            for v in row.iter_mut() {
                *v = -*v;
            }
        }
        for (i, p) in weights.populations().into_iter().enumerate() {
            density.kernel[i][i] += p;
        }
        // a positive semidefinite kernel implies p >= 0 everywhere; scan only otherwise
        if density.kernel_min_eigenvalue() < -POSITIVITY_TOLERANCE {
            let (min, x, y) = density.min_value();
            if min < -POSITIVITY_TOLERANCE {
                return Err(Error::PositivityViolation { min, x, y });
            }
        }
        Ok(density)
    }

    pub fn branches(&self) -> &SampledBranches {
        &self.branches
    }

    pub fn kernel(&self) -> &[[Complex64; 3]; 3] {
        &self.kernel
    }

    fn kernel_min_eigenvalue(&self) -> f64 {
        let k = Matrix3::from_fn(|i, j| self.kernel[i][j]);
        let sym = (k + k.adjoint()).scale(0.5);
        SymmetricEigen::new(sym).eigenvalues.min()
    }

    #[inline]
    pub fn value(&self, ix: usize, iy: usize) -> f64 {
        let psi = [
            self.branches.branch_value(0, ix, iy),
            self.branches.branch_value(1, ix, iy),
            self.branches.branch_value(2, ix, iy),
        ];
        let mut sum = ZERO;
        for i in 0..3 {
            for k in 0..3 {
                sum += self.kernel[i][k] * psi[i] * psi[k].conj();
            }
        }
        sum.re
    }

    /// `integral w_x(x) w_y(y) p(x, y)` using the product structure of the
    /// branch states: one 1-D quadrature per meter-state pair.
    pub fn moment(&self, wx: Weight, wy: Weight) -> f64 {
        let b = &*self.branches;
        let mut sum = ZERO;
        for (i, &(ai, bi)) in BRANCHES.iter().enumerate() {
            for (k, &(ak, bk)) in BRANCHES.iter().enumerate() {
                // integrate_pair conjugates its first argument
                let ia = b.meter_a.integrate_pair(&b.a_states[ak], &b.a_states[ai], wx);
                let ib = b.meter_b.integrate_pair(&b.b_states[bk], &b.b_states[bi], wy);
                sum += self.kernel[i][k] * ia * ib;
            }
        }
        sum.re
    }

    pub fn total(&self) -> f64 {
        self.moment(Weight::One, Weight::One)
    }

    /// Brute-force double sum of `w_x w_y p` over every grid node.
    pub fn direct_moment(&self, wx: Weight, wy: Weight) -> f64 {
        let ga = *self.branches.meter_a.grid();
        let gb = *self.branches.meter_b.grid();
        let rows: Vec<f64> = (0..gb.points())
            .into_par_iter()
            .map(|iy| {
                let y = wy.at(gb.x(iy));
                (0..ga.points())
                    .map(|ix| wx.at(ga.x(ix)) * self.value(ix, iy))
                    .sum::<f64>()
                    * y
            })
            .collect();
        rows.iter().sum::<f64>() * ga.dx() * gb.dx()
    }

    /// Minimum of the density over the grid and where it occurs.
    pub fn min_value(&self) -> (f64, f64, f64) {
        let ga = *self.branches.meter_a.grid();
        let gb = *self.branches.meter_b.grid();
        (0..gb.points())
            .into_par_iter()
            .map(|iy| {
                (0..ga.points())
                    .map(|ix| (self.value(ix, iy), ga.x(ix), gb.x(iy)))
                    .fold((f64::INFINITY, 0.0, 0.0), |a, b| if b.0 < a.0 { b } else { a })
            })
            .reduce(
                || (f64::INFINITY, 0.0, 0.0),
                |a, b| if b.0 < a.0 { b } else { a },
            )
    }
}

/// Failure-branch density for Gaussian meters sampled on `grid`.
pub fn failure_density(
    amps: &TransitionAmplitudes,
    weights: &BranchWeights,
    g_a: f64,
    g_b: f64,
    grid: crate::meter::Grid,
) -> Result<FailureBranch> {
    let meter = GridMeter::gaussian(grid)?;
    let branches = Arc::new(SampledBranches::new(&meter, g_a, &meter, g_b)?);
    PointerDensity::failure(branches, amps, weights)
}
