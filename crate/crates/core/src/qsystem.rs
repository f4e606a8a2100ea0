//! The photon's four-dimensional path/polarization space.
//!
//! Basis ordering is `|L,+>, |L,->, |R,+>, |R,->`. The left-arm meter only
//! registers presence, so the left arm is addressed through the rank-2
//! projector `pi_L`; the right-arm meter resolves polarization through the
//! rank-1 projectors `pi_R+` and `pi_R-`.

use nalgebra::{Matrix4, SymmetricEigen, Vector4};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub const NORM_TOLERANCE: f64 = 1e-12;
pub const HERMITIAN_TOLERANCE: f64 = 1e-12;
pub const EIGENVALUE_TOLERANCE: f64 = 1e-10;
/// Smallest `|l + r+ + r-|` for which weak values are reported.
pub const WEAK_VALUE_EPSILON: f64 = 1e-12;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Arm {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarization {
    Plus,
    Minus,
}

pub const fn basis_index(arm: Arm, polarization: Polarization) -> usize {
    let a = match arm {
        Arm::Left => 0,
        Arm::Right => 2,
    };
    let p = match polarization {
        Polarization::Plus => 0,
        Polarization::Minus => 1,
    };
    a + p
}

/// A normalized pure photon state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhotonKet {
    amplitudes: Vector4<Complex64>,
}

impl PhotonKet {
    /// Validates `sum |a_k|^2 = 1` within [`NORM_TOLERANCE`].
    pub fn new(amplitudes: [Complex64; 4]) -> Result<Self> {
        if amplitudes.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::validation("ket", "non-finite amplitude"));
        }
        let norm_sq: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (norm_sq - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::validation(
                "ket",
                format!("squared norm is {norm_sq}, expected 1"),
            ));
        }
        Ok(Self {
            amplitudes: Vector4::from(amplitudes),
        })
    }

    /// Rescales arbitrary amplitudes to unit norm.
    pub fn normalized(amplitudes: [Complex64; 4]) -> Result<Self> {
        let norm = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::validation("ket", "zero or non-finite norm"));
        }
        Self::new(amplitudes.map(|a| a / norm))
    }

    pub fn from_real(amplitudes: [f64; 4]) -> Result<Self> {
        Self::normalized(amplitudes.map(|a| Complex64::new(a, 0.0)))
    }

    pub fn basis(arm: Arm, polarization: Polarization) -> Self {
        let mut amplitudes = [ZERO; 4];
        amplitudes[basis_index(arm, polarization)] = ONE;
        Self {
            amplitudes: Vector4::from(amplitudes),
        }
    }

    pub fn amplitudes(&self) -> [Complex64; 4] {
        [
            self.amplitudes[0],
            self.amplitudes[1],
            self.amplitudes[2],
            self.amplitudes[3],
        ]
    }

    pub fn as_vector(&self) -> &Vector4<Complex64> {
        &self.amplitudes
    }

    /// `<self|other>`
    pub fn inner(&self, other: &PhotonKet) -> Complex64 {
        self.amplitudes.dotc(&other.amplitudes)
    }

    pub fn outer(&self) -> Matrix4<Complex64> {
        self.amplitudes * self.amplitudes.adjoint()
    }

    pub fn density(&self) -> PhotonDensity {
        PhotonDensity {
            matrix: self.outer(),
        }
    }

    pub fn effect(&self) -> PhotonEffect {
        PhotonEffect {
            matrix: self.outer(),
        }
    }
}

fn check_hermitian(field: &'static str, m: &Matrix4<Complex64>) -> Result<()> {
    if m.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
        return Err(Error::validation(field, "non-finite entry"));
    }
    let deviation = (m - m.adjoint()).iter().map(|a| a.norm()).fold(0.0, f64::max);
    if deviation > HERMITIAN_TOLERANCE {
        return Err(Error::validation(
            field,
            format!("not Hermitian (max |M - M^dagger| = {deviation:e})"),
        ));
    }
    Ok(())
}

fn hermitian_eigenvalues(m: &Matrix4<Complex64>) -> [f64; 4] {
    let sym = (m + m.adjoint()).scale(0.5);
    let eig = SymmetricEigen::new(sym).eigenvalues;
    [eig[0], eig[1], eig[2], eig[3]]
}

/// Preparation density matrix: Hermitian, unit trace, positive semidefinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhotonDensity {
    matrix: Matrix4<Complex64>,
}

impl PhotonDensity {
    pub fn new(matrix: Matrix4<Complex64>) -> Result<Self> {
        check_hermitian("density", &matrix)?;
        let trace = matrix.trace();
        if (trace.re - 1.0).abs() > HERMITIAN_TOLERANCE {
            return Err(Error::validation(
                "density",
                format!("trace is {}, expected 1", trace.re),
            ));
        }
        let min = hermitian_eigenvalues(&matrix)
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        if min < -EIGENVALUE_TOLERANCE {
            return Err(Error::validation(
                "density",
                format!("negative eigenvalue {min:e}"),
            ));
        }
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &Matrix4<Complex64> {
        &self.matrix
    }
}

/// Postselection effect `0 <= E <= 1`. A projector `|phi><phi|` is the
/// sharp special case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhotonEffect {
    matrix: Matrix4<Complex64>,
}

impl PhotonEffect {
    pub fn new(matrix: Matrix4<Complex64>) -> Result<Self> {
        check_hermitian("effect", &matrix)?;
        for ev in hermitian_eigenvalues(&matrix) {
            if !(-EIGENVALUE_TOLERANCE..=1.0 + EIGENVALUE_TOLERANCE).contains(&ev) {
                return Err(Error::validation(
                    "effect",
                    format!("eigenvalue {ev} outside [0, 1]"),
                ));
            }
        }
        Ok(Self { matrix })
    }

    /// Entries in row-major order.
    pub fn from_rows(values: &[Complex64; 16]) -> Result<Self> {
        Self::new(Matrix4::from_row_slice(values))
    }

    pub fn matrix(&self) -> &Matrix4<Complex64> {
        &self.matrix
    }
}

impl From<PhotonDensity> for PhotonEffect {
    fn from(rho: PhotonDensity) -> Self {
        // eigenvalues of a density matrix already lie in [0, 1]
        PhotonEffect { matrix: rho.matrix }
    }
}

/// Path and polarization operators.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalOperators {
    pub pi_l: Matrix4<Complex64>,
    pub pi_r_plus: Matrix4<Complex64>,
    pub pi_r_minus: Matrix4<Complex64>,
    pub sigma_r: Matrix4<Complex64>,
}

impl CanonicalOperators {
    pub fn new() -> Self {
        let diag = |d: [f64; 4]| {
            Matrix4::from_diagonal(&Vector4::from(d.map(|v| Complex64::new(v, 0.0))))
        };
        Self {
            pi_l: diag([1.0, 1.0, 0.0, 0.0]),
            pi_r_plus: diag([0.0, 0.0, 1.0, 0.0]),
            pi_r_minus: diag([0.0, 0.0, 0.0, 1.0]),
            sigma_r: diag([0.0, 0.0, 1.0, -1.0]),
        }
    }
}

impl Default for CanonicalOperators {
    fn default() -> Self {
        Self::new()
    }
}

/// `l = <phi|pi_L|psi>`, `r+- = <phi|pi_R+-|psi>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionAmplitudes {
    pub l: Complex64,
    pub r_plus: Complex64,
    pub r_minus: Complex64,
}

impl TransitionAmplitudes {
    pub fn new(l: Complex64, r_plus: Complex64, r_minus: Complex64) -> Self {
        Self { l, r_plus, r_minus }
    }

    pub fn from_real(l: f64, r_plus: f64, r_minus: f64) -> Self {
        Self::new(
            Complex64::new(l, 0.0),
            Complex64::new(r_plus, 0.0),
            Complex64::new(r_minus, 0.0),
        )
    }

    /// `l + r+ + r- = <phi|psi>`.
    pub fn total(&self) -> Complex64 {
        self.l + self.r_plus + self.r_minus
    }

    /// Coefficients of `|A1,B0>, |A0,B+>, |A0,B->` in the success branch.
    pub fn as_array(&self) -> [Complex64; 3] {
        [self.l, self.r_plus, self.r_minus]
    }

    /// `(r+ - r-) l*`, the pure-state value of `Tr(E sigma_R rho pi_L)`.
    pub fn pure_trace_term(&self) -> Complex64 {
        (self.r_plus - self.r_minus) * self.l.conj()
    }
}

pub fn transition_amplitudes(prep: &PhotonKet, post: &PhotonKet) -> TransitionAmplitudes {
    let psi = prep.amplitudes();
    let phi = post.amplitudes();
    TransitionAmplitudes {
        l: phi[0].conj() * psi[0] + phi[1].conj() * psi[1],
        r_plus: phi[2].conj() * psi[2],
        r_minus: phi[3].conj() * psi[3],
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeakValues {
    /// Weak value of `pi_L`.
    pub l_w: Complex64,
    /// Weak value of `sigma_R`.
    pub sigma_w: Complex64,
}

pub fn weak_values(amps: &TransitionAmplitudes) -> Result<WeakValues> {
    weak_values_with_epsilon(amps, WEAK_VALUE_EPSILON)
}

pub fn weak_values_with_epsilon(amps: &TransitionAmplitudes, epsilon: f64) -> Result<WeakValues> {
    let total = amps.total();
    if total.norm() <= epsilon {
        return Err(Error::OrthogonalPostselection {
            overlap: total.norm(),
        });
    }
    Ok(WeakValues {
        l_w: amps.l / total,
        sigma_w: (amps.r_plus - amps.r_minus) / total,
    })
}

/// `Tr(E sigma_R rho pi_L)`.
pub fn trace_term(effect: &PhotonEffect, rho: &PhotonDensity) -> Complex64 {
    let ops = CanonicalOperators::new();
    (effect.matrix() * ops.sigma_r * rho.matrix() * ops.pi_l).trace()
}

/// Preparation and postselection whose weak values of `pi_L` and `sigma_R`
/// take prescribed real values.
///
/// The preparation is the uniform superposition of `|L,+>, |R,+>, |R,->`;
/// the postselection is chosen so that `l : r+ : r-` equals
/// `L_w : (1 - L_w + Sigma_w)/2 : (1 - L_w - Sigma_w)/2`.
pub fn states_with_weak_values(l_w: f64, sigma_w: f64) -> Result<(PhotonKet, PhotonKet)> {
    let prep = PhotonKet::from_real([1.0, 0.0, 1.0, 1.0])?;
    let r_plus = 0.5 * (1.0 - l_w + sigma_w);
    let r_minus = 0.5 * (1.0 - l_w - sigma_w);
    // l = phi_0^* psi_0 etc. with psi real and equal, so phi is proportional to the targets
    let post = PhotonKet::from_real([l_w, 0.0, r_plus, r_minus])?;
    Ok((prep, post))
}
