//! The signed cross-moment indicator and the moments it is built from.
//!
//! For pointer observables `X_A, X_B` the postselected moment
//! `m = <F|X_A X_B|F>` splits into a classical part (diagonal branch terms),
//! an entanglement part (interference between `|A1,B0>` and `|A0,B+->`) and
//! a local-interference part (between `|A0,B+>` and `|A0,B->`). With
//! `X_A = x`, `X_B = y` only the entanglement part survives, and the
//! indicator `C = <tau x y>` over all trials equals `2 <F|x y|F>`.

mod optimize;

pub use optimize::{
    golden_section_maximize, nelder_mead_maximize, optimize_couplings, optimize_states,
    CouplingOptimum, StateOptimum, StateSearch,
};

use num_complex::Complex64;

use crate::dynamics::{success_probability, success_probability_mixed, JointMeterState, MeterPair};
use crate::error::{Error, Result};
use crate::meter::{gaussian_overlap0, gaussian_overlap1, Weight};
use crate::qsystem::{trace_term, PhotonDensity, PhotonEffect, PhotonKet, TransitionAmplitudes};

/// Postselection probabilities at or below this make conditional averages undefined.
pub const PROBABILITY_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentDecomposition {
    pub m_cl: f64,
    pub m_ent: f64,
    pub m_li: f64,
}

impl MomentDecomposition {
    pub fn total(&self) -> f64 {
        self.m_cl + self.m_ent + self.m_li
    }
}

/// Splits `<F|X_A X_B|F>` into classical, entanglement and local-interference terms.
pub fn moment_decomposition(
    amps: &TransitionAmplitudes,
    meters: &MeterPair,
    wx: Weight,
    wy: Weight,
) -> Result<MomentDecomposition> {
    let e = meters.branch_elements(wx, wy)?;
    let c = amps.as_array();
    let m_cl = (0..3).map(|i| c[i].norm_sqr() * e[i][i].re).sum();
    let m_ent = (1..3)
        .map(|j| 2.0 * (c[0].conj() * c[j] * e[0][j]).re)
        .sum();
    let m_li = 2.0 * (c[1].conj() * c[2] * e[1][2]).re;
    Ok(MomentDecomposition { m_cl, m_ent, m_li })
}

/// `<xy> P = <F|x y|F>` for Gaussian meters,
/// `(g_A g_B / 2) w_A w_B Re[l*(r+ - r-)]`.
pub fn cross_moment(amps: &TransitionAmplitudes, g_a: f64, g_b: f64) -> f64 {
    2.0 * gaussian_overlap1(g_a)
        * gaussian_overlap1(g_b)
        * (amps.l.conj() * (amps.r_plus - amps.r_minus)).re
}

/// Largest `|C|` over all preparations and postselections, `g_A g_B w_A w_B / 4`.
pub fn c_max(g_a: f64, g_b: f64) -> f64 {
    0.25 * g_a * g_b * gaussian_overlap0(g_a) * gaussian_overlap0(g_b)
}

/// `g exp(-g^2/8)`: the coupling dependence of `C` for one meter.
pub fn coupling_profile(g: f64) -> f64 {
    g * gaussian_overlap0(g)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheshireResult {
    /// Indicator in units of the squared initial pointer uncertainties.
    pub c_value: f64,
    pub p_success: f64,
    pub g_a: f64,
    pub g_b: f64,
    /// `Tr(E sigma_R rho pi_L)`.
    pub trace_term: Complex64,
}

/// Exact indicator for Gaussian meters:
/// `C = g_A g_B w_A w_B Re[Tr(E sigma_R rho pi_L)]`.
pub fn cheshire_analytic(
    effect: &PhotonEffect,
    rho: &PhotonDensity,
    g_a: f64,
    g_b: f64,
) -> Result<CheshireResult> {
    let meters = MeterPair::gaussian(g_a, g_b)?;
    let trace = trace_term(effect, rho);
    let c_value =
        g_a * g_b * gaussian_overlap0(g_a) * gaussian_overlap0(g_b) * trace.re;
    Ok(CheshireResult {
        c_value,
        p_success: success_probability_mixed(effect, rho, &meters)?,
        g_a,
        g_b,
        trace_term: trace,
    })
}

pub fn cheshire_pure(prep: &PhotonKet, post: &PhotonKet, g_a: f64, g_b: f64) -> Result<CheshireResult> {
    cheshire_analytic(&post.effect(), &prep.density(), g_a, g_b)
}

/// Postselected pointer means.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalAverages {
    pub x_mean: f64,
    pub y_mean: f64,
    pub p_success: f64,
}

fn conditional(p: f64) -> Result<f64> {
    if p <= PROBABILITY_EPSILON {
        return Err(Error::OrthogonalPostselection { overlap: p.max(0.0).sqrt() });
    }
    Ok(p)
}

/// Closed-form postselected means for Gaussian meters:
///
/// ```text
/// <x> P = g_A |l|^2 + g_A w_A w_B Re[l*(r+ + r-)]
/// <y> P = g_B (|r+|^2 - |r-|^2) + g_B w_A w_B Re[l*(r+ - r-)]
/// ```
pub fn local_averages(amps: &TransitionAmplitudes, g_a: f64, g_b: f64) -> Result<LocalAverages> {
    let p = conditional(success_probability(amps, g_a, g_b)?)?;
    let TransitionAmplitudes { l, r_plus, r_minus } = *amps;
    let w = gaussian_overlap0(g_a) * gaussian_overlap0(g_b);
    let x = g_a * l.norm_sqr() + g_a * w * (l.conj() * (r_plus + r_minus)).re;
    let y = g_b * (r_plus.norm_sqr() - r_minus.norm_sqr())
        + g_b * w * (l.conj() * (r_plus - r_minus)).re;
    Ok(LocalAverages {
        x_mean: x / p,
        y_mean: y / p,
        p_success: p,
    })
}

/// Postselected means for arbitrary meters, from the branch matrix elements.
pub fn local_averages_for(joint: &JointMeterState) -> Result<LocalAverages> {
    let p = conditional(joint.success_probability()?)?;
    Ok(LocalAverages {
        x_mean: joint.moment(Weight::Position, Weight::One)? / p,
        y_mean: joint.moment(Weight::One, Weight::Position)? / p,
        p_success: p,
    })
}

/// `<x/g>` and `<y/g>` extrapolated to `g -> 0` from couplings `h` and `2h`.
///
/// Both ratios are even functions of `g`, so one Richardson step in `g^2`
/// removes the leading correction.
pub fn weak_limit_ratios(amps: &TransitionAmplitudes, h: f64) -> Result<(f64, f64)> {
    if !(h > 0.0) {
        return Err(Error::validation("h", format!("{h} must be positive")));
    }
    let near = local_averages(amps, h, h)?;
    let far = local_averages(amps, 2.0 * h, 2.0 * h)?;
    let extrapolate = |a: f64, b: f64| (4.0 * a - b) / 3.0;
    Ok((
        extrapolate(near.x_mean / h, far.x_mean / (2.0 * h)),
        extrapolate(near.y_mean / h, far.y_mean / (2.0 * h)),
    ))
}
