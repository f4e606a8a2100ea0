use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{c_max, coupling_profile};
use crate::error::{Error, Result};
use crate::qsystem::{trace_term, transition_amplitudes, PhotonDensity, PhotonEffect, PhotonKet};

/// Trace terms below this leave `C` identically zero in the couplings.
pub const FLAT_OBJECTIVE_EPSILON: f64 = 1e-12;
/// Upper end of the coupling bracket, in units of the initial pointer width.
pub const COUPLING_BRACKET: f64 = 10.0;

/// Golden-section search for the maximum of a unimodal `f` on `[a, b]`.
///
/// Returns `(x_max, f_max)`.
pub fn golden_section_maximize(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;

    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while (b - a).abs() > tol {
        if f1 > f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
    }
    if f1 > f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingOptimum {
    pub g_a: f64,
    pub g_b: f64,
    pub c_value: f64,
    pub trace_term: Complex64,
}

/// Couplings that extremize `C` for fixed preparation and postselection.
///
/// `C` factorizes as `Re[trace] * p(g_A) * p(g_B)` with
/// `p(g) = g exp(-g^2/8)`, so each coupling is found by its own 1-D search.
pub fn optimize_couplings(effect: &PhotonEffect, rho: &PhotonDensity) -> Result<CouplingOptimum> {
    let trace = trace_term(effect, rho);
    if trace.re.abs() < FLAT_OBJECTIVE_EPSILON {
        return Err(Error::FlatObjective { trace: trace.re });
    }
    let (g_a, p_a) = golden_section_maximize(coupling_profile, 0.0, COUPLING_BRACKET, 1e-10);
    let (g_b, p_b) = golden_section_maximize(coupling_profile, 0.0, COUPLING_BRACKET, 1e-10);
    Ok(CouplingOptimum {
        g_a,
        g_b,
        c_value: p_a * p_b * trace.re,
        trace_term: trace,
    })
}

/// Nelder-Mead simplex search for the maximum of `f`.
///
/// Stops when the spread of objective values across the simplex drops below
/// `ftol` or after `max_evals` evaluations. Returns `(x_best, f_best)`.
pub fn nelder_mead_maximize(
    f: impl Fn(&[f64]) -> f64,
    start: &[f64],
    step: f64,
    ftol: f64,
    max_evals: usize,
) -> (Vec<f64>, f64) {
    let n = start.len();
    let cost = |x: &[f64]| -f(x);
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(start.to_vec());
    for i in 0..n {
        let mut v = start.to_vec();
        v[i] += step;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| cost(v)).collect();
    let mut evals = n + 1;

    while evals < max_evals {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();
        if values[n] - values[0] <= ftol {
            break;
        }

        let centroid: Vec<f64> = (0..n)
            .map(|k| simplex[..n].iter().map(|v| v[k]).sum::<f64>() / n as f64)
            .collect();
        let toward = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n])
                .map(|(c, w)| c + t * (w - c))
                .collect()
        };

        let reflected = toward(-1.0);
        let fr = cost(&reflected);
        evals += 1;
        if fr < values[0] {
            let expanded = toward(-2.0);
            let fe = cost(&expanded);
            evals += 1;
            if fe < fr {
                simplex[n] = expanded;
                values[n] = fe;
            } else {
                simplex[n] = reflected;
                values[n] = fr;
            }
        } else if fr < values[n - 1] {
            simplex[n] = reflected;
            values[n] = fr;
        } else {
            let contracted = if fr < values[n] { toward(-0.5) } else { toward(0.5) };
            let fc = cost(&contracted);
            evals += 1;
            if fc < values[n].min(fr) {
                simplex[n] = contracted;
                values[n] = fc;
            } else {
                let best = simplex[0].clone();
                for i in 1..=n {
                    simplex[i] = best
                        .iter()
                        .zip(&simplex[i])
                        .map(|(b, v)| b + 0.5 * (v - b))
                        .collect();
                    values[i] = cost(&simplex[i]);
                }
                evals += n;
            }
        }
    }

    let best = (0..=n)
        .min_by(|&i, &j| values[i].total_cmp(&values[j]))
        .unwrap_or(0);
    (simplex[best].clone(), -values[best])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateSearch {
    pub starts: usize,
    pub seed: u64,
    /// Simplex restarts from the incumbent after the first descent.
    pub restarts: usize,
    pub max_evals: usize,
}

impl Default for StateSearch {
    fn default() -> Self {
        Self {
            starts: 8,
            seed: 0,
            restarts: 4,
            max_evals: 20_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateOptimum {
    pub prep: PhotonKet,
    pub post: PhotonKet,
    /// `Re[l*(r+ - r-)]` at the optimum.
    pub trace_term: f64,
    pub c_value: f64,
    /// Index of the winning start.
    pub start: usize,
}

fn kets_from_params(v: &[f64]) -> Option<(PhotonKet, PhotonKet)> {
    let ket = |w: &[f64]| {
        PhotonKet::normalized([
            Complex64::new(w[0], w[1]),
            Complex64::new(w[2], w[3]),
            Complex64::new(w[4], w[5]),
            Complex64::new(w[6], w[7]),
        ])
        .ok()
    };
    Some((ket(&v[..8])?, ket(&v[8..16])?))
}

fn state_objective(v: &[f64]) -> f64 {
    match kets_from_params(v) {
        Some((prep, post)) => transition_amplitudes(&prep, &post).pure_trace_term().re,
        None => f64::NEG_INFINITY,
    }
}

/// Pure preparation and postselection maximizing `C` at fixed couplings.
///
/// Each start draws 16 Gaussian parameters (real and imaginary parts of two
/// unnormalized kets) from its own ChaCha stream and climbs
/// `Re[l*(r+ - r-)]` with restarted Nelder-Mead. The best start wins; ties
/// go to the lowest start index.
pub fn optimize_states(g_a: f64, g_b: f64, search: &StateSearch) -> Result<StateOptimum> {
    if !(g_a > 0.0 && g_b > 0.0 && g_a.is_finite() && g_b.is_finite()) {
        return Err(Error::validation("couplings", format!("g_a={g_a}, g_b={g_b} must be positive")));
    }
    if search.starts == 0 {
        return Err(Error::validation("starts", "need at least one start"));
    }
    let runs: Vec<(Vec<f64>, f64)> = (0..search.starts)
        .into_par_iter()
        .map(|start| {
            let mut rng = ChaCha8Rng::seed_from_u64(search.seed);
            rng.set_stream(start as u64);
            let mut x: Vec<f64> = (0..16).map(|_| rng.sample(StandardNormal)).collect();
            let mut best = f64::NEG_INFINITY;
            for round in 0..=search.restarts {
                let step = if round == 0 { 0.5 } else { 0.05 / round as f64 };
                let (x_new, f_new) =
                    nelder_mead_maximize(state_objective, &x, step, 1e-15, search.max_evals);
                x = x_new;
                best = f_new;
            }
            (x, best)
        })
        .collect();

    let (start, (params, value)) = runs
        .into_iter()
        .enumerate()
        .fold(None::<(usize, (Vec<f64>, f64))>, |acc, (i, run)| match acc {
            Some((j, best)) if best.1 >= run.1 => Some((j, best)),
            _ => Some((i, run)),
        })
        .expect("at least one start");
    let (prep, post) = kets_from_params(&params)
        .ok_or_else(|| Error::Consistency("optimizer returned a null ket".into()))?;
    Ok(StateOptimum {
        prep,
        post,
        trace_term: value,
        c_value: 4.0 * c_max(g_a, g_b) * value,
        start,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::indicator::cheshire_pure;

    #[test]
    fn golden_section_finds_parabola_peak() {
        let (x, fx) = golden_section_maximize(|x| -(x - 1.234).powi(2) + 3.0, -5.0, 5.0, 1e-10);
        // a flat top limits the location to about sqrt(eps)
        assert!((x - 1.234).abs() < 1e-7);
        assert!((fx - 3.0).abs() < 1e-15);
    }

    #[test]
    fn coupling_optimum_is_two() {
        let (prep, post) = (
            PhotonKet::from_real([1.0, 0.0, 1.0, 1.0]).unwrap(),
            PhotonKet::from_real([1.0, 0.0, 1.0, -1.0]).unwrap(),
        );
        let opt = optimize_couplings(&post.effect(), &prep.density()).unwrap();
        assert!((opt.g_a - 2.0).abs() < 1e-6 && (opt.g_b - 2.0).abs() < 1e-6);
        assert!((opt.c_value - 4.0 * (-1f64).exp() * 2.0 / 9.0).abs() < 1e-12);
        assert!((opt.c_value - 0.327_004).abs() < 1e-6);

        let best = PhotonKet::from_real([1.0, 0.0, 1.0, 0.0]).unwrap();
        let opt = optimize_couplings(&best.effect(), &best.density()).unwrap();
        assert!((opt.c_value - (-1f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn flat_objective_is_an_error() {
        let prep = PhotonKet::from_real([0.0, 0.0, 1.0, 0.0]).unwrap();
        let err = optimize_couplings(&prep.effect(), &prep.density()).unwrap_err();
        assert!(matches!(err, Error::FlatObjective { .. }));
    }

    #[test]
    fn nelder_mead_on_quadratic() {
        let f = |x: &[f64]| -(x[0] - 1.0).powi(2) - 2.0 * (x[1] + 0.5).powi(2) - (x[2] - 3.0).powi(2);
        let (x, fx) = nelder_mead_maximize(f, &[0.0, 0.0, 0.0], 1.0, 1e-20, 10_000);
        assert!(fx > -1e-12);
        assert!((x[0] - 1.0).abs() < 1e-5 && (x[1] + 0.5).abs() < 1e-5 && (x[2] - 3.0).abs() < 1e-5);
    }

    /// Exhaustive scan over real kets `(cos a, 0, sin a cos b, sin a sin b)` for
    /// both preparation and postselection: the maximum is 1/4, and nothing
    /// on the grid exceeds it.
    #[test]
    fn brute_force_state_family_peaks_at_quarter() {
        let n = 48;
        let angle = |k: usize| k as f64 * std::f64::consts::PI / n as f64;
        let mut best = f64::MIN;
        for i in 0..=n {
            for j in 0..=2 * n {
                for k in 0..=n {
                    for m in 0..=2 * n {
                        let (a, b, c, d) = (angle(i), angle(j), angle(k), angle(m));
                        // l = cos a cos c, r+ = sin a cos b sin c cos d, r- = sin a sin b sin c sin d
                        let l = a.cos() * c.cos();
                        let rp = a.sin() * b.cos() * c.sin() * d.cos();
                        let rm = a.sin() * b.sin() * c.sin() * d.sin();
                        best = best.max(l * (rp - rm));
                    }
                }
            }
        }
        assert!(best <= 0.25 + 1e-15);
        assert!(best > 0.25 - 1e-12, "{best}");
    }

    #[test]
    fn state_search_reaches_extremum() {
        let opt = optimize_states(2.0, 2.0, &StateSearch::default()).unwrap();
        assert!((opt.trace_term - 0.25).abs() < 1e-6, "{}", opt.trace_term);
        assert!((opt.c_value - (-1f64).exp()).abs() < 1e-6);
        let check = cheshire_pure(&opt.prep, &opt.post, 2.0, 2.0).unwrap();
        assert!((check.c_value - opt.c_value).abs() < 1e-12);
        let amps = transition_amplitudes(&opt.prep, &opt.post);
        // optimum: |l| = |r+ - r-| = 1/2
        assert!((amps.l.norm() - 0.5).abs() < 1e-3);
        assert!(((amps.r_plus - amps.r_minus).norm() - 0.5).abs() < 1e-3);

        for (ga, gb) in [(0.5, 3.0), (4.0, 1.0)] {
            let opt = optimize_states(ga, gb, &StateSearch { starts: 4, ..Default::default() }).unwrap();
            assert!((opt.c_value / (4.0 * c_max(ga, gb)) - 0.25).abs() < 1e-6);
        }
    }

    #[test]
    fn state_search_is_deterministic() {
        let s = StateSearch { starts: 3, seed: 7, ..Default::default() };
        let a = optimize_states(1.0, 1.0, &s).unwrap();
        let b = optimize_states(1.0, 1.0, &s).unwrap();
        assert_eq!(a, b);
        assert!(optimize_states(0.0, 1.0, &s).is_err());
    }
}
