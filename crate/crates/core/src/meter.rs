//! Pointer meters in the von Neumann model.
//!
//! A meter starts in `psi0(x)` (zero mean, unit variance) and an interaction
//! with coupling `g` leaves it in `psi0(x - g)`. Every quantity downstream is
//! built from matrix elements between shifted copies,
//!
//! ```text
//! <s_a| w |s_b> = integral w(x) psi0*(x - a) psi0(x - b) dx,   w in {1, x}
//! ```
//!
//! evaluated in closed form for the Gaussian `psi0 ~ exp(-x^2/4)` and by
//! quadrature for a sampled [`GridMeter`].

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;

use crate::complex_text::parse_complex;
use crate::error::{Error, Result};

/// Off-grid amplitude, relative to the peak, above which a grid is too small.
pub const EDGE_TOLERANCE: f64 = 1e-10;
pub const GRID_NORM_TOLERANCE: f64 = 1e-10;
pub const GRID_MEAN_TOLERANCE: f64 = 1e-8;
pub const GRID_VARIANCE_TOLERANCE: f64 = 1e-6;
/// Lagrange stencil width used for sub-lattice shifts.
pub const DEFAULT_STENCIL: usize = 8;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Unit-variance Gaussian pointer state `(2 pi)^(-1/4) exp(-x^2/4)`.
pub fn gaussian_wavefunction(x: f64) -> f64 {
    (2.0 * PI).powf(-0.25) * (-0.25 * x * x).exp()
}

/// `integral phi0(x) phi0(x - g) dx = exp(-g^2/8)`.
pub fn gaussian_overlap0(g: f64) -> f64 {
    (-g * g / 8.0).exp()
}

/// `integral x phi0(x) phi0(x - g) dx = (g/2) exp(-g^2/8)`.
pub fn gaussian_overlap1(g: f64) -> f64 {
    0.5 * g * gaussian_overlap0(g)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Weight {
    One,
    Position,
}

impl Weight {
    #[inline]
    pub fn at(self, x: f64) -> f64 {
        match self {
            Weight::One => 1.0,
            Weight::Position => x,
        }
    }
}

/// Uniform lattice `min, min + dx, ..., max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    min: f64,
    max: f64,
    points: usize,
}

impl Grid {
    pub fn new(min: f64, max: f64, points: usize) -> Result<Self> {
        if !(min.is_finite() && max.is_finite() && max > min) {
            return Err(Error::validation("grid", format!("bounds [{min}, {max}]")));
        }
        if points < 3 {
            return Err(Error::validation("grid", format!("{points} points")));
        }
        Ok(Self { min, max, points })
    }

    /// `[-20, 20]` with 4001 points.
    pub fn pointer_default() -> Self {
        Self {
            min: -20.0,
            max: 20.0,
            points: 4001,
        }
    }

    pub fn min(&self) -> f64 {
        self.min
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn dx(&self) -> f64 {
        (self.max - self.min) / (self.points - 1) as f64
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.min + i as f64 * self.dx()
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        let dx = self.dx();
        (0..self.points).map(move |i| self.min + i as f64 * dx)
    }
}

impl Default for Grid {
    fn default() -> Self {
        Self::pointer_default()
    }
}

/// Meter wavefunction sampled on a lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMeter {
    grid: Grid,
    psi0: Vec<Complex64>,
    stencil: usize,
    peak: f64,
}

impl GridMeter {
    /// Checks normalization, zero mean and unit variance of `psi0`, and that
    /// it has decayed at the grid edges.
    pub fn new(grid: Grid, psi0: Vec<Complex64>) -> Result<Self> {
        if psi0.len() != grid.points() {
            return Err(Error::validation(
                "psi0",
                format!("{} samples for a {}-point grid", psi0.len(), grid.points()),
            ));
        }
        let dx = grid.dx();
        let (mut norm, mut mean, mut second) = (0.0, 0.0, 0.0);
        for (x, p) in grid.nodes().zip(&psi0) {
            let d = p.norm_sqr();
            norm += d;
            mean += x * d;
            second += x * x * d;
        }
        let (norm, mean, second) = (norm * dx, mean * dx, second * dx);
        if (norm - 1.0).abs() > GRID_NORM_TOLERANCE {
            return Err(Error::validation("psi0", format!("norm {norm}, expected 1")));
        }
        if mean.abs() > GRID_MEAN_TOLERANCE {
            return Err(Error::validation("psi0", format!("mean {mean:e}, expected 0")));
        }
        if (second - 1.0).abs() > GRID_VARIANCE_TOLERANCE {
            return Err(Error::validation(
                "psi0",
                format!("second moment {second}, expected 1"),
            ));
        }
        let peak = psi0.iter().map(|p| p.norm()).fold(0.0, f64::max);
        let meter = Self {
            grid,
            psi0,
            stencil: DEFAULT_STENCIL,
            peak,
        };
        let edge = meter.psi0[0].norm().max(meter.psi0[grid.points() - 1].norm()) / peak;
        if edge > EDGE_TOLERANCE {
            return Err(Error::GridTooSmall {
                min: grid.min(),
                max: grid.max(),
                shift: 0.0,
                edge,
            });
        }
        Ok(meter)
    }

    /// The unit-variance Gaussian sampled on `grid`.
    pub fn gaussian(grid: Grid) -> Result<Self> {
        let psi0 = grid
            .nodes()
            .map(|x| Complex64::new(gaussian_wavefunction(x), 0.0))
            .collect();
        Self::new(grid, psi0)
    }

    /// Even Lagrange stencil width for fractional shifts; 2 is linear interpolation.
    pub fn with_stencil(mut self, stencil: usize) -> Result<Self> {
        if stencil < 2 || !stencil.is_multiple_of(2) || stencil > self.grid.points() {
            return Err(Error::validation("stencil", format!("{stencil}")));
        }
        self.stencil = stencil;
        Ok(self)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn psi0(&self) -> &[Complex64] {
        &self.psi0
    }

    pub fn stencil(&self) -> usize {
        self.stencil
    }

    /// Largest relative amplitude of `psi0` that a shift moves off the lattice.
    fn off_grid_amplitude(&self, shift: f64) -> f64 {
        let peak = self.peak;
        self.grid
            .nodes()
            .zip(&self.psi0)
            .filter(|(x, _)| {
                let moved = x + shift;
                moved > self.grid.max() + 1e-12 || moved < self.grid.min() - 1e-12
            })
            .map(|(_, p)| p.norm() / peak)
            .fold(0.0, f64::max)
    }

    /// `psi0(x_i - shift)` on the lattice nodes.
    pub fn shifted(&self, shift: f64) -> Result<Vec<Complex64>> {
        let edge = self.off_grid_amplitude(shift);
        if edge > EDGE_TOLERANCE {
            return Err(Error::GridTooSmall {
                min: self.grid.min(),
                max: self.grid.max(),
                shift,
                edge,
            });
        }
        let n = self.grid.points() as isize;
        let at = |k: isize| {
            if (0..n).contains(&k) {
                self.psi0[k as usize]
            } else {
                ZERO
            }
        };

        let steps = shift / self.grid.dx();
        let whole = steps.round();
        if (steps - whole).abs() < 1e-9 {
            let m = whole as isize;
            return Ok((0..n).map(|i| at(i - m)).collect());
        }

        // x_i - shift sits at fractional index (i - m - 1) + theta
        let m = steps.floor();
        let theta = 1.0 - (steps - m);
        let m = m as isize;
        let half = (self.stencil / 2) as isize;
        let nodes: Vec<isize> = (1 - half..=half).collect();
        let weights: Vec<f64> = nodes
            .iter()
            .map(|&j| {
                nodes
                    .iter()
                    .filter(|&&k| k != j)
                    .map(|&k| (theta - k as f64) / (j - k) as f64)
                    .product()
            })
            .collect();
        Ok((0..n)
            .map(|i| {
                let base = i - m - 1;
                nodes
                    .iter()
                    .zip(&weights)
                    .map(|(&j, &w)| at(base + j) * w)
                    .sum()
            })
            .collect())
    }

    /// [`integrate_pair`](Self::integrate_pair) for both weights in one pass.
    pub fn integrate_pair_both(&self, bra: &[Complex64], ket: &[Complex64]) -> (Complex64, Complex64) {
        let (mut one, mut position) = (ZERO, ZERO);
        for (x, (b, k)) in self.grid.nodes().zip(bra.iter().zip(ket)) {
            let v = b.conj() * k;
            one += v;
            position += v * x;
        }
        let dx = self.grid.dx();
        (one * dx, position * dx)
    }

    /// `integral w(x) psi0*(x - bra_shift) psi0(x - ket_shift) dx`.
    pub fn matrix_element(&self, bra_shift: f64, ket_shift: f64, weight: Weight) -> Result<Complex64> {
        let bra = self.shifted(bra_shift)?;
        let ket = self.shifted(ket_shift)?;
        Ok(self.integrate_pair(&bra, &ket, weight))
    }

    /// Node-sum quadrature of `w(x) bra*(x) ket(x)`. Equivalent to the
    /// trapezoidal rule once the integrand has decayed at both edges.
    pub fn integrate_pair(&self, bra: &[Complex64], ket: &[Complex64], weight: Weight) -> Complex64 {
        let sum: Complex64 = self
            .grid
            .nodes()
            .zip(bra.iter().zip(ket))
            .map(|(x, (b, k))| b.conj() * k * weight.at(x))
            .sum();
        sum * self.grid.dx()
    }

    /// Parses a two-column `x value` table (whitespace or comma separated,
    /// values in `re+imi` form, `#` comments). The `x` column must be uniform.
    pub fn parse(text: &str) -> Result<Self> {
        let mut xs = Vec::new();
        let mut psi = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|f| !f.is_empty())
                .collect();
            let parse_err = |reason: String| Error::Parse {
                line: lineno + 1,
                reason,
            };
            if fields.len() != 2 {
                return Err(parse_err(format!("expected 2 columns, found {}", fields.len())));
            }
            let x: f64 = fields[0]
                .parse()
                .map_err(|_| parse_err(format!("bad position {:?}", fields[0])))?;
            let value = parse_complex(fields[1])
                .ok_or_else(|| parse_err(format!("bad amplitude {:?}", fields[1])))?;
            xs.push(x);
            psi.push(value);
        }
        if xs.len() < 3 {
            return Err(Error::validation("psi0", "fewer than 3 samples"));
        }
        let grid = Grid::new(xs[0], xs[xs.len() - 1], xs.len())?;
        let dx = grid.dx();
        for (i, &x) in xs.iter().enumerate() {
            if (x - grid.x(i)).abs() > 1e-9 * dx.max(1.0) {
                return Err(Error::validation(
                    "psi0",
                    format!("non-uniform sample spacing at x = {x}"),
                ));
            }
        }
        Self::new(grid, psi)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

/// `integral w(x) psi0*(x) psi0(x - shift) dx` by quadrature.
pub fn grid_overlap(meter: &GridMeter, shift: f64, weight: Weight) -> Result<Complex64> {
    meter.matrix_element(0.0, shift, weight)
}

/// Matrix elements `<s_i|1|s_j>` and `<s_i|x|s_j>` among a set of shifted states.
#[derive(Debug, Clone, PartialEq)]
pub struct StateMatrices {
    pub one: Vec<Vec<Complex64>>,
    pub position: Vec<Vec<Complex64>>,
}

impl StateMatrices {
    pub fn get(&self, weight: Weight) -> &Vec<Vec<Complex64>> {
        match weight {
            Weight::One => &self.one,
            Weight::Position => &self.position,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MeterShape {
    Gaussian,
    Grid(GridMeter),
}

impl MeterShape {
    pub fn matrix_element(&self, bra_shift: f64, ket_shift: f64, weight: Weight) -> Result<Complex64> {
        match self {
            MeterShape::Gaussian => Ok(Complex64::new(
                gaussian_element(bra_shift, ket_shift, weight),
                0.0,
            )),
            MeterShape::Grid(meter) => meter.matrix_element(bra_shift, ket_shift, weight),
        }
    }

    pub fn state_matrices(&self, shifts: &[f64]) -> Result<StateMatrices> {
        let n = shifts.len();
        let mut one = vec![vec![ZERO; n]; n];
        let mut position = vec![vec![ZERO; n]; n];
        match self {
            MeterShape::Gaussian => {
                for (i, &a) in shifts.iter().enumerate() {
                    for (j, &b) in shifts.iter().enumerate() {
                        one[i][j] = Complex64::new(gaussian_element(a, b, Weight::One), 0.0);
                        position[i][j] =
                            Complex64::new(gaussian_element(a, b, Weight::Position), 0.0);
                    }
                }
            }
            MeterShape::Grid(meter) => {
                let states = shifts
                    .iter()
                    .map(|&s| meter.shifted(s))
                    .collect::<Result<Vec<_>>>()?;
                for i in 0..n {
                    for j in i..n {
                        let (o, p) = meter.integrate_pair_both(&states[i], &states[j]);
                        one[i][j] = o;
                        position[i][j] = p;
                        one[j][i] = o.conj();
                        position[j][i] = p.conj();
                    }
                }
            }
        }
        Ok(StateMatrices { one, position })
    }

    /// The same meter as a sampled wavefunction; Gaussian meters are sampled
    /// on `grid`, grid meters keep their own lattice.
    pub fn to_grid(&self, grid: Grid) -> Result<GridMeter> {
        match self {
            MeterShape::Gaussian => GridMeter::gaussian(grid),
            MeterShape::Grid(meter) => Ok(meter.clone()),
        }
    }
}

/// Closed form of `<phi0(. - a)| w |phi0(. - b)>`: the product of the two
/// Gaussians is centred at `(a + b)/2` with weight `exp(-(a - b)^2/8)`.
fn gaussian_element(a: f64, b: f64, weight: Weight) -> f64 {
    let overlap = gaussian_overlap0(a - b);
    match weight {
        Weight::One => overlap,
        Weight::Position => 0.5 * (a + b) * overlap,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Composite Simpson rule on [-40, 40], written out independently of the
    /// node-sum quadrature above.
    fn simpson(f: impl Fn(f64) -> f64) -> f64 {
        let (a, b, n) = (-40.0, 40.0, 80_000usize);
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for k in 1..n {
            let x = a + k as f64 * h;
            s += if k % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        s * h / 3.0
    }

    fn phi(x: f64) -> f64 {
        (-x * x / 4.0).exp() / (2.0 * PI).sqrt().sqrt()
    }

    #[test]
    fn overlap0_against_quadrature() {
        assert_eq!(gaussian_overlap0(0.0), 1.0);
        for g in [2.0, 10.0] {
            let q = simpson(|x| phi(x) * phi(x - g));
            assert!((gaussian_overlap0(g) - q).abs() < 1e-13, "g={g}: {q}");
        }
        assert!((gaussian_overlap0(2.0) - 0.606531).abs() < 1e-6);
        assert!((gaussian_overlap0(10.0) - 3.727e-6).abs() < 1e-9);
    }

    #[test]
    fn overlap1_against_quadrature() {
        assert_eq!(gaussian_overlap1(0.0), 0.0);
        for g in [0.01, 2.0] {
            let q = simpson(|x| x * phi(x) * phi(x - g));
            assert!((gaussian_overlap1(g) - q).abs() < 1e-13, "g={g}: {q}");
        }
        assert!((gaussian_overlap1(2.0) - 0.606531).abs() < 1e-6);
        assert!((gaussian_overlap1(0.01) - 0.0049999).abs() < 1e-7);
    }

    #[test]
    fn overlap1_rises_then_decays() {
        let gs: Vec<f64> = (0..=400).map(|k| k as f64 * 0.05).collect();
        for w in gs.windows(2) {
            let (a, b) = (gaussian_overlap1(w[0]), gaussian_overlap1(w[1]));
            if w[1] <= 2.0 {
                assert!(b > a, "not increasing at {}", w[1]);
            } else if w[0] >= 2.0 {
                assert!(b < a, "not decreasing at {}", w[1]);
            }
        }
        assert!(gaussian_overlap1(20.0) < 1e-20);
    }

    #[test]
    fn grid_matches_closed_forms() {
        let meter = GridMeter::gaussian(Grid::default()).unwrap();
        for g in [0.0, 0.5, 1.0, 2.0, 4.0, 8.0] {
            let o0 = grid_overlap(&meter, g, Weight::One).unwrap();
            let o1 = grid_overlap(&meter, g, Weight::Position).unwrap();
            assert!((o0.re - gaussian_overlap0(g)).abs() < 1e-8, "o0 g={g}");
            assert!((o1.re - gaussian_overlap1(g)).abs() < 1e-8, "o1 g={g}");
            assert!(o0.im.abs() < 1e-15 && o1.im.abs() < 1e-15);
        }
    }

    #[test]
    fn fractional_shifts_use_high_order_interpolation() {
        let meter = GridMeter::gaussian(Grid::default()).unwrap();
        for g in [0.123_456, 1.000_5, 3.141_59, 7.77] {
            let o1 = grid_overlap(&meter, g, Weight::Position).unwrap();
            assert!((o1.re - gaussian_overlap1(g)).abs() < 1e-10, "g={g}");
            let o1m = grid_overlap(&meter, -g, Weight::Position).unwrap();
            assert!((o1m.re + gaussian_overlap1(g)).abs() < 1e-10, "g=-{g}");
        }
        // linear interpolation is only second-order accurate
        let linear = meter.clone().with_stencil(2).unwrap();
        let err = (grid_overlap(&linear, 0.123_456, Weight::One).unwrap().re
            - gaussian_overlap0(0.123_456))
        .abs();
        assert!(err > 1e-8 && err < 1e-4, "{err}");
    }

    #[test]
    fn zero_shift_is_normalization() {
        let grid = Grid::new(-15.0, 15.0, 1201).unwrap();
        // zero-mean, unit-variance wavefunction with a position-dependent phase
        let psi0: Vec<Complex64> = grid
            .nodes()
            .map(|x| Complex64::from_polar(gaussian_wavefunction(x), 0.3 * x * x))
            .collect();
        let meter = GridMeter::new(grid, psi0).unwrap();
        let o = grid_overlap(&meter, 0.0, Weight::One).unwrap();
        assert!((o - 1.0).norm() < 1e-10);
    }

    #[test]
    fn cauchy_schwarz_for_chirped_meter() {
        let grid = Grid::new(-20.0, 20.0, 2001).unwrap();
        let psi0: Vec<Complex64> = grid
            .nodes()
            .map(|x| Complex64::from_polar(gaussian_wavefunction(x), 0.7 * x * x))
            .collect();
        let meter = GridMeter::new(grid, psi0).unwrap();
        for k in 0..=40 {
            let g = 0.2 * k as f64;
            assert!(grid_overlap(&meter, g, Weight::One).unwrap().norm() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn shift_off_grid_is_rejected() {
        let meter = GridMeter::gaussian(Grid::new(-10.0, 10.0, 2001).unwrap()).unwrap();
        // exp(-(10 - 0.3)^2 / 4) ~ 6e-11 of the peak leaves the grid
        assert!(meter.shifted(0.3).is_ok());
        let err = grid_overlap(&meter, 3.0, Weight::One).unwrap_err();
        assert!(matches!(err, Error::GridTooSmall { .. }));
    }

    #[test]
    fn invalid_wavefunctions_are_rejected() {
        let grid = Grid::new(-20.0, 20.0, 2001).unwrap();
        let biased: Vec<Complex64> = grid
            .nodes()
            .map(|x| Complex64::new(gaussian_wavefunction(x - 0.5), 0.0))
            .collect();
        assert!(matches!(
            GridMeter::new(grid, biased),
            Err(Error::Validation { field: "psi0", .. })
        ));
        let narrow: Vec<Complex64> = grid
            .nodes()
            .map(|x| Complex64::new(gaussian_wavefunction(2.0 * x) * 2f64.sqrt(), 0.0))
            .collect();
        assert!(GridMeter::new(grid, narrow).is_err());
        let truncated = Grid::new(-3.0, 3.0, 601).unwrap();
        assert!(GridMeter::gaussian(truncated).is_err());
    }

    #[test]
    fn parse_two_column_file() {
        let grid = Grid::new(-12.0, 12.0, 481).unwrap();
        let mut text = String::from("# x  psi\n");
        for x in grid.nodes() {
            text.push_str(&format!("{x} {}+0i\n", gaussian_wavefunction(x)));
        }
        let meter = GridMeter::parse(&text).unwrap();
        assert_eq!(meter.grid().points(), 481);
        let o1 = grid_overlap(&meter, 2.0, Weight::Position).unwrap();
        assert!((o1.re - gaussian_overlap1(2.0)).abs() < 1e-8);

        let err = GridMeter::parse("0 1\n1 2 3\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = GridMeter::parse("0 0\n1 0\n3 0\n").unwrap_err();
        assert!(matches!(err, Error::Validation { .. }));
    }

    #[test]
    fn gaussian_elements_between_shifted_states() {
        let grid_meter = MeterShape::Grid(GridMeter::gaussian(Grid::default()).unwrap());
        for (a, b) in [(2.0, 0.0), (0.0, -1.5), (1.5, -1.5), (0.3, 0.3)] {
            for w in [Weight::One, Weight::Position] {
                let exact = MeterShape::Gaussian.matrix_element(a, b, w).unwrap();
                let grid = grid_meter.matrix_element(a, b, w).unwrap();
                assert!((exact - grid).norm() < 1e-10, "{a} {b} {w:?}");
            }
        }
    }
}
