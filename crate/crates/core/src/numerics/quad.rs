//! Quadrature rules: adaptive Gauss–Kronrod for closed-form integrands and
//! fixed composite Gauss–Legendre for tabulated or cell-wise work.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadError {
    #[error(
        "quadrature did not reach tolerance {tol:e} after {intervals} subintervals (estimate {estimate:e}, error {error:e})"
    )]
    RefinementLimit { tol: f64, intervals: usize, estimate: f64, error: f64 },
    #[error("integrand returned a non-finite value at x = {x}")]
    NonFinite { x: f64 },
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

/// Eight-point Gauss–Legendre rule on [-1, 1], positive half.
pub const GL8_X: [f64; 4] = [0.183_434_642_495_649_8, 0.525_532_409_916_329, 0.796_666_477_413_626_7, 0.960_289_856_497_536_3];
pub const GL8_W: [f64; 4] = [0.362_683_783_378_362, 0.313_706_645_877_887_3, 0.222_381_034_453_374_5, 0.101_228_536_290_376_3];

/// Gauss–Legendre 8-point estimate of the integral over [a, b].
#[inline]
pub fn gl8<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64) -> f64 {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut s = 0.0;
    for k in 0..4 {
        let dx = h * GL8_X[k];
        s += GL8_W[k] * (f(c - dx) + f(c + dx));
    }
    s * h
}

/// Abscissas of the 8-point rule mapped onto [a, b], with matching weights.
pub fn gl8_nodes(a: f64, b: f64) -> [(f64, f64); 8] {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut out = [(0.0, 0.0); 8];
    for k in 0..4 {
        out[2 * k] = (c - h * GL8_X[k], h * GL8_W[k]);
        out[2 * k + 1] = (c + h * GL8_X[k], h * GL8_W[k]);
    }
    out
}

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Result<(f64, f64), QuadError> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    if !fc.is_finite() {
        return Err(QuadError::NonFinite { x: c });
    }
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let (x1, x2) = (c - dx, c + dx);
        let (f1, f2) = (f(x1), f(x2));
        if !f1.is_finite() {
            return Err(QuadError::NonFinite { x: x1 });
        }
        if !f2.is_finite() {
            return Err(QuadError::NonFinite { x: x2 });
        }
        kron += WGK[j] * (f1 + f2);
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    Ok((kron * h, ((kron - gauss) * h).abs()))
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Globally adaptive Gauss–Kronrod (7/15) quadrature over the given
/// breakpoints. Stops when the summed error estimate is below
/// `max(abs_tol, rel_tol * |I|)`.
pub fn adaptive<F: FnMut(f64) -> f64>(mut f: F, breakpoints: &[f64], rel_tol: f64, abs_tol: f64) -> Result<f64, QuadError> {
    const MAX_PIECES: usize = 4000;
    let mut heap = BinaryHeap::new();
    // A few initial pieces per interval so narrow peaks near breakpoints are seen.
    const INITIAL_SPLIT: usize = 8;
    for w in breakpoints.windows(2) {
        if w[1] > w[0] {
            let h = (w[1] - w[0]) / INITIAL_SPLIT as f64;
            for k in 0..INITIAL_SPLIT {
                let a = w[0] + h * k as f64;
                let b = if k + 1 == INITIAL_SPLIT { w[1] } else { a + h };
                let (value, error) = gk15(&mut f, a, b)?;
                heap.push(Piece { a, b, value, error });
            }
        }
    }
    loop {
        let total: f64 = heap.iter().map(|p| p.value).sum();
        let err: f64 = heap.iter().map(|p| p.error).sum();
        let tol = abs_tol.max(rel_tol * total.abs());
        if err <= tol {
            // Sum in a fixed order so the result does not depend on heap layout.
            let mut pieces: Vec<_> = heap.into_vec();
            pieces.sort_by(|p, q| p.a.total_cmp(&q.a));
            return Ok(pieces.iter().map(|p| p.value).sum());
        }
        if heap.len() >= MAX_PIECES {
            return Err(QuadError::RefinementLimit { tol, intervals: heap.len(), estimate: total, error: err });
        }
        let worst = heap.pop().expect("non-empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            return Err(QuadError::RefinementLimit { tol, intervals: heap.len() + 1, estimate: total, error: err });
        }
        for (a, b) in [(worst.a, mid), (mid, worst.b)] {
            let (value, error) = gk15(&mut f, a, b)?;
            heap.push(Piece { a, b, value, error });
        }
    }
}

/// `ln ∫ exp(g(x)) dx` with the exponent shifted by `shift` (ideally max g)
/// before exponentiation.
pub fn log_integral_exp<G: FnMut(f64) -> f64>(mut g: G, breakpoints: &[f64], shift: f64, rel_tol: f64) -> Result<f64, QuadError> {
    let v = adaptive(|x| (g(x) - shift).exp(), breakpoints, rel_tol, 0.0)?;
    Ok(v.ln() + shift)
}
