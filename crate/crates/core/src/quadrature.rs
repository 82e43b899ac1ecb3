//! Adaptive Gauss–Kronrod (7/15-point) quadrature on finite intervals.
//!
//! Used by the numerical oracles: the job-density mixture integral, the
//! full-employment condition and the size-weighted productivity moments.
//! Subintervals are bisected greedily by largest error estimate.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights for the odd-indexed Kronrod nodes XGK[1], XGK[3], XGK[5], XGK[7].
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Stopping rule: stop once the error estimate is below
/// `max(abs, rel * |integral|)`.
#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            abs: 1e-13,
            rel: 1e-12,
            max_intervals: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    let mut fv = [0.0; 15];
    fv[7] = fc;
    for (j, (&x, &w)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let dx = half * x;
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv[j] = f1;
        fv[14 - j] = f2;
        kronrod += w * (f1 + f2);
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    // QUADPACK-style error scaling.
    let mean = 0.5 * kronrod;
    let mut asc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        asc += WGK[j] * ((fv[j] - mean).abs() + (fv[14 - j] - mean).abs());
    }
    let asc = asc * half.abs();
    let mut err = ((kronrod - gauss) * half).abs();
    if asc != 0.0 && err != 0.0 {
        err = asc * (200.0 * err / asc).powf(1.5).min(1.0);
    }
    Segment {
        a,
        b,
        value: kronrod * half,
        error: err.max(50.0 * f64::EPSILON * (kronrod * half).abs()),
    }
}

/// Integrates `f` over `[a, b]`, starting from `initial_pieces` equal
/// subintervals.
pub fn integrate_split<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    initial_pieces: usize,
    tol: Tolerance,
) -> Result<Integral> {
    let pieces = initial_pieces.max(1);
    let width = (b - a) / pieces as f64;
    let mut heap = BinaryHeap::with_capacity(tol.max_intervals + pieces);
    for i in 0..pieces {
        let lo = a + width * i as f64;
        let hi = if i + 1 == pieces { b } else { lo + width };
        heap.push(kronrod15(&f, lo, hi));
    }
    loop {
        let (value, error) = totals(&heap);
        if error <= tol.abs.max(tol.rel * value.abs()) {
            return Ok(Integral {
                value,
                error,
                intervals: heap.len(),
            });
        }
        if heap.len() >= tol.max_intervals {
            return Err(Error::Quadrature {
                tolerance: tol.abs.max(tol.rel * value.abs()),
                estimate: error,
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval cannot be split further in f64.
            heap.push(Segment {
                error: 0.0,
                ..worst
            });
            continue;
        }
        heap.push(kronrod15(&f, worst.a, mid));
        heap.push(kronrod15(&f, mid, worst.b));
    }
}

/// Integrates `f` over `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: Tolerance) -> Result<Integral> {
    integrate_split(f, a, b, 8, tol)
}

/// Integrates `mult(x) * exp(log_weight(x))` over the real line, where
/// `exp(log_weight)` is a single-peaked, Gaussian-tailed weight.
///
/// The integration window is located numerically: the mode and curvature
/// of `log_weight` are read off by Newton iterations with central
/// differences, and the window spans `span` curvature-standard-deviations
/// on either side of the mode. No knowledge of the closed form is used.
pub fn integrate_peaked<W, M>(log_weight: W, mult: M, start: f64, span: f64, tol: Tolerance) -> Result<Integral>
where
    W: Fn(f64) -> f64,
    M: Fn(f64) -> f64,
{
    let (mode, sd) = locate_peak(&log_weight, start)?;
    let peak = log_weight(mode);
    let f = |x: f64| mult(x) * (log_weight(x) - peak).exp();
    let mut r = integrate_split(f, mode - span * sd, mode + span * sd, 16, tol)?;
    let scale = peak.exp();
    r.value *= scale;
    r.error *= scale;
    Ok(r)
}

fn locate_peak<W: Fn(f64) -> f64>(log_weight: &W, start: f64) -> Result<(f64, f64)> {
    let mut x = start;
    let mut sd = f64::NAN;
    for _ in 0..60 {
        let step = if sd.is_finite() { 1e-3 * sd.max(1e-12) } else { 1e-3 * x.abs().max(1e-3) };
        let fp = log_weight(x + step);
        let f0 = log_weight(x);
        let fm = log_weight(x - step);
        let d1 = (fp - fm) / (2.0 * step);
        let d2 = (fp - 2.0 * f0 + fm) / (step * step);
        if !(d2 < 0.0) || !d2.is_finite() {
            return Err(Error::Domain(format!(
                "weight is not log-concave near {x} (second difference {d2})"
            )));
        }
        sd = (-1.0 / d2).sqrt();
        let next = x - d1 / d2;
        let moved = (next - x).abs();
        x = next;
        if moved <= 1e-10 * sd.max(x.abs()) {
            break;
        }
    }
    Ok((x, sd))
}

fn totals(heap: &BinaryHeap<Segment>) -> (f64, f64) {
    // Sum in a fixed order so results do not depend on heap layout.
    let mut segs: Vec<&Segment> = heap.iter().collect();
    segs.sort_by(|x, y| x.a.total_cmp(&y.a));
    let mut value = 0.0;
    let mut comp = 0.0;
    let mut error = 0.0;
    for s in segs {
        let y = s.value - comp;
        let t = value + y;
        comp = (t - value) - y;
        value = t;
        error += s.error;
    }
    (value, error)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let r = integrate(|x| 3.0 * x * x - 2.0 * x + 1.0, -1.0, 2.0, Tolerance::default()).unwrap();
        // x^3 - x^2 + x from -1 to 2 = (8 - 4 + 2) - (-1 - 1 - 1) = 9
        assert!((r.value - 9.0).abs() < 1e-13);
    }

    #[test]
    fn gaussian_mass() {
        let s = 0.05;
        let f = |x: f64| (-0.5 * (x / s) * (x / s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
        let r = integrate(f, -10.0, 10.0, Tolerance::default()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12, "{}", r.value);
    }

    #[test]
    fn reports_failure_when_budget_is_exhausted() {
        let tol = Tolerance {
            abs: 1e-15,
            rel: 0.0,
            max_intervals: 4,
        };
        let r = integrate(|x: f64| x.abs().sqrt(), -1.0, 1.0, tol);
        assert!(matches!(r, Err(Error::Quadrature { .. })));
    }
}
