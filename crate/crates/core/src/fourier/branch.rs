use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{require, Result};

/// State for a continuous complex logarithm along a path of arguments.
///
/// Each call compares the principal argument with the previous one; a jump
/// of more than pi is read as a crossing of the negative real axis and
/// shifts the rotation count.
#[derive(Clone, Debug, Default)]
pub struct BranchTracker {
    rotations: i64,
    last_arg: Option<f64>,
    last_imag: Option<f64>,
    max_step: f64,
}

impl BranchTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn rotations(&self) -> i64 {
        self.rotations
    }

    /// Largest change of the corrected imaginary part between consecutive calls.
    pub fn max_step(&self) -> f64 {
        self.max_step
    }

    pub fn log(&mut self, z: Complex64) -> Result<Complex64> {
        corrected_log(z, self)
    }
}

/// `ln|z| + i (Arg z + 2 pi k)` with `k` the rotation count carried by `tracker`.
/// Zero and non-finite arguments are rejected and leave the tracker unchanged.
pub fn corrected_log(z: Complex64, tracker: &mut BranchTracker) -> Result<Complex64> {
    require(z.is_finite(), "|z|", z.norm(), "must be finite")?;
    require(z.norm() > 0.0, "|z|", z.norm(), "logarithm of zero")?;
    let arg = z.arg();
    if let Some(last) = tracker.last_arg {
        let jump = arg - last;
        if jump > PI {
            tracker.rotations -= 1;
        } else if jump < -PI {
            tracker.rotations += 1;
        }
    }
    tracker.last_arg = Some(arg);
    let imag = arg + 2.0 * PI * tracker.rotations as f64;
    if let Some(prev) = tracker.last_imag {
        tracker.max_step = tracker.max_step.max((imag - prev).abs());
    }
    tracker.last_imag = Some(imag);
    Ok(Complex64::new(z.norm().ln(), imag))
}

/// `exp(log_scale) * factor`, for values whose modulus overflows.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaledComplex {
    pub log_scale: Complex64,
    pub factor: Complex64,
}

impl ScaledComplex {
    pub fn value(&self) -> Complex64 {
        self.log_scale.exp() * self.factor
    }

    /// Principal logarithm, imaginary part in `[-pi, pi)`.
    pub fn principal_log(&self) -> Complex64 {
        let l = self.log_scale + self.factor.ln();
        let im = l.im - 2.0 * PI * ((l.im + PI) / (2.0 * PI)).floor();
        Complex64::new(l.re, im)
    }

    /// Logarithm continued by `tracker`, which sees the unit phasor of the value.
    pub fn tracked_log(&self, tracker: &mut BranchTracker) -> Result<Complex64> {
        let norm = self.factor.norm();
        require(norm > 0.0, "|z|", norm, "logarithm of zero")?;
        let phasor = Complex64::from_polar(1.0, self.log_scale.im) * self.factor / norm;
        let l = corrected_log(phasor, tracker)?;
        Ok(Complex64::new(self.log_scale.re + norm.ln(), l.im))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponentiates_back() {
        let mut t = BranchTracker::new();
        for k in 0..400 {
            let z = Complex64::from_polar(1.0 + k as f64 * 0.01, k as f64 * 0.1);
            let l = corrected_log(z, &mut t).unwrap();
            assert!((l.exp() - z).norm() <= 1e-12 * z.norm());
        }
    }

    #[test]
    fn follows_a_spiral_continuously() {
        let mut t = BranchTracker::new();
        let mut last = None;
        for k in 0..1000 {
            let theta = k as f64 * 0.05;
            let l = corrected_log(Complex64::from_polar(2.0, theta), &mut t).unwrap();
            assert!((l.im - theta).abs() < 1e-12);
            if let Some(p) = last {
                assert!(l.im - p < PI);
            }
            last = Some(l.im);
        }
        assert_eq!(t.rotations(), 8);
        assert!(t.max_step() < 0.051);
    }

    #[test]
    fn turns_the_other_way() {
        let mut t = BranchTracker::new();
        for k in 0..100 {
            corrected_log(Complex64::from_polar(1.0, -0.2 * k as f64), &mut t).unwrap();
        }
        assert_eq!(t.rotations(), -3);
    }

    #[test]
    fn four_quadrant_loop_counts_one_rotation() {
        let mut t = BranchTracker::new();
        let mut last = Complex64::new(0.0, 0.0);
        for z in [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0), (1.0, 0.0)] {
            last = corrected_log(Complex64::new(z.0, z.1), &mut t).unwrap();
        }
        assert_eq!(t.rotations(), 1);
        assert!((last.im - 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn scaled_logs_agree_with_direct_logs() {
        let mut t = BranchTracker::new();
        for k in 1..50 {
            let z = ScaledComplex {
                log_scale: Complex64::new(0.3 * k as f64, 0.4 * k as f64),
                factor: Complex64::new(1.5, -0.7),
            };
            let direct = z.value().ln();
            let p = z.principal_log();
            assert!((p - direct).norm() < 1e-10, "{p} vs {direct}");
            let l = z.tracked_log(&mut t).unwrap();
            assert!((l.exp() - z.value()).norm() < 1e-10 * z.value().norm());
            assert!((l.im - (0.4 * k as f64 + Complex64::new(1.5, -0.7).arg())).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_is_rejected() {
        let mut t = BranchTracker::new();
        corrected_log(Complex64::new(1.0, 1.0), &mut t).unwrap();
        assert!(corrected_log(Complex64::new(0.0, 0.0), &mut t).is_err());
        assert!(corrected_log(Complex64::new(f64::NAN, 0.0), &mut t).is_err());
        assert_eq!(t.rotations(), 0);
    }
}
