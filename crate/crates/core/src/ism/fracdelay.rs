//! Hann-windowed sinc kernel for placing impulses at fractional sample delays.

use std::f64::consts::PI;

/// Fractional-delay interpolator with an odd number of taps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FracDelay {
    taps: usize,
}

impl FracDelay {
    /// `taps` must be odd and at least 3.
    pub fn new(taps: usize) -> Option<Self> {
        (taps >= 3 && taps % 2 == 1).then_some(FracDelay { taps })
    }

    pub fn taps(&self) -> usize {
        self.taps
    }

    pub fn half_width(&self) -> usize {
        (self.taps - 1) / 2
    }

    /// Kernel value at offset `x` samples from the impulse center. The window
    /// reaches zero at `|x| = half_width + 1`, just past the outermost tap.
    pub fn eval(&self, x: f64) -> f64 {
        let support = (self.half_width() + 1) as f64;
        if x.abs() >= support {
            return 0.0;
        }
        let window = 0.5 * (1.0 + (PI * x / support).cos());
        let sinc = if x == 0.0 { 1.0 } else { (PI * x).sin() / (PI * x) };
        sinc * window
    }

    /// Writes the kernel for an impulse at `delay` samples into `out` and
    /// returns the absolute index of `out[0]`. The kernel is centered on
    /// `round(delay)`.
    pub fn kernel(&self, delay: f64, out: &mut [f64]) -> i64 {
        debug_assert_eq!(out.len(), self.taps);
        let half = self.half_width() as i64;
        let center = delay.round();
        let frac = delay - center;
        let support = (half + 1) as f64;
        // sin(π(k − frac)) = −(−1)^k · sin(π·frac) for integer k
        let s = (PI * frac).sin();
        for (slot, k) in out.iter_mut().zip(-half..=half) {
            let x = k as f64 - frac;
            let sinc = if x == 0.0 {
                1.0
            } else {
                let sign = if k % 2 == 0 { -1.0 } else { 1.0 };
                sign * s / (PI * x)
            };
            let window = 0.5 * (1.0 + (PI * x / support).cos());
            *slot = sinc * window;
        }
        center as i64 - half
    }
}

impl Default for FracDelay {
    fn default() -> Self {
        FracDelay { taps: 81 }
    }
}
