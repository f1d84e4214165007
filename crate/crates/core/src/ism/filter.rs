//! Octave-band Butterworth bandpass filters.
//!
//! Each band is a second-order Butterworth lowpass prototype mapped to a
//! bandpass (fourth order overall) and discretized with the bilinear
//! transform, with band edges prewarped. The result runs as two cascaded
//! biquads in transposed direct form II.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

use num_complex::Complex64;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Biquad {
    b: [f64; 3],
    // a[0] is implicitly 1
    a: [f64; 2],
}

impl Biquad {
    fn response(&self, z_inv: Complex64) -> Complex64 {
        let z2 = z_inv * z_inv;
        (self.b[0] + self.b[1] * z_inv + self.b[2] * z2) / (1.0 + self.a[0] * z_inv + self.a[1] * z2)
    }

    fn run(&self, signal: &mut [f64]) {
        let (mut s1, mut s2) = (0.0, 0.0);
        for x in signal.iter_mut() {
            let input = *x;
            let y = self.b[0] * input + s1;
            s1 = self.b[1] * input - self.a[0] * y + s2;
            s2 = self.b[2] * input - self.a[1] * y;
            *x = y;
        }
    }
}

/// Causal octave bandpass around a center frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct OctaveBandpass {
    sections: [Biquad; 2],
    fs: f64,
    low_hz: f64,
    high_hz: f64,
}

impl OctaveBandpass {
    /// Edges at `center/√2` and `center·√2`; the upper edge is clipped to
    /// 0.95 of Nyquist.
    pub fn new(center_hz: f64, fs: f64) -> Self {
        let low_hz = center_hz * FRAC_1_SQRT_2;
        let high_hz = (center_hz * SQRT_2).min(0.95 * fs / 2.0);

        let prewarp = |f: f64| 2.0 * fs * (PI * f / fs).tan();
        let (w1, w2) = (prewarp(low_hz), prewarp(high_hz));
        let w0_sq = w1 * w2;
        let bw = w2 - w1;

        // upper-half-plane pole of the 2nd-order Butterworth prototype; its
        // conjugate yields the conjugates of the bandpass poles below
        let proto = Complex64::from_polar(1.0, 0.75 * PI);
        let pb = proto * bw;
        let disc = (pb * pb - 4.0 * w0_sq).sqrt();
        let analog = [(pb + disc) * 0.5, (pb - disc) * 0.5];

        let k = 2.0 * fs;
        let mut sections = analog.map(|s| {
            let z = (k + s) / (k - s);
            Biquad {
                b: [1.0, 0.0, -1.0],
                a: [-2.0 * z.re, z.norm_sqr()],
            }
        });

        // unit gain at the (digital image of the) geometric center
        let wc = 2.0 * (w0_sq.sqrt() / k).atan();
        let z_inv = Complex64::from_polar(1.0, -wc);
        let g = sections
            .iter()
            .map(|s| s.response(z_inv))
            .product::<Complex64>()
            .norm();
        let per_section = g.sqrt().recip();
        for s in &mut sections {
            for b in &mut s.b {
                *b *= per_section;
            }
        }

        OctaveBandpass {
            sections,
            fs,
            low_hz,
            high_hz,
        }
    }

    pub fn edges_hz(&self) -> (f64, f64) {
        (self.low_hz, self.high_hz)
    }

    /// Complex frequency response at `freq_hz`.
    pub fn response(&self, freq_hz: f64) -> Complex64 {
        let z_inv = Complex64::from_polar(1.0, -2.0 * PI * freq_hz / self.fs);
        self.sections.iter().map(|s| s.response(z_inv)).product()
    }

    pub fn process_in_place(&self, signal: &mut [f64]) {
        for s in &self.sections {
            s.run(signal);
        }
    }

    pub fn process(&self, signal: &[f64]) -> Vec<f64> {
        let mut out = signal.to_vec();
        self.process_in_place(&mut out);
        out
    }
}

/// Filters `signal` through the octave band centered on `center_hz`.
pub fn octave_bandpass(signal: &[f64], center_hz: f64, fs: f64) -> Vec<f64> {
    OctaveBandpass::new(center_hz, fs).process(signal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::room::OCTAVE_BANDS_HZ;

    const FS: f64 = 44_100.0;

    fn tone(freq: f64, secs: f64) -> Vec<f64> {
        let n = (secs * FS) as usize;
        (0..n)
            .map(|i| (2.0 * PI * freq * i as f64 / FS).sin())
            .collect()
    }

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    /// Output/input RMS ratio in dB over the second half of a 2 s probe.
    fn probe_gain_db(center: f64, freq: f64) -> f64 {
        let x = tone(freq, 2.0);
        let y = octave_bandpass(&x, center, FS);
        let tail = x.len() / 2;
        20.0 * (rms(&y[tail..]) / rms(&x[tail..])).log10()
    }

    #[test]
    fn center_tone_passes_within_1db() {
        for c in OCTAVE_BANDS_HZ {
            let g = probe_gain_db(c, c);
            assert!(g.abs() < 1.0, "band {c}: {g} dB");
        }
    }

    #[test]
    fn tone_one_octave_past_edges_is_attenuated() {
        for c in OCTAVE_BANDS_HZ {
            let (lo, hi) = OctaveBandpass::new(c, FS).edges_hz();
            let above = 2.0 * hi;
            if above < FS / 2.0 {
                let g = probe_gain_db(c, above);
                assert!(g <= -20.0, "band {c} at {above} Hz: {g} dB");
            }
            let below = lo / 2.0;
            let g = probe_gain_db(c, below);
            assert!(g <= -20.0, "band {c} at {below} Hz: {g} dB");
        }
    }

    #[test]
    fn edges_sit_near_minus_3db() {
        for c in OCTAVE_BANDS_HZ {
            let f = OctaveBandpass::new(c, FS);
            let (lo, hi) = f.edges_hz();
            for e in [lo, hi] {
                let db = 20.0 * f.response(e).norm().log10();
                assert!((db + 3.0103).abs() < 0.01, "band {c} edge {e}: {db}");
            }
        }
    }

    #[test]
    fn zero_in_zero_out() {
        let y = octave_bandpass(&[0.0; 512], 1000.0, FS);
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn upper_edge_clipped_below_nyquist() {
        let f = OctaveBandpass::new(8000.0, 16_000.0);
        assert!((f.edges_hz().1 - 0.95 * 8000.0).abs() < 1e-9);
    }

    #[test]
    fn sine_probe_agrees_with_analytic_response() {
        let f = OctaveBandpass::new(500.0, FS);
        for freq in [300.0, 500.0, 900.0] {
            let analytic = 20.0 * f.response(freq).norm().log10();
            let measured = probe_gain_db(500.0, freq);
            assert!((analytic - measured).abs() < 0.05, "{freq}: {analytic} vs {measured}");
        }
    }
}
