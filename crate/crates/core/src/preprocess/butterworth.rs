//! Butterworth IIR design as second-order sections, and zero-phase filtering.
//!
//! Design goes analog prototype -> frequency transform -> bilinear transform,
//! with the edges prewarped so the digital cutoffs land where requested.

use num_complex::Complex64;
use std::f64::consts::PI;

/// One biquad, `b0 + b1 z^-1 + b2 z^-2` over `1 + a1 z^-1 + a2 z^-2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    fn response(&self, z_inv: Complex64) -> Complex64 {
        let num = self.b[0] + z_inv * (self.b[1] + z_inv * self.b[2]);
        let den = 1.0 + z_inv * (self.a[0] + z_inv * self.a[1]);
        num / den
    }

    /// Steady-state transposed direct-form II state for a unit step input.
    fn step_state(&self) -> [f64; 2] {
        let gain = (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1]);
        let z2 = self.b[2] - self.a[1] * gain;
        let z1 = self.b[1] - self.a[0] * gain + z2;
        [z1, z2]
    }

    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }
}

/// A cascade of second-order sections.
#[derive(Debug, Clone, PartialEq)]
pub struct Sos {
    pub sections: Vec<Biquad>,
}

fn prototype_poles(order: usize) -> Vec<Complex64> {
    (1..=order)
        .map(|k| {
            let theta = PI * (2 * k + order - 1) as f64 / (2 * order) as f64;
            Complex64::from_polar(1.0, theta)
        })
        .collect()
}

fn prewarp(freq: f64, fs: f64) -> f64 {
    2.0 * fs * (PI * freq / fs).tan()
}

fn bilinear(s: Complex64, fs: f64) -> Complex64 {
    (2.0 * fs + s) / (2.0 * fs - s)
}

/// Pairs each upper-half-plane pole with its conjugate into a real
/// denominator. Poles on the real axis pair with each other.
fn pole_pairs(poles: &[Complex64]) -> Vec<[f64; 2]> {
    let mut upper: Vec<Complex64> = poles.iter().copied().filter(|p| p.im > 1e-12).collect();
    let mut real: Vec<f64> = poles
        .iter()
        .filter(|p| p.im.abs() <= 1e-12)
        .map(|p| p.re)
        .collect();
    upper.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
    let mut out: Vec<[f64; 2]> = upper
        .iter()
        .map(|p| [-2.0 * p.re, p.norm_sqr()])
        .collect();
    real.sort_by(f64::total_cmp);
    for chunk in real.chunks(2) {
        match chunk {
            [r1, r2] => out.push([-(r1 + r2), r1 * r2]),
            [r] => out.push([-r, 0.0]),
            _ => unreachable!(),
        }
    }
    out
}

impl Sos {
    /// Bandpass with edges `low`..`high` Hz. `order` is the prototype order;
    /// the digital filter has `2 * order` poles in `order` sections.
    pub fn butter_bandpass(order: usize, low: f64, high: f64, fs: f64) -> Sos {
        assert!(order >= 1 && 0.0 < low && low < high && high < fs / 2.0);
        let w1 = prewarp(low, fs);
        let w2 = prewarp(high, fs);
        let bw = w2 - w1;
        let w0_sq = w1 * w2;

        let mut poles = Vec::with_capacity(2 * order);
        for p in prototype_poles(order) {
            let half = p * bw / 2.0;
            let root = (half * half - w0_sq).sqrt();
            poles.push(bilinear(half + root, fs));
            poles.push(bilinear(half - root, fs));
        }
        // order zeros at s = 0 map to z = 1, order at infinity to z = -1
        let sections: Vec<Biquad> = pole_pairs(&poles)
            .into_iter()
            .map(|a| Biquad {
                b: [1.0, 0.0, -1.0],
                a,
            })
            .collect();
        let mut sos = Sos { sections };
        let center = 2.0 * (w0_sq.sqrt() / (2.0 * fs)).atan();
        sos.normalize_at(center);
        sos
    }

    /// Lowpass with cutoff `cutoff` Hz and `order` poles.
    pub fn butter_lowpass(order: usize, cutoff: f64, fs: f64) -> Sos {
        assert!(order >= 1 && 0.0 < cutoff && cutoff < fs / 2.0);
        let wc = prewarp(cutoff, fs);
        let poles: Vec<Complex64> = prototype_poles(order)
            .into_iter()
            .map(|p| bilinear(p * wc, fs))
            .collect();
        let sections: Vec<Biquad> = pole_pairs(&poles)
            .into_iter()
            .map(|a| {
                if a[1] == 0.0 {
                    // first-order remainder
                    Biquad {
                        b: [1.0, 1.0, 0.0],
                        a,
                    }
                } else {
                    Biquad {
                        b: [1.0, 2.0, 1.0],
                        a,
                    }
                }
            })
            .collect();
        let mut sos = Sos { sections };
        sos.normalize_at(0.0);
        sos
    }

    /// Complex response at normalized angular frequency `omega` (rad/sample).
    pub fn response(&self, omega: f64) -> Complex64 {
        let z_inv = Complex64::from_polar(1.0, -omega);
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(z_inv))
    }

    fn normalize_at(&mut self, omega: f64) {
        let gain = self.response(omega).norm();
        if let Some(first) = self.sections.first_mut() {
            for b in &mut first.b {
                *b /= gain;
            }
        }
    }

    /// Causal filtering with an explicit initial state per section.
    fn filter_with_state(&self, x: &mut [f64], mut state: Vec<[f64; 2]>) {
        for (s, z) in self.sections.iter().zip(state.iter_mut()) {
            for v in x.iter_mut() {
                let input = *v;
                let y = s.b[0] * input + z[0];
                z[0] = s.b[1] * input - s.a[0] * y + z[1];
                z[1] = s.b[2] * input - s.a[1] * y;
                *v = y;
            }
        }
    }

    /// Initial state for a step of height `x0` entering the cascade.
    fn step_states(&self, x0: f64) -> Vec<[f64; 2]> {
        let mut scale = x0;
        self.sections
            .iter()
            .map(|s| {
                let z = s.step_state();
                let out = [z[0] * scale, z[1] * scale];
                scale *= s.dc_gain();
                out
            })
            .collect()
    }

    /// Causal filtering from rest.
    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        self.filter_with_state(&mut y, vec![[0.0; 2]; self.sections.len()]);
        y
    }

    /// Forward-backward filtering with odd-reflection padding and
    /// steady-state initial conditions. The result has zero phase and the
    /// squared magnitude response of the cascade.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        if n == 0 {
            return Vec::new();
        }
        let pad = (3 * (2 * self.sections.len() + 1)).min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        for i in (1..=pad).rev() {
            ext.push(2.0 * x[0] - x[i]);
        }
        ext.extend_from_slice(x);
        for i in 1..=pad {
            ext.push(2.0 * x[n - 1] - x[n - 1 - i]);
        }

        let state = self.step_states(ext[0]);
        self.filter_with_state(&mut ext, state);
        ext.reverse();
        let state = self.step_states(ext[0]);
        self.filter_with_state(&mut ext, state);
        ext.reverse();
        ext[pad..pad + n].to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn db(x: f64) -> f64 {
        20.0 * x.log10()
    }

    #[test]
    fn bandpass_edges_are_minus_three_db() {
        let fs = 1000.0;
        let sos = Sos::butter_bandpass(4, 15.0, 150.0, fs);
        assert_eq!(sos.sections.len(), 4);
        for f in [15.0, 150.0] {
            let g = sos.response(2.0 * PI * f / fs).norm();
            assert!((db(g) + 3.0103).abs() < 0.01, "gain at {f} Hz = {} dB", db(g));
        }
        assert!(sos.response(0.0).norm() < 1e-12);
        assert!(sos.response(PI).norm() < 1e-12);
        let center = (15.0f64 * 150.0).sqrt();
        assert!(db(sos.response(2.0 * PI * 60.0 / fs).norm()).abs() < 0.1);
        assert!(db(sos.response(2.0 * PI * center / fs).norm()).abs() < 0.5);
    }

    #[test]
    fn bandpass_is_stable() {
        let sos = Sos::butter_bandpass(4, 15.0, 150.0, 1000.0);
        for s in &sos.sections {
            // roots of z^2 + a1 z + a2 inside the unit circle
            assert!(s.a[1].abs() < 1.0);
            assert!(s.a[0].abs() < 1.0 + s.a[1]);
        }
    }

    #[test]
    fn lowpass_dc_and_cutoff() {
        let fs = 2000.0;
        let sos = Sos::butter_lowpass(8, 400.0, fs);
        assert!((sos.response(0.0).norm() - 1.0).abs() < 1e-12);
        let g = sos.response(2.0 * PI * 400.0 / fs).norm();
        assert!((db(g) + 3.0103).abs() < 0.01);
        assert!(sos.response(2.0 * PI * 800.0 / fs).norm() < 1e-3);
    }

    #[test]
    fn odd_order_lowpass_has_first_order_section() {
        let sos = Sos::butter_lowpass(3, 100.0, 1000.0);
        assert_eq!(sos.sections.len(), 2);
        assert!((sos.response(0.0).norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn filtfilt_keeps_constant_through_lowpass() {
        let sos = Sos::butter_lowpass(4, 50.0, 1000.0);
        let y = sos.filtfilt(&vec![3.0; 500]);
        assert!(y.iter().all(|v| (v - 3.0).abs() < 1e-9));
    }

    #[test]
    fn filtfilt_has_zero_phase() {
        // a symmetric pulse stays symmetric about the same center
        let n = 801;
        let x: Vec<f64> = (0..n)
            .map(|i| {
                let t = (i as f64 - 400.0) / 1000.0;
                (2.0 * PI * 60.0 * t).cos() * (-(t * t) / (2.0 * 0.02f64.powi(2))).exp()
            })
            .collect();
        let sos = Sos::butter_bandpass(4, 15.0, 150.0, 1000.0);
        let y = sos.filtfilt(&x);
        for k in 1..300 {
            assert!((y[400 - k] - y[400 + k]).abs() < 1e-6);
        }
        let peak = y
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(peak, 400);
    }
}
