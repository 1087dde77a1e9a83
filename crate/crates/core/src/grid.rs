//! Sample points in the `(t, x)` plane.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Rectangle `[t0, t1] × [x0, x1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Window {
    pub t0: f64,
    pub t1: f64,
    pub x0: f64,
    pub x1: f64,
}

impl Default for Window {
    /// Keeps clear of `x = 0`, where drifts such as `a/x` blow up.
    fn default() -> Self {
        Window { t0: 0.1, t1: 2.0, x0: 0.5, x1: 2.0 }
    }
}

impl Window {
    pub fn new(t0: f64, t1: f64, x0: f64, x1: f64) -> Self {
        Window { t0, t1, x0, x1 }
    }

    /// Parse `t0,t1,x0,x1`.
    pub fn parse(text: &str) -> Option<Window> {
        let v: Vec<f64> = text.split(',').map(|s| s.trim().parse().ok()).collect::<Option<_>>()?;
        match v[..] {
            [t0, t1, x0, x1] if t0 < t1 && x0 < x1 => Some(Window::new(t0, t1, x0, x1)),
            _ => None,
        }
    }
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

/// Infinite stream of Halton(2,3) points with a seeded Cranley–Patterson
/// shift, mapped onto a window.
#[derive(Clone, Debug)]
pub struct PointSampler {
    window: Window,
    shift: (f64, f64),
    index: u64,
}

impl PointSampler {
    pub fn new(window: Window, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shift = (rng.random::<f64>(), rng.random::<f64>());
        PointSampler { window, shift, index: 1 }
    }

    /// Skip ahead so that a second sampler with the same seed draws disjoint points.
    pub fn starting_at(mut self, index: u64) -> Self {
        self.index = index.max(1);
        self
    }
}

impl Iterator for PointSampler {
    type Item = (f64, f64);

    fn next(&mut self) -> Option<(f64, f64)> {
        let u = (radical_inverse(self.index, 2) + self.shift.0).fract();
        let v = (radical_inverse(self.index, 3) + self.shift.1).fract();
        self.index += 1;
        let w = &self.window;
        Some((w.t0 + u * (w.t1 - w.t0), w.x0 + v * (w.x1 - w.x0)))
    }
}

/// `n` quasi-random points.
pub fn sample_points(window: Window, n: usize, seed: u64) -> Vec<(f64, f64)> {
    PointSampler::new(window, seed).take(n).collect()
}
