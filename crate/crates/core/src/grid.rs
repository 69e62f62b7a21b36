//! Piecewise-uniform time grids.
//!
//! A grid is a sequence of segments, each with its own step. Every segment is
//! sampled at its nodes *and* at the midpoints between them, because the
//! fourth-order Runge–Kutta stepper needs drive values at half steps. Segment
//! boundaries appear twice in the sample list (once as the last sample of the
//! left segment, once as the first sample of the right segment), so a field
//! that switches at a boundary keeps both its left and right limit.
//!
//! `t = 0` (pulse switch-off) is always a segment boundary when it lies
//! strictly inside the grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub steps: usize,
}

impl Segment {
    pub fn step(&self) -> f64 {
        (self.end - self.start) / self.steps as f64
    }

    pub fn n_samples(&self) -> usize {
        2 * self.steps + 1
    }

    pub(crate) fn sample_time(&self, i: usize) -> f64 {
        if i == 2 * self.steps {
            self.end
        } else {
            self.start + i as f64 * 0.5 * self.step()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    segments: Vec<Segment>,
}

impl TimeGrid {
    /// Builds a grid from ascending breakpoints and one nominal step per
    /// interval. Each interval gets `ceil(length / dt)` equal steps. Zero is
    /// inserted as an extra breakpoint when it falls strictly inside.
    pub fn segmented(breakpoints: &[f64], dts: &[f64]) -> Result<Self> {
        if breakpoints.len() < 2 || dts.len() + 1 != breakpoints.len() {
            return Err(Error::InvalidGrid("need n+1 breakpoints for n steps".into()));
        }
        let mut segments = Vec::with_capacity(dts.len() + 1);
        for (w, &dt) in breakpoints.windows(2).zip(dts) {
            let (a, b) = (w[0], w[1]);
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(Error::InvalidGrid(format!("breakpoints must ascend: {a} !< {b}")));
            }
            if !(dt.is_finite() && dt > 0.0) {
                return Err(Error::InvalidGrid(format!("step must be > 0, got {dt}")));
            }
            if a < 0.0 && b > 0.0 {
                segments.push(make_segment(a, 0.0, dt));
                segments.push(make_segment(0.0, b, dt));
            } else {
                segments.push(make_segment(a, b, dt));
            }
        }
        Ok(Self { segments })
    }

    /// Uniform nominal step over `[t_start, t_end]`.
    pub fn uniform(t_start: f64, t_end: f64, dt: f64) -> Result<Self> {
        Self::segmented(&[t_start, t_end], &[dt])
    }

    /// Grid for a pulse of `duration` ending at zero followed by a decay
    /// window: step `dt_pulse` on `[-duration, 0]`, `dt_decay` on `[0, t_end]`.
    pub fn for_pulse(duration: f64, t_end: f64, dt_pulse: f64, dt_decay: f64) -> Result<Self> {
        if !(duration > 0.0) {
            return Err(Error::InvalidGrid(format!("pulse duration must be > 0, got {duration}")));
        }
        Self::segmented(&[-duration, 0.0, t_end], &[dt_pulse, dt_decay])
    }

    /// Decay-only grid starting at zero.
    pub fn decay(t_end: f64, dt: f64) -> Result<Self> {
        Self::uniform(0.0, t_end, dt)
    }

    /// Same breakpoints, every step divided by `factor`.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            segments: self
                .segments
                .iter()
                .map(|s| Segment { steps: s.steps * factor.max(1), ..*s })
                .collect(),
        }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn t_start(&self) -> f64 {
        self.segments[0].start
    }

    pub fn t_end(&self) -> f64 {
        self.segments[self.segments.len() - 1].end
    }

    pub fn contains_zero(&self) -> bool {
        self.t_start() <= 0.0 && self.t_end() > 0.0
    }

    pub fn is_breakpoint(&self, t: f64) -> bool {
        let tol = 1e-9 * (1.0 + t.abs());
        self.segments
            .iter()
            .any(|s| (s.start - t).abs() < tol || (s.end - t).abs() < tol)
    }

    /// Total number of samples (nodes, midpoints, duplicated boundaries).
    pub fn n_samples(&self) -> usize {
        self.segments.iter().map(Segment::n_samples).sum()
    }

    /// Index of the first sample of every segment.
    pub fn segment_offsets(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.segments.len());
        let mut acc = 0;
        for s in &self.segments {
            out.push(acc);
            acc += s.n_samples();
        }
        out
    }

    pub fn sample_times(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_samples());
        for s in &self.segments {
            out.extend((0..s.n_samples()).map(|i| s.sample_time(i)));
        }
        out
    }

    /// Sample indices of the public node grid: every full step, with
    /// boundaries represented by their right limit (the first sample of the
    /// following segment).
    pub fn node_indices(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let last = self.segments.len() - 1;
        for (k, (s, off)) in self.segments.iter().zip(self.segment_offsets()).enumerate() {
            let n_nodes = if k == last { s.steps + 1 } else { s.steps };
            out.extend((0..n_nodes).map(|j| off + 2 * j));
        }
        out
    }

    pub fn node_times(&self) -> Vec<f64> {
        let t = self.sample_times();
        self.node_indices().into_iter().map(|i| t[i]).collect()
    }

    /// Index of the first segment whose start is `>= t` (within rounding).
    pub fn segment_starting_at(&self, t: f64) -> Option<usize> {
        let tol = 1e-9 * (1.0 + t.abs());
        self.segments.iter().position(|s| (s.start - t).abs() < tol)
    }

    /// Picks node-grid values out of a sample-level series.
    pub fn nodes_of<T: Copy>(&self, samples: &[T]) -> Vec<T> {
        self.node_indices().into_iter().map(|i| samples[i]).collect()
    }

    /// Simpson integral of a sample-level series over the part of the grid
    /// with `t >= from`. `from` must be a segment boundary or the grid start.
    pub fn integrate_from(&self, values: &[f64], from: f64) -> f64 {
        let tol = 1e-9 * (1.0 + from.abs());
        let mut total = 0.0;
        for (s, off) in self.segments.iter().zip(self.segment_offsets()) {
            if s.start + tol < from {
                continue;
            }
            let h = s.step();
            for j in 0..s.steps {
                let i = off + 2 * j;
                total += h / 6.0 * (values[i] + 4.0 * values[i + 1] + values[i + 2]);
            }
        }
        total
    }

    /// Fourth-order finite-difference derivative of a sample-level series,
    /// computed independently inside each segment (so jumps at boundaries do
    /// not leak). Segments need at least two steps.
    pub fn derivative(&self, values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; values.len()];
        for (s, off) in self.segments.iter().zip(self.segment_offsets()) {
            let n = s.n_samples();
            let h = 0.5 * s.step();
            let v = &values[off..off + n];
            let d = &mut out[off..off + n];
            if n < 5 {
                // one step: fall back to second order
                for i in 0..n {
                    d[i] = if i == 0 {
                        (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h)
                    } else if i == n - 1 {
                        (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * h)
                    } else {
                        (v[i + 1] - v[i - 1]) / (2.0 * h)
                    };
                }
                continue;
            }
            for i in 0..n {
                d[i] = if i >= 2 && i + 2 < n {
                    (v[i - 2] - 8.0 * v[i - 1] + 8.0 * v[i + 1] - v[i + 2]) / (12.0 * h)
                } else if i < 2 {
                    let w = &v[i..i + 5];
                    let f = [-25.0, 48.0, -36.0, 16.0, -3.0];
                    let g = [-3.0, -10.0, 18.0, -6.0, 1.0];
                    if i == 0 {
                        dot(&f, w) / (12.0 * h)
                    } else {
                        dot(&g, &v[i - 1..i + 4]) / (12.0 * h)
                    }
                } else if i == n - 2 {
                    let g = [-1.0, 6.0, -18.0, 10.0, 3.0];
                    dot(&g, &v[i - 3..i + 2]) / (12.0 * h)
                } else {
                    let f = [3.0, -16.0, 36.0, -48.0, 25.0];
                    dot(&f, &v[i - 4..i + 1]) / (12.0 * h)
                };
            }
        }
        out
    }
}

fn dot(a: &[f64; 5], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn make_segment(start: f64, end: f64, dt: f64) -> Segment {
    let steps = ((end - start) / dt - 1e-9).ceil().max(1.0) as usize;
    Segment { start, end, steps }
}
