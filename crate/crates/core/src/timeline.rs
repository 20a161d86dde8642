//! Output schedule shared by the time-stepping solvers.
//!
//! Every solver advances between consecutive output times with a uniform
//! step no larger than the requested one, so samples land exactly on the
//! requested times.

use crate::diagnostics::DiagnosticsRow;
use crate::error::{invalid, Result};
use crate::model::GridFunction;

const MERGE_TOL: f64 = 1e-12;

/// Output times on `[0, t_end]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    times: Vec<f64>,
    samples: Vec<bool>,
    snapshots: Vec<bool>,
}

impl Schedule {
    /// Samples at `0, sample_dt, 2 sample_dt, ...` and at `t_end`, plus
    /// snapshots at the listed times. Snapshot times outside `[0, t_end]`
    /// are rejected.
    pub fn new(t_end: f64, sample_dt: f64, snapshot_times: &[f64]) -> Result<Self> {
        if !(t_end.is_finite() && t_end >= 0.0) {
            return Err(invalid("t_end", format!("must be non-negative, got {t_end}")));
        }
        if !(sample_dt.is_finite() && sample_dt > 0.0) {
            return Err(invalid(
                "sample_dt",
                format!("must be positive, got {sample_dt}"),
            ));
        }
        let mut marks: Vec<(f64, bool, bool)> = Vec::new();
        let n = (t_end / sample_dt * (1.0 + 1e-12)).floor() as usize;
        for k in 0..=n {
            marks.push(((k as f64 * sample_dt).min(t_end), true, false));
        }
        marks.push((t_end, true, false));
        for &t in snapshot_times {
            if !(t.is_finite() && (0.0..=t_end * (1.0 + MERGE_TOL)).contains(&t)) {
                return Err(invalid(
                    "snapshot_times",
                    format!("{t} lies outside [0, {t_end}]"),
                ));
            }
            marks.push((t.min(t_end), false, true));
        }
        marks.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut times: Vec<f64> = Vec::new();
        let mut samples: Vec<bool> = Vec::new();
        let mut snapshots: Vec<bool> = Vec::new();
        for (t, s, p) in marks {
            match times.last() {
                Some(&last) if (t - last).abs() <= MERGE_TOL * t_end.max(1.0) => {
                    let k = times.len() - 1;
                    samples[k] |= s;
                    snapshots[k] |= p;
                }
                _ => {
                    times.push(t);
                    samples.push(s);
                    snapshots.push(p);
                }
            }
        }
        Ok(Self {
            times,
            samples,
            snapshots,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn is_sample(&self, k: usize) -> bool {
        self.samples[k]
    }

    pub fn is_snapshot(&self, k: usize) -> bool {
        self.snapshots[k]
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Number of uniform steps of size at most `dt` covering `[t0, t1]`, and
/// the step actually used.
pub fn substeps(t0: f64, t1: f64, dt: f64) -> (usize, f64) {
    let span = t1 - t0;
    if span <= 0.0 {
        return (0, 0.0);
    }
    let n = ((span / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    (n, span / n as f64)
}

/// Density stored at one output time.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub f: GridFunction,
}

/// Diagnostics series, stored snapshots and final state of a solver run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub rows: Vec<DiagnosticsRow>,
    pub snapshots: Vec<Snapshot>,
    pub final_state: GridFunction,
}

impl Trajectory {
    /// Sample indices `k` where `H(t_{k+1}) > H(t_k) + tol`.
    pub fn entropy_increases(&self, tol: f64) -> Vec<usize> {
        increases(&self.rows, |r| r.entropy, tol)
    }

    /// Sample indices where the Hellinger distance to equilibrium grows.
    /// Reported as data; monotonicity is not guaranteed.
    pub fn hellinger_increases(&self, tol: f64) -> Vec<usize> {
        increases(&self.rows, |r| r.hellinger, tol)
    }
}

fn increases(rows: &[DiagnosticsRow], key: impl Fn(&DiagnosticsRow) -> f64, tol: f64) -> Vec<usize> {
    rows.windows(2)
        .enumerate()
        .filter(|(_, w)| key(&w[1]) > key(&w[0]) + tol)
        .map(|(k, _)| k)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merges_samples_and_snapshots() {
        let s = Schedule::new(1.0, 0.25, &[0.5, 0.6]).unwrap();
        assert_eq!(s.times(), &[0.0, 0.25, 0.5, 0.6, 0.75, 1.0]);
        assert!(s.is_sample(2) && s.is_snapshot(2));
        assert!(!s.is_sample(3) && s.is_snapshot(3));
    }

    #[test]
    fn t_end_is_always_sampled() {
        let s = Schedule::new(1.0, 0.3, &[]).unwrap();
        assert_eq!(s.times().last(), Some(&1.0));
        assert_eq!(s.len(), 5);
    }

    #[test]
    fn rejects_snapshot_past_end() {
        assert!(Schedule::new(1.0, 0.1, &[2.0]).is_err());
        assert!(Schedule::new(1.0, 0.0, &[]).is_err());
    }

    #[test]
    fn substeps_hit_the_endpoint() {
        let (n, h) = substeps(0.0, 1.0, 0.3);
        assert_eq!(n, 4);
        assert_eq!(h, 0.25);
        let (n, h) = substeps(0.0, 1.0, 0.25);
        assert_eq!((n, h), (4, 0.25));
        assert_eq!(substeps(1.0, 1.0, 0.1).0, 0);
    }
}
