//! Restoration times and error statistics computed from a trace alone.

use serde::Serialize;

use super::TraceRecord;

/// Settling of the excess ratio after one change of stack current.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Restoration {
    pub step_time: f64,
    pub xi_before: f64,
    pub xi_after: f64,
    /// Seconds until the ratio stays in band for the rest of the interval;
    /// `None` when it never does.
    pub duration: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetrics {
    pub band: f64,
    pub restorations: Vec<Restoration>,
    pub max_abs_e: f64,
    /// Left-rectangle integral of |e| over the run.
    pub iae: f64,
    pub lambda_min: f64,
    /// `lambda_min <= 1`.
    pub starvation: bool,
}

impl RunMetrics {
    pub fn from_records(records: &[TraceRecord], band: f64) -> Self {
        let dt = match records {
            [a, b, ..] => b.t - a.t,
            _ => 0.0,
        };
        let max_abs_e = records.iter().map(|r| r.e.abs()).fold(0.0, f64::max);
        let iae = dt * records.iter().map(|r| r.e.abs()).sum::<f64>();
        let lambda_min = records
            .iter()
            .map(|r| r.lambda)
            .fold(f64::INFINITY, f64::min);
        RunMetrics {
            band,
            restorations: restoration_times(records, band),
            max_abs_e,
            iae,
            lambda_min,
            starvation: lambda_min <= 1.0,
        }
    }

    pub fn all_settled(&self) -> bool {
        self.restorations.iter().all(|r| r.duration.is_some())
    }

    pub fn max_restoration(&self) -> Option<f64> {
        self.restorations
            .iter()
            .map(|r| r.duration)
            .try_fold(0.0_f64, |acc, d| d.map(|d| acc.max(d)))
    }
}

/// For each change of `xi` in the trace, the time after which `lambda`
/// remains within `lambda_ref * (1 +/- band)` until the next change.
pub fn restoration_times(records: &[TraceRecord], band: f64) -> Vec<Restoration> {
    let steps: Vec<usize> = (1..records.len())
        .filter(|&k| records[k].xi != records[k - 1].xi)
        .collect();
    steps
        .iter()
        .enumerate()
        .map(|(i, &start)| {
            let end = steps.get(i + 1).copied().unwrap_or(records.len());
            let interval = &records[start..end];
            let outside = |r: &TraceRecord| (r.lambda - r.lambda_ref).abs() > band * r.lambda_ref;
            let duration = match interval.iter().rposition(outside) {
                None => Some(0.0),
                Some(j) if j + 1 < interval.len() => Some(interval[j + 1].t - interval[0].t),
                Some(_) => None,
            };
            Restoration {
                step_time: interval[0].t,
                xi_before: records[start - 1].xi,
                xi_after: interval[0].xi,
                duration,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(ts: f64, n: usize, lambda: impl Fn(f64) -> f64) -> Vec<TraceRecord> {
        (0..n)
            .map(|k| {
                let t = k as f64 * ts;
                let xi = if t < 1.0 { 100.0 } else { 150.0 };
                let l = lambda(t);
                TraceRecord {
                    t,
                    xi,
                    lambda: l,
                    lambda_ref: 2.2,
                    e: l - 2.2,
                    ..TraceRecord::default()
                }
            })
            .collect()
    }

    #[test]
    fn exponential_recovery() {
        let ts = 1e-3;
        let recs = synthetic(ts, 8001, |t| {
            if t < 1.0 {
                2.2
            } else {
                2.2 + 0.5 * (-(t - 1.0)).exp()
            }
        });
        let r = restoration_times(&recs, 0.02);
        assert_eq!(r.len(), 1);
        let expected = (0.5_f64 / (0.02 * 2.2)).ln();
        let d = r[0].duration.unwrap();
        assert!((d - expected).abs() <= ts, "{d} vs {expected}");
        assert_eq!((r[0].xi_before, r[0].xi_after), (100.0, 150.0));
    }

    #[test]
    fn already_in_band_is_zero() {
        let recs = synthetic(0.01, 500, |_| 2.2);
        assert_eq!(restoration_times(&recs, 0.02)[0].duration, Some(0.0));
    }

    #[test]
    fn never_in_band_is_unsettled() {
        let recs = synthetic(0.01, 500, |t| if t < 1.0 { 2.2 } else { 3.0 });
        let m = RunMetrics::from_records(&recs, 0.02);
        assert_eq!(m.restorations[0].duration, None);
        assert!(!m.all_settled());
        assert_eq!(m.max_restoration(), None);
    }

    #[test]
    fn wider_band_never_slower() {
        let recs = synthetic(1e-3, 6001, |t| {
            2.2 + 0.6 * (-(t - 1.0).max(0.0)).exp() * (7.0 * t).cos()
        });
        let mut last = f64::INFINITY;
        for band in [0.005, 0.01, 0.02, 0.05, 0.1, 0.3] {
            let d = restoration_times(&recs, band)[0]
                .duration
                .unwrap_or(f64::INFINITY);
            assert!(d <= last);
            last = d;
        }
    }

    #[test]
    fn summary_statistics() {
        let recs = synthetic(0.5, 4, |t| 2.2 - t);
        let m = RunMetrics::from_records(&recs, 0.02);
        assert_eq!(m.max_abs_e, 1.5);
        assert_eq!(m.iae, 0.5 * (0.0 + 0.5 + 1.0 + 1.5));
        assert!((m.lambda_min - 0.7).abs() < 1e-12);
        assert!(m.starvation);
    }
}
