//! Sequence distance, stopping-time growth ceilings, and the statistical
//! aggregation that turns per-seed event logs into checkable curves.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::partitions::{CellCount, PartitionError, PartitionFamily};
use crate::scalar::Scalar;
use crate::stopping::{LagSchedule, ScanEvent, StoppingError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("sequences expose different depths: {a} vs {b}")]
    DepthMismatch { a: usize, b: usize },
    #[error("sequences must expose at least coordinate 0")]
    EmptySequence,
    #[error("samples must be nonempty")]
    EmptySample,
    #[error("growth bounds need a finite partition family")]
    UnsupportedFamily,
    #[error("the growth ceiling series diverges for this schedule and epsilon")]
    NotSummable,
    #[error("epsilon must be positive and finite, got {0}")]
    BadEpsilon(f64),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Stopping(#[from] StoppingError),
}

/// Truncated past-weighted distance between two one-sided sequences, with a
/// certified truncation error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DstarDistance<S> {
    pub value: S,
    /// Every omitted summand is below `2^-(i+1)`, so the omitted tail is
    /// below `2^-(depth+1)`.
    pub tail_bound: S,
}

/// Distance `sum_i 2^-(i+1) |a_i - b_i| / (1 + |a_i - b_i|)` over the
/// available coordinates, most recent first: `a[0]` is coordinate 0, `a[i]`
/// coordinate `-i`. Exact whenever the sequences agree beyond the depth.
pub fn dstar<S: Scalar>(recent_a: &[S], recent_b: &[S]) -> Result<DstarDistance<S>, AnalysisError> {
    if recent_a.len() != recent_b.len() {
        return Err(AnalysisError::DepthMismatch { a: recent_a.len(), b: recent_b.len() });
    }
    if recent_a.is_empty() {
        return Err(AnalysisError::EmptySequence);
    }
    let mut weight = S::half();
    let mut value = S::zero();
    for (&a, &b) in recent_a.iter().zip(recent_b.iter()) {
        let d = (a - b).abs();
        value = value + weight * d / (S::one() + d);
        weight = weight * S::half();
    }
    // After the loop `weight` is 2^-(depth+2); the tail bound is one factor
    // of two above it.
    Ok(DstarDistance { value, tail_bound: weight + weight })
}

/// Inputs of the growth ceiling: a positive rate `epsilon`, a finite
/// partition family, and the lag schedule driving the scanner.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowthBoundSpec<S> {
    pub epsilon: f64,
    pub family: PartitionFamily<S>,
    pub schedule: LagSchedule,
}

/// Whether `sum_k (k+1) 2^(-l_k epsilon)` converges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Summability {
    /// Settled symbolically from the schedule rule.
    Proved,
    /// Table schedules can only be summed to their horizon.
    PartialSum { through: u32, sum: f64 },
}

/// The per-level ceiling value `|cells(k)|^{l_k} 2^{l_k epsilon}`, carried in
/// log2 form with a saturating linear companion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthBound {
    pub log2: f64,
    pub linear: f64,
}

impl<S: Scalar> GrowthBoundSpec<S> {
    pub fn new(
        epsilon: f64,
        family: PartitionFamily<S>,
        schedule: LagSchedule,
    ) -> Result<Self, AnalysisError> {
        let spec = GrowthBoundSpec { epsilon, family, schedule };
        spec.validate()?;
        Ok(spec)
    }

    /// Checks the family is finite and the ceiling series summable.
    pub fn validate(&self) -> Result<Summability, AnalysisError> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(AnalysisError::BadEpsilon(self.epsilon));
        }
        self.family.validate()?;
        self.schedule.validate()?;
        if !self.family.is_finite() {
            return Err(AnalysisError::UnsupportedFamily);
        }
        match &self.schedule {
            // l_k = k: terms (k+1) 2^(-k eps) decay geometrically.
            LagSchedule::Linear => Ok(Summability::Proved),
            // l_k ~ c log2 k: terms ~ k^(1 - c eps), summable iff c eps > 2.
            LagSchedule::LogFloor { c } => {
                if c * self.epsilon > 2.0 {
                    Ok(Summability::Proved)
                } else {
                    Err(AnalysisError::NotSummable)
                }
            }
            LagSchedule::Custom { table } => {
                let mut sum = 0.0;
                for (i, &l) in table.iter().enumerate() {
                    let k = i as f64 + 1.0;
                    sum += (k + 1.0) * 2f64.powf(-(f64::from(l)) * self.epsilon);
                }
                Ok(Summability::PartialSum { through: table.len() as u32, sum })
            }
        }
    }

    /// Ceiling on `zeta_k` (in log2 plus saturating linear form).
    pub fn growth_bound(&self, k: u32) -> Result<GrowthBound, AnalysisError> {
        let lag = f64::from(self.schedule.lag(k)?);
        let cells = match self.family.cell_count(k)? {
            CellCount::Finite(n) => n as f64,
            CellCount::Infinite => return Err(AnalysisError::UnsupportedFamily),
        };
        let log2 = lag * (cells.log2() + self.epsilon);
        Ok(GrowthBound { log2, linear: log2.exp2() })
    }

    /// The probability ceiling `(k+1) 2^(-l_k epsilon)` on exceeding the
    /// growth bound at level k.
    pub fn ceiling(&self, k: u32) -> Result<f64, AnalysisError> {
        let lag = f64::from(self.schedule.lag(k)?);
        Ok((f64::from(k) + 1.0) * 2f64.powf(-lag * self.epsilon))
    }
}

/// Observed exceedance frequency of the growth bound at one level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundCheckRow {
    pub k: u32,
    pub n_seeds: u32,
    pub violations: u32,
    pub rate: f64,
    pub bound_log2: f64,
    /// Theoretical probability ceiling for the exceedance.
    pub ceiling: f64,
}

/// Per-level exceedance frequencies across seeds. Levels are aggregated over
/// the seeds that reached them.
pub fn bound_violation_rate<S: Scalar>(
    per_seed_events: &[Vec<ScanEvent>],
    spec: &GrowthBoundSpec<S>,
) -> Result<Vec<BoundCheckRow>, AnalysisError> {
    let mut by_level: BTreeMap<u32, (u32, u32)> = BTreeMap::new();
    for events in per_seed_events {
        for ev in events {
            let bound = spec.growth_bound(ev.k)?;
            let entry = by_level.entry(ev.k).or_insert((0, 0));
            entry.0 += 1;
            if ev.zeta as f64 >= bound.linear {
                entry.1 += 1;
            }
        }
    }
    by_level
        .into_iter()
        .map(|(k, (n, viol))| {
            let bound = spec.growth_bound(k)?;
            Ok(BoundCheckRow {
                k,
                n_seeds: n,
                violations: viol,
                rate: f64::from(viol) / f64::from(n),
                bound_log2: bound.log2,
                ceiling: spec.ceiling(k)?,
            })
        })
        .collect()
}

/// Two-sample Kolmogorov-Smirnov distance: the sup-difference of the two
/// empirical CDFs.
pub fn ks_distance<S: Scalar>(a: &[S], b: &[S]) -> Result<f64, AnalysisError> {
    if a.is_empty() || b.is_empty() {
        return Err(AnalysisError::EmptySample);
    }
    let mut xs: Vec<S> = a.to_vec();
    let mut ys: Vec<S> = b.to_vec();
    xs.sort_unstable_by(|p, q| p.partial_cmp(q).expect("samples must not contain NaN"));
    ys.sort_unstable_by(|p, q| p.partial_cmp(q).expect("samples must not contain NaN"));
    let (n, m) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < xs.len() || j < ys.len() {
        let v = match (xs.get(i), ys.get(j)) {
            (Some(&x), Some(&y)) => {
                if x < y {
                    x
                } else {
                    y
                }
            }
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        while i < xs.len() && xs[i] <= v {
            i += 1;
        }
        while j < ys.len() && ys[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    Ok(d)
}

/// One prediction with its oracle value, the unit the curves aggregate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionRow {
    pub seed: u64,
    pub k: u32,
    pub zeta: u64,
    pub g: f64,
    /// Exact conditional expectation at the stopping time, when the model
    /// provides one.
    pub oracle: Option<f64>,
}

impl PredictionRow {
    pub fn abs_err(&self) -> Option<f64> {
        self.oracle.map(|o| (self.g - o).abs())
    }
}

/// Per-level aggregates over seeds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveRow {
    pub k: u32,
    pub n_seeds: u32,
    pub median_abs_err: Option<f64>,
    pub mean_abs_err: Option<f64>,
    pub q25_abs_err: Option<f64>,
    pub q75_abs_err: Option<f64>,
    /// Monte-Carlo mean of the squared pointwise error.
    pub mean_sq_err: Option<f64>,
    /// Mean squared gap to the exact conditional expectation; by the error
    /// decomposition this is the excess conditional mean squared error of
    /// the estimate over the optimum.
    pub bayes_gap_sq: Option<f64>,
    pub zeta_median: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ErrorCurve {
    pub rows: Vec<CurveRow>,
}

impl ErrorCurve {
    pub fn row(&self, k: u32) -> Option<&CurveRow> {
        self.rows.iter().find(|r| r.k == k)
    }
}

/// Interpolated quantile of a sorted slice.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    sorted[lo] * (1.0 - w) + sorted[hi] * w
}

/// Aggregate prediction rows into per-level error curves. Rows without an
/// oracle value only contribute to the stopping-time statistics.
pub fn error_curves(rows: &[PredictionRow]) -> ErrorCurve {
    let mut by_level: BTreeMap<u32, Vec<&PredictionRow>> = BTreeMap::new();
    for row in rows {
        by_level.entry(row.k).or_default().push(row);
    }
    let rows = by_level
        .into_iter()
        .map(|(k, group)| {
            let mut abs: Vec<f64> = group.iter().filter_map(|r| r.abs_err()).collect();
            abs.sort_unstable_by(|a, b| a.partial_cmp(b).expect("errors are finite"));
            let mut zetas: Vec<f64> = group.iter().map(|r| r.zeta as f64).collect();
            zetas.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite"));
            let have_oracle = !abs.is_empty();
            let mean_sq = if have_oracle {
                Some(abs.iter().map(|e| e * e).sum::<f64>() / abs.len() as f64)
            } else {
                None
            };
            CurveRow {
                k,
                n_seeds: group.len() as u32,
                median_abs_err: have_oracle.then(|| quantile(&abs, 0.5)),
                mean_abs_err: have_oracle.then(|| abs.iter().sum::<f64>() / abs.len() as f64),
                q25_abs_err: have_oracle.then(|| quantile(&abs, 0.25)),
                q75_abs_err: have_oracle.then(|| quantile(&abs, 0.75)),
                mean_sq_err: mean_sq,
                bayes_gap_sq: mean_sq,
                zeta_median: quantile(&zetas, 0.5),
            }
        })
        .collect();
    ErrorCurve { rows }
}

/// Spearman rank correlation with average ranks on ties. `NaN` when either
/// side has no rank variance.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "rank correlation needs paired samples");
    let rx = ranks(x);
    let ry = ranks(y);
    pearson(&rx, &ry)
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).expect("ranked values must not be NaN"));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        // Average 1-based rank of the tie block [i, j].
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &ix in &order[i..=j] {
            out[ix] = rank;
        }
        i = j + 1;
    }
    out
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (&a, &b) in x.iter().zip(y.iter()) {
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
        sxy += (a - mx) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partitions::Refinement;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn dstar_identity_and_tail_bound() {
        let a = [0.3f64, 1.7, -2.0, 4.0];
        let d = dstar(&a, &a).unwrap();
        assert_eq!(d.value, 0.0);
        assert_eq!(d.tail_bound, 2f64.powi(-4));
    }

    #[test]
    fn dstar_single_coordinate_difference() {
        // Differ by exactly 1 at coordinate 0: 2^-1 * 1/(1+1) = 0.25.
        let a = [1.0f64, 5.0, 5.0];
        let b = [2.0f64, 5.0, 5.0];
        assert_eq!(dstar(&a, &b).unwrap().value, 0.25);
    }

    #[test]
    fn dstar_all_ones_approaches_one_half() {
        // Differ by 1 everywhere: partial sums (1 - 2^-(D+1)) / 2 from below.
        let mut prev = 0.0;
        for depth in [4usize, 16, 40] {
            let a = vec![0.0f64; depth + 1];
            let b = vec![1.0f64; depth + 1];
            let d = dstar(&a, &b).unwrap();
            let expected = (1.0 - 2f64.powi(-(depth as i32 + 1))) / 2.0;
            assert_eq!(d.value, expected);
            assert!(d.value > prev && d.value < 0.5);
            assert!(d.value + d.tail_bound >= 0.5);
            prev = d.value;
        }
        // Past f64 resolution the sum settles at the limit itself.
        let a = vec![0.0f64; 81];
        let b = vec![1.0f64; 81];
        let d = dstar(&a, &b).unwrap();
        assert_relative_eq!(d.value, 0.5, max_relative = 1e-15);
    }

    #[test]
    fn dstar_depth_mismatch_is_an_error() {
        assert!(matches!(
            dstar(&[1.0f64], &[1.0, 2.0]),
            Err(AnalysisError::DepthMismatch { .. })
        ));
        assert!(matches!(
            dstar::<f64>(&[], &[]),
            Err(AnalysisError::EmptySequence)
        ));
    }

    fn tiny_spec() -> GrowthBoundSpec<f64> {
        GrowthBoundSpec::new(
            1.0,
            PartitionFamily::finite_alphabet(vec![0.0, 1.0]).unwrap(),
            LagSchedule::Custom { table: vec![1, 1, 2, 2] },
        )
        .unwrap()
    }

    #[test]
    fn growth_bound_known_values() {
        // Two cells, lag 1, epsilon 1: 2^1 * 2^1 = 4.
        let spec = tiny_spec();
        let b = spec.growth_bound(1).unwrap();
        assert_eq!(b.linear, 4.0);
        assert_eq!(b.log2, 2.0);
        // Ceiling at k = 10 with lag 9: 11 * 2^-9.
        let spec10 = GrowthBoundSpec::new(
            1.0,
            PartitionFamily::finite_alphabet(vec![0.0, 1.0]).unwrap(),
            LagSchedule::Custom { table: vec![1, 2, 3, 4, 5, 6, 7, 8, 9, 9] },
        )
        .unwrap();
        assert_relative_eq!(spec10.ceiling(10).unwrap(), 11.0 * 2f64.powi(-9), max_relative = 1e-15);
    }

    #[test]
    fn growth_bound_is_polynomial_for_the_slow_preset() {
        // With lag floor(3 log2 k) and 2^floor(f_k) cells the log2 bound is
        // at most 3 log2(k) (1 + f_k).
        let family = PartitionFamily::dyadic_finite(0.0, 1.0, Refinement::IteratedLog).unwrap();
        let spec = GrowthBoundSpec::new(1.0, family, LagSchedule::LogFloor { c: 3.0 }).unwrap();
        for k in [4u32, 16, 64, 256, 1024] {
            let f_k = 1.0 + (1.0 + (1.0 + f64::from(k)).log2()).log2();
            let bound = spec.growth_bound(k).unwrap();
            assert!(bound.log2 <= 3.0 * f64::from(k).log2() * (1.0 + f_k) + 1e-9);
        }
    }

    #[test]
    fn growth_bound_rejects_unsupported_inputs() {
        let infinite = GrowthBoundSpec {
            epsilon: 1.0,
            family: PartitionFamily::<f64>::dyadic_infinite(Refinement::Doubling).unwrap(),
            schedule: LagSchedule::Linear,
        };
        assert!(matches!(infinite.validate(), Err(AnalysisError::UnsupportedFamily)));
        assert!(matches!(infinite.growth_bound(3), Err(AnalysisError::UnsupportedFamily)));
        // A zero lag is rejected by schedule validation already.
        let zero_lag = GrowthBoundSpec::new(
            1.0,
            PartitionFamily::finite_alphabet(vec![0.0, 1.0]).unwrap(),
            LagSchedule::Custom { table: vec![0] },
        );
        assert!(zero_lag.is_err());
        // Divergent series: log lag with c * eps <= 2.
        let divergent = GrowthBoundSpec::new(
            1.0,
            PartitionFamily::finite_alphabet(vec![0.0, 1.0]).unwrap(),
            LagSchedule::LogFloor { c: 1.0 },
        );
        assert!(matches!(divergent, Err(AnalysisError::NotSummable)));
    }

    #[test]
    fn growth_bound_is_nondecreasing_in_level() {
        let family = PartitionFamily::dyadic_finite(0.0, 1.0, Refinement::IteratedLog).unwrap();
        let spec = GrowthBoundSpec::new(1.0, family, LagSchedule::LogFloor { c: 3.0 }).unwrap();
        let mut prev = 0.0;
        for k in 1..400u32 {
            let b = spec.growth_bound(k).unwrap().log2;
            assert!(b >= prev - 1e-12);
            prev = b;
        }
    }

    #[test]
    fn violation_rate_on_constant_path_events() {
        // Constant path: zeta_k = k. The slow preset bound exceeds k for
        // every k >= 2, so no violations there.
        let family = PartitionFamily::finite_alphabet(vec![0.0, 1.0]).unwrap();
        let spec = GrowthBoundSpec::new(1.0, family, LagSchedule::Custom { table: (1..=30).map(|k| (k as u32).min(6)).collect() }).unwrap();
        let events: Vec<ScanEvent> =
            (1..=30).map(|k| ScanEvent { k, eta: 1, zeta: u64::from(k) }).collect();
        let rows = bound_violation_rate(&[events], &spec).unwrap();
        for row in &rows[1..] {
            assert_eq!(row.rate, 0.0, "level {} bound {}", row.k, row.bound_log2);
            assert_eq!(row.n_seeds, 1);
        }
        // Level 1: bound = 2 * 2 = 4 > 1, also no violation.
        assert_eq!(rows[0].violations, 0);
    }

    #[test]
    fn ks_distance_known_values() {
        assert_eq!(ks_distance(&[1.0f64, 2.0, 3.0], &[3.0, 1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(ks_distance(&[0.0f64, 0.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(ks_distance(&[0.0f64, 1.0], &[0.0, 0.0, 1.0, 1.0]).unwrap(), 0.0);
        assert!(ks_distance::<f64>(&[], &[1.0]).is_err());
    }

    #[test]
    fn spearman_detects_monotone_trends() {
        let k: Vec<f64> = (1..=10).map(f64::from).collect();
        let falling: Vec<f64> = k.iter().map(|v| 1.0 / v).collect();
        assert_relative_eq!(spearman(&falling, &k), -1.0, max_relative = 1e-12);
        let rising: Vec<f64> = k.iter().map(|v| v * 2.0).collect();
        assert_relative_eq!(spearman(&rising, &k), 1.0, max_relative = 1e-12);
        assert!(spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_nan());
    }

    #[test]
    fn error_curves_aggregate_by_level() {
        let rows = vec![
            PredictionRow { seed: 1, k: 1, zeta: 2, g: 0.6, oracle: Some(0.5) },
            PredictionRow { seed: 2, k: 1, zeta: 4, g: 0.4, oracle: Some(0.5) },
            PredictionRow { seed: 1, k: 2, zeta: 6, g: 0.5, oracle: Some(0.5) },
        ];
        let curve = error_curves(&rows);
        assert_eq!(curve.rows.len(), 2);
        let r1 = curve.row(1).unwrap();
        assert_eq!(r1.n_seeds, 2);
        assert_relative_eq!(r1.median_abs_err.unwrap(), 0.1, max_relative = 1e-12);
        assert_relative_eq!(r1.mean_sq_err.unwrap(), 0.01, max_relative = 1e-12);
        assert_eq!(r1.zeta_median, 3.0);
        let r2 = curve.row(2).unwrap();
        assert_eq!(r2.mean_sq_err.unwrap(), 0.0);
        // Oracle-free rows still produce stopping-time statistics.
        let bare = error_curves(&[PredictionRow { seed: 1, k: 1, zeta: 3, g: 0.1, oracle: None }]);
        assert_eq!(bare.rows[0].median_abs_err, None);
        assert_eq!(bare.rows[0].zeta_median, 3.0);
    }

    proptest! {
        #[test]
        fn dstar_is_a_metric_at_fixed_depth(
            a in proptest::collection::vec(-10.0f64..10.0, 33),
            b in proptest::collection::vec(-10.0f64..10.0, 33),
            c in proptest::collection::vec(-10.0f64..10.0, 33),
        ) {
            let dab = dstar(&a, &b).unwrap().value;
            let dba = dstar(&b, &a).unwrap().value;
            prop_assert_eq!(dab, dba);
            prop_assert_eq!(dstar(&a, &a).unwrap().value, 0.0);
            prop_assert!(dab >= 0.0);
            let dac = dstar(&a, &c).unwrap().value;
            let dcb = dstar(&c, &b).unwrap().value;
            prop_assert!(dab <= dac + dcb + 1e-12);
        }

        #[test]
        fn ks_distance_bounds_and_relabeling_invariance(
            a in proptest::collection::vec(0.0f64..1.0, 1..60),
            b in proptest::collection::vec(0.0f64..1.0, 1..60),
        ) {
            let d = ks_distance(&a, &b).unwrap();
            prop_assert!((0.0..=1.0).contains(&d));
            prop_assert_eq!(ks_distance(&a, &a).unwrap(), 0.0);
            // Common strictly monotone relabeling leaves the distance alone.
            let fa: Vec<f64> = a.iter().map(|x| x.exp() + 3.0 * x).collect();
            let fb: Vec<f64> = b.iter().map(|x| x.exp() + 3.0 * x).collect();
            prop_assert_eq!(ks_distance(&fa, &fb).unwrap(), d);
        }
    }
}
