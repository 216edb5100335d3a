//! The online intermittent estimator.
//!
//! Samples are pushed in time order. Whenever the scanner certifies the next
//! stopping time `zeta_k`, the estimator emits the running average of the
//! successor samples observed right after each earlier stopping time:
//! `g_k = (1/k) * sum_{j=0}^{k-1} x_{zeta_j + 1}`, with `zeta_0 = 0`
//! contributing `x_1`. The emission happens at time `zeta_k`, at which point
//! every ingredient (`zeta_{k-1} + 1 <= zeta_k`) has already been observed.

use thiserror::Error;

use crate::partitions::PartitionFamily;
use crate::scalar::Scalar;
use crate::stopping::{LagSchedule, ScannerState, StoppingError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error(transparent)]
    Stopping(#[from] StoppingError),
}

/// A prediction issued at a stopping time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionEvent<S> {
    pub k: u32,
    pub eta: u64,
    pub zeta: u64,
    /// The estimate of the expected next sample given everything seen so far.
    pub g: S,
    /// Time the prediction is issued; equals `zeta`.
    pub at_time: u64,
}

/// Neumaier-compensated running sum; keeps the target accumulation exact on
/// integer-valued paths and drift-free over long runs.
#[derive(Debug, Clone)]
struct CompensatedSum<S> {
    sum: S,
    comp: S,
}

impl<S: Scalar> CompensatedSum<S> {
    fn new() -> Self {
        CompensatedSum { sum: S::zero(), comp: S::zero() }
    }

    fn add(&mut self, x: S) {
        let t = self.sum + x;
        let correction = if self.sum.abs() >= x.abs() {
            (self.sum - t) + x
        } else {
            (x - t) + self.sum
        };
        self.comp = self.comp + correction;
        self.sum = t;
    }

    fn value(&self) -> S {
        self.sum + self.comp
    }
}

/// Estimator state: completed-prediction count, the compensated target sum,
/// the scanner, and the index of the successor sample still awaited.
#[derive(Debug, Clone)]
pub struct Estimator<S> {
    family: PartitionFamily<S>,
    schedule: LagSchedule,
    scanner: ScannerState<S>,
    k: u32,
    sum_targets: CompensatedSum<S>,
    last_g: Option<S>,
    /// Sample index `zeta_j + 1` whose value has not arrived yet.
    pending: Option<u64>,
}

impl<S: Scalar> Estimator<S> {
    pub fn new(family: PartitionFamily<S>, schedule: LagSchedule) -> Result<Self, EstimatorError> {
        family.validate().map_err(StoppingError::from)?;
        schedule.validate()?;
        Ok(Estimator {
            family,
            schedule,
            scanner: ScannerState::new(),
            k: 0,
            sum_targets: CompensatedSum::new(),
            last_g: None,
            // zeta_0 = 0, so the very first target is x_1.
            pending: Some(1),
        })
    }

    /// Number of predictions issued so far.
    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn history(&self) -> &[S] {
        self.scanner.history()
    }

    pub fn scanner(&self) -> &ScannerState<S> {
        &self.scanner
    }

    /// Index the next pushed sample will occupy; samples must arrive in
    /// order x_0, x_1, ... (the index is assigned by arrival, so an
    /// out-of-order push cannot be expressed).
    pub fn next_index(&self) -> u64 {
        self.scanner.next_index()
    }

    /// Feed the next sample. Emits at most one prediction per sample: the
    /// one certified by this sample completing a recurrence.
    pub fn push(&mut self, x: S) -> Result<Option<PredictionEvent<S>>, EstimatorError> {
        let idx = self.scanner.next_index();
        if self.pending == Some(idx) {
            self.sum_targets.add(x);
            self.pending = None;
        }
        self.scanner.push_sample(x);
        let Some(event) = self.scanner.try_advance(&self.family, &self.schedule)? else {
            return Ok(None);
        };
        // Causality: the newest ingredient of g_k is x_{zeta_{k-1}+1}, which
        // is at or before zeta_k, so it must have been folded in by now.
        debug_assert!(self.pending.is_none());
        debug_assert!(event.zeta >= u64::from(event.k));
        self.k = event.k;
        let g = self.sum_targets.value() / S::from_u32(event.k).unwrap();
        self.last_g = Some(g);
        self.pending = Some(event.zeta + 1);
        Ok(Some(PredictionEvent { k: event.k, eta: event.eta, zeta: event.zeta, g, at_time: event.zeta }))
    }

    /// Most recent `(k, g_k)` without touching the state; `None` until the
    /// first prediction exists.
    pub fn predict_at(&self) -> Option<(u32, S)> {
        self.last_g.map(|g| (self.k, g))
    }
}
