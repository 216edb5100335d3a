//! Recurrence stopping times.
//!
//! The scanner watches a sample stream and, at stage `k`, waits for the
//! quantized block of the last `l_k` samples to reappear. The wait `eta_k`
//! advances the running stopping time `zeta_k = zeta_{k-1} + eta_k`; each
//! stage then refines the quantizer and lengthens the block. A reverse-time
//! twin of the scan runs backward from the end of a sample suffix and serves
//! as an exact cross-check: if the forward scan stops at `zeta_k = l`, the
//! backward scan over the suffix ending there lands on `-l`.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::partitions::{CellId, PartitionError, PartitionFamily};
use crate::scalar::Scalar;

/// Levels searched before `j_of_n` gives up on a rule-based schedule.
const J_SEARCH_LIMIT: u32 = 1 << 24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StoppingError {
    #[error("lag schedule table ends before level {level}")]
    ScheduleHorizon { level: u32 },
    #[error("invalid lag schedule: {0}")]
    InvalidSchedule(String),
    #[error("sample supply ended after {consumed} samples while scanning for stopping time {k}")]
    Truncated { k: u32, consumed: u64 },
    #[error("suffix too short for the backward scan at step {step}")]
    ReverseTruncated { step: u32 },
    #[error("no level with lag above {n} within {limit} levels")]
    JSearchLimit { n: u64, limit: u32 },
    #[error(transparent)]
    Partition(#[from] PartitionError),
}

/// Block-length schedule `l_k`: nondecreasing, unbounded, with
/// `1 <= l_k <= k` so the stage-k block always fits in the observed prefix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum LagSchedule {
    /// l_k = k.
    Linear,
    /// l_k = min(k, max(1, floor(c log2 k))). The clamp to `k` keeps the
    /// schedule admissible at small k, where the raw logarithm overshoots.
    LogFloor { c: f64 },
    /// Explicit table, one entry per level starting at k = 1.
    Custom { table: Vec<u32> },
}

impl LagSchedule {
    /// Block length at level `k >= 1`.
    pub fn lag(&self, k: u32) -> Result<u32, StoppingError> {
        if k == 0 {
            return Err(StoppingError::InvalidSchedule("level must be at least 1".into()));
        }
        match self {
            LagSchedule::Linear => Ok(k),
            LagSchedule::LogFloor { c } => {
                let raw = (c * f64::from(k).log2()).floor();
                let l = if raw < 1.0 { 1 } else { raw as u64 };
                Ok(l.min(u64::from(k)) as u32)
            }
            LagSchedule::Custom { table } => table
                .get(k as usize - 1)
                .copied()
                .ok_or(StoppingError::ScheduleHorizon { level: k }),
        }
    }

    /// The rule-based schedules are checked symbolically; tables are checked
    /// entry by entry up to their horizon (unboundedness is not decidable
    /// for a finite table and is taken on trust).
    pub fn validate(&self) -> Result<(), StoppingError> {
        match self {
            LagSchedule::Linear => Ok(()),
            LagSchedule::LogFloor { c } => {
                if !c.is_finite() || *c <= 0.0 {
                    Err(StoppingError::InvalidSchedule("log lag needs a positive finite c".into()))
                } else {
                    Ok(())
                }
            }
            LagSchedule::Custom { table } => {
                if table.is_empty() {
                    return Err(StoppingError::InvalidSchedule("empty lag table".into()));
                }
                for (i, &l) in table.iter().enumerate() {
                    let k = i as u32 + 1;
                    if l < 1 || l > k {
                        return Err(StoppingError::InvalidSchedule(format!(
                            "lag table entry l_{k} = {l} violates 1 <= l_k <= k"
                        )));
                    }
                }
                if table.windows(2).any(|w| w[1] < w[0]) {
                    return Err(StoppingError::InvalidSchedule("lag table must be nondecreasing".into()));
                }
                Ok(())
            }
        }
    }
}

/// Smallest `j >= 1` with `l_{j+1} > n`.
pub fn j_of_n(schedule: &LagSchedule, n: u64) -> Result<u32, StoppingError> {
    let mut j = 1u32;
    loop {
        if u64::from(schedule.lag(j + 1)?) > n {
            return Ok(j);
        }
        j += 1;
        if j >= J_SEARCH_LIMIT {
            return Err(StoppingError::JSearchLimit { n, limit: J_SEARCH_LIMIT });
        }
    }
}

/// One completed stage of the scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScanEvent {
    pub k: u32,
    pub eta: u64,
    pub zeta: u64,
}

/// One step of the backward scan, `i` running from 1 to k.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReverseStep {
    pub i: u32,
    pub eta: u64,
    /// Running backward stopping time, nonpositive.
    pub zeta: i64,
}

/// In-progress search for the current stage: the target block's cell ids and
/// a rolling window of candidate ids, advanced one sample at a time.
#[derive(Debug, Clone)]
struct ActiveScan {
    target: Vec<CellId>,
    window: VecDeque<CellId>,
    /// Index of the last sample included in `window`.
    cursor: u64,
}

/// Scanner state: the stage counter, the previous stopping time, the sample
/// history from time 0, and the buffered comparison window of the stage in
/// progress. Single-owner mutable; independent scanners share nothing.
#[derive(Debug, Clone)]
pub struct ScannerState<S> {
    k: u32,
    zeta_prev: u64,
    history: Vec<S>,
    active: Option<ActiveScan>,
}

impl<S: Scalar> Default for ScannerState<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> ScannerState<S> {
    pub fn new() -> Self {
        ScannerState { k: 1, zeta_prev: 0, history: Vec::new(), active: None }
    }

    /// Stage of the next stopping time to be found.
    pub fn k(&self) -> u32 {
        self.k
    }

    /// The last certified stopping time (0 before the first one).
    pub fn zeta_prev(&self) -> u64 {
        self.zeta_prev
    }

    pub fn history(&self) -> &[S] {
        &self.history
    }

    /// Index the next pushed sample will occupy.
    pub fn next_index(&self) -> u64 {
        self.history.len() as u64
    }

    pub fn push_sample(&mut self, x: S) {
        self.history.push(x);
    }

    /// Advance the scan as far as the buffered history allows. Returns the
    /// stage event as soon as the rolling window matches the target block;
    /// `None` means more samples are needed. Work per consumed sample is one
    /// quantization plus one short-circuiting block comparison.
    pub fn try_advance(
        &mut self,
        family: &PartitionFamily<S>,
        schedule: &LagSchedule,
    ) -> Result<Option<ScanEvent>, StoppingError> {
        if self.history.len() as u64 <= self.zeta_prev {
            return Ok(None);
        }
        if self.active.is_none() {
            let lag = schedule.lag(self.k)?;
            // 1 <= l_k <= k and zeta_{k-1} >= k-1 keep the block start at or
            // above index 0.
            assert!(
                u64::from(lag) <= self.zeta_prev + 1,
                "lag {lag} exceeds observed prefix ending at {}",
                self.zeta_prev
            );
            let start = (self.zeta_prev + 1 - u64::from(lag)) as usize;
            let target = family.quantize_ids(&self.history[start..=self.zeta_prev as usize], self.k)?;
            self.active = Some(ActiveScan {
                window: VecDeque::from(target.clone()),
                target,
                cursor: self.zeta_prev,
            });
        }

        let k = self.k;
        let matched = {
            let active = self.active.as_mut().expect("scan initialized above");
            let mut matched = None;
            while active.cursor + 1 < self.history.len() as u64 {
                let next = active.cursor + 1;
                let id = family.cell_id_of(self.history[next as usize], k)?;
                active.window.pop_front();
                active.window.push_back(id);
                active.cursor = next;
                if active.window.iter().eq(active.target.iter()) {
                    matched = Some(next);
                    break;
                }
            }
            matched
        };

        match matched {
            Some(zeta) => {
                let event = ScanEvent { k, eta: zeta - self.zeta_prev, zeta };
                self.k += 1;
                self.zeta_prev = zeta;
                self.active = None;
                Ok(Some(event))
            }
            None => Ok(None),
        }
    }

    /// Run the scan for the current stage, pulling samples from `more` on
    /// demand. When the supply ends before a match the scanner reports how
    /// much it consumed and keeps its partial progress, so the caller may
    /// extend the path and call again.
    pub fn scan_next(
        &mut self,
        family: &PartitionFamily<S>,
        schedule: &LagSchedule,
        more: &mut dyn FnMut() -> Option<S>,
    ) -> Result<ScanEvent, StoppingError> {
        loop {
            if let Some(event) = self.try_advance(family, schedule)? {
                return Ok(event);
            }
            match more() {
                Some(x) => self.push_sample(x),
                None => {
                    return Err(StoppingError::Truncated {
                        k: self.k,
                        consumed: self.history.len() as u64,
                    })
                }
            }
        }
    }
}

/// Backward scan over a suffix.
///
/// `suffix` holds samples in time order with its last element at time 0, so
/// a slice of length m+1 covers times -m..=0. Step `i` looks for the nearest
/// earlier copy of the level-(k-i+1) block of length `l_{k-i+1}` ending at
/// the running backward time, then jumps there. Returns the k steps, or a
/// truncation error naming the step that ran out of suffix.
pub fn reverse_scan<S: Scalar>(
    suffix: &[S],
    family: &PartitionFamily<S>,
    schedule: &LagSchedule,
    k: u32,
) -> Result<Vec<ReverseStep>, StoppingError> {
    let mut steps = Vec::with_capacity(k as usize);
    if k == 0 {
        return Ok(steps);
    }
    let m = suffix.len() as i64 - 1;
    let mut zeta_hat: i64 = 0;
    for i in 1..=k {
        let level = k - i + 1;
        let lag = i64::from(schedule.lag(level)?);
        let ids = family.quantize_ids(suffix, level)?;
        let pos = |t: i64| -> Option<usize> {
            let p = m + t;
            if p < 0 {
                None
            } else {
                Some(p as usize)
            }
        };
        let lo = zeta_hat - (lag - 1);
        let (Some(plo), Some(phi)) = (pos(lo), pos(zeta_hat)) else {
            return Err(StoppingError::ReverseTruncated { step: i });
        };
        let target = ids[plo..=phi].to_vec();
        let mut t: i64 = 1;
        let eta = loop {
            match (pos(lo - t), pos(zeta_hat - t)) {
                (Some(blo), Some(bhi)) => {
                    if ids[blo..=bhi] == target[..] {
                        break t;
                    }
                }
                _ => return Err(StoppingError::ReverseTruncated { step: i }),
            }
            t += 1;
        };
        zeta_hat -= eta;
        steps.push(ReverseStep { i, eta: eta as u64, zeta: zeta_hat });
    }
    Ok(steps)
}
