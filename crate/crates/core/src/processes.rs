//! Stationary sample-path generators with exact conditional-expectation
//! oracles: i.i.d. sources, finite-order finite-alphabet Markov chains, and
//! the binary adding-machine (odometer) transformation.
//!
//! Models are immutable descriptions; sampling state lives in a
//! [`PathSampler`] created per `(model, seed)`, so concurrent seeds share
//! nothing. Streams are deterministic per seed.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

/// Default fixed-point width of the odometer state. 48 bits keep every
/// value and every step exactly representable in `f64`.
pub const DEFAULT_ODOMETER_BITS: u32 = 48;

/// Widest supported odometer state; beyond 52 bits `f64` can no longer hold
/// the state exactly.
pub const MAX_ODOMETER_BITS: u32 = 52;

const ROW_SUM_TOLERANCE: f64 = 1e-12;
const STATIONARY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProcessError {
    #[error("invalid process model: {0}")]
    InvalidModel(String),
    #[error("prefix is too short: need at least {need} samples, got {got}")]
    PrefixTooShort { need: usize, got: usize },
    #[error("prefix value {value} is not an alphabet letter")]
    OutsideAlphabet { value: f64 },
    #[error("value {value} is not a {bits}-bit point of the unit interval")]
    NotAGridPoint { value: f64, bits: u32 },
    #[error("odometer state is all zeros; the first-set-bit index is undefined")]
    DegenerateState,
    #[error("stationary distribution iteration did not converge")]
    StationaryDivergence,
}

/// Marginal distribution of an i.i.d. source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum IidDistribution<S> {
    Bernoulli { p: f64 },
    UniformReal { lo: S, hi: S },
    Gaussian { mean: S, var: S },
}

/// Finite-alphabet Markov chain of finite order. `transition[c][j]` is the
/// probability that the next symbol is `alphabet[j]` given context `c`; a
/// context packs the last `order` symbol indices in radix `alphabet.len()`,
/// oldest symbol in the highest digit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovChain<S> {
    pub order: usize,
    pub alphabet: Vec<S>,
    pub transition: Vec<Vec<f64>>,
}

impl<S: Scalar> MarkovChain<S> {
    pub fn new(order: usize, alphabet: Vec<S>, transition: Vec<Vec<f64>>) -> Result<Self, ProcessError> {
        let chain = MarkovChain { order, alphabet, transition };
        chain.validate()?;
        Ok(chain)
    }

    /// Order-1 chain on {0, 1} given the two 1-transition probabilities.
    pub fn binary_order1(p_one_after_zero: f64, p_one_after_one: f64) -> Result<Self, ProcessError> {
        MarkovChain::new(
            1,
            vec![S::zero(), S::one()],
            vec![
                vec![1.0 - p_one_after_zero, p_one_after_zero],
                vec![1.0 - p_one_after_one, p_one_after_one],
            ],
        )
    }

    pub fn validate(&self) -> Result<(), ProcessError> {
        let m = self.alphabet.len();
        if m == 0 {
            return Err(ProcessError::InvalidModel("empty alphabet".into()));
        }
        if self.order == 0 {
            return Err(ProcessError::InvalidModel("order must be at least 1".into()));
        }
        if self.alphabet.iter().any(|a| !a.is_finite()) {
            return Err(ProcessError::InvalidModel("alphabet letters must be finite".into()));
        }
        if self.alphabet.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ProcessError::InvalidModel("alphabet must be strictly increasing".into()));
        }
        let contexts = m
            .checked_pow(self.order as u32)
            .ok_or_else(|| ProcessError::InvalidModel("context space overflows".into()))?;
        if self.transition.len() != contexts {
            return Err(ProcessError::InvalidModel(format!(
                "expected {contexts} transition rows, got {}",
                self.transition.len()
            )));
        }
        for (c, row) in self.transition.iter().enumerate() {
            if row.len() != m {
                return Err(ProcessError::InvalidModel(format!(
                    "row {c} has {} entries, expected {m}",
                    row.len()
                )));
            }
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(ProcessError::InvalidModel(format!("row {c} has entries outside [0, 1]")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(ProcessError::InvalidModel(format!("row {c} sums to {sum}, not 1")));
            }
        }
        Ok(())
    }

    fn alphabet_size(&self) -> usize {
        self.alphabet.len()
    }

    fn context_count(&self) -> usize {
        self.alphabet_size().pow(self.order as u32)
    }

    fn context_index(&self, symbols: &[usize]) -> usize {
        symbols.iter().fold(0, |acc, &s| acc * self.alphabet_size() + s)
    }

    fn symbol_index(&self, x: S) -> Result<usize, ProcessError> {
        self.alphabet
            .iter()
            .position(|&a| a == x)
            .ok_or(ProcessError::OutsideAlphabet { value: x.as_f64() })
    }

    /// Stationary distribution over contexts, by damped power iteration.
    /// Damping averages each iterate with its predecessor, which removes
    /// the oscillation of periodic chains without changing the fixed point.
    pub fn stationary_law(&self) -> Result<Vec<f64>, ProcessError> {
        let contexts = self.context_count();
        let m = self.alphabet_size();
        let mut v = vec![1.0 / contexts as f64; contexts];
        for _ in 0..200_000 {
            let mut next = vec![0.0; contexts];
            for (c, &mass) in v.iter().enumerate() {
                if mass == 0.0 {
                    continue;
                }
                let row = &self.transition[c];
                // Successor context drops the oldest symbol and appends j.
                let base = (c % m.pow(self.order as u32 - 1)) * m;
                for (j, &p) in row.iter().enumerate() {
                    next[base + j] += mass * p;
                }
            }
            let mut diff = 0.0;
            for (n, o) in next.iter_mut().zip(v.iter()) {
                *n = 0.5 * *n + 0.5 * *o;
                diff += (*n - *o).abs();
            }
            v = next;
            if diff <= STATIONARY_TOLERANCE {
                return Ok(v);
            }
        }
        Err(ProcessError::StationaryDivergence)
    }

    /// Exact conditional mean of the next letter given a context index.
    fn next_mean(&self, context: usize) -> S {
        let row = &self.transition[context];
        self.alphabet
            .iter()
            .zip(row.iter())
            .fold(S::zero(), |acc, (&a, &p)| acc + a * S::from_f64_lossy(p))
    }
}

/// Fixed-point odometer state: the unit-interval value `sum r_i 2^-i` over
/// `width` binary digits, stored with digit `r_1` (weight 1/2) at the top.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OdometerState {
    bits: u64,
    width: u32,
}

impl OdometerState {
    pub fn new(bits: u64, width: u32) -> Result<Self, ProcessError> {
        if width == 0 || width > MAX_ODOMETER_BITS {
            return Err(ProcessError::InvalidModel(format!(
                "odometer width must be in 1..={MAX_ODOMETER_BITS}, got {width}"
            )));
        }
        if bits >> width != 0 {
            return Err(ProcessError::InvalidModel(format!(
                "state {bits:#x} does not fit in {width} bits"
            )));
        }
        Ok(OdometerState { bits, width })
    }

    /// State whose value is `r`; `r` must be a `width`-bit dyadic point of
    /// `[0, 1)`, i.e. `r * 2^width` integral.
    pub fn from_value<S: Scalar>(r: S, width: u32) -> Result<Self, ProcessError> {
        let v = r.as_f64();
        if !(0.0..1.0).contains(&v) {
            return Err(ProcessError::NotAGridPoint { value: v, bits: width });
        }
        let scaled = v * f64::powi(2.0, width as i32);
        if scaled.fract() != 0.0 {
            return Err(ProcessError::NotAGridPoint { value: v, bits: width });
        }
        OdometerState::new(scaled as u64, width)
    }

    pub fn value<S: Scalar>(&self) -> S {
        S::from_u64(self.bits).unwrap() * S::from_f64_lossy(f64::powi(2.0, -(self.width as i32)))
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn is_zero(&self) -> bool {
        self.bits == 0
    }

    /// Digit `r_i`, `i` counted from 1 at weight 1/2.
    pub fn digit(&self, i: u32) -> u8 {
        debug_assert!(i >= 1 && i <= self.width);
        ((self.bits >> (self.width - i)) & 1) as u8
    }

    /// Index of the first set digit.
    pub fn tau(&self) -> Result<u32, ProcessError> {
        if self.bits == 0 {
            return Err(ProcessError::DegenerateState);
        }
        let highest = 63 - self.bits.leading_zeros();
        Ok(self.width - highest)
    }

    /// One step of the adding machine, digit by digit: digits before the
    /// first 1 flip to 1, the first 1 flips to 0, deeper digits are kept.
    /// The all-zero state (unreachable from any nonzero state) maps to
    /// itself; callers count those steps as degenerate.
    pub fn step(&self) -> OdometerState {
        let Ok(tau) = self.tau() else {
            return *self;
        };
        let cleared = self.bits & !(1 << (self.width - tau));
        let ones = if tau == 1 { 0 } else { ((1u64 << (tau - 1)) - 1) << (self.width - tau + 1) };
        OdometerState { bits: cleared | ones, width: self.width }
    }
}

/// Closed-form route for one odometer step:
/// `r - 2^-tau + (1 - 2^(1-tau))`. Exact in `f64` for grid points.
pub fn odometer_step_closed_form(r: f64, width: u32) -> Result<f64, ProcessError> {
    let state = OdometerState::from_value(r, width)?;
    if state.is_zero() {
        return Ok(0.0);
    }
    let tau = state.tau()? as i32;
    Ok(r - f64::powi(2.0, -tau) + (1.0 - f64::powi(2.0, 1 - tau)))
}

/// Recursive route for one odometer step: subtract one half on the upper
/// half-interval, otherwise recurse on the doubled value.
pub fn odometer_step_recursive(r: f64, width: u32) -> Result<f64, ProcessError> {
    OdometerState::from_value(r, width)?;
    fn rec(r: f64) -> f64 {
        if r == 0.0 {
            0.0
        } else if r >= 0.5 {
            r - 0.5
        } else {
            (1.0 + rec(2.0 * r)) / 2.0
        }
    }
    Ok(rec(r))
}

/// A stationary process description: sampling plus an exact one-step
/// conditional-expectation oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProcessModel<S> {
    Iid {
        dist: IidDistribution<S>,
    },
    Markov(MarkovChain<S>),
    Odometer {
        #[serde(default = "default_odometer_bits")]
        bits: u32,
        /// Optional fixed initial state (a `bits`-bit point of `[0, 1)`),
        /// for replaying hand-computed orbits; when unset the initial state
        /// is drawn uniformly from the grid per seed.
        #[serde(default)]
        initial: Option<S>,
    },
}

fn default_odometer_bits() -> u32 {
    DEFAULT_ODOMETER_BITS
}

impl<S: Scalar> ProcessModel<S> {
    pub fn odometer() -> Self {
        ProcessModel::Odometer { bits: DEFAULT_ODOMETER_BITS, initial: None }
    }

    pub fn validate(&self) -> Result<(), ProcessError> {
        match self {
            ProcessModel::Iid { dist } => match dist {
                IidDistribution::Bernoulli { p } => {
                    if !(0.0..=1.0).contains(p) {
                        return Err(ProcessError::InvalidModel(format!("Bernoulli p = {p} outside [0, 1]")));
                    }
                    Ok(())
                }
                IidDistribution::UniformReal { lo, hi } => {
                    if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                        return Err(ProcessError::InvalidModel("uniform range must be finite with lo < hi".into()));
                    }
                    Ok(())
                }
                IidDistribution::Gaussian { mean, var } => {
                    if !mean.is_finite() || !var.is_finite() || *var < S::zero() {
                        return Err(ProcessError::InvalidModel("Gaussian needs finite mean and var >= 0".into()));
                    }
                    Ok(())
                }
            },
            ProcessModel::Markov(chain) => chain.validate(),
            ProcessModel::Odometer { bits, initial } => {
                if *bits == 0 || *bits > MAX_ODOMETER_BITS {
                    return Err(ProcessError::InvalidModel(format!(
                        "odometer width must be in 1..={MAX_ODOMETER_BITS}, got {bits}"
                    )));
                }
                if let Some(r) = initial {
                    OdometerState::from_value(*r, *bits)?;
                }
                Ok(())
            }
        }
    }

    /// Deterministic sample stream for `(self, seed)`.
    pub fn sampler(&self, seed: u64) -> Result<PathSampler<S>, ProcessError> {
        self.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(seed);
        let inner = match self {
            ProcessModel::Iid { dist } => SamplerInner::Iid { dist: dist.clone(), rng },
            ProcessModel::Markov(chain) => {
                let stationary = chain.stationary_law()?;
                let mut rng = rng;
                let context = decode_context(
                    draw_categorical(&mut rng, &stationary),
                    chain.alphabet_size(),
                    chain.order,
                );
                SamplerInner::Markov {
                    chain: chain.clone(),
                    pending: context.iter().copied().collect(),
                    context,
                    rng,
                }
            }
            ProcessModel::Odometer { bits, initial } => {
                let state = match initial {
                    Some(r) => OdometerState::from_value(*r, *bits)?,
                    None => {
                        let mut rng = rng;
                        let raw: u64 = rng.random();
                        OdometerState::new(raw >> (64 - bits), *bits)?
                    }
                };
                SamplerInner::Odometer { state, primed: false }
            }
        };
        Ok(PathSampler { inner, degeneracies: 0 })
    }

    /// First `n` samples of the seed's path.
    pub fn sample_path(&self, seed: u64, n: usize) -> Result<Vec<S>, ProcessError> {
        let mut sampler = self.sampler(seed)?;
        Ok((0..n).map(|_| sampler.next_sample()).collect())
    }

    /// Exact `E(X_{n+1} | X_0..X_n)` for `prefix = (x_0..x_n)`.
    pub fn cond_exp(&self, prefix: &[S]) -> Result<S, ProcessError> {
        match self {
            ProcessModel::Iid { dist } => {
                if prefix.is_empty() {
                    return Err(ProcessError::PrefixTooShort { need: 1, got: 0 });
                }
                Ok(match dist {
                    IidDistribution::Bernoulli { p } => S::from_f64_lossy(*p),
                    IidDistribution::UniformReal { lo, hi } => (*lo + *hi) * S::half(),
                    IidDistribution::Gaussian { mean, .. } => *mean,
                })
            }
            ProcessModel::Markov(chain) => {
                if prefix.len() < chain.order {
                    return Err(ProcessError::PrefixTooShort { need: chain.order, got: prefix.len() });
                }
                let tail = &prefix[prefix.len() - chain.order..];
                let symbols: Vec<usize> =
                    tail.iter().map(|&x| chain.symbol_index(x)).collect::<Result<_, _>>()?;
                Ok(chain.next_mean(chain.context_index(&symbols)))
            }
            ProcessModel::Odometer { bits, .. } => {
                let Some(&last) = prefix.last() else {
                    return Err(ProcessError::PrefixTooShort { need: 1, got: 0 });
                };
                // The chain is deterministic given the latest value: the
                // conditional mean is just the next state.
                Ok(OdometerState::from_value(last, *bits)?.step().value())
            }
        }
    }
}

fn draw_categorical(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

fn decode_context(mut index: usize, m: usize, order: usize) -> Vec<usize> {
    let mut symbols = vec![0usize; order];
    for slot in (0..order).rev() {
        symbols[slot] = index % m;
        index /= m;
    }
    symbols
}

enum SamplerInner<S> {
    Iid {
        dist: IidDistribution<S>,
        rng: ChaCha8Rng,
    },
    Markov {
        chain: MarkovChain<S>,
        context: Vec<usize>,
        pending: VecDeque<usize>,
        rng: ChaCha8Rng,
    },
    Odometer {
        state: OdometerState,
        primed: bool,
    },
}

/// Streaming per-seed sampler. Also counts degenerate odometer steps (the
/// all-zero fixed point), which a run report surfaces.
pub struct PathSampler<S> {
    inner: SamplerInner<S>,
    degeneracies: u64,
}

impl<S: Scalar> PathSampler<S> {
    pub fn next_sample(&mut self) -> S {
        match &mut self.inner {
            SamplerInner::Iid { dist, rng } => match dist {
                IidDistribution::Bernoulli { p } => {
                    if rng.random::<f64>() < *p {
                        S::one()
                    } else {
                        S::zero()
                    }
                }
                IidDistribution::UniformReal { lo, hi } => {
                    *lo + (*hi - *lo) * S::from_f64_lossy(rng.random::<f64>())
                }
                IidDistribution::Gaussian { mean, var } => {
                    let z: f64 = rng.sample(StandardNormal);
                    *mean + var.sqrt() * S::from_f64_lossy(z)
                }
            },
            SamplerInner::Markov { chain, context, pending, rng } => {
                if let Some(sym) = pending.pop_front() {
                    return chain.alphabet[sym];
                }
                let row_ix = chain.context_index(context);
                let next = draw_categorical(rng, &chain.transition[row_ix]);
                context.rotate_left(1);
                *context.last_mut().expect("order >= 1") = next;
                chain.alphabet[next]
            }
            SamplerInner::Odometer { state, primed } => {
                if !*primed {
                    *primed = true;
                } else {
                    if state.is_zero() {
                        self.degeneracies += 1;
                    }
                    *state = state.step();
                }
                state.value()
            }
        }
    }

    pub fn degeneracies(&self) -> u64 {
        self.degeneracies
    }
}
