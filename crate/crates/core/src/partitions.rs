//! Nested interval partitions of the real line and the per-level quantizer.
//!
//! A partition family assigns to every level `k >= 1` a partition of the line
//! into intervals, nested so that each level-(k+1) cell sits inside exactly
//! one level-k cell. The quantizer maps a point to the cell containing it;
//! block comparisons elsewhere in the crate work on cell identities, never on
//! floating-point endpoints.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

/// Deepest supported dyadic exponent. With more than 2^52 cells the cell
/// width drops below one ulp of a unit-range `f64` and the grid arithmetic
/// stops being exact.
pub const MAX_EXPONENT: u32 = 52;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PartitionError {
    #[error("quantizer input must be finite, got {value}")]
    NonFiniteInput { value: f64 },
    #[error("partition level must be at least 1")]
    LevelZero,
    #[error("refinement rule does not cover level {level}")]
    LevelBeyondTable { level: u32 },
    #[error("level {level} needs dyadic exponent {exponent}, deeper than the supported {MAX_EXPONENT}")]
    ExponentTooDeep { level: u32, exponent: u64 },
    #[error("cell index for {value} at level {level} does not fit a signed 64-bit integer")]
    IndexOverflow { value: f64, level: u32 },
    #[error("invalid partition family: {0}")]
    InvalidFamily(String),
}

/// Identity of a cell: the pair (level, index). Two quantized samples are
/// "equal" exactly when their ids are equal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellId {
    pub level: u32,
    pub index: i64,
}

/// One interval of a level-k partition.
///
/// Unbounded endpoints are represented by infinities; a point cell has
/// `lower == upper` with both endpoints closed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell<S> {
    pub lower: S,
    pub upper: S,
    pub lower_closed: bool,
    pub upper_closed: bool,
    pub level: u32,
    pub index: i64,
}

impl<S: Scalar> Cell<S> {
    pub fn id(&self) -> CellId {
        CellId { level: self.level, index: self.index }
    }

    pub fn is_point(&self) -> bool {
        self.lower == self.upper
    }

    /// Diameter: endpoint difference, `+inf` for unbounded cells, 0 for
    /// point cells.
    pub fn diam(&self) -> S {
        self.upper - self.lower
    }

    pub fn contains(&self, x: S) -> bool {
        let above = x > self.lower || (self.lower_closed && x == self.lower);
        let below = x < self.upper || (self.upper_closed && x == self.upper);
        above && below
    }
}

/// Per-level refinement rule, expressed as a dyadic exponent `g(k)`.
///
/// Finite families carve their base range into `2^g(k)` equal cells; the
/// infinite family tiles the line with cells of width `2^-g(k)`. Keeping
/// counts to powers of two makes successive counts divide each other, which
/// is what nestedness of equal-width refinements requires.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Refinement {
    /// g(k) = k: cell counts double every level.
    Doubling,
    /// g(k) = floor(k * num / den): doubling every `den / num` levels.
    RationalExponent { num: u32, den: u32 },
    /// g(k) = floor(log2(1 + k)): the cell count tracks the level, the
    /// default refinement of the experiment presets.
    Logarithmic,
    /// g(k) = floor(1 + log2(1 + log2(1 + k))): refinement that grows
    /// roughly like log log k, for runs where quantization must stay very
    /// coarse.
    IteratedLog,
    /// Explicit exponents, one per level starting at k = 1.
    Exponents { table: Vec<u32> },
}

impl Refinement {
    /// Dyadic exponent at level `k >= 1`.
    pub fn exponent(&self, k: u32) -> Result<u32, PartitionError> {
        if k == 0 {
            return Err(PartitionError::LevelZero);
        }
        let raw: u64 = match self {
            Refinement::Doubling => u64::from(k),
            Refinement::RationalExponent { num, den } => {
                u64::from(k) * u64::from(*num) / u64::from(*den)
            }
            Refinement::Logarithmic => (1.0 + f64::from(k)).log2().floor() as u64,
            Refinement::IteratedLog => {
                let f = 1.0 + (1.0 + (1.0 + f64::from(k)).log2()).log2();
                f.floor() as u64
            }
            Refinement::Exponents { table } => {
                return table
                    .get(k as usize - 1)
                    .copied()
                    .ok_or(PartitionError::LevelBeyondTable { level: k });
            }
        };
        if raw > u64::from(MAX_EXPONENT) {
            return Err(PartitionError::ExponentTooDeep { level: k, exponent: raw });
        }
        Ok(raw as u32)
    }

    pub fn validate(&self) -> Result<(), PartitionError> {
        match self {
            Refinement::Doubling | Refinement::Logarithmic | Refinement::IteratedLog => Ok(()),
            Refinement::RationalExponent { den, .. } => {
                if *den == 0 {
                    Err(PartitionError::InvalidFamily("rational exponent with zero denominator".into()))
                } else {
                    Ok(())
                }
            }
            Refinement::Exponents { table } => {
                if table.is_empty() {
                    return Err(PartitionError::InvalidFamily("empty exponent table".into()));
                }
                if table.windows(2).any(|w| w[1] < w[0]) {
                    return Err(PartitionError::InvalidFamily(
                        "exponent table must be nondecreasing".into(),
                    ));
                }
                if table.iter().any(|&e| e > MAX_EXPONENT) {
                    return Err(PartitionError::InvalidFamily(format!(
                        "exponent table entry exceeds {MAX_EXPONENT}"
                    )));
                }
                Ok(())
            }
        }
    }
}

/// Number of cells a level offers to a source supported on the family's
/// range (guard and separator cells excluded, see [`PartitionFamily::cell_count`]).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellCount {
    Finite(u64),
    Infinite,
}

/// A nested sequence of interval partitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PartitionFamily<S> {
    /// `2^g(k)` equal half-open cells on `[lo, hi)` plus two unbounded guard
    /// cells `(-inf, lo)` and `[hi, +inf)` so the whole line is covered.
    DyadicFinite { lo: S, hi: S, cells: Refinement },
    /// Countably many cells `[m 2^-g(k), (m+1) 2^-g(k))` tiling the line.
    DyadicInfinite { widths: Refinement },
    /// Point cells on a finite sorted alphabet. The open gaps between
    /// letters (and the two tails) are cells of their own, so coverage
    /// still holds; they never shrink, which is why this family is exempt
    /// from the shrinkage requirement. Alphabet-supported sources never
    /// occupy them.
    FiniteAlphabetExact { alphabet: Vec<S> },
}

impl<S: Scalar> PartitionFamily<S> {
    pub fn dyadic_finite(lo: S, hi: S, cells: Refinement) -> Result<Self, PartitionError> {
        let family = PartitionFamily::DyadicFinite { lo, hi, cells };
        family.validate()?;
        Ok(family)
    }

    pub fn dyadic_infinite(widths: Refinement) -> Result<Self, PartitionError> {
        let family = PartitionFamily::DyadicInfinite { widths };
        family.validate()?;
        Ok(family)
    }

    pub fn finite_alphabet(alphabet: Vec<S>) -> Result<Self, PartitionError> {
        let family = PartitionFamily::FiniteAlphabetExact { alphabet };
        family.validate()?;
        Ok(family)
    }

    /// Unit-interval family with the slowly growing default refinement.
    pub fn unit_slow_refinement() -> Self {
        PartitionFamily::DyadicFinite {
            lo: S::zero(),
            hi: S::one(),
            cells: Refinement::IteratedLog,
        }
    }

    pub fn validate(&self) -> Result<(), PartitionError> {
        match self {
            PartitionFamily::DyadicFinite { lo, hi, cells } => {
                if !lo.is_finite() || !hi.is_finite() {
                    return Err(PartitionError::InvalidFamily("range endpoints must be finite".into()));
                }
                if *lo >= *hi {
                    return Err(PartitionError::InvalidFamily("range must satisfy lo < hi".into()));
                }
                cells.validate()
            }
            PartitionFamily::DyadicInfinite { widths } => widths.validate(),
            PartitionFamily::FiniteAlphabetExact { alphabet } => {
                if alphabet.is_empty() {
                    return Err(PartitionError::InvalidFamily("empty alphabet".into()));
                }
                if alphabet.iter().any(|a| !a.is_finite()) {
                    return Err(PartitionError::InvalidFamily("alphabet letters must be finite".into()));
                }
                if alphabet.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(PartitionError::InvalidFamily(
                        "alphabet must be strictly increasing".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    /// True when the family never refines (exact finite alphabets): the
    /// shrinkage requirement does not apply to it.
    pub fn is_shrinkage_exempt(&self) -> bool {
        matches!(self, PartitionFamily::FiniteAlphabetExact { .. })
    }

    pub fn is_finite(&self) -> bool {
        !matches!(self, PartitionFamily::DyadicInfinite { .. })
    }

    /// Identity of the cell containing `x` at level `k`. This is the hot
    /// path of the scanner; [`Self::cell_of`] adds the endpoints back.
    pub fn cell_id_of(&self, x: S, k: u32) -> Result<CellId, PartitionError> {
        if k == 0 {
            return Err(PartitionError::LevelZero);
        }
        if !x.is_finite() {
            return Err(PartitionError::NonFiniteInput { value: x.as_f64() });
        }
        let index = match self {
            PartitionFamily::DyadicFinite { lo, hi, cells } => {
                let g = cells.exponent(k)?;
                if x < *lo {
                    -1
                } else if x >= *hi {
                    1i64 << g
                } else {
                    let n: u64 = 1 << g;
                    let scale = S::from_u64(n).unwrap();
                    // One shared rounding in t, then an exact power-of-two
                    // scaling: floor(t 2^g) at level k+1 refines floor(t 2^g')
                    // at level k exactly, so nestedness holds bit-for-bit.
                    let t = (x - *lo) / (*hi - *lo);
                    let i = (t * scale).floor().to_u64().unwrap_or(0);
                    // t can round up to exactly 1.0 just below hi.
                    i.min(n - 1) as i64
                }
            }
            PartitionFamily::DyadicInfinite { widths } => {
                let g = widths.exponent(k)?;
                let scale = S::from_u64(1u64 << g).unwrap();
                let scaled = (x * scale).floor();
                match scaled.to_i64() {
                    Some(i) if i < i64::MAX => i,
                    _ => return Err(PartitionError::IndexOverflow { value: x.as_f64(), level: k }),
                }
            }
            PartitionFamily::FiniteAlphabetExact { alphabet } => {
                let pos = alphabet.partition_point(|a| *a < x);
                if pos < alphabet.len() && alphabet[pos] == x {
                    (2 * pos + 1) as i64
                } else {
                    (2 * pos) as i64
                }
            }
        };
        Ok(CellId { level: k, index })
    }

    /// Reconstruct the full cell (endpoints included) from an id produced by
    /// [`Self::cell_id_of`].
    pub fn cell_from_id(&self, id: CellId) -> Result<Cell<S>, PartitionError> {
        let k = id.level;
        if k == 0 {
            return Err(PartitionError::LevelZero);
        }
        match self {
            PartitionFamily::DyadicFinite { lo, hi, cells } => {
                let g = cells.exponent(k)?;
                let n: u64 = 1 << g;
                if id.index == -1 {
                    return Ok(Cell {
                        lower: S::neg_infinity(),
                        upper: *lo,
                        lower_closed: false,
                        upper_closed: false,
                        level: k,
                        index: -1,
                    });
                }
                if id.index == n as i64 {
                    return Ok(Cell {
                        lower: *hi,
                        upper: S::infinity(),
                        lower_closed: true,
                        upper_closed: false,
                        level: k,
                        index: id.index,
                    });
                }
                let i = id.index as u64;
                let width = (*hi - *lo) / S::from_u64(n).unwrap();
                let lower = *lo + S::from_u64(i).unwrap() * width;
                let upper = if i + 1 == n { *hi } else { *lo + S::from_u64(i + 1).unwrap() * width };
                Ok(Cell { lower, upper, lower_closed: true, upper_closed: false, level: k, index: id.index })
            }
            PartitionFamily::DyadicInfinite { widths } => {
                let g = widths.exponent(k)?;
                let scale = S::from_u64(1u64 << g).unwrap();
                let lower = S::from_i64(id.index).unwrap() / scale;
                let upper = S::from_i64(id.index + 1).unwrap() / scale;
                Ok(Cell { lower, upper, lower_closed: true, upper_closed: false, level: k, index: id.index })
            }
            PartitionFamily::FiniteAlphabetExact { alphabet } => {
                let m = alphabet.len() as i64;
                let idx = id.index;
                if idx % 2 == 1 {
                    let a = alphabet[(idx / 2) as usize];
                    Ok(Cell { lower: a, upper: a, lower_closed: true, upper_closed: true, level: k, index: idx })
                } else {
                    let pos = idx / 2;
                    let lower = if pos == 0 { S::neg_infinity() } else { alphabet[(pos - 1) as usize] };
                    let upper = if pos == m { S::infinity() } else { alphabet[pos as usize] };
                    Ok(Cell { lower, upper, lower_closed: false, upper_closed: false, level: k, index: idx })
                }
            }
        }
    }

    /// The cell of the level-k partition containing `x`.
    pub fn cell_of(&self, x: S, k: u32) -> Result<Cell<S>, PartitionError> {
        let id = self.cell_id_of(x, k)?;
        self.cell_from_id(id)
    }

    /// Elementwise quantization of a block of samples.
    pub fn quantize_block(&self, xs: &[S], k: u32) -> Result<Vec<Cell<S>>, PartitionError> {
        xs.iter().map(|&x| self.cell_of(x, k)).collect()
    }

    /// Elementwise cell identities, the form block comparisons use.
    pub fn quantize_ids(&self, xs: &[S], k: u32) -> Result<Vec<CellId>, PartitionError> {
        xs.iter().map(|&x| self.cell_id_of(x, k)).collect()
    }

    /// Number of cells at level `k` available to a source supported on the
    /// family's range. Guard cells of the finite dyadic family and the gap
    /// cells of the exact-alphabet family are excluded: a range-supported
    /// path never occupies them, and growth bounds count occupiable blocks.
    pub fn cell_count(&self, k: u32) -> Result<CellCount, PartitionError> {
        if k == 0 {
            return Err(PartitionError::LevelZero);
        }
        match self {
            PartitionFamily::DyadicFinite { cells, .. } => {
                Ok(CellCount::Finite(1u64 << cells.exponent(k)?))
            }
            PartitionFamily::DyadicInfinite { .. } => Ok(CellCount::Infinite),
            PartitionFamily::FiniteAlphabetExact { alphabet } => {
                Ok(CellCount::Finite(alphabet.len() as u64))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_doubling() -> PartitionFamily<f64> {
        PartitionFamily::dyadic_finite(0.0, 1.0, Refinement::Doubling).unwrap()
    }

    fn binary_alphabet() -> PartitionFamily<f64> {
        PartitionFamily::finite_alphabet(vec![0.0, 1.0]).unwrap()
    }

    #[test]
    fn dyadic_cell_lookup_matches_grid_arithmetic() {
        // Interval arithmetic on the dyadic grid of [0, 1).
        let fam = unit_doubling();
        let c = fam.cell_of(0.3, 1).unwrap();
        assert_eq!((c.lower, c.upper), (0.0, 0.5));
        assert!(c.lower_closed && !c.upper_closed);
        let c = fam.cell_of(0.3, 2).unwrap();
        assert_eq!((c.lower, c.upper), (0.25, 0.5));
        assert_eq!(c.index, 1);
    }

    #[test]
    fn alphabet_points_are_their_own_cells_at_every_level() {
        let fam = binary_alphabet();
        for k in [1, 3, 17] {
            let c = fam.cell_of(1.0, k).unwrap();
            assert!(c.is_point());
            assert_eq!(c.lower, 1.0);
            assert_eq!(c.diam(), 0.0);
        }
        // Off-alphabet points land in the separator cells.
        let gap = fam.cell_of(0.5, 1).unwrap();
        assert_eq!((gap.lower, gap.upper), (0.0, 1.0));
        assert!(!gap.lower_closed && !gap.upper_closed);
    }

    #[test]
    fn diam_covers_bounded_unbounded_and_point_cells() {
        let fam = unit_doubling();
        assert_eq!(fam.cell_of(0.3, 2).unwrap().diam(), 0.25);
        let tail = fam.cell_of(-3.0, 1).unwrap();
        assert_eq!(tail.diam(), f64::INFINITY);
        assert_eq!(tail.index, -1);
        assert_eq!(binary_alphabet().cell_of(1.0, 4).unwrap().diam(), 0.0);
    }

    #[test]
    fn quantize_block_is_elementwise() {
        let fam = unit_doubling();
        let cells = fam.quantize_block(&[0.3, 0.7], 1).unwrap();
        assert_eq!((cells[0].lower, cells[0].upper), (0.0, 0.5));
        assert_eq!((cells[1].lower, cells[1].upper), (0.5, 1.0));
        assert!(fam.quantize_block(&[], 5).unwrap().is_empty());
        let one = fam.quantize_block(&[0.3], 2).unwrap();
        assert_eq!((one[0].lower, one[0].upper), (0.25, 0.5));
    }

    #[test]
    fn cell_counts_per_family() {
        let slow = PartitionFamily::dyadic_finite(
            0.0,
            1.0,
            Refinement::RationalExponent { num: 1, den: 10 },
        )
        .unwrap();
        assert_eq!(slow.cell_count(10).unwrap(), CellCount::Finite(2));
        assert_eq!(binary_alphabet().cell_count(7).unwrap(), CellCount::Finite(2));
        let infinite = PartitionFamily::<f64>::dyadic_infinite(Refinement::Doubling).unwrap();
        assert_eq!(infinite.cell_count(3).unwrap(), CellCount::Infinite);
    }

    #[test]
    fn non_finite_inputs_are_rejected() {
        let fam = unit_doubling();
        assert!(matches!(
            fam.cell_of(f64::NAN, 1),
            Err(PartitionError::NonFiniteInput { .. })
        ));
        assert!(matches!(
            fam.cell_of(f64::INFINITY, 1),
            Err(PartitionError::NonFiniteInput { .. })
        ));
        assert!(matches!(fam.cell_of(0.5, 0), Err(PartitionError::LevelZero)));
    }

    #[test]
    fn construction_rejects_bad_families() {
        assert!(PartitionFamily::dyadic_finite(1.0, 0.0, Refinement::Doubling).is_err());
        assert!(PartitionFamily::dyadic_finite(0.0, f64::INFINITY, Refinement::Doubling).is_err());
        assert!(PartitionFamily::finite_alphabet(vec![1.0, 0.0]).is_err());
        assert!(PartitionFamily::finite_alphabet(Vec::<f64>::new()).is_err());
        assert!(PartitionFamily::dyadic_finite(
            0.0,
            1.0,
            Refinement::Exponents { table: vec![2, 1] }
        )
        .is_err());
        // Deeper than the exact-arithmetic cap.
        let fam = unit_doubling();
        assert!(matches!(
            fam.cell_of(0.5, MAX_EXPONENT + 1),
            Err(PartitionError::ExponentTooDeep { .. })
        ));
    }

    #[test]
    fn iterated_log_exponent_is_small_and_nondecreasing() {
        let r = Refinement::IteratedLog;
        assert_eq!(r.exponent(1).unwrap(), 2);
        let mut prev = 0;
        for k in 1..=100_000 {
            let g = r.exponent(k).unwrap();
            assert!(g >= prev);
            prev = g;
        }
        assert!(prev <= 6);
    }

    fn families() -> Vec<PartitionFamily<f64>> {
        vec![
            unit_doubling(),
            PartitionFamily::dyadic_finite(-2.0, 3.0, Refinement::RationalExponent { num: 1, den: 2 })
                .unwrap(),
            PartitionFamily::dyadic_finite(0.0, 1.0, Refinement::IteratedLog).unwrap(),
            PartitionFamily::dyadic_infinite(Refinement::Doubling).unwrap(),
        ]
    }

    proptest! {
        // 10_000 executions spread over the cases via proptest's default
        // budget times the explicit loop below.
        #[test]
        fn nestedness_every_cell_sits_inside_its_parent(x in -4.0f64..4.0, fam_ix in 0usize..4) {
            let fam = &families()[fam_ix];
            for k in 1..20u32 {
                let outer = fam.cell_of(x, k).unwrap();
                let inner = fam.cell_of(x, k + 1).unwrap();
                prop_assert!(outer.contains(x));
                prop_assert!(inner.contains(x));
                prop_assert!(inner.lower >= outer.lower && inner.upper <= outer.upper);
            }
        }

        #[test]
        fn shrinkage_diameters_fall_below_any_threshold(x in 0.0f64..1.0, delta_exp in 1u32..20) {
            let fam = unit_doubling();
            let delta = 2f64.powi(-(delta_exp as i32));
            let mut prev = f64::INFINITY;
            let mut reached = false;
            // For the doubling family diam = 2^-k on the range, so level
            // delta_exp + 1 is guaranteed to be below delta.
            for k in 1..=delta_exp + 1 {
                let d = fam.cell_of(x, k).unwrap().diam();
                prop_assert!(d <= prev);
                prev = d;
                if d < delta {
                    reached = true;
                    break;
                }
            }
            prop_assert!(reached);
        }

        #[test]
        fn same_cell_ids_mean_same_cells_and_distinct_ids_are_disjoint(
            x in 0.0f64..1.0,
            y in 0.0f64..1.0,
            k in 1u32..16,
        ) {
            let fam = unit_doubling();
            let cx = fam.cell_of(x, k).unwrap();
            let cy = fam.cell_of(y, k).unwrap();
            if cx.id() == cy.id() {
                prop_assert_eq!(cx, cy);
            } else {
                // Half-open interior cells: disjoint iff ordered.
                prop_assert!(cx.upper <= cy.lower || cy.upper <= cx.lower);
            }
        }

        #[test]
        fn reconstructed_cells_contain_their_samples(x in -8.0f64..8.0, k in 1u32..24) {
            for fam in families() {
                let cell = fam.cell_of(x, k).unwrap();
                prop_assert!(cell.contains(x), "{:?} does not contain {}", cell, x);
                prop_assert_eq!(fam.cell_id_of(x, k).unwrap(), cell.id());
            }
        }
    }
}
