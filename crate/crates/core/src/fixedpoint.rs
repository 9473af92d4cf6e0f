//! Signed Q12.8 fixed point and the piecewise-linear exponential decay
//! used by the saliency datapath.
//!
//! Pixel states are 21-bit two's complement words: 1 sign bit, 12 integer
//! bits and 8 fractional bits. All arithmetic saturates at the bounds of
//! that word. Decay factors are unsigned Q0.16 with one bit of headroom so
//! that 1.0 is exact.

use std::fmt;
use std::ops::Neg;

use thiserror::Error;

/// Fractional bits of a [`Fixed`].
pub const FRAC_BITS: u32 = 8;
/// Total width of a [`Fixed`] word, sign included.
pub const WORD_BITS: u32 = 21;

const FIXED_ONE: i32 = 1 << FRAC_BITS;
const FIXED_MAX: i32 = (1 << (WORD_BITS - 1)) - 1;
const FIXED_MIN: i32 = -(1 << (WORD_BITS - 1));

/// Fractional bits of a [`DecayFactor`].
pub const DECAY_FRAC_BITS: u32 = 16;
const DECAY_ONE: u32 = 1 << DECAY_FRAC_BITS;

/// Position along the decay domain, in units of Δt/τ, as Q.16.
type DomainQ16 = u64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FixedPointError {
    #[error("tau must be positive")]
    ZeroTau,
    #[error("pwl table needs at least one segment")]
    NoSegments,
    #[error("pwl domain cutoff must be finite and positive, got {0}")]
    BadCutoff(f64),
    #[error("pwl table with {segments} segments over [0, {cutoff}] has a degenerate segment")]
    DegenerateSegment { segments: usize, cutoff: f64 },
}

/// Signed Q12.8 scalar stored in the low 21 bits of an `i32`.
#[derive(Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Fixed(i32);

impl Fixed {
    pub const ZERO: Fixed = Fixed(0);
    pub const ONE: Fixed = Fixed(FIXED_ONE);
    pub const MAX: Fixed = Fixed(FIXED_MAX);
    pub const MIN: Fixed = Fixed(FIXED_MIN);

    /// Builds a value from its raw word, saturating to the 21-bit range.
    pub fn from_raw(raw: i32) -> Self {
        Fixed(raw.clamp(FIXED_MIN, FIXED_MAX))
    }

    pub fn raw(self) -> i32 {
        self.0
    }

    /// Nearest representable value, ties away from zero. NaN maps to zero.
    pub fn from_real(v: f64) -> Self {
        if v.is_nan() {
            return Fixed::ZERO;
        }
        let scaled = (v * FIXED_ONE as f64).round();
        if scaled >= FIXED_MAX as f64 {
            Fixed::MAX
        } else if scaled <= FIXED_MIN as f64 {
            Fixed::MIN
        } else {
            Fixed(scaled as i32)
        }
    }

    pub fn to_real(self) -> f64 {
        self.0 as f64 / FIXED_ONE as f64
    }

    pub fn add_sat(self, rhs: Fixed) -> Fixed {
        Fixed::from_raw(self.0 + rhs.0)
    }

    pub fn sub_sat(self, rhs: Fixed) -> Fixed {
        Fixed::from_raw(self.0 - rhs.0)
    }

    /// Scales by a decay factor, truncating toward zero.
    pub fn mul_decay(self, f: DecayFactor) -> Fixed {
        let prod = self.0 as i64 * f.0 as i64;
        // i64 division truncates toward zero, unlike an arithmetic shift
        Fixed::from_raw((prod / DECAY_ONE as i64) as i32)
    }

    pub fn is_negative(self) -> bool {
        self.0 < 0
    }
}

impl Neg for Fixed {
    type Output = Fixed;

    fn neg(self) -> Fixed {
        Fixed::from_raw(-self.0)
    }
}

impl fmt::Debug for Fixed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fixed({})", self.to_real())
    }
}

impl fmt::Display for Fixed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.to_real(), f)
    }
}

/// Unsigned Q0.16 multiplier in `[0, 1]`; `raw == 65536` is exactly 1.0.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DecayFactor(u32);

impl DecayFactor {
    pub const ZERO: DecayFactor = DecayFactor(0);
    pub const ONE: DecayFactor = DecayFactor(DECAY_ONE);

    pub fn from_raw(raw: u32) -> Self {
        DecayFactor(raw.min(DECAY_ONE))
    }

    pub fn raw(self) -> u32 {
        self.0
    }

    pub fn to_real(self) -> f64 {
        self.0 as f64 / DECAY_ONE as f64
    }
}

/// One linear piece of the decay curve, between two breakpoints.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Segment {
    /// Left breakpoint, Δt/τ as Q.16.
    pub start: DomainQ16,
    /// Right breakpoint, Δt/τ as Q.16.
    pub end: DomainQ16,
    /// Factor at `start`, Q0.16.
    pub intercept: u32,
    /// Factor lost across the segment, Q0.16. The slope is `-drop / (end - start)`.
    pub drop: u32,
}

impl Segment {
    /// Slope in factor units per unit of Δt/τ.
    pub fn slope(&self) -> f64 {
        -(self.drop as f64) / (self.end - self.start) as f64
    }

    fn eval(&self, pos: DomainQ16) -> u32 {
        let width = self.end - self.start;
        let lost = (self.drop as u64 * (pos - self.start)).div_ceil(width);
        self.intercept - lost as u32
    }
}

/// Piecewise-linear approximation of `exp(-x)` on `[0, domain_cutoff]`.
///
/// Breakpoints are placed so that every chord has the same worst-case
/// error: uniform in `1 - exp(-x/2)`, which makes segment widths grow as
/// `exp(x/2)`. Node values are the true exponential except the last one,
/// which is pinned to zero so the curve meets the cutoff continuously.
#[derive(Clone, Debug, PartialEq)]
pub struct PwlTable {
    segment_count: usize,
    domain_cutoff: f64,
    segments: Vec<Segment>,
}

impl Default for PwlTable {
    fn default() -> Self {
        PwlTable::new(16, 8.0).expect("default table is valid")
    }
}

impl PwlTable {
    pub fn new(segment_count: usize, domain_cutoff: f64) -> Result<Self, FixedPointError> {
        if segment_count == 0 {
            return Err(FixedPointError::NoSegments);
        }
        if !(domain_cutoff.is_finite() && domain_cutoff > 0.0) {
            return Err(FixedPointError::BadCutoff(domain_cutoff));
        }
        let degenerate = FixedPointError::DegenerateSegment { segments: segment_count, cutoff: domain_cutoff };
        let span = 1.0 - (-domain_cutoff / 2.0).exp();
        let q16 = |x: f64| (x * DECAY_ONE as f64).round();
        let cutoff_q = q16(domain_cutoff);
        if cutoff_q >= u32::MAX as f64 {
            return Err(FixedPointError::BadCutoff(domain_cutoff));
        }

        let mut nodes: Vec<(DomainQ16, u32)> = Vec::with_capacity(segment_count + 1);
        for k in 0..=segment_count {
            let (xq, y) = if k == segment_count {
                (cutoff_q, 0.0)
            } else {
                let x = -2.0 * (1.0 - k as f64 / segment_count as f64 * span).ln();
                let xq = q16(x);
                // node value follows the quantized breakpoint
                (xq, (-(xq / DECAY_ONE as f64)).exp())
            };
            nodes.push((xq as DomainQ16, q16(y) as u32));
        }

        let mut segments = Vec::with_capacity(segment_count);
        for pair in nodes.windows(2) {
            let ((x0, y0), (x1, y1)) = (pair[0], pair[1]);
            if x1 <= x0 || y1 > y0 {
                return Err(degenerate);
            }
            segments.push(Segment { start: x0, end: x1, intercept: y0, drop: y0 - y1 });
        }

        Ok(PwlTable { segment_count, domain_cutoff, segments })
    }

    pub fn segment_count(&self) -> usize {
        self.segment_count
    }

    pub fn domain_cutoff(&self) -> f64 {
        self.domain_cutoff
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Evaluates the table at `pos` (Δt/τ as Q.16).
    pub fn eval_q16(&self, pos: DomainQ16) -> DecayFactor {
        let end = self.segments.last().map_or(0, |s| s.end);
        if pos >= end {
            return DecayFactor::ZERO;
        }
        let idx = self.segments.partition_point(|s| s.end <= pos);
        DecayFactor(self.segments[idx].eval(pos))
    }

    /// Evaluates the table at a real-valued Δt/τ. Negative inputs clamp to 0.
    pub fn eval(&self, x: f64) -> DecayFactor {
        let pos = (x.max(0.0) * DECAY_ONE as f64).floor();
        if pos >= u64::MAX as f64 {
            return DecayFactor::ZERO;
        }
        self.eval_q16(pos as DomainQ16)
    }
}

/// Approximates `exp(-delta_t / tau)` through the table.
///
/// The ratio is formed in integer arithmetic and truncated to Q.16.
pub fn pwl_exp_decay(delta_t: u64, tau: u64, table: &PwlTable) -> Result<DecayFactor, FixedPointError> {
    if tau == 0 {
        return Err(FixedPointError::ZeroTau);
    }
    let pos = ((delta_t as u128) << DECAY_FRAC_BITS) / tau as u128;
    let pos = u64::try_from(pos).unwrap_or(u64::MAX);
    Ok(table.eval_q16(pos))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn from_real_examples() {
        assert_eq!(Fixed::from_real(1.0).raw(), 256);
        assert_eq!(Fixed::from_real(-0.5).raw(), -128);
        assert_eq!(Fixed::from_real(1e6).raw(), (1 << 20) - 1);
        assert_eq!(Fixed::from_real(1e6).to_real(), 4095.99609375);
        assert_eq!(Fixed::from_real(-1e6).to_real(), -4096.0);
    }

    #[test]
    fn from_real_rounds_half_away_from_zero() {
        assert_eq!(Fixed::from_real(0.5 / 256.0).raw(), 1);
        assert_eq!(Fixed::from_real(-0.5 / 256.0).raw(), -1);
        assert_eq!(Fixed::from_real(0.49 / 256.0).raw(), 0);
    }

    #[test]
    fn add_examples() {
        let f = Fixed::from_real;
        assert_eq!(f(4095.0).add_sat(f(10.0)).to_real(), 4095.99609375);
        assert_eq!(f(2.5).add_sat(f(-2.5)), Fixed::ZERO);
        assert_eq!(f(1.25).add_sat(f(0.25)).to_real(), 1.5);
        assert_eq!(Fixed::MIN.sub_sat(f(1.0)), Fixed::MIN);
        assert_eq!(-Fixed::MIN, Fixed::MAX);
    }

    #[test]
    fn mul_examples() {
        let f = Fixed::from_real;
        assert_eq!(f(5.0).mul_decay(DecayFactor::ONE), f(5.0));
        assert_eq!(f(5.0).mul_decay(DecayFactor::ZERO), Fixed::ZERO);
        assert_eq!(f(3.0).mul_decay(DecayFactor::from_raw(1 << 15)), f(1.5));
        // truncation toward zero on both signs
        let third = DecayFactor::from_raw(21845);
        assert_eq!(Fixed::from_raw(1).mul_decay(third).raw(), 0);
        assert_eq!(Fixed::from_raw(-1).mul_decay(third).raw(), 0);
        assert_eq!(Fixed::from_raw(-300).mul_decay(third).raw(), -99);
    }

    #[test]
    fn decay_examples() {
        let table = PwlTable::default();
        assert_eq!(pwl_exp_decay(0, 1000, &table).unwrap(), DecayFactor::ONE);
        assert_eq!(pwl_exp_decay(10_000, 1000, &table).unwrap(), DecayFactor::ZERO);
        assert_eq!(pwl_exp_decay(8_000, 1000, &table).unwrap(), DecayFactor::ZERO);
        let at_tau = pwl_exp_decay(1000, 1000, &table).unwrap().to_real();
        // oracle: e^-1 to full double precision
        assert!((at_tau - 0.36787944117144233).abs() <= 1.0 / 128.0, "{at_tau}");
        assert_eq!(pwl_exp_decay(1, 0, &table), Err(FixedPointError::ZeroTau));
    }

    #[test]
    fn default_table_shape() {
        let table = PwlTable::default();
        assert_eq!(table.segments().len(), 16);
        assert_eq!(table.segments()[0].start, 0);
        assert_eq!(table.segments()[0].intercept, 1 << 16);
        assert_eq!(table.segments().last().unwrap().end, 8 << 16);
        for pair in table.segments().windows(2) {
            assert_eq!(pair[0].end, pair[1].start);
            assert_eq!(pair[0].intercept - pair[0].drop, pair[1].intercept);
            assert!(pair[0].slope() <= 0.0);
        }
    }

    #[test]
    fn table_rejects_bad_parameters() {
        assert_eq!(PwlTable::new(0, 8.0), Err(FixedPointError::NoSegments));
        assert!(matches!(PwlTable::new(4, 0.0), Err(FixedPointError::BadCutoff(_))));
        assert!(matches!(PwlTable::new(4, f64::NAN), Err(FixedPointError::BadCutoff(_))));
        assert!(matches!(PwlTable::new(1 << 20, 1e-3), Err(FixedPointError::DegenerateSegment { .. })));
    }

    #[test]
    fn default_table_error_bound_on_dense_grid() {
        let table = PwlTable::default();
        let worst = (0..=80_000)
            .map(|i| {
                let x = i as f64 * 1e-4;
                (table.eval(x).to_real() - (-x).exp()).abs()
            })
            .fold(0.0, f64::max);
        assert!(worst <= 1.0 / 128.0, "worst error {worst}");
    }

    #[test]
    fn decay_is_monotone_on_dense_grid() {
        let table = PwlTable::default();
        let tau = 10_000;
        let mut prev = DecayFactor::ONE;
        for dt in 0..=90_000u64 {
            let f = pwl_exp_decay(dt, tau, &table).unwrap();
            assert!(f <= prev, "increase at dt={dt}");
            prev = f;
        }
        assert_eq!(prev, DecayFactor::ZERO);
    }

    proptest! {
        #[test]
        fn round_trip_is_exact(raw in FIXED_MIN..=FIXED_MAX) {
            let f = Fixed::from_raw(raw);
            prop_assert_eq!(Fixed::from_real(f.to_real()), f);
        }

        #[test]
        fn add_stays_in_word(a in FIXED_MIN..=FIXED_MAX, b in FIXED_MIN..=FIXED_MAX) {
            let sum = Fixed::from_raw(a).add_sat(Fixed::from_raw(b)).raw();
            prop_assert!((FIXED_MIN..=FIXED_MAX).contains(&sum));
            prop_assert_eq!(sum, (a + b).clamp(FIXED_MIN, FIXED_MAX));
        }

        #[test]
        fn mul_identity_and_annihilation(raw in FIXED_MIN..=FIXED_MAX) {
            let f = Fixed::from_raw(raw);
            prop_assert_eq!(f.mul_decay(DecayFactor::ONE), f);
            prop_assert_eq!(f.mul_decay(DecayFactor::ZERO), Fixed::ZERO);
        }

        #[test]
        fn decay_tracks_exponential(tau in 1u64..10_000_000, frac in 0.0f64..=1.0) {
            let table = PwlTable::default();
            let delta_t = (frac * 8.0 * tau as f64).floor() as u64;
            let approx = pwl_exp_decay(delta_t, tau, &table).unwrap().to_real();
            let exact = (-(delta_t as f64) / tau as f64).exp();
            prop_assert!((approx - exact).abs() <= 1.0 / 128.0);
        }

        #[test]
        fn decay_monotone_in_delta(tau in 1u64..1_000_000, a in 0u64..10_000_000, b in 0u64..10_000_000) {
            let table = PwlTable::default();
            let (lo, hi) = (a.min(b), a.max(b));
            prop_assert!(pwl_exp_decay(hi, tau, &table).unwrap() <= pwl_exp_decay(lo, tau, &table).unwrap());
        }
    }
}
