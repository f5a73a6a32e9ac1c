use crate::error::{Error, Result};

/// Six months of 182.5 days, in minutes.
pub const SIX_MONTHS_MINUTES: f64 = 262_800.0;
/// Smallest representable gap.
pub const MIN_INTERVAL_MINUTES: f64 = 5.0;

pub const INTERVAL_CLASS_COUNT: usize = 13;

/// Token text for each class of the standard ladder.
pub const INTERVAL_TOKENS: [&str; INTERVAL_CLASS_COUNT] = [
    "INT_5m", "INT_15m", "INT_30m", "INT_1h", "INT_2h", "INT_6h", "INT_12h", "INT_1d", "INT_3d", "INT_1w",
    "INT_1mo", "INT_3mo", "INT_6mo",
];

const STANDARD_MINUTES: [f64; INTERVAL_CLASS_COUNT] = [
    5.0,
    15.0,
    30.0,
    60.0,
    120.0,
    360.0,
    720.0,
    1_440.0,
    4_320.0,
    10_080.0,
    43_800.0,
    131_400.0,
    SIX_MONTHS_MINUTES,
];

/// The thirteen elapsed-time classes, 5 minutes through 6 months.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalLadder {
    classes: [f64; INTERVAL_CLASS_COUNT],
}

impl Default for IntervalLadder {
    fn default() -> Self {
        IntervalLadder { classes: STANDARD_MINUTES }
    }
}

impl IntervalLadder {
    pub fn standard() -> Self {
        Self::default()
    }

    /// Custom ladder; must keep the 5-minute and 6-month endpoints.
    pub fn new(classes: &[f64]) -> Result<Self> {
        if classes.len() != INTERVAL_CLASS_COUNT {
            return Err(Error::invalid(format!("interval ladder needs {INTERVAL_CLASS_COUNT} classes, got {}", classes.len())));
        }
        if classes.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::invalid("interval ladder must be strictly ascending"));
        }
        if classes[0] != MIN_INTERVAL_MINUTES || classes[INTERVAL_CLASS_COUNT - 1] != SIX_MONTHS_MINUTES {
            return Err(Error::invalid("interval ladder must span 5 minutes to 6 months"));
        }
        let mut out = [0.0; INTERVAL_CLASS_COUNT];
        out.copy_from_slice(classes);
        Ok(IntervalLadder { classes: out })
    }

    pub fn classes(&self) -> &[f64; INTERVAL_CLASS_COUNT] {
        &self.classes
    }

    /// Nominal duration of a class, in minutes.
    pub fn duration(&self, class: usize) -> f64 {
        self.classes[class]
    }

    pub fn largest(&self) -> f64 {
        self.classes[INTERVAL_CLASS_COUNT - 1]
    }

    /// Interval classes representing a gap.
    ///
    /// Below 5 minutes nothing is emitted. Up to 6 months the largest class not
    /// exceeding the gap is used. Longer gaps become `round(gap / 6 months)`
    /// copies of the 6-month class, halves rounding up.
    pub fn intervals_for_gap(&self, gap_minutes: f64) -> Result<Vec<usize>> {
        if !(gap_minutes >= 0.0) || !gap_minutes.is_finite() {
            return Err(Error::invalid(format!("gap must be a nonnegative finite number, got {gap_minutes}")));
        }
        if gap_minutes < self.classes[0] {
            return Ok(Vec::new());
        }
        let top = INTERVAL_CLASS_COUNT - 1;
        if gap_minutes <= self.largest() {
            let class = self.classes.iter().rposition(|&c| c <= gap_minutes).unwrap_or(0);
            return Ok(vec![class]);
        }
        let copies = ((gap_minutes / self.largest()) + 0.5).floor().max(1.0) as usize;
        Ok(vec![top; copies])
    }

    /// Total duration represented by a list of classes.
    pub fn represented(&self, classes: &[usize]) -> f64 {
        classes.iter().map(|&c| self.classes[c]).sum()
    }
}

/// Free-function form of [`IntervalLadder::intervals_for_gap`].
pub fn intervals_for_gap(gap_minutes: f64, ladder: &IntervalLadder) -> Result<Vec<usize>> {
    ladder.intervals_for_gap(gap_minutes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::event::MINUTES_PER_YEAR;
    use proptest::prelude::*;

    fn ladder() -> IntervalLadder {
        IntervalLadder::standard()
    }

    #[test]
    fn ladder_shape() {
        let l = ladder();
        assert_eq!(l.classes().len(), 13);
        assert_eq!(l.classes()[0], 5.0);
        assert_eq!(l.largest(), 262_800.0);
        assert!(l.classes().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn under_five_minutes_is_empty() {
        assert!(ladder().intervals_for_gap(3.0).unwrap().is_empty());
        assert!(ladder().intervals_for_gap(0.0).unwrap().is_empty());
        assert!(ladder().intervals_for_gap(4.999).unwrap().is_empty());
    }

    #[test]
    fn exactly_five_minutes_is_one_token() {
        assert_eq!(ladder().intervals_for_gap(5.0).unwrap(), vec![0]);
    }

    #[test]
    fn one_point_four_years_is_three_six_month_tokens() {
        let gap = 1.4 * MINUTES_PER_YEAR;
        assert_eq!(gap.round(), 736_344.0);
        assert_eq!(ladder().intervals_for_gap(736_128.0).unwrap(), vec![12, 12, 12]);
        assert_eq!(ladder().intervals_for_gap(gap).unwrap(), vec![12, 12, 12]);
    }

    #[test]
    fn floor_rule_against_direct_scan() {
        // 20 minutes: scan ladder for the largest class <= 20 -> 15 minutes
        let l = ladder();
        let oracle = |gap: f64| {
            let mut best = None;
            for (i, &c) in l.classes().iter().enumerate() {
                if c <= gap {
                    best = Some(i);
                }
            }
            best
        };
        assert_eq!(oracle(20.0), Some(1));
        assert_eq!(l.intervals_for_gap(20.0).unwrap(), vec![1]);
        for gap in [5.0, 14.9, 15.0, 59.0, 1_440.0, 10_079.0, 43_800.0, 262_800.0] {
            assert_eq!(l.intervals_for_gap(gap).unwrap(), vec![oracle(gap).unwrap()], "gap {gap}");
        }
    }

    #[test]
    fn ties_round_up_and_minimum_one() {
        let l = ladder();
        assert_eq!(l.intervals_for_gap(2.5 * SIX_MONTHS_MINUTES).unwrap().len(), 3);
        assert_eq!(l.intervals_for_gap(1.2 * SIX_MONTHS_MINUTES).unwrap().len(), 1);
        assert_eq!(l.intervals_for_gap(1.5 * SIX_MONTHS_MINUTES).unwrap().len(), 2);
    }

    #[test]
    fn negative_gap_rejected() {
        assert!(ladder().intervals_for_gap(-1.0).is_err());
        assert!(ladder().intervals_for_gap(f64::NAN).is_err());
    }

    #[test]
    fn custom_ladder_validation() {
        let mut c = STANDARD_MINUTES.to_vec();
        assert!(IntervalLadder::new(&c).is_ok());
        c.swap(3, 4);
        assert!(IntervalLadder::new(&c).is_err());
        assert!(IntervalLadder::new(&STANDARD_MINUTES[..12]).is_err());
    }

    proptest! {
        #[test]
        fn monotone_in_gap(a in 0.0f64..5e6, b in 0.0f64..5e6) {
            let l = ladder();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let dl = l.represented(&l.intervals_for_gap(lo).unwrap());
            let dh = l.represented(&l.intervals_for_gap(hi).unwrap());
            prop_assert!(dl <= dh);
        }

        #[test]
        fn represented_duration_close_to_gap(gap in 5.0f64..5e6) {
            let l = ladder();
            let classes = l.intervals_for_gap(gap).unwrap();
            let rep = l.represented(&classes);
            if gap > SIX_MONTHS_MINUTES {
                prop_assert!((rep - gap).abs() <= SIX_MONTHS_MINUTES);
            } else {
                // within one ladder step below the gap
                let c = classes[0];
                prop_assert!(rep <= gap);
                if c + 1 < INTERVAL_CLASS_COUNT {
                    prop_assert!(gap < l.duration(c + 1));
                }
            }
        }
    }
}
