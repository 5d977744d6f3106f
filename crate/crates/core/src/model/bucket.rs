//! Score buckets used to pick study submissions.

use std::fmt;

use num_traits::{FromPrimitive, Num};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreBucket {
    Low,
    Mid,
    High,
    Other,
    Perfect,
}

impl ScoreBucket {
    /// The three buckets a study draws submissions from, in presentation order.
    pub const STUDY: [ScoreBucket; 3] = [ScoreBucket::Low, ScoreBucket::Mid, ScoreBucket::High];

    pub fn as_str(self) -> &'static str {
        match self {
            ScoreBucket::Low => "low",
            ScoreBucket::Mid => "mid",
            ScoreBucket::High => "high",
            ScoreBucket::Other => "other",
            ScoreBucket::Perfect => "perfect",
        }
    }

    /// Target score used when several submissions fall in the same bucket,
    /// as `(numerator, denominator)`.
    pub fn center(self) -> Option<(u32, u32)> {
        match self {
            ScoreBucket::Low => Some((1, 10)),
            ScoreBucket::Mid => Some((1, 2)),
            ScoreBucket::High => Some((9, 10)),
            _ => None,
        }
    }
}

impl fmt::Display for ScoreBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("score {0} is outside [0, 1]")]
pub struct ScoreOutOfRange(pub String);

fn ratio<T: Num + FromPrimitive>(num: u32, den: u32) -> T {
    // Small integers are representable in every supported scalar.
    T::from_u32(num).expect("small integer") / T::from_u32(den).expect("small integer")
}

/// Classifies a pass fraction.
///
/// Low is `< 0.2`, Mid is `[0.4, 0.6]`, High is `(0.8, 1)`, Perfect is exactly 1,
/// and every other score in `[0, 1]` is Other. Works for floats and for exact
/// rationals such as [`crate::Score`].
pub fn bucket_of<T>(score: T) -> Result<ScoreBucket, ScoreOutOfRange>
where
    T: Num + FromPrimitive + PartialOrd + Copy + fmt::Debug,
{
    let zero = T::zero();
    let one = T::one();
    // NaN fails both comparisons.
    if !(score >= zero && score <= one) {
        return Err(ScoreOutOfRange(format!("{score:?}")));
    }
    let bucket = if score < ratio(1, 5) {
        ScoreBucket::Low
    } else if score >= ratio(2, 5) && score <= ratio(3, 5) {
        ScoreBucket::Mid
    } else if score == one {
        ScoreBucket::Perfect
    } else if score > ratio(4, 5) {
        ScoreBucket::High
    } else {
        ScoreBucket::Other
    };
    Ok(bucket)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Score;

    #[test]
    fn documented_examples() {
        assert_eq!(bucket_of(0.15).unwrap(), ScoreBucket::Low);
        assert_eq!(bucket_of(0.50).unwrap(), ScoreBucket::Mid);
        assert_eq!(bucket_of(1.00).unwrap(), ScoreBucket::Perfect);
        assert_eq!(bucket_of(0.30).unwrap(), ScoreBucket::Other);
    }

    #[test]
    fn rejects_out_of_domain() {
        assert!(bucket_of(-0.01).is_err());
        assert!(bucket_of(1.01).is_err());
        assert!(bucket_of(f64::NAN).is_err());
        assert!(bucket_of(f32::INFINITY).is_err());
    }

    #[test]
    fn float_and_rational_agree_on_pass_fractions() {
        for total in 1..=40u32 {
            for passes in 0..=total {
                let exact = bucket_of(Score::new(passes, total)).unwrap();
                let float = bucket_of(passes as f64 / total as f64).unwrap();
                assert_eq!(exact, float, "{passes}/{total}");
                let single = bucket_of(passes as f32 / total as f32).unwrap();
                assert_eq!(exact, single, "{passes}/{total} (f32)");
            }
        }
    }
}
