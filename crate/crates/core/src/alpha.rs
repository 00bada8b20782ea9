//! Span-to-gap ratios of server sets.
//!
//! `L(T)` is the span of `T` divided by its largest adjacent gap and `α(S)` is
//! the maximum of `L` over all subsets of `S`. Both are zero for fewer than two
//! servers.

use num_traits::Zero;
use serde::Serialize;

use crate::error::{OfalError, Result};
use crate::model::{serde_coord, Rational, ServerLayout};
use crate::numeric::{Exact, Scaled};

pub const BRUTEFORCE_MAX_SERVERS: usize = 20;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Metrics {
    /// L of the full layout.
    #[serde(with = "serde_coord")]
    pub l_value: Rational,
    #[serde(with = "serde_coord")]
    pub alpha: Rational,
    /// Server indices of a maximizing subset.
    pub witness: Vec<usize>,
}

impl Metrics {
    /// The competitive bound `2α + 1`.
    pub fn bound(&self) -> Rational {
        &self.alpha * Rational::from_integer(2.into()) + Rational::from_integer(1.into())
    }
}

/// `(t_m − t_1) / max_u (t_{u+1} − t_u)` for sorted `points`; 0 when fewer than two.
pub fn gap_ratio(points: &[Rational]) -> Rational {
    if points.len() <= 1 {
        return Rational::zero();
    }
    let max_gap = points
        .windows(2)
        .map(|w| &w[1] - &w[0])
        .max()
        .expect("at least one gap");
    (&points[points.len() - 1] - &points[0]) / max_gap
}

pub fn l_value(layout: &ServerLayout) -> Rational {
    gap_ratio(layout.positions())
}

/// Maximum of `gap_ratio` over every subset, by enumeration.
pub fn alpha_bruteforce(layout: &ServerLayout) -> Result<Metrics> {
    let k = layout.len();
    if k > BRUTEFORCE_MAX_SERVERS {
        return Err(OfalError::GuardExceeded {
            what: "alpha subset enumeration",
            size: k as u128,
            limit: BRUTEFORCE_MAX_SERVERS as u128,
        });
    }
    let scaled = Scaled::new(layout.positions());
    let (mask, span, gap) = match scaled.small(2) {
        Some(xs) => {
            let (mask, span, gap) = best_subset(&xs);
            (mask, span.into(), gap.into())
        }
        None => best_subset(&scaled.values),
    };
    let alpha = if gap.is_zero() {
        Rational::zero()
    } else {
        Rational::new(span, gap)
    };
    Ok(Metrics {
        l_value: l_value(layout),
        alpha,
        witness: mask_indices(mask, k),
    })
}

fn mask_indices(mask: u64, k: usize) -> Vec<usize> {
    (0..k).filter(|&j| mask >> j & 1 == 1).collect()
}

/// Returns (mask, span, max gap) of the first subset in mask order attaining the
/// largest ratio. Subsets of size < 2 have ratio 0.
fn best_subset<T: Exact>(xs: &[T]) -> (u64, T, T) {
    let k = xs.len();
    let mut best = (1u64, T::zero(), T::zero());
    for mask in 1u64..(1u64 << k) {
        if mask.count_ones() < 2 {
            continue;
        }
        let mut prev: Option<&T> = None;
        let mut first: Option<&T> = None;
        let mut max_gap = T::zero();
        for (j, x) in xs.iter().enumerate() {
            if mask >> j & 1 == 0 {
                continue;
            }
            if let Some(p) = prev {
                let g = x.clone() - p.clone();
                if g > max_gap {
                    max_gap = g;
                }
            } else {
                first = Some(x);
            }
            prev = Some(x);
        }
        let span = prev.unwrap().clone() - first.unwrap().clone();
        // span/max_gap > best.1/best.2, with best.2 == 0 meaning ratio 0.
        let better = if best.2.is_zero() {
            !span.is_zero()
        } else {
            span.clone() * best.2.clone() > best.1.clone() * max_gap.clone()
        };
        if better {
            best = (mask, span, max_gap);
        }
    }
    best
}

/// α via contiguous index intervals only.
///
/// Replacing a subset by all servers between its extremes keeps the span and
/// cannot enlarge the largest gap, so intervals suffice. The witness is the
/// lexicographically smallest maximizing interval `[i..=j]`.
pub fn alpha_fast(layout: &ServerLayout) -> Metrics {
    let xs = layout.positions();
    let k = xs.len();
    let mut alpha = Rational::zero();
    let mut witness = vec![0];
    for i in 0..k {
        let mut max_gap = Rational::zero();
        for j in i + 1..k {
            let g = &xs[j] - &xs[j - 1];
            if g > max_gap {
                max_gap = g;
            }
            let ratio = (&xs[j] - &xs[i]) / &max_gap;
            if ratio > alpha {
                alpha = ratio;
                witness = (i..=j).collect();
            }
        }
    }
    Metrics {
        l_value: l_value(layout),
        alpha,
        witness,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{int, rat};

    fn layout(xs: &[i64]) -> ServerLayout {
        ServerLayout::from_integers(xs).unwrap()
    }

    #[test]
    fn gap_ratio_examples() {
        assert_eq!(gap_ratio(layout(&[0, 1, 2, 3]).positions()), int(3));
        assert_eq!(gap_ratio(layout(&[0]).positions()), int(0));
        assert_eq!(gap_ratio(&[]), int(0));
        assert_eq!(gap_ratio(layout(&[0, 2, 4, 8]).positions()), int(2));
    }

    #[test]
    fn alpha_examples_agree() {
        let cases: &[(&[i64], Rational)] = &[
            (&[0, 2, 4, 8], int(2)),
            (&[0, 1], int(1)),
            (&[0, 1, 2, 3, 4], int(4)),
            (&[0, 1, 10, 11], rat(11, 9)),
            (&[0], int(0)),
        ];
        for (xs, expected) in cases {
            let s = layout(xs);
            assert_eq!(&alpha_bruteforce(&s).unwrap().alpha, expected, "{xs:?}");
            assert_eq!(&alpha_fast(&s).alpha, expected, "{xs:?}");
        }
    }

    #[test]
    fn fast_witness_is_leftmost_interval() {
        // {0,1} and {1,2} and {0,1,2}: the full interval wins with 2.
        assert_eq!(alpha_fast(&layout(&[0, 1, 2])).witness, vec![0, 1, 2]);
        // Two equal maxima: [0..=1] and [2..=3] both give 1; full set gives 11/9.
        let m = alpha_fast(&layout(&[0, 1, 10, 11]));
        assert_eq!(m.witness, vec![0, 1, 2, 3]);
        // {0,5} and {5,10} give 1; {0,5,10} gives 2.
        let m = alpha_fast(&layout(&[0, 5, 10, 100]));
        assert_eq!(m.alpha, int(2));
        assert_eq!(m.witness, vec![0, 1, 2]);
        assert_eq!(alpha_fast(&layout(&[7])).witness, vec![0]);
    }

    #[test]
    fn metrics_invariants() {
        let m = alpha_fast(&layout(&[0, 3, 4, 9, 10]));
        assert!(m.alpha >= m.l_value);
        assert_eq!(m.bound(), &m.alpha * int(2) + int(1));
    }

    #[test]
    fn bruteforce_guard() {
        let xs: Vec<i64> = (0..21).collect();
        assert!(matches!(
            alpha_bruteforce(&layout(&xs)),
            Err(OfalError::GuardExceeded { .. })
        ));
    }
}
