//! Paired comparisons between methods over shared trial seeds.

use statrs::distribution::{Binomial, DiscreteCDF};

use super::config::Method;
use super::runner::ResultTable;
use crate::error::{Error, Result};

/// One-sided paired sign test of "candidate beats baseline".
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignTest {
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    /// `P(X ≥ wins)` for `X ~ Binomial(wins + losses, 1/2)`; ties are dropped.
    pub p_value: f64,
}

impl SignTest {
    pub fn from_pairs(candidate: &[f64], baseline: &[f64]) -> Result<Self> {
        if candidate.len() != baseline.len() {
            return Err(Error::invalid("paired samples differ in length"));
        }
        let (mut wins, mut losses, mut ties) = (0, 0, 0);
        for (c, b) in candidate.iter().zip(baseline) {
            if c > b {
                wins += 1;
            } else if c < b {
                losses += 1;
            } else {
                ties += 1;
            }
        }
        let n = (wins + losses) as u64;
        let p_value = if wins == 0 {
            1.0
        } else {
            let dist = Binomial::new(0.5, n).map_err(|e| Error::numerical(e.to_string()))?;
            dist.sf(wins as u64 - 1)
        };
        Ok(SignTest {
            wins,
            losses,
            ties,
            p_value,
        })
    }

    pub fn significant_at(&self, level: f64) -> bool {
        self.p_value <= level
    }
}

/// Sign test of `candidate` against `baseline` jumpstart means on the seeds both ran.
pub fn compare_methods(table: &ResultTable, candidate: Method, baseline: Method) -> Result<SignTest> {
    let mut c = Vec::new();
    let mut b = Vec::new();
    for row in table.rows_for(candidate) {
        if let Some(base) = table.row(baseline, row.seed) {
            c.push(row.jumpstart_mean);
            b.push(base.jumpstart_mean);
        }
    }
    if c.is_empty() {
        return Err(Error::invalid(format!("{candidate} and {baseline} share no seeds")));
    }
    SignTest::from_pairs(&c, &b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn upper_tail(n: u64, k: u64) -> f64 {
        // exact binomial sum with integer coefficients
        let mut total = 0u128;
        let mut c = 1u128;
        for i in 0..=n {
            if i >= k {
                total += c;
            }
            c = c * (n - i) as u128 / (i + 1) as u128;
        }
        total as f64 / 2f64.powi(n as i32)
    }

    #[test]
    fn p_values_match_exact_binomial_tail() {
        for wins in [10usize, 13, 14, 15, 20] {
            let cand: Vec<f64> = (0..20).map(|i| if i < wins { 1.0 } else { -1.0 }).collect();
            let t = SignTest::from_pairs(&cand, &[0.0; 20]).unwrap();
            assert_eq!((t.wins, t.losses, t.ties), (wins, 20 - wins, 0));
            assert!((t.p_value - upper_tail(20, wins as u64)).abs() < 1e-12, "{wins}");
        }
        // the smallest significant count at the 0.1 level over 20 pairs is 14
        let at = |w: usize| {
            let cand: Vec<f64> = (0..20).map(|i| if i < w { 1.0 } else { -1.0 }).collect();
            SignTest::from_pairs(&cand, &[0.0; 20]).unwrap().significant_at(0.1)
        };
        assert!(at(14) && !at(13));
    }

    #[test]
    fn ties_are_dropped() {
        let t = SignTest::from_pairs(&[1.0, 1.0, 2.0, 0.0], &[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!((t.wins, t.losses, t.ties), (2, 0, 2));
        assert!((t.p_value - 0.25).abs() < 1e-12);
        assert_eq!(SignTest::from_pairs(&[0.0], &[1.0]).unwrap().p_value, 1.0);
        assert!(SignTest::from_pairs(&[0.0], &[]).is_err());
    }
}
