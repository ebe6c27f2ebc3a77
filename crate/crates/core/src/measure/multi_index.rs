use std::cmp::Ordering;
use std::fmt;

use super::MeasureError;

/// Largest total degree whose factorial is computed exactly.
pub const MAX_EXACT_DEGREE: usize = 20;

/// Degrees of a tensorised Hermite basis function, one per coordinate.
///
/// Ordered graded-lexicographically: by total degree, then by the degree
/// vector compared lexicographically with larger leading entries first.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex(Vec<usize>);

impl MultiIndex {
    pub fn new(degrees: Vec<usize>) -> Self {
        Self(degrees)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0; n])
    }

    pub fn degrees(&self) -> &[usize] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn total_degree(&self) -> usize {
        self.0.iter().sum()
    }

    /// `Π αᵢ!` in exact integer arithmetic.
    pub fn factorial(&self) -> Result<u64, MeasureError> {
        let total = self.total_degree();
        if total > MAX_EXACT_DEGREE {
            return Err(MeasureError::DegreeTooLarge(total));
        }
        Ok(self.0.iter().map(|&a| factorial(a)).product())
    }
}

pub(crate) fn factorial(k: usize) -> u64 {
    (1..=k as u64).product()
}

impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.total_degree()
            .cmp(&other.total_degree())
            .then_with(|| other.0.cmp(&self.0))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|d| d.to_string()).collect();
        f.write_str(&parts.join(";"))
    }
}

/// Every multi-index of dimension `n` with total degree at most
/// `max_total_degree`, in graded-lexicographic order.
pub fn enumerate_multi_indices(n: usize, max_total_degree: usize) -> Vec<MultiIndex> {
    let mut out = Vec::new();
    if n == 0 {
        return out;
    }
    let mut buf = vec![0; n];
    for degree in 0..=max_total_degree {
        fill(&mut buf, 0, degree, &mut out);
    }
    out
}

fn fill(buf: &mut [usize], pos: usize, remaining: usize, out: &mut Vec<MultiIndex>) {
    if pos == buf.len() - 1 {
        buf[pos] = remaining;
        out.push(MultiIndex(buf.to_vec()));
        return;
    }
    for d in (0..=remaining).rev() {
        buf[pos] = d;
        fill(buf, pos + 1, remaining - d, out);
    }
}

/// `C(n + d, d)`, the number of multi-indices with total degree ≤ d.
pub fn multi_index_count(n: usize, d: usize) -> u128 {
    let mut c: u128 = 1;
    for i in 1..=d as u128 {
        c = c * (n as u128 + i) / i;
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binomial_by_pascal(n: usize, k: usize) -> u128 {
        let mut row = vec![1u128];
        for _ in 0..n {
            let mut next = vec![1u128; row.len() + 1];
            for i in 1..row.len() {
                next[i] = row[i - 1] + row[i];
            }
            row = next;
        }
        row[k]
    }

    #[test]
    fn one_dimensional_enumeration() {
        let idx = enumerate_multi_indices(1, 3);
        let degrees: Vec<_> = idx.iter().map(|a| a.degrees().to_vec()).collect();
        assert_eq!(degrees, vec![vec![0], vec![1], vec![2], vec![3]]);
    }

    #[test]
    fn two_dimensional_degree_two() {
        let idx = enumerate_multi_indices(2, 2);
        let degrees: Vec<_> = idx.iter().map(|a| a.degrees().to_vec()).collect();
        assert_eq!(
            degrees,
            vec![vec![0, 0], vec![1, 0], vec![0, 1], vec![2, 0], vec![1, 1], vec![0, 2]]
        );
    }

    #[test]
    fn counts_match_stars_and_bars() {
        for n in 1..=5 {
            for d in 0..=6 {
                let idx = enumerate_multi_indices(n, d);
                assert_eq!(idx.len() as u128, binomial_by_pascal(n + d, d));
                assert_eq!(multi_index_count(n, d), binomial_by_pascal(n + d, d));
                assert!(idx.windows(2).all(|p| p[0] < p[1]), "sorted, no duplicates");
            }
        }
    }

    #[test]
    fn factorial_and_degree() {
        let a = MultiIndex::new(vec![3, 0, 2]);
        assert_eq!(a.total_degree(), 5);
        assert_eq!(a.factorial().unwrap(), 12);
        assert_eq!(MultiIndex::new(vec![20]).factorial().unwrap(), 2_432_902_008_176_640_000);
        assert_eq!(MultiIndex::new(vec![10, 10]).factorial().unwrap(), 3_628_800u64 * 3_628_800);
        assert!(matches!(
            MultiIndex::new(vec![11, 10]).factorial(),
            Err(MeasureError::DegreeTooLarge(21))
        ));
        assert_eq!(a.to_string(), "3;0;2");
    }
}
