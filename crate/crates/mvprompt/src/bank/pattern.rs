//! Binary missing-view patterns.

use crate::error::{Error, Result};

/// Which of the n views a sample actually has. Bit v is true when view v is
/// observed. Patterns index prompt banks via [`MissingPattern::index`]:
/// sum of 2^v over observed views, so view 0 is the least significant bit.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MissingPattern {
    bits: Vec<bool>,
}

impl MissingPattern {
    pub fn new(bits: Vec<bool>) -> Self {
        MissingPattern { bits }
    }

    pub fn from_index(index: usize, n: usize) -> Result<Self> {
        if n >= usize::BITS as usize || index >= (1usize << n) {
            return Err(Error::Validation(format!(
                "pattern index {index} out of range for {n} views"
            )));
        }
        Ok(MissingPattern {
            bits: (0..n).map(|v| index >> v & 1 == 1).collect(),
        })
    }

    /// Bank column for this pattern: sum of 2^v over observed views.
    pub fn index(&self) -> usize {
        self.bits
            .iter()
            .enumerate()
            .map(|(v, &b)| if b { 1usize << v } else { 0 })
            .sum()
    }

    pub fn n_views(&self) -> usize {
        self.bits.len()
    }

    pub fn is_observed(&self, view: usize) -> bool {
        self.bits[view]
    }

    pub fn set(&mut self, view: usize, observed: bool) {
        self.bits[view] = observed;
    }

    /// True when every view is observed.
    pub fn is_complete(&self) -> bool {
        self.bits.iter().all(|&b| b)
    }

    pub fn observed_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn any_observed(&self) -> bool {
        self.bits.iter().any(|&b| b)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// True when both patterns observe at least one common view.
    pub fn overlaps(&self, other: &MissingPattern) -> bool {
        self.bits
            .iter()
            .zip(&other.bits)
            .any(|(&a, &b)| a && b)
    }

    /// All 2^n - 1 patterns with at least one observed view, ascending by
    /// index. The all-zero pattern is a valid bank column but never a valid
    /// sample indicator, so it is excluded here.
    pub fn all_nonzero(n: usize) -> Result<Vec<MissingPattern>> {
        if n == 0 || n >= usize::BITS as usize {
            return Err(Error::Validation(format!("invalid view count {n}")));
        }
        (1..1usize << n)
            .map(|i| MissingPattern::from_index(i, n))
            .collect()
    }
}

impl std::fmt::Display for MissingPattern {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for &b in &self.bits {
            write!(f, "{}", if b { '1' } else { '0' })?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_uses_view_zero_as_lsb() {
        let p = MissingPattern::new(vec![true, true, false]);
        assert_eq!(p.index(), 3);
        let q = MissingPattern::new(vec![false, false, true]);
        assert_eq!(q.index(), 4);
    }

    #[test]
    fn from_index_round_trips() {
        for n in 1..=6 {
            for i in 0..1usize << n {
                let p = MissingPattern::from_index(i, n).unwrap();
                assert_eq!(p.index(), i);
                assert_eq!(p.n_views(), n);
            }
        }
    }

    #[test]
    fn from_index_rejects_out_of_range() {
        assert!(MissingPattern::from_index(8, 3).is_err());
    }

    #[test]
    fn all_nonzero_counts_and_excludes_zero() {
        let ps = MissingPattern::all_nonzero(4).unwrap();
        assert_eq!(ps.len(), 15);
        assert!(ps.iter().all(|p| p.any_observed()));
        assert_eq!(ps[0].index(), 1);
        assert_eq!(ps.last().unwrap().index(), 15);
    }

    #[test]
    fn overlap_detection() {
        let a = MissingPattern::new(vec![true, true, false]);
        let b = MissingPattern::new(vec![false, true, true]);
        let c = MissingPattern::new(vec![false, false, true]);
        assert!(a.overlaps(&b));
        assert!(!a.overlaps(&c));
        assert!(b.overlaps(&c));
    }

    #[test]
    fn display_renders_bits() {
        let p = MissingPattern::new(vec![true, false, true]);
        assert_eq!(p.to_string(), "101");
    }
}
