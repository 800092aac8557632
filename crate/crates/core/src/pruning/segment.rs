use std::ops::Range;

use crate::error::{Error, Result};

/// Contiguous, non-overlapping split of `0..n` into `s` segments whose sizes
/// differ by at most one; larger segments come first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentPartition {
    boundaries: Vec<usize>,
}

impl SegmentPartition {
    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    pub fn len(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_tokens(&self) -> usize {
        *self.boundaries.last().unwrap()
    }

    pub fn segment(&self, s: usize) -> Range<usize> {
        self.boundaries[s]..self.boundaries[s + 1]
    }

    pub fn segments(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        self.boundaries.windows(2).map(|w| w[0]..w[1])
    }

    /// Segment containing token `index`.
    pub fn segment_of(&self, index: usize) -> usize {
        // partition_point returns the count of boundaries <= index, which is
        // one past the owning segment.
        self.boundaries.partition_point(|&b| b <= index) - 1
    }
}

pub fn segment_partition(n: usize, s: usize) -> Result<SegmentPartition> {
    if s == 0 {
        return Err(Error::ZeroSegments);
    }
    if s > n {
        return Err(Error::SegmentsExceedTokens { segments: s, n });
    }
    let base = n / s;
    let larger = n % s;
    let mut boundaries = Vec::with_capacity(s + 1);
    let mut at = 0;
    boundaries.push(at);
    for seg in 0..s {
        at += base + usize::from(seg < larger);
        boundaries.push(at);
    }
    debug_assert_eq!(at, n);
    Ok(SegmentPartition { boundaries })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn documented_partitions() {
        assert_eq!(segment_partition(6, 3).unwrap().boundaries(), &[0, 2, 4, 6]);
        assert_eq!(segment_partition(7, 3).unwrap().boundaries(), &[0, 3, 5, 7]);
        assert_eq!(
            segment_partition(5, 5).unwrap().boundaries(),
            &[0, 1, 2, 3, 4, 5]
        );
    }

    #[test]
    fn errors() {
        assert!(matches!(segment_partition(5, 0), Err(Error::ZeroSegments)));
        assert!(matches!(
            segment_partition(3, 4),
            Err(Error::SegmentsExceedTokens { segments: 4, n: 3 })
        ));
    }

    /// Brute force over every (n, s) with n <= 20: sizes are ceil for the
    /// first n mod s segments and floor afterwards, and every token is
    /// covered exactly once.
    #[test]
    fn balanced_rule_exhaustive() {
        for n in 1..=20 {
            for s in 1..=n {
                let p = segment_partition(n, s).unwrap();
                assert_eq!(p.len(), s);
                let mut owner = vec![usize::MAX; n];
                for (seg, range) in p.segments().enumerate() {
                    let expected = if seg < n % s { n.div_ceil(s) } else { n / s };
                    assert_eq!(range.len(), expected, "n={n} s={s} seg={seg}");
                    for i in range {
                        assert_eq!(owner[i], usize::MAX);
                        owner[i] = seg;
                    }
                }
                for (i, &seg) in owner.iter().enumerate() {
                    assert_eq!(p.segment_of(i), seg);
                }
            }
        }
    }
}
