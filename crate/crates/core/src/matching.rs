//! Pairing of skeletons seen by two sensors in a shared world frame.
//!
//! Four passes over the inter-pelvis candidate graph: unambiguous close
//! pairs first, then skeletons left with a single candidate, then pairs
//! that were matched in the previous frame, and finally a greedy sweep in
//! ascending distance order.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::skeleton::Skeleton;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatchError {
    #[error("match thresholds must satisfy 0 < d_easy <= d_max (got {d_easy}, {d_max})")]
    InvalidThresholds { d_easy: f64, d_max: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchConfig {
    /// Pairs closer than this with no competing candidate are settled first.
    pub d_easy: f64,
    /// Pairs farther apart than this are never matched.
    pub d_max: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig { d_easy: 0.3, d_max: 0.8 }
    }
}

impl MatchConfig {
    pub fn new(d_easy: f64, d_max: f64) -> Result<Self, MatchError> {
        let cfg = MatchConfig { d_easy, d_max };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), MatchError> {
        if self.d_easy > 0.0 && self.d_easy <= self.d_max {
            Ok(())
        } else {
            Err(MatchError::InvalidThresholds { d_easy: self.d_easy, d_max: self.d_max })
        }
    }
}

/// A cross-sensor pair within `d_max`, by index into the input lists.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub a: usize,
    pub b: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchedPair {
    pub a: usize,
    pub b: usize,
    pub body_a: u32,
    pub body_b: u32,
    pub distance: f64,
}

/// Result of matching two skeleton lists. Indices refer to the input slices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MatchOutcome {
    /// Sorted by `(distance, body_a, body_b)`.
    pub pairs: Vec<MatchedPair>,
    pub isolated_a: Vec<usize>,
    pub isolated_b: Vec<usize>,
}

impl MatchOutcome {
    /// Largest matched distance, 0 when nothing matched.
    pub fn bottleneck(&self) -> f64 {
        self.pairs.iter().map(|p| p.distance).fold(0.0, f64::max)
    }
}

/// `(body_id_A, body_id_B)` pairs matched in the previous frame.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MatchHistory(BTreeSet<(u32, u32)>);

impl MatchHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn contains(&self, body_a: u32, body_b: u32) -> bool {
        self.0.contains(&(body_a, body_b))
    }

    pub fn pairs(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.0.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// The same pairs with the sensor roles swapped.
    pub fn transposed(&self) -> Self {
        MatchHistory(self.0.iter().map(|&(a, b)| (b, a)).collect())
    }
}

impl FromIterator<(u32, u32)> for MatchHistory {
    fn from_iter<I: IntoIterator<Item = (u32, u32)>>(iter: I) -> Self {
        MatchHistory(iter.into_iter().collect())
    }
}

pub fn pelvis_distance(a: &Skeleton, b: &Skeleton) -> f64 {
    (a.pelvis().position - b.pelvis().position).norm()
}

/// All cross pairs with inter-pelvis distance ≤ `d_max`, sorted by distance
/// and then by the sorted id pair, so that swapping the sides keeps the order.
pub fn candidate_pairs(a: &[Skeleton], b: &[Skeleton], d_max: f64) -> Vec<Candidate> {
    let mut out = Vec::new();
    for (i, sa) in a.iter().enumerate() {
        for (j, sb) in b.iter().enumerate() {
            let distance = pelvis_distance(sa, sb);
            if distance <= d_max {
                out.push(Candidate { a: i, b: j, distance });
            }
        }
    }
    out.sort_by(|x, y| order(x, y, a, b));
    out
}

fn key(c: &Candidate, a: &[Skeleton], b: &[Skeleton]) -> (u32, u32) {
    let (ia, ib) = (a[c.a].body_id, b[c.b].body_id);
    (ia.min(ib), ia.max(ib))
}

fn order(x: &Candidate, y: &Candidate, a: &[Skeleton], b: &[Skeleton]) -> Ordering {
    x.distance
        .total_cmp(&y.distance)
        .then(key(x, a, b).cmp(&key(y, a, b)))
        .then(a[x.a].body_id.cmp(&a[y.a].body_id))
}

struct State<'a> {
    a: &'a [Skeleton],
    b: &'a [Skeleton],
    cands: Vec<Candidate>,
    by_a: Vec<Vec<usize>>,
    by_b: Vec<Vec<usize>>,
    matched_a: Vec<bool>,
    matched_b: Vec<bool>,
    pairs: Vec<MatchedPair>,
}

impl<'a> State<'a> {
    fn new(a: &'a [Skeleton], b: &'a [Skeleton], d_max: f64) -> Self {
        let cands = candidate_pairs(a, b, d_max);
        let mut by_a = vec![Vec::new(); a.len()];
        let mut by_b = vec![Vec::new(); b.len()];
        for (k, c) in cands.iter().enumerate() {
            by_a[c.a].push(k);
            by_b[c.b].push(k);
        }
        State {
            a,
            b,
            cands,
            by_a,
            by_b,
            matched_a: vec![false; a.len()],
            matched_b: vec![false; b.len()],
            pairs: Vec::new(),
        }
    }

    fn open(&self, k: usize) -> bool {
        let c = &self.cands[k];
        !self.matched_a[c.a] && !self.matched_b[c.b]
    }

    fn remaining_a(&self, i: usize) -> usize {
        self.by_a[i].iter().filter(|&&k| !self.matched_b[self.cands[k].b]).count()
    }

    fn remaining_b(&self, j: usize) -> usize {
        self.by_b[j].iter().filter(|&&k| !self.matched_a[self.cands[k].a]).count()
    }

    fn accept(&mut self, k: usize) {
        let c = self.cands[k];
        self.matched_a[c.a] = true;
        self.matched_b[c.b] = true;
        self.pairs.push(MatchedPair {
            a: c.a,
            b: c.b,
            body_a: self.a[c.a].body_id,
            body_b: self.b[c.b].body_id,
            distance: c.distance,
        });
    }
}

/// Matches world-frame skeleton lists `a` and `b`.
///
/// 1. settle pairs that are each other's only candidate within `d_max` and
///    lie within `d_easy`;
/// 2. repeatedly settle any skeleton left with exactly one open candidate,
///    closest such pair first;
/// 3. among the remaining ambiguous pairs, keep those matched in `hist`;
/// 4. accept the rest greedily in ascending distance order.
pub fn match_skeletons(a: &[Skeleton], b: &[Skeleton], cfg: &MatchConfig, hist: &MatchHistory) -> MatchOutcome {
    let mut st = State::new(a, b, cfg.d_max);
    let n = st.cands.len();

    // step 1
    for k in 0..n {
        let c = st.cands[k];
        if c.distance <= cfg.d_easy && st.by_a[c.a].len() == 1 && st.by_b[c.b].len() == 1 {
            st.accept(k);
        }
    }

    // step 2; mirror-image ties (equal distance and id pair) are disjoint and
    // settled together so the outcome does not depend on which side is A
    let forced = |st: &State, k: usize| {
        st.open(k) && {
            let c = st.cands[k];
            st.remaining_a(c.a) == 1 || st.remaining_b(c.b) == 1
        }
    };
    while let Some(k) = (0..n).find(|&k| forced(&st, k)) {
        let tied: Vec<usize> = (k..n)
            .filter(|&m| st.cands[m].distance == st.cands[k].distance && key(&st.cands[m], a, b) == key(&st.cands[k], a, b))
            .filter(|&m| forced(&st, m))
            .collect();
        for m in tied {
            if st.open(m) {
                st.accept(m);
            }
        }
    }

    // step 3
    for k in 0..n {
        let c = st.cands[k];
        if st.open(k) && hist.contains(a[c.a].body_id, b[c.b].body_id) {
            st.accept(k);
        }
    }

    // step 4
    for k in 0..n {
        if st.open(k) {
            st.accept(k);
        }
    }

    let mut pairs = st.pairs;
    pairs.sort_by(|x, y| x.distance.total_cmp(&y.distance).then(x.body_a.cmp(&y.body_a)).then(x.body_b.cmp(&y.body_b)));
    MatchOutcome {
        pairs,
        isolated_a: (0..a.len()).filter(|&i| !st.matched_a[i]).collect(),
        isolated_b: (0..b.len()).filter(|&j| !st.matched_b[j]).collect(),
    }
}

pub fn fuse_match_history(outcome: &MatchOutcome) -> MatchHistory {
    outcome.pairs.iter().map(|p| (p.body_a, p.body_b)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use crate::skeleton::{Axes, Confidence, Joint, JointId};

    fn sk(id: u32, x: f64, y: f64) -> Skeleton {
        Skeleton::new(id, vec![Joint::new(JointId::Pelvis, Vec3::new(x, y, 1.0), Axes::identity(), Confidence::High)])
            .unwrap()
    }

    fn pair_ids(o: &MatchOutcome) -> Vec<(u32, u32)> {
        let mut v: Vec<_> = o.pairs.iter().map(|p| (p.body_a, p.body_b)).collect();
        v.sort();
        v
    }

    #[test]
    fn thresholds_validated() {
        assert!(MatchConfig::new(0.3, 0.8).is_ok());
        assert!(MatchConfig::new(0.9, 0.8).is_err());
        assert!(MatchConfig::new(0.0, 0.8).is_err());
    }

    #[test]
    fn candidate_cases() {
        let a = [sk(1, 0.0, 0.0)];
        let b = [sk(2, 5.0, 0.0)];
        assert!(candidate_pairs(&a, &b, 0.8).is_empty());
        let c = candidate_pairs(&a, &[sk(9, 0.0, 0.0)], 0.8);
        assert_eq!(c, vec![Candidate { a: 0, b: 0, distance: 0.0 }]);

        // distance table [[0.1, 0.9], [0.9, 0.1]]
        let a = [sk(1, 0.0, 0.0), sk(2, 0.9, 0.1)];
        let b = [sk(3, 0.1, 0.0), sk(4, 0.9, 0.0)];
        let c = candidate_pairs(&a, &b, 0.8);
        assert_eq!(c.len(), 2);
        assert_eq!((c[0].a, c[0].b), (0, 0));
        assert_eq!((c[1].a, c[1].b), (1, 1));
        assert!((c[0].distance - 0.1).abs() < 1e-12 && (c[1].distance - 0.1).abs() < 1e-12);
    }

    #[test]
    fn single_pair_and_isolated() {
        let cfg = MatchConfig::default();
        let o = match_skeletons(&[sk(1, 0.0, 0.0)], &[sk(5, 0.1, 0.0)], &cfg, &MatchHistory::new());
        assert_eq!(pair_ids(&o), vec![(1, 5)]);
        assert!(o.isolated_a.is_empty() && o.isolated_b.is_empty());

        let o = match_skeletons(&[sk(1, 0.0, 0.0)], &[], &cfg, &MatchHistory::new());
        assert!(o.pairs.is_empty());
        assert_eq!(o.isolated_a, vec![0]);
    }

    #[test]
    fn forced_choice_after_first_pass() {
        // a1 and a2 both near b1; a2 also near b2. a1's only candidate is b1,
        // so step 2 settles a1–b1, leaving a2 with b2.
        let cfg = MatchConfig::new(0.1, 0.8).unwrap();
        let a = [sk(1, 0.0, 0.0), sk(2, 0.5, 0.0)];
        let b = [sk(10, 0.2, 0.0), sk(11, 0.95, 0.0)];
        let o = match_skeletons(&a, &b, &cfg, &MatchHistory::new());
        assert_eq!(pair_ids(&o), vec![(1, 10), (2, 11)]);
    }

    #[test]
    fn history_breaks_ties() {
        // two skeletons per side, all four cross distances within d_max
        let cfg = MatchConfig::new(0.05, 0.8).unwrap();
        let a = [sk(1, 0.0, 0.0), sk(2, 0.4, 0.0)];
        let b = [sk(7, 0.1, 0.0), sk(8, 0.3, 0.0)];
        let greedy = match_skeletons(&a, &b, &cfg, &MatchHistory::new());
        assert_eq!(pair_ids(&greedy), vec![(1, 7), (2, 8)]);
        let hist: MatchHistory = [(1, 8), (2, 7)].into_iter().collect();
        let remembered = match_skeletons(&a, &b, &cfg, &hist);
        assert_eq!(pair_ids(&remembered), vec![(1, 8), (2, 7)]);
    }

    #[test]
    fn history_from_outcome() {
        assert!(fuse_match_history(&MatchOutcome::default()).is_empty());
        let p = |a, b| MatchedPair { a: 0, b: 0, body_a: a, body_b: b, distance: 0.0 };
        let o = MatchOutcome { pairs: vec![p(7, 3)], ..Default::default() };
        assert_eq!(fuse_match_history(&o).pairs().collect::<Vec<_>>(), vec![(7, 3)]);
        let o = MatchOutcome { pairs: vec![p(1, 2), p(4, 9)], ..Default::default() };
        assert_eq!(fuse_match_history(&o).pairs().collect::<Vec<_>>(), vec![(1, 2), (4, 9)]);
        assert_eq!(fuse_match_history(&o).transposed().pairs().collect::<Vec<_>>(), vec![(2, 1), (9, 4)]);
    }
}
