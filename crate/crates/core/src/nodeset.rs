//! Dense bitsets over node indices.

use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;
use core::hash::{Hash, Hasher};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Dense index of a capability node inside one [`Hypergraph`](crate::Hypergraph).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

const BITS: usize = 64;

/// A set of [`NodeId`]s stored as a bitset.
///
/// Iteration is always in ascending index order, which is the tie-breaking
/// order used throughout the crate. Trailing zero words are ignored by
/// equality, ordering and hashing, so two sets with the same members compare
/// equal regardless of how they were built.
#[derive(Clone, Default)]
pub struct NodeSet {
    words: Vec<u64>,
}

impl NodeSet {
    pub const fn new() -> Self {
        NodeSet { words: Vec::new() }
    }

    pub fn with_capacity(nodes: usize) -> Self {
        NodeSet {
            words: Vec::with_capacity(nodes.div_ceil(BITS)),
        }
    }

    pub fn singleton(id: NodeId) -> Self {
        let mut s = NodeSet::new();
        s.insert(id);
        s
    }

    /// Returns `true` if the node was not already present.
    pub fn insert(&mut self, id: NodeId) -> bool {
        let (w, b) = (id.index() / BITS, id.index() % BITS);
        if w >= self.words.len() {
            self.words.resize(w + 1, 0);
        }
        let before = self.words[w];
        self.words[w] |= 1 << b;
        before != self.words[w]
    }

    /// Returns `true` if the node was present.
    pub fn remove(&mut self, id: NodeId) -> bool {
        let (w, b) = (id.index() / BITS, id.index() % BITS);
        match self.words.get_mut(w) {
            Some(word) => {
                let had = *word & (1 << b) != 0;
                *word &= !(1 << b);
                had
            }
            None => false,
        }
    }

    #[inline]
    pub fn contains(&self, id: NodeId) -> bool {
        let (w, b) = (id.index() / BITS, id.index() % BITS);
        self.words.get(w).is_some_and(|word| word & (1 << b) != 0)
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn clear(&mut self) {
        self.words.clear();
    }

    pub fn iter(&self) -> Iter<'_> {
        Iter {
            words: &self.words,
            word: 0,
            bits: self.words.first().copied().unwrap_or(0),
        }
    }

    /// Largest member, if any.
    pub fn last(&self) -> Option<NodeId> {
        self.words
            .iter()
            .enumerate()
            .rev()
            .find_map(|(i, &w)| (w != 0).then(|| NodeId((i * BITS + (BITS - 1 - w.leading_zeros() as usize)) as u32)))
    }

    pub fn is_subset(&self, other: &NodeSet) -> bool {
        self.words
            .iter()
            .enumerate()
            .all(|(i, &w)| w & !other.words.get(i).copied().unwrap_or(0) == 0)
    }

    pub fn is_disjoint(&self, other: &NodeSet) -> bool {
        self.words.iter().zip(other.words.iter()).all(|(a, b)| a & b == 0)
    }

    pub fn intersects(&self, other: &NodeSet) -> bool {
        !self.is_disjoint(other)
    }

    pub fn union_with(&mut self, other: &NodeSet) {
        if other.words.len() > self.words.len() {
            self.words.resize(other.words.len(), 0);
        }
        for (a, b) in self.words.iter_mut().zip(other.words.iter()) {
            *a |= b;
        }
    }

    pub fn intersect_with(&mut self, other: &NodeSet) {
        for (i, a) in self.words.iter_mut().enumerate() {
            *a &= other.words.get(i).copied().unwrap_or(0);
        }
    }

    pub fn difference_with(&mut self, other: &NodeSet) {
        for (a, b) in self.words.iter_mut().zip(other.words.iter()) {
            *a &= !b;
        }
    }

    pub fn union(&self, other: &NodeSet) -> NodeSet {
        let mut s = self.clone();
        s.union_with(other);
        s
    }

    pub fn intersection(&self, other: &NodeSet) -> NodeSet {
        let mut s = self.clone();
        s.intersect_with(other);
        s
    }

    pub fn difference(&self, other: &NodeSet) -> NodeSet {
        let mut s = self.clone();
        s.difference_with(other);
        s
    }

    /// Size of the symmetric difference.
    pub fn symmetric_difference_len(&self, other: &NodeSet) -> usize {
        let n = self.words.len().max(other.words.len());
        (0..n)
            .map(|i| {
                let a = self.words.get(i).copied().unwrap_or(0);
                let b = other.words.get(i).copied().unwrap_or(0);
                (a ^ b).count_ones() as usize
            })
            .sum()
    }

    fn significant(&self) -> &[u64] {
        let end = self.words.iter().rposition(|&w| w != 0).map_or(0, |i| i + 1);
        &self.words[..end]
    }
}

impl PartialEq for NodeSet {
    fn eq(&self, other: &Self) -> bool {
        self.significant() == other.significant()
    }
}

impl Eq for NodeSet {}

impl Hash for NodeSet {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.significant().hash(state);
    }
}

impl Ord for NodeSet {
    /// Lexicographic over the ascending member sequence.
    fn cmp(&self, other: &Self) -> Ordering {
        self.iter().cmp(other.iter())
    }
}

impl PartialOrd for NodeSet {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for NodeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter().map(|n| n.0)).finish()
    }
}

impl FromIterator<NodeId> for NodeSet {
    fn from_iter<I: IntoIterator<Item = NodeId>>(iter: I) -> Self {
        let mut s = NodeSet::new();
        s.extend(iter);
        s
    }
}

impl Extend<NodeId> for NodeSet {
    fn extend<I: IntoIterator<Item = NodeId>>(&mut self, iter: I) {
        for id in iter {
            self.insert(id);
        }
    }
}

impl<'a> IntoIterator for &'a NodeSet {
    type Item = NodeId;
    type IntoIter = Iter<'a>;
    fn into_iter(self) -> Iter<'a> {
        self.iter()
    }
}

pub struct Iter<'a> {
    words: &'a [u64],
    word: usize,
    bits: u64,
}

impl Iterator for Iter<'_> {
    type Item = NodeId;

    fn next(&mut self) -> Option<NodeId> {
        loop {
            if self.bits != 0 {
                let b = self.bits.trailing_zeros() as usize;
                self.bits &= self.bits - 1;
                return Some(NodeId((self.word * BITS + b) as u32));
            }
            self.word += 1;
            self.bits = *self.words.get(self.word)?;
        }
    }
}

impl Serialize for NodeSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for NodeSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let ids = Vec::<NodeId>::deserialize(deserializer)?;
        Ok(ids.into_iter().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn set(ids: &[u32]) -> NodeSet {
        ids.iter().map(|&i| NodeId(i)).collect()
    }

    #[test]
    fn equality_ignores_trailing_words() {
        let mut a = set(&[1, 200]);
        a.remove(NodeId(200));
        assert_eq!(a, set(&[1]));
        assert_eq!(NodeSet::new(), set(&[]));
    }

    #[test]
    fn iteration_is_ascending() {
        let s = set(&[130, 3, 64, 0, 63]);
        let got: Vec<u32> = s.iter().map(|n| n.0).collect();
        assert_eq!(got, vec![0, 3, 63, 64, 130]);
        assert_eq!(s.last(), Some(NodeId(130)));
        assert_eq!(s.len(), 5);
    }

    #[test]
    fn subset_and_disjoint() {
        let a = set(&[1, 2]);
        let b = set(&[1, 2, 99]);
        assert!(a.is_subset(&b));
        assert!(!b.is_subset(&a));
        assert!(NodeSet::new().is_subset(&a));
        assert!(set(&[5]).is_disjoint(&b));
        assert_eq!(a.symmetric_difference_len(&b), 1);
        assert_eq!(b.difference(&a), set(&[99]));
    }

    #[test]
    fn ordering_is_lexicographic_on_members() {
        assert!(set(&[1, 5]) < set(&[2]));
        assert!(set(&[1]) < set(&[1, 2]));
    }
}
