//! Dense bitset over state indices.
//!
//! Sat sets and labels are subsets of the reachable states, which are
//! numbered densely from zero, so a flat word array gives O(1) membership
//! and cheap set algebra.

const WORD_BITS: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StateSet {
    words: Vec<u64>,
    domain: usize,
}

impl StateSet {
    pub fn new(domain: usize) -> Self {
        StateSet {
            words: vec![0; domain.div_ceil(WORD_BITS)],
            domain,
        }
    }

    pub fn full(domain: usize) -> Self {
        let mut s = StateSet::new(domain);
        for w in &mut s.words {
            *w = u64::MAX;
        }
        s.clear_tail();
        s
    }

    pub fn domain(&self) -> usize {
        self.domain
    }

    pub fn insert(&mut self, idx: usize) {
        debug_assert!(idx < self.domain);
        self.words[idx / WORD_BITS] |= 1 << (idx % WORD_BITS);
    }

    pub fn remove(&mut self, idx: usize) {
        debug_assert!(idx < self.domain);
        self.words[idx / WORD_BITS] &= !(1 << (idx % WORD_BITS));
    }

    pub fn contains(&self, idx: usize) -> bool {
        idx < self.domain && self.words[idx / WORD_BITS] & (1 << (idx % WORD_BITS)) != 0
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|w| *w == 0)
    }

    pub fn union_with(&mut self, other: &StateSet) {
        debug_assert_eq!(self.domain, other.domain);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
    }

    pub fn intersect_with(&mut self, other: &StateSet) {
        debug_assert_eq!(self.domain, other.domain);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a &= b;
        }
    }

    pub fn difference_with(&mut self, other: &StateSet) {
        debug_assert_eq!(self.domain, other.domain);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a &= !b;
        }
    }

    /// Complement within the domain.
    pub fn invert(&mut self) {
        for w in &mut self.words {
            *w = !*w;
        }
        self.clear_tail();
    }

    pub fn is_subset_of(&self, other: &StateSet) -> bool {
        debug_assert_eq!(self.domain, other.domain);
        self.words
            .iter()
            .zip(&other.words)
            .all(|(a, b)| a & !b == 0)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, w)| {
            let mut w = *w;
            std::iter::from_fn(move || {
                if w == 0 {
                    None
                } else {
                    let bit = w.trailing_zeros() as usize;
                    w &= w - 1;
                    Some(wi * WORD_BITS + bit)
                }
            })
        })
    }

    fn clear_tail(&mut self) {
        let tail = self.domain % WORD_BITS;
        if tail != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << tail) - 1;
            }
        }
    }
}

impl FromIterator<usize> for StateSet {
    /// Builds a set sized to fit the largest element; callers that need a
    /// specific domain should use `new` + `insert`.
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        let items: Vec<usize> = iter.into_iter().collect();
        let domain = items.iter().max().map_or(0, |m| m + 1);
        let mut s = StateSet::new(domain);
        for i in items {
            s.insert(i);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic_ops() {
        let mut s = StateSet::new(130);
        s.insert(0);
        s.insert(64);
        s.insert(129);
        assert!(s.contains(0) && s.contains(64) && s.contains(129));
        assert!(!s.contains(1));
        assert_eq!(s.len(), 3);
        assert_eq!(s.iter().collect::<Vec<_>>(), vec![0, 64, 129]);
        s.remove(64);
        assert_eq!(s.len(), 2);
    }

    #[test]
    fn invert_respects_domain() {
        let mut s = StateSet::new(70);
        s.insert(3);
        s.invert();
        assert_eq!(s.len(), 69);
        assert!(!s.contains(3));
        assert!(s.contains(69));
        // no bits beyond the domain
        assert_eq!(s.iter().max().unwrap(), 69);
    }

    #[test]
    fn set_algebra() {
        let mut a = StateSet::new(10);
        let mut b = StateSet::new(10);
        for i in 0..5 {
            a.insert(i);
        }
        for i in 3..8 {
            b.insert(i);
        }
        let mut u = a.clone();
        u.union_with(&b);
        assert_eq!(u.len(), 8);
        let mut i = a.clone();
        i.intersect_with(&b);
        assert_eq!(i.iter().collect::<Vec<_>>(), vec![3, 4]);
        a.difference_with(&b);
        assert_eq!(a.iter().collect::<Vec<_>>(), vec![0, 1, 2]);
        assert!(i.is_subset_of(&u));
    }

    #[test]
    fn full_set() {
        let s = StateSet::full(67);
        assert_eq!(s.len(), 67);
    }
}
