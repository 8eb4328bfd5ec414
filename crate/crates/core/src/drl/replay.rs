//! Fixed-capacity replay memory.

use rand::seq::index;
use rand::Rng;

/// Ring buffer that overwrites its oldest entry once full.
#[derive(Debug, Clone)]
pub struct ReplayMemory<T> {
    capacity: usize,
    items: Vec<T>,
    next: usize,
}

impl<T> ReplayMemory<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: Vec::with_capacity(capacity.min(4096)),
            next: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, item: T) {
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            self.items[self.next] = item;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Up to `batch` distinct entries drawn uniformly.
    pub fn sample(&self, batch: usize, rng: &mut impl Rng) -> Vec<&T> {
        let n = batch.min(self.items.len());
        index::sample(rng, self.items.len(), n)
            .into_iter()
            .map(|i| &self.items[i])
            .collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn overwrites_oldest() {
        let mut m = ReplayMemory::new(3);
        for i in 0..5 {
            m.push(i);
        }
        assert_eq!(m.len(), 3);
        let mut items: Vec<i32> = m.iter().copied().collect();
        items.sort();
        assert_eq!(items, vec![2, 3, 4]);
    }

    #[test]
    fn sampling_is_without_replacement() {
        let mut m = ReplayMemory::new(100);
        for i in 0..50 {
            m.push(i);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s: Vec<i32> = m.sample(20, &mut rng).into_iter().copied().collect();
        s.sort();
        s.dedup();
        assert_eq!(s.len(), 20);
        assert_eq!(m.sample(80, &mut rng).len(), 50);
    }
}
