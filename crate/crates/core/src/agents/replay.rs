use std::collections::VecDeque;

use rand::Rng;

use crate::error::{Error, Result};

/// Bounded FIFO of transitions with uniform minibatch sampling.
#[derive(Clone, Debug)]
pub struct ReplayBuffer<T> {
    items: VecDeque<T>,
    capacity: usize,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidArgument("replay capacity must be positive".into()));
        }
        Ok(Self {
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
            capacity,
        })
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

    /// Appends `item`, evicting the oldest entry when full.
    pub fn push(&mut self, item: T) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(item);
    }

    /// `n` distinct entries chosen uniformly at random.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<&T>> {
        if n > self.items.len() {
            return Err(Error::Underfilled {
                needed: n,
                available: self.items.len(),
            });
        }
        Ok(rand::seq::index::sample(rng, self.items.len(), n)
            .into_iter()
            .map(|i| &self.items[i])
            .collect())
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
    fn evicts_oldest() {
        let mut b = ReplayBuffer::new(2).unwrap();
        for i in 0..3 {
            b.push(i);
        }
        assert_eq!(b.iter().copied().collect::<Vec<_>>(), vec![1, 2]);
    }

    #[test]
    fn full_sample_is_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut b = ReplayBuffer::new(8).unwrap();
        for i in 0..8 {
            b.push(i);
        }
        let mut s: Vec<i32> = b.sample(8, &mut rng).unwrap().into_iter().copied().collect();
        s.sort();
        assert_eq!(s, (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn underfilled_is_signalled() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut b = ReplayBuffer::new(8).unwrap();
        b.push(0);
        assert!(matches!(
            b.sample(2, &mut rng),
            Err(Error::Underfilled { needed: 2, available: 1 })
        ));
    }

    #[test]
    fn sampling_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let k = 10;
        let mut b = ReplayBuffer::new(k).unwrap();
        for i in 0..k {
            b.push(i);
        }
        let draws = 100_000;
        let per = 3;
        let mut counts = vec![0usize; k];
        for _ in 0..draws {
            let s = b.sample(per, &mut rng).unwrap();
            let mut seen = std::collections::BTreeSet::new();
            for &i in s {
                assert!(seen.insert(i), "sampled with replacement");
                counts[i] += 1;
            }
        }
        let expected = (draws * per) as f64 / k as f64;
        let p = per as f64 / k as f64;
        let sd = (draws as f64 * p * (1.0 - p)).sqrt();
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        for &c in &counts {
            assert!((c as f64 - expected).abs() < 3.0 * sd, "{counts:?}");
        }
        // 99th percentile of chi-square with 9 degrees of freedom
        assert!(chi2 < 21.666, "chi2 {chi2}");
    }

    #[test]
    fn sampling_is_reproducible() {
        let mut b = ReplayBuffer::new(50).unwrap();
        for i in 0..50 {
            b.push(i);
        }
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            b.sample(10, &mut rng).unwrap().into_iter().copied().collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));
    }
}
