use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition<A> {
    pub s: Vec<f64>,
    pub a: A,
    pub r: f64,
    pub s_next: Vec<f64>,
    pub done: bool,
}

/// Fixed-capacity ring of transitions with uniform sampling (with replacement).
#[derive(Debug, Clone)]
pub struct ReplayBuffer<A> {
    capacity: usize,
    items: Vec<Transition<A>>,
    next: usize,
    rng: ChaCha8Rng,
}

impl<A> ReplayBuffer<A> {
    pub fn new(capacity: usize, seed: u64) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
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

    /// Overwrites the oldest entry once full.
    pub fn push(&mut self, t: Transition<A>) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Most recently pushed transition.
    pub fn latest(&self) -> Option<&Transition<A>> {
        if self.items.is_empty() {
            return None;
        }
        let idx = (self.next + self.capacity - 1) % self.capacity;
        self.items.get(idx)
    }

    pub fn sample_indices(&mut self, n: usize) -> Vec<usize> {
        if self.items.is_empty() {
            return Vec::new();
        }
        let len = self.items.len();
        (0..n).map(|_| self.rng.gen_range(0..len)).collect()
    }

    pub fn sample(&mut self, n: usize) -> Vec<&Transition<A>> {
        let idx = self.sample_indices(n);
        idx.into_iter().map(|i| &self.items[i]).collect()
    }

    pub fn get(&self, i: usize) -> Option<&Transition<A>> {
        self.items.get(i)
    }

    /// Contents from oldest to newest.
    pub fn iter_chronological(&self) -> impl Iterator<Item = &Transition<A>> {
        let split = if self.items.len() < self.capacity {
            0
        } else {
            self.next
        };
        self.items[split..].iter().chain(self.items[..split].iter())
    }

    pub fn clear(&mut self) {
        self.items.clear();
        self.next = 0;
    }
}
