use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::nets::{Frame, FramePair};
use crate::seed::RngSnapshot;

/// Bounded history of generated samples shown to a discriminator.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<I> {
    capacity: usize,
    items: Vec<I>,
    rng: ChaCha8Rng,
}

impl<I: Clone> ReplayBuffer<I> {
    pub fn new(capacity: usize, rng: ChaCha8Rng) -> Self {
        Self {
            capacity,
            items: Vec::with_capacity(capacity),
            rng,
        }
    }

    /// Rebuilds a buffer from saved contents.
    pub fn restore(capacity: usize, items: Vec<I>, rng: ChaCha8Rng) -> Self {
        assert!(items.len() <= capacity, "restored buffer over capacity");
        Self {
            capacity,
            items,
            rng,
        }
    }

    /// Until full, stores and returns `incoming`. Once full, returns `incoming`
    /// with probability 1/2, otherwise swaps it for a uniformly chosen stored item.
    pub fn query(&mut self, incoming: I) -> I {
        if self.items.len() < self.capacity {
            self.items.push(incoming.clone());
            return incoming;
        }
        if self.capacity == 0 || self.rng.random_bool(0.5) {
            return incoming;
        }
        let i = self.rng.random_range(0..self.items.len());
        std::mem::replace(&mut self.items[i], incoming)
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

    pub fn items(&self) -> &[I] {
        &self.items
    }

    pub fn rng_snapshot(&self) -> RngSnapshot {
        RngSnapshot::capture(&self.rng)
    }
}

/// Which generator run and which output slot a generated frame came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameOrigin {
    /// 1 for the run on `(t-2, t-1)`, 2 for the run on `(t-1, t)`.
    pub run: u8,
    /// 0 for the earlier output, 1 for the later one.
    pub slot: u8,
}

impl FrameOrigin {
    pub const RUN1_LATER: Self = Self { run: 1, slot: 1 };
    pub const RUN2_LATER: Self = Self { run: 2, slot: 1 };

    pub fn is_frame_of_interest(self) -> bool {
        self.slot == 1
    }
}

/// Generated pair for a temporal discriminator: the frames of interest of two
/// consecutive generator runs, kept together as one item.
#[derive(Debug, Clone, PartialEq)]
pub struct FakePair {
    pub pair: FramePair,
    pub origin: [FrameOrigin; 2],
}

impl FakePair {
    /// `run1_later` is y'_{t-1}, `run2_later` is y''_t.
    pub fn of_interest(run1_later: Frame, run2_later: Frame) -> crate::Result<Self> {
        Ok(Self {
            pair: FramePair::new(run1_later, run2_later)?,
            origin: [FrameOrigin::RUN1_LATER, FrameOrigin::RUN2_LATER],
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    #[test]
    fn fills_then_stays_bounded() {
        let mut b = ReplayBuffer::new(50, seed::stream(1, "t"));
        assert_eq!(b.query(0u32), 0);
        assert_eq!(b.len(), 1);
        for i in 1..50 {
            assert_eq!(b.query(i), i);
        }
        b.query(50);
        assert_eq!(b.len(), 50);
    }

    #[test]
    fn swapped_items_come_from_the_history() {
        let mut b = ReplayBuffer::new(5, seed::stream(2, "t"));
        for i in 0..5u32 {
            b.query(i);
        }
        for i in 5..200u32 {
            let before: Vec<u32> = b.items().to_vec();
            let out = b.query(i);
            if out != i {
                assert!(before.contains(&out));
                assert!(b.items().contains(&i));
            }
            assert_eq!(b.len(), 5);
        }
    }
}
