use std::collections::VecDeque;

use rand::Rng as _;

use crate::tensor::Tensor;
use crate::Rng;

/// History of generated images shown to the discriminators.
///
/// Holds the `capacity` most recent pushes. Once full, each push returns a
/// uniformly chosen stored image with probability ½ and the pushed image
/// otherwise; either way the pushed image enters and the oldest one leaves.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    images: VecDeque<Tensor>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, images: VecDeque::with_capacity(capacity) }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Stored images, oldest first.
    pub fn images(&self) -> impl Iterator<Item = &Tensor> {
        self.images.iter()
    }

    pub fn push_sample(&mut self, image: Tensor, rng: &mut Rng) -> Tensor {
        if self.capacity == 0 {
            return image;
        }
        if self.images.len() < self.capacity {
            self.images.push_back(image.clone());
            return image;
        }
        let out = if rng.random::<f64>() < 0.5 {
            self.images[rng.random_range(0..self.capacity)].clone()
        } else {
            image.clone()
        };
        self.images.pop_front();
        self.images.push_back(image);
        out
    }

    /// Rebuild from stored images, oldest first.
    pub fn restore(capacity: usize, images: Vec<Tensor>) -> Self {
        let mut images: VecDeque<Tensor> = images.into();
        while images.len() > capacity {
            images.pop_front();
        }
        Self { capacity, images }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn first_push_returned() {
        let mut buf = ReplayBuffer::new(1);
        let img = Tensor::scalar(3.0);
        assert_eq!(buf.push_sample(img.clone(), &mut Rng::seed_from_u64(0)), img);
        assert_eq!(buf.len(), 1);
    }

    #[test]
    fn swap_branch_returns_stored_image() {
        let mut rng = Rng::seed_from_u64(5);
        let mut buf = ReplayBuffer::new(4);
        for i in 0..4 {
            buf.push_sample(Tensor::scalar(i as f64), &mut rng);
        }
        let mut from_storage = 0;
        for i in 4..200 {
            let before: Vec<f64> = buf.images().map(|t| t.data()[0]).collect();
            let out = buf.push_sample(Tensor::scalar(i as f64), &mut rng).data()[0];
            if out != i as f64 {
                assert!(before.contains(&out));
                from_storage += 1;
            }
        }
        assert!((60..140).contains(&from_storage), "{from_storage}");
    }

    #[test]
    fn zero_capacity_passes_through() {
        let mut buf = ReplayBuffer::new(0);
        let img = Tensor::scalar(1.0);
        assert_eq!(buf.push_sample(img.clone(), &mut Rng::seed_from_u64(0)), img);
        assert!(buf.is_empty());
    }
}
