mod common;

use proptest::prelude::*;
use ugac::train::{cosine_lr, Adam, AdamConfig, ReplayBuffer};
use ugac::Tensor;

use common::{rng, RefAdam};

#[test]
fn first_step_with_constant_gradient_moves_by_lr() {
    let mut p = vec![Tensor::scalar(1.0)];
    let mut adam = Adam::new(AdamConfig::default(), &p);
    adam.step(&mut p, &[vec![0.37]], 1e-3).unwrap();
    // Bias correction makes m̂/√v̂ = g/|g| on the first step.
    let moved = 1.0 - p[0].item().unwrap();
    assert!((moved - 1e-3).abs() < 1e-10, "{moved}");
}

#[test]
fn zero_gradient_leaves_parameters_and_decays_moments() {
    let mut p = vec![Tensor::new(vec![2], vec![0.5, -0.5]).unwrap()];
    let mut adam = Adam::new(AdamConfig::default(), &p);
    adam.step(&mut p, &[vec![1.0, -2.0]], 1e-3).unwrap();
    let (m, v) = (adam.first_moment(0).to_vec(), adam.second_moment(0).to_vec());
    let before = p[0].clone();
    adam.step(&mut p, &[vec![0.0, 0.0]], 0.0).unwrap();
    assert_eq!(p[0], before);
    for i in 0..2 {
        assert!((adam.first_moment(0)[i] - 0.9 * m[i]).abs() < 1e-15);
        assert!((adam.second_moment(0)[i] - 0.99 * v[i]).abs() < 1e-15);
    }
}

#[test]
fn mismatched_gradients_are_rejected() {
    let mut p = vec![Tensor::zeros(vec![3])];
    let mut adam = Adam::new(AdamConfig::default(), &p);
    assert!(adam.step(&mut p, &[vec![0.0; 2]], 1e-3).is_err());
    assert!(adam.step(&mut p, &[], 1e-3).is_err());
}

#[test]
fn cosine_schedule_landmarks() {
    assert_eq!(cosine_lr(0, 100, 2e-4), 2e-4);
    assert!((cosine_lr(50, 100, 2e-4) - 1e-4).abs() < 1e-18);
    assert!(cosine_lr(100, 100, 2e-4).abs() < 1e-18);
    assert!(cosine_lr(150, 100, 2e-4).abs() < 1e-18);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn adam_matches_reference_recurrence(
        grads in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 4), 1..12),
        lr in 1e-5f64..1e-1,
    ) {
        let init = vec![Tensor::new(vec![4], vec![0.1, -0.2, 0.3, 0.0]).unwrap()];
        let (mut p, mut q) = (init.clone(), init.clone());
        let mut adam = Adam::new(AdamConfig::default(), &p);
        let mut reference = RefAdam::new(&q);
        for g in &grads {
            adam.step(&mut p, &[g.clone()], lr).unwrap();
            reference.step(&mut q, &[g.clone()], lr);
        }
        for (a, b) in p[0].data().iter().zip(q[0].data()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn replay_buffer_keeps_recent_history(capacity in 1usize..8, pushes in 1usize..60, seed in 0u64..1000) {
        let mut buf = ReplayBuffer::new(capacity);
        let mut r = rng(seed);
        for i in 0..pushes {
            let out = buf.push_sample(Tensor::scalar(i as f64), &mut r);
            let j = out.item().unwrap() as usize;
            prop_assert!(buf.len() <= capacity);
            // Either the new image or one of the `capacity` pushes before it.
            prop_assert!(j <= i && i - j <= capacity, "push {} returned {}", i, j);
            if i < capacity {
                prop_assert_eq!(j, i);
            }
        }
        let stored: Vec<usize> = buf.images().map(|t| t.item().unwrap() as usize).collect();
        let first = pushes.saturating_sub(capacity);
        prop_assert_eq!(stored, (first..pushes).collect::<Vec<_>>());
    }
}

#[test]
fn full_buffer_sometimes_returns_history() {
    let mut buf = ReplayBuffer::new(4);
    let mut r = rng(3);
    let mut from_history = 0;
    for i in 0..400 {
        let out = buf.push_sample(Tensor::scalar(i as f64), &mut r);
        if i >= 4 && out.item().unwrap() != i as f64 {
            from_history += 1;
        }
    }
    // Swap probability ½, minus the chance of drawing the slot just pushed out.
    assert!((120..280).contains(&from_history), "{from_history}");
    let mut single = ReplayBuffer::new(1);
    assert_eq!(single.push_sample(Tensor::scalar(7.0), &mut r).item().unwrap(), 7.0);
}

#[test]
fn zero_capacity_passes_images_through() {
    let mut buf = ReplayBuffer::new(0);
    let mut r = rng(0);
    for i in 0..5 {
        assert_eq!(buf.push_sample(Tensor::scalar(i as f64), &mut r).item().unwrap(), i as f64);
    }
    assert!(buf.is_empty());
}
