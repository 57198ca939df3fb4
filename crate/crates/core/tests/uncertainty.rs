mod common;

use ugac::ggd::aleatoric_variance;
use ugac::nets::{Generator, GeneratorConfig};
use ugac::uncertainty::{
    aleatoric_map, epistemic_map, pass_variance, pearson, predict_with_uncertainty, spearman, total_uncertainty,
    uncertainty_residual_stats,
};
use ugac::Tensor;

use common::{rng, uniform};

fn small_generator(dropout_p: f64, seed: u64) -> Generator {
    let cfg = GeneratorConfig { base_width: 4, depth: 1, cascade_len: 1, dropout_p, ..GeneratorConfig::default() };
    Generator::new(cfg, &mut rng(seed)).unwrap()
}

#[test]
fn aleatoric_special_maps() {
    let ones = Tensor::ones(vec![1, 4, 4]);
    let two = Tensor::full(vec![1, 4, 4], 2.0);
    assert!(aleatoric_map(&ones, &two).unwrap().data().iter().all(|&v| (v - 0.5).abs() < 1e-12));
    assert!(aleatoric_map(&ones, &ones).unwrap().data().iter().all(|&v| (v - 2.0).abs() < 1e-12));
    let alpha = uniform(&[1, 3, 3], 0.1, 3.0, 1);
    let beta = uniform(&[1, 3, 3], 0.3, 8.0, 2);
    let map = aleatoric_map(&alpha, &beta).unwrap();
    for i in 0..9 {
        let want = aleatoric_variance(alpha.data()[i], beta.data()[i]).unwrap();
        assert_eq!(map.data()[i], want);
    }
}

#[test]
fn streaming_variance_matches_two_pass() {
    let passes: Vec<Tensor> = (0..17).map(|s| uniform(&[2, 5, 5], -3.0, 7.0, 100 + s)).collect();
    let got = pass_variance(&passes).unwrap();
    let t = passes.len() as f64;
    for i in 0..got.numel() {
        let mean = passes.iter().map(|p| p.data()[i]).sum::<f64>() / t;
        let var = passes.iter().map(|p| (p.data()[i] - mean).powi(2)).sum::<f64>() / t;
        assert!((got.data()[i] - var).abs() < 1e-10);
    }
}

#[test]
fn identical_passes_have_no_variance() {
    let x = uniform(&[1, 3, 3], 0.0, 1.0, 4);
    let v = pass_variance(std::iter::repeat_n(&x, 10)).unwrap();
    assert!(v.data().iter().all(|&e| e == 0.0));
}

#[test]
fn epistemic_variance_vanishes_without_dropout() {
    let g = small_generator(0.0, 5);
    let x = uniform(&[1, 1, 16, 16], 0.0, 1.0, 6);
    let e = epistemic_map(&g, &x, 8, &mut rng(7)).unwrap();
    assert!(e.data().iter().all(|&v| v.abs() < 1e-24));
    assert!(epistemic_map(&g, &x, 1, &mut rng(7)).is_err());
}

#[test]
fn epistemic_variance_is_positive_with_dropout() {
    let g = small_generator(0.5, 8);
    let x = uniform(&[1, 1, 16, 16], 0.0, 1.0, 9);
    let e = epistemic_map(&g, &x, 8, &mut rng(10)).unwrap();
    assert!(e.data().iter().all(|&v| v >= 0.0));
    assert!(e.data().iter().any(|&v| v > 0.0));
}

#[test]
fn totals_add_and_sigma_is_the_root() {
    let a = uniform(&[1, 4, 4], 0.0, 2.0, 11);
    let e = uniform(&[1, 4, 4], 0.0, 2.0, 12);
    let maps = total_uncertainty(a.clone(), e.clone()).unwrap();
    for i in 0..16 {
        assert_eq!(maps.total.data()[i], a.data()[i] + e.data()[i]);
        assert_eq!(maps.sigma().data()[i], maps.total.data()[i].sqrt());
    }
    let zero = Tensor::zeros(vec![1, 4, 4]);
    assert_eq!(total_uncertainty(a.clone(), zero.clone()).unwrap().total, a);

    let g = small_generator(0.2, 13);
    let x = uniform(&[1, 1, 16, 16], 0.0, 1.0, 14);
    let (pred, maps) = predict_with_uncertainty(&g, &x, None, &mut rng(0)).unwrap();
    assert_eq!(maps.epistemic, Tensor::zeros(pred.alpha.shape().to_vec()));
    assert_eq!(maps.total, aleatoric_map(&pred.alpha, &pred.beta).unwrap());
}

fn brute_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (sx, sy) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|b| b * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

#[test]
fn correlations_match_brute_force() {
    let x: Vec<f64> = uniform(&[40], 0.0, 1.0, 15).data().to_vec();
    let noise = uniform(&[40], -1.0, 1.0, 16);
    let y: Vec<f64> = x.iter().zip(noise.data()).map(|(a, n)| 0.6 * a + 0.4 * n).collect();
    assert!((pearson(&x, &y).unwrap() - brute_pearson(&x, &y)).abs() < 1e-12);
    let y2: Vec<f64> = x.iter().map(|v| 3.0 * v + 1.0).collect();
    assert!((pearson(&x, &y2).unwrap() - 1.0).abs() < 1e-12);
    let cubed: Vec<f64> = x.iter().map(|v| v.powi(3)).collect();
    assert!((spearman(&x, &cubed).unwrap() - 1.0).abs() < 1e-12);
    assert!(pearson(&x, &[0.5; 40]).is_err());
}

#[test]
fn residual_stats_on_proportional_maps() {
    let gts: Vec<Tensor> = (0..5).map(|s| uniform(&[1, 4, 4], 0.0, 1.0, 20 + s)).collect();
    let preds: Vec<Tensor> = gts.iter().enumerate().map(|(i, g)| g.map(|v| v + 0.1 * (i + 1) as f64)).collect();
    let totals: Vec<Tensor> = (0..5).map(|i| Tensor::full(vec![1, 4, 4], (0.2 * (i + 1) as f64).powi(2))).collect();
    let stats = uncertainty_residual_stats(&preds, &gts, &totals).unwrap();
    assert!((stats.pearson - 1.0).abs() < 1e-9);
    assert!((stats.spearman - 1.0).abs() < 1e-12);
    assert_eq!(stats.mean_sigma.len(), 5);
    assert!(uncertainty_residual_stats(&preds[..2], &gts[..2], &totals[..2]).is_err());
}
