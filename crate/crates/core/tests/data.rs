mod common;

use std::fs;

use ugac::data::{
    decode_raw, encode_raw, flip_horizontal, flip_vertical, load_dataset, load_image, load_paired, save_dataset,
    save_raw, synth_paired_dataset, synth_shapes_dataset, ImageFormat,
};
use ugac::Tensor;

use common::uniform;

/// Largest gap between the two empirical CDFs.
fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

fn pixels(images: &[Tensor]) -> Vec<f64> {
    images.iter().flat_map(|t| t.data().to_vec()).collect()
}

#[test]
fn domains_have_different_intensity_distributions() {
    // 16 images of 32×32 give 16384 pixels per domain.
    let ds = synth_shapes_dataset(16, 32, 1).unwrap();
    let (a, b) = (pixels(&ds.domain_a), pixels(&ds.domain_b));
    let d = ks_statistic(&a, &b);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let critical = 1.95 * ((n + m) / (n * m)).sqrt();
    assert!(d > critical, "KS statistic {d} below the 0.001 critical value {critical}");
    let other = synth_shapes_dataset(16, 32, 2).unwrap();
    let same = ks_statistic(&pixels(&ds.domain_a), &pixels(&other.domain_a));
    assert!(same < d);
}

#[test]
fn domain_a_is_label_like() {
    let ds = synth_shapes_dataset(8, 32, 3).unwrap();
    for img in &ds.domain_a {
        let mut levels: Vec<f64> = img.data().to_vec();
        levels.sort_by(f64::total_cmp);
        levels.dedup();
        assert!(levels.len() <= 4, "{levels:?}");
    }
    for img in &ds.domain_b {
        assert!(img.data().iter().all(|&v| v == 0.0 || v == 1.0));
    }
}

#[test]
fn synthetic_sets_are_seeded() {
    assert_eq!(synth_shapes_dataset(4, 16, 9).unwrap(), synth_shapes_dataset(4, 16, 9).unwrap());
    assert_ne!(synth_shapes_dataset(4, 16, 9).unwrap(), synth_shapes_dataset(4, 16, 10).unwrap());
    let p = synth_paired_dataset(3, 16, 9).unwrap();
    assert_eq!(p.inputs.len(), 3);
    assert_eq!(p.targets.len(), 3);
    assert!(synth_shapes_dataset(0, 16, 0).is_err());
}

#[test]
fn raw_round_trip_is_bit_exact() {
    let t = uniform(&[3, 7, 5], -1e3, 1e3, 4);
    let back = decode_raw(&encode_raw(&t), "mem".as_ref()).unwrap();
    assert_eq!(back.shape(), t.shape());
    assert!(back.data().iter().zip(t.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.rt");
    save_raw(&path, &t).unwrap();
    assert_eq!(load_image(&path).unwrap(), t);
}

#[test]
fn eight_bit_png_maps_to_unit_range() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.png");
    let img = image::GrayImage::from_fn(4, 3, |x, _| image::Luma([if x == 0 { 255 } else { 0 }]));
    img.save(&path).unwrap();
    let t = load_image(&path).unwrap();
    assert_eq!(t.shape(), &[1, 3, 4]);
    assert_eq!(t.data()[0], 1.0);
    assert_eq!(t.data()[1], 0.0);
    let rgb = image::RgbImage::from_pixel(2, 2, image::Rgb([255, 0, 51]));
    let path = dir.path().join("c.png");
    rgb.save(&path).unwrap();
    let t = load_image(&path).unwrap();
    assert_eq!(t.shape(), &[3, 2, 2]);
    assert_eq!(&t.data()[..5], &[1.0, 1.0, 1.0, 1.0, 0.0]);
    assert!((t.data()[8] - 0.2).abs() < 1e-12);
}

#[test]
fn dataset_directories_round_trip() {
    let ds = synth_shapes_dataset(3, 16, 5).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_dataset(dir.path(), &ds.domain_a, &ds.domain_b, ImageFormat::Raw).unwrap();
    assert_eq!(load_dataset(dir.path(), None).unwrap(), ds);
    let paired = load_paired(dir.path()).unwrap();
    assert_eq!(paired.inputs, ds.domain_a);

    let png = tempfile::tempdir().unwrap();
    save_dataset(png.path(), &ds.domain_a, &ds.domain_b, ImageFormat::Png).unwrap();
    let loaded = load_dataset(png.path(), None).unwrap();
    for (a, b) in loaded.domain_a.iter().zip(&ds.domain_a) {
        assert!(a.data().iter().zip(b.data()).all(|(x, y)| (x - y).abs() <= 0.5 / 255.0 + 1e-12));
    }
}

#[test]
fn empty_or_missing_domains_fail() {
    let dir = tempfile::tempdir().unwrap();
    assert!(load_dataset(dir.path(), None).is_err());
    fs::create_dir_all(dir.path().join("domainA")).unwrap();
    fs::create_dir_all(dir.path().join("domainB")).unwrap();
    assert!(matches!(load_dataset(dir.path(), None), Err(ugac::Error::Data(_))));
}

#[test]
fn flips() {
    let t = uniform(&[1, 4, 5], 0.0, 1.0, 6);
    assert_eq!(flip_horizontal(&flip_horizontal(&t).unwrap()).unwrap(), t);
    assert_eq!(flip_vertical(&flip_vertical(&t).unwrap()).unwrap(), t);
    let h = flip_horizontal(&t).unwrap();
    assert_eq!(h.data()[4], t.data()[0]);
    let v = flip_vertical(&t).unwrap();
    assert_eq!(v.data()[15], t.data()[0]);
    let sym = Tensor::from_fn([1, 3, 3], |i| [1.0, 2.0, 1.0][i % 3]);
    assert_eq!(flip_horizontal(&sym).unwrap(), sym);
}
