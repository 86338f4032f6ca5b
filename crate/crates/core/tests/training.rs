mod support;

use glyphforge_core::dataset::generate_synthetic;
use glyphforge_core::nn::{build_model, image_to_input, softmax_cross_entropy, train_images, Arch, ModelConfig, Tensor, TrainConfig};
use glyphforge_core::svm::{train_svm_raw, SvmConfig};
use glyphforge_core::GrayImage;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::oracles::two_blobs;

fn five_glyphs() -> (Vec<GrayImage>, Vec<usize>, Vec<String>) {
    let dir = tempfile::tempdir().unwrap();
    let m = generate_synthetic(5, 1, 64, 42, dir.path()).unwrap();
    let images = m.samples.iter().map(|s| m.load_image(s).unwrap()).collect();
    let labels = m.samples.iter().map(|s| m.label_of(s).unwrap()).collect();
    (images, labels, m.classes.clone())
}

#[test]
fn initial_loss_is_near_log_c() {
    let (images, labels, _) = five_glyphs();
    let cfg = ModelConfig::new(Arch::Cnn7, 5).with_width(0.25).with_input_size(64);
    for seed in 0..3 {
        let net = build_model(&cfg, seed).unwrap();
        let data: Vec<f64> = images.iter().flat_map(|img| image_to_input(img, 64)).collect();
        let logits = net.infer(&Tensor::from_vec(&[5, 1, 64, 64], data).unwrap()).unwrap();
        let (loss, _) = softmax_cross_entropy(&logits, &labels).unwrap();
        let ln_c = 5f64.ln();
        assert!((loss - ln_c).abs() <= 0.2 * ln_c, "seed {seed}: initial loss {loss}, ln C {ln_c}");
    }
}

#[test]
fn cnn7_memorizes_five_samples() {
    let (images, labels, classes) = five_glyphs();
    let cfg = ModelConfig::new(Arch::Cnn7, 5).with_width(0.25).with_input_size(64);
    let model = train_images(&cfg, &images, &labels, classes, &TrainConfig { epochs: 200, seed: 1, ..TrainConfig::default() })
        .unwrap();
    let hits = images.iter().zip(&labels).filter(|(img, &y)| model.predict(img).unwrap() == y).count();
    assert_eq!(hits, 5);
    let first = model.history.iter().position(|e| e.accuracy == 1.0).expect("reached 100% train accuracy");
    assert!(first < 200);
    assert!(model.history.last().unwrap().loss < model.history[0].loss);
}

#[test]
fn svm_separates_blobs_deterministically() {
    let (xs, ys) = two_blobs(&mut ChaCha8Rng::seed_from_u64(2), 25);
    let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
    let cfg = SvmConfig { seed: 9, ..SvmConfig::default() };
    let a = train_svm_raw(&refs, &ys, &cfg).unwrap();
    let b = train_svm_raw(&refs, &ys, &cfg).unwrap();
    assert_eq!(a, b);
    for (x, &y) in refs.iter().zip(&ys) {
        let s = a.scores(x).unwrap();
        assert_eq!(usize::from(s[1] > s[0]), y);
    }
}
