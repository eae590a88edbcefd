//! Every loss term's tape gradient against central finite differences on a
//! miniature bundle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xdomain_core::gradcheck::{check_all, GradCheckConfig};
use xdomain_core::trainer::sample_prior;
use xdomain_core::{ArchConfig, NetworkBundle, PairedBatch, Tensor};

const TOLERANCE: f64 = 1e-4;

fn mini() -> ArchConfig {
    ArchConfig { d_z: 2, width_divisor: 16, image_size: 16, latent_discriminator: true, ..ArchConfig::default() }
}

fn batch(rng: &mut ChaCha8Rng, n: usize) -> PairedBatch {
    let mut img = || {
        let data = (0..n * 3 * 16 * 16).map(|_| rng.gen_range(-0.95..0.95)).collect();
        Tensor::from_vec(&[n, 3, 16, 16], data).unwrap()
    };
    let (s, t) = (img(), img());
    let labels = (0..n).map(|i| i % 10).collect();
    PairedBatch::new(s, labels, t).unwrap()
}

#[test]
fn every_term_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut bundle = NetworkBundle::build_initialized(&mini(), 9).unwrap();
    let b = batch(&mut rng, 3);
    let z = sample_prior(6, 2, 1.0, &mut rng).unwrap();
    let cfg = GradCheckConfig::default();
    let before = bundle.store.clone();
    for o in check_all(&mut bundle, &b, &z, &cfg, TOLERANCE, &mut rng).unwrap() {
        let name = o.term.name();
        println!("{name:<14} checked {} skipped {} worst rel err {:.2e}", o.checked, o.skipped_kinks, o.worst);
        for m in &o.mismatches {
            println!(
                "  {}[{}] analytic {:e} numeric {:e}",
                bundle.store.info(m.param).path,
                m.index,
                m.analytic,
                m.numeric
            );
        }
        assert!(o.checked >= cfg.per_term, "{name}: only {} parameters checked", o.checked);
        assert!(o.worst < TOLERANCE, "{name}: relative error {:.3e}", o.worst);
        assert!(o.skipped_kinks * 4 <= o.checked, "{name}: {} kinks skipped", o.skipped_kinks);
    }
    assert_eq!(bundle.store, before, "parameters restored");
}
