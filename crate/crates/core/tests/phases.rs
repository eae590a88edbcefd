use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xdomain_core::nn::Owners;
use xdomain_core::trainer::{self, discriminator_phase, generator_phase, latent_phase, prepare};
use xdomain_core::{ArchConfig, LossWeights, PairedBatch, Schedule, Scheme, StepOptions, Tensor, TrainState};

fn mini() -> ArchConfig {
    ArchConfig { d_z: 2, width_divisor: 16, image_size: 16, ..ArchConfig::default() }
}

fn batch(seed: u64) -> PairedBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut img =
        || Tensor::from_vec(&[4, 3, 16, 16], (0..4 * 768).map(|_| rng.gen_range(-0.9..0.9)).collect()).unwrap();
    let (s, t) = (img(), img());
    PairedBatch::new(s, vec![0, 3, 7, 9], t).unwrap()
}

fn options(w: LossWeights) -> StepOptions {
    StepOptions {
        weights: w,
        schedule: Schedule { learning_rate: 1e-3, train_batch: 4, ..Default::default() },
        classify_reconstructions: false,
    }
}

fn weights() -> LossWeights {
    LossWeights { recon: 1.0, latent: 1.0, gan: 0.5, feature: 0.1, cls: 1.0, sigma: 1.0 }
}

const GROUPS: [Owners; 3] = [Owners::AUTOENCODERS, Owners::DISCRIMINATORS, Owners::D_LATENT];

fn sums(state: &TrainState) -> [u64; 3] {
    GROUPS.map(|o| state.bundle.store.checksum(o))
}

/// Which of [`GROUPS`] changed between two checksum snapshots.
fn changed(a: [u64; 3], b: [u64; 3]) -> [bool; 3] {
    [a[0] != b[0], a[1] != b[1], a[2] != b[2]]
}

#[test]
fn mmd_phases_touch_only_their_networks() {
    let opts = options(weights());
    let mut state = TrainState::new(&mini(), Scheme::Mmd, &opts.schedule, 1).unwrap();
    let b = batch(2);
    let s0 = sums(&state);
    let mut ctx = prepare(&mut state, &b, &opts).unwrap();
    assert_eq!(sums(&state), s0, "prior draw mutates nothing");
    discriminator_phase(&mut state, &b, &mut ctx, &opts).unwrap();
    let s1 = sums(&state);
    assert_eq!(changed(s0, s1), [false, true, false]);
    generator_phase(&mut state, &b, &ctx, &opts).unwrap();
    assert_eq!(changed(s1, sums(&state)), [true, false, false]);
}

#[test]
fn gan_phases_touch_only_their_networks() {
    let opts = options(weights());
    let mut state = TrainState::new(&mini(), Scheme::Gan, &opts.schedule, 1).unwrap();
    let b = batch(2);
    let s0 = sums(&state);
    let mut ctx = prepare(&mut state, &b, &opts).unwrap();
    discriminator_phase(&mut state, &b, &mut ctx, &opts).unwrap();
    let s1 = sums(&state);
    assert_eq!(changed(s0, s1), [false, true, false]);
    latent_phase(&mut state, &ctx, &opts).unwrap();
    let s2 = sums(&state);
    assert_eq!(changed(s1, s2), [false, false, true]);
    generator_phase(&mut state, &b, &ctx, &opts).unwrap();
    assert_eq!(changed(s2, sums(&state)), [true, false, false]);
}

#[test]
fn shared_groups_stay_identical_and_step_counts() {
    let opts = options(weights());
    for scheme in [Scheme::Mmd, Scheme::Gan] {
        let mut state = TrainState::new(&mini(), scheme, &opts.schedule, 4).unwrap();
        for k in 0..5 {
            let r = trainer::step(&mut state, &batch(k), &opts).unwrap();
            assert_eq!(state.step, k + 1);
            assert_eq!(r.total_latent_discriminator.is_some(), scheme == Scheme::Gan);
        }
        assert!(state.bundle.shared_mismatches().is_empty());
        for g in state.bundle.shared_groups() {
            for (a, b) in g.via_first.iter().zip(&g.via_second) {
                let (va, vb) = (state.bundle.store.value(*a), state.bundle.store.value(*b));
                assert!(va.data().iter().zip(vb.data()).all(|(x, y)| x.to_bits() == y.to_bits()), "{}", g.name);
            }
        }
    }
}

#[test]
fn zero_discriminator_weights_leave_only_decay() {
    let w = LossWeights { gan: 0.0, feature: 0.0, cls: 0.0, ..weights() };
    let opts = options(w);
    let mut state = TrainState::new(&mini(), Scheme::Mmd, &opts.schedule, 6).unwrap();
    let ids = state.bundle.store.owned_by(Owners::DISCRIMINATORS);
    let before: Vec<Tensor> = ids.iter().map(|&i| state.bundle.store.value(i).clone()).collect();
    trainer::step(&mut state, &batch(1), &opts).unwrap();
    let decay = 1.0 - opts.schedule.learning_rate * opts.schedule.weight_decay;
    for (id, old) in ids.iter().zip(&before) {
        for (new, old) in state.bundle.store.value(*id).data().iter().zip(old.data()) {
            assert_eq!(*new, old * decay);
        }
    }
}

#[test]
fn latent_gan_without_weight_follows_the_mmd_trajectory() {
    let mmd = options(LossWeights { latent: 0.0, ..weights() });
    let gan = mmd.clone();
    let mut a = TrainState::new(&mini(), Scheme::Mmd, &mmd.schedule, 8).unwrap();
    let mut b = TrainState::new(&mini(), Scheme::Gan, &gan.schedule, 8).unwrap();
    for k in 0..3 {
        let ra = trainer::step(&mut a, &batch(10 + k), &mmd).unwrap();
        let rb = trainer::step(&mut b, &batch(10 + k), &gan).unwrap();
        assert_eq!(ra.raw(xdomain_core::Term::Recon), rb.raw(xdomain_core::Term::Recon));
    }
    for o in [Owners::AUTOENCODERS, Owners::DISCRIMINATORS] {
        assert_eq!(a.bundle.store.checksum(o), b.bundle.store.checksum(o));
    }
}

#[test]
fn non_finite_input_is_rejected_before_any_update() {
    let opts = options(weights());
    let mut state = TrainState::new(&mini(), Scheme::Mmd, &opts.schedule, 1).unwrap();
    let mut b = batch(3);
    let mut data = b.source.data().to_vec();
    data[5] = f64::NAN;
    b.source = Tensor::from_vec(b.source.shape(), data).unwrap();
    let s0 = sums(&state);
    assert!(trainer::step(&mut state, &b, &opts).is_err());
    assert_eq!(sums(&state), s0);
    assert_eq!(state.step, 0);
}
