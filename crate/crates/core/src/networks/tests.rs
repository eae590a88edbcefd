use super::*;
use crate::nn::Init;

fn mini() -> ArchConfig {
    ArchConfig { d_z: 2, width_divisor: 16, image_size: 16, latent_discriminator: true, ..ArchConfig::default() }
}

fn images(n: usize, s: usize, seed: u64) -> Tensor {
    let len = n * 3 * s * s;
    // deterministic values in (-1, 1)
    let data = (0..len).map(|i| ((i as u64 * 2654435761 + seed * 97) % 2000) as f64 / 1000.0 - 0.9995).collect();
    Tensor::from_vec(&[n, 3, s, s], data).unwrap()
}

#[test]
fn layer_tables_match_published_shapes() {
    let arch = ArchConfig::default();
    let enc = encoder_table(&arch);
    assert_eq!(enc.iter().map(|l| l.width).collect::<Vec<_>>(), [64, 128, 256, 512, 1024, 64]);
    assert_eq!(enc.iter().map(|l| l.kernel).collect::<Vec<_>>(), [5, 5, 8, 8, 1, 1]);
    assert_eq!(enc.iter().map(|l| l.shared).collect::<Vec<_>>(), [false, true, true, true, true, true]);
    let gen = generator_table(&arch);
    assert_eq!(gen.iter().map(|l| l.width).collect::<Vec<_>>(), [1024, 512, 256, 128, 64, 3]);
    assert_eq!(gen.iter().map(|l| l.shared).collect::<Vec<_>>(), [true, true, true, true, false, false]);
    let dis = discriminator_table(&arch);
    assert_eq!(dis.iter().map(|l| l.width).collect::<Vec<_>>(), [96, 192, 384, 768, 1, 10]);
    assert_eq!(dis.iter().map(|l| l.shared).collect::<Vec<_>>(), [false, true, true, true, true, true]);
    let lat = latent_discriminator_table(&arch);
    assert_eq!(lat.iter().map(|l| l.width).collect::<Vec<_>>(), [512, 512, 512, 512, 2]);
}

#[test]
fn parameter_counts_match_closed_form() {
    let arch = ArchConfig { latent_discriminator: true, ..ArchConfig::default() };
    let b = NetworkBundle::build(&arch).unwrap();
    // conv weights, plus BatchNorm affine pairs or biases
    let e1 = 64 * 5 * 25 + 2 * 64;
    let e_shared = (128 * 64 * 25 + 2 * 128)
        + (256 * 128 * 64 + 2 * 256)
        + (512 * 256 * 64 + 2 * 512)
        + (1024 * 512 + 1024)
        + (64 * 1024 + 64);
    assert_eq!(b.network_param_count(Owners::E1), e1 + e_shared);
    let g_shared =
        (1024 * 64 + 1024) + (1024 * 512 * 16 + 2 * 512) + (512 * 256 * 16 + 2 * 256) + (256 * 128 * 16 + 2 * 128);
    let g1 = (128 * 64 * 16 + 2 * 64) + (64 * 3 + 3);
    assert_eq!(b.network_param_count(Owners::G2), g_shared + g1);
    let d1 = 96 * 3 * 25 + 96;
    let d_shared =
        (192 * 96 * 25 + 192) + (384 * 192 * 25 + 384) + (768 * 384 * 25 + 768) + (3072 + 1) + (3072 * 10 + 10);
    assert_eq!(b.network_param_count(Owners::D1), d1 + d_shared);
    let lat = (64 * 512 + 512) + 3 * (512 * 512 + 512) + (512 * 2 + 2);
    assert_eq!(b.network_param_count(Owners::D_LATENT), lat);
    assert_eq!(b.feature_shape, [768, 2, 2]);
    // shared groups stored once
    let total: usize = b.store.ids().map(|id| b.store.value(id).len()).sum();
    assert_eq!(total, 2 * e1 + e_shared + g_shared + 2 * g1 + 2 * d1 + d_shared + lat);
}

#[test]
fn canonical_paths() {
    let b = NetworkBundle::build(&mini()).unwrap();
    for p in [
        "encoder1.l1.conv.weight",
        "encoder2.l1.bn.weight",
        "encoder.shared.l2.conv.weight",
        "encoder.shared.l5.conv.bias",
        "encoder.shared.l6.fc.weight",
        "generator.shared.l1.fc.weight",
        "generator.shared.l2.deconv.weight",
        "generator1.l5.bn.bias",
        "generator2.l6.deconv.bias",
        "discriminator1.l1.conv.weight",
        "discriminator.shared.l4.conv.bias",
        "discriminator.shared.l5a.fc.weight",
        "discriminator.shared.l5b.fc.bias",
        "latent_discriminator.l5.fc.weight",
    ] {
        assert!(b.store.find(p).is_some(), "{p}");
    }
    assert!(b.store.find("encoder.shared.l1.conv.weight").is_none());
    assert!(b.store.find("encoder1.l1.conv.bias").is_none());
    let shared = b.store.info(b.store.find("generator.shared.l3.deconv.weight").unwrap()).owners;
    assert_eq!(shared, Owners::G1 | Owners::G2);
}

#[test]
fn shared_groups_are_one_storage() {
    let mut b = NetworkBundle::build_initialized(&mini(), 3).unwrap();
    let groups = b.shared_groups();
    let names: Vec<&str> = groups.iter().map(|g| g.name.as_str()).collect();
    assert_eq!(
        names,
        [
            "encoder.l2",
            "encoder.l3",
            "encoder.l4",
            "encoder.l5",
            "encoder.l6",
            "generator.l1",
            "generator.l2",
            "generator.l3",
            "generator.l4",
            "discriminator.l2",
            "discriminator.l3",
            "discriminator.l4",
            "discriminator.l5a",
            "discriminator.l5b",
        ]
    );
    for g in &groups {
        assert_eq!(g.via_first, g.via_second);
    }
    assert!(b.shared_mismatches().is_empty());
    let id = groups[0].via_first[0];
    b.store.value_mut(id).data_mut()[0] += 1.0;
    assert!(b.shared_mismatches().is_empty());
}

#[test]
fn initialization_rules() {
    let arch = ArchConfig::default();
    let a = NetworkBundle::build_initialized(&arch, 42).unwrap();
    let b = NetworkBundle::build_initialized(&arch, 42).unwrap();
    assert_eq!(a.store, b.store);
    for id in a.store.ids() {
        let info = a.store.info(id);
        let v = a.store.value(id);
        match info.init {
            Init::XavierUniform { fan_in, fan_out } => {
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                assert!(v.data().iter().all(|x| x.abs() <= bound), "{}", info.path);
                assert!(info.path.starts_with("discriminator") || info.path.starts_with("latent"));
            }
            Init::Gaussian { std } => {
                assert_eq!(std, 0.02);
                if v.len() >= 10_000 {
                    let n = v.len() as f64;
                    let mean = v.sum() / n;
                    let sd = (v.data().iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt();
                    assert!((sd - 0.02).abs() < 0.002, "{} {sd}", info.path);
                }
            }
            Init::Zeros => assert!(v.data().iter().all(|&x| x == 0.0)),
            Init::Ones => assert!(v.data().iter().all(|&x| x == 1.0)),
        }
    }
    let c = NetworkBundle::build_initialized(&arch, 43).unwrap();
    assert_ne!(a.store, c.store);
}

#[test]
fn forward_shapes_and_ranges() {
    let arch = mini();
    let b = NetworkBundle::build_initialized(&arch, 1).unwrap();
    let x = images(4, 16, 0);
    let mut g = Graph::new(&b.store, Mode::Train);
    let xv = g.input(x.clone());
    let z = b.encode_rgb(&mut g, Domain::Source, xv).unwrap();
    assert_eq!(g.value(z).shape(), [4, 2]);
    let y = b.generate(&mut g, Domain::Target, z).unwrap();
    assert_eq!(g.value(y).shape(), [4, 3, 16, 16]);
    assert!(g.value(y).data().iter().all(|v| v.abs() < 1.0));
    let d = b.discriminate(&mut g, Domain::Target, y).unwrap();
    assert_eq!(g.value(d.adv).shape(), [4]);
    assert!(g.value(d.adv).data().iter().all(|&p| p > 0.0 && p < 1.0));
    assert_eq!(g.value(d.cls).shape(), [4, 10]);
    for row in g.value(d.cls).data().chunks(10) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    let [c, h, w] = b.feature_shape;
    assert_eq!(g.value(d.features).shape(), [4, c, h, w]);
    let lz = b.discriminate_latent(&mut g, z).unwrap();
    assert_eq!(g.value(lz).shape(), [4]);
}

#[test]
fn eval_mode_is_deterministic() {
    let b = NetworkBundle::build_initialized(&mini(), 5).unwrap();
    let x = images(3, 16, 1);
    let a = b.translate(&x, Domain::Source, Domain::Target, Mode::Eval).unwrap();
    let c = b.translate(&x, Domain::Source, Domain::Target, Mode::Eval).unwrap();
    assert_eq!(a, c);
    let r = b.reconstruct(&x, Domain::Target, Mode::Eval).unwrap();
    assert_eq!(r.shape(), [3, 3, 16, 16]);
}

#[test]
fn input_validation() {
    let b = NetworkBundle::build_initialized(&mini(), 5).unwrap();
    assert!(matches!(
        b.translate(&images(2, 8, 0), Domain::Source, Domain::Source, Mode::Eval),
        Err(Error::Shape { .. })
    ));
    let mut bad = images(2, 16, 0);
    bad.data_mut()[3] = f64::NAN;
    assert!(matches!(b.discriminate_tensor(Domain::Source, &bad), Err(Error::NonFinite(_))));
    assert!(b.generate_tensor(Domain::Source, &Tensor::zeros(&[2, 3]), Mode::Eval).is_err());
    let no_latent = NetworkBundle::build(&ArchConfig { latent_discriminator: false, ..mini() }).unwrap();
    assert!(no_latent.discriminate_latent_tensor(&Tensor::zeros(&[2, 2])).is_err());
    assert!(ArchConfig { image_size: 24, ..mini() }.validate().is_err());
}

#[test]
fn scaled_architecture_reaches_image_size() {
    for s in [16, 32, 64] {
        let arch = ArchConfig { d_z: 4, width_divisor: 32, image_size: s, ..ArchConfig::default() };
        let b = NetworkBundle::build_initialized(&arch, 0).unwrap();
        let y = b.translate(&images(2, s, 0), Domain::Source, Domain::Target, Mode::Train).unwrap();
        assert_eq!(y.shape(), [2, 3, s, s]);
    }
}
