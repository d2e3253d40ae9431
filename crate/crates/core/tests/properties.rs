use proptest::prelude::*;

use dwa::data::{checkpoint_bytes, parse_checkpoint, CheckpointMeta};
use dwa::dwa::{dwa_differentials, DwaConfig, DwaParams};
use dwa::metrics::{psnr, ssim};
use dwa::models::{build_model, ModelConfig, ModelKind};
use dwa::ops::{add, conv2d, shift2d};
use dwa::resize::bicubic_resize;
use dwa::training::{dihedral, lr_at_epoch, TrainConfig};
use dwa::wavelet::{dwt2, idwt2};
use dwa::{Activation, ConvParams, PaddingMode, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn image(shape: [usize; 4], seed: u64) -> Tensor<f64> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| rng.gen_range(0.0..1.0))
}

fn even() -> impl Strategy<Value = usize> {
    (1usize..=12).prop_map(|v| 2 * v)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn dwt_round_trip_and_energy(b in 1usize..3, c in 1usize..4, h in even(), w in even(), seed: u64) {
        let x = image([b, c, h, w], seed);
        let s = dwt2(&x).unwrap();
        prop_assert_eq!(s.tensor().shape(), [b, 4 * c, h / 2, w / 2]);
        let back = idwt2(&s).unwrap();
        prop_assert!(back.max_abs_diff(&x).unwrap() < 1e-12);
        let (e0, e1) = (x.sum_squares(), s.tensor().sum_squares());
        prop_assert!((e0 - e1).abs() <= 1e-10 * e0.max(1.0));
    }

    #[test]
    fn odd_sizes_are_rejected(h in 1usize..10, w in 1usize..10) {
        prop_assume!(h % 2 == 1 || w % 2 == 1);
        prop_assert!(dwt2(&Tensor::<f64>::zeros([1, 1, h, w])).is_err());
    }

    #[test]
    fn shift_moves_interior(h in 4usize..12, w in 4usize..12, dx in -3isize..=3, dy in -3isize..=3, seed: u64) {
        let x = image([1, 2, h, w], seed);
        for pad in [PaddingMode::Zero, PaddingMode::Replicate] {
            let y = shift2d(&x, dx, dy, pad).unwrap();
            for c in 0..2 {
                for i in 0..h {
                    for j in 0..w {
                        let (si, sj) = (i as isize + dy, j as isize + dx);
                        if si >= 0 && sj >= 0 && (si as usize) < h && (sj as usize) < w {
                            prop_assert_eq!(y.at([0, c, i, j]), x.at([0, c, si as usize, sj as usize]));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn conv_is_linear_in_input(h in 3usize..9, w in 3usize..9, k in prop::sample::select(vec![1usize, 3, 5]), seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ConvParams::<f64>::init(2, 3, k, PaddingMode::Zero, &mut rng).unwrap();
        p.bias = Tensor::zeros(p.bias.shape());
        let (a, b) = (image([1, 2, h, w], seed ^ 1), image([1, 2, h, w], seed ^ 2));
        let lhs = conv2d(&add(&a, &b).unwrap(), &p).unwrap();
        let rhs = add(&conv2d(&a, &p).unwrap(), &conv2d(&b, &p).unwrap()).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-12);
        prop_assert_eq!(lhs.shape(), [1, 3, h, w]);
    }

    #[test]
    fn bicubic_preserves_constants(h in 2usize..16, w in 2usize..16, r in 2usize..=4, v in 0.0f64..1.0) {
        let x = Tensor::full([1, 3, h, w], v);
        let up = bicubic_resize(&x, r as f64).unwrap();
        prop_assert_eq!(up.shape(), [1, 3, h * r, w * r]);
        prop_assert!(up.data().iter().all(|&u| (u - v).abs() < 1e-12));
        let down = bicubic_resize(&up, 1.0 / r as f64).unwrap();
        prop_assert_eq!(down.shape(), [1, 3, h, w]);
        prop_assert!(down.data().iter().all(|&u| (u - v).abs() < 1e-12));
    }

    #[test]
    fn dihedral_group_laws(h in 1usize..7, w in 1usize..7, id in 0u8..8, seed: u64) {
        let x = image([1, 2, h, w], seed);
        // four quarter-turns and two mirrors are identities
        let mut r = x.clone();
        for _ in 0..4 {
            r = dihedral(&r, 1).unwrap();
        }
        prop_assert_eq!(&r, &x);
        let m = dihedral(&dihedral(&x, 4).unwrap(), 4).unwrap();
        prop_assert_eq!(&m, &x);
        // every element is invertible within the group
        let y = dihedral(&x, id).unwrap();
        let inverse = (0..8u8).find(|&j| dihedral(&y, j).unwrap() == x);
        prop_assert!(inverse.is_some());
        let sorted = |t: &Tensor<f64>| {
            let mut v = t.data().to_vec();
            v.sort_by(f64::total_cmp);
            v
        };
        prop_assert_eq!(sorted(&y), sorted(&x));
    }

    #[test]
    fn tied_pairs_reject_constants(
        s in 0usize..=3,
        c in 1usize..5,
        h in 3usize..12,
        w in 3usize..12,
        v in -2.0f32..2.0,
        act in prop::sample::select(Activation::ALL.to_vec()),
        seed: u64,
    ) {
        let cfg = DwaConfig::new(c, 3, 2).with_stride(s).with_nonlinearity(act);
        let mut p = DwaParams::<f32>::init(&cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        p.tie_pairs();
        let x = Tensor::full([1, c, h, w], v);
        let (hm, vm) = dwa_differentials(&x, &p, &cfg).unwrap();
        prop_assert!(hm.data().iter().chain(vm.data()).all(|d| d.to_bits() == 0));
    }

    #[test]
    fn metrics_are_symmetric(h in 11usize..20, w in 11usize..20, seed: u64) {
        let (a, b) = (image([1, 3, h, w], seed), image([1, 3, h, w], seed ^ 7));
        prop_assert_eq!(psnr(&a, &b, 1.0).unwrap(), psnr(&b, &a, 1.0).unwrap());
        let (s0, s1) = (ssim(&a, &b).unwrap(), ssim(&b, &a).unwrap());
        prop_assert!((s0 - s1).abs() < 1e-12);
        prop_assert!(s0 <= 1.0 + 1e-12);
        prop_assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn schedule_is_stepwise(epoch in 0usize..200) {
        let cfg = TrainConfig::default();
        let lr = lr_at_epoch(epoch, &cfg);
        prop_assert_eq!(lr, lr_at_epoch(epoch - epoch % 20, &cfg));
        prop_assert!(lr <= cfg.lr0);
        if epoch >= 20 {
            prop_assert!((lr / lr_at_epoch(epoch - 20, &cfg) - 0.8).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn checkpoint_round_trip_is_bitwise(
        kind in prop::sample::select(ModelKind::ALL.to_vec()),
        r in 2usize..=4,
        depth in 3usize..6,
        width in 1usize..6,
        seed: u64,
        step: u64,
    ) {
        let cfg = ModelConfig::new(kind, r).with_depth(depth).with_width(width);
        let model = build_model::<f32>(&cfg, seed).unwrap();
        let meta = CheckpointMeta { train: None, seed, step };
        let bytes = checkpoint_bytes(&model, &meta).unwrap();
        let (back, meta2) = parse_checkpoint(&bytes).unwrap();
        prop_assert_eq!(meta2, meta.clone());
        prop_assert_eq!(back.config(), model.config());
        for (a, b) in back.params().iter().zip(model.params()) {
            prop_assert_eq!(&a.name, &b.name);
            prop_assert!(a.value.data().iter().zip(b.value.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        prop_assert_eq!(checkpoint_bytes(&back, &meta).unwrap(), bytes);
    }
}
