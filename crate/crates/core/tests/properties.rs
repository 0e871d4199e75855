use ndarray::{Array3, Array4, Axis};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use weavestat::descriptors::{class_s2, s2_brute, s2_fft, volume_fractions, Boundary};
use weavestat::metrics::{composite_loss, confusion, cross_entropy, dice_loss, iou_f1, LossConfig};
use weavestat::nesting::YARN_SPACING_MM;
use weavestat::nesting::{
    detect_peaks, interpolate_spectrum, laminate_thickness, nesting_factor, CompactionSpec,
    Spectrum1D,
};
use weavestat::patching::{
    crop_center, gaussian_window, mirror_pad, patch_grid, stitch, ScorePatch,
};
use weavestat::synth::{generate_plain_weave, WeaveSpec};
use weavestat::volume::{
    argmax_decode, one_hot_encode, softmax_field, FieldKind, GridGeometry, LabelVolume,
    ProbabilityField,
};

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

fn shape3() -> impl Strategy<Value = [usize; 3]> {
    (1usize..=6, 1usize..=6, 1usize..=6).prop_map(|(a, b, c)| [a, b, c])
}

fn binary(seed: u64, shape: [usize; 3], p: f64) -> Array3<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array3::from_shape_fn(shape, |_| u8::from(rng.gen_bool(p)))
}

fn labels(seed: u64, shape: [usize; 3], c: u16) -> LabelVolume {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    LabelVolume::new(
        GridGeometry::isotropic(shape, 1.0).unwrap(),
        Array3::from_shape_fn(shape, |_| rng.gen_range(0..c)),
        c as usize,
    )
    .unwrap()
}

fn logits(seed: u64, c: usize, shape: [usize; 3], scale: f64) -> ProbabilityField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [z, y, x] = shape;
    let a = Array4::from_shape_fn((c, z, y, x), |_| rng.gen_range(-scale..scale));
    ProbabilityField::new(
        GridGeometry::isotropic(shape, 1.0).unwrap(),
        a,
        FieldKind::Logits,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(config(64))]

    #[test]
    fn one_hot_is_a_partition_of_unity(seed: u64, shape in shape3(), c in 1u16..5) {
        let l = labels(seed, shape, c);
        let m = one_hot_encode(&l);
        let sums = m.channels().map(|&v| v as u32).sum_axis(Axis(0));
        prop_assert!(sums.iter().all(|&s| s == 1));
    }

    #[test]
    fn softmax_ignores_per_voxel_shifts(seed: u64, shape in shape3(), c in 2usize..5, shift in -50.0f64..50.0) {
        let f = logits(seed, c, shape, 10.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let offsets = Array3::from_shape_fn(shape, |_| rng.gen_range(-shift.abs()..=shift.abs()));
        let mut shifted = f.channels().clone();
        for mut ch in shifted.outer_iter_mut() {
            ch += &offsets;
        }
        let g = ProbabilityField::new(*f.geometry(), shifted, FieldKind::Logits).unwrap();
        let (a, b) = (softmax_field(&f).unwrap(), softmax_field(&g).unwrap());
        for (x, y) in a.channels().iter().zip(b.channels()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn argmax_survives_softmax(seed: u64, shape in shape3(), c in 2usize..5) {
        let f = logits(seed, c, shape, 5.0);
        prop_assert_eq!(argmax_decode(&softmax_field(&f).unwrap()).unwrap(), argmax_decode(&f).unwrap());
    }

    #[test]
    fn fft_matches_brute_force(seed: u64, shape in (1usize..=10, 1usize..=10, 1usize..=10), p in 0.05f64..0.95) {
        let ch = binary(seed, [shape.0, shape.1, shape.2], p);
        for boundary in [Boundary::Periodic, Boundary::Aperiodic { unbiased: false }, Boundary::Aperiodic { unbiased: true }] {
            let a = s2_fft(ch.view(), [1.0; 3], boundary).unwrap();
            let b = s2_brute(ch.view(), [1.0; 3], boundary).unwrap();
            prop_assert_eq!(a.values().dim(), b.values().dim());
            for (x, y) in a.values().iter().zip(b.values()) {
                prop_assert!((x - y).abs() < 1e-10, "{:?}: {} vs {}", boundary, x, y);
            }
        }
    }

    #[test]
    fn s2_zero_lag_is_the_volume_fraction(seed: u64, shape in shape3(), c in 2u16..5) {
        let l = labels(seed, shape, c);
        let phi = volume_fractions(&one_hot_encode(&l));
        prop_assert!((phi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for k in 0..c {
            let s2 = class_s2(&l, k, Boundary::Periodic).unwrap();
            prop_assert!((s2.zero_lag() - phi[k as usize]).abs() < 1e-12);
            prop_assert!(s2.values().iter().all(|&v| v <= s2.zero_lag() + 1e-12));
        }
    }

    #[test]
    fn s2_is_translation_invariant(seed: u64, shape in shape3(), dz in 0usize..6, dy in 0usize..6, dx in 0usize..6) {
        let ch = binary(seed, shape, 0.4);
        let [nz, ny, nx] = shape;
        let moved = Array3::from_shape_fn(shape, |(z, y, x)| ch[[(z + dz) % nz, (y + dy) % ny, (x + dx) % nx]]);
        let a = s2_fft(ch.view(), [1.0; 3], Boundary::Periodic).unwrap();
        let b = s2_fft(moved.view(), [1.0; 3], Boundary::Periodic).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            prop_assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn f1_and_iou_agree(seed: u64, shape in shape3(), c in 2u16..5) {
        let (p, t) = (labels(seed, shape, c), labels(seed ^ 0xabc, shape, c));
        let classes: Vec<usize> = (0..c as usize).collect();
        let r = iou_f1(&confusion(&p, &t).unwrap(), &classes).unwrap();
        for s in &r.per_class {
            if let (Some(iou), Some(f1)) = (s.iou, s.f1) {
                prop_assert!((f1 - 2.0 * iou / (1.0 + iou)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn losses_are_nonnegative_and_linear(seed: u64, shape in shape3(), a in 0.0f64..2.0, b in 0.0f64..2.0) {
        let f = logits(seed, 3, shape, 4.0);
        let truth = one_hot_encode(&labels(seed ^ 7, shape, 3));
        let base = LossConfig::default();
        let ce = cross_entropy(&f, &truth, &base).unwrap();
        let dice = dice_loss(&softmax_field(&f).unwrap(), &truth, &base).unwrap();
        prop_assert!(ce >= 0.0);
        let cfg = LossConfig { alpha: a, beta: b, ..base };
        let total = composite_loss(&f, &truth, &cfg).unwrap();
        prop_assert!((total - (a * ce + b * dice)).abs() < 1e-12);
    }

    #[test]
    fn losses_ignore_voxel_order(seed: u64, n in 2usize..40) {
        let shape = [1, 1, n];
        let f = logits(seed, 3, shape, 4.0);
        let t = labels(seed ^ 3, shape, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.gen_range(0..=i));
        }
        let pf = Array4::from_shape_fn((3, 1, 1, n), |(c, _, _, x)| f.channels()[[c, 0, 0, perm[x]]]);
        let pt = Array3::from_shape_fn((1, 1, n), |(_, _, x)| t.labels()[[0, 0, perm[x]]]);
        let pf = ProbabilityField::new(*f.geometry(), pf, FieldKind::Logits).unwrap();
        let pt = LabelVolume::new(*t.geometry(), pt, 3).unwrap();
        let cfg = LossConfig::default();
        let (a, b) = (composite_loss(&f, &one_hot_encode(&t), &cfg).unwrap(), composite_loss(&pf, &one_hot_encode(&pt), &cfg).unwrap());
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn patch_grids_cover_every_voxel(v in (1usize..60, 1usize..60, 1usize..60), p in (1usize..20, 1usize..20, 1usize..20), s in (1usize..20, 1usize..20, 1usize..20)) {
        let vol = [v.0, v.1, v.2];
        let patch = [p.0.min(v.0), p.1.min(v.1), p.2.min(v.2)];
        let stride = [s.0.min(patch[0]), s.1.min(patch[1]), s.2.min(patch[2])];
        let g = patch_grid(vol, patch, stride).unwrap();
        let mut hits = Array3::<u32>::zeros(vol);
        for o in &g.offsets {
            hits.slice_mut(ndarray::s![o[0]..o[0] + patch[0], o[1]..o[1] + patch[1], o[2]..o[2] + patch[2]])
                .mapv_inplace(|h| h + 1);
        }
        prop_assert!(hits.iter().all(|&h| h >= 1));
    }

    #[test]
    fn mirror_pad_then_crop_is_identity(seed: u64, shape in (2usize..8, 2usize..8, 2usize..8), w in 0usize..8) {
        let w = w.min(shape.0 - 1).min(shape.1 - 1).min(shape.2 - 1);
        let a = binary(seed, [shape.0, shape.1, shape.2], 0.5);
        let padded = mirror_pad(a.view(), w).unwrap();
        prop_assert_eq!(crop_center(padded.view(), w).unwrap(), a);
    }

    #[test]
    fn stitching_ignores_patch_order(seed: u64) {
        let vol = [12, 10, 9];
        let patch = [6, 5, 4];
        let g = patch_grid(vol, patch, [3, 3, 2]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let patches: Vec<ScorePatch> = g
            .offsets
            .iter()
            .map(|&offset| ScorePatch {
                offset,
                scores: Array4::from_shape_fn((3, 6, 5, 4), |_| rng.gen_range(0.0..1.0)),
            })
            .collect();
        let w = gaussian_window(patch, 0.125).unwrap();
        let a = stitch(&patches, &w, vol, FieldKind::Probabilities, [1.0; 3]).unwrap();
        let mut shuffled = patches.clone();
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.gen_range(0..=i));
        }
        let b = stitch(&shuffled, &w, vol, FieldKind::Probabilities, [1.0; 3]).unwrap();
        for (x, y) in a.channels().iter().zip(b.channels()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn peaks_are_scale_equivariant(k in 0.01f64..100.0, mu in 8.0f64..20.0, sigma in 1.5f64..4.0) {
        let lags: Vec<f64> = (-40..=40).map(f64::from).collect();
        let values: Vec<f64> = lags
            .iter()
            .map(|&x| (-x * x / 6.0).exp() + 0.4 * (-(x.abs() - mu).powi(2) / (2.0 * sigma * sigma)).exp())
            .collect();
        let s = Spectrum1D::new(lags, values, 1.0).unwrap();
        let a = detect_peaks(&interpolate_spectrum(&s, 8).unwrap());
        let b = detect_peaks(&interpolate_spectrum(&s.scaled(k), 8).unwrap());
        prop_assert_eq!(a.len(), b.len());
        for (p, q) in a.iter().zip(&b) {
            prop_assert!((p.lag_mm - q.lag_mm).abs() < 1e-9);
            prop_assert!((p.sigma_mm - q.sigma_mm).abs() < 1e-9);
        }
    }

    #[test]
    fn laminate_thickness_homogeneity(n in 1u32..50, m in 1u32..5, phi in 0.1f64..0.5, k in 1.0f64..2.0) {
        let spec = |layers, fvc| CompactionSpec { layers, areal_weight: 285.0, fiber_density: 1.77, target_fvc: fvc, gap_mm: 1.0 };
        let base = laminate_thickness(&spec(n, phi)).unwrap();
        prop_assert!((laminate_thickness(&spec(n * m, phi)).unwrap() - m as f64 * base).abs() < 1e-9 * base * m as f64);
        prop_assert!((laminate_thickness(&spec(n, phi * k)).unwrap() - base / k).abs() < 1e-9 * base);
    }

    #[test]
    fn nesting_factor_decreases_with_thickness(t in 0.05f64..1.0, dt in 0.001f64..0.5) {
        let spec = CompactionSpec { layers: 10, areal_weight: 285.0, fiber_density: 1.77, target_fvc: 0.6, gap_mm: 2.7 };
        let a = nesting_factor(t, 0.01, &spec).unwrap().nesting_factor;
        let b = nesting_factor(t + dt, 0.01, &spec).unwrap().nesting_factor;
        prop_assert!(b < a);
    }
}

proptest! {
    #![proptest_config(config(8))]

    #[test]
    fn synthetic_volumes_are_valid_three_class(layers in 1usize..4, seed: u64) {
        let spec = WeaveSpec { layers, voxel_pitch: 0.05, ..WeaveSpec::default() }.with_random_offsets(seed);
        let z = (spec.stack_extent() / 0.05).ceil() as usize + 2;
        let v = generate_plain_weave(&spec, [z, 58, 58]).unwrap();
        prop_assert_eq!(v.num_classes(), 3);
        prop_assert!(v.labels().iter().all(|&l| l < 3));
    }

    #[test]
    fn whole_voxel_layer_shifts_keep_fractions(shifts in proptest::collection::vec((0usize..40, 0usize..40), 3)) {
        // one unit cell spans exactly 40 voxels
        let pitch = 2.0 * YARN_SPACING_MM / 40.0;
        let base = WeaveSpec { layers: 3, voxel_pitch: pitch, ..WeaveSpec::default() };
        let z = (base.stack_extent() / pitch).ceil() as usize + 2;
        let moved = WeaveSpec {
            layer_offsets: shifts.iter().map(|&(a, b)| (a as f64 * pitch, b as f64 * pitch)).collect(),
            ..base.clone()
        };
        let fa = volume_fractions(&one_hot_encode(&generate_plain_weave(&base, [z, 40, 40]).unwrap()));
        let fb = volume_fractions(&one_hot_encode(&generate_plain_weave(&moved, [z, 40, 40]).unwrap()));
        for (a, b) in fa.iter().zip(&fb) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
