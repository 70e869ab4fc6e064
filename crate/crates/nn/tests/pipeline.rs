use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tch::Tensor;

use rawmark_core::codec::Payload;
use rawmark_core::BayerRaw;
use rawmark_nn::config::RunConfig;
use rawmark_nn::distortion::{apply_single, DistortionKind, DistortionParams};
use rawmark_nn::evaluation::{develop_deep, embed, extract};
use rawmark_nn::models::{load_bundle, save_bundle, ModelBundle};
use rawmark_nn::tensor::{demosaic_upsample, raws_to_tensor, rgbs_to_tensor};

fn tiny_bundle() -> ModelBundle {
    let cfg = RunConfig::from_toml_str(
        r#"
        crop_size = 32
        batch_size = 2
        encoder = { base_channels = 4, depth = 2 }
        decoder = { width = 4, hidden = 16 }
        disc = { base_channels = 2 }
        isp = { base_channels = 4, depth = 2 }
        "#,
    )
    .unwrap();
    ModelBundle::new(cfg).unwrap()
}

fn cover(k: usize) -> BayerRaw {
    let v = (0..32 * 32)
        .map(|i| 0.2 + 0.3 * (((i / 32) * (k + 1) + i % 32) as f32 / 9.0).sin().abs())
        .collect();
    BayerRaw::new(v, 32, 32).unwrap()
}

fn values(t: &Tensor) -> Vec<f32> {
    Vec::<f32>::try_from(&t.contiguous().view([-1])).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn tensor_upsample_agrees_with_the_plain_route((h, w, data) in (1usize..5, 1usize..5).prop_flat_map(|(h, w)| {
        (Just(h), Just(w), prop::collection::vec(0.0f32..=1.0, 4 * h * w))
    })) {
        let raw = BayerRaw::new(data, 2 * h, 2 * w).unwrap();
        let t = demosaic_upsample(&raws_to_tensor(&[&raw]).unwrap());
        let plain = rawmark_core::raw::demosaic_upsample(&raw);
        // Tensor is [1, 4, H, W]; the plain route is HWC.
        let chw = values(&t);
        let (hh, ww) = (2 * h, 2 * w);
        for c in 0..4 {
            for y in 0..hh {
                for x in 0..ww {
                    prop_assert_eq!(chw[(c * hh + y) * ww + x], plain.get(y, x, c));
                }
            }
        }
    }
}

#[test]
fn identity_knobs_leave_the_image_alone() {
    let rgb = develop_deep(&tiny_bundle(), &[cover(0), cover(1)]).unwrap();
    let x = rgbs_to_tensor(&rgb.iter().collect::<Vec<_>>()).unwrap();
    let params = [DistortionParams::identity(); 2];
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for kind in DistortionKind::ALL {
        if kind == DistortionKind::Jpeg {
            continue;
        }
        let y = apply_single(kind, &x, &params, &mut rng).unwrap();
        let diff = (y - &x).abs().max().double_value(&[]);
        assert!(diff < 1e-5, "{kind}: {diff}");
    }
}

#[test]
fn a_saved_bundle_embeds_and_extracts_exactly_like_the_original() {
    tch::manual_seed(3);
    let bundle = tiny_bundle();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("b.bundle");
    save_bundle(&bundle, &path).unwrap();
    let reloaded = load_bundle(&path).unwrap();
    assert_eq!(reloaded.config, bundle.config);
    assert_eq!(reloaded.isp_hash().unwrap(), bundle.isp_hash().unwrap());

    let covers = [cover(2), cover(3)];
    let payloads = [Payload::from_bytes([1, 2, 3, 4, 5, 6, 7]), Payload::from_bytes([0xff; 7])];
    let run = |b: &ModelBundle| {
        let marked = embed(b, &covers, &payloads).unwrap();
        let rgb = develop_deep(b, &marked).unwrap();
        let out = extract(b, &rgb).unwrap();
        (marked, rgb, out.into_iter().map(|e| e.message).collect::<Vec<_>>())
    };
    assert_eq!(run(&bundle), run(&reloaded));
}
