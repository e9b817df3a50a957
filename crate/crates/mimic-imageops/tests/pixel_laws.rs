//! Dimension and identity laws over random images, plus codec round-trips.

use mimic_imageops::{load_image, pixel_reduce, resize, save_image, stitch_grid, PixelImage};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

fn random_image(rng: &mut ChaCha12Rng, max_side: u32) -> PixelImage {
    let w = rng.random_range(1..=max_side);
    let h = rng.random_range(1..=max_side);
    let data: Vec<u8> = (0..w as usize * h as usize * 3)
        .map(|_| rng.random())
        .collect();
    PixelImage::from_raw(w, h, data).unwrap()
}

#[test]
fn reduce_preserves_dimensions_and_factor_one_identity() {
    let mut rng = ChaCha12Rng::seed_from_u64(0x7069_7865);
    for _ in 0..100 {
        let img = random_image(&mut rng, 48);
        let factor = rng.random_range(1..10);
        let out = pixel_reduce(&img, factor).unwrap();
        assert_eq!(
            (out.image.width(), out.image.height()),
            (img.width(), img.height())
        );
        if factor == 1 {
            assert_eq!(out.image, img);
        }
        let identity = pixel_reduce(&img, 1).unwrap();
        assert_eq!(identity.image, img);
    }
}

#[test]
fn downscale_then_upscale_equals_pixel_reduce() {
    let mut rng = ChaCha12Rng::seed_from_u64(0x636f_6d70);
    for _ in 0..30 {
        let img = random_image(&mut rng, 40);
        let factor = rng.random_range(1..6);
        let via_reduce = pixel_reduce(&img, factor).unwrap().image;
        let dw = (img.width() / factor).max(1);
        let dh = (img.height() / factor).max(1);
        let via_resize = resize(&resize(&img, dw, dh).unwrap(), img.width(), img.height()).unwrap();
        assert_eq!(via_reduce, via_resize);
    }
}

#[test]
fn png_round_trip_is_lossless() {
    let mut rng = ChaCha12Rng::seed_from_u64(0x706e_6721);
    let dir = tempfile::tempdir().unwrap();
    for i in 0..5 {
        let img = random_image(&mut rng, 32);
        let path = dir.path().join(format!("img_{i}.png"));
        save_image(&img, &path).unwrap();
        assert_eq!(load_image(&path).unwrap(), img);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn resize_dimension_contract(
        sw in 1u32..64, sh in 1u32..64, dw in 1u32..96, dh in 1u32..96, seed in any::<u64>(),
    ) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let data: Vec<u8> = (0..sw as usize * sh as usize * 3).map(|_| rng.random()).collect();
        let img = PixelImage::from_raw(sw, sh, data).unwrap();
        let out = resize(&img, dw, dh).unwrap();
        prop_assert_eq!((out.width(), out.height()), (dw, dh));
    }

    #[test]
    fn stitch_dimension_contract(count in 1usize..12, tile in 1u32..40) {
        let imgs: Vec<PixelImage> = (0..count)
            .map(|i| PixelImage::filled(3 + i as u32, 5, [i as u8, 0, 0]).unwrap())
            .collect();
        let out = stitch_grid(&imgs, tile).unwrap();
        let cols = (count as f64).sqrt().ceil() as u32;
        let rows = (count as u32).div_ceil(cols);
        prop_assert_eq!((out.width(), out.height()), (cols * tile, rows * tile));
    }
}
