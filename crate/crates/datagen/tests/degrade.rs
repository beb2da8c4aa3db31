use proptest::prelude::*;
use rfir_datagen::degrade::{
    apply, apply_blur, apply_haze, apply_lowlight, apply_rain, apply_rain_logged, apply_snow, apply_snow_mask,
    haze_blend, haze_transmission, motion_kernel, snow_mask, HAZE_MIN_TRANSMISSION,
};
use rfir_datagen::image::{decode_ppm, encode_ppm};
use rfir_datagen::prompt::remove_all_prompt;
use rfir_datagen::scene::generate_scene;
use rfir_datagen::{compose_sample, gen_prompt, render, DegradationSpec, Image, Kind, PromptStyle};

fn scene(seed: u64) -> Image {
    generate_scene(32, 32, seed, 0)
}

fn spec(kind: Kind, beta: f64, gamma: f64) -> DegradationSpec {
    DegradationSpec {
        kind,
        alpha: 11,
        beta,
        gamma,
        rng_stream: 7,
    }
}

#[test]
fn zero_severity_is_exact_identity() {
    let img = scene(1);
    for kind in Kind::ALL {
        assert_eq!(apply(&img, &spec(kind, 0.0, 33.0)), img, "{kind}");
    }
}

#[test]
fn lowlight_closed_form_and_monotone() {
    let ones = Image::filled(4, 4, 1.0);
    assert!(apply_lowlight(&ones, 1.0)
        .data
        .iter()
        .all(|&v| (v - 0.15).abs() < 1e-12));
    let img = scene(2);
    let lum: Vec<f64> = [0.0, 0.25, 0.5, 0.75, 1.0]
        .iter()
        .map(|&b| apply_lowlight(&img, b).mean_luminance())
        .collect();
    assert!(lum.windows(2).all(|w| w[1] <= w[0]));
}

/// Direct 2-D correlation with edge replication.
fn convolve_oracle(img: &Image, size: usize, k: &[f64]) -> Image {
    let r = (size / 2) as i64;
    let mut out = Image::new(img.height, img.width);
    for y in 0..img.height as i64 {
        for x in 0..img.width as i64 {
            for c in 0..3 {
                let mut acc = 0.0;
                for ky in 0..size as i64 {
                    for kx in 0..size as i64 {
                        let sy = (y + ky - r).clamp(0, img.height as i64 - 1) as usize;
                        let sx = (x + kx - r).clamp(0, img.width as i64 - 1) as usize;
                        acc += k[(ky * size as i64 + kx) as usize] * img.get(sy, sx, c);
                    }
                }
                out.set(y as usize, x as usize, c, acc);
            }
        }
    }
    out
}

#[test]
fn blur_white_pixel_gives_five_pixel_streak() {
    let mut img = Image::new(21, 21);
    for c in 0..3 {
        img.set(10, 10, c, 1.0);
    }
    let beta = 4.0 / 14.0;
    let out = apply_blur(&img, beta, 0.0);
    for y in 0..21 {
        for x in 0..21 {
            let want = if y == 10 && (8..=12).contains(&x) { 0.2 } else { 0.0 };
            assert!((out.get(y, x, 0) - want).abs() < 1e-12, "({y},{x})");
        }
    }
}

#[test]
fn blur_matches_direct_convolution_and_preserves_constants() {
    let img = scene(3);
    for (beta, gamma) in [(0.3, 0.0), (0.5, 37.0), (0.9, 90.0), (1.0, 151.0)] {
        let (size, k) = motion_kernel(beta, gamma);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let a = apply_blur(&img, beta, gamma);
        let b = convolve_oracle(&img, size, &k);
        assert!(a.data.iter().zip(&b.data).all(|(p, q)| (p - q).abs() < 1e-12));
        let flat = Image::filled(9, 9, 0.37);
        assert!(apply_blur(&flat, beta, gamma)
            .data
            .iter()
            .all(|&v| (v - 0.37).abs() < 1e-12));
    }
    let (size, k) = motion_kernel(1.0, 90.0);
    assert_eq!(size, 15);
    assert!((0..15).all(|y| (k[y * 15 + 7] - 1.0 / 15.0).abs() < 1e-15));
    let (_, k) = motion_kernel(1.0, 45.0);
    assert!(k.iter().all(|&v| ((v * 15.0).round() - v * 15.0).abs() < 1e-12));
}

#[test]
fn haze_closed_form() {
    assert!((haze_blend(0.1, 0.5) - 0.5).abs() < 1e-12);
    let t = haze_transmission(16, 16, 0.0, 0.3);
    assert!(t.iter().all(|&v| v == 1.0));
    let img = scene(4);
    let t = haze_transmission(32, 32, 0.8, 0.3);
    let out = apply_haze(&img, 0.8, 0.3);
    for (i, &v) in out.data.iter().enumerate() {
        assert!((v - (img.data[i] * t[i / 3] + 0.9 * (1.0 - t[i / 3]))).abs() < 1e-12);
    }
    assert!(t.iter().any(|&v| v < 0.99));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn haze_transmission_respects_floor(beta in 0.0f64..=1.0, gamma in 0.0f64..1.0) {
        let t = haze_transmission(16, 16, beta, gamma);
        prop_assert!(t.iter().all(|&v| (HAZE_MIN_TRANSMISSION..=1.0).contains(&v)));
    }

    #[test]
    fn snow_coverage_is_capped(alpha in any::<u64>(), beta in 0.0f64..=1.0) {
        let m = snow_mask(32, 32, alpha, beta);
        let coverage = m.iter().sum::<f64>() / m.len() as f64;
        prop_assert!(coverage <= 0.15 + 1e-12);
        prop_assert!(m.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}

#[test]
fn rain_streak_count_and_brightening() {
    let img = Image::filled(64, 64, 0.1);
    for beta in [0.0, 0.2, 0.5, 0.9, 1.0] {
        let (_, n) = apply_rain_logged(&img, beta, 10.0, 3);
        assert_eq!(n, (beta * 120.0 * 4096.0 / 16384.0_f64).round() as usize);
    }
    let lum: Vec<f64> = [0.0, 0.25, 0.5, 0.75, 1.0]
        .iter()
        .map(|&b| apply_rain(&img, b, -15.0, 4).mean_luminance())
        .collect();
    assert!(lum.windows(2).all(|w| w[1] >= w[0]), "{lum:?}");
    assert!(lum[4] > lum[0]);
}

#[test]
fn snow_determinism_and_zero_mask() {
    let img = scene(5);
    assert_eq!(apply_snow_mask(&img, &vec![0.0; 32 * 32]), img);
    assert_eq!(snow_mask(32, 32, 99, 0.7), snow_mask(32, 32, 99, 0.7));
    assert_ne!(snow_mask(32, 32, 99, 0.7), snow_mask(32, 32, 100, 0.7));
    assert_eq!(apply_snow(&img, 99, 0.7), apply_snow(&img, 99, 0.7));
}

#[test]
fn compose_rules() {
    let clean = scene(6);
    let rain = spec(Kind::Rain, 0.6, 5.0);
    let low = spec(Kind::Lowlight, 0.7, 0.0);

    let (_, gt) = compose_sample(&clean, &[rain], &[Kind::Rain]).unwrap();
    assert_eq!(gt, clean);

    let (degraded, gt) = compose_sample(&clean, &[rain, low], &[Kind::Rain]).unwrap();
    assert_eq!(gt, apply_lowlight(&clean, 0.7));
    assert_eq!(degraded, apply_lowlight(&apply_rain(&clean, 0.6, 5.0, 7), 0.7));

    let again = compose_sample(&clean, &[low, rain], &[Kind::Rain]).unwrap();
    assert_eq!(again.0.to_bytes(), degraded.to_bytes());

    assert!(compose_sample(&clean, &[rain], &[]).is_err());
    assert!(compose_sample(&clean, &[rain], &[Kind::Snow]).is_err());
    assert!(render(&clean, &[rain, rain]).is_err());
    assert!(render(&clean, &[spec(Kind::Haze, 1.5, 0.0)]).is_err());
}

#[test]
fn composition_order_is_canonical() {
    let clean = scene(7);
    let specs = [
        spec(Kind::Lowlight, 0.5, 0.0),
        spec(Kind::Blur, 0.5, 20.0),
        spec(Kind::Snow, 0.5, 0.0),
        spec(Kind::Rain, 0.5, 3.0),
        spec(Kind::Haze, 0.5, 0.4),
    ];
    let mut manual = clean.clone();
    for k in [Kind::Haze, Kind::Rain, Kind::Snow, Kind::Blur, Kind::Lowlight] {
        manual = apply(&manual, specs.iter().find(|s| s.kind == k).unwrap());
    }
    assert_eq!(render(&clean, &specs).unwrap(), manual);
    assert!(manual.mean_luminance() >= 0.05);
}

#[test]
fn prompt_templates() {
    use Kind::*;
    assert_eq!(
        gen_prompt(&[Rain, Lowlight], &[Rain, Lowlight], PromptStyle::Single).unwrap(),
        "Remove rain, lowlight."
    );
    assert_eq!(
        gen_prompt(&[Blur], &[Blur], PromptStyle::Two).unwrap(),
        "There are blur in the image. Remove blur."
    );
    assert_eq!(
        gen_prompt(&[Rain, Lowlight], &[Lowlight, Rain], PromptStyle::Single).unwrap(),
        "Remove rain, lowlight."
    );
    assert_eq!(
        gen_prompt(&[Snow, Haze, Rain], &[Snow], PromptStyle::Two).unwrap(),
        "There are rain, haze, snow in the image. Remove snow."
    );
    assert!(gen_prompt(&[Rain], &[], PromptStyle::Single).is_err());
    assert_eq!(remove_all_prompt(), "Remove blur, rain, haze, lowlight, snow.");
}

#[test]
fn kinds_follow_the_model_label_order() {
    let names: Vec<&str> = Kind::ALL.iter().map(|k| k.name()).collect();
    assert_eq!(names, rfir_core::text::KINDS);
    for (i, k) in Kind::ALL.iter().enumerate() {
        assert_eq!(k.label(), i);
        assert_eq!(k.name().parse::<Kind>().unwrap(), *k);
    }
}

#[test]
fn ppm_round_trip_and_errors() {
    let img = scene(8);
    let bytes = encode_ppm(&img);
    assert!(bytes.starts_with(b"P6\n32 32\n255\n"));
    assert_eq!(decode_ppm(&bytes, "x").unwrap(), img);
    let commented = [b"P6\n# note\n32 32\n255\n".as_slice(), &img.to_bytes()].concat();
    assert_eq!(decode_ppm(&commented, "x").unwrap(), img);
    assert!(decode_ppm(b"P3\n1 1\n255\n0 0 0", "x").is_err());
    assert!(decode_ppm(&bytes[..bytes.len() - 1], "x").is_err());
    assert!(decode_ppm(b"P6\n1 1\n65535\n", "x").is_err());
}

#[test]
fn scenes_are_deterministic_and_visible() {
    assert_eq!(generate_scene(64, 64, 1, 2), generate_scene(64, 64, 1, 2));
    assert_ne!(generate_scene(64, 64, 1, 2), generate_scene(64, 64, 1, 3));
    for s in 0..10 {
        let img = generate_scene(64, 64, 5, s);
        assert!(img.mean_luminance() >= 0.35);
        assert_eq!(img.quantized(), img);
    }
}
