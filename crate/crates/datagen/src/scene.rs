//! Procedural clean images: a lit gradient background with overlapping
//! geometric shapes and a little texture.

use rand::Rng;

use crate::degrade::rng;
use crate::image::Image;

/// Clean scenes are re-drawn until their mean luma reaches this, which keeps
/// fully darkened composites visible.
pub const MIN_SCENE_LUMINANCE: f64 = 0.35;

fn color(r: &mut impl Rng, lo: f64, hi: f64) -> [f64; 3] {
    [r.gen_range(lo..hi), r.gen_range(lo..hi), r.gen_range(lo..hi)]
}

fn mix(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [
        a[0] + (b[0] - a[0]) * t,
        a[1] + (b[1] - a[1]) * t,
        a[2] + (b[2] - a[2]) * t,
    ]
}

enum Shape {
    Rect { y0: f64, x0: f64, y1: f64, x1: f64 },
    Disc { cy: f64, cx: f64, r: f64 },
    Stripe { nx: f64, ny: f64, offset: f64, width: f64 },
}

impl Shape {
    fn contains(&self, y: f64, x: f64) -> bool {
        match *self {
            Shape::Rect { y0, x0, y1, x1 } => y >= y0 && y < y1 && x >= x0 && x < x1,
            Shape::Disc { cy, cx, r } => (y - cy).powi(2) + (x - cx).powi(2) <= r * r,
            Shape::Stripe { nx, ny, offset, width } => (x * nx + y * ny - offset).abs() <= width / 2.0,
        }
    }
}

fn draw(h: usize, w: usize, r: &mut impl Rng) -> Image {
    let (hf, wf) = (h as f64, w as f64);
    let top = color(r, 0.35, 0.95);
    let bottom = color(r, 0.2, 0.8);
    let mut img = Image::new(h, w);
    for y in 0..h {
        let c = mix(top, bottom, y as f64 / (hf - 1.0).max(1.0));
        for x in 0..w {
            for (k, v) in c.iter().enumerate() {
                img.set(y, x, k, *v);
            }
        }
    }
    let count = r.gen_range(3..9);
    for _ in 0..count {
        let shape = match r.gen_range(0..3) {
            0 => {
                let (y0, x0) = (r.gen_range(0.0..hf * 0.8), r.gen_range(0.0..wf * 0.8));
                Shape::Rect {
                    y0,
                    x0,
                    y1: y0 + r.gen_range(0.1..0.5) * hf,
                    x1: x0 + r.gen_range(0.1..0.5) * wf,
                }
            }
            1 => Shape::Disc {
                cy: r.gen_range(0.0..hf),
                cx: r.gen_range(0.0..wf),
                r: r.gen_range(0.05..0.25) * hf.min(wf),
            },
            _ => {
                let a: f64 = r.gen_range(0.0..std::f64::consts::PI);
                Shape::Stripe {
                    nx: a.cos(),
                    ny: a.sin(),
                    offset: r.gen_range(0.0..hf.max(wf)),
                    width: r.gen_range(1.5..(0.12 * hf.max(wf)).max(2.0)),
                }
            }
        };
        let a = color(r, 0.1, 1.0);
        let b = color(r, 0.1, 1.0);
        let (gy, gx) = (r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0));
        for y in 0..h {
            for x in 0..w {
                let (yf, xf) = (y as f64 + 0.5, x as f64 + 0.5);
                if shape.contains(yf, xf) {
                    let t = (0.5 + 0.5 * (gy * yf / hf + gx * xf / wf)).clamp(0.0, 1.0);
                    for (k, v) in mix(a, b, t).iter().enumerate() {
                        img.set(y, x, k, *v);
                    }
                }
            }
        }
    }
    let amp = r.gen_range(0.0..0.03);
    for v in img.data.iter_mut() {
        *v += amp * r.gen_range(-1.0..1.0);
    }
    img.clamp01()
}

/// Deterministic scene for `(seed, stream)`, quantised to 8 bits so that it
/// round-trips through PPM unchanged.
pub fn generate_scene(h: usize, w: usize, seed: u64, stream: u64) -> Image {
    let mut r = rng(seed, stream);
    loop {
        let img = draw(h, w, &mut r).quantized();
        if img.mean_luminance() >= MIN_SCENE_LUMINANCE {
            return img;
        }
    }
}
