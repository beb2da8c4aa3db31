//! The five procedural degradations.
//!
//! Every degradation is a pure function of the image and its
//! [`DegradationSpec`]; re-rendering with the same spec is bit-identical.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

/// Degradation kinds; the discriminant is the label index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Blur,
    Rain,
    Haze,
    Lowlight,
    Snow,
}

impl Kind {
    /// Label order, also the order kinds are listed in prompts.
    pub const ALL: [Kind; 5] = [Kind::Blur, Kind::Rain, Kind::Haze, Kind::Lowlight, Kind::Snow];

    /// Order in which degradations are composed onto an image.
    pub const COMPOSITION_ORDER: [Kind; 5] = [Kind::Haze, Kind::Rain, Kind::Snow, Kind::Blur, Kind::Lowlight];

    pub fn name(self) -> &'static str {
        match self {
            Kind::Blur => "blur",
            Kind::Rain => "rain",
            Kind::Haze => "haze",
            Kind::Lowlight => "lowlight",
            Kind::Snow => "snow",
        }
    }

    pub fn label(self) -> usize {
        self as usize
    }

    fn composition_rank(self) -> usize {
        Self::COMPOSITION_ORDER.iter().position(|&k| k == self).unwrap()
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Kind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidSample(format!("unknown degradation kind {s:?}")))
    }
}

/// Parameters of one degradation instance.
///
/// `beta` is the severity in `[0, 1]`. `gamma` is the feature parameter:
/// motion angle in degrees for blur, slant in degrees for rain, and the seed
/// of the fog-centre layout for haze. `alpha` seeds the snow mask.
/// `rng_stream` drives any remaining randomness (rain streak placement).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegradationSpec {
    pub kind: Kind,
    pub alpha: u64,
    pub beta: f64,
    pub gamma: f64,
    pub rng_stream: u64,
}

impl DegradationSpec {
    pub fn new(kind: Kind, beta: f64) -> Self {
        DegradationSpec {
            kind,
            alpha: 0,
            beta,
            gamma: 0.0,
            rng_stream: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::InvalidSample(format!(
                "{} severity {} outside [0, 1]",
                self.kind, self.beta
            )));
        }
        if !self.gamma.is_finite() {
            return Err(Error::InvalidSample(format!(
                "{} feature parameter is not finite",
                self.kind
            )));
        }
        Ok(())
    }
}

pub(crate) fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Retained brightness at full low-light severity.
pub const LOWLIGHT_FLOOR: f64 = 0.15;

pub fn apply_lowlight(img: &Image, beta: f64) -> Image {
    if beta == 0.0 {
        return img.clone();
    }
    let k = 1.0 - (1.0 - LOWLIGHT_FLOOR) * beta;
    Image {
        data: img.data.iter().map(|v| v * k).collect(),
        ..*img
    }
}

pub const BLUR_MAX_EXTRA: f64 = 14.0;

/// Normalised linear motion kernel of length `1 + round(14 beta)` at
/// `gamma` degrees, as `(size, weights)` on an odd square grid.
pub fn motion_kernel(beta: f64, gamma: f64) -> (usize, Vec<f64>) {
    let len = 1 + (beta * BLUR_MAX_EXTRA).round() as i64;
    let (s, c) = gamma.to_radians().sin_cos();
    let first = -((len - 1) / 2);
    let taps: Vec<(i64, i64)> = (0..len)
        .map(|t| {
            let d = (first + t) as f64;
            ((d * s).round() as i64, (d * c).round() as i64)
        })
        .collect();
    let r = taps.iter().map(|&(dy, dx)| dy.abs().max(dx.abs())).max().unwrap_or(0);
    let size = (2 * r + 1) as usize;
    let mut k = vec![0.0; size * size];
    for (dy, dx) in taps {
        k[((dy + r) as usize) * size + (dx + r) as usize] += 1.0;
    }
    k.iter_mut().for_each(|v| *v /= len as f64);
    (size, k)
}

/// Motion blur with edge replication at the borders.
pub fn apply_blur(img: &Image, beta: f64, gamma: f64) -> Image {
    let (size, k) = motion_kernel(beta, gamma);
    if size == 1 {
        return img.clone();
    }
    let r = (size / 2) as i64;
    let taps: Vec<(i64, i64, f64)> = (0..size * size)
        .filter(|&i| k[i] != 0.0)
        .map(|i| ((i / size) as i64 - r, (i % size) as i64 - r, k[i]))
        .collect();
    let (h, w) = (img.height as i64, img.width as i64);
    let mut out = Image::new(img.height, img.width);
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0; 3];
            for &(dy, dx, wt) in &taps {
                let sy = (y + dy).clamp(0, h - 1) as usize;
                let sx = (x + dx).clamp(0, w - 1) as usize;
                let i = img.idx(sy, sx, 0);
                for (a, v) in acc.iter_mut().zip(&img.data[i..i + 3]) {
                    *a += wt * v;
                }
            }
            let o = out.idx(y as usize, x as usize, 0);
            out.data[o..o + 3].copy_from_slice(&acc);
        }
    }
    out
}

pub const HAZE_AIRLIGHT: f64 = 0.9;
pub const HAZE_MIN_TRANSMISSION: f64 = 0.25;

/// `t(x) = clamp(1 - beta G(x; gamma), 0.25, 1)` where `G` is a sum of
/// Gaussian blobs placed by `gamma`, normalised to peak at 1.
pub fn haze_transmission(h: usize, w: usize, beta: f64, gamma: f64) -> Vec<f64> {
    let mut r = rng(gamma.to_bits(), 0x4A2E);
    let blobs = 3 + r.gen_range(0..3);
    let scale = h.max(w) as f64;
    let params: Vec<(f64, f64, f64, f64)> = (0..blobs)
        .map(|_| {
            let cy = r.gen_range(0.0..h as f64);
            let cx = r.gen_range(0.0..w as f64);
            let sigma = r.gen_range(0.25..0.6) * scale;
            let amp = r.gen_range(0.5..1.0);
            (cy, cx, sigma, amp)
        })
        .collect();
    let mut g: Vec<f64> = (0..h * w)
        .map(|i| {
            let (y, x) = ((i / w) as f64 + 0.5, (i % w) as f64 + 0.5);
            params
                .iter()
                .map(|&(cy, cx, s, a)| a * (-((y - cy).powi(2) + (x - cx).powi(2)) / (2.0 * s * s)).exp())
                .sum()
        })
        .collect();
    let peak = g.iter().copied().fold(0.0, f64::max);
    if peak > 0.0 {
        g.iter_mut().for_each(|v| *v /= peak);
    }
    g.into_iter()
        .map(|v| (1.0 - beta * v).clamp(HAZE_MIN_TRANSMISSION, 1.0))
        .collect()
}

/// Atmospheric scattering: `v t + A (1 - t)`.
#[inline]
pub fn haze_blend(v: f64, t: f64) -> f64 {
    v * t + HAZE_AIRLIGHT * (1.0 - t)
}

pub fn apply_haze(img: &Image, beta: f64, gamma: f64) -> Image {
    if beta == 0.0 {
        return img.clone();
    }
    let t = haze_transmission(img.height, img.width, beta, gamma);
    Image {
        data: img
            .data
            .iter()
            .enumerate()
            .map(|(i, &v)| haze_blend(v, t[i / 3]))
            .collect(),
        ..*img
    }
}

pub const RAIN_STREAKS_PER_128: f64 = 120.0;
pub const RAIN_BRIGHTNESS: f64 = 0.8;
pub const RAIN_ALPHA: f64 = 0.6;

pub fn rain_streak_count(h: usize, w: usize, beta: f64) -> usize {
    let n_max = RAIN_STREAKS_PER_128 * (h * w) as f64 / (128.0 * 128.0);
    (beta * n_max).round() as usize
}

/// Anti-aliased rain mask in `[0, 1]` and the number of streaks drawn.
///
/// Streaks are drawn in a fixed sequence from `stream`, so a larger `beta`
/// draws a superset of the streaks of a smaller one.
pub fn rain_mask(h: usize, w: usize, beta: f64, gamma: f64, stream: u64) -> (Vec<f64>, usize) {
    let n = rain_streak_count(h, w, beta);
    let mut m = vec![0.0f64; h * w];
    let mut r = rng(stream, 0x7A1);
    let (s, c) = gamma.to_radians().sin_cos();
    for _ in 0..n {
        let len = r.gen_range(0.08..0.2) * h as f64;
        let y0 = r.gen_range(-len..h as f64);
        let x0 = r.gen_range(0.0..w as f64);
        let strength = r.gen_range(0.6..1.0);
        let steps = (2.0 * len).ceil() as usize;
        for k in 0..=steps {
            let d = len * k as f64 / steps as f64;
            let (py, px) = (y0 + d * c, x0 + d * s);
            let (fy, fx) = (py.floor(), px.floor());
            let (ty, tx) = (py - fy, px - fx);
            for (oy, wy) in [(0.0, 1.0 - ty), (1.0, ty)] {
                for (ox, wx) in [(0.0, 1.0 - tx), (1.0, tx)] {
                    let (yy, xx) = (fy + oy, fx + ox);
                    if yy < 0.0 || xx < 0.0 || yy >= h as f64 || xx >= w as f64 {
                        continue;
                    }
                    let i = yy as usize * w + xx as usize;
                    m[i] = m[i].max(strength * wy * wx * 2.0).min(1.0);
                }
            }
        }
    }
    (m, n)
}

/// Rain and the number of streaks rendered.
pub fn apply_rain_logged(img: &Image, beta: f64, gamma: f64, stream: u64) -> (Image, usize) {
    if beta == 0.0 {
        return (img.clone(), 0);
    }
    let (m, n) = rain_mask(img.height, img.width, beta, gamma, stream);
    let data = img
        .data
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let a = RAIN_ALPHA * m[i / 3];
            v * (1.0 - a) + RAIN_BRIGHTNESS * a
        })
        .collect();
    (Image { data, ..*img }, n)
}

pub fn apply_rain(img: &Image, beta: f64, gamma: f64, stream: u64) -> Image {
    apply_rain_logged(img, beta, gamma, stream).0
}

pub const SNOW_FLAKES_PER_128: f64 = 200.0;
pub const SNOW_MAX_COVERAGE: f64 = 0.15;

/// Feathered-ellipse snow mask seeded by `alpha`, with `round(beta * n_max)`
/// flakes and mean coverage scaled down to at most 15%.
pub fn snow_mask(h: usize, w: usize, alpha: u64, beta: f64) -> Vec<f64> {
    let n = (beta * SNOW_FLAKES_PER_128 * (h * w) as f64 / (128.0 * 128.0)).round() as usize;
    let mut m = vec![0.0f64; h * w];
    let mut r = rng(alpha, 0x5E0);
    let unit = h.min(w) as f64 / 64.0;
    for _ in 0..n {
        let cy = r.gen_range(0.0..h as f64);
        let cx = r.gen_range(0.0..w as f64);
        let ry = r.gen_range(0.7..2.2) * unit;
        let rx = r.gen_range(0.7..2.2) * unit;
        let theta: f64 = r.gen_range(0.0..std::f64::consts::PI);
        let opacity = r.gen_range(0.5..1.0);
        let (st, ct) = theta.sin_cos();
        let reach = rx.max(ry).ceil() as i64 + 1;
        for y in (cy as i64 - reach).max(0)..(cy as i64 + reach + 1).min(h as i64) {
            for x in (cx as i64 - reach).max(0)..(cx as i64 + reach + 1).min(w as i64) {
                let (dy, dx) = (y as f64 + 0.5 - cy, x as f64 + 0.5 - cx);
                let u = (dx * ct + dy * st) / rx;
                let v = (-dx * st + dy * ct) / ry;
                let rho = (u * u + v * v).sqrt();
                // Solid core out to 0.6, smooth falloff to zero at the rim.
                let t = ((1.0 - rho) / 0.4).clamp(0.0, 1.0);
                let val = opacity * t * t * (3.0 - 2.0 * t);
                let i = y as usize * w + x as usize;
                m[i] = m[i].max(val);
            }
        }
    }
    let coverage = m.iter().sum::<f64>() / (h * w).max(1) as f64;
    if coverage > SNOW_MAX_COVERAGE {
        let k = SNOW_MAX_COVERAGE / coverage;
        m.iter_mut().for_each(|v| *v *= k);
    }
    m
}

pub fn apply_snow_mask(img: &Image, mask: &[f64]) -> Image {
    Image {
        data: img
            .data
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let a = mask[i / 3];
                v * (1.0 - a) + a
            })
            .collect(),
        ..*img
    }
}

pub fn apply_snow(img: &Image, alpha: u64, beta: f64) -> Image {
    if beta == 0.0 {
        return img.clone();
    }
    apply_snow_mask(img, &snow_mask(img.height, img.width, alpha, beta))
}

pub fn apply(img: &Image, spec: &DegradationSpec) -> Image {
    match spec.kind {
        Kind::Lowlight => apply_lowlight(img, spec.beta),
        Kind::Blur => apply_blur(img, spec.beta, spec.gamma),
        Kind::Haze => apply_haze(img, spec.beta, spec.gamma),
        Kind::Rain => apply_rain(img, spec.beta, spec.gamma, spec.rng_stream),
        Kind::Snow => apply_snow(img, spec.alpha, spec.beta),
    }
}

/// Applies `specs` in composition order. Kinds must be distinct.
pub fn render(clean: &Image, specs: &[DegradationSpec]) -> Result<Image> {
    let mut sorted: Vec<&DegradationSpec> = specs.iter().collect();
    sorted.sort_by_key(|s| s.kind.composition_rank());
    for pair in sorted.windows(2) {
        if pair[0].kind == pair[1].kind {
            return Err(Error::InvalidSample(format!("duplicate degradation {}", pair[0].kind)));
        }
    }
    let mut img = clean.clone();
    for s in sorted {
        s.validate()?;
        img = apply(&img, s);
    }
    Ok(img)
}
