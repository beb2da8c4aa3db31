//! Sample composition, category planning and the JSON-lines manifest.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::degrade::{render, rng, DegradationSpec, Kind, HAZE_MIN_TRANSMISSION};
use crate::error::{Error, Result};
use crate::image::{read_ppm, write_ppm, Image};
use crate::prompt::{gen_prompt, PromptStyle};
use crate::scene::generate_scene;
use rfir_core::config::{parse_kv, parse_list, parse_num};

/// Composites darker than this mean luma are rejected and redrawn.
pub const MIN_DEGRADED_LUMINANCE: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown split {s:?}")))
    }
}

/// `(present count, removed count)`, written `"p-r"`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Category {
    pub present: usize,
    pub removed: usize,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::new(1, 1),
        Category::new(2, 1),
        Category::new(2, 2),
        Category::new(3, 1),
        Category::new(3, 2),
        Category::new(3, 3),
    ];

    pub const fn new(present: usize, removed: usize) -> Self {
        Category { present, removed }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.present, self.removed)
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Category::ALL
            .into_iter()
            .find(|c| c.to_string() == s)
            .ok_or_else(|| Error::InvalidSample(format!("unknown category {s:?}")))
    }
}

impl Serialize for Category {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Category {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One manifest line. Image paths are relative to the manifest directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: usize,
    pub clean: String,
    pub degraded: String,
    pub gt: String,
    pub present: Vec<Kind>,
    pub removed: Vec<Kind>,
    pub specs: Vec<DegradationSpec>,
    pub prompt_single: String,
    pub prompt_two: String,
    pub split: Split,
    pub category: Category,
}

impl SampleRecord {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSample(format!("record {}: {m}", self.id)));
        if self.removed.is_empty() {
            return bad("empty removal set".into());
        }
        if let Some(k) = self.removed.iter().find(|k| !self.present.contains(k)) {
            return bad(format!("removed {k} is not present"));
        }
        let mut kinds = self.present.clone();
        kinds.sort();
        kinds.dedup();
        if kinds.len() != self.present.len() {
            return bad("duplicate present kinds".into());
        }
        let mut spec_kinds: Vec<Kind> = self.specs.iter().map(|s| s.kind).collect();
        spec_kinds.sort();
        if spec_kinds != kinds {
            return bad("specs do not match the present set".into());
        }
        if self.category != Category::new(self.present.len(), self.removed.len()) {
            return bad(format!(
                "category {} inconsistent with present/removed counts",
                self.category
            ));
        }
        Ok(())
    }

    /// Multi-hot vector over [`Kind::ALL`] of the present degradations.
    pub fn present_labels(&self) -> [f64; 5] {
        let mut y = [0.0; 5];
        for k in &self.present {
            y[k.label()] = 1.0;
        }
        y
    }

    pub fn prompt(&self, style: PromptStyle) -> &str {
        match style {
            PromptStyle::Single => &self.prompt_single,
            PromptStyle::Two => &self.prompt_two,
        }
    }

    /// Specs of the degradations that stay in the ground truth.
    pub fn kept_specs(&self) -> Vec<DegradationSpec> {
        self.specs
            .iter()
            .filter(|s| !self.removed.contains(&s.kind))
            .copied()
            .collect()
    }
}

/// Renders the degraded image (all specs) and the ground truth (specs not
/// being removed), both in composition order with identical parameters.
pub fn compose_sample(clean: &Image, specs: &[DegradationSpec], removed: &[Kind]) -> Result<(Image, Image)> {
    if removed.is_empty() {
        return Err(Error::InvalidSample("empty removal set".into()));
    }
    if let Some(k) = removed.iter().find(|k| !specs.iter().any(|s| s.kind == **k)) {
        return Err(Error::InvalidSample(format!("removed {k} is not present")));
    }
    let degraded = render(clean, specs)?;
    let kept: Vec<DegradationSpec> = specs.iter().filter(|s| !removed.contains(&s.kind)).copied().collect();
    let gt = render(clean, &kept)?;
    Ok((degraded, gt))
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatagenConfig {
    pub count: usize,
    pub image_size: usize,
    /// Share of samples with one, two and three degradations.
    pub groups: [f64; 3],
    /// Within two-degradation samples: remove one, remove both.
    pub two_split: [f64; 2],
    /// Within three-degradation samples: remove one, two, all three.
    pub three_split: [f64; 3],
    /// Train / val / test fractions.
    pub splits: [f64; 3],
    pub beta_min: f64,
    pub beta_max: f64,
    /// Directory of P6 clean images; procedural scenes when `None`.
    pub clean_dir: Option<PathBuf>,
}

impl Default for DatagenConfig {
    fn default() -> Self {
        DatagenConfig {
            count: 500,
            image_size: 64,
            groups: [0.476, 0.381, 0.143],
            two_split: [0.8, 0.2],
            three_split: [0.4, 0.4, 0.2],
            splits: [0.8, 0.1, 0.1],
            beta_min: 0.3,
            beta_max: 0.9,
            clean_dir: None,
        }
    }
}

fn fixed<const N: usize>(key: &str, value: &str) -> Result<[f64; N]> {
    let v: Vec<f64> = parse_list(key, value)?;
    v.try_into()
        .map_err(|_| Error::Config(format!("{key} needs {N} comma-separated numbers")))
}

impl DatagenConfig {
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "count" => self.count = parse_num(key, value)?,
            "image_size" => self.image_size = parse_num(key, value)?,
            "groups" => self.groups = fixed(key, value)?,
            "two_split" => self.two_split = fixed(key, value)?,
            "three_split" => self.three_split = fixed(key, value)?,
            "splits" => self.splits = fixed(key, value)?,
            "beta_range" => [self.beta_min, self.beta_max] = fixed(key, value)?,
            "clean_dir" => self.clean_dir = (!value.is_empty()).then(|| PathBuf::from(value)),
            _ => return Err(Error::Config(format!("unknown datagen key {key:?}"))),
        }
        Ok(())
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (k, v) in parse_kv(text)? {
            cfg.apply_kv(&k, &v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_kv(&self) -> String {
        let list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        [
            format!("count={}", self.count),
            format!("image_size={}", self.image_size),
            format!("groups={}", list(&self.groups)),
            format!("two_split={}", list(&self.two_split)),
            format!("three_split={}", list(&self.three_split)),
            format!("splits={}", list(&self.splits)),
            format!("beta_range={},{}", self.beta_min, self.beta_max),
            format!(
                "clean_dir={}",
                self.clean_dir
                    .as_ref()
                    .map(|p| p.display().to_string())
                    .unwrap_or_default()
            ),
        ]
        .join("\n")
    }

    pub fn validate(&self) -> Result<()> {
        let weights_ok = |w: &[f64]| w.iter().all(|&x| x >= 0.0 && x.is_finite()) && w.iter().sum::<f64>() > 0.0;
        if !(weights_ok(&self.groups)
            && weights_ok(&self.two_split)
            && weights_ok(&self.three_split)
            && weights_ok(&self.splits))
        {
            return Err(Error::Config(
                "proportions must be non-negative with a positive sum".into(),
            ));
        }
        if !(0.0 <= self.beta_min && self.beta_min <= self.beta_max && self.beta_max <= 1.0) {
            return Err(Error::Config(format!(
                "beta range [{}, {}] not within [0, 1]",
                self.beta_min, self.beta_max
            )));
        }
        if self.image_size == 0 || !self.image_size.is_multiple_of(8) {
            return Err(Error::Config(format!(
                "image size {} must be a positive multiple of 8",
                self.image_size
            )));
        }
        Ok(())
    }
}

/// Integer allocation of `total` proportional to `weights`: floor shares,
/// then the largest remainders (ties to the lower index) get one more.
pub fn largest_remainder(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut out: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        (exact[b] - exact[b].floor())
            .total_cmp(&(exact[a] - exact[a].floor()))
            .then(a.cmp(&b))
    });
    let short = total - out.iter().sum::<usize>();
    for &i in order.iter().take(short) {
        out[i] += 1;
    }
    out
}

/// Per-category sample counts for a run.
pub fn category_counts(cfg: &DatagenConfig) -> BTreeMap<Category, usize> {
    let g = largest_remainder(cfg.count, &cfg.groups);
    let two = largest_remainder(g[1], &cfg.two_split);
    let three = largest_remainder(g[2], &cfg.three_split);
    let counts = [g[0], two[0], two[1], three[0], three[1], three[2]];
    Category::ALL.into_iter().zip(counts).collect()
}

const PLAN_STREAM: u64 = 0x9A11;
const SAMPLE_SALT: u64 = 0x5A3D_17C0_44E1_0B29;
const SCENE_SALT: u64 = 0x0C1E_A4F0_B3D2_9E61;

/// What a sample is before its degradation parameters are drawn.
#[derive(Clone, Copy, Debug)]
struct Slot {
    category: Category,
    single: Option<Kind>,
    split: Split,
}

fn plan(cfg: &DatagenConfig, seed: u64) -> Vec<Slot> {
    let mut r = rng(seed, PLAN_STREAM);
    let counts = category_counts(cfg);
    let mut cats: Vec<Category> = counts.iter().flat_map(|(&c, &n)| std::iter::repeat_n(c, n)).collect();
    cats.shuffle(&mut r);

    let n_single = counts[&Category::new(1, 1)];
    let mut singles: Vec<Kind> = (0..n_single).map(|i| Kind::ALL[i % Kind::ALL.len()]).collect();
    singles.shuffle(&mut r);
    let mut singles = singles.into_iter();

    let mut slots: Vec<Slot> = cats
        .into_iter()
        .map(|category| Slot {
            category,
            single: if category.present == 1 { singles.next() } else { None },
            split: Split::Train,
        })
        .collect();

    // Walk samples grouped by category (and by kind for singles) and hand out
    // splits to whichever is furthest behind its quota, so every group is
    // split in proportion and the totals are exact.
    let mut order: Vec<usize> = (0..slots.len()).collect();
    order.sort_by_key(|&i| (slots[i].category, slots[i].single, i));
    let frac_sum: f64 = cfg.splits.iter().sum();
    let frac: Vec<f64> = cfg.splits.iter().map(|f| f / frac_sum).collect();
    let mut given = [0usize; 3];
    for (j, &i) in order.iter().enumerate() {
        let s = (0..3)
            .max_by(|&a, &b| {
                let da = (j + 1) as f64 * frac[a] - given[a] as f64;
                let db = (j + 1) as f64 * frac[b] - given[b] as f64;
                da.total_cmp(&db).then(b.cmp(&a))
            })
            .unwrap();
        given[s] += 1;
        slots[i].split = Split::ALL[s];
    }
    slots
}

fn draw_spec(kind: Kind, cfg: &DatagenConfig, r: &mut impl Rng) -> DegradationSpec {
    let beta = if cfg.beta_max > cfg.beta_min {
        r.gen_range(cfg.beta_min..cfg.beta_max)
    } else {
        cfg.beta_min
    };
    let feature: f64 = r.gen_range(0.0..1.0);
    let gamma = match kind {
        Kind::Blur => 180.0 * feature,
        Kind::Rain => -20.0 + 40.0 * feature,
        Kind::Haze => feature,
        Kind::Lowlight | Kind::Snow => 0.0,
    };
    DegradationSpec {
        kind,
        alpha: r.gen(),
        beta,
        gamma,
        rng_stream: r.gen(),
    }
}

fn pick(r: &mut impl Rng, from: &[Kind], n: usize) -> Vec<Kind> {
    let mut k: Vec<Kind> = from.choose_multiple(r, n).copied().collect();
    k.sort();
    k
}

/// A generated sample held in memory.
#[derive(Clone, Debug)]
pub struct Sample {
    pub record: SampleRecord,
    pub clean: Image,
    pub degraded: Image,
    pub gt: Image,
}

fn image_names(id: usize) -> [String; 3] {
    ["clean", "degraded", "gt"].map(|s| format!("images/{id:06}_{s}.ppm"))
}

fn make_sample(cfg: &DatagenConfig, seed: u64, id: usize, slot: Slot, clean: Image) -> Result<Sample> {
    let mut r = rng(seed ^ SAMPLE_SALT, id as u64);
    let cat = slot.category;
    for _attempt in 0..64 {
        let present = match slot.single {
            Some(k) => vec![k],
            None => pick(&mut r, &Kind::ALL, cat.present),
        };
        let removed = pick(&mut r, &present, cat.removed);
        let specs: Vec<DegradationSpec> = present.iter().map(|&k| draw_spec(k, cfg, &mut r)).collect();
        let (degraded, gt) = compose_sample(&clean, &specs, &removed)?;
        let (degraded, gt) = (degraded.quantized(), gt.quantized());
        if degraded.mean_luminance() < MIN_DEGRADED_LUMINANCE {
            continue;
        }
        let [c, d, g] = image_names(id);
        let record = SampleRecord {
            id,
            clean: c,
            degraded: d,
            gt: g,
            prompt_single: gen_prompt(&present, &removed, PromptStyle::Single)?,
            prompt_two: gen_prompt(&present, &removed, PromptStyle::Two)?,
            present,
            removed,
            specs,
            split: slot.split,
            category: cat,
        };
        return Ok(Sample {
            record,
            clean,
            degraded,
            gt,
        });
    }
    Err(Error::InvalidSample(format!(
        "sample {id}: no composite passed the visibility guard"
    )))
}

fn load_clean_pool(cfg: &DatagenConfig) -> Result<Option<Vec<Image>>> {
    let Some(dir) = &cfg.clean_dir else { return Ok(None) };
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("ppm")));
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Config(format!("no .ppm clean images in {}", dir.display())));
    }
    let s = cfg.image_size;
    paths
        .iter()
        .map(|p| Ok(read_ppm(p)?.center_crop(s, s)?.quantized()))
        .collect::<Result<Vec<_>>>()
        .map(Some)
}

/// Generates every sample in memory, in id order.
pub fn generate(cfg: &DatagenConfig, seed: u64) -> Result<Vec<Sample>> {
    cfg.validate()?;
    let pool = load_clean_pool(cfg)?;
    let s = cfg.image_size;
    plan(cfg, seed)
        .into_iter()
        .enumerate()
        .map(|(id, slot)| {
            let clean = match &pool {
                Some(p) => p[id % p.len()].clone(),
                None => generate_scene(s, s, seed ^ SCENE_SALT, id as u64),
            };
            make_sample(cfg, seed, id, slot, clean)
        })
        .collect()
}

pub const MANIFEST_NAME: &str = "manifest.jsonl";

/// Writes images and `manifest.jsonl` under `out`; returns the records.
pub fn build_dataset(cfg: &DatagenConfig, seed: u64, out: &Path) -> Result<Vec<SampleRecord>> {
    let samples = generate(cfg, seed)?;
    std::fs::create_dir_all(out.join("images"))?;
    let mut manifest = BufWriter::new(std::fs::File::create(out.join(MANIFEST_NAME))?);
    let mut records = Vec::with_capacity(samples.len());
    for s in samples {
        let r = s.record;
        write_ppm(out.join(&r.clean), &s.clean)?;
        write_ppm(out.join(&r.degraded), &s.degraded)?;
        write_ppm(out.join(&r.gt), &s.gt)?;
        writeln!(manifest, "{}", serde_json::to_string(&r).expect("records serialise"))?;
        records.push(r);
    }
    manifest.flush()?;
    log::info!("wrote {} samples to {}", records.len(), out.display());
    Ok(records)
}

/// Parses and validates a manifest. An empty manifest is an error.
pub fn read_manifest(path: &Path) -> Result<Vec<SampleRecord>> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in f.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r: SampleRecord = serde_json::from_str(&line).map_err(|e| Error::Manifest {
            line: i + 1,
            msg: e.to_string(),
        })?;
        r.validate().map_err(|e| Error::Manifest {
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push(r);
    }
    if out.is_empty() {
        return Err(Error::Manifest {
            line: 0,
            msg: "empty manifest".into(),
        });
    }
    Ok(out)
}

/// Loaded `(degraded, gt)` pair of a record.
pub fn load_pair(root: &Path, r: &SampleRecord) -> Result<(Image, Image)> {
    Ok((read_ppm(root.join(&r.degraded))?, read_ppm(root.join(&r.gt))?))
}

/// Re-renders both stored images from the stored clean image and specs and
/// checks they match byte for byte.
pub fn verify_record(root: &Path, r: &SampleRecord) -> Result<()> {
    r.validate()?;
    let clean = read_ppm(root.join(&r.clean))?;
    let (degraded, gt) = compose_sample(&clean, &r.specs, &r.removed)?;
    let (stored_d, stored_g) = load_pair(root, r)?;
    if degraded.to_bytes() != stored_d.to_bytes() {
        return Err(Error::InvalidSample(format!(
            "record {}: degraded image does not re-render",
            r.id
        )));
    }
    if gt.to_bytes() != stored_g.to_bytes() {
        return Err(Error::InvalidSample(format!(
            "record {}: gt does not re-render from kept specs",
            r.id
        )));
    }
    for s in &r.specs {
        if s.kind == Kind::Haze {
            let t = crate::degrade::haze_transmission(clean.height, clean.width, s.beta, s.gamma);
            if t.iter().any(|&v| v < HAZE_MIN_TRANSMISSION) {
                return Err(Error::InvalidSample(format!(
                    "record {}: haze transmission below floor",
                    r.id
                )));
            }
        }
    }
    Ok(())
}
