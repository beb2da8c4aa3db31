//! End-to-end acceptance run: one PASS/FAIL line per criterion.
//!
//! `RFIR_ACCEPTANCE=1,4,9` runs a subset. The process exits 0 so the rest of
//! a workspace test run still executes; set `RFIR_ACCEPTANCE_STRICT=1` to
//! exit 1 when any criterion fails.

use std::collections::BTreeMap;
use std::error::Error as StdError;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rfir_core::attention::{AttnConfig, Mhaca, Mhasa};
use rfir_core::bench::{attention_suite, AttentionKind, SuiteReport};
use rfir_core::blocks::{BlockConfig, Gdfn, HcBlock, MdpHead, GDFN_EXPANSION};
use rfir_core::gradcheck::{probe, probe_weights, GradCheck, GradReport};
use rfir_core::losses::bce_probs;
use rfir_core::metrics::{multilabel_accuracy, psnr, ssim};
use rfir_core::text::{TextConfig, TextEncoder, Vocab};
use rfir_core::{checkpoint, Conv2dSpec, Graph, Init, ModelConfig, Module, Tensor, TransRfir, Var};
use rfir_datagen::degrade::apply;
use rfir_datagen::prompt::remove_all_prompt;
use rfir_datagen::scene::generate_scene;
use rfir_datagen::{
    build_dataset, gen_prompt, read_manifest, verify_record, DatagenConfig, DegradationSpec, Image, Kind, PromptStyle,
    Split,
};
use rfir_train::optim::param_values;
use rfir_train::{evaluate, fit, init_model, load_split, restore_image, Example, TrainConfig, Weights};

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

type Res<T> = std::result::Result<T, Box<dyn StdError>>;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Res<Verdict> {
    Ok(Verdict {
        pass,
        detail: detail.into(),
    })
}

fn rel(got: f64, want: f64) -> f64 {
    (got - want) / want
}

fn within(got: f64, want: f64, tol: f64) -> bool {
    rel(got, want).abs() <= tol
}

const DATA_SEED: u64 = 1;
const DATA_COUNT: usize = 500;

fn data_cfg() -> DatagenConfig {
    DatagenConfig {
        count: DATA_COUNT,
        splits: [0.8, 0.2, 0.0],
        ..DatagenConfig::default()
    }
}

// 1. Gradients of every op and block at h = 1e-5 in f64.

fn gradients() -> Res<Verdict> {
    let t0 = Instant::now();
    let gc = GradCheck::default();
    let x = probe_weights(&[4, 4, 8], 9);
    let mut checks: Vec<(&str, GradReport)> = Vec::new();

    let ops = probe_weights(&[4, 6, 4], 80);
    checks.push((
        "conv",
        gc.inputs(
            &[ops.clone(), probe_weights(&[3, 4, 3, 3], 81), probe_weights(&[3], 82)],
            |_, v| probe(v[0].conv2d(&v[1], Some(&v[2]), Conv2dSpec::new(2, 1, 1))?, 3),
        )?,
    ));
    checks.push((
        "depthwise conv",
        gc.inputs(&[ops.clone(), probe_weights(&[4, 1, 3, 3], 83)], |_, v| {
            probe(v[0].conv2d(&v[1], None, Conv2dSpec::new(1, 1, 4))?, 4)
        })?,
    ));
    checks.push((
        "layer norm",
        gc.inputs(
            &[ops.clone(), probe_weights(&[4], 84), probe_weights(&[4], 85)],
            |_, v| probe(v[0].layer_norm(2, &v[1], &v[2], 1e-6)?, 5),
        )?,
    ));
    checks.push((
        "softmax",
        gc.inputs(std::slice::from_ref(&ops), |_, v| probe(v[0].softmax(1)?, 6))?,
    ));
    checks.push((
        "matmul",
        gc.inputs(&[probe_weights(&[3, 4], 86), probe_weights(&[4, 5], 87)], |_, v| {
            let y = v[0].matmul(&v[1])?;
            probe(y.add(&v[1].transpose()?.matmul_nt(&v[0])?.transpose()?)?, 7)
        })?,
    ));
    checks.push((
        "pixel shuffle",
        gc.inputs(std::slice::from_ref(&ops), |_, v| {
            probe(v[0].pixel_unshuffle(2)?.gelu().pixel_shuffle(2)?, 8)
        })?,
    ));
    checks.push((
        "pooling and resize",
        gc.inputs(std::slice::from_ref(&ops), |_, v| {
            probe(v[0].adaptive_avg_pool(3, 4)?.resize_bilinear(5, 3)?, 9)
        })?,
    ));
    checks.push((
        "elementwise",
        gc.inputs(
            &[ops.clone(), probe_weights(&[4, 6, 4], 88), probe_weights(&[4], 89)],
            |_, v| {
                let a = v[0].mul(&v[1])?.sigmoid().add(&v[0].gelu())?;
                let b = a.sub(&v[1].scale(0.3).exp())?.add_row(&v[2])?.mul_row(&v[2])?;
                probe(b.add_scalar(0.25).abs(), 10)
            },
        )?,
    ));
    checks.push((
        "shape ops",
        gc.inputs(&[ops.clone(), probe_weights(&[4, 2, 4], 90)], |_, v| {
            let c = Var::concat(&[v[0].narrow(1, 1, 3)?, v[1]], 1)?;
            probe(c.reshape(&[20, 4])?.transpose()?, 11)?.add(&c.mean())
        })?,
    ));
    checks.push((
        "gather",
        gc.inputs(&[probe_weights(&[5, 3], 91)], |_, v| {
            probe(v[0].gather_rows(&[4, 0, 4, 2])?, 12)
        })?,
    ));
    checks.push((
        "bce",
        gc.inputs(&[probe_weights(&[5], 92)], |_, v| {
            v[0].scale(3.0).bce_with_logits(&[1.0, 0.0, 1.0, 0.0, 0.0])
        })?,
    ));

    let cfg = AttnConfig::new(8, 2, (2, 2), (4, 4));
    let mut mhasa = Mhasa::<f64>::new(&mut Init::new(9), "mhasa", cfg)?;
    checks.push((
        "mhasa",
        gc.params(&mut mhasa, |m, g| probe(m.forward(g, g.constant(x.clone()))?, 13))?,
    ));
    let m = mhasa.clone();
    checks.push((
        "mhasa input",
        gc.inputs(std::slice::from_ref(&x), |g, v| probe(m.forward(g, v[0])?, 14))?,
    ));

    let t = probe_weights(&[5, 8], 20);
    let mut mhaca = Mhaca::<f64>::new(&mut Init::new(10), "mhaca", cfg.with_text_len(5))?;
    checks.push((
        "mhaca",
        gc.params(&mut mhaca, |m, g| {
            probe(m.forward(g, g.constant(x.clone()), g.constant(t.clone()))?, 15)
        })?,
    ));
    let m = mhaca.clone();
    checks.push((
        "mhaca inputs",
        gc.inputs(&[x.clone(), t.clone()], |g, v| probe(m.forward(g, v[0], v[1])?, 16))?,
    ));

    let mut gdfn = Gdfn::<f64>::new(&mut Init::new(11), "ffn", 8, 21);
    checks.push((
        "gdfn",
        gc.params(&mut gdfn, |m, g| probe(m.forward(g, g.constant(x.clone()))?, 17))?,
    ));

    let bcfg = BlockConfig {
        channels: 8,
        heads: 2,
        agent: (2, 2),
        expansion: GDFN_EXPANSION,
        resolution: (4, 4),
    };
    let mut blk = HcBlock::<f64>::new(&mut Init::new(12), "blk", bcfg)?;
    checks.push((
        "hcblock",
        gc.params(&mut blk, |m, g| probe(m.forward(g, g.constant(x.clone()))?, 18))?,
    ));

    let mut head = MdpHead::<f64>::new(&mut Init::new(13), "mdp", 8, 5)?;
    checks.push((
        "mdp",
        gc.params(&mut head, |m, g| probe(m.forward(g, g.constant(x.clone()))?, 19))?,
    ));

    let vocab = Vocab::prompt_grammar();
    let mut tcfg = TextConfig::new(vocab.len(), 6, 16, 8);
    tcfg.dim = 8;
    tcfg.heads = 2;
    tcfg.ffn = 12;
    let mut enc = TextEncoder::<f64>::new(&mut Init::new(14), "text", tcfg)?;
    let ids = vocab.tokenize("Remove rain, haze.", 6);
    checks.push((
        "text encoder",
        gc.params(&mut enc, |m, g| {
            let e = m.encode(g, &ids)?;
            probe(e.f_t1, 20)?.add(&probe(e.f_t2, 21)?)
        })?,
    ));

    let mut model = TransRfir::<f64>::new(ModelConfig::micro(), 10)?;
    let img = probe_weights(&[16, 16, 3], 11).map(|v| 0.5 + 0.25 * v);
    let ids = model.tokenize("There are rain, haze in the image. Remove rain.");
    let sparse = GradCheck {
        max_coords: 6,
        ..GradCheck::default()
    };
    checks.push((
        "micro model",
        sparse.params(&mut model, |m, g| {
            let out = m.restore(g, g.constant(img.clone()), &ids)?;
            probe(out.restored, 22)?.add(&probe(out.mdp_logits, 23)?)
        })?,
    ));

    let secs = t0.elapsed().as_secs_f64();
    let (name, worst) = checks
        .iter()
        .map(|(n, r)| (*n, r.max_rel_err()))
        .fold(("", 0.0), |a, b| if b.1 > a.1 { b } else { a });
    let tensors: usize = checks.iter().map(|(_, r)| r.tensors.len()).sum();
    verdict(
        worst < 1e-4 && secs < 120.0,
        format!(
            "{} checks, {tensors} tensors, max rel err {worst:.2e} ({name}) < 1e-4, {secs:.1}s < 120s",
            checks.len()
        ),
    )
}

// 2-5. Costs and scaling.

fn row<'a>(suite: &'a SuiteReport, label: &str, kind: AttentionKind) -> Res<&'a rfir_core::bench::CostReport> {
    suite
        .entries
        .iter()
        .find(|e| e.label == label && e.report.module == kind)
        .map(|e| &e.report)
        .ok_or_else(|| format!("missing {label} {kind} row").into())
}

fn mega(v: u64) -> f64 {
    v as f64 / 1e6
}

fn mhsa_costs(suite: &SuiteReport) -> Res<Verdict> {
    let s3 = row(suite, "stage3", AttentionKind::Mhsa)?;
    let s4 = row(suite, "stage4", AttentionKind::Mhsa)?;
    let (f3, f4) = (mega(s3.flops), mega(s4.flops));
    let (p3, p4) = (mega(s3.params), mega(s4.params));
    let pass =
        within(f3, 555.42, 0.01) && within(f4, 202.21, 0.01) && within(p3, 0.150, 0.03) && within(p4, 0.595, 0.03);
    verdict(
        pass,
        format!(
            "flops {f3:.2}M ({:+.2}%) / {f4:.2}M ({:+.2}%) within 1%, params {p3:.3}M ({:+.1}%) / {p4:.3}M ({:+.1}%) within 3%",
            100.0 * rel(f3, 555.42),
            100.0 * rel(f4, 202.21),
            100.0 * rel(p3, 0.150),
            100.0 * rel(p4, 0.595)
        ),
    )
}

fn mhasa_params(suite: &SuiteReport) -> Res<Verdict> {
    let s3 = row(suite, "stage3", AttentionKind::Mhasa)?;
    let s4 = row(suite, "stage4", AttentionKind::Mhasa)?;
    let (p3, p4) = (mega(s3.params), mega(s4.params));
    verdict(
        within(p3, 0.150, 0.03) && within(p4, 0.594, 0.03),
        format!(
            "params {p3:.3}M ({:+.1}%) / {p4:.3}M ({:+.1}%) within 3%; position encodings {} / {} reported separately",
            100.0 * rel(p3, 0.150),
            100.0 * rel(p4, 0.594),
            s3.pos_encoding_params,
            s4.pos_encoding_params
        ),
    )
}

fn scaling(suite: &SuiteReport) -> Res<Verdict> {
    let slope = |k: AttentionKind| -> Res<f64> {
        suite
            .scaling
            .iter()
            .find(|(kind, _)| *kind == k)
            .map(|(_, f)| f.slope)
            .ok_or_else(|| format!("missing {k} scaling fit").into())
    };
    let (a, s) = (slope(AttentionKind::Mhasa)?, slope(AttentionKind::Mhsa)?);
    let wall = suite
        .runtime_scaling
        .as_ref()
        .map(|(f, _)| f.slope)
        .ok_or("runtime scaling was not measured")?;
    verdict(
        (a - 1.0).abs() <= 0.05 && (s - 2.0).abs() <= 0.05 && wall < 1.5,
        format!("core-flop slopes mhasa {a:.3} (1.00 +/- 0.05), mhsa {s:.3} (2.00 +/- 0.05); mhasa wall-clock slope {wall:.3} < 1.5"),
    )
}

fn orderings(suite: &SuiteReport) -> Res<Verdict> {
    let a3 = row(suite, "stage3", AttentionKind::Mhasa)?;
    let s3 = row(suite, "stage3", AttentionKind::Mhsa)?;
    let a4 = row(suite, "stage4", AttentionKind::Mhasa)?;
    let ac = row(suite, "fusion", AttentionKind::Mhaca)?;
    let cr = row(suite, "fusion", AttentionKind::CrossAttention)?;
    let order = a3.flops < s3.flops && ac.flops < cr.flops;
    let bands = [
        ("mhasa s3", mega(a3.flops), 306.34),
        ("mhasa s4", mega(a4.flops), 304.20),
        ("mhaca", mega(ac.flops), 12.80),
    ];
    let mut detail = format!(
        "order mhasa {:.2}M < mhsa {:.2}M, mhaca {:.2}M < cross {:.2}M: {}; 35% bands:",
        mega(a3.flops),
        mega(s3.flops),
        mega(ac.flops),
        mega(cr.flops),
        if order { "ok" } else { "violated" }
    );
    let mut in_band = true;
    for (name, got, want) in bands {
        let ok = within(got, want, 0.35);
        in_band &= ok;
        detail += &format!(
            " {name} {got:.2}M vs {want} ({:+.1}%{})",
            100.0 * rel(got, want),
            if ok { "" } else { ", out" }
        );
    }
    verdict(order && in_band, detail)
}

// 6. Dataset reproducibility and composition.

fn files(dir: &Path) -> Res<BTreeMap<PathBuf, Vec<u8>>> {
    let mut out = BTreeMap::new();
    for sub in [dir.to_path_buf(), dir.join("images")] {
        for e in std::fs::read_dir(&sub)? {
            let p = e?.path();
            if p.is_file() {
                out.insert(p.strip_prefix(dir)?.to_path_buf(), std::fs::read(&p)?);
            }
        }
    }
    Ok(out)
}

fn datagen(root: &Path) -> Res<Verdict> {
    let (a, b) = (root.join("a"), root.join("b"));
    let records = build_dataset(&data_cfg(), DATA_SEED, &a)?;
    build_dataset(&data_cfg(), DATA_SEED, &b)?;
    let (fa, fb) = (files(&a)?, files(&b)?);
    let identical = fa == fb && fa.len() == 1 + 3 * DATA_COUNT;
    let reread = read_manifest(&a.join("manifest.jsonl"))? == records;
    let mut consistent = 0;
    for r in &records {
        if verify_record(&a, r).is_ok() {
            consistent += 1;
        }
    }
    let mut groups = [0usize; 3];
    for r in &records {
        groups[r.present.len() - 1] += 1;
    }
    let mix = groups
        .iter()
        .zip([0.476, 0.381, 0.143])
        .all(|(&g, f)| (g as f64 - f * DATA_COUNT as f64).abs() <= 1.0);
    verdict(
        identical && reread && consistent == records.len() && mix,
        format!(
            "{} files byte-identical: {identical}; manifest re-read: {reread}; gt consistent {consistent}/{}; groups {:?} vs 238/190.5/71.5 +/- 1",
            fa.len(),
            records.len(),
            groups
        ),
    )
}

// 7. Metric golden values.

fn metrics() -> Res<Verdict> {
    let b = bce_probs(&[1.0, 0.0], &[0.5, 0.5])?;
    let a = probe_weights(&[16, 16, 3], 3).map(|v| 0.4 + 0.3 * v);
    let shifted = a.map(|v| v + 16.0 / 255.0);
    let p = psnr(&a, &shifted, 1.0)?;
    let s = ssim(&a, &a)?;
    let labels = Tensor::<f64>::from_f64(vec![2, 5], &[1., 0., 0., 1., 0., 0., 1., 1., 0., 0.])?;
    let logits = Tensor::from_f64(vec![2, 5], &[3., -3., -1., 2., -2., -4., 1., 5., 1., -1.])?;
    let acc = multilabel_accuracy(&logits, &labels)?;
    verdict(
        (b - 1.386294).abs() < 1e-6 && (p - 24.05).abs() < 0.01 && (s - 1.0).abs() < 1e-9 && acc == 0.5,
        format!("bce {b:.6} (1.386294), psnr {p:.4} dB (24.05), ssim {s:.9} (1), accuracy {acc} (0.5)"),
    )
}

// 8. Toy training run.

fn mean_abs_diff(a: &Image, b: &Image) -> f64 {
    a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.data.len() as f64
}

fn prompt_gap(model: &TransRfir<f32>, val: &[Example]) -> Res<f64> {
    let mut gaps = Vec::new();
    for ex in val.iter().filter(|e| e.record.present.len() >= 2) {
        let all = restore_image(model, &ex.degraded, &remove_all_prompt())?;
        let single = gen_prompt(&ex.record.present, &ex.record.present[..1], PromptStyle::Single)?;
        let one = restore_image(model, &ex.degraded, &single)?;
        gaps.push(mean_abs_diff(&all.restored, &one.restored));
    }
    if gaps.is_empty() {
        return Err("no multi-degradation validation samples".into());
    }
    Ok(gaps.iter().sum::<f64>() / gaps.len() as f64)
}

fn training(root: &Path) -> Res<Verdict> {
    let data = root.join("a");
    if !data.join("manifest.jsonl").exists() {
        build_dataset(&data_cfg(), DATA_SEED, &data)?;
    }
    let manifest = data.join("manifest.jsonl");
    let cfg = TrainConfig::toy();
    let size = cfg.image_size();
    let train = load_split(&manifest, Some(Split::Train), size)?;
    let val = load_split(&manifest, Some(Split::Val), size)?;

    let t0 = Instant::now();
    let run = fit(init_model::<f32>(&cfg)?, &train, &cfg)?;
    let train_secs = t0.elapsed().as_secs_f64();
    let (first, last) = (
        run.curve.first().ok_or("empty curve")?,
        run.curve.last().ok_or("empty curve")?,
    );
    let ratio = last.loss / first.loss;
    let report = evaluate(&run.ema, &val, Weights::Ema, cfg.prompt_style)?;
    let low = report.subset(|s| s.present == [Kind::Lowlight]);
    let gap = prompt_gap(&run.ema, &val)?;
    let total_mins = t0.elapsed().as_secs_f64() / 60.0;

    let live = evaluate(&run.model, &val, Weights::Live, cfg.prompt_style)?;
    let live_low = live.subset(|s| s.present == [Kind::Lowlight]);
    println!(
        "    training: {} train / {} val, {} epochs, epoch 1 loss {:.4} (bce {:.4}, l1 {:.4}), epoch {} loss {:.4} (bce {:.4}, l1 {:.4}), s1 {:.3}, s2 {:.3}",
        train.len(),
        val.len(),
        cfg.epochs,
        first.loss,
        first.bce,
        first.l1,
        last.epoch,
        last.loss,
        last.bce,
        last.l1,
        last.s1,
        last.s2
    );
    println!(
        "    live weights: accuracy {:.3}, lowlight {:.2} dB vs {:.2} dB input, overall {:.2} dB vs {:.2} dB input",
        live.mdp_accuracy, live_low.psnr, live_low.input_psnr, live.overall.psnr, live.overall.input_psnr
    );

    let checks = [
        ratio <= 0.5,
        low.count > 0 && low.psnr >= low.input_psnr + 1.0,
        report.mdp_accuracy >= 0.60,
        gap > 1e-4,
        total_mins <= 45.0,
    ];
    verdict(
        checks.iter().all(|&c| c),
        format!(
            "(a) loss ratio {ratio:.3} <= 0.5; (b) lowlight n={} {:.2} dB vs {:.2} dB input (+{:.2}, need +1); \
             (c) exact match {:.3} >= 0.60; (d) prompt L1 gap {gap:.2e} > 1e-4; train {:.1} min, total {total_mins:.1} min <= 45 (ema weights)",
            low.count,
            low.psnr,
            low.input_psnr,
            low.psnr - low.input_psnr,
            report.mdp_accuracy,
            train_secs / 60.0
        ),
    )
}

// 9. Exact invariants.

fn invariants() -> Res<Verdict> {
    let mut model = TransRfir::<f64>::new(ModelConfig::micro(), 4)?;
    model.output.zero_params();
    let x = probe_weights(&[16, 16, 3], 5).map(|v| 0.5 + 0.25 * v);
    let g = Graph::inference();
    let out = model.restore_prompt(&g, g.constant(x.clone()), "Remove haze.")?;
    let identity = *out.restored.value() == x;

    let mut shuffle = true;
    for (h, w, c, r) in [(2, 3, 1, 2), (4, 4, 3, 2), (3, 2, 2, 3), (8, 8, 5, 4)] {
        let t = probe_weights(&[h * r, w * r, c], (h * w * c * r) as u64);
        let g = Graph::<f64>::inference();
        let back = g.constant(t.clone()).pixel_unshuffle(r)?.pixel_shuffle(r)?;
        shuffle &= *back.value() == t;
    }

    let img = generate_scene(32, 32, 6, 0);
    let zero_beta = Kind::ALL.iter().all(|&kind| {
        let spec = DegradationSpec {
            kind,
            alpha: 3,
            beta: 0.0,
            gamma: 45.0,
            rng_stream: 1,
        };
        apply(&img, &spec) == img
    });

    let toy = TransRfir::<f32>::new(ModelConfig::toy(), 12)?;
    let mut ema = toy.clone();
    ema.visit_mut(&mut |p| p.value_mut().data_mut().iter_mut().for_each(|v| *v *= 0.5));
    let back = checkpoint::from_bytes::<f32>(&checkpoint::to_bytes(&toy, Some(&ema))?, Some(&ModelConfig::toy()))?;
    let bits = |m: &TransRfir<f32>| -> Vec<u32> { param_values(m).concat().iter().map(|v| v.to_bits()).collect() };
    let ckpt = bits(&back.model) == bits(&toy)
        && back.ema.as_ref().map(bits) == Some(bits(&ema))
        && back.model.vocab == toy.vocab;

    verdict(
        identity && shuffle && zero_beta && ckpt,
        format!("zeroed output identity {identity}; pixel shuffle round trip {shuffle}; beta=0 identity {zero_beta}; checkpoint round trip {ckpt}"),
    )
}

const NAMES: [&str; 9] = [
    "gradient checks",
    "mhsa flops and params",
    "mhasa params",
    "token scaling",
    "flop orderings and bands",
    "datagen reproducibility",
    "metric golden values",
    "toy training",
    "exact invariants",
];

fn selected() -> Vec<usize> {
    match std::env::var("RFIR_ACCEPTANCE") {
        Ok(s) if !s.trim().is_empty() => s.split(',').filter_map(|t| t.trim().parse().ok()).collect(),
        _ => (1..=9).collect(),
    }
}

fn main() {
    let wanted = selected();
    let root = tempfile::tempdir().expect("temporary directory");
    let mut suite: Option<Res<SuiteReport>> = None;
    let mut failed = Vec::new();
    for n in 1..=9 {
        if !wanted.contains(&n) {
            println!("SKIP [{n}] {}", NAMES[n - 1]);
            continue;
        }
        let t0 = Instant::now();
        let outcome = match n {
            1 => gradients(),
            2..=5 => {
                let s = suite.get_or_insert_with(|| attention_suite(Some((3, 10))).map_err(Into::into));
                match s {
                    Ok(s) => match n {
                        2 => mhsa_costs(s),
                        3 => mhasa_params(s),
                        4 => scaling(s),
                        _ => orderings(s),
                    },
                    Err(e) => Err(e.to_string().into()),
                }
            }
            6 => datagen(root.path()),
            7 => metrics(),
            8 => training(root.path()),
            _ => invariants(),
        };
        let secs = t0.elapsed().as_secs_f64();
        match outcome {
            Ok(v) => {
                println!(
                    "{} [{n}] {}: {} [{secs:.1}s]",
                    if v.pass { "PASS" } else { "FAIL" },
                    NAMES[n - 1],
                    v.detail
                );
                if !v.pass {
                    failed.push(n);
                }
            }
            Err(e) => {
                println!("FAIL [{n}] {}: error: {e} [{secs:.1}s]", NAMES[n - 1]);
                failed.push(n);
            }
        }
    }
    println!(
        "acceptance: {} of {} passed{}",
        wanted.len() - failed.len(),
        wanted.len(),
        if failed.is_empty() {
            String::new()
        } else {
            format!(", failed {failed:?}")
        }
    );
    if !failed.is_empty() && std::env::var("RFIR_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
