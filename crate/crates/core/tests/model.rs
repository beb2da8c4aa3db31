use rfir_core::bench::model_param_count;
use rfir_core::checkpoint;
use rfir_core::gradcheck::{probe, probe_weights, GradCheck};
use rfir_core::text::Vocab;
use rfir_core::{Error, Graph, ModelConfig, Module, Tensor, TransRfir};

/// Frozen output of the analytic counter for the default configuration and
/// the 15-token prompt vocabulary.
const DEFAULT_PARAM_COUNT: u64 = 49_055_072;

fn image<T: rfir_core::Scalar>(h: usize, w: usize, seed: u64) -> Tensor<T> {
    probe_weights(&[h, w, 3], seed).map(|v| 0.5 + 0.25 * v).cast()
}

#[test]
fn default_encoder_shapes_at_128() {
    let m = TransRfir::<f32>::new(ModelConfig::default(), 0).unwrap();
    let g = Graph::inference();
    let e = m.encode(&g, g.constant(image(128, 128, 1))).unwrap();
    assert_eq!(e.latent.shape(), vec![16, 16, 384]);
    let skips: Vec<_> = e.skips.iter().map(|s| s.shape()).collect();
    assert_eq!(skips, [vec![128, 128, 48], vec![64, 64, 96], vec![32, 32, 192]]);
}

#[test]
fn default_param_count_is_frozen() {
    let cfg = ModelConfig::default();
    let m = TransRfir::<f32>::new(cfg.clone(), 0).unwrap();
    let analytic = model_param_count(&cfg, Vocab::prompt_grammar().len());
    assert_eq!(m.num_params() as u64, analytic);
    assert_eq!(analytic, DEFAULT_PARAM_COUNT);
}

#[test]
fn analytic_count_matches_presets() {
    for cfg in [ModelConfig::toy(), ModelConfig::micro()] {
        let m = TransRfir::<f32>::new(cfg.clone(), 0).unwrap();
        assert_eq!(m.num_params() as u64, model_param_count(&cfg, m.vocab.len()));
    }
}

#[test]
fn restore_shapes_at_64_and_128() {
    let m = TransRfir::<f32>::new(ModelConfig::toy(), 0).unwrap();
    for s in [64, 128] {
        let g = Graph::inference();
        let out = m
            .restore_prompt(&g, g.constant(image(s, s, 2)), "Remove rain.")
            .unwrap();
        assert_eq!(out.restored.shape(), vec![s, s, 3]);
        assert_eq!(out.mdp_logits.shape(), vec![5]);
    }
    let g = Graph::inference();
    let e = m.encode(&g, g.constant(image(64, 64, 3))).unwrap();
    assert_eq!(e.latent.shape(), vec![8, 8, 128]);
}

#[test]
fn rejects_bad_inputs() {
    let m = TransRfir::<f64>::new(ModelConfig::micro(), 0).unwrap();
    let g = Graph::inference();
    assert!(m.restore_prompt(&g, g.constant(image(12, 16, 0)), "").is_err());
    assert!(m
        .restore_prompt(&g, g.constant(Tensor::zeros(vec![16, 16, 4])), "")
        .is_err());
    assert!(m.restore(&g, g.constant(image(16, 16, 0)), &[0; 3]).is_err());

    let mut cfg = ModelConfig::micro();
    cfg.heads = [3, 2, 4, 8];
    assert!(matches!(TransRfir::<f64>::new(cfg, 0), Err(Error::Config(_))));
}

#[test]
fn zeroed_output_head_is_exact_identity() {
    let mut m = TransRfir::<f64>::new(ModelConfig::micro(), 4).unwrap();
    m.output.zero_params();
    let x = image::<f64>(16, 16, 5);
    let g = Graph::inference();
    let out = m.restore_prompt(&g, g.constant(x.clone()), "Remove haze.").unwrap();
    assert_eq!(*out.restored.value(), x);
}

#[test]
fn mdp_logits_ignore_the_prompt() {
    let m = TransRfir::<f64>::new(ModelConfig::micro(), 6).unwrap();
    let x = image::<f64>(16, 16, 7);
    let run = |p: &str| {
        let g = Graph::inference();
        let out = m.restore_prompt(&g, g.constant(x.clone()), p).unwrap();
        let (r, l) = (out.restored.value(), out.mdp_logits.value());
        ((*r).clone(), (*l).clone())
    };
    let (ra, la) = run("Remove rain.");
    let (rb, lb) = run("There are rain, snow in the image. Remove snow.");
    assert_eq!(la.data(), lb.data());
    assert!(ra.max_abs_diff(&rb) > 0.0);
}

#[test]
fn forward_is_deterministic() {
    let x = image::<f64>(16, 16, 8);
    let latent = || {
        let m = TransRfir::<f64>::new(ModelConfig::micro(), 9).unwrap();
        let g = Graph::inference();
        let v = m.encode(&g, g.constant(x.clone())).unwrap().latent.value();
        (*v).clone()
    };
    assert_eq!(latent().data(), latent().data());
}

#[test]
fn micro_model_gradients() {
    let mut m = TransRfir::<f64>::new(ModelConfig::micro(), 10).unwrap();
    let x = image::<f64>(16, 16, 11);
    let ids = m.tokenize("There are rain, haze in the image. Remove rain.");
    let gc = GradCheck {
        max_coords: 6,
        ..GradCheck::default()
    };
    let r = gc
        .params(&mut m, |m, g| {
            let out = m.restore(g, g.constant(x.clone()), &ids)?;
            probe(out.restored, 1)?.add(&probe(out.mdp_logits, 2)?)
        })
        .unwrap();
    assert!(r.max_rel_err() < 1e-4, "{:?}", r.worst());

    let r = gc
        .inputs(std::slice::from_ref(&x), |g, v| {
            probe(m.restore(g, v[0], &ids)?.restored, 3)
        })
        .unwrap();
    assert!(r.max_rel_err() < 1e-4, "{:?}", r.worst());
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let m = TransRfir::<f32>::new(ModelConfig::toy(), 12).unwrap();
    let mut ema = m.clone();
    ema.visit_mut(&mut |p| p.value_mut().data_mut().iter_mut().for_each(|v| *v *= 0.5));

    checkpoint::save(&path, &m, Some(&ema)).unwrap();
    let back = checkpoint::load::<f32>(&path, Some(&ModelConfig::toy())).unwrap();
    let flat = |m: &TransRfir<f32>| {
        m.params()
            .iter()
            .flat_map(|p| p.value().data().to_vec())
            .collect::<Vec<_>>()
    };
    assert_eq!(back.model.cfg, m.cfg);
    assert_eq!(back.model.vocab, m.vocab);
    assert_eq!(flat(&back.model), flat(&m));
    assert_eq!(flat(back.ema.as_ref().unwrap()), flat(&ema));

    let f64_model = TransRfir::<f64>::new(ModelConfig::micro(), 13).unwrap();
    let bytes = checkpoint::to_bytes(&f64_model, None).unwrap();
    let back = checkpoint::from_bytes::<f64>(&bytes, None).unwrap();
    let flat64 = |m: &TransRfir<f64>| {
        m.params()
            .iter()
            .flat_map(|p| p.value().data().to_vec())
            .collect::<Vec<_>>()
    };
    assert_eq!(flat64(&back.model), flat64(&f64_model));
    assert!(back.ema.is_none());
}

#[test]
fn checkpoint_of_zeroed_model_restores_zeroed_model() {
    let mut m = TransRfir::<f64>::new(ModelConfig::micro(), 14).unwrap();
    m.zero_params();
    let back = checkpoint::from_bytes::<f64>(&checkpoint::to_bytes(&m, None).unwrap(), None).unwrap();
    assert!(back
        .model
        .params()
        .iter()
        .all(|p| p.value().data().iter().all(|&v| v == 0.0)));
}

#[test]
fn checkpoint_rejects_mismatch_and_corruption() {
    let m = TransRfir::<f64>::new(ModelConfig::micro(), 15).unwrap();
    let bytes = checkpoint::to_bytes(&m, None).unwrap();

    let mut other = ModelConfig::micro();
    other.channels = 16;
    assert!(matches!(
        checkpoint::from_bytes::<f64>(&bytes, Some(&other)),
        Err(Error::Config(_))
    ));

    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(
        checkpoint::from_bytes::<f64>(&bad, None),
        Err(Error::Checkpoint(_))
    ));

    let mut bad = bytes.clone();
    bad[8] = 99;
    assert!(matches!(
        checkpoint::from_bytes::<f64>(&bad, None),
        Err(Error::Checkpoint(_))
    ));

    assert!(checkpoint::from_bytes::<f64>(&bytes[..bytes.len() - 3], None).is_err());
    let mut long = bytes.clone();
    long.push(0);
    assert!(checkpoint::from_bytes::<f64>(&long, None).is_err());
}
