use super::*;
use crate::dataio::{synth_generate, Dataset, SynthSpec};
use crate::error::Error;
use crate::numcore::{Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_config(modalities: Vec<Modality>) -> ModelConfig {
    ModelConfig {
        d_model: 8,
        n_heads: 2,
        ffn_dim: 16,
        mlp_hidden: vec![4],
        modalities,
        eeg_dim: 6,
        wemb_dim: 5,
        seed: 3,
        ..ModelConfig::default()
    }
}

fn small_data() -> Dataset {
    synth_generate(&SynthSpec {
        n_sentences: 3,
        words_per_sentence: 4,
        delta: 1.0,
        eeg_dim: 6,
        wemb_dim: Some(5),
        seed: 8,
        ..SynthSpec::default()
    })
    .unwrap()
}

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn zero_param(model: &mut ReadingModel, id: crate::numcore::ParamId) {
    model.params_mut().get_mut(id).data_mut().fill(0.0);
}

#[test]
fn projection_cases() {
    let mut model = ReadingModel::new(small_config(vec![Modality::Eye])).unwrap();
    let lin = model.projection(Modality::Eye).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random(&[3, 12], &mut rng);

    // random case against a row·matrix loop
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let y = model.project(&mut tape, Modality::Eye, xv).unwrap();
    let (w, b) = (model.params().get(lin.w), model.params().get(lin.b));
    for r in 0..3 {
        for c in 0..8 {
            let expect: f64 = (0..12).map(|k| x.get(r, k) * w.get(k, c)).sum::<f64>() + b.data()[c];
            assert!((tape.value(y).get(r, c) - expect).abs() < 1e-12);
        }
    }
    let bad = tape.constant(Tensor::zeros(&[3, 11]));
    assert!(matches!(model.project(&mut tape, Modality::Eye, bad), Err(Error::Contract(_))));
    let missing = tape.constant(Tensor::zeros(&[3, 6]));
    assert!(model.project(&mut tape, Modality::Eeg, missing).is_err());
    drop(tape);

    zero_param(&mut model, lin.w);
    let mut tape = Tape::new();
    let xv = tape.constant(x);
    let y = model.project(&mut tape, Modality::Eye, xv).unwrap();
    assert!(tape.value(y).data().iter().all(|&v| v == 0.0));
}

#[test]
fn projection_identity() {
    let cfg = ModelConfig { eye_dim: 8, ..small_config(vec![Modality::Eye]) };
    let mut model = ReadingModel::new(cfg).unwrap();
    let lin = model.projection(Modality::Eye).unwrap();
    model.params_mut().get_mut(lin.w).data_mut().copy_from_slice(Tensor::identity(8).data());
    let x = random(&[2, 8], &mut ChaCha8Rng::seed_from_u64(2));
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let y = model.project(&mut tape, Modality::Eye, xv).unwrap();
    assert_eq!(tape.value(y).data(), x.data());
}

#[test]
fn fuse_cases() {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::from_rows(&[vec![1.0, 2.0]]).unwrap());
    let b = tape.constant(Tensor::from_rows(&[vec![3.0, 4.0]]).unwrap());
    let z = tape.constant(Tensor::zeros(&[1, 2]));
    let ab = fuse(&mut tape, a, b).unwrap();
    let ba = fuse(&mut tape, b, a).unwrap();
    let az = fuse(&mut tape, a, z).unwrap();
    assert_eq!(tape.value(ab).data(), &[4.0, 6.0]);
    assert_eq!(tape.value(ab), tape.value(ba));
    assert_eq!(tape.value(az).data(), &[1.0, 2.0]);
    let wide = tape.constant(Tensor::zeros(&[1, 3]));
    assert!(matches!(fuse(&mut tape, a, wide), Err(Error::Shape { .. })));
}

#[test]
fn positional_encoding_values() {
    let pe = positional_encoding(6, 8).unwrap();
    for i in 0..4 {
        assert_eq!(pe.get(0, 2 * i), 0.0);
        assert_eq!(pe.get(0, 2 * i + 1), 1.0);
    }
    assert!(pe.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    for d in [2, 8, 128] {
        assert!((positional_encoding(2, d).unwrap().get(1, 0) - 0.841471).abs() < 1e-6);
    }
    assert_eq!(positional_encoding(2, 128).unwrap().get(1, 0), 1f64.sin());
    assert!(positional_encoding(3, 7).is_err());
}

fn encode_attention(model: &ReadingModel, x: Tensor, mask: &[bool]) -> (Tensor, Vec<Tensor>) {
    let mut tape = Tape::new();
    let xv = tape.constant(x);
    let enc = model.encoder_block(&mut tape, xv, mask).unwrap();
    let out = tape.value(enc.output).clone();
    let att = enc.attention.iter().map(|&a| tape.value(a).clone()).collect();
    (out, att)
}

#[test]
fn attention_properties() {
    let model = ReadingModel::new(small_config(vec![Modality::Eye])).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);

    let (_, att) = encode_attention(&model, random(&[1, 8], &mut rng), &[true]);
    assert!(att.iter().all(|a| a.data() == [1.0]));

    let mask = [true, false, true, true, false];
    let x = random(&[5, 8], &mut rng);
    let (out, att) = encode_attention(&model, x.clone(), &mask);
    for a in &att {
        for r in 0..5 {
            let row = a.row(r);
            let total: f64 = (0..5).filter(|&j| mask[j]).map(|j| row[j]).sum();
            assert!((total - 1.0).abs() <= 1e-12);
            assert!((0..5).filter(|&j| !mask[j]).all(|j| row[j] == 0.0));
        }
    }

    // scribble over masked rows: valid outputs must not move
    let mut x2 = x.clone();
    for r in [1, 4] {
        for c in 0..8 {
            x2.data_mut()[r * 8 + c] = rng.random_range(-50.0..50.0);
        }
    }
    let (out2, _) = encode_attention(&model, x2, &mask);
    for r in (0..5).filter(|&r| mask[r]) {
        for c in 0..8 {
            assert!((out.get(r, c) - out2.get(r, c)).abs() <= 1e-12);
        }
    }

    let mut tape = Tape::new();
    let xv = tape.constant(x);
    assert!(matches!(model.encoder_block(&mut tape, xv, &[false; 5]), Err(Error::Contract(_))));
}

#[test]
fn head_cases() {
    let mut model = ReadingModel::new(small_config(vec![Modality::Eye])).unwrap();
    let x = random(&[3, 8], &mut ChaCha8Rng::seed_from_u64(6));

    let run = |model: &ReadingModel, x: Tensor| {
        let mut tape = Tape::new();
        let xv = tape.constant(x);
        let p = model.mlp_head(&mut tape, xv).unwrap();
        tape.value(p).data().to_vec()
    };

    // oracle: hand-rolled affine → gelu → affine → logistic
    let gelu = |v: f64| 0.5 * v * (1.0 + (0.7978845608028654 * (v + 0.044715 * v.powi(3))).tanh());
    let layers = model.head_layers().to_vec();
    let p = run(&model, x.clone());
    for (r, &pr) in p.iter().enumerate().take(3) {
        let (w0, b0) = (model.params().get(layers[0].w), model.params().get(layers[0].b));
        let hidden: Vec<f64> = (0..4)
            .map(|j| gelu((0..8).map(|k| x.get(r, k) * w0.get(k, j)).sum::<f64>() + b0.data()[j]))
            .collect();
        let (w1, b1) = (model.params().get(layers[1].w), model.params().get(layers[1].b));
        let logit: f64 = (0..4).map(|j| hidden[j] * w1.get(j, 0)).sum::<f64>() + b1.data()[0];
        assert!((pr - 1.0 / (1.0 + (-logit).exp())).abs() < 1e-12);
    }

    let out = layers[1];
    let before = run(&model, x.clone());
    model.params_mut().get_mut(out.b).data_mut()[0] += 0.5;
    let after = run(&model, x.clone());
    assert!(before.iter().zip(&after).all(|(a, b)| b > a));

    for l in &layers {
        zero_param(&mut model, l.w);
    }
    zero_param(&mut model, out.b);
    assert!(run(&model, x.clone()).iter().all(|&v| v == 0.5));
    model.params_mut().get_mut(out.b).data_mut()[0] = 1.3;
    let sig = 1.0 / (1.0 + (-1.3f64).exp());
    assert!(run(&model, x).iter().all(|&v| (v - sig).abs() < 1e-15));
}

#[test]
fn forward_sentence_shapes_and_determinism() {
    let ds = small_data();
    let mut rec = ds.sentences[0].clone();
    rec.words[3].valid = false;
    for mods in [
        vec![Modality::Eye],
        vec![Modality::Eeg],
        vec![Modality::Eye, Modality::Eeg],
        vec![Modality::Wemb],
    ] {
        let model = ReadingModel::new(small_config(mods.clone())).unwrap();
        let pred = model.forward_sentence(&rec).unwrap();
        assert_eq!(pred.p.len(), 4);
        assert!(pred.p.iter().all(|&p| p > 0.0 && p < 1.0));
        assert_eq!(pred.mask, vec![true, true, true, false]);
        let again = ReadingModel::new(small_config(mods)).unwrap().forward_sentence(&rec).unwrap();
        assert!(pred.p.iter().zip(&again.p).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
    for w in &mut rec.words {
        w.valid = false;
    }
    let model = ReadingModel::new(small_config(vec![Modality::Eye])).unwrap();
    assert!(matches!(model.forward_sentence(&rec), Err(Error::Contract(_))));
}

#[test]
fn zeroed_plain_encoder_reduces_to_head_bias() {
    let cfg = ModelConfig {
        use_layer_norm: false,
        use_residual: false,
        ..small_config(vec![Modality::Eye, Modality::Eeg])
    };
    let mut model = ReadingModel::new(cfg).unwrap();
    for id in model.encoder_params() {
        zero_param(&mut model, id);
    }
    let bias = model.head_layers().last().unwrap().b;
    model.params_mut().get_mut(bias).data_mut()[0] = -0.4;
    let pred = model.forward_sentence(&small_data().sentences[1]).unwrap();
    let expect = 1.0 / (1.0 + 0.4f64.exp());
    assert!(pred.p.iter().all(|&p| (p - expect).abs() < 1e-15));
}

#[test]
fn model_gradients_match_finite_differences() {
    let ds = small_data();
    let mut model = ReadingModel::new(small_config(vec![Modality::Eye, Modality::Eeg, Modality::Wemb])).unwrap();
    let mut rec = ds.sentences[2].clone();
    rec.words[1].valid = false;
    let batch = SentenceBatch::from_record(&rec, &model.config().modalities.clone(), |_| true).unwrap();
    let cfg = LossConfig { normalizer: Normalizer::Literal, ..LossConfig::default() };

    let loss_of = |m: &ReadingModel| {
        let mut tape = Tape::new();
        let (l, _) = m.loss(&mut tape, &batch, &cfg).unwrap();
        tape.value(l).item()
    };
    let grads = {
        let mut tape = Tape::new();
        let (l, _) = model.loss(&mut tape, &batch, &cfg).unwrap();
        tape.backward(l).unwrap()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let ids: Vec<_> = model.params().ids().collect();
    let h = 1e-5;
    for _ in 0..60 {
        let id = ids[rng.random_range(0..ids.len())];
        let k = rng.random_range(0..model.params().get(id).numel());
        let orig = model.params().get(id).data()[k];
        model.params_mut().get_mut(id).data_mut()[k] = orig + h;
        let up = loss_of(&model);
        model.params_mut().get_mut(id).data_mut()[k] = orig - h;
        let down = loss_of(&model);
        model.params_mut().get_mut(id).data_mut()[k] = orig;
        let numeric = (up - down) / (2.0 * h);
        let analytic = grads.get(id).unwrap()[k];
        let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-6);
        assert!(rel < 1e-4, "{}[{k}] analytic {analytic} numeric {numeric}", model.params().name(id));
    }
}

#[test]
fn checkpoint_round_trip_and_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let model = ReadingModel::new(small_config(vec![Modality::Eye, Modality::Eeg])).unwrap();
    let loss = LossConfig { standard_f1: true, ..LossConfig::default() };
    let path = dir.path().join("m.json");
    save_checkpoint(&model, &loss, &path).unwrap();
    let (back, back_loss) = load_checkpoint(&path).unwrap();
    assert_eq!(back_loss, loss);
    assert_eq!(back.config(), model.config());
    for ((n1, t1), (n2, t2)) in back.params().iter().zip(model.params().iter()) {
        assert_eq!(n1, n2);
        assert_eq!(t1.data(), t2.data());
    }

    let bin = payload_path(&path);
    let mut bytes = std::fs::read(&bin).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 0x55;
    std::fs::write(&bin, bytes).unwrap();
    assert!(matches!(load_checkpoint(&path), Err(Error::Checksum { .. })));
}
