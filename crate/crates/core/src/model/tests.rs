use super::*;
use crate::context::{autoregressive_mask, cloze_mask, sample_disco_mask};

fn tiny(decoder: DecoderKind) -> ModelConfig {
    ModelConfig {
        enc_layers: 2,
        dec_layers: 2,
        model_dim: 8,
        hidden_dim: 12,
        heads: 2,
        src_vocab: 11,
        tgt_vocab: 13,
        max_positions: 8,
        max_length_bins: 10,
        dropout: 0.0,
        label_smoothing: 0.0,
        decoder,
    }
}

fn model(decoder: DecoderKind, seed: u64) -> Model<f64> {
    // larger weights than the training init so differences are visible
    let mut m = Model::new(tiny(decoder), &mut RngStream::new(seed)).unwrap();
    for id in m.params().ids().collect::<Vec<_>>() {
        for x in m.params_mut().get_mut(id).data_mut() {
            *x *= 20.0;
        }
    }
    m
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn encode_shapes_and_position_sensitivity() {
    let m = model(DecoderKind::Disco, 1);
    let e = m.encode(&[7]).unwrap();
    assert_eq!(e.shape(), &[2, 8]);
    let a = m.encode(&[5, 6, 7]).unwrap();
    let b = m.encode(&[6, 5, 7]).unwrap();
    assert!(max_abs_diff(a.row(1), b.row(1)) > 1e-6);
    assert!(max_abs_diff(a.row(2), b.row(2)) > 1e-6);
    let too_long = vec![5; 9];
    assert_eq!(m.encode(&too_long).unwrap_err().kind(), "length");
    assert_eq!(m.encode(&[11]).unwrap_err().kind(), "index");
}

#[test]
fn two_position_cycle_does_not_leak() {
    let m = model(DecoderKind::Disco, 2);
    let enc = m.encode(&[5, 6, 7]).unwrap();
    let mask = VisibilityMask::from_rows(&[vec![false, true], vec![true, false]]).unwrap();
    let base = m.disco_forward(&enc, &[5, 6], &mask).unwrap();
    let y1 = m.disco_forward(&enc, &[5, 9], &mask).unwrap();
    let y0 = m.disco_forward(&enc, &[8, 6], &mask).unwrap();
    assert_eq!(base.row(1), y1.row(1));
    assert_eq!(base.row(0), y0.row(0));
    // the other row does see the change
    assert!(max_abs_diff(base.row(0), y1.row(0)) > 1e-6);
}

#[test]
fn empty_mask_ignores_targets() {
    let m = model(DecoderKind::Disco, 3);
    let enc = m.encode(&[5, 6]).unwrap();
    let mask = VisibilityMask::empty(3);
    let a = m.disco_forward(&enc, &[5, 6, 7], &mask).unwrap();
    let b = m.disco_forward(&enc, &[9, 10, 12], &mask).unwrap();
    assert_eq!(a.data(), b.data());
}

#[test]
fn random_masks_do_not_leak() {
    let m = model(DecoderKind::Disco, 4);
    let mut rng = RngStream::new(40);
    for trial in 0..50 {
        let n = 1 + rng.below(8);
        let src: Vec<TokenId> = (0..1 + rng.below(8)).map(|_| 5 + rng.below(6) as TokenId).collect();
        let enc = m.encode(&src).unwrap();
        let mask = if trial % 5 == 0 { cloze_mask(n) } else { sample_disco_mask(n, &mut rng) };
        let tgt: Vec<TokenId> = (0..n).map(|_| rng.below(13) as TokenId).collect();
        let base = m.disco_forward(&enc, &tgt, &mask).unwrap();
        for row in 0..n {
            let mut other = tgt.clone();
            for (pos, t) in other.iter_mut().enumerate() {
                if !mask.observes(row, pos) {
                    *t = rng.below(13) as TokenId;
                }
            }
            let alt = m.disco_forward(&enc, &other, &mask).unwrap();
            assert!(max_abs_diff(base.row(row), alt.row(row)) <= 1e-9);
        }
    }
}

#[test]
fn mask_size_mismatch_is_dimension_error() {
    let m = model(DecoderKind::Disco, 5);
    let enc = m.encode(&[5]).unwrap();
    let err = m.disco_forward(&enc, &[5, 6], &VisibilityMask::empty(3)).unwrap_err();
    assert_eq!(err.kind(), "dimension");
}

#[test]
fn length_head_is_normalized_and_encoder_only() {
    let m = model(DecoderKind::Disco, 6);
    let enc = m.encode(&[5, 6, 7]).unwrap();
    let lp = m.predict_length(&enc).unwrap();
    assert_eq!(lp.len(), 10);
    let total: f64 = lp.iter().map(|x| x.exp()).sum();
    assert!((total - 1.0).abs() <= 1e-9);
    assert_eq!(lp, m.predict_length(&enc).unwrap());
}

#[test]
fn vanilla_ar_is_causal() {
    let m = model(DecoderKind::Autoregressive { contextless: false }, 7);
    let enc = m.encode(&[5, 6, 7]).unwrap();
    let a = m.vanilla_ar_forward(&enc, &[5, 6, 7, 8]).unwrap();
    let b = m.vanilla_ar_forward(&enc, &[12, 6, 7, 8]).unwrap();
    let c = m.vanilla_ar_forward(&enc, &[5, 6, 10, 11]).unwrap();
    assert_eq!(a.row(0), b.row(0));
    assert!(max_abs_diff(a.row(1), b.row(1)) > 1e-6);
    for r in 0..3 {
        assert_eq!(a.row(r), c.row(r));
    }
    assert!(max_abs_diff(a.row(3), c.row(3)) > 1e-6);
}

#[test]
fn contextless_ar_matches_disco_with_causal_mask() {
    let m = model(DecoderKind::Autoregressive { contextless: true }, 8);
    let enc = m.encode(&[5, 6]).unwrap();
    let tgt = [5, 6, 7, 1];
    let ar = m.ar_forward(&enc, &tgt).unwrap();
    let disco = m.disco_forward(&enc, &tgt, &autoregressive_mask(4)).unwrap();
    assert_eq!(ar.data(), disco.data());
}

#[test]
fn cmlm_decoder_uses_mask_symbol() {
    let m = model(DecoderKind::Cmlm, 9);
    let enc = m.encode(&[5, 6]).unwrap();
    let toks = apply_mask_symbol(&[5, 6, 7], &[true, false, true]);
    assert_eq!(toks, vec![5, MASK, 7]);
    let a = m.cmlm_forward(&enc, &toks).unwrap();
    assert_eq!(a.shape(), &[3, 13]);
    assert!(m.disco_forward(&enc, &[5, 6, 7], &VisibilityMask::empty(3)).is_err());
}

#[test]
fn batched_forward_matches_single() {
    let m = model(DecoderKind::Disco, 10);
    let srcs: [&[TokenId]; 2] = [&[5, 6, 7], &[8, 9]];
    let tgts: [&[TokenId]; 2] = [&[5, 6], &[7, 8, 9, 10]];
    let mut rng = RngStream::new(1);
    let masks = [sample_disco_mask(2, &mut rng), sample_disco_mask(4, &mut rng)];
    let mut g = Graph::new();
    let enc = m.encode_batch(&mut g, &srcs, &mut Dropout::off()).unwrap();
    let items: Vec<DiscoItem> = (0..2)
        .map(|i| DiscoItem {
            tokens: tgts[i],
            mask: Some(&masks[i]),
            enc_span: enc.spans[i],
        })
        .collect();
    let out = m.disco_logits(&mut g, enc.states, &items, &mut Dropout::off()).unwrap();
    let batched = g.value(out).to_vec();
    let mut single = Vec::new();
    for i in 0..2 {
        let e = m.encode(srcs[i]).unwrap();
        single.extend(m.disco_forward(&e, tgts[i], &masks[i]).unwrap().into_data());
    }
    assert!(max_abs_diff(&batched, &single) <= 1e-12);
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let m = model(DecoderKind::Disco, 11);
    let ck = Checkpoint::from_model(&m);
    let bytes = encode_checkpoint(&ck).unwrap();
    let back = decode_checkpoint(&bytes).unwrap();
    assert_eq!(back, ck);
    let m2: Model<f64> = back.to_model().unwrap();
    for ((n1, t1), (n2, t2)) in m.params().iter().zip(m2.params().iter()) {
        assert_eq!(n1, n2);
        let b1: Vec<u64> = t1.data().iter().map(|x| x.to_bits()).collect();
        let b2: Vec<u64> = t2.data().iter().map(|x| x.to_bits()).collect();
        assert_eq!(b1, b2);
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&path, &ck).unwrap();
    assert_eq!(load_checkpoint(&path).unwrap(), ck);
}

#[test]
fn corrupt_checkpoints_are_rejected() {
    let m = model(DecoderKind::Disco, 12);
    let bytes = encode_checkpoint(&Checkpoint::from_model(&m)).unwrap();
    for cut in [0, 5, 12, 40, bytes.len() - 1] {
        assert!(decode_checkpoint(&bytes[..cut]).is_err());
    }
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(decode_checkpoint(&extra).is_err());
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert_eq!(decode_checkpoint(&bad).unwrap_err().kind(), "format");
}

#[test]
fn f32_checkpoint_restores_exactly() {
    let m: Model<f32> = Model::new(tiny(DecoderKind::Disco), &mut RngStream::new(3)).unwrap();
    let ck = Checkpoint::from_model(&m);
    assert_eq!(ck.dtype, crate::numerics::DType::F32);
    let back: Model<f32> = decode_checkpoint(&encode_checkpoint(&ck).unwrap())
        .unwrap()
        .to_model()
        .unwrap();
    for ((_, a), (_, b)) in m.params().iter().zip(back.params().iter()) {
        assert_eq!(a.data(), b.data());
    }
}

#[test]
fn init_follows_recipe() {
    let m: Model<f64> = Model::new(ModelConfig::desk_scale(40, 40, 12), &mut RngStream::new(0)).unwrap();
    let w = m.params().by_name("dec.0.self.q.w").unwrap().data();
    let mean = w.iter().sum::<f64>() / w.len() as f64;
    let sd = (w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / w.len() as f64).sqrt();
    assert!(mean.abs() < 0.002 && (sd - 0.02).abs() < 0.002, "{mean} {sd}");
    assert!(m.params().by_name("dec.0.self.q.b").unwrap().data().iter().all(|&x| x == 0.0));
    assert!(m.params().by_name("enc.norm.g").unwrap().data().iter().all(|&x| x == 1.0));
    assert!(m.params().by_name("dec.1.ln_kv.g").is_some());
    let plain: Model<f64> = Model::new(
        ModelConfig::desk_scale(40, 40, 12).with_decoder(DecoderKind::Cmlm),
        &mut RngStream::new(0),
    )
    .unwrap();
    assert!(plain.params().by_name("dec.1.ln_kv.g").is_none());
}
