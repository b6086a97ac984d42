use deepvqe::align::{align_forward, align_stream_step, AlignBlock, AlignConfig};
use deepvqe::nn::{Conv2d, FeatureMap};
use rand_chacha::ChaCha8Rng;

mod common;
use common::*;

fn random_block(r: &mut ChaCha8Rng, cfg: AlignConfig) -> AlignBlock {
    let conv = |r: &mut ChaCha8Rng, spec: deepvqe::nn::ConvSpec| {
        Conv2d::new(spec, random_vec(r, spec.weight_len()), random_vec(r, spec.out_channels)).unwrap()
    };
    let (q, k, td) = (conv(r, cfg.q_spec()), conv(r, cfg.k_spec()), conv(r, cfg.tdmap_spec()));
    AlignBlock::new(cfg, q, k, td).unwrap()
}

#[test]
fn recovers_known_delays() {
    let block = oracle_block(4, 100, 50.0);
    for (seed, delta) in [(0u64, 0usize), (1, 7), (2, 42), (3, 99)] {
        let frames = delta + 120;
        let far = random_map(&mut rng(100 + seed), 4, frames, 31);
        let mic = delayed(&far, delta);
        let (_, dist) = align_forward(&mic, &far, &block).unwrap();
        let checked: Vec<usize> = (delta + 5..frames).collect();
        let hits = checked.iter().filter(|&&t| dist.argmax(t) == delta).count();
        let agree = checked.iter().filter(|&&t| dist.argmax(t) == ncc_argmax(&mic, &far, t, 100)).count();
        let n = checked.len() as f64;
        assert!(hits as f64 / n >= 0.95, "delay {delta}: {hits}/{n} frames");
        assert!(agree as f64 / n >= 0.95, "delay {delta}: oracle agreement {agree}/{n}");
    }
}

#[test]
fn singleton_delay_passes_far_through() {
    let mut r = rng(1);
    let block = random_block(&mut r, align_cfg(3, 2, 2, 1));
    let mic = random_map(&mut r, 3, 10, 7);
    let far = random_map(&mut r, 2, 10, 7);
    let (aligned, dist) = align_forward(&mic, &far, &block).unwrap();
    assert!(dist.data().iter().all(|&p| p == 1.0));
    assert_eq!(aligned, far);
}

#[test]
fn zero_far_gives_zero_output() {
    let mut r = rng(2);
    let block = random_block(&mut r, align_cfg(3, 2, 2, 8));
    let mic = random_map(&mut r, 3, 10, 7);
    let (aligned, _) = align_forward(&mic, &FeatureMap::zeros(2, 10, 7), &block).unwrap();
    assert!(aligned.data().iter().all(|&v| v == 0.0));
}

#[test]
fn rows_are_distributions_and_output_is_enveloped() {
    let mut r = rng(3);
    let block = random_block(&mut r, align_cfg(3, 2, 4, 12));
    let mic = random_map(&mut r, 3, 40, 9);
    let far = random_map(&mut r, 2, 40, 9);
    let (aligned, dist) = align_forward(&mic, &far, &block).unwrap();
    for t in 0..40 {
        let row = dist.row(t);
        assert!(row.iter().all(|&p| p >= 0.0));
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        for c in 0..2 {
            for f in 0..9 {
                let env = (0..12.min(t + 1)).map(|d| far.get(c, t - d, f).abs()).fold(0.0, f64::max);
                assert!(aligned.get(c, t, f).abs() <= env + 1e-12);
            }
        }
    }
}

#[test]
fn saturated_logits_select_one_delay_exactly() {
    let delta = 6;
    let block = oracle_block(4, 16, 1e4);
    let far = random_map(&mut rng(4), 4, 60, 31);
    let mic = delayed(&far, delta);
    let (aligned, dist) = align_forward(&mic, &far, &block).unwrap();
    let mut exact = 0;
    for t in delta + 5..60 {
        if dist.row(t)[delta] == 1.0 {
            exact += 1;
            for c in 0..4 {
                assert_eq!(aligned.row(c, t), far.row(c, t - delta));
            }
        }
    }
    assert!(exact >= 45);
}

#[test]
fn permuting_far_channels_permutes_output() {
    let mut r = rng(5);
    let base = oracle_block(3, 10, 1.0);
    let c = *base.config();
    let td_w = random_vec(&mut r, c.tdmap_spec().weight_len());
    let mean = vec![1.0 / 3.0; 3];
    let block = AlignBlock::new(
        c,
        Conv2d::new(c.q_spec(), mean.clone(), vec![0.0]).unwrap(),
        Conv2d::new(c.k_spec(), mean, vec![0.0]).unwrap(),
        Conv2d::new(c.tdmap_spec(), td_w, vec![0.1]).unwrap(),
    )
    .unwrap();
    let mic = random_map(&mut r, 3, 30, 9);
    let far = random_map(&mut r, 3, 30, 9);
    let perm = [2usize, 0, 1];
    let far_p = FeatureMap::from_fn(3, 30, 9, |ch, t, f| far.get(perm[ch], t, f));
    let (a, _) = align_forward(&mic, &far, &block).unwrap();
    let (b, _) = align_forward(&mic, &far_p, &block).unwrap();
    for (ch, &src) in perm.iter().enumerate() {
        for t in 0..30 {
            for f in 0..9 {
                assert!((b.get(ch, t, f) - a.get(src, t, f)).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn causal_in_both_inputs() {
    let mut r = rng(6);
    let block = random_block(&mut r, align_cfg(2, 2, 3, 10));
    let mic = random_map(&mut r, 2, 30, 9);
    let far = random_map(&mut r, 2, 30, 9);
    let (a, da) = align_forward(&mic, &far, &block).unwrap();
    let mut mic2 = mic.clone();
    let mut far2 = far.clone();
    mic2.set(0, 15, 3, 9.0);
    far2.set(1, 15, 4, -9.0);
    let (b, db) = align_forward(&mic2, &far2, &block).unwrap();
    for t in 0..15 {
        assert_eq!(da.row(t), db.row(t));
        for c in 0..2 {
            assert_eq!(a.row(c, t), b.row(c, t));
        }
    }
}

#[test]
fn stream_bit_identical_over_200_frames_and_reset() {
    let mut r = rng(7);
    let block = random_block(&mut r, align_cfg(4, 3, 4, 30));
    let mic = random_map(&mut r, 4, 200, 16);
    let far = random_map(&mut r, 3, 200, 16);
    let (aligned, dist) = align_forward(&mic, &far, &block).unwrap();
    let mut state = block.stream_state(16).unwrap();
    for t in 0..200 {
        let (y, row) = align_stream_step(&mic.frame(t), &far.frame(t), &mut state, &block).unwrap();
        assert_eq!(y.data(), aligned.frame(t).data(), "frame {t}");
        assert_eq!(row.as_slice(), dist.row(t), "frame {t}");
    }
    state.reset();
    for t in 0..5 {
        let (y, _) = align_stream_step(&mic.frame(t), &far.frame(t), &mut state, &block).unwrap();
        assert_eq!(y.data(), aligned.frame(t).data());
    }
}

#[test]
fn shape_errors() {
    let mut r = rng(8);
    let block = random_block(&mut r, align_cfg(2, 2, 2, 4));
    let mic = random_map(&mut r, 2, 10, 9);
    assert!(align_forward(&mic, &random_map(&mut r, 2, 9, 9), &block).is_err());
    assert!(align_forward(&mic, &random_map(&mut r, 2, 10, 8), &block).is_err());
    let mut state = block.stream_state(9).unwrap();
    assert!(align_stream_step(&mic.frame(0), &random_map(&mut r, 2, 1, 8), &mut state, &block).is_err());
}
