use chunkwise::decode::{GreedyDecoder, StreamConfig};
use chunkwise::finetune::*;
use chunkwise::mask::{MaskSpec, FRAME_MS};
use chunkwise::math::Matrix;
use chunkwise::model::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

/// Synthetic utterance: each word's span carries a token-specific pattern.
fn synth_utterance(seed: u64, d: usize, frames: usize, words: &[(u32, u64)]) -> AlignedUtterance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sigs: std::collections::HashMap<Option<u32>, Vec<f32>> = std::collections::HashMap::new();
    for t in 0..words.len() {
        let id = Some(words[t].0);
        let v: Vec<f32> = (0..d).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        sigs.insert(id, v);
    }
    let silence: Vec<f32> = (0..d).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
    sigs.insert(None, silence);

    let mut data = Vec::with_capacity(frames * d);
    for t in 0..frames {
        let ms = (t as u64 + 1) * FRAME_MS;
        let mut active = None;
        let mut start = 0u64;
        for &(id, end) in words {
            if ms > start && ms <= end {
                active = Some(id);
                break;
            }
            start = end;
        }
        let base = &sigs[&active];
        for c in 0..d {
            data.push(base[c] + rng.gen_range(-0.1..0.1));
        }
    }
    let tokens = words
        .iter()
        .map(|&(id, end_ms)| AlignedToken { id, end_ms })
        .collect();
    AlignedUtterance::new("overfit".into(), Matrix::from_vec(frames, d, data).unwrap(), tokens)
        .unwrap()
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let lr: f32 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(0.2);
    let rank: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(1);
    let scale: f32 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(2.0);
    let steps: usize = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(500);
    let f_hat: f64 = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(1.0);

    let cfg = ModelConfig::toy(42);
    let w = init_weights(&cfg).unwrap();
    let spec = MaskSpec::new(5, 10).unwrap();
    let words: Vec<(u32, u64)> = vec![(7, 900), (19, 1800), (4, 2700)];
    let utt = synth_utterance(42, cfg.d, 150, &words);
    let stack = LoraStack::new_zero(&cfg, &LoraStack::standard_sites(&cfg), rank, scale, 42).unwrap();
    let train_cfg = TrainConfig {
        spec,
        f_hat,
        learning_rate: lr,
        steps,
        fd_epsilon: 1e-3,
        seed: 42,
    };
    let t0 = Instant::now();
    let out = finetune_run(&w, &[utt.clone()], stack, &train_cfg).unwrap();
    let train_secs = t0.elapsed().as_secs_f64();
    for (i, row) in out.trace.iter().enumerate() {
        if i % (steps / 10).max(1) == 0 || i + 1 == out.trace.len() {
            println!("step {:4}  point {:3}  loss {:.4}", row.step, row.point_frame, row.loss);
        }
    }
    // Mean loss over the final epoch is the real overfit gauge.
    let tail: Vec<f64> = out.trace.iter().rev().take(29).map(|r| r.loss).collect();
    let mean_tail: f64 = tail.iter().sum::<f64>() / tail.len() as f64;
    let max_tail = tail.iter().cloned().fold(0.0f64, f64::max);
    println!(
        "train {:.1}s  mean tail loss {:.4}  max tail loss {:.4}",
        train_secs, mean_tail, max_tail
    );

    // Streaming decode with the trained adapters.
    let eff = apply_lora(&w, &out.adapters).unwrap();
    let mut cache = EncoderCache::new(&eff, spec).unwrap();
    let scorer = ModelScorer::new(&eff, spec, false);
    let mut dec = GreedyDecoder::new(scorer, StreamConfig::default());
    let mut offset = 0;
    while offset < 150 {
        let len = if offset == 0 { 10 } else { 5 };
        let chunk = Matrix::from_vec(
            len,
            16,
            (0..len).flat_map(|r| utt.features.row(offset + r).to_vec()).collect(),
        )
        .unwrap();
        let rows = encode_stream(&mut cache, &eff, &chunk).unwrap();
        offset += len;
        dec.process_chunk(&rows, offset as u64 * FRAME_MS).unwrap();
    }
    println!("transcript: {:?} (want [7, 19, 4])", dec.transcript());
    for ts in dec.word_timestamps(3000) {
        println!(
            "  word token[{}] start {} end {}",
            ts.token_index, ts.start_ms, ts.end_ms
        );
    }
}
