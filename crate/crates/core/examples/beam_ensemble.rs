//! Beam search with one model and with a probability-averaged ensemble.
//!
//! cargo run --release --example beam_ensemble

use nmt_distill::decode::{beam_search, DecodeConfig, Scorer};
use nmt_distill::distill::{gen_toy_corpus, toy_target, toy_vocabs};
use nmt_distill::nnmodel::{train_from, ModelDims, ModelParams, TrainConfig};

fn main() -> nmt_distill::Result<()> {
    let (src_vocab, tgt_vocab) = toy_vocabs();
    let train = gen_toy_corpus(1, 800, 0.0).corpus;
    let val = gen_toy_corpus(2, 40, 0.0).corpus;
    let dims = ModelDims::new(src_vocab.len(), tgt_vocab.len(), 12, 24)?;

    let members: Vec<ModelParams> = (1..=3)
        .map(|seed| {
            let config = TrainConfig {
                batch_size: 16,
                clip_norm: Some(5.0),
                max_epochs: 3,
                seed,
                ..TrainConfig::default()
            };
            train_from(&config, None, &train, &val, dims).map(|o| o.checkpoint.params)
        })
        .collect::<nmt_distill::Result<_>>()?;

    let source = src_vocab.encode_line("a c e g b d");
    println!("source     {}", src_vocab.decode_line(&source)?);
    println!("reference  {}", tgt_vocab.decode_line(&toy_target(&source))?);
    let config = DecodeConfig {
        beam_size: 4,
        ..DecodeConfig::default()
    };
    let scorers = [
        ("member 1", Scorer::Single(&members[0])),
        ("ensemble", Scorer::ensemble(members.iter().collect())?),
    ];
    for (name, scorer) in &scorers {
        println!("{name}:");
        for h in beam_search(scorer, &source, &config)? {
            println!("  {:>8.3}  {}", h.logprob, tgt_vocab.decode_line(&h.tokens)?);
        }
    }
    Ok(())
}
