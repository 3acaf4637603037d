//! Train a small model on the synthetic toy task and translate a few
//! validation sentences with it.
//!
//! cargo run --release --example train_toy -- [seed] [epochs]

use nmt_distill::decode::{translate_corpus, DecodeConfig, Scorer};
use nmt_distill::distill::{gen_toy_corpus, toy_vocabs};
use nmt_distill::metrics::corpus_bleu;
use nmt_distill::nnmodel::{train_from, ModelDims, TrainConfig};

fn main() -> nmt_distill::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(1, |s| s.parse().expect("seed"));
    let epochs: u64 = args.next().map_or(6, |s| s.parse().expect("epochs"));

    let (src_vocab, tgt_vocab) = toy_vocabs();
    let train = gen_toy_corpus(100, 1500, 0.0).corpus;
    let val = gen_toy_corpus(200, 100, 0.0).corpus;
    let dims = ModelDims::new(src_vocab.len(), tgt_vocab.len(), 16, 32)?;
    let config = TrainConfig {
        batch_size: 16,
        initial_lr: 1.0,
        clip_norm: Some(5.0),
        max_epochs: epochs,
        seed,
        ..TrainConfig::default()
    };
    let out = train_from(&config, None, &train, &val, dims)?;
    print!("{}", out.history_tsv());

    let params = &out.checkpoint.params;
    let sources = val.sources();
    let hyps: Vec<_> = translate_corpus(&Scorer::Single(params), &sources, &DecodeConfig::default(), None, 1)?
        .into_iter()
        .map(|h| h.tokens)
        .collect();
    println!("validation BLEU {:.2}", corpus_bleu(&hyps, &val.targets())?.points());
    for (s, h) in sources.iter().zip(&hyps).take(5) {
        println!("{}  =>  {}", src_vocab.decode_line(s)?, tgt_vocab.decode_line(h)?);
    }
    Ok(())
}
