//! Compare max-log-probability and oracle sentence-BLEU picks from the same
//! beams.
//!
//! cargo run --release --example oracle_teacher

use nmt_distill::decode::{decode_corpus, select_final, DecodeConfig, Scorer, Selection};
use nmt_distill::distill::{gen_toy_corpus, toy_vocabs};
use nmt_distill::metrics::corpus_bleu;
use nmt_distill::nnmodel::{train_from, ModelDims, TrainConfig};

fn main() -> nmt_distill::Result<()> {
    let (src_vocab, tgt_vocab) = toy_vocabs();
    let train = gen_toy_corpus(1, 1000, 0.1).corpus;
    let test = gen_toy_corpus(3, 200, 0.0).corpus;
    let dims = ModelDims::new(src_vocab.len(), tgt_vocab.len(), 12, 24)?;
    let config = TrainConfig {
        batch_size: 16,
        clip_norm: Some(5.0),
        max_epochs: 4,
        ..TrainConfig::default()
    };
    let params = train_from(&config, None, &train, &test, dims)?.checkpoint.params;

    let sources = test.sources();
    let refs = test.targets();
    let decoded = decode_corpus(&Scorer::Single(&params), &sources, &DecodeConfig::default(), None, 1)?;
    let mut model_pick = Vec::new();
    let mut oracle_pick = Vec::new();
    for (d, r) in decoded.iter().zip(&refs) {
        model_pick.push(select_final(&d.candidates, Selection::MaxLogProb)?.tokens.clone());
        oracle_pick.push(select_final(&d.candidates, Selection::OracleBleu(r))?.tokens.clone());
    }
    println!("max-logprob BLEU {:.2}", corpus_bleu(&model_pick, &refs)?.points());
    println!("oracle      BLEU {:.2}", corpus_bleu(&oracle_pick, &refs)?.points());
    Ok(())
}
