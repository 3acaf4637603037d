//! Sentence BLEU, corpus BLEU and TER on whitespace-tokenized strings.
//!
//! cargo run --example metrics

use nmt_distill::metrics::{corpus_bleu, corpus_ter, sentence_bleu, ter};
use nmt_distill::textcore::Vocab;

fn main() -> nmt_distill::Result<()> {
    let refs = ["the cat sat on the mat", "there is a cat on the mat", "a b c d e f"];
    let hyps = ["the cat sat on a mat", "on the mat there is a cat", "a b c d e f"];

    let all: Vec<&str> = refs.iter().chain(&hyps).copied().collect();
    let vocab = Vocab::build(&all, 100)?;
    let r: Vec<_> = refs.iter().map(|s| vocab.encode_line(s)).collect();
    let h: Vec<_> = hyps.iter().map(|s| vocab.encode_line(s)).collect();

    for i in 0..refs.len() {
        let b = sentence_bleu(&h[i], &r[i])?;
        let t = ter(&h[i], &r[i])?;
        println!("{:<28} sbleu {:.4}  ter {:.4} (shifts {})", hyps[i], b.score, t.score, t.shifts);
    }
    println!("corpus BLEU {:.2}", corpus_bleu(&h, &r)?.points());
    println!("corpus TER  {:.4}", corpus_ter(&h, &r)?);
    Ok(())
}
