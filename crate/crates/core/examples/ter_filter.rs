//! Forward-translate a noisy corpus with a teacher, then drop pairs whose
//! teacher output is far from the reference.
//!
//! cargo run --release --example ter_filter -- [threshold]

use nmt_distill::decode::DecodeConfig;
use nmt_distill::distill::{
    build_training_set, forward_translate_training_data, gen_toy_corpus, toy_vocabs, DataRecipe, FilterSpec,
    Teacher, TeacherKind,
};
use nmt_distill::nnmodel::{train_from, ModelDims, TrainConfig};

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn main() -> nmt_distill::Result<()> {
    let threshold: f64 = std::env::args().nth(1).map_or(0.8, |s| s.parse().expect("threshold"));
    let (src_vocab, tgt_vocab) = toy_vocabs();
    let toy = gen_toy_corpus(1, 1500, 0.15);
    let val = gen_toy_corpus(2, 60, 0.0).corpus;
    let dims = ModelDims::new(src_vocab.len(), tgt_vocab.len(), 16, 32)?;
    let config = TrainConfig {
        batch_size: 16,
        clip_norm: Some(5.0),
        max_epochs: 6,
        ..TrainConfig::default()
    };
    let params = train_from(&config, None, &toy.corpus, &val, dims)?.checkpoint.params;
    let teacher = Teacher::new(TeacherKind::Single, vec![params])?;
    let forward = forward_translate_training_data(&teacher, &toy.corpus, &DecodeConfig::default(), 1)?;

    let (mut noisy, mut clean) = (Vec::new(), Vec::new());
    for (p, &is_noisy) in toy.corpus.pairs().iter().zip(&toy.noisy) {
        let t = forward.ter[&p.id].score;
        if is_noisy { noisy.push(t) } else { clean.push(t) }
    }
    println!("median TER: clean {:.3}, noisy {:.3}", median(clean), median(noisy));

    let (train_set, stats) = build_training_set(
        &toy.corpus,
        Some(&forward.synthetic),
        DataRecipe::ForwardPlusOriginal,
        &FilterSpec::ter(threshold),
        Some(&forward.ter),
    )?;
    println!(
        "TER <= {threshold}: kept {} pairs, dropped {} ({:.1}%), student trains on {} pairs",
        stats.kept,
        stats.dropped,
        100.0 * stats.dropped_fraction,
        train_set.len()
    );
    Ok(())
}
