//! Learn a merge table, segment text and restore it.
//!
//! cargo run --example bpe

use nmt_distill::bpe::{apply_bpe_line, learn_bpe, undo_bpe_line};

fn main() -> nmt_distill::Result<()> {
    let corpus = [
        "low lower lowest",
        "newer newest wider widest",
        "the lowest new widest road",
        "slow slower slowest",
    ];
    let table = learn_bpe(&corpus, 12)?;
    println!("{}", table.to_text().trim_end());
    println!();
    for line in ["slowest newer road", "lowly widening"] {
        let seg = apply_bpe_line(line, &table);
        println!("{line:<22} -> {seg}");
        assert_eq!(undo_bpe_line(&seg)?, line);
    }
    Ok(())
}
