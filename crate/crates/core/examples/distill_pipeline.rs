//! Run a distillation plan end to end: teachers, forward translation,
//! filtering, student training and the evaluation row.
//!
//! cargo run --release --example distill_pipeline -- [plan.toml] [out-dir]

use std::path::PathBuf;

use nmt_distill::distill::{render_report, run_plan_file};

fn main() -> nmt_distill::Result<()> {
    let mut args = std::env::args().skip(1);
    let plan = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("plans/toy-small.toml"));
    let out_dir = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("nmt-distill-pipeline"));

    let outcome = run_plan_file(&plan, &out_dir, None)?;
    let stats = outcome.filter_stats;
    println!("filter kept {} and dropped {} source pairs", stats.kept, stats.dropped);
    println!("student stopped after {} epochs", outcome.student.history.len());
    print!("{}", render_report(std::slice::from_ref(&outcome.row)));
    println!("artifacts in {}", out_dir.display());
    Ok(())
}
