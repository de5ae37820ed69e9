//! Median and interquartile timings of single CKKS operations; pass a rep count and a preset.

use hcnn::ckks::CkksParams;
use hcnn::cli::bench_ops_report;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let reps: usize = std::env::args().nth(1).map_or(Ok(20), |a| a.parse())?;
    let params = CkksParams::preset(&std::env::args().nth(2).unwrap_or_else(|| "desk-A".into()))?;
    let report = bench_ops_report(&params, reps, None, 0).map_err(|e| e.line())?;
    println!("{} at level {}, {} threads, {} reps", report.params, report.level, report.threads, reps);
    for (op, t) in &report.ops {
        println!("{op:<8} median {:>9.3} ms  iqr {:>8.3} ms", t.median_ms, t.iqr_ms);
    }
    println!("{}", report.note);
    Ok(())
}
