//! Replicated generate-and-fit study: does the estimator's relative bias
//! shrink as the sequence grows? Desk-scale defaults (short sequences,
//! few replicates) run in a couple of minutes; pass larger values to
//! approach the full study.
//!
//!     cargo run --example consistency [replicates] [T1,T2,...]

use ctssm::inference::FitOptions;
use ctssm::simulation::{run_consistency_study, SimSetting};

fn main() -> ctssm::Result<()> {
    let mut args = std::env::args().skip(1);
    let replicates: usize = args
        .next()
        .map(|s| s.parse().expect("replicates must be an integer"))
        .unwrap_or(10);
    let t_values: Vec<usize> = args
        .next()
        .map(|s| {
            s.split(',')
                .map(|v| v.parse().expect("T values must be integers"))
                .collect()
        })
        .unwrap_or_else(|| vec![300, 1000]);

    let setting = SimSetting::preset(2, 2024)?;
    let study = run_consistency_study(
        &setting,
        &t_values,
        replicates,
        50,
        (-2.5, 2.5),
        &FitOptions::default(),
    )?;

    println!("{replicates} replicates per T, setting 2, m = 50");
    println!(
        "{:>6} {:>8} {:>16} {:>12}",
        "T", "param", "median rel bias", "IQR"
    );
    for &t in &t_values {
        for param in ["theta", "sigma", "alpha"] {
            let mut biases: Vec<f64> = study
                .rows
                .iter()
                .filter(|r| r.t_len == t && r.error.is_none())
                .map(|r| r.relative_bias[param])
                .collect();
            biases.sort_by(|a, b| a.total_cmp(b));
            let median = biases[biases.len() / 2];
            let iqr = biases[3 * biases.len() / 4] - biases[biases.len() / 4];
            println!("{t:>6} {param:>8} {median:>+16.3} {iqr:>12.3}");
        }
    }
    if study.n_failed > 0 {
        println!("{} fits failed and were excluded", study.n_failed);
    }
    Ok(())
}
