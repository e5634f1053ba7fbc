//! End-to-end run on a single simulated sequence: generate irregular
//! counts from setting 2, fit the Poisson-scale model by maximum
//! approximate likelihood, report estimates with confidence intervals,
//! then Viterbi-decode the states and score them against the truth.
//!
//!     cargo run --example simulate_fit_decode [T]
//!
//! T defaults to 500; pass 2000 to reproduce the full-scale experiment.

use ctssm::decoding::viterbi;
use ctssm::discretization::{build_grid, TransitionCache};
use ctssm::inference::{fit, FitOptions, FitTemplate, PanelDataset};
use ctssm::simulation::{generate_dataset, SimSetting};

fn main() -> ctssm::Result<()> {
    let t_len: usize = std::env::args()
        .nth(1)
        .map(|s| s.parse().expect("T must be an integer"))
        .unwrap_or(500);

    let setting = SimSetting::preset(2, 7)?.with_t_len(t_len);
    let dataset = generate_dataset(&setting)?;
    println!(
        "simulated {} observations over {:.0} days (theta=0.5, sigma=0.5, alpha=200)",
        t_len,
        dataset.observations.times().last().unwrap()
    );

    let data = PanelDataset::single(dataset.observations.clone());
    let template = FitTemplate::PoissonScale {
        grid: build_grid(-2.5, 2.5, 100)?,
    };
    let options = FitOptions {
        compute_ci: true,
        seed: Some(7),
        ..FitOptions::default()
    };
    let start = std::time::Instant::now();
    let result = fit(&data, &template, &options)?;
    println!(
        "fit {} in {:.1} s ({} evaluations)",
        result.convergence.status,
        start.elapsed().as_secs_f64(),
        result.convergence.evaluations
    );
    for (name, truth) in [("theta", 0.5), ("sigma", 0.5), ("alpha", 200.0)] {
        let est = result.estimates[name];
        let ci = result.ci95[name]
            .map(|[lo, hi]| format!("[{lo:.3}; {hi:.3}]"))
            .unwrap_or_else(|| "-".into());
        println!("  {name:<6} {est:>9.4}  true {truth:>6}  95% CI {ci}");
    }
    println!("  -llk {:.2}  AIC {:.2}", -result.loglik, result.aic);

    let spec = result.to_model_spec()?;
    let cache = TransitionCache::new();
    let decoded = viterbi(&dataset.observations, &spec, &cache)?;
    let n = dataset.true_states.len() as f64;
    let rmse = (decoded
        .state_values
        .iter()
        .zip(&dataset.true_states)
        .map(|(d, x)| (d - x) * (d - x))
        .sum::<f64>()
        / n)
        .sqrt();
    let mean_abs: f64 =
        dataset.true_states.iter().map(|x| x.abs()).sum::<f64>() / n;
    println!("decoded states: rmse {rmse:.4} (mean |true state| {mean_abs:.4})");
    Ok(())
}
