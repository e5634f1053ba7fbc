//! Case-study-shaped analysis on a synthetic panel: a cohort observed
//! over twelve survey waves with negative-binomial counts, age-spline
//! effects and a persistent latent state. Fits both the state-space model
//! and the stateless benchmark and compares them by AIC, then decodes one
//! individual's trajectory.
//!
//!     cargo run --release --example panel_case_study [n_individuals]
//!
//! The default of 150 individuals keeps the run to a few minutes; the
//! full-scale configuration uses about 1000.

use ctssm::decoding::{expected_trajectory, viterbi};
use ctssm::discretization::{build_grid, TransitionCache};
use ctssm::inference::{fit, fit_benchmark, FitOptions, FitTemplate};
use ctssm::simulation::{generate_panel, PanelConfig};
use ctssm::splines::SplineBasis;
use ctssm::state_process::OuParams;

fn main() -> ctssm::Result<()> {
    let n: usize = std::env::args()
        .nth(1)
        .map(|s| s.parse().expect("n must be an integer"))
        .unwrap_or(150);

    let config = PanelConfig {
        n_individuals: n,
        dropout: 0.15,
        process: OuParams::new(0.222, 0.0, 1.489)?,
        phi: 0.570,
        ..PanelConfig::case_study_default(99)
    };
    let generated = generate_panel(&config)?;
    println!(
        "panel: {} individuals, {} observations",
        generated.panel.len(),
        generated.panel.n_observations()
    );

    let basis = SplineBasis::age_default();
    let options = FitOptions {
        seed: Some(99),
        ..FitOptions::default()
    };
    let template = FitTemplate::NegBinSpline {
        grid: build_grid(-9.0, 9.0, 100)?,
        basis: basis.clone(),
    };
    let start = std::time::Instant::now();
    let ssm = fit(&generated.panel, &template, &options)?;
    println!(
        "state-space fit: {} in {:.0} s",
        ssm.convergence.status,
        start.elapsed().as_secs_f64()
    );
    for (name, truth) in [("theta", 0.222), ("sigma", 1.489), ("phi", 0.570)] {
        println!("  {name:<6} {:>8.4}  true {truth}", ssm.estimates[name]);
    }

    let benchmark = fit_benchmark(&generated.panel, basis, &options)?;
    println!(
        "AIC: state-space {:.1} vs benchmark {:.1} (delta {:.1})",
        ssm.aic,
        benchmark.aic,
        benchmark.aic - ssm.aic
    );

    // decode the individual with the most observed waves
    let (id, seq) = generated
        .panel
        .sequences()
        .iter()
        .max_by_key(|(_, s)| s.len())
        .unwrap();
    let spec = ssm.to_model_spec()?;
    let cache = TransitionCache::new();
    let path = viterbi(seq, &spec, &cache)?;
    let (expected, equilibrium) = expected_trajectory(seq, &spec, &path)?;
    println!("decoded trajectory for individual {id}:");
    println!("{:>6} {:>8} {:>10} {:>12}", "age", "y", "expected", "equilibrium");
    for k in 0..seq.len() {
        println!(
            "{:>6.1} {:>8} {:>10.2} {:>12.2}",
            seq.covariate(k).unwrap().age(),
            seq.counts()[k],
            expected[k],
            equilibrium[k]
        );
    }
    Ok(())
}
