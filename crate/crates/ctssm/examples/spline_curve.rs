//! The cubic B-spline basis used for the age effects: prints each basis
//! function on an age grid as CSV, and demonstrates the partition-of-unity
//! property on the fully supported span.
//!
//!     cargo run --example spline_curve > basis.csv

use ctssm::splines::{curve_eval, SplineBasis, SplineCoefficients};

fn main() -> ctssm::Result<()> {
    let basis = SplineBasis::age_default();
    let (lo, hi) = basis.fully_supported();
    eprintln!(
        "{} cubic basis functions on knots {:.2}..{:.2}, partition of unity on [{lo:.2}, {hi:.2}]",
        basis.basis_count(),
        basis.knots()[0],
        basis.knots()[basis.knots().len() - 1],
    );

    print!("age");
    for l in 1..=basis.basis_count() {
        print!(",B{l}");
    }
    println!(",sum,example_curve");

    // a hump-shaped curve like a fitted age effect
    let coeffs = SplineCoefficients::new(
        vec![-0.8, 0.2, 1.0, 1.4, 1.0, 0.3, -0.5, -1.2],
        &basis,
    )?;

    let mut age = 7.0;
    while age <= 35.0 + 1e-9 {
        let b = basis.eval(age)?;
        let sum: f64 = b.iter().sum();
        let f = curve_eval(&basis, &coeffs, age)?;
        print!("{age:.2}");
        for v in &b {
            print!(",{v:.6}");
        }
        println!(",{sum:.6},{f:.6}");
        age += 0.25;
    }
    Ok(())
}
