//! Load a scenario (file path or built-in name), validate it and print the
//! PSD certificate of the aggregate cost weight.
//!
//! cargo run --example scenario_inspect [path|canonical|decoupled]

use std::path::Path;

use mfsocial::scenario::{
    assemble_aggregate, builtin, check_q0_psd, derive_coefficients, load_scenario, parse_scenario,
    CertificateOutcome,
};

fn main() -> Result<(), mfsocial::Error> {
    let arg = std::env::args().nth(1).unwrap_or_else(|| "canonical".into());
    let params = match builtin::by_name(&arg) {
        Some(text) => parse_scenario(text)?,
        None => load_scenario(Path::new(&arg))?,
    };
    println!("horizon {}  lambda {}  dims {:?}", params.horizon, params.lambda, params.dims);
    println!("breakpoints {:?}", params.coefficients.breakpoints());

    let report = mfsocial::scenario::validate(&params);
    if report.is_empty() {
        println!("validation: ok");
    } else {
        println!("validation:\n{report}");
    }

    let agg = assemble_aggregate(&params, &derive_coefficients(&params))?;
    println!("aggregate drift at t=0:{}", agg.abb.at(0.0));
    let cert = check_q0_psd(&params, &agg)?;
    for e in &cert.entries {
        match &e.outcome {
            CertificateOutcome::Decomposed { residual, .. } => {
                println!("{:>10}  certified={}  residual {residual:.2e}", e.label, e.certified())
            }
            CertificateOutcome::Violated { min_eigenvalue, .. } => {
                println!("{:>10}  violated, min eigenvalue {min_eigenvalue:.3e}", e.label)
            }
        }
    }
    Ok(())
}
