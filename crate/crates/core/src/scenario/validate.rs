use std::fmt;

use nalgebra::DMatrix;

use super::params::{MinorInit, ScenarioParams};
use crate::numerics::{asymmetry, is_psd, Schedule, PSD_REL_TOL};

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

/// Violated invariants; empty when the scenario is admissible.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, field: &str, message: String) {
        self.violations.push(Violation {
            field: field.to_string(),
            message,
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "{}: {}", v.field, v.message)?;
        }
        Ok(())
    }
}

fn piece_label(s: &Schedule<DMatrix<f64>>, j: usize) -> String {
    if s.len() == 1 {
        String::new()
    } else {
        format!(" on segment starting at t={}", s.starts()[j])
    }
}

fn check_psd(report: &mut ValidationReport, field: &str, m: &DMatrix<f64>, where_: &str) {
    match is_psd(m, PSD_REL_TOL) {
        Ok(c) if c.is_psd() => {}
        Ok(c) => report.push(
            field,
            format!("not PSD (min eigenvalue {:e}){where_}", c.min_eigenvalue),
        ),
        Err(_) => report.push(
            field,
            format!("not symmetric (asymmetry {:e}){where_}", asymmetry(m)),
        ),
    }
}

fn check_weight(report: &mut ValidationReport, field: &str, m: &DMatrix<f64>, c1: f64, where_: &str) {
    match is_psd(m, PSD_REL_TOL) {
        Err(_) => report.push(
            field,
            format!("not symmetric (asymmetry {:e}){where_}", asymmetry(m)),
        ),
        Ok(c) if c.min_eigenvalue < c1 => report.push(
            field,
            format!("below c1*I (min eigenvalue {:e} < c1 = {:e}){where_}", c.min_eigenvalue, c1),
        ),
        Ok(_) => {}
    }
}

/// Checks the standing assumptions on weights and initial data.
pub fn validate(params: &ScenarioParams) -> ValidationReport {
    let mut report = ValidationReport::default();
    let c = &params.coefficients;
    let lim = params.limits;

    for (field, s) in [("coefficients.Q0", &c.q0), ("coefficients.Q", &c.q)] {
        for (j, m) in s.values().iter().enumerate() {
            check_psd(&mut report, field, m, &piece_label(s, j));
        }
    }
    check_psd(&mut report, "terminal.Q0f", &params.terminal.q0f, "");
    check_psd(&mut report, "terminal.Qf", &params.terminal.qf, "");
    for (field, s) in [("coefficients.R0", &c.r0), ("coefficients.R", &c.r)] {
        for (j, m) in s.values().iter().enumerate() {
            check_weight(&mut report, field, m, lim.c1, &piece_label(s, j));
        }
    }

    let bound = |report: &mut ValidationReport, field: &str, x: &DMatrix<f64>| {
        let norm = x.norm();
        if norm > lim.c2 {
            report.push(field, format!("norm {norm:e} exceeds c2 = {:e}", lim.c2));
        }
    };
    bound(&mut report, "init.z0", &params.z0);
    bound(&mut report, "init.m0", &params.m0);
    match &params.minor_init {
        MinorInit::Explicit(values) => {
            for (i, x) in values.iter().enumerate() {
                bound(&mut report, &format!("init.minor_init.values[{i}]"), x);
            }
        }
        MinorInit::Constant(x) => bound(&mut report, "init.minor_init.rule.value", x),
        MinorInit::Uniform { low, high } => {
            let corner = low.abs().sup(&high.abs());
            bound(&mut report, "init.minor_init.rule", &corner);
            if low.iter().zip(high.iter()).any(|(l, h)| l > h) {
                report.push("init.minor_init.rule", "low exceeds high".into());
            }
        }
    }
    report
}
