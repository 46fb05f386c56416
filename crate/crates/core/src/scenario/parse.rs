use std::path::Path;

use nalgebra::DMatrix;
use toml::{Table, Value};

use super::params::{CoefficientPaths, Dims, Limits, MinorInit, ScenarioParams, Shape, Terminal};
use super::ScenarioError;
use crate::numerics::Schedule;

/// Parses a scenario document (TOML).
pub fn parse_scenario(text: &str) -> Result<ScenarioParams, ScenarioError> {
    let root: Table = text
        .parse()
        .map_err(|e: toml::de::Error| ScenarioError::Syntax(e.to_string()))?;
    reject_unknown(&root, "", &["T", "lambda", "dims", "coefficients", "terminal", "init", "limits"])?;

    let horizon = positive(&root, "", "T")?;
    let lambda = positive(&root, "", "lambda")?;

    let dims_t = table(&root, "", "dims")?;
    reject_unknown(dims_t, "dims", &["n", "n1", "n2"])?;
    let dims = Dims {
        n: dimension(dims_t, "dims", "n")?,
        n1: dimension(dims_t, "dims", "n1")?,
        n2: dimension(dims_t, "dims", "n2")?,
    };

    let coeff_t = table(&root, "", "coefficients")?;
    let keys: Vec<&str> = CoefficientPaths::FIELDS.iter().map(|(k, _)| *k).collect();
    reject_unknown(coeff_t, "coefficients", &keys)?;
    let mut schedules = Vec::with_capacity(keys.len());
    for &(key, shape) in CoefficientPaths::FIELDS {
        let path = format!("coefficients.{key}");
        let value = coeff_t
            .get(key)
            .ok_or_else(|| ScenarioError::MissingField(path.clone()))?;
        schedules.push((key, coefficient(value, &path, shape.resolve(dims), horizon)?));
    }
    let coefficients = CoefficientPaths::from_lookup(|key| {
        let idx = schedules.iter().position(|(k, _)| *k == key).expect("all keys parsed");
        schedules.swap_remove(idx).1
    });

    let term_t = table(&root, "", "terminal")?;
    reject_unknown(term_t, "terminal", &["H0f", "H1f", "H2f", "Q0f", "Qf", "eta0f", "etaf"])?;
    let st = Shape::State.resolve(dims);
    let vc = Shape::Vector.resolve(dims);
    let tm = |key: &str, shape| matrix(required(term_t, "terminal", key)?, &format!("terminal.{key}"), shape);
    let terminal = Terminal {
        h0f: tm("H0f", st)?,
        h1f: tm("H1f", st)?,
        h2f: tm("H2f", st)?,
        q0f: tm("Q0f", st)?,
        qf: tm("Qf", st)?,
        eta0f: tm("eta0f", vc)?,
        etaf: tm("etaf", vc)?,
    };

    let init_t = table(&root, "", "init")?;
    reject_unknown(init_t, "init", &["z0", "m0", "minor_init"])?;
    let z0 = matrix(required(init_t, "init", "z0")?, "init.z0", vc)?;
    let m0 = matrix(required(init_t, "init", "m0")?, "init.m0", vc)?;
    let minor_init = minor_init(table(init_t, "init", "minor_init")?, vc)?;

    let mut limits = Limits::default();
    if let Some(v) = root.get("limits") {
        let lt = v.as_table().ok_or_else(|| wrong_type("limits", "table", v))?;
        reject_unknown(lt, "limits", &["c1", "c2"])?;
        if lt.contains_key("c1") {
            limits.c1 = positive(lt, "limits", "c1")?;
        }
        if lt.contains_key("c2") {
            limits.c2 = positive(lt, "limits", "c2")?;
        }
    }

    Ok(ScenarioParams {
        dims,
        horizon,
        lambda,
        coefficients,
        terminal,
        z0,
        m0,
        minor_init,
        limits,
    })
}

/// Reads and parses a scenario file.
pub fn load_scenario(path: &Path) -> Result<ScenarioParams, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    parse_scenario(&text)
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}

fn wrong_type(field: &str, expected: &'static str, found: &Value) -> ScenarioError {
    ScenarioError::WrongType {
        field: field.to_string(),
        expected,
        found: found.type_str().to_string(),
    }
}

fn reject_unknown(t: &Table, prefix: &str, allowed: &[&str]) -> Result<(), ScenarioError> {
    match t.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(ScenarioError::InvalidValue {
            field: join(prefix, k),
            reason: "unknown field".into(),
        }),
        None => Ok(()),
    }
}

fn required<'a>(t: &'a Table, prefix: &str, key: &str) -> Result<&'a Value, ScenarioError> {
    t.get(key)
        .ok_or_else(|| ScenarioError::MissingField(join(prefix, key)))
}

fn table<'a>(t: &'a Table, prefix: &str, key: &str) -> Result<&'a Table, ScenarioError> {
    let v = required(t, prefix, key)?;
    v.as_table().ok_or_else(|| wrong_type(&join(prefix, key), "table", v))
}

fn number(v: &Value, field: &str) -> Result<f64, ScenarioError> {
    let x = match v {
        Value::Float(x) => *x,
        Value::Integer(i) => *i as f64,
        other => return Err(wrong_type(field, "number", other)),
    };
    if !x.is_finite() {
        return Err(ScenarioError::InvalidValue {
            field: field.to_string(),
            reason: "must be finite".into(),
        });
    }
    Ok(x)
}

fn positive(t: &Table, prefix: &str, key: &str) -> Result<f64, ScenarioError> {
    let field = join(prefix, key);
    let x = number(required(t, prefix, key)?, &field)?;
    if x <= 0.0 {
        return Err(ScenarioError::InvalidValue {
            field,
            reason: format!("must be positive, got {x}"),
        });
    }
    Ok(x)
}

fn dimension(t: &Table, prefix: &str, key: &str) -> Result<usize, ScenarioError> {
    let field = join(prefix, key);
    match required(t, prefix, key)? {
        Value::Integer(i) if *i > 0 => Ok(*i as usize),
        Value::Integer(i) => Err(ScenarioError::InvalidValue {
            field,
            reason: format!("must be a positive integer, got {i}"),
        }),
        other => Err(wrong_type(&field, "integer", other)),
    }
}

/// Row-major nested array, a flat array for column vectors, or a bare
/// number for 1 × 1 values.
fn matrix(v: &Value, field: &str, shape: (usize, usize)) -> Result<DMatrix<f64>, ScenarioError> {
    let (rows, cols) = shape;
    let mismatch = |found| ScenarioError::DimensionMismatch {
        field: field.to_string(),
        expected: shape,
        found,
    };
    let arr = match v {
        Value::Array(a) => a,
        Value::Float(_) | Value::Integer(_) => {
            if shape != (1, 1) {
                return Err(mismatch((1, 1)));
            }
            return Ok(DMatrix::from_element(1, 1, number(v, field)?));
        }
        other => return Err(wrong_type(field, "array", other)),
    };
    let nested = arr.iter().any(|x| x.is_array());
    if !nested {
        // flat array: a column vector
        let vals = arr
            .iter()
            .enumerate()
            .map(|(i, x)| number(x, &format!("{field}[{i}]")))
            .collect::<Result<Vec<_>, _>>()?;
        if cols != 1 || vals.len() != rows {
            return Err(mismatch((vals.len(), 1)));
        }
        return Ok(DMatrix::from_column_slice(rows, 1, &vals));
    }
    let mut data = Vec::with_capacity(rows * cols);
    let mut found_cols = None;
    for (i, row) in arr.iter().enumerate() {
        let row = row
            .as_array()
            .ok_or_else(|| wrong_type(&format!("{field}[{i}]"), "array", row))?;
        if *found_cols.get_or_insert(row.len()) != row.len() {
            return Err(ScenarioError::InvalidValue {
                field: format!("{field}[{i}]"),
                reason: "ragged matrix rows".into(),
            });
        }
        for (j, x) in row.iter().enumerate() {
            data.push(number(x, &format!("{field}[{i}][{j}]"))?);
        }
    }
    let found = (arr.len(), found_cols.unwrap_or(0));
    if found != shape {
        return Err(mismatch(found));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

/// Either a list of `{t_start, value}` segments or a single constant value.
fn coefficient(
    v: &Value,
    field: &str,
    shape: (usize, usize),
    horizon: f64,
) -> Result<Schedule<DMatrix<f64>>, ScenarioError> {
    let segs = match v {
        Value::Array(a) if !a.is_empty() && a.iter().all(|x| x.is_table()) => a,
        Value::Array(a) if a.is_empty() => {
            return Err(ScenarioError::InvalidSegments {
                field: field.to_string(),
                reason: "no segments".into(),
            })
        }
        _ => return Ok(Schedule::constant(matrix(v, field, shape)?)),
    };
    let mut pieces = Vec::with_capacity(segs.len());
    for (j, seg) in segs.iter().enumerate() {
        let sf = format!("{field}[{j}]");
        let t = seg.as_table().expect("checked above");
        reject_unknown(t, &sf, &["t_start", "value"])?;
        let start = number(required(t, &sf, "t_start")?, &format!("{sf}.t_start"))?;
        if start >= horizon {
            return Err(ScenarioError::InvalidSegments {
                field: sf,
                reason: format!("segment starts at {start}, at or after the horizon {horizon}"),
            });
        }
        let value = matrix(required(t, &sf, "value")?, &format!("{sf}.value"), shape)?;
        pieces.push((start, value));
    }
    Schedule::from_segments(pieces).map_err(|e| ScenarioError::InvalidSegments {
        field: field.to_string(),
        reason: e.to_string(),
    })
}

fn minor_init(t: &Table, shape: (usize, usize)) -> Result<MinorInit, ScenarioError> {
    const P: &str = "init.minor_init";
    let mode = required(t, P, "mode")?;
    match mode.as_str() {
        Some("explicit") => {
            reject_unknown(t, P, &["mode", "values"])?;
            let v = required(t, P, "values")?;
            let list = v
                .as_array()
                .ok_or_else(|| wrong_type(&format!("{P}.values"), "array", v))?;
            if list.is_empty() {
                return Err(ScenarioError::InvalidValue {
                    field: format!("{P}.values"),
                    reason: "needs at least one state".into(),
                });
            }
            let states = list
                .iter()
                .enumerate()
                .map(|(i, x)| matrix(x, &format!("{P}.values[{i}]"), shape))
                .collect::<Result<_, _>>()?;
            Ok(MinorInit::Explicit(states))
        }
        Some("grid") => {
            reject_unknown(t, P, &["mode", "rule"])?;
            let rule = table(t, P, "rule")?;
            let rp = format!("{P}.rule");
            match required(rule, &rp, "kind")?.as_str() {
                Some("constant") => {
                    reject_unknown(rule, &rp, &["kind", "value"])?;
                    let v = matrix(required(rule, &rp, "value")?, &format!("{rp}.value"), shape)?;
                    Ok(MinorInit::Constant(v))
                }
                Some("uniform") => {
                    reject_unknown(rule, &rp, &["kind", "low", "high"])?;
                    let low = matrix(required(rule, &rp, "low")?, &format!("{rp}.low"), shape)?;
                    let high = matrix(required(rule, &rp, "high")?, &format!("{rp}.high"), shape)?;
                    Ok(MinorInit::Uniform { low, high })
                }
                _ => Err(ScenarioError::InvalidValue {
                    field: format!("{rp}.kind"),
                    reason: "expected \"constant\" or \"uniform\"".into(),
                }),
            }
        }
        _ => Err(ScenarioError::InvalidValue {
            field: format!("{P}.mode"),
            reason: "expected \"explicit\" or \"grid\"".into(),
        }),
    }
}
