use std::fmt::Write;

use super::law::DecentralizedLaw;
use crate::numerics::MatrixPath;

fn header(out: &mut String, name: &str, path: &MatrixPath, vector: bool) {
    let (r, c) = path.shape();
    for i in 0..r {
        for j in 0..c {
            if vector {
                write!(out, ",{name}_{i}").unwrap();
            } else {
                write!(out, ",{name}_{i}_{j}").unwrap();
            }
        }
    }
}

/// Solution paths as CSV: one row per node, matrices flattened row-major.
pub fn solution_csv(law: &DecentralizedLaw) -> String {
    let paths = [
        ("P", &law.big_p, false),
        ("P_lambda", &law.p_lambda, false),
        ("S", &law.s_mat, false),
        ("s", &law.s_vec, true),
        ("phi", &law.phi, true),
    ];
    let mut out = String::from("t");
    for (name, p, vector) in paths {
        header(&mut out, name, p, vector);
    }
    out.push('\n');
    let grid = law.grid();
    for k in 0..grid.node_count() {
        write!(out, "{:.16e}", grid.node(k)).unwrap();
        for (_, p, _) in paths {
            let m = p.node(k);
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    write!(out, ",{:.16e}", m[(i, j)]).unwrap();
                }
            }
        }
        out.push('\n');
    }
    out
}
