//! Plain-text CSV for trajectories and dense matrices.
//!
//! Trajectory layout: header `k,u1,...,up,y1,...,ym`, then one sample per
//! line with `k` counting up from 0. Values are written with Rust's shortest
//! round-trip float formatting, so save/load is bit-exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::Trajectory;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

/// Non-empty lines with their 1-based line numbers; tolerates CRLF.
fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(n, l)| (n + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
}

fn parse_field(line: usize, field: &str) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| parse_err(line, format!("`{}` is not a number", field.trim())))?;
    if !v.is_finite() {
        return Err(parse_err(line, format!("`{}` is not finite", field.trim())));
    }
    Ok(v)
}

fn parse_header(line: usize, header: &str) -> Result<(usize, usize)> {
    let names: Vec<&str> = header.split(',').map(str::trim).collect();
    if names.first() != Some(&"k") {
        return Err(parse_err(line, "header must start with `k`"));
    }
    let p = names[1..].iter().take_while(|n| n.starts_with('u')).count();
    let m = names.len() - 1 - p;
    for (idx, name) in names[1..=p].iter().enumerate() {
        if *name != format!("u{}", idx + 1) {
            return Err(parse_err(line, format!("expected `u{}`, found `{name}`", idx + 1)));
        }
    }
    for (idx, name) in names[1 + p..].iter().enumerate() {
        if *name != format!("y{}", idx + 1) {
            return Err(parse_err(line, format!("expected `y{}`, found `{name}`", idx + 1)));
        }
    }
    if p == 0 || m == 0 {
        return Err(parse_err(line, "header needs at least one input and one output column"));
    }
    Ok((p, m))
}

pub fn parse_trajectory_csv(text: &str) -> Result<Trajectory> {
    let mut it = lines(text);
    let (hline, header) = it.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let (p, m) = parse_header(hline, header)?;

    let mut u: Vec<f64> = Vec::new();
    let mut y: Vec<f64> = Vec::new();
    let mut count = 0usize;
    for (ln, row) in it {
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != 1 + p + m {
            return Err(parse_err(
                ln,
                format!("expected {} fields, found {}", 1 + p + m, fields.len()),
            ));
        }
        let k: usize = fields[0]
            .trim()
            .parse()
            .map_err(|_| parse_err(ln, format!("sample index `{}` is not an integer", fields[0].trim())))?;
        if k != count {
            return Err(parse_err(ln, format!("expected sample index {count}, found {k}")));
        }
        for f in &fields[1..=p] {
            u.push(parse_field(ln, f)?);
        }
        for f in &fields[1 + p..] {
            y.push(parse_field(ln, f)?);
        }
        count += 1;
    }
    if count == 0 {
        return Err(parse_err(hline, "no samples after header"));
    }
    Trajectory::new(
        Matrix::from_column_slice(p, count, &u),
        Matrix::from_column_slice(m, count, &y),
    )
}

pub fn write_trajectory_csv(traj: &Trajectory) -> String {
    let mut out = String::from("k");
    for c in 1..=traj.p() {
        let _ = write!(out, ",u{c}");
    }
    for c in 1..=traj.m() {
        let _ = write!(out, ",y{c}");
    }
    out.push('\n');
    for k in 0..traj.len() {
        let _ = write!(out, "{k}");
        for v in traj.inputs().column(k).iter().chain(traj.outputs().column(k).iter()) {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

pub fn load_trajectory_csv(path: impl AsRef<Path>) -> Result<Trajectory> {
    parse_trajectory_csv(&fs::read_to_string(path)?)
}

pub fn save_trajectory_csv(traj: &Trajectory, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, write_trajectory_csv(traj))?;
    Ok(())
}

/// Dense matrix, one row per line, no header.
pub fn parse_matrix_csv(text: &str) -> Result<Matrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (ln, row) in lines(text) {
        let values = row
            .split(',')
            .map(|f| parse_field(ln, f))
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != values.len() {
                return Err(parse_err(
                    ln,
                    format!("ragged row: expected {} fields, found {}", first.len(), values.len()),
                ));
            }
        }
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(parse_err(1, "empty matrix file"));
    }
    let cols = rows[0].len();
    Ok(Matrix::from_fn(rows.len(), cols, |r, c| rows[r][c]))
}

pub fn load_matrix_csv(path: impl AsRef<Path>) -> Result<Matrix> {
    parse_matrix_csv(&fs::read_to_string(path)?)
}

pub fn write_matrix_csv(m: &Matrix) -> String {
    let mut out = String::new();
    for r in 0..m.nrows() {
        let row: Vec<String> = m.row(r).iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_siso_file() {
        let text = "k,u1,y1\n0,1,0\n1,0,1\n2,0,0.5\n3,0,0.25\n4,0,0.125\n";
        let t = parse_trajectory_csv(text).unwrap();
        assert_eq!((t.p(), t.m(), t.s()), (1, 1, 4));
        assert_eq!(t.outputs()[(0, 2)], 0.5);
    }

    #[test]
    fn accepts_crlf() {
        let t = parse_trajectory_csv("k,u1,u2,y1\r\n0,1,2,3\r\n1,4,5,6\r\n").unwrap();
        assert_eq!((t.p(), t.m(), t.len()), (2, 1, 2));
        assert_eq!(t.inputs()[(1, 1)], 5.0);
    }

    #[test]
    fn missing_column_is_a_parse_error() {
        let err = parse_trajectory_csv("k,u1,y1\n0,1,2\n1,3\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn malformed_inputs() {
        assert!(matches!(
            parse_trajectory_csv("t,u1,y1\n0,1,2\n"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_trajectory_csv("k,u1,y1\n0,1,abc\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            parse_trajectory_csv("k,u1,y1\n0,1,2\n2,1,2\n"),
            Err(Error::Parse { line: 3, .. })
        ));
        assert!(matches!(
            parse_trajectory_csv("k,u1,y2\n0,1,2\n"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(parse_trajectory_csv("k,u1,y1\n").is_err());
    }

    #[test]
    fn matrix_csv() {
        let m = parse_matrix_csv("1,2\n3,4\n").unwrap();
        assert_eq!(m, nalgebra::dmatrix![1.0, 2.0; 3.0, 4.0]);
        assert_eq!(parse_matrix_csv(&write_matrix_csv(&m)).unwrap(), m);
        assert!(matches!(
            parse_matrix_csv("1,2\n3\n"),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    proptest! {
        #[test]
        fn trajectory_round_trip_is_bit_exact(
            p in 1usize..3,
            m in 1usize..3,
            len in 1usize..12,
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut draw = |r, c| Matrix::from_fn(r, c, |_, _| {
                let mantissa: f64 = rng.random_range(-1.0..1.0);
                mantissa * 10f64.powi(rng.random_range(-30..30))
            });
            let traj = Trajectory::new(draw(p, len), draw(m, len)).unwrap();
            let back = parse_trajectory_csv(&write_trajectory_csv(&traj)).unwrap();
            prop_assert_eq!(back, traj);
        }
    }
}
