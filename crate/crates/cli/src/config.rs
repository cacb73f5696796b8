//! Flat key-value config files and matrix/vector specs.
//!
//! Config lines are `key = value`; `#` starts a comment. Matrix specs are
//! either a Matrix Market path, `twisted:D`, `zero:D`, or inline rows
//! `a,b;c,d`. Vector specs are a path or an inline comma list.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use ndarray::prelude::*;
use num_complex::Complex64;
use odebench_core::{mmio, MatrixHandle};

pub fn load_config(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("{}:{}: expected 'key = value'", path.display(), i + 1))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

pub fn require<'a>(cfg: &'a BTreeMap<String, String>, key: &str) -> Result<&'a str> {
    cfg.get(key)
        .map(|s| s.as_str())
        .ok_or_else(|| anyhow!("config is missing '{key}'"))
}

pub fn parse_f64(cfg: &BTreeMap<String, String>, key: &str) -> Result<f64> {
    require(cfg, key)?
        .parse::<f64>()
        .map_err(|_| anyhow!("config key '{key}' is not a number"))
}

/// `twisted:D`, `zero:D`, inline rows, or a Matrix Market path.
pub fn parse_matrix(spec: &str) -> Result<MatrixHandle> {
    if let Some(d) = spec.strip_prefix("twisted:") {
        let d: usize = d.parse().map_err(|_| anyhow!("bad dimension in '{spec}'"))?;
        return Ok(MatrixHandle::twisted_toeplitz(d));
    }
    if let Some(d) = spec.strip_prefix("zero:") {
        let d: usize = d.parse().map_err(|_| anyhow!("bad dimension in '{spec}'"))?;
        return Ok(MatrixHandle::zeros(d));
    }
    if spec.contains(';') || (spec.contains(',') && !Path::new(spec).exists()) {
        return Ok(MatrixHandle::from_real(parse_inline_matrix(spec)?)?);
    }
    let dense = mmio::read_dense_path(spec)?;
    Ok(MatrixHandle::from_dense(dense)?)
}

pub fn parse_inline_matrix(spec: &str) -> Result<Array2<f64>> {
    let rows: Vec<Vec<f64>> = spec
        .split(';')
        .map(|r| {
            r.split(',')
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|_| anyhow!("bad matrix entry '{}'", t.trim()))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let nr = rows.len();
    let nc = rows.first().map(|r| r.len()).unwrap_or(0);
    if nc == 0 || rows.iter().any(|r| r.len() != nc) {
        bail!("inline matrix rows have inconsistent lengths");
    }
    Ok(Array2::from_shape_fn((nr, nc), |(i, j)| rows[i][j]))
}

/// Real rectangular matrix, inline rows or a Matrix Market file.
pub fn parse_inline_or_file(spec: &str) -> Result<Array2<f64>> {
    if Path::new(spec).exists() {
        let m = mmio::read_dense_path(spec)?;
        if m.iter().any(|z| z.im != 0.0) {
            bail!("expected a real matrix in '{spec}'");
        }
        return Ok(m.mapv(|z| z.re));
    }
    parse_inline_matrix(spec)
}

/// Inline comma list or a Matrix Market n x 1 file.
pub fn parse_vector(spec: &str) -> Result<Array1<Complex64>> {
    if Path::new(spec).exists() {
        return Ok(mmio::read_vector_path(spec)?);
    }
    let vals: Vec<Complex64> = spec
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map(|x| Complex64::new(x, 0.0))
                .map_err(|_| anyhow!("bad vector entry '{}'", t.trim()))
        })
        .collect::<Result<_>>()?;
    Ok(Array1::from_vec(vals))
}

pub fn parse_real_vector(spec: &str) -> Result<Array1<f64>> {
    let v = parse_vector(spec)?;
    if v.iter().any(|z| z.im != 0.0) {
        bail!("expected a real vector");
    }
    Ok(v.mapv(|z| z.re))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_value_lines_with_comments() {
        let dir = std::env::temp_dir().join("odebench_cfg_test");
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("a.cfg");
        std::fs::write(&p, "# header\nt_final = 2.0\nx0 = 1,0 # trailing\n\n").unwrap();
        let cfg = load_config(&p).unwrap();
        assert_eq!(parse_f64(&cfg, "t_final").unwrap(), 2.0);
        assert_eq!(require(&cfg, "x0").unwrap(), "1,0");
        assert!(require(&cfg, "missing").is_err());
    }

    #[test]
    fn matrix_specs() {
        assert_eq!(parse_matrix("twisted:7").unwrap().dim(), 7);
        assert_eq!(parse_matrix("zero:3").unwrap().dim(), 3);
        let m = parse_matrix("-2,10;0,-2").unwrap();
        assert_eq!(m.dense()[[0, 1]].re, 10.0);
        assert!(parse_matrix("1,2;3").is_err());
    }

    #[test]
    fn vector_specs() {
        let v = parse_vector("1, -0.5, 2e-3").unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(v[1].re, -0.5);
        assert!(parse_real_vector("1,oops").is_err());
    }
}
