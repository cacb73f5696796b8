//! Matrix Market reader/writer for dense and sparse complex matrices and
//! vectors. Entry text is written with shortest round-trip float formatting
//! so emitted files re-parse to identical values.

use std::io::{BufRead, Write};
use std::path::Path;

use ndarray::prelude::*;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Field {
    Real,
    Complex,
    Integer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
    Hermitian,
    SkewSymmetric,
}

fn parse_header(line: &str) -> Result<(bool, Field, Symmetry)> {
    let toks: Vec<String> = line.split_whitespace().map(|s| s.to_lowercase()).collect();
    if toks.len() != 5 || toks[0] != "%%matrixmarket" || toks[1] != "matrix" {
        return Err(Error::Parse {
            line: 1,
            msg: "expected '%%MatrixMarket matrix <format> <field> <symmetry>'".into(),
        });
    }
    let coordinate = match toks[2].as_str() {
        "coordinate" => true,
        "array" => false,
        other => {
            return Err(Error::Parse {
                line: 1,
                msg: format!("unknown format '{other}'"),
            })
        }
    };
    let field = match toks[3].as_str() {
        "real" => Field::Real,
        "complex" => Field::Complex,
        "integer" => Field::Integer,
        other => {
            return Err(Error::Parse {
                line: 1,
                msg: format!("unsupported field '{other}'"),
            })
        }
    };
    let symmetry = match toks[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        "hermitian" => Symmetry::Hermitian,
        "skew-symmetric" => Symmetry::SkewSymmetric,
        other => {
            return Err(Error::Parse {
                line: 1,
                msg: format!("unsupported symmetry '{other}'"),
            })
        }
    };
    Ok((coordinate, field, symmetry))
}

fn parse_f64(tok: &str, line: usize) -> Result<f64> {
    tok.parse::<f64>().map_err(|_| Error::Parse {
        line,
        msg: format!("bad number '{tok}'"),
    })
}

/// Reads a Matrix Market file (coordinate or array; real, integer or
/// complex; general/symmetric/hermitian/skew-symmetric) into a dense matrix.
pub fn read_dense<R: BufRead>(reader: R) -> Result<Array2<Complex64>> {
    let mut lines = reader.lines().enumerate();
    let (_, first) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "empty file".into(),
    })?;
    let (coordinate, field, symmetry) = parse_header(&first?)?;
    let mut size_line = None;
    let mut body = Vec::new();
    for (i, l) in lines {
        let l = l?;
        let t = l.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        if size_line.is_none() {
            size_line = Some((i + 1, t.to_string()));
        } else {
            body.push((i + 1, t.to_string()));
        }
    }
    let (sl, size_text) = size_line.ok_or(Error::Parse {
        line: 1,
        msg: "missing size line".into(),
    })?;
    let dims: Vec<usize> = size_text
        .split_whitespace()
        .map(|t| {
            t.parse::<usize>().map_err(|_| Error::Parse {
                line: sl,
                msg: format!("bad size entry '{t}'"),
            })
        })
        .collect::<Result<_>>()?;
    let parse_value = |toks: &[&str], at: usize, line: usize| -> Result<Complex64> {
        match field {
            Field::Complex => {
                if toks.len() < at + 2 {
                    return Err(Error::Parse {
                        line,
                        msg: "complex entry needs two values".into(),
                    });
                }
                Ok(Complex64::new(
                    parse_f64(toks[at], line)?,
                    parse_f64(toks[at + 1], line)?,
                ))
            }
            Field::Real | Field::Integer => {
                if toks.len() < at + 1 {
                    return Err(Error::Parse {
                        line,
                        msg: "missing value".into(),
                    });
                }
                Ok(Complex64::new(parse_f64(toks[at], line)?, 0.0))
            }
        }
    };
    if coordinate {
        if dims.len() != 3 {
            return Err(Error::Parse {
                line: sl,
                msg: "coordinate size line needs 'rows cols nnz'".into(),
            });
        }
        let (nr, nc, nnz) = (dims[0], dims[1], dims[2]);
        if body.len() != nnz {
            return Err(Error::Parse {
                line: sl,
                msg: format!("expected {nnz} entries, found {}", body.len()),
            });
        }
        let mut m = Array2::<Complex64>::zeros((nr, nc));
        for (ln, text) in &body {
            let toks: Vec<&str> = text.split_whitespace().collect();
            if toks.len() < 2 {
                return Err(Error::Parse {
                    line: *ln,
                    msg: "coordinate entry needs 'row col value'".into(),
                });
            }
            let r = toks[0].parse::<usize>().map_err(|_| Error::Parse {
                line: *ln,
                msg: format!("bad row index '{}'", toks[0]),
            })?;
            let c = toks[1].parse::<usize>().map_err(|_| Error::Parse {
                line: *ln,
                msg: format!("bad column index '{}'", toks[1]),
            })?;
            if r == 0 || c == 0 || r > nr || c > nc {
                return Err(Error::Parse {
                    line: *ln,
                    msg: format!("index ({r}, {c}) out of range for {nr}x{nc}"),
                });
            }
            let v = parse_value(&toks, 2, *ln)?;
            m[[r - 1, c - 1]] = v;
            if r != c {
                match symmetry {
                    Symmetry::General => {}
                    Symmetry::Symmetric => m[[c - 1, r - 1]] = v,
                    Symmetry::Hermitian => m[[c - 1, r - 1]] = v.conj(),
                    Symmetry::SkewSymmetric => m[[c - 1, r - 1]] = -v,
                }
            }
        }
        Ok(m)
    } else {
        if dims.len() != 2 {
            return Err(Error::Parse {
                line: sl,
                msg: "array size line needs 'rows cols'".into(),
            });
        }
        if symmetry != Symmetry::General {
            return Err(Error::Parse {
                line: sl,
                msg: "array format is only supported with general symmetry".into(),
            });
        }
        let (nr, nc) = (dims[0], dims[1]);
        if body.len() != nr * nc {
            return Err(Error::Parse {
                line: sl,
                msg: format!("expected {} entries, found {}", nr * nc, body.len()),
            });
        }
        let mut m = Array2::<Complex64>::zeros((nr, nc));
        // array format is column-major
        for (idx, (ln, text)) in body.iter().enumerate() {
            let toks: Vec<&str> = text.split_whitespace().collect();
            let v = parse_value(&toks, 0, *ln)?;
            m[[idx % nr, idx / nr]] = v;
        }
        Ok(m)
    }
}

pub fn read_dense_path<P: AsRef<Path>>(path: P) -> Result<Array2<Complex64>> {
    let f = std::fs::File::open(path)?;
    read_dense(std::io::BufReader::new(f))
}

/// Reads an n x 1 (or 1 x n) matrix as a vector.
pub fn read_vector_path<P: AsRef<Path>>(path: P) -> Result<Array1<Complex64>> {
    let m = read_dense_path(path)?;
    let (r, c) = m.dim();
    if c == 1 {
        Ok(m.column(0).to_owned())
    } else if r == 1 {
        Ok(m.row(0).to_owned())
    } else {
        Err(Error::Input(format!("expected a vector, got {r}x{c}")))
    }
}

fn entry_is_real(m: &CsrMatrix) -> bool {
    m.iter().all(|(_, _, v)| v.im == 0.0)
}

/// Writes coordinate format; complex when any entry has an imaginary part.
pub fn write_coordinate<W: Write>(w: &mut W, m: &CsrMatrix) -> Result<()> {
    let real = entry_is_real(m);
    let field = if real { "real" } else { "complex" };
    writeln!(w, "%%MatrixMarket matrix coordinate {field} general")?;
    writeln!(w, "{} {} {}", m.nrows(), m.ncols(), m.nnz())?;
    for (r, c, v) in m.iter() {
        if real {
            writeln!(w, "{} {} {}", r + 1, c + 1, v.re)?;
        } else {
            writeln!(w, "{} {} {} {}", r + 1, c + 1, v.re, v.im)?;
        }
    }
    Ok(())
}

/// Writes dense array format (column-major).
pub fn write_array<W: Write>(w: &mut W, m: &ArrayView2<Complex64>) -> Result<()> {
    let real = m.iter().all(|v| v.im == 0.0);
    let field = if real { "real" } else { "complex" };
    writeln!(w, "%%MatrixMarket matrix array {field} general")?;
    writeln!(w, "{} {}", m.nrows(), m.ncols())?;
    for c in 0..m.ncols() {
        for r in 0..m.nrows() {
            let v = m[[r, c]];
            if real {
                writeln!(w, "{}", v.re)?;
            } else {
                writeln!(w, "{} {}", v.re, v.im)?;
            }
        }
    }
    Ok(())
}

pub fn write_coordinate_path<P: AsRef<Path>>(path: P, m: &CsrMatrix) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_coordinate(&mut f, m)
}

pub fn write_array_path<P: AsRef<Path>>(path: P, m: &ArrayView2<Complex64>) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_array(&mut f, m)
}

pub fn write_vector_path<P: AsRef<Path>>(path: P, v: &Array1<Complex64>) -> Result<()> {
    let col = v
        .view()
        .into_shape_with_order((v.len(), 1))
        .expect("column reshape");
    write_array_path(path, &col)
}
