//! Artifact writing: JSON run documents, CSV tables, minimal SVG line plots.
//! No timestamps anywhere so identical configs produce identical bytes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use odebench_core::emulator::BoundCheck;
use serde_json::{json, Value};

/// Top-level run document: {command, config, results, verdicts, versions}.
pub struct RunDoc {
    pub command: String,
    pub config: Value,
    pub results: Vec<Value>,
    pub verdicts: Vec<BoundCheck>,
}

impl RunDoc {
    pub fn new(command: &str, config: Value) -> Self {
        Self {
            command: command.to_string(),
            config,
            results: Vec::new(),
            verdicts: Vec::new(),
        }
    }

    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| !v.applicable || v.pass)
    }

    pub fn to_value(&self) -> Value {
        json!({
            "command": self.command,
            "config": self.config,
            "results": self.results,
            "verdicts": self.verdicts,
            "versions": { "odebench": env!("CARGO_PKG_VERSION") },
        })
    }

    pub fn write(&self, out_dir: &Path) -> Result<PathBuf> {
        let path = out_dir.join(format!("{}.json", self.command.replace('-', "_")));
        write_text(&path, &format!("{:#}\n", self.to_value()))?;
        Ok(path)
    }
}

pub fn config_value(cfg: &BTreeMap<String, String>) -> Value {
    json!(cfg)
}

pub fn check_value(c: &BoundCheck) -> Value {
    let slack = if c.applicable { c.bound - c.actual } else { f64::NAN };
    json!({
        "name": c.name,
        "bound": c.bound,
        "actual": c.actual,
        "slack": slack,
        "pass": c.pass,
        "applicable": c.applicable,
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn write_csv(path: &Path, header: &str, rows: &[Vec<f64>]) -> Result<()> {
    let mut text = String::from(header);
    text.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    write_text(path, &text)
}

/// Minimal multi-series SVG line plot on a linear scale.
pub fn write_svg(path: &Path, xs: &[f64], series: &[(&str, &[f64], &str)]) -> Result<()> {
    let (w, h, pad) = (640.0, 400.0, 40.0);
    let xmax = xs.iter().cloned().fold(f64::MIN, f64::max);
    let xmin = xs.iter().cloned().fold(f64::MAX, f64::min);
    let ymax = series
        .iter()
        .flat_map(|(_, ys, _)| ys.iter().cloned())
        .fold(0.0f64, f64::max)
        .max(1e-300);
    let sx = |x: f64| pad + (x - xmin) / (xmax - xmin).max(1e-300) * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - y / ymax * (h - 2.0 * pad);
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
         viewBox=\"0 0 {w} {h}\">\n<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    );
    svg.push_str(&format!(
        "<line x1=\"{pad}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
         <line x1=\"{pad}\" y1=\"{pad}\" x2=\"{pad}\" y2=\"{}\" stroke=\"black\"/>\n",
        h - pad,
        w - pad,
        h - pad,
        h - pad
    ));
    for (i, (name, ys, color)) in series.iter().enumerate() {
        let pts: Vec<String> = xs
            .iter()
            .zip(ys.iter())
            .map(|(&x, &y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            pts.join(" ")
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" fill=\"{color}\" font-size=\"12\">{name}</text>\n",
            w - pad - 120.0,
            pad + 16.0 * (i as f64 + 1.0)
        ));
    }
    svg.push_str("</svg>\n");
    write_text(path, &svg)
}
