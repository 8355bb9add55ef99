//! Artifact writers: draw files, summary files, manifests, density curves.
//!
//! All numeric text is written with 17 significant digits so a file read
//! back with standard float parsing reproduces the original values bit for
//! bit.

use std::fs;
use std::path::Path;

use abayes_core::diagnostics::PosteriorSummary;
use abayes_core::model::WeightedDraws;
use toml::Table;

use crate::config::CliError;
use crate::report::Curve;

/// 17-significant-digit text form of a float (exact round-trip).
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("while writing {}: {e}", path.display()))
}

/// Writes the draw file: header `param_1,...,param_p,weight,distance`, one
/// row per draw, the distance cell left empty when the method defines no
/// per-draw distance.
pub fn write_draws_csv(path: &Path, draws: &WeightedDraws) -> Result<(), CliError> {
    let p = draws.dim();
    let mut text = String::new();
    for j in 1..=p {
        text.push_str(&format!("param_{j},"));
    }
    text.push_str("weight,distance\n");
    let dists = draws.distances();
    for (i, (d, w)) in draws.draws().iter().zip(draws.weights()).enumerate() {
        for v in d.as_slice() {
            text.push_str(&fmt17(*v));
            text.push(',');
        }
        text.push_str(&fmt17(*w));
        text.push(',');
        if let Some(ds) = dists {
            text.push_str(&fmt17(ds[i]));
        }
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| write_err(path, e))
}

/// Builds the summary document from a posterior summary plus any
/// method-specific extra sections (variational parameters, grid facts).
pub fn summary_table(
    summary: &PosteriorSummary,
    param_names: &[&str],
    extras: &Table,
) -> Table {
    let mut doc = Table::new();
    doc.insert("method".into(), summary.method.as_str().into());
    if let Some(ess) = summary.ess {
        doc.insert("ess".into(), ess.into());
    }
    doc.insert(
        "flags".into(),
        toml::Value::Array(summary.flags.iter().map(|f| f.as_str().into()).collect()),
    );
    let mut params = Vec::with_capacity(summary.params.len());
    for (j, ps) in summary.params.iter().enumerate() {
        let mut row = Table::new();
        row.insert("name".into(), param_names.get(j).copied().unwrap_or("param").into());
        row.insert("mean".into(), ps.mean.into());
        row.insert("sd".into(), ps.sd.into());
        let pair = |p: (f64, f64)| toml::Value::Array(vec![p.0.into(), p.1.into()]);
        row.insert("ci50".into(), pair(ps.intervals[0]));
        row.insert("ci90".into(), pair(ps.intervals[1]));
        row.insert("ci95".into(), pair(ps.intervals[2]));
        params.push(toml::Value::Table(row));
    }
    doc.insert("params".into(), toml::Value::Array(params));
    for (k, v) in extras {
        doc.insert(k.clone(), v.clone());
    }
    doc
}

pub fn write_toml(path: &Path, doc: &Table) -> Result<(), CliError> {
    let text = toml::to_string_pretty(doc)
        .map_err(|e| CliError::Runtime(format!("while serializing {}: {e}", path.display())))?;
    fs::write(path, text).map_err(|e| write_err(path, e))
}

/// Writes a two-column density file: `grid,density`.
pub fn write_density(path: &Path, curve: &Curve) -> Result<(), CliError> {
    let mut text = String::from("grid,density\n");
    for (g, d) in curve.grid.iter().zip(&curve.density) {
        text.push_str(&fmt17(*g));
        text.push(',');
        text.push_str(&fmt17(*d));
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| write_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digit_text_round_trips_exactly() {
        for v in [
            std::f64::consts::PI,
            -1.2345678901234567e-300,
            6.02214076e23,
            1.0 / 3.0,
            -0.0,
        ] {
            let back: f64 = fmt17(v).parse().unwrap();
            assert_eq!(back.to_bits(), v.to_bits(), "{v} -> {}", fmt17(v));
        }
    }
}
