//! Text formats for datasets and certificate tables.
//!
//! A dataset file is
//!
//! ```text
//! fedrob-panels 1
//! n <n> classes <K> count <panels> seed <u64>
//! panel <input_id> <label>
//! <K decimals>      (n rows)
//! ...
//! ```
//!
//! Blank lines and lines starting with `#` are ignored. Values are written
//! with 9 significant digits.

use std::fmt::Write as _;
use std::path::Path;

use super::Dataset;
use crate::aggregators::Certificate;
use crate::error::{Error, Result};
use crate::simplex::{Margin, ProbitPanel};

const MAGIC: &str = "fedrob-panels";
const VERSION: u32 = 1;

/// Rows whose sum is off by more than this are still re-normalised, but
/// counted as warnings.
pub const INGEST_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub dataset: Dataset,
    /// Rows that needed re-normalisation beyond [`INGEST_TOL`].
    pub renormalized: usize,
}

/// Formats `v` with 9 significant digits, without trailing zeros.
pub fn format_sig9(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let exp = v.abs().log10().floor() as i32;
    let decimals = 8 - exp;
    if !(0..=20).contains(&decimals) {
        return format!("{v:.8e}");
    }
    let s = format!("{v:.*}", decimals as usize);
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

pub fn encode_dataset(data: &Dataset) -> String {
    let mut out = String::new();
    writeln!(out, "{MAGIC} {VERSION}").unwrap();
    writeln!(
        out,
        "n {} classes {} count {} seed {}",
        data.n,
        data.classes,
        data.panels.len(),
        data.seed
    )
    .unwrap();
    for p in &data.panels {
        writeln!(out, "panel {} {}", p.input_id, p.label).unwrap();
        for row in p.rows() {
            let cells: Vec<String> = row.iter().map(|&v| format_sig9(v)).collect();
            writeln!(out, "{}", cells.join(" ")).unwrap();
        }
    }
    out
}

pub fn write_dataset(data: &Dataset, path: &Path) -> Result<()> {
    std::fs::write(path, encode_dataset(data))?;
    Ok(())
}

pub fn ingest_panels(path: &Path) -> Result<Ingested> {
    decode_dataset(&std::fs::read_to_string(path)?)
}

fn header_value(tokens: &[&str], key: &str, line: usize) -> Result<u64> {
    let pos = tokens.iter().position(|t| *t == key).ok_or_else(|| Error::Parse {
        line,
        msg: format!("missing `{key}` in header"),
    })?;
    tokens
        .get(pos + 1)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Parse {
            line,
            msg: format!("bad value for `{key}`"),
        })
}

pub fn decode_dataset(text: &str) -> Result<Ingested> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let parse = |line: usize, msg: String| Error::Parse { line, msg };

    let (ln, magic) = lines.next().ok_or_else(|| parse(1, "empty dataset file".into()))?;
    let mut parts = magic.split_whitespace();
    if parts.next() != Some(MAGIC) {
        return Err(parse(ln, format!("expected `{MAGIC} {VERSION}` header")));
    }
    if parts.next().and_then(|v| v.parse::<u32>().ok()) != Some(VERSION) {
        return Err(parse(ln, "unsupported dataset version".into()));
    }
    let (ln, header) = lines
        .next()
        .ok_or_else(|| parse(ln + 1, "missing dimensions header".into()))?;
    let tokens: Vec<&str> = header.split_whitespace().collect();
    let n = header_value(&tokens, "n", ln)? as usize;
    let classes = header_value(&tokens, "classes", ln)? as usize;
    let count = header_value(&tokens, "count", ln)? as usize;
    let seed = header_value(&tokens, "seed", ln)?;
    if n == 0 || classes < 2 {
        return Err(parse(ln, "need n >= 1 and classes >= 2".into()));
    }

    let mut panels = Vec::with_capacity(count);
    let mut renormalized = 0;
    let mut last_line = ln;
    while let Some((ln, line)) = lines.next() {
        last_line = ln;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let (id, label) = match tokens.as_slice() {
            ["panel", id, label] => (
                id.to_string(),
                label
                    .parse::<usize>()
                    .map_err(|_| parse(ln, format!("bad label {label:?}")))?,
            ),
            _ => return Err(parse(ln, "expected `panel <input_id> <label>`".into())),
        };
        let mut rows = Vec::with_capacity(n);
        for _ in 0..n {
            let (ln, line) = lines
                .next()
                .ok_or_else(|| parse(last_line + 1, format!("panel {id}: expected {n} rows")))?;
            last_line = ln;
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| parse(ln, format!("bad number {t:?}"))))
                .collect::<Result<_>>()?;
            if row.len() != classes {
                return Err(parse(
                    ln,
                    format!("panel {id}: row has {} values, expected {classes}", row.len()),
                ));
            }
            let (row, warned) = normalize_row(row).map_err(|msg| Error::InvalidPanel { id: id.clone(), msg })?;
            renormalized += warned as usize;
            rows.push(row);
        }
        if label >= classes {
            return Err(Error::InvalidPanel {
                id,
                msg: format!("label {label} out of range for {classes} classes"),
            });
        }
        panels.push(ProbitPanel::new(id, label, rows)?);
    }
    if panels.len() != count {
        return Err(parse(
            last_line,
            format!("header announces {count} panels, file has {}", panels.len()),
        ));
    }
    Ok(Ingested {
        dataset: Dataset {
            n,
            classes,
            seed,
            panels,
        },
        renormalized,
    })
}

/// Clamps tiny negatives, divides by the sum and reports whether the sum was
/// off by more than [`INGEST_TOL`].
fn normalize_row(mut row: Vec<f64>) -> std::result::Result<(Vec<f64>, bool), String> {
    if let Some(v) = row.iter().find(|v| !v.is_finite()) {
        return Err(format!("non-finite entry {v}"));
    }
    if let Some(v) = row.iter().find(|&&v| v < -INGEST_TOL) {
        return Err(format!("negative entry {v}"));
    }
    row.iter_mut().for_each(|v| *v = v.max(0.0));
    let sum: f64 = row.iter().sum();
    if sum <= 0.0 {
        return Err("row sums to zero".into());
    }
    row.iter_mut().for_each(|v| *v /= sum);
    Ok((row, (sum - 1.0).abs() > INGEST_TOL))
}

pub const CERTIFICATE_HEADER: &str = "input_id,margin,sigma_x,kappa,bound,certified,degenerate";

fn margin_cell(m: Margin) -> String {
    match m {
        Margin::Finite(v) => format!("{v:?}"),
        Margin::Infinite => "inf".into(),
    }
}

pub fn certificates_csv<'a, I>(rows: I) -> String
where
    I: IntoIterator<Item = (&'a str, &'a Certificate)>,
{
    let mut out = format!("{CERTIFICATE_HEADER}\n");
    for (id, c) in rows {
        writeln!(
            out,
            "{id},{},{:?},{:?},{:?},{},{}",
            margin_cell(c.margin),
            c.sigma_x,
            c.kappa,
            c.bound,
            c.certified,
            c.degenerate
        )
        .unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{generate_synthetic, SyntheticSpec};

    fn sample() -> Dataset {
        generate_synthetic(&SyntheticSpec {
            n: 5,
            classes: 4,
            samples: 20,
            seed: 2,
            ..Default::default()
        })
        .unwrap()
        .dataset
    }

    #[test]
    fn sig9_formatting() {
        assert_eq!(format_sig9(0.0), "0");
        assert_eq!(format_sig9(1.0), "1");
        assert_eq!(format_sig9(0.5), "0.5");
        assert_eq!(format_sig9(0.123456789012), "0.123456789");
        assert_eq!(format_sig9(1.0 / 3.0), "0.333333333");
        assert_eq!(format_sig9(2.5e-7), "0.00000025");
        assert_eq!(format_sig9(1.234e-30), "1.23400000e-30");
    }

    #[test]
    fn round_trip_matches_rounded_and_normalised_rows() {
        let data = sample();
        let back = decode_dataset(&encode_dataset(&data)).unwrap();
        assert_eq!(back.renormalized, 0);
        assert_eq!(back.dataset.n, data.n);
        assert_eq!(back.dataset.seed, data.seed);
        for (a, b) in data.panels.iter().zip(&back.dataset.panels) {
            assert_eq!(a.input_id, b.input_id);
            assert_eq!(a.label, b.label);
            for (ra, rb) in a.rows().iter().zip(b.rows()) {
                let rounded: Vec<f64> = ra.iter().map(|v| format_sig9(*v).parse().unwrap()).collect();
                let (expected, _) = normalize_row(rounded).unwrap();
                assert_eq!(&expected, rb);
            }
        }
        // Reading the same text twice is bit-identical.
        let text = encode_dataset(&data);
        assert_eq!(decode_dataset(&text).unwrap(), decode_dataset(&text).unwrap());
    }

    #[test]
    fn off_by_two_percent_row_is_renormalised_with_warning() {
        let text = "fedrob-panels 1\nn 2 classes 2 count 1 seed 0\npanel a 0\n0.52 0.5\n0.5 0.5\n";
        let got = decode_dataset(text).unwrap();
        assert_eq!(got.renormalized, 1);
        let row = &got.dataset.panels[0].rows()[0];
        assert!((row[0] - 0.52 / 1.02).abs() < 1e-15);
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_inconsistent_files() {
        let wrong_k = "fedrob-panels 1\nn 2 classes 2 count 1 seed 0\npanel a 0\n0.2 0.3 0.5\n0.5 0.5\n";
        match decode_dataset(wrong_k) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
        let short = "fedrob-panels 1\nn 3 classes 2 count 1 seed 0\npanel a 0\n0.5 0.5\n0.5 0.5\n";
        assert!(matches!(decode_dataset(short), Err(Error::Parse { .. })));
        let count = "fedrob-panels 1\nn 1 classes 2 count 2 seed 0\npanel a 0\n0.5 0.5\n";
        assert!(matches!(decode_dataset(count), Err(Error::Parse { .. })));
        let negative = "fedrob-panels 1\nn 1 classes 2 count 1 seed 0\npanel bad 0\n-0.5 1.5\n";
        match decode_dataset(negative) {
            Err(Error::InvalidPanel { id, .. }) => assert_eq!(id, "bad"),
            other => panic!("{other:?}"),
        }
        let label = "fedrob-panels 1\nn 1 classes 2 count 1 seed 0\npanel x 2\n0.5 0.5\n";
        assert!(matches!(decode_dataset(label), Err(Error::InvalidPanel { .. })));
        assert!(decode_dataset("nonsense").is_err());
    }

    #[test]
    fn certificate_csv_layout() {
        let c = Certificate {
            margin: Margin::Infinite,
            sigma_x: 0.0,
            kappa: 1.5,
            bound: 0.0,
            certified: true,
            degenerate: true,
        };
        let csv = certificates_csv([("p0", &c)]);
        assert_eq!(csv, format!("{CERTIFICATE_HEADER}\np0,inf,0.0,1.5,0.0,true,true\n"));
    }
}
