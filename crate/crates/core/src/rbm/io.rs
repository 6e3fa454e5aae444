//! Flat-text model files.
//!
//! ```text
//! #erbm-model v1 f=<f> n_items=<n> mode=<conditioned|disabled>
//! #<key>=<value> ...          optional metadata lines
//! W, one item per line (f values)
//! D, one item per line (f values)
//! a
//! b
//! c
//! ```

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use super::{ExplainabilityMode, RbmParams};
use crate::error::{Error, Result};

const MODEL_MAGIC: &str = "#erbm-model v1";

/// A model together with the metadata stored alongside it.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelFile {
    pub params: RbmParams,
    pub metadata: BTreeMap<String, String>,
}

fn write_row<W: Write>(out: &mut W, row: &[f64]) -> Result<()> {
    let mut first = true;
    for x in row {
        if !first {
            out.write_all(b" ")?;
        }
        write!(out, "{x}")?;
        first = false;
    }
    out.write_all(b"\n")?;
    Ok(())
}

pub fn write_model<W: Write>(params: &RbmParams, metadata: &BTreeMap<String, String>, mut out: W) -> Result<()> {
    writeln!(
        out,
        "{MODEL_MAGIC} f={} n_items={} mode={}",
        params.hidden(),
        params.n_items(),
        params.mode().as_str()
    )?;
    if !metadata.is_empty() {
        let line: Vec<String> = metadata.iter().map(|(k, v)| format!("{k}={v}")).collect();
        writeln!(out, "#{}", line.join(" "))?;
    }
    let f = params.hidden().max(1);
    for row in params.weights().chunks(f) {
        write_row(&mut out, row)?;
    }
    for row in params.expl_weights().chunks(f) {
        write_row(&mut out, row)?;
    }
    write_row(&mut out, params.hidden_bias())?;
    write_row(&mut out, params.visible_bias())?;
    write_row(&mut out, params.expl_bias())?;
    Ok(())
}

fn header_field<'a>(fields: &'a BTreeMap<&str, &str>, key: &str) -> Result<&'a str> {
    fields
        .get(key)
        .copied()
        .ok_or_else(|| Error::format("model", format!("header lacks {key}=")))
}

pub fn read_model<R: BufRead>(reader: R) -> Result<ModelFile> {
    let mut lines = reader.lines();
    let header = lines
        .next()
        .transpose()?
        .ok_or_else(|| Error::format("model", "empty file"))?;
    let rest = header
        .trim()
        .strip_prefix(MODEL_MAGIC)
        .ok_or_else(|| Error::format("model", format!("bad header {header:?}")))?;
    let fields: BTreeMap<&str, &str> = rest.split_whitespace().filter_map(|kv| kv.split_once('=')).collect();
    let bad_num = |k: &str| Error::format("model", format!("header field {k} is not a count"));
    let f: usize = header_field(&fields, "f")?.parse().map_err(|_| bad_num("f"))?;
    let n: usize = header_field(&fields, "n_items")?.parse().map_err(|_| bad_num("n_items"))?;
    let mode: ExplainabilityMode = header_field(&fields, "mode")?.parse()?;

    let mut metadata = BTreeMap::new();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(2 * n + 3);
    for (idx, line) in lines.enumerate() {
        let line = line?;
        let lineno = idx + 2;
        if let Some(meta) = line.strip_prefix('#') {
            for kv in meta.split_whitespace() {
                if let Some((k, v)) = kv.split_once('=') {
                    metadata.insert(k.to_string(), v.to_string());
                }
            }
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|x| x.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| Error::parse(lineno, format!("bad number: {e}")))?;
        rows.push(row);
    }
    if rows.len() != 2 * n + 3 {
        return Err(Error::format(
            "model",
            format!("expected {} value lines, found {}", 2 * n + 3, rows.len()),
        ));
    }
    let check = |what: &'static str, row: &[f64], expected: usize| -> Result<()> {
        if row.len() == expected {
            Ok(())
        } else {
            Err(Error::Dimension {
                what,
                expected,
                actual: row.len(),
            })
        }
    };
    let mut it = rows.into_iter();
    let mut w = Vec::with_capacity(n * f);
    for row in it.by_ref().take(n) {
        check("W row", &row, f)?;
        w.extend(row);
    }
    let mut d = Vec::with_capacity(n * f);
    for row in it.by_ref().take(n) {
        check("D row", &row, f)?;
        d.extend(row);
    }
    let a = it.next().unwrap_or_default();
    let b = it.next().unwrap_or_default();
    let c = it.next().unwrap_or_default();
    check("a", &a, f)?;
    check("b", &b, n)?;
    check("c", &c, n)?;
    let params = RbmParams::from_parts(mode, f, w, d, a, b, c)?;
    Ok(ModelFile { params, metadata })
}
