//! Plain-text number formatting shared by the ASCII dump formats.

use crate::error::{Error, Result};

/// 17 significant digits, enough for an exact f64 round trip.
pub(crate) fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

pub(crate) fn parse_f64(tok: Option<&str>, what: &'static str) -> Result<f64> {
    let tok = tok.ok_or_else(|| Error::format(what, "unexpected end of input"))?;
    tok.parse()
        .map_err(|_| Error::format(what, format!("bad number {tok:?}")))
}

pub(crate) fn parse_usize(tok: Option<&str>, what: &'static str) -> Result<usize> {
    let tok = tok.ok_or_else(|| Error::format(what, "unexpected end of input"))?;
    tok.parse()
        .map_err(|_| Error::format(what, format!("bad integer {tok:?}")))
}

/// Reads `<keyword> <value>` pairs from a header line.
pub(crate) fn header_value(line: Option<&str>, keys: &[&str], what: &'static str) -> Result<Vec<usize>> {
    let line = line.ok_or_else(|| Error::format(what, "missing header"))?;
    let mut toks = line.split_whitespace();
    let mut out = Vec::with_capacity(keys.len());
    for key in keys {
        match toks.next() {
            Some(k) if k == *key => out.push(parse_usize(toks.next(), what)?),
            other => {
                return Err(Error::format(
                    what,
                    format!("expected {key:?} in header, found {other:?}"),
                ))
            }
        }
    }
    Ok(out)
}
