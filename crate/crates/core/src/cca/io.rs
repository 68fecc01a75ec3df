//! Text model container.
//!
//! ```text
//! cca-model 1
//! m <m>
//! input_dim <d>
//! output_dim <d'>
//! output_vocab <sha256 hex | ->
//! sigma <σ_1> ... <σ_m>
//! input_retained <k> <i_1> ... <i_k>
//! output_retained <k'> <j_1> ... <j_k'>
//! input_map
//! <k lines, m values each: row r of A for feature i_r>
//! output_map
//! <k' lines, m values each: row r of B for feature j_r>
//! ```
//!
//! Fields are separated by single spaces. Floats use Rust's shortest
//! round-trip exponent form (`{:e}`), so reading back is bit-exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::CcaModel;
use crate::error::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "cca-model";

pub fn write_model(model: &CcaModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, render(model)).map_err(|e| Error::io(path, e))
}

pub fn read_model(path: impl AsRef<Path>) -> Result<CcaModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse(&text, path)
}

fn join_floats(out: &mut String, values: &[f64]) {
    for (k, v) in values.iter().enumerate() {
        if k > 0 {
            out.push(' ');
        }
        write!(out, "{v:e}").unwrap();
    }
}

pub(crate) fn render(model: &CcaModel) -> String {
    let m = model.m();
    let mut out = String::new();
    writeln!(out, "{MAGIC} {MODEL_FORMAT_VERSION}").unwrap();
    writeln!(out, "m {m}").unwrap();
    writeln!(out, "input_dim {}", model.input_dim()).unwrap();
    writeln!(out, "output_dim {}", model.output_dim()).unwrap();
    writeln!(
        out,
        "output_vocab {}",
        model.output_vocab_digest().unwrap_or("-")
    )
    .unwrap();
    out.push_str("sigma ");
    join_floats(&mut out, model.sigma());
    out.push('\n');
    for (name, idx) in [
        ("input_retained", model.retained_input()),
        ("output_retained", model.retained_output()),
    ] {
        write!(out, "{name} {}", idx.len()).unwrap();
        for i in idx {
            write!(out, " {i}").unwrap();
        }
        out.push('\n');
    }
    for (name, map) in [
        ("input_map", model.input_map()),
        ("output_map", model.output_map()),
    ] {
        writeln!(out, "{name}").unwrap();
        for row in map.chunks(m) {
            join_floats(&mut out, row);
            out.push('\n');
        }
    }
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    path: &'a Path,
    last: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<&'a str> {
        match self.inner.next() {
            Some((n, line)) => {
                self.last = n + 1;
                Ok(line)
            }
            None => Err(Error::parse(
                self.path,
                self.last + 1,
                "unexpected end of model file",
            )),
        }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::parse(self.path, self.last, msg)
    }

    /// Reads `<key> <rest>` and returns `rest`.
    fn keyed(&mut self, key: &str) -> Result<&'a str> {
        let line = self.next()?;
        match line.split_once(' ') {
            Some((k, rest)) if k == key => Ok(rest),
            _ if line == key => Ok(""),
            _ => Err(self.err(format!("expected `{key}`"))),
        }
    }

    fn usize_field(&mut self, key: &str) -> Result<usize> {
        let rest = self.keyed(key)?;
        rest.parse()
            .map_err(|_| self.err(format!("bad integer for `{key}`")))
    }

    fn floats(&self, s: &str, expected: usize) -> Result<Vec<f64>> {
        let values = s
            .split(' ')
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| self.err("bad float"))?;
        if values.len() != expected {
            return Err(self.err(format!(
                "expected {expected} values, found {}",
                values.len()
            )));
        }
        Ok(values)
    }

    fn index_list(&mut self, key: &str) -> Result<Vec<usize>> {
        let rest = self.keyed(key)?;
        let mut parts = rest.split(' ');
        let count: usize = parts
            .next()
            .and_then(|c| c.parse().ok())
            .ok_or_else(|| self.err(format!("missing count for `{key}`")))?;
        let idx = parts
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| self.err(format!("bad index in `{key}`")))?;
        if idx.len() != count {
            return Err(self.err(format!(
                "`{key}` declares {count} indices, found {}",
                idx.len()
            )));
        }
        Ok(idx)
    }

    fn matrix(&mut self, key: &str, rows: usize, m: usize) -> Result<Vec<f64>> {
        self.keyed(key)?;
        let mut out = Vec::with_capacity(rows * m);
        for _ in 0..rows {
            let line = self.next()?;
            out.extend(self.floats(line, m)?);
        }
        Ok(out)
    }
}

pub(crate) fn parse(text: &str, path: &Path) -> Result<CcaModel> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        path,
        last: 0,
    };
    let version = lines.keyed(MAGIC)?;
    if version != MODEL_FORMAT_VERSION.to_string() {
        return Err(lines.err(format!("unsupported model format version `{version}`")));
    }
    let m = lines.usize_field("m")?;
    let input_dim = lines.usize_field("input_dim")?;
    let output_dim = lines.usize_field("output_dim")?;
    let vocab = lines.keyed("output_vocab")?.to_string();
    let sigma_line = lines.keyed("sigma")?;
    let sigma = lines.floats(sigma_line, m)?;
    let retained_input = lines.index_list("input_retained")?;
    let retained_output = lines.index_list("output_retained")?;
    let input_map = lines.matrix("input_map", retained_input.len(), m)?;
    let output_map = lines.matrix("output_map", retained_output.len(), m)?;
    if lines.inner.any(|(_, l)| !l.trim().is_empty()) {
        return Err(lines.err("trailing content after output_map"));
    }

    let model = CcaModel::from_parts(
        m,
        input_dim,
        output_dim,
        retained_input,
        retained_output,
        input_map,
        output_map,
        sigma,
    )
    .map_err(|e| Error::parse(path, 0, e.to_string()))?;
    Ok(if vocab == "-" {
        model
    } else {
        model.with_output_vocab_digest(vocab)
    })
}
