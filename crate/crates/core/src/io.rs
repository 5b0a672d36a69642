//! Tensor documents:
//! `{"n": 4, "format": "sym-reduced", "entries": [[i, j, k, l, value], ...]}`.
//!
//! The writer emits every canonical representative (`i<j`, `k<l`,
//! `(i,j) ≤ (k,l)`) in lexicographic order with 17 significant digits; the
//! reader accepts any index order and completes symmetry orbits.

use std::fmt::Write as _;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::tensor::{make_tensor, BianchiMode, CurvatureTensor, Entry};

pub const FORMAT: &str = "sym-reduced";

#[derive(Deserialize)]
struct Document {
    n: usize,
    format: String,
    entries: Vec<(usize, usize, usize, usize, f64)>,
}

pub fn tensor_to_string(r: &CurvatureTensor) -> String {
    let mut s = format!("{{\n  \"n\": {},\n  \"format\": \"{FORMAT}\",\n  \"entries\": [", r.dim());
    let entries = r.canonical_entries();
    for (idx, (i, j, k, l, v)) in entries.iter().enumerate() {
        let sep = if idx + 1 == entries.len() { "" } else { "," };
        // {:.16e} prints 17 significant digits, enough to round-trip any f64.
        let _ = write!(s, "\n    [{i}, {j}, {k}, {l}, {v:.16e}]{sep}");
    }
    s.push_str("\n  ]\n}\n");
    s
}

pub fn tensor_from_str(text: &str, mode: BianchiMode) -> Result<CurvatureTensor> {
    let doc: Document = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
    if doc.format != FORMAT {
        return Err(Error::Format(format!("unsupported format '{}'", doc.format)));
    }
    let entries: Vec<Entry> = doc.entries;
    Ok(make_tensor(doc.n, &entries, mode)?.tensor)
}

pub fn read_tensor(path: &Path, mode: BianchiMode) -> Result<CurvatureTensor> {
    tensor_from_str(&std::fs::read_to_string(path)?, mode)
}

pub fn write_tensor(path: &Path, r: &CurvatureTensor) -> Result<()> {
    std::fs::write(path, tensor_to_string(r))?;
    Ok(())
}
