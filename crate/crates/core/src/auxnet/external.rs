//! Import and export of externally computed speaker embeddings.
//!
//! Format: CSV with one row per utterance — the utterance id followed by
//! exactly `d_emb` float fields.  Blank lines are ignored; ids must be
//! unique.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;

use super::{EmbeddingSource, SpeakerEmbedding};
use crate::error::{Error, Result};

/// Read a CSV of `(utterance_id, d_emb floats)` rows.
pub fn load_external_embeddings(
    path: &Path,
    d_emb: usize,
) -> Result<BTreeMap<String, SpeakerEmbedding>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io_path(path, e))?;
    let mut out = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let id = fields.next().unwrap_or("").trim();
        if id.is_empty() {
            return Err(Error::data_format(
                path,
                format!("line {}: missing utterance id", lineno + 1),
            ));
        }
        let values: Vec<f64> = fields
            .map(|f| {
                f.trim().parse::<f64>().map_err(|_| {
                    Error::data_format(
                        path,
                        format!("line {}: '{}' is not a float", lineno + 1, f.trim()),
                    )
                })
            })
            .collect::<Result<_>>()?;
        if values.len() != d_emb {
            return Err(Error::data_format(
                path,
                format!(
                    "line {}: utterance '{}' has {} values, expected {}",
                    lineno + 1,
                    id,
                    values.len(),
                    d_emb
                ),
            ));
        }
        let emb = SpeakerEmbedding::new(EmbeddingSource::External, values)?;
        if out.insert(id.to_string(), emb).is_some() {
            return Err(Error::data_format(
                path,
                format!("line {}: duplicate utterance id '{}'", lineno + 1, id),
            ));
        }
    }
    Ok(out)
}

/// Write embeddings in the same CSV shape `load_external_embeddings` reads.
pub fn write_external_embeddings(
    path: &Path,
    embeddings: &BTreeMap<String, SpeakerEmbedding>,
) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|e| Error::io_path(path, e))?;
    for (id, emb) in embeddings {
        if id.contains(',') || id.contains('\n') {
            return Err(Error::contract(format!(
                "utterance id '{id}' contains a delimiter and cannot be written as CSV"
            )));
        }
        let fields: Vec<String> = emb.vector.iter().map(|v| format!("{v:?}")).collect();
        writeln!(file, "{},{}", id, fields.join(","))
            .map_err(|e| Error::io_path(path, e))?;
    }
    Ok(())
}
