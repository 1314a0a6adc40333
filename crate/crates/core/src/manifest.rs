//! JSON-lines utterance manifests.

use std::collections::HashSet;
use std::io::BufRead;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        source: serde_json::Error,
    },
    #[error("line {0}: empty utterance id")]
    EmptyId(usize),
    #[error("line {line}: duplicate utterance id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One manifest line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceRecord {
    pub id: String,
    #[serde(rename = "logprobs")]
    pub logprob_source: PathBuf,
    #[serde(rename = "text", default, skip_serializing_if = "Option::is_none")]
    pub reference_text: Option<String>,
    #[serde(
        rename = "transducer_alignment",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub transducer_alignment_source: Option<PathBuf>,
}

/// Reads a manifest. Relative paths are resolved against `base_dir`.
pub fn load_manifest<R: BufRead>(
    source: R,
    base_dir: Option<&Path>,
) -> Result<Vec<UtteranceRecord>, ManifestError> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut rec: UtteranceRecord = serde_json::from_str(&line)
            .map_err(|source| ManifestError::Json { line: i + 1, source })?;
        if rec.id.trim().is_empty() {
            return Err(ManifestError::EmptyId(i + 1));
        }
        if !seen.insert(rec.id.clone()) {
            return Err(ManifestError::DuplicateId {
                line: i + 1,
                id: rec.id,
            });
        }
        if let Some(base) = base_dir {
            rec.logprob_source = resolve(base, &rec.logprob_source);
            rec.transducer_alignment_source = rec
                .transducer_alignment_source
                .map(|p| resolve(base, &p));
        }
        out.push(rec);
    }
    Ok(out)
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}
