use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{AnalogyQuadruple, DataError, SplitSizes};

/// JSON sidecar written next to the split TSV files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub sizes: SplitSizes,
    pub counts: SplitCounts,
    /// `(path, sha256)` of every source file, in the order given.
    pub source_checksums: Vec<(String, String)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    pub corpus: usize,
    pub words: usize,
}

pub fn file_checksum(path: &Path) -> Result<String, DataError> {
    let bytes = fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Writes `A\tB\tC\tD\tfeature` lines.
pub fn write_quadruples_tsv(path: &Path, quads: &[AnalogyQuadruple]) -> Result<(), DataError> {
    let mut out = Vec::new();
    for q in quads {
        writeln!(out, "{}\t{}\t{}\t{}\t{}", q.a, q.b, q.c, q.d, q.feature)?;
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_quadruples_tsv(path: &Path) -> Result<Vec<AnalogyQuadruple>, DataError> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, line)| {
            let f: Vec<&str> = line.split('\t').collect();
            match f.as_slice() {
                [a, b, c, d, feat] => Ok(AnalogyQuadruple::with_feature(*a, *b, *c, *d, *feat)),
                [a, b, c, d] => Ok(AnalogyQuadruple::new(*a, *b, *c, *d)),
                _ => Err(DataError::Malformed {
                    line: i + 1,
                    reason: format!("expected 5 fields, found {}", f.len()),
                }),
            }
        })
        .collect()
}

pub fn write_words(path: &Path, words: &[String]) -> Result<(), DataError> {
    let mut text = words.join("\n");
    if !text.is_empty() {
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

pub fn read_words(path: &Path) -> Result<Vec<String>, DataError> {
    Ok(fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.is_empty())
        .map(str::to_owned)
        .collect())
}
