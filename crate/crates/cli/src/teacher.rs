//! File-backed teacher embeddings: a `#dim=<N>` header, then one
//! `utterance_id<TAB>base64(little-endian f32 × N)` record per line.

use std::collections::BTreeMap;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use sens_asr_core::distillation::TeacherProvider;
use sens_asr_core::Error as CoreError;

use crate::error::{read_to_string, write_bytes, CliError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct FileTeacher {
    dim: usize,
    embeddings: BTreeMap<String, Vec<f32>>,
}

impl FileTeacher {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(CliError::format("teacher dimension must be positive"));
        }
        Ok(Self {
            dim,
            embeddings: BTreeMap::new(),
        })
    }

    pub fn insert(&mut self, id: &str, embedding: Vec<f32>) -> Result<()> {
        if embedding.len() != self.dim {
            return Err(CliError::format(format!(
                "teacher embedding for {id} has {} values, header declares {}",
                embedding.len(),
                self.dim
            )));
        }
        if self.embeddings.insert(id.to_string(), embedding).is_some() {
            return Err(CliError::format(format!("duplicate teacher record {id}")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.embeddings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.embeddings.is_empty()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines
            .next()
            .ok_or_else(|| CliError::format("teacher file is empty"))?;
        let dim = header
            .trim()
            .strip_prefix("#dim=")
            .and_then(|d| d.parse::<usize>().ok())
            .ok_or_else(|| CliError::format(format!("teacher header must be `#dim=<N>`, got {header:?}")))?;
        let mut out = Self::new(dim)?;
        for (i, line) in lines {
            let (id, payload) = line
                .split_once('\t')
                .ok_or_else(|| CliError::format(format!("teacher line {}: expected id<TAB>base64", i + 1)))?;
            let bytes = STANDARD
                .decode(payload.trim())
                .map_err(|e| CliError::format(format!("teacher line {}: {e}", i + 1)))?;
            if bytes.len() % 4 != 0 {
                return Err(CliError::format(format!(
                    "teacher line {}: {} bytes is not a whole number of floats",
                    i + 1,
                    bytes.len()
                )));
            }
            let values = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            out.insert(id, values)?;
        }
        Ok(out)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("#dim={}\n", self.dim);
        for (id, values) in &self.embeddings {
            let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
            out.push_str(id);
            out.push('\t');
            out.push_str(&STANDARD.encode(bytes));
            out.push('\n');
        }
        out
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_bytes(path, self.to_text().as_bytes())
    }
}

impl TeacherProvider for FileTeacher {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, utterance_id: &str, _text: &str) -> sens_asr_core::Result<Vec<f32>> {
        self.embeddings
            .get(utterance_id)
            .cloned()
            .ok_or_else(|| CoreError::Corpus(format!("no teacher embedding for {utterance_id}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_lookup() {
        let mut t = FileTeacher::new(2).unwrap();
        t.insert("u1", vec![0.5, -1.0]).unwrap();
        t.insert("u0", vec![1e-3, 3.0]).unwrap();
        let text = t.to_text();
        assert!(text.starts_with("#dim=2\nu0\t"));
        let back = FileTeacher::parse(&text).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.embed("u1", "ignored").unwrap(), vec![0.5, -1.0]);
        assert_eq!(back.embed("zz", "").unwrap_err().category(), "corpus");
    }

    #[test]
    fn rejects_bad_records() {
        assert!(FileTeacher::parse("dim=2\n").is_err());
        assert!(FileTeacher::parse("#dim=2\nu0\tAAAAAA==\n").is_err());
        assert!(FileTeacher::parse("#dim=1\nu0\t!!!\n").is_err());
        assert!(FileTeacher::parse("#dim=1\nu0\tAAAAAA==\nu0\tAAAAAA==\n").is_err());
        assert_eq!(FileTeacher::parse("#dim=1\nu0\tAAAAAA==\n").unwrap().len(), 1);
    }
}
