//! Word lists for the false-recall paradigm, resolved against embedding
//! labels.
//!
//! ```toml
//! [[list]]
//! id = "sleep"
//! studied = ["bed", "rest", "awake", ...]
//! lure = "sleep"
//! unrelated = "anchor"
//! ```

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use log::warn;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::experiments::drm::DrmList;
use crate::vector::Embeddings;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ListSpec {
    pub id: String,
    pub studied: Vec<String>,
    pub lure: String,
    pub unrelated: String,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct ListFile {
    #[serde(default)]
    list: Vec<ListSpec>,
}

pub fn parse_drm_lists(text: &str) -> Result<Vec<ListSpec>> {
    let f: ListFile = toml::from_str(text).map_err(|e| Error::Data(format!("DRM list file: {e}")))?;
    Ok(f.list)
}

/// Row index per label. A repeated label keeps its first row; each repeat
/// produces one warning.
pub fn label_index(labels: &[String]) -> (HashMap<&str, usize>, Vec<String>) {
    let mut index = HashMap::with_capacity(labels.len());
    let mut warnings = Vec::new();
    for (i, l) in labels.iter().enumerate() {
        if let Some(&first) = index.get(l.as_str()) {
            warnings.push(format!("duplicate label {l:?} at row {i}; using row {first}"));
        } else {
            index.insert(l.as_str(), i);
        }
    }
    (index, warnings)
}

pub fn resolve_drm_lists(
    specs: &[ListSpec],
    emb: &Embeddings,
    labels: &[String],
) -> Result<(Vec<DrmList>, Vec<String>)> {
    if labels.len() != emb.n_rows() {
        return Err(Error::LengthMismatch { left: emb.n_rows(), right: labels.len() });
    }
    let (index, warnings) = label_index(labels);
    for w in &warnings {
        warn!("{w}");
    }
    let lookup = |word: &str, list: &str| -> Result<Vec<f64>> {
        index
            .get(word)
            .map(|&i| emb.row(i).to_vec())
            .ok_or_else(|| Error::MissingLabel { word: word.into(), list: list.into() })
    };
    let lists = specs
        .iter()
        .map(|s| {
            let list = DrmList {
                list_id: s.id.clone(),
                studied: s.studied.iter().map(|w| lookup(w, &s.id)).collect::<Result<_>>()?,
                lure: lookup(&s.lure, &s.id)?,
                unrelated: lookup(&s.unrelated, &s.id)?,
            };
            list.validate()?;
            Ok(list)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((lists, warnings))
}

pub fn load_drm_lists(path: &Path, emb: &Embeddings, labels: &[String]) -> Result<(Vec<DrmList>, Vec<String>)> {
    resolve_drm_lists(&parse_drm_lists(&fs::read_to_string(path)?)?, emb, labels)
}
