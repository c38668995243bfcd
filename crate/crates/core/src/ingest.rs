//! Corpus loading: a directory of UTF-8 text files or a JSON-lines file.
//!
//! Directory mode assigns `doc_id = relative path` (with `/` separators
//! on every platform) and walks files in sorted order. JSONL mode reads
//! one `{"id", "title", "text", "metadata"}` object per line. Empty
//! documents are rejected either way; duplicate ids are an input error.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::types::Document;

#[derive(Deserialize)]
struct JsonlDoc {
    id: String,
    #[serde(default)]
    title: String,
    text: String,
    #[serde(default)]
    metadata: BTreeMap<String, String>,
}

/// Loads a corpus from `path`: a directory of text files or a `.jsonl`
/// file. Output is sorted by `doc_id`.
pub fn load_corpus(path: &Path) -> Result<Vec<Document>> {
    if path.is_dir() {
        load_dir(path)
    } else {
        load_jsonl(path)
    }
}

/// Every regular file under `dir` (hidden files skipped) becomes one
/// document; file contents must be valid UTF-8.
pub fn load_dir(dir: &Path) -> Result<Vec<Document>> {
    let mut entries: Vec<_> = walkdir::WalkDir::new(dir)
        .into_iter()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_file())
        .filter(|e| !e.file_name().to_string_lossy().starts_with('.'))
        .map(|e| e.into_path())
        .collect();
    entries.sort();

    let mut docs = Vec::new();
    for p in entries {
        let rel = p
            .strip_prefix(dir)
            .map_err(|_| Error::Input(format!("path {} escapes corpus root", p.display())))?;
        let doc_id = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        let text = std::fs::read_to_string(&p)
            .map_err(|e| Error::Input(format!("{}: {e}", p.display())))?;
        if text.is_empty() {
            return Err(Error::Input(format!("document '{doc_id}' is empty")));
        }
        docs.push(Document {
            doc_id,
            title: String::new(),
            text,
            metadata: BTreeMap::new(),
        });
    }
    if docs.is_empty() {
        return Err(Error::Input(format!(
            "no documents found under {}",
            dir.display()
        )));
    }
    check_unique(&docs)?;
    Ok(docs)
}

/// One JSON document per line; blank lines skipped.
pub fn load_jsonl(path: &Path) -> Result<Vec<Document>> {
    let raw = std::fs::read_to_string(path)?;
    let mut docs = Vec::new();
    for (lineno, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let d: JsonlDoc = serde_json::from_str(line).map_err(|e| {
            Error::Input(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        if d.text.is_empty() {
            return Err(Error::Input(format!(
                "document '{}' has empty text ({}:{})",
                d.id,
                path.display(),
                lineno + 1
            )));
        }
        docs.push(Document {
            doc_id: d.id,
            title: d.title,
            text: d.text,
            metadata: d.metadata,
        });
    }
    if docs.is_empty() {
        return Err(Error::Input(format!("no documents in {}", path.display())));
    }
    docs.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    check_unique(&docs)?;
    Ok(docs)
}

/// Serializes documents as canonical JSONL (sorted by id, one per line).
pub fn write_jsonl(docs: &[Document], out: &mut impl std::io::Write) -> Result<()> {
    for d in docs {
        let line = serde_json::json!({
            "id": d.doc_id,
            "title": d.title,
            "text": d.text,
            "metadata": d.metadata,
        });
        writeln!(out, "{line}")?;
    }
    Ok(())
}

fn check_unique(docs: &[Document]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for d in docs {
        if !seen.insert(&d.doc_id) {
            return Err(Error::Input(format!("duplicate doc_id '{}'", d.doc_id)));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dir_roundtrip_sorted_ids() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("sub")).unwrap();
        std::fs::write(dir.path().join("b.txt"), "beta").unwrap();
        std::fs::write(dir.path().join("sub/a.txt"), "alpha").unwrap();
        let docs = load_dir(dir.path()).unwrap();
        let ids: Vec<&str> = docs.iter().map(|d| d.doc_id.as_str()).collect();
        assert_eq!(ids, ["b.txt", "sub/a.txt"]);
    }

    #[test]
    fn jsonl_duplicate_id_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.jsonl");
        std::fs::write(&p, "{\"id\":\"x\",\"text\":\"1\"}\n{\"id\":\"x\",\"text\":\"2\"}\n")
            .unwrap();
        assert!(matches!(load_jsonl(&p), Err(Error::Input(_))));
    }

    #[test]
    fn empty_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("e.txt"), "").unwrap();
        assert!(matches!(load_dir(dir.path()), Err(Error::Input(_))));
    }
}
