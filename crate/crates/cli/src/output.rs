//! All-or-nothing output writing.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

/// Serializes `rows` as RFC-4180 CSV with a header row.
pub fn to_csv<T: Serialize>(rows: &[T], header: &[&str]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    Ok(w.into_inner()?)
}

/// Writes every file or none: each goes to a temporary sibling first and is
/// renamed into place; on any failure the files already placed and the
/// temporaries are removed.
pub fn write_all(files: &[(PathBuf, Vec<u8>)]) -> Result<()> {
    let mut placed: Vec<&Path> = Vec::new();
    let result = (|| -> Result<()> {
        for (path, bytes) in files {
            let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("writing into {}", dir.display()))?;
            tmp.write_all(bytes)?;
            tmp.as_file().sync_all()?;
            // dropping the returned temp file on failure deletes it
            tmp.persist(path).map_err(|e| e.error).with_context(|| format!("writing {}", path.display()))?;
            placed.push(path);
        }
        Ok(())
    })();
    if result.is_err() {
        for p in placed {
            let _ = fs::remove_file(p);
        }
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Row {
        name: &'static str,
        v: f64,
        se: Option<f64>,
    }

    #[test]
    fn csv_quotes_and_leaves_missing_values_empty() {
        let rows = [Row { name: "a,b", v: 0.5, se: None }, Row { name: "c\"d", v: 1e-20, se: Some(2.0) }];
        let text = String::from_utf8(to_csv(&rows, &["name", "v", "se"]).unwrap()).unwrap();
        assert_eq!(text, "name,v,se\n\"a,b\",0.5,\n\"c\"\"d\",1e-20,2.0\n");
    }

    #[test]
    fn failed_batch_leaves_nothing_behind() {
        let dir = tempfile::tempdir().unwrap();
        let ok = dir.path().join("a.csv");
        // a directory in the way makes the second rename fail
        let blocked = dir.path().join("b.csv");
        fs::create_dir(&blocked).unwrap();
        fs::write(blocked.join("x"), b"x").unwrap();
        let err = write_all(&[(ok.clone(), b"1".to_vec()), (blocked.clone(), b"2".to_vec())]);
        assert!(err.is_err());
        assert!(!ok.exists());
        let leftovers: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(leftovers, vec![std::ffi::OsString::from("b.csv")]);
    }
}
