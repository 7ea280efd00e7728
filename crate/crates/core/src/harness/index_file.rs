//! Index-only handoff through a shared directory.
//!
//! The coordinator writes `<workdir>/assign/<batch_id>.idx` containing
//! `"start count workload_name\n"` before sending ASSIGN; the worker reads
//! it and deletes it once the batch is done. Only indexes cross the control
//! channel; the data itself stays where both sides can read it.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SharedIndexFile {
    pub batch_id: u64,
    pub start_index: u64,
    pub count: u64,
    pub workload: String,
}

pub fn assign_dir(workdir: &Path) -> PathBuf {
    workdir.join("assign")
}

pub fn index_path(workdir: &Path, batch_id: u64) -> PathBuf {
    assign_dir(workdir).join(format!("{batch_id}.idx"))
}

impl SharedIndexFile {
    pub fn contents(&self) -> String {
        format!("{} {} {}\n", self.start_index, self.count, self.workload)
    }

    /// Writes via a temp file and rename so readers never see partial content.
    pub fn write(&self, workdir: &Path) -> Result<PathBuf> {
        let dir = assign_dir(workdir);
        fs::create_dir_all(&dir)?;
        let path = index_path(workdir, self.batch_id);
        let tmp = dir.join(format!(".{}.tmp", self.batch_id));
        fs::write(&tmp, self.contents())?;
        fs::rename(&tmp, &path)?;
        Ok(path)
    }

    pub fn read(workdir: &Path, batch_id: u64) -> Result<Self> {
        let path = index_path(workdir, batch_id);
        let text = fs::read_to_string(&path)?;
        let bad = |reason: &str| Error::Harness(format!("{}: {reason}", path.display()));
        let fields: Vec<&str> = text.split_whitespace().collect();
        if fields.len() != 3 || !text.ends_with('\n') {
            return Err(bad("expected `start count workload\\n`"));
        }
        Ok(Self {
            batch_id,
            start_index: fields[0].parse().map_err(|_| bad("bad start index"))?,
            count: fields[1].parse().map_err(|_| bad("bad count"))?,
            workload: fields[2].to_string(),
        })
    }

    pub fn remove(workdir: &Path, batch_id: u64) -> Result<()> {
        fs::remove_file(index_path(workdir, batch_id))?;
        Ok(())
    }
}

/// Index files currently present, sorted by batch id.
pub fn list(workdir: &Path) -> Result<Vec<u64>> {
    let dir = assign_dir(workdir);
    let entries = match fs::read_dir(&dir) {
        Ok(e) => e,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let mut ids = Vec::new();
    for entry in entries {
        let name = entry?.file_name();
        if let Some(id) = name.to_str().and_then(|n| n.strip_suffix(".idx")).and_then(|n| n.parse().ok()) {
            ids.push(id);
        }
    }
    ids.sort_unstable();
    Ok(ids)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn write_read_remove() {
        let dir = tempfile::tempdir().unwrap();
        let f = SharedIndexFile { batch_id: 12, start_index: 340, count: 6, workload: "speech_to_text".into() };
        let path = f.write(dir.path()).unwrap();
        assert_eq!(path, dir.path().join("assign/12.idx"));
        assert_eq!(fs::read_to_string(&path).unwrap(), "340 6 speech_to_text\n");
        assert_eq!(SharedIndexFile::read(dir.path(), 12).unwrap(), f);
        assert_eq!(list(dir.path()).unwrap(), vec![12]);
        SharedIndexFile::remove(dir.path(), 12).unwrap();
        assert!(list(dir.path()).unwrap().is_empty());
    }

    #[test]
    fn rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(assign_dir(dir.path())).unwrap();
        fs::write(index_path(dir.path(), 3), "1 2\n").unwrap();
        assert!(SharedIndexFile::read(dir.path(), 3).is_err());
        assert!(SharedIndexFile::read(dir.path(), 4).is_err());
    }
}
