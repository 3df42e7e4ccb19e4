//! Staged output files, written only once a command has produced all of them.

use std::path::{Path, PathBuf};

use tad_core::io::write_atomic;

use crate::Failure;

#[derive(Default)]
pub struct Outputs {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Outputs {
    pub fn add(&mut self, path: PathBuf, bytes: Vec<u8>) {
        self.files.push((path, bytes));
    }

    /// Writes every staged file. On the first failure the files and
    /// directories created so far are removed again.
    pub fn commit(self) -> Result<(), Failure> {
        let mut made_dirs: Vec<PathBuf> = Vec::new();
        let mut written: Vec<PathBuf> = Vec::new();
        let mut result = Ok(());
        for (path, bytes) in &self.files {
            if let Err(e) = create_parents(path, &mut made_dirs) {
                result = Err(Failure::Data(format!(
                    "cannot create directory for {}: {e}",
                    path.display()
                )));
                break;
            }
            match write_atomic(path, |w| Ok(w.write_all(bytes)?)) {
                Ok(()) => written.push(path.clone()),
                Err(e) => {
                    result = Err(Failure::Data(format!(
                        "cannot write {}: {e}",
                        path.display()
                    )));
                    break;
                }
            }
        }
        if result.is_err() {
            for p in written.iter().rev() {
                let _ = std::fs::remove_file(p);
            }
            for d in made_dirs.iter().rev() {
                let _ = std::fs::remove_dir(d);
            }
        }
        result
    }
}

fn create_parents(path: &Path, made: &mut Vec<PathBuf>) -> std::io::Result<()> {
    let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) else {
        return Ok(());
    };
    let missing: Vec<&Path> = parent
        .ancestors()
        .take_while(|a| !a.as_os_str().is_empty() && !a.exists())
        .collect();
    for dir in missing.into_iter().rev() {
        std::fs::create_dir(dir)?;
        made.push(dir.to_path_buf());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn failure_removes_everything_already_written() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("blocker");
        std::fs::write(&blocker, b"x").unwrap();
        let mut out = Outputs::default();
        out.add(dir.path().join("new/a.txt"), b"a".to_vec());
        out.add(blocker.join("b.txt"), b"b".to_vec());
        assert!(matches!(out.commit(), Err(Failure::Data(_))));
        assert!(!dir.path().join("new").exists());
        let left: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
        assert_eq!(left.len(), 1);
    }

    #[test]
    fn success_writes_every_file() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = Outputs::default();
        out.add(dir.path().join("x/y/a.txt"), b"a".to_vec());
        out.add(dir.path().join("b.txt"), b"b".to_vec());
        out.commit().unwrap();
        assert_eq!(std::fs::read(dir.path().join("x/y/a.txt")).unwrap(), b"a");
        assert_eq!(std::fs::read(dir.path().join("b.txt")).unwrap(), b"b");
    }
}
