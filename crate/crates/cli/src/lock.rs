use std::fs::{self, OpenOptions};
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};

/// Exclusive claim on a store file, held as `<store>.lock` for the life
/// of the value.
#[derive(Debug)]
pub struct StoreLock {
    path: PathBuf,
}

pub fn lock_path(store: &Path) -> PathBuf {
    let mut name = store.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".lock");
    store.with_file_name(name)
}

impl StoreLock {
    /// Fails with [`LockError::Held`] when another process holds the lock.
    pub fn acquire(store: &Path) -> Result<StoreLock, LockError> {
        let path = lock_path(store);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(StoreLock { path })
            }
            Err(e) if e.kind() == ErrorKind::AlreadyExists => Err(LockError::Held(path)),
            Err(e) => Err(LockError::Io(format!("{}: {e}", path.display()))),
        }
    }
}

impl Drop for StoreLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[derive(Debug)]
pub enum LockError {
    Held(PathBuf),
    Io(String),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn second_claim_fails_until_the_first_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let store = dir.path().join("s.json");
        let first = StoreLock::acquire(&store).unwrap();
        assert!(matches!(StoreLock::acquire(&store), Err(LockError::Held(_))));
        drop(first);
        assert!(StoreLock::acquire(&store).is_ok());
    }
}
