use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

fn parent_of(path: &Path) -> Result<PathBuf> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&parent).map_err(|e| Error::io(format!("creating {}", parent.display()), e))?;
    Ok(parent)
}

/// Fills a fresh directory with `fill` and moves it to `out`, replacing any
/// previous contents only once `fill` succeeded. On failure nothing is
/// left at `out`.
pub fn write_dir_atomically<V>(out: &Path, fill: impl FnOnce(&Path) -> Result<V>) -> Result<V> {
    let parent = parent_of(out)?;
    let staging = tempfile::Builder::new()
        .prefix(".cogload-staging-")
        .tempdir_in(&parent)
        .map_err(|e| Error::io(format!("creating staging directory in {}", parent.display()), e))?;
    let value = fill(staging.path())?;
    let staged = staging.keep();
    let cleanup = |e: std::io::Error, what: String| {
        let _ = std::fs::remove_dir_all(&staged);
        Error::io(what, e)
    };
    if out.exists() {
        let old = tempfile::Builder::new()
            .prefix(".cogload-old-")
            .tempdir_in(&parent)
            .map_err(|e| cleanup(e, format!("creating a directory in {}", parent.display())))?
            .keep();
        let aside = old.join("previous");
        std::fs::rename(out, &aside).map_err(|e| cleanup(e, format!("moving {} aside", out.display())))?;
        if let Err(e) = std::fs::rename(&staged, out) {
            let _ = std::fs::rename(&aside, out);
            let _ = std::fs::remove_dir_all(&old);
            return Err(cleanup(e, format!("replacing {}", out.display())));
        }
        let _ = std::fs::remove_dir_all(&old);
    } else {
        std::fs::rename(&staged, out).map_err(|e| cleanup(e, format!("creating {}", out.display())))?;
    }
    Ok(value)
}

/// Writes `bytes` to a temporary file next to `out` and renames it over
/// `out`.
pub fn write_file_atomically(out: &Path, bytes: &[u8]) -> Result<()> {
    let parent = parent_of(out)?;
    let mut tmp = tempfile::NamedTempFile::new_in(&parent)
        .map_err(|e| Error::io(format!("creating a file in {}", parent.display()), e))?;
    std::io::Write::write_all(&mut tmp, bytes)?;
    tmp.persist(out)
        .map_err(|e| Error::io(format!("writing {}", out.display()), e.error))?;
    Ok(())
}
