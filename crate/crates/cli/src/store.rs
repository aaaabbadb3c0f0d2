//! Append-only artifact store. Every command writes into a fresh directory
//! named after a hash of its inputs; directories are assembled under a
//! temporary name and renamed into place, so a failed command leaves nothing
//! behind and a finished one is never rewritten.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const ROOT_ENV: &str = "LINGAN_ARTIFACT_ROOT";
pub const DEFAULT_ROOT: &str = "artifacts";

/// First 16 hex digits of the SHA-256 of `value`'s JSON form.
pub fn content_hash<T: Serialize>(value: &T) -> Result<String> {
    let bytes = serde_json::to_vec(value)?;
    Ok(hex::encode(Sha256::digest(&bytes))[..16].to_string())
}

/// Where a command's output goes.
pub enum Target {
    /// Already present from an earlier identical command.
    Existing(PathBuf),
    Fresh(Staging),
}

pub struct Staging {
    tmp: PathBuf,
    dest: PathBuf,
    committed: bool,
}

impl Staging {
    pub fn path(&self) -> &Path {
        &self.tmp
    }

    pub fn write(&self, rel: impl AsRef<Path>, contents: impl AsRef<[u8]>) -> Result<()> {
        let p = self.tmp.join(rel);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&p, contents).with_context(|| format!("writing {}", p.display()))
    }

    pub fn write_json<T: Serialize>(&self, rel: impl AsRef<Path>, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(rel, text)
    }

    /// Moves the staged directory into place.
    pub fn commit(mut self) -> Result<PathBuf> {
        if let Some(parent) = self.dest.parent() {
            std::fs::create_dir_all(parent)?;
        }
        if self.dest.exists() {
            // an explicit --out that exists but is empty
            std::fs::remove_dir(&self.dest).with_context(|| format!("{} is not empty", self.dest.display()))?;
        }
        std::fs::rename(&self.tmp, &self.dest).with_context(|| format!("moving results to {}", self.dest.display()))?;
        self.committed = true;
        Ok(self.dest.clone())
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if !self.committed {
            let _ = std::fs::remove_dir_all(&self.tmp);
        }
    }
}

fn stage(dest: PathBuf) -> Result<Staging> {
    let parent = dest.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&parent).with_context(|| format!("creating {}", parent.display()))?;
    let name = dest.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into());
    let tmp = parent.join(format!(".tmp-{name}-{}", std::process::id()));
    if tmp.exists() {
        std::fs::remove_dir_all(&tmp)?;
    }
    std::fs::create_dir_all(&tmp)?;
    Ok(Staging { tmp, dest, committed: false })
}

/// Resolves the output directory: `out` if given (must be absent or empty),
/// else `<root>/<kind>/<key>`. An existing store entry is returned as is
/// when `marker` is present in it.
pub fn target(root: &Path, kind: &str, key: &str, out: Option<&Path>, marker: &str) -> Result<Target> {
    if let Some(out) = out {
        if out.exists() && std::fs::read_dir(out)?.next().is_some() {
            bail!("output directory {} already exists and is not empty; artifacts are never overwritten", out.display());
        }
        return Ok(Target::Fresh(stage(out.to_path_buf())?));
    }
    let dest = root.join(kind).join(key);
    if dest.join(marker).is_file() {
        return Ok(Target::Existing(dest));
    }
    if dest.exists() {
        bail!("{} exists but is incomplete (no {marker}); remove it to recompute", dest.display());
    }
    Ok(Target::Fresh(stage(dest)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uncommitted_staging_is_removed() {
        let dir = tempfile::tempdir().unwrap();
        let tmp = match target(dir.path(), "runs", "abc", None, "done").unwrap() {
            Target::Fresh(s) => {
                s.write("x.txt", "1").unwrap();
                s.path().to_path_buf()
            }
            Target::Existing(_) => unreachable!(),
        };
        assert!(!tmp.exists());
        assert!(!dir.path().join("runs/abc").exists());
    }

    #[test]
    fn committed_entry_is_reused() {
        let dir = tempfile::tempdir().unwrap();
        let Target::Fresh(s) = target(dir.path(), "runs", "abc", None, "done").unwrap() else { unreachable!() };
        s.write("done", "").unwrap();
        let dest = s.commit().unwrap();
        assert!(matches!(target(dir.path(), "runs", "abc", None, "done").unwrap(), Target::Existing(p) if p == dest));
        assert!(target(dir.path(), "x", "y", Some(&dest), "done").is_err());
    }
}
