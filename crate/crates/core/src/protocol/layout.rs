use std::path::{Path, PathBuf};

use crate::error::{DraError, Result};

pub const DPLOCAL: &str = "dplocal";
pub const INPUTFILES: &str = "inputfiles";
pub const MSOC: &str = "msoc";

/// Directory tree of one request: `<root>/<request id>/{dplocal, inputfiles,
/// msoc}` plus, at the coordinator, one `msoc<dp_cd>` inbox per partner.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestLayout {
    request_dir: PathBuf,
}

impl RequestLayout {
    pub fn new(root: impl AsRef<Path>, request_id: &str) -> Self {
        Self {
            request_dir: root.as_ref().join(request_id),
        }
    }

    pub fn request_dir(&self) -> &Path {
        &self.request_dir
    }

    pub fn dplocal(&self) -> PathBuf {
        self.request_dir.join(DPLOCAL)
    }

    pub fn inputfiles(&self) -> PathBuf {
        self.request_dir.join(INPUTFILES)
    }

    pub fn msoc(&self) -> PathBuf {
        self.request_dir.join(MSOC)
    }

    pub fn msoc_for(&self, dp_cd: u32) -> PathBuf {
        self.request_dir.join(format!("{MSOC}{dp_cd}"))
    }

    fn base_dirs(&self) -> [PathBuf; 3] {
        [self.dplocal(), self.inputfiles(), self.msoc()]
    }

    pub fn create_worker(&self) -> Result<()> {
        for d in self.base_dirs() {
            std::fs::create_dir_all(&d).map_err(|e| DraError::io(&d, e))?;
        }
        Ok(())
    }

    pub fn create_coordinator(&self, partners: &[u32]) -> Result<()> {
        self.create_worker()?;
        for &dp in partners {
            let d = self.msoc_for(dp);
            std::fs::create_dir_all(&d).map_err(|e| DraError::io(&d, e))?;
        }
        Ok(())
    }

    pub fn check_coordinator(&self, partners: &[u32]) -> Result<()> {
        let mut dirs: Vec<PathBuf> = self.base_dirs().into();
        dirs.extend(partners.iter().map(|&dp| self.msoc_for(dp)));
        match dirs.iter().find(|d| !d.is_dir()) {
            Some(d) => Err(DraError::Protocol(format!("directory {} is missing", d.display()))),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coordinator_has_one_inbox_per_partner() {
        let tmp = tempfile::tempdir().unwrap();
        let l = RequestLayout::new(tmp.path(), "request_1");
        assert!(l.check_coordinator(&[1]).is_err());
        l.create_coordinator(&[1, 2, 3]).unwrap();
        l.check_coordinator(&[1, 2, 3]).unwrap();
        assert!(l.msoc_for(2).ends_with("request_1/msoc2"));
    }
}
