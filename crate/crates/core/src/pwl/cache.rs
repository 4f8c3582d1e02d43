//! On-disk cache of search results and their CSV table form.
//!
//! Search output depends only on `(ε, α, pieces, config)`, so results are
//! stored as JSON under a SHA-256 key of those inputs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::{OpsConfig, OpsResult, PwlError, VFunction, ops_search};

#[derive(Debug, Clone)]
pub struct OpsCache {
    dir: PathBuf,
}

impl OpsCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn key(vf: &VFunction, pieces: usize, cfg: &OpsConfig) -> String {
        let mut h = Sha256::new();
        // Bit patterns keep the key exact for every float.
        for x in [vf.epsilon, vf.alpha, cfg.delta, cfg.step, cfg.init_end] {
            h.update(x.to_bits().to_le_bytes());
        }
        h.update((pieces as u64).to_le_bytes());
        h.update((cfg.max_iter as u64).to_le_bytes());
        hex::encode(h.finalize())
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("ops-{key}.json"))
    }

    /// Cached result if present, otherwise runs the search and stores it.
    pub fn get_or_compute(
        &self,
        vf: &VFunction,
        pieces: usize,
        cfg: &OpsConfig,
    ) -> Result<(OpsResult, bool), PwlError> {
        let path = self.path(&Self::key(vf, pieces, cfg));
        if let Ok(text) = std::fs::read_to_string(&path)
            && let Ok(hit) = serde_json::from_str::<OpsResult>(&text)
        {
            return Ok((hit, true));
        }
        let result = ops_search(vf, pieces, cfg)?;
        let cache_err =
            |e: &dyn std::fmt::Display| PwlError::Cache(format!("{}: {e}", path.display()));
        std::fs::create_dir_all(&self.dir).map_err(|e| cache_err(&e))?;
        let text = serde_json::to_string(&result).map_err(|e| cache_err(&e))?;
        std::fs::write(&path, text).map_err(|e| cache_err(&e))?;
        Ok((result, false))
    }
}

/// CSV with one row per piece count; list fields are `;`-separated.
pub fn ops_table_csv(rows: &[(usize, OpsResult)]) -> String {
    let join = |v: &[f64]| {
        v.iter()
            .map(|x| x.to_string())
            .collect::<Vec<_>>()
            .join(";")
    };
    let mut out = String::from("pieces,emax,iterations,breakpoints,tangent_points\n");
    for (pieces, r) in rows {
        let _ = writeln!(
            out,
            "{pieces},{},{},{},{}",
            r.emax,
            r.iterations,
            join(&r.pwl.breakpoints),
            join(&r.pwl.tangent_points)
        );
    }
    out
}
