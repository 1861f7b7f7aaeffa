//! Profile export (CSV plus JSON sidecar) and a content-addressed cache.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};

use super::{build_phi_profile, KernelProfile, ProfileGrid, ProfileKind, CONVENTION_VERSION};
use crate::error::{Error, Result};
use crate::geometry::SigmaParams;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileMeta {
    pub convention_version: u32,
    pub kind: ProfileKind,
    pub dim: usize,
    pub sigma: f64,
    pub s_max: f64,
    pub n_samples: usize,
    pub tail_amplitude: f64,
    pub switch_radius: f64,
    pub switch_mismatch: f64,
    pub slopes: Vec<f64>,
}

fn sidecar(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

/// Write `path` atomically through a temporary sibling.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_profile(profile: &KernelProfile, csv: &Path) -> Result<()> {
    let mut text = String::from("s,value\n");
    for (s, v) in profile.samples() {
        text.push_str(&format!("{s:e},{v:e}\n"));
    }
    let p = profile.params();
    let meta = ProfileMeta {
        convention_version: CONVENTION_VERSION,
        kind: profile.kind(),
        dim: p.dim(),
        sigma: p.sigma(),
        s_max: profile.s_max(),
        n_samples: profile.nodes().len(),
        tail_amplitude: profile.tail_amplitude(),
        switch_radius: profile.switch_radius(),
        switch_mismatch: profile.switch_mismatch(),
        slopes: profile.slopes().to_vec(),
    };
    write_atomic(csv, text.as_bytes())?;
    write_atomic(&sidecar(csv), serde_json::to_string_pretty(&meta)?.as_bytes())
}

pub fn read_profile(csv: &Path) -> Result<KernelProfile> {
    let meta: ProfileMeta = serde_json::from_str(&fs::read_to_string(sidecar(csv))?)?;
    if meta.convention_version != CONVENTION_VERSION {
        return Err(Error::Kernel(format!(
            "profile {} has convention version {}, expected {CONVENTION_VERSION}",
            csv.display(),
            meta.convention_version
        )));
    }
    let text = fs::read_to_string(csv)?;
    let mut s = Vec::new();
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let bad = || Error::Kernel(format!("{}: malformed line {}", csv.display(), i + 1));
        let (a, b) = line.split_once(',').ok_or_else(bad)?;
        s.push(a.trim().parse::<f64>().map_err(|_| bad())?);
        values.push(b.trim().parse::<f64>().map_err(|_| bad())?);
    }
    if s.len() != meta.slopes.len() || s.len() < 2 {
        return Err(Error::Kernel(format!(
            "{}: {} samples but {} slopes",
            csv.display(),
            s.len(),
            meta.slopes.len()
        )));
    }
    let params = SigmaParams::new(meta.dim, meta.sigma)?;
    Ok(KernelProfile::from_parts(
        params,
        meta.kind,
        s,
        values,
        meta.slopes,
        meta.switch_radius,
        meta.switch_mismatch,
    ))
}

/// Directory of `Φ` profiles keyed by a hash of their build inputs.
#[derive(Debug, Clone)]
pub struct ProfileCache {
    dir: PathBuf,
}

impl ProfileCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn key(p: &SigmaParams, grid: &ProfileGrid) -> String {
        let canon = format!(
            "v{CONVENTION_VERSION};N={};sigma={:e};s_max={:e};n={};s_min={:e}",
            p.dim(),
            p.sigma(),
            grid.s_max,
            grid.n_samples,
            grid.s_min
        );
        let digest = Sha256::digest(canon.as_bytes());
        digest.iter().take(12).map(|b| format!("{b:02x}")).collect()
    }

    pub fn path_for(&self, p: &SigmaParams, grid: &ProfileGrid) -> PathBuf {
        self.dir.join(format!("phi-{}.csv", Self::key(p, grid)))
    }

    /// Load the cached profile or build and store it.
    pub fn phi(&self, p: &SigmaParams, grid: ProfileGrid) -> Result<KernelProfile> {
        let path = self.path_for(p, &grid);
        if path.exists() {
            if let Ok(profile) = read_profile(&path) {
                return Ok(profile);
            }
        }
        let profile = build_phi_profile(p, grid)?;
        write_profile(&profile, &path)?;
        Ok(profile)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_round_trip_and_cache() {
        let dir = tempfile::tempdir().unwrap();
        let p = SigmaParams::new(1, 1.0).unwrap();
        let grid = ProfileGrid::for_params(&p);
        let cache = ProfileCache::new(dir.path()).unwrap();
        let built = cache.phi(&p, grid).unwrap();
        assert!(cache.path_for(&p, &grid).exists());
        let loaded = cache.phi(&p, grid).unwrap();
        for s in [0.0, 0.37, 12.0, 1e3] {
            assert_eq!(built.eval(s), loaded.eval(s));
        }
        assert_eq!(built.tail_amplitude(), loaded.tail_amplitude());
        let other = ProfileGrid { n_samples: 512, ..grid };
        assert_ne!(ProfileCache::key(&p, &grid), ProfileCache::key(&p, &other));
    }
}
