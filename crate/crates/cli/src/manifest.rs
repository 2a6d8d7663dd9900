//! Run manifest: one line per artifact with a content hash, the config hash
//! and the seed that produced it. Lets a rerun prove that skipped stages
//! left artifacts untouched.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};

/// FNV-1a 64-bit.
pub fn fnv64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

#[derive(Debug, Clone)]
pub struct ManifestEntry {
    pub stage: String,
    pub artifact: String,
    pub content_hash: u64,
    pub config_hash: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, Default)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    /// Hash every artifact file of every stage, in stage order.
    pub fn collect(
        stages: &[(String, Vec<String>)],
        output_dir: &Path,
        config_hash: u64,
        seed: u64,
    ) -> Result<Manifest> {
        let mut entries = Vec::new();
        for (stage, artifacts) in stages {
            for artifact in artifacts {
                let path = output_dir.join(artifact);
                let bytes = std::fs::read(&path)
                    .with_context(|| format!("manifest: cannot read {}", path.display()))?;
                entries.push(ManifestEntry {
                    stage: stage.clone(),
                    artifact: artifact.clone(),
                    content_hash: fnv64(&bytes),
                    config_hash,
                    seed,
                });
            }
        }
        Ok(Manifest { entries })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("stage\tartifact\tcontent_fnv64\tconfig_fnv64\tseed\n");
        for e in &self.entries {
            let _ = writeln!(
                out,
                "{}\t{}\t{:016x}\t{:016x}\t{}",
                e.stage, e.artifact, e.content_hash, e.config_hash, e.seed
            );
        }
        out
    }

    pub fn write(&self, output_dir: &Path) -> Result<()> {
        let path = output_dir.join("manifest.tsv");
        std::fs::write(&path, self.to_text())
            .with_context(|| format!("cannot write {}", path.display()))
    }
}
