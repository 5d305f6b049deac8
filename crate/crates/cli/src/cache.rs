//! Kernel tables cached on disk under a content hash of the kernel inputs.

use crate::error::CliError;
use gluing_core::fracops::{KernelGridSpec, KernelTable, ProblemParams};
use sha2::{Digest, Sha256};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

/// Hash of everything the kernel samples depend on.
pub fn kernel_key(p: &ProblemParams, spec: &KernelGridSpec) -> String {
    let mut h = Sha256::new();
    h.update(format!(
        "kernel-v1 n={} gamma={:?} xi_min={:?} xi_max={:?} per_efold={}",
        p.n, p.gamma, spec.xi_min, spec.xi_max, spec.per_efold
    ));
    hex::encode(&h.finalize()[..8])
}

pub fn kernel_path(dir: &Path, p: &ProblemParams, spec: &KernelGridSpec) -> PathBuf {
    dir.join(format!("kernel-{}.csv", kernel_key(p, spec)))
}

/// Load the table from `dir` if present and valid, else build and store it.
pub fn load_or_build(dir: &Path, p: &ProblemParams, spec: KernelGridSpec) -> Result<KernelTable, CliError> {
    let path = kernel_path(dir, p, &spec);
    if let Ok(f) = File::open(&path) {
        match KernelTable::read_csv(p, spec, BufReader::new(f)) {
            Ok(t) => {
                log::info!("kernel cache hit: {}", path.display());
                return Ok(t);
            }
            Err(e) => log::warn!("ignoring kernel cache {}: {e}", path.display()),
        }
    }
    log::info!("kernel cache miss: building {}", path.display());
    let table = KernelTable::build(p, spec)?;
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let tmp = path.with_extension("tmp");
    let write = || -> std::io::Result<()> {
        let mut w = BufWriter::new(File::create(&tmp)?);
        table.write_csv(&mut w)?;
        w.flush()?;
        std::fs::rename(&tmp, &path)
    };
    write().map_err(|e| CliError::io(&path, e))?;
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_depends_on_kernel_inputs_only() {
        let p = ProblemParams::new(3, 0.5).unwrap();
        let s = KernelGridSpec::default_for(&p);
        let k = kernel_key(&p, &s);
        assert_eq!(k.len(), 16);
        assert_eq!(k, kernel_key(&p, &s));
        let s2 = KernelGridSpec { per_efold: 999, ..s };
        assert_ne!(k, kernel_key(&p, &s2));
        let p2 = ProblemParams::new(3, 0.25).unwrap();
        assert_ne!(k, kernel_key(&p2, &s));
    }
}
