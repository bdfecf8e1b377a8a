//! Dataset download with checksum pinning. Fetches are cache-first: a file
//! that is already present is only re-verified, never re-downloaded.

use std::io::Read;
use std::path::PathBuf;

use flate2::read::GzDecoder;
use rfne_core::{Error, Result};
use sha2::{Digest, Sha256};

/// Pinned digest of the bank-marketing CSV (41,188 rows, 20 features + y).
pub const BANK_MARKETING_SHA256: &str =
    "555f0e9a89a07616c0c123500b8be17cc97818057a7db9826860f77df8d33bbf";

/// Repository archive carrying the CSV; override with `RFNE_FETCH_URL`.
const BANK_MARKETING_URL: &str =
    "https://github.com/madmashup/targeted-marketing-predictive-engine/archive/refs/heads/master.tar.gz";

/// Archive member holding the data.
const BANK_MARKETING_MEMBER: &str = "banking.csv";

/// Hard cap on accepted download size.
const MAX_DOWNLOAD: u64 = 256 << 20;

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn count_rows(bytes: &[u8]) -> usize {
    let lines = bytes.iter().filter(|&&b| b == b'\n').count();
    lines.saturating_sub(1)
}

/// Resolves the data directory: flag, then `RFNE_DATA_DIR`, then `data`.
pub fn data_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os("RFNE_DATA_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("data"))
}

/// Fetches a named dataset into the data directory and verifies its
/// checksum. Currently the only dataset is `bank-marketing`.
pub fn cmd_fetch(dataset: &str, dir: Option<PathBuf>) -> Result<()> {
    if dataset != "bank-marketing" {
        return Err(Error::config(format!(
            "unknown dataset {dataset:?}; available: bank-marketing"
        )));
    }
    let dir = data_dir(dir);
    let path = dir.join("bank-marketing.csv");

    if path.is_file() {
        let bytes = std::fs::read(&path)?;
        let digest = sha256_hex(&bytes);
        if digest != BANK_MARKETING_SHA256 {
            return Err(Error::data(format!(
                "checksum mismatch for {}: expected {BANK_MARKETING_SHA256}, got {digest}; \
                 delete the file to re-download",
                path.display()
            )));
        }
        println!(
            "bank-marketing: cache hit at {} ({} rows, sha256 verified)",
            path.display(),
            count_rows(&bytes)
        );
        return Ok(());
    }

    let url =
        std::env::var("RFNE_FETCH_URL").unwrap_or_else(|_| BANK_MARKETING_URL.to_string());
    eprintln!("downloading {url}");
    let response = ureq::get(&url)
        .call()
        .map_err(|e| Error::data(format!("download failed: {e}")))?;
    let mut archive = Vec::new();
    response
        .into_reader()
        .take(MAX_DOWNLOAD)
        .read_to_end(&mut archive)
        .map_err(|e| Error::data(format!("download failed: {e}")))?;

    let bytes = extract_member(&archive, BANK_MARKETING_MEMBER)?;
    let digest = sha256_hex(&bytes);
    if digest != BANK_MARKETING_SHA256 {
        return Err(Error::data(format!(
            "downloaded data failed checksum: expected {BANK_MARKETING_SHA256}, got {digest}"
        )));
    }
    std::fs::create_dir_all(&dir)?;
    std::fs::write(&path, &bytes)?;
    println!(
        "bank-marketing: fetched to {} ({} rows, sha256 verified)",
        path.display(),
        count_rows(&bytes)
    );
    Ok(())
}

/// Pulls one file out of a gzipped tar archive by file name.
fn extract_member(archive: &[u8], member: &str) -> Result<Vec<u8>> {
    let mut tar = tar::Archive::new(GzDecoder::new(archive));
    for entry in tar.entries().map_err(|e| Error::data(format!("bad archive: {e}")))? {
        let mut entry = entry.map_err(|e| Error::data(format!("bad archive: {e}")))?;
        let path = entry.path().map_err(|e| Error::data(format!("bad archive: {e}")))?;
        if path.file_name().is_some_and(|n| n == member) {
            let mut bytes = Vec::new();
            entry
                .read_to_end(&mut bytes)
                .map_err(|e| Error::data(format!("bad archive: {e}")))?;
            return Ok(bytes);
        }
    }
    Err(Error::data(format!("archive does not contain {member:?}")))
}
