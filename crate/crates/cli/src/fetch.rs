//! Download of a public case-count CSV, with an optional SHA-256 check.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn download(url: &str) -> Result<Vec<u8>, CliError> {
    if let Some(path) = url.strip_prefix("file://") {
        return std::fs::read(path).map_err(|e| CliError::Network(format!("{url}: {e}")));
    }
    let response = reqwest::blocking::get(url)
        .and_then(|r| r.error_for_status())
        .map_err(|e| CliError::Network(format!("{url}: {e}")))?;
    let bytes = response.bytes().map_err(|e| CliError::Network(format!("{url}: {e}")))?;
    Ok(bytes.to_vec())
}

/// Fetches `url` into `out`. Nothing is written when the checksum does not
/// match.
pub fn fetch(url: &str, out: &Path, expected_sha256: Option<&str>) -> Result<String, CliError> {
    let bytes = download(url)?;
    let actual = sha256_hex(&bytes);
    if let Some(expected) = expected_sha256 {
        if !expected.trim().eq_ignore_ascii_case(&actual) {
            return Err(CliError::Integrity {
                expected: expected.trim().to_ascii_lowercase(),
                actual,
            });
        }
    }
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(out, &bytes).map_err(|e| CliError::io(out, e))?;
    log::info!("fetched {} bytes from {url} into {}", bytes.len(), out.display());
    Ok(actual)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn local_fetch_with_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("src.csv");
        std::fs::write(&src, "date,region,cases,deaths\n").unwrap();
        let url = format!("file://{}", src.display());
        let out = dir.path().join("sub/out.csv");
        let digest = fetch(&url, &out, None).unwrap();
        assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&src).unwrap());
        assert!(fetch(&url, &out, Some(&digest.to_uppercase())).is_ok());

        let other = dir.path().join("other.csv");
        let err = fetch(&url, &other, Some("00")).unwrap_err();
        assert_eq!(err.exit_code(), 5);
        assert!(!other.exists());
    }

    #[test]
    fn missing_source_is_a_network_error() {
        let err = fetch("file:///nonexistent/x.csv", Path::new("/tmp/never.csv"), None).unwrap_err();
        assert_eq!(err.exit_code(), 4);
    }
}
