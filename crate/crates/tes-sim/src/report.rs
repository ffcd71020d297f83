//! Run manifests, CSV export/import, and machine-readable summaries.
//!
//! Every output bundle is reproducible byte for byte from its manifest:
//! the manifest records the command, the profile and scenario sources by
//! hash, the seed, and the tool version — never wall-clock time. CSV files
//! carry a one-line `#` comment with the manifest hash so a stray file can
//! be traced back to its run.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ConfigError;

/// SHA-256 of a byte string, hex-encoded.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex::encode(hasher.finalize())
}

/// Identity of one run; recorded verbatim in every output bundle.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub profile_path: String,
    pub profile_hash: String,
    pub scenario_path: String,
    pub scenario_hash: String,
    pub seed: u64,
    pub output_dir: String,
    pub tool_version: String,
}

impl RunManifest {
    /// Hash of the manifest itself; stamped into CSV headers.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("manifest serialises");
        sha256_hex(json.as_bytes())
    }
}

/// Render a CSV file: one `# run <hash>` comment line, a header, then rows.
pub fn render_csv(manifest_hash: &str, header: &[&str], rows: &[Vec<f64>]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# run {manifest_hash}");
    let _ = writeln!(out, "{}", header.join(","));
    for row in rows {
        let rendered: Vec<String> = row.iter().map(|v| format_value(*v)).collect();
        let _ = writeln!(out, "{}", rendered.join(","));
    }
    out
}

/// Fixed float rendering so identical runs produce identical bytes.
fn format_value(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else {
        format!("{v:.9e}")
    }
}

/// Parse a two-column CSV written by [`render_csv`] (comments and header
/// skipped); used for trace import.
pub fn parse_two_column_csv(text: &str) -> Result<Vec<(f64, f64)>, ConfigError> {
    let mut rows: Vec<(f64, f64)> = Vec::new();
    let mut header_seen = false;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() < 2 {
            return Err(ConfigError::Parse(format!("line {}: expected two columns", lineno + 1)));
        }
        match (cells[0].parse::<f64>(), cells[1].parse::<f64>()) {
            (Ok(a), Ok(b)) => rows.push((a, b)),
            _ if !header_seen && rows.is_empty() => header_seen = true,
            _ => {
                return Err(ConfigError::Parse(format!("line {}: not numeric", lineno + 1)));
            }
        }
    }
    Ok(rows)
}

/// Write string content to `dir/name`, creating the directory if needed.
pub fn write_output(dir: &Path, name: &str, content: &str) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), content)
}

/// Serialise a summary structure as stable, human-inspectable JSON.
pub fn to_summary_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("summary serialises")
}

/// Note attached to attack reports about the direction of the covertness
/// comparison: hiding requires the honest channel to be at least as lossy
/// as the attack-induced detection loss.
pub const LOSS_DIRECTION_NOTE: &str = "covert iff induced_loss <= 1 - channel_transmission \
(the attack hides only when the honest channel is at least as lossy as the attack)";

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let rows = vec![vec![1.0e-6, 2.5e-3], vec![2.0e-6, 0.0]];
        let text = render_csv("abc", &["time_s", "vout_V"], &rows);
        assert!(text.starts_with("# run abc\ntime_s,vout_V\n"));
        let parsed = parse_two_column_csv(&text).unwrap();
        assert_eq!(parsed.len(), 2);
        assert_eq!(parsed[0].0, 1.0e-6);
        assert_eq!(parsed[1].1, 0.0);
    }

    #[test]
    fn manifest_hash_stable() {
        let m = RunManifest {
            command: "attack".into(),
            profile_path: "paper_like".into(),
            profile_hash: "p".into(),
            scenario_path: "s.toml".into(),
            scenario_hash: "s".into(),
            seed: 7,
            output_dir: "out".into(),
            tool_version: "0.1.0".into(),
        };
        assert_eq!(m.hash(), m.hash());
    }
}
