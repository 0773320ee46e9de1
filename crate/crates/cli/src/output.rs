//! Output files: CSV tables and JSON documents, all carrying a provenance
//! header (tool version, configuration hash, seed, optional timestamp).
//! Float formatting uses 17 significant digits so values round-trip exactly.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub const TOOL_NAME: &str = "polariton";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Format a float with 17 significant digits (shortest lossless decimal
/// width for an f64).
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone)]
pub struct Provenance {
    pub config_sha256: String,
    pub seed: Option<u64>,
    /// Unix timestamp, omitted entirely under `--no-timestamp`.
    pub generated_unix: Option<u64>,
}

impl Provenance {
    pub fn new(config_bytes: &[u8], seed: Option<u64>, with_timestamp: bool) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(config_bytes);
        let config_sha256 = hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect::<String>();
        let generated_unix = with_timestamp.then(|| {
            SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0)
        });
        Provenance {
            config_sha256,
            seed,
            generated_unix,
        }
    }

    fn header_lines(&self) -> Vec<String> {
        let mut lines = vec![
            format!("# tool: {TOOL_NAME} {TOOL_VERSION}"),
            format!("# config-sha256: {}", self.config_sha256),
        ];
        if let Some(seed) = self.seed {
            lines.push(format!("# seed: {seed}"));
        }
        if let Some(ts) = self.generated_unix {
            lines.push(format!("# generated-unix: {ts}"));
        }
        lines
    }

    fn json_meta(&self) -> Value {
        let mut meta = json!({
            "tool": TOOL_NAME,
            "version": TOOL_VERSION,
            "config_sha256": self.config_sha256,
        });
        if let Some(seed) = self.seed {
            meta["seed"] = json!(seed);
        }
        if let Some(ts) = self.generated_unix {
            meta["generated_unix"] = json!(ts);
        }
        meta
    }
}

pub struct OutputDir {
    dir: PathBuf,
    provenance: Provenance,
}

impl OutputDir {
    pub fn new(dir: &Path, provenance: Provenance) -> std::io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(OutputDir {
            dir: dir.to_path_buf(),
            provenance,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Write a CSV file: provenance header, column names, then rows of
    /// already-formatted cells.
    pub fn write_csv<R>(&self, name: &str, columns: &[&str], rows: R) -> std::io::Result<PathBuf>
    where
        R: IntoIterator<Item = Vec<String>>,
    {
        let path = self.path(name);
        let mut file = fs::File::create(&path)?;
        for line in self.provenance.header_lines() {
            writeln!(file, "{line}")?;
        }
        writeln!(file, "{}", columns.join(","))?;
        for row in rows {
            debug_assert_eq!(row.len(), columns.len());
            writeln!(file, "{}", row.join(","))?;
        }
        Ok(path)
    }

    /// Write a JSON document with the provenance merged under `"meta"`.
    pub fn write_json(&self, name: &str, mut body: Value) -> std::io::Result<PathBuf> {
        let path = self.path(name);
        body["meta"] = self.provenance.json_meta();
        let mut file = fs::File::create(&path)?;
        serde_json::to_writer_pretty(&mut file, &body)?;
        writeln!(file)?;
        Ok(path)
    }
}
