//! CSV files with a commented provenance header.

use std::path::PathBuf;

use lrfim_core::entropy::compute_constants;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
/// Bumped whenever a column changes.
pub const CSV_SCHEMA: u32 = 1;

/// SHA-256 of the JSON constant table, or of the error text when undefined.
pub fn constants_hash(cfg: &RunConfig) -> String {
    let text = match compute_constants(&cfg.params) {
        Ok(t) => serde_json::to_string(&t).expect("constant table serialises"),
        Err(e) => format!("error: {e}"),
    };
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn header(cfg: &RunConfig, command: &str) -> String {
    format!(
        "# lrfim {VERSION} schema {CSV_SCHEMA} command {command}\n# params: {}\n# run: {}\n# constants_sha256: {}\n# seed: {}\n",
        cfg.params.describe(),
        cfg.describe(),
        constants_hash(cfg),
        cfg.seed
    )
}

/// Rows collected in memory and written in one piece.
pub struct Table {
    writer: csv::Writer<Vec<u8>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Table {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(columns).expect("in-memory write");
        Table { writer }
    }

    pub fn row<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields).expect("in-memory write");
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.writer.into_inner().expect("in-memory flush")
    }
}

/// Write `<out_dir>/<name>` with the header for `command`; returns the path.
pub fn write_csv(cfg: &RunConfig, command: &str, name: &str, table: Table) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| CliError::Io(format!("{}: {e}", cfg.out_dir.display())))?;
    let path = cfg.out_dir.join(name);
    let mut bytes = header(cfg, command).into_bytes();
    bytes.extend(table.into_bytes());
    std::fs::write(&path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(path)
}

/// Shortest round-trip rendering, so identical values print identically.
pub fn f(x: f64) -> String {
    format!("{x:?}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_is_stable() {
        let cfg = RunConfig::with(&[("seed", "4")]).unwrap();
        let a = header(&cfg, "constants");
        assert_eq!(a, header(&cfg, "constants"));
        assert!(a.contains("# seed: 4"));
        assert_eq!(constants_hash(&cfg).len(), 64);
    }

    #[test]
    fn table_quotes_fields() {
        let mut t = Table::new(&["a", "b"]);
        t.row(["x,y", "1"]);
        assert_eq!(String::from_utf8(t.into_bytes()).unwrap(), "a,b\n\"x,y\",1\n");
    }
}
