//! Report bundles: a manifest, CSV tables, and pass/fail verdicts.
//!
//! Tables are written with a fixed float format so identical configurations
//! and seeds produce byte-identical files.

use anyhow::{Context, Result};
use std::io::Write;
use std::path::Path;

/// Fixed deterministic float formatting for table cells.
pub fn fnum(x: f64) -> String {
    format!("{x:.12e}")
}

#[derive(Debug, Clone)]
pub struct Table {
    pub name: String,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: Vec<&'static str>) -> Self {
        Table {
            name: name.to_string(),
            header,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.header.join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct Verdict {
    pub id: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default)]
pub struct ReportBundle {
    pub manifest: Vec<String>,
    pub tables: Vec<Table>,
    pub verdicts: Vec<Verdict>,
    /// Extra text files (path relative to the output dir, contents).
    pub artifacts: Vec<(String, String)>,
}

impl ReportBundle {
    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn push_verdict(&mut self, id: &str, pass: bool, detail: String) {
        self.verdicts.push(Verdict {
            id: id.to_string(),
            pass,
            detail,
        });
    }

    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("cannot create output dir {}", dir.display()))?;
        let mut manifest = std::fs::File::create(dir.join("manifest.txt"))?;
        for line in &self.manifest {
            writeln!(manifest, "{line}")?;
        }
        for table in &self.tables {
            std::fs::write(dir.join(format!("{}.csv", table.name)), table.to_csv())?;
        }
        let mut verdicts = String::new();
        for v in &self.verdicts {
            verdicts.push_str(&format!(
                "{} {}: {}\n",
                if v.pass { "PASS" } else { "FAIL" },
                v.id,
                v.detail
            ));
        }
        std::fs::write(dir.join("verdicts.txt"), verdicts)?;
        for (rel, contents) in &self.artifacts {
            let path = dir.join(rel);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(path, contents)?;
        }
        Ok(())
    }
}
