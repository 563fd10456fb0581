//! On-disk result store: CSV tables keyed by config hash, a run manifest,
//! and JSON snapshots.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A CSV table row. The config hash column is appended by the store.
pub trait TableRow {
    const TABLE: &'static str;
    const HEADER: &'static [&'static str];
    fn fields(&self) -> Vec<String>;
}

pub const HASH_COLUMN: &str = "config_hash";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub config_hash: String,
    pub kind: String,
    pub tool_version: String,
    pub timestamp: String,
    pub tables: Vec<String>,
    pub rows: usize,
    pub all_ok: bool,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ResultStore {
    dir: PathBuf,
}

/// Header plus rows of a stored table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Missing(format!("column {name}")))
    }
}

impl ResultStore {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        Ok(ResultStore { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn table_path(&self, table: &str) -> PathBuf {
        self.dir.join(format!("{table}.csv"))
    }

    pub fn read_table(&self, table: &str) -> Result<Option<Table>> {
        let path = self.table_path(table);
        if !path.exists() {
            return Ok(None);
        }
        let mut rdr = csv::Reader::from_path(&path)?;
        let header = rdr.headers()?.iter().map(String::from).collect();
        let rows = rdr
            .records()
            .map(|r| r.map(|r| r.iter().map(String::from).collect()))
            .collect::<std::result::Result<_, _>>()?;
        Ok(Some(Table { header, rows }))
    }

    /// Replaces the rows of `hash` in the table of `R`, keeping other configs' rows.
    pub fn write_rows<R: TableRow>(&self, hash: &str, rows: &[R]) -> Result<PathBuf> {
        let mut header: Vec<String> = R::HEADER.iter().map(|s| s.to_string()).collect();
        header.push(HASH_COLUMN.into());
        let mut kept = Vec::new();
        if let Some(old) = self.read_table(R::TABLE)? {
            if old.header != header {
                return Err(Error::Io(format!(
                    "{} has a different column layout",
                    self.table_path(R::TABLE).display()
                )));
            }
            let hc = old.header.len() - 1;
            kept.extend(old.rows.into_iter().filter(|r| r[hc] != hash));
        }
        let path = self.table_path(R::TABLE);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(&header)?;
        for r in kept {
            w.write_record(&r)?;
        }
        for r in rows {
            let mut f = r.fields();
            f.push(hash.to_string());
            w.write_record(&f)?;
        }
        w.flush()?;
        Ok(path)
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.dir.join("manifest.json")
    }

    pub fn read_manifest(&self) -> Result<Vec<ManifestEntry>> {
        let path = self.manifest_path();
        if !path.exists() {
            return Ok(Vec::new());
        }
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn record_run(&self, entry: ManifestEntry) -> Result<()> {
        let mut all = self.read_manifest()?;
        all.retain(|e| e.config_hash != entry.config_hash);
        all.push(entry);
        fs::write(self.manifest_path(), serde_json::to_string_pretty(&all)? + "\n")?;
        Ok(())
    }

    pub fn write_json<T: Serialize>(&self, hash: &str, name: &str, value: &T) -> Result<PathBuf> {
        let dir = self.dir.join("snapshots");
        fs::create_dir_all(&dir)?;
        let path = dir.join(format!("{hash}-{name}.json"));
        fs::write(&path, serde_json::to_string(value)? + "\n")?;
        Ok(path)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BulkRow {
    pub a: String,
    pub b: String,
    pub k: usize,
    pub m: usize,
    pub tau: String,
    pub value: f64,
    pub bulk_part: f64,
    pub surface_part: f64,
    pub converged: bool,
    pub seed: u64,
}

impl BulkRow {
    fn base(&self) -> Vec<String> {
        vec![
            self.a.clone(),
            self.b.clone(),
            self.k.to_string(),
            self.m.to_string(),
            self.tau.clone(),
            self.value.to_string(),
            self.bulk_part.to_string(),
            self.surface_part.to_string(),
            self.converged.to_string(),
            self.seed.to_string(),
        ]
    }
}

impl TableRow for BulkRow {
    const TABLE: &'static str = "bulk";
    const HEADER: &'static [&'static str] = &[
        "A", "B", "k", "m", "tau", "value", "bulk_part", "surface_part", "converged", "seed",
    ];
    fn fields(&self) -> Vec<String> {
        self.base()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceRow {
    pub lambda: String,
    pub nu: String,
    pub k: usize,
    pub m: usize,
    pub tau: String,
    pub value: f64,
    pub cut_faces: usize,
    pub flat_cut: bool,
}

impl SurfaceRow {
    fn base(&self) -> Vec<String> {
        vec![
            self.lambda.clone(),
            self.nu.clone(),
            self.k.to_string(),
            self.m.to_string(),
            self.tau.clone(),
            self.value.to_string(),
            self.cut_faces.to_string(),
            self.flat_cut.to_string(),
        ]
    }
}

impl TableRow for SurfaceRow {
    const TABLE: &'static str = "surface";
    const HEADER: &'static [&'static str] =
        &["lambda", "nu", "k", "m", "tau", "value", "cut_faces", "flat_cut_flag"];
    fn fields(&self) -> Vec<String> {
        self.base()
    }
}

/// Oracle rows share the solver schemas plus an `oracle` column.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleBulkRow(pub BulkRow);

impl TableRow for OracleBulkRow {
    const TABLE: &'static str = "oracle_bulk";
    const HEADER: &'static [&'static str] = &[
        "A", "B", "k", "m", "tau", "value", "bulk_part", "surface_part", "converged", "seed", "oracle",
    ];
    fn fields(&self) -> Vec<String> {
        let mut f = self.0.base();
        f.push("true".into());
        f
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSurfaceRow(pub SurfaceRow);

impl TableRow for OracleSurfaceRow {
    const TABLE: &'static str = "oracle_surface";
    const HEADER: &'static [&'static str] =
        &["lambda", "nu", "k", "m", "tau", "value", "cut_faces", "flat_cut_flag", "oracle"];
    fn fields(&self) -> Vec<String> {
        let mut f = self.0.base();
        f.push("true".into());
        f
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApproxRow {
    pub n: usize,
    pub eps: f64,
    pub bulk: f64,
    pub surface: f64,
    pub total: f64,
    pub l1_distance: f64,
}

impl TableRow for ApproxRow {
    const TABLE: &'static str = "approx";
    const HEADER: &'static [&'static str] = &["n", "eps", "bulk", "surface", "total", "l1_distance"];
    fn fields(&self) -> Vec<String> {
        [self.eps, self.bulk, self.surface, self.total, self.l1_distance]
            .iter()
            .fold(vec![self.n.to_string()], |mut v, x| {
                v.push(x.to_string());
                v
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidateRow {
    pub id: String,
    pub mode: String,
    pub samples: usize,
    pub violations: usize,
    pub worst_margin: f64,
    pub passed: bool,
}

impl TableRow for ValidateRow {
    const TABLE: &'static str = "validate";
    const HEADER: &'static [&'static str] = &["id", "mode", "samples", "violations", "worst_margin", "passed"];
    fn fields(&self) -> Vec<String> {
        vec![
            self.id.clone(),
            self.mode.clone(),
            self.samples.to_string(),
            self.violations.to_string(),
            self.worst_margin.to_string(),
            self.passed.to_string(),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Bulk,
    Surface,
    Approx,
}

impl std::str::FromStr for PlotKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bulk" => Ok(PlotKind::Bulk),
            "surface" => Ok(PlotKind::Surface),
            "approx" => Ok(PlotKind::Approx),
            other => Err(Error::InvalidArgument(format!("no plot data for kind {other}"))),
        }
    }
}

/// Long-format `(x, y, series)` table derived from a stored kind.
pub fn emit_plot_data(store: &ResultStore, kind: PlotKind) -> Result<PathBuf> {
    let (table, x, y, keys): (&str, &str, &str, &[&str]) = match kind {
        PlotKind::Bulk => ("bulk", "k", "value", &["A", "B", "tau"]),
        PlotKind::Surface => ("surface", "k", "value", &["lambda", "nu", "tau"]),
        PlotKind::Approx => ("approx", "n", "total", &[]),
    };
    let t = store
        .read_table(table)?
        .filter(|t| !t.rows.is_empty())
        .ok_or_else(|| Error::Missing(format!("no {table} results in {}", store.dir().display())))?;
    let (xi, yi, hi) = (t.column(x)?, t.column(y)?, t.column(HASH_COLUMN)?);
    let key_idx: Vec<usize> = keys.iter().map(|k| t.column(k)).collect::<Result<_>>()?;
    let path = store.dir().join(format!("plot_{table}.csv"));
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["x", "y", "series"])?;
    for r in &t.rows {
        let mut series = r[hi].clone();
        for (k, &i) in keys.iter().zip(&key_idx) {
            series.push_str(&format!(" {k}={}", r[i]));
        }
        if keys.is_empty() {
            series.push_str(" total");
        }
        w.write_record([r[xi].as_str(), r[yi].as_str(), series.as_str()])?;
    }
    w.flush()?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(n: usize) -> ApproxRow {
        ApproxRow {
            n,
            eps: 1.0 / n as f64,
            bulk: 1.0,
            surface: 0.5,
            total: 1.5,
            l1_distance: 0.1,
        }
    }

    #[test]
    fn rows_of_other_configs_survive() {
        let dir = tempfile::tempdir().unwrap();
        let s = ResultStore::open(dir.path()).unwrap();
        s.write_rows("aaaa", &[row(1), row(2)]).unwrap();
        s.write_rows("bbbb", &[row(4)]).unwrap();
        s.write_rows("aaaa", &[row(8)]).unwrap();
        let t = s.read_table("approx").unwrap().unwrap();
        let ns: Vec<&str> = t.rows.iter().map(|r| r[0].as_str()).collect();
        assert_eq!(ns, vec!["4", "8"]);
        assert_eq!(t.header.last().unwrap(), HASH_COLUMN);
    }

    #[test]
    fn plot_data_requires_rows() {
        let dir = tempfile::tempdir().unwrap();
        let s = ResultStore::open(dir.path()).unwrap();
        assert!(matches!(emit_plot_data(&s, PlotKind::Approx), Err(Error::Missing(_))));
        assert!(!dir.path().join("plot_approx.csv").exists());
        s.write_rows("aaaa", &[row(1)]).unwrap();
        let p = emit_plot_data(&s, PlotKind::Approx).unwrap();
        let text = std::fs::read_to_string(p).unwrap();
        assert_eq!(text, "x,y,series\n1,1.5,aaaa total\n");
    }
}
