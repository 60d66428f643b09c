//! CSV and JSON outputs and the run manifest.
//!
//! Column orders:
//!
//! | file | columns |
//! |---|---|
//! | PCL portrait | `initial_x, initial_y, class, final_x, final_y` |
//! | PLL portrait | `d_omega0, delta0, class, slips, final_d_omega, final_delta` |
//! | portrait traces | `id, t, x, y` |
//! | trajectory | `t, delta, d_omega, i_cd_ref, i_cq_ref, p, q, u_pcc, limiter_active` |
//! | CCT sweep | `bandwidth_hz, k_f, delta_a, delta_cca, s_accel, t_cct_est, t_cct_oracle, verdict` |
//!
//! Floats are written in shortest round-trip form; absent values are empty
//! fields; `limiter_active` is 0 or 1.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{ConfigFile, PortraitModel};
use crate::eap::SweepTable;
use crate::error::Result;
use crate::portrait::Portrait;
use crate::scenario::Trajectory;

pub const TRAJECTORY_COLUMNS: [&str; 9] = [
    "t",
    "delta",
    "d_omega",
    "i_cd_ref",
    "i_cq_ref",
    "p",
    "q",
    "u_pcc",
    "limiter_active",
];

pub const SWEEP_COLUMNS: [&str; 8] = [
    "bandwidth_hz",
    "k_f",
    "delta_a",
    "delta_cca",
    "s_accel",
    "t_cct_est",
    "t_cct_oracle",
    "verdict",
];

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(false).from_writer(w)
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_portrait_csv<W: Write>(w: W, portrait: &Portrait) -> Result<()> {
    let mut out = writer(w);
    match portrait.model {
        PortraitModel::Pcl => {
            out.write_record(["initial_x", "initial_y", "class", "final_x", "final_y"])?;
            for p in &portrait.map.points {
                out.write_record([
                    p.initial[0].to_string(),
                    p.initial[1].to_string(),
                    p.class.to_string(),
                    p.final_state[0].to_string(),
                    p.final_state[1].to_string(),
                ])?;
            }
        }
        PortraitModel::Pll => {
            out.write_record(["d_omega0", "delta0", "class", "slips", "final_d_omega", "final_delta"])?;
            for p in &portrait.map.points {
                out.write_record([
                    p.initial[0].to_string(),
                    p.initial[1].to_string(),
                    p.class.to_string(),
                    p.slips.to_string(),
                    p.final_state[0].to_string(),
                    p.final_state[1].to_string(),
                ])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_traces_csv<W: Write>(w: W, portrait: &Portrait) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["id", "t", "x", "y"])?;
    for (id, trace) in portrait.trajectories.iter().enumerate() {
        for s in trace {
            out.write_record([id.to_string(), s[0].to_string(), s[1].to_string(), s[2].to_string()])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_trajectory_csv<W: Write>(w: W, traj: &Trajectory) -> Result<()> {
    let mut out = writer(w);
    out.write_record(TRAJECTORY_COLUMNS)?;
    for s in &traj.samples {
        out.write_record([
            s.t.to_string(),
            s.delta.to_string(),
            s.d_omega.to_string(),
            s.i_cd_ref.to_string(),
            s.i_cq_ref.to_string(),
            s.p.to_string(),
            s.q.to_string(),
            s.u_pcc.to_string(),
            u8::from(s.limiter_active).to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_sweep_csv<W: Write>(w: W, table: &SweepTable) -> Result<()> {
    let mut out = writer(w);
    out.write_record(SWEEP_COLUMNS)?;
    for c in &table.cells {
        out.write_record([
            c.bandwidth_hz.to_string(),
            c.k_f.to_string(),
            c.delta_a.to_string(),
            opt(c.delta_cca),
            opt(c.s_accel),
            opt(c.t_cct_est),
            opt(c.t_cct_oracle),
            c.verdict.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Record of one CLI run, written next to its outputs as `manifest.json`.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config_path: Option<String>,
    /// Fully-resolved configuration; reloading it reproduces the run.
    pub resolved: ConfigFile,
    pub outputs: Vec<PathBuf>,
    pub tool_version: String,
    pub wall_clock_s: f64,
}

impl RunManifest {
    pub fn new(subcommand: &str, config_path: Option<&Path>, resolved: ConfigFile) -> Self {
        Self {
            subcommand: subcommand.to_string(),
            config_path: config_path.map(|p| p.display().to_string()),
            resolved,
            outputs: Vec::new(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_clock_s: 0.0,
        }
    }
}

/// Output directory helper that remembers what it wrote.
pub struct OutDir {
    root: PathBuf,
    written: Vec<PathBuf>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Creates `name` through `body`, buffered.
    pub fn write<F>(&mut self, name: &str, body: F) -> Result<PathBuf>
    where
        F: FnOnce(&mut std::io::BufWriter<std::fs::File>) -> Result<()>,
    {
        let path = self.path(name);
        let mut file = std::io::BufWriter::new(std::fs::File::create(&path)?);
        body(&mut file)?;
        file.flush()?;
        self.written.push(path.clone());
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        self.write(name, |f| {
            serde_json::to_writer_pretty(&mut *f, value)?;
            f.write_all(b"\n")?;
            Ok(())
        })
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    /// Writes `manifest.json` listing every file written so far.
    pub fn finish(mut self, mut manifest: RunManifest, wall_clock_s: f64) -> Result<PathBuf> {
        manifest.outputs = self.written.clone();
        manifest.wall_clock_s = wall_clock_s;
        self.write_json("manifest.json", &manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{load_preset, parse_config};
    use crate::eap::cct_sweep;
    use crate::portrait::run_portrait;
    use crate::scenario::run_scenario;

    fn read_back(bytes: &[u8]) -> (csv::StringRecord, Vec<csv::StringRecord>) {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
        let head = r.headers().unwrap().clone();
        let rows = r.records().collect::<std::result::Result<Vec<_>, _>>().unwrap();
        (head, rows)
    }

    #[test]
    fn trajectory_csv_columns_and_values() {
        let cfg = load_preset("fig4b").unwrap();
        let traj = run_scenario(&cfg.to_scenario()).unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &traj).unwrap();
        let (head, rows) = read_back(&buf);
        assert_eq!(head.iter().collect::<Vec<_>>(), TRAJECTORY_COLUMNS);
        assert_eq!(rows.len(), traj.samples.len());
        for (row, s) in rows.iter().zip(&traj.samples) {
            assert_eq!(row[1].parse::<f64>().unwrap(), s.delta);
            assert!(matches!(&row[8], "0" | "1"));
        }
    }

    #[test]
    fn sweep_csv_leaves_missing_values_empty() {
        let cfg = load_preset("fig6a").unwrap();
        let table = cct_sweep(&[20.0], &[0.0, 1.0], 0.0, &cfg.params, None).unwrap();
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, &table).unwrap();
        let (head, rows) = read_back(&buf);
        assert_eq!(head.iter().collect::<Vec<_>>(), SWEEP_COLUMNS);
        assert_eq!(rows.len(), 2);
        assert!(!rows[0][5].is_empty());
        assert!(rows[1][3].is_empty());
        assert_eq!(&rows[1][7], "ALWAYS_STABLE");
    }

    #[test]
    fn portrait_csv_schemas() {
        let mut cfg = parse_config(r#"{"op": {"p_ref": 0.5}, "portrait": {"n": 3}}"#, "t").unwrap();
        let port = run_portrait(&cfg, true).unwrap();
        let mut buf = Vec::new();
        write_portrait_csv(&mut buf, &port).unwrap();
        let (head, rows) = read_back(&buf);
        assert_eq!(head.iter().collect::<Vec<_>>(), ["initial_x", "initial_y", "class", "final_x", "final_y"]);
        assert_eq!(rows.len(), 9);
        let mut buf = Vec::new();
        write_traces_csv(&mut buf, &port).unwrap();
        let (head, rows) = read_back(&buf);
        assert_eq!(head.len(), 4);
        assert!(rows.len() > 9);

        cfg.portrait.model = PortraitModel::Pll;
        cfg.portrait.x_range = [-0.1, 0.1];
        cfg.portrait.y_range = [0.0, 1.0];
        cfg.portrait.basin.diverge_norm = 1.0;
        let port = run_portrait(&cfg, false).unwrap();
        let mut buf = Vec::new();
        write_portrait_csv(&mut buf, &port).unwrap();
        let (head, _) = read_back(&buf);
        assert_eq!(&head[0], "d_omega0");
        assert_eq!(&head[3], "slips");
    }

    #[test]
    fn out_dir_records_outputs() {
        let tmp = tempfile::tempdir().unwrap();
        let mut out = OutDir::create(&tmp.path().join("run")).unwrap();
        out.write_json("a.json", &[1, 2]).unwrap();
        let cfg = load_preset("paper_default").unwrap();
        let m = out.finish(RunManifest::new("cca", None, cfg.snapshot()), 0.5).unwrap();
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(m).unwrap()).unwrap();
        assert_eq!(v["subcommand"], "cca");
        assert_eq!(v["outputs"].as_array().unwrap().len(), 1);
        let back: ConfigFile = serde_json::from_value(v["resolved"].clone()).unwrap();
        assert_eq!(back, cfg.snapshot());
    }
}
