//! On-disk formats: binary snapshots, run directories, calibration files and
//! JSON reports.
//!
//! A run directory `<out>/<run_id>/` holds `manifest.json`, `record.json`,
//! `norms.csv`, `blocks.json` and `snapshots/step_NNNNNN.snap`.

use crate::besov::{BlockSeries, NormSeries};
use crate::error::{Error, Result};
use crate::field::{Levels, SpectralField};
use crate::grid::GridSpec;
use crate::monitor::Calibration;
use crate::record::{RecordMeta, RunRecord, Snapshot};
use crate::state::{Flavor, MhdState};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"MHDSNAP1";
/// magic + 2·u32 + 2·u64 + 5·f64
pub const SNAPSHOT_HEADER_BYTES: usize = 8 + 8 + 16 + 40;

/// Weight parameters stored alongside a snapshot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnapshotHeader {
    pub flavor: Flavor,
    pub pressure_levels: Levels,
    pub nx: usize,
    pub ny: usize,
    pub period: f64,
    pub time: f64,
    pub a: f64,
    pub lambda: f64,
    pub theta: f64,
}

pub fn write_snapshot<W: Write>(mut w: W, state: &MhdState, a: f64, lambda: f64, theta: f64) -> Result<()> {
    state.validate()?;
    let g = state.grid();
    w.write_all(SNAPSHOT_MAGIC)?;
    w.write_all(&state.flavor.code().to_le_bytes())?;
    w.write_all(&state.p.levels().tag().to_le_bytes())?;
    w.write_all(&(g.nx as u64).to_le_bytes())?;
    w.write_all(&(g.ny as u64).to_le_bytes())?;
    for x in [g.period, state.time, a, lambda, theta] {
        w.write_all(&x.to_le_bytes())?;
    }
    for f in [&state.u, &state.v, &state.b, &state.c, &state.p] {
        for c in f.coeffs() {
            w.write_all(&c.re.to_le_bytes())?;
            w.write_all(&c.im.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Format(format!("truncated snapshot: {e}")))?;
    Ok(buf)
}

pub fn read_snapshot<R: Read>(mut r: R) -> Result<(SnapshotHeader, MhdState)> {
    let magic: [u8; 8] = read_array(&mut r)?;
    if &magic != SNAPSHOT_MAGIC {
        return Err(Error::Format("not a snapshot file (bad magic)".into()));
    }
    let u32_ = |b: [u8; 4]| u32::from_le_bytes(b);
    let flavor = Flavor::from_code(u32_(read_array(&mut r)?))?;
    let pressure_levels = Levels::from_tag(u32_(read_array(&mut r)?))?;
    let nx = u64::from_le_bytes(read_array(&mut r)?) as usize;
    let ny = u64::from_le_bytes(read_array(&mut r)?) as usize;
    let mut f = [0.0; 5];
    for x in &mut f {
        *x = f64::from_le_bytes(read_array(&mut r)?);
    }
    let [period, time, a, lambda, theta] = f;
    let grid = GridSpec::new(period, nx, ny)?;
    if pressure_levels != flavor.pressure_levels() {
        return Err(Error::Format("pressure layout does not match flavor".into()));
    }
    let mut read_field = |levels: Levels| -> Result<SpectralField> {
        let n = nx * levels.count(&grid);
        let mut coeffs = Vec::with_capacity(n);
        for _ in 0..n {
            let re = f64::from_le_bytes(read_array(&mut r)?);
            let im = f64::from_le_bytes(read_array(&mut r)?);
            coeffs.push(Complex64::new(re, im));
        }
        SpectralField::from_coeffs(grid, levels, coeffs)
    };
    let u = read_field(Levels::Nodes)?;
    let v = read_field(Levels::Nodes)?;
    let b = read_field(Levels::Nodes)?;
    let c = read_field(Levels::Nodes)?;
    let p = read_field(pressure_levels)?;
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Format(format!("{} trailing bytes after snapshot", rest.len())));
    }
    let header = SnapshotHeader { flavor, pressure_levels, nx, ny, period, time, a, lambda, theta };
    Ok((header, MhdState { time, flavor, u, v, b, c, p }))
}

pub fn snapshot_file_name(step: usize) -> String {
    format!("step_{step:06}.snap")
}

/// Writes JSON to a temporary sibling and renames it into place.
pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let tmp = path.with_extension("json.tmp");
    {
        let mut w = BufWriter::new(fs::File::create(&tmp)?);
        serde_json::to_writer_pretty(&mut w, value)?;
        w.write_all(b"\n")?;
        w.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let file = fs::File::open(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestHealth {
    pub healthy: bool,
    pub radius_exhausted: bool,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestOutputs {
    pub record: String,
    pub norms_csv: String,
    pub blocks: String,
    pub snapshots: Vec<String>,
    pub reports: Vec<String>,
}

/// Index of a run directory, written last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub config: serde_json::Value,
    pub outputs: ManifestOutputs,
    pub health: ManifestHealth,
    pub last_snapshot: Option<String>,
    pub message: Option<String>,
}

impl RunManifest {
    pub fn add_report(&mut self, name: &str) {
        if !self.outputs.reports.iter().any(|r| r == name) {
            self.outputs.reports.push(name.to_string());
        }
    }
}

/// Writes a record under `<out>/<run_id>/`; refuses to reuse an existing id.
pub fn save_record(out: &Path, record: &RunRecord, config: serde_json::Value) -> Result<RunManifest> {
    let dir = out.join(&record.run_id);
    if dir.join("manifest.json").exists() {
        return Err(Error::Usage(format!("run id {} already exists in {}", record.run_id, out.display())));
    }
    fs::create_dir_all(dir.join("snapshots"))?;
    let s = &record.settings;
    let mut snaps = Vec::new();
    for snap in &record.snapshots {
        let name = format!("snapshots/{}", snapshot_file_name(snap.step));
        let w = BufWriter::new(fs::File::create(dir.join(&name))?);
        write_snapshot(w, &snap.state, s.a, s.lambda, snap.theta)?;
        snaps.push(name);
    }
    write_json_atomic(&dir.join("record.json"), &record.meta())?;
    write_json_atomic(&dir.join("blocks.json"), &record.blocks)?;
    record.series.write_csv(BufWriter::new(fs::File::create(dir.join("norms.csv"))?))?;
    let h = &record.health;
    let manifest = RunManifest {
        run_id: record.run_id.clone(),
        config,
        outputs: ManifestOutputs {
            record: "record.json".into(),
            norms_csv: "norms.csv".into(),
            blocks: "blocks.json".into(),
            snapshots: snaps.clone(),
            reports: Vec::new(),
        },
        health: ManifestHealth { healthy: h.healthy, radius_exhausted: h.radius_exhausted, diverged: h.diverged },
        last_snapshot: snaps.last().cloned(),
        message: h.message.clone(),
    };
    write_json_atomic(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

/// Loads a run directory written by [`save_record`].
pub fn load_record(dir: &Path) -> Result<RunRecord> {
    let manifest: RunManifest = read_json(&dir.join("manifest.json"))?;
    let meta: RecordMeta = read_json(&dir.join(&manifest.outputs.record))?;
    let blocks: BTreeMap<String, BlockSeries> = read_json(&dir.join(&manifest.outputs.blocks))?;
    let series = NormSeries::read_csv(BufReader::new(fs::File::open(dir.join(&manifest.outputs.norms_csv))?))?;
    let mut snapshots = Vec::new();
    for name in &manifest.outputs.snapshots {
        let step = step_of(name)?;
        let (header, state) = read_snapshot(BufReader::new(fs::File::open(dir.join(name))?))?;
        snapshots.push(Snapshot { step, theta: header.theta, state });
    }
    Ok(RunRecord::from_parts(meta, series, blocks, snapshots))
}

fn step_of(name: &str) -> Result<usize> {
    Path::new(name)
        .file_stem()
        .and_then(|s| s.to_str())
        .and_then(|s| s.strip_prefix("step_"))
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Format(format!("snapshot name {name:?} is not step_NNNNNN.snap")))
}

pub fn manifest_path(dir: &Path) -> PathBuf {
    dir.join("manifest.json")
}

pub fn write_calibration(path: &Path, cal: &Calibration) -> Result<()> {
    write_json_atomic(path, cal)
}

pub fn read_calibration(path: &Path) -> Result<Calibration> {
    let cal: Calibration = read_json(path)?;
    if !(cal.constant > 0.0) || !cal.constant.is_finite() {
        return Err(Error::Format(format!("calibrated constant {} is not positive", cal.constant)));
    }
    Ok(cal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Levels;

    fn sample(flavor: Flavor) -> MhdState {
        let g = GridSpec::new(4.0, 16, 5).unwrap();
        let mut s = MhdState::zeros(g, flavor);
        s.time = 0.375;
        let mut n = 0.0f64;
        for f in [&mut s.u, &mut s.v, &mut s.b, &mut s.c, &mut s.p] {
            for c in f.coeffs_mut() {
                n += 1.0;
                *c = Complex64::new(n.sin(), (1.0 / n).exp() * 1e-300);
            }
        }
        s
    }

    #[test]
    fn snapshot_round_trip_is_lossless() {
        for flavor in [Flavor::Limit, Flavor::Scaled, Flavor::Difference] {
            let s = sample(flavor);
            let mut buf = Vec::new();
            write_snapshot(&mut buf, &s, 0.7, 3.0, 0.01).unwrap();
            let expected = SNAPSHOT_HEADER_BYTES + 16 * 16 * (4 * 5 + s.p.levels().count(s.grid()));
            assert_eq!(buf.len(), expected);
            let (h, back) = read_snapshot(&buf[..]).unwrap();
            assert_eq!(back, s);
            assert_eq!((h.a, h.lambda, h.theta, h.period), (0.7, 3.0, 0.01, 4.0));
            assert_eq!(h.pressure_levels, flavor.pressure_levels());
        }
        assert_eq!(Levels::from_tag(1).unwrap(), Levels::Midpoints);
    }

    #[test]
    fn corrupt_snapshots_are_rejected() {
        let s = sample(Flavor::Limit);
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &s, 0.7, 3.0, 0.01).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_snapshot(&bad[..]), Err(Error::Format(_))));
        assert!(matches!(read_snapshot(&buf[..buf.len() - 3]), Err(Error::Format(_))));
        let mut long = buf.clone();
        long.push(0);
        assert!(read_snapshot(&long[..]).is_err());
    }

    #[test]
    fn record_directory_round_trip() {
        use crate::profiles::Profile;
        use crate::record::RunSettings;
        let settings = RunSettings {
            grid: GridSpec::periodic(16, 7).unwrap(),
            dt: 0.01,
            t_end: 0.03,
            a: 0.5,
            lambda: 1.0,
            growth_rate: 1.0,
            epsilon: Some(0.5),
            nonlinear: true,
            magnetic: true,
            profile: Profile::Packet,
            delta: 1e-2,
            seed: 0,
            snapshot_every: 1,
            constant: 4.0,
        };
        let rec = crate::runner::run("r1", &settings).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let m = save_record(dir.path(), &rec, serde_json::json!({"k": 1})).unwrap();
        assert_eq!(m.outputs.snapshots.len(), 4);
        assert!(!dir.path().join("r1/manifest.json.tmp").exists());
        let back = load_record(&dir.path().join("r1")).unwrap();
        assert_eq!(back.meta(), rec.meta());
        assert_eq!(back.snapshots, rec.snapshots);
        assert_eq!(back.blocks, rec.blocks);
        assert_eq!(back.series.tags(), rec.series.tags());
        assert!(save_record(dir.path(), &rec, serde_json::Value::Null).is_err());
    }
}
