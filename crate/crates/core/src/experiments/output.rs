//! CSV tables and binary snapshots.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::diagnostics::EnergyLedger;
use crate::grid::{FaceField, GridSpec, ScalarField, XBoundary};
use crate::{Real, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LedgerRow {
    pub step: usize,
    pub t: f64,
    pub kinetic: f64,
    pub dissipation_acc: f64,
    pub friction_acc: f64,
    pub work_acc: f64,
    pub residual: f64,
}

impl LedgerRow {
    pub fn from_ledger<T: Real>(l: &EnergyLedger<T>) -> Self {
        Self {
            step: l.step,
            t: l.t.as_f64(),
            kinetic: l.kinetic.as_f64(),
            dissipation_acc: l.dissipation_acc.as_f64(),
            friction_acc: l.friction_acc.as_f64(),
            work_acc: l.work_acc.as_f64(),
            residual: l.residual().as_f64(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub nu: f64,
    pub err_u_l2: f64,
    pub err_rho_l2: f64,
    pub lhs: f64,
    pub visc_term: f64,
    #[serde(rename = "fitted_C")]
    pub fitted_c: f64,
    pub slope_running: f64,
}

fn write_table<R: Serialize>(path: &Path, rows: &[R], header: &[&str]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub const LEDGER_HEADER: [&str; 7] = ["step", "t", "kinetic", "dissipation_acc", "friction_acc", "work_acc", "residual"];
pub const SWEEP_HEADER: [&str; 7] = ["nu", "err_u_l2", "err_rho_l2", "lhs", "visc_term", "fitted_C", "slope_running"];

pub fn write_ledger(path: &Path, rows: &[LedgerRow]) -> Result<()> {
    write_table(path, rows, &LEDGER_HEADER)
}

pub fn write_sweep(path: &Path, rows: &[SweepRow]) -> Result<()> {
    write_table(path, rows, &SWEEP_HEADER)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Location {
    Cells,
    XFaces,
    YFaces,
}

impl Location {
    fn name(self) -> &'static str {
        match self {
            Self::Cells => "cells",
            Self::XFaces => "x_faces",
            Self::YFaces => "y_faces",
        }
    }
}

/// Raw little-endian `f64` array plus a `key = value` sidecar describing it.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub field: String,
    pub step: usize,
    pub t: f64,
    pub location: Location,
    pub columns: usize,
    pub rows: usize,
    pub values: Vec<f64>,
}

impl Snapshot {
    pub fn scalar<T: Real>(field: &str, step: usize, t: T, f: &ScalarField<T>) -> Self {
        let g = f.grid();
        Self {
            field: field.into(),
            step,
            t: t.as_f64(),
            location: Location::Cells,
            columns: g.nx(),
            rows: g.ny(),
            values: f.interior().into_iter().map(Real::as_f64).collect(),
        }
    }

    /// Both components of a face field, including boundary faces.
    pub fn faces<T: Real>(field: &str, step: usize, t: T, f: &FaceField<T>) -> [Self; 2] {
        let g = f.grid();
        let (nx, ny) = (g.nx() as isize, g.ny() as isize);
        let ux = (0..ny).flat_map(|j| (0..=nx).map(move |i| (i, j))).map(|(i, j)| f.ux(i, j).as_f64()).collect();
        let uy = (0..=ny).flat_map(|j| (0..nx).map(move |i| (i, j))).map(|(i, j)| f.uy(i, j).as_f64()).collect();
        [
            Self { field: format!("{field}_x"), step, t: t.as_f64(), location: Location::XFaces, columns: g.nx() + 1, rows: g.ny(), values: ux },
            Self { field: format!("{field}_y"), step, t: t.as_f64(), location: Location::YFaces, columns: g.nx(), rows: g.ny() + 1, values: uy },
        ]
    }

    /// Writes `<field>_<step>.bin` and `<field>_<step>.txt` into `dir` and
    /// returns the binary path.
    pub fn write<T: Real>(&self, dir: &Path, grid: &GridSpec<T>) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let stem = format!("{}_{:06}", self.field, self.step);
        let bin = dir.join(format!("{stem}.bin"));
        let mut w = BufWriter::new(File::create(&bin)?);
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        let boundary = match grid.x_boundary() {
            XBoundary::Walls => "walls",
            XBoundary::Periodic => "periodic",
        };
        let sidecar = format!(
            "field = {}\nstep = {}\ntime = {:e}\nnx = {}\nny = {}\nlx = {:e}\nly = {:e}\nx_boundary = {boundary}\nlocation = {}\ncolumns = {}\nrows = {}\ndtype = f64le\norder = row-major, x fastest\n",
            self.field,
            self.step,
            self.t,
            grid.nx(),
            grid.ny(),
            grid.lx().as_f64(),
            grid.ly().as_f64(),
            self.location.name(),
            self.columns,
            self.rows,
        );
        fs::write(dir.join(format!("{stem}.txt")), sidecar)?;
        Ok(bin)
    }
}

/// Reads back the values of a snapshot written by [`Snapshot::write`].
pub fn read_snapshot_values(bin: &Path) -> Result<Vec<f64>> {
    let bytes = fs::read(bin)?;
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
}
