//! Plot-ready CSV files: header row, dot decimals, LF line endings.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::config::SchemeKind;
use super::experiment::ExperimentResult;
use super::sweep::SweepResult;
use crate::error::Result;

pub fn write_mse<W: Write>(out: &mut W, res: &ExperimentResult) -> std::io::Result<()> {
    writeln!(out, "k,scheme,mse,ci_lo,ci_hi")?;
    for k in 1..=res.k_max {
        for (kind, summary) in &res.schemes {
            let s = &summary.mse[k - 1];
            writeln!(out, "{k},{kind},{},{},{}", s.mean, s.ci_lo(), s.ci_hi())?;
        }
    }
    Ok(())
}

/// Energy rows of the first trial for `kind`.
pub fn write_energy<W: Write>(out: &mut W, res: &ExperimentResult, kind: SchemeKind) -> std::io::Result<()> {
    writeln!(out, "k,sensor,stored,consumed,harvested,beta")?;
    if let Some(rows) = res.energy.get(&kind) {
        for r in rows {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.k,
                r.sensor + 1,
                r.stored,
                r.consumed,
                r.harvested,
                r.beta
            )?;
        }
    }
    Ok(())
}

/// The `db` column is filled for noise-scale sweeps only.
pub fn write_sweep<W: Write>(out: &mut W, res: &SweepResult) -> std::io::Result<()> {
    writeln!(out, "param,value,db,scheme,k,mse,ci_lo,ci_hi")?;
    for row in &res.rows {
        let db = row.db.map(|v| v.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{db},{},{},{},{},{}",
            row.param.name(),
            row.value,
            row.scheme,
            row.k,
            row.summary.mean,
            row.summary.ci_lo(),
            row.summary.ci_hi()
        )?;
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Writes `mse.csv` and `energy.csv` into `dir`. The energy file follows the
/// online scheme when it ran, else the first scheme.
pub fn write_experiment(dir: &Path, res: &ExperimentResult) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut f = create(&dir.join("mse.csv"))?;
    write_mse(&mut f, res)?;
    f.flush()?;
    let kind = if res.schemes.contains_key(&SchemeKind::Online) {
        Some(SchemeKind::Online)
    } else {
        res.schemes.keys().next().copied()
    };
    if let Some(kind) = kind {
        let mut f = create(&dir.join("energy.csv"))?;
        write_energy(&mut f, res, kind)?;
        f.flush()?;
    }
    Ok(())
}

pub fn write_sweep_file(dir: &Path, res: &SweepResult) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut f = create(&dir.join("sweep.csv"))?;
    write_sweep(&mut f, res)?;
    f.flush()?;
    Ok(())
}
