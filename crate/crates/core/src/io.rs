//! CSV and plain-text outputs plus matching gnuplot scripts.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bloch::{HusimiGrid, SpinMoments, SqueezingReport};
use crate::error::{invalid, Result};
use crate::grape::OctTrace;
use crate::scalar::Real;
use crate::schedules::{ControlRamp, LambdaMap};
use crate::two_mode::{expectation, ManyBodyState, Operator};

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// One row per report; `energy` is empty when absent.
pub fn write_reports<T: Real>(path: &Path, reports: &[SqueezingReport<T>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for r in reports {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_reports(path: &Path) -> Result<Vec<SqueezingReport<f64>>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Trajectory table: `t, jx, jy, jz, var_jz, energy` and, optionally,
/// `re_k, im_k` for every amplitude.
pub fn write_trajectory<T: Real, H: Operator<T> + ?Sized>(
    path: &Path,
    states: &[ManyBodyState<T>],
    hamiltonian: Option<&H>,
    with_amplitudes: bool,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let dim = states.first().map(|s| s.dim()).unwrap_or(0);
    let mut header: Vec<String> = ["t", "jx", "jy", "jz", "var_jz", "energy"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    if with_amplitudes {
        for k in 0..dim {
            header.push(format!("re_{k}"));
            header.push(format!("im_{k}"));
        }
    }
    w.write_record(&header)?;
    for s in states {
        let m = SpinMoments::of(s);
        let energy = match hamiltonian {
            Some(h) => expectation(s, h)?.to_f64_lossy().to_string(),
            None => String::new(),
        };
        let mut row = vec![
            s.time().to_f64_lossy().to_string(),
            m.jx.to_f64_lossy().to_string(),
            m.jy.to_f64_lossy().to_string(),
            m.jz.to_f64_lossy().to_string(),
            m.var_jz().to_f64_lossy().to_string(),
            energy,
        ];
        if with_amplitudes {
            for a in s.amplitudes() {
                row.push(a.re.to_f64_lossy().to_string());
                row.push(a.im.to_f64_lossy().to_string());
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct RampRow {
    t: f64,
    lambda: f64,
}

/// `t, lambda` rows.
pub fn write_ramp<T: Real>(path: &Path, ramp: &ControlRamp<T>) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for (i, l) in ramp.samples.iter().enumerate() {
        w.serialize(RampRow {
            t: ramp.time(i).to_f64_lossy(),
            lambda: l.to_f64_lossy(),
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a ramp written by [`write_ramp`]; the time column must be uniform.
pub fn read_ramp(path: &Path) -> Result<ControlRamp<f64>> {
    let mut r = csv::Reader::from_path(path)?;
    let rows: Vec<RampRow> = r.deserialize().collect::<std::result::Result<_, _>>()?;
    if rows.len() < 2 {
        return Err(invalid("ramp file needs at least two rows"));
    }
    let t0 = rows[0].t;
    let dt = (rows[rows.len() - 1].t - t0) / (rows.len() - 1) as f64;
    for (i, row) in rows.iter().enumerate() {
        if (row.t - (t0 + dt * i as f64)).abs() > 1e-9 * (1.0 + row.t.abs()) {
            return Err(invalid(format!("ramp time column is not uniform at row {i}")));
        }
    }
    ControlRamp::new(t0, dt, rows.into_iter().map(|r| r.lambda).collect())
}

/// `lambda, omega, kappa` sampled at `points` values across the map's support.
pub fn write_lambda_map<T: Real>(path: &Path, map: &LambdaMap<T>, points: usize) -> Result<()> {
    let (lo, hi) = map.support();
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["lambda", "omega", "kappa"])?;
    for l in crate::bloch::linspace(lo, hi, points.max(2)) {
        let (o, k) = map.params(l);
        w.write_record([l, o, k].map(|v| v.to_f64_lossy().to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_oct_trace<T: Real>(path: &Path, trace: &OctTrace<T>) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for it in &trace.iterations {
        w.serialize(it)?;
    }
    w.flush()?;
    Ok(())
}

/// Whitespace-separated matrix, one row per line.
pub fn write_matrix<T: Real>(path: &Path, rows: &[Vec<T>]) -> Result<()> {
    let mut w = create(path)?;
    for row in rows {
        let line: Vec<String> = row.iter().map(|v| format!("{:.10e}", v.to_f64_lossy())).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    w.flush()?;
    Ok(())
}

/// `theta phi q` triples with a blank line after every theta row (gnuplot
/// grid format).
pub fn write_husimi<T: Real>(path: &Path, grid: &HusimiGrid<T>) -> Result<()> {
    let mut w = create(path)?;
    for (i, th) in grid.theta.iter().enumerate() {
        for (j, ph) in grid.phi.iter().enumerate() {
            writeln!(
                w,
                "{:.8} {:.8} {:.8e}",
                th.to_f64_lossy(),
                ph.to_f64_lossy(),
                grid.get(i, j).to_f64_lossy()
            )?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Plot kinds with a bundled gnuplot script.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    /// `xi_S(t)` and `Var(Jz)(t)` from a report CSV.
    Squeezing,
    /// `lambda(t)` from a ramp CSV.
    Ramp,
    /// Density map from a plain-text matrix (rows = time, columns = x).
    DensityMap,
    /// Husimi distribution drawn on the unit sphere.
    HusimiSphere,
    /// Objective per iteration from an OCT trace CSV.
    OctTrace,
    /// Growth rate against drive frequency.
    Resonance,
}

/// Writes a gnuplot script that renders `data` (a file name relative to the
/// script) to `<stem>.png`. Color scales are automatic.
pub fn write_gnuplot_script(path: &Path, kind: PlotKind, data: &str, title: &str) -> Result<()> {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("plot")
        .to_string();
    let head = format!(
        "set terminal pngcairo size 900,600\nset output '{stem}.png'\nset title '{title}'\n"
    );
    let body = match kind {
        PlotKind::Squeezing => format!(
            "set datafile separator ','\nset key autotitle columnhead\nset xlabel 't (ms)'\n\
             set ylabel 'xi_S'\nset y2label 'Var(Jz)'\nset y2tics\n\
             plot '{data}' using 't':'xi_s' with lines lw 2 title 'xi_S', \\\n     \
             '' using 't':'var_jz' axes x1y2 with lines title 'Var(Jz)'\n"
        ),
        PlotKind::Ramp => format!(
            "set datafile separator ','\nset xlabel 't (ms)'\nset ylabel 'lambda'\n\
             plot '{data}' using 1:2 every ::1 with lines lw 2 notitle\n"
        ),
        PlotKind::DensityMap => format!(
            "set xlabel 'x index'\nset ylabel 'time index'\nset view map\n\
             plot '{data}' matrix with image notitle\n"
        ),
        PlotKind::HusimiSphere => format!(
            "set view equal xyz\nset parametric\nunset border\nunset tics\nset pm3d depthorder\n\
             splot '{data}' using (sin($1)*cos($2)):(sin($1)*sin($2)):(cos($1)):3 with pm3d notitle\n"
        ),
        PlotKind::OctTrace => format!(
            "set datafile separator ','\nset key autotitle columnhead\nset logscale y\n\
             set xlabel 'iteration'\nplot '{data}' using 'iteration':'total' with linespoints title 'J'\n"
        ),
        PlotKind::Resonance => format!(
            "set datafile separator ','\nset key autotitle columnhead\n\
             set xlabel 'drive / omega_J'\nset ylabel 'growth rate (1/ms)'\n\
             plot '{data}' using 'ratio':'rate' with linespoints lw 2 notitle\n"
        ),
    };
    let mut w = create(path)?;
    w.write_all(head.as_bytes())?;
    w.write_all(body.as_bytes())?;
    w.flush()?;
    Ok(())
}
