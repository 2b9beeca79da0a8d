//! Trajectory files: CSV with a `t,x1..xn,y1..yn,z` header, or JSON `{meta, t, points}`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::refint::{Trajectory, TrajectoryMeta};

use super::config::Format;

fn header(dim: usize) -> Result<String> {
    if dim % 2 == 0 {
        return Err(Error::Precondition(format!(
            "phase dimension {dim} is not odd"
        )));
    }
    let n = dim / 2;
    let cols = std::iter::once("t".to_string())
        .chain((1..=n).map(|i| format!("x{i}")))
        .chain((1..=n).map(|i| format!("y{i}")))
        .chain(std::iter::once("z".to_string()));
    Ok(cols.collect::<Vec<_>>().join(","))
}

#[derive(Serialize, Deserialize)]
struct JsonTrajectory {
    meta: TrajectoryMeta,
    #[serde(rename = "t")]
    times: Vec<f64>,
    points: Vec<Vec<f64>>,
}

/// Seventeen significant digits, which round-trips every finite double.
fn number(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn export_trajectory(tr: &Trajectory, path: &Path, format: Format) -> Result<()> {
    let text = match format {
        Format::Csv => {
            let mut out = header(tr.dim())?;
            out.push('\n');
            for (time, point) in tr.times.iter().zip(&tr.points) {
                let row: Vec<String> = std::iter::once(*time)
                    .chain(point.iter().copied())
                    .map(number)
                    .collect();
                out.push_str(&row.join(","));
                out.push('\n');
            }
            out
        }
        Format::Json => serde_json::to_string_pretty(&JsonTrajectory {
            meta: tr.meta.clone(),
            times: tr.times.clone(),
            points: tr.points.clone(),
        })
        .map_err(|err| Error::Config(format!("cannot serialise trajectory: {err}")))?,
    };
    fs::write(path, text)?;
    Ok(())
}

/// Read a file written by [`export_trajectory`]; the format follows the extension.
pub fn import_trajectory(path: &Path) -> Result<Trajectory> {
    let text = fs::read_to_string(path)?;
    let bad = |msg: String| Error::Config(format!("{}: {msg}", path.display()));
    if path.extension().is_some_and(|err| err == "json") {
        let parsed: JsonTrajectory =
            serde_json::from_str(&text).map_err(|err| bad(err.to_string()))?;
        return Trajectory::new(parsed.times, parsed.points, parsed.meta);
    }
    let mut lines = text.lines();
    let head = lines.next().ok_or_else(|| bad("empty file".into()))?;
    let cols = head.split(',').count();
    if cols < 2 || header(cols - 1).ok().as_deref() != Some(head) {
        return Err(bad(format!("unexpected header '{head}'")));
    }
    let (mut times, mut points) = (Vec::new(), Vec::new());
    for (i, line) in lines
        .enumerate()
        .filter(|(_, row_text)| !row_text.is_empty())
    {
        let row = line
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|err| bad(format!("row {}: {err}", i + 2)))?;
        if row.len() != cols {
            return Err(bad(format!("row {} has {} columns", i + 2, row.len())));
        }
        times.push(row[0]);
        points.push(row[1..].to_vec());
    }
    Trajectory::new(
        times,
        points,
        TrajectoryMeta {
            method: "imported".into(),
            residuals: Vec::new(),
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::geometry::{shared, ContactSystem, DarbouxChart};
    use crate::refint;

    fn reeb_flow(steps: usize) -> Trajectory {
        let chart = DarbouxChart::new(1).unwrap();
        let ham = Expr::parse("1 + 0.1*x1*y1 + z/3", chart.names()).unwrap();
        let system = ContactSystem::new(chart, shared(ham)).unwrap();
        refint::rk4(&system, &[0.1, 0.2, 1.0 / 3.0], steps as f64 * 0.1, 0.1).unwrap()
    }

    #[test]
    fn three_steps_give_four_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tr.csv");
        export_trajectory(&reeb_flow(3), &path, Format::Csv).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "t,x1,y1,z");
        assert_eq!(lines.len(), 5);
    }

    #[test]
    fn round_trips_are_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let tr = reeb_flow(7);
        for format in [Format::Csv, Format::Json] {
            let path = dir.path().join(format!("tr.{}", format.extension()));
            export_trajectory(&tr, &path, format).unwrap();
            let back = import_trajectory(&path).unwrap();
            assert_eq!(back.times, tr.times);
            assert_eq!(back.points, tr.points);
        }
    }

    #[test]
    fn files_compare_like_memory() {
        let dir = tempfile::tempdir().unwrap();
        let first = reeb_flow(5);
        let mut b = first.clone();
        b.points
            .iter_mut()
            .for_each(|point| point[0] += 1e-7 * point[1]);
        let (pa, pb) = (dir.path().join("a.csv"), dir.path().join("b.json"));
        export_trajectory(&first, &pa, Format::Csv).unwrap();
        export_trajectory(&b, &pb, Format::Json).unwrap();
        let from_files = refint::compare(
            &import_trajectory(&pa).unwrap(),
            &import_trajectory(&pb).unwrap(),
        )
        .unwrap();
        assert_eq!(from_files, refint::compare(&first, &b).unwrap());
    }

    #[test]
    fn malformed_header_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "t,q,p,s\n0,1,2,3\n").unwrap();
        assert!(import_trajectory(&path).is_err());
    }
}
