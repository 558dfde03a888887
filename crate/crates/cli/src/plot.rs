//! Plot-ready tables derived from a run's summary rows.
//!
//! Every kind emits rows `x,y,stderr` (stderr empty where it has no
//! meaning):
//!
//! * `histogram`: `k = min(⌈√n⌉, 100)` equal-width bins spanning
//!   `[min, max]`, the last bin closed; `x` is the bin centre, `y` the
//!   fraction of samples in the bin, `stderr = √(y(1−y)/n)`. Constant data
//!   gives a single bin.
//! * `ecdf`: one row per distinct value, `y = #{X ≤ x}/n`.
//! * `tail`: one row per distinct value with `S(x) = #{X > x}/n > 0`,
//!   `y = ln S(x)`, `stderr = √((1−S)/(nS))` (delta method).
//! * `scatter`: `(x, y)` pairs of two columns in row order.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{CliError, CliResult};
use crate::output::{write_file, RunRecord, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Histogram,
    Ecdf,
    Tail,
    Scatter,
}

impl FromStr for PlotKind {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s {
            "histogram" => Ok(PlotKind::Histogram),
            "ecdf" => Ok(PlotKind::Ecdf),
            "tail" => Ok(PlotKind::Tail),
            "scatter" => Ok(PlotKind::Scatter),
            other => Err(CliError::Plot(format!(
                "unknown plot kind `{other}` (histogram, ecdf, tail, scatter)"
            ))),
        }
    }
}

impl PlotKind {
    pub fn name(&self) -> &'static str {
        match self {
            PlotKind::Histogram => "histogram",
            PlotKind::Ecdf => "ecdf",
            PlotKind::Tail => "tail",
            PlotKind::Scatter => "scatter",
        }
    }
}

pub const MAX_BINS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlotRow {
    pub x: f64,
    pub y: f64,
    pub stderr: Option<f64>,
}

fn sorted_finite(xs: &[f64]) -> CliResult<Vec<f64>> {
    let mut v: Vec<f64> = xs.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return Err(CliError::Plot("no finite values to plot".into()));
    }
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    Ok(v)
}

pub fn histogram(xs: &[f64]) -> CliResult<Vec<PlotRow>> {
    let v = sorted_finite(xs)?;
    let n = v.len();
    let (lo, hi) = (v[0], v[n - 1]);
    let nf = n as f64;
    if hi == lo {
        return Ok(vec![PlotRow {
            x: lo,
            y: 1.0,
            stderr: Some(0.0),
        }]);
    }
    let k = ((nf.sqrt().ceil()) as usize).clamp(1, MAX_BINS);
    let width = (hi - lo) / k as f64;
    let mut counts = vec![0usize; k];
    for &x in &v {
        let b = (((x - lo) / width) as usize).min(k - 1);
        counts[b] += 1;
    }
    Ok(counts
        .iter()
        .enumerate()
        .map(|(b, &c)| {
            let p = c as f64 / nf;
            PlotRow {
                x: lo + (b as f64 + 0.5) * width,
                y: p,
                stderr: Some((p * (1.0 - p) / nf).sqrt()),
            }
        })
        .collect())
}

pub fn ecdf(xs: &[f64]) -> CliResult<Vec<PlotRow>> {
    let v = sorted_finite(xs)?;
    let n = v.len() as f64;
    let mut rows = Vec::new();
    for (i, &x) in v.iter().enumerate() {
        if i + 1 < v.len() && v[i + 1] == x {
            continue;
        }
        rows.push(PlotRow {
            x,
            y: (i + 1) as f64 / n,
            stderr: None,
        });
    }
    Ok(rows)
}

pub fn tail(xs: &[f64]) -> CliResult<Vec<PlotRow>> {
    let v = sorted_finite(xs)?;
    let len = v.len();
    let n = len as f64;
    let mut rows = Vec::new();
    for (i, &x) in v.iter().enumerate() {
        if i + 1 < len && v[i + 1] == x {
            continue;
        }
        let above = len - i - 1;
        if above == 0 {
            break;
        }
        let s = above as f64 / n;
        rows.push(PlotRow {
            x,
            y: s.ln(),
            stderr: Some(((1.0 - s) / (n * s)).sqrt()),
        });
    }
    if rows.is_empty() {
        return Err(CliError::Plot("tail needs at least two distinct values".into()));
    }
    Ok(rows)
}

pub fn scatter(xs: &[f64], ys: &[f64]) -> CliResult<Vec<PlotRow>> {
    if xs.len() != ys.len() {
        return Err(CliError::Plot(format!("scatter columns differ in length ({} vs {})", xs.len(), ys.len())));
    }
    if xs.is_empty() {
        return Err(CliError::Plot("no values to plot".into()));
    }
    Ok(xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| PlotRow { x, y, stderr: None })
        .collect())
}

/// Plot rows of `kind` for column `x` (and `y` for scatter) of a table.
pub fn plot_table(table: &Table, kind: PlotKind, x: &str, y: Option<&str>) -> CliResult<Vec<PlotRow>> {
    if table.is_empty() {
        return Err(CliError::Plot(format!("table {} is empty", table.name)));
    }
    let xs = table.column(x)?;
    match kind {
        PlotKind::Histogram => histogram(&xs),
        PlotKind::Ecdf => ecdf(&xs),
        PlotKind::Tail => tail(&xs),
        PlotKind::Scatter => {
            let y = y.ok_or_else(|| CliError::Plot("scatter needs a second column (x:y)".into()))?;
            scatter(&xs, &table.column(y)?)
        }
    }
}

/// Writes `<out>/plot-<kind>-<column>.csv` from the record's summary rows.
/// `column` is `x` or, for scatter, `x:y`.
pub fn emit_plot_data(record: &RunRecord, kind: PlotKind, column: &str, out: &Path) -> CliResult<PathBuf> {
    let (x, y) = match column.split_once(':') {
        Some((a, b)) => (a, Some(b)),
        None => (column, None),
    };
    let rows = plot_table(&record.summary, kind, x, y)?;
    let mut text = record.header().comment_lines();
    text.push_str("x,y,stderr\n");
    for r in rows {
        match r.stderr {
            Some(e) => text.push_str(&format!("{},{},{}\n", r.x, r.y, e)),
            None => text.push_str(&format!("{},{},\n", r.x, r.y)),
        }
    }
    let name = format!("plot-{}-{}.csv", kind.name(), column.replace(':', "-"));
    write_file(out, &name, &text)?;
    Ok(out.join(name))
}

#[cfg(test)]
mod tests {
    use super::*;
    use bbmx_core::StreamKey;

    #[test]
    fn ecdf_of_three_points() {
        let rows = ecdf(&[2.0, 1.0, 3.0]).unwrap();
        let pairs: Vec<(f64, f64)> = rows.iter().map(|r| (r.x, r.y)).collect();
        assert_eq!(pairs, vec![(1.0, 1.0 / 3.0), (2.0, 2.0 / 3.0), (3.0, 1.0)]);
        let ties = ecdf(&[1.0, 1.0, 2.0]).unwrap();
        assert_eq!(ties.len(), 2);
        assert_eq!(ties[0].y, 2.0 / 3.0);
    }

    #[test]
    fn histogram_constant_data_single_bin() {
        let rows = histogram(&[4.2; 50]).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!((rows[0].x, rows[0].y), (4.2, 1.0));
    }

    #[test]
    fn histogram_bins_sum_to_one() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        let rows = histogram(&xs).unwrap();
        assert_eq!(rows.len(), 32);
        let total: f64 = rows.iter().map(|r| r.y).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let many: Vec<f64> = (0..100_000).map(|i| i as f64).collect();
        assert_eq!(histogram(&many).unwrap().len(), MAX_BINS);
    }

    #[test]
    fn tail_of_exponential_has_rate_slope() {
        use rand_distr::{Distribution, Exp};
        let mut rng = StreamKey::new(11, 0).fast_rng();
        let d = Exp::new(std::f64::consts::SQRT_2).unwrap();
        let xs: Vec<f64> = (0..200_000).map(|_| d.sample(&mut rng)).collect();
        let rows = tail(&xs).unwrap();
        // Least squares over the well-populated part of the table.
        let pts: Vec<(f64, f64)> = rows.iter().filter(|r| r.x <= 3.0).map(|r| (r.x, r.y)).collect();
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let slope = sxy / sxx;
        assert!((slope + std::f64::consts::SQRT_2).abs() < 0.03, "slope {slope}");
    }

    #[test]
    fn empty_inputs_rejected() {
        assert!(histogram(&[]).is_err());
        assert!(ecdf(&[f64::NAN]).is_err());
        assert!(tail(&[1.0]).is_err());
        assert!(scatter(&[1.0], &[]).is_err());
        let t = Table::new("empty", &["x"]);
        assert!(plot_table(&t, PlotKind::Ecdf, "x", None).is_err());
    }

    #[test]
    fn kinds_parse() {
        for k in ["histogram", "ecdf", "tail", "scatter"] {
            assert_eq!(k.parse::<PlotKind>().unwrap().name(), k);
        }
        assert!("pie".parse::<PlotKind>().is_err());
    }
}
