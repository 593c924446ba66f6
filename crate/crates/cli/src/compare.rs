use std::path::Path;

use jdet_core::prediction::fmt_sig9;
use serde::Serialize;

use crate::config::CompareBlock;
use crate::CliError;

/// A CSV file read as named numeric columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Parses a header row and numeric cells; `true`/`false` read as 1/0.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let header = rdr
            .headers()
            .map_err(|e| CliError::Config(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| CliError::Config(e.to_string()))?;
            let row = rec
                .iter()
                .map(|c| match c {
                    "true" => Ok(1.0),
                    "false" => Ok(0.0),
                    _ => c.parse::<f64>().map_err(|_| CliError::Config(format!("non-numeric cell {c:?}"))),
                })
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(row);
        }
        Ok(Self { header, rows })
    }

    pub fn index(&self, names: &[&str]) -> Option<usize> {
        names.iter().find_map(|n| self.header.iter().position(|h| h == n))
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[i]).collect()
    }

    /// Keeps rows whose `name` column equals `want`; without `want` the column
    /// must hold a single value.
    pub fn select(self, name: &str, want: Option<f64>) -> Result<Self, CliError> {
        let Some(i) = self.index(&[name]) else {
            return Ok(self);
        };
        let want = match want {
            Some(w) => w,
            None => {
                let first = self.rows.first().map_or(0.0, |r| r[i]);
                if self.rows.iter().any(|r| r[i] != first) {
                    return Err(CliError::Config(format!("table holds several `{name}` values; choose one")));
                }
                first
            }
        };
        let tol = 1e-9 * want.abs().max(1.0);
        let rows = self.rows.into_iter().filter(|r| (r[i] - want).abs() <= tol).collect();
        Ok(Self {
            header: self.header,
            rows,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparePoint {
    pub x: f64,
    pub theory: f64,
    pub simulation: f64,
    pub ratio: f64,
    pub poisson_sigma: f64,
    /// Counts backing the simulated value.
    pub counts: f64,
    pub judged: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareReport {
    pub points: Vec<ComparePoint>,
    pub regridded: bool,
    pub judged: usize,
    pub failed: usize,
    /// Ratio of trapezoid integrals, simulation over theory, on the common points.
    pub integral_ratio: f64,
    pub verdict: Verdict,
    pub thresholds: CompareBlock,
}

impl CompareReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,theory,simulation,ratio,poisson_sigma,counts,judged,pass\n");
        for p in &self.points {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                fmt_sig9(p.x),
                fmt_sig9(p.theory),
                fmt_sig9(p.simulation),
                fmt_sig9(p.ratio),
                fmt_sig9(p.poisson_sigma),
                fmt_sig9(p.counts),
                p.judged,
                p.pass
            ));
        }
        out
    }
}

fn interp(x: &[f64], y: &[f64], t: f64) -> Option<f64> {
    let n = x.len();
    if n == 0 || t < x[0] || t > x[n - 1] {
        return None;
    }
    if n == 1 {
        return Some(y[0]);
    }
    let k = x.partition_point(|&v| v <= t).clamp(1, n - 1);
    let w = (t - x[k - 1]) / (x[k] - x[k - 1]);
    Some(y[k - 1] + w * (y[k] - y[k - 1]))
}

fn same_grid(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(u, v)| (u - v).abs() <= 1e-9 * u.abs().max(1.0))
}

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2).zip(y.windows(2)).map(|(u, v)| 0.5 * (u[1] - u[0]) * (v[0] + v[1])).sum()
}

/// Theory `(x, value)` from a prediction table or a density table with its own prediction.
pub fn theory_series(t: &Table) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let xi = t
        .index(&["x", "amplitude"])
        .ok_or_else(|| CliError::Config("theory table needs an `x` or `amplitude` column".into()))?;
    let vi = t
        .index(&["v_f", "predicted"])
        .ok_or_else(|| CliError::Config("theory table needs a `v_f` or `predicted` column".into()))?;
    Ok((t.column(xi), t.column(vi)))
}

/// Simulated `(x, density, sigma, counts)`. Smoothed histograms get their
/// window counts from the raw bins; tables with `std_error` use it directly.
pub fn simulation_series(t: &Table, half_window: usize) -> Result<[Vec<f64>; 4], CliError> {
    let xi = t
        .index(&["x", "amplitude"])
        .ok_or_else(|| CliError::Config("simulation table needs an `x` or `amplitude` column".into()))?;
    let di = t
        .index(&["density"])
        .ok_or_else(|| CliError::Config("simulation table needs a `density` column".into()))?;
    let ci = t
        .index(&["count"])
        .ok_or_else(|| CliError::Config("simulation table needs a `count` column".into()))?;
    let x = t.column(xi);
    let dens = t.column(di);
    let raw = t.column(ci);
    let (sigma, counts) = match t.index(&["std_error"]) {
        Some(si) => (t.column(si), raw),
        None => {
            let n = raw.len();
            let mut prefix = vec![0.0; n + 1];
            for i in 0..n {
                prefix[i + 1] = prefix[i] + raw[i];
            }
            let window: Vec<f64> = (0..n)
                .map(|j| prefix[(j + half_window + 1).min(n)] - prefix[j.saturating_sub(half_window)])
                .collect();
            let sigma = dens
                .iter()
                .zip(&window)
                .map(|(d, k)| if *k > 0.0 { d / k.sqrt() } else { f64::NAN })
                .collect();
            (sigma, window)
        }
    };
    Ok([x, dens, sigma, counts])
}

/// Point-by-point comparison. A judged point passes when
/// `|sim − theory| ≤ rel_tol·theory + n_sigma·σ`.
pub fn compare(theory: &Table, sim: &Table, th: &CompareBlock) -> Result<CompareReport, CliError> {
    let (tx, tv) = theory_series(theory)?;
    let [sx, sv, ss, sc] = simulation_series(sim, th.half_window)?;
    let regridded = !same_grid(&tx, &sx);
    if regridded {
        eprintln!("warning: theory and simulation grids differ; theory regridded by linear interpolation");
    }
    let mut points = Vec::new();
    for i in 0..sx.len() {
        let Some(theory) = interp(&tx, &tv, sx[i]) else {
            continue;
        };
        let diff = (sv[i] - theory).abs();
        let judged = sc[i] >= th.min_count && ss[i].is_finite();
        let pass = !judged || diff <= th.rel_tol * theory.abs() + th.n_sigma * ss[i];
        points.push(ComparePoint {
            x: sx[i],
            theory,
            simulation: sv[i],
            ratio: sv[i] / theory,
            poisson_sigma: ss[i],
            counts: sc[i],
            judged,
            pass,
        });
    }
    if points.len() < sx.len() {
        eprintln!("warning: {} simulation points lie outside the theory grid", sx.len() - points.len());
    }
    let judged = points.iter().filter(|p| p.judged).count();
    let failed = points.iter().filter(|p| !p.pass).count();
    let px: Vec<f64> = points.iter().map(|p| p.x).collect();
    let ps: Vec<f64> = points.iter().map(|p| p.simulation).collect();
    let pt: Vec<f64> = points.iter().map(|p| p.theory).collect();
    let integral_ratio = if px.len() > 1 {
        trapezoid(&px, &ps) / trapezoid(&px, &pt)
    } else {
        ps.first().zip(pt.first()).map_or(f64::NAN, |(s, t)| s / t)
    };
    let verdict = if judged == 0 {
        Verdict::Inconclusive
    } else if failed == 0 {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(CompareReport {
        points,
        regridded,
        judged,
        failed,
        integral_ratio,
        verdict,
        thresholds: th.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hist(counts: &[u64], density: f64) -> Table {
        let mut s = String::from("x,count,density\n");
        for (i, c) in counts.iter().enumerate() {
            s.push_str(&format!("{},{},{}\n", i, c, density));
        }
        Table::parse(&s).unwrap()
    }

    fn flat_theory(n: usize, v: f64, step: f64) -> Table {
        let mut s = String::from("x,v_f\n");
        for i in 0..n {
            s.push_str(&format!("{},{}\n", i as f64 * step, v));
        }
        Table::parse(&s).unwrap()
    }

    fn small_window() -> CompareBlock {
        CompareBlock {
            half_window: 1,
            ..CompareBlock::default()
        }
    }

    #[test]
    fn matching_series_pass() {
        let r = compare(&flat_theory(5, 1.0, 1.0), &hist(&[400; 5], 1.02), &small_window()).unwrap();
        assert_eq!(r.verdict, Verdict::Pass);
        assert!(!r.regridded);
        assert!((r.integral_ratio - 1.02).abs() < 1e-12);
    }

    #[test]
    fn large_deviation_fails() {
        let r = compare(&flat_theory(5, 1.0, 1.0), &hist(&[400; 5], 2.0), &small_window()).unwrap();
        assert_eq!(r.verdict, Verdict::Fail);
    }

    #[test]
    fn empty_histogram_is_inconclusive() {
        let r = compare(&flat_theory(5, 1.0, 1.0), &hist(&[0; 5], 0.0), &small_window()).unwrap();
        assert_eq!(r.verdict, Verdict::Inconclusive);
    }

    #[test]
    fn different_grids_are_interpolated() {
        let mut s = String::from("x,v_f\n");
        for i in 0..9 {
            s.push_str(&format!("{},{}\n", i as f64 * 0.5, 1.0 + i as f64 * 0.5));
        }
        let r = compare(&Table::parse(&s).unwrap(), &hist(&[400; 5], 1.0), &small_window()).unwrap();
        assert!(r.regridded);
        assert_eq!(r.points[2].theory, 3.0);
    }

    #[test]
    fn select_requires_choice_for_sweeps() {
        let t = Table::parse("lambda0,x,v_f\n5,1,2\n7,1,3\n").unwrap();
        assert!(t.clone().select("lambda0", None).is_err());
        let s = t.select("lambda0", Some(7.0)).unwrap();
        assert_eq!(s.rows, vec![vec![7.0, 1.0, 3.0]]);
    }

    #[test]
    fn window_counts_from_raw_bins() {
        let [_, _, sigma, counts] = simulation_series(&hist(&[1, 2, 3], 1.0), 1).unwrap();
        assert_eq!(counts, vec![3.0, 6.0, 5.0]);
        assert!((sigma[1] - 1.0 / 6f64.sqrt()).abs() < 1e-15);
    }
}
