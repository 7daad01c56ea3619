//! Serialization: measure/coupling JSON, CDF-grid and path-ensemble CSV,
//! Bass-solution JSON, check reports, and the fan-chart plot script.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bassfp::BassSolution;
use crate::error::{Error, Result};
use crate::measure1d::{CdfGrid, Measure1D};
use crate::numeraire::{LiftedCoupling, LiftedTriple, MartingaleCoupling, PathEnsemble};

/// `{"atoms":[...],"weights":[...]}`
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeasureJson {
    pub atoms: Vec<f64>,
    pub weights: Vec<f64>,
}

impl MeasureJson {
    pub fn of(m: &Measure1D) -> Self {
        Self {
            atoms: m.atoms().to_vec(),
            weights: m.weights().to_vec(),
        }
    }

    pub fn to_measure(&self) -> Result<Measure1D> {
        Measure1D::new(self.atoms.clone(), self.weights.clone())
    }
}

pub fn read_measure(path: &Path) -> Result<Measure1D> {
    let text = std::fs::read_to_string(path)?;
    let j: MeasureJson = serde_json::from_str(&text)?;
    j.to_measure()
}

pub fn write_measure(path: &Path, m: &Measure1D) -> Result<()> {
    let text = serde_json::to_string_pretty(&MeasureJson::of(m))?;
    std::fs::write(path, text)?;
    Ok(())
}

/// `{"source":{...},"target":{...},"weights":[[...]]}`; the lifted variant
/// adds a `u` per row of triples.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CouplingJson {
    pub source: MeasureJson,
    pub target: MeasureJson,
    pub weights: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u: Option<Vec<f64>>,
}

impl CouplingJson {
    pub fn of(pi: &MartingaleCoupling) -> Result<Self> {
        let m = pi.target_atoms().len();
        Ok(Self {
            source: MeasureJson::of(&pi.source_marginal()?),
            target: MeasureJson::of(&pi.target_marginal()?),
            weights: pi.weights().chunks(m).map(|r| r.to_vec()).collect(),
            u: None,
        })
    }

    pub fn to_coupling(&self) -> Result<MartingaleCoupling> {
        let source = self.source.to_measure()?;
        let target = self.target.to_measure()?;
        let weights: Vec<f64> = self.weights.iter().flatten().copied().collect();
        MartingaleCoupling::new(
            source.atoms().to_vec(),
            target.atoms().to_vec(),
            weights,
        )
    }
}

pub fn read_coupling(path: &Path) -> Result<MartingaleCoupling> {
    let text = std::fs::read_to_string(path)?;
    let j: CouplingJson = serde_json::from_str(&text)?;
    j.to_coupling()
}

pub fn write_coupling(path: &Path, pi: &MartingaleCoupling) -> Result<()> {
    let text = serde_json::to_string_pretty(&CouplingJson::of(pi)?)?;
    std::fs::write(path, text)?;
    Ok(())
}

/// CDF grid CSV: two columns `x,F`.
pub fn write_cdf_grid(path: &Path, g: &CdfGrid) -> Result<()> {
    let mut out = String::from("x,F\n");
    for (x, f) in g.grid().iter().zip(g.values()) {
        writeln!(out, "{x},{f}").unwrap();
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_cdf_grid(path: &Path) -> Result<CdfGrid> {
    let text = std::fs::read_to_string(path)?;
    let mut grid = Vec::new();
    let mut vals = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let parse = |s: Option<&str>| -> Result<f64> {
            s.ok_or_else(|| Error::InvalidArgument(format!("CDF CSV line {}", i + 1)))?
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::InvalidArgument(format!("CDF CSV line {}: {e}", i + 1)))
        };
        grid.push(parse(parts.next())?);
        vals.push(parse(parts.next())?);
    }
    CdfGrid::new(grid, vals)
}

/// Lifted coupling CSV: columns `x0,u,x1,w`.
pub fn write_lifted_csv(path: &Path, lc: &LiftedCoupling) -> Result<()> {
    let mut out = String::from("x0,u,x1,w\n");
    for t in lc.triples() {
        writeln!(out, "{},{},{},{}", t.x0, t.u, t.x1, t.w).unwrap();
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_lifted_csv(path: &Path) -> Result<LiftedCoupling> {
    let text = std::fs::read_to_string(path)?;
    let mut triples = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidArgument(format!("lifted CSV line {}: {e}", i + 1)))?;
        if vals.len() != 4 {
            return Err(Error::InvalidArgument(format!(
                "lifted CSV line {}: expected 4 columns",
                i + 1
            )));
        }
        triples.push(LiftedTriple {
            x0: vals[0],
            u: vals[1],
            x1: vals[2],
            w: vals[3],
        });
    }
    LiftedCoupling::new(triples)
}

/// Path ensemble CSV: header `t_0,...,t_M,weight`, one row per path.
pub fn write_ensemble_csv(path: &Path, e: &PathEnsemble) -> Result<()> {
    let mut out = String::new();
    for k in 0..e.times().len() {
        write!(out, "t_{k},").unwrap();
    }
    out.push_str("weight\n");
    for i in 0..e.n_paths() {
        for v in e.path(i) {
            write!(out, "{v},").unwrap();
        }
        writeln!(out, "{}", e.weights()[i]).unwrap();
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_ensemble_csv(path: &Path, times: Vec<f64>) -> Result<PathEnsemble> {
    let text = std::fs::read_to_string(path)?;
    let mut values = Vec::new();
    let mut weights = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidArgument(format!("ensemble CSV line {}: {e}", i + 1)))?;
        if vals.len() != times.len() + 1 {
            return Err(Error::InvalidArgument(format!(
                "ensemble CSV line {}: expected {} columns",
                i + 1,
                times.len() + 1
            )));
        }
        values.extend_from_slice(&vals[..times.len()]);
        weights.push(vals[times.len()]);
    }
    PathEnsemble::new(times, values, weights)
}

/// Check report: `{lhs, rhs, mc_error, pass}` plus the resolved run config
/// for provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub lhs: f64,
    pub rhs: f64,
    pub mc_error: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

pub fn write_report(path: &Path, r: &Report) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(r)?)?;
    Ok(())
}

/// Bass solution JSON: alpha grid/values, the terminal map on the same grid,
/// and a diagnostics block.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BassSolutionJson {
    pub grid: Vec<f64>,
    pub alpha_cdf: Vec<f64>,
    pub t1: Vec<f64>,
    pub diagnostics: BassDiagnostics,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BassDiagnostics {
    pub iterations: usize,
    pub residual: f64,
    pub residual_history: Vec<f64>,
}

impl BassSolutionJson {
    pub fn of(sol: &BassSolution) -> Self {
        Self {
            grid: sol.grid().to_vec(),
            alpha_cdf: sol.alpha_cdf_values().to_vec(),
            t1: sol.t1_values().to_vec(),
            diagnostics: BassDiagnostics {
                iterations: sol.iterations,
                residual: sol.residual,
                residual_history: sol.residual_history.clone(),
            },
        }
    }
}

pub fn write_bass_solution(path: &Path, sol: &BassSolution) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(&BassSolutionJson::of(sol))?)?;
    Ok(())
}

pub fn write_residual_history_csv(path: &Path, sol: &BassSolution) -> Result<()> {
    let mut out = String::from("iteration,residual\n");
    for (i, r) in sol.residual_history.iter().enumerate() {
        writeln!(out, "{i},{r}").unwrap();
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Python script rendering fan charts from ensemble CSVs: one panel per
/// (label, csv path) pair, a spaghetti of sample paths over shaded
/// weighted-quantile bands.
pub fn plot_script(panels: &[(String, String)]) -> String {
    let mut s = String::new();
    s.push_str("#!/usr/bin/env python3\n");
    s.push_str("\"\"\"Render fan charts from path-ensemble CSVs.\"\"\"\n");
    s.push_str("import csv\nimport sys\n\nimport matplotlib\nmatplotlib.use(\"Agg\")\nimport matplotlib.pyplot as plt\nimport numpy as np\n\n");
    s.push_str("PANELS = [\n");
    for (label, path) in panels {
        writeln!(s, "    ({label:?}, {path:?}),").unwrap();
    }
    s.push_str("]\n\n");
    s.push_str(
        r#"def load(path):
    with open(path) as f:
        rows = list(csv.reader(f))
    data = np.array([[float(v) for v in r] for r in rows[1:]])
    return data[:, :-1], data[:, -1]


def weighted_quantile(values, weights, q):
    order = np.argsort(values)
    cw = np.cumsum(weights[order])
    cw /= cw[-1]
    return np.interp(q, cw, values[order])


fig, axes = plt.subplots(1, len(PANELS), figsize=(5 * len(PANELS), 4), squeeze=False)
for ax, (label, path) in zip(axes[0], PANELS):
    paths, weights = load(path)
    t = np.linspace(0.0, 1.0, paths.shape[1])
    for lo, hi, alpha in [(0.05, 0.95, 0.15), (0.25, 0.75, 0.3)]:
        band_lo = [weighted_quantile(paths[:, k], weights, lo) for k in range(paths.shape[1])]
        band_hi = [weighted_quantile(paths[:, k], weights, hi) for k in range(paths.shape[1])]
        ax.fill_between(t, band_lo, band_hi, alpha=alpha, color="tab:blue", lw=0)
    for row in paths[: min(40, len(paths))]:
        ax.plot(t, row, lw=0.5, color="tab:gray", alpha=0.6)
    ax.set_title(label)
    ax.set_xlabel("t")
out = sys.argv[1] if len(sys.argv) > 1 else "fan_chart.png"
fig.tight_layout()
fig.savefig(out, dpi=150)
print(f"wrote {out}")
"#,
    );
    s
}
