//! Merges summary files into long-format plot data plus a gnuplot script.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PlotRow {
    pub policy: String,
    pub t: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone)]
pub struct PlotData {
    pub rows: Vec<PlotRow>,
    pub policies: Vec<String>,
    /// Common horizon when inputs disagreed and were cut to the shortest.
    pub truncated_to: Option<usize>,
}

/// Reads a summary CSV. The label is taken from a `# policy=` header line,
/// falling back to the file stem.
pub fn read_summary(path: &Path) -> Result<(String, Vec<(usize, f64, f64)>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::parse(Some(path), e.to_string()))?;
    let label = text
        .lines()
        .take_while(|l| l.starts_with('#'))
        .find_map(|l| l.trim_start_matches('#').trim().strip_prefix("policy=").map(str::to_string))
        .unwrap_or_else(|| {
            path.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "summary".into())
        });
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| Error::parse(Some(path), e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["t", "mean", "std"] {
        return Err(Error::parse(Some(path), format!("expected columns t,mean,std, got {headers:?}")));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::parse(Some(path), e.to_string()))?;
        let bad = |what: &str| Error::parse(Some(path), format!("bad {what} in {rec:?}"));
        let t: usize = rec[0].parse().map_err(|_| bad("t"))?;
        let mean: f64 = rec[1].parse().map_err(|_| bad("mean"))?;
        let std: f64 = rec[2].parse().map_err(|_| bad("std"))?;
        rows.push((t, mean, std));
    }
    if rows.is_empty() {
        return Err(Error::parse(Some(path), "summary has no rows"));
    }
    Ok((label, rows))
}

/// Merges `inputs` (summary path plus optional label override) into
/// `out_csv` with columns `policy,t,mean,std` and writes a gnuplot script
/// next to it. Inputs with different horizons are cut to the shortest.
pub fn emit_plot_data(inputs: &[(PathBuf, Option<String>)], out_csv: &Path) -> Result<PlotData> {
    if inputs.is_empty() {
        return Err(Error::config("plot data needs at least one summary"));
    }
    let mut series = Vec::with_capacity(inputs.len());
    for (path, label) in inputs {
        let (found, rows) = read_summary(path)?;
        series.push((label.clone().unwrap_or(found), rows));
    }
    let horizons: Vec<usize> = series
        .iter()
        .map(|(_, rows)| rows.last().map(|r| r.0).unwrap_or(0))
        .collect();
    let shortest = *horizons.iter().min().expect("non-empty");
    let truncated_to = if horizons.iter().any(|&h| h != shortest) {
        log::warn!("summaries have different horizons {horizons:?}; truncating to {shortest}");
        Some(shortest)
    } else {
        None
    };

    let mut rows = Vec::new();
    let mut policies = Vec::new();
    for (label, data) in series {
        for (t, mean, std) in data.into_iter().filter(|r| r.0 <= shortest) {
            rows.push(PlotRow {
                policy: label.clone(),
                t,
                mean,
                std,
            });
        }
        if !policies.contains(&label) {
            policies.push(label);
        }
    }

    let mut wtr = csv::Writer::from_path(out_csv)?;
    wtr.write_record(["policy", "t", "mean", "std"])?;
    for r in &rows {
        wtr.write_record([r.policy.clone(), r.t.to_string(), r.mean.to_string(), r.std.to_string()])?;
    }
    wtr.flush()?;

    let script = gnuplot_script(out_csv, &policies);
    let mut f = std::fs::File::create(out_csv.with_extension("gp"))?;
    f.write_all(script.as_bytes())?;

    Ok(PlotData {
        rows,
        policies,
        truncated_to,
    })
}

/// Script drawing mean cumulative regret with a ±1 std band per policy.
pub fn gnuplot_script(data: &Path, policies: &[String]) -> String {
    let file = data
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let png = data.with_extension("png");
    let png = png
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut s = String::new();
    s.push_str("set datafile separator ','\n");
    s.push_str("set terminal pngcairo size 900,600\n");
    s.push_str(&format!("set output '{png}'\n"));
    s.push_str("set key left top\n");
    s.push_str("set xlabel 't'\nset ylabel 'cumulative regret'\n");
    s.push_str("set style fill transparent solid 0.2 noborder\n");
    let mut parts = Vec::new();
    for p in policies {
        let sel = format!("strcol(1) eq '{p}'");
        parts.push(format!(
            "'{file}' skip 1 using 2:({sel} ? $3-$4 : NaN):({sel} ? $3+$4 : NaN) with filledcurves notitle"
        ));
        parts.push(format!(
            "'{file}' skip 1 using 2:({sel} ? $3 : NaN) with lines lw 2 title '{p}'"
        ));
    }
    s.push_str("plot ");
    s.push_str(&parts.join(", \\\n     "));
    s.push('\n');
    s
}
