//! CSV tables derived from stored profit distributions. Every file written
//! here is a pure function of `npv_distribution.csv` and `strategies.csv`,
//! which is what `report` relies on.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::ExperimentError;
use crate::distrisk::{
    cvar_risk, offset_distribution, offset_kpis, standard_risk_grid, OffsetDistribution, ProfitKpis, RiskLevel,
    ScenarioDistribution,
};
use crate::optimize::evaluate_distribution;

pub const NPV_FILE: &str = "npv_distribution.csv";
pub const STRATEGIES_FILE: &str = "strategies.csv";
pub const KPI_FILES: [&str; 6] =
    ["cvar_curve.csv", "cdf.csv", "total_risk.csv", "offset_distribution.csv", "offset_kpi.csv", "strip.csv"];

/// Formats with 17 significant digits; negative zero prints as zero.
pub fn num(v: f64) -> String {
    let v = if v == 0.0 { 0.0 } else { v };
    format!("{v:.16e}")
}

/// Profit outcomes per strategy, all over the same scenario order.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionTable {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl DistributionTable {
    pub fn n_scenarios(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names.iter().position(|n| n == name).map(|i| self.columns[i].as_slice())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("scenario");
        for n in &self.names {
            s.push(',');
            s.push_str(n);
        }
        s.push('\n');
        for i in 0..self.n_scenarios() {
            s.push_str(&i.to_string());
            for c in &self.columns {
                s.push(',');
                s.push_str(&num(c[i]));
            }
            s.push('\n');
        }
        s
    }

    pub fn read(path: &Path) -> Result<Self, ExperimentError> {
        let parse_err =
            |line: u64, message: String| ExperimentError::Parse { path: path.to_path_buf(), line, message };
        let mut reader = csv::Reader::from_path(path).map_err(|e| parse_err(0, e.to_string()))?;
        let header = reader.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
        if header.get(0) != Some("scenario") || header.len() < 2 {
            return Err(parse_err(1, "expected header scenario,<strategy>,...".into()));
        }
        let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut columns = vec![Vec::new(); names.len()];
        for (row, record) in reader.records().enumerate() {
            let line = row as u64 + 2;
            let record = record.map_err(|e| parse_err(line, e.to_string()))?;
            if record.len() != names.len() + 1 {
                return Err(parse_err(line, format!("expected {} fields, found {}", names.len() + 1, record.len())));
            }
            if record[0].parse::<usize>().ok() != Some(row) {
                return Err(parse_err(line, format!("expected scenario index {row}")));
            }
            for (c, field) in columns.iter_mut().zip(record.iter().skip(1)) {
                let v: f64 = field.parse().map_err(|_| parse_err(line, format!("invalid number {field:?}")))?;
                c.push(v);
            }
        }
        if columns[0].is_empty() {
            return Err(parse_err(2, "no scenarios".into()));
        }
        Ok(Self { names, columns })
    }
}

fn dist(values: &[f64]) -> Result<ScenarioDistribution, ExperimentError> {
    Ok(ScenarioDistribution::new(values.to_vec())?)
}

/// `alpha = k / 100` for `k = 0..=100`.
pub fn cvar_curve_levels() -> Vec<f64> {
    (0..=100).map(|k| k as f64 / 100.0).collect()
}

fn cvar_curve(t: &DistributionTable) -> Result<String, ExperimentError> {
    let dists = t.columns.iter().map(|c| dist(c)).collect::<Result<Vec<_>, _>>()?;
    let mut s = format!("alpha,{}\n", t.names.join(","));
    for a in cvar_curve_levels() {
        s.push_str(&num(a));
        for d in &dists {
            s.push(',');
            s.push_str(&num(cvar_risk(d, RiskLevel::new(a)?)));
        }
        s.push('\n');
    }
    Ok(s)
}

fn cdf(t: &DistributionTable) -> Result<String, ExperimentError> {
    let sorted = t.columns.iter().map(|c| dist(c).map(|d| d.sorted())).collect::<Result<Vec<_>, _>>()?;
    let n = t.n_scenarios();
    let mut s = format!("rank,probability,{}\n", t.names.join(","));
    for k in 0..n {
        let _ = write!(s, "{},{}", k + 1, num((k + 1) as f64 / n as f64));
        for c in &sorted {
            s.push(',');
            s.push_str(&num(c[k]));
        }
        s.push('\n');
    }
    Ok(s)
}

fn total_risk(t: &DistributionTable) -> Result<String, ExperimentError> {
    let levels = standard_risk_grid(t.n_scenarios());
    let mut s = String::from("strategy");
    for l in &levels {
        let _ = write!(s, ",cvar@{}", l.value());
    }
    s.push_str(",total_risk\n");
    for (name, c) in t.names.iter().zip(&t.columns) {
        let r = evaluate_distribution(&dist(c)?, &levels)?;
        s.push_str(name);
        for (_, v) in &r.cvar_grid {
            s.push(',');
            s.push_str(&num(*v));
        }
        s.push(',');
        s.push_str(&num(r.total_risk));
        s.push('\n');
    }
    Ok(s)
}

fn offsets(t: &DistributionTable, reference: &[f64]) -> Result<Vec<OffsetDistribution>, ExperimentError> {
    let r = dist(reference)?;
    t.columns.iter().map(|c| Ok(offset_distribution(&dist(c)?, &r)?)).collect()
}

fn offset_table(t: &DistributionTable, offs: &[OffsetDistribution]) -> String {
    DistributionTable { names: t.names.clone(), columns: offs.iter().map(|o| o.offsets().to_vec()).collect() }.to_csv()
}

/// Offset indicators next to the profit indicators. An empty negative tail
/// reports 0 with `negative_tail_empty = true`.
fn offset_kpi(t: &DistributionTable, offs: &[OffsetDistribution]) -> Result<String, ExperimentError> {
    let mut s = String::from(
        "strategy,offset_mean,offset_worst,beta,offset_mean_negative,offset_mean_nonnegative,negative_tail_empty,\
         profit_worst,profit_mean,profit_std,profit_p5,profit_p95,profit_neg_cvar30\n",
    );
    for ((name, c), o) in t.names.iter().zip(&t.columns).zip(offs) {
        let k = offset_kpis(o)?;
        let p = ProfitKpis::from_distribution(&dist(c)?);
        let fields = [
            num(k.mean),
            num(k.worst),
            num(k.beta),
            num(k.mean_negative.unwrap_or(0.0)),
            num(k.mean_nonnegative.unwrap_or(0.0)),
            k.mean_negative.is_none().to_string(),
            num(p.worst),
            num(p.mean),
            num(p.std_dev),
            num(p.p5),
            num(p.p95),
            num(p.neg_cvar30),
        ];
        let _ = writeln!(s, "{name},{}", fields.join(","));
    }
    Ok(s)
}

fn strip(t: &DistributionTable, offs: Option<&[OffsetDistribution]>) -> String {
    let mut s = String::from("strategy,scenario,npv,offset\n");
    for (j, (name, c)) in t.names.iter().zip(&t.columns).enumerate() {
        for (i, v) in c.iter().enumerate() {
            let o = offs.map_or(String::new(), |o| num(o[j].offsets()[i]));
            let _ = writeln!(s, "{name},{i},{},{o}", num(*v));
        }
    }
    s
}

fn write(dir: &Path, name: &str, text: &str) -> Result<(), ExperimentError> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| ExperimentError::io(&path, e))
}

/// Writes every KPI table. Offset tables need the reference column; when
/// `reference` is `None` they are omitted.
pub fn write_kpi_tables(dir: &Path, t: &DistributionTable, reference: Option<&str>) -> Result<(), ExperimentError> {
    let reference = reference.and_then(|r| t.column(r));
    let offs = reference.map(|r| offsets(t, r)).transpose()?;
    write(dir, KPI_FILES[0], &cvar_curve(t)?)?;
    write(dir, KPI_FILES[1], &cdf(t)?)?;
    write(dir, KPI_FILES[2], &total_risk(t)?)?;
    match &offs {
        Some(o) => {
            write(dir, KPI_FILES[3], &offset_table(t, o))?;
            write(dir, KPI_FILES[4], &offset_kpi(t, o)?)?;
        }
        None => {
            for f in &KPI_FILES[3..5] {
                let p = dir.join(f);
                if p.exists() {
                    fs::remove_file(&p).map_err(|e| ExperimentError::io(&p, e))?;
                }
            }
        }
    }
    write(dir, KPI_FILES[5], &strip(t, offs.as_deref()))?;
    write_plot_scripts(dir, t)?;
    Ok(())
}

/// Gnuplot scripts for the CDF, CVaR curve, total risk and offset strip
/// chart; run them from the output directory.
fn write_plot_scripts(dir: &Path, t: &DistributionTable) -> Result<(), ExperimentError> {
    let plots = dir.join("plots");
    fs::create_dir_all(&plots).map_err(|e| ExperimentError::io(&plots, e))?;
    let series = |file: &str, xcol: usize, first: usize| {
        t.names
            .iter()
            .enumerate()
            .map(|(k, n)| format!("'{file}' using {xcol}:{} with lines title '{n}'", first + k))
            .collect::<Vec<_>>()
            .join(", \\\n     ")
    };
    let head = "set datafile separator ','\nset key outside right\nset grid\n";
    let cdf = format!(
        "{head}set terminal pngcairo size 900,600\nset output 'plots/cdf.png'\nset xlabel 'NPV (USD)'\n\
         set ylabel 'cumulative probability'\nplot {}\n",
        t.names
            .iter()
            .enumerate()
            .map(|(k, n)| format!("'cdf.csv' using {}:2 with steps title '{n}'", 3 + k))
            .collect::<Vec<_>>()
            .join(", \\\n     ")
    );
    let cvar = format!(
        "{head}set terminal pngcairo size 900,600\nset output 'plots/cvar_curve.png'\nset xlabel 'alpha'\n\
         set ylabel 'CVaR_alpha (USD)'\nplot {}\n",
        series("cvar_curve.csv", 1, 2)
    );
    let total = format!(
        "{head}set terminal pngcairo size 900,600\nset output 'plots/total_risk.png'\nset style data histogram\n\
         set style fill solid 0.6\nset xtics rotate by -45\nset ylabel 'average CVaR (USD)'\n\
         plot 'total_risk.csv' using {}:xtic(1) title 'total risk'\n",
        standard_risk_grid(t.n_scenarios()).len() + 2
    );
    let strip = format!(
        "{head}set terminal pngcairo size 900,600\nset output 'plots/offset_strip.png'\n\
         set ylabel 'profit offset (USD)'\nset xtics rotate by -45\n\
         plot 'strip.csv' using 0:4:xtic(1) with points pt 7 ps 0.6 title 'offset'\n"
    );
    for (name, text) in [("cdf.gp", cdf), ("cvar_curve.gp", cvar), ("total_risk.gp", total), ("offset_strip.gp", strip)] {
        write(&plots, name, &text)?;
    }
    Ok(())
}
