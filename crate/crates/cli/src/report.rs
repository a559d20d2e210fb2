use std::fmt::Write;

use meu_core::families::Family;
use meu_core::formulation::Variant;
use meu_core::SolveStatus;

use crate::experiment::Cell;

/// Shift in seconds for the geometric mean of running times.
pub const TIME_SHIFT: f64 = 1.0;

/// Relative final gap (percent) below which a row is reported as solved.
const OPT_GAP: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Markdown,
}

impl std::str::FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(Format::Csv),
            "markdown" | "md" => Ok(Format::Markdown),
            _ => Err(format!("unknown format {s}")),
        }
    }
}

/// Aggregate over the seeds of one family, size and variant.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub family: Family,
    pub sizes: (usize, usize, usize),
    pub log10_policies: f64,
    pub variant: Variant,
    pub int_gap: f64,
    pub final_gap: f64,
    pub spu_gap: f64,
    pub time: f64,
    pub all_optimal: bool,
    pub time_limited: bool,
    pub failures: usize,
}

pub fn shifted_geometric_mean(times: &[f64], shift: f64) -> f64 {
    if times.is_empty() {
        return f64::NAN;
    }
    let s: f64 = times.iter().map(|t| (t + shift).ln()).sum();
    (s / times.len() as f64).exp() - shift
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// Groups cells in order of first appearance.
pub fn aggregate(cells: &[Cell]) -> Vec<Row> {
    let mut keys: Vec<(Family, (usize, usize, usize), Variant)> = Vec::new();
    for c in cells {
        let k = (c.family, (c.omega_s, c.omega_a, c.horizon), c.variant);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(family, sizes, variant)| {
            let group: Vec<&Cell> =
                cells.iter().filter(|c| c.family == family && (c.omega_s, c.omega_a, c.horizon) == sizes && c.variant == variant).collect();
            let ok: Vec<&&Cell> = group.iter().filter(|c| c.error.is_none()).collect();
            let final_gap = mean(ok.iter().map(|c| c.final_gap()));
            Row {
                family,
                sizes,
                log10_policies: group[0].log10_policies,
                variant,
                int_gap: mean(ok.iter().map(|c| c.int_gap())),
                final_gap,
                spu_gap: mean(ok.iter().map(|c| c.spu_gap())),
                time: shifted_geometric_mean(&group.iter().map(|c| c.time).collect::<Vec<_>>(), TIME_SHIFT),
                all_optimal: !ok.is_empty()
                    && ok.len() == group.len()
                    && ok.iter().all(|c| c.status == Some(SolveStatus::Optimal))
                    && final_gap.abs() <= OPT_GAP,
                time_limited: group.iter().any(|c| c.status == Some(SolveStatus::TimeLimit)),
                failures: group.len() - ok.len(),
            }
        })
        .collect()
}

fn pct(x: f64) -> String {
    if x.is_nan() {
        "-".into()
    } else if x.abs() < 0.005 {
        "0.00".into()
    } else {
        format!("{x:.2}")
    }
}

fn cells_of(r: &Row) -> [String; 8] {
    [
        r.family.name().to_string(),
        format!("({}, {}, {})", r.sizes.0, r.sizes.1, r.sizes.2),
        format!("1e{:.1}", r.log10_policies),
        r.variant.name().to_string(),
        pct(r.int_gap),
        if r.all_optimal { "Opt".into() } else { pct(r.final_gap) },
        pct(r.spu_gap),
        if r.time_limited { "TL".into() } else { format!("{:.2}", r.time) },
    ]
}

const HEADER: [&str; 8] = ["family", "sizes", "policies", "variant", "int_gap", "final_gap", "spu_gap", "time"];

pub fn report(cells: &[Cell], format: Format) -> String {
    let rows = aggregate(cells);
    let mut out = String::new();
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(HEADER).expect("in-memory write");
            for r in &rows {
                w.write_record(cells_of(r)).expect("in-memory write");
            }
            out = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields");
        }
        Format::Markdown => {
            let _ = writeln!(out, "| {} |", HEADER.join(" | "));
            let _ = writeln!(out, "|{}", "---|".repeat(HEADER.len()));
            for r in &rows {
                let _ = writeln!(out, "| {} |", cells_of(r).join(" | "));
            }
            let _ = writeln!(out, "\nGaps in percent. Time is the shifted geometric mean in seconds (shift {TIME_SHIFT} s).");
        }
    }
    let failed: usize = rows.iter().map(|r| r.failures).sum();
    if failed > 0 && format == Format::Markdown {
        let _ = writeln!(out, "{failed} cells failed and are excluded from the gap means.");
    }
    out
}
