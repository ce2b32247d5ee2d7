//! CSV writers for run metrics and sweep summaries.

use std::fmt::Write as _;

use byzsim_core::fedsim::MetricsRow;
use byzsim_core::verify::FloorFit;

pub const METRICS_HEADER: &str = "t,dist_sq,grad_norm_sq,loss,rage_removed,rage_rounds,sync_flag";
pub const SUMMARY_HEADER: &str = "axis,value,status,floor,rho,amplitude,r_squared,final_dist_sq";

/// 17 significant digits, enough to round-trip any double.
pub fn real(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut s = String::with_capacity(64 * (rows.len() + 1));
    s.push_str(METRICS_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.t,
            opt(r.dist_sq.map(real)),
            real(r.grad_norm_sq),
            real(r.loss),
            opt(r.rage_removed),
            opt(r.rage_rounds),
            u8::from(r.sync)
        );
    }
    s
}

/// One row of `sweep_summary.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub axis: String,
    pub value: String,
    /// `ok`, `diverged`, `no_minimizer` or `fit_failed`.
    pub status: &'static str,
    pub fit: Option<FloorFit>,
    pub final_dist_sq: Option<f64>,
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut s = String::from(SUMMARY_HEADER);
    s.push('\n');
    for r in rows {
        let f = r.fit.as_ref();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.axis,
            r.value,
            r.status,
            opt(f.map(|f| real(f.floor))),
            opt(f.map(|f| real(f.rho))),
            opt(f.map(|f| real(f.amplitude))),
            opt(f.map(|f| real(f.r_squared))),
            opt(r.final_dist_sq.map(real)),
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_format() {
        let rows = vec![
            MetricsRow {
                t: 0,
                dist_sq: Some(0.5),
                grad_norm_sq: 2.0,
                loss: 1.0 / 3.0,
                rage_removed: None,
                rage_rounds: None,
                sync: true,
            },
            MetricsRow {
                t: 1,
                dist_sq: None,
                grad_norm_sq: 0.0,
                loss: -1.0,
                rage_removed: Some(2),
                rage_rounds: Some(1),
                sync: false,
            },
        ];
        let text = metrics_csv(&rows);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], METRICS_HEADER);
        assert_eq!(
            lines[1],
            "0,5.0000000000000000e-1,2.0000000000000000e0,3.3333333333333331e-1,,,1"
        );
        assert_eq!(lines[2], "1,,0.0000000000000000e0,-1.0000000000000000e0,2,1,0");
        let back: f64 = lines[1].split(',').nth(3).unwrap().parse().unwrap();
        assert_eq!(back, 1.0 / 3.0);
    }
}
