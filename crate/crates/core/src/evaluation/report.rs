use std::fmt::Write as _;
use std::path::Path;

use super::{ComparisonLedger, Criterion, EloTable, Metrics, Result, METRICS_HEADER};

/// Everything one evaluation produces.
#[derive(Debug, Clone, Default)]
pub struct EvalReport {
    pub ledgers: Vec<(Criterion, ComparisonLedger)>,
    pub elo: Vec<(Criterion, EloTable)>,
    /// `(method, prompt, metrics)` per asset.
    pub metrics: Vec<(String, String, Metrics)>,
}

impl EvalReport {
    fn methods(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for (_, t) in &self.elo {
            for m in &t.methods {
                if !out.contains(m) {
                    out.push(m.clone());
                }
            }
        }
        out
    }

    /// `method,<criterion>...` with one rating column per fitted criterion.
    pub fn elo_csv(&self) -> String {
        let mut s = String::from("method");
        for (c, _) in &self.elo {
            s.push(',');
            s.push_str(c.as_str());
        }
        s.push('\n');
        for m in self.methods() {
            s.push_str(&m);
            for (_, t) in &self.elo {
                match t.rating(&m) {
                    Some(r) => write!(s, ",{r:.1}"),
                    None => write!(s, ","),
                }
                .expect("write to String");
            }
            s.push('\n');
        }
        s
    }

    pub fn metrics_csv(&self) -> String {
        let mut s = format!("method,prompt,{METRICS_HEADER}\n");
        for (m, p, x) in &self.metrics {
            let _ = writeln!(s, "{m},{p},{}", x.csv_row());
        }
        s
    }
}

/// Fixed-width ratings table, anchor marked with `*`.
pub fn summary_text(report: &EvalReport) -> String {
    let title = |c: Criterion| match c {
        Criterion::Alignment => "Alignment",
        Criterion::Overall => "Overall",
    };
    let mut s = String::from("Toy critic-judged Elo ratings\n");
    let _ = write!(s, "{:<24}", "Method");
    for (c, _) in &report.elo {
        let _ = write!(s, "{:>12}", title(*c));
    }
    s.push('\n');
    for m in report.methods() {
        let anchor = report.elo.iter().any(|(_, t)| t.anchor == m);
        let name = if anchor { format!("{m} *") } else { m.clone() };
        let _ = write!(s, "{name:<24}");
        for (_, t) in &report.elo {
            let cell = t.rating(&m).map_or_else(|| "-".to_string(), |r| format!("{r:.1}"));
            let _ = write!(s, "{cell:>12}");
        }
        s.push('\n');
    }
    let skipped: usize = report.ledgers.iter().map(|(_, l)| l.skipped.len()).sum();
    let games: usize = report.ledgers.iter().map(|(_, l)| l.records().len()).sum();
    let _ = writeln!(s, "comparisons: {games}, skipped: {skipped}");
    s
}

/// Writes `ledger_<criterion>.csv`, `elo.csv`, `metrics.csv` and
/// `summary.txt` into `dir`.
pub fn report_emit(report: &EvalReport, dir: &Path) -> Result<()> {
    for (c, l) in &report.ledgers {
        std::fs::write(dir.join(format!("ledger_{}.csv", c.as_str())), l.to_csv())?;
    }
    std::fs::write(dir.join("elo.csv"), report.elo_csv())?;
    std::fs::write(dir.join("metrics.csv"), report.metrics_csv())?;
    std::fs::write(dir.join("summary.txt"), summary_text(report))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::{elo_fit, Outcome};

    #[test]
    fn empty_report_is_header_only() {
        let r = EvalReport::default();
        assert_eq!(r.elo_csv(), "method\n");
        assert_eq!(r.metrics_csv(), format!("method,prompt,{METRICS_HEADER}\n"));
    }

    #[test]
    fn anchor_prints_exactly() {
        let mut l = ComparisonLedger::new(&["base", "ours"]).unwrap();
        for _ in 0..3 {
            l.push("base", "ours", "sphere", Outcome::B).unwrap();
        }
        let t = elo_fit(&l, "base").unwrap();
        let r = EvalReport {
            ledgers: vec![(Criterion::Overall, l)],
            elo: vec![(Criterion::Overall, t)],
            metrics: vec![],
        };
        assert!(r.elo_csv().starts_with("method,overall\nbase,1000.0\nours,"));
        let text = summary_text(&r);
        assert!(text.contains("base *"));
        assert!(text.contains("1000.0"));
        let dir = tempfile::tempdir().unwrap();
        report_emit(&r, dir.path()).unwrap();
        let first = std::fs::read(dir.path().join("summary.txt")).unwrap();
        report_emit(&r, dir.path()).unwrap();
        assert_eq!(std::fs::read(dir.path().join("summary.txt")).unwrap(), first);
        assert!(dir.path().join("ledger_overall.csv").exists());
    }
}
