use std::fmt::Write as _;

use super::{EvalError, Result};

pub const LEDGER_HEADER: &str = "method_a,method_b,prompt,outcome";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    A,
    B,
    Tie,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::A => "A",
            Outcome::B => "B",
            Outcome::Tie => "tie",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "A" => Some(Outcome::A),
            "B" => Some(Outcome::B),
            "tie" => Some(Outcome::Tie),
            _ => None,
        }
    }

    /// The same outcome seen with the two sides swapped.
    pub fn flip(self) -> Self {
        match self {
            Outcome::A => Outcome::B,
            Outcome::B => Outcome::A,
            Outcome::Tie => Outcome::Tie,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Comparison {
    pub a: String,
    pub b: String,
    pub prompt: String,
    pub outcome: Outcome,
}

/// Registered methods and their pairwise outcomes.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ComparisonLedger {
    methods: Vec<String>,
    records: Vec<Comparison>,
    /// Pairs the judge could not decide, with the reason.
    pub skipped: Vec<(String, String, String, String)>,
}

impl ComparisonLedger {
    pub fn new<S: AsRef<str>>(methods: &[S]) -> Result<Self> {
        let mut l = Self::default();
        for m in methods {
            l.register(m.as_ref())?;
        }
        Ok(l)
    }

    pub fn register(&mut self, method: &str) -> Result<()> {
        if self.methods.iter().any(|m| m == method) {
            return Err(EvalError::DuplicateMethod(method.to_string()));
        }
        self.methods.push(method.to_string());
        Ok(())
    }

    pub fn methods(&self) -> &[String] {
        &self.methods
    }

    pub fn records(&self) -> &[Comparison] {
        &self.records
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn index_of(&self, method: &str) -> Result<usize> {
        self.methods
            .iter()
            .position(|m| m == method)
            .ok_or_else(|| EvalError::UnknownMethod(method.to_string()))
    }

    pub fn push(&mut self, a: &str, b: &str, prompt: &str, outcome: Outcome) -> Result<()> {
        self.index_of(a)?;
        self.index_of(b)?;
        if a == b {
            return Err(EvalError::SelfComparison(a.to_string()));
        }
        self.records.push(Comparison {
            a: a.to_string(),
            b: b.to_string(),
            prompt: prompt.to_string(),
            outcome,
        });
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{LEDGER_HEADER}\n");
        for c in &self.records {
            let _ = writeln!(s, "{},{},{},{}", c.a, c.b, c.prompt, c.outcome.as_str());
        }
        s
    }

    /// Parses a ledger CSV, registering methods in order of appearance.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == LEDGER_HEADER => {}
            _ => {
                return Err(EvalError::Parse {
                    line: 1,
                    message: format!("expected header `{LEDGER_HEADER}`"),
                })
            }
        }
        let mut l = Self::default();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |message: String| EvalError::Parse { line: i + 1, message };
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 4 {
                return Err(bad(format!("{} fields", f.len())));
            }
            let outcome = Outcome::parse(f[3]).ok_or_else(|| bad(format!("outcome `{}`", f[3])))?;
            for m in &f[..2] {
                if l.index_of(m).is_err() {
                    l.register(m)?;
                }
            }
            l.push(f[0], f[1], f[2], outcome)
                .map_err(|e| bad(e.to_string()))?;
        }
        Ok(l)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_self_and_unknown() {
        let mut l = ComparisonLedger::new(&["a", "b"]).unwrap();
        assert!(matches!(l.push("a", "a", "p", Outcome::A), Err(EvalError::SelfComparison(_))));
        assert!(matches!(l.push("a", "c", "p", Outcome::A), Err(EvalError::UnknownMethod(_))));
        assert!(matches!(l.register("a"), Err(EvalError::DuplicateMethod(_))));
    }

    #[test]
    fn csv_roundtrip() {
        let mut l = ComparisonLedger::new(&["a", "b"]).unwrap();
        l.push("a", "b", "sphere", Outcome::A).unwrap();
        l.push("b", "a", "cube", Outcome::Tie).unwrap();
        let text = l.to_csv();
        assert_eq!(text, "method_a,method_b,prompt,outcome\na,b,sphere,A\nb,a,cube,tie\n");
        assert_eq!(ComparisonLedger::from_csv(&text).unwrap(), l);
        assert_eq!(ComparisonLedger::new::<&str>(&[]).unwrap().to_csv(), format!("{LEDGER_HEADER}\n"));
    }

    #[test]
    fn parse_errors_name_the_line() {
        let e = ComparisonLedger::from_csv("method_a,method_b,prompt,outcome\na,b,p,A\na,b,p,win\n");
        assert!(matches!(e, Err(EvalError::Parse { line: 3, .. })));
        assert!(ComparisonLedger::from_csv("x\n").is_err());
    }
}
