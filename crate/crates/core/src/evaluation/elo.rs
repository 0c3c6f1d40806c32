//! Bradley–Terry maximum likelihood on the Elo scale.

use std::fmt::Write as _;

use super::{ComparisonLedger, EvalError, Outcome, Result};

pub const ANCHOR_RATING: f64 = 1000.0;
const GRAD_TOL: f64 = 1e-9;
const MAX_SWEEPS: usize = 100_000;
/// Pseudo-wins added in each direction of every compared pair.
const SMOOTHING: f64 = 0.5;

/// Expected score of a side rated `delta` above its opponent.
pub fn expected_score(delta: f64) -> f64 {
    1.0 / (1.0 + 10f64.powf(-delta / 400.0))
}

/// Fitted ratings in registration order.
#[derive(Debug, Clone, PartialEq)]
pub struct EloTable {
    pub methods: Vec<String>,
    pub ratings: Vec<f64>,
    pub anchor: String,
}

impl EloTable {
    pub fn rating(&self, method: &str) -> Option<f64> {
        self.methods.iter().position(|m| m == method).map(|i| self.ratings[i])
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("method,rating\n");
        for (m, r) in self.methods.iter().zip(&self.ratings) {
            let _ = writeln!(s, "{m},{r:.1}");
        }
        s
    }
}

/// Fits ratings with `anchor` pinned at 1000. Ties count half a win to each
/// side. Ascent stops once the log-likelihood gradient with respect to the
/// natural-log strengths drops below 1e-9. Coordinate Newton ascent runs over methods in name order, so the
/// result depends only on the multiset of comparisons.
pub fn elo_fit(ledger: &ComparisonLedger, anchor: &str) -> Result<EloTable> {
    let anchor_idx = ledger.index_of(anchor)?;
    let names = ledger.methods();
    let n = names.len();
    let mut wins = vec![vec![0.0; n]; n];
    let mut seen = vec![vec![false; n]; n];
    for c in ledger.records() {
        let (a, b) = (ledger.index_of(&c.a)?, ledger.index_of(&c.b)?);
        seen[a][b] = true;
        seen[b][a] = true;
        match c.outcome {
            Outcome::A => wins[a][b] += 1.0,
            Outcome::B => wins[b][a] += 1.0,
            Outcome::Tie => {
                wins[a][b] += 0.5;
                wins[b][a] += 0.5;
            }
        }
    }
    check_connected(names, &seen, anchor_idx)?;
    for i in 0..n {
        for j in 0..n {
            if seen[i][j] {
                wins[i][j] += SMOOTHING;
            }
        }
    }

    let mut order: Vec<usize> = (0..n).filter(|&i| i != anchor_idx).collect();
    order.sort_by(|&x, &y| names[x].cmp(&names[y]));
    let k = std::f64::consts::LN_10 / 400.0;
    // natural-log strengths; rating = ANCHOR_RATING + theta / k
    let mut theta = vec![0.0; n];
    let partials = |theta: &[f64], i: usize| {
        let (mut g, mut h) = (0.0, 0.0);
        for j in 0..n {
            let games = wins[i][j] + wins[j][i];
            if j == i || games == 0.0 {
                continue;
            }
            let e = 1.0 / (1.0 + (theta[j] - theta[i]).exp());
            g += wins[i][j] - games * e;
            h += games * e * (1.0 - e);
        }
        (g, h)
    };
    let mut norm = f64::INFINITY;
    for _ in 0..MAX_SWEEPS {
        for &i in &order {
            let (g, h) = partials(&theta, i);
            theta[i] += g / h;
        }
        norm = order
            .iter()
            .map(|&i| partials(&theta, i).0.powi(2))
            .sum::<f64>()
            .sqrt();
        if norm < GRAD_TOL {
            break;
        }
    }
    if !(norm < GRAD_TOL) {
        return Err(EvalError::NoConvergence(norm));
    }
    let mut ratings: Vec<f64> = theta.iter().map(|t| ANCHOR_RATING + t / k).collect();
    ratings[anchor_idx] = ANCHOR_RATING;
    Ok(EloTable {
        methods: names.to_vec(),
        ratings,
        anchor: anchor.to_string(),
    })
}

fn check_connected(names: &[String], seen: &[Vec<bool>], anchor: usize) -> Result<()> {
    let n = names.len();
    let reach = |start: usize| {
        let mut mark = vec![false; n];
        let mut stack = vec![start];
        mark[start] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                if seen[i][j] && !mark[j] {
                    mark[j] = true;
                    stack.push(j);
                }
            }
        }
        mark
    };
    let from_anchor = reach(anchor);
    if let Some(lost) = from_anchor.iter().position(|&m| !m) {
        let component = reach(lost)
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(i, _)| names[i].clone())
            .collect();
        return Err(EvalError::Disconnected {
            anchor: names[anchor].clone(),
            component,
        });
    }
    Ok(())
}
