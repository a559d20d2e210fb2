//! Solver-independent linear models, LP-file text and solution files.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

impl Sense {
    fn symbol(self) -> &'static str {
        match self {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub lb: f64,
    pub ub: f64,
    pub binary: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub name: String,
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// Linear terms written by variable name.
pub type NamedTerms = Vec<(String, f64)>;

/// A group of variable declarations and constraints written by name, to be
/// merged into a [`LinearModel`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConstraintBlock {
    pub vars: Vec<Variable>,
    pub rows: Vec<(String, NamedTerms, Sense, f64)>,
}

impl ConstraintBlock {
    pub fn var(&mut self, name: String, lb: f64, ub: f64) {
        self.vars.push(Variable { name, lb, ub, binary: false });
    }

    pub fn row(&mut self, name: String, terms: Vec<(String, f64)>, sense: Sense, rhs: f64) {
        self.rows.push((name, terms, sense, rhs));
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Variables declared with a zero lower bound.
    pub fn nonnegativity_count(&self) -> usize {
        self.vars.iter().filter(|v| v.lb == 0.0).count()
    }

    /// Largest violation of the rows at a named assignment (missing names read as 0).
    pub fn max_violation(&self, value: &dyn Fn(&str) -> f64) -> f64 {
        self.rows
            .iter()
            .map(|(_, terms, sense, rhs)| {
                let lhs: f64 = terms.iter().map(|(n, c)| c * value(n)).sum();
                violation(lhs, *sense, *rhs)
            })
            .fold(0.0, f64::max)
    }
}

fn violation(lhs: f64, sense: Sense, rhs: f64) -> f64 {
    match sense {
        Sense::Le => (lhs - rhs).max(0.0),
        Sense::Ge => (rhs - lhs).max(0.0),
        Sense::Eq => (lhs - rhs).abs(),
    }
}

/// Maximization model with bounded, optionally binary variables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinearModel {
    pub vars: Vec<Variable>,
    pub constraints: Vec<Constraint>,
    pub objective: Vec<(usize, f64)>,
    index: HashMap<String, usize>,
}

impl LinearModel {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a variable; re-registering a name returns the existing index.
    pub fn add_var(&mut self, name: &str, lb: f64, ub: f64, binary: bool) -> usize {
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        self.vars.push(Variable { name: name.to_string(), lb, ub, binary });
        self.index.insert(name.to_string(), self.vars.len() - 1);
        self.vars.len() - 1
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn add_constraint(&mut self, name: &str, terms: Vec<(usize, f64)>, sense: Sense, rhs: f64) {
        self.constraints.push(Constraint { name: name.to_string(), terms: merge_terms(terms), sense, rhs });
    }

    /// Adds every variable and row of the block; rows may only use declared names.
    pub fn add_block(&mut self, block: &ConstraintBlock) -> Result<()> {
        for v in &block.vars {
            self.add_var(&v.name, v.lb, v.ub, v.binary);
        }
        for (name, terms, sense, rhs) in &block.rows {
            let terms = terms
                .iter()
                .map(|(n, c)| {
                    self.var_index(n)
                        .map(|i| (i, *c))
                        .ok_or_else(|| Error::InvalidInstance(format!("row {name} uses unknown variable {n}")))
                })
                .collect::<Result<Vec<_>>>()?;
            self.add_constraint(name, terms, *sense, *rhs);
        }
        Ok(())
    }

    pub fn set_objective(&mut self, terms: Vec<(usize, f64)>) {
        self.objective = merge_terms(terms);
    }

    pub fn set_binary(&mut self, i: usize, binary: bool) {
        self.vars[i].binary = binary;
    }

    pub fn binaries(&self) -> Vec<usize> {
        (0..self.vars.len()).filter(|&i| self.vars[i].binary).collect()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().map(|&(i, c)| c * x[i]).sum()
    }

    /// Largest bound or constraint violation of `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, v) in self.vars.iter().enumerate() {
            worst = worst.max(v.lb - x[i]).max(x[i] - v.ub);
        }
        for c in &self.constraints {
            let lhs: f64 = c.terms.iter().map(|&(i, a)| a * x[i]).sum();
            worst = worst.max(violation(lhs, c.sense, c.rhs));
        }
        worst
    }

    /// CPLEX LP text. Variables and rows appear in registration order.
    pub fn to_lp_string(&self) -> String {
        let mut s = String::new();
        s.push_str("Maximize\n obj:");
        if self.objective.is_empty() {
            let _ = write!(s, " 0 {}", self.vars.first().map_or("x", |v| v.name.as_str()));
        }
        for &(i, c) in &self.objective {
            write_term(&mut s, c, &self.vars[i].name);
        }
        s.push_str("\nSubject To\n");
        for c in &self.constraints {
            let _ = write!(s, " {}:", c.name);
            if c.terms.is_empty() {
                write_term(&mut s, 0.0, &self.vars[0].name);
            }
            for &(i, a) in &c.terms {
                write_term(&mut s, a, &self.vars[i].name);
            }
            let _ = writeln!(s, " {} {}", c.sense.symbol(), fmt_num(c.rhs));
        }
        s.push_str("Bounds\n");
        for v in &self.vars {
            let _ = writeln!(s, " {} <= {} <= {}", fmt_num(v.lb), v.name, fmt_num(v.ub));
        }
        let bins: Vec<&str> = self.vars.iter().filter(|v| v.binary).map(|v| v.name.as_str()).collect();
        if !bins.is_empty() {
            s.push_str("Binaries\n");
            for b in bins {
                let _ = writeln!(s, " {b}");
            }
        }
        s.push_str("End\n");
        s
    }

    /// Reads the subset of the LP format written by [`LinearModel::to_lp_string`]
    /// (one row per line, whitespace-separated tokens).
    pub fn from_lp_string(text: &str) -> Result<LinearModel> {
        #[derive(PartialEq)]
        enum Section {
            None,
            Objective,
            Rows,
            Bounds,
            Binaries,
            End,
        }
        let perr = |line: usize, m: &str| Error::ParseError(format!("line {}: {m}", line + 1));
        let mut model = LinearModel::new();
        let mut section = Section::None;
        let mut pending_objective: Vec<(String, f64)> = Vec::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('\\').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let lower = line.to_ascii_lowercase();
            let head = match lower.as_str() {
                "maximize" | "maximise" | "max" => Some(Section::Objective),
                "subject to" | "st" | "s.t." => Some(Section::Rows),
                "bounds" => Some(Section::Bounds),
                "binaries" | "binary" => Some(Section::Binaries),
                "end" => Some(Section::End),
                _ => None,
            };
            if let Some(h) = head {
                section = h;
                continue;
            }
            match section {
                Section::Objective => {
                    let body = line.split_once(':').map_or(line, |(_, b)| b);
                    let (terms, rest) = parse_terms(body).map_err(|m| perr(ln, &m))?;
                    if !rest.is_empty() {
                        return Err(perr(ln, "unexpected tokens in objective"));
                    }
                    pending_objective.extend(terms);
                }
                Section::Rows => {
                    let (name, body) = line.split_once(':').ok_or_else(|| perr(ln, "row without name"))?;
                    let (terms, rest) = parse_terms(body).map_err(|m| perr(ln, &m))?;
                    if rest.len() != 2 {
                        return Err(perr(ln, "row must end with sense and right-hand side"));
                    }
                    let sense = match rest[0] {
                        "<=" | "=<" | "<" => Sense::Le,
                        ">=" | "=>" | ">" => Sense::Ge,
                        "=" => Sense::Eq,
                        s => return Err(perr(ln, &format!("bad sense {s}"))),
                    };
                    let rhs: f64 = rest[1].parse().map_err(|_| perr(ln, "bad right-hand side"))?;
                    let terms = terms
                        .into_iter()
                        .map(|(n, c)| (model.add_var(&n, 0.0, f64::INFINITY, false), c))
                        .collect();
                    model.add_constraint(name.trim(), terms, sense, rhs);
                }
                Section::Bounds => {
                    let tok: Vec<&str> = line.split_whitespace().collect();
                    if tok.len() != 5 || tok[1] != "<=" || tok[3] != "<=" {
                        return Err(perr(ln, "bounds must read `lb <= name <= ub`"));
                    }
                    let lb = parse_num(tok[0]).ok_or_else(|| perr(ln, "bad lower bound"))?;
                    let ub = parse_num(tok[4]).ok_or_else(|| perr(ln, "bad upper bound"))?;
                    let i = model.add_var(tok[2], lb, ub, false);
                    model.vars[i].lb = lb;
                    model.vars[i].ub = ub;
                }
                Section::Binaries => {
                    for name in line.split_whitespace() {
                        let i = model.add_var(name, 0.0, 1.0, true);
                        model.vars[i].binary = true;
                    }
                }
                Section::None | Section::End => return Err(perr(ln, "text outside a section")),
            }
        }
        if section != Section::End {
            return Err(Error::ParseError("missing End".into()));
        }
        let obj = pending_objective
            .into_iter()
            .map(|(n, c)| (model.add_var(&n, 0.0, f64::INFINITY, false), c))
            .collect();
        model.set_objective(obj);
        Ok(model)
    }

    /// `name value` lines for every variable.
    pub fn solution_string(&self, x: &[f64]) -> String {
        let mut s = String::new();
        for (v, val) in self.vars.iter().zip(x) {
            let _ = writeln!(s, "{} {}", v.name, fmt_num(*val));
        }
        s
    }

    /// Parses `name value` lines; unlisted variables are 0, lines starting with `#` are skipped.
    pub fn parse_solution(&self, text: &str) -> Result<Vec<f64>> {
        let mut x = vec![0.0; self.vars.len()];
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let tok: Vec<&str> = line.split_whitespace().collect();
            if tok.len() != 2 {
                return Err(Error::ParseError(format!("solution line {}: expected `name value`", ln + 1)));
            }
            let i = self
                .var_index(tok[0])
                .ok_or_else(|| Error::ParseError(format!("solution line {}: unknown variable {}", ln + 1, tok[0])))?;
            x[i] = parse_num(tok[1])
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::ParseError(format!("solution line {}: bad value {}", ln + 1, tok[1])))?;
        }
        Ok(x)
    }
}

fn merge_terms(mut terms: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    terms.sort_by_key(|t| t.0);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(terms.len());
    for (i, c) in terms {
        match out.last_mut() {
            Some(last) if last.0 == i => last.1 += c,
            _ => out.push((i, c)),
        }
    }
    out.retain(|t| t.1 != 0.0);
    out
}

fn fmt_num(x: f64) -> String {
    if x == f64::INFINITY {
        "+inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{x:?}")
    }
}

fn parse_num(s: &str) -> Option<f64> {
    match s.to_ascii_lowercase().as_str() {
        "+inf" | "inf" | "+infinity" | "infinity" => Some(f64::INFINITY),
        "-inf" | "-infinity" => Some(f64::NEG_INFINITY),
        _ => s.parse().ok(),
    }
}

fn write_term(s: &mut String, c: f64, name: &str) {
    if c < 0.0 {
        let _ = write!(s, " - {} {name}", fmt_num(-c));
    } else {
        let _ = write!(s, " + {} {name}", fmt_num(c));
    }
}

/// Parses `[+|-] coef name ...` and returns the terms and the trailing tokens.
fn parse_terms(body: &str) -> std::result::Result<(NamedTerms, Vec<&str>), String> {
    let tok: Vec<&str> = body.split_whitespace().collect();
    let mut terms = Vec::new();
    let mut i = 0;
    while i < tok.len() {
        let t = tok[i];
        if matches!(t, "<=" | ">=" | "=" | "=<" | "=>" | "<" | ">") {
            return Ok((terms, tok[i..].to_vec()));
        }
        let mut sign = 1.0;
        let mut j = i;
        if t == "+" || t == "-" {
            if t == "-" {
                sign = -1.0;
            }
            j += 1;
        }
        let first = *tok.get(j).ok_or("dangling sign")?;
        let (coef, name) = match parse_num(first) {
            Some(c) => (c, *tok.get(j + 1).ok_or("coefficient without variable")?),
            None => (1.0, first),
        };
        let consumed = if parse_num(first).is_some() { j + 2 } else { j + 1 };
        terms.push((name.to_string(), sign * coef));
        i = consumed;
    }
    Ok((terms, Vec::new()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lp_text_roundtrip() {
        let mut m = LinearModel::new();
        let x = m.add_var("mu[a][0,1]", 0.0, 1.0, false);
        let y = m.add_var("delta[a][][1]", 0.0, 1.0, true);
        m.add_constraint("c0", vec![(x, 1.0), (y, -0.1)], Sense::Le, 0.25);
        m.add_constraint("c1", vec![(x, 2.0)], Sense::Eq, 1e-7);
        m.set_objective(vec![(x, 3.5)]);
        let text = m.to_lp_string();
        let back = LinearModel::from_lp_string(&text).unwrap();
        assert_eq!(back.to_lp_string(), text);
        assert_eq!(back.vars, m.vars);
        assert_eq!(back.constraints, m.constraints);
    }

    #[test]
    fn malformed_solution_rejected() {
        let mut m = LinearModel::new();
        m.add_var("x", 0.0, 1.0, false);
        assert!(m.parse_solution("x 0.5\n").is_ok());
        assert!(matches!(m.parse_solution("x abc\n"), Err(Error::ParseError(_))));
        assert!(matches!(m.parse_solution("y 1\n"), Err(Error::ParseError(_))));
    }
}
