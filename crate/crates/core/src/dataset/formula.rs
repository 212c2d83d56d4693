//! Model formulas of the form `lhs ~ t1 + t2 + ...`.
//!
//! Only additive main effects over column names are supported. The left-hand
//! side may be empty (`~ x1 + x2`), as when only a design is needed.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Formula {
    lhs: Option<String>,
    rhs: Vec<String>,
}

impl Formula {
    pub fn new(lhs: Option<&str>, rhs: &[&str]) -> Result<Self> {
        let rhs: Vec<String> = rhs.iter().map(|s| s.to_string()).collect();
        Self::validate(lhs.map(|s| s.to_string()), rhs)
    }

    fn validate(lhs: Option<String>, rhs: Vec<String>) -> Result<Self> {
        if rhs.is_empty() {
            return Err(Error::SyntaxError(
                "formula needs at least one right-hand term".to_string(),
            ));
        }
        let mut seen = std::collections::HashSet::new();
        for t in &rhs {
            if !seen.insert(t.as_str()) {
                return Err(Error::DuplicateTerm(t.clone()));
            }
        }
        Ok(Formula { lhs, rhs })
    }

    /// Parse the grammar `IDENT? "~" IDENT ("+" IDENT)*`.
    pub fn parse(text: &str) -> Result<Self> {
        let Some((left, right)) = text.split_once('~') else {
            return Err(Error::SyntaxError(format!("missing '~' in '{text}'")));
        };
        if right.contains('~') {
            return Err(Error::SyntaxError(format!("more than one '~' in '{text}'")));
        }
        let left = left.trim();
        let lhs = if left.is_empty() {
            None
        } else {
            Some(parse_ident(left)?)
        };
        let mut rhs = Vec::new();
        for part in right.split('+') {
            rhs.push(parse_ident(part.trim())?);
        }
        Self::validate(lhs, rhs)
    }

    pub fn lhs(&self) -> Option<&str> {
        self.lhs.as_deref()
    }

    pub fn rhs_terms(&self) -> &[String] {
        &self.rhs
    }

    pub fn to_text(&self) -> String {
        format!(
            "{} ~ {}",
            self.lhs.as_deref().unwrap_or(""),
            self.rhs.join(" + ")
        )
        .trim_start()
        .to_string()
    }

    /// Copy of this formula with one extra right-hand term.
    pub fn with_term(&self, term: &str) -> Result<Formula> {
        let mut rhs = self.rhs.clone();
        rhs.push(term.to_string());
        Self::validate(self.lhs.clone(), rhs)
    }
}

impl std::fmt::Display for Formula {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.to_text())
    }
}

fn parse_ident(s: &str) -> Result<String> {
    let mut chars = s.chars();
    let ok_head = chars
        .next()
        .map(|c| c.is_ascii_alphabetic() || c == '_')
        .unwrap_or(false);
    let ok_tail = chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.');
    if ok_head && ok_tail {
        Ok(s.to_string())
    } else {
        Err(Error::SyntaxError(format!("invalid identifier '{s}'")))
    }
}
