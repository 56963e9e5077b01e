//! Pass/fail records of evaluated inequalities.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chart: Option<String>,
    pub lhs: f64,
    pub relation: Relation,
    pub rhs: f64,
    /// Signed slack; non-negative (positive for `<`) when the check passes.
    pub margin: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub name: String,
    pub passed: bool,
    pub resolution: usize,
    pub safety_factor: f64,
    pub checks: Vec<Check>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl Certificate {
    pub fn new(name: impl Into<String>, resolution: usize, safety_factor: f64) -> Self {
        Certificate {
            name: name.into(),
            passed: true,
            resolution,
            safety_factor,
            checks: Vec::new(),
            notes: Vec::new(),
        }
    }

    fn push(&mut self, name: &str, chart: Option<&str>, lhs: f64, relation: Relation, rhs: f64, tol: f64) -> bool {
        let (margin, passed) = match relation {
            Relation::Lt => (rhs - lhs, lhs < rhs + tol),
            Relation::Le => (rhs - lhs, lhs <= rhs + tol),
            Relation::Ge => (lhs - rhs, lhs + tol >= rhs),
        };
        let passed = passed && lhs.is_finite() && !rhs.is_nan();
        self.passed &= passed;
        self.checks.push(Check {
            name: name.to_string(),
            chart: chart.map(str::to_string),
            lhs,
            relation,
            rhs,
            margin,
            passed,
        });
        passed
    }

    pub fn lt(&mut self, name: &str, chart: Option<&str>, lhs: f64, rhs: f64) -> bool {
        self.push(name, chart, lhs, Relation::Lt, rhs, 0.0)
    }

    pub fn le(&mut self, name: &str, chart: Option<&str>, lhs: f64, rhs: f64, tol: f64) -> bool {
        self.push(name, chart, lhs, Relation::Le, rhs, tol)
    }

    pub fn ge(&mut self, name: &str, chart: Option<&str>, lhs: f64, rhs: f64, tol: f64) -> bool {
        self.push(name, chart, lhs, Relation::Ge, rhs, tol)
    }

    /// Record a count of sampled failures; passes iff the count is zero.
    pub fn zero_failures(&mut self, name: &str, chart: Option<&str>, failures: usize) -> bool {
        self.push(name, chart, failures as f64, Relation::Le, 0.0, 0.0)
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    pub fn failed_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn merge(&mut self, other: Certificate) {
        self.passed &= other.passed;
        for mut c in other.checks {
            c.name = format!("{}.{}", other.name, c.name);
            self.checks.push(c);
        }
        self.notes.extend(other.notes);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn failing_check_fails_certificate() {
        let mut c = Certificate::new("t", 8, 1.1);
        assert!(c.lt("a", None, 1.0, 2.0));
        assert!(c.passed);
        assert!(!c.lt("b", Some("k"), 2.0, 2.0));
        assert!(!c.passed);
        assert_eq!(c.failed_checks().next().unwrap().name, "b");
        assert!(c.le("c", None, 1.0 + 1e-12, 1.0, 1e-9));
    }
}
