//! Named pass/fail checks and how a tolerance is applied.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    /// |measured − expected| ≤ tolerance·|expected|.
    Relative,
    /// |measured − expected| ≤ tolerance.
    Absolute,
    /// measured ≤ expected + tolerance.
    AtMost,
    /// measured ≥ expected − tolerance.
    AtLeast,
    /// measured ≤ expected − tolerance, a strict inequality with a margin.
    Below,
}

impl Rule {
    pub fn passes(self, measured: f64, expected: f64, tolerance: f64) -> bool {
        match self {
            Rule::Relative => (measured - expected).abs() <= tolerance * expected.abs(),
            Rule::Absolute => (measured - expected).abs() <= tolerance,
            Rule::AtMost => measured <= expected + tolerance,
            Rule::AtLeast => measured >= expected - tolerance,
            Rule::Below => measured <= expected - tolerance,
        }
    }
}

/// A check a recipe knows how to measure.
#[derive(Debug, Clone, Copy)]
pub struct CheckDef {
    pub name: &'static str,
    pub rule: Rule,
    pub expected: f64,
    pub about: &'static str,
}

impl CheckDef {
    pub const fn new(name: &'static str, rule: Rule, expected: f64, about: &'static str) -> Self {
        CheckDef { name, rule, expected, about }
    }
}

/// A check requested by a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckSpec {
    pub name: String,
    pub tolerance: f64,
    pub expected: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub result: Verdict,
    pub measured: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub rule: Rule,
}

impl CheckResult {
    pub fn evaluate(def: &CheckDef, spec: &CheckSpec, measured: Option<f64>) -> Self {
        let expected = spec.expected.unwrap_or(def.expected);
        let measured = measured.unwrap_or(f64::NAN);
        let ok = def.rule.passes(measured, expected, spec.tolerance);
        CheckResult {
            result: if ok { Verdict::Pass } else { Verdict::Fail },
            measured,
            expected,
            tolerance: spec.tolerance,
            rule: def.rule,
        }
    }

    pub fn passed(&self) -> bool {
        self.result == Verdict::Pass
    }
}
