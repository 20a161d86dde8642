//! Outcome bookkeeping for the acceptance suite.

use std::fmt::Write;

/// Result of one numbered criterion.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub id: u32,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Collects checks for one criterion; it passes only if every check does.
#[derive(Debug)]
pub struct Criterion {
    id: u32,
    name: &'static str,
    passed: bool,
    detail: String,
}

impl Criterion {
    pub fn new(id: u32, name: &'static str) -> Self {
        Self {
            id,
            name,
            passed: true,
            detail: String::new(),
        }
    }

    /// Records a named check with the measured value and the bound it was held to.
    pub fn check(&mut self, ok: bool, what: impl AsRef<str>) {
        if !self.detail.is_empty() {
            self.detail.push_str("; ");
        }
        let _ = write!(self.detail, "{}{}", if ok { "" } else { "NOT " }, what.as_ref());
        self.passed &= ok;
    }

    pub fn finish(self) -> Outcome {
        Outcome {
            id: self.id,
            name: self.name,
            passed: self.passed,
            detail: self.detail,
        }
    }
}

impl Outcome {
    pub fn line(&self) -> String {
        format!(
            "{} criterion {:>2} ({}): {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_failed_check_fails_the_criterion() {
        let mut c = Criterion::new(3, "x");
        c.check(true, "a <= 1");
        c.check(false, "b <= 2");
        let o = c.finish();
        assert!(!o.passed);
        assert_eq!(o.line(), "FAIL criterion  3 (x): a <= 1; NOT b <= 2");
    }
}
