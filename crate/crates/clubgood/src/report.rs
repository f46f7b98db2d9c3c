use std::fmt;

use serde::Serialize;

/// Outcome of one numerical check: pass flag, worst violation and the input that produced it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub check: String,
    pub passed: bool,
    /// Largest violation magnitude found (positive means the bound was exceeded).
    pub worst_violation: f64,
    pub tolerance: f64,
    pub witness: Option<String>,
    pub notes: Vec<String>,
}

impl VerificationReport {
    pub fn new(check: impl Into<String>, passed: bool, worst_violation: f64, tolerance: f64, witness: Option<String>) -> Self {
        Self { check: check.into(), passed, worst_violation, tolerance, witness, notes: Vec::new() }
    }

    /// Report whose pass flag is derived from `worst_violation <= tolerance`.
    pub fn from_violation(check: impl Into<String>, worst_violation: f64, tolerance: f64, witness: Option<String>) -> Self {
        Self::new(check, worst_violation <= tolerance, worst_violation, tolerance, witness)
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: worst violation {:e} (tolerance {:e})",
            if self.passed { "PASS" } else { "FAIL" },
            self.check,
            self.worst_violation,
            self.tolerance
        )?;
        if let Some(w) = &self.witness {
            write!(f, " at {w}")?;
        }
        for note in &self.notes {
            write!(f, "; {note}")?;
        }
        Ok(())
    }
}
