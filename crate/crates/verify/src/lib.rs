//! Pass/fail bookkeeping for the acceptance suite: each criterion runs under
//! a time budget, panics count as failures, and one line is printed per
//! criterion.

use std::fmt;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Skip,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skip => "SKIP",
        })
    }
}

/// What a criterion body reports back.
#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

impl Verdict {
    /// `Pass(detail)` when `ok`, `Fail(detail)` otherwise.
    pub fn check(ok: bool, detail: impl Into<String>) -> Self {
        if ok {
            Verdict::Pass(detail.into())
        } else {
            Verdict::Fail(detail.into())
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub name: String,
    pub status: Status,
    pub detail: String,
    pub elapsed: Duration,
    pub budget: Duration,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} [{:.1}s of {}s] {}",
            self.status,
            self.name,
            self.elapsed.as_secs_f64(),
            self.budget.as_secs(),
            self.detail
        )
    }
}

/// Runs `body`, timing it against `budget`. A panic or an overrun turns the
/// result into a failure.
pub fn run_criterion(name: &str, budget: Duration, body: impl FnOnce() -> Verdict) -> Outcome {
    let start = Instant::now();
    let verdict = catch_unwind(AssertUnwindSafe(body));
    let elapsed = start.elapsed();
    let (mut status, mut detail) = match verdict {
        Ok(Verdict::Pass(d)) => (Status::Pass, d),
        Ok(Verdict::Fail(d)) => (Status::Fail, d),
        Ok(Verdict::Skip(d)) => (Status::Skip, d),
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            (Status::Fail, format!("panicked: {msg}"))
        }
    };
    if status == Status::Pass && elapsed > budget {
        status = Status::Fail;
        detail = format!("over budget; {detail}");
    }
    Outcome { name: name.into(), status, detail, elapsed, budget }
}

#[derive(Debug, Default)]
pub struct Report {
    pub outcomes: Vec<Outcome>,
}

impl Report {
    /// Runs a criterion and prints its line as soon as it finishes.
    pub fn run(&mut self, name: &str, budget: Duration, body: impl FnOnce() -> Verdict) {
        let outcome = run_criterion(name, budget, body);
        println!("{outcome}");
        self.outcomes.push(outcome);
    }

    pub fn count(&self, status: Status) -> usize {
        self.outcomes.iter().filter(|o| o.status == status).count()
    }

    pub fn failed(&self) -> bool {
        self.count(Status::Fail) > 0
    }

    pub fn summary(&self) -> String {
        format!(
            "acceptance: {} passed, {} failed, {} skipped",
            self.count(Status::Pass),
            self.count(Status::Fail),
            self.count(Status::Skip)
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdicts_and_budgets() {
        let long = Duration::from_secs(60);
        assert_eq!(run_criterion("a", long, || Verdict::check(true, "x")).status, Status::Pass);
        assert_eq!(run_criterion("b", long, || Verdict::check(false, "x")).status, Status::Fail);
        assert_eq!(run_criterion("c", long, || Verdict::Skip("no data".into())).status, Status::Skip);
        let o = run_criterion("d", Duration::ZERO, || {
            std::thread::sleep(Duration::from_millis(2));
            Verdict::Pass("slow".into())
        });
        assert_eq!(o.status, Status::Fail);
        assert!(o.detail.starts_with("over budget"));
    }

    #[test]
    fn panics_are_failures() {
        let o = run_criterion("p", Duration::from_secs(1), || panic!("boom"));
        assert_eq!(o.status, Status::Fail);
        assert_eq!(o.detail, "panicked: boom");
        assert!(o.to_string().starts_with("FAIL p ["));
    }

    #[test]
    fn summary_counts() {
        let mut r = Report::default();
        r.run("one", Duration::from_secs(1), || Verdict::Pass(String::new()));
        r.run("two", Duration::from_secs(1), || Verdict::Skip(String::new()));
        assert!(!r.failed());
        assert_eq!(r.summary(), "acceptance: 1 passed, 0 failed, 1 skipped");
    }
}
