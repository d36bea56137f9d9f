//! Acceptance suite: one line per criterion, non-zero exit on any failure.

mod end_to_end;
mod kernels;
mod oracles;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

pub enum Status {
    Pass,
    Fail,
    Skip,
}

pub struct Outcome {
    pub status: Status,
    pub detail: String,
}

impl Outcome {
    pub fn check(ok: bool, detail: impl Into<String>) -> Self {
        Outcome {
            status: if ok { Status::Pass } else { Status::Fail },
            detail: detail.into(),
        }
    }

    pub fn fail(detail: impl Into<String>) -> Self {
        Outcome::check(false, detail)
    }

    pub fn skip(detail: impl Into<String>) -> Self {
        Outcome {
            status: Status::Skip,
            detail: detail.into(),
        }
    }
}

type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn main() -> ExitCode {
    let ws = end_to_end::Workspace::new();
    let criteria: Vec<Criterion<'_>> = vec![
        (
            "lexical overlap matches reference",
            Box::new(kernels::rouge_oracle),
        ),
        ("cosine properties", Box::new(kernels::cosine_properties)),
        ("head gradient check", Box::new(kernels::gradient_check)),
        (
            "head overfits separable data",
            Box::new(kernels::head_overfit),
        ),
        (
            "weighted F1 matches reference",
            Box::new(kernels::metric_oracle),
        ),
        ("normalizer statistics", Box::new(kernels::normalizer)),
        ("forest determinism and capacity", Box::new(kernels::forest)),
        (
            "synthetic pipeline end to end",
            Box::new(|| end_to_end::synthetic_pipeline(&ws)),
        ),
        (
            "ablation grid ordering",
            Box::new(|| end_to_end::ablation_grid(&ws)),
        ),
        (
            "training ignores val/test labels",
            Box::new(|| end_to_end::label_blind(&ws)),
        ),
        ("real-data reproduction", Box::new(end_to_end::real_data)),
    ];

    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| (*s).to_owned()))
                .unwrap_or_else(|| "panic".into());
            Outcome::fail(format!("panicked: {msg}"))
        });
        let tag = match outcome.status {
            Status::Pass => "PASS",
            Status::Fail => {
                failed += 1;
                "FAIL"
            }
            Status::Skip => "SKIP",
        };
        println!(
            "criterion {:>2} {tag} {name} [{:.1}s]: {}",
            i + 1,
            start.elapsed().as_secs_f64(),
            outcome.detail
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
