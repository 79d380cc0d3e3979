//! `regflow problem`: generate a test problem and serialise it.

use crate::commands::solve::build_problem;
use crate::{Outcome, ProblemArgs};
use std::path::PathBuf;

pub fn run(args: ProblemArgs) -> Outcome {
    let family = args.family.unwrap_or_else(|| "diag".into());
    let n = args.n.unwrap_or(500);
    let p = args.p.unwrap_or(1.0);
    let mu = args.mu.unwrap_or(1.0);
    let seed = args.seed.unwrap_or(1234);
    let out: PathBuf = args.out.unwrap_or_else(|| PathBuf::from("problem"));

    let problem = match build_problem(&family, n, p, mu, seed) {
        Ok(p) => p,
        Err(msg) => return Outcome::Usage(msg),
    };
    match problem.save(&out) {
        Ok(()) => {
            println!("wrote {family} problem (n = {n}) to {}", out.display());
            Outcome::Ok
        }
        Err(e) => Outcome::Runtime(format!("cannot serialise problem: {e}")),
    }
}
