//! One PASS/FAIL line per acceptance criterion on the default configuration.
//! Exits nonzero when any criterion fails.

use pbdw_cli::suite::run_all;
use pbdw_cli::ExperimentConfig;

fn main() {
    let dir = tempfile::tempdir().expect("temporary directory");
    let cfg = ExperimentConfig {
        output_dir: dir.path().to_path_buf(),
        ..ExperimentConfig::default()
    };
    println!("acceptance criteria (seed {}, outputs in {})", cfg.seed, dir.path().display());
    let outcomes = run_all(&cfg, |o| println!("{o}"));
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    println!("{} passed, {} failed", outcomes.len() - failed, failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
