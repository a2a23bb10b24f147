//! Runs the full stage graph at a small scale and prints the results table.
//! Pass an output directory to keep the cache; a rerun reuses every stage.

use tsda::pipeline::{emit_report, run_experiment, Cache, ExperimentConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("tsda-experiment"));
    let cfg = ExperimentConfig::from_toml_str(
        r#"
seed = 1
[corpus]
n_utts = 300
n_test_utts = 60
transcribed_fraction = 0.2
[teacher]
epochs = 8
[multicond]
epochs = 8
[student]
epochs = 3
"#,
    )?;
    let cache = Cache::new(&out);
    let report = run_experiment(&cfg, &cache)?;
    emit_report(&report, &out)?;
    println!("{:<20} {:>9} {:>9} {:>10} {:>10}", "system", "clean", "noisy", "clean%", "noisy%");
    for r in &report.systems {
        let f = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:+.1}"));
        println!(
            "{:<20} {:>9.3} {:>9.3} {:>10} {:>10}",
            r.system,
            r.clean_ter,
            r.noisy_ter,
            f(r.clean_werr),
            f(r.noisy_werr)
        );
    }
    let built = cache.events().iter().filter(|e| !e.reused).count();
    println!("{built} stages built, results in {}", out.display());
    Ok(())
}
