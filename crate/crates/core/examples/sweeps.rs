//! Temperature x k grid and training-set size sweep on a tiny corpus.

use tsda::pipeline::{emit_grid, emit_size, sweep_size, sweep_tk, t1_flatness, Cache, ExperimentConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::temp_dir().join("tsda-sweeps");
    let cfg = ExperimentConfig::from_toml_str(
        r#"
[corpus]
n_utts = 150
n_test_utts = 40
transcribed_fraction = 0.3
[student]
epochs = 2
[sweep]
temperatures = [1.0, 2.0]
ks = [5, "max"]
multipliers = [1, 2]
seeds = [0, 1]
"#,
    )?;
    let cache = Cache::new(&out);

    let grid = sweep_tk(&cfg, &cache)?;
    emit_grid(&grid, &out)?;
    for row in grid.rows() {
        println!("T={} k={:<4} noisy TER {:.3}", row.temperature, row.k, row.noisy_ter);
    }
    if let Some((k_spread, seed_spread)) = t1_flatness(&grid) {
        println!("T=1 spread across k {k_spread:.3}, across seeds {seed_spread:.3}");
    }

    let size = sweep_size(&cfg, &cache)?;
    emit_size(&size, &out)?;
    for row in size.rows() {
        println!("{}x noisy TER {:.3}", row.multiplier, row.noisy_ter);
    }
    println!("csv and plot data in {}", out.display());
    Ok(())
}
