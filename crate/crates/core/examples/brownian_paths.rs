//! Sample a Brownian path, refine it by Brownian bridges, reverse it and
//! round-trip it through the binary cache.

use roughflow::brownian::{read_cache, sample_path, write_cache};

fn main() -> roughflow::Result<()> {
    let path = sample_path(42, 1, 1.0, 1.0 / 8.0)?;
    let fine = path.refine();
    println!("coarse steps {}, refined steps {} (level {})", path.steps(), fine.steps(), fine.level());

    // Refinement keeps the endpoint values: every other cumulative value matches.
    let (w, wf) = (path.cumulative(), fine.cumulative());
    let worst = (0..w.len()).map(|k| (w[k] - wf[2 * k]).abs()).fold(0.0, f64::max);
    println!("max mismatch on the coarse grid after refinement: {worst:e}");
    let coarse = fine.coarsen()?;
    let drift = coarse.increments().iter().zip(path.increments()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("refine then coarsen recovers the increments to {drift:e}");

    let back = path.reverse();
    println!("reversed path: {} steps, is_reversed = {}", back.steps(), back.is_reversed());

    let file = std::env::temp_dir().join(format!("roughflow-example-{}.rfbp", std::process::id()));
    write_cache(&path, &file)?;
    let cached = read_cache(&file)?;
    std::fs::remove_file(&file)?;
    println!("cache round trip exact: {}", cached.increments() == path.increments());
    Ok(())
}
