//! Fixtures shared by the benchmarks.

use xvqa::pipeline::{Prepared, RunConfig};
use xvqa::synthworld::GenConfig;

/// A small generated world with its vocabulary, answers and idf table.
pub fn small_world(train_size: usize) -> Prepared {
    let cfg = RunConfig {
        data: GenConfig {
            train_size,
            val_size: 100,
            ..GenConfig::default()
        },
        ..RunConfig::default()
    }
    .resolve()
    .expect("default config is valid");
    Prepared::generate(&cfg).expect("default world generates")
}
