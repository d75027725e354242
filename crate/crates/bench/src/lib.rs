//! Fixtures shared by the benchmarks.

use featloop_core::data::{stratified_split, Dataset, SplitIndices};
use featloop_core::synth::{generate, SynthSpec};

/// The default synthetic cohort at `n_rows` rows with a 60/20/20 split.
pub fn fixture(n_rows: usize) -> (Dataset, SplitIndices) {
    let (d, _) = generate(&SynthSpec {
        n_rows,
        ..SynthSpec::default()
    })
    .expect("default spec is valid");
    let split = stratified_split(&d, (0.6, 0.2, 0.2), 0).expect("fixture is stratifiable");
    (d, split)
}
