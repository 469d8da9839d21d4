//! Shared fixtures for the benchmarks.

use csbayes::dictionary::build_by_tag;
use csbayes::posterior::SensingProblem;
use csbayes::sensing::{generate_dataset, DatasetBundle, ObserveConfig, PiecewiseSmoothSpec, SignalFamily};
use csbayes::Matrix;
use std::sync::Arc;

/// Piecewise-smooth signals of length `n` measured by one Gaussian matrix,
/// with the matching problem in the DB4 coefficient domain.
pub struct Fixture {
    pub bundle: DatasetBundle,
    pub problem: SensingProblem,
    pub dictionary: Arc<Matrix>,
}

pub fn fixture(n: usize, m: usize, count: usize, seed: u64) -> Fixture {
    let family = SignalFamily::Piecewise(PiecewiseSmoothSpec {
        n,
        ..PiecewiseSmoothSpec::default()
    });
    let obs = ObserveConfig {
        m,
        snr_db: Some(10.0),
        per_sample: false,
        seed,
    };
    let bundle = generate_dataset(&family, count, &obs, None).expect("dataset");
    let dictionary = Arc::new(build_by_tag("db4-1d", &[n], None).expect("dictionary").into_matrix());
    let problem = SensingProblem::new(bundle.measurements.matrix(0), Arc::clone(&dictionary), bundle.noise_var)
        .expect("problem");
    Fixture {
        bundle,
        problem,
        dictionary,
    }
}
