//! Shared inputs for the benchmarks.

use voxmeta_core::regression::DesignMatrix;
use voxmeta_core::synthetic::{learnable_embeddings, LearnableSpec};

/// Design matrix, ages and male flags from a learnable synthetic corpus.
pub fn corpus(speakers: usize, dimension: usize) -> (DesignMatrix, Vec<f64>, Vec<bool>) {
    let corpus = learnable_embeddings(&LearnableSpec {
        speakers,
        dimension,
        seed: 1,
        ..LearnableSpec::default()
    })
    .expect("valid synthetic spec");
    let records = &corpus.embeddings.records;
    let x = DesignMatrix::from_records(records).expect("finite features");
    let ages = records.iter().map(|r| r.age.expect("synthetic ages") as f64).collect();
    let male = records
        .iter()
        .map(|r| r.gender == Some(voxmeta_core::Gender::Male))
        .collect();
    (x, ages, male)
}
