//! Small hand-built datasets used by examples and tests.

use crate::model::{Dataset, LabelSet, Vectors};

/// The seven-record example used throughout the filtering literature:
/// records `v1..v7` map to ids `0..6`, queried at the origin with labels `{1,2}`.
///
/// * unfiltered 1-NN: `v5`
/// * containment `{1,2}` survivors: `v1, v2, v3, v7`, 1-NN `v3`
/// * equality `{1,2}` survivors: `v3, v7`, 1-NN `v3`
/// * overlap `{1,2}` survivors: everything but `v4`, 1-NN `v5`
pub fn seven_records() -> Dataset {
    let rows: [[f32; 2]; 7] = [
        [3.0, 1.0],
        [-3.0, 2.0],
        [2.0, 0.0],
        [0.0, 1.5],
        [1.0, 0.0],
        [0.0, -1.8],
        [-2.5, -2.0],
    ];
    let labels: [&[u32]; 7] = [&[1, 2, 3], &[1, 2, 4], &[1, 2], &[3], &[1], &[2], &[1, 2]];
    let data = rows.iter().flatten().copied().collect();
    Dataset::new(
        Vectors::new(2, data).expect("static data"),
        labels
            .iter()
            .map(|l| LabelSet::new(l.iter().copied()))
            .collect(),
    )
    .expect("static data")
}

/// Query point for [`seven_records`].
pub fn seven_records_query() -> Vec<f32> {
    vec![0.0, 0.0]
}

/// Query labels for [`seven_records`].
pub fn seven_records_query_labels() -> LabelSet {
    LabelSet::new([1, 2])
}
