//! k-means, product quantization and the IVF-PQ index.

mod ivf;
mod kmeans;
mod pq;

pub use ivf::{IvfPqIndex, IvfPqParams};
pub use kmeans::{kmeans, kmeans_traced, KMeansModel};
pub use pq::{adc_distance, AdcTable, PqCodebook};
