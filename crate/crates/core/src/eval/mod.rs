//! Evaluation: word analogies, neighbors, embedding norms and a linear
//! document classifier.

pub mod analogy;
pub mod classifier;
pub mod neighbors;

pub use analogy::{analogy_eval, load_questions, AnalogyQuestion, AnalogyReport, CategoryScore};
pub use classifier::{classify, error_rate, fit_linear, fit_linear_with, FitOptions, FitReport, LinearClassifier};
pub use neighbors::{nearest_neighbors, norm_report, Neighbor, NormEntry};
