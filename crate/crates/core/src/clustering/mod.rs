//! Daily-profile clustering: k-means, gap-statistic K selection, seasonal
//! split and pattern assignment.

mod gap;
mod kmeans;
mod patterns;

pub use gap::{gap_select_k, GapCurve, GapEntry, GapParams, GapSelection};
pub use kmeans::{count_distinct, kmeans, KMeansFit, KMeansParams};
pub use patterns::{
    assign_patterns, clustering_points, fit_patterns, pattern_letter, read_assignments,
    read_pattern_model, seasonal_split, write_assignments, write_pattern_model, PatternAssignment,
    PatternModel, Season, SeasonSplit, ASSIGNMENT_HEADER,
};
