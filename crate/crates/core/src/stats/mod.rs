//! Statistical kernel: distribution functions, Pearson/Spearman correlation
//! with lag search, the Mann-Kendall trend test and Welch's t-test.

mod correlation;
mod distributions;
mod trend;
mod welch;

pub use correlation::{
    average_ranks, correlation_p_value, lag_max_correlation, pearson, spearman, CorrMethod,
    CorrelationResult,
};
pub use distributions::{
    ln_gamma, normal_cdf, normal_sf, regularized_incomplete_beta, student_t_cdf,
    student_t_two_sided_p,
};
pub use trend::{mann_kendall, TrendResult};
pub use welch::{welch, SampleSummary, WelchResult};
