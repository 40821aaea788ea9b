use cmc_core::montecarlo::ChiSquare;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Pass threshold for chi-square homogeneity tests.
pub const CHI_SQUARE_ALPHA: f64 = 1e-4;

/// Upper-tail probability of the statistic; 1 when there are no degrees of freedom.
pub fn chi_square_p_value(chi: &ChiSquare) -> f64 {
    if chi.dof == 0 {
        return 1.0;
    }
    ChiSquared::new(chi.dof as f64).map_or(f64::NAN, |d| d.sf(chi.statistic))
}
