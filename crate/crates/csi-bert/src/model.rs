//! placeholder
use ndarray::Array1;

/// Per-dimension standardization statistics (population formula).
#[derive(Debug, Clone, PartialEq)]
pub struct StandardStats {
    pub mu: Array1<f64>,
    pub sigma: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct ModelConfig;
#[derive(Debug, Clone)]
pub struct CsiBert;
