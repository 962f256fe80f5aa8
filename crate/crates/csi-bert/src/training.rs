//! placeholder
#[derive(Debug, Clone)]
pub struct TrainConfig;
#[derive(Debug, Clone)]
pub struct LossBreakdown;
