//! placeholder
#[derive(Debug, Clone)]
pub struct EvalPlan;
#[derive(Debug, Clone)]
pub struct MetricsReport;
#[derive(Debug, Clone)]
pub struct MethodMetrics;
