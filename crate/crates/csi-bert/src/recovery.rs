//! placeholder
#[derive(Debug, Clone)]
pub struct RecoveryResult;
#[derive(Debug, Clone, Copy)]
pub enum RecoveryMode { Recover, Replace }
#[derive(Debug, Clone, Copy)]
pub enum SlotProvenance { Observed, Filled }
