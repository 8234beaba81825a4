use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ir::{ArithOp, ElemKind};

#[derive(Debug, Error)]
pub enum TargetError {
    #[error("cannot read target file: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid target description: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid target description: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCost {
    pub cycles: u32,
    pub dsp: u32,
    pub lut: u32,
}

/// Operator classes with separate functional units.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpClass {
    Fadd,
    Fmul,
    Fdiv,
    Iadd,
    Imul,
    Idiv,
    Cast,
    Load,
    Store,
}

impl OpClass {
    pub const COMPUTE: [OpClass; 7] =
        [OpClass::Fadd, OpClass::Fmul, OpClass::Fdiv, OpClass::Iadd, OpClass::Imul, OpClass::Idiv, OpClass::Cast];

    pub fn of(op: ArithOp, ty: ElemKind) -> OpClass {
        match (op, ty) {
            (ArithOp::IToF | ArithOp::FToI, _) => OpClass::Cast,
            (ArithOp::Add | ArithOp::Sub, ElemKind::F32) => OpClass::Fadd,
            (ArithOp::Neg, ElemKind::F32) => OpClass::Cast,
            (ArithOp::Mul, ElemKind::F32) => OpClass::Fmul,
            (ArithOp::Div | ArithOp::Rem, ElemKind::F32) => OpClass::Fdiv,
            (ArithOp::Add | ArithOp::Sub | ArithOp::Neg, ElemKind::I32) => OpClass::Iadd,
            (ArithOp::Mul, ElemKind::I32) => OpClass::Imul,
            (ArithOp::Div | ArithOp::Rem, ElemKind::I32) => OpClass::Idiv,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub name: String,
    pub dsp_total: u64,
    pub lut_total: u64,
    pub bram_bits_total: u64,
    #[serde(default = "default_ops")]
    pub ops: BTreeMap<OpClass, OpCost>,
    /// Extra cycles of a non-pipelined loop (entry plus exit).
    #[serde(default = "default_overhead")]
    pub loop_overhead: u64,
}

fn default_overhead() -> u64 {
    2
}

fn c(cycles: u32, dsp: u32, lut: u32) -> OpCost {
    OpCost { cycles, dsp, lut }
}

fn default_ops() -> BTreeMap<OpClass, OpCost> {
    BTreeMap::from([
        (OpClass::Fmul, c(3, 3, 100)),
        (OpClass::Fadd, c(4, 2, 200)),
        (OpClass::Fdiv, c(12, 0, 800)),
        (OpClass::Imul, c(1, 3, 50)),
        (OpClass::Iadd, c(1, 0, 30)),
        (OpClass::Idiv, c(12, 0, 600)),
        (OpClass::Cast, c(1, 0, 40)),
        (OpClass::Load, c(1, 0, 0)),
        (OpClass::Store, c(1, 0, 0)),
    ])
}

impl TargetSpec {
    /// 220 DSP, 53200 LUT, 4.9 Mb on-chip memory.
    pub fn edge() -> Self {
        TargetSpec {
            name: "edge".into(),
            dsp_total: 220,
            lut_total: 53_200,
            bram_bits_total: 4_900_000,
            ops: default_ops(),
            loop_overhead: 2,
        }
    }

    /// 2280 DSP, 394080 LUT, 115.3 Mb on-chip memory.
    pub fn large() -> Self {
        TargetSpec {
            name: "large".into(),
            dsp_total: 2280,
            lut_total: 394_080,
            bram_bits_total: 115_300_000,
            ops: default_ops(),
            loop_overhead: 2,
        }
    }

    pub fn profile(name: &str) -> Option<Self> {
        match name {
            "edge" => Some(Self::edge()),
            "large" => Some(Self::large()),
            _ => None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, TargetError> {
        let mut t: TargetSpec = serde_json::from_str(text)?;
        for (k, v) in default_ops() {
            t.ops.entry(k).or_insert(v);
        }
        t.validate()?;
        Ok(t)
    }

    /// Reads a JSON file, or a built-in profile name.
    pub fn load(path_or_profile: &str) -> Result<Self, TargetError> {
        if let Some(t) = Self::profile(path_or_profile) {
            return Ok(t);
        }
        Self::from_json(&std::fs::read_to_string(Path::new(path_or_profile))?)
    }

    pub fn validate(&self) -> Result<(), TargetError> {
        if self.dsp_total == 0 || self.lut_total == 0 || self.bram_bits_total == 0 {
            return Err(TargetError::Invalid("resource totals must be positive".into()));
        }
        if let Some((k, _)) = self.ops.iter().find(|(_, v)| v.cycles == 0) {
            return Err(TargetError::Invalid(format!("{k:?} must take at least one cycle")));
        }
        Ok(())
    }

    pub fn cost(&self, class: OpClass) -> OpCost {
        self.ops[&class]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_with_defaults() {
        let t = TargetSpec::from_json(r#"{"name":"x","dsp_total":10,"lut_total":20,"bram_bits_total":30}"#).unwrap();
        assert_eq!(t.cost(OpClass::Fadd), c(4, 2, 200));
        let back = TargetSpec::from_json(&serde_json::to_string(&t).unwrap()).unwrap();
        assert_eq!(back, t);
        assert!(TargetSpec::from_json(r#"{"name":"x","dsp_total":0,"lut_total":20,"bram_bits_total":30}"#).is_err());
    }
}
