use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::affine::{AffineExpr, AffineMap};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ElemKind {
    F32,
    I32,
}

impl ElemKind {
    pub fn c_name(self) -> &'static str {
        match self {
            ElemKind::F32 => "float",
            ElemKind::I32 => "int",
        }
    }

    pub fn bits(self) -> u64 {
        32
    }
}

impl fmt::Display for ElemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ElemKind::F32 => "f32",
            ElemKind::I32 => "i32",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MemorySpace {
    OnChip1P,
    /// One read port plus one write port.
    OnChip2PSimple,
    /// Two ports, each usable for read or write.
    OnChip2PTrue,
    OffChip,
}

impl MemorySpace {
    pub fn is_on_chip(self) -> bool {
        !matches!(self, MemorySpace::OffChip)
    }

    /// (read-only ports, write-only ports, shared ports) of one physical bank.
    pub fn ports(self) -> (u32, u32, u32) {
        match self {
            MemorySpace::OnChip1P => (0, 0, 1),
            MemorySpace::OnChip2PSimple => (1, 1, 0),
            MemorySpace::OnChip2PTrue => (0, 0, 2),
            MemorySpace::OffChip => (0, 0, 1),
        }
    }

    pub fn total_ports(self) -> u32 {
        let (r, w, s) = self.ports();
        r + w + s
    }

    pub fn tag(self) -> &'static str {
        match self {
            MemorySpace::OnChip1P => "1p",
            MemorySpace::OnChip2PSimple => "s2p",
            MemorySpace::OnChip2PTrue => "t2p",
            MemorySpace::OffChip => "off",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InterfaceKind {
    Axi,
    Bram,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Fashion {
    None,
    Cyclic,
    Block,
}

/// Decoded partition of one array dimension.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DimPartition {
    pub fashion: Fashion,
    pub factor: i64,
}

impl DimPartition {
    pub const NONE: DimPartition = DimPartition { fashion: Fashion::None, factor: 1 };

    pub fn cyclic(factor: i64) -> Self {
        DimPartition { fashion: Fashion::Cyclic, factor }
    }

    pub fn block(factor: i64) -> Self {
        DimPartition { fashion: Fashion::Block, factor }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LayoutError {
    #[error("layout of a rank-{rank} array must have {rank} inputs and {} results, found {inputs} inputs and {results} results", 2 * rank)]
    Arity { rank: usize, inputs: usize, results: usize },
    #[error("dimension {dim}: unsupported partition pattern ({part}, {phys})")]
    Unsupported { dim: usize, part: String, phys: String },
    #[error("index {index} out of range for dimension {dim} of extent {extent}")]
    OutOfBounds { dim: usize, index: i64, extent: i64 },
    #[error("expected {expected} indices, got {got}")]
    Rank { expected: usize, got: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MemRefType {
    pub shape: Vec<i64>,
    pub elem: ElemKind,
    pub layout: AffineMap,
    pub space: MemorySpace,
}

pub fn identity_layout(rank: usize) -> AffineMap {
    let mut results = vec![AffineExpr::Const(0); rank];
    results.extend((0..rank as u32).map(AffineExpr::Var));
    AffineMap { num_inputs: rank, results }
}

pub fn block_size(extent: i64, factor: i64) -> i64 {
    (extent + factor - 1) / factor
}

impl MemRefType {
    pub fn new(shape: Vec<i64>, elem: ElemKind, space: MemorySpace) -> Self {
        let rank = shape.len();
        MemRefType { shape, elem, layout: identity_layout(rank), space }
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn num_elements(&self) -> i64 {
        self.shape.iter().product()
    }

    pub fn bits(&self) -> u64 {
        self.num_elements() as u64 * self.elem.bits()
    }

    /// Build the layout map for the given per-dimension partitions. Factors are
    /// clamped to the extent; factor 1 always gives the identity pattern.
    pub fn with_partition(mut self, parts: &[DimPartition]) -> Self {
        assert_eq!(parts.len(), self.rank());
        let n = self.rank();
        let mut part_r = Vec::with_capacity(n);
        let mut phys_r = Vec::with_capacity(n);
        for (d, (p, &ext)) in parts.iter().zip(&self.shape).enumerate() {
            let v = AffineExpr::Var(d as u32);
            let f = p.factor.clamp(1, ext.max(1));
            match p.fashion {
                _ if f == 1 => {
                    part_r.push(AffineExpr::Const(0));
                    phys_r.push(v);
                }
                Fashion::None => {
                    part_r.push(AffineExpr::Const(0));
                    phys_r.push(v);
                }
                Fashion::Cyclic => {
                    part_r.push(v.clone().modulo(f));
                    phys_r.push(v.floordiv(f));
                }
                Fashion::Block => {
                    let b = block_size(ext, f);
                    part_r.push(v.clone().floordiv(b));
                    phys_r.push(v.modulo(b));
                }
            }
        }
        part_r.extend(phys_r);
        self.layout = AffineMap { num_inputs: n, results: part_r };
        self
    }

    pub fn check_layout(&self) -> Result<(), LayoutError> {
        self.decode_partition().map(|_| ())
    }

    pub fn decode_partition(&self) -> Result<Vec<DimPartition>, LayoutError> {
        let n = self.rank();
        if self.layout.num_inputs != n || self.layout.results.len() != 2 * n {
            return Err(LayoutError::Arity {
                rank: n,
                inputs: self.layout.num_inputs,
                results: self.layout.results.len(),
            });
        }
        let mut out = Vec::with_capacity(n);
        for d in 0..n {
            let part = &self.layout.results[d];
            let phys = &self.layout.results[n + d];
            let ext = self.shape[d];
            let is_d = |e: &AffineExpr| matches!(e, AffineExpr::Var(v) if *v as usize == d);
            let decoded = match (part, phys) {
                (AffineExpr::Const(0), p) if is_d(p) => Some(DimPartition::NONE),
                // Block size 1: every element is its own bank.
                (p, AffineExpr::Const(0)) if is_d(p) => {
                    Some(if ext <= 1 { DimPartition::NONE } else { DimPartition::block(ext) })
                }
                (AffineExpr::Mod(a, f), AffineExpr::FloorDiv(b, g)) if f == g && is_d(a) && is_d(b) => {
                    Some(if *f == 1 { DimPartition::NONE } else { DimPartition::cyclic(*f) })
                }
                (AffineExpr::FloorDiv(a, bs), AffineExpr::Mod(b, bs2))
                    if bs == bs2 && is_d(a) && is_d(b) =>
                {
                    let factor = block_size(ext, *bs);
                    Some(if factor <= 1 { DimPartition::NONE } else { DimPartition::block(factor) })
                }
                _ => None,
            };
            match decoded {
                Some(p) => out.push(p),
                None => {
                    return Err(LayoutError::Unsupported {
                        dim: d,
                        part: part.to_string(),
                        phys: phys.to_string(),
                    })
                }
            }
        }
        Ok(out)
    }

    /// Number of physical banks along each dimension.
    pub fn bank_counts(&self) -> Vec<i64> {
        match self.decode_partition() {
            Ok(parts) => parts.iter().map(|p| p.factor).collect(),
            Err(_) => vec![1; self.rank()],
        }
    }

    pub fn num_banks(&self) -> i64 {
        self.bank_counts().iter().product()
    }

    pub fn partition_indices(&self, logical: &[i64]) -> Result<(Vec<i64>, Vec<i64>), LayoutError> {
        if logical.len() != self.rank() {
            return Err(LayoutError::Rank { expected: self.rank(), got: logical.len() });
        }
        for (d, (&i, &ext)) in logical.iter().zip(&self.shape).enumerate() {
            if i < 0 || i >= ext {
                return Err(LayoutError::OutOfBounds { dim: d, index: i, extent: ext });
            }
        }
        let r = self
            .layout
            .eval(logical)
            .map_err(|_| LayoutError::Rank { expected: self.rank(), got: logical.len() })?;
        let n = self.rank();
        Ok((r[..n].to_vec(), r[n..].to_vec()))
    }

    pub fn strip_layout(&mut self) {
        self.layout = identity_layout(self.rank());
    }
}

impl fmt::Display for MemRefType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dims: Vec<String> = self.shape.iter().map(|s| s.to_string()).collect();
        write!(f, "memref<{}x{}", dims.join("x"), self.elem)?;
        if self.layout != identity_layout(self.rank()) {
            write!(f, ", {}", self.layout)?;
        }
        write!(f, ", {}>", self.space.tag())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: Vec<i64>) -> MemRefType {
        MemRefType::new(shape, ElemKind::F32, MemorySpace::OnChip2PTrue)
    }

    #[test]
    fn cyclic_two_on_dim0() {
        let m = t(vec![8, 4]).with_partition(&[DimPartition::cyclic(2), DimPartition::NONE]);
        assert_eq!(m.partition_indices(&[5, 1]).unwrap(), (vec![1, 0], vec![2, 1]));
        assert_eq!(m.decode_partition().unwrap()[0], DimPartition::cyclic(2));
    }

    #[test]
    fn identity_layout_indices() {
        let m = t(vec![4, 8]);
        assert_eq!(m.partition_indices(&[3, 7]).unwrap(), (vec![0, 0], vec![3, 7]));
    }

    #[test]
    fn block_four_on_dim1() {
        let m = t(vec![2, 16]).with_partition(&[DimPartition::NONE, DimPartition::block(4)]);
        assert_eq!(m.partition_indices(&[0, 9]).unwrap(), (vec![0, 2], vec![0, 1]));
        assert_eq!(m.decode_partition().unwrap()[1], DimPartition::block(4));
    }

    #[test]
    fn uneven_block_uses_ceiling() {
        let m = t(vec![10]).with_partition(&[DimPartition::block(4)]);
        // block size 3 -> banks {0..2},{3..5},{6..8},{9}
        assert_eq!(m.partition_indices(&[9]).unwrap(), (vec![3], vec![0]));
        assert_eq!(m.num_banks(), 4);
    }

    #[test]
    fn complete_block_partition_decodes() {
        let m = t(vec![4]).with_partition(&[DimPartition::block(4)]);
        assert_eq!(m.decode_partition().unwrap()[0], DimPartition::block(4));
        assert_eq!(m.partition_indices(&[3]).unwrap(), (vec![3], vec![0]));
    }

    #[test]
    fn bad_layouts_rejected() {
        let mut m = t(vec![4, 4]);
        m.layout.results.pop();
        assert!(matches!(m.check_layout(), Err(LayoutError::Arity { .. })));
        let mut m = t(vec![4]);
        m.layout.results[1] = AffineExpr::var(0) * 2;
        assert!(matches!(m.check_layout(), Err(LayoutError::Unsupported { .. })));
    }

    #[test]
    fn out_of_bounds() {
        let m = t(vec![4]);
        assert!(matches!(m.partition_indices(&[4]), Err(LayoutError::OutOfBounds { .. })));
    }
}
