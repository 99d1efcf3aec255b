//! GEMM shapes, sharding, and the static metrics derived from M, N, K.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// An `M x N x K` matrix multiply: `C[M,N] (+)= A[M,K] * B[K,N]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GemmShape {
    pub m: u64,
    pub n: u64,
    pub k: u64,
    pub elt_bytes: u64,
}

impl GemmShape {
    pub fn new(m: u64, n: u64, k: u64, elt_bytes: u64) -> Result<Self> {
        for (name, v) in [("M", m), ("N", n), ("K", k)] {
            if v == 0 {
                return Err(Error::validation(name, "must be >= 1"));
            }
        }
        if !matches!(elt_bytes, 1 | 2 | 4 | 8) {
            return Err(Error::validation(
                "elt_bytes",
                format!("{elt_bytes} not in {{1,2,4,8}}"),
            ));
        }
        let shape = GemmShape { m, n, k, elt_bytes };
        // Reject shapes whose counts would overflow the integral metrics.
        2u64.checked_mul(m)
            .and_then(|v| v.checked_mul(n))
            .and_then(|v| v.checked_mul(k))
            .ok_or_else(|| Error::validation("M*N*K", "operation count overflows u64"))?;
        shape
            .checked_mt()
            .ok_or_else(|| Error::validation("M,N,K", "memory traffic overflows u64"))?;
        Ok(shape)
    }

    fn checked_mt(&self) -> Option<u64> {
        let mk = self.m.checked_mul(self.k)?;
        let nk = self.n.checked_mul(self.k)?;
        let mn = self.m.checked_mul(self.n)?;
        mk.checked_add(nk)?.checked_add(mn)?.checked_mul(self.elt_bytes)
    }

    /// `2*M*N*K`.
    pub fn flops(&self) -> u64 {
        gemm_flops(self)
    }

    /// `elt * (M*K + N*K + M*N)`.
    pub fn mt(&self) -> u64 {
        gemm_mt(self)
    }

    pub fn otb<S: Scalar>(&self) -> S {
        gemm_otb(self)
    }
}

impl fmt::Display for GemmShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})x{}B", self.m, self.n, self.k, self.elt_bytes)
    }
}

pub fn gemm_flops(shape: &GemmShape) -> u64 {
    2 * shape.m * shape.n * shape.k
}

pub fn gemm_mt(shape: &GemmShape) -> u64 {
    shape.elt_bytes * (shape.m * shape.k + shape.n * shape.k + shape.m * shape.n)
}

/// Static op-to-byte ratio (arithmetic intensity).
pub fn gemm_otb<S: Scalar>(shape: &GemmShape) -> S {
    S::from_count(gemm_flops(shape)) / S::from_count(gemm_mt(shape))
}

/// Dimension along which a GEMM is decomposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ShardAxis {
    /// Rows of A and C (`M`).
    RowM,
    /// Reduction dimension (`K`); partial products must be accumulated.
    ColK,
}

impl fmt::Display for ShardAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ShardAxis::RowM => f.write_str("row(M)"),
            ShardAxis::ColK => f.write_str("col(K)"),
        }
    }
}

/// A GEMM obtained by splitting a parent GEMM `degree` ways along `axis`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ShardedGemm {
    pub shape: GemmShape,
    pub axis: ShardAxis,
    pub degree: u64,
    /// `C += A*B` rather than `C = A*B`; true exactly for `ColK` shards.
    pub additive: bool,
}

impl ShardedGemm {
    /// The undivided GEMM, viewed as a degree-1 row shard.
    pub fn whole(shape: GemmShape) -> Self {
        ShardedGemm {
            shape,
            axis: ShardAxis::RowM,
            degree: 1,
            additive: false,
        }
    }
}

pub fn shard_gemm(shape: &GemmShape, axis: ShardAxis, degree: u64) -> Result<ShardedGemm> {
    let dim = match axis {
        ShardAxis::RowM => shape.m,
        ShardAxis::ColK => shape.k,
    };
    if degree == 0 || dim % degree != 0 {
        return Err(Error::Divisibility { axis, dim, degree });
    }
    let mut sharded = *shape;
    match axis {
        ShardAxis::RowM => sharded.m = dim / degree,
        ShardAxis::ColK => sharded.k = dim / degree,
    }
    Ok(ShardedGemm {
        shape: sharded,
        axis,
        degree,
        additive: axis == ShardAxis::ColK,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn g1() -> GemmShape {
        GemmShape::new(16384, 16384, 131072, 2).unwrap()
    }

    #[test]
    fn unit_gemm_metrics() {
        let s = GemmShape::new(1, 1, 1, 2).unwrap();
        assert_eq!(gemm_flops(&s), 2);
        assert_eq!(gemm_mt(&s), 6);
        assert_eq!(gemm_otb::<f64>(&s), 1.0 / 3.0);
    }

    #[test]
    fn production_scenarios_metrics() {
        assert_eq!(gemm_flops(&g1()), 70_368_744_177_664);
        assert_eq!(gemm_mt(&g1()), 9_126_805_504);
        assert!((gemm_otb::<f64>(&g1()) - 7710.1176).abs() < 1e-3);

        let g5 = GemmShape::new(8192, 8192, 262144, 2).unwrap();
        assert_eq!(gemm_mt(&g5), 8_724_152_320);
        assert!((gemm_otb::<f64>(&g5) - 4032.98).abs() < 1e-2);

        let g13 = GemmShape::new(1607680, 57344, 8192, 2).unwrap();
        assert_eq!(gemm_flops(&g13), 1_510_454_098_657_280);
    }

    #[test]
    fn invalid_shapes() {
        assert!(GemmShape::new(0, 1, 1, 2).is_err());
        assert!(GemmShape::new(1, 1, 1, 3).is_err());
        assert!(GemmShape::new(u64::MAX / 2, 4, 4, 2).is_err());
    }

    #[test]
    fn sharding() {
        let r = shard_gemm(&g1(), ShardAxis::RowM, 8).unwrap();
        assert_eq!((r.shape.m, r.shape.n, r.shape.k), (2048, 16384, 131072));
        assert!(!r.additive);

        let c = shard_gemm(&g1(), ShardAxis::ColK, 8).unwrap();
        assert_eq!((c.shape.m, c.shape.n, c.shape.k), (16384, 16384, 16384));
        assert!(c.additive);

        assert_eq!(
            shard_gemm(&g1(), ShardAxis::RowM, 5),
            Err(Error::Divisibility {
                axis: ShardAxis::RowM,
                dim: 16384,
                degree: 5
            })
        );
    }

    proptest! {
        #[test]
        fn otb_times_mt_is_flops(m in 1u64..1 << 20, n in 1u64..1 << 16, k in 1u64..1 << 16, e in 0usize..4) {
            let s = GemmShape::new(m, n, k, [1, 2, 4, 8][e]).unwrap();
            let otb: f64 = gemm_otb(&s);
            let back = otb * gemm_mt(&s) as f64;
            prop_assert!((back - gemm_flops(&s) as f64).abs() <= 1e-9 * gemm_flops(&s) as f64);
        }

        #[test]
        fn m_k_swap_symmetry(m in 1u64..1 << 20, n in 1u64..1 << 16, k in 1u64..1 << 16) {
            let a = GemmShape::new(m, n, k, 2).unwrap();
            let b = GemmShape::new(k, n, m, 2).unwrap();
            prop_assert_eq!(gemm_flops(&a), gemm_flops(&b));
            prop_assert_eq!(gemm_mt(&a), gemm_mt(&b));
        }

        #[test]
        fn degree_one_is_identity(m in 1u64..1 << 20, n in 1u64..1 << 16, k in 1u64..1 << 16) {
            let s = GemmShape::new(m, n, k, 2).unwrap();
            let r = shard_gemm(&s, ShardAxis::RowM, 1).unwrap();
            let c = shard_gemm(&s, ShardAxis::ColK, 1).unwrap();
            prop_assert_eq!(r.shape, s);
            prop_assert_eq!(c.shape, s);
            prop_assert!(!r.additive);
            prop_assert!(c.additive);
        }
    }
}
