//! Decomposition (DIL) and contention (CIL) loss multipliers.
//!
//! Every loss is a piecewise-linear function of `ln(x)` stored as a
//! [`CalibrationTable`]. GEMM DIL is keyed on the op-to-byte ratio of the
//! decomposed kernel, communication DIL on the transfer size, and both CILs
//! on the scenario GEMM's memory traffic.
//!
//! The built-in tables are synthetic. They follow the measured trends (DIL
//! falls with OTB and transfer size, CIL grows with memory traffic, DMA
//! contends less than core-driven copies) and are scaled so their geomeans
//! over the bundled scenarios match measured characterization averages.
//! Replace them with a calibration file built from real measurements.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gemm::{GemmShape, ShardAxis, ShardedGemm};
use crate::machine::CommAgent;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationTable<S: Scalar = f64> {
    points: Vec<(S, S)>,
}

impl<S: Scalar> CalibrationTable<S> {
    pub fn new(name: &str, points: Vec<(S, S)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::calibration(name, "needs at least one point"));
        }
        for (i, &(x, m)) in points.iter().enumerate() {
            if !(x > S::zero()) || !x.is_finite() {
                return Err(Error::calibration(name, format!("x[{i}] = {x} must be finite and > 0")));
            }
            if !(m >= S::one()) || !m.is_finite() {
                return Err(Error::calibration(name, format!("multiplier[{i}] = {m} must be >= 1.0")));
            }
            if i > 0 && !(x > points[i - 1].0) {
                return Err(Error::calibration(name, format!("x[{i}] = {x} is not strictly increasing")));
            }
        }
        Ok(CalibrationTable { points })
    }

    pub fn from_f64(name: &str, points: &[(f64, f64)]) -> Result<Self> {
        Self::new(
            name,
            points
                .iter()
                .map(|&(x, m)| (S::from_f64_lossy(x), S::from_f64_lossy(m)))
                .collect(),
        )
    }

    /// The neutral table: multiplier 1 everywhere.
    pub fn identity() -> Self {
        CalibrationTable {
            points: vec![(S::one(), S::one())],
        }
    }

    pub fn points(&self) -> &[(S, S)] {
        &self.points
    }

    pub fn lookup(&self, x: S) -> Result<S> {
        lookup(self, x)
    }

    fn knots(&self) -> impl Iterator<Item = S> + '_ {
        self.points.iter().map(|p| p.0)
    }

    fn to_pairs(&self) -> Vec<[f64; 2]> {
        self.points
            .iter()
            .map(|&(x, m)| [x.to_f64_lossy(), m.to_f64_lossy()])
            .collect()
    }
}

/// Interpolates linearly in `ln(x)`, clamping to the end multipliers.
pub fn lookup<S: Scalar>(table: &CalibrationTable<S>, x: S) -> Result<S> {
    if !(x > S::zero()) {
        return Err(Error::Domain(x.to_f64_lossy()));
    }
    let pts = &table.points;
    let (first, last) = (pts[0], pts[pts.len() - 1]);
    if x <= first.0 {
        return Ok(first.1);
    }
    if x >= last.0 {
        return Ok(last.1);
    }
    let hi = pts.partition_point(|p| p.0 <= x);
    let (x0, m0) = pts[hi - 1];
    let (x1, m1) = pts[hi];
    let t = (x / x0).ln() / (x1 / x0).ln();
    Ok((m0 + t * (m1 - m0)).max(S::one()))
}

/// How a GEMM kernel was carved out of its parent, which selects the DIL table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DilClass {
    /// Undecomposed, or losses disabled.
    Unity,
    /// One shard (`G`-way split; the 8-way tables).
    Shard(ShardAxis),
    /// One fine chunk (`G^2`-way split; the 64-way tables).
    Chunk(ShardAxis),
    /// One kernel over several fine chunks read in place from separate
    /// buffers; its loss sits between the shard and chunk tables
    /// (geometric mean of the two).
    FusedChunks(ShardAxis),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GemmDilTables<S: Scalar = f64> {
    pub row8: CalibrationTable<S>,
    pub row64: CalibrationTable<S>,
    pub col8: CalibrationTable<S>,
    pub col64: CalibrationTable<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentTables<S: Scalar = f64> {
    pub dma: CalibrationTable<S>,
    pub core: CalibrationTable<S>,
}

impl<S: Scalar> AgentTables<S> {
    pub fn get(&self, agent: CommAgent) -> &CalibrationTable<S> {
        match agent {
            CommAgent::Dma => &self.dma,
            CommAgent::Core => &self.core,
        }
    }
}

/// Rescales the excess of a CIL multiplier over 1.0 for shard-granularity
/// overlap: `1 + s * (m - 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShardOverlapScale<S: Scalar = f64> {
    pub gemm: S,
    pub comm: S,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossModel<S: Scalar = f64> {
    pub gemm_dil: GemmDilTables<S>,
    pub comm_dil: CalibrationTable<S>,
    pub gemm_cil: AgentTables<S>,
    pub comm_cil: AgentTables<S>,
    pub shard_overlap_cil_scale: ShardOverlapScale<S>,
}

// Synthetic defaults; see the module docs.
const GEMM_DIL_SHARD: &[(f64, f64)] = &[
    (500.0, 1.25),
    (1000.0, 1.08),
    (2000.0, 1.03),
    (3000.0, 1.014),
    (5000.0, 1.006),
    (7000.0, 1.003),
    (9000.0, 1.002),
    (20000.0, 1.001),
];
const GEMM_DIL_CHUNK: &[(f64, f64)] = &[
    (500.0, 1.45),
    (1000.0, 1.30),
    (2000.0, 1.20),
    (3000.0, 1.13),
    (4000.0, 1.115),
    (4500.0, 1.10),
    (6400.0, 1.045),
    (7000.0, 1.034),
    (9000.0, 1.03),
    (20000.0, 1.02),
];
const COMM_DIL: &[(f64, f64)] = &[(16e6, 1.25), (64e6, 1.12), (256e6, 1.05), (1e9, 1.02)];
const GEMM_CIL_DMA: &[(f64, f64)] = &[
    (1e9, 1.08),
    (1e10, 1.10),
    (5e10, 1.105),
    (1.4e11, 1.11),
    (1.8e11, 1.25),
    (3e11, 1.28),
];
const COMM_CIL_DMA: &[(f64, f64)] = &[(1e9, 1.08), (1e10, 1.10), (5e10, 1.13), (3e11, 1.18)];
const CORE_CIL_OFFSET: f64 = 0.25;
const SHARD_SCALE_GEMM: f64 = 0.64;
const SHARD_SCALE_COMM: f64 = 0.25;

fn offset(points: &[(f64, f64)], by: f64) -> Vec<(f64, f64)> {
    points.iter().map(|&(x, m)| (x, m + by)).collect()
}

impl<S: Scalar> LossModel<S> {
    /// All multipliers 1.0.
    pub fn identity() -> Self {
        let id = CalibrationTable::identity;
        LossModel {
            gemm_dil: GemmDilTables {
                row8: id(),
                row64: id(),
                col8: id(),
                col64: id(),
            },
            comm_dil: id(),
            gemm_cil: AgentTables { dma: id(), core: id() },
            comm_cil: AgentTables { dma: id(), core: id() },
            shard_overlap_cil_scale: ShardOverlapScale {
                gemm: S::one(),
                comm: S::one(),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let tables = [
            ("gemm_dil.row8", &self.gemm_dil.row8),
            ("gemm_dil.row64", &self.gemm_dil.row64),
            ("gemm_dil.col8", &self.gemm_dil.col8),
            ("gemm_dil.col64", &self.gemm_dil.col64),
            ("comm_dil", &self.comm_dil),
            ("gemm_cil.dma", &self.gemm_cil.dma),
            ("gemm_cil.core", &self.gemm_cil.core),
            ("comm_cil.dma", &self.comm_cil.dma),
            ("comm_cil.core", &self.comm_cil.core),
        ];
        for (name, t) in tables {
            CalibrationTable::new(name, t.points.clone())?;
        }
        for (name, t) in &tables[..5] {
            check_monotone(name, t, Trend::NonIncreasing)?;
        }
        for (name, t) in &tables[5..] {
            check_monotone(name, t, Trend::NonDecreasing)?;
        }
        check_dominates("gemm_dil.row64", &self.gemm_dil.row64, &self.gemm_dil.row8)?;
        check_dominates("gemm_dil.col64", &self.gemm_dil.col64, &self.gemm_dil.col8)?;
        check_dominates("gemm_cil.core", &self.gemm_cil.core, &self.gemm_cil.dma)?;
        check_dominates("comm_cil.core", &self.comm_cil.core, &self.comm_cil.dma)?;
        let s = &self.shard_overlap_cil_scale;
        for (name, v) in [("gemm", s.gemm), ("comm", s.comm)] {
            if !(v >= S::zero() && v <= S::one()) {
                return Err(Error::calibration(
                    format!("shard_overlap_cil_scale.{name}"),
                    "must lie in [0, 1]",
                ));
            }
        }
        Ok(())
    }

    fn dil_table(&self, axis: ShardAxis, chunk: bool) -> &CalibrationTable<S> {
        match (axis, chunk) {
            (ShardAxis::RowM, false) => &self.gemm_dil.row8,
            (ShardAxis::RowM, true) => &self.gemm_dil.row64,
            (ShardAxis::ColK, false) => &self.gemm_dil.col8,
            (ShardAxis::ColK, true) => &self.gemm_dil.col64,
        }
    }

    /// DIL of a decomposed kernel, keyed on the kernel's own (resultant) OTB.
    pub fn gemm_dil(&self, kernel: &GemmShape, class: DilClass) -> Result<S> {
        let otb: S = kernel.otb();
        match class {
            DilClass::Unity => Ok(S::one()),
            DilClass::Shard(axis) => self.dil_table(axis, false).lookup(otb),
            DilClass::Chunk(axis) => self.dil_table(axis, true).lookup(otb),
            DilClass::FusedChunks(axis) => {
                let lo = self.dil_table(axis, false).lookup(otb)?;
                let hi = self.dil_table(axis, true).lookup(otb)?;
                Ok((lo * hi).sqrt().max(S::one()))
            }
        }
    }

    /// DIL of `parent` split `degree` ways (8 or 64) along `axis`.
    pub fn gemm_dil_for(&self, parent: &GemmShape, axis: ShardAxis, degree: u64) -> Result<S> {
        let class = match degree {
            8 => DilClass::Shard(axis),
            64 => DilClass::Chunk(axis),
            d => {
                return Err(Error::validation(
                    "degree",
                    format!("{d} has no DIL table (expected 8 or 64)"),
                ))
            }
        };
        let kernel: ShardedGemm = crate::gemm::shard_gemm(parent, axis, degree)?;
        self.gemm_dil(&kernel.shape, class)
    }

    pub fn comm_dil(&self, transfer_bytes: u64) -> Result<S> {
        self.comm_dil.lookup(S::from_count(transfer_bytes))
    }

    pub fn gemm_cil(&self, mt_bytes: u64, agent: CommAgent) -> Result<S> {
        self.gemm_cil.get(agent).lookup(S::from_count(mt_bytes))
    }

    pub fn comm_cil(&self, mt_bytes: u64, agent: CommAgent) -> Result<S> {
        self.comm_cil.get(agent).lookup(S::from_count(mt_bytes))
    }

    /// GEMM CIL under shard-granularity overlap.
    pub fn shard_gemm_cil(&self, mt_bytes: u64, agent: CommAgent) -> Result<S> {
        let m = self.gemm_cil(mt_bytes, agent)?;
        Ok(S::one() + self.shard_overlap_cil_scale.gemm * (m - S::one()))
    }

    /// Communication CIL under shard-granularity overlap.
    pub fn shard_comm_cil(&self, mt_bytes: u64, agent: CommAgent) -> Result<S> {
        let m = self.comm_cil(mt_bytes, agent)?;
        Ok(S::one() + self.shard_overlap_cil_scale.comm * (m - S::one()))
    }

    pub fn to_json(&self) -> String {
        let file = CalibrationFile {
            gemm_dil: Some(GemmDilFile {
                row8: Some(self.gemm_dil.row8.to_pairs()),
                row64: Some(self.gemm_dil.row64.to_pairs()),
                col8: Some(self.gemm_dil.col8.to_pairs()),
                col64: Some(self.gemm_dil.col64.to_pairs()),
            }),
            comm_dil: Some(self.comm_dil.to_pairs()),
            gemm_cil: Some(AgentFile {
                dma: Some(self.gemm_cil.dma.to_pairs()),
                core: Some(self.gemm_cil.core.to_pairs()),
            }),
            comm_cil: Some(AgentFile {
                dma: Some(self.comm_cil.dma.to_pairs()),
                core: Some(self.comm_cil.core.to_pairs()),
            }),
            shard_overlap_cil_scale: Some(ScaleFile {
                gemm: Some(self.shard_overlap_cil_scale.gemm.to_f64_lossy()),
                comm: Some(self.shard_overlap_cil_scale.comm.to_f64_lossy()),
            }),
        };
        serde_json::to_string_pretty(&file).expect("calibration serializes")
    }
}

pub fn default_calibration<S: Scalar>() -> LossModel<S> {
    let t = |name: &str, pts: &[(f64, f64)]| {
        CalibrationTable::from_f64(name, pts).expect("built-in table is valid")
    };
    let model = LossModel {
        gemm_dil: GemmDilTables {
            row8: t("gemm_dil.row8", GEMM_DIL_SHARD),
            row64: t("gemm_dil.row64", GEMM_DIL_CHUNK),
            col8: t("gemm_dil.col8", GEMM_DIL_SHARD),
            col64: t("gemm_dil.col64", GEMM_DIL_CHUNK),
        },
        comm_dil: t("comm_dil", COMM_DIL),
        gemm_cil: AgentTables {
            dma: t("gemm_cil.dma", GEMM_CIL_DMA),
            core: t("gemm_cil.core", &offset(GEMM_CIL_DMA, CORE_CIL_OFFSET)),
        },
        comm_cil: AgentTables {
            dma: t("comm_cil.dma", COMM_CIL_DMA),
            core: t("comm_cil.core", &offset(COMM_CIL_DMA, CORE_CIL_OFFSET)),
        },
        shard_overlap_cil_scale: ShardOverlapScale {
            gemm: S::from_f64_lossy(SHARD_SCALE_GEMM),
            comm: S::from_f64_lossy(SHARD_SCALE_COMM),
        },
    };
    debug_assert!(model.validate().is_ok());
    model
}

/// Parses a calibration document and merges it table-by-table over the defaults.
pub fn load_calibration<S: Scalar>(text: &str) -> Result<LossModel<S>> {
    let file: CalibrationFile = serde_json::from_str(text)
        .map_err(|e| Error::calibration("<document>", e.to_string()))?;
    let mut model = default_calibration::<S>();
    let table = |name: &str, pairs: &[[f64; 2]]| {
        let pts: Vec<(f64, f64)> = pairs.iter().map(|p| (p[0], p[1])).collect();
        CalibrationTable::from_f64(name, &pts)
    };
    if let Some(g) = file.gemm_dil {
        let slots = [
            ("gemm_dil.row8", g.row8, &mut model.gemm_dil.row8),
            ("gemm_dil.row64", g.row64, &mut model.gemm_dil.row64),
            ("gemm_dil.col8", g.col8, &mut model.gemm_dil.col8),
            ("gemm_dil.col64", g.col64, &mut model.gemm_dil.col64),
        ];
        for (name, src, dst) in slots {
            if let Some(p) = src {
                *dst = table(name, &p)?;
            }
        }
    }
    if let Some(p) = file.comm_dil {
        model.comm_dil = table("comm_dil", &p)?;
    }
    for (prefix, src, dst) in [
        ("gemm_cil", file.gemm_cil, &mut model.gemm_cil),
        ("comm_cil", file.comm_cil, &mut model.comm_cil),
    ] {
        if let Some(a) = src {
            if let Some(p) = a.dma {
                dst.dma = table(&format!("{prefix}.dma"), &p)?;
            }
            if let Some(p) = a.core {
                dst.core = table(&format!("{prefix}.core"), &p)?;
            }
        }
    }
    if let Some(s) = file.shard_overlap_cil_scale {
        if let Some(v) = s.gemm {
            model.shard_overlap_cil_scale.gemm = S::from_f64_lossy(v);
        }
        if let Some(v) = s.comm {
            model.shard_overlap_cil_scale.comm = S::from_f64_lossy(v);
        }
    }
    model.validate()?;
    Ok(model)
}

#[derive(Clone, Copy)]
enum Trend {
    NonIncreasing,
    NonDecreasing,
}

fn check_monotone<S: Scalar>(name: &str, t: &CalibrationTable<S>, trend: Trend) -> Result<()> {
    for w in t.points.windows(2) {
        let ok = match trend {
            Trend::NonIncreasing => w[1].1 <= w[0].1,
            Trend::NonDecreasing => w[1].1 >= w[0].1,
        };
        if !ok {
            let dir = match trend {
                Trend::NonIncreasing => "non-increasing",
                Trend::NonDecreasing => "non-decreasing",
            };
            return Err(Error::calibration(name, format!("multipliers must be {dir} in x")));
        }
    }
    Ok(())
}

/// `upper(x) >= lower(x)` for every x. Both are piecewise linear in ln(x) with
/// clamped ends, so checking the union of their knots covers every x.
fn check_dominates<S: Scalar>(
    name: &str,
    upper: &CalibrationTable<S>,
    lower: &CalibrationTable<S>,
) -> Result<()> {
    for x in upper.knots().chain(lower.knots()) {
        let (u, l) = (upper.lookup(x)?, lower.lookup(x)?);
        if u < l {
            return Err(Error::calibration(
                name,
                format!("value {u} at x = {x} is below its lower bound {l}"),
            ));
        }
    }
    Ok(())
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CalibrationFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    gemm_dil: Option<GemmDilFile>,
    #[serde(skip_serializing_if = "Option::is_none")]
    comm_dil: Option<Vec<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gemm_cil: Option<AgentFile>,
    #[serde(skip_serializing_if = "Option::is_none")]
    comm_cil: Option<AgentFile>,
    #[serde(skip_serializing_if = "Option::is_none")]
    shard_overlap_cil_scale: Option<ScaleFile>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GemmDilFile {
    row8: Option<Vec<[f64; 2]>>,
    row64: Option<Vec<[f64; 2]>>,
    col8: Option<Vec<[f64; 2]>>,
    col64: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AgentFile {
    dma: Option<Vec<[f64; 2]>>,
    core: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScaleFile {
    gemm: Option<f64>,
    comm: Option<f64>,
}
