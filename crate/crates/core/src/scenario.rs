//! Scenario records and the scenario CSV format.
//!
//! ```text
//! name,parallelism,model,M,N,K,elt_bytes,collective,n_gpus
//! g1,SP+TP,llama-3-405b,16384,16384,131072,2,all_gather,8
//! ```
//!
//! Lines starting with `#` and blank lines are ignored. An empty `elt_bytes`
//! field means half precision (2 bytes).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gemm::GemmShape;

pub const SCENARIO_HEADER: &str = "name,parallelism,model,M,N,K,elt_bytes,collective,n_gpus";
pub const DEFAULT_ELT_BYTES: u64 = 2;

const PRODUCTION_CSV: &str = include_str!("../data/production.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Parallelism {
    /// Sequence + tensor parallelism.
    SpTp,
    /// Expert parallelism.
    Ep,
}

impl fmt::Display for Parallelism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Parallelism::SpTp => "SP+TP",
            Parallelism::Ep => "EP",
        })
    }
}

impl FromStr for Parallelism {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "SP+TP" => Ok(Parallelism::SpTp),
            "EP" => Ok(Parallelism::Ep),
            other => Err(format!("unknown parallelism `{other}` (expected SP+TP or EP)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Collective {
    AllGather,
    AllToAll,
}

impl fmt::Display for Collective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Collective::AllGather => "all_gather",
            Collective::AllToAll => "all_to_all",
        })
    }
}

impl FromStr for Collective {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "all_gather" => Ok(Collective::AllGather),
            "all_to_all" => Ok(Collective::AllToAll),
            other => Err(format!(
                "unknown collective `{other}` (expected all_gather or all_to_all)"
            )),
        }
    }
}

/// A data-dependent overlap scenario: the collective that feeds a GEMM.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub parallelism: Parallelism,
    pub model: String,
    /// Per-GPU GEMM after every input shard has been collected.
    pub gemm: GemmShape,
    pub collective: Collective,
    pub n_gpus: u64,
}

impl Scenario {
    pub fn new(
        name: impl Into<String>,
        parallelism: Parallelism,
        model: impl Into<String>,
        gemm: GemmShape,
        collective: Collective,
        n_gpus: u64,
    ) -> Result<Self> {
        let s = Scenario {
            name: name.into(),
            parallelism,
            model: model.into(),
            gemm,
            collective,
            n_gpus,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::validation("name", "must not be empty"));
        }
        if self.n_gpus < 2 {
            return Err(Error::validation("n_gpus", format!("{} < 2", self.n_gpus)));
        }
        if !self.supports_1d() && !self.supports_2d() {
            let g2 = self.n_gpus * self.n_gpus;
            return Err(Error::validation(
                "M,K",
                format!(
                    "neither M={} nor K={} is divisible by n_gpus^2={g2}",
                    self.gemm.m, self.gemm.k
                ),
            ));
        }
        Ok(())
    }

    /// Row chunking needs `M % G^2 == 0`.
    pub fn supports_1d(&self) -> bool {
        self.gemm.m.is_multiple_of(self.n_gpus * self.n_gpus)
    }

    /// Column-block chunking needs `K % G^2 == 0` (and row shards for the slabs).
    pub fn supports_2d(&self) -> bool {
        self.gemm.k.is_multiple_of(self.n_gpus * self.n_gpus) && self.gemm.m.is_multiple_of(self.n_gpus)
    }

    /// Bytes of the local input shard each GPU starts with.
    pub fn shard_bytes(&self) -> u64 {
        (self.gemm.m / self.n_gpus) * self.gemm.k * self.gemm.elt_bytes
    }

    /// Bytes of one fine-grain chunk (a shard split `G` ways).
    pub fn chunk_bytes(&self) -> u64 {
        self.shard_bytes() / self.n_gpus
    }
}

pub fn parse_scenarios(text: &str) -> Result<Vec<Scenario>> {
    let mut out = Vec::new();
    let mut seen_header = false;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !seen_header {
            let header: Vec<&str> = line.split(',').map(str::trim).collect();
            let expected: Vec<&str> = SCENARIO_HEADER.split(',').collect();
            if header != expected {
                return Err(Error::Parse {
                    line: line_no,
                    reason: format!("expected header `{SCENARIO_HEADER}`"),
                });
            }
            seen_header = true;
            continue;
        }
        out.push(parse_row(line, line_no)?);
    }
    if !seen_header {
        return Err(Error::Parse {
            line: 0,
            reason: "missing header".into(),
        });
    }
    Ok(out)
}

fn parse_row(line: &str, line_no: usize) -> Result<Scenario> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    let perr = |reason: String| Error::Parse {
        line: line_no,
        reason,
    };
    if fields.len() != 9 {
        return Err(perr(format!("expected 9 fields, found {}", fields.len())));
    }
    let int = |name: &str, v: &str| -> Result<u64> {
        v.parse::<u64>()
            .map_err(|_| perr(format!("{name}: `{v}` is not a non-negative integer")))
    };
    let parallelism = fields[1].parse().map_err(perr)?;
    let m = int("M", fields[3])?;
    let n = int("N", fields[4])?;
    let k = int("K", fields[5])?;
    let elt = if fields[6].is_empty() {
        DEFAULT_ELT_BYTES
    } else {
        int("elt_bytes", fields[6])?
    };
    let collective = fields[7].parse().map_err(perr)?;
    let n_gpus = int("n_gpus", fields[8])?;
    let wrap = |e: Error| match e {
        Error::Validation { field, reason } => Error::Validation {
            field,
            reason: format!("{reason} (line {line_no}, scenario `{}`)", fields[0]),
        },
        other => other,
    };
    let gemm = GemmShape::new(m, n, k, elt).map_err(wrap)?;
    Scenario::new(fields[0], parallelism, fields[2], gemm, collective, n_gpus).map_err(wrap)
}

pub fn write_scenarios(scenarios: &[Scenario]) -> String {
    let mut out = String::from(SCENARIO_HEADER);
    out.push('\n');
    for s in scenarios {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            s.name,
            s.parallelism,
            s.model,
            s.gemm.m,
            s.gemm.n,
            s.gemm.k,
            s.gemm.elt_bytes,
            s.collective,
            s.n_gpus
        ));
    }
    out
}

/// The sixteen production scenarios bundled with the crate.
pub fn production_scenarios() -> Vec<Scenario> {
    parse_scenarios(PRODUCTION_CSV).expect("bundled scenario table is valid")
}

pub fn production_csv() -> &'static str {
    PRODUCTION_CSV
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_g1_row() {
        let text = format!("{SCENARIO_HEADER}\ng1,SP+TP,llama-3-405b,16384,16384,131072,2,all_gather,8\n");
        let s = parse_scenarios(&text).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].name, "g1");
        assert_eq!(s[0].parallelism, Parallelism::SpTp);
        assert_eq!(s[0].gemm, GemmShape::new(16384, 16384, 131072, 2).unwrap());
        assert_eq!(s[0].collective, Collective::AllGather);
        assert_eq!(s[0].n_gpus, 8);
    }

    #[test]
    fn header_only_is_empty() {
        assert!(parse_scenarios(SCENARIO_HEADER).unwrap().is_empty());
        assert!(parse_scenarios(&format!("# c\n{SCENARIO_HEADER}\n\n")).unwrap().is_empty());
    }

    #[test]
    fn indivisible_rows_are_rejected() {
        let text = format!("{SCENARIO_HEADER}\nbad,EP,x,100,64,100,2,all_to_all,8\n");
        match parse_scenarios(&text) {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "M,K"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_rows_report_line() {
        let text = format!("{SCENARIO_HEADER}\n# comment\ng1,SP+TP,x,abc,1,1,2,all_gather,8\n");
        match parse_scenarios(&text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let text = format!("{SCENARIO_HEADER}\ng1,SP+TP,x,64\n");
        assert!(matches!(parse_scenarios(&text), Err(Error::Parse { line: 2, .. })));
        let text = format!("{SCENARIO_HEADER}\ng1,DP,x,64,64,64,2,all_gather,8\n");
        assert!(matches!(parse_scenarios(&text), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_scenarios("a,b\n"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn missing_elt_defaults_to_half() {
        let text = format!("{SCENARIO_HEADER}\ng,EP,x,64,64,64,,all_to_all,8\n");
        assert_eq!(parse_scenarios(&text).unwrap()[0].gemm.elt_bytes, 2);
    }

    #[test]
    fn production_scenarios_loads() {
        let t = production_scenarios();
        assert_eq!(t.len(), 16);
        assert_eq!(t[12].name, "g13");
        assert_eq!(t[12].collective, Collective::AllToAll);
        assert!(t.iter().all(|s| s.supports_1d()));
    }

    proptest! {
        #[test]
        fn write_then_parse_roundtrips(
            rows in proptest::collection::vec((1u64..64, 1u64..5000, 1u64..64, 0usize..4, 2u64..9, any::<bool>()), 0..6)
        ) {
            let scenarios: Vec<Scenario> = rows.iter().enumerate().map(|(i, &(mq, n, kq, e, g, ep))| {
                let gemm = GemmShape::new(mq * g * g, n, kq * g * g, [1, 2, 4, 8][e]).unwrap();
                let (par, coll) = if ep { (Parallelism::Ep, Collective::AllToAll) } else { (Parallelism::SpTp, Collective::AllGather) };
                Scenario::new(format!("s{i}"), par, "model", gemm, coll, g).unwrap()
            }).collect();
            let text = write_scenarios(&scenarios);
            prop_assert_eq!(parse_scenarios(&text).unwrap(), scenarios);
        }
    }
}
