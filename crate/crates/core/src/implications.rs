//! Testable conditional-independence implications of a DAG over its observed variables.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsep::{all_minimal_separators, d_separated, DsepError, VarSet};
use crate::graph::CausalDag;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClaimError {
    #[error("claim endpoints must differ, got `{0}` twice")]
    SameEndpoint(String),
    #[error("endpoint `{0}` appears in the conditioning set")]
    EndpointConditioned(String),
    #[error("cannot parse claim `{0}`")]
    Parse(String),
}

/// The assertion `x _||_ y | conditioning`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IndependenceClaim {
    pub x: String,
    pub y: String,
    pub conditioning: VarSet,
}

impl IndependenceClaim {
    /// Builds a canonical claim.
    pub fn new<I, S>(x: &str, y: &str, conditioning: I) -> Result<Self, ClaimError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        claim_canonicalize(IndependenceClaim {
            x: x.to_string(),
            y: y.to_string(),
            conditioning: conditioning.into_iter().map(|s| s.as_ref().to_string()).collect(),
        })
    }

    pub fn is_unconditional(&self) -> bool {
        self.conditioning.is_empty()
    }

    /// All variables mentioned by the claim.
    pub fn variables(&self) -> impl Iterator<Item = &str> {
        [self.x.as_str(), self.y.as_str()]
            .into_iter()
            .chain(self.conditioning.iter().map(String::as_str))
    }
}

/// Orders the endpoints; the conditioning set is already sorted by construction.
pub fn claim_canonicalize(claim: IndependenceClaim) -> Result<IndependenceClaim, ClaimError> {
    if claim.x == claim.y {
        return Err(ClaimError::SameEndpoint(claim.x));
    }
    for e in [&claim.x, &claim.y] {
        if claim.conditioning.contains(e) {
            return Err(ClaimError::EndpointConditioned(e.clone()));
        }
    }
    let IndependenceClaim { x, y, conditioning } = claim;
    let (x, y) = if x <= y { (x, y) } else { (y, x) };
    Ok(IndependenceClaim { x, y, conditioning })
}

impl fmt::Display for IndependenceClaim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} _||_ {}", self.x, self.y)?;
        if !self.conditioning.is_empty() {
            let z: Vec<&str> = self.conditioning.iter().map(String::as_str).collect();
            write!(f, " | {}", z.join(", "))?;
        }
        Ok(())
    }
}

/// Parses `X _||_ Y` or `X _||_ Y | Z1, Z2` and canonicalizes.
impl FromStr for IndependenceClaim {
    type Err = ClaimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ClaimError::Parse(s.to_string());
        let (x, rest) = s.split_once("_||_").ok_or_else(err)?;
        let (pair, cond) = match rest.split_once('|') {
            Some((y, z)) => ((x, y), Some(z)),
            None => ((x, rest), None),
        };
        let (x, y) = (pair.0.trim(), pair.1.trim());
        if !crate::graph::valid_name(x) || !crate::graph::valid_name(y) {
            return Err(err());
        }
        let mut z = Vec::new();
        if let Some(cond) = cond {
            for part in cond.split(',') {
                let part = part.trim();
                if !crate::graph::valid_name(part) {
                    return Err(err());
                }
                z.push(part);
            }
        }
        IndependenceClaim::new(x, y, z)
    }
}

/// An observed pair that only latent variables can separate.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OmittedPair {
    pub x: String,
    pub y: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HypothesisSet {
    pub dag_fingerprint: String,
    pub claims: Vec<IndependenceClaim>,
    #[serde(default)]
    pub omitted_pairs: Vec<OmittedPair>,
}

impl HypothesisSet {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("hypothesis set serializes")
    }

    pub fn len(&self) -> usize {
        self.claims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.claims.is_empty()
    }
}

/// For every non-adjacent observed pair, every inclusion-minimal separator over
/// observed variables, as one claim each.
pub fn implied_independencies(dag: &CausalDag) -> Result<HypothesisSet, DsepError> {
    let observed = dag.observed();
    let everything: VarSet = dag.names().map(str::to_string).collect();
    let names: Vec<&String> = observed.iter().collect();
    let mut claims = Vec::new();
    let mut omitted = Vec::new();
    for (i, x) in names.iter().enumerate() {
        for y in &names[i + 1..] {
            if dag.adjacent(x, y) {
                continue;
            }
            let seps = all_minimal_separators(dag, x, y, &observed)?;
            if seps.is_empty() {
                let mut rest = everything.clone();
                rest.remove(*x);
                rest.remove(*y);
                if d_separated(dag, x, y, &rest)? {
                    omitted.push(OmittedPair {
                        x: x.to_string(),
                        y: y.to_string(),
                    });
                }
            }
            for z in seps {
                claims.push(IndependenceClaim {
                    x: x.to_string(),
                    y: y.to_string(),
                    conditioning: z,
                });
            }
        }
    }
    claims.sort();
    claims.dedup();
    Ok(HypothesisSet {
        dag_fingerprint: dag.fingerprint(),
        claims,
        omitted_pairs: omitted,
    })
}

/// True if `claim` is among the implications of `dag`.
pub fn is_implied(dag: &CausalDag, claim: &IndependenceClaim) -> Result<bool, DsepError> {
    Ok(implied_independencies(dag)?.claims.contains(claim))
}
