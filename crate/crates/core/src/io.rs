//! Chain files and number formatting.
//!
//! A chain file is a JSON document
//!
//! ```json
//! {"states": ["a", "b"], "edges": [{"from": "a", "to": "b", "p": 0.2}], "mu": [0.6, 0.4], "R": ["a"]}
//! ```
//!
//! where `mu` and `R` are optional and probability mass missing from a row
//! becomes a self-loop.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chain::ReversibleChain;
use crate::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub from: String,
    pub to: String,
    pub p: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChainFile {
    pub states: Vec<String>,
    pub edges: Vec<EdgeRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<f64>>,
    #[serde(rename = "R", default, skip_serializing_if = "Option::is_none")]
    pub r: Option<Vec<String>>,
}

impl ChainFile {
    pub fn from_chain(chain: &ReversibleChain, r: Option<&[usize]>) -> ChainFile {
        let states = chain.states().to_vec();
        let kernel = chain.kernel();
        let mut edges = Vec::with_capacity(kernel.nnz());
        for (x, row) in kernel.outer_iterator().enumerate() {
            for (y, &p) in row.iter() {
                if x != y && p != 0.0 {
                    edges.push(EdgeRecord {
                        from: states[x].clone(),
                        to: states[y].clone(),
                        p,
                    });
                }
            }
        }
        ChainFile {
            states,
            edges,
            mu: Some(chain.mu().to_vec()),
            r: r.map(|set| set.iter().map(|&x| chain.states()[x].clone()).collect()),
        }
    }

    /// Builds the chain and resolves the optional `R` list to indices.
    pub fn into_chain(self) -> Result<(ReversibleChain, Option<Vec<usize>>)> {
        let index: HashMap<&str, usize> = self
            .states
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        let lookup = |id: &str| {
            index
                .get(id)
                .copied()
                .ok_or_else(|| Error::UnknownState(id.to_string()))
        };
        let edges = self
            .edges
            .iter()
            .map(|e| Ok((lookup(&e.from)?, lookup(&e.to)?, e.p)))
            .collect::<Result<Vec<_>>>()?;
        let chain = ReversibleChain::from_edges(self.states, &edges, self.mu)?;
        let r = match self.r {
            Some(ids) => Some(chain.indices_of(&ids)?),
            None => None,
        };
        Ok((chain, r))
    }
}

pub fn parse_chain(text: &str) -> Result<(ReversibleChain, Option<Vec<usize>>)> {
    let file: ChainFile = serde_json::from_str(text)?;
    file.into_chain()
}

pub fn read_chain(path: impl AsRef<Path>) -> Result<(ReversibleChain, Option<Vec<usize>>)> {
    parse_chain(&fs::read_to_string(path)?)
}

pub fn chain_to_json(chain: &ReversibleChain, r: Option<&[usize]>) -> Result<String> {
    Ok(serde_json::to_string_pretty(&ChainFile::from_chain(
        chain, r,
    ))?)
}

pub fn write_chain(
    path: impl AsRef<Path>,
    chain: &ReversibleChain,
    r: Option<&[usize]>,
) -> Result<()> {
    fs::write(path, chain_to_json(chain, r)?)?;
    Ok(())
}

/// Formats with 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else if v == 0.0 {
        "0".into()
    } else {
        format!("{v:.16e}")
    }
}
