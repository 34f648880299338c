//! Certificate files.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Certificate, Moves, Solution, Strategy};
use crate::game::{cur, GameSpec, Owner};
use crate::poly::{parse_rational, q_to_string, Monomial, Polynomial, Var};

/// Polynomial as monomial text to rational text.
pub type PolyMap = BTreeMap<String, String>;

/// On-disk certificate and strategy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateFile {
    /// `CERTIFIED` or `UNKNOWN`.
    pub status: String,
    /// Template degree.
    pub degree: u32,
    /// Ranking polynomial per label.
    #[serde(default)]
    pub certificate: BTreeMap<String, PolyMap>,
    /// Strategy polynomial per REACH label and variable.
    #[serde(default)]
    pub strategy: BTreeMap<String, BTreeMap<String, PolyMap>>,
    /// Model values were approximations.
    #[serde(default)]
    pub approximate: bool,
    /// Free-form statistics.
    #[serde(default)]
    pub stats: serde_json::Value,
}

/// Certificate file problem.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum JsonError {
    /// Black-box certificates cannot be written.
    #[error("only polynomial certificates and strategies can be serialized")]
    NotPolynomial,
    /// Unknown label.
    #[error("unknown label `{0}`")]
    Label(String),
    /// Unknown variable.
    #[error("unknown variable `{0}`")]
    Variable(String),
    /// Malformed monomial or coefficient.
    #[error("cannot parse `{0}`")]
    Parse(String),
}

fn poly_to_map(g: &GameSpec, p: &Polynomial) -> PolyMap {
    let names = g.namer();
    p.terms().map(|(m, c)| (m.render(&names), q_to_string(c))).collect()
}

fn poly_from_map(g: &GameSpec, m: &PolyMap) -> Result<Polynomial, JsonError> {
    let lookup = |name: &str| -> Option<Var> { g.slot_id(name).map(cur) };
    let mut terms = Vec::new();
    for (mono, coeff) in m {
        let mon = Monomial::parse(mono, &lookup).map_err(|_| JsonError::Parse(mono.clone()))?;
        let c = parse_rational(coeff).ok_or_else(|| JsonError::Parse(coeff.clone()))?;
        terms.push((mon, c));
    }
    Ok(Polynomial::from_terms(terms))
}

/// Serializes a polynomial solution.
pub fn certificate_to_json(g: &GameSpec, sol: &Solution, status: &str, degree: u32, stats: serde_json::Value) -> Result<CertificateFile, JsonError> {
    let Certificate::Poly(fs) = &sol.certificate else { return Err(JsonError::NotPolynomial) };
    let Moves::Poly(moves) = &sol.strategy.moves else { return Err(JsonError::NotPolynomial) };
    let certificate = fs.iter().enumerate().map(|(l, p)| (g.labels[l].name.clone(), poly_to_map(g, p))).collect();
    let strategy = moves
        .iter()
        .map(|(&l, per)| (g.labels[l].name.clone(), per.iter().map(|(&s, p)| (g.var_names[s].clone(), poly_to_map(g, p))).collect()))
        .collect();
    Ok(CertificateFile { status: status.to_string(), degree, certificate, strategy, approximate: sol.approximate, stats })
}

/// Reads a solution for `g`. Labels absent from the file get the zero
/// polynomial; REACH labels absent from the strategy keep their values.
pub fn certificate_from_json(g: &GameSpec, file: &CertificateFile) -> Result<Solution, JsonError> {
    let mut fs = vec![Polynomial::zero(); g.labels.len()];
    for (name, m) in &file.certificate {
        let l = g.label_id(name).ok_or_else(|| JsonError::Label(name.clone()))?;
        fs[l] = poly_from_map(g, m)?;
    }
    let mut moves = BTreeMap::new();
    for (name, per) in &file.strategy {
        let l = g.label_id(name).ok_or_else(|| JsonError::Label(name.clone()))?;
        let mut m = BTreeMap::new();
        for (var, p) in per {
            let s = g.slot_id(var).ok_or_else(|| JsonError::Variable(var.clone()))?;
            m.insert(s, poly_from_map(g, p)?);
        }
        moves.insert(l, m);
    }
    for l in 0..g.labels.len() {
        if g.owner(l) == Owner::Reach {
            moves.entry(l).or_default();
        }
    }
    Ok(Solution { certificate: Certificate::Poly(fs), strategy: Strategy::new(Moves::Poly(moves)), approximate: file.approximate })
}
