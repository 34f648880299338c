//! Successor and state sampling.
//!
//! A conjunction of atoms is prepared by fixing known variables, solving
//! linear equalities by elimination and bounding the remaining free
//! variables by interval propagation. Points are drawn on a dyadic grid
//! inside the bounds, with a bias towards box vertices, prefiltered in
//! floating point and accepted only after an exact check.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use rand::Rng;
use thiserror::Error;

use super::pred::{Atom, Pred, PredError, Rel, DEFAULT_DNF_CAP};
use super::{cur, kind_of, primed, slot_of, GameSpec};
use crate::poly::{q, q_from_f64, q_to_f64, Monomial, Polynomial, Q, Var};

/// Sampling failure.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SampleError {
    /// No accepted point within the attempt budget. Says nothing about
    /// whether a point exists.
    #[error("sampling exhausted after {attempts} attempts")]
    Exhausted {
        /// Attempts made.
        attempts: usize,
    },
    /// The region is provably empty.
    #[error("no point exists")]
    Empty,
    /// Predicate manipulation failed.
    #[error(transparent)]
    Pred(#[from] PredError),
}

/// Sampler parameters.
#[derive(Clone, Debug)]
pub struct SamplerConfig {
    /// Half-width of the fallback box for variables without inferred bounds.
    pub fallback_radius: Q,
    /// Grid resolution: points are multiples of `2^-grid_bits` of the box width.
    pub grid_bits: u32,
    /// Attempts per sampling request.
    pub budget: usize,
    /// Probability of drawing a box vertex instead of a grid point.
    pub vertex_bias: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { fallback_radius: q(100), grid_bits: 12, budget: 2000, vertex_bias: 0.25 }
    }
}

/// Interval per slot inferred from the domain; `None` marks an unbounded side.
pub fn box_of(g: &GameSpec) -> Vec<(Option<Q>, Option<Q>)> {
    let n = g.var_names.len();
    let vars: Vec<Var> = (0..n).map(cur).collect();
    let cubes = match g.domain.dnf(DEFAULT_DNF_CAP) {
        Ok(c) => c,
        Err(_) => return vec![(None, None); n],
    };
    let mut hull: Option<Vec<(Option<Q>, Option<Q>)>> = None;
    for cube in cubes {
        let mut bounds: BTreeMap<Var, (Option<Q>, Option<Q>)> = vars.iter().map(|&v| (v, (None, None))).collect();
        if !propagate(&cube, &mut bounds) {
            continue;
        }
        let b: Vec<(Option<Q>, Option<Q>)> = vars.iter().map(|v| bounds[v].clone()).collect();
        hull = Some(match hull {
            None => b,
            Some(h) => h
                .into_iter()
                .zip(b)
                .map(|((l1, h1), (l2, h2))| {
                    let lo = match (l1, l2) {
                        (Some(a), Some(b)) => Some(if a < b { a } else { b }),
                        _ => None,
                    };
                    let hi = match (h1, h2) {
                        (Some(a), Some(b)) => Some(if a > b { a } else { b }),
                        _ => None,
                    };
                    (lo, hi)
                })
                .collect(),
        });
    }
    hull.unwrap_or_else(|| vec![(None, None); n])
}

/// Linear part of a polynomial as (coefficients, constant), or `None` if
/// nonlinear.
fn linear_parts(p: &Polynomial) -> Option<(BTreeMap<Var, Q>, Q)> {
    let mut coeffs = BTreeMap::new();
    let mut c = Q::zero();
    for (m, v) in p.terms() {
        match m.degree() {
            0 => c = v.clone(),
            1 => {
                coeffs.insert(m.exponents()[0].0, v.clone());
            }
            _ => return None,
        }
    }
    Some((coeffs, c))
}

type Bounds = BTreeMap<Var, (Option<Q>, Option<Q>)>;

fn tighten_lo(b: &mut (Option<Q>, Option<Q>), v: Q) -> bool {
    match &b.0 {
        Some(old) if *old >= v => false,
        _ => {
            b.0 = Some(v);
            true
        }
    }
}

fn tighten_hi(b: &mut (Option<Q>, Option<Q>), v: Q) -> bool {
    match &b.1 {
        Some(old) if *old <= v => false,
        _ => {
            b.1 = Some(v);
            true
        }
    }
}

/// Interval propagation over the atoms. Only variables present in `bounds`
/// are tightened; other variables make an atom unusable. Returns `false`
/// when the bounds become empty.
fn propagate(atoms: &[Atom], bounds: &mut Bounds) -> bool {
    for _round in 0..8 {
        let mut changed = false;
        for a in atoms {
            let polys: Vec<Polynomial> = match a.rel {
                Rel::Eq => vec![a.lhs.clone(), a.lhs.neg()],
                _ => vec![a.lhs.clone()],
            };
            for p in polys {
                if p.vars().iter().any(|v| !bounds.contains_key(v)) {
                    continue;
                }
                if let Some((coeffs, c)) = linear_parts(&p) {
                    changed |= propagate_linear(&coeffs, &c, bounds);
                } else {
                    changed |= propagate_separable_quadratic(&p, bounds);
                }
            }
        }
        for (lo, hi) in bounds.values() {
            if let (Some(l), Some(h)) = (lo, hi) {
                if l > h {
                    return false;
                }
            }
        }
        if !changed {
            break;
        }
    }
    true
}

/// `Σ a_i x_i + c ≥ 0`.
fn propagate_linear(coeffs: &BTreeMap<Var, Q>, c: &Q, bounds: &mut Bounds) -> bool {
    let mut changed = false;
    for (&v, a) in coeffs {
        let mut rest_max = c.clone();
        let mut ok = true;
        for (&w, b) in coeffs {
            if w == v {
                continue;
            }
            let (lo, hi) = &bounds[&w];
            let side = if b.is_positive() { hi } else { lo };
            match side {
                Some(x) => rest_max += b * x,
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            continue;
        }
        let bound = -rest_max / a;
        let entry = bounds.get_mut(&v).unwrap();
        changed |= if a.is_positive() { tighten_lo(entry, bound) } else { tighten_hi(entry, bound) };
    }
    changed
}

/// `c + Σ_i (β_i x_i − α_i x_i²) ≥ 0` with every `α_i ≥ 0`.
fn propagate_separable_quadratic(p: &Polynomial, bounds: &mut Bounds) -> bool {
    let mut alpha: BTreeMap<Var, f64> = BTreeMap::new();
    let mut beta: BTreeMap<Var, f64> = BTreeMap::new();
    let mut c = 0.0;
    for (m, v) in p.terms() {
        let v = q_to_f64(v);
        match m.exponents() {
            [] => c = v,
            [(x, 1)] => {
                beta.insert(*x, v);
            }
            [(x, 2)] => {
                if v > 0.0 {
                    return false;
                }
                alpha.insert(*x, -v);
            }
            _ => return false,
        }
    }
    if alpha.is_empty() {
        return false;
    }
    let vars: Vec<Var> = alpha.keys().chain(beta.keys()).copied().collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    let max_term = |x: Var, bounds: &Bounds| -> Option<f64> {
        let a = alpha.get(&x).copied().unwrap_or(0.0);
        let b = beta.get(&x).copied().unwrap_or(0.0);
        if a > 0.0 {
            Some(b * b / (4.0 * a))
        } else {
            let (lo, hi) = &bounds[&x];
            let side = if b > 0.0 { hi } else { lo };
            side.as_ref().map(|s| b * q_to_f64(s))
        }
    };
    let mut changed = false;
    for &x in &vars {
        let a = alpha.get(&x).copied().unwrap_or(0.0);
        if a <= 0.0 {
            continue;
        }
        let mut r = c;
        let mut ok = true;
        for &w in &vars {
            if w != x {
                match max_term(w, bounds) {
                    Some(t) => r += t,
                    None => ok = false,
                }
            }
        }
        if !ok {
            continue;
        }
        let b = beta.get(&x).copied().unwrap_or(0.0);
        let disc = b * b + 4.0 * a * r;
        if disc < 0.0 {
            continue;
        }
        let s = disc.sqrt();
        let widen = 1e-9 * (1.0 + s.abs() + b.abs());
        let lo = (b - s) / (2.0 * a) - widen;
        let hi = (b + s) / (2.0 * a) + widen;
        let entry = bounds.get_mut(&x).unwrap();
        if let Some(l) = q_from_f64(lo) {
            changed |= tighten_lo(entry, l);
        }
        if let Some(h) = q_from_f64(hi) {
            changed |= tighten_hi(entry, h);
        }
    }
    changed
}

/// A conjunction prepared for sampling.
#[derive(Clone, Debug)]
struct Prepared {
    determined: Vec<(Var, Polynomial)>,
    free: Vec<(Var, Q, Q)>,
    residual: Vec<Atom>,
}

fn prepare(atoms: &[Atom], unknowns: &[Var], fixed: &BTreeMap<Var, Q>, base: &Bounds, radius: &Q) -> Option<Prepared> {
    let mut residual: Vec<Atom> = atoms
        .iter()
        .map(|a| Atom { lhs: a.lhs.partial_eval(fixed), rel: a.rel })
        .collect();
    let mut determined: Vec<(Var, Polynomial)> = Vec::new();
    loop {
        let mut pivot = None;
        for (i, a) in residual.iter().enumerate() {
            if a.rel != Rel::Eq {
                continue;
            }
            if let Some((coeffs, _)) = linear_parts(&a.lhs) {
                if let Some((&v, _)) = coeffs.iter().rev().find(|(v, _)| unknowns.contains(v)) {
                    pivot = Some((i, v));
                    break;
                }
            }
        }
        let Some((i, v)) = pivot else { break };
        let atom = residual.remove(i);
        let m = Monomial::var(v);
        let c = atom.lhs.coeff(&m);
        let value = atom.lhs.sub(&Polynomial::term(m, c.clone())).scale(&(-(Q::one() / c)));
        let subst: BTreeMap<Var, Polynomial> = [(v, value.clone())].into_iter().collect();
        for a in residual.iter_mut() {
            a.lhs = a.lhs.substitute(&subst);
        }
        for (_, e) in determined.iter_mut() {
            *e = e.substitute(&subst);
        }
        determined.push((v, value));
    }
    for a in &residual {
        if a.constant_truth() == Some(false) {
            return None;
        }
    }
    residual.retain(|a| a.constant_truth().is_none());
    let free_vars: Vec<Var> = unknowns.iter().copied().filter(|v| !determined.iter().any(|(d, _)| d == v)).collect();
    let mut bounds: Bounds = free_vars.iter().map(|&v| (v, base.get(&v).cloned().unwrap_or((None, None)))).collect();
    if !propagate(&residual, &mut bounds) {
        return None;
    }
    let free = free_vars
        .iter()
        .map(|v| {
            let (lo, hi) = bounds[v].clone();
            let (lo, hi) = match (lo, hi) {
                (Some(l), Some(h)) => (l, h),
                (Some(l), None) => (l.clone(), l.clone().max(Q::zero()) + radius),
                (None, Some(h)) => (h.clone().min(Q::zero()) - radius, h),
                (None, None) => (-radius.clone(), radius.clone()),
            };
            (*v, lo, hi)
        })
        .collect();
    Some(Prepared { determined, free, residual })
}

impl Prepared {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R, grid_bits: u32, vertex_bias: f64) -> BTreeMap<Var, Q> {
        let denom = BigInt::one() << grid_bits;
        let mut out = BTreeMap::new();
        let vertex = rng.random_bool(vertex_bias.clamp(0.0, 1.0));
        for (v, lo, hi) in &self.free {
            let value = if vertex {
                if rng.random_bool(0.5) {
                    lo.clone()
                } else {
                    hi.clone()
                }
            } else {
                let k: u64 = rng.random_range(0..=(1u64 << grid_bits));
                lo + (hi - lo) * Q::new(BigInt::from(k), denom.clone())
            };
            out.insert(*v, value);
        }
        self.complete(out)
    }

    fn vertex(&self, mask: u64) -> BTreeMap<Var, Q> {
        let out = self
            .free
            .iter()
            .enumerate()
            .map(|(i, (v, lo, hi))| (*v, if mask >> i & 1 == 1 { hi.clone() } else { lo.clone() }))
            .collect();
        self.complete(out)
    }

    fn axis(&self, i: usize, t: &Q) -> BTreeMap<Var, Q> {
        let out = self
            .free
            .iter()
            .enumerate()
            .map(|(j, (v, lo, hi))| (*v, if j == i { lo + (hi - lo) * t } else { lo.clone() }))
            .collect();
        self.complete(out)
    }

    fn complete(&self, mut out: BTreeMap<Var, Q>) -> BTreeMap<Var, Q> {
        for (v, e) in &self.determined {
            let value = e.eval_map(&out).unwrap_or_else(|_| Q::zero());
            out.insert(*v, value);
        }
        out
    }

    fn prefilter(&self, point: &BTreeMap<Var, Q>) -> bool {
        let f: BTreeMap<Var, f64> = point.iter().map(|(k, v)| (*k, q_to_f64(v))).collect();
        let lookup = |v: Var| f.get(&v).copied().unwrap_or(0.0);
        self.residual.iter().all(|a| a.rel.holds_f64(a.lhs.eval_f64(&lookup), 1e-9))
    }
}

/// Bisection steps for the farthest move along one axis.
const AXIS_STEPS: usize = 24;

/// Sampler over one game.
pub struct Sampler<'g> {
    g: &'g GameSpec,
    cfg: SamplerConfig,
    domain_box: Vec<(Option<Q>, Option<Q>)>,
}

impl<'g> Sampler<'g> {
    /// Builds a sampler, inferring the domain box.
    pub fn new(g: &'g GameSpec, cfg: SamplerConfig) -> Self {
        let domain_box = box_of(g);
        Self { g, cfg, domain_box }
    }

    /// Configuration in use.
    pub fn config(&self) -> &SamplerConfig {
        &self.cfg
    }

    /// Domain box per slot.
    pub fn domain_box(&self) -> &[(Option<Q>, Option<Q>)] {
        &self.domain_box
    }

    fn base_bounds(&self, to_var: impl Fn(usize) -> Var) -> Bounds {
        self.domain_box.iter().enumerate().map(|(s, b)| (to_var(s), b.clone())).collect()
    }

    fn domain_atoms_primed(&self) -> Vec<Atom> {
        match &self.g.domain {
            Pred::True => vec![],
            d => match d.dnf(2) {
                Ok(cubes) if cubes.len() == 1 => {
                    cubes[0].iter().map(|a| Atom { lhs: self.g.cur_to_primed(&a.lhs), rel: a.rel }).collect()
                }
                _ => vec![],
            },
        }
    }

    fn prepared_moves(&self, t: usize, x: &[Q]) -> Result<Vec<Prepared>, SampleError> {
        let g = self.g;
        let cubes = g.transitions[t].update.dnf(DEFAULT_DNF_CAP)?;
        let fixed: BTreeMap<Var, Q> = g.state_vars.iter().map(|&s| (cur(s), x[s].clone())).collect();
        let unknowns: Vec<Var> = g.state_vars.iter().map(|&s| primed(s)).collect();
        let base = self.base_bounds(primed);
        let dom = self.domain_atoms_primed();
        Ok(cubes
            .iter()
            .filter_map(|cube| {
                let mut atoms = cube.clone();
                atoms.extend(dom.iter().cloned());
                prepare(&atoms, &unknowns, &fixed, &base, &self.cfg.fallback_radius)
            })
            .collect())
    }

    fn to_valuation(&self, x: &[Q], point: &BTreeMap<Var, Q>, kind: u32) -> Vec<Q> {
        let mut y = x.to_vec();
        for (v, val) in point {
            if kind_of(*v) == kind {
                y[slot_of(*v)] = val.clone();
            }
        }
        y
    }

    /// All successors under transition `t` from `x` when every update
    /// disjunct determines the successor, `None` otherwise.
    pub fn enumerate(&self, t: usize, x: &[Q]) -> Result<Option<Vec<Vec<Q>>>, SampleError> {
        let moves = self.prepared_moves(t, x)?;
        if moves.iter().any(|p| !p.free.is_empty()) {
            return Ok(None);
        }
        let mut out: Vec<Vec<Q>> = Vec::new();
        for p in &moves {
            let y = self.to_valuation(x, &p.complete(BTreeMap::new()), 1);
            if self.g.is_move(t, x, &y)? && !out.contains(&y) {
                out.push(y);
            }
        }
        Ok(Some(out))
    }

    /// One successor under transition `t` from `x`.
    pub fn sample_successor<R: Rng + ?Sized>(&self, t: usize, x: &[Q], rng: &mut R) -> Result<Vec<Q>, SampleError> {
        let moves = self.prepared_moves(t, x)?;
        if moves.is_empty() {
            return Err(SampleError::Empty);
        }
        for _ in 0..self.cfg.budget {
            let p = &moves[rng.random_range(0..moves.len())];
            let point = p.draw(rng, self.cfg.grid_bits, self.cfg.vertex_bias);
            if !p.prefilter(&point) {
                continue;
            }
            let y = self.to_valuation(x, &point, 1);
            if self.g.is_move(t, x, &y)? {
                return Ok(y);
            }
        }
        Err(SampleError::Exhausted { attempts: self.cfg.budget })
    }

    /// Candidate successors: the box vertices of every update disjunct, the
    /// farthest move along each free axis from the lower vertex, then up to
    /// `n` random samples. Only exact moves are returned.
    pub fn candidates<R: Rng + ?Sized>(&self, t: usize, x: &[Q], n: usize, rng: &mut R) -> Result<Vec<Vec<Q>>, SampleError> {
        let moves = self.prepared_moves(t, x)?;
        let mut out: Vec<Vec<Q>> = Vec::new();
        let push = |y: Vec<Q>, out: &mut Vec<Vec<Q>>| -> Result<(), SampleError> {
            if !out.contains(&y) && self.g.is_move(t, x, &y)? {
                out.push(y);
            }
            Ok(())
        };
        for p in &moves {
            let k = p.free.len().min(6);
            for mask in 0..(1u64 << k) {
                let point = p.vertex(mask);
                if p.prefilter(&point) {
                    push(self.to_valuation(x, &point, 1), &mut out)?;
                }
            }
            if !self.g.is_move(t, x, &self.to_valuation(x, &p.axis(0, &Q::zero()), 1))? {
                continue;
            }
            for i in 0..p.free.len() {
                let (mut lo, mut hi) = (Q::zero(), Q::one());
                if self.g.is_move(t, x, &self.to_valuation(x, &p.axis(i, &hi), 1))? {
                    continue;
                }
                for _ in 0..AXIS_STEPS {
                    let mid = (&lo + &hi) / Q::from_integer(2.into());
                    if self.g.is_move(t, x, &self.to_valuation(x, &p.axis(i, &mid), 1))? {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                if !lo.is_zero() {
                    push(self.to_valuation(x, &p.axis(i, &lo), 1), &mut out)?;
                }
            }
        }
        if moves.is_empty() {
            return Ok(out);
        }
        let mut accepted = 0;
        for _ in 0..self.cfg.budget {
            if accepted >= n {
                break;
            }
            let p = &moves[rng.random_range(0..moves.len())];
            let point = p.draw(rng, self.cfg.grid_bits, self.cfg.vertex_bias);
            if !p.prefilter(&point) {
                continue;
            }
            let before = out.len();
            push(self.to_valuation(x, &point, 1), &mut out)?;
            if out.len() > before {
                accepted += 1;
            }
        }
        Ok(out)
    }

    /// A valuation in `pred ∧ domain`.
    pub fn sample_in<R: Rng + ?Sized>(&self, pred: &Pred, rng: &mut R) -> Result<Vec<Q>, SampleError> {
        let g = self.g;
        let full = Pred::And(vec![pred.clone(), g.domain.clone()]);
        let cubes = full.dnf(DEFAULT_DNF_CAP)?;
        let unknowns: Vec<Var> = g.state_vars.iter().map(|&s| cur(s)).collect();
        let base = self.base_bounds(cur);
        let prepared: Vec<Prepared> =
            cubes.iter().filter_map(|c| prepare(c, &unknowns, &BTreeMap::new(), &base, &self.cfg.fallback_radius)).collect();
        if prepared.is_empty() {
            return Err(SampleError::Empty);
        }
        let zero = vec![Q::zero(); g.var_names.len()];
        for _ in 0..self.cfg.budget {
            let p = &prepared[rng.random_range(0..prepared.len())];
            let point = p.draw(rng, self.cfg.grid_bits, self.cfg.vertex_bias);
            if !p.prefilter(&point) {
                continue;
            }
            let x = self.to_valuation(&zero, &point, 0);
            if full.eval(&g.point(&x))? {
                return Ok(x);
            }
        }
        Err(SampleError::Exhausted { attempts: self.cfg.budget })
    }
}

#[cfg(test)]
fn approx(v: &Q) -> f64 {
    num_traits::ToPrimitive::to_f64(v).unwrap_or(f64::NAN)
}
