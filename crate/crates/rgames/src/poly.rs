//! Exact multivariate polynomial arithmetic over the rationals.
//!
//! A [`Poly`] is generic over its coefficient ring. Three instantiations are
//! used throughout the crate:
//!
//! - [`Polynomial`]: rational coefficients, variables are game variables.
//! - [`UnknownPoly`]: rational coefficients, variables are template unknowns.
//! - [`TemplatePolynomial`]: coefficients are [`UnknownPoly`] values, variables
//!   are game variables.
//!
//! Monomials are ordered graded-lexicographically with respect to variable
//! indices, so a variable declared earlier dominates one declared later.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

/// Exact rational number.
pub type Q = BigRational;

/// Variable index. The meaning of an index is fixed by the owning context
/// (game variables, primed copies, or template unknowns).
pub type Var = u32;

/// Errors raised by polynomial operations.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PolyError {
    /// Evaluation point does not assign a variable of the polynomial.
    #[error("no value assigned to variable `{0}`")]
    MissingVariable(String),
    /// Substitution map does not cover a variable of the polynomial.
    #[error("substitution does not map variable `{0}`")]
    UnmappedVariable(String),
    /// Malformed textual polynomial or rational.
    #[error("cannot parse `{0}`")]
    Parse(String),
}

/// Integer constant as a rational.
pub fn q(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

/// Rational constant `n/d`. Panics when `d == 0`.
pub fn qf(n: i64, d: i64) -> Q {
    Q::new(BigInt::from(n), BigInt::from(d))
}

/// Renders a rational as an integer literal or `p/q`.
pub fn q_to_string(v: &Q) -> String {
    if v.is_integer() {
        v.numer().to_string()
    } else {
        format!("{}/{}", v.numer(), v.denom())
    }
}

/// Parses an integer, a decimal (`1.5`, `-0.25`, `1e-6`) or a fraction `p/q`
/// into an exact rational.
pub fn parse_rational(text: &str) -> Option<Q> {
    let t = text.trim();
    if t.is_empty() {
        return None;
    }
    if let Some((n, d)) = t.split_once('/') {
        let n = parse_rational(n)?;
        let d = parse_rational(d)?;
        if num_traits::Zero::is_zero(&d) {
            return None;
        }
        return Some(n / d);
    }
    let (neg, body) = match t.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, t.strip_prefix('+').unwrap_or(t)),
    };
    let (mantissa, exponent) = match body.find(['e', 'E']) {
        Some(pos) => (&body[..pos], body[pos + 1..].parse::<i32>().ok()?),
        None => (body, 0),
    };
    let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().all(|c| c.is_ascii_digit()) || !frac_part.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let mut value = Q::from_integer(digits.parse::<BigInt>().ok()?);
    let scale = exponent - frac_part.len() as i32;
    let ten = BigInt::from(10);
    if scale >= 0 {
        value *= Q::from_integer(num_traits::pow(ten, scale as usize));
    } else {
        value /= Q::from_integer(num_traits::pow(ten, (-scale) as usize));
    }
    Some(if neg { -value } else { value })
}

/// Converts an `f64` to the exact binary rational it denotes.
pub fn q_from_f64(v: f64) -> Option<Q> {
    Q::from_float(v)
}

/// Lossy conversion of a rational to `f64`.
pub fn q_to_f64(v: &Q) -> f64 {
    match (v.numer().to_f64(), v.denom().to_f64()) {
        (Some(n), Some(d)) if n.is_finite() && d.is_finite() => n / d,
        _ => {
            let scale = v.denom().bits().max(v.numer().bits()) as i64 - 60;
            let shift = scale.max(0) as usize;
            let n = (v.numer() >> shift).to_f64().unwrap_or(0.0);
            let d = (v.denom() >> shift).to_f64().unwrap_or(1.0);
            if d == 0.0 {
                if v.is_negative() { f64::NEG_INFINITY } else { f64::INFINITY }
            } else {
                n / d
            }
        }
    }
}

/// Smallest integer not below `v`.
pub fn q_ceil(v: &Q) -> BigInt {
    v.ceil().to_integer()
}

/// Largest integer not above `v`.
pub fn q_floor(v: &Q) -> BigInt {
    v.floor().to_integer()
}

/// Best rational approximation of `v` with denominator at most `max_den`,
/// computed from the continued-fraction expansion (convergents and the best
/// semiconvergent).
pub fn cf_round(v: &Q, max_den: &BigInt) -> Q {
    if v.denom() <= max_den {
        return v.clone();
    }
    let (mut p0, mut q0, mut p1, mut q1) = (BigInt::zero(), BigInt::one(), BigInt::one(), BigInt::zero());
    let mut n = v.numer().clone();
    let mut d = v.denom().clone();
    loop {
        let (a, r) = n.div_mod_floor(&d);
        let q2 = &q0 + &a * &q1;
        if &q2 > max_den {
            let k = (max_den - &q0) / &q1;
            let semi = Q::new(&p0 + &k * &p1, &q0 + &k * &q1);
            let conv = Q::new(p1.clone(), q1.clone());
            let ds = (&semi - v).abs();
            let dc = (&conv - v).abs();
            return if ds < dc { semi } else { conv };
        }
        let p2 = &p0 + &a * &p1;
        p0 = std::mem::replace(&mut p1, p2);
        q0 = std::mem::replace(&mut q1, q2);
        if r.is_zero() {
            return Q::new(p1, q1);
        }
        n = std::mem::replace(&mut d, r);
    }
}

/// A power product of variables. Exponents are stored sorted by variable
/// index and are never zero.
#[derive(Clone, PartialEq, Eq, Hash, Debug, Default)]
pub struct Monomial {
    exps: Vec<(Var, u32)>,
}

impl Monomial {
    /// The constant monomial `1`.
    pub fn one() -> Self {
        Self::default()
    }

    /// The monomial consisting of a single variable.
    pub fn var(v: Var) -> Self {
        Self { exps: vec![(v, 1)] }
    }

    /// Builds a monomial from `(variable, exponent)` pairs in any order.
    /// Repeated variables are merged and zero exponents dropped.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (Var, u32)>) -> Self {
        let mut map: BTreeMap<Var, u32> = BTreeMap::new();
        for (v, e) in pairs {
            *map.entry(v).or_insert(0) += e;
        }
        Self { exps: map.into_iter().filter(|&(_, e)| e > 0).collect() }
    }

    /// `(variable, exponent)` pairs sorted by variable index.
    pub fn exponents(&self) -> &[(Var, u32)] {
        &self.exps
    }

    /// Exponent of `v` (zero when absent).
    pub fn exponent(&self, v: Var) -> u32 {
        self.exps.iter().find(|&&(w, _)| w == v).map_or(0, |&(_, e)| e)
    }

    /// Total degree.
    pub fn degree(&self) -> u32 {
        self.exps.iter().map(|&(_, e)| e).sum()
    }

    /// True for the constant monomial.
    pub fn is_one(&self) -> bool {
        self.exps.is_empty()
    }

    /// Variables with nonzero exponent.
    pub fn vars(&self) -> impl Iterator<Item = Var> + '_ {
        self.exps.iter().map(|&(v, _)| v)
    }

    /// Product of two monomials.
    pub fn mul(&self, other: &Monomial) -> Monomial {
        let mut out = Vec::with_capacity(self.exps.len() + other.exps.len());
        let (mut i, mut j) = (0, 0);
        while i < self.exps.len() && j < other.exps.len() {
            let (a, ea) = self.exps[i];
            let (b, eb) = other.exps[j];
            match a.cmp(&b) {
                Ordering::Less => {
                    out.push((a, ea));
                    i += 1;
                }
                Ordering::Greater => {
                    out.push((b, eb));
                    j += 1;
                }
                Ordering::Equal => {
                    out.push((a, ea + eb));
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&self.exps[i..]);
        out.extend_from_slice(&other.exps[j..]);
        Monomial { exps: out }
    }

    /// Renders the monomial with the given variable names, `1` for the
    /// constant monomial, `*` between factors and `^` for powers.
    pub fn render(&self, names: &dyn Fn(Var) -> String) -> String {
        if self.exps.is_empty() {
            return "1".to_string();
        }
        self.exps
            .iter()
            .map(|&(v, e)| if e == 1 { names(v) } else { format!("{}^{}", names(v), e) })
            .collect::<Vec<_>>()
            .join("*")
    }

    /// Parses the output of [`Monomial::render`].
    pub fn parse(text: &str, lookup: &dyn Fn(&str) -> Option<Var>) -> Result<Monomial, PolyError> {
        let t = text.trim();
        if t == "1" {
            return Ok(Monomial::one());
        }
        let mut pairs = Vec::new();
        for factor in t.split('*') {
            let (name, exp) = match factor.split_once('^') {
                Some((n, e)) => (n.trim(), e.trim().parse::<u32>().map_err(|_| PolyError::Parse(text.into()))?),
                None => (factor.trim(), 1),
            };
            let v = lookup(name).ok_or_else(|| PolyError::Parse(text.into()))?;
            pairs.push((v, exp));
        }
        Ok(Monomial::from_pairs(pairs))
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        let by_degree = self.degree().cmp(&other.degree());
        if by_degree != Ordering::Equal {
            return by_degree;
        }
        let (mut i, mut j) = (0, 0);
        loop {
            match (self.exps.get(i), other.exps.get(j)) {
                (None, None) => return Ordering::Equal,
                (Some(_), None) => return Ordering::Less,
                (None, Some(_)) => return Ordering::Greater,
                (Some(&(a, ea)), Some(&(b, eb))) => {
                    if a < b {
                        return Ordering::Less;
                    }
                    if a > b {
                        return Ordering::Greater;
                    }
                    if ea != eb {
                        return eb.cmp(&ea);
                    }
                    i += 1;
                    j += 1;
                }
            }
        }
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// All monomials over `vars` of total degree at most `d`, in graded
/// lexicographic order where earlier entries of `vars` dominate later ones.
/// The result has `C(|vars| + d, d)` elements. When `vars` is sorted by
/// index the output is also sorted by the [`Monomial`] ordering.
pub fn monomials_up_to(vars: &[Var], d: u32) -> Vec<Monomial> {
    let mut out = Vec::new();
    for total in 0..=d {
        let mut exps = vec![0u32; vars.len()];
        gen_exact(vars, total, 0, &mut exps, &mut out);
    }
    out
}

fn gen_exact(vars: &[Var], remaining: u32, pos: usize, exps: &mut Vec<u32>, out: &mut Vec<Monomial>) {
    if pos == vars.len() {
        if remaining == 0 {
            out.push(Monomial::from_pairs(vars.iter().copied().zip(exps.iter().copied())));
        }
        return;
    }
    if pos + 1 == vars.len() {
        exps[pos] = remaining;
        gen_exact(vars, 0, pos + 1, exps, out);
        exps[pos] = 0;
        return;
    }
    for e in (0..=remaining).rev() {
        exps[pos] = e;
        gen_exact(vars, remaining - e, pos + 1, exps, out);
    }
    exps[pos] = 0;
}

/// Binomial coefficient `C(n, k)`.
pub fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) / (i + 1))
}

/// Coefficient ring of a [`Poly`].
pub trait Coeff: Clone + PartialEq + fmt::Debug + Send + Sync {
    /// Additive identity.
    fn zero() -> Self;
    /// Embeds a rational constant.
    fn from_q(v: &Q) -> Self;
    /// True for the additive identity.
    fn is_zero(&self) -> bool;
    /// In-place addition.
    fn add_assign(&mut self, other: &Self);
    /// Ring product.
    fn mul(&self, other: &Self) -> Self;
    /// Product with a rational scalar.
    fn mul_q(&self, v: &Q) -> Self;
    /// Additive inverse.
    fn neg(&self) -> Self;
}

impl Coeff for Q {
    fn zero() -> Self {
        Zero::zero()
    }
    fn from_q(v: &Q) -> Self {
        v.clone()
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn add_assign(&mut self, other: &Self) {
        *self += other;
    }
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn mul_q(&self, v: &Q) -> Self {
        self * v
    }
    fn neg(&self) -> Self {
        -self
    }
}

/// Sparse multivariate polynomial with canonical representation: no zero
/// coefficients are stored, so structural equality is mathematical equality.
#[derive(Clone, PartialEq, Debug)]
pub struct Poly<C: Coeff> {
    terms: BTreeMap<Monomial, C>,
}

/// Polynomial in game variables with rational coefficients.
pub type Polynomial = Poly<Q>;
/// Polynomial in template unknowns with rational coefficients.
pub type UnknownPoly = Poly<Q>;
/// Polynomial in game variables whose coefficients are polynomials in
/// template unknowns.
pub type TemplatePolynomial = Poly<UnknownPoly>;

impl<C: Coeff> Default for Poly<C> {
    fn default() -> Self {
        Self { terms: BTreeMap::new() }
    }
}

impl<C: Coeff> Poly<C> {
    /// The zero polynomial.
    pub fn zero() -> Self {
        Self::default()
    }

    /// Constant polynomial.
    pub fn constant(c: C) -> Self {
        Self::term(Monomial::one(), c)
    }

    /// Constant polynomial from a rational.
    pub fn from_q(v: &Q) -> Self {
        Self::constant(C::from_q(v))
    }

    /// Single term `c * m`.
    pub fn term(m: Monomial, c: C) -> Self {
        let mut p = Self::zero();
        if !c.is_zero() {
            p.terms.insert(m, c);
        }
        p
    }

    /// The polynomial `v`.
    pub fn var(v: Var) -> Self {
        Self::term(Monomial::var(v), C::from_q(&Q::one()))
    }

    /// Builds a polynomial from terms, merging duplicates.
    pub fn from_terms(terms: impl IntoIterator<Item = (Monomial, C)>) -> Self {
        let mut p = Self::zero();
        for (m, c) in terms {
            p.add_term(m, &c);
        }
        p
    }

    /// Adds `c * m` in place.
    pub fn add_term(&mut self, m: Monomial, c: &C) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(m) {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(c.clone());
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                e.get_mut().add_assign(c);
                if e.get().is_zero() {
                    e.remove();
                }
            }
        }
    }

    /// Terms in monomial order.
    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &C)> {
        self.terms.iter()
    }

    /// Number of stored terms.
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    /// True for the zero polynomial.
    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Coefficient of `m` (zero when absent).
    pub fn coeff(&self, m: &Monomial) -> C {
        self.terms.get(m).cloned().unwrap_or_else(C::zero)
    }

    /// Constant term.
    pub fn constant_term(&self) -> C {
        self.coeff(&Monomial::one())
    }

    /// Returns the constant value when the polynomial has no variables.
    pub fn as_constant(&self) -> Option<C> {
        match self.terms.len() {
            0 => Some(C::zero()),
            1 => self.terms.get(&Monomial::one()).cloned(),
            _ => None,
        }
    }

    /// Total degree; the zero polynomial has degree 0.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    /// Highest total degree counting only the variables accepted by
    /// `selected`.
    pub fn degree_in(&self, selected: &dyn Fn(Var) -> bool) -> u32 {
        self.terms
            .keys()
            .map(|m| m.exponents().iter().filter(|&&(v, _)| selected(v)).map(|&(_, e)| e).sum())
            .max()
            .unwrap_or(0)
    }

    /// Sorted, deduplicated variables occurring in the polynomial.
    pub fn vars(&self) -> Vec<Var> {
        let mut vs: Vec<Var> = self.terms.keys().flat_map(|m| m.vars().collect::<Vec<_>>()).collect();
        vs.sort_unstable();
        vs.dedup();
        vs
    }

    /// Sum.
    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), c);
        }
        out
    }

    /// Difference.
    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    /// Additive inverse.
    pub fn neg(&self) -> Self {
        Self { terms: self.terms.iter().map(|(m, c)| (m.clone(), c.neg())).collect() }
    }

    /// Product.
    pub fn mul(&self, other: &Self) -> Self {
        let mut out = Self::zero();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                out.add_term(ma.mul(mb), &ca.mul(cb));
            }
        }
        out
    }

    /// Product with a rational scalar.
    pub fn scale(&self, v: &Q) -> Self {
        if Zero::is_zero(v) {
            return Self::zero();
        }
        Self { terms: self.terms.iter().map(|(m, c)| (m.clone(), c.mul_q(v))).collect() }
    }

    /// Product with a coefficient.
    pub fn scale_coeff(&self, c: &C) -> Self {
        Self::from_terms(self.terms.iter().map(|(m, d)| (m.clone(), d.mul(c))))
    }

    /// Integer power.
    pub fn pow(&self, e: u32) -> Self {
        let mut result = Self::from_q(&Q::one());
        let mut base = self.clone();
        let mut e = e;
        while e > 0 {
            if e & 1 == 1 {
                result = result.mul(&base);
            }
            e >>= 1;
            if e > 0 {
                base = base.mul(&base);
            }
        }
        result
    }

    /// Adds `offset` to the constant term.
    pub fn add_constant(&self, offset: &Q) -> Self {
        let mut out = self.clone();
        out.add_term(Monomial::one(), &C::from_q(offset));
        out
    }

    /// Renames variables through `f`. Distinct variables must stay distinct.
    pub fn map_vars(&self, f: &dyn Fn(Var) -> Var) -> Self {
        Self::from_terms(
            self.terms.iter().map(|(m, c)| (Monomial::from_pairs(m.exponents().iter().map(|&(v, e)| (f(v), e))), c.clone())),
        )
    }

    /// Applies `f` to every coefficient.
    pub fn map_coeffs<D: Coeff>(&self, f: &dyn Fn(&C) -> D) -> Poly<D> {
        Poly::from_terms(self.terms.iter().map(|(m, c)| (m.clone(), f(c))))
    }

    /// Substitutes polynomials for variables. Every variable of `self` must
    /// be mapped by `subst`.
    pub fn compose(&self, subst: &dyn Fn(Var) -> Option<Poly<C>>, name: &dyn Fn(Var) -> String) -> Result<Self, PolyError> {
        let mut cache: BTreeMap<(Var, u32), Poly<C>> = BTreeMap::new();
        let mut images: BTreeMap<Var, Poly<C>> = BTreeMap::new();
        let mut out = Self::zero();
        for (m, c) in &self.terms {
            let mut acc = Self::constant(c.clone());
            for &(v, e) in m.exponents() {
                if !images.contains_key(&v) {
                    let img = subst(v).ok_or_else(|| PolyError::UnmappedVariable(name(v)))?;
                    images.insert(v, img);
                }
                let power = cache.entry((v, e)).or_insert_with(|| images[&v].pow(e));
                acc = acc.mul(power);
            }
            out = out.add(&acc);
        }
        Ok(out)
    }

    /// Substitutes polynomials for the variables found in `subst`, keeping
    /// every other variable unchanged.
    pub fn substitute(&self, subst: &BTreeMap<Var, Poly<C>>) -> Self {
        self.compose(&|v| Some(subst.get(&v).cloned().unwrap_or_else(|| Self::var(v))), &|v| v.to_string())
            .expect("total substitution")
    }

    /// Evaluates the polynomial at a point, yielding a coefficient value.
    pub fn eval_with(&self, point: &dyn Fn(Var) -> Option<Q>, name: &dyn Fn(Var) -> String) -> Result<C, PolyError> {
        let mut acc = C::zero();
        let mut values: BTreeMap<Var, Q> = BTreeMap::new();
        for (m, c) in &self.terms {
            let mut factor = Q::one();
            for &(v, e) in m.exponents() {
                let x = match values.get(&v) {
                    Some(x) => x.clone(),
                    None => {
                        let x = point(v).ok_or_else(|| PolyError::MissingVariable(name(v)))?;
                        values.insert(v, x.clone());
                        x
                    }
                };
                factor *= num_traits::pow(x, e as usize);
            }
            acc.add_assign(&c.mul_q(&factor));
        }
        Ok(acc)
    }

    /// Partially evaluates: substitutes rational values for the variables
    /// in `values`, leaving others symbolic.
    pub fn partial_eval(&self, values: &BTreeMap<Var, Q>) -> Self {
        let mut out = Self::zero();
        for (m, c) in &self.terms {
            let mut factor = Q::one();
            let mut rest = Vec::new();
            for &(v, e) in m.exponents() {
                match values.get(&v) {
                    Some(x) => factor *= num_traits::pow(x.clone(), e as usize),
                    None => rest.push((v, e)),
                }
            }
            out.add_term(Monomial::from_pairs(rest), &c.mul_q(&factor));
        }
        out
    }
}

impl Coeff for Poly<Q> {
    fn zero() -> Self {
        Poly::zero()
    }
    fn from_q(v: &Q) -> Self {
        Poly::constant(v.clone())
    }
    fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }
    fn add_assign(&mut self, other: &Self) {
        for (m, c) in &other.terms {
            self.add_term(m.clone(), c);
        }
    }
    fn mul(&self, other: &Self) -> Self {
        Poly::mul(self, other)
    }
    fn mul_q(&self, v: &Q) -> Self {
        self.scale(v)
    }
    fn neg(&self) -> Self {
        Poly::neg(self)
    }
}

impl Polynomial {
    /// Exact evaluation at a point given by a lookup function.
    pub fn eval(&self, point: &dyn Fn(Var) -> Option<Q>, name: &dyn Fn(Var) -> String) -> Result<Q, PolyError> {
        self.eval_with(point, name)
    }

    /// Exact evaluation at a point given as a map.
    pub fn eval_map(&self, point: &BTreeMap<Var, Q>) -> Result<Q, PolyError> {
        self.eval_with(&|v| point.get(&v).cloned(), &|v| format!("#{v}"))
    }

    /// Floating-point evaluation used for cheap pre-filtering only.
    pub fn eval_f64(&self, point: &dyn Fn(Var) -> f64) -> f64 {
        self.terms
            .iter()
            .map(|(m, c)| q_to_f64(c) * m.exponents().iter().map(|&(v, e)| point(v).powi(e as i32)).product::<f64>())
            .sum()
    }

    /// Lifts to a template polynomial with constant unknown-coefficients.
    pub fn to_template(&self) -> TemplatePolynomial {
        self.map_coeffs(&|c| UnknownPoly::constant(c.clone()))
    }

    /// Renders as text: terms in monomial order, rationals as `p/q`.
    pub fn render(&self, names: &dyn Fn(Var) -> String) -> String {
        if self.terms.is_empty() {
            return "0".to_string();
        }
        let mut out = String::new();
        for (i, (m, c)) in self.terms.iter().enumerate() {
            let negative = c.is_negative();
            let abs = c.abs();
            if i == 0 {
                if negative {
                    out.push('-');
                }
            } else {
                out.push_str(if negative { " - " } else { " + " });
            }
            if m.is_one() {
                out.push_str(&q_to_string(&abs));
            } else if abs.is_one() {
                out.push_str(&m.render(names));
            } else {
                out.push_str(&format!("{}*{}", q_to_string(&abs), m.render(names)));
            }
        }
        out
    }
}

impl TemplatePolynomial {
    /// Replaces every unknown by its value; unknowns absent from
    /// `assignment` are taken to be zero.
    pub fn instantiate(&self, assignment: &dyn Fn(Var) -> Option<Q>) -> Polynomial {
        Polynomial::from_terms(self.terms.iter().map(|(m, c)| {
            let value = c.eval_with(&|u| Some(assignment(u).unwrap_or_else(<Q as num_traits::Zero>::zero)), &|u| u.to_string()).expect("total");
            (m.clone(), value)
        }))
    }

    /// Maximum degree of the coefficients in the unknowns.
    pub fn unknown_degree(&self) -> u32 {
        self.terms.values().map(Poly::degree).max().unwrap_or(0)
    }

    /// Sorted, deduplicated unknowns occurring in the coefficients.
    pub fn unknowns(&self) -> Vec<Var> {
        let mut us: Vec<Var> = self.terms.values().flat_map(Poly::vars).collect();
        us.sort_unstable();
        us.dedup();
        us
    }

    /// Evaluates the game variables at a rational point, leaving an
    /// expression in the unknowns.
    pub fn eval_at(&self, point: &dyn Fn(Var) -> Option<Q>, name: &dyn Fn(Var) -> String) -> Result<UnknownPoly, PolyError> {
        self.eval_with(point, name)
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.render(&|v| format!("x{v}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x() -> Polynomial {
        Polynomial::var(0)
    }
    fn y() -> Polynomial {
        Polynomial::var(1)
    }
    fn name(v: Var) -> String {
        ["x", "y", "z"].get(v as usize).map_or(format!("v{v}"), |s| s.to_string())
    }

    #[test]
    fn grlex_order_two_vars() {
        let ms = monomials_up_to(&[0, 1], 2);
        let rendered: Vec<String> = ms.iter().map(|m| m.render(&name)).collect();
        assert_eq!(rendered, vec!["1", "x", "y", "x^2", "x*y", "y^2"]);
        let mut sorted = ms.clone();
        sorted.sort();
        assert_eq!(sorted, ms);
    }

    #[test]
    fn monomial_count_five_vars_degree_one() {
        let vars: Vec<Var> = (0..5).collect();
        let ms = monomials_up_to(&vars, 1);
        assert_eq!(ms.len(), 6);
        assert!(ms[0].is_one());
        assert_eq!(monomials_up_to(&[], 3), vec![Monomial::one()]);
    }

    #[test]
    fn eval_examples() {
        let p = x().pow(2).add(&y());
        let pt: BTreeMap<Var, Q> = [(0, q(2)), (1, q(3))].into();
        assert_eq!(p.eval_map(&pt).unwrap(), q(7));
        assert_eq!(Polynomial::zero().eval_map(&pt).unwrap(), q(0));
        let err = p.eval(&|v| if v == 0 { Some(q(1)) } else { None }, &name).unwrap_err();
        assert_eq!(err, PolyError::MissingVariable("y".into()));
    }

    #[test]
    fn compose_binomial() {
        let p = x().pow(2);
        let r = p.compose(&|_| Some(x().sub(&Polynomial::from_q(&q(1)))), &name).unwrap();
        assert_eq!(r.render(&name), "1 - 2*x + x^2");
        assert_eq!(p.compose(&|v| Some(Polynomial::var(v)), &name).unwrap(), p);
        assert!(matches!(p.compose(&|_| None, &name), Err(PolyError::UnmappedVariable(_))));
    }

    #[test]
    fn compose_templates_multiplies_unknowns() {
        let s0 = UnknownPoly::var(10);
        let s1 = UnknownPoly::var(11);
        let t0 = UnknownPoly::var(20);
        let t1 = UnknownPoly::var(21);
        let f = TemplatePolynomial::from_terms([(Monomial::one(), s0.clone()), (Monomial::var(0), s1.clone())]);
        let sigma = TemplatePolynomial::from_terms([(Monomial::one(), t0.clone()), (Monomial::var(0), t1.clone())]);
        let r = f.compose(&|_| Some(sigma.clone()), &name).unwrap();
        assert_eq!(r.coeff(&Monomial::one()), s0.add(&s1.mul(&t0)));
        assert_eq!(r.coeff(&Monomial::var(0)), s1.mul(&t1));
        assert_eq!(r.unknown_degree(), 2);
    }

    #[test]
    fn instantiate_examples() {
        let tp = TemplatePolynomial::from_terms([
            (Monomial::one(), UnknownPoly::var(0)),
            (Monomial::var(0), UnknownPoly::var(1)),
        ]);
        let a: BTreeMap<Var, Q> = [(0, q(1)), (1, q(-2))].into();
        assert_eq!(tp.instantiate(&|u| a.get(&u).cloned()).render(&name), "1 - 2*x");
        assert!(tp.instantiate(&|_| None).is_zero());
        let prod = TemplatePolynomial::term(Monomial::var(0), UnknownPoly::var(1).mul(&UnknownPoly::var(2)));
        let b: BTreeMap<Var, Q> = [(1, q(2)), (2, q(3))].into();
        assert_eq!(prod.instantiate(&|u| b.get(&u).cloned()).render(&name), "6*x");
    }

    #[test]
    fn rationals_parse_and_round() {
        assert_eq!(parse_rational("1.5"), Some(qf(3, 2)));
        assert_eq!(parse_rational("-0.25"), Some(qf(-1, 4)));
        assert_eq!(parse_rational("3/6"), Some(qf(1, 2)));
        assert_eq!(parse_rational("1e-6"), Some(qf(1, 1_000_000)));
        assert_eq!(parse_rational("2.5E1"), Some(q(25)));
        assert_eq!(parse_rational("abc"), None);
        assert_eq!(parse_rational("1/0"), None);
        let third = q_from_f64(1.0 / 3.0).unwrap();
        assert_eq!(cf_round(&third, &BigInt::from(1000)), qf(1, 3));
        let pi = q_from_f64(std::f64::consts::PI).unwrap();
        assert_eq!(cf_round(&pi, &BigInt::from(200)), qf(355, 113));
        assert_eq!(q_to_string(&qf(-7, 3)), "-7/3");
        assert_eq!(q_ceil(&qf(11, 2)), BigInt::from(6));
    }

    #[test]
    fn monomial_text_round_trip() {
        let m = Monomial::from_pairs([(1, 2), (0, 1)]);
        let text = m.render(&name);
        assert_eq!(text, "x*y^2");
        let back = Monomial::parse(&text, &|s| match s {
            "x" => Some(0),
            "y" => Some(1),
            _ => None,
        })
        .unwrap();
        assert_eq!(back, m);
    }
}
