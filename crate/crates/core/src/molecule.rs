//! Molecules, elementary atoms and atomic decompositions.

use std::collections::BTreeMap;
use std::ops::{Add, Neg, Sub};

use num_traits::Zero;

use crate::error::{Error, Result};
use crate::number::{self, Exponent, Rational};
use crate::space::QSpace;

/// A finitely supported function on points with zero total mass.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Molecule {
    coeffs: BTreeMap<usize, Rational>,
}

impl Molecule {
    pub fn zero() -> Self {
        Self::default()
    }

    /// Builds a molecule from explicit coefficients, rejecting nonzero sums.
    pub fn from_coeffs(coeffs: impl IntoIterator<Item = (usize, Rational)>) -> Result<Self> {
        let mut m = Molecule::zero();
        for (i, c) in coeffs {
            m.add_at(i, &c);
        }
        let total = m.total();
        if !total.is_zero() {
            return Err(Error::NotZeroSum(number::format_rational(&total)));
        }
        Ok(m)
    }

    /// `sum a_i (chi_{x_i} - chi_base)`.
    pub fn from_deltas<'a>(entries: impl IntoIterator<Item = (&'a Rational, usize)>, base: usize) -> Self {
        let mut m = Molecule::zero();
        for (a, x) in entries {
            m.add_at(x, a);
            m.add_at(base, &-a);
        }
        m
    }

    /// `chi_x - chi_y`.
    pub fn dipole(x: usize, y: usize) -> Self {
        let one = Rational::from_integer(1.into());
        Self::from_deltas([(&one, x), (&-one.clone(), y)], 0)
    }

    fn add_at(&mut self, index: usize, value: &Rational) {
        if value.is_zero() {
            return;
        }
        let slot = self.coeffs.entry(index).or_insert_with(Rational::zero);
        *slot += value;
        if slot.is_zero() {
            self.coeffs.remove(&index);
        }
    }

    pub fn get(&self, index: usize) -> Rational {
        self.coeffs.get(&index).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &Rational)> {
        self.coeffs.iter().map(|(&i, c)| (i, c))
    }

    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.coeffs.keys().copied()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn total(&self) -> Rational {
        self.coeffs.values().fold(Rational::zero(), |acc, c| acc + c)
    }

    pub fn scale(&self, factor: &Rational) -> Molecule {
        let mut m = Molecule::zero();
        for (i, c) in self.iter() {
            m.add_at(i, &(c * factor));
        }
        m
    }

    /// Adds `factor * (chi_x - chi_y)`.
    pub fn add_dipole(&mut self, x: usize, y: usize, factor: &Rational) {
        self.add_at(x, factor);
        self.add_at(y, &-factor);
    }

    /// Checks every support point is a valid index of a space with `len` points.
    pub fn check_within(&self, len: usize) -> Result<()> {
        match self.coeffs.keys().next_back() {
            Some(&i) if i >= len => Err(Error::PointOutOfRange { index: i, len }),
            _ => Ok(()),
        }
    }

    /// Pushes the molecule forward along `map` (point index -> new index).
    pub fn push_forward(&self, map: impl Fn(usize) -> usize) -> Molecule {
        let mut m = Molecule::zero();
        for (i, c) in self.iter() {
            m.add_at(map(i), c);
        }
        m
    }

    /// Re-indexes a molecule living on `indices[k] -> k`. Fails if the
    /// support leaves `indices`.
    pub fn restrict_to(&self, indices: &[usize]) -> Result<Molecule> {
        let mut m = Molecule::zero();
        for (i, c) in self.iter() {
            let k = indices.iter().position(|&j| j == i).ok_or(Error::SupportEscapes(i))?;
            m.add_at(k, c);
        }
        Ok(m)
    }

    /// Values as `f64`, dense over `n` points.
    pub fn dense_f64(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (i, c) in self.iter() {
            out[i] = number::to_f64(c);
        }
        out
    }
}

impl Add for &Molecule {
    type Output = Molecule;

    fn add(self, rhs: &Molecule) -> Molecule {
        let mut m = self.clone();
        for (i, c) in rhs.iter() {
            m.add_at(i, c);
        }
        m
    }
}

impl Sub for &Molecule {
    type Output = Molecule;

    fn sub(self, rhs: &Molecule) -> Molecule {
        self + &(-rhs)
    }
}

impl Neg for &Molecule {
    type Output = Molecule;

    fn neg(self) -> Molecule {
        self.scale(&Rational::from_integer((-1).into()))
    }
}

/// The normalised dipole `(chi_x - chi_y) / dist(x, y)`, stored with `x < y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Atom {
    x: usize,
    y: usize,
}

impl Atom {
    /// Canonical atom for the unordered pair `{a, b}` together with the sign
    /// that turns it into `m_{a,b}`.
    pub fn oriented(a: usize, b: usize) -> Result<(Atom, i8)> {
        if a == b {
            return Err(Error::Parameter(format!("atom endpoints coincide ({a})")));
        }
        Ok(if a < b {
            (Atom { x: a, y: b }, 1)
        } else {
            (Atom { x: b, y: a }, -1)
        })
    }

    pub fn new(a: usize, b: usize) -> Result<Atom> {
        Self::oriented(a, b).map(|(atom, _)| atom)
    }

    pub fn x(&self) -> usize {
        self.x
    }

    pub fn y(&self) -> usize {
        self.y
    }

    /// Index of this atom among all `n(n-1)/2` atoms in lexicographic order.
    pub fn rank(&self, n: usize) -> usize {
        self.x * (2 * n - self.x - 1) / 2 + (self.y - self.x - 1)
    }
}

/// A single atom distance as an exact rational when available.
pub(crate) fn atom_length(space: &QSpace, atom: Atom) -> Rational {
    match space.dist_exact(atom.x, atom.y) {
        Some(d) => d.clone(),
        None => number::from_f64(space.dist(atom.x, atom.y)),
    }
}

/// `target = sum coeff * atom`, one coefficient per unordered atom.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    terms: Vec<(Rational, Atom)>,
    target: Molecule,
}

impl Decomposition {
    /// Canonicalises `terms`: reorients every atom to `x < y` and merges
    /// repeated atoms by summing their coefficients.
    pub fn new(target: Molecule, terms: impl IntoIterator<Item = (Rational, usize, usize)>) -> Result<Self> {
        let mut merged: BTreeMap<Atom, Rational> = BTreeMap::new();
        for (coeff, a, b) in terms {
            let (atom, sign) = Atom::oriented(a, b)?;
            let c = if sign < 0 { -coeff } else { coeff };
            *merged.entry(atom).or_insert_with(Rational::zero) += c;
        }
        let terms = merged.into_iter().filter(|(_, c)| !c.is_zero()).map(|(a, c)| (c, a)).collect();
        Ok(Decomposition { terms, target })
    }

    pub fn empty(target: Molecule) -> Self {
        Decomposition { terms: Vec::new(), target }
    }

    pub fn terms(&self) -> &[(Rational, Atom)] {
        &self.terms
    }

    pub fn target(&self) -> &Molecule {
        &self.target
    }

    /// `(sum |a_i|^p)^(1/p)`.
    pub fn cost(&self, p: &Exponent) -> f64 {
        lp_cost(self.terms.iter().map(|(c, _)| number::to_f64(c)), p)
    }

    /// `target - sum a_i (chi_x - chi_y) / dist(x, y)`.
    pub fn residual(&self, space: &QSpace) -> Result<Molecule> {
        self.target.check_within(space.len())?;
        let mut r = self.target.clone();
        for (c, atom) in &self.terms {
            space.check_point(atom.y)?;
            let weight = c / atom_length(space, *atom);
            r.add_dipole(atom.x, atom.y, &-weight);
        }
        Ok(r)
    }

    /// Largest residual coefficient in absolute value.
    pub fn residual_norm(&self, space: &QSpace) -> Result<f64> {
        Ok(self
            .residual(space)?
            .iter()
            .map(|(_, c)| number::to_f64(c).abs())
            .fold(0.0, f64::max))
    }

    pub fn support(&self) -> Vec<Atom> {
        self.terms.iter().map(|(_, a)| *a).collect()
    }
}

/// `(sum |a_i|^p)^(1/p)` in `f64`.
pub fn lp_cost(values: impl IntoIterator<Item = f64>, p: &Exponent) -> f64 {
    let sum: f64 = values.into_iter().map(|v| p.powf(v.abs())).sum();
    p.recip().powf(sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::Signed;

    fn r(n: i64) -> Rational {
        Rational::from_integer(n.into())
    }

    #[test]
    fn deltas_map_to_molecules() {
        let m = Molecule::from_deltas([(&r(1), 1)], 0);
        assert_eq!(m.get(1), r(1));
        assert_eq!(m.get(0), r(-1));
        assert!(Molecule::from_deltas(std::iter::empty(), 0).is_zero());
        let m = Molecule::from_deltas([(&r(1), 1), (&r(-1), 2)], 0);
        assert_eq!(m.support().collect::<Vec<_>>(), vec![1, 2]);
        assert_eq!(m.get(2), r(-1));
    }

    #[test]
    fn costs() {
        let half = Exponent::from_ratio(1, 2);
        let target = Molecule::zero();
        let single = Decomposition::new(target.clone(), [(r(1), 0, 1)]).unwrap();
        assert_eq!(single.cost(&half), 1.0);
        let two = Decomposition::new(target.clone(), [(r(1), 0, 1), (r(1), 0, 2)]).unwrap();
        assert!((two.cost(&half) - 4.0).abs() < 1e-12);
        let l1 = Decomposition::new(target, [(r(3), 0, 1), (r(4), 1, 2)]).unwrap();
        assert_eq!(l1.cost(&Exponent::one()), 7.0);
    }

    #[test]
    fn merging_reorients_atoms() {
        let d = Decomposition::new(Molecule::zero(), [(r(2), 1, 0), (r(3), 0, 1), (r(1), 2, 1)]).unwrap();
        assert_eq!(d.terms().len(), 2);
        assert_eq!(d.terms()[0], (r(1), Atom::new(0, 1).unwrap()));
        assert_eq!(d.terms()[1], (r(-1), Atom::new(1, 2).unwrap()));
    }

    #[test]
    fn residuals() {
        let space = QSpace::uniform(3, &r(2), Exponent::one());
        let target = Molecule::dipole(1, 0);
        // chi_1 - chi_0 = -2 * m_{0,1}/2
        let exact = Decomposition::new(target.clone(), [(r(-2), 0, 1)]).unwrap();
        assert!(exact.residual(&space).unwrap().is_zero());
        let delta = Rational::new(1.into(), 10.into());
        let off = Decomposition::new(target.clone(), [(r(-2) + &delta, 0, 1)]).unwrap();
        let res = off.residual(&space).unwrap();
        assert_eq!(res.support().count(), 2);
        assert_eq!(res.get(0).abs(), &delta / r(2));
        let empty = Decomposition::empty(target.clone());
        assert_eq!(empty.residual(&space).unwrap(), target);
    }

    #[test]
    fn atom_ranks_are_lexicographic() {
        let n = 5;
        let mut k = 0;
        for x in 0..n {
            for y in x + 1..n {
                assert_eq!(Atom::new(x, y).unwrap().rank(n), k);
                k += 1;
            }
        }
    }
}
