//! q-metric envelopes: the largest q-metric below a quasimetric, obtained by
//! shortest-chain closure of `dist^q` followed by the quotient that
//! identifies points at envelope distance zero.

use crate::error::{Error, Result};
use crate::freenorm::{self, Budget};
use crate::molecule::Molecule;
use crate::number::{Exponent, Rational};
use crate::scalar::Scalar;
use crate::space::QSpace;
use crate::wasserstein;

/// Relative threshold under which two float points are identified.
pub const MERGE_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct EnvelopeResult {
    /// `classes[x]` is the envelope class of point `x`.
    pub classes: Vec<usize>,
    /// The envelope as a space over classes, declared exponent `q`.
    pub space: QSpace,
    pub q: Exponent,
    pub class_of_base: usize,
}

impl EnvelopeResult {
    pub fn push_forward(&self, mu: &Molecule) -> Molecule {
        mu.push_forward(|i| self.classes[i])
    }

    /// Envelope distance between the classes of two original points.
    pub fn dist(&self, x: usize, y: usize) -> f64 {
        self.space.dist(self.classes[x], self.classes[y])
    }
}

/// In-place Floyd–Warshall closure.
pub fn floyd_warshall<T: Scalar>(n: usize, matrix: &mut [T]) {
    for k in 0..n {
        for i in 0..n {
            if i == k {
                continue;
            }
            let ik = matrix[i * n + k].clone();
            for j in 0..n {
                let through = ik.add(&matrix[k * n + j]);
                if through < matrix[i * n + j] {
                    matrix[i * n + j] = through;
                }
            }
        }
    }
}

fn check_q(q: &Exponent) -> Result<()> {
    q.check_unit()
}

/// The q-metric envelope of `space`.
pub fn q_envelope(space: &QSpace, q: &Exponent) -> Result<EnvelopeResult> {
    check_q(q)?;
    let n = space.len();
    let root = q.recip();

    let powered_exact: Option<Vec<Rational>> = space.exact_rows().and_then(|rows| {
        rows.into_iter()
            .flatten()
            .map(|d| q.pow_rational(&d))
            .collect::<Option<Vec<_>>>()
    });

    // closure of dist^q, then back to power 1
    let (closed_exact, closed_f64): (Option<Vec<Rational>>, Vec<f64>) = match powered_exact {
        Some(mut m) => {
            floyd_warshall(n, &mut m);
            let rooted: Option<Vec<Rational>> = m.iter().map(|v| root.pow_rational(v)).collect();
            let approx = m.iter().map(|v| root.powf(v.to_f64())).collect();
            (rooted, approx)
        }
        None => {
            let mut m: Vec<f64> = space.float_rows().into_iter().flatten().map(|d| q.powf(d)).collect();
            floyd_warshall(n, &mut m);
            (None, m.into_iter().map(|v| root.powf(v)).collect())
        }
    };

    let scale = closed_f64.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut classes = vec![usize::MAX; n];
    let mut reps: Vec<usize> = Vec::new();
    for x in 0..n {
        if classes[x] != usize::MAX {
            continue;
        }
        classes[x] = reps.len();
        for y in x + 1..n {
            let zero = match &closed_exact {
                Some(m) => num_traits::Zero::is_zero(&m[x * n + y]),
                None => closed_f64[x * n + y] <= MERGE_THRESHOLD * scale,
            };
            if zero && classes[y] == usize::MAX {
                classes[y] = reps.len();
            }
        }
        reps.push(x);
    }

    let labels: Vec<String> = reps.iter().map(|&r| space.label(r).to_string()).collect();
    let env = match &closed_exact {
        Some(m) => {
            let rows = reps
                .iter()
                .map(|&a| reps.iter().map(|&b| m[a * n + b].clone()).collect())
                .collect();
            QSpace::from_exact(labels, rows, q.clone())?
        }
        None => {
            let rows = reps
                .iter()
                .map(|&a| {
                    reps.iter()
                        .map(|&b| {
                            // enforce bitwise symmetry
                            let (u, v) = (a.min(b), a.max(b));
                            if u == v {
                                0.0
                            } else {
                                closed_f64[u * n + v]
                            }
                        })
                        .collect()
                })
                .collect();
            QSpace::from_f64(labels, rows, q.clone())?
        }
    };
    Ok(EnvelopeResult {
        class_of_base: classes[0],
        classes,
        space: env,
        q: q.clone(),
    })
}

/// Norm of `mu` pushed into the free q-space over the q-envelope. A lower
/// bound for the free p-norm whenever `q >= p`.
pub fn envelope_norm(space: &QSpace, mu: &Molecule, q: &Exponent, budget: Budget) -> Result<f64> {
    check_q(q)?;
    if q.value() < space.p().value() - 1e-15 {
        return Err(Error::Parameter(format!(
            "envelope exponent {q} is below the space exponent {}",
            space.p()
        )));
    }
    mu.check_within(space.len())?;
    let env = q_envelope(space, q)?;
    let pushed = env.push_forward(mu);
    if q.is_one() {
        Ok(wasserstein::f1_norm(&env.space, &pushed)?.value)
    } else {
        Ok(freenorm::exact_pnorm(&env.space, &pushed, q, budget)?.upper)
    }
}
