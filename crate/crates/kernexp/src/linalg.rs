//! Exact linear algebra: fraction-free rank, elimination over a field,
//! inverses and null spaces.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Zero};

use crate::exactscalar::{Field, Rational};

/// Rank of a rational matrix by fraction-free (Bareiss) elimination.
pub fn rank_bareiss(rows: &[Vec<Rational>]) -> usize {
    if rows.is_empty() {
        return 0;
    }
    let ncols = rows[0].len();
    let mut m: Vec<Vec<BigInt>> = rows
        .iter()
        .map(|r| {
            let l = r.iter().fold(BigInt::one(), |acc, x| acc.lcm(x.denom()));
            r.iter().map(|x| x.numer() * (&l / x.denom())).collect()
        })
        .collect();
    let nrows = m.len();
    let mut rank = 0;
    let mut prev = BigInt::one();
    for col in 0..ncols {
        if rank == nrows {
            break;
        }
        let Some(piv) = (rank..nrows).find(|&r| !m[r][col].is_zero()) else {
            continue;
        };
        m.swap(rank, piv);
        for r in rank + 1..nrows {
            for c in col + 1..ncols {
                let v = &m[rank][col] * &m[r][c] - &m[r][col] * &m[rank][c];
                m[r][c] = v / &prev;
            }
            m[r][col] = BigInt::zero();
        }
        prev = m[rank][col].clone();
        rank += 1;
    }
    rank
}

/// Reduced row echelon form over a field; returns (matrix, pivot columns).
pub fn rref<F: Field>(rows: &[Vec<F>]) -> (Vec<Vec<F>>, Vec<usize>) {
    let mut m: Vec<Vec<F>> = rows.to_vec();
    let nrows = m.len();
    let ncols = if nrows == 0 { 0 } else { m[0].len() };
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..ncols {
        if r == nrows {
            break;
        }
        let Some(p) = (r..nrows).find(|&i| !m[i][c].is_zero()) else {
            continue;
        };
        m.swap(r, p);
        let inv = m[r][c].inv().expect("nonzero pivot");
        for x in m[r].iter_mut() {
            *x = x.times(&inv);
        }
        for i in 0..nrows {
            if i != r && !m[i][c].is_zero() {
                let f = m[i][c].clone();
                for j in 0..ncols {
                    let d = f.times(&m[r][j]);
                    m[i][j] = m[i][j].minus(&d);
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    m.truncate(r.max(0));
    (m, pivots)
}

pub fn rank<F: Field>(rows: &[Vec<F>]) -> usize {
    rref(rows).1.len()
}

pub fn inverse<F: Field>(a: &[Vec<F>]) -> Option<Vec<Vec<F>>> {
    let n = a.len();
    let aug: Vec<Vec<F>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { F::one() } else { F::zero() }));
            r
        })
        .collect();
    let (m, piv) = rref(&aug);
    if piv.len() < n || piv[n - 1] >= n {
        return None;
    }
    Some(m.into_iter().map(|r| r[n..].to_vec()).collect())
}

/// Basis of {x : A x = 0}.
pub fn nullspace<F: Field>(a: &[Vec<F>], ncols: usize) -> Vec<Vec<F>> {
    let (m, piv) = rref(a);
    let free: Vec<usize> = (0..ncols).filter(|c| !piv.contains(c)).collect();
    free.iter()
        .map(|&f| {
            let mut v = vec![F::zero(); ncols];
            v[f] = F::one();
            for (r, &pc) in piv.iter().enumerate() {
                v[pc] = m[r][f].negated();
            }
            v
        })
        .collect()
}

/// Indices of a maximal independent subset of rows, chosen greedily in order.
pub fn independent_rows<F: Field>(rows: &[Vec<F>]) -> Vec<usize> {
    let mut kept: Vec<Vec<F>> = Vec::new();
    let mut idx = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        let mut trial = kept.clone();
        trial.push(r.clone());
        if rank(&trial) > kept.len() {
            kept = rref(&trial).0;
            idx.push(i);
        }
    }
    idx
}

/// Echelon basis grown one vector at a time. Each stored row remembers its
/// expression in terms of the accepted input vectors, so targets in the span
/// can be written back in the original generators.
pub struct IncrementalBasis<F: Field> {
    dim: usize,
    rows: Vec<(usize, Vec<F>, Vec<F>)>,
}

impl<F: Field> IncrementalBasis<F> {
    pub fn new(dim: usize) -> Self {
        IncrementalBasis { dim, rows: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Reduces `v`; returns (residual, combination over accepted generators).
    fn reduce(&self, v: &[F]) -> (Vec<F>, Vec<F>) {
        let mut r = v.to_vec();
        let mut comb = vec![F::zero(); self.rows.len()];
        for (piv, row, rc) in &self.rows {
            if r[*piv].is_zero() {
                continue;
            }
            let f = r[*piv].clone();
            for (x, y) in r.iter_mut().zip(row) {
                if !y.is_zero() {
                    *x = x.minus(&f.times(y));
                }
            }
            for (x, y) in comb.iter_mut().zip(rc) {
                if !y.is_zero() {
                    *x = x.minus(&f.times(y));
                }
            }
        }
        (r, comb)
    }

    /// Adds `v` if it is independent of the accepted vectors.
    pub fn try_add(&mut self, v: &[F]) -> bool {
        assert_eq!(v.len(), self.dim);
        let (mut r, mut comb) = self.reduce(v);
        let Some(piv) = r.iter().position(|x| !x.is_zero()) else {
            return false;
        };
        comb.push(F::one());
        let inv = r[piv].inv().expect("nonzero pivot");
        for x in r.iter_mut().chain(comb.iter_mut()) {
            *x = x.times(&inv);
        }
        for (_, _, rc) in self.rows.iter_mut() {
            rc.push(F::zero());
        }
        self.rows.push((piv, r, comb));
        true
    }

    /// Coefficients of `v` over the accepted generators, if `v` is in the span.
    pub fn express(&self, v: &[F]) -> Option<Vec<F>> {
        let (r, comb) = self.reduce(v);
        if r.iter().any(|x| !x.is_zero()) {
            return None;
        }
        // reduce() subtracts; the target equals the negated combination.
        Some(comb.into_iter().map(|c| c.negated()).collect())
    }
}
