//! Double-double arithmetic (pairs of `f64` carrying ~31 significant digits).
//!
//! The recovery matrix comes from solving against the observability matrix,
//! whose condition number grows past 1e15 for high orders at near-degenerate
//! angles. Plain `f64` elimination loses every digit there, and iterative
//! refinement in `f64` cannot converge once `cond * eps > 1`. The compensated
//! representation here keeps the forward error near `cond * 1e-32`, which is
//! ample for the 1e-9 agreement targets. Only the small dense solves in this
//! crate use it; sizes stay below ~16 so a textbook pivoted elimination is
//! fine.
//!
//! Algorithms are the classic error-free transformations (Dekker's split-free
//! product via fused multiply-add, Knuth's two-sum) and the usual
//! renormalizing add/mul/div built on them.

/// Error-free sum: returns `(s, e)` with `s = fl(a + b)` and `a + b = s + e`.
#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let e = (a - (s - bb)) + (b - bb);
    (s, e)
}

/// Error-free sum assuming `|a| >= |b|`.
#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let e = b - (s - a);
    (s, e)
}

/// Error-free product via fused multiply-add.
#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    let e = a.mul_add(b, -p);
    (p, e)
}

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi)/2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Dd {
    pub hi: f64,
    pub lo: f64,
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };

    #[inline]
    pub fn from_f64(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    #[inline]
    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    #[inline]
    pub fn add(self, o: Dd) -> Dd {
        let (s1, s2) = two_sum(self.hi, o.hi);
        let (t1, t2) = two_sum(self.lo, o.lo);
        let (s1, s2) = quick_two_sum(s1, s2 + t1);
        let (hi, lo) = quick_two_sum(s1, s2 + t2);
        Dd { hi, lo }
    }

    #[inline]
    pub fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }

    #[inline]
    pub fn sub(self, o: Dd) -> Dd {
        self.add(o.neg())
    }

    #[inline]
    pub fn mul(self, o: Dd) -> Dd {
        let (p1, p2) = two_prod(self.hi, o.hi);
        let p2 = p2 + self.hi * o.lo + self.lo * o.hi;
        let (hi, lo) = quick_two_sum(p1, p2);
        Dd { hi, lo }
    }

    pub fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self.sub(o.mul(Dd::from_f64(q1)));
        let q2 = r.hi / o.hi;
        let r = r.sub(o.mul(Dd::from_f64(q2)));
        let q3 = r.hi / o.hi;
        let (s1, s2) = quick_two_sum(q1, q2);
        Dd { hi: s1, lo: s2 }.add(Dd::from_f64(q3))
    }

    #[inline]
    pub fn abs(self) -> Dd {
        if self.hi < 0.0 || (self.hi == 0.0 && self.lo < 0.0) {
            self.neg()
        } else {
            self
        }
    }

    /// Total order consistent with the represented real values.
    pub fn gt(self, o: Dd) -> bool {
        self.hi > o.hi || (self.hi == o.hi && self.lo > o.lo)
    }
}

/// Square matrix of `Dd` entries, row-major.
pub(crate) type DdMatrix = Vec<Vec<Dd>>;

pub(crate) fn from_f64_matrix(a: &[Vec<f64>]) -> DdMatrix {
    a.iter()
        .map(|row| row.iter().map(|&x| Dd::from_f64(x)).collect())
        .collect()
}

/// Plain triple-loop product of two square `Dd` matrices.
pub(crate) fn matmul(a: &DdMatrix, b: &DdMatrix) -> DdMatrix {
    let n = a.len();
    let mut out = vec![vec![Dd::ZERO; n]; n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i][k];
            if aik.hi == 0.0 && aik.lo == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i][j] = out[i][j].add(aik.mul(b[k][j]));
            }
        }
    }
    out
}

/// Solves `A X = B` for a square `A` and multi-column `B` (given as a full
/// matrix) using elimination with partial pivoting, entirely in double-double
/// arithmetic. Returns `None` when a pivot vanishes exactly.
pub(crate) fn solve_multi(a: &DdMatrix, b: &DdMatrix) -> Option<DdMatrix> {
    let n = a.len();
    debug_assert!(a.iter().all(|row| row.len() == n) && b.len() == n);
    let cols = b[0].len();
    let mut m = a.clone();
    let mut rhs = b.clone();

    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| {
                let (ai, aj) = (m[i][col].abs(), m[j][col].abs());
                if ai.gt(aj) {
                    std::cmp::Ordering::Greater
                } else if aj.gt(ai) {
                    std::cmp::Ordering::Less
                } else {
                    std::cmp::Ordering::Equal
                }
            })
            .unwrap();
        if m[pivot_row][col].hi == 0.0 && m[pivot_row][col].lo == 0.0 {
            return None;
        }
        m.swap(col, pivot_row);
        rhs.swap(col, pivot_row);
        for row in col + 1..n {
            let factor = m[row][col].div(m[col][col]);
            for k in col..n {
                m[row][k] = m[row][k].sub(factor.mul(m[col][k]));
            }
            for k in 0..cols {
                rhs[row][k] = rhs[row][k].sub(factor.mul(rhs[col][k]));
            }
        }
    }

    let mut x = vec![vec![Dd::ZERO; cols]; n];
    for row in (0..n).rev() {
        for k in 0..cols {
            let mut acc = rhs[row][k];
            for j in row + 1..n {
                acc = acc.sub(m[row][j].mul(x[j][k]));
            }
            x[row][k] = acc.div(m[row][row]);
        }
    }
    Some(x)
}

/// Solves the square system `A x = b` with `f64` endpoints; the extended
/// precision lives only inside the solve.
#[cfg(test)]
pub(crate) fn solve(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let am = from_f64_matrix(a);
    let bm: DdMatrix = b.iter().map(|&x| vec![Dd::from_f64(x)]).collect();
    let x = solve_multi(&am, &bm)?;
    Some(x.into_iter().map(|row| row[0].to_f64()).collect())
}
