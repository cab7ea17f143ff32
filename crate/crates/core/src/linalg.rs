//! Dense complex helpers on top of `faer`: noise generation, Frobenius
//! norms and a rank-revealing least-squares solver.

use faer::linalg::solvers::{ColPivQr, SolveLstsq};
use faer::{Col, Mat};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Relative cutoff below which a pivot (or singular value) counts as zero.
pub const DEFAULT_RCOND: f64 = 1e-10;

/// One draw of a circularly-symmetric complex Gaussian with the given variance.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(s * re, s * im)
}

/// `rows x cols` matrix of i.i.d. CN(0, variance) entries, drawn column by column.
pub fn noise_matrix<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    variance: f64,
    rng: &mut R,
) -> Mat<Complex64> {
    let mut z = Mat::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            z[(i, j)] = complex_gaussian(rng, variance);
        }
    }
    z
}

pub fn noise_vector<R: Rng + ?Sized>(len: usize, variance: f64, rng: &mut R) -> Col<Complex64> {
    let mut z = Col::zeros(len);
    for i in 0..len {
        z[i] = complex_gaussian(rng, variance);
    }
    z
}

pub fn frobenius_sq(m: &Mat<Complex64>) -> f64 {
    let mut acc = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            acc += m[(i, j)].norm_sqr();
        }
    }
    acc
}

/// `‖a - b‖_F^2`. Panics on a shape mismatch.
pub fn frobenius_dist_sq(a: &Mat<Complex64>, b: &Mat<Complex64>) -> f64 {
    assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    let mut acc = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            acc += (a[(i, j)] - b[(i, j)]).norm_sqr();
        }
    }
    acc
}

pub fn scale(m: &Mat<Complex64>, factor: Complex64) -> Mat<Complex64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * factor)
}

/// `a * diag(d)`: scales column `j` of `a` by `d[j]`.
pub fn mul_diag(a: &Mat<Complex64>, d: &[Complex64]) -> Mat<Complex64> {
    assert_eq!(a.ncols(), d.len());
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * d[j])
}

/// Ratio of the largest to the smallest singular value. Infinite for wide or
/// singular matrices.
pub fn condition_number(a: &Mat<Complex64>) -> f64 {
    if a.nrows() < a.ncols() || a.ncols() == 0 {
        return f64::INFINITY;
    }
    match a.singular_values() {
        Ok(s) => {
            let max = s.first().copied().unwrap_or(0.0);
            let min = s.last().copied().unwrap_or(0.0);
            if min > 0.0 {
                max / min
            } else {
                f64::INFINITY
            }
        }
        Err(_) => f64::NAN,
    }
}

/// A factored tall matrix of full numerical column rank, ready to produce
/// Moore–Penrose (least-squares) solutions.
///
/// Rank is read off the diagonal of a column-pivoted QR: a column counts when
/// `|R_ii| > rcond * |R_00|`. For full column rank the least-squares solution
/// is the pseudo-inverse solution, so the factorization is reused for every
/// right-hand side.
pub struct LeastSquares {
    rows: usize,
    cols: usize,
    qr: ColPivQr<Complex64>,
}

impl std::fmt::Debug for LeastSquares {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LeastSquares")
            .field("rows", &self.rows)
            .field("cols", &self.cols)
            .finish_non_exhaustive()
    }
}

impl LeastSquares {
    pub fn new(a: &Mat<Complex64>, rcond: f64) -> Result<Self> {
        let (rows, cols) = (a.nrows(), a.ncols());
        if cols == 0 {
            return Err(Error::ShapeMismatch {
                expected: "at least one unknown".into(),
                got: format!("{rows}x{cols}"),
            });
        }
        if rows < cols {
            return Err(Error::RankDeficient {
                rows,
                cols,
                rank: rows,
                condition: f64::INFINITY,
            });
        }
        let qr = a.col_piv_qr();
        let rank = {
            let r = qr.R();
            let lead = r[(0, 0)].norm();
            (0..cols)
                .take_while(|&i| lead > 0.0 && r[(i, i)].norm() > rcond * lead)
                .count()
        };
        if rank < cols {
            return Err(Error::RankDeficient {
                rows,
                cols,
                rank,
                condition: condition_number(a),
            });
        }
        Ok(Self { rows, cols, qr })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Cheap condition estimate `|R_00| / |R_nn|` from the pivoted factor.
    pub fn condition_estimate(&self) -> f64 {
        let r = self.qr.R();
        r[(0, 0)].norm() / r[(self.cols - 1, self.cols - 1)].norm()
    }

    pub fn solve(&self, y: &Col<Complex64>) -> Result<Col<Complex64>> {
        if y.nrows() != self.rows {
            return Err(Error::ShapeMismatch {
                expected: format!("{} observations", self.rows),
                got: format!("{}", y.nrows()),
            });
        }
        Ok(self.qr.solve_lstsq(y))
    }
}
