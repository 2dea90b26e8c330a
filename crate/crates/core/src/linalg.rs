//! Dense linear-algebra helpers: matrix exponential, symmetric spectra,
//! inertia, and a named block index map for assembling partitioned matrices.

use alloc::vec::Vec;
use nalgebra::linalg::SymmetricEigen;

use crate::Matrix;

/// Padé(13) numerator/denominator coefficients for scaling and squaring.
const PADE13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

/// Largest 1-norm for which the degree-13 Padé approximant is accurate to
/// double precision without scaling.
const THETA13: f64 = 5.371_920_351_148_152;

/// Matrix exponential by scaling and squaring with a degree-13 Padé
/// approximant.
///
/// Panics if `a` is not square. Non-finite input yields non-finite output.
pub fn expm(a: &Matrix) -> Matrix {
    assert!(a.is_square(), "expm needs a square matrix");
    let n = a.nrows();
    if n == 0 {
        return Matrix::zeros(0, 0);
    }
    let norm = norm_1(a);
    let squarings = if norm > THETA13 {
        libm::ceil(libm::log2(norm / THETA13)) as i32
    } else {
        0
    };
    let scaled = a / libm::pow(2.0, squarings as f64);

    let b = &PADE13;
    let eye = Matrix::identity(n, n);
    let a2 = &scaled * &scaled;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;

    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9])
        + &a6 * b[7]
        + &a4 * b[5]
        + &a2 * b[3]
        + &eye * b[1];
    let u = &scaled * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8])
        + &a6 * b[6]
        + &a4 * b[4]
        + &a2 * b[2]
        + &eye * b[0];

    let denom = &v - &u;
    let numer = &v + &u;
    let mut r = match denom.lu().solve(&numer) {
        Some(r) => r,
        None => return Matrix::from_element(n, n, f64::NAN),
    };
    for _ in 0..squarings {
        r = &r * &r;
    }
    r
}

/// Maximum absolute column sum.
pub fn norm_1(a: &Matrix) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `(m + mᵀ) / 2`.
pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Largest entrywise deviation from symmetry relative to the largest entry.
pub fn relative_asymmetry(m: &Matrix) -> f64 {
    let scale = m.amax();
    if scale == 0.0 {
        return 0.0;
    }
    (m - m.transpose()).amax() / scale
}

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn sym_eigenvalues(m: &Matrix) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    vals
}

pub fn max_eigenvalue(m: &Matrix) -> f64 {
    sym_eigenvalues(m)
        .last()
        .copied()
        .unwrap_or(f64::NEG_INFINITY)
}

pub fn min_eigenvalue(m: &Matrix) -> f64 {
    sym_eigenvalues(m).first().copied().unwrap_or(f64::INFINITY)
}

/// Largest singular value.
pub fn spectral_norm(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

/// Numerical rank with singular values below `rel_tol · σ_max` treated as zero.
pub fn rank(m: &Matrix, rel_tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let top = sv.iter().copied().fold(0.0, f64::max);
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * top).count()
}

/// Eigenvalue sign counts of a symmetric matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Inertia {
    pub negative: usize,
    pub zero: usize,
    pub positive: usize,
}

impl Inertia {
    /// Counts eigenvalues with `|λ| ≤ rel_tol · ‖m‖₂` as zero.
    pub fn of(m: &Matrix, rel_tol: f64) -> Self {
        Self::from_eigenvalues(&sym_eigenvalues(m), rel_tol)
    }

    pub fn from_eigenvalues(eigs: &[f64], rel_tol: f64) -> Self {
        let scale = eigs.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let thresh = rel_tol * scale;
        let mut out = Inertia {
            negative: 0,
            zero: 0,
            positive: 0,
        };
        for &v in eigs {
            if scale == 0.0 || v.abs() <= thresh {
                out.zero += 1;
            } else if v < 0.0 {
                out.negative += 1;
            } else {
                out.positive += 1;
            }
        }
        out
    }
}

/// Inverse of a symmetric matrix through its eigendecomposition, together
/// with the spectral condition number `max|λ| / min|λ|`.
///
/// Returns `None` when an eigenvalue is exactly zero.
pub fn sym_inverse(m: &Matrix) -> Option<(Matrix, f64)> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut largest: f64 = 0.0;
    let mut smallest = f64::INFINITY;
    for &v in eig.eigenvalues.iter() {
        largest = largest.max(v.abs());
        smallest = smallest.min(v.abs());
    }
    if smallest == 0.0 || !smallest.is_finite() {
        return None;
    }
    let inv_diag = Matrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v));
    let inv = &eig.eigenvectors * inv_diag * eig.eigenvectors.transpose();
    Some((symmetrize(&inv), largest / smallest))
}

/// Block-diagonal concatenation.
pub fn block_diag(blocks: &[&Matrix]) -> Matrix {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(*b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Congruence `fᵀ · m · f`, symmetrized.
pub fn congruence(f: &Matrix, m: &Matrix) -> Matrix {
    symmetrize(&(f.transpose() * m * f))
}

/// Named, ordered partition of an index range.
///
/// Each block has a name and a size; offsets follow declaration order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockLayout {
    names: Vec<&'static str>,
    sizes: Vec<usize>,
    offsets: Vec<usize>,
}

impl BlockLayout {
    pub fn new(blocks: &[(&'static str, usize)]) -> Self {
        let mut names = Vec::with_capacity(blocks.len());
        let mut sizes = Vec::with_capacity(blocks.len());
        let mut offsets = Vec::with_capacity(blocks.len());
        let mut at = 0;
        for &(name, size) in blocks {
            assert!(!names.contains(&name), "duplicate block name {name}");
            names.push(name);
            sizes.push(size);
            offsets.push(at);
            at += size;
        }
        Self {
            names,
            sizes,
            offsets,
        }
    }

    fn index(&self, name: &str) -> usize {
        self.names
            .iter()
            .position(|n| *n == name)
            .unwrap_or_else(|| panic!("unknown block {name}"))
    }

    pub fn offset(&self, name: &str) -> usize {
        self.offsets[self.index(name)]
    }

    pub fn size(&self, name: &str) -> usize {
        self.sizes[self.index(name)]
    }

    /// Total dimension.
    pub fn dim(&self) -> usize {
        self.sizes.iter().sum()
    }

    pub fn names(&self) -> &[&'static str] {
        &self.names
    }

    /// Offset and size of the contiguous span from block `first` to block
    /// `last` inclusive.
    pub fn span(&self, first: &str, last: &str) -> (usize, usize) {
        let (i, j) = (self.index(first), self.index(last));
        assert!(i <= j, "block {first} comes after {last}");
        let start = self.offsets[i];
        let end = self.offsets[j] + self.sizes[j];
        (start, end - start)
    }
}

/// Dense matrix addressed by named row and column blocks.
#[derive(Debug, Clone)]
pub struct BlockMatrix<'a> {
    rows: &'a BlockLayout,
    cols: &'a BlockLayout,
    data: Matrix,
}

impl<'a> BlockMatrix<'a> {
    pub fn zeros(rows: &'a BlockLayout, cols: &'a BlockLayout) -> Self {
        Self {
            rows,
            cols,
            data: Matrix::zeros(rows.dim(), cols.dim()),
        }
    }

    /// Writes `value` into block `(row, col)`. Panics on a shape mismatch.
    pub fn set(&mut self, row: &str, col: &str, value: &Matrix) -> &mut Self {
        let (r, c) = (self.rows.offset(row), self.cols.offset(col));
        let shape = (self.rows.size(row), self.cols.size(col));
        assert_eq!(
            value.shape(),
            shape,
            "block ({row}, {col}) expects {shape:?}"
        );
        self.data.view_mut((r, c), shape).copy_from(value);
        self
    }

    /// Writes `value` into a span of row blocks and a span of column blocks.
    pub fn set_span(
        &mut self,
        rows: (&str, &str),
        cols: (&str, &str),
        value: &Matrix,
    ) -> &mut Self {
        let (r, nr) = self.rows.span(rows.0, rows.1);
        let (c, nc) = self.cols.span(cols.0, cols.1);
        assert_eq!(value.shape(), (nr, nc), "span {rows:?} x {cols:?}");
        self.data.view_mut((r, c), (nr, nc)).copy_from(value);
        self
    }

    /// Writes `value` at `(row, col)` and `valueᵀ` at `(col, row)`; both
    /// layouts must be the same.
    pub fn set_sym(&mut self, row: &str, col: &str, value: &Matrix) -> &mut Self {
        self.set(row, col, value);
        self.set(col, row, &value.transpose())
    }

    pub fn block(&self, row: &str, col: &str) -> Matrix {
        let (r, c) = (self.rows.offset(row), self.cols.offset(col));
        self.data
            .view((r, c), (self.rows.size(row), self.cols.size(col)))
            .into_owned()
    }

    pub fn into_matrix(self) -> Matrix {
        self.data
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.data
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn m(rows: usize, cols: usize, data: &[f64]) -> Matrix {
        Matrix::from_row_slice(rows, cols, data)
    }

    #[test]
    fn expm_scalar_and_diagonal() {
        let e = expm(&m(1, 1, &[-1.0]));
        assert_relative_eq!(e[(0, 0)], libm::exp(-1.0), max_relative = 1e-14);
        let e = expm(&m(2, 2, &[3.0, 0.0, 0.0, -20.0]));
        assert_relative_eq!(e[(0, 0)], libm::exp(3.0), max_relative = 1e-13);
        assert_relative_eq!(e[(1, 1)], libm::exp(-20.0), max_relative = 1e-12);
        assert_eq!(e[(0, 1)], 0.0);
    }

    #[test]
    fn expm_nilpotent_and_rotation() {
        // exp([[0,1],[0,0]]·t) = [[1,t],[0,1]]
        let e = expm(&m(2, 2, &[0.0, 7.5, 0.0, 0.0]));
        assert_relative_eq!(e, m(2, 2, &[1.0, 7.5, 0.0, 1.0]), epsilon = 1e-12);
        // large-norm rotation exercises the squaring phase
        let w = 40.0;
        let e = expm(&m(2, 2, &[0.0, -w, w, 0.0]));
        let (s, c) = (libm::sin(w), libm::cos(w));
        assert_relative_eq!(e, m(2, 2, &[c, -s, s, c]), epsilon = 1e-11);
    }

    #[test]
    fn inertia_counts_relative_zeros() {
        let p = Matrix::from_diagonal(&crate::Vector::from_vec(alloc::vec![-1.0, 1e-12, 4.0]));
        let i = Inertia::of(&p, 1e-9);
        assert_eq!((i.negative, i.zero, i.positive), (1, 1, 1));
        let i = Inertia::of(&Matrix::zeros(2, 2), 1e-9);
        assert_eq!(i.zero, 2);
    }

    #[test]
    fn sym_inverse_reports_condition() {
        let p = m(2, 2, &[-1.0, 0.0, 0.0, 4.0]);
        let (inv, cond) = sym_inverse(&p).unwrap();
        assert_relative_eq!(inv, m(2, 2, &[-1.0, 0.0, 0.0, 0.25]), epsilon = 1e-15);
        assert_relative_eq!(cond, 4.0, epsilon = 1e-12);
        assert!(sym_inverse(&m(2, 2, &[1.0, 0.0, 0.0, 0.0])).is_none());
    }

    #[test]
    fn rank_and_norm() {
        let z = m(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        assert_eq!(rank(&z, 1e-12), 1);
        assert_relative_eq!(spectral_norm(&m(2, 2, &[3.0, 0.0, 0.0, -5.0])), 5.0, epsilon = 1e-14);
    }

    #[test]
    fn block_layout_offsets_and_spans() {
        let l = BlockLayout::new(&[("a", 1), ("b", 2), ("c", 3)]);
        assert_eq!(l.dim(), 6);
        assert_eq!(l.offset("c"), 3);
        assert_eq!(l.span("b", "c"), (1, 5));
    }

    #[test]
    fn block_matrix_places_scalar_blocks() {
        // 1x1 blocks reproduce a hand-written matrix entry by entry
        let rows = BlockLayout::new(&[("r0", 1), ("r1", 1)]);
        let cols = BlockLayout::new(&[("c0", 1), ("c1", 1), ("c2", 1)]);
        let mut b = BlockMatrix::zeros(&rows, &cols);
        b.set("r0", "c2", &m(1, 1, &[5.0]))
            .set("r1", "c0", &m(1, 1, &[-2.0]))
            .set_span(("r0", "r1"), ("c1", "c1"), &m(2, 1, &[1.0, 3.0]));
        assert_eq!(b.into_matrix(), m(2, 3, &[0.0, 1.0, 5.0, -2.0, 3.0, 0.0]));

        let sq = BlockLayout::new(&[("x", 1), ("y", 2)]);
        let mut s = BlockMatrix::zeros(&sq, &sq);
        s.set_sym("y", "x", &m(2, 1, &[1.0, 2.0]));
        assert_eq!(s.block("x", "y"), m(1, 2, &[1.0, 2.0]));
        assert_eq!(relative_asymmetry(s.as_matrix()), 0.0);
    }

    #[test]
    #[should_panic(expected = "expects")]
    fn block_matrix_rejects_wrong_shape() {
        let l = BlockLayout::new(&[("a", 2)]);
        let mut b = BlockMatrix::zeros(&l, &l);
        b.set("a", "a", &Matrix::zeros(1, 2));
    }
}
