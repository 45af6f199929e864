//! Small dense helpers shared by the ODE, Green and transform layers.

use nalgebra::{DMatrix, Matrix4, Vector4};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type M4 = Matrix4<C64>;
pub type V4 = Vector4<C64>;

pub const I: C64 = C64::new(0.0, 1.0);

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Sum of component moduli.
pub fn norm1(v: &V4) -> f64 {
    v.iter().map(|z| z.norm()).sum()
}

pub fn max_abs(m: &M4) -> f64 {
    m.iter().fold(0.0, |a, z| a.max(z.norm()))
}

/// 2-norm condition number of a complex matrix via its singular values.
pub fn cond2(m: &DMatrix<C64>) -> f64 {
    let sv = m.clone().singular_values();
    let mx = sv.iter().cloned().fold(0.0, f64::max);
    let mn = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if mn == 0.0 {
        f64::INFINITY
    } else {
        mx / mn
    }
}

/// Orthonormal basis of the (numerical) null space of `m`, taking the
/// `dim` right singular vectors with the smallest singular values.
/// Returns the basis (columns) and the full singular value list (descending,
/// padded with zeros for wide matrices).
pub fn null_space(m: &DMatrix<C64>, dim: usize) -> (DMatrix<C64>, Vec<f64>) {
    let (r, cdim) = m.shape();
    // pad to square so the SVD returns a complete right basis
    let n = r.max(cdim);
    let mut sq = DMatrix::<C64>::zeros(n, cdim);
    sq.view_mut((0, 0), (r, cdim)).copy_from(m);
    let svd = sq.svd(false, true);
    let vt = svd.v_t.expect("v_t requested");
    let mut idx: Vec<usize> = (0..cdim).collect();
    idx.sort_by(|&a, &b| svd.singular_values[b].partial_cmp(&svd.singular_values[a]).unwrap());
    let sv: Vec<f64> = idx.iter().map(|&i| svd.singular_values[i]).collect();
    let mut out = DMatrix::<C64>::zeros(cdim, dim);
    for (col, &i) in idx.iter().rev().take(dim).enumerate() {
        for j in 0..cdim {
            out[(j, col)] = vt[(i, j)].conj();
        }
    }
    (out, sv)
}

pub fn to_dmatrix(m: &M4) -> DMatrix<C64> {
    DMatrix::from_fn(4, 4, |i, j| m[(i, j)])
}

pub fn vec4(a: [C64; 4]) -> V4 {
    Vector4::new(a[0], a[1], a[2], a[3])
}

pub fn mat4(a: [[C64; 4]; 4]) -> M4 {
    Matrix4::from_fn(|i, j| a[i][j])
}
