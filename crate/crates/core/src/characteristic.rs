//! Algebra of the constant-coefficient system: characteristic polynomial
//! p_c(mu) = mu^4 + 2 h_a mu^2 + h_p, ordered roots, the Vandermonde matrix
//! of the free solutions and the branch-point matrix Psi.

use num_complex::Complex;

use crate::error::{Result, SpecError};
use crate::linalg::{C64, M4};
use crate::problem::DerivedConstants;
use crate::scalar::Scalar;

pub type Cx<T> = Complex<T>;
pub type Mat4<T> = [[Cx<T>; 4]; 4];

/// Roots below this distance from each other make Pi numerically singular.
pub const MIN_ROOT_GAP: f64 = 1e-8;
/// Below this nu the third column of Psi switches to its Taylor series.
pub const NU_SWITCH: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    ComplexZ,
    RealAboveHp,
    BranchPoint,
}

#[derive(Clone, Copy, Debug)]
pub struct RootSystem<T: Scalar> {
    pub z: Cx<T>,
    pub mu: [Cx<T>; 4],
    /// only meaningful for real z >= h_p
    pub theta: T,
    pub nu: T,
    pub pi: Mat4<T>,
    pub pi_inv: Mat4<T>,
    pub regime: Regime,
}

pub fn p_char<T: Scalar>(mu: Cx<T>, k: &DerivedConstants<T>) -> Cx<T> {
    let m2 = mu * mu;
    m2 * m2 + m2 * (k.h_a + k.h_a) + k.h_p
}

pub fn p_char_deriv<T: Scalar>(mu: Cx<T>, k: &DerivedConstants<T>) -> Cx<T> {
    let four = T::lit(4.0);
    mu * mu * mu * four + mu * (four * k.h_a)
}

/// theta, nu with p_c(i theta) = p_c(nu) = lambda.
pub fn theta_nu<T: Scalar>(lambda: T, k: &DerivedConstants<T>) -> Result<(T, T)> {
    if !(lambda >= k.h_p) {
        return Err(SpecError::DomainError(format!("lambda = {lambda} below h_p = {}", k.h_p)));
    }
    let r = (lambda - k.h_m).sqrt();
    let theta = (r + k.h_a).sqrt();
    // r - h_a written without cancellation: r^2 - h_a^2 = lambda - h_p
    let nu = ((lambda - k.h_p) / (r + k.h_a)).sqrt();
    Ok((theta, nu))
}

fn zero<T: Scalar>() -> Cx<T> {
    Cx::new(T::zero(), T::zero())
}

fn sort_roots<T: Scalar>(mu: &mut [Cx<T>; 4]) {
    mu.sort_by(|a, b| {
        b.im.partial_cmp(&a.im)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(b.re.partial_cmp(&a.re).unwrap_or(std::cmp::Ordering::Equal))
    });
}

/// The four roots of p_c(mu) = z ordered by decreasing imaginary part,
/// ties broken by decreasing real part. Real z >= h_p must go through
/// [`real_roots`].
pub fn order_roots<T: Scalar>(z: Cx<T>, k: &DerivedConstants<T>) -> Result<RootSystem<T>> {
    let scale = T::one().max(z.norm());
    let tiny = T::lit(1e-14) * scale;
    let to64 = |v: Cx<T>| C64::new(v.re.to_f64_lossy(), v.im.to_f64_lossy());
    if (z - Cx::new(k.h_p, T::zero())).norm() <= tiny || (z - Cx::new(k.h_m, T::zero())).norm() <= tiny {
        return Err(SpecError::DegenerateRoots { z: to64(z) });
    }
    if z.im == T::zero() && z.re >= k.h_p {
        return Err(SpecError::DegenerateOrdering { z: to64(z) });
    }
    let mu = biquadratic_roots(z, k);
    let (pi, pi_inv) = vandermonde(&mu)?;
    Ok(RootSystem { z, mu, theta: T::nan(), nu: T::nan(), pi, pi_inv, regime: Regime::ComplexZ })
}

fn biquadratic_roots<T: Scalar>(z: Cx<T>, k: &DerivedConstants<T>) -> [Cx<T>; 4] {
    // w = mu^2 solves w^2 + 2 h_a w + h_p - z = 0; discriminant/4 = z - h_m
    let d = (z - k.h_m).sqrt();
    let wa = -(d + k.h_a);
    let wb = (Cx::new(k.h_p, T::zero()) - z) / wa;
    let (sa, sb) = (wa.sqrt(), wb.sqrt());
    let mut mu = [sa, -sa, sb, -sb];
    sort_roots(&mut mu);
    mu
}

/// Roots for real lambda >= h_p: (i theta, nu, -nu, -i theta). At lambda = h_p
/// the middle pair collapses and only Psi is usable.
pub fn real_roots<T: Scalar>(lambda: T, k: &DerivedConstants<T>) -> Result<RootSystem<T>> {
    let (theta, nu) = theta_nu(lambda, k)?;
    let o = T::zero();
    let mu = [Cx::new(o, theta), Cx::new(nu, o), Cx::new(-nu, o), Cx::new(o, -theta)];
    let z = Cx::new(lambda, o);
    if nu.to_f64_lossy() < MIN_ROOT_GAP {
        let nan = Cx::new(T::nan(), T::nan());
        return Ok(RootSystem { z, mu, theta, nu, pi: [[nan; 4]; 4], pi_inv: [[nan; 4]; 4], regime: Regime::BranchPoint });
    }
    let (pi, pi_inv) = vandermonde(&mu)?;
    Ok(RootSystem { z, mu, theta, nu, pi, pi_inv, regime: Regime::RealAboveHp })
}

/// Pi_{jk} = (i mu_k)^{j-1} and its inverse. Row k of the inverse holds the
/// monomial coefficients of the Lagrange basis polynomial for node i mu_k.
pub fn vandermonde<T: Scalar>(mu: &[Cx<T>; 4]) -> Result<(Mat4<T>, Mat4<T>)> {
    let mut gap = f64::INFINITY;
    for a in 0..4 {
        for b in a + 1..4 {
            gap = gap.min((mu[a] - mu[b]).norm().to_f64_lossy());
        }
    }
    if gap < MIN_ROOT_GAP {
        return Err(SpecError::SingularPi { gap });
    }
    let i = Cx::new(T::zero(), T::one());
    let x: Vec<Cx<T>> = mu.iter().map(|m| i * m).collect();
    let mut pi = [[zero::<T>(); 4]; 4];
    for k in 0..4 {
        let mut p = Cx::new(T::one(), T::zero());
        for row in pi.iter_mut() {
            row[k] = p;
            p = p * x[k];
        }
    }
    let mut inv = [[zero::<T>(); 4]; 4];
    for k in 0..4 {
        // coefficients of prod_{m != k} (t - x_m), lowest degree first
        let mut poly = vec![Cx::new(T::one(), T::zero())];
        let mut denom = Cx::new(T::one(), T::zero());
        for m in (0..4).filter(|&m| m != k) {
            let mut next = vec![zero::<T>(); poly.len() + 1];
            for (d, &cf) in poly.iter().enumerate() {
                next[d + 1] = next[d + 1] + cf;
                next[d] = next[d] - cf * x[m];
            }
            poly = next;
            denom = denom * (x[k] - x[m]);
        }
        for j in 0..4 {
            inv[k][j] = poly[j] / denom;
        }
    }
    Ok((pi, inv))
}

#[derive(Clone, Copy, Debug)]
pub struct BranchMatrix<T: Scalar> {
    pub x: T,
    pub lambda: T,
    pub psi: Mat4<T>,
    pub psi_inv: Mat4<T>,
}

/// Exponent rates i*mu of the diagonal factor D(x) paired with Psi, whose
/// columns behave like (e^{-theta x}, e^{i nu x}, e^{-i nu x}, e^{theta x}).
pub fn branch_rates<T: Scalar>(theta: T, nu: T) -> [Cx<T>; 4] {
    let o = T::zero();
    [Cx::new(-theta, o), Cx::new(o, nu), Cx::new(o, -nu), Cx::new(theta, o)]
}

/// Third column of Psi before the normalization factor:
/// (p3 - e^{2 i nu x} p2) / nu, written through its Taylor series for small nu.
fn branch_column<T: Scalar>(x: T, nu: T) -> [Cx<T>; 4] {
    let (c1, c2) = if nu.to_f64_lossy() > NU_SWITCH { column_closed(x, nu) } else { column_series(x, nu) };
    let n2 = nu * nu;
    [c1, c2, -c1 * n2, -c2 * n2]
}

fn column_closed<T: Scalar>(x: T, nu: T) -> (Cx<T>, Cx<T>) {
    let i = Cx::new(T::zero(), T::one());
    let e = (i * (nu + nu) * x).exp();
    ((Cx::new(T::one(), T::zero()) - e) / nu, -i * (e + T::one()))
}

fn column_series<T: Scalar>(x: T, nu: T) -> (Cx<T>, Cx<T>) {
    // 1 - e^{2 i nu x} = -sum_{n>=1} (2 i x)^n nu^{n-1} / n!
    let i = Cx::new(T::zero(), T::one());
    let a = i * (x + x);
    let mut term = a;
    let mut c1 = -term;
    let mut c2 = Cx::new(T::lit(2.0), T::zero()) + term * nu;
    for n in 2..10 {
        term = term * a * nu / T::lit(n as f64);
        c1 = c1 - term;
        c2 = c2 + term * nu;
    }
    (c1, -i * c2)
}

/// Branch-point solution matrix. Columns: free solutions for i theta and nu,
/// the scaled combination gamma (p3 - e^{2 i nu x} p2)/nu with
/// gamma = i / (2 (theta^2 + nu^2)), and the free solution for -i theta.
/// The scaling makes det Psi = 2 theta (theta^2 + nu^2).
pub fn branch_psi<T: Scalar>(x: T, lambda: T, k: &DerivedConstants<T>, lambda_s: T) -> Result<BranchMatrix<T>> {
    if !(lambda >= k.h_p && lambda <= lambda_s) {
        return Err(SpecError::DomainError(format!(
            "branch matrix needs lambda in [{}, {}], got {lambda}",
            k.h_p, lambda_s
        )));
    }
    let (theta, nu) = theta_nu(lambda, k)?;
    let psi = psi_matrix(x, theta, nu);
    let psi_inv = invert4(&psi).ok_or_else(|| SpecError::DomainError("Psi singular".into()))?;
    Ok(BranchMatrix { x, lambda, psi, psi_inv })
}

pub fn psi_matrix<T: Scalar>(x: T, theta: T, nu: T) -> Mat4<T> {
    let o = T::zero();
    let cols_mu = [Cx::new(o, theta), Cx::new(nu, o), Cx::new(o, -theta)];
    let i = Cx::new(o, T::one());
    let gamma = i / ((theta * theta + nu * nu) * T::lit(2.0));
    let third = branch_column(x, nu);
    let mut m = [[zero::<T>(); 4]; 4];
    for (col, mu) in [(0usize, cols_mu[0]), (1, cols_mu[1]), (3, cols_mu[2])] {
        let mut p = Cx::new(T::one(), o);
        for row in m.iter_mut() {
            row[col] = p;
            p = p * i * mu;
        }
    }
    for (r, row) in m.iter_mut().enumerate() {
        row[2] = third[r] * gamma;
    }
    m
}

/// Gauss elimination with partial pivoting; `None` for an exactly singular matrix.
pub fn invert4<T: Scalar>(m: &Mat4<T>) -> Option<Mat4<T>> {
    let mut a = *m;
    let one = Cx::new(T::one(), T::zero());
    let mut inv = [[zero::<T>(); 4]; 4];
    for (r, row) in inv.iter_mut().enumerate() {
        row[r] = one;
    }
    for col in 0..4 {
        let piv = (col..4).max_by(|&p, &q| a[p][col].norm().partial_cmp(&a[q][col].norm()).unwrap())?;
        if a[piv][col].norm() == T::zero() {
            return None;
        }
        a.swap(col, piv);
        inv.swap(col, piv);
        let d = a[col][col];
        for j in 0..4 {
            a[col][j] = a[col][j] / d;
            inv[col][j] = inv[col][j] / d;
        }
        for r in (0..4).filter(|&r| r != col) {
            let f = a[r][col];
            if f.norm() == T::zero() {
                continue;
            }
            for j in 0..4 {
                a[r][j] = a[r][j] - f * a[col][j];
                inv[r][j] = inv[r][j] - f * inv[col][j];
            }
        }
    }
    Some(inv)
}

pub fn det4<T: Scalar>(m: &Mat4<T>) -> Cx<T> {
    let mut a = *m;
    let mut det = Cx::new(T::one(), T::zero());
    for col in 0..4 {
        let piv = (col..4)
            .max_by(|&p, &q| a[p][col].norm().partial_cmp(&a[q][col].norm()).unwrap())
            .unwrap();
        if a[piv][col].norm() == T::zero() {
            return zero();
        }
        if piv != col {
            a.swap(col, piv);
            det = -det;
        }
        det = det * a[col][col];
        for r in col + 1..4 {
            let f = a[r][col] / a[col][col];
            for j in col..4 {
                a[r][j] = a[r][j] - f * a[col][j];
            }
        }
    }
    det
}

pub fn to_m4<T: Scalar>(m: &Mat4<T>) -> M4 {
    M4::from_fn(|i, j| C64::new(m[i][j].re.to_f64_lossy(), m[i][j].im.to_f64_lossy()))
}

pub fn mu_f64<T: Scalar>(rs: &RootSystem<T>) -> [C64; 4] {
    rs.mu.map(|m| C64::new(m.re.to_f64_lossy(), m.im.to_f64_lossy()))
}
