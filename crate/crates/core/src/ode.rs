//! Adaptive integration of the modulated system u' = (A(z) + B(x) - r) u,
//! where y = e^{r x} u solves y' = (A(z) + B(x)) y.
//!
//! `ode_solvers` compares |x| in its dense output, so every run is done in
//! the forward local variable s = |x - x_start| and the direction is folded
//! into the right-hand side. Dopri5 is used: the crate's Dop853 collapses to
//! ~1e-5 steps on smooth x-dependent systems and then reports stiffness.

use nalgebra::SVector;
use ode_solvers::dopri5::Dopri5;
use ode_solvers::System;

use crate::error::{Result, SpecError};
use crate::linalg::{C64, M4, V4};
use crate::problem::{a_full, OperatorSpec};

type State = SVector<f64, 8>;

struct Modulated {
    spec: OperatorSpec,
    a: M4,
    x_start: f64,
    dir: f64,
}

impl Modulated {
    fn matrix(&self, x: f64) -> M4 {
        self.a + self.spec.b_pert_matrix(x)
    }
}

impl System<f64, State> for Modulated {
    fn system(&self, s: f64, y: &State, dy: &mut State) {
        let x = self.x_start + self.dir * s;
        let u = V4::from_fn(|i, _| C64::new(y[2 * i], y[2 * i + 1]));
        let du = self.matrix(x) * u * C64::new(self.dir, 0.0);
        for i in 0..4 {
            dy[2 * i] = du[i].re;
            dy[2 * i + 1] = du[i].im;
        }
    }
}

fn pack(u: &V4) -> State {
    State::from_fn(|i, _| if i % 2 == 0 { u[i / 2].re } else { u[i / 2].im })
}

fn unpack(y: &State) -> V4 {
    V4::from_fn(|i, _| C64::new(y[2 * i], y[2 * i + 1]))
}

/// Values of u at x_start + dir * m * step for m = 0..=n_steps, where
/// y = e^{rate x} u solves the system at spectral parameter z.
pub fn integrate_grid(
    spec: &OperatorSpec,
    z: C64,
    rate: C64,
    x_start: f64,
    u0: V4,
    step: f64,
    n_steps: usize,
    dir: f64,
    rtol: f64,
) -> Result<Vec<V4>> {
    if n_steps == 0 {
        return Ok(vec![u0]);
    }
    let scale = crate::linalg::norm1(&u0).max(f64::MIN_POSITIVE);
    let a = a_full(z, &spec.consts()) - M4::identity() * rate;
    let sys = Modulated { spec: *spec, a, x_start, dir };
    // the crate's value at x_end itself is inaccurate (~1e-7 while interior
    // dense output is at tolerance), so run one output step further
    let s_end = step * (n_steps + 1) as f64;
    let mut solver = Dopri5::new(sys, 0.0, s_end, step, pack(&(u0 / C64::new(scale, 0.0))), rtol, rtol * 1e-3);
    solver.integrate().map_err(|e| match e {
        ode_solvers::dop_shared::IntegrationError::StepSizeUnderflow { x } => {
            SpecError::StepSizeUnderflow { x: x_start + dir * x }
        }
        other => SpecError::OdeFailure(format!("{other:?}")),
    })?;
    let mut out: Vec<Option<V4>> = vec![None; n_steps + 1];
    for (s, y) in solver.x_out().iter().zip(solver.y_out()) {
        let m = (s / step).round();
        if m >= 0.0 && (m as usize) <= n_steps && (s - m * step).abs() <= 1e-9 * step.max(1.0) {
            out[m as usize] = Some(unpack(y) * C64::new(scale, 0.0));
        }
    }
    out.into_iter()
        .enumerate()
        .map(|(m, v)| v.ok_or_else(|| SpecError::OdeFailure(format!("missing dense output at step {m}"))))
        .collect()
}

/// Long-range integration with renormalization: returns mantissas and the
/// natural log of the scale applied to each, y = e^{log_scale} e^{rate x} u.
pub fn integrate_scaled(
    spec: &OperatorSpec,
    z: C64,
    rate: C64,
    x_start: f64,
    u0: V4,
    step: f64,
    n_steps: usize,
    dir: f64,
    rtol: f64,
) -> Result<(Vec<V4>, Vec<f64>)> {
    let seg = ((4.0 / step).ceil() as usize).max(1);
    let mut vals = vec![u0];
    let mut logs = vec![0.0];
    let mut log_acc = 0.0;
    let mut cur = u0;
    let mut done = 0;
    while done < n_steps {
        let m = seg.min(n_steps - done);
        let x0 = x_start + dir * step * done as f64;
        let part = integrate_grid(spec, z, rate, x0, cur, step, m, dir, rtol)?;
        let last = part[m];
        let nrm = crate::linalg::norm1(&last).max(f64::MIN_POSITIVE);
        for p in part.iter().skip(1) {
            vals.push(*p);
            logs.push(log_acc);
        }
        log_acc += nrm.ln();
        cur = last / C64::new(nrm, 0.0);
        done += m;
    }
    Ok((vals, logs))
}

/// ||y1 - P y0|| / ||y1|| where P propagates the system from x0 to x1.
pub fn node_defect(spec: &OperatorSpec, z: C64, x0: f64, y0: &V4, x1: f64, y1: &V4, rtol: f64) -> Result<f64> {
    let dir = if x1 >= x0 { 1.0 } else { -1.0 };
    let p = integrate_grid(spec, z, C64::new(0.0, 0.0), x0, *y0, (x1 - x0).abs(), 1, dir, rtol)?;
    Ok(crate::linalg::norm1(&(y1 - p[1])) / crate::linalg::norm1(y1).max(f64::MIN_POSITIVE))
}

/// Residual ||y' - (A + B) y|| / ||y|| at the midpoint between two nodes,
/// using a cubic Hermite fit of y from node values and derivatives.
pub fn hermite_midpoint_residual(spec: &OperatorSpec, z: C64, x0: f64, y0: &V4, x1: f64, y1: &V4) -> f64 {
    let h = x1 - x0;
    let d0 = spec.system_matrix(z, x0) * y0;
    let d1 = spec.system_matrix(z, x1) * y1;
    let hc = C64::new(h, 0.0);
    // cubic Hermite value and derivative at t = 1/2
    let ym = (y0 + y1) * C64::new(0.5, 0.0) + (d0 - d1) * (hc / C64::new(8.0, 0.0));
    let dym = (y1 - y0) * (C64::new(1.5, 0.0) / hc) - (d0 + d1) * C64::new(0.25, 0.0);
    let xm = 0.5 * (x0 + x1);
    let r = dym - spec.system_matrix(z, xm) * ym;
    crate::linalg::norm1(&r) / crate::linalg::norm1(&ym).max(f64::MIN_POSITIVE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::characteristic::{real_roots, to_m4};

    #[test]
    fn free_exponentials_are_reproduced() {
        let spec = OperatorSpec::free();
        let rs = real_roots(6.0, &spec.consts()).unwrap();
        let pi = to_m4(&rs.pi);
        let mu1 = C64::new(rs.mu[0].re, rs.mu[0].im);
        let rate = C64::new(0.0, 1.0) * mu1;
        let p1 = pi.column(0).into_owned();
        // modulated solution is constant: u = p1 for all x, both directions
        for dir in [1.0, -1.0] {
            let vals = integrate_grid(&spec, C64::new(6.0, 0.0), rate, 0.0, p1, 0.1, 200, dir, 1e-12).unwrap();
            for v in &vals {
                assert!((v - p1).norm() <= 1e-8 * p1.norm());
            }
        }
    }

    #[test]
    fn growing_mode_across_the_line() {
        // e^{2x} p4 from -25 to 25 with log-scale bookkeeping
        let spec = OperatorSpec::free();
        let rs = real_roots(6.0, &spec.consts()).unwrap();
        let p4 = to_m4(&rs.pi).column(3).into_owned();
        let (vals, logs) =
            integrate_scaled(&spec, C64::new(6.0, 0.0), C64::new(0.0, 0.0), -25.0, p4, 0.05, 1000, 1.0, 1e-12).unwrap();
        for (m, (v, l)) in vals.iter().zip(&logs).enumerate() {
            let x = -25.0 + 0.05 * m as f64;
            let want_log = 2.0 * (x + 25.0);
            let got = v * C64::new((l - want_log).exp(), 0.0);
            assert!((got - p4).norm() <= 1e-8 * p4.norm(), "x = {x}");
        }
    }

    #[test]
    fn sech_is_a_zero_mode() {
        let spec = OperatorSpec::p2();
        let y = |x: f64| {
            let s = 1.0 / x.cosh();
            let t = x.tanh();
            V4::new(
                C64::new(s, 0.0),
                C64::new(-s * t, 0.0),
                C64::new(s * (2.0 * t * t - 1.0), 0.0),
                C64::new(s * t * (5.0 - 6.0 * t * t), 0.0),
            )
        };
        let vals = integrate_grid(&spec, C64::new(0.0, 0.0), C64::new(0.0, 0.0), 3.0, y(3.0), 0.01, 600, -1.0, 1e-12).unwrap();
        for (m, v) in vals.iter().enumerate() {
            let x = 3.0 - 0.01 * m as f64;
            assert!((v - y(x)).norm() < 1e-8, "x = {x}");
        }
        assert!(hermite_midpoint_residual(&spec, C64::new(0.0, 0.0), 0.0, &y(0.0), 0.01, &y(0.01)) < 1e-6);
    }
}
