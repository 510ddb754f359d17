//! Recursive inference of a learned gradient field.
//!
//! Each step runs a classical four-stage RK4 predictor and then solves the
//! implicit trapezoidal stencil
//!
//! ```text
//! R(x) = x - x_k - h/2 [F(x_k, t_k) + F(x, t_k + h)] = 0
//! ```
//!
//! by full Newton iteration `x <- x - (I - h/2 dF/dx)^-1 R` starting from the
//! predictor. Forcing is added to the second state component for autonomous
//! operators and passed as an input for the branch-trunk layout.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Extras, JacobianMatrix, OperatorNetwork};
use crate::oscillator::{self, Forcing, StateVec, SystemParams, Trajectory};

/// Anything that supplies a state gradient and its state Jacobian.
pub trait GradientModel: Sync {
    /// `true` when forcing is an input to the model rather than added to its output.
    fn forcing_as_input(&self) -> bool {
        false
    }

    /// Model gradient at `state`; `t` and `u` are only read when
    /// [`forcing_as_input`](Self::forcing_as_input) is `true`.
    fn gradient(&self, state: StateVec, t: f64, u: f64) -> StateVec;

    fn gradient_jacobian(&self, state: StateVec, t: f64, u: f64) -> (StateVec, JacobianMatrix);
}

impl GradientModel for OperatorNetwork {
    fn forcing_as_input(&self) -> bool {
        self.variant.takes_forcing()
    }

    fn gradient(&self, state: StateVec, t: f64, u: f64) -> StateVec {
        let extras = self.forcing_as_input().then_some(Extras { t, u });
        self.eval(state, extras)
    }

    fn gradient_jacobian(&self, state: StateVec, t: f64, u: f64) -> (StateVec, JacobianMatrix) {
        let extras = self.forcing_as_input().then_some(Extras { t, u });
        self.eval_with_jacobian(state, extras)
    }
}

/// The exact free-response field of a known oscillator, used in place of a
/// trained network to check the integrator and the analysis pipeline.
#[derive(Debug, Clone, Copy)]
pub struct TrueField(pub SystemParams);

impl GradientModel for TrueField {
    fn gradient(&self, state: StateVec, _t: f64, _u: f64) -> StateVec {
        oscillator::free_rhs(state, &self.0)
    }

    fn gradient_jacobian(&self, state: StateVec, _t: f64, _u: f64) -> (StateVec, JacobianMatrix) {
        (oscillator::free_rhs(state, &self.0), JacobianMatrix(self.0.state_matrix()))
    }
}

impl<M: GradientModel + ?Sized> GradientModel for &M {
    fn forcing_as_input(&self) -> bool {
        (**self).forcing_as_input()
    }
    fn gradient(&self, state: StateVec, t: f64, u: f64) -> StateVec {
        (**self).gradient(state, t, u)
    }
    fn gradient_jacobian(&self, state: StateVec, t: f64, u: f64) -> (StateVec, JacobianMatrix) {
        (**self).gradient_jacobian(state, t, u)
    }
}

/// Full gradient including forcing: `G(x) + (0, u(t))`, or `G(x, t, u(t))`
/// when the model takes forcing as an input.
pub fn augmented_rhs<M: GradientModel + ?Sized>(model: &M, state: StateVec, t: f64, forcing: &Forcing) -> StateVec {
    let u = forcing.accel(t);
    let g = model.gradient(state, t, u);
    if model.forcing_as_input() {
        g
    } else {
        StateVec::new(g.q, g.qdot + u)
    }
}

fn augmented_with_jacobian<M: GradientModel + ?Sized>(
    model: &M,
    state: StateVec,
    t: f64,
    u: f64,
) -> (StateVec, JacobianMatrix) {
    let (g, j) = model.gradient_jacobian(state, t, u);
    if model.forcing_as_input() {
        (g, j)
    } else {
        (StateVec::new(g.q, g.qdot + u), j)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastConfig {
    pub dt: f64,
    pub n_steps: usize,
    #[serde(default = "default_tol")]
    pub newton_tol: f64,
    #[serde(default = "default_iters")]
    pub max_newton_iters: usize,
    pub forcing: Forcing,
}

pub const DEFAULT_NEWTON_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_NEWTON_ITERS: usize = 8;

fn default_tol() -> f64 {
    DEFAULT_NEWTON_TOL
}

fn default_iters() -> usize {
    DEFAULT_MAX_NEWTON_ITERS
}

impl ForecastConfig {
    pub fn new(dt: f64, n_steps: usize, forcing: Forcing) -> Self {
        ForecastConfig {
            dt,
            n_steps,
            newton_tol: default_tol(),
            max_newton_iters: default_iters(),
            forcing,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::Domain(format!("forecast step must be > 0, got {}", self.dt)));
        }
        if !(self.newton_tol > 0.0) {
            return Err(Error::Domain("Newton tolerance must be > 0".into()));
        }
        self.forcing.validate()
    }
}

/// The explicit RK4 predictor `y**_{i+1}` from `state_k` at `t_k`.
pub fn rk4_predict<M: GradientModel + ?Sized>(
    model: &M,
    state_k: StateVec,
    t_k: f64,
    dt: f64,
    forcing: &Forcing,
) -> Result<StateVec> {
    let f_k = augmented_rhs(model, state_k, t_k, forcing);
    rk4_from(model, state_k, f_k, t_k, dt, forcing)
}

/// RK4 with the first stage `f_k` already known.
fn rk4_from<M: GradientModel + ?Sized>(
    model: &M,
    y: StateVec,
    f_k: StateVec,
    t: f64,
    h: f64,
    forcing: &Forcing,
) -> Result<StateVec> {
    let f = |s: StateVec, t: f64| augmented_rhs(model, s, t, forcing);
    let k2 = f(y + f_k * (0.5 * h), t + 0.5 * h);
    let k3 = f(y + k2 * (0.5 * h), t + 0.5 * h);
    let k4 = f(y + k3 * h, t + h);
    let out = y + (f_k + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    if !out.is_finite() {
        return Err(Error::NonFinite(format!("RK4 predictor at t = {t}")));
    }
    Ok(out)
}

/// Result of one implicit step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonStep {
    pub state: StateVec,
    pub iters: usize,
    /// Infinity norm of the trapezoid residual at `state`.
    pub residual: f64,
    pub converged: bool,
    /// Full gradient (model plus forcing) at `state`, reusable as the next step's first stage.
    pub gradient: StateVec,
}

/// One implicit trapezoidal step solved by Newton-Raphson from the RK4 predictor.
///
/// The step is accepted when `||R||_inf <= tol`; after `max_iters` updates the
/// last iterate is returned with `converged = false`.
pub fn trapezoid_newton_step<M: GradientModel + ?Sized>(
    model: &M,
    state_k: StateVec,
    t_k: f64,
    dt: f64,
    forcing: &Forcing,
    tol: f64,
    max_iters: usize,
) -> Result<NewtonStep> {
    let f_k = augmented_rhs(model, state_k, t_k, forcing);
    step_from(model, state_k, f_k, t_k, dt, forcing, tol, max_iters)
}

#[allow(clippy::too_many_arguments)]
fn step_from<M: GradientModel + ?Sized>(
    model: &M,
    state_k: StateVec,
    f_k: StateVec,
    t_k: f64,
    dt: f64,
    forcing: &Forcing,
    tol: f64,
    max_iters: usize,
) -> Result<NewtonStep> {
    let guess = rk4_from(model, state_k, f_k, t_k, dt, forcing)?;
    newton_solve(model, state_k, f_k, t_k, dt, forcing, tol, max_iters, guess)
}

#[allow(clippy::too_many_arguments)]
fn newton_solve<M: GradientModel + ?Sized>(
    model: &M,
    state_k: StateVec,
    f_k: StateVec,
    t_k: f64,
    dt: f64,
    forcing: &Forcing,
    tol: f64,
    max_iters: usize,
    guess: StateVec,
) -> Result<NewtonStep> {
    let t1 = t_k + dt;
    let u1 = forcing.accel(t1);
    let half = 0.5 * dt;
    let mut x = guess;
    let residual_at = |x: StateVec, f1: StateVec| x - state_k - (f_k + f1) * half;
    let mut iters = 0;
    loop {
        let f1 = augmented_rhs(model, x, t1, forcing);
        let r = residual_at(x, f1);
        let rn = r.norm_inf();
        if !rn.is_finite() {
            return Err(Error::NonFinite(format!("Newton residual at t = {t1}")));
        }
        if rn <= tol {
            return Ok(NewtonStep { state: x, iters, residual: rn, converged: true, gradient: f1 });
        }
        if iters >= max_iters {
            return Ok(NewtonStep { state: x, iters, residual: rn, converged: false, gradient: f1 });
        }
        let (_, jac) = augmented_with_jacobian(model, x, t1, u1);
        let j = jac.0;
        // dR/dx = I - h/2 J
        let m = [
            [1.0 - half * j[0][0], -half * j[0][1]],
            [-half * j[1][0], 1.0 - half * j[1][1]],
        ];
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        if !(det.abs() >= 1e-14) {
            return Err(Error::SingularJacobian { step: 0, det });
        }
        let dq = (m[1][1] * r.q - m[0][1] * r.qdot) / det;
        let dv = (-m[1][0] * r.q + m[0][0] * r.qdot) / det;
        x = StateVec::new(x.q - dq, x.qdot - dv);
        iters += 1;
    }
}

/// A forecast trajectory with per-step solver diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastResult {
    pub trajectory: Trajectory,
    /// Newton iterations of step `k` (state `k` to `k + 1`).
    pub newton_iters: Vec<u32>,
    pub residuals: Vec<f64>,
    /// Every completed step met the Newton tolerance.
    pub converged: bool,
    /// Index of the step that failed outright, if the trajectory was truncated.
    pub failure: Option<(usize, String)>,
}

impl ForecastResult {
    pub fn is_complete(&self) -> bool {
        self.failure.is_none()
    }

    /// Write the `step,newton_iters,residual` sidecar CSV.
    pub fn write_sidecar<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "step,newton_iters,residual")?;
        for (k, (it, r)) in self.newton_iters.iter().zip(&self.residuals).enumerate() {
            writeln!(w, "{k},{it},{r:.16e}")?;
        }
        Ok(())
    }

    pub fn save_sidecar(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        self.write_sidecar(&mut buf).map_err(|e| Error::io(path, e))?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }
}

/// March `n_steps` implicit steps from `ic` at `t = 0`.
pub fn forecast<M: GradientModel + ?Sized>(model: &M, ic: StateVec, config: &ForecastConfig) -> Result<ForecastResult> {
    config.validate()?;
    let dt = config.dt;
    let forcing = &config.forcing;
    let mut traj = Trajectory::with_capacity(0.0, dt, config.n_steps + 1);
    let mut iters = Vec::with_capacity(config.n_steps);
    let mut residuals = Vec::with_capacity(config.n_steps);
    let mut converged = true;
    let mut failure = None;
    let mut state = ic;
    let mut f_k = augmented_rhs(model, state, 0.0, forcing);
    traj.push(state, forcing.accel(0.0));
    for k in 0..config.n_steps {
        let t_k = k as f64 * dt;
        let step = step_from(model, state, f_k, t_k, dt, forcing, config.newton_tol, config.max_newton_iters)
            .and_then(|s| {
                if s.state.is_finite() {
                    Ok(s)
                } else {
                    Err(Error::NonFinite(format!("state at step {k}")))
                }
            });
        match step {
            Ok(s) => {
                converged &= s.converged;
                iters.push(s.iters as u32);
                residuals.push(s.residual);
                state = s.state;
                f_k = s.gradient;
                traj.push(state, forcing.accel(t_k + dt));
            }
            Err(e) => {
                let msg = match e {
                    Error::SingularJacobian { det, .. } => Error::SingularJacobian { step: k, det }.to_string(),
                    other => other.to_string(),
                };
                failure = Some((k, msg));
                break;
            }
        }
    }
    if traj.len() < 2 {
        // keep the two-sample trajectory invariant even when the first step fails
        traj.push(state, forcing.accel(dt));
        converged = false;
    }
    Ok(ForecastResult {
        trajectory: traj,
        newton_iters: iters,
        residuals,
        converged,
        failure,
    })
}

/// Forecast many independent conditions. Results are in input order and
/// identical to sequential [`forecast`] calls; `workers = Some(1)` runs on the
/// calling thread.
pub fn forecast_batch<M: GradientModel + ?Sized>(
    model: &M,
    conditions: &[(StateVec, ForecastConfig)],
    workers: Option<usize>,
) -> Result<Vec<Result<ForecastResult>>> {
    if conditions.is_empty() {
        return Err(Error::Domain("forecast batch is empty".into()));
    }
    Ok(run_parallel(workers, conditions, |(ic, cfg)| forecast(model, *ic, cfg)))
}

/// Map `f` over `items` on `workers` threads (all cores when `None`),
/// preserving order.
pub(crate) fn run_parallel<T: Sync, R: Send>(
    workers: Option<usize>,
    items: &[T],
    f: impl Fn(&T) -> R + Sync + Send,
) -> Vec<R> {
    match workers {
        Some(1) => items.iter().map(f).collect(),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
            Err(_) => items.iter().map(f).collect(),
        },
        None => items.par_iter().map(f).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{ArchitectureConfig, Variant};

    fn zero_net() -> OperatorNetwork {
        OperatorNetwork::zeros(&ArchitectureConfig::default_for(Variant::AmplitudePhase)).unwrap()
    }

    #[test]
    fn augmented_rhs_adds_forcing() {
        let f = Forcing::Sampled(oscillator::SampledForcing { t0: 0.0, dt: 1.0, values: vec![1.0, 1.0] });
        assert_eq!(augmented_rhs(&zero_net(), StateVec::new(0.3, 0.2), 0.5, &f), StateVec::new(0.0, 1.0));
        let p = SystemParams::ls1();
        let g = Forcing::harmonic(1.0, 1.7);
        for &(q, v, t) in &[(0.1, 0.2, 0.0), (-1.0, 0.5, 3.3)] {
            let s = StateVec::new(q, v);
            assert_eq!(augmented_rhs(&TrueField(p), s, t, &g), oscillator::rhs(s, t, &g, &p));
        }
    }

    #[test]
    fn zero_net_zero_forcing_is_a_fixed_point() {
        let s = StateVec::new(0.3, -0.1);
        assert_eq!(rk4_predict(&zero_net(), s, 0.0, 0.01, &Forcing::Free).unwrap(), s);
        let step = trapezoid_newton_step(&zero_net(), s, 0.0, 0.01, &Forcing::Free, 1e-10, 8).unwrap();
        assert_eq!(step.state, s);
        assert_eq!(step.iters, 0);
        assert!(step.converged);
    }

    #[test]
    fn predictor_reproduces_reference_step() {
        let p = SystemParams::ls1();
        let f = Forcing::harmonic(1.0, 3.77);
        let ic = StateVec::new(0.2, 0.0);
        let reference = oscillator::reference_integrate(&p, &f, ic, 0.01, 1).unwrap();
        let pred = rk4_predict(&TrueField(p), ic, 0.0, 0.01, &f).unwrap();
        assert!((pred - reference.last()).norm_inf() <= 1e-14);
    }

    /// Closed-form linear trapezoid step:
    /// `(I - h/2 A)^-1 [(I + h/2 A) x_k + h/2 (b_k + b_{k+1})]`.
    fn linear_trapezoid(p: &SystemParams, x: StateVec, t: f64, h: f64, f: &Forcing) -> StateVec {
        let a = p.state_matrix();
        let c = 0.5 * h;
        let m = [[1.0 - c * a[0][0], -c * a[0][1]], [-c * a[1][0], 1.0 - c * a[1][1]]];
        let rhs0 = x.q + c * (a[0][0] * x.q + a[0][1] * x.qdot);
        let rhs1 = x.qdot + c * (a[1][0] * x.q + a[1][1] * x.qdot) + c * (f.accel(t) + f.accel(t + h));
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        StateVec::new(
            (m[1][1] * rhs0 - m[0][1] * rhs1) / det,
            (-m[1][0] * rhs0 + m[0][0] * rhs1) / det,
        )
    }

    #[test]
    fn newton_step_matches_linear_trapezoid() {
        let p = SystemParams::ls1();
        let f = Forcing::harmonic(1.0, 3.77);
        let mut x = StateVec::new(0.2, 0.0);
        for k in 0..200 {
            let t = k as f64 * 0.01;
            let step = trapezoid_newton_step(&TrueField(p), x, t, 0.01, &f, 1e-10, 8).unwrap();
            let exact = linear_trapezoid(&p, x, t, 0.01, &f);
            assert!((step.state - exact).norm_inf() <= 1e-12);
            assert!(step.converged && step.iters <= 2);
            x = step.state;
        }
    }

    #[test]
    fn iteration_cap_flags_nonconvergence() {
        let p = SystemParams::ls1();
        let f = Forcing::harmonic(1.0, 3.77);
        let step = trapezoid_newton_step(&TrueField(p), StateVec::new(0.2, 0.0), 0.0, 0.01, &f, 1e-30, 2).unwrap();
        assert!(!step.converged);
        assert_eq!(step.iters, 2);
    }

    #[test]
    fn singular_residual_jacobian_is_an_error() {
        // J = (2/h) I makes I - h/2 J vanish
        struct Singular;
        impl GradientModel for Singular {
            fn gradient(&self, s: StateVec, _: f64, _: f64) -> StateVec {
                s * 200.0
            }
            fn gradient_jacobian(&self, s: StateVec, _: f64, _: f64) -> (StateVec, JacobianMatrix) {
                (s * 200.0, JacobianMatrix([[200.0, 0.0], [0.0, 200.0]]))
            }
        }
        let r = trapezoid_newton_step(&Singular, StateVec::new(1.0, 1.0), 0.0, 0.01, &Forcing::Free, 1e-10, 8);
        assert!(matches!(r, Err(Error::SingularJacobian { .. })));
        let res = forecast(&Singular, StateVec::new(1.0, 1.0), &ForecastConfig::new(0.01, 10, Forcing::Free)).unwrap();
        assert_eq!(res.failure.as_ref().map(|f| f.0), Some(0));
    }

    #[test]
    fn trapezoid_forecast_is_second_order() {
        let p = SystemParams::ls1();
        let f = Forcing::harmonic(1.0, 3.77);
        let ic = StateVec::new(0.2, 0.0);
        let err = |dt: f64| {
            let n = (10.0 / dt).round() as usize;
            let res = forecast(&TrueField(p), ic, &ForecastConfig::new(dt, n, f.clone())).unwrap();
            let exact = oscillator::analytic_trajectory(&p, &f, ic, dt, n).unwrap();
            res.trajectory
                .states()
                .zip(exact.states())
                .map(|(a, b)| (a - b).norm_inf())
                .fold(0.0, f64::max)
        };
        let ratio = err(0.02) / err(0.01);
        assert!((ratio - 4.0).abs() < 0.4, "ratio {ratio}");
    }

    #[test]
    fn batch_matches_sequential_and_permutes() {
        let p = SystemParams::ls1();
        let conds: Vec<_> = [0.5, 1.0, 2.0, 3.77]
            .iter()
            .map(|&w| (StateVec::new(0.2, 0.0), ForecastConfig::new(0.01, 300, Forcing::harmonic(1.0, w))))
            .collect();
        let batch = forecast_batch(&TrueField(p), &conds, Some(2)).unwrap();
        for (c, b) in conds.iter().zip(&batch) {
            assert_eq!(b.as_ref().unwrap(), &forecast(&TrueField(p), c.0, &c.1).unwrap());
        }
        let mut rev = conds.clone();
        rev.reverse();
        let rb = forecast_batch(&TrueField(p), &rev, Some(1)).unwrap();
        for (a, b) in batch.iter().zip(rb.iter().rev()) {
            assert_eq!(a.as_ref().unwrap(), b.as_ref().unwrap());
        }
        assert!(forecast_batch(&TrueField(p), &[], None).is_err());
    }

    #[test]
    fn sidecar_has_one_row_per_step() {
        let p = SystemParams::ls1();
        let res = forecast(&TrueField(p), StateVec::new(0.2, 0.0), &ForecastConfig::new(0.01, 5, Forcing::Free)).unwrap();
        let mut buf = Vec::new();
        res.write_sidecar(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 6);
        assert!(text.starts_with("step,newton_iters,residual\n0,"));
    }
}
