//! Ground-truth physics of the forced, viscously damped single-DOF oscillator.
//!
//! The governing equation in state form is
//!
//! ```text
//! q'  = qdot
//! q'' = u(t) - 2 xi omega_n qdot - omega_n^2 q
//! ```
//!
//! where `u(t)` is a per-unit-mass forcing acceleration. Base excitation is
//! handled in relative coordinates `z = x - y`, where the forcing becomes
//! `Y omega^2 cos(omega t)` and carries no system parameters.

use std::f64::consts::PI;
use std::fmt;
use std::io::{BufRead, Write};
use std::ops::{Add, Mul, Sub};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Damping ratio, natural frequency and (optionally) the normalization length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub xi: f64,
    pub omega_n: f64,
    #[serde(default)]
    pub length_scale: Option<f64>,
}

impl SystemParams {
    pub fn new(xi: f64, omega_n: f64) -> Result<Self> {
        let p = SystemParams {
            xi,
            omega_n,
            length_scale: None,
        };
        p.validate()?;
        Ok(p)
    }

    /// The nondimensional universal oscillator with `xi = 0.2`.
    pub fn ls1() -> Self {
        SystemParams {
            xi: 0.2,
            omega_n: 1.0,
            length_scale: Some(1.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.xi > 0.0 && self.xi.is_finite()) {
            return Err(Error::Domain(format!("damping ratio must be > 0, got {}", self.xi)));
        }
        if !(self.omega_n > 0.0 && self.omega_n.is_finite()) {
            return Err(Error::Domain(format!(
                "natural frequency must be > 0, got {}",
                self.omega_n
            )));
        }
        Ok(())
    }

    /// State matrix of the free response, `[[0, 1], [-omega_n^2, -2 xi omega_n]]`.
    pub fn state_matrix(&self) -> [[f64; 2]; 2] {
        [
            [0.0, 1.0],
            [-self.omega_n * self.omega_n, -2.0 * self.xi * self.omega_n],
        ]
    }

    /// Frequency ratio of the steady-state amplitude peak, `sqrt(1 - 2 xi^2)`.
    /// `None` when the response has no interior peak (`xi >= 1/sqrt(2)`).
    pub fn amplitude_peak_ratio(&self) -> Option<f64> {
        let s = 1.0 - 2.0 * self.xi * self.xi;
        (s > 0.0).then(|| s.sqrt())
    }

    /// Damped natural frequency ratio, `sqrt(1 - xi^2)`; `None` unless underdamped.
    pub fn damped_ratio(&self) -> Option<f64> {
        let s = 1.0 - self.xi * self.xi;
        (s > 0.0).then(|| s.sqrt())
    }
}

/// Mass, damping and stiffness to `(xi, omega_n, L)` with `L = A / omega_n^2`.
pub fn nondimensionalize(
    mass: f64,
    damping_coeff: f64,
    stiffness: f64,
    drive_accel: f64,
) -> Result<(f64, f64, f64)> {
    if !(mass > 0.0) || !(stiffness > 0.0) {
        return Err(Error::Domain(format!(
            "mass and stiffness must be positive (m = {mass}, k = {stiffness})"
        )));
    }
    if !(damping_coeff >= 0.0) {
        return Err(Error::Domain(format!(
            "damping coefficient must be non-negative, got {damping_coeff}"
        )));
    }
    let xi = damping_coeff / (2.0 * (mass * stiffness).sqrt());
    let omega_n = (stiffness / mass).sqrt();
    let length_scale = drive_accel / (omega_n * omega_n);
    Ok((xi, omega_n, length_scale))
}

/// Uniformly sampled acceleration record with linear interpolation between samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledForcing {
    pub t0: f64,
    pub dt: f64,
    pub values: Vec<f64>,
}

impl SampledForcing {
    pub fn at(&self, t: f64) -> f64 {
        let n = self.values.len();
        if n == 0 {
            return 0.0;
        }
        let s = (t - self.t0) / self.dt;
        if s <= 0.0 {
            return self.values[0];
        }
        let i = s.floor() as usize;
        if i + 1 >= n {
            return self.values[n - 1];
        }
        let frac = s - i as f64;
        self.values[i] + frac * (self.values[i + 1] - self.values[i])
    }
}

/// External excitation, expressed as the acceleration `u(t)` it injects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Forcing {
    Free,
    /// `u(t) = A cos(omega t)`.
    HarmonicForce { amplitude: f64, omega: f64 },
    /// Base displacement `Y cos(omega t)`; in relative coordinates
    /// `u(t) = Y omega^2 cos(omega t)`.
    HarmonicBase { amplitude: f64, omega: f64 },
    Sampled(SampledForcing),
}

impl Forcing {
    pub fn harmonic(amplitude: f64, omega: f64) -> Self {
        Forcing::HarmonicForce { amplitude, omega }
    }

    pub fn base(amplitude: f64, omega: f64) -> Self {
        Forcing::HarmonicBase { amplitude, omega }
    }

    pub fn accel(&self, t: f64) -> f64 {
        match self {
            Forcing::Free => 0.0,
            Forcing::HarmonicForce { amplitude, omega } => amplitude * (omega * t).cos(),
            Forcing::HarmonicBase { amplitude, omega } => base_forcing_accel(*amplitude, *omega, t),
            Forcing::Sampled(s) => s.at(t),
        }
    }

    pub fn omega(&self) -> Option<f64> {
        match self {
            Forcing::HarmonicForce { omega, .. } | Forcing::HarmonicBase { omega, .. } => {
                Some(*omega)
            }
            _ => None,
        }
    }

    /// Amplitude of the equivalent `A cos(omega t)` acceleration.
    pub fn accel_amplitude(&self) -> Option<f64> {
        match self {
            Forcing::HarmonicForce { amplitude, .. } => Some(*amplitude),
            Forcing::HarmonicBase { amplitude, omega } => Some(amplitude * omega * omega),
            Forcing::Free => Some(0.0),
            Forcing::Sampled(_) => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Forcing::HarmonicForce { amplitude, omega } | Forcing::HarmonicBase { amplitude, omega } => {
                if !(*omega > 0.0 && omega.is_finite()) || !amplitude.is_finite() {
                    return Err(Error::Domain(format!(
                        "harmonic forcing needs omega > 0 and finite amplitude (omega = {omega}, amplitude = {amplitude})"
                    )));
                }
            }
            Forcing::Sampled(s) => {
                if !(s.dt > 0.0) || s.values.is_empty() {
                    return Err(Error::Domain("sampled forcing needs dt > 0 and samples".into()));
                }
            }
            Forcing::Free => {}
        }
        Ok(())
    }
}

/// Base forcing in relative coordinates, per unit mass: `Y omega^2 cos(omega t)`.
pub fn base_forcing_accel(base_amplitude: f64, omega: f64, t: f64) -> f64 {
    base_amplitude * omega * omega * (omega * t).cos()
}

/// Position/velocity pair.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StateVec {
    pub q: f64,
    pub qdot: f64,
}

impl StateVec {
    pub const ZERO: StateVec = StateVec { q: 0.0, qdot: 0.0 };

    pub const fn new(q: f64, qdot: f64) -> Self {
        StateVec { q, qdot }
    }

    pub fn from_array(a: [f64; 2]) -> Self {
        StateVec { q: a[0], qdot: a[1] }
    }

    pub fn to_array(self) -> [f64; 2] {
        [self.q, self.qdot]
    }

    pub fn norm_inf(self) -> f64 {
        self.q.abs().max(self.qdot.abs())
    }

    pub fn norm(self) -> f64 {
        self.q.hypot(self.qdot)
    }

    pub fn is_finite(self) -> bool {
        self.q.is_finite() && self.qdot.is_finite()
    }
}

impl Add for StateVec {
    type Output = StateVec;
    fn add(self, o: StateVec) -> StateVec {
        StateVec::new(self.q + o.q, self.qdot + o.qdot)
    }
}

impl Sub for StateVec {
    type Output = StateVec;
    fn sub(self, o: StateVec) -> StateVec {
        StateVec::new(self.q - o.q, self.qdot - o.qdot)
    }
}

impl Mul<f64> for StateVec {
    type Output = StateVec;
    fn mul(self, s: f64) -> StateVec {
        StateVec::new(self.q * s, self.qdot * s)
    }
}

impl fmt::Display for StateVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.q, self.qdot)
    }
}

/// Uniformly sampled time series stored column-wise: `t`, `q`, `qdot`, `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub t0: f64,
    pub dt: f64,
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
    pub u: Vec<f64>,
}

impl Trajectory {
    pub fn new(t0: f64, dt: f64, q: Vec<f64>, qdot: Vec<f64>, u: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::Domain(format!("trajectory step must be > 0, got {dt}")));
        }
        if q.len() != qdot.len() || q.len() != u.len() {
            return Err(Error::Shape(format!(
                "trajectory columns differ in length ({}, {}, {})",
                q.len(),
                qdot.len(),
                u.len()
            )));
        }
        if q.len() < 2 {
            return Err(Error::Shape("trajectory needs at least two samples".into()));
        }
        Ok(Trajectory { t0, dt, q, qdot, u })
    }

    pub(crate) fn with_capacity(t0: f64, dt: f64, n: usize) -> Self {
        Trajectory {
            t0,
            dt,
            q: Vec::with_capacity(n),
            qdot: Vec::with_capacity(n),
            u: Vec::with_capacity(n),
        }
    }

    pub(crate) fn push(&mut self, s: StateVec, u: f64) {
        self.q.push(s.q);
        self.qdot.push(s.qdot);
        self.u.push(u);
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.time(i)).collect()
    }

    pub fn state(&self, i: usize) -> StateVec {
        StateVec::new(self.q[i], self.qdot[i])
    }

    pub fn states(&self) -> impl Iterator<Item = StateVec> + '_ {
        self.q.iter().zip(&self.qdot).map(|(&q, &v)| StateVec::new(q, v))
    }

    pub fn last(&self) -> StateVec {
        self.state(self.len() - 1)
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(&self.qdot).all(|v| v.is_finite())
    }

    /// Keep only the first `n` samples.
    pub fn truncate(&mut self, n: usize) {
        self.q.truncate(n);
        self.qdot.truncate(n);
        self.u.truncate(n);
    }

    fn check_aligned(&self, other: &Trajectory) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::Shape(format!(
                "trajectory lengths differ ({} vs {})",
                self.len(),
                other.len()
            )));
        }
        let tol = 1e-12 * self.dt.abs().max(1.0);
        if (self.dt - other.dt).abs() > tol || (self.t0 - other.t0).abs() > tol {
            return Err(Error::Shape(format!(
                "trajectory sampling differs (t0 {} vs {}, dt {} vs {})",
                self.t0, other.t0, self.dt, other.dt
            )));
        }
        Ok(())
    }

    /// Write the `t,q,qdot,u` CSV with 17 significant digits per value.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,q,qdot,u")?;
        for i in 0..self.len() {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e}",
                self.time(i),
                self.q[i],
                self.qdot[i],
                self.u[i]
            )?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_csv(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::parse("header", "empty trajectory file"))?
            .map_err(|e| Error::parse("header", e.to_string()))?;
        if header.trim() != "t,q,qdot,u" {
            return Err(Error::parse("header", format!("expected `t,q,qdot,u`, got `{header}`")));
        }
        let (mut t, mut q, mut qdot, mut u) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (lineno, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::parse("row", e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut cols = line.split(',');
            let mut next = |name: &str| -> Result<f64> {
                cols.next()
                    .ok_or_else(|| Error::parse(format!("row {} {name}", lineno + 2), "missing column"))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::parse(format!("row {} {name}", lineno + 2), e.to_string()))
            };
            t.push(next("t")?);
            q.push(next("q")?);
            qdot.push(next("qdot")?);
            u.push(next("u")?);
        }
        if t.len() < 2 {
            return Err(Error::parse("rows", "trajectory needs at least two samples"));
        }
        let dt = (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64;
        Trajectory::new(t[0], dt, q, qdot, u)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Trajectory::read_csv(std::io::BufReader::new(file))
    }
}

/// True state gradient `(qdot, u(t) - 2 xi omega_n qdot - omega_n^2 q)`.
pub fn rhs(state: StateVec, t: f64, forcing: &Forcing, params: &SystemParams) -> StateVec {
    let free = free_rhs(state, params);
    StateVec::new(free.q, free.qdot + forcing.accel(t))
}

/// Autonomous part of [`rhs`]: the gradient with `u = 0`.
pub fn free_rhs(state: StateVec, params: &SystemParams) -> StateVec {
    let wn = params.omega_n;
    StateVec::new(
        state.qdot,
        -2.0 * params.xi * wn * state.qdot - wn * wn * state.q,
    )
}

/// Steady-state coefficients `(B1, B2)` of `x_s = B1 cos(wt) + B2 sin(wt)` for
/// the acceleration `A cos(wt)`.
pub fn steady_coefficients(params: &SystemParams, accel_amplitude: f64, omega: f64) -> (f64, f64) {
    let wn = params.omega_n;
    let k = wn * wn - omega * omega;
    let c = 2.0 * params.xi * wn * omega;
    let den = k * k + c * c;
    (accel_amplitude * k / den, accel_amplitude * c / den)
}

/// `A / sqrt((omega_n^2 - omega^2)^2 + (2 xi omega_n omega)^2)`.
pub fn steady_amplitude(params: &SystemParams, accel_amplitude: f64, omega: f64) -> f64 {
    let wn = params.omega_n;
    let k = wn * wn - omega * omega;
    let c = 2.0 * params.xi * wn * omega;
    accel_amplitude.abs() / (k * k + c * c).sqrt()
}

/// Steady-state phase lag `phi` of the response behind the forcing, in `[0, pi]`.
pub fn steady_phase(params: &SystemParams, omega: f64) -> f64 {
    let wn = params.omega_n;
    (2.0 * params.xi * wn * omega).atan2(wn * wn - omega * omega)
}

/// Absolute base-excitation transmissibility `|X/Y|`.
pub fn absolute_transmissibility(params: &SystemParams, omega: f64) -> f64 {
    let r = omega / params.omega_n;
    let c = 2.0 * params.xi * r;
    ((1.0 + c * c) / ((1.0 - r * r).powi(2) + c * c)).sqrt()
}

/// Exact solution for harmonic (or free) forcing: steady state plus the
/// homogeneous transient fixed by the initial condition at `t = 0`.
///
/// All three homogeneous branches are covered: underdamped, critically
/// damped (`|xi - 1| < 1e-12`) and overdamped.
pub fn analytic_response(
    params: &SystemParams,
    forcing: &Forcing,
    ic: StateVec,
    t: f64,
) -> Result<StateVec> {
    params.validate()?;
    let (amp, omega) = match forcing {
        Forcing::Free => (0.0, 0.0),
        Forcing::HarmonicForce { .. } | Forcing::HarmonicBase { .. } => {
            forcing.validate()?;
            (forcing.accel_amplitude().unwrap(), forcing.omega().unwrap())
        }
        Forcing::Sampled(_) => {
            return Err(Error::Domain(
                "no closed-form response for sampled forcing".into(),
            ))
        }
    };
    let (b1, b2) = if amp == 0.0 {
        (0.0, 0.0)
    } else {
        steady_coefficients(params, amp, omega)
    };
    let (wc, ws) = ((omega * t).cos(), (omega * t).sin());
    let xs = b1 * wc + b2 * ws;
    let vs = omega * (b2 * wc - b1 * ws);

    // homogeneous part with h(0) = q0 - b1, h'(0) = qdot0 - b2 * omega
    let h0 = ic.q - b1;
    let hv0 = ic.qdot - b2 * omega;
    let (xh, vh) = homogeneous(params, h0, hv0, t);
    Ok(StateVec::new(xs + xh, vs + vh))
}

fn homogeneous(params: &SystemParams, h0: f64, hv0: f64, t: f64) -> (f64, f64) {
    let wn = params.omega_n;
    let xi = params.xi;
    let sigma = xi * wn;
    if (xi - 1.0).abs() < 1e-12 {
        let c1 = h0;
        let c2 = hv0 + sigma * c1;
        let e = (-sigma * t).exp();
        let x = e * (c1 + c2 * t);
        let v = e * (c2 - sigma * (c1 + c2 * t));
        (x, v)
    } else if xi < 1.0 {
        let wd = wn * (1.0 - xi * xi).sqrt();
        let c1 = h0;
        let c2 = (hv0 + sigma * c1) / wd;
        let e = (-sigma * t).exp();
        let (c, s) = ((wd * t).cos(), (wd * t).sin());
        let x = e * (c1 * c + c2 * s);
        let v = e * ((c2 * wd - sigma * c1) * c - (c1 * wd + sigma * c2) * s);
        (x, v)
    } else {
        let root = wn * (xi * xi - 1.0).sqrt();
        let s1 = -sigma + root;
        let s2 = -sigma - root;
        let c1 = (hv0 - s2 * h0) / (s1 - s2);
        let c2 = h0 - c1;
        let (e1, e2) = ((s1 * t).exp(), (s2 * t).exp());
        (c1 * e1 + c2 * e2, s1 * c1 * e1 + s2 * c2 * e2)
    }
}

/// Sample [`analytic_response`] on the uniform grid `t = i dt`, `i = 0..=n_steps`.
pub fn analytic_trajectory(
    params: &SystemParams,
    forcing: &Forcing,
    ic: StateVec,
    dt: f64,
    n_steps: usize,
) -> Result<Trajectory> {
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("step must be > 0, got {dt}")));
    }
    let mut traj = Trajectory::with_capacity(0.0, dt, n_steps + 1);
    for i in 0..=n_steps {
        let t = i as f64 * dt;
        traj.push(analytic_response(params, forcing, ic, t)?, forcing.accel(t));
    }
    Ok(traj)
}

/// Relative coordinates `z = x - y`, column by column.
///
/// The forcing column of a base-motion trajectory carries the base
/// acceleration, so an absolute trajectory with `u = 0` maps to a relative
/// one whose forcing column is `-y''`.
pub fn to_relative(x_abs: &Trajectory, base_motion: &Trajectory) -> Result<Trajectory> {
    x_abs.check_aligned(base_motion)?;
    let sub = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>();
    Ok(Trajectory {
        t0: x_abs.t0,
        dt: x_abs.dt,
        q: sub(&x_abs.q, &base_motion.q),
        qdot: sub(&x_abs.qdot, &base_motion.qdot),
        u: sub(&x_abs.u, &base_motion.u),
    })
}

/// Inverse of [`to_relative`]: `x = z + y`.
pub fn from_relative(z: &Trajectory, base_motion: &Trajectory) -> Result<Trajectory> {
    z.check_aligned(base_motion)?;
    let add = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x + y).collect::<Vec<_>>();
    Ok(Trajectory {
        t0: z.t0,
        dt: z.dt,
        q: add(&z.q, &base_motion.q),
        qdot: add(&z.qdot, &base_motion.qdot),
        u: add(&z.u, &base_motion.u),
    })
}

/// Base displacement `Y cos(wt)` with its velocity and acceleration columns.
pub fn base_motion(base_amplitude: f64, omega: f64, t0: f64, dt: f64, n: usize) -> Result<Trajectory> {
    let mut traj = Trajectory::with_capacity(t0, dt, n);
    for i in 0..n {
        let t = t0 + i as f64 * dt;
        let (c, s) = ((omega * t).cos(), (omega * t).sin());
        traj.push(
            StateVec::new(base_amplitude * c, -base_amplitude * omega * s),
            -base_amplitude * omega * omega * c,
        );
    }
    Trajectory::new(traj.t0, traj.dt, traj.q, traj.qdot, traj.u)
}

/// Largest step that samples `omega` at the Nyquist rate: `pi / omega`.
pub fn nyquist_dt_max(omega: f64) -> f64 {
    PI / omega
}

pub(crate) fn check_nyquist(dt: f64, omega_target: f64) -> Result<()> {
    let dt_max = nyquist_dt_max(omega_target);
    if dt > dt_max {
        return Err(Error::Nyquist {
            dt,
            dt_max,
            omega_target,
        });
    }
    Ok(())
}

/// Classical fourth-order Runge-Kutta integration of the true [`rhs`].
pub fn reference_integrate(
    params: &SystemParams,
    forcing: &Forcing,
    ic: StateVec,
    dt: f64,
    n_steps: usize,
) -> Result<Trajectory> {
    params.validate()?;
    forcing.validate()?;
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("step must be > 0, got {dt}")));
    }
    if let Some(omega) = forcing.omega() {
        check_nyquist(dt, omega)?;
    }
    let f = |s: StateVec, t: f64| rhs(s, t, forcing, params);
    let mut traj = Trajectory::with_capacity(0.0, dt, n_steps + 1);
    let mut state = ic;
    traj.push(state, forcing.accel(0.0));
    for k in 0..n_steps {
        let t = k as f64 * dt;
        state = rk4_step(&f, state, t, dt);
        traj.push(state, forcing.accel(t + dt));
    }
    Ok(traj)
}

/// One classical RK4 step of `f(state, t)`; stage order matches the
/// predictor of the forecast engine.
pub(crate) fn rk4_step<F: Fn(StateVec, f64) -> StateVec>(f: &F, y: StateVec, t: f64, h: f64) -> StateVec {
    let half = 0.5 * h;
    let k1 = f(y, t);
    let y_half_a = y + k1 * half;
    let k2 = f(y_half_a, t + half);
    let y_half_b = y + k2 * half;
    let k3 = f(y_half_b, t + half);
    let y_full = y + k3 * h;
    let k4 = f(y_full, t + h);
    y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ls1() -> SystemParams {
        SystemParams::ls1()
    }

    #[test]
    fn nondimensionalize_examples() {
        let (xi, wn, l) = nondimensionalize(1.0, 0.4, 1.0, 1.0).unwrap();
        assert!((xi - 0.2).abs() < 1e-15 && (wn - 1.0).abs() < 1e-15 && (l - 1.0).abs() < 1e-15);
        let (xi, wn, l) = nondimensionalize(1.0, 0.0, 4.0, 0.0).unwrap();
        assert_eq!((xi, wn, l), (0.0, 2.0, 0.0));
        // LS-1A: omega_n = 11.30 rad/s with xi = 0.2
        let k = 11.30f64.powi(2);
        let c = 2.0 * 0.2 * k.sqrt();
        let (xi, wn, _) = nondimensionalize(1.0, c, k, 1.0).unwrap();
        assert!((xi - 0.2).abs() < 1e-12 && (wn - 11.30).abs() < 1e-12);
        assert!(nondimensionalize(0.0, 1.0, 1.0, 1.0).is_err());
        assert!(nondimensionalize(1.0, 1.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn rhs_examples() {
        let p = ls1();
        assert_eq!(rhs(StateVec::ZERO, 0.0, &Forcing::Free, &p), StateVec::ZERO);
        let unit = Forcing::Sampled(SampledForcing { t0: 0.0, dt: 1.0, values: vec![1.0, 1.0] });
        assert_eq!(rhs(StateVec::ZERO, 0.5, &unit, &p), StateVec::new(0.0, 1.0));
        assert_eq!(rhs(StateVec::new(1.0, 0.0), 0.0, &Forcing::Free, &p), StateVec::new(0.0, -1.0));
    }

    #[test]
    fn steady_amplitudes() {
        let p = ls1();
        assert!((steady_amplitude(&p, 1.0, 1.0) - 2.5).abs() < 1e-12);
        assert!((steady_amplitude(&p, 1.0, 3.77) - 0.0752).abs() < 5e-5);
        assert!((steady_amplitude(&p, 1.0, 1e-6) - 1.0).abs() < 1e-9);
        for &(xi, w) in &[(0.05, 0.3), (0.2, 0.96), (0.7, 2.0), (1.3, 5.0)] {
            let p = SystemParams::new(xi, 1.7).unwrap();
            let (b1, b2) = steady_coefficients(&p, 2.0, w);
            assert!((b1.hypot(b2) - steady_amplitude(&p, 2.0, w)).abs() < 1e-14);
        }
    }

    #[test]
    fn peak_ratio_definitions() {
        let p = ls1();
        assert!((p.amplitude_peak_ratio().unwrap() - 0.92f64.sqrt()).abs() < 1e-15);
        assert!((p.damped_ratio().unwrap() - 0.96f64.sqrt()).abs() < 1e-15);
        assert!(SystemParams::new(0.8, 1.0).unwrap().amplitude_peak_ratio().is_none());
    }

    #[test]
    fn analytic_matches_initial_condition_in_all_branches() {
        for &xi in &[0.2, 1.0, 2.5] {
            let p = SystemParams::new(xi, 1.3).unwrap();
            let f = Forcing::harmonic(0.7, 2.1);
            let ic = StateVec::new(0.3, -0.4);
            let s = analytic_response(&p, &f, ic, 0.0).unwrap();
            assert!((s - ic).norm_inf() < 1e-14, "xi = {xi}: {s}");
        }
    }

    #[test]
    fn analytic_satisfies_ode() {
        // central difference of the analytic velocity against the rhs
        for &xi in &[0.2, 1.0, 2.5] {
            let p = SystemParams::new(xi, 1.3).unwrap();
            let f = Forcing::harmonic(0.7, 2.1);
            let ic = StateVec::new(0.3, -0.4);
            for &t in &[0.1, 1.7, 6.0] {
                let h = 1e-5;
                let a = analytic_response(&p, &f, ic, t + h).unwrap();
                let b = analytic_response(&p, &f, ic, t - h).unwrap();
                let deriv = (a - b) * (0.5 / h);
                let expect = rhs(analytic_response(&p, &f, ic, t).unwrap(), t, &f, &p);
                assert!((deriv - expect).norm_inf() < 1e-7, "xi={xi} t={t}");
            }
        }
    }

    #[test]
    fn transient_envelope_decays_exponentially() {
        let p = ls1();
        let ic = StateVec::new(1.0, 0.0);
        let wd = p.damped_ratio().unwrap();
        // peaks of the free response occur every 2 pi / wd; the ratio of
        // successive peaks is exp(-xi * 2 pi / wd) for any phase alignment
        let period = 2.0 * PI / wd;
        for k in 1..5 {
            let t0 = 0.37 + (k - 1) as f64 * period;
            let a = analytic_response(&p, &Forcing::Free, ic, t0).unwrap().q;
            let b = analytic_response(&p, &Forcing::Free, ic, t0 + period).unwrap().q;
            assert!((b / a - (-p.xi * period).exp()).abs() < 1e-9);
        }
    }

    #[test]
    fn base_forcing_examples() {
        assert_eq!(base_forcing_accel(1.0, 1.0, 0.0), 1.0);
        assert_eq!(base_forcing_accel(1.0, 2.0, 0.0), 4.0);
        assert!(base_forcing_accel(1.0, 1.0, PI / 2.0).abs() < 1e-16);
    }

    #[test]
    fn relative_coordinates() {
        let p = ls1();
        let x = reference_integrate(&p, &Forcing::harmonic(1.0, 1.3), StateVec::new(0.2, 0.1), 0.01, 200)
            .unwrap();
        let z = to_relative(&x, &x).unwrap();
        assert!(z.q.iter().chain(&z.qdot).all(|&v| v == 0.0));
        let zero = Trajectory::new(
            0.0,
            0.01,
            vec![0.0; x.len()],
            vec![0.0; x.len()],
            vec![0.0; x.len()],
        )
        .unwrap();
        assert_eq!(to_relative(&x, &zero).unwrap(), x);
        let short = Trajectory::new(0.0, 0.01, vec![0.0; 3], vec![0.0; 3], vec![0.0; 3]).unwrap();
        assert!(to_relative(&x, &short).is_err());
    }

    #[test]
    fn reference_integrator_edge_cases() {
        let p = ls1();
        let traj = reference_integrate(&p, &Forcing::Free, StateVec::ZERO, 0.01, 50).unwrap();
        assert!(traj.q.iter().chain(&traj.qdot).all(|&v| v == 0.0));
        assert_eq!(traj.len(), 51);
        assert!(reference_integrate(&p, &Forcing::Free, StateVec::ZERO, 0.0, 5).is_err());
        assert!(matches!(
            reference_integrate(&p, &Forcing::harmonic(1.0, 10.0), StateVec::ZERO, 0.4, 5),
            Err(Error::Nyquist { .. })
        ));
    }

    #[test]
    fn reference_integrator_matches_oracle() {
        let p = ls1();
        let f = Forcing::harmonic(1.0, 3.77);
        let ic = StateVec::new(0.2, 0.0);
        let num = reference_integrate(&p, &f, ic, 0.01, 10_000).unwrap();
        let exact = analytic_trajectory(&p, &f, ic, 0.01, 10_000).unwrap();
        let err = num
            .states()
            .zip(exact.states())
            .map(|(a, b)| (a - b).norm_inf())
            .fold(0.0, f64::max);
        assert!(err <= 1e-6, "max error {err}");
    }

    #[test]
    fn reference_integrator_is_fourth_order() {
        let p = ls1();
        let f = Forcing::harmonic(1.0, 3.77);
        let ic = StateVec::new(0.2, 0.0);
        let max_err = |dt: f64| {
            let n = (10.0 / dt).round() as usize;
            let num = reference_integrate(&p, &f, ic, dt, n).unwrap();
            let exact = analytic_trajectory(&p, &f, ic, dt, n).unwrap();
            num.states()
                .zip(exact.states())
                .map(|(a, b)| (a - b).norm_inf())
                .fold(0.0, f64::max)
        };
        let ratio = max_err(0.1) / max_err(0.05);
        assert!((ratio - 16.0).abs() < 2.0, "ratio {ratio}");
    }

    #[test]
    fn free_energy_never_increases() {
        let p = ls1();
        let dt: f64 = 0.01;
        let traj = reference_integrate(&p, &Forcing::Free, StateVec::new(0.8, -0.5), dt, 3000).unwrap();
        let energy: Vec<f64> = traj.states().map(|s| 0.5 * (s.q * s.q + s.qdot * s.qdot)).collect();
        for w in energy.windows(2) {
            assert!(w[1] <= w[0] + dt.powi(5));
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let p = ls1();
        let traj = reference_integrate(&p, &Forcing::harmonic(1.0, 1.1), StateVec::new(0.2, 0.0), 0.01, 100)
            .unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let back = Trajectory::read_csv(&buf[..]).unwrap();
        assert_eq!(back.q, traj.q);
        assert_eq!(back.qdot, traj.qdot);
        assert_eq!(back.u, traj.u);
        assert!(Trajectory::read_csv(&b"t,q,qdot\n0,0,0\n"[..]).is_err());
    }
}
