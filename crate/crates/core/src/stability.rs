//! Local stability diagnostics of learned fields and of the sampling scheme.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::GradientModel;
use crate::network::JacobianMatrix;
use crate::oscillator::{StateVec, SystemParams};
use crate::plot::{line_plot, Series, PALETTE};

/// Eigenvalues of a real 2x2 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Eigenvalues {
    /// `re +/- i im` with `im > 0`.
    Complex { re: f64, im: f64 },
    /// Two real eigenvalues, largest first.
    Real(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Stable,
    Marginal,
    Unstable,
}

impl std::fmt::Display for Stability {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stability::Stable => "stable",
            Stability::Marginal => "marginal",
            Stability::Unstable => "unstable",
        })
    }
}

impl Eigenvalues {
    /// Closed form from trace and determinant.
    pub fn of(m: &JacobianMatrix) -> Self {
        let half_tr = 0.5 * m.trace();
        let det = m.det();
        let disc = half_tr * half_tr - det;
        if disc < 0.0 {
            Eigenvalues::Complex { re: half_tr, im: (-disc).sqrt() }
        } else {
            let root = disc.sqrt();
            // avoid cancellation in the smaller root
            let big = if half_tr >= 0.0 { half_tr + root } else { half_tr - root };
            let small = if big != 0.0 { det / big } else { 0.0 };
            Eigenvalues::Real(big.max(small), big.min(small))
        }
    }

    pub fn max_real(&self) -> f64 {
        match *self {
            Eigenvalues::Complex { re, .. } => re,
            Eigenvalues::Real(a, _) => a,
        }
    }

    /// `(re, im)` of the eigenvalue with non-negative imaginary part
    /// (or the largest real eigenvalue).
    pub fn leading(&self) -> (f64, f64) {
        match *self {
            Eigenvalues::Complex { re, im } => (re, im),
            Eigenvalues::Real(a, _) => (a, 0.0),
        }
    }

    pub fn as_pairs(&self) -> [(f64, f64); 2] {
        match *self {
            Eigenvalues::Complex { re, im } => [(re, im), (re, -im)],
            Eigenvalues::Real(a, b) => [(a, 0.0), (b, 0.0)],
        }
    }

    pub fn classify(&self) -> Stability {
        let m = self.max_real();
        if m.abs() <= 1e-12 {
            Stability::Marginal
        } else if m < 0.0 {
            Stability::Stable
        } else {
            Stability::Unstable
        }
    }
}

/// Linearization of a model at the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumReport {
    pub jacobian: JacobianMatrix,
    pub eigenvalues: Eigenvalues,
    pub stability: Stability,
    /// Set for models that take time and forcing as inputs; those are
    /// linearized at `(t, u) = (0, 0)` only.
    pub nonautonomous: bool,
}

pub fn equilibrium_eigenvalues<M: GradientModel + ?Sized>(model: &M) -> EquilibriumReport {
    let (_, jacobian) = model.gradient_jacobian(StateVec::ZERO, 0.0, 0.0);
    let eigenvalues = Eigenvalues::of(&jacobian);
    EquilibriumReport {
        jacobian,
        eigenvalues,
        stability: eigenvalues.classify(),
        nonautonomous: model.forcing_as_input(),
    }
}

/// Exact eigenvalues of the free oscillator, roots of `l^2 + 2 xi wn l + wn^2`.
pub fn true_eigenvalues(params: &SystemParams) -> Eigenvalues {
    Eigenvalues::of(&JacobianMatrix(params.state_matrix()))
}

/// Equilibrium eigenvalue logged once per training epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenRecord {
    pub epoch: usize,
    pub re: f64,
    pub im: f64,
}

/// The eigenvalue path over training, optionally scored against a reference system.
#[derive(Debug, Clone, PartialEq)]
pub struct RootLocus {
    pub records: Vec<EigenRecord>,
    pub reference: Option<SystemParams>,
}

impl RootLocus {
    pub fn new(records: Vec<EigenRecord>, reference: Option<SystemParams>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Domain("root locus needs at least one record".into()));
        }
        Ok(RootLocus { records, reference })
    }

    /// Percentage errors of real and imaginary parts against the reference.
    pub fn component_errors(&self) -> Option<Vec<(f64, f64)>> {
        let (tre, tim) = true_eigenvalues(self.reference.as_ref()?).leading();
        Some(
            self.records
                .iter()
                .map(|r| {
                    (
                        100.0 * (r.re - tre).abs() / tre.abs().max(1e-300),
                        100.0 * (r.im - tim).abs() / tim.abs().max(1e-300),
                    )
                })
                .collect(),
        )
    }

    pub fn to_csv(&self) -> String {
        let errs = self.component_errors();
        let mut s = String::from(if errs.is_some() {
            "epoch,re,im,re_err_pct,im_err_pct\n"
        } else {
            "epoch,re,im\n"
        });
        for (i, r) in self.records.iter().enumerate() {
            let _ = write!(s, "{},{:.16e},{:.16e}", r.epoch, r.re, r.im);
            if let Some(e) = &errs {
                let _ = write!(s, ",{:.6e},{:.6e}", e[i].0, e[i].1);
            }
            s.push('\n');
        }
        s
    }

    /// Real-imaginary plane plot with the constant-damping ray of the reference.
    pub fn to_svg(&self) -> String {
        let upper: Vec<_> = self.records.iter().map(|r| (r.re, r.im.abs())).collect();
        let lower: Vec<_> = self.records.iter().map(|r| (r.re, -r.im.abs())).collect();
        let mut series = vec![
            Series::line("eigenvalue path", upper, PALETTE[0]).with_markers(),
            Series::line("conjugate", lower, PALETTE[5]).with_markers(),
        ];
        if let Some(p) = &self.reference {
            let (re, im) = true_eigenvalues(p).leading();
            let ray: Vec<_> = (0..=20).map(|k| {
                let s = 1.2 * k as f64 / 20.0;
                (s * re, s * im)
            }).collect();
            series.push(Series::line(format!("constant xi = {}", p.xi), ray, "black").dashed());
            series.push(Series::line("target", vec![(re, im), (re, -im)], PALETTE[1]).with_markers());
        }
        line_plot("Equilibrium eigenvalues over training", "Re", "Im", &series)
    }
}

/// Sampling limits of a step size against a target band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NyquistReport {
    /// Nyquist rate `2 f_target` of the band top (cycles per unit time).
    pub nyquist_rate: f64,
    /// `1 / nyquist_rate`.
    pub dt_max: f64,
    /// `R_s = 2 pi f_s / omega_n` with `f_s = 1 / dt`.
    pub sampling_ratio: f64,
    /// Driving frequency where the local ratio `R_s omega_n / omega` drops to 2.
    pub omega_critical: f64,
    /// `f_s / f_target`: oversampling of the band top.
    pub oversampling: f64,
}

/// Nyquist rate and step bound for a band top `target_band_hi` (rad per unit
/// time), plus the sampling ratio and critical frequency of step `dt`.
pub fn nyquist_limits(omega_n: f64, target_band_hi: f64, dt: f64) -> Result<NyquistReport> {
    if !(omega_n > 0.0 && target_band_hi > 0.0 && dt > 0.0) {
        return Err(Error::Domain("Nyquist limits need positive inputs".into()));
    }
    let f_target = target_band_hi / (2.0 * PI);
    let nyquist_rate = 2.0 * f_target;
    let dt_max = 1.0 / nyquist_rate;
    let fs = 1.0 / dt;
    let sampling_ratio = 2.0 * PI * fs / omega_n;
    Ok(NyquistReport {
        nyquist_rate,
        dt_max,
        sampling_ratio,
        omega_critical: critical_frequency(omega_n, sampling_ratio),
        oversampling: fs / f_target,
    })
}

impl NyquistReport {
    /// Error when the step is too coarse for the band.
    pub fn check(&self, dt: f64, omega_target: f64) -> Result<()> {
        if dt > self.dt_max {
            return Err(Error::Nyquist { dt, dt_max: self.dt_max, omega_target });
        }
        Ok(())
    }
}

/// `omega_n R_s / 2`.
pub fn critical_frequency(omega_n: f64, sampling_ratio: f64) -> f64 {
    0.5 * omega_n * sampling_ratio
}

/// Step size realizing a sampling ratio `R_s` for natural frequency `omega_n`.
pub fn step_for_sampling_ratio(omega_n: f64, sampling_ratio: f64) -> f64 {
    2.0 * PI / (sampling_ratio * omega_n)
}

/// Rectangular phase-space grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub q_range: (f64, f64),
    pub qdot_range: (f64, f64),
    pub n_q: usize,
    pub n_qdot: usize,
}

impl GridSpec {
    pub fn square(half_width: f64, n: usize) -> Self {
        GridSpec {
            q_range: (-half_width, half_width),
            qdot_range: (-half_width, half_width),
            n_q: n,
            n_qdot: n,
        }
    }

    pub fn points(&self) -> Vec<StateVec> {
        let lin = |(a, b): (f64, f64), n: usize, i: usize| {
            if n <= 1 {
                0.5 * (a + b)
            } else {
                a + (b - a) * i as f64 / (n - 1) as f64
            }
        };
        let mut pts = Vec::with_capacity(self.n_q * self.n_qdot);
        for i in 0..self.n_q {
            for j in 0..self.n_qdot {
                pts.push(StateVec::new(lin(self.q_range, self.n_q, i), lin(self.qdot_range, self.n_qdot, j)));
            }
        }
        pts
    }
}

pub const DEFAULT_DIVERGENCE_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceReport {
    pub passed: bool,
    pub max_trace: f64,
    pub worst_point: StateVec,
    pub mean_trace: f64,
}

/// Phase-space divergence (`trace dG/dx`) over a grid; passes iff the largest
/// trace is at most `tol`.
pub fn divergence_check<M: GradientModel + ?Sized>(model: &M, grid: &GridSpec, tol: f64) -> DivergenceReport {
    let mut max_trace = f64::NEG_INFINITY;
    let mut worst = StateVec::ZERO;
    let mut sum = 0.0;
    let pts = grid.points();
    for &p in &pts {
        let (_, j) = model.gradient_jacobian(p, 0.0, 0.0);
        let tr = j.trace();
        sum += tr;
        if tr > max_trace || tr.is_nan() {
            max_trace = tr;
            worst = p;
        }
    }
    DivergenceReport {
        passed: max_trace <= tol,
        max_trace,
        worst_point: worst,
        mean_trace: sum / pts.len().max(1) as f64,
    }
}
