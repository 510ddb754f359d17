//! Frequency response curves from batched forecasts, Hilbert-envelope
//! amplitude extraction and time/frequency error metrics.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::path::Path;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::{self, ForecastConfig, GradientModel};
use crate::oscillator::{self, Forcing, StateVec, SystemParams, Trajectory};
use crate::plot::{line_plot, Series, PALETTE};
use crate::trainer::Excitation;

/// Fraction of the envelope dropped at each end before any statistic.
pub const EDGE_FRACTION: f64 = 0.05;

/// Analytic signal `x + i H[x]` via an FFT of length `next_power_of_two(n)`.
pub fn analytic_signal(signal: &[f64]) -> Result<Vec<Complex64>> {
    if signal.len() < 8 {
        return Err(Error::Domain(format!("Hilbert transform needs at least 8 samples, got {}", signal.len())));
    }
    if signal.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Hilbert transform input".into()));
    }
    let n = signal.len();
    let len = n.next_power_of_two();
    let mut buf: Vec<Complex64> = signal.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    buf.resize(len, Complex64::new(0.0, 0.0));
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(len).process(&mut buf);
    // keep DC (and Nyquist), double positive frequencies, drop negative ones
    let half = len / 2;
    for (k, z) in buf.iter_mut().enumerate() {
        if k == 0 || k == half {
            continue;
        }
        *z *= if k < half { 2.0 } else { 0.0 };
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    let inv = 1.0 / len as f64;
    buf.truncate(n);
    buf.iter_mut().for_each(|z| *z *= inv);
    Ok(buf)
}

/// Magnitude of the analytic signal.
pub fn hilbert_envelope(signal: &[f64]) -> Result<Vec<f64>> {
    Ok(analytic_signal(signal)?.iter().map(|z| z.norm()).collect())
}

/// Index range of the steady window: the final `tail_fraction` of the
/// samples, minus the edge margins.
pub fn steady_window(n: usize, tail_fraction: f64) -> std::ops::Range<usize> {
    let edge = (EDGE_FRACTION * n as f64).ceil() as usize;
    let start = ((1.0 - tail_fraction) * n as f64).floor() as usize;
    let start = start.max(edge).min(n.saturating_sub(1));
    let end = n.saturating_sub(edge).max(start + 1).min(n);
    start..end
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyAmplitude {
    pub value: f64,
    /// The transient could not be shown to have decayed below 1% before the window.
    pub warning: bool,
}

/// Median Hilbert envelope over the steady window. `decay_rate` is the
/// slowest transient decay rate (`xi omega_n` for a known system); without
/// it the result always carries a warning.
pub fn steady_amplitude(traj: &Trajectory, tail_fraction: f64, decay_rate: Option<f64>) -> Result<SteadyAmplitude> {
    check_tail(tail_fraction)?;
    let env = hilbert_envelope(&traj.q)?;
    let win = steady_window(env.len(), tail_fraction);
    let t_start = traj.time(win.start) - traj.t0;
    let warning = match decay_rate {
        Some(s) if s > 0.0 => (-s * t_start).exp() > 0.01,
        _ => true,
    };
    Ok(SteadyAmplitude { value: median(&env[win]), warning })
}

fn check_tail(tail_fraction: f64) -> Result<()> {
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(Error::Domain(format!("tail fraction must lie in (0, 1], got {tail_fraction}")));
    }
    Ok(())
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrcConfig {
    #[serde(default = "FrcConfig::default_band")]
    pub band: (f64, f64),
    #[serde(default = "FrcConfig::default_points")]
    pub n_points: usize,
    #[serde(default = "FrcConfig::default_amplitude")]
    pub drive_amplitude: f64,
    #[serde(default = "FrcConfig::default_ic")]
    pub ic: (f64, f64),
    /// Minimum forecast length; low frequencies are extended to `min_periods` cycles.
    #[serde(default = "FrcConfig::default_horizon")]
    pub horizon: f64,
    #[serde(default = "FrcConfig::default_periods")]
    pub min_periods: f64,
    #[serde(default = "FrcConfig::default_tail")]
    pub tail_fraction: f64,
    #[serde(default = "FrcConfig::default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub excitation: Excitation,
}

impl Default for FrcConfig {
    fn default() -> Self {
        FrcConfig {
            band: Self::default_band(),
            n_points: Self::default_points(),
            drive_amplitude: Self::default_amplitude(),
            ic: Self::default_ic(),
            horizon: Self::default_horizon(),
            min_periods: Self::default_periods(),
            tail_fraction: Self::default_tail(),
            dt: Self::default_dt(),
            excitation: Excitation::Force,
        }
    }
}

impl FrcConfig {
    fn default_band() -> (f64, f64) {
        (0.1, 10.0)
    }
    fn default_points() -> usize {
        500
    }
    fn default_amplitude() -> f64 {
        1.0
    }
    fn default_ic() -> (f64, f64) {
        (0.2, 0.0)
    }
    fn default_horizon() -> f64 {
        100.0
    }
    fn default_periods() -> f64 {
        10.0
    }
    fn default_tail() -> f64 {
        0.3
    }
    fn default_dt() -> f64 {
        0.01
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Domain(format!("frc: {m}")));
        let (lo, hi) = self.band;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return bad(format!("band must satisfy 0 < lo <= hi, got ({lo}, {hi})"));
        }
        if self.n_points < 2 {
            return bad(format!("need at least 2 grid points, got {}", self.n_points));
        }
        if !(self.drive_amplitude > 0.0 && self.drive_amplitude.is_finite()) {
            return bad("drive amplitude must be positive".into());
        }
        if !(self.horizon > 0.0 && self.dt > 0.0 && self.min_periods >= 0.0) {
            return bad("horizon, dt must be positive".into());
        }
        check_tail(self.tail_fraction)
    }

    /// Endpoint-inclusive uniform grid.
    pub fn grid(&self) -> Vec<f64> {
        let (lo, hi) = self.band;
        let n = self.n_points;
        (0..n).map(|i| if i + 1 == n { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 }).collect()
    }

    pub fn horizon_for(&self, omega: f64) -> f64 {
        self.horizon.max(self.min_periods * TAU / omega)
    }

    pub fn steps_for(&self, omega: f64) -> usize {
        (self.horizon_for(omega) / self.dt).round() as usize
    }

    pub fn forcing(&self, omega: f64) -> Forcing {
        self.excitation.forcing(self.drive_amplitude, omega)
    }

    pub fn ic_state(&self) -> StateVec {
        StateVec::new(self.ic.0, self.ic.1)
    }
}

/// Steady amplitude per driving frequency; missing points are `NaN`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrcCurve {
    pub freqs: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub peak_amplitude: f64,
    pub peak_freq: f64,
}

impl FrcCurve {
    pub fn new(freqs: Vec<f64>, amplitudes: Vec<f64>) -> Result<Self> {
        if freqs.len() != amplitudes.len() || freqs.is_empty() {
            return Err(Error::Shape(format!("{} frequencies vs {} amplitudes", freqs.len(), amplitudes.len())));
        }
        let (mut peak_amplitude, mut peak_freq) = (f64::NAN, f64::NAN);
        for (&f, &a) in freqs.iter().zip(&amplitudes) {
            if a.is_finite() && !(a <= peak_amplitude) {
                peak_amplitude = a;
                peak_freq = f;
            }
        }
        Ok(FrcCurve { freqs, amplitudes, peak_amplitude, peak_freq })
    }

    /// Index of the peak on the grid.
    pub fn peak_index(&self) -> Option<usize> {
        self.amplitudes.iter().position(|&a| a == self.peak_amplitude)
    }

    pub fn missing(&self) -> Vec<usize> {
        (0..self.amplitudes.len()).filter(|&i| !self.amplitudes[i].is_finite()).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("freq,amplitude\n");
        for (f, a) in self.freqs.iter().zip(&self.amplitudes) {
            let _ = writeln!(s, "{f:.10e},{a:.10e}");
        }
        let _ = writeln!(s, "# peak_freq={:.10e},peak_amp={:.10e}", self.peak_freq, self.peak_amplitude);
        s
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut freqs = Vec::new();
        let mut amps = Vec::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            let (f, a) = line
                .split_once(',')
                .ok_or_else(|| Error::parse(format!("frc line {}", i + 1), "expected two columns"))?;
            let p = |v: &str| v.trim().parse::<f64>().map_err(|e| Error::parse(format!("frc line {}", i + 1), e.to_string()));
            freqs.push(p(f)?);
            amps.push(p(a)?);
        }
        FrcCurve::new(freqs, amps)
    }
}

/// Overlay of several curves (first is drawn solid, others dashed).
pub fn frc_svg(title: &str, y_label: &str, curves: &[(&str, &FrcCurve)]) -> String {
    let series: Vec<Series> = curves
        .iter()
        .enumerate()
        .map(|(i, (name, c))| {
            let pts = c.freqs.iter().copied().zip(c.amplitudes.iter().copied()).collect();
            let s = Series::line(*name, pts, PALETTE[i % PALETTE.len()]);
            if i == 0 {
                s
            } else {
                s.dashed()
            }
        })
        .collect();
    line_plot(title, "driving frequency", y_label, &series)
}

/// An FRC with the absolute (`X / Y`) curve for base excitation.
#[derive(Debug, Clone, PartialEq)]
pub struct FrcOutcome {
    /// Response amplitude; for base excitation the relative transmissibility `Z / Y`.
    pub curve: FrcCurve,
    /// Absolute transmissibility `X / Y` (base excitation only).
    pub absolute: Option<FrcCurve>,
    /// Grid indices whose amplitude carries a transient warning.
    pub warnings: Vec<usize>,
    /// Grid indices whose forecast failed, with the reason.
    pub failures: Vec<(usize, String)>,
}

/// Something that can produce a response trajectory under a forcing.
pub trait ResponseSource: Sync {
    fn respond(&self, ic: StateVec, forcing: &Forcing, dt: f64, n_steps: usize) -> Result<Trajectory>;

    /// Slowest transient decay rate, when known.
    fn decay_rate(&self) -> Option<f64>;
}

/// Exact closed-form responses of a known oscillator.
#[derive(Debug, Clone, Copy)]
pub struct AnalyticSource(pub SystemParams);

impl ResponseSource for AnalyticSource {
    fn respond(&self, ic: StateVec, forcing: &Forcing, dt: f64, n_steps: usize) -> Result<Trajectory> {
        oscillator::analytic_trajectory(&self.0, forcing, ic, dt, n_steps)
    }

    fn decay_rate(&self) -> Option<f64> {
        let p = &self.0;
        Some(if p.xi < 1.0 {
            p.xi * p.omega_n
        } else {
            p.omega_n * (p.xi - (p.xi * p.xi - 1.0).sqrt())
        })
    }
}

/// Implicit forecasts of a learned (or exact) gradient model.
pub struct ForecastSource<'a, M: ?Sized> {
    pub model: &'a M,
    pub newton_tol: f64,
    pub max_newton_iters: usize,
    pub decay_rate: Option<f64>,
}

impl<'a, M: GradientModel + ?Sized> ForecastSource<'a, M> {
    /// Uses the model's equilibrium eigenvalues as the transient decay estimate.
    pub fn new(model: &'a M) -> Self {
        let eig = crate::stability::equilibrium_eigenvalues(model).eigenvalues;
        let rate = -eig.max_real();
        ForecastSource {
            model,
            newton_tol: forecast::DEFAULT_NEWTON_TOL,
            max_newton_iters: forecast::DEFAULT_MAX_NEWTON_ITERS,
            decay_rate: (rate > 0.0).then_some(rate),
        }
    }
}

impl<M: GradientModel + ?Sized> ResponseSource for ForecastSource<'_, M> {
    fn respond(&self, ic: StateVec, forcing: &Forcing, dt: f64, n_steps: usize) -> Result<Trajectory> {
        let mut cfg = ForecastConfig::new(dt, n_steps, forcing.clone());
        cfg.newton_tol = self.newton_tol;
        cfg.max_newton_iters = self.max_newton_iters;
        let out = forecast::forecast(self.model, ic, &cfg)?;
        match out.failure {
            Some((k, msg)) => Err(Error::NonFinite(format!("forecast failed at step {k}: {msg}"))),
            None => Ok(out.trajectory),
        }
    }

    fn decay_rate(&self) -> Option<f64> {
        self.decay_rate
    }
}

struct PointResult {
    rel: f64,
    abs: f64,
    warning: bool,
    failure: Option<String>,
}

/// Steady response amplitude at every grid frequency. For base excitation the
/// response is simulated in relative coordinates and reported as `Z / Y`,
/// with `X / Y` reconstructed through the base motion.
pub fn compute_frc<S: ResponseSource + ?Sized>(source: &S, config: &FrcConfig, workers: Option<usize>) -> Result<FrcOutcome> {
    config.validate()?;
    compute_frc_at(source, config, config.grid(), workers)
}

/// [`compute_frc`] on an explicit list of frequencies.
pub fn compute_frc_at<S: ResponseSource + ?Sized>(
    source: &S,
    config: &FrcConfig,
    grid: Vec<f64>,
    workers: Option<usize>,
) -> Result<FrcOutcome> {
    config.validate()?;
    if grid.is_empty() || grid.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
        return Err(Error::Domain("frequencies must be positive and finite".into()));
    }
    let base = config.excitation == Excitation::Base;
    let scale = if base { 1.0 / config.drive_amplitude } else { 1.0 };
    let points = forecast::run_parallel(workers, &grid, |&omega| {
        let n = config.steps_for(omega);
        let run = || -> Result<(f64, f64, bool)> {
            let traj = source.respond(config.ic_state(), &config.forcing(omega), config.dt, n)?;
            let rel = steady_amplitude(&traj, config.tail_fraction, source.decay_rate())?;
            let abs = if base {
                let y = oscillator::base_motion(config.drive_amplitude, omega, traj.t0, traj.dt, traj.len())?;
                let x = oscillator::from_relative(&traj, &y)?;
                steady_amplitude(&x, config.tail_fraction, None)?.value
            } else {
                f64::NAN
            };
            Ok((rel.value, abs, rel.warning))
        };
        match run() {
            Ok((rel, abs, warning)) => PointResult { rel: rel * scale, abs: abs * scale, warning, failure: None },
            Err(e) => PointResult { rel: f64::NAN, abs: f64::NAN, warning: false, failure: Some(e.to_string()) },
        }
    });
    let warnings = points.iter().enumerate().filter(|(_, p)| p.warning).map(|(i, _)| i).collect();
    let failures = points
        .iter()
        .enumerate()
        .filter_map(|(i, p)| p.failure.clone().map(|m| (i, m)))
        .collect();
    let curve = FrcCurve::new(grid.clone(), points.iter().map(|p| p.rel).collect())?;
    let absolute = if base {
        Some(FrcCurve::new(grid, points.iter().map(|p| p.abs).collect())?)
    } else {
        None
    };
    Ok(FrcOutcome { curve, absolute, warnings, failures })
}

/// Closed-form steady amplitudes on the grid (no transients, no envelope).
pub fn exact_frc(params: &SystemParams, config: &FrcConfig) -> Result<FrcOutcome> {
    config.validate()?;
    let grid = config.grid();
    let base = config.excitation == Excitation::Base;
    let rel: Vec<f64> = grid
        .iter()
        .map(|&w| {
            let acc = config.forcing(w).accel_amplitude().unwrap_or(0.0);
            let a = oscillator::steady_amplitude(params, acc, w);
            if base {
                a / config.drive_amplitude
            } else {
                a
            }
        })
        .collect();
    let absolute = if base {
        Some(FrcCurve::new(grid.clone(), grid.iter().map(|&w| oscillator::absolute_transmissibility(params, w)).collect())?)
    } else {
        None
    };
    Ok(FrcOutcome { curve: FrcCurve::new(grid, rel)?, absolute, warnings: Vec::new(), failures: Vec::new() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeErrorReport {
    pub mse: f64,
    pub mean_error_pct: f64,
    /// Signed: positive when the prediction overshoots.
    pub amp_error_pct: f64,
    pub phase_error_pct: f64,
    pub freq_error_pct: f64,
}

/// Time-history errors of `pred` against `truth` (position channel).
pub fn time_metrics(pred: &Trajectory, truth: &Trajectory, tail_fraction: f64) -> Result<TimeErrorReport> {
    if pred.len() != truth.len() || pred.dt != truth.dt || pred.t0 != truth.t0 {
        return Err(Error::Shape(format!(
            "trajectories not aligned: ({} samples, dt {}) vs ({} samples, dt {})",
            pred.len(),
            pred.dt,
            truth.len(),
            truth.dt
        )));
    }
    check_tail(tail_fraction)?;
    let n = pred.len() as f64;
    let mse = pred.q.iter().zip(&truth.q).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n;
    let zp = analytic_signal(&pred.q)?;
    let zt = analytic_signal(&truth.q)?;
    let win = steady_window(zp.len(), tail_fraction);
    let amp = |z: &[Complex64]| median(&z[win.clone()].iter().map(|c| c.norm()).collect::<Vec<_>>());
    let (ap, at) = (amp(&zp), amp(&zt));
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let mean_error_pct = 100.0 * (mean(&pred.q) - mean(&truth.q)).abs() / at;
    let amp_error_pct = 100.0 * (ap - at) / at;

    let rot: Complex64 = win.clone().map(|k| {
        let d = zp[k] * zt[k].conj();
        let m = d.norm();
        if m > 0.0 {
            d / m
        } else {
            Complex64::new(0.0, 0.0)
        }
    }).sum();
    let phase_error_pct = 100.0 * rot.arg().abs() / TAU;

    let mean_freq = |z: &[Complex64]| {
        let mut total = 0.0;
        for k in win.start + 1..win.end {
            total += (z[k] * z[k - 1].conj()).arg();
        }
        total / ((win.end - win.start - 1).max(1) as f64 * pred.dt)
    };
    let (fp, ft) = (mean_freq(&zp), mean_freq(&zt));
    let freq_error_pct = 100.0 * (fp - ft).abs() / ft.abs();
    Ok(TimeErrorReport { mse, mean_error_pct, amp_error_pct, phase_error_pct, freq_error_pct })
}

impl TimeErrorReport {
    pub fn to_kv(&self) -> String {
        format!(
            "mse = {:.6e}\nmean_error_pct = {:.6}\namp_error_pct = {:.6}\nphase_error_pct = {:.6}\nfreq_error_pct = {:.6}\n",
            self.mse, self.mean_error_pct, self.amp_error_pct, self.phase_error_pct, self.freq_error_pct
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrcErrorReport {
    pub shape_error_pct: f64,
    pub peak_error_pct: f64,
    pub resonance_error_pct: f64,
    pub peak_freq_estimate: f64,
}

impl FrcErrorReport {
    pub const CSV_HEADER: &'static str = "shape_err,peak_err,res_err,peak_freq";

    pub fn accuracy_pct(&self) -> f64 {
        100.0 - self.shape_error_pct
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{:.6e},{:.6e},{:.6e},{:.6e}",
            self.shape_error_pct, self.peak_error_pct, self.resonance_error_pct, self.peak_freq_estimate
        )
    }

    pub fn to_kv(&self) -> String {
        format!(
            "shape_error_pct = {:.6}\npeak_error_pct = {:.6}\nresonance_error_pct = {:.6}\npeak_freq_estimate = {:.6}\naccuracy_pct = {:.6}\n",
            self.shape_error_pct,
            self.peak_error_pct,
            self.resonance_error_pct,
            self.peak_freq_estimate,
            self.accuracy_pct()
        )
    }
}

/// Curve errors relative to the true peak. Missing predicted points count
/// as a full-peak error in the shape term.
pub fn frc_metrics(pred: &FrcCurve, truth: &FrcCurve) -> Result<FrcErrorReport> {
    let same = pred.freqs.len() == truth.freqs.len()
        && pred.freqs.iter().zip(&truth.freqs).all(|(a, b)| (a - b).abs() <= 1e-12 * b.abs().max(1.0));
    if !same {
        return Err(Error::Shape("frequency grids differ".into()));
    }
    let peak = truth.peak_amplitude;
    if !(peak > 0.0) {
        return Err(Error::Domain("reference curve has no positive peak".into()));
    }
    let sum: f64 = pred
        .amplitudes
        .iter()
        .zip(&truth.amplitudes)
        .map(|(p, t)| if p.is_finite() { (p - t).abs() } else { peak })
        .sum();
    Ok(FrcErrorReport {
        shape_error_pct: 100.0 * sum / pred.freqs.len() as f64 / peak,
        peak_error_pct: 100.0 * (pred.peak_amplitude - peak).abs() / peak,
        resonance_error_pct: 100.0 * (pred.peak_freq - truth.peak_freq).abs() / truth.peak_freq,
        peak_freq_estimate: pred.peak_freq,
    })
}

/// Mean absolute error normalized by the reference peak, in percent.
pub fn normalized_mae_pct(pred: &FrcCurve, truth: &FrcCurve) -> Result<f64> {
    frc_metrics(pred, truth).map(|r| r.shape_error_pct)
}

/// Mean of the normalized absolute error restricted to `lo <= freq <= hi`.
pub fn band_error_pct(pred: &FrcCurve, truth: &FrcCurve, lo: f64, hi: f64) -> f64 {
    let peak = truth.peak_amplitude;
    let errs: Vec<f64> = pred
        .freqs
        .iter()
        .enumerate()
        .filter(|(_, &f)| f >= lo && f <= hi)
        .map(|(i, _)| {
            let p = pred.amplitudes[i];
            if p.is_finite() {
                100.0 * (p - truth.amplitudes[i]).abs() / peak
            } else {
                100.0
            }
        })
        .collect();
    if errs.is_empty() {
        f64::NAN
    } else {
        errs.iter().sum::<f64>() / errs.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sample(f: impl Fn(f64) -> f64, dt: f64, n: usize) -> Vec<f64> {
        (0..n).map(|k| f(k as f64 * dt)).collect()
    }

    fn interior(env: &[f64]) -> &[f64] {
        let e = (EDGE_FRACTION * env.len() as f64).ceil() as usize;
        &env[e..env.len() - e]
    }

    #[test]
    fn envelope_of_unit_cosine() {
        let env = hilbert_envelope(&sample(f64::cos, 0.01, (20.0 * TAU / 0.01) as usize)).unwrap();
        assert!(interior(&env).iter().all(|a| (a - 1.0).abs() < 0.01));
    }

    #[test]
    fn envelope_of_damped_oscillation() {
        // relative error grows near the abrupt start and where the envelope
        // has decayed towards zero, so check the well-conditioned middle
        let dt = 0.01;
        let sig = sample(|t| (-0.2 * t).exp() * (0.98 * t).cos(), dt, 3000);
        let env = hilbert_envelope(&sig).unwrap();
        for k in 300..1500 {
            let truth = (-0.2 * k as f64 * dt).exp();
            assert!((env[k] - truth).abs() / truth < 0.02, "k={k} env={} truth={truth}", env[k]);
        }
    }

    #[test]
    fn envelope_of_constant_and_short_input() {
        let env = hilbert_envelope(&[-3.0; 64]).unwrap();
        assert!(env.iter().all(|a| (a - 3.0).abs() < 1e-12));
        assert!(hilbert_envelope(&[1.0; 7]).is_err());
    }

    #[test]
    fn steady_amplitude_of_oracle() {
        let p = SystemParams::ls1();
        let src = AnalyticSource(p);
        for (r, expect) in [(1.0, 2.5), (3.77, 0.0752)] {
            let f = Forcing::harmonic(1.0, r);
            let traj = src.respond(StateVec::new(0.2, 0.0), &f, 0.01, 10_000).unwrap();
            let a = steady_amplitude(&traj, 0.3, src.decay_rate()).unwrap();
            assert!(!a.warning);
            assert!((a.value - expect).abs() / expect < 2e-3, "r={r}: {}", a.value);
        }
        let cosine = Trajectory::new(0.0, 0.01, sample(|t| 0.7 * (2.0 * t).cos(), 0.01, 5000), vec![0.0; 5000], vec![0.0; 5000]).unwrap();
        let a = steady_amplitude(&cosine, 0.3, None).unwrap();
        assert!((a.value - 0.7).abs() / 0.7 < 5e-3);
        assert!(a.warning);
    }

    #[test]
    fn grid_is_endpoint_inclusive() {
        let g = FrcConfig::default().grid();
        assert_eq!(g.len(), 500);
        assert_eq!(g[0], 0.1);
        assert_eq!(g[499], 10.0);
        let near = g.iter().copied().min_by(|a, b| (a - 0.9592).abs().total_cmp(&(b - 0.9592).abs())).unwrap();
        assert!((near - 0.95311).abs() < 1e-4);
    }

    #[test]
    fn exact_frc_examples() {
        let out = exact_frc(&SystemParams::ls1(), &FrcConfig::default()).unwrap();
        let c = &out.curve;
        assert!((c.peak_amplitude - 2.5516).abs() < 2e-3);
        assert!((c.peak_freq - 0.95311).abs() < 1e-4);
        assert!((c.amplitudes[0] - 1.0).abs() < 0.01);
        assert!((c.amplitudes[499] - 0.0101).abs() < 1e-4);
        let start = c.freqs.iter().position(|&f| f > 1.2).unwrap();
        assert!(c.amplitudes[start..].windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn metric_identities() {
        let c = exact_frc(&SystemParams::ls1(), &FrcConfig { n_points: 50, ..Default::default() }).unwrap().curve;
        let r = frc_metrics(&c, &c).unwrap();
        assert_eq!((r.shape_error_pct, r.peak_error_pct, r.resonance_error_pct), (0.0, 0.0, 0.0));
        let shifted = FrcCurve::new(c.freqs.clone(), c.amplitudes.iter().map(|a| a + 0.01 * c.peak_amplitude).collect()).unwrap();
        let r = frc_metrics(&shifted, &c).unwrap();
        assert!((r.shape_error_pct - 1.0).abs() < 1e-9);
        let other = FrcCurve::new(vec![1.0; 50], c.amplitudes.clone()).unwrap();
        assert!(frc_metrics(&other, &c).is_err());
    }

    #[test]
    fn time_metric_examples() {
        let dt = 0.01;
        let n = 6000;
        let w = 1.3;
        let mk = |f: &dyn Fn(f64) -> f64| Trajectory::new(0.0, dt, sample(f, dt, n), vec![0.0; n], vec![0.0; n]).unwrap();
        let truth = mk(&|t| (w * t).cos());
        let same = time_metrics(&truth, &truth, 0.3).unwrap();
        assert_eq!(same, TimeErrorReport { mse: 0.0, mean_error_pct: 0.0, amp_error_pct: 0.0, phase_error_pct: 0.0, freq_error_pct: 0.0 });
        let scaled = time_metrics(&mk(&|t| 1.1 * (w * t).cos()), &truth, 0.3).unwrap();
        assert!((scaled.amp_error_pct - 10.0).abs() < 1e-6);
        assert!(scaled.phase_error_pct < 1e-6 && scaled.freq_error_pct < 1e-6);
        let delayed = time_metrics(&mk(&|t| (w * t - PI / 2.0).cos()), &truth, 0.3).unwrap();
        assert!((delayed.phase_error_pct - 25.0).abs() < 0.1);
        let short = Trajectory::new(0.0, dt, vec![0.0; 10], vec![0.0; 10], vec![0.0; 10]).unwrap();
        assert!(time_metrics(&short, &truth, 0.3).is_err());
    }

    #[test]
    fn frc_csv_round_trip() {
        let c = FrcCurve::new(vec![0.5, 1.0, 1.5], vec![1.0, f64::NAN, 0.5]).unwrap();
        assert_eq!(c.missing(), vec![1]);
        let text = c.to_csv();
        assert!(text.ends_with("# peak_freq=5.0000000000e-1,peak_amp=1.0000000000e0\n"));
        let back = FrcCurve::from_csv(&text).unwrap();
        assert_eq!(back.peak_freq, 0.5);
        assert!(frc_svg("t", "a", &[("x", &c)]).contains("polyline"));
    }
}
