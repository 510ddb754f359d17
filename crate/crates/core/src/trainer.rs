//! Curriculum synthesis, gradient targets and L1 training with a plateau schedule.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Extras, OperatorNetwork, Variant};
use crate::oscillator::{self, Forcing, StateVec, SystemParams, Trajectory};
use crate::stability::equilibrium_eigenvalues;

/// How the training trajectories are excited.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Excitation {
    /// Harmonic force of acceleration amplitude `drive_amplitude`.
    #[default]
    Force,
    /// Harmonic support motion of displacement amplitude `drive_amplitude`,
    /// simulated in relative coordinates.
    Base,
}

impl Excitation {
    pub fn forcing(self, amplitude: f64, omega: f64) -> Forcing {
        match self {
            Excitation::Force => Forcing::harmonic(amplitude, omega),
            Excitation::Base => Forcing::base(amplitude, omega),
        }
    }
}

/// Banded random uniform curriculum: driving frequencies uniform in a band,
/// initial-condition magnitudes stratified into one cell per trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BruCurriculum {
    pub band_lo: f64,
    pub band_hi: f64,
    #[serde(default = "defaults::n_trajectories")]
    pub n_trajectories: usize,
    #[serde(default = "defaults::ic_range")]
    pub ic_range: (f64, f64),
    /// Length unit of the IC magnitude; `None` means `1 / omega_n^2`
    /// (the static deflection under unit acceleration).
    #[serde(default)]
    pub ic_scale: Option<f64>,
    #[serde(default = "defaults::one")]
    pub drive_amplitude: f64,
    pub horizon: f64,
    #[serde(default = "defaults::half")]
    pub sample_fraction: f64,
    pub dt: f64,
    #[serde(default)]
    pub excitation: Excitation,
    #[serde(default)]
    pub seed: u64,
}

mod defaults {
    pub fn n_trajectories() -> usize {
        10
    }
    pub fn ic_range() -> (f64, f64) {
        (0.001, 1.0)
    }
    pub fn one() -> f64 {
        1.0
    }
    pub fn half() -> f64 {
        0.5
    }
}

impl BruCurriculum {
    pub fn new(band_lo: f64, band_hi: f64, horizon: f64, dt: f64) -> Self {
        BruCurriculum {
            band_lo,
            band_hi,
            n_trajectories: defaults::n_trajectories(),
            ic_range: defaults::ic_range(),
            ic_scale: None,
            drive_amplitude: 1.0,
            horizon,
            sample_fraction: 0.5,
            dt,
            excitation: Excitation::Force,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Domain(format!("curriculum: {m}")));
        if !(self.band_lo > 0.0 && self.band_lo < self.band_hi && self.band_hi.is_finite()) {
            return bad("need 0 < band_lo < band_hi");
        }
        if self.n_trajectories == 0 {
            return bad("n_trajectories must be positive");
        }
        let (lo, hi) = self.ic_range;
        if !(lo >= 0.0 && lo < hi && hi.is_finite()) {
            return bad("need 0 <= ic_range.0 < ic_range.1");
        }
        if !(self.sample_fraction > 0.0 && self.sample_fraction <= 1.0) {
            return bad("sample_fraction must lie in (0, 1]");
        }
        if !(self.horizon > 0.0 && self.dt > 0.0 && self.horizon >= self.dt) {
            return bad("need 0 < dt <= horizon");
        }
        if !(self.drive_amplitude.is_finite() && self.drive_amplitude >= 0.0) {
            return bad("drive_amplitude must be finite and non-negative");
        }
        if matches!(self.ic_scale, Some(s) if !(s > 0.0 && s.is_finite())) {
            return bad("ic_scale must be positive");
        }
        oscillator::check_nyquist(self.dt, self.band_hi)
    }

    pub fn n_steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    /// Bounds of the IC magnitude cell for trajectory `i`.
    pub fn ic_cell(&self, i: usize) -> (f64, f64) {
        let (lo, hi) = self.ic_range;
        let w = (hi - lo) / self.n_trajectories as f64;
        (lo + w * i as f64, lo + w * (i + 1) as f64)
    }
}

/// One simulated training trajectory with the forcing that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct CurriculumTrajectory {
    pub forcing: Forcing,
    pub ic: StateVec,
    /// IC magnitude in units of the curriculum length scale.
    pub ic_magnitude: f64,
    pub trajectory: Trajectory,
}

/// Simulate the curriculum with the reference integrator.
pub fn generate_curriculum(cur: &BruCurriculum, params: &SystemParams) -> Result<Vec<CurriculumTrajectory>> {
    cur.validate()?;
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cur.seed);
    let length = cur.ic_scale.unwrap_or(1.0 / (params.omega_n * params.omega_n));
    let n_steps = cur.n_steps();
    (0..cur.n_trajectories)
        .map(|i| {
            let omega = rng.gen_range(cur.band_lo..=cur.band_hi);
            let (lo, hi) = cur.ic_cell(i);
            let mag = rng.gen_range(lo..=hi);
            let angle = rng.gen_range(0.0..std::f64::consts::TAU);
            let ic = StateVec::new(mag * length * angle.cos(), mag * length * params.omega_n * angle.sin());
            let forcing = cur.excitation.forcing(cur.drive_amplitude, omega);
            let trajectory = oscillator::reference_integrate(params, &forcing, ic, cur.dt, n_steps)?;
            Ok(CurriculumTrajectory {
                forcing,
                ic,
                ic_magnitude: mag,
                trajectory,
            })
        })
        .collect()
}

/// Input/target pair for one retained time step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub state: StateVec,
    pub t: f64,
    pub u: f64,
    pub target: [f64; 2],
}

impl TrainingSample {
    pub fn is_finite(&self) -> bool {
        self.state.is_finite() && self.t.is_finite() && self.u.is_finite() && self.target.iter().all(|v| v.is_finite())
    }
}

/// Source of the acceleration in the targets.
#[derive(Debug, Clone, Copy)]
pub enum Derivative<'a> {
    /// Exact right-hand side of the known system at the sampled state.
    Exact(&'a SystemParams),
    /// Central difference of the velocity column, for measured data.
    FiniteDifference,
}

/// Build training pairs from a trajectory whose `u` column holds the forcing
/// acceleration. State-only layouts learn the free gradient `(qdot, qddot - u)`;
/// the branch-trunk layout learns the full `(qdot, qddot)`.
pub fn make_targets(
    traj: &Trajectory,
    variant: Variant,
    derivative: Derivative<'_>,
    sample_fraction: f64,
    seed: u64,
) -> Result<Vec<TrainingSample>> {
    if !(sample_fraction > 0.0 && sample_fraction <= 1.0) {
        return Err(Error::Domain("sample_fraction must lie in (0, 1]".into()));
    }
    let n_steps = traj.len().saturating_sub(1);
    let candidates: Vec<usize> = match derivative {
        Derivative::Exact(_) => (0..n_steps).collect(),
        Derivative::FiniteDifference => (1..n_steps).collect(),
    };
    let want = ((sample_fraction * n_steps as f64).round() as usize).min(candidates.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> = rand::seq::index::sample(&mut rng, candidates.len(), want)
        .into_iter()
        .map(|k| candidates[k])
        .collect();
    picked.sort_unstable();

    Ok(picked
        .into_iter()
        .map(|k| {
            let state = traj.state(k);
            let u = traj.u[k];
            let qddot = match derivative {
                Derivative::Exact(p) => oscillator::free_rhs(state, p).qdot + u,
                Derivative::FiniteDifference => (traj.qdot[k + 1] - traj.qdot[k - 1]) / (2.0 * traj.dt),
            };
            let accel = if variant.takes_forcing() { qddot } else { qddot - u };
            TrainingSample {
                state,
                t: traj.time(k),
                u,
                target: [state.qdot, accel],
            }
        })
        .collect())
}

/// Targets for a whole curriculum with per-trajectory seeds derived from `seed`.
pub fn curriculum_samples(
    trajectories: &[CurriculumTrajectory],
    params: &SystemParams,
    variant: Variant,
    sample_fraction: f64,
    seed: u64,
) -> Result<Vec<TrainingSample>> {
    let mut out = Vec::new();
    for (i, ct) in trajectories.iter().enumerate() {
        let s = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i as u64 + 1);
        out.extend(make_targets(&ct.trajectory, variant, Derivative::Exact(params), sample_fraction, s)?);
    }
    Ok(out)
}

/// Mean absolute elementwise deviation.
pub fn l1_loss(pred: &[[f64; 2]], target: &[[f64; 2]]) -> Result<f64> {
    if pred.is_empty() {
        return Err(Error::Domain("empty batch".into()));
    }
    if pred.len() != target.len() {
        return Err(Error::Shape(format!("{} predictions vs {} targets", pred.len(), target.len())));
    }
    let sum: f64 = pred
        .iter()
        .zip(target)
        .map(|(p, t)| (p[0] - t[0]).abs() + (p[1] - t[1]).abs())
        .sum();
    Ok(sum / (2 * pred.len()) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    #[serde(default = "TrainingConfig::default_epochs")]
    pub epochs: usize,
    #[serde(default = "TrainingConfig::default_batch")]
    pub batch_size: usize,
    #[serde(default = "TrainingConfig::default_lr")]
    pub lr_initial: f64,
    #[serde(default = "TrainingConfig::default_factor")]
    pub plateau_factor: f64,
    #[serde(default = "TrainingConfig::default_patience")]
    pub plateau_patience: usize,
    /// Relative improvement an epoch must make to reset the plateau counter.
    #[serde(default = "TrainingConfig::default_threshold")]
    pub plateau_threshold: f64,
    #[serde(default = "TrainingConfig::default_lr_min")]
    pub lr_min: f64,
    /// Divide each batch loss by the RMS of its targets.
    #[serde(default)]
    pub rms_normalize: bool,
    /// Refit the input/output normalization from the samples before training.
    #[serde(default = "TrainingConfig::default_fit")]
    pub fit_normalization: bool,
    #[serde(default)]
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            epochs: Self::default_epochs(),
            batch_size: Self::default_batch(),
            lr_initial: Self::default_lr(),
            plateau_factor: Self::default_factor(),
            plateau_patience: Self::default_patience(),
            plateau_threshold: Self::default_threshold(),
            lr_min: Self::default_lr_min(),
            rms_normalize: false,
            fit_normalization: true,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    fn default_epochs() -> usize {
        100
    }
    fn default_batch() -> usize {
        32
    }
    fn default_lr() -> f64 {
        1e-3
    }
    fn default_factor() -> f64 {
        0.5
    }
    fn default_patience() -> usize {
        10
    }
    fn default_threshold() -> f64 {
        1e-4
    }
    fn default_lr_min() -> f64 {
        1e-6
    }
    fn default_fit() -> bool {
        true
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Domain(format!("training: {m}")));
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.lr_initial > 0.0 && self.lr_initial.is_finite()) {
            return bad("lr_initial must be positive");
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return bad("plateau_factor must lie in (0, 1)");
        }
        if !(self.lr_min >= 0.0 && self.lr_min <= self.lr_initial) {
            return bad("need 0 <= lr_min <= lr_initial");
        }
        if !(self.plateau_threshold >= 0.0) {
            return bad("plateau_threshold must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub lr: f64,
    pub eig_re: f64,
    pub eig_im: f64,
}

impl EpochRecord {
    pub const CSV_HEADER: &'static str = "epoch,loss,lr,eig_re,eig_im";

    pub fn csv_row(&self) -> String {
        format!("{},{:.10e},{:.6e},{:.10e},{:.10e}", self.epoch, self.loss, self.lr, self.eig_re, self.eig_im)
    }
}

pub fn records_csv(records: &[EpochRecord]) -> String {
    let mut s = format!("{}\n", EpochRecord::CSV_HEADER);
    for r in records {
        let _ = writeln!(s, "{}", r.csv_row());
    }
    s
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub net: OperatorNetwork,
    /// Loss and eigenvalues of the network before the first update (epoch 0).
    pub initial: EpochRecord,
    pub records: Vec<EpochRecord>,
}

impl TrainingOutcome {
    pub fn final_loss(&self) -> f64 {
        self.records.last().map_or(self.initial.loss, |r| r.loss)
    }
}

/// Adaptive-moment optimizer state.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(shapes: impl Iterator<Item = usize>) -> Self {
        let (m, v): (Vec<_>, Vec<_>) = shapes.map(|n| (vec![0.0; n], vec![0.0; n])).unzip();
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m,
            v,
        }
    }

    pub fn update<'a>(&mut self, params: impl Iterator<Item = &'a mut Vec<f64>>, grads: &[Vec<f64>], lr: f64) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step);
        let bc2 = 1.0 - self.beta2.powi(self.step);
        for (((p, g), m), v) in params.zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                p[i] -= lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}

/// Learning-rate decay when the monitored loss stops improving.
#[derive(Debug, Clone)]
pub struct PlateauScheduler {
    pub lr: f64,
    factor: f64,
    patience: usize,
    threshold: f64,
    lr_min: f64,
    best: f64,
    bad_epochs: usize,
}

impl PlateauScheduler {
    pub fn new(config: &TrainingConfig) -> Self {
        PlateauScheduler {
            lr: config.lr_initial,
            factor: config.plateau_factor,
            patience: config.plateau_patience,
            threshold: config.plateau_threshold,
            lr_min: config.lr_min,
            best: f64::INFINITY,
            bad_epochs: 0,
        }
    }

    pub fn step(&mut self, loss: f64) {
        if loss < self.best * (1.0 - self.threshold) {
            self.best = loss;
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
        }
        if self.bad_epochs > self.patience {
            self.lr = (self.lr * self.factor).max(self.lr_min);
            self.bad_epochs = 0;
        }
    }
}

/// Zero-shift max-abs input scaling, horizon time scaling and per-component
/// RMS output scaling.
pub fn fit_normalization(net: &mut OperatorNetwork, samples: &[TrainingSample]) {
    let guard = |v: f64| if v > 1e-12 && v.is_finite() { v } else { 1.0 };
    let max_abs = |f: &dyn Fn(&TrainingSample) -> f64| guard(samples.iter().map(|s| f(s).abs()).fold(0.0, f64::max));
    let rms = |f: &dyn Fn(&TrainingSample) -> f64| {
        guard((samples.iter().map(|s| f(s).powi(2)).sum::<f64>() / samples.len().max(1) as f64).sqrt())
    };
    let n = &mut net.norm;
    n.input_shift.iter_mut().for_each(|v| *v = 0.0);
    n.input_scale[0] = max_abs(&|s| s.state.q);
    n.input_scale[1] = max_abs(&|s| s.state.qdot);
    if n.input_scale.len() > 2 {
        n.input_scale[2] = max_abs(&|s| s.u);
    }
    n.time_scale = max_abs(&|s| s.t);
    n.output_scale = [rms(&|s| s.target[0]), rms(&|s| s.target[1])];
}

fn extras_of(net: &OperatorNetwork, s: &TrainingSample) -> Option<Extras> {
    net.variant.takes_forcing().then_some(Extras { t: s.t, u: s.u })
}

/// Mean L1 loss of `net` over `samples`, in normalized output units.
pub fn dataset_loss(net: &OperatorNetwork, samples: &[TrainingSample]) -> Result<f64> {
    let sc = net.norm.output_scale;
    let mut pred = Vec::with_capacity(samples.len());
    let mut tgt = Vec::with_capacity(samples.len());
    for s in samples {
        let g = net.eval(s.state, extras_of(net, s));
        pred.push([g.q / sc[0], g.qdot / sc[1]]);
        tgt.push([s.target[0] / sc[0], s.target[1] / sc[1]]);
    }
    l1_loss(&pred, &tgt)
}

fn eig_record(net: &OperatorNetwork, epoch: usize, loss: f64, lr: f64) -> EpochRecord {
    let (eig_re, eig_im) = equilibrium_eigenvalues(net).eigenvalues.leading();
    EpochRecord { epoch, loss, lr, eig_re, eig_im }
}

pub fn train(net: &OperatorNetwork, samples: &[TrainingSample], config: &TrainingConfig) -> Result<TrainingOutcome> {
    train_with_observer(net, samples, config, |_| {})
}

/// Train a copy of `net`, calling `observe` after every epoch (records are
/// therefore available to the caller even when training later diverges).
pub fn train_with_observer(
    net: &OperatorNetwork,
    samples: &[TrainingSample],
    config: &TrainingConfig,
    mut observe: impl FnMut(&EpochRecord),
) -> Result<TrainingOutcome> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::Domain("no training samples".into()));
    }
    if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFinite(format!("training sample {i}")));
    }
    let mut net = net.clone();
    if config.epochs == 0 {
        let initial = eig_record(&net, 0, dataset_loss(&net, samples)?, config.lr_initial);
        return Ok(TrainingOutcome { net, initial, records: Vec::new() });
    }
    if config.fit_normalization {
        fit_normalization(&mut net, samples);
    }
    let initial = eig_record(&net, 0, dataset_loss(&net, samples)?, config.lr_initial);

    let sc = net.norm.output_scale;
    let targets: Vec<[f64; 2]> = samples.iter().map(|s| [s.target[0] / sc[0], s.target[1] / sc[1]]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut adam = Adam::new(net.tensors().map(|t| t.len()));
    let mut sched = PlateauScheduler::new(config);
    let mut grads = net.zero_gradients();
    let mut records = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let lr = sched.lr;
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            grads.iter_mut().for_each(|g| g.iter_mut().for_each(|v| *v = 0.0));
            let weight = if config.rms_normalize {
                let ms = batch.iter().map(|&k| targets[k][0].powi(2) + targets[k][1].powi(2)).sum::<f64>()
                    / (2 * batch.len()) as f64;
                1.0 / ms.sqrt().max(1e-12)
            } else {
                1.0
            };
            let scale = weight / (2 * batch.len()) as f64;
            let mut batch_loss = 0.0;
            for &k in batch {
                let s = &samples[k];
                let t = targets[k];
                net.backprop(
                    s.state,
                    extras_of(&net, s),
                    |raw| {
                        let d = [raw[0] - t[0], raw[1] - t[1]];
                        batch_loss += d[0].abs() + d[1].abs();
                        [scale * sign(d[0]), scale * sign(d[1])]
                    },
                    &mut grads,
                );
            }
            total += batch_loss;
            adam.update(net.tensors_mut(), &grads, lr);
        }
        let loss = total / (2 * samples.len()) as f64;
        if !loss.is_finite() || !net.is_finite() {
            return Err(Error::Divergence { epoch, loss });
        }
        let rec = eig_record(&net, epoch, loss, lr);
        observe(&rec);
        records.push(rec);
        sched.step(loss);
    }
    Ok(TrainingOutcome { net, initial, records })
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::ArchitectureConfig;

    fn small_curriculum() -> BruCurriculum {
        let mut c = BruCurriculum::new(0.8, 1.5, 3.0, 0.01);
        c.seed = 7;
        c
    }

    #[test]
    fn curriculum_is_deterministic_and_banded() {
        let c = small_curriculum();
        let a = generate_curriculum(&c, &SystemParams::ls1()).unwrap();
        let b = generate_curriculum(&c, &SystemParams::ls1()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 10);
        for (i, ct) in a.iter().enumerate() {
            let w = ct.forcing.omega().unwrap();
            assert!((0.8..=1.5).contains(&w));
            let (lo, hi) = c.ic_cell(i);
            assert!(ct.ic_magnitude >= lo && ct.ic_magnitude <= hi);
            assert!((ct.ic.q.hypot(ct.ic.qdot) - ct.ic_magnitude).abs() < 1e-12);
            assert_eq!(ct.trajectory.len(), 301);
        }
    }

    #[test]
    fn curriculum_rejects_aliasing_step() {
        let mut c = BruCurriculum::new(5.0, 10.0, 10.0, 0.4);
        assert!(matches!(generate_curriculum(&c, &SystemParams::ls1()), Err(Error::Nyquist { .. })));
        c.dt = 0.3;
        assert!(generate_curriculum(&c, &SystemParams::ls1()).is_ok());
    }

    #[test]
    fn target_examples() {
        let p = SystemParams::ls1();
        let traj = Trajectory::new(0.0, 0.01, vec![1.0, 0.0], vec![0.0, 0.0], vec![1.0, 0.0]).unwrap();
        let v3 = make_targets(&traj, Variant::AmplitudePhase, Derivative::Exact(&p), 1.0, 0).unwrap();
        assert_eq!(v3[0].target, [0.0, -1.0]);
        let v1 = make_targets(&traj, Variant::BranchTrunk, Derivative::Exact(&p), 1.0, 0).unwrap();
        assert_eq!(v1[0].target, [0.0, 0.0]);

        let n = 301;
        let long = Trajectory::new(0.0, 0.01, vec![0.0; n], vec![0.0; n], vec![0.0; n]).unwrap();
        let s = make_targets(&long, Variant::AmplitudePhase, Derivative::Exact(&p), 0.5, 3).unwrap();
        assert_eq!(s.len(), 150);
        assert!(s.iter().all(|x| x.target == [0.0, 0.0]));
    }

    #[test]
    fn finite_difference_targets_are_second_order() {
        let p = SystemParams::ls1();
        let f = Forcing::harmonic(1.0, 1.2);
        let traj = oscillator::analytic_trajectory(&p, &f, StateVec::new(0.2, 0.0), 0.01, 500).unwrap();
        let ex = make_targets(&traj, Variant::StateOnly, Derivative::Exact(&p), 1.0, 1).unwrap();
        let fd = make_targets(&traj, Variant::StateOnly, Derivative::FiniteDifference, 1.0, 1).unwrap();
        for s in &fd {
            let e = ex.iter().find(|e| e.t == s.t).unwrap();
            assert!((s.target[1] - e.target[1]).abs() < 1e-4);
        }
    }

    #[test]
    fn l1_examples() {
        let a = [[1.0, 2.0], [3.0, -4.0]];
        assert_eq!(l1_loss(&a, &a).unwrap(), 0.0);
        let b = [[2.0, 3.0], [4.0, -3.0]];
        assert_eq!(l1_loss(&b, &a).unwrap(), 1.0);
        assert_eq!(l1_loss(&[[0.0, 0.0]], &[[0.0, -2.0]]).unwrap(), 1.0);
        assert!(l1_loss(&[], &[]).is_err());
        assert!(l1_loss(&a, &a[..1]).is_err());
    }

    #[test]
    fn scheduler_halves_after_patience() {
        let cfg = TrainingConfig { plateau_patience: 2, ..Default::default() };
        let mut s = PlateauScheduler::new(&cfg);
        s.step(1.0);
        for _ in 0..2 {
            s.step(1.0);
            assert_eq!(s.lr, 1e-3);
        }
        s.step(1.0);
        assert_eq!(s.lr, 5e-4);
        let mut floor = PlateauScheduler::new(&TrainingConfig { plateau_patience: 0, lr_min: 4e-4, ..Default::default() });
        for _ in 0..10 {
            floor.step(1.0);
        }
        assert_eq!(floor.lr, 4e-4);
    }

    #[test]
    fn zero_epochs_returns_network_unchanged() {
        let arch = ArchitectureConfig::default_for(Variant::AmplitudePhase);
        let net = OperatorNetwork::init(&arch, 1).unwrap();
        let samples = vec![TrainingSample { state: StateVec::new(1.0, 0.0), t: 0.0, u: 0.0, target: [0.0, -1.0] }];
        let out = train(&net, &samples, &TrainingConfig { epochs: 0, ..Default::default() }).unwrap();
        assert_eq!(out.net, net);
        assert!(out.records.is_empty());
        assert!(train(&net, &[], &TrainingConfig::default()).is_err());
    }

    #[test]
    fn short_training_reduces_loss_deterministically() {
        let p = SystemParams::ls1();
        let c = small_curriculum();
        let data = generate_curriculum(&c, &p).unwrap();
        let samples = curriculum_samples(&data, &p, Variant::AmplitudePhase, 0.5, 1).unwrap();
        let arch = ArchitectureConfig::default_for(Variant::AmplitudePhase);
        let net = OperatorNetwork::init(&arch, 3).unwrap();
        let cfg = TrainingConfig { epochs: 5, seed: 11, ..Default::default() };
        let a = train(&net, &samples, &cfg).unwrap();
        let b = train(&net, &samples, &cfg).unwrap();
        assert_eq!(a.records, b.records);
        assert!(a.final_loss() < a.initial.loss);
        assert!(a.records.windows(2).all(|w| w[1].lr <= w[0].lr));
        let csv = records_csv(&a.records);
        assert_eq!(csv.lines().count(), 6);
    }
}
