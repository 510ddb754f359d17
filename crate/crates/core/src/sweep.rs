//! Sensitivity sweeps: retrain and re-evaluate a pipeline over a grid of one
//! curriculum or sampling parameter.
//!
//! Frequencies, bands and horizons in a sweep are given in units of the base
//! pipeline's natural frequency (nondimensional for LS-1).

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::run_parallel;
use crate::frc::{FrcConfig, FrcErrorReport};
use crate::pipeline::{derive_seed, Pipeline};
use crate::plot::{line_plot, Series, PALETTE};
use crate::trainer::BruCurriculum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    /// Grid: band width. Groups: band centers.
    Bandwidth,
    /// Grid: band center. Groups: band widths.
    BandCenter,
    /// Grid: band center. Groups: training drive amplitudes.
    DriveAmplitude,
    /// Grid: trajectory count. Groups: training horizons.
    TrajectoryCount,
    /// Grid: natural frequency. Groups: sampling ratios.
    FrequencyRatio,
}

impl SweepKind {
    pub const ALL: [SweepKind; 5] = [
        SweepKind::Bandwidth,
        SweepKind::BandCenter,
        SweepKind::DriveAmplitude,
        SweepKind::TrajectoryCount,
        SweepKind::FrequencyRatio,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            SweepKind::Bandwidth => "bandwidth",
            SweepKind::BandCenter => "band_center",
            SweepKind::DriveAmplitude => "drive_amplitude",
            SweepKind::TrajectoryCount => "trajectory_count",
            SweepKind::FrequencyRatio => "frequency_ratio",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.tag() == s.replace('-', "_"))
            .ok_or_else(|| Error::Config(format!("unknown sweep kind '{s}'")))
    }

    fn axis_labels(self) -> (&'static str, &'static str) {
        match self {
            SweepKind::Bandwidth => ("band width", "center"),
            SweepKind::BandCenter => ("band center", "width"),
            SweepKind::DriveAmplitude => ("band center", "A"),
            SweepKind::TrajectoryCount => ("trajectories", "t_T"),
            SweepKind::FrequencyRatio => ("omega_n", "R_s"),
        }
    }
}

/// Settings held constant across the points of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepFixed {
    pub epochs: usize,
    pub train_horizon: f64,
    pub band_center: f64,
    pub band_width: f64,
    pub n_trajectories: usize,
    pub drive_amplitude: f64,
    pub frc_points: usize,
    pub frc_band: (f64, f64),
    pub frc_horizon: f64,
    /// Upper frequency ratio of the FRC in frequency-ratio sweeps.
    pub ratio_max: f64,
    pub ratio_points: usize,
}

impl Default for SweepFixed {
    fn default() -> Self {
        SweepFixed {
            epochs: 100,
            train_horizon: 10.0,
            band_center: 1.15,
            band_width: 0.7,
            n_trajectories: 10,
            drive_amplitude: 1.0,
            frc_points: 50,
            frc_band: (0.1, 10.0),
            frc_horizon: 100.0,
            ratio_max: 7.0,
            ratio_points: 70,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub kind: SweepKind,
    pub grid: Vec<f64>,
    pub groups: Vec<f64>,
    #[serde(default)]
    pub fixed: SweepFixed,
    #[serde(default)]
    pub seed: u64,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| if i + 1 == n { hi } else { lo + (hi - lo) * i as f64 / (n - 1).max(1) as f64 }).collect()
}

impl SweepSpec {
    /// The full-size grid of each study.
    pub fn default_for(kind: SweepKind) -> Self {
        let (grid, groups) = match kind {
            SweepKind::Bandwidth => (linspace(0.1, 2.0, 10), vec![1.0, 2.0, 5.0]),
            SweepKind::BandCenter => (linspace(1.1, 10.0, 10), vec![0.1]),
            SweepKind::DriveAmplitude => (linspace(1.1, 10.0, 10), vec![1.0, 5.0, 10.0]),
            SweepKind::TrajectoryCount => ((1..=15).map(f64::from).collect(), vec![3.0, 10.0, 100.0]),
            SweepKind::FrequencyRatio => (linspace(10.0, 50.0, 10), vec![10.0]),
        };
        let mut fixed = SweepFixed::default();
        if kind == SweepKind::DriveAmplitude {
            fixed.band_width = 0.1;
        }
        SweepSpec { kind, grid, groups, fixed, seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::Config("sweep grid is empty".into()));
        }
        if self.groups.is_empty() {
            return Err(Error::Config("sweep needs at least one group value".into()));
        }
        if self.grid.iter().chain(&self.groups).any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Domain("sweep values must be positive and finite".into()));
        }
        if self.kind == SweepKind::TrajectoryCount && self.grid.iter().any(|v| v.fract() != 0.0) {
            return Err(Error::Domain("trajectory counts must be whole numbers".into()));
        }
        Ok(())
    }

    /// `(point_id, swept value, group value)` in row-major group order.
    pub fn points(&self) -> Vec<(usize, f64, f64)> {
        self.groups
            .iter()
            .flat_map(|&g| self.grid.iter().map(move |&v| (v, g)))
            .enumerate()
            .map(|(i, (v, g))| (i, v, g))
            .collect()
    }

    /// Pipeline of one sweep point, derived from `base`.
    pub fn point_pipeline(&self, base: &Pipeline, point_id: usize, value: f64, group: f64) -> Result<Pipeline> {
        let fx = &self.fixed;
        let mut p = base.clone();
        p.training.epochs = fx.epochs;
        p.reseed(derive_seed(self.seed, point_id as u64));
        if self.kind == SweepKind::FrequencyRatio {
            let omega_n0 = p.system.omega_n;
            p.system.omega_n = 1.0;
            p.system.length_scale = p.system.length_scale.map(|l| l * omega_n0 * omega_n0);
            p.curriculum = BruCurriculum {
                seed: p.curriculum.seed,
                n_trajectories: fx.n_trajectories,
                drive_amplitude: fx.drive_amplitude,
                excitation: p.curriculum.excitation,
                ..BruCurriculum::new(
                    fx.band_center - 0.5 * fx.band_width,
                    fx.band_center + 0.5 * fx.band_width,
                    fx.train_horizon,
                    0.01,
                )
            };
            p.frc = FrcConfig {
                band: (0.1, fx.ratio_max),
                n_points: fx.ratio_points,
                horizon: fx.frc_horizon,
                excitation: p.frc.excitation,
                ..FrcConfig::default()
            };
            p.scale_to(value, group)?;
            return Ok(p);
        }
        let w = p.system.omega_n;
        let (center, width, amplitude, count, horizon) = match self.kind {
            SweepKind::Bandwidth => (group, value, fx.drive_amplitude, fx.n_trajectories, fx.train_horizon),
            SweepKind::BandCenter => (value, group, fx.drive_amplitude, fx.n_trajectories, fx.train_horizon),
            SweepKind::DriveAmplitude => (value, fx.band_width, group, fx.n_trajectories, fx.train_horizon),
            SweepKind::TrajectoryCount => (fx.band_center, fx.band_width, fx.drive_amplitude, value as usize, group),
            SweepKind::FrequencyRatio => unreachable!(),
        };
        // wide bands around low centers are clipped to stay positive
        let lo = (center - 0.5 * width).max(0.02 * center);
        let c = &mut p.curriculum;
        c.band_lo = lo * w;
        c.band_hi = (center + 0.5 * width) * w;
        c.drive_amplitude = amplitude;
        c.n_trajectories = count;
        c.horizon = horizon / w;
        let f = &mut p.frc;
        f.band = (fx.frc_band.0 * w, fx.frc_band.1 * w);
        f.n_points = fx.frc_points;
        f.horizon = fx.frc_horizon / w;
        Ok(p)
    }
}

/// Percent error per frequency ratio, normalized by the true peak.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorCurve {
    pub point_id: usize,
    pub ratios: Vec<f64>,
    pub error_pct: Vec<f64>,
}

impl ErrorCurve {
    /// Mean error over `lo <= r <= hi`.
    pub fn mean_in(&self, lo: f64, hi: f64) -> f64 {
        let v: Vec<f64> = self
            .ratios
            .iter()
            .zip(&self.error_pct)
            .filter(|(r, e)| **r >= lo && **r <= hi && e.is_finite())
            .map(|(_, e)| *e)
            .collect();
        if v.is_empty() {
            f64::NAN
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    }

    /// Ratio of the largest error within `lo <= r <= hi`.
    pub fn argmax_in(&self, lo: f64, hi: f64) -> Option<f64> {
        self.ratios
            .iter()
            .zip(&self.error_pct)
            .filter(|(r, e)| **r >= lo && **r <= hi && e.is_finite())
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(r, _)| *r)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub point_id: usize,
    pub swept_value: f64,
    pub group: f64,
    pub report: Option<FrcErrorReport>,
    /// Mean error over the FRC normalized by its true peak (frequency-ratio sweeps).
    pub e_pct: Option<f64>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub kind: SweepKind,
    pub rows: Vec<SweepRow>,
    pub error_curves: Vec<ErrorCurve>,
}

fn num(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x:.6e}"),
        _ => "nan".into(),
    }
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        if self.kind == SweepKind::FrequencyRatio {
            s.push_str("point_id,swept_value,E_pct,group\n");
            for r in &self.rows {
                let _ = writeln!(s, "{},{:.6e},{},{:.6e}", r.point_id, r.swept_value, num(r.e_pct), r.group);
            }
        } else {
            s.push_str("point_id,swept_value,shape_err,peak_err,res_err,group\n");
            for r in &self.rows {
                let m = r.report.as_ref();
                let _ = writeln!(
                    s,
                    "{},{:.6e},{},{},{},{:.6e}",
                    r.point_id,
                    r.swept_value,
                    num(m.map(|m| m.shape_error_pct)),
                    num(m.map(|m| m.peak_error_pct)),
                    num(m.map(|m| m.resonance_error_pct)),
                    r.group
                );
            }
        }
        s
    }

    /// Long-format per-ratio error curves (frequency-ratio sweeps).
    pub fn error_curves_csv(&self) -> String {
        let mut s = String::from("point_id,r,error_pct\n");
        for c in &self.error_curves {
            for (r, e) in c.ratios.iter().zip(&c.error_pct) {
                let _ = writeln!(s, "{},{:.6e},{}", c.point_id, r, num(Some(*e)));
            }
        }
        s
    }

    pub fn failures(&self) -> Vec<(usize, &str)> {
        self.rows.iter().filter_map(|r| r.failure.as_deref().map(|f| (r.point_id, f))).collect()
    }

    /// Headline metric per row: peak error, or `E_pct` for frequency-ratio sweeps.
    pub fn metric(&self, row: &SweepRow) -> f64 {
        if self.kind == SweepKind::FrequencyRatio {
            row.e_pct.unwrap_or(f64::NAN)
        } else {
            row.report.map_or(f64::NAN, |r| r.peak_error_pct)
        }
    }

    /// `(swept value, metric)` pairs of one group, in grid order.
    pub fn series(&self, group: f64, metric: impl Fn(&SweepRow) -> f64) -> Vec<(f64, f64)> {
        self.rows.iter().filter(|r| r.group == group).map(|r| (r.swept_value, metric(r))).collect()
    }

    pub fn groups(&self) -> Vec<f64> {
        let mut g: Vec<f64> = Vec::new();
        for r in &self.rows {
            if !g.contains(&r.group) {
                g.push(r.group);
            }
        }
        g
    }

    pub fn summary_svg(&self) -> String {
        let (x, gname) = self.kind.axis_labels();
        let y = if self.kind == SweepKind::FrequencyRatio { "E_pct" } else { "peak error %" };
        let series: Vec<Series> = self
            .groups()
            .iter()
            .enumerate()
            .map(|(i, &g)| {
                Series::line(format!("{gname} = {g}"), self.series(g, |r| self.metric(r)), PALETTE[i % PALETTE.len()])
                    .with_markers()
            })
            .collect();
        line_plot(&format!("{} sweep", self.kind.tag()), x, y, &series)
    }

    pub fn error_curves_svg(&self) -> String {
        let series: Vec<Series> = self
            .error_curves
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let pts = c.ratios.iter().copied().zip(c.error_pct.iter().copied()).collect();
                Series::line(format!("point {}", c.point_id), pts, PALETTE[i % PALETTE.len()])
            })
            .collect();
        line_plot("error along the FRC", "r", "error % of peak", &series)
    }
}

fn run_point(spec: &SweepSpec, base: &Pipeline, point: (usize, f64, f64)) -> (SweepRow, Option<ErrorCurve>) {
    let (point_id, swept_value, group) = point;
    let mut row = SweepRow { point_id, swept_value, group, report: None, e_pct: None, failure: None };
    let outcome = spec.point_pipeline(base, point_id, swept_value, group).and_then(|p| {
        p.validate()?;
        let trained = p.train()?;
        Ok((p.evaluate(&trained.net, Some(1))?, p.system.omega_n))
    });
    match outcome {
        Ok((eval, omega_n)) => {
            row.report = Some(eval.report);
            if spec.kind != SweepKind::FrequencyRatio {
                return (row, None);
            }
            let peak = eval.exact.curve.peak_amplitude;
            let error_pct: Vec<f64> = eval
                .predicted
                .curve
                .amplitudes
                .iter()
                .zip(&eval.exact.curve.amplitudes)
                .map(|(p, t)| if p.is_finite() { 100.0 * (p - t).abs() / peak } else { 100.0 })
                .collect();
            row.e_pct = Some(error_pct.iter().sum::<f64>() / error_pct.len() as f64);
            let ratios = eval.exact.curve.freqs.iter().map(|f| f / omega_n).collect();
            (row, Some(ErrorCurve { point_id, ratios, error_pct }))
        }
        Err(e) => {
            row.failure = Some(e.to_string());
            (row, None)
        }
    }
}

/// Train and evaluate every point. Points run in parallel across `workers`;
/// a failing point is recorded and the sweep continues.
pub fn run_sweep(spec: &SweepSpec, base: &Pipeline, workers: Option<usize>) -> Result<SweepResult> {
    spec.validate()?;
    let points = spec.points();
    let out = run_parallel(workers, &points, |&pt| run_point(spec, base, pt));
    let mut rows = Vec::with_capacity(out.len());
    let mut error_curves = Vec::new();
    for (row, curve) in out {
        rows.push(row);
        error_curves.extend(curve);
    }
    rows.sort_by_key(|r| r.point_id);
    error_curves.sort_by_key(|c| c.point_id);
    Ok(SweepResult { kind: spec.kind, rows, error_curves })
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = 0.5 * (i + j) as f64 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties; `NaN` if undefined.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    if x.len() != y.len() || x.len() < 2 {
        return f64::NAN;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

/// Centered 3-point moving average; endpoints average their two available values.
pub fn smooth3(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    (0..n)
        .map(|i| {
            let w = &v[i.saturating_sub(1)..(i + 2).min(n)];
            w.iter().sum::<f64>() / w.len() as f64
        })
        .collect()
}

/// Smallest `x` from which every later `y` stays within
/// `min + rel_tol * (max - min)` of the series; `None` for an empty series.
pub fn plateau_onset(xs: &[f64], ys: &[f64], rel_tol: f64) -> Option<f64> {
    let finite: Vec<f64> = ys.iter().copied().filter(|y| y.is_finite()).collect();
    if finite.is_empty() || xs.len() != ys.len() {
        return None;
    }
    let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let bound = lo + rel_tol * (hi - lo);
    let mut onset = None;
    for (x, y) in xs.iter().zip(ys).rev() {
        if y.is_finite() && *y <= bound {
            onset = Some(*x);
        } else {
            break;
        }
    }
    onset
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_grids_match_studies() {
        let b = SweepSpec::default_for(SweepKind::Bandwidth);
        assert_eq!(b.grid.len(), 10);
        assert_eq!((b.grid[0], b.grid[9]), (0.1, 2.0));
        let c = SweepSpec::default_for(SweepKind::BandCenter);
        assert_eq!((c.grid[0], c.grid[9]), (1.1, 10.0));
        let t = SweepSpec::default_for(SweepKind::TrajectoryCount);
        assert_eq!(t.points().len(), 45);
        let f = SweepSpec::default_for(SweepKind::FrequencyRatio);
        assert_eq!((f.grid[0], f.grid[9], f.groups[0]), (10.0, 50.0, 10.0));
    }

    #[test]
    fn empty_grid_rejected() {
        let mut s = SweepSpec::default_for(SweepKind::BandCenter);
        s.grid.clear();
        assert!(matches!(run_sweep(&s, &Pipeline::ls1(), Some(1)), Err(Error::Config(_))));
    }

    #[test]
    fn kinds_roundtrip() {
        for k in SweepKind::ALL {
            assert_eq!(SweepKind::parse(k.tag()).unwrap(), k);
        }
        assert_eq!(SweepKind::parse("band-center").unwrap(), SweepKind::BandCenter);
        assert!(SweepKind::parse("nope").is_err());
    }

    #[test]
    fn point_pipelines() {
        let base = Pipeline::ls1();
        let s = SweepSpec::default_for(SweepKind::BandCenter);
        let p = s.point_pipeline(&base, 3, 4.0, 0.1).unwrap();
        assert!((p.curriculum.band_lo - 3.95).abs() < 1e-12 && (p.curriculum.band_hi - 4.05).abs() < 1e-12);
        assert_eq!(p.frc.n_points, 50);
        p.validate().unwrap();

        let s = SweepSpec::default_for(SweepKind::Bandwidth);
        let p = s.point_pipeline(&base, 0, 2.0, 1.0).unwrap();
        assert!((p.curriculum.band_lo - 0.02).abs() < 1e-12);

        let s = SweepSpec::default_for(SweepKind::TrajectoryCount);
        let p = s.point_pipeline(&base, 0, 7.0, 3.0).unwrap();
        assert_eq!(p.curriculum.n_trajectories, 7);
        assert_eq!(p.curriculum.horizon, 3.0);

        let s = SweepSpec::default_for(SweepKind::FrequencyRatio);
        let p = s.point_pipeline(&base, 0, 20.0, 10.0).unwrap();
        assert_eq!(p.system.omega_n, 20.0);
        assert!((p.frc.dt * 20.0 - std::f64::consts::TAU / 10.0).abs() < 1e-12);
        assert!((p.frc.band.1 - 140.0).abs() < 1e-9);
        assert!((p.curriculum.band_hi - 1.5 * 20.0).abs() < 1e-9);
        p.validate().unwrap();
    }

    #[test]
    fn distinct_points_get_distinct_seeds() {
        let base = Pipeline::ls1();
        let s = SweepSpec::default_for(SweepKind::BandCenter);
        let a = s.point_pipeline(&base, 0, 2.0, 0.1).unwrap();
        let b = s.point_pipeline(&base, 1, 2.0, 0.1).unwrap();
        assert_ne!(a.curriculum.seed, b.curriculum.seed);
        assert_ne!(a.init_seed, b.init_seed);
    }

    #[test]
    fn failing_point_is_recorded() {
        let mut s = SweepSpec::default_for(SweepKind::BandCenter);
        // the second band reaches past the Nyquist limit of dt = 0.01
        s.grid = vec![1.0, 400.0];
        s.fixed.epochs = 1;
        s.fixed.train_horizon = 1.0;
        s.fixed.frc_points = 3;
        s.fixed.frc_horizon = 5.0;
        let r = run_sweep(&s, &Pipeline::ls1(), Some(1)).unwrap();
        assert_eq!(r.rows.len(), 2);
        assert!(r.rows[0].report.is_some());
        assert!(r.rows[1].failure.is_some());
        assert_eq!(r.failures().len(), 1);
        let csv = r.to_csv();
        assert!(csv.starts_with("point_id,swept_value,shape_err,peak_err,res_err"));
        assert!(csv.lines().nth(2).unwrap().contains("nan"));
    }

    #[test]
    fn spearman_examples() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]) - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]) - 0.8).abs() < 1e-12);
        assert!(spearman(&[1.0], &[1.0]).is_nan());
    }

    #[test]
    fn plateau_examples() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(plateau_onset(&xs, &[10.0, 5.0, 1.0, 1.2, 1.0], 0.1), Some(3.0));
        assert_eq!(plateau_onset(&xs, &[10.0, 8.0, 6.0, 4.0, 0.0], 0.1), Some(5.0));
        assert_eq!(smooth3(&[0.0, 3.0, 0.0]), vec![1.5, 1.0, 1.5]);
    }

    proptest! {
        #[test]
        fn spearman_is_bounded_and_monotone_invariant(v in proptest::collection::vec(-1e3f64..1e3, 3..20)) {
            let x: Vec<f64> = (0..v.len()).map(|i| i as f64).collect();
            let r = spearman(&x, &v);
            let cubed: Vec<f64> = v.iter().map(|a| a * a * a).collect();
            if r.is_finite() {
                prop_assert!(r.abs() <= 1.0 + 1e-12);
                prop_assert!((spearman(&x, &cubed) - r).abs() < 1e-9);
            }
        }
    }
}
