use oscnet::forecast::{self, ForecastConfig, TrueField};
use oscnet::frc::{self, FrcCurve};
use oscnet::network::{ArchitectureConfig, Extras, OperatorNetwork, Variant};
use oscnet::oscillator::{self, Forcing, StateVec, SystemParams};
use oscnet::stability;
use proptest::prelude::*;

fn variant() -> impl Strategy<Value = Variant> {
    prop_oneof![Just(Variant::BranchTrunk), Just(Variant::StateOnly), Just(Variant::AmplitudePhase)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn analytic_response_satisfies_the_ode(
        xi in 0.05f64..1.5, wn in 0.5f64..5.0, amp in 0.1f64..3.0, w in 0.1f64..6.0,
        q0 in -1.0f64..1.0, v0 in -1.0f64..1.0, t in 0.5f64..20.0,
    ) {
        let p = SystemParams::new(xi, wn).unwrap();
        let f = Forcing::harmonic(amp, w);
        let ic = StateVec::new(q0, v0);
        let h = 1e-4;
        let x = |s: f64| oscillator::analytic_response(&p, &f, ic, s).unwrap();
        let (a, b, c) = (x(t - h), x(t), x(t + h));
        let qdd = (a.q - 2.0 * b.q + c.q) / (h * h);
        let resid = qdd + 2.0 * xi * wn * b.qdot + wn * wn * b.q - f.accel(t);
        prop_assert!(resid.abs() < 1e-4 * (1.0 + amp + wn * wn), "residual {resid}");
        prop_assert!(((c.q - a.q) / (2.0 * h) - b.qdot).abs() < 1e-6 * (1.0 + wn));
    }

    #[test]
    fn forced_response_from_rest_is_linear_in_drive(
        xi in 0.05f64..0.9, w in 0.2f64..5.0, scale in 0.1f64..10.0, t in 0.0f64..30.0,
    ) {
        let p = SystemParams::new(xi, 1.0).unwrap();
        let one = oscillator::analytic_response(&p, &Forcing::harmonic(1.0, w), StateVec::ZERO, t).unwrap();
        let many = oscillator::analytic_response(&p, &Forcing::harmonic(scale, w), StateVec::ZERO, t).unwrap();
        prop_assert!((many.q - scale * one.q).abs() <= 1e-12 * scale.max(1.0) * (1.0 + one.q.abs()) * 10.0);
    }

    #[test]
    fn trapezoid_with_exact_field_matches_linear_solve(
        xi in 0.0f64..1.2, wn in 0.3f64..4.0, h in 0.001f64..0.3, w in 0.1f64..5.0,
        q0 in -2.0f64..2.0, v0 in -2.0f64..2.0, t in 0.0f64..50.0,
    ) {
        let p = SystemParams::new(xi, wn).unwrap();
        let f = Forcing::harmonic(1.0, w);
        let x = StateVec::new(q0, v0);
        let step = forecast::trapezoid_newton_step(&TrueField(p), x, t, h, &f, 1e-13, 8).unwrap();
        prop_assert!(step.converged);
        // for a linear field one Newton update from any predictor solves the step
        prop_assert!(step.iters <= 2);
        let a = p.state_matrix();
        let r0 = x.q + 0.5 * h * (a[0][0] * x.q + a[0][1] * x.qdot);
        let r1 = x.qdot + 0.5 * h * (a[1][0] * x.q + a[1][1] * x.qdot + f.accel(t) + f.accel(t + h));
        let m = [[1.0, -0.5 * h], [-0.5 * h * a[1][0], 1.0 - 0.5 * h * a[1][1]]];
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        let want = StateVec::new((m[1][1] * r0 - m[0][1] * r1) / det, (m[0][0] * r1 - m[1][0] * r0) / det);
        let size = 1.0 + want.q.abs() + want.qdot.abs();
        prop_assert!((step.state.q - want.q).abs() <= 1e-12 * size);
        prop_assert!((step.state.qdot - want.qdot).abs() <= 1e-12 * size);
    }

    #[test]
    fn network_text_roundtrip_is_bit_exact(v in variant(), seed in any::<u64>(), q in -3.0f64..3.0, qd in -3.0f64..3.0) {
        let net = OperatorNetwork::init(&ArchitectureConfig::default_for(v), seed).unwrap();
        let back = OperatorNetwork::from_text(&net.to_text()).unwrap();
        let extras = v.takes_forcing().then_some(Extras { t: 0.7, u: -0.2 });
        let x = StateVec::new(q, qd);
        prop_assert_eq!(net.forward(x, extras).unwrap(), back.forward(x, extras).unwrap());
        prop_assert_eq!(net.jacobian(x, extras).unwrap(), back.jacobian(x, extras).unwrap());
    }

    #[test]
    fn jacobian_trace_is_divergence(v in variant(), seed in any::<u64>(), q in -1.0f64..1.0, qd in -1.0f64..1.0) {
        let net = OperatorNetwork::init(&ArchitectureConfig::default_for(v), seed).unwrap();
        let extras = v.takes_forcing().then_some(Extras { t: 0.0, u: 0.0 });
        let j = net.jacobian(StateVec::new(q, qd), extras).unwrap();
        let eig = stability::Eigenvalues::of(&j);
        let [(r0, _), (r1, _)] = eig.as_pairs();
        prop_assert!((r0 + r1 - j.trace()).abs() <= 1e-9 * (1.0 + j.trace().abs()));
    }

    #[test]
    fn hilbert_envelope_of_a_tone_is_flat(amp in 0.01f64..10.0, w in 1.5f64..8.0, phase in 0.0f64..6.28) {
        let dt = 0.01;
        let n = 6000;
        let x: Vec<f64> = (0..n).map(|i| amp * (w * i as f64 * dt + phase).cos()).collect();
        let env = frc::hilbert_envelope(&x).unwrap();
        let win = frc::steady_window(n, 0.3);
        let mut mid: Vec<f64> = env[win].to_vec();
        mid.sort_by(f64::total_cmp);
        let median = mid[mid.len() / 2];
        prop_assert!((median - amp).abs() <= 0.01 * amp, "median {median} vs {amp}");
    }

    #[test]
    fn frc_csv_roundtrip(values in proptest::collection::vec(0.0f64..5.0, 2..40)) {
        let freqs: Vec<f64> = (0..values.len()).map(|i| 0.1 + 0.25 * i as f64).collect();
        let curve = FrcCurve::new(freqs, values).unwrap();
        let back = FrcCurve::from_csv(&curve.to_csv()).unwrap();
        let close = |a: &[f64], b: &[f64]| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-10 * x.abs().max(1e-300));
        prop_assert!(close(&back.freqs, &curve.freqs));
        prop_assert!(close(&back.amplitudes, &curve.amplitudes));
    }

    #[test]
    fn nyquist_bound_is_enforced(w in 0.5f64..50.0, over in 1.001f64..3.0) {
        let ny = stability::nyquist_limits(1.0, w, 0.001).unwrap();
        prop_assert!((ny.dt_max - std::f64::consts::PI / w).abs() <= 1e-12 * ny.dt_max);
        prop_assert!(ny.check(ny.dt_max * over, w).is_err());
        prop_assert!(ny.check(ny.dt_max / over, w).is_ok());
    }
}

#[test]
fn forecast_batch_matches_sequential_calls() {
    let p = SystemParams::ls1();
    let model = TrueField(p);
    let conds: Vec<(StateVec, ForecastConfig)> = [0.5, 1.0, 2.0, 3.77]
        .iter()
        .map(|&w| (StateVec::new(0.2, 0.0), ForecastConfig::new(0.01, 500, Forcing::harmonic(1.0, w))))
        .collect();
    let batch = forecast::forecast_batch(&model, &conds, Some(3)).unwrap();
    for ((ic, cfg), got) in conds.iter().zip(batch) {
        let want = forecast::forecast(&model, *ic, cfg).unwrap();
        assert_eq!(got.unwrap().trajectory, want.trajectory);
    }
}
