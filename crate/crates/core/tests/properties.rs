use std::f64::consts::PI;

use proptest::prelude::*;

use floqryd_core::bessel::bessel_j;
use floqryd_core::calibration::{envelope_peak_to_peak, ram_spectrum, AomTransferModel};
use floqryd_core::fitting::{
    damped_sinusoid, exponential_decay, fit_damped_sinusoid, fit_exponential_decay, fit_tanh_efficiency,
    tanh_efficiency,
};
use floqryd_core::floquet::{ipr, one_period_propagator, pair_spectrum, FloquetSpectrum};
use floqryd_core::hamiltonian::HamiltonianBuilder;
use floqryd_core::linalg::{hermitian_eig, kron, ComplexMatrix, StateVector, C64};
use floqryd_core::lindblad::{build_dissipators, evolve, uniform_times, DensityMatrix, EvolveOptions};
use floqryd_core::observables::{apply_spam, populations, w_fidelity, WReference};
use floqryd_core::schedule::{DriveSchedule, FfmParams, PulseSegment, StirapProfile};
use floqryd_core::system::{blockade_radius, paper_defaults, AtomArray, NoiseModel, SpamModel};

fn complex_entries(n: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-2.0..2.0f64, -2.0..2.0f64), n)
}

fn hermitian(dim: usize, e: &[(f64, f64)]) -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(dim, dim);
    for r in 0..dim {
        for c in 0..dim {
            let (a, b) = e[r * dim + c];
            m[(r, c)] += C64::new(a, b) * 0.5;
            m[(c, r)] += C64::new(a, -b) * 0.5;
        }
    }
    m
}

fn matrix(dim: usize, e: &[(f64, f64)]) -> ComplexMatrix {
    ComplexMatrix::from_vec(dim, dim, e.iter().map(|&(a, b)| C64::new(a, b)).collect())
}

fn probabilities(raw: Vec<f64>) -> Vec<f64> {
    let s: f64 = raw.iter().sum();
    raw.iter().map(|x| x / s).collect()
}

fn sorted_mod_2pi(v: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = v.iter().map(|x| x.rem_euclid(2.0 * PI)).collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Distance on the circle between two sorted phase multisets, allowing a
/// cyclic relabelling for phases sitting near the 0/2π cut.
fn phase_set_distance(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    (0..n)
        .map(|shift| {
            (0..n)
                .map(|k| {
                    let d = (a[k] - b[(k + shift) % n]).rem_euclid(2.0 * PI);
                    d.min(2.0 * PI - d)
                })
                .fold(0.0, f64::max)
        })
        .fold(f64::INFINITY, f64::min)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hermitian_eig_is_unitary_and_reconstructs(dim in 1usize..=8, e in complex_entries(64)) {
        let m = hermitian(dim, &e);
        let eig = hermitian_eig(&m).unwrap();
        let v = &eig.vectors;
        prop_assert!(v.adjoint().matmul(v).max_abs_diff(&ComplexMatrix::identity(dim)) < 1e-8);
        let lam = ComplexMatrix::from_real_diag(&eig.values);
        prop_assert!(v.matmul(&lam).matmul(&v.adjoint()).max_abs_diff(&m) < 1e-8);
    }

    // integer entries keep every product exact, so equality is bitwise
    #[test]
    fn kron_is_associative(
        a in prop::collection::vec((-8i32..8, -8i32..8), 4),
        b in prop::collection::vec((-8i32..8, -8i32..8), 16),
        c in prop::collection::vec((-8i32..8, -8i32..8), 4),
    ) {
        let int = |dim: usize, e: &[(i32, i32)]| {
            matrix(dim, &e.iter().map(|&(x, y)| (x as f64, y as f64)).collect::<Vec<_>>())
        };
        let (a, b, c) = (int(2, &a), int(4, &b), int(2, &c));
        prop_assert_eq!(kron(&kron(&a, &b), &c), kron(&a, &kron(&b, &c)));
    }

    #[test]
    fn bessel_recurrence(x in 0.1..15.0f64, m in 0i32..=8) {
        let lhs = bessel_j(m - 1, x) + bessel_j(m + 1, x);
        let rhs = 2.0 * m as f64 / x * bessel_j(m, x);
        prop_assert!((lhs - rhs).abs() < 1e-10, "{} vs {}", lhs, rhs);
    }

    #[test]
    fn blockade_radius_inverts_interaction(rabi_mhz in 0.2..5.0f64) {
        let mut cfg = paper_defaults();
        cfg.lasers.rabi = 2.0 * PI * rabi_mhz;
        let r = blockade_radius(&cfg.array, &cfg.lasers);
        let a = AtomArray::chain(2, r, cfg.array.c6()).unwrap();
        let v = a.interaction_strength(0, 1).unwrap();
        prop_assert!((v / cfg.lasers.rabi - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ffm_detuning_is_periodic(alpha in 0.0..12.0f64, w0 in 1.0..60.0f64, t in 0.0..3.0f64, d0 in -5.0..5.0f64) {
        let p = FfmParams::from_index(alpha, w0).unwrap();
        let seg = PulseSegment::ffm(10.0, p, d0);
        let a = seg.detuning_at(t).unwrap();
        let b = seg.detuning_at(t + p.period()).unwrap();
        prop_assert!((a - b).abs() < 1e-12 * (1.0 + a.abs()), "{} vs {}", a, b);
    }

    #[test]
    fn schedule_segments_tile_and_boundaries_belong_to_later_segment(
        durations in prop::collection::vec(0.1..3.0f64, 1..6),
    ) {
        let segs: Vec<PulseSegment> = durations
            .iter()
            .enumerate()
            .map(|(k, &d)| PulseSegment::static_drive(d, k as f64))
            .collect();
        let s = DriveSchedule::new(segs).unwrap();
        let b = s.boundaries();
        prop_assert_eq!(b[0], 0.0);
        prop_assert!((b[b.len() - 1] - s.total_duration()).abs() < 1e-12);
        prop_assert!((s.total_duration() - durations.iter().sum::<f64>()).abs() < 1e-12);
        for k in 0..durations.len() {
            prop_assert_eq!(s.segment_start(k), b[k]);
            let (idx, _) = s.locate(b[k]).unwrap();
            prop_assert_eq!(idx, k);
            prop_assert_eq!(s.detuning_at(b[k]).unwrap(), k as f64);
            let mid = 0.5 * (b[k] + b[k + 1]);
            prop_assert_eq!(s.locate(mid).unwrap().0, k);
        }
    }

    #[test]
    fn apply_spam_keeps_probabilities_valid(
        n in 1usize..=3,
        raw in prop::collection::vec(0.0..1.0f64, 8),
        fp in 0.0..0.2f64, fneg in 0.0..0.2f64, pump in 0.0..0.2f64,
    ) {
        let dim = 1 << n;
        let p = probabilities(raw[..dim].iter().map(|x| x + 1e-3).collect());
        let spam = SpamModel { false_positive: fp, false_negative: fneg, pumping_error: pump };
        let out = apply_spam(&p, &spam).unwrap();
        prop_assert!(out.iter().all(|x| (0.0..=1.0).contains(x)));
        prop_assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert_eq!(apply_spam(&p, &SpamModel::ideal()).unwrap(), p);
    }

    #[test]
    fn apply_spam_is_affine(
        a in prop::collection::vec(0.01..1.0f64, 4),
        b in prop::collection::vec(0.01..1.0f64, 4),
        s in 0.0..1.0f64,
    ) {
        let spam = paper_defaults().spam;
        let (a, b) = (probabilities(a), probabilities(b));
        let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| s * x + (1.0 - s) * y).collect();
        let fa = apply_spam(&a, &spam).unwrap();
        let fb = apply_spam(&b, &spam).unwrap();
        let fm = apply_spam(&mix, &spam).unwrap();
        for k in 0..4 {
            prop_assert!((fm[k] - (s * fa[k] + (1.0 - s) * fb[k])).abs() < 1e-12);
        }
    }

    #[test]
    fn w_fidelity_ignores_global_phase(
        p1 in -PI..PI, p2 in -PI..PI, g in -10.0..10.0f64, e in complex_entries(4),
    ) {
        let psi = StateVector::new(e.iter().map(|&(a, b)| C64::new(a, b) + 0.1).collect()).normalized();
        let rho = DensityMatrix::pure(&psi).unwrap();
        let a = w_fidelity(&rho, &WReference::new(vec![p1, p2]).unwrap()).unwrap();
        let b = w_fidelity(&rho, &WReference::new(vec![p1 + g, p2 + g]).unwrap()).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn populations_sum_to_one(e in complex_entries(8), n in 1usize..=3) {
        let dim = 1 << n;
        let psi = StateVector::new(e[..dim].iter().map(|&(a, b)| C64::new(a, b) + 0.1).collect()).normalized();
        let pops = populations(&DensityMatrix::pure(&psi).unwrap());
        let basis: f64 = (0..dim)
            .map(|s| pops[&floqryd_core::hamiltonian::basis_label(s, n)])
            .sum();
        prop_assert!((basis - 1.0).abs() < 1e-6);
    }

    #[test]
    fn condition_solved_stirap_meets_its_conditions(total in 1.0..20.0f64) {
        let p = StirapProfile::condition_solved(total).unwrap();
        prop_assert!(bessel_j(0, p.alpha_at(0.0).unwrap()).abs() < 1e-6);
        prop_assert!(bessel_j(1, p.alpha_at(total).unwrap()).abs() < 1e-6);
        let mid = p.alpha_at(total / 2.0).unwrap();
        prop_assert!((bessel_j(0, mid) - bessel_j(1, mid)).abs() < 1e-6);
    }

    #[test]
    fn exponential_round_trip(a in 0.2..1.0f64, tau in 1.0..20.0f64, c in 0.0..0.5f64) {
        let t = uniform_times(0.0, 40.0, 81);
        let p = [a, tau, c];
        let y: Vec<f64> = t.iter().map(|x| exponential_decay(&p, *x)).collect();
        let f = fit_exponential_decay(&t, &y).unwrap();
        for (k, n) in ["amplitude", "decay_time", "offset"].iter().enumerate() {
            prop_assert!((f.get(n).unwrap() / p[k] - 1.0).abs() < 1e-6 || (f.get(n).unwrap() - p[k]).abs() < 1e-9);
        }
        prop_assert!(f.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn tanh_round_trip(a in 0.3..0.8f64, v0 in 0.3..0.6f64, sigma in 0.08..0.2f64, c in 0.0..0.2f64) {
        let v = uniform_times(0.0, 1.0, 41);
        let p = [a, v0, sigma, c];
        let y: Vec<f64> = v.iter().map(|x| tanh_efficiency(&p, *x)).collect();
        let f = fit_tanh_efficiency(&v, &y).unwrap();
        for k in 0..4 {
            prop_assert!((f.parameters[k] / p[k] - 1.0).abs() < 1e-6 || (f.parameters[k] - p[k]).abs() < 1e-9);
        }
        prop_assert!(f.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn ram_spectrum_recovers_generated_harmonics(h in prop::collection::vec((-0.05..0.05f64, -0.05..0.05f64), 4)) {
        let w0 = 2.0 * PI * 6.0;
        let t = uniform_times(0.0, 4.0 * 2.0 * PI / w0, 257);
        let t = &t[..256];
        let trace: Vec<f64> = t
            .iter()
            .map(|x| {
                0.6 * (1.0
                    + h.iter()
                        .enumerate()
                        .map(|(k, (a, b))| {
                            let n = (k + 1) as f64;
                            a * (n * w0 * x).sin() + b * (n * w0 * x).cos()
                        })
                        .sum::<f64>())
            })
            .collect();
        let s = ram_spectrum(t, &trace, w0).unwrap();
        for (k, (a, b)) in h.iter().enumerate() {
            let (n, ga, gb) = s.harmonics[k];
            prop_assert_eq!(n, k + 1);
            prop_assert!((ga - a).abs() < 1e-6 && (gb - b).abs() < 1e-6);
        }
        let expected: Vec<(usize, f64, f64)> = h.iter().enumerate().map(|(k, (a, b))| (k + 1, *a, *b)).collect();
        prop_assert!((s.peak_to_peak_fraction - envelope_peak_to_peak(&expected)).abs() < 1e-6);
    }

    #[test]
    fn aom_power_round_trip(f in 55.0..105.0f64, target in 0.05..0.6f64) {
        let m = AomTransferModel::synthetic(7);
        let v = m.drive_for_power(f, target).unwrap();
        prop_assert!((m.simulated_power(f, v).unwrap() - target).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn lindblad_preserves_trace_hermiticity_and_positivity(
        v in 0.2..10.0f64, alpha in 0.0..8.0f64, w0 in 2.0..8.0f64, d0 in -2.0..2.0f64,
    ) {
        let cfg = paper_defaults();
        let om = cfg.lasers.rabi;
        let cfg = cfg.with_chain_interaction(2, v * om).unwrap();
        let seg = PulseSegment::ffm(2.0, FfmParams::from_index(alpha, w0 * om).unwrap(), d0 * om);
        let b = HamiltonianBuilder::new(cfg.array.clone(), cfg.lasers.clone(), DriveSchedule::single(seg).unwrap()).unwrap();
        let d = build_dissipators(&NoiseModel::effective_coherence(5.0), 2).unwrap();
        let opts = EvolveOptions { check_invariants: false, ..Default::default() };
        let r = evolve(&b, &d, &DensityMatrix::ground(2), (0.0, 2.0), &uniform_times(0.0, 2.0, 21), &opts).unwrap();
        for rho in &r.snapshots {
            prop_assert!((rho.trace() - 1.0).abs() < 1e-6);
            prop_assert!(rho.matrix().hermitian_defect() < 1e-8);
            prop_assert!(rho.min_eigenvalue() >= -1e-6);
        }
    }

    #[test]
    fn noiseless_evolution_stays_pure(v in 0.2..10.0f64, alpha in 0.0..8.0f64, w0 in 2.0..8.0f64) {
        let cfg = paper_defaults();
        let om = cfg.lasers.rabi;
        let cfg = cfg.with_chain_interaction(2, v * om).unwrap();
        let seg = PulseSegment::ffm(2.0, FfmParams::from_index(alpha, w0 * om).unwrap(), 0.0);
        let b = HamiltonianBuilder::new(cfg.array.clone(), cfg.lasers.clone(), DriveSchedule::single(seg).unwrap()).unwrap();
        let d = build_dissipators(&NoiseModel::noiseless(), 2).unwrap();
        let r = evolve(&b, &d, &DensityMatrix::ground(2), (0.0, 2.0), &uniform_times(0.0, 2.0, 11), &EvolveOptions::default()).unwrap();
        for rho in &r.snapshots {
            prop_assert!((rho.purity() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn hamiltonian_is_hermitian(v in 0.2..40.0f64, alpha in 0.0..12.0f64, w0 in 1.0..10.0f64, t in 0.0..5.0f64) {
        let cfg = paper_defaults();
        let om = cfg.lasers.rabi;
        let cfg = cfg.with_chain_interaction(3, v * om).unwrap();
        let seg = PulseSegment::ffm(5.0, FfmParams::from_index(alpha, w0 * om).unwrap(), 0.0);
        let b = HamiltonianBuilder::new(cfg.array, cfg.lasers, DriveSchedule::single(seg).unwrap())
            .unwrap()
            .with_doppler(vec![0.1, -0.2, 0.05])
            .unwrap();
        prop_assert!(b.hamiltonian_at(t).unwrap().hermitian_defect() < 1e-12);
    }

    #[test]
    fn quasi_phases_do_not_depend_on_start(alpha in 0.5..8.0f64, w0 in 3.0..10.0f64, shift in 0.0..1.0f64) {
        let cfg = paper_defaults();
        let om = cfg.lasers.rabi;
        let cfg = cfg.with_chain_interaction(2, 8.0 * om).unwrap();
        let p = FfmParams::from_index(alpha, w0 * om).unwrap();
        let seg = PulseSegment::ffm(3.0 * p.period(), p, 0.0);
        let b = HamiltonianBuilder::new(cfg.array, cfg.lasers, DriveSchedule::single(seg).unwrap()).unwrap();
        let a = FloquetSpectrum::from_propagator(&one_period_propagator(&b, 0.0).unwrap(), p.period()).unwrap();
        let s = FloquetSpectrum::from_propagator(&one_period_propagator(&b, shift * p.period()).unwrap(), p.period()).unwrap();
        let d = phase_set_distance(&sorted_mod_2pi(&a.quasi_phases), &sorted_mod_2pi(&s.quasi_phases));
        prop_assert!(d < 1e-6, "{}", d);
    }

    #[test]
    fn floquet_overlaps_are_complete_and_ipr_nonnegative(alpha in 0.0..8.0f64, w0 in 3.0..10.0f64, dd in -0.6..0.6f64) {
        let cfg = paper_defaults();
        let om = cfg.lasers.rabi;
        let cfg = cfg.with_chain_interaction(2, 8.0 * om).unwrap();
        let s = pair_spectrum(&cfg.array, &cfg.lasers, alpha, w0 * om, dd).unwrap();
        let w = WReference::symmetric(2).state();
        let p = s.overlaps(&w).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        let x = ipr(&s, &w).unwrap();
        prop_assert!(x >= 0.0);
        let single = p.iter().cloned().fold(0.0, f64::max) > 1.0 - 1e-9;
        prop_assert_eq!(x < 1e-6, single);
    }

    #[test]
    fn damped_sinusoid_round_trip(
        amp in 0.2..0.5f64, freq in 0.5..2.0f64, phase in -1.0..1.0f64, tau in 2.0..20.0f64, off in 0.3..0.6f64,
    ) {
        let t = uniform_times(0.0, 10.0, 401);
        let p = [amp, freq, phase, tau, off];
        let y: Vec<f64> = t.iter().map(|x| damped_sinusoid(&p, *x)).collect();
        let f = fit_damped_sinusoid(&t, &y, None).unwrap();
        for (k, n) in ["amplitude", "frequency", "phase", "decay_time", "offset"].iter().enumerate() {
            let got = f.get(n).unwrap();
            prop_assert!((got / p[k] - 1.0).abs() < 1e-6 || (got - p[k]).abs() < 1e-9, "{}: {} vs {}", n, got, p[k]);
        }
        prop_assert!(f.history.windows(2).all(|w| w[1] <= w[0]));
    }
}
