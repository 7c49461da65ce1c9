use std::f64::consts::{PI, TAU};

use hatfem::eigen::symmetric_eigenvalues;
use hatfem::fem::{
    assemble_mass_matrix, assemble_mass_matrix_by_quadrature, basis_eval, change_of_basis, BasisKind, UniformMesh,
};
use hatfem::freq::{dft, inverse_dft};
use hatfem::harness::{ExperimentConfig, ExperimentId};
use hatfem::kernel::{rbf_gram, uniform_cloud};
use hatfem::nn::{Activation, InitScheme, Mlp, Samples};
use hatfem::quadrature::GaussLegendre;
use hatfem::targets::{ten_freq_phases, Target, TargetSpec};
use proptest::prelude::*;

fn poly_integral(c: &[f64], a: f64, b: f64) -> f64 {
    c.iter()
        .enumerate()
        .map(|(k, ck)| ck * (b.powi(k as i32 + 1) - a.powi(k as i32 + 1)) / (k as f64 + 1.0))
        .sum()
}

proptest! {
    #[test]
    fn gauss_legendre_exact_to_degree_2m_minus_1(
        m in 1usize..8,
        c in prop::collection::vec(-3.0f64..3.0, 15),
        a in -2.0f64..0.0,
        len in 0.1f64..3.0,
    ) {
        let c = &c[..2 * m];
        let b = a + len;
        let got = GaussLegendre::new(m).integrate(a, b, |x| c.iter().rev().fold(0.0, |acc, ck| acc * x + ck));
        let want = poly_integral(c, a, b);
        prop_assert!((got - want).abs() <= 1e-11 * (1.0 + want.abs()), "{got} vs {want}");
    }

    #[test]
    fn hat_basis_is_c_times_relu_basis(n in 2usize..40, x in 0.0f64..=1.0) {
        let mesh = UniformMesh::new(n).unwrap();
        let (c, _) = change_of_basis(n).unwrap();
        for i in 1..=n {
            let phi = basis_eval(BasisKind::Hat, i, x, &mesh).unwrap();
            let combo: f64 = (1..=n)
                .map(|j| c.get(i - 1, j - 1) as f64 * basis_eval(BasisKind::Relu, j, x, &mesh).unwrap())
                .sum();
            prop_assert!((phi - combo).abs() <= 1e-9 * (1.0 + n as f64), "i={i}: {phi} vs {combo}");
        }
    }

    #[test]
    fn mass_matrices_match_quadrature(n in 1usize..48, relu in any::<bool>()) {
        let kind = if relu { BasisKind::Relu } else { BasisKind::Hat };
        let mesh = UniformMesh::new(n).unwrap();
        let exact = assemble_mass_matrix(kind, &mesh).unwrap();
        let quad = assemble_mass_matrix_by_quadrature(kind, &mesh, 3).unwrap();
        for i in 0..n {
            for j in 0..n {
                let (e, q) = (exact.get(i, j), quad.get(i, j));
                prop_assert!((e - q).abs() <= 1e-10 * e.abs().max(1e-3), "({i},{j}) {e} vs {q}");
            }
        }
    }

    #[test]
    fn backprop_matches_central_differences(
        seed in 0u64..1000,
        d in 1usize..3,
        width in 2usize..6,
        depth in 1usize..3,
        act in prop::sample::select(vec![Activation::Tanh, Activation::Relu, Activation::Hat]),
    ) {
        let mut sizes = vec![d];
        sizes.extend(std::iter::repeat(width).take(depth));
        sizes.push(1);
        let model = Mlp::initialized(&sizes, act, InitScheme::Gaussian { mean: 0.0, std: 0.7 }, seed).unwrap();
        let pts: Vec<Vec<f64>> = (0..6)
            .map(|i| (0..d).map(|k| ((i * 7 + k * 3 + seed as usize) % 11) as f64 / 11.0 - 0.4).collect())
            .collect();
        let ys: Vec<f64> = (0..6).map(|i| (i as f64).sin()).collect();
        let data = Samples::from_points(&pts, ys).unwrap();
        let eps = 1e-6;
        prop_assume!(model.min_kink_distance(&data).unwrap() > 1e-4);
        let g = model.backward(&data).unwrap();
        let mut fd = vec![0.0; g.len()];
        let mut probe = model.clone();
        for p in 0..g.len() {
            let base = model.params()[p];
            probe.params_mut()[p] = base + eps;
            let up = probe.mse_loss(&data).unwrap();
            probe.params_mut()[p] = base - eps;
            let down = probe.mse_loss(&data).unwrap();
            probe.params_mut()[p] = base;
            fd[p] = (up - down) / (2.0 * eps);
        }
        let num: f64 = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let den: f64 = fd.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-8);
        prop_assert!(num / den < 1e-6, "relative error {}", num / den);
    }

    #[test]
    fn gram_is_positive_semidefinite(n in 2usize..24, d in 1usize..5, seed in 0u64..500, s in 0.1f64..20.0) {
        let data = uniform_cloud(n, d, seed).unwrap();
        let g = rbf_gram(&data, s).unwrap();
        prop_assert!(g.symmetry_defect() == 0.0);
        let ev = symmetric_eigenvalues(&g).unwrap();
        prop_assert!(ev[0] >= -1e-10, "{}", ev[0]);
        prop_assert!((ev.iter().sum::<f64>() - n as f64).abs() < 1e-9);
    }

    #[test]
    fn dft_parseval_and_inverse(x in prop::collection::vec(-5.0f64..5.0, 1..64)) {
        let n = x.len() as f64;
        let big = dft(&x);
        let time: f64 = x.iter().map(|v| v * v).sum();
        let freq: f64 = big.iter().map(|c| c.norm_sqr()).sum::<f64>() / n;
        prop_assert!((time - freq).abs() <= 1e-10 * (1.0 + time));
        let back = inverse_dft(&big);
        for (a, b) in x.iter().zip(&back) {
            prop_assert!((a - b.re).abs() < 1e-10 && b.im.abs() < 1e-10);
        }
    }

    #[test]
    fn configs_round_trip_with_overrides(
        idx in 0usize..8,
        seeds in prop::collection::vec(0u64..1_000_000, 1..6),
        epochs in 0usize..100_000,
    ) {
        let mut cfg = ExperimentConfig::recipe(ExperimentId::ALL[idx]);
        cfg.seeds = seeds;
        cfg.epochs = epochs;
        let back = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}

fn s(v: f64) -> f64 {
    (TAU * v).sin()
}

#[test]
fn target_readers_agree_on_1000_points() {
    let specs: Vec<TargetSpec> = serde_json::from_str(
        r#"[{"kind":"sum135"},{"kind":"ten_freq","seed":3},{"kind":"two_d"},
            {"kind":"noisy_product2_d","k":4},{"kind":"noisy_product3_d","k":3},
            {"kind":"radial_noise3_d","k":2,"variant":"plain"},
            {"kind":"radial_noise3_d","k":2,"variant":"divided"},{"kind":"piecewise_high_freq"}]"#,
    )
    .unwrap();
    let phases = ten_freq_phases(3);
    let oracle = |spec: &TargetSpec, x: &[f64]| -> f64 {
        match spec {
            TargetSpec::Sum135 => [1.0, 3.0, 5.0].iter().map(|k| (k * x[0]).sin()).sum(),
            TargetSpec::TenFreq { .. } => (1..=10).map(|k| (10.0 * PI * k as f64 * x[0] + phases[k - 1]).sin()).sum(),
            TargetSpec::TwoD => s(x[0]) * s(x[1]) + s(5.0 * x[0]) * s(5.0 * x[1]),
            TargetSpec::NoisyProduct2D { .. } => s(x[0]) * s(x[1]) + 0.2 * s(4.0 * x[0]) * s(4.0 * x[1]),
            TargetSpec::NoisyProduct3D { .. } => {
                s(x[0]) * s(x[1]) * s(x[2]) + 0.5 * s(3.0 * x[0]) * s(3.0 * x[1]) * s(3.0 * x[2])
            }
            TargetSpec::RadialNoise3D { variant, .. } => {
                let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                let base = s(x[0]) * s(x[1]) * s(x[2]);
                match variant {
                    hatfem::targets::RadialVariant::Plain => base + 0.5 * s(2.0 * r),
                    hatfem::targets::RadialVariant::Divided => base + 0.5 * s(2.0 * r) / r,
                }
            }
            TargetSpec::PiecewiseHighFreq => {
                let t = x[0];
                if t < 0.0 {
                    10.0 * (t.sin() + (3.0 * t).sin())
                } else {
                    10.0 * ((23.0 * t).sin() + (137.0 * t).sin() + (203.0 * t).sin())
                }
            }
            _ => unreachable!(),
        }
    };
    let mut state = 0x9E37_79B9_7F4A_7C15_u64;
    let mut next = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    for spec in &specs {
        let t: Target = spec.build().unwrap();
        let (lo, hi) = t.domain();
        for _ in 0..1000 {
            let x: Vec<f64> = (0..t.dim()).map(|_| lo + (hi - lo) * next()).collect();
            let (a, b) = (t.eval(&x).unwrap(), oracle(spec, &x));
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{spec:?} at {x:?}: {a} vs {b}");
        }
    }
}

#[test]
fn ten_freq_golden_values() {
    let phases = ten_freq_phases(0);
    let want_phases = [
        4.455252231890434,
        2.927472519785886,
        4.392846549987766,
        0.3780665838284968,
        5.52361554646169,
        3.452806793893606,
        5.20866307963396,
        5.877458059050155,
        5.05030900462742,
        0.969440667304748,
    ];
    assert_eq!(phases, want_phases);
    let t = TargetSpec::TenFreq { seed: 0 }.build().unwrap();
    let golden = [
        (0.0, -3.722640250699179),
        (0.125, 1.6082582603107434),
        (0.3, 5.133199578058468),
        (0.5, 5.133199578058474),
        (1.0, -3.7226402506991967),
    ];
    for (x, want) in golden {
        assert!((t.eval(&[x]).unwrap() - want).abs() < 1e-12, "x = {x}");
    }
}
