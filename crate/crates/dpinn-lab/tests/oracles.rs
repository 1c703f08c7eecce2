//! Batched derivative and linear-algebra oracle suites: finite-difference
//! gradient checks over randomized model configurations, the ELM dimension
//! identity, pseudoinverse optimality, and piecewise boundary exactness.

use dpinn_lab::activation::Activation;
use dpinn_lab::diagnostics::{piecewise_solve, piecewise_system_square, Governing, SolveMethod};
use dpinn_lab::dpinn::{
    build_model, sample_collocation, BlockGrid, BlockModel, CollocationTarget, LossWeights,
    SamplingMode, TrialMode,
};
use dpinn_lab::elm::{assemble_elm_dpinn, solve_pinv, ElmDpinnOptions, ElmSystem, RowTag};
use dpinn_lab::problems::{Burgers, InitialProfile, Problem, SteadyAdvDiff, UnsteadyAdvection};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn steady(eps: f64) -> Problem {
    Problem::SteadyAdvectionDiffusion(SteadyAdvDiff {
        c: 1.0,
        eps,
        x_left: 0.0,
        x_right: 1.0,
        u_left: 0.0,
        u_right: 1.0,
    })
}

fn advection() -> Problem {
    Problem::UnsteadyAdvection(UnsteadyAdvection {
        speed: 0.7,
        x_left: 0.0,
        x_right: 1.0,
        t_start: 0.0,
        t_end: 1.0,
        initial: InitialProfile::SquarePulse {
            center: 0.3,
            width: 0.2,
            height: 1.0,
        },
    })
}

fn burgers() -> Problem {
    Problem::Burgers(Burgers {
        eps: 0.15,
        x_left: 0.0,
        x_right: 1.0,
        t_start: 0.0,
        t_end: 1.0,
        initial: InitialProfile::Heaviside { jump: 0.4 },
    })
}

/// A randomized but structured model configuration per seed.
fn model_for_seed(seed: u64) -> (BlockModel, usize, usize) {
    let problem = match seed % 3 {
        0 => steady(0.25),
        1 => advection(),
        _ => burgers(),
    };
    let steady_problem = problem.input_dim() == 1;
    let (nbx, nbt) = if steady_problem {
        ([1usize, 3, 4][(seed / 3 % 3) as usize], 1)
    } else {
        (2, 2)
    };
    let trial = match seed / 9 % 4 {
        0 => TrialMode::Plain,
        1 => TrialMode::LinearAugmented,
        2 => TrialMode::BoundaryForced,
        _ if steady_problem => TrialMode::BoundaryInterfaceForced,
        _ => TrialMode::Plain,
    };
    let activation = Activation::ALL[(seed % 5) as usize]; // exponent excluded
    let weights = LossWeights {
        w_f: 1.0,
        w_b: 0.8,
        w_i: 1.2,
        w_vm: 1.0,
        w_sm: 0.9,
        w_sdm: 0.5,
        w_fm: 0.7,
        lambda_reg: 0.02,
    };
    let grid = BlockGrid::for_problem(&problem, nbx, nbt).unwrap();
    let widths: Vec<usize> = if steady_problem {
        vec![1, 2, 1]
    } else {
        vec![2, 2, 1]
    };
    let mut model = build_model(&problem, grid, &widths, activation, trial, weights, seed)
        .unwrap();
    if steady_problem && seed % 5 == 0 {
        model = model.with_normalization(true).unwrap();
    }
    if steady_problem && seed % 7 == 0 {
        model = model.with_collocation_target(CollocationTarget::Flux).unwrap();
    }
    if !steady_problem && seed % 2 == 0 {
        model = model.with_t_interface_matching(true);
    }
    // move extras off their defaults so their gradients are generic
    let mut flat = model.flatten();
    for (k, v) in flat.iter_mut().enumerate() {
        *v += 0.03 * ((k % 5) as f64 - 2.0);
    }
    model.set_flat(&flat).unwrap();
    let npts = 3;
    (model, npts, nbt)
}

#[test]
fn loss_term_gradients_pass_finite_difference_checks() {
    // one-hot loss weights isolate each term's gradient in turn
    for seed in 0..100u64 {
        let (base_model, npts, _) = model_for_seed(seed);
        let colloc = sample_collocation(
            base_model.grid(),
            npts,
            npts,
            SamplingMode::Uniform,
            true,
            seed,
        )
        .unwrap();
        let terms: [(&str, LossWeights); 8] = [
            ("l_f", LossWeights { w_f: 1.0, ..zeroed() }),
            ("l_b", LossWeights { w_b: 1.0, ..zeroed() }),
            ("l_i", LossWeights { w_i: 1.0, ..zeroed() }),
            ("l_vm", LossWeights { w_vm: 1.0, ..zeroed() }),
            ("l_sm", LossWeights { w_sm: 1.0, ..zeroed() }),
            ("l_sdm", LossWeights { w_sdm: 1.0, ..zeroed() }),
            ("l_fm", LossWeights { w_fm: 1.0, ..zeroed() }),
            ("l_reg", LossWeights { lambda_reg: 1.0, ..zeroed() }),
        ];
        for (name, weights) in terms {
            let mut model = base_model.clone();
            model.weights = weights;
            let mut grad = vec![0.0; model.param_count()];
            model.loss_and_gradient(&colloc, None, &mut grad).unwrap();

            let base = model.flatten();
            let mut probe = model.clone();
            let h = 1e-6;
            for k in 0..base.len() {
                let mut p = base.clone();
                p[k] = base[k] + h;
                probe.set_flat(&p).unwrap();
                let up = probe.loss_values(&colloc).unwrap().total;
                p[k] = base[k] - h;
                probe.set_flat(&p).unwrap();
                let dn = probe.loss_values(&colloc).unwrap().total;
                let fd = (up - dn) / (2.0 * h);
                let diff = (grad[k] - fd).abs();
                let scale = grad[k].abs().max(fd.abs());
                assert!(
                    diff <= 1e-8 || diff <= 1e-6 * scale,
                    "seed {seed} term {name} param {k}: analytic {} vs fd {fd}",
                    grad[k]
                );
            }
        }
    }
}

fn zeroed() -> LossWeights {
    LossWeights {
        w_f: 0.0,
        w_b: 0.0,
        w_i: 0.0,
        w_vm: 0.0,
        w_sm: 0.0,
        w_sdm: 0.0,
        w_fm: 0.0,
        lambda_reg: 0.0,
    }
}

#[test]
fn elm_dimension_identity_over_random_shapes() {
    let p = SteadyAdvDiff {
        c: 1.0,
        eps: 0.1,
        x_left: 0.0,
        x_right: 1.0,
        u_left: 0.0,
        u_right: 1.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..20 {
        let nb = rng.gen_range(1..=30usize);
        let n = rng.gen_range(2..=12usize);
        let (net, sys) =
            assemble_elm_dpinn(&p, nb, n, n + 2, &ElmDpinnOptions::default(), rng.gen()).unwrap();
        assert_eq!(sys.a.nrows(), nb * (n + 2), "NB={nb} N={n}");
        assert_eq!(sys.a.ncols(), nb * (n + 2));
        assert_eq!(net.unknown_count(), nb * (n + 2));
        assert_eq!(sys.tags.len(), sys.a.nrows());
    }
}

#[test]
fn pinv_is_optimal_among_candidates_and_least_norm() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..100 {
        let rows = rng.gen_range(2..=8usize);
        let cols = rng.gen_range(2..=8usize);
        let mut a = DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0));
        // a third of the cases get an exactly repeated column: rank deficient
        // with the known null vector e_{j0} - e_{j1}
        let dup = case % 3 == 0 && cols >= 2;
        if dup {
            let col0 = a.column(0).into_owned();
            a.set_column(1, &col0);
        }
        let rhs = DVector::from_fn(rows, |_, _| rng.gen_range(-1.0..1.0));
        let sys = ElmSystem {
            a: a.clone(),
            rhs: rhs.clone(),
            tags: vec![RowTag::Collocation; rows],
        };
        let c = solve_pinv(&sys).unwrap();
        let best = (&a * &c - &rhs).norm();
        for _ in 0..1000 {
            let cand = DVector::from_fn(cols, |k, _| c[k] + rng.gen_range(-0.5..0.5));
            let resid = (&a * &cand - &rhs).norm();
            assert!(
                best <= resid + 1e-10,
                "case {case}: candidate beat the pseudoinverse ({best} vs {resid})"
            );
        }
        if dup {
            // any other least-squares minimizer is pinv + t·null and must be
            // at least as long
            let mut null = DVector::zeros(cols);
            null[0] = 1.0;
            null[1] = -1.0;
            for t in [-2.0, -0.5, 0.3, 1.7] {
                let other = &c + &null * t;
                let other_resid = (&a * &other - &rhs).norm();
                assert!((other_resid - best).abs() <= 1e-8, "null vector wrong");
                assert!(c.norm() <= other.norm() + 1e-10);
            }
        }
    }
}

#[test]
fn square_piecewise_systems_reproduce_boundaries_exactly() {
    let p = SteadyAdvDiff {
        c: 1.0,
        eps: 0.2,
        x_left: 0.0,
        x_right: 1.0,
        u_left: 0.25,
        u_right: 1.5,
    };
    for (panels, degree, governing) in [
        (3usize, 1usize, Governing::Flux),
        (10, 1, Governing::Flux),
        (4, 2, Governing::Residual),
        (12, 2, Governing::Flux),
    ] {
        let sys = piecewise_system_square(&p, panels, degree, governing).unwrap();
        let fit = piecewise_solve(&sys, SolveMethod::Exact).unwrap();
        let left = (fit.eval(0.0).unwrap() - 0.25).abs();
        let right = (fit.eval(1.0).unwrap() - 1.5).abs();
        assert!(
            left <= 1e-10 && right <= 1e-10,
            "panels {panels} degree {degree}: boundary errors {left}, {right}"
        );
    }
}
