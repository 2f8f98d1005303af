//! Independent reference implementations on tiny grids.

use cfcontrol::adjoint::{apply_coagulation_adjoint, apply_fragmentation_adjoint};
use cfcontrol::dynamics::{apply_coagulation, apply_coagulation_derivative, apply_fragmentation};
use cfcontrol::kernels::{FragmentationLaw, KernelMatrices, KernelSet};
use cfcontrol::validation::{fd_gradient, gradient_mismatch};
use cfcontrol::{Grid, Problem, TimeGrid};

fn kernels(nu: f64) -> KernelSet {
    let mut k = KernelSet::reference();
    k.fragmentation.nu = nu;
    k.coagulation.sum_cutoff = None;
    k
}

/// Collision bookkeeping: cells `j` and `l` meet at rate `K N_j N_l` (half
/// that for `j = l`), each event removes one particle from each and adds
/// half a particle to the two cells sharing the edge at `x_j + x_l`.
fn coagulation_by_events(f: &[f64], kset: &KernelSet, grid: &Grid) -> Vec<f64> {
    let n = f.len();
    let dx = grid.dx();
    let x = grid.centers();
    let counts: Vec<f64> = f.iter().map(|v| v * dx).collect();
    let mut net = vec![0.0; n];
    for j in 0..n {
        for l in j..n {
            if j + l + 1 >= n {
                continue;
            }
            let k = kset.coagulation.eval(x[j], x[l]);
            let events = if j == l {
                0.5 * k * counts[j] * counts[j]
            } else {
                k * counts[j] * counts[l]
            };
            net[j] -= events;
            net[l] -= events;
            net[j + l] += 0.5 * events;
            net[j + l + 1] += 0.5 * events;
        }
    }
    net.iter().map(|v| v / dx).collect()
}

/// Uniform panels, graded geometrically towards 0 where `x^nu` is not smooth.
fn panels(lo: f64, hi: f64) -> Vec<(f64, f64)> {
    let uniform = |lo: f64, hi: f64| {
        let h = (hi - lo) / 32.0;
        (0..32).map(move |p| (lo + p as f64 * h, lo + (p + 1) as f64 * h))
    };
    if lo == 0.0 {
        (0..80)
            .flat_map(|k| uniform(hi * 0.5f64.powi(k + 1), hi * 0.5f64.powi(k)))
            .collect()
    } else {
        uniform(lo, hi).collect()
    }
}

/// Fragment mass from each parent cell deposited by a composite
/// Gauss-Legendre rule over every cell, then converted to number density.
fn fragmentation_by_quadrature(f: &[f64], law: &FragmentationLaw, grid: &Grid) -> Vec<f64> {
    const NODES: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
    const WEIGHTS: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
    let n = f.len();
    let x = grid.centers();
    let mut out = vec![0.0; n];
    for j in 0..n {
        let y = x[j];
        let broken = law.rate(y) * f[j];
        out[j] -= broken;
        for i in 0..=j {
            let (lo, hi) = grid.cell_edges(i);
            let hi = hi.min(y);
            let mut mass = 0.0;
            for (a, b) in panels(lo, hi) {
                let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
                for (t, w) in NODES.iter().zip(WEIGHTS) {
                    let s = mid + half * t;
                    mass += half * w * s * law.daughter(s, y);
                }
            }
            out[i] += broken * mass / x[i];
        }
    }
    out
}

fn sample(n: usize, seed: u64) -> Vec<f64> {
    // small LCG keeps the oracle free of crate dependencies
    let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    (0..n)
        .map(|_| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64
        })
        .collect()
}

fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs() / scale))
}

#[test]
fn coagulation_matches_event_oracle_on_tiny_grids() {
    for n in 2..=8 {
        let grid = Grid::new(n, 0.75 * n as f64).unwrap();
        let kset = kernels(0.0);
        let mats = KernelMatrices::precompute(&kset, &grid).unwrap();
        for seed in 0..5 {
            let f = sample(n, seed + 100 * n as u64);
            let fast = apply_coagulation(&f, &mats, &grid).unwrap();
            let slow = coagulation_by_events(&f, &kset, &grid);
            assert!(max_rel(&fast, &slow) < 1e-12, "n = {n}: {fast:?} vs {slow:?}");
        }
    }
}

#[test]
fn coagulation_with_sum_cutoff_matches_event_oracle() {
    let grid = Grid::new(8, 4.0).unwrap();
    let mut kset = KernelSet::reference();
    kset.coagulation.sum_cutoff = Some(2.2);
    let mats = KernelMatrices::precompute(&kset, &grid).unwrap();
    let f = sample(8, 7);
    let fast = apply_coagulation(&f, &mats, &grid).unwrap();
    assert!(max_rel(&fast, &coagulation_by_events(&f, &kset, &grid)) < 1e-12);
}

#[test]
fn fragmentation_matches_quadrature_oracle() {
    for nu in [0.0, -0.3, -0.6] {
        for n in [2usize, 3, 8] {
            let grid = Grid::new(n, 2.0 * n as f64).unwrap();
            let kset = kernels(nu);
            let mats = KernelMatrices::precompute(&kset, &grid).unwrap();
            let f = sample(n, 11 + n as u64);
            let fast = apply_fragmentation(&f, &mats, &grid).unwrap();
            let slow = fragmentation_by_quadrature(&f, &kset.fragmentation, &grid);
            assert!(max_rel(&fast, &slow) < 1e-12, "nu = {nu}, n = {n}: {}", max_rel(&fast, &slow));
        }
    }
}

/// Dense matrix of a linear map by probing unit vectors.
fn jacobian(n: usize, map: impl Fn(&[f64]) -> Vec<f64>) -> Vec<Vec<f64>> {
    (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            map(&e)
        })
        .collect()
}

#[test]
fn adjoints_are_exact_transposes() {
    let n = 8;
    let grid = Grid::new(n, 6.0).unwrap();
    let mats = KernelMatrices::precompute(&kernels(-0.4), &grid).unwrap();
    let f = sample(n, 3);
    // columns of the forward maps and of the adjoint maps
    let frag = jacobian(n, |e| apply_fragmentation(e, &mats, &grid).unwrap());
    let frag_t = jacobian(n, |e| apply_fragmentation_adjoint(e, &mats, &grid).unwrap());
    let coag = jacobian(n, |e| apply_coagulation_derivative(&f, e, &mats, &grid).unwrap());
    let coag_t = jacobian(n, |e| apply_coagulation_adjoint(e, &f, &mats, &grid).unwrap());
    for i in 0..n {
        for j in 0..n {
            assert!((frag[j][i] - frag_t[i][j]).abs() < 1e-13, "F ({i}, {j})");
            assert!((coag[j][i] - coag_t[i][j]).abs() < 1e-13, "DC ({i}, {j})");
        }
    }
}

#[test]
fn derivative_is_the_polarised_quadratic() {
    let n = 8;
    let grid = Grid::new(n, 6.0).unwrap();
    let mats = KernelMatrices::precompute(&kernels(0.0), &grid).unwrap();
    let (f, g) = (sample(n, 5), sample(n, 6));
    let fg: Vec<f64> = f.iter().zip(&g).map(|(a, b)| a + b).collect();
    let c = |v: &[f64]| apply_coagulation(v, &mats, &grid).unwrap();
    let (cfg, cf, cg) = (c(&fg), c(&f), c(&g));
    let polar: Vec<f64> = (0..n).map(|i| cfg[i] - cf[i] - cg[i]).collect();
    let d = apply_coagulation_derivative(&f, &g, &mats, &grid).unwrap();
    assert!(max_rel(&d, &polar) < 1e-12);
}

#[test]
fn fd_oracle_on_a_forty_step_grid() {
    let problem = Problem::reference().unwrap().with_time(TimeGrid::with_steps(1.0, 40).unwrap());
    let u = vec![1.0; problem.time.n_nodes()];
    let fd = fd_gradient(&problem, &u).unwrap();
    let adj = problem.evaluate(&u).unwrap().gradient;
    // interior nodes agree to first order in dt
    for k in 1..problem.time.n_steps() {
        let rel = (fd[k] - adj[k]).abs() / adj[k].abs();
        assert!(rel < 0.1, "node {k}: fd {} adjoint {}", fd[k], adj[k]);
    }
    let rho = gradient_mismatch(&problem, &u).unwrap().rho;
    assert!(rho > 0.0 && rho < 0.3, "rho = {rho}");
}
