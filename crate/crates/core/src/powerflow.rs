//! AC power flow by full-Jacobian Newton-Raphson in polar coordinates.
//!
//! Unknowns are the angles and magnitudes at every non-slack bus; the slack
//! bus is held at exactly 1.0 pu, angle 0. Each iteration evaluates the
//! power mismatch, assembles the dense Jacobian of the calculated injections
//! and solves `J dx = f` with a partial-pivot LU.
//!
//! Failure to converge — iteration cap, a singular or ill-conditioned
//! Jacobian (pivot-ratio estimate above `cond_limit`), or an iterate leaving
//! the physical region — is a *result* (`converged = false` with the last
//! iterate attached), never an error or a panic. Oscillation scenarios
//! legitimately drive the grid past its loadability limit and the harness
//! needs the outcome as data.

use num_complex::Complex;

use crate::grid::BusKind;
use crate::linalg::{lu_solve, Mat};
use crate::scalar::Real;

/// Net scheduled injection per bus position, per unit (generation positive).
#[derive(Debug, Clone, PartialEq)]
pub struct Injection<F> {
    pub p: Vec<F>,
    pub q: Vec<F>,
}

impl<F: Real> Injection<F> {
    pub fn zeros(n: usize) -> Self {
        Self { p: vec![F::zero(); n], q: vec![F::zero(); n] }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions<F> {
    /// Convergence threshold on the infinity norm of the mismatch, pu.
    pub tol: F,
    pub max_iter: usize,
    /// Jacobian pivot-ratio ceiling; beyond it the step is untrustworthy and
    /// the solve reports non-convergence.
    pub cond_limit: F,
}

impl<F: Real> Default for SolveOptions<F> {
    fn default() -> Self {
        Self { tol: F::c(1e-8), max_iter: 30, cond_limit: F::c(1e12) }
    }
}

#[derive(Debug, Clone)]
pub struct PowerflowResult<F> {
    /// Voltage magnitude per bus position, pu. Last iterate if unconverged.
    pub v_mag: Vec<F>,
    /// Voltage angle per bus position, radians.
    pub v_ang: Vec<F>,
    pub converged: bool,
    pub iterations: usize,
    /// Infinity norm of the mismatch at exit.
    pub max_mismatch: F,
}

/// Calculated injections P_i, Q_i at every bus for the given voltage state.
pub fn calculated_power<F: Real>(
    y: &Mat<Complex<F>>,
    v_mag: &[F],
    v_ang: &[F],
) -> (Vec<F>, Vec<F>) {
    let n = y.rows();
    let mut p = vec![F::zero(); n];
    let mut q = vec![F::zero(); n];
    for i in 0..n {
        let mut pi = F::zero();
        let mut qi = F::zero();
        for k in 0..n {
            let g = y[(i, k)].re;
            let b = y[(i, k)].im;
            if g == F::zero() && b == F::zero() {
                continue;
            }
            let th = v_ang[i] - v_ang[k];
            let (sin, cos) = th.sin_cos();
            pi += v_mag[k] * (g * cos + b * sin);
            qi += v_mag[k] * (g * sin - b * cos);
        }
        p[i] = v_mag[i] * pi;
        q[i] = v_mag[i] * qi;
    }
    (p, q)
}

/// Non-slack bus positions, in bus order.
fn free_buses(kinds: &[BusKind]) -> Vec<usize> {
    kinds
        .iter()
        .enumerate()
        .filter_map(|(i, k)| (*k == BusKind::Pq).then_some(i))
        .collect()
}

/// Power mismatch `[dP at free buses..., dQ at free buses...]`:
/// scheduled injection minus the injection the voltages actually transfer.
pub fn mismatch<F: Real>(
    y: &Mat<Complex<F>>,
    v_mag: &[F],
    v_ang: &[F],
    inj: &Injection<F>,
    kinds: &[BusKind],
) -> Vec<F> {
    let (p_calc, q_calc) = calculated_power(y, v_mag, v_ang);
    let free = free_buses(kinds);
    let mut f = Vec::with_capacity(2 * free.len());
    for &i in &free {
        f.push(inj.p[i] - p_calc[i]);
    }
    for &i in &free {
        f.push(inj.q[i] - q_calc[i]);
    }
    f
}

/// Jacobian of the calculated injections `[P; Q]` at the free buses with
/// respect to `[theta; v]` at the free buses.
pub fn jacobian<F: Real>(
    y: &Mat<Complex<F>>,
    v_mag: &[F],
    v_ang: &[F],
    kinds: &[BusKind],
) -> Mat<F> {
    let free = free_buses(kinds);
    let m = free.len();
    let (p_calc, q_calc) = calculated_power(y, v_mag, v_ang);
    let mut j = Mat::<F>::zeros(2 * m, 2 * m);

    for (a, &i) in free.iter().enumerate() {
        let gii = y[(i, i)].re;
        let bii = y[(i, i)].im;
        let vi = v_mag[i];
        for (b, &k) in free.iter().enumerate() {
            if i == k {
                // dP_i/dth_i, dP_i/dv_i, dQ_i/dth_i, dQ_i/dv_i
                j[(a, b)] = -q_calc[i] - bii * vi * vi;
                j[(a, m + b)] = p_calc[i] / vi + gii * vi;
                j[(m + a, b)] = p_calc[i] - gii * vi * vi;
                j[(m + a, m + b)] = q_calc[i] / vi - bii * vi;
            } else {
                let g = y[(i, k)].re;
                let bb = y[(i, k)].im;
                let th = v_ang[i] - v_ang[k];
                let (sin, cos) = th.sin_cos();
                let vk = v_mag[k];
                j[(a, b)] = vi * vk * (g * sin - bb * cos);
                j[(a, m + b)] = vi * (g * cos + bb * sin);
                j[(m + a, b)] = -vi * vk * (g * cos + bb * sin);
                j[(m + a, m + b)] = vi * (g * sin - bb * cos);
            }
        }
    }
    j
}

fn inf_norm<F: Real>(v: &[F]) -> F {
    v.iter().fold(F::zero(), |acc, x| acc.max(x.abs()))
}

/// Solves the power flow from a flat start (1.0 pu, 0 rad everywhere).
pub fn solve<F: Real>(
    y: &Mat<Complex<F>>,
    inj: &Injection<F>,
    kinds: &[BusKind],
    opts: &SolveOptions<F>,
) -> PowerflowResult<F> {
    let n = y.rows();
    assert_eq!(inj.p.len(), n, "injection length must match bus count");
    assert_eq!(kinds.len(), n, "kinds length must match bus count");
    let free = free_buses(kinds);
    let m = free.len();

    let mut v_mag = vec![F::one(); n];
    let mut v_ang = vec![F::zero(); n];
    let mut max_mis = F::infinity();

    let fail = |v_mag: Vec<F>, v_ang: Vec<F>, it: usize, mis: F| PowerflowResult {
        v_mag,
        v_ang,
        converged: false,
        iterations: it,
        max_mismatch: mis,
    };

    for it in 0..=opts.max_iter {
        let f = mismatch(y, &v_mag, &v_ang, inj, kinds);
        max_mis = inf_norm(&f);
        if !max_mis.is_finite() {
            return fail(v_mag, v_ang, it, max_mis);
        }
        if max_mis <= opts.tol {
            return PowerflowResult { v_mag, v_ang, converged: true, iterations: it, max_mismatch: max_mis };
        }
        if it == opts.max_iter {
            break;
        }

        let mut j = jacobian(y, &v_mag, &v_ang, kinds);
        let mut dx = f;
        let report = match lu_solve(&mut j, &mut dx) {
            Ok(r) => r,
            Err(_) => return fail(v_mag, v_ang, it, max_mis),
        };
        if report.condition_estimate() > opts.cond_limit {
            return fail(v_mag, v_ang, it, max_mis);
        }

        for (a, &i) in free.iter().enumerate() {
            v_ang[i] += dx[a];
            v_mag[i] += dx[m + a];
        }
        let physical = free.iter().all(|&i| {
            v_mag[i].is_finite() && v_ang[i].is_finite() && v_mag[i] > F::c(1e-6)
        });
        if !physical {
            return fail(v_mag, v_ang, it + 1, max_mis);
        }
    }
    fail(v_mag, v_ang, opts.max_iter, max_mis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{admittance_matrix, load_grid, Grid};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn two_bus(x_pu: f64) -> Mat<Complex<f64>> {
        // x pu on a 400-ohm base -> ohm/km value of x*400 over 1 km.
        let doc = format!(
            r#"
            s_base_mva = 1.0
            [[buses]]
            id = 0
            kind = "slack"
            base_kv = 20.0
            [[buses]]
            id = 1
            kind = "pq"
            base_kv = 20.0
            [[branches]]
            from = 0
            to = 1
            r_ohm_per_km = 0.0
            x_ohm_per_km = {}
            length_km = 1.0
            "#,
            x_pu * 400.0
        );
        let grid: Grid<f64> = load_grid(&doc).unwrap();
        admittance_matrix(&grid)
    }

    const KINDS2: [BusKind; 2] = [BusKind::Slack, BusKind::Pq];

    #[test]
    fn matches_hand_solved_two_bus_case() {
        // Lossless x = 0.1 pu, 0.5 pu load at bus 1. Quartic solved offline:
        // v = sqrt((1 + sqrt(1 - 4 x^2 p^2)) / 2), th = -asin(p x / v).
        let y = two_bus(0.1);
        let inj = Injection { p: vec![0.0, -0.5], q: vec![0.0, 0.0] };
        let r = solve(&y, &inj, &KINDS2, &SolveOptions::default());
        assert!(r.converged, "mismatch {}", r.max_mismatch);
        assert_relative_eq!(r.v_mag[1], 0.9987460731103327, epsilon = 1e-9);
        assert_relative_eq!(r.v_ang[1], -0.0500837105807799, epsilon = 1e-9);
        assert_eq!(r.v_mag[0], 1.0);
        assert_eq!(r.v_ang[0], 0.0);
    }

    #[test]
    fn reports_nonconvergence_past_the_nose_point() {
        // Loadability of the lossless x = 0.1 line ends at p = 5 pu.
        let y = two_bus(0.1);
        let inj = Injection { p: vec![0.0, -6.0], q: vec![0.0, 0.0] };
        let r = solve(&y, &inj, &KINDS2, &SolveOptions::default());
        assert!(!r.converged);
        assert!(r.max_mismatch > 1e-8 || !r.max_mismatch.is_finite());
    }

    #[test]
    fn flat_start_mismatch_equals_minus_load_on_lossless_network() {
        // Flat voltages transfer nothing on a lossless, shuntless network,
        // so the flat-start dP at each load bus is exactly -load.
        let y = two_bus(0.2);
        let inj = Injection { p: vec![0.0, -0.37], q: vec![0.0, -0.11] };
        let f = mismatch(&y, &[1.0, 1.0], &[0.0, 0.0], &inj, &KINDS2);
        assert_relative_eq!(f[0], -0.37, max_relative = 1e-14);
        assert_relative_eq!(f[1], -0.11, max_relative = 1e-14);
    }

    #[test]
    fn mismatch_vanishes_at_the_solution() {
        let y = two_bus(0.1);
        let inj = Injection { p: vec![0.0, -0.5], q: vec![0.0, 0.2] };
        let r = solve(&y, &inj, &KINDS2, &SolveOptions::default());
        assert!(r.converged);
        let f = mismatch(&y, &r.v_mag, &r.v_ang, &inj, &KINDS2);
        assert!(inf_norm(&f) <= 1e-8);
    }

    /// Random small radial test systems for property checks.
    fn random_case(seed: u64) -> (Mat<Complex<f64>>, Injection<f64>, Vec<BusKind>) {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
        let n = rng.random_range(2..6usize);
        let mut doc = String::from("s_base_mva = 1.0\n");
        for i in 0..n {
            let kind = if i == 0 { "slack" } else { "pq" };
            doc.push_str(&format!("[[buses]]\nid = {i}\nkind = \"{kind}\"\nbase_kv = 20.0\n"));
        }
        for i in 1..n {
            let parent = rng.random_range(0..i);
            let r: f64 = rng.random_range(1.0..8.0);
            let x: f64 = rng.random_range(2.0..12.0);
            let b: f64 = rng.random_range(0.0..40.0);
            doc.push_str(&format!(
                "[[branches]]\nfrom = {parent}\nto = {i}\nr_ohm_per_km = {r}\nx_ohm_per_km = {x}\nb_us_per_km = {b}\nlength_km = 1.0\n"
            ));
        }
        let grid: Grid<f64> = load_grid(&doc).unwrap();
        let y = admittance_matrix(&grid);
        let mut inj = Injection::zeros(n);
        for i in 1..n {
            inj.p[i] = rng.random_range(-1.5..1.5);
            inj.q[i] = rng.random_range(-0.8..0.8);
        }
        (y, inj, grid.kinds())
    }

    #[test]
    fn jacobian_matches_central_finite_differences() {
        for seed in 0..25u64 {
            let (y, _inj, kinds) = random_case(seed);
            let n = kinds.len();
            let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed ^ 0xabcd);
            // Random interior state, not necessarily a solution.
            let v_mag: Vec<f64> = (0..n).map(|i| if kinds[i] == BusKind::Slack { 1.0 } else { rng.random_range(0.9..1.1) }).collect();
            let v_ang: Vec<f64> = (0..n).map(|i| if kinds[i] == BusKind::Slack { 0.0 } else { rng.random_range(-0.3..0.3) }).collect();
            let j = jacobian(&y, &v_mag, &v_ang, &kinds);
            let free: Vec<usize> = (0..n).filter(|&i| kinds[i] == BusKind::Pq).collect();
            let m = free.len();
            let h = 1e-6;
            for (col, &k) in free.iter().enumerate() {
                for var in 0..2 {
                    let mut plus_m = v_mag.clone();
                    let mut plus_a = v_ang.clone();
                    let mut minus_m = v_mag.clone();
                    let mut minus_a = v_ang.clone();
                    if var == 0 {
                        plus_a[k] += h;
                        minus_a[k] -= h;
                    } else {
                        plus_m[k] += h;
                        minus_m[k] -= h;
                    }
                    let (pp, qp) = calculated_power(&y, &plus_m, &plus_a);
                    let (pm, qm) = calculated_power(&y, &minus_m, &minus_a);
                    for (row, &i) in free.iter().enumerate() {
                        let fd_p = (pp[i] - pm[i]) / (2.0 * h);
                        let fd_q = (qp[i] - qm[i]) / (2.0 * h);
                        let jc = col + var * m;
                        let scale = fd_p.abs().max(j[(row, jc)].abs()).max(1.0);
                        assert!(
                            (j[(row, jc)] - fd_p).abs() / scale < 1e-6,
                            "seed {seed} dP[{i}]/dx[{k},{var}]: analytic {} fd {fd_p}",
                            j[(row, jc)]
                        );
                        let scale = fd_q.abs().max(j[(m + row, jc)].abs()).max(1.0);
                        assert!(
                            (j[(m + row, jc)] - fd_q).abs() / scale < 1e-6,
                            "seed {seed} dQ[{i}]/dx[{k},{var}]: analytic {} fd {fd_q}",
                            j[(m + row, jc)]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn newton_converges_quadratically_near_the_solution() {
        let y = two_bus(0.1);
        let inj = Injection { p: vec![0.0, -0.5], q: vec![0.0, 0.0] };
        let sol = solve(&y, &inj, &KINDS2, &SolveOptions::default());
        assert!(sol.converged);
        // One Newton step from a perturbed solution; error should shrink
        // like delta^2 (superlinearly as delta halves).
        let step_error = |delta: f64| -> f64 {
            let mut v_mag = sol.v_mag.clone();
            let mut v_ang = sol.v_ang.clone();
            v_mag[1] += delta;
            v_ang[1] -= delta;
            let f = mismatch(&y, &v_mag, &v_ang, &inj, &KINDS2);
            let mut j = jacobian(&y, &v_mag, &v_ang, &KINDS2);
            let mut dx = f;
            lu_solve(&mut j, &mut dx).unwrap();
            v_ang[1] += dx[0];
            v_mag[1] += dx[1];
            (v_mag[1] - sol.v_mag[1]).abs().max((v_ang[1] - sol.v_ang[1]).abs())
        };
        let e1 = step_error(1e-2);
        let e2 = step_error(5e-3);
        let e3 = step_error(2.5e-3);
        assert!(e2 / e1 < 0.3, "expected superlinear contraction, got {e1} -> {e2}");
        assert!(e3 / e2 < 0.3, "expected superlinear contraction, got {e2} -> {e3}");
    }

    proptest! {
        /// Converged solutions conserve power: total calculated injection
        /// equals the resistive losses of the network.
        #[test]
        fn conservation_at_converged_solutions(seed in 0u64..150) {
            let (y, inj, kinds) = random_case(seed);
            let r = solve(&y, &inj, &kinds, &SolveOptions::default());
            if !r.converged { return Ok(()); } // over-the-nose draws are legitimate
            let (p, q) = calculated_power(&y, &r.v_mag, &r.v_ang);
            let total_p: f64 = p.iter().sum();
            // Branch loss computed independently from complex branch currents.
            let n = kinds.len();
            let volt: Vec<num_complex::Complex<f64>> = (0..n)
                .map(|i| num_complex::Complex::from_polar(r.v_mag[i], r.v_ang[i]))
                .collect();
            let mut loss = num_complex::Complex::new(0.0, 0.0);
            for i in 0..n {
                let mut current = num_complex::Complex::new(0.0, 0.0);
                for k in 0..n {
                    current += y[(i, k)] * volt[k];
                }
                loss += volt[i] * current.conj();
            }
            prop_assert!((total_p - loss.re).abs() < 1e-8, "sum P {} vs loss {}", total_p, loss.re);
            let total_q: f64 = q.iter().sum();
            prop_assert!((total_q - loss.im).abs() < 1e-8);
        }

        /// Solving twice yields bit-identical results (pure function).
        #[test]
        fn solve_is_deterministic(seed in 0u64..50) {
            let (y, inj, kinds) = random_case(seed);
            let a = solve(&y, &inj, &kinds, &SolveOptions::default());
            let b = solve(&y, &inj, &kinds, &SolveOptions::default());
            prop_assert_eq!(a.v_mag, b.v_mag);
            prop_assert_eq!(a.v_ang, b.v_ang);
            prop_assert_eq!(a.converged, b.converged);
            prop_assert_eq!(a.iterations, b.iterations);
        }
    }

    #[test]
    fn slack_voltage_never_moves() {
        for seed in 0..20u64 {
            let (y, inj, kinds) = random_case(seed);
            let r = solve(&y, &inj, &kinds, &SolveOptions::default());
            let s = kinds.iter().position(|k| *k == BusKind::Slack).unwrap();
            assert_eq!(r.v_mag[s], 1.0);
            assert_eq!(r.v_ang[s], 0.0);
        }
    }

    #[test]
    fn f32_instantiation_solves_the_easy_case() {
        let doc = r#"
            s_base_mva = 1.0
            [[buses]]
            id = 0
            kind = "slack"
            base_kv = 20.0
            [[buses]]
            id = 1
            kind = "pq"
            base_kv = 20.0
            [[branches]]
            from = 0
            to = 1
            r_ohm_per_km = 0.0
            x_ohm_per_km = 40.0
            length_km = 1.0
        "#;
        let grid: Grid<f32> = load_grid(doc).unwrap();
        let y = admittance_matrix(&grid);
        let inj = Injection { p: vec![0.0f32, -0.5], q: vec![0.0, 0.0] };
        let opts = SolveOptions { tol: 1e-5f32, ..Default::default() };
        let r = solve(&y, &inj, &KINDS2, &opts);
        assert!(r.converged);
        assert!((r.v_mag[1] - 0.998_746).abs() < 1e-4);
    }
}
