//! Seeded verification suites: pointwise algebraic identities, the critical
//! eigenvalue pinch, and time-integrator convergence order.
//!
//! Each suite is a pure function of its seed and returns one
//! [`PropertyOutcome`] per property with a case count and the worst slack
//! observed (oriented so that ≤ 0 is a pass), so any reported run can be
//! replayed bit-for-bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::estimates;
use crate::field::{BackgroundForm, HermitianField, PotentialField};
use crate::flow::{self, Problem, Scheme};
use crate::functionals;
use crate::geometry;
use crate::grid::{GridMode, LatticeGrid};
use crate::herm;
use crate::scalar::{real, Scalar};
use crate::spectral::Spectral;
use num_complex::Complex;

/// Tally of one named property inside a suite.
#[derive(Clone, Debug)]
pub struct PropertyOutcome<T> {
    pub name: String,
    pub cases: usize,
    /// Worst slack observed, oriented so that ≤ 0 means the property held
    /// with margin and anything positive is a violation.
    pub slack: T,
    pub passed: bool,
    /// Human summary of the measured extremes.
    pub detail: String,
}

impl<T: Scalar> PropertyOutcome<T> {
    fn from_slack(name: impl Into<String>, cases: usize, slack: T, detail: String) -> Self {
        Self { name: name.into(), cases, slack, passed: slack <= T::zero(), detail }
    }
}

/// A full suite run: every property with its tally.
#[derive(Clone, Debug)]
pub struct SuiteReport<T> {
    pub suite: &'static str,
    pub seed: u64,
    pub properties: Vec<PropertyOutcome<T>>,
}

impl<T: Scalar> SuiteReport<T> {
    pub fn passed(&self) -> bool {
        self.properties.iter().all(|p| p.passed)
    }
}

fn rel_err<T: Scalar>(value: T, reference: T) -> T {
    (value - reference).abs() / reference.abs().max(real::<T>(1e-300))
}

/// Algebraic identity suite: the wedge-ratio/trace identity against the
/// determinant-derivative oracle (pointwise kernel and assembled field), σ's
/// degree −1 homogeneity in χ, the closed-form path weights against the Beta
/// quadrature oracle, and invariance of the flow constant under a change of
/// representative of the background class.
pub fn run_identities<T: Scalar>(seed: u64) -> Result<SuiteReport<T>> {
    let mut properties = Vec::new();
    let tol = real::<T>(1e-9);

    // 1: pointwise σ vs the log-determinant derivative, 10³ random positive
    // pairs for every dimension the pointwise kernels support
    {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = T::zero();
        let mut cases = 0usize;
        for n in 1..=herm::MAX_DIM {
            for _ in 0..1000 {
                let chi = herm::random_hpd::<T, _>(n, 1.0, &mut rng);
                let g = herm::random_hpd::<T, _>(n, 1.0, &mut rng);
                let sigma = geometry::sigma_site(n, &chi, &g)
                    .expect("random positive matrices stay invertible");
                let oracle = geometry::wedge_ratio_oracle(&chi, &g, n);
                worst = worst.max(rel_err(sigma, oracle));
                cases += 1;
            }
        }
        properties.push(PropertyOutcome::from_slack(
            "wedge ratio matches determinant oracle",
            cases,
            worst - tol,
            format!("max relative error {worst:e} (tolerance {tol:e})"),
        ));
    }

    // 2: the assembled field path produces the same numbers site by site
    {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5_5A5A);
        let mut worst = T::zero();
        let mut cases = 0usize;
        for (n, points) in [(1usize, 1024usize), (2, 32), (3, 10)] {
            let grid = LatticeGrid::new(n, GridMode::Reduced, points)?;
            let g = BackgroundForm::new(n, herm::random_hpd::<T, _>(n, 1.0, &mut rng))?;
            let mut chi = HermitianField::zeros(n, grid.sites());
            for s in 0..grid.sites() {
                let m = herm::random_hpd::<T, _>(n, 1.0, &mut rng);
                chi.site_mut(s).copy_from_slice(&m);
            }
            let sigma = geometry::sigma_field(&chi, &g, &grid)?;
            for s in 0..grid.sites() {
                let oracle = geometry::wedge_ratio_oracle(chi.site(s), g.matrix(), n);
                worst = worst.max(rel_err(sigma.values()[s], oracle));
                cases += 1;
            }
        }
        properties.push(PropertyOutcome::from_slack(
            "field evaluation matches the pointwise oracle",
            cases,
            worst - tol,
            format!("max relative error {worst:e} over random lattice fields"),
        ));
    }

    // 3: σ(tχ, g) = σ(χ, g)/t — degree −1 homogeneity of the wedge ratio
    {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0F0F_F0F0);
        let tight = real::<T>(1e-12);
        let mut worst = T::zero();
        let mut cases = 0usize;
        for n in 1..=herm::MAX_DIM {
            for _ in 0..250 {
                let chi = herm::random_hpd::<T, _>(n, 1.0, &mut rng);
                let g = herm::random_hpd::<T, _>(n, 1.0, &mut rng);
                let t = real::<T>(0.5 + 1.5 * rng.gen::<f64>());
                let tc = Complex::new(t, T::zero());
                let scaled: Vec<_> = chi.iter().map(|&v| v * tc).collect();
                let s1 = geometry::sigma_site(n, &chi, &g).unwrap();
                let s2 = geometry::sigma_site(n, &scaled, &g).unwrap();
                worst = worst.max(rel_err(s2 * t, s1));
                cases += 1;
            }
        }
        properties.push(PropertyOutcome::from_slack(
            "wedge ratio is homogeneous of degree -1",
            cases,
            worst - tight,
            format!("max relative defect {worst:e}"),
        ));
    }

    // 4: closed-form path weights vs the Beta quadrature oracle
    {
        let tight = real::<T>(1e-12);
        let mut worst = T::zero();
        let mut cases = 0usize;
        for n in 1..=3usize {
            for k in 0..=n {
                let w = functionals::i_weight::<T>(n, k);
                let oracle = functionals::i_weight_beta_oracle::<T>(n, k);
                worst = worst.max((w - oracle).abs());
                cases += 1;
            }
        }
        properties.push(PropertyOutcome::from_slack(
            "path weights match the Beta oracle",
            cases,
            worst - tight,
            format!("max absolute difference {worst:e}"),
        ));
    }

    // 5: the flow constant is blind to the representative: recomputing c
    // from χ_ψ for random potentials ψ reproduces the background value
    {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x3C3C_C3C3);
        let grid = LatticeGrid::new(2, GridMode::Reduced, 16)?;
        let spectral = Spectral::new(grid);
        let g = BackgroundForm::scaled_identity(2, T::one())?;
        let chi0 = {
            let mut m = vec![Complex::new(T::zero(), T::zero()); 4];
            m[0] = Complex::new(real::<T>(2.0), T::zero());
            m[3] = Complex::new(real::<T>(4.0), T::zero());
            BackgroundForm::new(2, m)?
        };
        let c_const = functionals::compute_c(&g, &chi0);
        let mut worst = T::zero();
        let mut cases = 0usize;
        for _ in 0..3 {
            let a1 = real::<T>(0.1 + 0.2 * rng.gen::<f64>());
            let a2 = real::<T>(0.05 + 0.1 * rng.gen::<f64>());
            let th1 = real::<T>(rng.gen::<f64>());
            let th2 = real::<T>(rng.gen::<f64>());
            let psi = PotentialField::from_fn(&grid, |x: &[T]| {
                a1 * (x[0] + T::TAU() * th1).cos()
                    + a2 * (x[0] + real::<T>(2.0) * x[1] + T::TAU() * th2).cos()
            });
            let mut hess = HermitianField::zeros(2, grid.sites());
            spectral.complex_hessian(&psi, &mut hess);
            let chi = geometry::assemble_chi(&chi0, &hess)?;
            let c_field = functionals::compute_c_of_field(&g, chi.field(), &grid)?;
            worst = worst.max(rel_err(c_field, c_const));
            cases += 1;
        }
        properties.push(PropertyOutcome::from_slack(
            "flow constant is representative-independent",
            cases,
            worst - tol,
            format!("max relative drift {worst:e}"),
        ));
    }

    Ok(SuiteReport { suite: "identities", seed, properties })
}

/// Eigenvalue-pinch suite with the full acceptance-scale sampling sizes.
pub fn run_eigenbound<T: Scalar>(seed: u64) -> Result<SuiteReport<T>> {
    run_eigenbound_sized(seed, 100_000, 100)
}

/// Eigenvalue-pinch suite: for each dimension and a spread of ε values,
/// every uniform ball sample must respect both pinch bounds and the
/// projected ascent must come within 90% of the upper one.
pub fn run_eigenbound_sized<T: Scalar>(
    seed: u64,
    samples: usize,
    restarts: usize,
) -> Result<SuiteReport<T>> {
    let mut properties = Vec::new();
    let slack_tol = real::<T>(1e-9);
    let mut min_ratio = T::infinity();
    let mut min_ratio_at = String::new();
    let mut combo = 0u64;
    for n in 2..=4usize {
        let cap = 1.0 / (n as f64 + 1.0);
        for frac in [0.2, 0.4, 0.6, 0.8] {
            let epsilon = real::<T>(cap * frac);
            combo += 1;
            let sub_seed = seed.wrapping_add(combo.wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let report =
                estimates::eigenbound_verify::<T>(n, epsilon, samples, restarts, sub_seed)?;
            let worst = report.max_upper_violation.max(report.max_lower_violation);
            if report.achieved_ratio < min_ratio {
                min_ratio = report.achieved_ratio;
                min_ratio_at = format!("n={n}, eps={epsilon}");
            }
            properties.push(PropertyOutcome::from_slack(
                format!("pinch holds for n={n}, eps={epsilon:.6}"),
                samples * n + restarts,
                worst - slack_tol,
                format!(
                    "worst signed violation {worst:e}; ascent reached {:.4} of the upper bound",
                    report.achieved_ratio
                ),
            ));
        }
    }
    properties.push(PropertyOutcome::from_slack(
        "ascent attains at least 90% of the upper bound",
        combo as usize,
        real::<T>(0.9) - min_ratio,
        format!("minimum achieved ratio {min_ratio:.4} at {min_ratio_at}"),
    ));
    Ok(SuiteReport { suite: "eigenbound", seed, properties })
}

fn integrate_fixed<T: Scalar>(
    problem: &Problem<T>,
    phi0: &PotentialField<T>,
    scheme: Scheme,
    dt: T,
    steps: usize,
) -> Result<PotentialField<T>> {
    let mut state = problem.state_from_phi(phi0.clone(), T::zero())?;
    for _ in 0..steps {
        let phi = flow::scheme_step(problem, &state, scheme, dt)?;
        state = problem.state_from_phi(phi, state.t + dt)?;
    }
    Ok(state.phi)
}

fn sup_diff<T: Scalar>(a: &PotentialField<T>, b: &PotentialField<T>) -> T {
    a.values()
        .iter()
        .zip(b.values())
        .fold(T::zero(), |m, (&x, &y)| m.max((x - y).abs()))
}

/// Convergence-order suite: fixed-step self-convergence ratios of the three
/// schemes on a randomized smooth start. Halving dt must shrink the
/// endpoint difference by 2^p for a scheme of order p.
pub fn run_order<T: Scalar>(seed: u64) -> Result<SuiteReport<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = LatticeGrid::new(1, GridMode::Reduced, 8)?;
    let g = BackgroundForm::scaled_identity(1, T::one())?;
    let chi0 = BackgroundForm::scaled_identity(1, real::<T>(2.0))?;
    let problem = Problem::new(grid, g, chi0)?;

    let a1 = real::<T>(0.2 + 0.2 * rng.gen::<f64>());
    let a2 = real::<T>(0.05 + 0.1 * rng.gen::<f64>());
    let th1 = real::<T>(rng.gen::<f64>());
    let th2 = real::<T>(rng.gen::<f64>());
    let phi0 = PotentialField::from_fn(&grid, |x: &[T]| {
        a1 * (x[0] + T::TAU() * th1).cos()
            + a2 * (real::<T>(2.0) * x[0] + T::TAU() * th2).cos()
    });

    let t_end = T::one();
    let base_steps = 8usize;
    let window = real::<T>(0.35);
    let mut properties = Vec::new();
    for (scheme, name, order) in [
        (Scheme::Euler, "explicit first-order scheme", 1.0),
        (Scheme::Rk4, "classical fourth-order scheme", 4.0),
        (Scheme::Imex, "semi-implicit first-order scheme", 1.0),
    ] {
        // endpoints at dt, dt/2, dt/4, dt/8 give two Richardson ratios
        let mut endpoints = Vec::new();
        for level in 0..4 {
            let steps = base_steps << level;
            let dt = t_end / real::<T>(steps as f64);
            endpoints.push(integrate_fixed(&problem, &phi0, scheme, dt, steps)?);
        }
        let e: Vec<T> = (0..3).map(|i| sup_diff(&endpoints[i], &endpoints[i + 1])).collect();
        let ln2 = real::<T>(2.0).ln();
        let p = real::<T>(order);
        let mut slack = T::neg_infinity();
        let mut ratios = Vec::new();
        for i in 0..2 {
            let ratio = e[i] / e[i + 1];
            let defect = (ratio.ln() / ln2 - p).abs();
            slack = slack.max(defect - window);
            ratios.push(format!("{:.3}", ratio.to_f64().unwrap_or(f64::NAN)));
        }
        properties.push(PropertyOutcome::from_slack(
            format!("{name} converges at order {order}"),
            2,
            slack,
            format!("halving ratios [{}], expected near {}", ratios.join(", "), 2f64.powf(order)),
        ));
    }
    Ok(SuiteReport { suite: "order", seed, properties })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identities_suite_passes_and_replays_bitwise() {
        let a = run_identities::<f64>(3).unwrap();
        assert!(a.passed(), "failures: {:?}", a.properties);
        assert_eq!(a.properties.len(), 5);
        assert_eq!(a.properties[0].cases, 4000);
        assert_eq!(a.properties[3].cases, 9);

        let b = run_identities::<f64>(3).unwrap();
        for (x, y) in a.properties.iter().zip(&b.properties) {
            assert_eq!(x.slack.to_bits(), y.slack.to_bits(), "{} not deterministic", x.name);
        }
    }

    #[test]
    fn eigenbound_suite_passes_at_reduced_size() {
        let report = run_eigenbound_sized::<f64>(2, 2000, 8).unwrap();
        assert!(report.passed(), "failures: {:?}", report.properties);
        // 3 dimensions × 4 epsilons + the sharpness summary
        assert_eq!(report.properties.len(), 13);
    }

    #[test]
    fn order_suite_confirms_scheme_orders() {
        let report = run_order::<f64>(5).unwrap();
        assert!(report.passed(), "failures: {:?}", report.properties);
        assert_eq!(report.properties.len(), 3);
    }
}
