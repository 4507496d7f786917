//! Pinning-based distributed secondary control: the consensus/pinning laws
//! that drive each DG's nominal frequency and voltage setpoints, the reduced
//! consensus-error model, and the Lyapunov decay check.
//!
//! The secondary laws are implemented in integral form: the bracketed
//! consensus + pinning terms, scaled by the channel gains, are the
//! *derivatives* of the nominal setpoints. That is the only reading under
//! which the aggregate tracking error obeys `d(eps)/dt = -G_c (L + C Psi) eps`
//! and steady-state restoration holds. The power-sharing term uses the
//! neighbor-minus-self orientation so droop-share disagreements decay.

use nalgebra::{DMatrix, DVector};

use crate::cybergraph::{CommGraph, PinningSet};
use crate::{Error, Result};

/// Gains of the secondary controller.
///
/// `c_v`, `c_omega`, `c_p` are the voltage, frequency and power-sharing
/// channel gains, `c_gv`/`c_gomega` the pinning gains, and `omega_ref`,
/// `v_ref` the restoration references in p.u.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlGains {
    pub c_v: f64,
    pub c_omega: f64,
    pub c_p: f64,
    pub c_gv: f64,
    pub c_gomega: f64,
    pub omega_ref: f64,
    pub v_ref: f64,
}

impl Default for ControlGains {
    /// Case-study defaults: identical channel gains of 30, unit pinning
    /// gains, 1 p.u. references.
    fn default() -> Self {
        ControlGains {
            c_v: 30.0,
            c_omega: 30.0,
            c_p: 30.0,
            c_gv: 1.0,
            c_gomega: 1.0,
            omega_ref: 1.0,
            v_ref: 1.0,
        }
    }
}

impl ControlGains {
    /// Uniform construction from one channel gain and one pinning gain.
    pub fn uniform(g_c: f64, c_pin: f64, omega_ref: f64, v_ref: f64) -> Self {
        ControlGains {
            c_v: g_c,
            c_omega: g_c,
            c_p: g_c,
            c_gv: c_pin,
            c_gomega: c_pin,
            omega_ref,
            v_ref,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.c_v,
            self.c_omega,
            self.c_p,
            self.c_gv,
            self.c_gomega,
            self.omega_ref,
            self.v_ref,
        ];
        if all.iter().any(|&g| !(g > 0.0)) {
            return Err(Error::InvalidModel(format!(
                "control gains must all be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Per-DG measurement fed to the secondary controller: droop frequency,
/// droop voltage and filtered active power, all p.u.
#[derive(Debug, Clone, Copy)]
pub struct DgMeasurement {
    pub omega: f64,
    pub v: f64,
    pub p: f64,
}

/// Setpoint derivatives `(d omega_nl / dt, d V_nl / dt)` for every DG.
///
/// `droops` carries the `m_p` coefficients so the power-sharing channel can
/// compare `m_p * P` across neighbors.
pub fn secondary_derivs(
    measurements: &[DgMeasurement],
    graph: &CommGraph,
    pins: &PinningSet,
    gains: &ControlGains,
    droops: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let m = graph.node_count();
    if measurements.len() != m {
        return Err(Error::Dimension {
            what: "secondary measurements",
            expected: m,
            got: measurements.len(),
        });
    }
    if droops.len() != m || pins.len() != m {
        return Err(Error::Dimension {
            what: "secondary droops/pins",
            expected: m,
            got: droops.len().min(pins.len()),
        });
    }
    let adj = graph.neighbor_lists();
    let mut out = Vec::with_capacity(m);
    for k in 0..m {
        let mk = &measurements[k];
        let share_k = droops[k] * mk.p;
        let mut omega_sum = 0.0;
        let mut v_sum = 0.0;
        let mut share_sum = 0.0;
        for &j in &adj[k] {
            let mj = &measurements[j];
            omega_sum += mj.omega - mk.omega;
            v_sum += mj.v - mk.v;
            share_sum += droops[j] * mj.p - share_k;
        }
        let pin = if pins.is_pinned(k) { 1.0 } else { 0.0 };
        let d_omega = gains.c_omega * (omega_sum + pin * gains.c_gomega * (gains.omega_ref - mk.omega))
            + gains.c_p * share_sum;
        let d_v = gains.c_v * (v_sum + pin * gains.c_gv * (gains.v_ref - mk.v));
        out.push((d_omega, d_v));
    }
    Ok(out)
}

/// Reduced consensus-error dynamics `d(eps)/dt = -G_c (L + c_pin Psi) eps`.
pub fn reduced_error_derivs(
    eps: &DVector<f64>,
    laplacian: &DMatrix<f64>,
    pins: &PinningSet,
    g_c: f64,
    c_pin: f64,
) -> Result<DVector<f64>> {
    let m = laplacian.nrows();
    if eps.len() != m || pins.len() != m || laplacian.ncols() != m {
        return Err(Error::Dimension {
            what: "reduced error model",
            expected: m,
            got: eps.len(),
        });
    }
    let mut d = laplacian * eps;
    for k in 0..m {
        if pins.is_pinned(k) {
            d[k] += c_pin * eps[k];
        }
    }
    Ok(-g_c * d)
}

/// Integrate the reduced model with classic fixed-step RK4 and return the
/// sampled trajectory `(t, eps(t))` including both endpoints.
///
/// The step count is chosen from `dt_max`; with the default 1e-4 s the
/// trajectory is accurate to well below 1e-8 for the gain ranges used here.
pub fn integrate_reduced(
    eps0: &DVector<f64>,
    laplacian: &DMatrix<f64>,
    pins: &PinningSet,
    g_c: f64,
    c_pin: f64,
    t_end: f64,
    dt_max: f64,
) -> Result<Vec<(f64, DVector<f64>)>> {
    if !(t_end > 0.0) || !(dt_max > 0.0) {
        return Err(Error::InvalidModel(format!(
            "integrate_reduced needs positive t_end and dt_max, got {t_end}, {dt_max}"
        )));
    }
    let steps = (t_end / dt_max).ceil().max(1.0) as usize;
    let h = t_end / steps as f64;
    let f = |e: &DVector<f64>| reduced_error_derivs(e, laplacian, pins, g_c, c_pin);
    let mut eps = eps0.clone();
    let mut out = Vec::with_capacity(steps + 1);
    out.push((0.0, eps.clone()));
    for i in 0..steps {
        let k1 = f(&eps)?;
        let k2 = f(&(&eps + &k1 * (h / 2.0)))?;
        let k3 = f(&(&eps + &k2 * (h / 2.0)))?;
        let k4 = f(&(&eps + &k3 * h))?;
        eps += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        out.push(((i + 1) as f64 * h, eps.clone()));
    }
    Ok(out)
}

/// Result of [`lyapunov_check`].
#[derive(Debug, Clone, Copy)]
pub struct LyapunovReport {
    /// Whether `V(t) = eps' eps / 2` was non-increasing at every sample.
    pub monotone: bool,
    /// Largest sample-to-sample increase observed (0 when monotone).
    pub max_violation: f64,
}

/// Check that the Lyapunov candidate `V = eps' eps / 2` never grows along a
/// sampled trajectory, within 1e-12 per step.
pub fn lyapunov_check(trajectory: &[(f64, DVector<f64>)]) -> LyapunovReport {
    let mut max_violation = 0.0f64;
    for pair in trajectory.windows(2) {
        let v0 = 0.5 * pair[0].1.norm_squared();
        let v1 = 0.5 * pair[1].1.norm_squared();
        if v1 > v0 + 1e-12 {
            max_violation = max_violation.max(v1 - v0);
        }
    }
    LyapunovReport {
        monotone: max_violation == 0.0,
        max_violation,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cybergraph::{lambda_min, pinned_laplacian, small_world};
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn consensus_fixed_point_has_zero_derivs() {
        let g = CommGraph::new(3, [(0, 1), (1, 2)]).unwrap();
        let pins = PinningSet::from_indices(3, &[0]).unwrap();
        let gains = ControlGains::default();
        let droops = [2e-3, 1e-3, 1e-3];
        // All at reference, droop shares equal.
        let meas: Vec<_> = droops
            .iter()
            .map(|&mp| DgMeasurement {
                omega: 1.0,
                v: 1.0,
                p: 4e-4 / mp,
            })
            .collect();
        for (dw, dv) in secondary_derivs(&meas, &g, &pins, &gains, &droops).unwrap() {
            assert_abs_diff_eq!(dw, 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(dv, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn single_pinned_dg_direct_substitution() {
        let g = CommGraph::empty(1);
        let pins = PinningSet::all(1);
        let gains = ControlGains {
            c_v: 30.0,
            c_gv: 1.0,
            v_ref: 1.0,
            ..ControlGains::default()
        };
        let meas = [DgMeasurement {
            omega: 1.0,
            v: 0.99,
            p: 0.0,
        }];
        let d = secondary_derivs(&meas, &g, &pins, &gains, &[1e-3]).unwrap();
        assert_abs_diff_eq!(d[0].1, 0.3, epsilon = 1e-12);
    }

    #[test]
    fn unpinned_pair_is_antisymmetric() {
        let g = CommGraph::new(2, [(0, 1)]).unwrap();
        let pins = PinningSet::none(2);
        let gains = ControlGains::default();
        let meas = [
            DgMeasurement {
                omega: 1.001,
                v: 1.005,
                p: 0.2,
            },
            DgMeasurement {
                omega: 0.999,
                v: 0.996,
                p: 0.3,
            },
        ];
        let d = secondary_derivs(&meas, &g, &pins, &gains, &[1e-3, 1e-3]).unwrap();
        assert_abs_diff_eq!(d[0].1, -d[1].1, epsilon = 1e-12);
        assert_abs_diff_eq!(d[0].0, -d[1].0, epsilon = 1e-12);
    }

    #[test]
    fn no_pins_conserves_setpoint_sum() {
        let mut r = ChaCha8Rng::seed_from_u64(4);
        let g = small_world(6, 4, 0.3, &mut r).unwrap();
        let pins = PinningSet::none(6);
        let gains = ControlGains::default();
        let droops = vec![1e-3; 6];
        let meas: Vec<_> = (0..6)
            .map(|_| DgMeasurement {
                omega: 1.0 + 0.01 * (r.gen::<f64>() - 0.5),
                v: 1.0 + 0.02 * (r.gen::<f64>() - 0.5),
                p: r.gen::<f64>(),
            })
            .collect();
        let d = secondary_derivs(&meas, &g, &pins, &gains, &droops).unwrap();
        let dv_sum: f64 = d.iter().map(|x| x.1).sum();
        // Equal droops also make the frequency channel conservative here.
        let dw_sum: f64 = d.iter().map(|x| x.0).sum();
        assert_abs_diff_eq!(dv_sum, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(dw_sum, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn reduced_derivs_zero_at_origin() {
        let g = CommGraph::new(3, [(0, 1), (1, 2)]).unwrap();
        let pins = PinningSet::from_indices(3, &[1]).unwrap();
        let eps = DVector::zeros(3);
        let d = reduced_error_derivs(&eps, &g.laplacian(), &pins, 30.0, 1.0).unwrap();
        assert_eq!(d, DVector::zeros(3));
    }

    #[test]
    fn reduced_scalar_analytic_decay() {
        // m = 1 pinned: d(eps)/dt = -30 eps, so eps(t) = exp(-30 t).
        let g = CommGraph::empty(1);
        let pins = PinningSet::all(1);
        let eps0 = DVector::from_element(1, 1.0);
        let d = reduced_error_derivs(&eps0, &g.laplacian(), &pins, 30.0, 1.0).unwrap();
        assert_abs_diff_eq!(d[0], -30.0, epsilon = 1e-12);
        let traj =
            integrate_reduced(&eps0, &g.laplacian(), &pins, 30.0, 1.0, 0.1, 1e-4).unwrap();
        let (t, eps) = traj.last().unwrap();
        assert_abs_diff_eq!(*t, 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(eps[0], (-3.0f64).exp(), epsilon = 1e-10);
    }

    /// Trajectory oracle: eps(t) = V exp(-G_c D t) V' eps(0) from a full
    /// symmetric eigendecomposition, independent of the RK4 path.
    fn expm_trajectory(
        eps0: &DVector<f64>,
        a: &DMatrix<f64>,
        g_c: f64,
        t: f64,
    ) -> DVector<f64> {
        let eig = a.clone().symmetric_eigen();
        let coords = eig.eigenvectors.transpose() * eps0;
        let scaled = DVector::from_iterator(
            coords.len(),
            coords
                .iter()
                .zip(eig.eigenvalues.iter())
                .map(|(&c, &l)| c * (-g_c * l * t).exp()),
        );
        &eig.eigenvectors * scaled
    }

    #[test]
    fn reduced_matches_matrix_exponential_oracle() {
        let mut r = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let g = small_world(8, 4, 0.3, &mut r).unwrap();
            let pins = PinningSet::from_flags((0..8).map(|_| r.gen::<f64>() < 0.5).collect());
            let eps0 = DVector::from_fn(8, |_, _| r.gen::<f64>() * 2.0 - 1.0);
            let l = g.laplacian();
            let traj = integrate_reduced(&eps0, &l, &pins, 30.0, 1.0, 0.1, 1e-4).unwrap();
            let got = &traj.last().unwrap().1;
            let want = expm_trajectory(&eps0, &pinned_laplacian(&g, &pins, 1.0), 30.0, 0.1);
            assert!((got - want).amax() < 1e-8, "RK4 vs expm deviation too large");
        }
    }

    #[test]
    fn exponential_envelope_holds() {
        let mut r = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            let g = small_world(8, 4, 0.3, &mut r).unwrap();
            let pins = PinningSet::from_indices(8, &[0, 3]).unwrap();
            let l = g.laplacian();
            let lm = lambda_min(&pinned_laplacian(&g, &pins, 1.0)).unwrap();
            let eps0 = DVector::from_fn(8, |_, _| r.gen::<f64>() * 2.0 - 1.0);
            let traj = integrate_reduced(&eps0, &l, &pins, 30.0, 1.0, 0.2, 1e-4).unwrap();
            let n0 = eps0.norm();
            for (t, eps) in &traj {
                let bound = n0 * (-30.0 * lm * t).exp() * (1.0 + 1e-6);
                assert!(
                    eps.norm() <= bound,
                    "envelope violated at t = {t}: {} > {bound}",
                    eps.norm()
                );
            }
        }
    }

    #[test]
    fn lyapunov_monotone_with_pins() {
        let g = CommGraph::empty(1);
        let pins = PinningSet::all(1);
        let eps0 = DVector::from_element(1, 1.0);
        let traj =
            integrate_reduced(&eps0, &g.laplacian(), &pins, 30.0, 1.0, 0.5, 1e-4).unwrap();
        let rep = lyapunov_check(&traj);
        assert!(rep.monotone);
        assert_eq!(rep.max_violation, 0.0);
    }

    #[test]
    fn lyapunov_monotone_random_pinned_graphs() {
        let mut r = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let g = small_world(8, 4, 0.3, &mut r).unwrap();
            let pins = PinningSet::from_indices(8, &[2]).unwrap();
            let eps0 = DVector::from_fn(8, |_, _| r.gen::<f64>() * 2.0 - 1.0);
            let traj =
                integrate_reduced(&eps0, &g.laplacian(), &pins, 30.0, 1.0, 0.3, 1e-4).unwrap();
            assert!(lyapunov_check(&traj).monotone);
        }
    }

    #[test]
    fn lyapunov_unpinned_component_stays_flat() {
        // Two components, only one pinned: the unpinned sub-vector keeps its
        // norm, so V is non-increasing but not strictly decreasing.
        let g = CommGraph::new(4, [(0, 1), (2, 3)]).unwrap();
        let pins = PinningSet::from_indices(4, &[0]).unwrap();
        let eps0 = DVector::from_vec(vec![1.0, -0.5, 0.7, 0.7]);
        let l = g.laplacian();
        let traj = integrate_reduced(&eps0, &l, &pins, 30.0, 1.0, 1.0, 1e-4).unwrap();
        let rep = lyapunov_check(&traj);
        assert!(rep.monotone);
        let last = &traj.last().unwrap().1;
        let unpinned_norm = (last[2].powi(2) + last[3].powi(2)).sqrt();
        let initial = (0.7f64.powi(2) * 2.0).sqrt();
        assert_abs_diff_eq!(unpinned_norm, initial, epsilon = 1e-8);
        // Pinned component decays towards zero.
        assert!(last[0].abs() < 1e-3 && last[1].abs() < 1e-3);
    }
}
