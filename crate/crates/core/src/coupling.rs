//! Mechanical coupling between two simulated arms.
//!
//! The coupling is a spring-damper on the relative position `x_r - x_l` around a
//! desired offset. The relative error is clamped before it is multiplied by the
//! stiffness, and the same clamped force is applied with opposite signs to the two
//! arms.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{ensure_finite, Error, Result};
use crate::impedance::{
    regulation_factor, step_dynamics, ArmState, Gains, SafetyLimits, SimConfig,
};

/// Default coupling stiffness [N/m].
pub const DEFAULT_COUPLING_STIFFNESS: f64 = 800.0;
/// Default relative error cap [m].
pub const DEFAULT_REL_ERROR_CAP: f64 = 0.05;

/// Coupling spring, damper, desired offset and relative-error cap.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingConfig {
    k_c: DMatrix<f64>,
    d_c: DMatrix<f64>,
    delta_rel_des: DVector<f64>,
    rel_error_cap: f64,
    critical: bool,
}

fn psd_decomposition(m: &DMatrix<f64>, what: &str) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    if !m.is_square() || m.nrows() == 0 {
        return Err(Error::NotPositiveDefinite(format!("{what} must be a non-empty square matrix")));
    }
    ensure_finite(m.as_slice(), what)?;
    let scale = m.amax().max(1.0);
    if (m - m.transpose()).amax() > 1e-9 * scale {
        return Err(Error::NotPositiveDefinite(format!("{what} is not symmetric")));
    }
    let eig = SymmetricEigen::new(m.clone());
    if eig.eigenvalues.iter().any(|&l| l < -1e-9 * scale) {
        return Err(Error::NotPositiveDefinite(format!("{what} has a negative eigenvalue")));
    }
    Ok(eig)
}

fn critical_damping(k_c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if k_c.iter().all(|&v| v == 0.0) {
        return Ok(DMatrix::zeros(k_c.nrows(), k_c.ncols()));
    }
    let eig = psd_decomposition(k_c, "coupling stiffness")?;
    let r = &eig.eigenvectors;
    Ok(r * DMatrix::from_diagonal(&eig.eigenvalues.map(|k| 2.0 * k.max(0.0).sqrt())) * r.transpose())
}

impl CouplingConfig {
    /// Coupling with an explicit damping matrix.
    pub fn new(
        k_c: DMatrix<f64>,
        d_c: DMatrix<f64>,
        delta_rel_des: DVector<f64>,
        rel_error_cap: f64,
    ) -> Result<Self> {
        Self::build(k_c, d_c, delta_rel_des, rel_error_cap, false)
    }

    /// Coupling whose damping is `2√K_c` per principal axis.
    pub fn critical(k_c: DMatrix<f64>, delta_rel_des: DVector<f64>, rel_error_cap: f64) -> Result<Self> {
        let d_c = critical_damping(&k_c)?;
        Self::build(k_c, d_c, delta_rel_des, rel_error_cap, true)
    }

    fn build(
        k_c: DMatrix<f64>,
        d_c: DMatrix<f64>,
        delta_rel_des: DVector<f64>,
        rel_error_cap: f64,
        critical: bool,
    ) -> Result<Self> {
        let dim = delta_rel_des.len();
        for (m, what) in [(&k_c, "coupling stiffness"), (&d_c, "coupling damping")] {
            if m.nrows() != dim || m.ncols() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: m.nrows(),
                });
            }
            psd_decomposition(m, what)?;
        }
        ensure_finite(delta_rel_des.as_slice(), "desired relative offset")?;
        if !(rel_error_cap.is_finite() && rel_error_cap > 0.0) {
            return Err(Error::InvalidInput(format!(
                "relative error cap must be positive, got {rel_error_cap}"
            )));
        }
        Ok(Self {
            k_c,
            d_c,
            delta_rel_des,
            rel_error_cap,
            critical,
        })
    }

    /// Isotropic 800 N/m coupling, critically damped, 0.05 m cap.
    pub fn isotropic(dim: usize, k: f64, delta_rel_des: DVector<f64>) -> Result<Self> {
        if delta_rel_des.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: delta_rel_des.len(),
            });
        }
        Self::critical(DMatrix::identity(dim, dim) * k, delta_rel_des, DEFAULT_REL_ERROR_CAP)
    }

    pub fn default_for(dim: usize) -> Self {
        Self::isotropic(dim, DEFAULT_COUPLING_STIFFNESS, DVector::zeros(dim)).expect("valid default")
    }

    /// Zero stiffness and damping.
    pub fn disabled(dim: usize) -> Self {
        Self {
            k_c: DMatrix::zeros(dim, dim),
            d_c: DMatrix::zeros(dim, dim),
            delta_rel_des: DVector::zeros(dim),
            rel_error_cap: DEFAULT_REL_ERROR_CAP,
            critical: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.delta_rel_des.len()
    }

    pub fn stiffness(&self) -> &DMatrix<f64> {
        &self.k_c
    }

    pub fn damping(&self) -> &DMatrix<f64> {
        &self.d_c
    }

    pub fn delta_rel_des(&self) -> &DVector<f64> {
        &self.delta_rel_des
    }

    pub fn rel_error_cap(&self) -> f64 {
        self.rel_error_cap
    }

    pub fn is_critical(&self) -> bool {
        self.critical
    }

    pub fn with_offset(mut self, delta_rel_des: DVector<f64>) -> Result<Self> {
        if delta_rel_des.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: delta_rel_des.len(),
            });
        }
        self.delta_rel_des = delta_rel_des;
        Ok(self)
    }

    /// Applies the per-arm safety rules to the coupling channel: principal stiffness
    /// clamped to the force bound, relative error cap tightened to the displacement
    /// bound, then the stiffness regulated by `sigma`. Critically damped couplings are
    /// re-damped, explicit damping is scaled by the square root of the regulation factor.
    pub fn saturated(&self, limits: &SafetyLimits, sigma: f64) -> Result<Self> {
        if limits.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: limits.dim(),
            });
        }
        if self.k_c.iter().all(|&v| v == 0.0) {
            return Ok(self.clone());
        }
        let eig = psd_decomposition(&self.k_c, "coupling stiffness")?;
        let r = eig.eigenvectors;
        let v_loc = (r.transpose() * DVector::from_column_slice(&limits.v_max)).abs();
        let f_loc = (r.transpose() * DVector::from_column_slice(&limits.f_max)).abs();
        let mut principal = eig.eigenvalues.map(|k| k.max(0.0));
        let mut cap = self.rel_error_cap;
        let mut clamped = false;
        for i in 0..principal.len() {
            if principal[i] == 0.0 || v_loc[i] <= f64::EPSILON {
                continue;
            }
            let k_max = (f_loc[i] / (2.0 * v_loc[i])).powi(2);
            if principal[i] > k_max {
                principal[i] = k_max;
                clamped = true;
            }
            cap = cap.min(2.0 * v_loc[i] / principal[i].sqrt());
        }
        let factor = regulation_factor(sigma, limits.sigma_tr);
        let k_c = if clamped {
            &r * DMatrix::from_diagonal(&principal) * r.transpose()
        } else {
            self.k_c.clone()
        };
        let k_c = if factor == 1.0 { k_c } else { k_c * factor };
        let d_c = if self.critical {
            if clamped || factor != 1.0 {
                critical_damping(&k_c)?
            } else {
                self.d_c.clone()
            }
        } else if factor == 1.0 {
            self.d_c.clone()
        } else {
            &self.d_c * factor.sqrt()
        };
        Ok(Self {
            k_c,
            d_c,
            delta_rel_des: self.delta_rel_des.clone(),
            rel_error_cap: cap,
            critical: self.critical,
        })
    }
}

/// Two arms sharing a dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct DualArmState {
    pub left: ArmState,
    pub right: ArmState,
}

impl DualArmState {
    pub fn new(left: ArmState, right: ArmState) -> Result<Self> {
        if left.dim() != right.dim() {
            return Err(Error::DimensionMismatch {
                expected: left.dim(),
                got: right.dim(),
            });
        }
        Ok(Self { left, right })
    }
}

/// Relative error `x_r - x_l - Δ_des`, clamped to `± cap` per component.
pub fn clamped_relative_error(dual: &DualArmState, cfg: &CouplingConfig) -> Result<DVector<f64>> {
    let d = cfg.dim();
    if dual.left.dim() != d || dual.right.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: dual.left.dim().max(dual.right.dim()),
        });
    }
    let cap = cfg.rel_error_cap;
    let e = &dual.right.x - &dual.left.x - &cfg.delta_rel_des;
    Ok(e.map(|v| v.clamp(-cap, cap)))
}

/// `(F_left, F_right)` with `F_left = K_c e_clamped + D_c (v_r - v_l)` and `F_right = -F_left`.
pub fn coupling_forces(dual: &DualArmState, cfg: &CouplingConfig) -> Result<(DVector<f64>, DVector<f64>)> {
    let e = clamped_relative_error(dual, cfg)?;
    let dv = &dual.right.v - &dual.left.v;
    let f_left = &cfg.k_c * e + &cfg.d_c * dv;
    let f_right = -&f_left;
    Ok((f_left, f_right))
}

/// Attractor, regulated gains and external force driving one arm for one step.
#[derive(Debug, Clone, Copy)]
pub struct ArmDrive<'a> {
    pub attractor: &'a DVector<f64>,
    pub gains: &'a Gains,
    pub f_ext: &'a DVector<f64>,
}

/// Steps both arms with their own drive plus the coupling force.
pub fn dual_step(
    dual: &DualArmState,
    left: ArmDrive<'_>,
    right: ArmDrive<'_>,
    coupling: &CouplingConfig,
    sim: &SimConfig,
) -> Result<DualArmState> {
    let (f_l, f_r) = coupling_forces(dual, coupling)?;
    if left.f_ext.len() != f_l.len() || right.f_ext.len() != f_r.len() {
        return Err(Error::DimensionMismatch {
            expected: f_l.len(),
            got: left.f_ext.len().max(right.f_ext.len()),
        });
    }
    let l = step_dynamics(&dual.left, left.attractor, left.gains, &(left.f_ext + f_l), sim)?;
    let r = step_dynamics(&dual.right, right.attractor, right.gains, &(right.f_ext + f_r), sim)?;
    Ok(DualArmState { left: l, right: r })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dvector;

    fn dual(xl: &[f64], xr: &[f64]) -> DualArmState {
        DualArmState::new(ArmState::from_slice(xl, 0.0), ArmState::from_slice(xr, 0.0)).unwrap()
    }

    #[test]
    fn force_examples() {
        let cfg = CouplingConfig::default_for(2);
        let (l, r) = coupling_forces(&dual(&[0.0, 0.0], &[0.0, 0.0]), &cfg).unwrap();
        assert_eq!(l, DVector::zeros(2));
        assert_eq!(r, DVector::zeros(2));

        let (l, r) = coupling_forces(&dual(&[0.0, 0.0], &[0.01, 0.0]), &cfg).unwrap();
        assert_relative_eq!(l, dvector![8.0, 0.0], epsilon = 1e-12);
        assert_relative_eq!(r, dvector![-8.0, 0.0], epsilon = 1e-12);

        let (l, _) = coupling_forces(&dual(&[0.0, 0.0], &[0.2, 0.0]), &cfg).unwrap();
        assert_relative_eq!(l.norm(), 40.0, epsilon = 1e-12);
    }

    #[test]
    fn desired_offset_is_neutral() {
        let cfg = CouplingConfig::default_for(2).with_offset(dvector![0.3, -0.1]).unwrap();
        let (l, _) = coupling_forces(&dual(&[0.1, 0.2], &[0.4, 0.1]), &cfg).unwrap();
        assert!(l.amax() < 1e-12);
    }

    #[test]
    fn critical_coupling_damping() {
        let cfg = CouplingConfig::default_for(2);
        assert_relative_eq!(cfg.damping()[(0, 0)], 2.0 * 800f64.sqrt(), epsilon = 1e-9);
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 1.0]);
        assert!(CouplingConfig::critical(bad, DVector::zeros(2), 0.05).is_err());
        assert!(CouplingConfig::critical(DMatrix::identity(2, 2), DVector::zeros(2), 0.0).is_err());
        assert!(CouplingConfig::critical(DMatrix::identity(3, 3), DVector::zeros(2), 0.05).is_err());
        let c = CouplingConfig::default_for(2);
        assert!(coupling_forces(&dual(&[0.0], &[0.0]), &c).is_err());
    }

    #[test]
    fn saturation_follows_arm_rules() {
        let limits = SafetyLimits::default_for(2);
        let sat = CouplingConfig::default_for(2).saturated(&limits, 0.0).unwrap();
        assert_relative_eq!(sat.stiffness()[(0, 0)], 600.0, epsilon = 1e-6);
        assert_relative_eq!(sat.rel_error_cap(), 0.05, epsilon = 1e-9);
        assert_relative_eq!(sat.damping()[(0, 0)], 2.0 * 600f64.sqrt(), epsilon = 1e-6);
        let reg = CouplingConfig::default_for(2).saturated(&limits, 0.9).unwrap();
        let factor = regulation_factor(0.9, limits.sigma_tr);
        assert_relative_eq!(reg.stiffness()[(1, 1)], 600.0 * factor, epsilon = 1e-6);
        let off = CouplingConfig::disabled(2).saturated(&limits, 0.9).unwrap();
        assert_eq!(off, CouplingConfig::disabled(2));
    }

    #[test]
    fn stationary_at_rest_configuration() {
        let cfg = CouplingConfig::default_for(2).with_offset(dvector![0.25, 0.0]).unwrap();
        let g = Gains::isotropic(2, 600.0).unwrap();
        let d = dual(&[0.25, 0.125], &[0.5, 0.125]);
        let zero = DVector::zeros(2);
        let next = dual_step(
            &d,
            ArmDrive { attractor: &d.left.x, gains: &g, f_ext: &zero },
            ArmDrive { attractor: &d.right.x, gains: &g, f_ext: &zero },
            &cfg,
            &SimConfig::default(),
        )
        .unwrap();
        assert_eq!(next, d);
    }

    #[test]
    fn pushing_left_drags_right() {
        let cfg = CouplingConfig::default_for(2);
        let g = Gains::isotropic(2, 600.0).unwrap();
        let mut d = dual(&[0.0, 0.0], &[0.0, 0.0]);
        let (al, ar) = (d.left.x.clone(), d.right.x.clone());
        let push = dvector![10.0, 0.0];
        let zero = DVector::zeros(2);
        for _ in 0..400 {
            d = dual_step(
                &d,
                ArmDrive { attractor: &al, gains: &g, f_ext: &push },
                ArmDrive { attractor: &ar, gains: &g, f_ext: &zero },
                &cfg,
                &SimConfig::default(),
            )
            .unwrap();
        }
        assert!(d.left.x[0] > 0.0);
        assert!(d.right.x[0] > 0.0);
        assert!(d.right.x[0] < d.left.x[0]);
    }
}
