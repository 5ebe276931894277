//! Simulated Cartesian impedance control.
//!
//! The arm is a point mass driven by `m ẍ = K Δx − D ẋ + f_ext`. Stiffness is
//! handled in its principal frame `K = R K̃ Rᵀ`: damping is `R · 2K̃^{1/2} · Rᵀ`
//! (critical for unit mass), the attractor displacement is clamped so the free
//! motion speed stays below `v_max`, the principal stiffness is clamped so the
//! static force stays below `F_max`, and the stiffness is scaled down when the
//! policy uncertainty crosses `sigma_tr`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// Default linear stiffness [N/m].
pub const DEFAULT_STIFFNESS: f64 = 600.0;
/// Default attractor displacement cap at the default stiffness [m].
pub const DEFAULT_DISPLACEMENT_CAP: f64 = 0.05;
/// Default static force limit [N].
pub const DEFAULT_F_MAX: f64 = 30.0;
/// Sigma threshold: uncertainty one length scale away from the nearest node.
pub const DEFAULT_SIGMA_TR: f64 = 0.632_120_558_828_557_7;
/// Inputs with `sigma >= 1` are clamped to this value before regulation.
pub const SIGMA_CEILING: f64 = 1.0 - 1e-9;

/// Speed limit implied by a displacement cap at a given stiffness (critical damping).
pub fn implied_velocity_limit(stiffness: f64, displacement_cap: f64) -> f64 {
    displacement_cap * stiffness.sqrt() / 2.0
}

/// Simulated end-effector state.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmState {
    pub x: DVector<f64>,
    pub v: DVector<f64>,
    /// Time belief [s].
    pub t_b: f64,
}

impl ArmState {
    pub fn at_rest(x: DVector<f64>, t_b: f64) -> Self {
        let v = DVector::zeros(x.len());
        Self { x, v, t_b }
    }

    pub fn from_slice(x: &[f64], t_b: f64) -> Self {
        Self::at_rest(DVector::from_column_slice(x), t_b)
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }
}

/// Stiffness, its principal decomposition and the matching critical damping.
#[derive(Debug, Clone, PartialEq)]
pub struct Gains {
    stiffness: DMatrix<f64>,
    rotation: DMatrix<f64>,
    principal: DVector<f64>,
    damping: DMatrix<f64>,
}

impl Gains {
    /// Decomposes a symmetric positive-definite stiffness and derives the damping.
    pub fn new(stiffness: DMatrix<f64>) -> Result<Self> {
        if !stiffness.is_square() || stiffness.nrows() == 0 {
            return Err(Error::NotPositiveDefinite("stiffness must be a non-empty square matrix".into()));
        }
        ensure_finite(stiffness.as_slice(), "stiffness")?;
        let scale = stiffness.amax().max(1.0);
        if (&stiffness - stiffness.transpose()).amax() > 1e-9 * scale {
            return Err(Error::NotPositiveDefinite("stiffness is not symmetric".into()));
        }
        let eig = SymmetricEigen::new(stiffness.clone());
        if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
            return Err(Error::NotPositiveDefinite(format!(
                "principal stiffness {:?} must be positive",
                eig.eigenvalues.as_slice()
            )));
        }
        Self::from_principal(eig.eigenvectors, eig.eigenvalues)
    }

    /// Builds gains from an orthogonal frame and positive principal stiffness.
    pub fn from_principal(rotation: DMatrix<f64>, principal: DVector<f64>) -> Result<Self> {
        if principal.iter().any(|&l| !(l.is_finite() && l > 0.0)) {
            return Err(Error::NotPositiveDefinite("principal stiffness must be positive".into()));
        }
        let stiffness = &rotation * DMatrix::from_diagonal(&principal) * rotation.transpose();
        let damping = &rotation
            * DMatrix::from_diagonal(&principal.map(|k| 2.0 * k.sqrt()))
            * rotation.transpose();
        Ok(Self {
            stiffness,
            rotation,
            principal,
            damping,
        })
    }

    /// Isotropic stiffness `k · I`.
    pub fn isotropic(dim: usize, k: f64) -> Result<Self> {
        Self::from_principal(DMatrix::identity(dim, dim), DVector::from_element(dim, k))
    }

    /// Same frame with every principal stiffness multiplied by `factor`; damping
    /// is rebuilt so the scaled gains stay critically damped.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::from_principal(self.rotation.clone(), &self.principal * factor)
    }

    pub fn dim(&self) -> usize {
        self.principal.len()
    }

    pub fn stiffness(&self) -> &DMatrix<f64> {
        &self.stiffness
    }

    pub fn damping(&self) -> &DMatrix<f64> {
        &self.damping
    }

    /// Columns are the principal axes.
    pub fn rotation(&self) -> &DMatrix<f64> {
        &self.rotation
    }

    pub fn principal(&self) -> &DVector<f64> {
        &self.principal
    }
}

/// Velocity, force and uncertainty limits for one arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyLimits {
    pub v_max: Vec<f64>,
    pub f_max: Vec<f64>,
    pub sigma_tr: f64,
}

impl SafetyLimits {
    pub fn new(v_max: Vec<f64>, f_max: Vec<f64>, sigma_tr: f64) -> Result<Self> {
        let limits = Self {
            v_max,
            f_max,
            sigma_tr,
        };
        limits.validate()?;
        Ok(limits)
    }

    /// Same limits on every axis.
    pub fn uniform(dim: usize, v_max: f64, f_max: f64, sigma_tr: f64) -> Result<Self> {
        Self::new(vec![v_max; dim], vec![f_max; dim], sigma_tr)
    }

    /// 600 N/m with a 0.05 m cap (≈ 0.612 m/s), 30 N, `sigma_tr = 1 - e⁻¹`.
    pub fn default_for(dim: usize) -> Self {
        Self {
            v_max: vec![implied_velocity_limit(DEFAULT_STIFFNESS, DEFAULT_DISPLACEMENT_CAP); dim],
            f_max: vec![DEFAULT_F_MAX; dim],
            sigma_tr: DEFAULT_SIGMA_TR,
        }
    }

    pub fn dim(&self) -> usize {
        self.v_max.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.v_max.len() != self.f_max.len() {
            return Err(Error::DimensionMismatch {
                expected: self.v_max.len(),
                got: self.f_max.len(),
            });
        }
        if self
            .v_max
            .iter()
            .chain(&self.f_max)
            .any(|&l| !(l.is_finite() && l > 0.0))
        {
            return Err(Error::InvalidInput("velocity and force limits must be positive".into()));
        }
        if !(self.sigma_tr > 0.0 && self.sigma_tr < 1.0) {
            return Err(Error::InvalidInput(format!(
                "sigma threshold must lie in (0, 1), got {}",
                self.sigma_tr
            )));
        }
        Ok(())
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        if self.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: self.dim(),
            });
        }
        Ok(())
    }
}

fn principal_abs(rotation: &DMatrix<f64>, v: &[f64]) -> DVector<f64> {
    (rotation.transpose() * DVector::from_column_slice(v)).abs()
}

/// Per-principal-axis displacement bound `2 K̃^{-1/2} |Rᵀ v_max|`.
pub fn displacement_bound(gains: &Gains, limits: &SafetyLimits) -> Result<DVector<f64>> {
    limits.check_dim(gains.dim())?;
    let v = principal_abs(gains.rotation(), &limits.v_max);
    Ok(v.zip_map(gains.principal(), |vi, ki| 2.0 * vi / ki.sqrt()))
}

/// Clamps `delta_x` component-wise in the principal frame of the stiffness.
pub fn saturate_displacement(
    delta_x: &DVector<f64>,
    gains: &Gains,
    limits: &SafetyLimits,
) -> Result<DVector<f64>> {
    if delta_x.len() != gains.dim() {
        return Err(Error::DimensionMismatch {
            expected: gains.dim(),
            got: delta_x.len(),
        });
    }
    ensure_finite(delta_x.as_slice(), "displacement")?;
    let bound = displacement_bound(gains, limits)?;
    let r = gains.rotation();
    let local = r.transpose() * delta_x;
    if local.iter().zip(bound.iter()).all(|(d, b)| d.abs() <= *b) {
        return Ok(delta_x.clone());
    }
    let clamped = local.zip_map(&bound, |d, b| d.clamp(-b, b));
    Ok(r * clamped)
}

/// Largest principal stiffness per axis, `(|RᵀF_max|_i / (2 |Rᵀv_max|_i))²`.
pub fn stiffness_upper_bound(limits: &SafetyLimits, rotation: &DMatrix<f64>) -> Result<DVector<f64>> {
    limits.check_dim(rotation.nrows())?;
    let v = principal_abs(rotation, &limits.v_max);
    let f = principal_abs(rotation, &limits.f_max);
    if let Some(i) = v.iter().position(|&vi| vi <= f64::EPSILON) {
        return Err(Error::InvalidInput(format!(
            "velocity limit vanishes on principal axis {i}"
        )));
    }
    Ok(f.zip_map(&v, |fi, vi| (fi / (2.0 * vi)).powi(2)))
}

/// Gains with each principal stiffness clamped to [`stiffness_upper_bound`].
pub fn saturate_stiffness(gains: &Gains, limits: &SafetyLimits) -> Result<Gains> {
    let bound = stiffness_upper_bound(limits, gains.rotation())?;
    if gains.principal().iter().zip(bound.iter()).all(|(k, b)| k <= b) {
        return Ok(gains.clone());
    }
    Gains::from_principal(
        gains.rotation().clone(),
        gains.principal().zip_map(&bound, f64::min),
    )
}

/// Stiffness scale `(1 - σ) / (1 - σ_tr)` above the threshold, `1` below it.
pub fn regulation_factor(sigma: f64, sigma_tr: f64) -> f64 {
    let sigma = if sigma.is_nan() { SIGMA_CEILING } else { sigma.clamp(0.0, SIGMA_CEILING) };
    if sigma <= sigma_tr {
        1.0
    } else {
        (1.0 - sigma) / (1.0 - sigma_tr)
    }
}

/// Uncertainty-regulated stiffness `K̂`.
pub fn regulate_stiffness(k_sat: &DMatrix<f64>, sigma: f64, sigma_tr: f64) -> DMatrix<f64> {
    let factor = regulation_factor(sigma, sigma_tr);
    if factor == 1.0 {
        k_sat.clone()
    } else {
        k_sat * factor
    }
}

/// Point-mass integration settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Constant inertia standing in for the configuration-dependent one [kg].
    pub mass: f64,
    /// Integration step [s].
    pub dt: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            mass: 1.0,
            dt: 0.005,
        }
    }
}

impl SimConfig {
    pub const MAX_DT: f64 = 0.02;

    pub fn new(mass: f64, dt: f64) -> Result<Self> {
        let cfg = Self { mass, dt };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass.is_finite() && self.mass > 0.0) {
            return Err(Error::InvalidInput(format!("mass must be positive, got {}", self.mass)));
        }
        if !(self.dt > 0.0 && self.dt <= Self::MAX_DT) {
            return Err(Error::InvalidInput(format!(
                "dt must lie in (0, {}], got {}",
                Self::MAX_DT,
                self.dt
            )));
        }
        Ok(())
    }
}

/// One semi-implicit Euler step of `m ẍ = K (attractor − x) − D ẋ + f_ext`.
pub fn step_dynamics(
    state: &ArmState,
    attractor: &DVector<f64>,
    gains: &Gains,
    f_ext: &DVector<f64>,
    cfg: &SimConfig,
) -> Result<ArmState> {
    let d = state.dim();
    for (len, what) in [(attractor.len(), "attractor"), (f_ext.len(), "force"), (gains.dim(), "gains")] {
        if len != d {
            return Err(Error::InvalidInput(format!("{what} has dimension {len}, arm has {d}")));
        }
    }
    ensure_finite(f_ext.as_slice(), "external force")?;
    ensure_finite(attractor.as_slice(), "attractor")?;
    let force = gains.stiffness() * (attractor - &state.x) - gains.damping() * &state.v + f_ext;
    let acc = force / cfg.mass;
    let v = &state.v + acc * cfg.dt;
    let x = &state.x + &v * cfg.dt;
    Ok(ArmState { x, v, t_b: state.t_b })
}

/// Saturated attractor displacement and regulated stiffness for one tick.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlCommand {
    pub delta_x: DVector<f64>,
    /// Regulated stiffness `K̂` together with its principal frame and damping.
    pub gains: Gains,
    /// `K̂ = k_scale · saturate(K)`.
    pub k_scale: f64,
}

impl ControlCommand {
    pub fn k_hat(&self) -> &DMatrix<f64> {
        self.gains.stiffness()
    }

    pub fn attractor(&self, x: &DVector<f64>) -> DVector<f64> {
        x + &self.delta_x
    }

    /// Static force the command can exert, `K̂ Δx`.
    pub fn static_force(&self) -> DVector<f64> {
        self.gains.stiffness() * &self.delta_x
    }
}

/// Nominal stiffness with the force clamp already applied, ready to turn goals into commands.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpedanceController {
    nominal: Gains,
    saturated: Gains,
    limits: SafetyLimits,
}

impl ImpedanceController {
    pub fn new(nominal: Gains, limits: SafetyLimits) -> Result<Self> {
        limits.validate()?;
        let saturated = saturate_stiffness(&nominal, &limits)?;
        Ok(Self {
            nominal,
            saturated,
            limits,
        })
    }

    /// 600 N/m isotropic arm with the default limits.
    pub fn default_for(dim: usize) -> Self {
        Self::new(
            Gains::isotropic(dim, DEFAULT_STIFFNESS).expect("positive stiffness"),
            SafetyLimits::default_for(dim),
        )
        .expect("default limits are valid")
    }

    pub fn dim(&self) -> usize {
        self.nominal.dim()
    }

    pub fn nominal(&self) -> &Gains {
        &self.nominal
    }

    pub fn saturated(&self) -> &Gains {
        &self.saturated
    }

    pub fn limits(&self) -> &SafetyLimits {
        &self.limits
    }

    /// Regulates the saturated stiffness by `sigma` and clamps the displacement to
    /// the velocity bound of the regulated gains.
    pub fn command(&self, x: &DVector<f64>, goal: &DVector<f64>, sigma: f64) -> Result<ControlCommand> {
        let k_scale = regulation_factor(sigma, self.limits.sigma_tr);
        let gains = if k_scale == 1.0 {
            self.saturated.clone()
        } else {
            self.saturated.scaled(k_scale)?
        };
        let delta_x = saturate_displacement(&(goal - x), &gains, &self.limits)?;
        Ok(ControlCommand {
            delta_x,
            gains,
            k_scale,
        })
    }
}
