//! The nonlinear stochastic observer on SE2(3).
//!
//! Each step runs a prediction with the IMU input and a correction built from
//! the landmark aggregates:
//!
//! ```text
//! Xhat+      = Xhat exp(U dt),            U = u([w_m]x, 0, a_m, 1)
//! Xhat_next  = exp(-W dt) Xhat+,          W = u([w_O]x, w_V, w_a, 1)
//! ```
//!
//! with
//!
//! ```text
//! w_O = -k_w (d + 1) Y - (d + 2) / (4 (d + 1)) Rhat diag(Rhat^T Y) sigma
//! w_V = [p_c]x w_O - k_v e
//! w_a = -g - k_a e
//! k_R = gamma_sigma (d + 2) / 8 exp(d)
//! ```
//!
//! where `Y = upsilon(M R~)`, `d = |M R~|_I` and `e = R~^T P~_e`. The
//! covariance-bound estimate `sigma` and, when gravity is not known, the
//! gravity estimate `g` are integrated alongside.
//!
//! Between landmark epochs there is nothing to correct with; the step then
//! applies only the gravity part of `W` and holds `sigma` and `g`.

use crate::error::{Error, Result};
use crate::lie::{
    dist_so3, expm5, nav_error, rodrigues_exp, skew, so3_integral_1, so3_integral_2, upsilon, Mat5,
    NavState, Rotation, TangentElement, Vec3,
};
use crate::measurement::{aggregate, LandmarkMap, LandmarkObservation, MeasurementSummary};
use crate::quat::{quat_to_rot, Quat};

/// Steps between re-orthonormalizations of the attitude estimate.
pub const RENORMALIZE_EVERY: u64 = 1000;

/// Tolerance on `|Tr(R~) + 1|` for a half-turn attitude error.
pub const UNSTABLE_SET_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gains {
    pub k_w: f64,
    pub k_v: f64,
    pub k_a: f64,
    pub gamma_sigma: f64,
    pub k_sigma: f64,
    pub gamma_g: f64,
    pub mu: f64,
}

impl Default for Gains {
    fn default() -> Self {
        Self {
            k_w: 3.0,
            k_v: 10.0,
            k_a: 10.0,
            gamma_sigma: 3.0,
            k_sigma: 0.1,
            gamma_g: 2.0,
            mu: 1.0,
        }
    }
}

impl Gains {
    pub fn validate(&self) -> Result<()> {
        for (key, value) in [
            ("k_w", self.k_w),
            ("k_v", self.k_v),
            ("k_a", self.k_a),
            ("gamma_sigma", self.gamma_sigma),
            ("k_sigma", self.k_sigma),
            ("gamma_g", self.gamma_g),
            ("mu", self.mu),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::validation(
                    key,
                    format!("must be positive, got {value}"),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GravityMode {
    /// Gravity vector supplied by the user and never adapted.
    Known(Vec3),
    Adaptive,
}

impl GravityMode {
    pub fn is_adaptive(&self) -> bool {
        matches!(self, GravityMode::Adaptive)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObserverState {
    pub xhat: NavState,
    pub sigma_hat: Vec3,
    pub g_hat: Vec3,
    pub mode: GravityMode,
    /// Steps taken so far; drives periodic re-orthonormalization.
    pub steps: u64,
}

impl ObserverState {
    /// In known-gravity mode `g_init` is ignored and `g_hat` is the known vector.
    pub fn new(xhat: NavState, mode: GravityMode, sigma_init: Vec3, g_init: Vec3) -> Self {
        let g_hat = match mode {
            GravityMode::Known(g) => g,
            GravityMode::Adaptive => g_init,
        };
        Self {
            xhat,
            sigma_hat: sigma_init,
            g_hat,
            mode,
            steps: 0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.xhat.is_finite()
            && self.sigma_hat.iter().all(|x| x.is_finite())
            && self.g_hat.iter().all(|x| x.is_finite())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Correction {
    pub w_omega: Vec3,
    pub w_v: Vec3,
    pub w_a: Vec3,
    pub k_r: f64,
}

impl Correction {
    /// `W = u([w_O]x, w_V, w_a, 1)`.
    pub fn to_tangent(&self) -> TangentElement {
        TangentElement::new(self.w_omega, self.w_v, self.w_a, 1.0)
    }
}

/// Correction terms from one epoch's aggregates, evaluated at attitude `rhat`.
pub fn compute_corrections(
    summary: &MeasurementSummary,
    state: &ObserverState,
    rhat: &Rotation,
    gains: &Gains,
) -> Correction {
    let d = summary.dist_m;
    let y = upsilon(&summary.m_rtilde);
    let z = rhat.transpose() * y;
    let adaptive = rhat * z.component_mul(&state.sigma_hat);
    let w_omega = y * (-gains.k_w * (d + 1.0)) - adaptive * (0.25 * (d + 2.0) / (d + 1.0));
    let w_v = skew(&summary.p_c) * w_omega - summary.rtp_eps * gains.k_v;
    let w_a = -state.g_hat - summary.rtp_eps * gains.k_a;
    let k_r = gains.gamma_sigma * (d + 2.0) / 8.0 * d.exp();
    Correction {
        w_omega,
        w_v,
        w_a,
        k_r,
    }
}

/// Euler step of the covariance-bound estimate.
pub fn sigma_step(
    state: &ObserverState,
    rhat: &Rotation,
    summary: &MeasurementSummary,
    corr: &Correction,
    gains: &Gains,
    dt: f64,
) -> Vec3 {
    let z = rhat.transpose() * upsilon(&summary.m_rtilde);
    state.sigma_hat + z.component_mul(&z) * (dt * corr.k_r)
        - state.sigma_hat * (dt * gains.k_sigma * gains.gamma_sigma)
}

/// Euler step of the gravity estimate. Only meaningful in adaptive mode.
pub fn gravity_step(
    state: &ObserverState,
    corr: &Correction,
    summary: &MeasurementSummary,
    gains: &Gains,
    dt: f64,
) -> Result<Vec3> {
    if !state.mode.is_adaptive() {
        return Err(Error::ModeError);
    }
    let drift = -(skew(&corr.w_omega) * state.g_hat) + summary.rtp_eps * (gains.mu * gains.gamma_g);
    Ok(state.g_hat + drift * dt)
}

/// Where the landmark residual is evaluated within a step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum InnovationPoint {
    /// At the IMU-predicted position. Gravity only enters through the
    /// correction, so an exact estimate sees a residual of `g dt^2 / 2` and
    /// settles at an `O(dt)` offset instead of staying exact.
    Predicted,
    /// At the predicted position plus the gravity displacement `g dt^2 / 2`
    /// the correction is about to apply. Exact estimates stay exact.
    #[default]
    GravityCompensated,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Observer {
    pub gains: Gains,
    pub innovation: InnovationPoint,
    /// Flips the sign of `w_O`. Exists so the self-test can prove that its
    /// convergence check catches a broken attitude law.
    pub invert_attitude_correction: bool,
}

/// Everything a step derives from the predicted attitude and position.
struct EpochUpdate {
    w: TangentElement,
    sigma_hat: Vec3,
    g_hat: Vec3,
}

impl Observer {
    pub fn new(gains: Gains) -> Self {
        Self {
            gains,
            ..Self::default()
        }
    }

    fn epoch_update(
        &self,
        state: &ObserverState,
        rhat: &Rotation,
        phat: &Vec3,
        map: &LandmarkMap,
        obs: Option<&LandmarkObservation>,
        dt: f64,
    ) -> Result<EpochUpdate> {
        let Some(obs) = obs else {
            return Ok(EpochUpdate {
                w: TangentElement::gravity(&state.g_hat),
                sigma_hat: state.sigma_hat,
                g_hat: state.g_hat,
            });
        };
        let phat = match self.innovation {
            InnovationPoint::Predicted => *phat,
            InnovationPoint::GravityCompensated => phat + state.g_hat * (0.5 * dt * dt),
        };
        let summary = aggregate(map, obs, rhat, &phat)?;
        let mut corr = compute_corrections(&summary, state, rhat, &self.gains);
        if self.invert_attitude_correction {
            corr.w_omega = -corr.w_omega;
            corr.w_v = skew(&summary.p_c) * corr.w_omega - summary.rtp_eps * self.gains.k_v;
        }
        let g_hat = match state.mode {
            GravityMode::Known(g) => g,
            GravityMode::Adaptive => gravity_step(state, &corr, &summary, &self.gains, dt)?,
        };
        corr.w_a = -g_hat - summary.rtp_eps * self.gains.k_a;
        Ok(EpochUpdate {
            w: corr.to_tangent(),
            sigma_hat: sigma_step(state, rhat, &summary, &corr, &self.gains, dt),
            g_hat,
        })
    }

    /// One discrete step with IMU input `(omega_m, a_m)` held over `dt`.
    ///
    /// `obs` is the landmark epoch at the end of the interval, if any.
    pub fn step(
        &self,
        state: &ObserverState,
        omega_m: &Vec3,
        a_m: &Vec3,
        map: &LandmarkMap,
        obs: Option<&LandmarkObservation>,
        dt: f64,
    ) -> Result<ObserverState> {
        // the predicted matrix is not itself in SE2(3): its last row picks up
        // dt from the velocity-to-position coupling, which the correction
        // exponential cancels again
        let predicted: Mat5 =
            state.xhat.to_matrix() * expm5(&TangentElement::imu(omega_m, a_m), dt);
        let rhat = Rotation::from_matrix_unchecked(predicted.fixed_view::<3, 3>(0, 0).into_owned());
        let phat: Vec3 = predicted.fixed_view::<3, 1>(0, 3).into_owned();

        let update = self.epoch_update(state, &rhat, &phat, map, obs, dt)?;
        let corrected = expm5(&update.w, -dt) * predicted;

        let steps = state.steps + 1;
        let mut r =
            Rotation::from_matrix_unchecked(corrected.fixed_view::<3, 3>(0, 0).into_owned());
        if steps % RENORMALIZE_EVERY == 0 {
            r = r.renormalized();
        }
        let next = ObserverState {
            xhat: NavState::new(
                r,
                corrected.fixed_view::<3, 1>(0, 3).into_owned(),
                corrected.fixed_view::<3, 1>(0, 4).into_owned(),
            ),
            sigma_hat: update.sigma_hat,
            g_hat: update.g_hat,
            mode: state.mode,
            steps,
        };
        if !next.is_finite() {
            return Err(Error::NonFiniteState);
        }
        Ok(next)
    }

    /// The same step carried out on a unit-quaternion attitude, with the
    /// position and velocity blocks integrated in closed form.
    pub fn step_quaternion(
        &self,
        state: &QuatObserverState,
        omega_m: &Vec3,
        a_m: &Vec3,
        map: &LandmarkMap,
        obs: Option<&LandmarkObservation>,
        dt: f64,
    ) -> Result<QuatObserverState> {
        let r = quat_to_rot(&state.q)?;
        let phi = omega_m * dt;
        let q_pred = state.q * Quat::exp(&phi);
        let v_pred = state.v + r * (so3_integral_1(&phi) * a_m * dt);
        let p_pred = state.p + state.v * dt + r * (so3_integral_2(&phi) * a_m * (dt * dt));
        let r_pred = quat_to_rot(&q_pred)?;

        let as_matrix = state.as_matrix_state();
        let update = self.epoch_update(&as_matrix, &r_pred, &p_pred, map, obs, dt)?;

        let w = &update.w;
        let psi = w.omega * -dt;
        let j1 = so3_integral_1(&psi);
        let e_v = j1 * (w.acol * -dt);
        let e_p = j1 * (w.vcol * -dt) - so3_integral_2(&psi) * (w.acol * -dt) * dt;
        let a = rodrigues_exp(&w.omega, -dt);

        let next = QuatObserverState {
            q: Quat::exp(&psi) * q_pred,
            p: a * p_pred + e_p + e_v * dt,
            v: a * v_pred + e_v,
            sigma_hat: update.sigma_hat,
            g_hat: update.g_hat,
            mode: state.mode,
        };
        if !next.is_finite() {
            return Err(Error::NonFiniteState);
        }
        Ok(next)
    }
}

/// Observer state with the attitude carried as a unit quaternion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuatObserverState {
    pub q: Quat,
    pub p: Vec3,
    pub v: Vec3,
    pub sigma_hat: Vec3,
    pub g_hat: Vec3,
    pub mode: GravityMode,
}

impl QuatObserverState {
    pub fn from_matrix_state(state: &ObserverState) -> Self {
        Self {
            q: crate::quat::rot_to_quat(&state.xhat.r),
            p: state.xhat.p,
            v: state.xhat.v,
            sigma_hat: state.sigma_hat,
            g_hat: state.g_hat,
            mode: state.mode,
        }
    }

    pub fn rotation(&self) -> Rotation {
        // products are renormalized, so the unit check cannot fail here
        quat_to_rot(&self.q)
            .unwrap_or_else(|_| quat_to_rot(&self.q.normalized()).expect("normalized"))
    }

    pub fn as_matrix_state(&self) -> ObserverState {
        ObserverState {
            xhat: NavState::new(self.rotation(), self.p, self.v),
            sigma_hat: self.sigma_hat,
            g_hat: self.g_hat,
            mode: self.mode,
            steps: 0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.q.q0.is_finite()
            && self.q.q.iter().all(|x| x.is_finite())
            && self.p.iter().all(|x| x.is_finite())
            && self.v.iter().all(|x| x.is_finite())
            && self.sigma_hat.iter().all(|x| x.is_finite())
            && self.g_hat.iter().all(|x| x.is_finite())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Metrics {
    /// `|R Rhat^T|_I`.
    pub attitude: f64,
    pub position: f64,
    pub velocity: f64,
    pub gravity: f64,
}

impl Metrics {
    pub fn as_array(&self) -> [f64; 4] {
        [self.attitude, self.position, self.velocity, self.gravity]
    }
}

pub fn error_metrics(x_true: &NavState, state: &ObserverState, g_true: &Vec3) -> Metrics {
    Metrics {
        attitude: dist_so3(&(x_true.r * state.xhat.r.transpose())),
        position: (x_true.p - state.xhat.p).norm(),
        velocity: (x_true.v - state.xhat.v).norm(),
        gravity: (g_true - state.g_hat).norm(),
    }
}

/// Whether an attitude error is a half turn, from which the attitude
/// correction has no direction to push.
pub fn in_unstable_set(r_tilde: &Rotation) -> bool {
    (r_tilde.trace() + 1.0).abs() <= UNSTABLE_SET_TOL
}

/// Attitude error `R Rhat^T` of an estimate.
pub fn attitude_error(x_true: &NavState, xhat: &NavState) -> Rotation {
    nav_error(x_true, xhat).r
}
