//! Kinematic bicycle model, its frozen linearization, zero-order-hold
//! discretization and the horizon-lifted prediction used by the decision layer.

use nalgebra::{
    DMatrix, DVector, Matrix2, Matrix4, Matrix4x2, Matrix6, Matrix6x2, SMatrix, Vector4, Vector6,
};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Steering magnitudes at or above this are rejected (tan blows up at pi/2).
const STEERING_DOMAIN: f64 = PI / 2.0 - 1e-3;

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(angle: f64) -> f64 {
    let mut a = angle % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Vehicle state `[vx, phi, X, Y]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    /// Longitudinal velocity (m/s).
    pub vx: f64,
    /// Yaw angle (rad).
    pub phi: f64,
    /// Global x-position (m).
    pub x: f64,
    /// Global y-position (m).
    pub y: f64,
}

impl VehicleState {
    pub fn new(vx: f64, phi: f64, x: f64, y: f64) -> Self {
        Self { vx, phi, x, y }
    }

    pub fn to_vector(&self) -> Vector4<f64> {
        Vector4::new(self.vx, self.phi, self.x, self.y)
    }

    pub fn from_vector(v: &Vector4<f64>) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn is_finite(&self) -> bool {
        self.vx.is_finite() && self.phi.is_finite() && self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance_to(&self, other: &VehicleState) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Control vector `[ax, delta_f]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    /// Longitudinal acceleration (m/s^2).
    pub ax: f64,
    /// Front-wheel steering angle (rad).
    pub delta_f: f64,
}

impl ControlInput {
    pub fn new(ax: f64, delta_f: f64) -> Self {
        Self { ax, delta_f }
    }

    pub fn to_vector(&self) -> nalgebra::Vector2<f64> {
        nalgebra::Vector2::new(self.ax, self.delta_f)
    }

    pub fn apply(&self, delta: ControlDelta) -> ControlInput {
        ControlInput::new(self.ax + delta.d_ax, self.delta_f + delta.d_delta_f)
    }
}

/// Per-step control increment `[d_ax, d_delta_f]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlDelta {
    pub d_ax: f64,
    pub d_delta_f: f64,
}

impl ControlDelta {
    pub fn new(d_ax: f64, d_delta_f: f64) -> Self {
        Self { d_ax, d_delta_f }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehicleParameters {
    /// Front wheelbase (m).
    pub lf: f64,
    /// Rear wheelbase (m).
    pub lr: f64,
    /// Length-related safety coefficient used by the gap terms (m).
    pub lv: f64,
}

impl Default for VehicleParameters {
    fn default() -> Self {
        Self {
            lf: 1.5,
            lr: 1.5,
            lv: 5.0,
        }
    }
}

impl VehicleParameters {
    pub fn validate(&self) -> Result<()> {
        if !(self.lf > 0.0 && self.lr > 0.0 && self.lv > 0.0) {
            return Err(Error::Config(format!(
                "vehicle parameters must be positive (lf={}, lr={}, lv={})",
                self.lf, self.lr, self.lv
            )));
        }
        Ok(())
    }

    pub fn wheelbase(&self) -> f64 {
        self.lf + self.lr
    }

    /// Sideslip angle at the reference point for a given steering angle.
    pub fn sideslip(&self, delta_f: f64) -> f64 {
        (self.lr / self.wheelbase() * delta_f.tan()).atan()
    }

    /// Kinematic lateral acceleration `vx^2 tan(beta) / lr`.
    pub fn lateral_acceleration(&self, vx: f64, delta_f: f64) -> f64 {
        vx * vx * self.sideslip(delta_f).tan() / self.lr
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HorizonConfig {
    /// Sampling time (s).
    pub dt: f64,
    /// Prediction horizon (steps).
    pub np: usize,
    /// Control horizon (steps).
    pub nc: usize,
}

impl Default for HorizonConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            np: 10,
            nc: 2,
        }
    }
}

impl HorizonConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!(
                "sampling time must be positive, got {}",
                self.dt
            )));
        }
        if self.nc < 1 {
            return Err(Error::Config("control horizon must be at least 1".into()));
        }
        // a single-step lift (np = nc = 1) is the one degenerate case kept
        if self.np < self.nc || (self.np == self.nc && self.np != 1) {
            return Err(Error::Config(format!(
                "prediction horizon ({}) must exceed control horizon ({})",
                self.np, self.nc
            )));
        }
        Ok(())
    }
}

/// `xi = [x; u(k-1)]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentedState(pub Vector6<f64>);

impl AugmentedState {
    pub fn new(state: &VehicleState, prev: &ControlInput) -> Self {
        AugmentedState(Vector6::new(
            state.vx,
            state.phi,
            state.x,
            state.y,
            prev.ax,
            prev.delta_f,
        ))
    }

    pub fn state(&self) -> VehicleState {
        VehicleState::new(self.0[0], self.0[1], self.0[2], self.0[3])
    }

    pub fn control(&self) -> ControlInput {
        ControlInput::new(self.0[4], self.0[5])
    }
}

/// Block matrices of the incremental augmented system.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedModel {
    pub a_hat: Matrix6<f64>,
    pub b_hat: Matrix6x2<f64>,
    pub c_hat: SMatrix<f64, 4, 6>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMatrices {
    pub a_k: Matrix4<f64>,
    pub b_k: Matrix4x2<f64>,
    pub a_hat: Matrix6<f64>,
    pub b_hat: Matrix6x2<f64>,
    pub c_hat: SMatrix<f64, 4, 6>,
    /// `(4 Np) x 6` free-response matrix.
    pub c_bar: DMatrix<f64>,
    /// `(4 Np) x (2 Nc)` forced-response matrix.
    pub d_bar: DMatrix<f64>,
    pub horizon: HorizonConfig,
}

fn check_finite(x: &VehicleState, u: &ControlInput) -> Result<()> {
    if !x.is_finite() || !u.ax.is_finite() || !u.delta_f.is_finite() {
        return Err(Error::InvalidInput(format!(
            "non-finite state or control: {x:?} {u:?}"
        )));
    }
    if u.delta_f.abs() >= STEERING_DOMAIN {
        return Err(Error::SteeringDomain(u.delta_f));
    }
    Ok(())
}

/// Right-hand side of the kinematic bicycle model.
pub fn dynamics_rhs(
    x: &VehicleState,
    u: &ControlInput,
    params: &VehicleParameters,
) -> Result<Vector4<f64>> {
    check_finite(x, u)?;
    let beta = params.sideslip(u.delta_f);
    Ok(Vector4::new(
        u.ax,
        x.vx * beta.tan() / params.lr,
        x.vx * (x.phi + beta).cos() / beta.cos(),
        x.vx * (x.phi + beta).sin() / beta.cos(),
    ))
}

/// Analytic Jacobians `(df/dx, df/du)` at `(x, u)`.
pub fn linearize(
    x: &VehicleState,
    u: &ControlInput,
    params: &VehicleParameters,
) -> Result<(Matrix4<f64>, Matrix4x2<f64>)> {
    check_finite(x, u)?;
    let k = params.lr / params.wheelbase();
    let tan_beta = k * u.delta_f.tan();
    // d(tan beta)/d(delta_f)
    let dtan = k / u.delta_f.cos().powi(2);
    let (s, c) = x.phi.sin_cos();
    // cos(phi+beta)/cos(beta) = cos(phi) - tan(beta) sin(phi), likewise for sin
    let heading_x = c - tan_beta * s;
    let heading_y = s + tan_beta * c;

    let mut a = Matrix4::zeros();
    a[(1, 0)] = tan_beta / params.lr;
    a[(2, 0)] = heading_x;
    a[(2, 1)] = -x.vx * heading_y;
    a[(3, 0)] = heading_y;
    a[(3, 1)] = x.vx * heading_x;

    let mut b = Matrix4x2::zeros();
    b[(0, 0)] = 1.0;
    b[(1, 1)] = x.vx * dtan / params.lr;
    b[(2, 1)] = -x.vx * s * dtan;
    b[(3, 1)] = x.vx * c * dtan;
    Ok((a, b))
}

/// Matrix exponential by scaling and squaring with a degree-12 Taylor series.
pub fn expm<const N: usize>(m: &SMatrix<f64, N, N>) -> SMatrix<f64, N, N> {
    let norm = m.column_iter().map(|c| c.abs().sum()).fold(0.0, f64::max);
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let scaled = m / 2f64.powi(squarings);
    let mut result = SMatrix::<f64, N, N>::identity();
    let mut term = SMatrix::<f64, N, N>::identity();
    for order in 1..=12 {
        term = term * scaled / order as f64;
        result += term;
    }
    for _ in 0..squarings {
        result = result * result;
    }
    result
}

/// Zero-order-hold discretization `A_k = exp(A dt)`, `B_k = int_0^dt exp(A t) B dt`.
pub fn discretize(
    a_t: &Matrix4<f64>,
    b_t: &Matrix4x2<f64>,
    dt: f64,
) -> Result<(Matrix4<f64>, Matrix4x2<f64>)> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "sampling time must be positive, got {dt}"
        )));
    }
    if a_t.iter().chain(b_t.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "non-finite continuous-time matrices".into(),
        ));
    }
    // exp([[A, B], [0, 0]] dt) = [[A_k, B_k], [0, I]]
    let mut block = Matrix6::zeros();
    block.fixed_view_mut::<4, 4>(0, 0).copy_from(&(a_t * dt));
    block.fixed_view_mut::<4, 2>(0, 4).copy_from(&(b_t * dt));
    let e = expm(&block);
    Ok((
        e.fixed_view::<4, 4>(0, 0).into_owned(),
        e.fixed_view::<4, 2>(0, 4).into_owned(),
    ))
}

/// Builds the incremental augmented system.
pub fn augment(a_k: &Matrix4<f64>, b_k: &Matrix4x2<f64>) -> Result<AugmentedModel> {
    if a_k.iter().chain(b_k.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite discrete matrices".into()));
    }
    let mut a_hat = Matrix6::zeros();
    a_hat.fixed_view_mut::<4, 4>(0, 0).copy_from(a_k);
    a_hat.fixed_view_mut::<4, 2>(0, 4).copy_from(b_k);
    a_hat
        .fixed_view_mut::<2, 2>(4, 4)
        .copy_from(&Matrix2::identity());

    let mut b_hat = Matrix6x2::zeros();
    b_hat.fixed_view_mut::<4, 2>(0, 0).copy_from(b_k);
    b_hat
        .fixed_view_mut::<2, 2>(4, 0)
        .copy_from(&Matrix2::identity());

    let mut c_hat = SMatrix::<f64, 4, 6>::zeros();
    c_hat
        .fixed_view_mut::<4, 4>(0, 0)
        .copy_from(&Matrix4::identity());
    Ok(AugmentedModel {
        a_hat,
        b_hat,
        c_hat,
    })
}

/// Lifts the augmented model over the horizon with frozen matrices.
pub fn build_prediction(
    model: &AugmentedModel,
    horizon: HorizonConfig,
) -> Result<PredictionMatrices> {
    horizon.validate()?;
    let (np, nc) = (horizon.np, horizon.nc);
    let mut c_bar = DMatrix::zeros(4 * np, 6);
    let mut d_bar = DMatrix::zeros(4 * np, 2 * nc);

    // c_a_pow[j] = C_hat A_hat^j, j = 0..=np
    let mut c_a_pow = Vec::with_capacity(np + 1);
    let mut acc = model.c_hat;
    c_a_pow.push(acc);
    for _ in 0..np {
        acc *= model.a_hat;
        c_a_pow.push(acc);
    }
    for p in 1..=np {
        c_bar
            .view_mut((4 * (p - 1), 0), (4, 6))
            .copy_from(&c_a_pow[p]);
        for q in 1..=nc.min(p) {
            let block = c_a_pow[p - q] * model.b_hat;
            d_bar
                .view_mut((4 * (p - 1), 2 * (q - 1)), (4, 2))
                .copy_from(&block);
        }
    }
    Ok(PredictionMatrices {
        a_k: model.a_hat.fixed_view::<4, 4>(0, 0).into_owned(),
        b_k: model.a_hat.fixed_view::<4, 2>(0, 4).into_owned(),
        a_hat: model.a_hat,
        b_hat: model.b_hat,
        c_hat: model.c_hat,
        c_bar,
        d_bar,
        horizon,
    })
}

impl PredictionMatrices {
    /// Linearize at `(x, u)`, discretize, augment and lift in one go.
    pub fn at(
        x: &VehicleState,
        u: &ControlInput,
        params: &VehicleParameters,
        horizon: HorizonConfig,
    ) -> Result<Self> {
        let (a_t, b_t) = linearize(x, u, params)?;
        let (a_k, b_k) = discretize(&a_t, &b_t, horizon.dt)?;
        build_prediction(&augment(&a_k, &b_k)?, horizon)
    }

    /// Raw stacked output `C_bar xi + D_bar du`.
    pub fn lifted_output(
        &self,
        xi0: &AugmentedState,
        du_seq: &[ControlDelta],
    ) -> Result<DVector<f64>> {
        if du_seq.len() != self.horizon.nc {
            return Err(Error::InvalidInput(format!(
                "expected {} control deltas, got {}",
                self.horizon.nc,
                du_seq.len()
            )));
        }
        let du = DVector::from_iterator(
            2 * du_seq.len(),
            du_seq.iter().flat_map(|d| [d.d_ax, d.d_delta_f]),
        );
        let xi = DVector::from_column_slice(xi0.0.as_slice());
        Ok(&self.c_bar * xi + &self.d_bar * du)
    }
}

/// Predicted outputs for steps `k+1 ..= k+Np`; deltas after `Nc` are zero.
pub fn predict_trajectory(
    xi0: &AugmentedState,
    du_seq: &[ControlDelta],
    mats: &PredictionMatrices,
) -> Result<Vec<VehicleState>> {
    let out = mats.lifted_output(xi0, du_seq)?;
    Ok(out
        .as_slice()
        .chunks_exact(4)
        .map(|c| VehicleState::new(c[0], wrap_angle(c[1]), c[2], c[3]))
        .collect())
}

/// Plant right-hand side: reversing is not modeled, so braking at standstill holds.
fn plant_rhs(
    x: &Vector4<f64>,
    u: &ControlInput,
    params: &VehicleParameters,
) -> Result<Vector4<f64>> {
    let vx = x[0].max(0.0);
    let ax = if x[0] <= 0.0 && u.ax < 0.0 { 0.0 } else { u.ax };
    let state = VehicleState::new(vx, x[1], x[2], x[3]);
    let mut f = dynamics_rhs(&state, &ControlInput::new(ax, u.delta_f), params)?;
    f[0] = ax;
    Ok(f)
}

/// Advances the nonlinear model one step with four RK4 substeps.
pub fn integrate_plant(
    x: &VehicleState,
    u: &ControlInput,
    params: &VehicleParameters,
    dt: f64,
) -> Result<VehicleState> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "sampling time must be positive, got {dt}"
        )));
    }
    check_finite(x, u)?;
    const SUBSTEPS: usize = 4;
    let h = dt / SUBSTEPS as f64;
    let mut s = x.to_vector();
    for _ in 0..SUBSTEPS {
        let k1 = plant_rhs(&s, u, params)?;
        let k2 = plant_rhs(&(s + k1 * (h / 2.0)), u, params)?;
        let k3 = plant_rhs(&(s + k2 * (h / 2.0)), u, params)?;
        let k4 = plant_rhs(&(s + k3 * h), u, params)?;
        s += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    Ok(VehicleState::new(
        s[0].max(0.0),
        wrap_angle(s[1]),
        s[2],
        s[3],
    ))
}
