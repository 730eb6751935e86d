//! Per-tracklet motion filters: a CenterPoint-style constant-velocity point
//! tracker and a ground-plane Kalman filter whose state is position,
//! velocity, and acceleration in x and y. Height (z), box extent, and yaw
//! are passed through from the latest matched detection for both filters.

use nalgebra::{Matrix2, Matrix2x6, Matrix6, Matrix6x2, Vector2, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assoc::AssocError;
use crate::domain::Detection;

/// Which motion filter a tracker instantiates per tracklet.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    PointTracker,
    KalmanCvca,
}

#[derive(Debug, Error, PartialEq)]
pub enum FilterError {
    #[error("kalman update: {0}")]
    Singular(#[from] AssocError),
}

/// Constant-velocity point tracker. Velocity is re-estimated from the
/// displacement between consecutive matched detections.
#[derive(Clone, Debug, PartialEq)]
pub struct PointTrackerState {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// Meters per frame; updated only on match.
    pub vx: f64,
    pub vy: f64,
    last_match_x: f64,
    last_match_y: f64,
}

impl PointTrackerState {
    pub fn from_detection(d: &Detection) -> Self {
        PointTrackerState {
            x: d.cx,
            y: d.cy,
            z: d.cz,
            vx: 0.0,
            vy: 0.0,
            last_match_x: d.cx,
            last_match_y: d.cy,
        }
    }

    /// Extrapolates the position by `dt` frames.
    pub fn predict(&mut self, dt: u32) {
        self.x += self.vx * dt as f64;
        self.y += self.vy * dt as f64;
    }

    /// Snaps to the matched detection and re-estimates velocity from the
    /// displacement since the previous match, `dt` frames ago.
    pub fn update(&mut self, d: &Detection, dt: u32) {
        let dt = dt.max(1) as f64;
        self.vx = (d.cx - self.last_match_x) / dt;
        self.vy = (d.cy - self.last_match_y) / dt;
        self.x = d.cx;
        self.y = d.cy;
        self.z = d.cz;
        self.last_match_x = d.cx;
        self.last_match_y = d.cy;
    }
}

/// Kalman filter noise parameters. The process noise follows a discrete
/// white-jerk model; the measurement noise is isotropic on (x, y).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KalmanParams {
    /// Jerk sigma, m/frame^3.
    pub jerk_sigma: f64,
    /// Position measurement variance, m^2.
    pub measurement_noise: f64,
}

impl Default for KalmanParams {
    fn default() -> Self {
        KalmanParams {
            jerk_sigma: 1.0,
            measurement_noise: 0.25,
        }
    }
}

/// Ground-plane constant-acceleration Kalman filter. State mean is
/// `(x, y, vx, vy, ax, ay)`; z is tracked as a pass-through.
#[derive(Clone, Debug, PartialEq)]
pub struct KalmanState {
    pub mean: Vector6<f64>,
    pub cov: Matrix6<f64>,
    pub z: f64,
    params: KalmanParams,
}

/// Initial covariance: unit variance on the observed position, high
/// uncertainty on the unobserved velocity and acceleration.
fn initial_covariance() -> Matrix6<f64> {
    Matrix6::from_diagonal(&Vector6::new(1.0, 1.0, 10.0, 10.0, 10.0, 10.0))
}

fn transition(dt: f64) -> Matrix6<f64> {
    let h = 0.5 * dt * dt;
    #[rustfmt::skip]
    let f = Matrix6::new(
        1.0, 0.0, dt,  0.0, h,   0.0,
        0.0, 1.0, 0.0, dt,  0.0, h,
        0.0, 0.0, 1.0, 0.0, dt,  0.0,
        0.0, 0.0, 0.0, 1.0, 0.0, dt,
        0.0, 0.0, 0.0, 0.0, 1.0, 0.0,
        0.0, 0.0, 0.0, 0.0, 0.0, 1.0,
    );
    f
}

/// Discrete white-jerk process noise: per axis Q = sigma^2 * g g^T with
/// g = (dt^3/6, dt^2/2, dt) on the (position, velocity, acceleration) block.
fn process_noise(dt: f64, jerk_sigma: f64) -> Matrix6<f64> {
    let s2 = jerk_sigma * jerk_sigma;
    let g = [dt * dt * dt / 6.0, dt * dt / 2.0, dt];
    let mut q = Matrix6::zeros();
    for axis in 0..2 {
        for a in 0..3 {
            for b in 0..3 {
                q[(axis + 2 * a, axis + 2 * b)] = s2 * g[a] * g[b];
            }
        }
    }
    q
}

fn measurement_matrix() -> Matrix2x6<f64> {
    let mut h = Matrix2x6::zeros();
    h[(0, 0)] = 1.0;
    h[(1, 1)] = 1.0;
    h
}

impl KalmanState {
    pub fn from_detection(d: &Detection, params: KalmanParams) -> Self {
        KalmanState {
            mean: Vector6::new(d.cx, d.cy, 0.0, 0.0, 0.0, 0.0),
            cov: initial_covariance(),
            z: d.cz,
            params,
        }
    }

    pub fn predict(&mut self, dt: u32) {
        let dt = dt as f64;
        let f = transition(dt);
        self.mean = f * self.mean;
        self.cov = f * self.cov * f.transpose() + process_noise(dt, self.params.jerk_sigma);
        self.symmetrize();
    }

    /// Innovation covariance of the current (post-predict) state:
    /// `S = H P H^T + R`.
    pub fn innovation_covariance(&self) -> Matrix2<f64> {
        let h = measurement_matrix();
        let r = Matrix2::identity() * self.params.measurement_noise;
        h * self.cov * h.transpose() + r
    }

    /// Standard measurement update on (x, y), Joseph form to keep the
    /// covariance symmetric positive-semidefinite.
    pub fn update(&mut self, d: &Detection) -> Result<(), FilterError> {
        let h = measurement_matrix();
        let r = Matrix2::identity() * self.params.measurement_noise;
        let s = self.innovation_covariance();
        let det = s.determinant();
        let scale = s[(0, 0)].abs().max(s[(1, 1)].abs());
        if scale == 0.0 || det.abs() <= 1e-12 * scale * scale {
            return Err(FilterError::Singular(AssocError::SingularCovariance(det)));
        }
        let s_inv = s
            .try_inverse()
            .ok_or(FilterError::Singular(AssocError::SingularCovariance(det)))?;
        let gain: Matrix6x2<f64> = self.cov * h.transpose() * s_inv;
        let residual = Vector2::new(d.cx, d.cy) - h * self.mean;
        self.mean += gain * residual;
        let ikh = Matrix6::identity() - gain * h;
        self.cov = ikh * self.cov * ikh.transpose() + gain * r * gain.transpose();
        self.symmetrize();
        self.z = d.cz;
        Ok(())
    }

    fn symmetrize(&mut self) {
        self.cov = (self.cov + self.cov.transpose()) * 0.5;
    }
}

/// Filter state owned by one tracklet.
#[derive(Clone, Debug, PartialEq)]
pub enum FilterState {
    Point(PointTrackerState),
    Kalman(Box<KalmanState>),
}

impl FilterState {
    pub fn from_detection(kind: FilterKind, d: &Detection, params: KalmanParams) -> Self {
        match kind {
            FilterKind::PointTracker => FilterState::Point(PointTrackerState::from_detection(d)),
            FilterKind::KalmanCvca => {
                FilterState::Kalman(Box::new(KalmanState::from_detection(d, params)))
            }
        }
    }

    pub fn predict(&mut self, dt: u32) {
        match self {
            FilterState::Point(s) => s.predict(dt),
            FilterState::Kalman(s) => s.predict(dt),
        }
    }

    /// Measurement update with the matched detection; `dt` is the number of
    /// frames since the previous matched update.
    pub fn update(&mut self, d: &Detection, dt: u32) -> Result<(), FilterError> {
        match self {
            FilterState::Point(s) => {
                s.update(d, dt);
                Ok(())
            }
            FilterState::Kalman(s) => s.update(d),
        }
    }

    pub fn position(&self) -> [f64; 3] {
        match self {
            FilterState::Point(s) => [s.x, s.y, s.z],
            FilterState::Kalman(s) => [s.mean[0], s.mean[1], s.z],
        }
    }

    pub fn innovation_covariance(&self) -> Option<Matrix2<f64>> {
        match self {
            FilterState::Point(_) => None,
            FilterState::Kalman(s) => Some(s.innovation_covariance()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn det_at(x: f64, y: f64) -> Detection {
        Detection {
            frame: 0,
            class_label: "car".into(),
            cx: x,
            cy: y,
            cz: 0.8,
            length: 4.0,
            width: 2.0,
            height: 1.6,
            yaw: 0.0,
            score: 0.9,
        }
    }

    #[test]
    fn point_predict_extrapolates() {
        let mut s = PointTrackerState::from_detection(&det_at(0.0, 0.0));
        s.vx = 1.0;
        s.vy = 2.0;
        s.predict(1);
        assert_abs_diff_eq!(s.x, 1.0);
        assert_abs_diff_eq!(s.y, 2.0);

        let mut s = PointTrackerState::from_detection(&det_at(5.0, 5.0));
        s.predict(1);
        assert_abs_diff_eq!(s.x, 5.0);
        assert_abs_diff_eq!(s.y, 5.0);

        let mut s = PointTrackerState::from_detection(&det_at(1.0, 1.0));
        s.vx = -1.0;
        s.predict(2);
        assert_abs_diff_eq!(s.x, -1.0);
        assert_abs_diff_eq!(s.y, 1.0);
    }

    #[test]
    fn point_update_estimates_velocity() {
        let mut s = PointTrackerState::from_detection(&det_at(0.0, 0.0));
        s.update(&det_at(2.0, 0.0), 1);
        assert_abs_diff_eq!(s.vx, 2.0);
        assert_abs_diff_eq!(s.vy, 0.0);

        let mut s = PointTrackerState::from_detection(&det_at(3.0, 3.0));
        s.update(&det_at(3.0, 3.0), 1);
        assert_abs_diff_eq!(s.vx, 0.0);
        assert_abs_diff_eq!(s.vy, 0.0);

        let mut s = PointTrackerState::from_detection(&det_at(0.0, 0.0));
        s.update(&det_at(3.0, 3.0), 3);
        assert_abs_diff_eq!(s.vx, 1.0);
        assert_abs_diff_eq!(s.vy, 1.0);
    }

    #[test]
    fn point_split_predicts_match_single_predict() {
        // Linear model: k single-frame predictions equal one dt = k predict.
        let mut a = PointTrackerState::from_detection(&det_at(0.0, 0.0));
        a.vx = 0.7;
        a.vy = -0.3;
        let mut b = a.clone();
        for _ in 0..4 {
            a.predict(1);
        }
        b.predict(4);
        assert_abs_diff_eq!(a.x, b.x, epsilon = 1e-12);
        assert_abs_diff_eq!(a.y, b.y, epsilon = 1e-12);
    }

    #[test]
    fn point_tracker_exact_on_constant_velocity() {
        // From the second match on, the predicted position equals the truth.
        let mut s = PointTrackerState::from_detection(&det_at(0.0, 0.0));
        s.update(&det_at(1.5, -0.5), 1);
        for k in 2..10 {
            s.predict(1);
            let truth = (1.5 * k as f64, -0.5 * k as f64);
            assert_abs_diff_eq!(s.x, truth.0, epsilon = 1e-12);
            assert_abs_diff_eq!(s.y, truth.1, epsilon = 1e-12);
            s.update(&det_at(truth.0, truth.1), 1);
        }
    }

    #[test]
    fn kalman_predict_velocity_only() {
        let mut s = KalmanState::from_detection(&det_at(0.0, 0.0), KalmanParams::default());
        s.mean = Vector6::new(0.0, 0.0, 1.0, 0.0, 0.0, 0.0);
        s.predict(1);
        assert_abs_diff_eq!(s.mean[0], 1.0);
        assert_abs_diff_eq!(s.mean[1], 0.0);
    }

    #[test]
    fn kalman_predict_acceleration() {
        let mut s = KalmanState::from_detection(&det_at(0.0, 0.0), KalmanParams::default());
        s.mean = Vector6::new(0.0, 0.0, 0.0, 0.0, 2.0, 0.0);
        s.predict(1);
        assert_abs_diff_eq!(s.mean[0], 1.0); // 0.5 * 2 * 1^2
        assert_abs_diff_eq!(s.mean[2], 2.0); // vx = ax * dt
    }

    #[test]
    fn kalman_predict_without_process_noise_is_fpft() {
        let params = KalmanParams {
            jerk_sigma: 0.0,
            measurement_noise: 0.25,
        };
        let mut s = KalmanState::from_detection(&det_at(0.0, 0.0), params);
        let p0 = s.cov;
        s.predict(1);
        let f = transition(1.0);
        let expected = f * p0 * f.transpose();
        assert!((s.cov - expected).abs().max() < 1e-12);
    }

    #[test]
    fn kalman_update_with_zero_prior_keeps_mean() {
        let mut s = KalmanState::from_detection(&det_at(0.0, 0.0), KalmanParams::default());
        s.cov = Matrix6::zeros();
        s.update(&det_at(100.0, -50.0)).unwrap();
        assert_abs_diff_eq!(s.mean[0], 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(s.mean[1], 0.0, epsilon = 1e-9);
    }

    #[test]
    fn kalman_update_with_tiny_noise_snaps_to_measurement() {
        let params = KalmanParams {
            jerk_sigma: 1.0,
            measurement_noise: 1e-9,
        };
        let mut s = KalmanState::from_detection(&det_at(0.0, 0.0), params);
        s.cov = Matrix6::identity() * 100.0;
        s.update(&det_at(7.0, -3.0)).unwrap();
        assert_abs_diff_eq!(s.mean[0], 7.0, epsilon = 1e-6);
        assert_abs_diff_eq!(s.mean[1], -3.0, epsilon = 1e-6);
    }

    #[test]
    fn kalman_innovation_examples() {
        let params = KalmanParams {
            jerk_sigma: 1.0,
            measurement_noise: 1.0,
        };
        let mut s = KalmanState::from_detection(&det_at(0.0, 0.0), params);
        s.cov = Matrix6::identity();
        let innovation = s.innovation_covariance();
        assert!((innovation - Matrix2::identity() * 2.0).abs().max() < 1e-12);

        let params = KalmanParams {
            jerk_sigma: 1.0,
            measurement_noise: 0.25,
        };
        let mut s = KalmanState::from_detection(&det_at(0.0, 0.0), params);
        s.cov = Matrix6::zeros();
        let innovation = s.innovation_covariance();
        assert!((innovation - Matrix2::identity() * 0.25).abs().max() < 1e-12);
    }

    #[test]
    fn kalman_innovation_norm_decreases_on_clean_track() {
        let mut s = KalmanState::from_detection(&det_at(0.0, 0.0), KalmanParams::default());
        let mut norms = Vec::new();
        for k in 1..=10 {
            s.predict(1);
            let z = Vector2::new(1.2 * k as f64, 0.6 * k as f64);
            let pred = Vector2::new(s.mean[0], s.mean[1]);
            norms.push((z - pred).norm());
            s.update(&det_at(z[0], z[1])).unwrap();
        }
        assert!(
            norms.last().unwrap() < &0.05,
            "final innovation {:?}",
            norms.last()
        );
        assert!(norms.last().unwrap() < norms.first().unwrap());
    }

    #[test]
    fn kalman_converges_on_noise_free_constant_velocity() {
        // Zero process noise, near-zero measurement noise, exact
        // constant-velocity measurements.
        let params = KalmanParams {
            jerk_sigma: 0.0,
            measurement_noise: 1e-9,
        };
        let mut s = KalmanState::from_detection(&det_at(0.0, 0.0), params);
        let mut final_err = f64::INFINITY;
        for k in 1..=20 {
            s.predict(1);
            let truth = (1.5 * k as f64, -0.7 * k as f64);
            s.update(&det_at(truth.0, truth.1)).unwrap();
            final_err = ((s.mean[0] - truth.0).powi(2) + (s.mean[1] - truth.1).powi(2)).sqrt();
        }
        assert!(final_err < 1e-6, "position error {final_err}");
    }

    fn symmetry_and_min_eigenvalue(cov: &Matrix6<f64>) -> (f64, f64) {
        let asym = (cov - cov.transpose()).abs().max();
        let eig = nalgebra::SymmetricEigen::new(*cov);
        let min_eig = eig.eigenvalues.min();
        (asym, min_eig)
    }

    #[test]
    fn kalman_covariance_stays_symmetric_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let params = KalmanParams {
            jerk_sigma: 0.8,
            measurement_noise: 0.25,
        };
        let mut s = KalmanState::from_detection(&det_at(0.0, 0.0), params);
        for _ in 0..200 {
            s.predict(rng.gen_range(1..=3));
            if rng.gen_bool(0.7) {
                s.update(&det_at(
                    rng.gen_range(-50.0..50.0),
                    rng.gen_range(-50.0..50.0),
                ))
                .unwrap();
            }
            let (asym, min_eig) = symmetry_and_min_eigenvalue(&s.cov);
            assert!(asym < 1e-9, "asymmetry {asym}");
            assert!(min_eig > -1e-9, "min eigenvalue {min_eig}");
        }
    }

    #[test]
    fn random_psd_prior_gives_psd_innovation() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..100 {
            let a = Matrix6::from_fn(|_, _| rng.gen_range(-1.0..1.0));
            let psd = a * a.transpose();
            let mut s = KalmanState::from_detection(&det_at(0.0, 0.0), KalmanParams::default());
            s.cov = psd;
            let innovation = s.innovation_covariance();
            let asym = (innovation - innovation.transpose()).abs().max();
            assert!(asym < 1e-9);
            let eig = nalgebra::SymmetricEigen::new(innovation);
            assert!(eig.eigenvalues.min() > 0.0);
        }
    }
}
