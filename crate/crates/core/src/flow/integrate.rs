//! Integration of the reaction ODE `dR/dt = Q(R)`.
//!
//! All arithmetic happens on the packed pair-matrix representation, so pair
//! symmetries hold exactly at every stage; the Bianchi residual is monitored
//! and projected away if roundoff lets it drift.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::q::q_tensor;
use crate::tensor::CurvatureTensor;

/// Step-size floor below which the solution is considered to have blown up.
pub const H_MIN: f64 = 1e-12;
/// Max-norm above which the solution is considered to have blown up.
pub const NORM_MAX: f64 = 1e12;
/// Norm growth and relative time gap at which reaching `t_end` still counts as blowup.
const BLOWUP_GROWTH: f64 = 1e6;
const BLOWUP_RESOLUTION: f64 = 1e-6;
/// Relative Bianchi residual that triggers reprojection.
pub const BIANCHI_DRIFT: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Classical fourth-order Runge–Kutta with fixed step `h_init`.
    Rk4,
    /// Dormand–Prince 5(4) with adaptive steps.
    Rk45,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    None,
    /// Stored states are rescaled to this scalar curvature (when scal > 0).
    FixedScal(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepControl {
    pub method: Method,
    pub h_init: f64,
    pub rel_tol: f64,
    pub max_steps: usize,
    pub normalize: Normalization,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            method: Method::Rk45,
            h_init: 1e-3,
            rel_tol: 1e-8,
            max_steps: 200_000,
            normalize: Normalization::None,
        }
    }
}

impl StepControl {
    pub fn validate(&self) -> Result<()> {
        if !(self.h_init > 0.0 && self.h_init.is_finite()) {
            return Err(Error::SpecInvalid(format!("h_init {} must be positive", self.h_init)));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol.is_finite()) {
            return Err(Error::SpecInvalid(format!("rel_tol {} must be positive", self.rel_tol)));
        }
        if self.max_steps < 1 {
            return Err(Error::SpecInvalid("max_steps must be at least 1".into()));
        }
        if let Normalization::FixedScal(s) = self.normalize {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::SpecInvalid(format!("normalization target {s} must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FlowTrajectory {
    /// Raw flow times, strictly increasing.
    pub times: Vec<f64>,
    /// States as stored: `factors[i] × raw state`.
    pub states: Vec<CurvatureTensor>,
    pub factors: Vec<f64>,
    /// Step size that produced each state (0 for the initial state).
    pub steps: Vec<f64>,
    pub reprojections: usize,
    pub normalize: Normalization,
}

impl FlowTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_time(&self) -> f64 {
        *self.times.last().expect("trajectory holds the initial state")
    }

    pub fn final_state(&self) -> &CurvatureTensor {
        self.states.last().expect("trajectory holds the initial state")
    }

    /// Unnormalized solution at record `i`.
    pub fn raw_state(&self, i: usize) -> CurvatureTensor {
        if self.factors[i] == 1.0 {
            self.states[i].clone()
        } else {
            self.states[i].scaled(1.0 / self.factors[i])
        }
    }

    /// Max-norm of the raw solution at record `i`.
    pub fn raw_norm(&self, i: usize) -> f64 {
        self.states[i].max_norm() / self.factors[i]
    }

    fn push(&mut self, t: f64, h: f64, raw: &[f64], n: usize) {
        let tensor = CurvatureTensor::from_packed(n, raw.to_vec());
        let factor = match self.normalize {
            Normalization::FixedScal(target) => {
                let scal = tensor.scalar();
                if scal > 0.0 {
                    target / scal
                } else {
                    1.0
                }
            }
            Normalization::None => 1.0,
        };
        self.times.push(t);
        self.steps.push(h);
        self.states.push(if factor == 1.0 { tensor } else { tensor.scaled(factor) });
        self.factors.push(factor);
    }

    /// Extrapolated blowup time from a linear fit of `1/‖R‖` over the last records.
    pub fn blowup_estimate(&self) -> f64 {
        let k = self.len().min(10);
        let pts: Vec<(f64, f64)> = (self.len() - k..self.len())
            .filter_map(|i| {
                let norm = self.raw_norm(i);
                (norm > 0.0).then(|| (self.times[i], 1.0 / norm))
            })
            .collect();
        let last = self.last_time();
        if pts.len() < 2 {
            return last;
        }
        let m = pts.len() as f64;
        let (st, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (t, y)| (a + t, b + y));
        let (mt, my) = (st / m, sy / m);
        let (sxy, sxx) = pts
            .iter()
            .fold((0.0, 0.0), |(a, b), (t, y)| (a + (t - mt) * (y - my), b + (t - mt) * (t - mt)));
        if sxx <= 0.0 || sxy >= 0.0 {
            return last;
        }
        let slope = sxy / sxx;
        (mt - my / slope).max(last)
    }
}

fn rhs(n: usize, y: &[f64]) -> Vec<f64> {
    q_tensor(&CurvatureTensor::from_packed(n, y.to_vec())).packed().to_vec()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

// Dormand–Prince 5(4) tableau. The ODE is autonomous, so the nodes are not needed.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// One Dormand–Prince step; returns the fifth-order solution and the
/// difference to the embedded fourth-order one.
fn dopri_step(n: usize, y: &[f64], h: f64) -> (Vec<f64>, Vec<f64>) {
    let len = y.len();
    let mut k: Vec<Vec<f64>> = Vec::with_capacity(7);
    for s in 0..7 {
        let mut stage = y.to_vec();
        for (j, kj) in k.iter().enumerate() {
            let a = A[s][j];
            if a != 0.0 {
                for i in 0..len {
                    stage[i] += h * a * kj[i];
                }
            }
        }
        k.push(rhs(n, &stage));
    }
    let mut y5 = y.to_vec();
    let mut err = vec![0.0; len];
    for s in 0..7 {
        for i in 0..len {
            y5[i] += h * B5[s] * k[s][i];
            err[i] += h * (B5[s] - B4[s]) * k[s][i];
        }
    }
    (y5, err)
}

fn rk4_step(n: usize, y: &[f64], h: f64) -> Vec<f64> {
    let axpy = |a: &[f64], c: f64, b: &[f64]| a.iter().zip(b).map(|(x, z)| x + c * z).collect::<Vec<_>>();
    let k1 = rhs(n, y);
    let k2 = rhs(n, &axpy(y, 0.5 * h, &k1));
    let k3 = rhs(n, &axpy(y, 0.5 * h, &k2));
    let k4 = rhs(n, &axpy(y, h, &k3));
    (0..y.len())
        .map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

fn blowup(traj: FlowTrajectory) -> Error {
    let t_last = traj.last_time();
    let t_blowup = traj.blowup_estimate();
    Error::BlowupReached {
        t_last,
        t_blowup,
        trajectory: Box::new(traj),
    }
}

/// Solves `dR/dt = Q(R)` on `[0, t_end]`, recording every accepted step.
pub fn integrate(r0: &CurvatureTensor, t_end: f64, ctl: &StepControl) -> Result<FlowTrajectory> {
    ctl.validate()?;
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::SpecInvalid(format!("t_end {t_end} must be positive")));
    }
    let n = r0.dim();
    let mut traj = FlowTrajectory {
        times: Vec::new(),
        states: Vec::new(),
        factors: Vec::new(),
        steps: Vec::new(),
        reprojections: 0,
        normalize: ctl.normalize,
    };
    let mut y = r0.packed().to_vec();
    let mut t = 0.0;
    traj.push(t, 0.0, &y, n);
    let mut h = ctl.h_init.min(t_end);
    let mut steps = 0;

    while t < t_end {
        if steps >= ctl.max_steps {
            return Err(Error::MaxStepsExceeded {
                max_steps: ctl.max_steps,
                t,
            });
        }
        let last = t + h >= t_end;
        let h_try = if last { t_end - t } else { h };
        let next = match ctl.method {
            Method::Rk4 => {
                steps += 1;
                rk4_step(n, &y, h_try)
            }
            Method::Rk45 => {
                let (y5, err) = dopri_step(n, &y, h_try);
                steps += 1;
                let sc = ctl.rel_tol * max_abs(&y).max(max_abs(&y5));
                let e = if sc > 0.0 { max_abs(&err) / sc } else { 0.0 };
                let ok = e <= 1.0 && y5.iter().all(|v| v.is_finite());
                let factor = if e == 0.0 {
                    5.0
                } else if e.is_finite() {
                    (0.9 * e.powf(-0.2)).clamp(0.2, 5.0)
                } else {
                    0.2
                };
                if !ok {
                    h = h_try * factor.min(0.9);
                    if h < H_MIN {
                        return Err(blowup(traj));
                    }
                    continue;
                }
                if !last {
                    h = h_try * factor;
                }
                y5
            }
        };
        if !next.iter().all(|v| v.is_finite()) {
            return Err(blowup(traj));
        }
        y = next;
        t = if last { t_end } else { t + h_try };

        let state = CurvatureTensor::from_packed(n, std::mem::take(&mut y));
        let state = if !state.satisfies_bianchi(BIANCHI_DRIFT) {
            traj.reprojections += 1;
            state.bianchi_projected()
        } else {
            state
        };
        y = state.packed().to_vec();
        traj.push(t, h_try, &y, n);
        if max_abs(&y) > NORM_MAX {
            return Err(blowup(traj));
        }
        if ctl.method == Method::Rk45 && !last && h < H_MIN {
            return Err(blowup(traj));
        }
    }
    // An end time within the blowup resolution of the integrator: the norm has
    // exploded and the extrapolated singular time coincides with t_end.
    let growth = traj.raw_norm(traj.len() - 1) / traj.raw_norm(0).max(f64::MIN_POSITIVE);
    if traj.len() > 2 && growth > BLOWUP_GROWTH {
        let estimate = traj.blowup_estimate();
        if estimate - t_end <= BLOWUP_RESOLUTION * estimate {
            return Err(blowup(traj));
        }
    }
    Ok(traj)
}

/// Integrates until blowup (or `t_cap`) and returns the estimated maximal time.
pub fn detect_blowup(r0: &CurvatureTensor, t_cap: f64, ctl: &StepControl) -> Result<Option<f64>> {
    let probe = StepControl {
        normalize: Normalization::None,
        ..ctl.clone()
    };
    match integrate(r0, t_cap, &probe) {
        Ok(_) => Ok(None),
        Err(Error::BlowupReached { t_blowup, .. }) => Ok(Some(t_blowup)),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::constant_curvature;

    fn kappa(n: usize, t: f64) -> f64 {
        1.0 / (1.0 - 2.0 * (n as f64 - 1.0) * t)
    }

    #[test]
    fn round_sphere_matches_closed_form() {
        let traj = integrate(&constant_curvature(3, 1.0), 0.2, &StepControl::default()).unwrap();
        let end = traj.final_state();
        assert_eq!(traj.last_time(), 0.2);
        assert!((end.get(0, 1, 0, 1) / 5.0 - 1.0).abs() < 1e-6);
        assert!((&end.scaled(0.2) - &constant_curvature(3, 1.0)).max_norm() < 1e-6);
        assert!(traj.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn blowup_detected() {
        match integrate(&constant_curvature(3, 1.0), 0.25, &StepControl::default()) {
            Err(Error::BlowupReached { t_blowup, t_last, .. }) => {
                assert!((t_blowup - 0.25).abs() < 1e-6, "{t_blowup}");
                assert!(t_last <= 0.25);
            }
            other => panic!("{:?}", other.map(|t| t.last_time())),
        }
    }

    #[test]
    fn zero_is_fixed() {
        let traj = integrate(&CurvatureTensor::zeros(4), 3.0, &StepControl::default()).unwrap();
        assert!(traj.states.iter().all(|s| s.max_norm() == 0.0));
        assert_eq!(traj.last_time(), 3.0);
    }

    #[test]
    fn rk4_is_fourth_order() {
        let n = 4;
        let t_end = 0.1;
        let exact = kappa(n, t_end);
        let err = |h: f64| {
            let ctl = StepControl {
                method: Method::Rk4,
                h_init: h,
                ..Default::default()
            };
            let traj = integrate(&constant_curvature(n, 1.0), t_end, &ctl).unwrap();
            (traj.final_state().get(0, 1, 0, 1) - exact).abs()
        };
        let ratio = err(0.01) / err(0.005);
        assert!((ratio - 16.0).abs() < 1.5, "{ratio}");
    }

    #[test]
    fn normalization_keeps_raw_solution() {
        let ctl = StepControl {
            normalize: Normalization::FixedScal(1.0),
            ..Default::default()
        };
        let traj = integrate(&constant_curvature(4, 1.0), 0.1, &ctl).unwrap();
        let last = traj.len() - 1;
        assert!((traj.final_state().scalar() - 1.0).abs() < 1e-12);
        assert!((traj.raw_state(last).get(0, 1, 0, 1) - kappa(4, 0.1)).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_control() {
        let ctl = StepControl {
            rel_tol: 0.0,
            ..Default::default()
        };
        assert!(integrate(&constant_curvature(3, 1.0), 0.1, &ctl).is_err());
        assert!(integrate(&constant_curvature(3, 1.0), -1.0, &StepControl::default()).is_err());
    }
}
