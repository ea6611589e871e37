//! Fixed-step co-simulation of plant and observer.
//!
//! Plant: `x' = A x + G f(x, u) + B u(t)`.
//! Observer: `xh' = A xh + G f(xh, u) + B u(t) + L (y - yh)` with
//! `y = C x`, `yh = C xh`.
//!
//! Both systems are integrated jointly as one stacked ODE so every
//! Runge-Kutta stage sees the measurement consistent with the plant's
//! matching stage; integrating them separately would lag the output by a
//! half step.

use std::fmt::Write as _;

use thiserror::Error;

use crate::expr::SystemModel;
use crate::interval::DomainError;
use crate::matfun::Mat;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("state became non-finite at t = {t}")]
    NonFiniteState { t: f64 },
    #[error("invalid simulation config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// Input signal u(t), per run.
#[derive(Debug, Clone, PartialEq)]
pub enum InputSignal {
    Zero,
    Constant(Vec<f64>),
    /// Per-channel `amp * sin(omega * t + phase)`.
    Sinusoid(Vec<SinusoidChannel>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinusoidChannel {
    pub amp: f64,
    pub omega: f64,
    pub phase: f64,
}

impl InputSignal {
    pub fn eval(&self, t: f64, m: usize) -> Vec<f64> {
        match self {
            InputSignal::Zero => vec![0.0; m],
            InputSignal::Constant(v) => v.clone(),
            InputSignal::Sinusoid(ch) => ch
                .iter()
                .map(|c| c.amp * (c.omega * t + c.phase).sin())
                .collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub t_end: f64,
    pub dt: f64,
    pub x0: Vec<f64>,
    pub xhat0: Vec<f64>,
    pub input: InputSignal,
}

impl SimConfig {
    /// Plausible default estimation run: plant from (1, -1), observer
    /// from the origin, zero input, ten seconds at millisecond steps.
    pub fn default_for(model: &SystemModel) -> SimConfig {
        let mut x0 = vec![0.0; model.n];
        if model.n >= 2 {
            x0[0] = 1.0;
            x0[1] = -1.0;
        } else {
            x0[0] = 1.0;
        }
        SimConfig {
            t_end: 10.0,
            dt: 1e-3,
            x0,
            xhat0: vec![0.0; model.n],
            input: InputSignal::Zero,
        }
    }
}

/// Recorded co-simulation: one row per step including t = 0.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub estimates: Vec<Vec<f64>>,
    /// Euclidean estimation error per step.
    pub errors: Vec<f64>,
}

impl Trajectory {
    pub fn final_error(&self) -> f64 {
        *self.errors.last().expect("nonempty trajectory")
    }

    /// CSV with header `t,x1..xn,xhat1..xhatn,err`, full double precision.
    pub fn to_csv(&self) -> String {
        let n = self.states.first().map_or(0, |s| s.len());
        let mut out = String::new();
        out.push('t');
        for i in 1..=n {
            let _ = write!(out, ",x{i}");
        }
        for i in 1..=n {
            let _ = write!(out, ",xhat{i}");
        }
        out.push_str(",err\n");
        for k in 0..self.times.len() {
            let _ = write!(out, "{:.16e}", self.times[k]);
            for v in &self.states[k] {
                let _ = write!(out, ",{v:.16e}");
            }
            for v in &self.estimates[k] {
                let _ = write!(out, ",{v:.16e}");
            }
            let _ = writeln!(out, ",{:.16e}", self.errors[k]);
        }
        out
    }
}

const STATE_LIMIT: f64 = 1e12;

fn check_finite(x: &[f64], t: f64) -> Result<(), SimError> {
    if x.iter().any(|v| !v.is_finite() || v.abs() > STATE_LIMIT) {
        Err(SimError::NonFiniteState { t })
    } else {
        Ok(())
    }
}

fn plant_rhs(model: &SystemModel, x: &[f64], u: &[f64]) -> Result<Vec<f64>, DomainError> {
    let mut dx = model.a.matvec(x);
    let gf = model.gf_value(x, u)?;
    for i in 0..model.n {
        dx[i] += gf[i];
    }
    if model.m > 0 {
        let bu = model.b.matvec(u);
        for i in 0..model.n {
            dx[i] += bu[i];
        }
    }
    Ok(dx)
}

fn rk4_step<F>(x: &[f64], dt: f64, rhs: F) -> Result<Vec<f64>, DomainError>
where
    F: Fn(&[f64]) -> Result<Vec<f64>, DomainError>,
{
    let add_scaled = |x: &[f64], k: &[f64], h: f64| -> Vec<f64> {
        x.iter().zip(k).map(|(a, b)| a + h * b).collect()
    };
    let k1 = rhs(x)?;
    let k2 = rhs(&add_scaled(x, &k1, dt / 2.0))?;
    let k3 = rhs(&add_scaled(x, &k2, dt / 2.0))?;
    let k4 = rhs(&add_scaled(x, &k3, dt))?;
    Ok(x.iter()
        .enumerate()
        .map(|(i, v)| v + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

/// One plant step with the input held constant over the step.
pub fn step_plant(
    model: &SystemModel,
    x: &[f64],
    u: &[f64],
    dt: f64,
) -> Result<Vec<f64>, SimError> {
    let next = rk4_step(x, dt, |x| plant_rhs(model, x, u))?;
    check_finite(&next, dt)?;
    Ok(next)
}

/// One observer step with the measurement and input held constant over
/// the step. [`run`] integrates the stacked system instead, where the
/// measurement follows the plant's stages exactly.
pub fn step_observer(
    model: &SystemModel,
    gain: &Mat,
    xhat: &[f64],
    u: &[f64],
    y: &[f64],
    dt: f64,
) -> Result<Vec<f64>, SimError> {
    let next = rk4_step(xhat, dt, |xh| {
        let mut dxh = plant_rhs(model, xh, u)?;
        let yh = model.c.matvec(xh);
        let innov: Vec<f64> = y.iter().zip(&yh).map(|(a, b)| a - b).collect();
        let corr = gain.matvec(&innov);
        for i in 0..model.n {
            dxh[i] += corr[i];
        }
        Ok(dxh)
    })?;
    check_finite(&next, dt)?;
    Ok(next)
}

/// Full co-simulation of plant and observer over the configured horizon.
pub fn run(model: &SystemModel, gain: &Mat, cfg: &SimConfig) -> Result<Trajectory, SimError> {
    if !(cfg.dt > 0.0) {
        return Err(SimError::BadConfig("dt must be positive".into()));
    }
    if cfg.t_end < cfg.dt {
        return Err(SimError::BadConfig("t_end must be at least dt".into()));
    }
    if cfg.x0.len() != model.n || cfg.xhat0.len() != model.n {
        return Err(SimError::BadConfig(format!(
            "x0 and xhat0 must have length {}",
            model.n
        )));
    }
    if gain.rows != model.n || gain.cols != model.p {
        return Err(SimError::BadConfig(format!(
            "gain must be {}x{}, found {}x{}",
            model.n, model.p, gain.rows, gain.cols
        )));
    }

    let n = model.n;
    let steps = (cfg.t_end / cfg.dt).round() as usize;
    let mut z: Vec<f64> = cfg
        .x0
        .iter()
        .chain(cfg.xhat0.iter())
        .copied()
        .collect();

    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut estimates = Vec::with_capacity(steps + 1);
    let mut errors = Vec::with_capacity(steps + 1);

    let record = |z: &[f64],
                  t: f64,
                  times: &mut Vec<f64>,
                  states: &mut Vec<Vec<f64>>,
                  estimates: &mut Vec<Vec<f64>>,
                  errors: &mut Vec<f64>| {
        let (x, xh) = z.split_at(n);
        times.push(t);
        states.push(x.to_vec());
        estimates.push(xh.to_vec());
        errors.push(
            x.iter()
                .zip(xh)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt(),
        );
    };

    record(&z, 0.0, &mut times, &mut states, &mut estimates, &mut errors);

    for k in 0..steps {
        let t = k as f64 * cfg.dt;
        // Stacked RHS: the observer correction uses the plant state of the
        // same stage, so y stays stage-consistent.
        let stacked = |zz: &[f64], tau: f64| -> Result<Vec<f64>, DomainError> {
            let (x, xh) = zz.split_at(n);
            let u = cfg.input.eval(tau, model.m);
            let dx = plant_rhs(model, x, &u)?;
            let mut dxh = plant_rhs(model, xh, &u)?;
            let y = model.c.matvec(x);
            let yh = model.c.matvec(xh);
            let innov: Vec<f64> = y.iter().zip(&yh).map(|(a, b)| a - b).collect();
            let corr = gain.matvec(&innov);
            for i in 0..n {
                dxh[i] += corr[i];
            }
            let mut dz = dx;
            dz.extend(dxh);
            Ok(dz)
        };
        let add_scaled = |x: &[f64], k: &[f64], h: f64| -> Vec<f64> {
            x.iter().zip(k).map(|(a, b)| a + h * b).collect()
        };
        let k1 = stacked(&z, t)?;
        let k2 = stacked(&add_scaled(&z, &k1, cfg.dt / 2.0), t + cfg.dt / 2.0)?;
        let k3 = stacked(&add_scaled(&z, &k2, cfg.dt / 2.0), t + cfg.dt / 2.0)?;
        let k4 = stacked(&add_scaled(&z, &k3, cfg.dt), t + cfg.dt)?;
        for i in 0..z.len() {
            z[i] += cfg.dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let t_next = (k + 1) as f64 * cfg.dt;
        check_finite(&z, t_next)?;
        record(&z, t_next, &mut times, &mut states, &mut estimates, &mut errors);
    }

    Ok(Trajectory {
        times,
        states,
        estimates,
        errors,
    })
}
