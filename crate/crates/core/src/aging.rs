//! Stress-directed aging and recovery of device margins.
//!
//! Holding a value in a cell slowly pushes its power-on margin toward the
//! opposite value. The shift follows a power law in effective age, split into
//! a permanent part and a reversible part that decays logarithmically during
//! unpowered rest. Elevated voltage and temperature compress wall-clock time
//! into effective age through a standard acceleration-factor formula.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sram::DeviceModel;
use crate::swbias::SoftwareBiasProfile;

/// Accumulated margin shifts of one device, kept apart from the
/// as-manufactured margins so recovery can never overshoot them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgeState {
    /// Effective operating age in years.
    pub years: f64,
    pub permanent: Vec<f64>,
    pub reversible: Vec<f64>,
}

impl AgeState {
    pub fn fresh(n_cells: usize) -> AgeState {
        AgeState {
            years: 0.0,
            permanent: vec![0.0; n_cells],
            reversible: vec![0.0; n_cells],
        }
    }
}

/// Voltage/temperature stress parameters for the acceleration factor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AccelerationParams {
    /// Gate voltage exponent.
    pub alpha: f64,
    /// Time exponent.
    pub n: f64,
    /// Apparent activation energy, eV. Negative: heat accelerates wear.
    pub e_aa: f64,
    /// Boltzmann constant, eV/K.
    pub k_boltzmann: f64,
    pub v_nom: f64,
    pub v_str: f64,
    pub t_nom: f64,
    pub t_str: f64,
}

impl Default for AccelerationParams {
    /// 3.3 V / 293 K nominal against 4.75 V / 353 K stress.
    fn default() -> Self {
        AccelerationParams {
            alpha: 3.5,
            n: 0.25,
            e_aa: -0.02,
            k_boltzmann: 8.617_333_262e-5,
            v_nom: 3.3,
            v_str: 4.75,
            t_nom: 293.0,
            t_str: 353.0,
        }
    }
}

impl AccelerationParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("v_nom", self.v_nom),
            ("v_str", self.v_str),
            ("t_nom", self.t_nom),
            ("t_str", self.t_str),
            ("k_boltzmann", self.k_boltzmann),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Contract(format!("{name} must be finite and > 0")));
            }
        }
        if self.n == 0.0 || !self.n.is_finite() {
            return Err(Error::Contract("time exponent n must be nonzero".into()));
        }
        if !self.alpha.is_finite() || !self.e_aa.is_finite() {
            return Err(Error::Contract("alpha and e_aa must be finite".into()));
        }
        Ok(())
    }
}

/// How much faster the stress condition wears the part than nominal use.
pub fn acceleration_factor(p: &AccelerationParams) -> Result<f64> {
    p.validate()?;
    let voltage = (p.v_str / p.v_nom).powf(p.alpha / p.n);
    let thermal =
        ((p.e_aa / p.k_boltzmann) * (1.0 / p.t_str - 1.0 / p.t_nom) * (1.0 / p.n)).exp();
    Ok(voltage * thermal)
}

const HOURS_PER_YEAR: f64 = 24.0 * 365.25;

/// Convert stressed wall-clock hours into effective nominal-condition years.
pub fn effective_age(wall_hours: f64, p: &AccelerationParams) -> Result<f64> {
    if !(wall_hours >= 0.0) {
        return Err(Error::Contract(format!(
            "wall_hours must be >= 0, got {wall_hours}"
        )));
    }
    Ok(wall_hours * acceleration_factor(p)? / HOURS_PER_YEAR)
}

fn default_time_exponent() -> f64 {
    0.25
}
fn default_permanent_fraction() -> f64 {
    0.8
}
/// One day, in years.
fn default_recovery_time_constant() -> f64 {
    1.0 / 365.25
}
/// Six weeks, in years.
fn default_recovery_saturation() -> f64 {
    42.0 / 365.25
}

/// Phenomenological aging constants. `amplitude` is the margin shift per
/// year^n under a fully biased bit and comes from calibration, not from a
/// hardcoded number.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgingConfig {
    pub amplitude: f64,
    #[serde(default = "default_time_exponent")]
    pub time_exponent: f64,
    #[serde(default = "default_permanent_fraction")]
    pub permanent_fraction: f64,
    #[serde(default = "default_recovery_time_constant")]
    pub recovery_time_constant: f64,
    #[serde(default = "default_recovery_saturation")]
    pub recovery_saturation: f64,
}

impl AgingConfig {
    pub fn new(amplitude: f64) -> AgingConfig {
        AgingConfig {
            amplitude,
            time_exponent: default_time_exponent(),
            permanent_fraction: default_permanent_fraction(),
            recovery_time_constant: default_recovery_time_constant(),
            recovery_saturation: default_recovery_saturation(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude >= 0.0) || !self.amplitude.is_finite() {
            return Err(Error::invalid("amplitude", "must be finite and >= 0"));
        }
        if !(self.time_exponent > 0.0) || !self.time_exponent.is_finite() {
            return Err(Error::invalid("time_exponent", "must be finite and > 0"));
        }
        if !(0.0..=1.0).contains(&self.permanent_fraction) {
            return Err(Error::invalid("permanent_fraction", "must lie in [0, 1]"));
        }
        if !(self.recovery_time_constant > 0.0) || !(self.recovery_saturation > 0.0) {
            return Err(Error::invalid(
                "recovery constants",
                "time constant and saturation must be > 0",
            ));
        }
        Ok(())
    }
}

/// Snapshot checkpoints, as effective ages in years.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgingSchedule {
    pub checkpoints: Vec<f64>,
}

impl AgingSchedule {
    pub fn new(checkpoints: Vec<f64>) -> Result<AgingSchedule> {
        let s = AgingSchedule { checkpoints };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, w) in self.checkpoints.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(Error::invalid(
                    "schedule",
                    &format!("checkpoints must be strictly increasing at index {}", i + 1),
                ));
            }
        }
        if let Some(first) = self.checkpoints.first() {
            if !(*first >= 0.0) || !first.is_finite() {
                return Err(Error::invalid("schedule", "checkpoints must be >= 0"));
            }
        }
        Ok(())
    }

    /// 30 minutes, 1 hour, 1 day, 1 week, 1 month, then every 4.6 months out
    /// to roughly five years. 18 checkpoints.
    pub fn default_checkpoints() -> AgingSchedule {
        let mut checkpoints = vec![
            0.5 / HOURS_PER_YEAR,
            1.0 / HOURS_PER_YEAR,
            1.0 / 365.25,
            7.0 / 365.25,
            1.0 / 12.0,
        ];
        for k in 1..=13 {
            checkpoints.push(k as f64 * 4.6 / 12.0);
        }
        AgingSchedule { checkpoints }
    }

    pub fn len(&self) -> usize {
        self.checkpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.checkpoints.is_empty()
    }
}

/// Age a device to an absolute effective age under a software bias profile.
///
/// A bit with time-weighted bias B pushes its cell's margin in direction
/// `(0.5 - B) * 2`: holding 0 drifts the cell toward powering on as 1. The
/// cumulative shift from age t0 to t1 is `amplitude * dir * (t1^n - t0^n)`,
/// so reaching an age in one call or several gives identical margins.
/// Unwritten bits age their cells not at all.
pub fn apply_aging(
    d: &DeviceModel,
    profile: &SoftwareBiasProfile,
    effective_years: f64,
    cfg: &AgingConfig,
) -> Result<DeviceModel> {
    cfg.validate()?;
    if profile.memory_bits != d.n_cells() {
        return Err(Error::Contract(format!(
            "profile covers {} bits, device has {} cells",
            profile.memory_bits,
            d.n_cells()
        )));
    }
    if !effective_years.is_finite() || effective_years < d.age.years {
        return Err(Error::Contract(format!(
            "target age {effective_years} is before current age {}",
            d.age.years
        )));
    }
    let n = cfg.time_exponent;
    let growth = cfg.amplitude * (effective_years.powf(n) - d.age.years.powf(n));
    let mut out = d.clone();
    out.age.years = effective_years;
    for cell in 0..d.n_cells() {
        if !profile.written[cell] {
            continue;
        }
        let dir = (0.5 - profile.bias[cell]) * 2.0;
        let shift = growth * dir;
        out.age.permanent[cell] += cfg.permanent_fraction * shift;
        out.age.reversible[cell] += (1.0 - cfg.permanent_fraction) * shift;
    }
    Ok(out)
}

/// Unpowered rest: the reversible shift decays by
/// `1 - log(1 + rest/tau) / log(1 + T_sat/tau)`, clamped to [0, 1], and is
/// fully gone once rest reaches the saturation horizon. Permanent shift and
/// effective age are untouched.
pub fn apply_recovery(d: &DeviceModel, rest_years: f64, cfg: &AgingConfig) -> Result<DeviceModel> {
    cfg.validate()?;
    if !(rest_years >= 0.0) {
        return Err(Error::Contract(format!(
            "rest duration must be >= 0, got {rest_years}"
        )));
    }
    let tau = cfg.recovery_time_constant;
    let keep = (1.0 - (rest_years / tau).ln_1p() / (cfg.recovery_saturation / tau).ln_1p())
        .clamp(0.0, 1.0);
    let mut out = d.clone();
    for r in out.age.reversible.iter_mut() {
        *r *= keep;
    }
    Ok(out)
}

/// Measured population shifts that aging calibration must reproduce: the
/// change in the strong-1 and strong-0 portions after `horizon_years` of
/// fully 0-biased software.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgingDeltaTargets {
    pub delta_strong_1: f64,
    pub delta_strong_0: f64,
    pub horizon_years: f64,
    pub tolerance: f64,
}

impl AgingDeltaTargets {
    pub fn validate(&self) -> Result<()> {
        if !self.delta_strong_1.is_finite() || !self.delta_strong_0.is_finite() {
            return Err(Error::invalid("delta targets", "must be finite"));
        }
        if !self.horizon_years.is_finite() || self.horizon_years <= 0.0 {
            return Err(Error::invalid("horizon_years", "must be positive"));
        }
        if !self.tolerance.is_finite() || self.tolerance <= 0.0 {
            return Err(Error::invalid("tolerance", "must be positive"));
        }
        Ok(())
    }
}
