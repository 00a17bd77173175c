//! Scenario file parsing: TOML documents with one section per concern
//! (system, feedback, channel, schemes, subspace), strict about unknown
//! keys, with every validation error naming the offending key.
//!
//! The raw document round-trips through serde so result files can echo the
//! exact configuration that produced them.

use serde::{Deserialize, Serialize};

use crate::channel::OneRingGeometry;
use crate::error::{Error, Result};
use crate::sim::{
    ChannelModel, ExchangeBackend, ScenarioConfig, Scheme, SelectionRule,
};

/// Default dominant-subspace energy fraction.
pub const DEFAULT_SUBSPACE_ENERGY: f64 = 0.995;

fn default_energy() -> f64 {
    DEFAULT_SUBSPACE_ENERGY
}

fn default_eig_floor() -> f64 {
    crate::exchange::DEFAULT_EIG_FLOOR
}

fn default_trials() -> u64 {
    1000
}

fn default_seed() -> u64 {
    1
}

fn default_spacing() -> f64 {
    0.5
}

fn default_truncation() -> f64 {
    2.0
}

fn default_selection() -> String {
    "max-slnr".into()
}

fn default_backend() -> String {
    "ideal-dr".into()
}

fn default_model() -> String {
    "iid".into()
}

/// `[system]` section: dimensions, power, trial count, seed.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub antennas: usize,
    pub users: usize,
    /// Total transmit power, linear scale.
    pub power: f64,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

/// `[feedback]` section: bit budgets.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackSection {
    /// Bits per user toward the BS (codebook size 2^bits).
    pub precoder_bits: u32,
    /// Total D2D budget split across links.
    #[serde(default)]
    pub exchange_total_bits: f64,
    /// Per-link override for the direction backend; may be `inf`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exchange_bits_per_link: Option<f64>,
}

/// One user's scattering-ring geometry inside `[channel]`.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    pub azimuth_deg: f64,
    pub spread_deg: f64,
    #[serde(default = "default_spacing")]
    pub spacing: f64,
    #[serde(default = "default_truncation")]
    pub truncation_sigmas: f64,
}

/// `[channel]` section: statistical model and per-user path losses.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    #[serde(default = "default_model")]
    pub model: String,
    /// Linear per-user path losses; defaults to all ones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path_loss: Option<Vec<f64>>,
    /// Per-user geometries, required for the one-ring model.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub users: Vec<GeometrySection>,
}

impl Default for ChannelSection {
    fn default() -> Self {
        ChannelSection {
            model: default_model(),
            path_loss: None,
            users: Vec::new(),
        }
    }
}

/// `[schemes]` section: which schemes run and how precoders are picked.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SchemesSection {
    pub set: Vec<String>,
    #[serde(default = "default_selection")]
    pub selection: String,
    #[serde(default = "default_backend")]
    pub backend: String,
}

/// `[subspace]` section: dominant-subspace and KLT truncation knobs.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SubspaceSection {
    #[serde(default = "default_energy")]
    pub energy: f64,
    #[serde(default = "default_eig_floor")]
    pub eig_floor: f64,
}

impl Default for SubspaceSection {
    fn default() -> Self {
        SubspaceSection {
            energy: default_energy(),
            eig_floor: default_eig_floor(),
        }
    }
}

/// Complete raw scenario document.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub system: SystemSection,
    pub feedback: FeedbackSection,
    #[serde(default)]
    pub channel: ChannelSection,
    pub schemes: SchemesSection,
    #[serde(default)]
    pub subspace: SubspaceSection,
}

impl RawConfig {
    /// Parses a TOML document, rejecting unknown keys.
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    /// Reads and parses a scenario file.
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::InvalidConfig(format!("cannot read {}: {e}", path.display()))
        })?;
        Self::parse(&text)
    }

    /// Converts to a validated runtime configuration.
    pub fn to_scenario(&self) -> Result<ScenarioConfig> {
        let model = match self.channel.model.as_str() {
            "iid" => {
                if !self.channel.users.is_empty() {
                    return Err(Error::InvalidConfig(
                        "channel.users: geometries are only valid with channel.model = \"one-ring\""
                            .into(),
                    ));
                }
                ChannelModel::Iid
            }
            "one-ring" => {
                if self.channel.users.len() != self.system.users {
                    return Err(Error::InvalidConfig(format!(
                        "channel.users: need one geometry per user ({} given, {} users)",
                        self.channel.users.len(),
                        self.system.users
                    )));
                }
                let mut geoms = Vec::with_capacity(self.channel.users.len());
                for g in &self.channel.users {
                    if !(g.spread_deg > 0.0) {
                        return Err(Error::InvalidConfig(format!(
                            "channel.users.spread_deg: must be positive, got {}",
                            g.spread_deg
                        )));
                    }
                    if !(g.spacing > 0.0) {
                        return Err(Error::InvalidConfig(format!(
                            "channel.users.spacing: must be positive, got {}",
                            g.spacing
                        )));
                    }
                    if !(g.truncation_sigmas > 0.0) {
                        return Err(Error::InvalidConfig(format!(
                            "channel.users.truncation_sigmas: must be positive, got {}",
                            g.truncation_sigmas
                        )));
                    }
                    geoms.push(OneRingGeometry {
                        mean_azimuth: g.azimuth_deg.to_radians(),
                        angular_spread: g.spread_deg.to_radians(),
                        antenna_count: self.system.antennas,
                        antenna_spacing: g.spacing,
                        truncation_halfwidth: g.truncation_sigmas
                            * g.spread_deg.to_radians(),
                    });
                }
                ChannelModel::OneRing(geoms)
            }
            _ => {
                return Err(Error::InvalidConfig(format!(
                    "channel.model: expected \"iid\" or \"one-ring\", got \"{}\"",
                    self.channel.model
                )))
            }
        };

        let mut schemes = Vec::with_capacity(self.schemes.set.len());
        for name in &self.schemes.set {
            schemes.push(parse_scheme(name)?);
        }
        let selection = match self.schemes.selection.as_str() {
            "max-slnr" => SelectionRule::MaxSlnr,
            "min-leakage" => SelectionRule::MinLeakage,
            other => {
                return Err(Error::InvalidConfig(format!(
                    "schemes.selection: expected \"max-slnr\" or \"min-leakage\", got \"{other}\""
                )))
            }
        };
        let backend = match self.schemes.backend.as_str() {
            "ideal-dr" => ExchangeBackend::IdealDr,
            "ecsq-uniform" => ExchangeBackend::EcsqUniform,
            "direction-rvq" => ExchangeBackend::DirectionRvq,
            other => {
                return Err(Error::InvalidConfig(format!(
                    "schemes.backend: expected \"ideal-dr\", \"ecsq-uniform\", or \
                     \"direction-rvq\", got \"{other}\""
                )))
            }
        };

        let path_losses = match &self.channel.path_loss {
            Some(v) => v.clone(),
            None => vec![1.0; self.system.users],
        };

        let cfg = ScenarioConfig {
            n_t: self.system.antennas,
            k_users: self.system.users,
            power_total: self.system.power,
            b_f: self.feedback.precoder_bits,
            b_tot: self.feedback.exchange_total_bits,
            b_c_per_link: self.feedback.exchange_bits_per_link,
            channel_model: model,
            path_losses,
            schemes,
            backend,
            selection_rule: selection,
            subspace_energy: self.subspace.energy,
            eig_floor: self.subspace.eig_floor,
            trials: self.system.trials,
            master_seed: self.system.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_scheme(name: &str) -> Result<Scheme> {
    match name {
        "csi-feedback-zf" => Ok(Scheme::CsiFeedbackZf),
        "csi-feedback-mmse" => Ok(Scheme::CsiFeedbackMmse),
        "precoder-naive" => Ok(Scheme::PrecoderNaive),
        "precoder-adaptive" => Ok(Scheme::PrecoderAdaptive),
        other => Err(Error::InvalidConfig(format!(
            "schemes.set: unknown scheme \"{other}\"; expected one of csi-feedback-zf, \
             csi-feedback-mmse, precoder-naive, precoder-adaptive"
        ))),
    }
}
