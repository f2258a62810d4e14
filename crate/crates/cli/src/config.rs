use std::path::Path;

use anyhow::{Context, Result};
use ecgnode::adam::AdamConfig;
use ecgnode::dsp::{DetectorConfig, ThresholdRule, DEFAULT_TOLERANCE_SAMPLES};
use ecgnode::power::{Battery, NodeConfig};
use ecgnode::procnet::{OperatingMode, SimConfig, ThresholdPolicy};
use serde::Deserialize;

/// Contents of the `--config` TOML file. Every table is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: u64,
    pub node: NodeConfig,
    pub adam: AdamConfig,
    pub policy: ThresholdPolicy,
    pub battery: Battery,
    pub detector: DetectorSection,
    pub sim: SimSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Threshold {
    Fixed(f64),
    Named(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorSection {
    /// A number for a fixed threshold or `"auto"`.
    pub threshold: Threshold,
    pub fraction: f64,
    pub learn_s: f64,
    pub refractory_s: f64,
    pub tolerance_samples: usize,
}

impl Default for DetectorSection {
    fn default() -> Self {
        let (fraction, learn_s) = match ThresholdRule::default() {
            ThresholdRule::Auto { fraction, learn_s } => (fraction, learn_s),
            ThresholdRule::Fixed(_) => (0.3, 2.0),
        };
        Self {
            threshold: Threshold::Named("auto".into()),
            fraction,
            learn_s,
            refractory_s: DetectorConfig::default().refractory_s,
            tolerance_samples: DEFAULT_TOLERANCE_SAMPLES,
        }
    }
}

impl DetectorSection {
    pub fn rule(&self) -> Result<ThresholdRule> {
        match &self.threshold {
            Threshold::Fixed(t) => Ok(ThresholdRule::Fixed(*t)),
            Threshold::Named(s) if s.eq_ignore_ascii_case("auto") => Ok(ThresholdRule::Auto {
                fraction: self.fraction,
                learn_s: self.learn_s,
            }),
            Threshold::Named(s) => Err(ecgnode::Error::Config(format!("threshold must be a number or \"auto\", got {s:?}")).into()),
        }
    }

    pub fn config(&self, design_rate_hz: f64) -> Result<DetectorConfig> {
        let cfg = DetectorConfig {
            design_rate_hz,
            threshold: self.rule()?,
            refractory_s: self.refractory_s,
            ..DetectorConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub initial_mode: OperatingMode,
    pub fifo_capacity: usize,
    pub adc_buffer: usize,
    pub battery_level: f64,
    pub check_invariants: bool,
}

impl Default for SimSection {
    fn default() -> Self {
        let d = SimConfig::default();
        Self {
            initial_mode: d.initial_mode,
            fifo_capacity: d.fifo_capacity,
            adc_buffer: d.adc_buffer,
            battery_level: d.battery_level,
            check_invariants: d.check_invariants,
        }
    }
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: Self = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        cfg.node.validate()?;
        cfg.adam.validate(&cfg.node)?;
        cfg.policy.validate()?;
        Battery::new(cfg.battery.capacity_mah, cfg.battery.voltage_v)?;
        cfg.detector.rule()?;
        Ok(cfg)
    }

    pub fn sim_config(&self) -> Result<SimConfig> {
        let cfg = SimConfig {
            node: self.node.clone(),
            adam: self.adam.clone(),
            detector: self.detector.config(self.node.sample_rate_hz)?,
            policy: self.policy.clone(),
            initial_mode: self.sim.initial_mode,
            fifo_capacity: self.sim.fifo_capacity,
            adc_buffer: self.sim.adc_buffer,
            battery_level: self.sim.battery_level,
            check_invariants: self.sim.check_invariants,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg: FileConfig = toml::from_str("").unwrap();
        let sim = cfg.sim_config().unwrap();
        assert_eq!(sim, SimConfig::default());
        assert_eq!(cfg.detector.tolerance_samples, 50);
    }

    #[test]
    fn fixed_threshold_and_sections() {
        let cfg: FileConfig = toml::from_str(
            r#"
            seed = 9
            [detector]
            threshold = 5000.0
            refractory_s = 0.25
            tolerance_samples = 30
            [sim]
            initial_mode = "raw"
            [node]
            cnn_model = "20_20_100"
            "#,
        )
        .unwrap();
        let sim = cfg.sim_config().unwrap();
        assert_eq!(sim.detector.threshold, ThresholdRule::Fixed(5000.0));
        assert_eq!(sim.detector.refractory_s, 0.25);
        assert_eq!(sim.initial_mode, OperatingMode::RawData);
        assert_eq!(sim.node.cnn_model, "20_20_100");
        assert_eq!(cfg.seed, 9);
    }

    #[test]
    fn bad_threshold_name_is_rejected() {
        let cfg: FileConfig = toml::from_str("[detector]\nthreshold = \"adaptive\"").unwrap();
        assert!(cfg.sim_config().is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<FileConfig>("[sim]\nspeed = 2").is_err());
    }
}
