use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use xxz_defects::hamiltonian::ChainSpec;
use xxz_defects::protocols::{Detuning, Frame, ProtocolKind, ProtocolSpec, SweepParameter};

use crate::CliError;

pub const SCHEMA_VERSION: &str = "1";

/// One run document. Energies are in units of J, times in units of 1/J.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: String,
    pub chain: ChainSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<SpectrumConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protocol: Option<ProtocolConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    pub excitations: usize,
    /// Band membership tolerance; defaults to 3J²/(JΔ + d).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    pub kind: ProtocolKind,
    pub sites: Vec<usize>,
    #[serde(default)]
    pub detuning: Detuning,
    #[serde(default)]
    pub frame: Frame,
    pub horizon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshots: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub parameter: String,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            CliError::Config(format!(
                "at `{path}` (line {}, column {}): {inner}",
                inner.line(),
                inner.column()
            ))
        })?;
        if config.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "unsupported schema_version \"{}\", expected \"{SCHEMA_VERSION}\"",
                config.schema_version
            )));
        }
        Ok(config)
    }

    pub fn spectrum(&self) -> Result<&SpectrumConfig, CliError> {
        self.spectrum
            .as_ref()
            .ok_or_else(|| CliError::Config("missing `spectrum` section".into()))
    }

    pub fn protocol_spec(&self) -> Result<ProtocolSpec, CliError> {
        let p = self
            .protocol
            .as_ref()
            .ok_or_else(|| CliError::Config("missing `protocol` section".into()))?;
        let mut spec = ProtocolSpec::new(p.kind, self.chain.clone(), p.sites.clone(), p.horizon)
            .with_detuning(p.detuning.clone())
            .with_frame(p.frame);
        if let Some(n) = p.snapshots {
            spec.snapshots = n;
        }
        if let Some(t) = p.tolerance {
            spec.tolerance = t;
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn sweep(&self) -> Result<(SweepParameter, &[f64]), CliError> {
        let s = self
            .sweep
            .as_ref()
            .ok_or_else(|| CliError::Config("missing `sweep` section".into()))?;
        let parameter = s
            .parameter
            .parse()
            .map_err(|e: xxz_defects::Error| CliError::Config(format!("at `sweep.parameter`: {e}")))?;
        Ok((parameter, &s.values))
    }

    /// Applies a `--frame` override so that the echoed config reproduces the run.
    pub fn override_frame(&mut self, frame: Frame) {
        if let Some(p) = self.protocol.as_mut() {
            p.frame = frame;
        }
    }

    pub fn output_dir(&self) -> Option<&str> {
        self.output.as_ref().map(|o| o.dir.as_str())
    }
}
