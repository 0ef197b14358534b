//! JSON configuration files. Unknown keys are rejected; missing keys take
//! their defaults.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;

use crate::decomposer::DemandConfig;
use crate::error::{DemandError, Result};
use crate::synthgen::SynthSpec;

fn parse<T: DeserializeOwned>(text: &str, what: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| DemandError::Config(format!("{what}: {e}")))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| DemandError::io(path, e))
}

fn as_config_error(e: DemandError) -> DemandError {
    match e {
        DemandError::Parameter(msg) => DemandError::Config(msg),
        other => other,
    }
}

pub fn parse_config(text: &str) -> Result<DemandConfig> {
    let cfg: DemandConfig = parse(text, "config")?;
    cfg.validate().map_err(as_config_error)?;
    Ok(cfg)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<DemandConfig> {
    parse_config(&read(path.as_ref())?)
}

pub fn parse_synth_spec(text: &str) -> Result<SynthSpec> {
    let spec: SynthSpec = parse(text, "synth spec")?;
    spec.validate().map_err(as_config_error)?;
    Ok(spec)
}

pub fn load_synth_spec(path: impl AsRef<Path>) -> Result<SynthSpec> {
    parse_synth_spec(&read(path.as_ref())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::ActivationKind;

    #[test]
    fn empty_object_gives_defaults() {
        assert_eq!(parse_config("{}").unwrap(), DemandConfig::default());
        assert_eq!(parse_synth_spec("{}").unwrap(), SynthSpec::default());
    }

    #[test]
    fn partial_nested_objects() {
        let cfg = parse_config(r#"{"lambda": 4, "activation": "identity", "adam": {"alpha": 0.1}, "mbp": {"enabled": false}}"#)
            .unwrap();
        assert_eq!(cfg.lambda, 4.0);
        assert_eq!(cfg.activation, ActivationKind::Identity);
        assert_eq!(cfg.adam.alpha, 0.1);
        assert_eq!(cfg.adam.beta2, 0.999);
        assert!(!cfg.mbp.enabled);
        assert_eq!(cfg.mbp.max_iter, 20);
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = parse_config(r#"{"lamda": 4}"#).unwrap_err().to_string();
        assert!(err.contains("lamda"), "{err}");
        let err = parse_config(r#"{"rank": {"window": 4}}"#).unwrap_err().to_string();
        assert!(err.contains("window"), "{err}");
        assert!(parse_synth_spec(r#"{"rank": [3]}"#).is_err());
    }

    #[test]
    fn invalid_values_are_config_errors() {
        assert!(matches!(parse_config(r#"{"lambda": 0.5}"#), Err(DemandError::Config(_))));
        assert!(matches!(parse_config(r#"{"activation": "relu"}"#), Err(DemandError::Config(_))));
        assert!(matches!(parse_synth_spec(r#"{"ranks": [3, 5]}"#), Err(DemandError::Config(_))));
        assert!(matches!(parse_config("not json"), Err(DemandError::Config(_))));
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = DemandConfig {
            seed: 99,
            lambda: 3.5,
            ..DemandConfig::default()
        };
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(parse_config(&text).unwrap(), cfg);
    }
}
