//! Scenario configs: field geometry, source layout and sensor sampling, read
//! from TOML with `[field]`, `[sources]` and `[sampling]` sections.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{
    self, FieldConfig, Placement, PlacementMode, SamplingMode, SourceField, SourceSpec,
};
use crate::matrix::ObservationSet;
use crate::rng::{derive_seed, derived_rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KindSpec {
    #[default]
    Isotropic,
    Skew,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourcesConfig {
    pub kind: KindSpec,
    /// Number of sources; benchmark suites override it per true count.
    pub count: usize,
    pub placement: PlacementMode,
    pub min_separation_km: f64,
    pub margin_km: f64,
    /// Skew triples are drawn uniformly from `[-skew_range, skew_range]`.
    pub skew_range: f64,
    /// Explicit positions in km; when set, `count` and `placement` are ignored.
    pub positions: Option<Vec<[f64; 2]>>,
}

impl Default for SourcesConfig {
    fn default() -> Self {
        let p = Placement::default();
        Self {
            kind: KindSpec::Isotropic,
            count: 2,
            placement: p.mode,
            min_separation_km: p.min_separation_km,
            margin_km: p.margin_km,
            skew_range: 0.25,
            positions: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingConfig {
    pub sensor_count: usize,
    pub noise_sd: f64,
    pub mode: SamplingMode,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            sensor_count: 4500,
            noise_sd: 0.01,
            mode: SamplingMode::Uniform,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    pub field: FieldConfig,
    pub sources: SourcesConfig,
    pub sampling: SamplingConfig,
}

/// One generated instance.
#[derive(Debug, Clone)]
pub struct Instance {
    pub field: SourceField,
    pub observations: ObservationSet,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.field.validate()?;
        if self.sampling.sensor_count == 0 {
            return Err(Error::Parameter("sensor_count must be at least 1".into()));
        }
        if !(self.sampling.noise_sd >= 0.0) {
            return Err(Error::Parameter("noise_sd must be nonnegative".into()));
        }
        if !(self.sources.skew_range >= 0.0 && self.sources.skew_range < 1.0) {
            return Err(Error::Parameter("skew_range must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn placement(&self) -> Placement {
        Placement {
            mode: self.sources.placement,
            min_separation_km: self.sources.min_separation_km,
            margin_km: self.sources.margin_km,
        }
    }

    /// Sources for `count` emitters, placed and parameterized from `seed`.
    pub fn make_sources(&self, count: usize, seed: u64) -> Result<Vec<SourceSpec>> {
        let positions: Vec<(f64, f64)> = match &self.sources.positions {
            Some(p) => p.iter().map(|v| (v[0], v[1])).collect(),
            None => fields::place_sources(count, &self.placement(), self.field.diameter_km, derive_seed(seed, &[0]))?,
        };
        let power = self.field.power;
        Ok(match self.sources.kind {
            KindSpec::Isotropic => positions.into_iter().map(|p| SourceSpec::isotropic(p, power)).collect(),
            KindSpec::Skew => {
                let mut rng = derived_rng(seed, &[1]);
                positions
                    .into_iter()
                    .map(|p| {
                        let (d1, d2, w) = fields::random_skew_params(self.sources.skew_range, &mut rng);
                        SourceSpec::skew(p, power, d1, d2, w)
                    })
                    .collect()
            }
        })
    }

    /// Field and observations for `count` sources; everything derives from `seed`.
    pub fn generate(&self, count: usize, seed: u64) -> Result<Instance> {
        self.validate()?;
        let sources = self.make_sources(count, seed)?;
        let field = fields::generate_field(&sources, &self.field)?;
        let observations = fields::sample_observations(
            &field,
            &self.field,
            self.sampling.sensor_count,
            self.sampling.noise_sd,
            self.sampling.mode,
            derive_seed(seed, &[2]),
        )?;
        Ok(Instance { field, observations })
    }

    pub fn from_toml_str(text: &str, path: &Path) -> Result<Self> {
        let scenario: Scenario = toml::from_str(text).map_err(|e| toml_error(e, text, path))?;
        scenario.validate().map_err(|e| Error::Config {
            path: path.to_path_buf(),
            line: 0,
            message: e.to_string(),
        })?;
        Ok(scenario)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }
}

/// Maps a TOML error to a config error carrying the 1-based line number.
pub(crate) fn toml_error(e: toml::de::Error, text: &str, path: &Path) -> Error {
    let line = e
        .span()
        .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
        .unwrap_or(0);
    Error::Config {
        path: path.to_path_buf(),
        line,
        message: e.message().to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"
[field]
n = 30
diameter_km = 15.0

[sources]
kind = "isotropic"
count = 3
placement = "random"

[sampling]
sensor_count = 500
noise_sd = 0.01
"#;

    #[test]
    fn parse_and_generate() {
        let s = Scenario::from_toml_str(EXAMPLE, Path::new("x.toml")).unwrap();
        assert_eq!(s.field.n, 30);
        assert_eq!(s.field.freq_khz, 5.0);
        assert_eq!(s.sources.count, 3);
        let a = s.generate(3, 9).unwrap();
        let b = s.generate(3, 9).unwrap();
        assert_eq!(a.field, b.field);
        assert_eq!(a.observations, b.observations);
        assert_eq!(a.field.sources.len(), 3);
        assert!(a.observations.len() <= 500);
        let round = Scenario::from_toml_str(&s.to_toml(), Path::new("y.toml")).unwrap();
        assert_eq!(round, s);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let bad = EXAMPLE.replace("count = 3", "count = \"three\"");
        match Scenario::from_toml_str(&bad, Path::new("bad.toml")) {
            Err(Error::Config { line, .. }) => assert_eq!(line, 8),
            other => panic!("unexpected {other:?}"),
        }
        let unknown = EXAMPLE.replace("noise_sd = 0.01", "noise = 0.01");
        match Scenario::from_toml_str(&unknown, Path::new("bad.toml")) {
            Err(Error::Config { line, message, .. }) => {
                assert_eq!(line, 13);
                assert!(message.contains("noise"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let invalid = EXAMPLE.replace("n = 30", "n = 1");
        assert!(matches!(
            Scenario::from_toml_str(&invalid, Path::new("bad.toml")),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn skew_scenarios_draw_admissible_params() {
        let mut s = Scenario::default();
        s.field.n = 20;
        s.sources.kind = KindSpec::Skew;
        s.sampling.sensor_count = 100;
        let inst = s.generate(2, 4).unwrap();
        for src in &inst.field.sources {
            match src.kind {
                fields::SourceKind::Skew { delta1, delta2, omega } => {
                    assert!(delta1.abs() <= 0.25 && delta2.abs() <= 0.25 && omega.abs() <= 0.25);
                }
                _ => panic!("expected skew source"),
            }
        }
    }

    #[test]
    fn explicit_positions() {
        let mut s = Scenario::default();
        s.field.n = 20;
        s.sources.positions = Some(vec![[3.0, 4.0], [10.0, 11.0]]);
        let inst = s.generate(7, 0).unwrap();
        assert_eq!(inst.field.sources.len(), 2);
        assert_eq!(inst.field.sources[1].position, (10.0, 11.0));
    }
}
