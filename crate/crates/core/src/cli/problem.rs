//! Problem files, named presets and the resolved form every run reduces to.

use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::tasks::TaskParams;
use super::CliError;
use crate::approx::{newton_map, newton_predicates};
use crate::function::{averaging_map, LayerFunctionSpec};
use crate::structure::{Disk, PredicateSpec, SampleBox, Structure};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    FiniteDeq,
    Iterate,
    NewtonBasins,
    Continuity,
    LimitExchange,
    Fit,
    Subsequence,
    Equicontinuity,
}

/// A problem document. `preset` may stand in for `structure` and `function`;
/// `params` holds the task parameters, with omitted keys taking the same
/// defaults as the command-line flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub structure: Option<Structure>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub function: Option<LayerFunctionSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    pub task: Task,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub params: Value,
}

/// Comma-separated coordinates of one state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Coords(pub Vec<f64>);

impl FromStr for Coords {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}")))
            .collect::<Result<Vec<_>, _>>()
            .map(Coords)
    }
}

/// Everything a task needs, after presets and defaults are applied.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub structure: Option<Structure>,
    pub function: Option<LayerFunctionSpec>,
    pub seed: u64,
    pub params: TaskParams,
}

impl Resolved {
    pub fn new(
        structure: Option<Structure>,
        function: Option<LayerFunctionSpec>,
        preset_name: Option<&str>,
        seed: u64,
        params: TaskParams,
    ) -> Result<Self, CliError> {
        let (structure, function) = match preset_name {
            Some(name) => {
                if structure.is_some() || function.is_some() {
                    return Err(CliError::Usage("`preset` replaces `structure` and `function`".into()));
                }
                let (s, f) = preset(name)?;
                (Some(s), Some(f))
            }
            None => (structure, function),
        };
        if let Some(f) = &function {
            f.validate()?;
        }
        let structure = match (structure, &function) {
            (Some(s), f) => {
                s.validate()?;
                if let Some(f) = f {
                    f.check_dim(s.dimension)?;
                }
                Some(s)
            }
            // a function with a fixed dimension gets coordinate predicates
            (None, Some(f)) => match f.validate()? {
                Some(d) => Some(Structure::new(d, PredicateSpec::coordinates(d), Disk::default())?),
                None => None,
            },
            (None, None) => None,
        };
        Ok(Resolved { structure, function, seed, params })
    }

    pub fn from_problem(problem: ProblemFile, seed_override: Option<u64>) -> Result<Self, CliError> {
        let params = TaskParams::from_value(problem.task, problem.params)?;
        let seed = seed_override.or(problem.seed).unwrap_or(0);
        Resolved::new(problem.structure, problem.function, problem.preset.as_deref(), seed, params)
    }

    /// The problem file that reproduces this run.
    pub fn echo(&self) -> ProblemFile {
        ProblemFile {
            structure: self.structure.clone(),
            function: self.function.clone(),
            preset: None,
            task: self.params.task(),
            seed: Some(self.seed),
            params: self.params.to_value(),
        }
    }

    pub fn function(&self) -> Result<&LayerFunctionSpec, CliError> {
        self.function
            .as_ref()
            .ok_or_else(|| CliError::Usage("this task needs a function (`--function` or a problem file)".into()))
    }

    pub fn structure(&self) -> Result<&Structure, CliError> {
        self.structure
            .as_ref()
            .ok_or_else(|| CliError::Usage("this task needs a structure (`--function` or a problem file)".into()))
    }
}

/// Parses task parameters; `null` means all defaults.
pub fn parse_params<P: DeserializeOwned + Default>(v: Value) -> Result<P, CliError> {
    if v.is_null() {
        return Ok(P::default());
    }
    serde_json::from_value(v).map_err(|e| CliError::Json(format!("params: {e}")))
}

fn unit_interval_structure() -> Structure {
    Structure {
        dimension: 1,
        predicates: PredicateSpec::coordinates(1),
        disk: Disk::new([("P0", 1.0)]),
        region: Some(SampleBox::cube(1, 0.0, 1.0).expect("valid box")),
    }
}

/// Named structure/function pairs:
/// `identity`, `logistic`, `square` on `[0, 1]`;
/// `averaging` on `[-1, 1]^2`;
/// `newton:<coeffs>` on `[-2, 2]^2`, coefficients leading first.
pub fn preset(name: &str) -> Result<(Structure, LayerFunctionSpec), CliError> {
    let unknown = || CliError::Usage(format!("unknown preset `{name}`"));
    Ok(match name {
        "identity" => (unit_interval_structure(), LayerFunctionSpec::Identity),
        "logistic" => (unit_interval_structure(), LayerFunctionSpec::Logistic),
        "square" => (unit_interval_structure(), LayerFunctionSpec::Square),
        "averaging" => (
            Structure {
                dimension: 2,
                predicates: PredicateSpec::coordinates(2),
                disk: Disk::new([("P0", 1.0), ("P1", 1.0)]),
                region: Some(SampleBox::cube(2, -1.0, 1.0)?),
            },
            averaging_map(),
        ),
        _ => {
            let coeffs = name.strip_prefix("newton:").ok_or_else(unknown)?;
            let coeffs = Coords::from_str(coeffs).map_err(|e| CliError::Usage(format!("preset `{name}`: {e}")))?;
            (
                Structure {
                    dimension: 2,
                    predicates: newton_predicates(),
                    disk: Disk::new([("re", 2.0), ("im", 2.0)]),
                    region: Some(SampleBox::cube(2, -2.0, 2.0)?),
                },
                newton_map(&coeffs.0)?,
            )
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for name in ["identity", "logistic", "square", "averaging", "newton:1,0,-1"] {
            let (s, f) = preset(name).unwrap();
            s.validate().unwrap();
            f.check_dim(s.dimension).unwrap();
        }
        assert!(preset("cubic").is_err());
        assert!(preset("newton:1,x").is_err());
        assert!(preset("newton:0").is_err());
    }

    #[test]
    fn problem_rejects_unknown_keys() {
        let bad = r#"{"task": "finite-deq", "params": {"map": [1]}, "colour": 1}"#;
        assert!(serde_json::from_str::<ProblemFile>(bad).is_err());
        let bad = r#"{"task": "finite-deq", "params": {"map": [1], "colour": 1}}"#;
        let p: ProblemFile = serde_json::from_str(bad).unwrap();
        assert!(Resolved::from_problem(p, None).is_err());
        let bad = r#"{"task": "deq"}"#;
        assert!(serde_json::from_str::<ProblemFile>(bad).is_err());
    }

    #[test]
    fn coords_parse() {
        assert_eq!("0.5, -1".parse::<Coords>().unwrap(), Coords(vec![0.5, -1.0]));
        assert!("".parse::<Coords>().is_err());
    }
}
