//! Experiment configuration: parsed from JSON and validated before any
//! computation starts.

use std::path::PathBuf;

use dynmaxent::dynmaxent::ClosureSpec;
use dynmaxent::experiment::closure_spec;
use dynmaxent::{GammaSign, ModelParams, ScalarRhsConvention, Table, TimeScale, Variant};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Below this exponent the finite-volume scheme stops resolving the endpoint
/// singularity.
pub const MIN_EXPONENT: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    ScalarCompare,
    ScalarModifiedOnly,
    VectorCompare,
    VectorModifiedOnly,
    CovarianceSweep,
    SpectralGap,
    MomentMatch,
}

impl Kind {
    pub fn is_scalar(self) -> bool {
        matches!(self, Kind::ScalarCompare | Kind::ScalarModifiedOnly | Kind::CovarianceSweep)
    }

    /// Kinds that run the solver against the closures.
    pub fn is_comparison(self) -> bool {
        matches!(
            self,
            Kind::ScalarCompare | Kind::ScalarModifiedOnly | Kind::VectorCompare | Kind::VectorModifiedOnly
        )
    }

    pub fn variants(self) -> &'static [Variant] {
        match self {
            Kind::ScalarCompare | Kind::VectorCompare => &[Variant::Original, Variant::Modified],
            Kind::ScalarModifiedOnly | Kind::VectorModifiedOnly => &[Variant::Modified],
            _ => &[],
        }
    }

    fn table(self) -> Option<Table> {
        match self {
            Kind::ScalarCompare => Some(Table::One),
            Kind::ScalarModifiedOnly => Some(Table::Two),
            Kind::VectorCompare => Some(Table::Three),
            Kind::VectorModifiedOnly => Some(Table::Four),
            _ => None,
        }
    }
}

/// How a scalar `mu` entry maps to the exponent `α` of `ξ^{α−1}`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    /// Parameters are given as `alpha` and used as the exponent.
    #[default]
    Exponent,
    /// `α = 4Nμ`, the exponent of the vector model.
    FourNMu,
    /// `α = 2Nμ`.
    TwoNMu,
    /// `α = 2μ`.
    TwoMu,
}

/// One parameter point. Scalar kinds use `alpha` (or `mu` under a
/// non-exponent scaling); vector kinds need `gamma`, `eta` and `mu`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
}

fn one() -> f64 {
    1.0
}

fn default_closure_dt() -> f64 {
    1e-3
}

fn default_fp_sample_every() -> usize {
    20
}

fn default_closure_sample_every() -> usize {
    1
}

fn default_grid_n() -> usize {
    512
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Kind,
    #[serde(rename = "N", default = "one")]
    pub population_size: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<ParamSpec>,
    #[serde(default)]
    pub targets: Vec<ParamSpec>,
    /// Target values of `⟨ln ξ⟩` for `moment_match`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub moments: Vec<f64>,
    #[serde(default = "default_grid_n")]
    pub grid_n: usize,
    /// Solver step; absent means 0.9 of the stability limit.
    #[serde(default)]
    pub fp_dt: Option<f64>,
    #[serde(default = "default_closure_dt")]
    pub closure_dt: f64,
    /// End time; absent means run until the moments settle.
    #[serde(default, rename = "T")]
    pub horizon: Option<f64>,
    #[serde(default = "default_fp_sample_every")]
    pub fp_sample_every: usize,
    #[serde(default = "default_closure_sample_every")]
    pub closure_sample_every: usize,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub scalar_rhs_convention: ScalarRhsConvention,
    #[serde(default)]
    pub time_scale: TimeScale,
    #[serde(default)]
    pub gamma_sign: GammaSign,
    #[serde(default)]
    pub scaling: Scaling,
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub grid_n: Option<usize>,
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub out: Option<PathBuf>,
}

/// A config that passed validation, with parameters resolved to models.
#[derive(Debug, Clone)]
pub struct Validated {
    pub config: ExperimentConfig,
    pub out_dir: PathBuf,
    pub initial: Option<ModelParams>,
    pub targets: Vec<ModelParams>,
    /// Published table reproduced by this config, if any.
    pub table: Option<Table>,
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn positive(name: &str, v: f64) -> Result<(), CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive and finite, got {v}")))
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| invalid(format!("malformed config: {e}")))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(n) = o.grid_n {
            self.grid_n = n;
        }
        if let Some(dt) = o.dt {
            self.fp_dt = Some(dt);
        }
        if let Some(t) = o.horizon {
            self.horizon = Some(t);
        }
        if let Some(out) = &o.out {
            self.out_dir = Some(out.clone());
        }
    }

    fn resolve(&self, p: &ParamSpec, what: &str) -> Result<ModelParams, CliError> {
        let n = self.population_size;
        let model = if self.kind.is_scalar() {
            if p.gamma.is_some() || p.eta.is_some() {
                return Err(invalid(format!("{what}: scalar kinds take no gamma or eta")));
            }
            let alpha = match (self.scaling, p.alpha, p.mu) {
                (Scaling::Exponent, Some(a), None) => a,
                (Scaling::FourNMu, None, Some(mu)) => 4.0 * n * mu,
                (Scaling::TwoNMu, None, Some(mu)) => 2.0 * n * mu,
                (Scaling::TwoMu, None, Some(mu)) => 2.0 * mu,
                (Scaling::Exponent, _, _) => {
                    return Err(invalid(format!("{what}: scaling \"exponent\" needs exactly `alpha`")))
                }
                _ => return Err(invalid(format!("{what}: scaling {:?} needs exactly `mu`", self.scaling))),
            };
            if !alpha.is_finite() || alpha < MIN_EXPONENT {
                return Err(invalid(format!(
                    "{what}: alpha = {alpha} is below {MIN_EXPONENT}, where the discrete scheme is no longer reliable"
                )));
            }
            ModelParams::scalar(n, alpha)
        } else {
            let (Some(gamma), Some(eta), Some(mu), None) = (p.gamma, p.eta, p.mu, p.alpha) else {
                return Err(invalid(format!("{what}: vector kinds need exactly gamma, eta and mu")));
            };
            let exponent = 4.0 * n * mu;
            if !exponent.is_finite() || exponent < MIN_EXPONENT {
                return Err(invalid(format!(
                    "{what}: 4N*mu = {exponent} is below {MIN_EXPONENT}, where the discrete scheme is no longer reliable"
                )));
            }
            ModelParams::vector(n, gamma, eta, mu).with_gamma_sign(self.gamma_sign)
        };
        model.validate().map_err(|e| invalid(format!("{what}: {e}")))?;
        Ok(model)
    }

    /// Checks every precondition that can be checked without computing.
    pub fn validate(self) -> Result<Validated, CliError> {
        positive("N", self.population_size)?;
        positive("closure_dt", self.closure_dt)?;
        if let Some(dt) = self.fp_dt {
            positive("fp_dt", dt)?;
        }
        if let Some(t) = self.horizon {
            positive("T", t)?;
        }
        if self.grid_n < 2 {
            return Err(invalid(format!("grid_n must be at least 2, got {}", self.grid_n)));
        }
        if self.fp_sample_every == 0 || self.closure_sample_every == 0 {
            return Err(invalid("sample intervals must be at least 1"));
        }
        let out_dir = self
            .out_dir
            .clone()
            .ok_or_else(|| invalid("no output directory: set `out_dir` or pass --out"))?;

        let kind = self.kind;
        let initial = match (kind.is_comparison(), &self.initial) {
            (true, Some(p)) => Some(self.resolve(p, "initial")?),
            (true, None) => return Err(invalid(format!("{kind:?} needs `initial` parameters"))),
            (false, Some(_)) => return Err(invalid(format!("{kind:?} takes no `initial` parameters"))),
            (false, None) => None,
        };
        let targets = self
            .targets
            .iter()
            .enumerate()
            .map(|(k, p)| self.resolve(p, &format!("targets[{k}]")))
            .collect::<Result<Vec<_>, _>>()?;

        match kind {
            Kind::MomentMatch => {
                if self.moments.is_empty() || !targets.is_empty() {
                    return Err(invalid("moment_match needs a non-empty `moments` list and no `targets`"));
                }
                if let Some(m) = self.moments.iter().find(|m| !(m.is_finite() && **m < 0.25f64.ln())) {
                    return Err(invalid(format!("moment {m} is not a mean of ln xi; it must be below ln(1/4)")));
                }
            }
            _ => {
                if targets.is_empty() || !self.moments.is_empty() {
                    return Err(invalid(format!("{kind:?} needs a non-empty `targets` list and no `moments`")));
                }
            }
        }
        if matches!(kind, Kind::VectorCompare | Kind::VectorModifiedOnly) && targets.len() != 1 {
            return Err(invalid(format!("{kind:?} takes exactly one target, got {}", targets.len())));
        }
        if matches!(kind, Kind::SpectralGap) && self.grid_n < 64 {
            return Err(invalid(format!("spectral_gap needs grid_n >= 64, got {}", self.grid_n)));
        }
        if kind.variants().contains(&Variant::Original) {
            let spec: ClosureSpec = closure_spec(kind.is_scalar(), Variant::Original);
            for (what, p) in std::iter::once(("initial", initial.as_ref().expect("checked")))
                .chain(targets.iter().map(|t| ("target", t)))
            {
                if spec.is_applicable(&p.natural()).is_err() {
                    let exponent = p.natural().ln_xi;
                    return Err(invalid(format!(
                        "the original method needs an {what} exponent above 1 so that the mobility \
                         <xi ((ln xi)')^2> is finite; got {exponent} (use a modified-only kind instead)"
                    )));
                }
            }
        }

        let table = kind.table().filter(|t| {
            let cases = t.cases::<f64>();
            self.population_size == 1.0
                && self.gamma_sign == GammaSign::Standard
                && cases.len() == targets.len()
                && cases
                    .iter()
                    .zip(&targets)
                    .all(|((i, t), target)| Some(i) == initial.as_ref() && t == target)
        });

        Ok(Validated {
            config: self,
            out_dir,
            initial,
            targets,
            table,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table_one() -> ExperimentConfig {
        ExperimentConfig::parse(
            r#"{"kind": "scalar_compare", "initial": {"alpha": 2},
                "targets": [{"alpha": 1.1}, {"alpha": 1.5}, {"alpha": 2.5}, {"alpha": 3}],
                "out_dir": "x"}"#,
        )
        .unwrap()
    }

    #[test]
    fn recognises_published_table() {
        assert_eq!(table_one().validate().unwrap().table, Some(Table::One));
        let mut c = table_one();
        c.targets.pop();
        assert_eq!(c.validate().unwrap().table, None);
    }

    #[test]
    fn original_below_one_is_refused() {
        let mut c = table_one();
        c.targets[0] = ParamSpec { alpha: Some(0.7), ..ParamSpec::default() };
        let CliError::Config(msg) = c.validate().unwrap_err() else { panic!() };
        assert!(msg.contains("above 1"), "{msg}");
    }

    #[test]
    fn small_exponents_are_refused() {
        let mut c = table_one();
        c.kind = Kind::ScalarModifiedOnly;
        c.targets[0] = ParamSpec { alpha: Some(0.19), ..ParamSpec::default() };
        assert!(matches!(c.validate(), Err(CliError::Config(_))));
    }

    #[test]
    fn scaling_converts_mu() {
        let mut c = table_one();
        c.scaling = Scaling::TwoNMu;
        c.population_size = 2.0;
        c.initial = Some(ParamSpec { mu: Some(0.5), ..ParamSpec::default() });
        c.targets = vec![ParamSpec { mu: Some(0.75), ..ParamSpec::default() }];
        let v = c.validate().unwrap();
        assert_eq!(v.initial.unwrap(), ModelParams::scalar(2.0, 2.0));
        assert_eq!(v.targets[0], ModelParams::scalar(2.0, 3.0));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(ExperimentConfig::parse(r#"{"kind": "moment_match", "moments": [-2], "colour": 1}"#).is_err());
    }
}
