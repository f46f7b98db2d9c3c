//! Run configuration: a TOML file with an `[economy]` block, a `[command]`
//! block and, in written manifests, a `[manifest]` block.
//!
//! Numbers may be written as integers, decimals or exact fractions `"p/q"`.

use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::ToPrimitive;
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::economy::{Economy, ProfitNetworkEffect, TypeDistribution, ValuationModel};
use crate::verification::LargeMarketFamily;

/// A real number read from a decimal or an exact fraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Number(pub f64);

impl Number {
    pub fn get(self) -> f64 {
        self.0
    }
}

impl FromStr for Number {
    type Err = String;

    fn from_str(text: &str) -> Result<Self, String> {
        let text = text.trim();
        let value = if text.contains('/') {
            let ratio = Ratio::<i64>::from_str(text).map_err(|e| format!("bad fraction {text:?}: {e}"))?;
            ratio.to_f64().ok_or_else(|| format!("fraction {text:?} is not representable"))?
        } else {
            text.parse::<f64>().map_err(|e| format!("bad number {text:?}: {e}"))?
        };
        if !value.is_finite() {
            return Err(format!("number {text:?} is not finite"));
        }
        Ok(Number(value))
    }
}

impl Serialize for Number {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.0)
    }
}

impl<'de> Deserialize<'de> for Number {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct NumberVisitor;

        impl Visitor<'_> for NumberVisitor {
            type Value = Number;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a number or a fraction string \"p/q\"")
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Number, E> {
                Ok(Number(v as f64))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Number, E> {
                Ok(Number(v as f64))
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Number, E> {
                if v.is_finite() {
                    Ok(Number(v))
                } else {
                    Err(E::custom("number is not finite"))
                }
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Number, E> {
                v.parse().map_err(E::custom)
            }
        }

        deserializer.deserialize_any(NumberVisitor)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistributionSpec {
    Uniform {
        #[serde(default = "unit")]
        upper: Number,
    },
    /// `(type, cdf)` knots from `(0, 0)` to `(upper, 1)`.
    PiecewiseLinear { knots: Vec<[Number; 2]> },
}

fn unit() -> Number {
    Number(1.0)
}

impl Default for DistributionSpec {
    fn default() -> Self {
        DistributionSpec::Uniform { upper: unit() }
    }
}

impl DistributionSpec {
    pub fn build(&self) -> crate::Result<TypeDistribution> {
        match self {
            DistributionSpec::Uniform { upper } => TypeDistribution::uniform(upper.get()),
            DistributionSpec::PiecewiseLinear { knots } => {
                TypeDistribution::piecewise_linear(knots.iter().map(|[t, f]| (t.get(), f.get())).collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ValuationSpec {
    /// `v = θ`.
    None,
    /// `v(θ, 1) = πθ`, `v(θ, k ≥ 2) = (1 − π)θ`.
    Pi { pi: Number },
    /// `v(θ, k) = slopes[k − 1] θ`.
    Linear { slopes: Vec<Number> },
    /// `v(θ, k) = θ (scale − decay / k)`.
    Saturating { scale: Number, decay: Number },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EconomySpec {
    pub n: usize,
    pub cost: Number,
    #[serde(default)]
    pub distribution: DistributionSpec,
    pub valuation: ValuationSpec,
    /// `φ(k)` for `k = 0..=n`; zero when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<Vec<Number>>,
}

impl EconomySpec {
    pub fn build(&self) -> crate::Result<Economy> {
        let valuation = match &self.valuation {
            ValuationSpec::None => ValuationModel::NoNetworkEffects,
            ValuationSpec::Pi { pi } => ValuationModel::PiFamily { pi: pi.get() },
            ValuationSpec::Linear { slopes } => ValuationModel::LinearInK { slopes: slopes.iter().map(|s| s.get()).collect() },
            ValuationSpec::Saturating { scale, decay } => ValuationModel::saturating(scale.get(), decay.get(), self.n),
        };
        let phi = match &self.phi {
            Some(values) => ProfitNetworkEffect::from_table(values.iter().map(|v| v.get()).collect())?,
            None => ProfitNetworkEffect::zero(self.n),
        };
        Economy::new(self.n, self.cost.get(), self.distribution.build()?, valuation, phi)
    }

    /// `(π, c)` when this is the two-buyer benchmark family on `[0, 1]`.
    pub fn benchmark_parameters(&self) -> Option<(f64, f64)> {
        let unit_uniform = matches!(self.distribution, DistributionSpec::Uniform { upper } if upper.get() == 1.0);
        let no_profit_effect = self.phi.as_ref().is_none_or(|p| p.iter().all(|v| v.get() == 0.0));
        match self.valuation {
            ValuationSpec::Pi { pi } if self.n == 2 && unit_uniform && no_profit_effect => Some((pi.get(), self.cost.get())),
            _ => None,
        }
    }
}

/// Economy family for the large-market check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilySpec {
    /// `g(k) = scale − decay / k`, `φ(k) = phi_weight · ln(1 + k)`.
    Saturating {
        scale: Number,
        decay: Number,
        phi_weight: Number,
        cost: Number,
        #[serde(default)]
        distribution: DistributionSpec,
    },
    Pi { pi: Number, cost: Number },
}

impl FamilySpec {
    pub fn build(&self) -> crate::Result<LargeMarketFamily> {
        match self {
            FamilySpec::Saturating { scale, decay, phi_weight, cost, distribution } => Ok(LargeMarketFamily::saturating(
                scale.get(),
                decay.get(),
                phi_weight.get(),
                cost.get(),
                distribution.build()?,
            )),
            FamilySpec::Pi { pi, cost } => LargeMarketFamily::pi_family(pi.get(), cost.get()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Operation {
    Solve,
    OracleCheck,
    Region,
    Interim,
    Triviality,
    Cutoffs,
    IndirectBuild,
    IndirectVerify,
    Limit,
    VerifyAll,
}

impl Operation {
    pub fn name(self) -> &'static str {
        match self {
            Operation::Solve => "solve",
            Operation::OracleCheck => "oracle-check",
            Operation::Region => "region",
            Operation::Interim => "interim",
            Operation::Triviality => "triviality",
            Operation::Cutoffs => "cutoffs",
            Operation::IndirectBuild => "indirect-build",
            Operation::IndirectVerify => "indirect-verify",
            Operation::Limit => "limit",
            Operation::VerifyAll => "verify-all",
        }
    }

    fn needs_economy(self) -> bool {
        !matches!(self, Operation::OracleCheck | Operation::Limit | Operation::VerifyAll)
    }

    /// Command keys accepted by this operation besides `operation` and `seed`.
    fn keys(self) -> &'static [&'static str] {
        match self {
            Operation::Solve => &["profile"],
            Operation::OracleCheck => &["economies", "profiles", "max_buyers"],
            Operation::Region => &["resolution"],
            Operation::Interim => &["buyer", "grid_points", "method", "draws"],
            Operation::Triviality | Operation::Cutoffs => &[],
            Operation::IndirectBuild => &["game", "grid_points", "draws"],
            Operation::IndirectVerify => &["game", "types", "deviations", "draws", "resolution"],
            Operation::Limit => &["family", "sizes", "replications", "threshold_tolerance", "fraction_tolerance"],
            Operation::VerifyAll => &["scale"],
        }
    }

    fn is_random(self, command: &CommandSpec, economy: Option<&EconomySpec>) -> bool {
        match self {
            Operation::OracleCheck | Operation::IndirectVerify | Operation::Limit | Operation::VerifyAll => true,
            Operation::Interim => command.method == Some(MethodSpec::MonteCarlo) || economy.is_some_and(|e| e.n != 2),
            Operation::IndirectBuild => economy.is_some_and(|e| e.n != 2),
            _ => false,
        }
    }
}

impl fmt::Display for Operation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodSpec {
    Quadrature,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GameSpec {
    Allpay,
    Gift,
    Exclusivity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleSpec {
    Full,
    Quick,
}

/// Operation parameters. Keys not used by the selected operation are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operation: Option<Operation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<Vec<Number>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub buyer: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<MethodSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub draws: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub economies: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profiles: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_buyers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub game: Option<GameSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub types: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deviations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sizes: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replications: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold_tolerance: Option<Number>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fraction_tolerance: Option<Number>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<ScaleSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<FamilySpec>,
}

impl CommandSpec {
    /// Names of the keys that are set.
    fn present_keys(&self) -> Vec<&'static str> {
        let flags = [
            ("profile", self.profile.is_some()),
            ("resolution", self.resolution.is_some()),
            ("buyer", self.buyer.is_some()),
            ("grid_points", self.grid_points.is_some()),
            ("method", self.method.is_some()),
            ("draws", self.draws.is_some()),
            ("economies", self.economies.is_some()),
            ("profiles", self.profiles.is_some()),
            ("max_buyers", self.max_buyers.is_some()),
            ("game", self.game.is_some()),
            ("types", self.types.is_some()),
            ("deviations", self.deviations.is_some()),
            ("sizes", self.sizes.is_some()),
            ("replications", self.replications.is_some()),
            ("threshold_tolerance", self.threshold_tolerance.is_some()),
            ("fraction_tolerance", self.fraction_tolerance.is_some()),
            ("scale", self.scale.is_some()),
            ("family", self.family.is_some()),
        ];
        flags.into_iter().filter(|(_, set)| *set).map(|(name, _)| name).collect()
    }
}

/// Output record appended to written configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestInfo {
    pub version: String,
    pub operation: Operation,
    /// SHA-256 of the resolved configuration without this block.
    pub config_sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub artifacts: Vec<Artifact>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Artifact {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub economy: Option<EconomySpec>,
    #[serde(default)]
    pub command: CommandSpec,
    /// Present in written manifests; ignored on input.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<ManifestInfo>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_toml(&self) -> Result<String, String> {
        toml::to_string(self).map_err(|e| e.to_string())
    }

    /// Fixes the operation and seed, then checks every requirement that
    /// does not need computation.
    pub fn resolve(mut self, operation: Option<Operation>, seed: Option<u64>) -> Result<(Operation, Self), String> {
        self.manifest = None;
        let operation = match (operation, self.command.operation) {
            (Some(a), Some(b)) if a != b => {
                return Err(format!("command line asks for {a} but the config names {b}"));
            }
            (Some(op), _) | (None, Some(op)) => op,
            (None, None) => return Err("no operation given on the command line or in [command]".into()),
        };
        self.command.operation = Some(operation);
        if seed.is_some() {
            self.command.seed = seed;
        }
        let allowed = operation.keys();
        if let Some(key) = self.command.present_keys().into_iter().find(|k| !allowed.contains(k)) {
            return Err(format!("key {key:?} is not used by {operation}"));
        }
        if operation.needs_economy() && self.economy.is_none() {
            return Err(format!("{operation} needs an [economy] block"));
        }
        if !operation.needs_economy() && self.economy.is_some() {
            return Err(format!("{operation} does not use an [economy] block"));
        }
        if operation.is_random(&self.command, self.economy.as_ref()) && self.command.seed.is_none() {
            return Err(format!("{operation} is randomised and needs an explicit seed"));
        }
        if !operation.is_random(&self.command, self.economy.as_ref()) && self.command.seed.is_some() {
            return Err(format!("{operation} is deterministic; remove the seed"));
        }
        match operation {
            Operation::Solve if self.command.profile.is_none() => return Err("solve needs a profile".into()),
            Operation::Limit if self.command.family.is_none() => return Err("limit needs a family".into()),
            Operation::IndirectBuild | Operation::IndirectVerify if self.command.game.is_none() => {
                return Err(format!("{operation} needs a game"));
            }
            _ => {}
        }
        let zero = [
            ("resolution", self.command.resolution),
            ("grid_points", self.command.grid_points),
            ("draws", self.command.draws),
            ("types", self.command.types),
            ("deviations", self.command.deviations),
            ("replications", self.command.replications),
        ]
        .into_iter()
        .find(|(_, v)| *v == Some(0));
        if let Some((key, _)) = zero {
            return Err(format!("{key} must be positive"));
        }
        Ok((operation, self))
    }
}
