//! Typed hyperparameter spaces: parameter specs, raw configurations, the
//! numeric encoding used by the surrogate, and the unit-cube mapping used by
//! the optimizer.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Stage};

/// A raw configuration value: a number or a category label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RawValue {
    Number(f64),
    Label(String),
}

impl RawValue {
    pub fn as_number(&self) -> Option<f64> {
        match self {
            RawValue::Number(v) => Some(*v),
            RawValue::Label(_) => None,
        }
    }

    pub fn as_label(&self) -> Option<&str> {
        match self {
            RawValue::Number(_) => None,
            RawValue::Label(l) => Some(l),
        }
    }
}

/// A raw configuration: parameter name to value.
pub type RawConfig = BTreeMap<String, RawValue>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParamKind {
    Continuous {
        lo: f64,
        hi: f64,
        #[serde(default)]
        log_scale: bool,
    },
    Integer {
        lo: i64,
        hi: i64,
        #[serde(default)]
        log_scale: bool,
    },
    Categorical { categories: Vec<String> },
}

/// Specification of one hyperparameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: ParamKind,
    pub default: RawValue,
}

impl ParamSpec {
    pub fn continuous(name: &str, lo: f64, hi: f64, log_scale: bool, default: f64) -> Self {
        ParamSpec {
            name: name.to_string(),
            kind: ParamKind::Continuous { lo, hi, log_scale },
            default: RawValue::Number(default),
        }
    }

    pub fn integer(name: &str, lo: i64, hi: i64, default: i64) -> Self {
        ParamSpec {
            name: name.to_string(),
            kind: ParamKind::Integer { lo, hi, log_scale: false },
            default: RawValue::Number(default as f64),
        }
    }

    pub fn categorical(name: &str, categories: &[&str], default: &str) -> Self {
        ParamSpec {
            name: name.to_string(),
            kind: ParamKind::Categorical {
                categories: categories.iter().map(|s| s.to_string()).collect(),
            },
            default: RawValue::Label(default.to_string()),
        }
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self.kind, ParamKind::Categorical { .. })
    }

    /// Raw numeric bounds for numeric kinds; `(0, m-1)` index bounds for
    /// categorical.
    pub fn numeric_bounds(&self) -> (f64, f64) {
        match &self.kind {
            ParamKind::Continuous { lo, hi, .. } => (*lo, *hi),
            ParamKind::Integer { lo, hi, .. } => (*lo as f64, *hi as f64),
            ParamKind::Categorical { categories } => (0.0, (categories.len() - 1) as f64),
        }
    }

    fn validate(&self) -> Result<()> {
        let err = |msg: String| Err(Error::validation(Stage::Kb, msg));
        match &self.kind {
            ParamKind::Continuous { lo, hi, log_scale } => {
                if !(lo < hi) {
                    return err(format!("param '{}': lo must be < hi", self.name));
                }
                if *log_scale && *lo <= 0.0 {
                    return err(format!("param '{}': log_scale requires lo > 0", self.name));
                }
            }
            ParamKind::Integer { lo, hi, log_scale } => {
                if !(lo < hi) {
                    return err(format!("param '{}': lo must be < hi", self.name));
                }
                if *log_scale && *lo <= 0 {
                    return err(format!("param '{}': log_scale requires lo > 0", self.name));
                }
            }
            ParamKind::Categorical { categories } => {
                if categories.len() < 2 {
                    return err(format!("param '{}': needs >= 2 categories", self.name));
                }
                let mut sorted = categories.clone();
                sorted.sort();
                sorted.dedup();
                if sorted.len() != categories.len() {
                    return err(format!("param '{}': duplicate categories", self.name));
                }
            }
        }
        self.check_value(&self.default)
            .map_err(|e| Error::validation(Stage::Kb, format!("param '{}': invalid default: {}", self.name, e)))
    }

    /// Check a raw value against this spec (bounds, integrality, known label).
    pub fn check_value(&self, value: &RawValue) -> std::result::Result<(), String> {
        match (&self.kind, value) {
            (ParamKind::Continuous { lo, hi, .. }, RawValue::Number(v)) => {
                if !v.is_finite() || v < lo || v > hi {
                    return Err(format!("value {} outside [{}, {}]", v, lo, hi));
                }
                Ok(())
            }
            (ParamKind::Integer { lo, hi, .. }, RawValue::Number(v)) => {
                if !v.is_finite() || v.fract() != 0.0 {
                    return Err(format!("value {} is not an integer", v));
                }
                let i = *v as i64;
                if i < *lo || i > *hi {
                    return Err(format!("value {} outside [{}, {}]", i, lo, hi));
                }
                Ok(())
            }
            (ParamKind::Categorical { categories }, RawValue::Label(l)) => {
                if categories.iter().any(|c| c == l) {
                    Ok(())
                } else {
                    Err(format!("unknown category '{}'", l))
                }
            }
            (_, RawValue::Label(l)) => Err(format!("expected a number, got label '{}'", l)),
            (_, RawValue::Number(v)) => Err(format!("expected a category label, got number {}", v)),
        }
    }
}

/// Ordered list of parameter specs for one algorithm. The order defines the
/// dimension order of every encoded vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HyperparameterSpace {
    pub params: Vec<ParamSpec>,
}

impl HyperparameterSpace {
    pub fn new(params: Vec<ParamSpec>) -> Result<Self> {
        let space = HyperparameterSpace { params };
        space.validate()?;
        Ok(space)
    }

    pub fn validate(&self) -> Result<()> {
        if self.params.is_empty() {
            return Err(Error::validation(Stage::Kb, "space has no parameters"));
        }
        let mut names: Vec<&str> = self.params.iter().map(|p| p.name.as_str()).collect();
        names.sort();
        names.dedup();
        if names.len() != self.params.len() {
            return Err(Error::validation(Stage::Kb, "duplicate parameter names"));
        }
        for p in &self.params {
            p.validate()?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.params.iter().map(|p| p.name.clone()).collect()
    }

    pub fn param(&self, name: &str) -> Option<&ParamSpec> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn default_config(&self) -> RawConfig {
        self.params
            .iter()
            .map(|p| (p.name.clone(), p.default.clone()))
            .collect()
    }

    /// Check a config has exactly this space's keys with valid values.
    pub fn check_config(&self, config: &RawConfig) -> std::result::Result<(), String> {
        for p in &self.params {
            let v = config
                .get(&p.name)
                .ok_or_else(|| format!("missing parameter '{}'", p.name))?;
            p.check_value(v).map_err(|e| format!("parameter '{}': {}", p.name, e))?;
        }
        if config.len() != self.params.len() {
            let extra: Vec<&str> = config
                .keys()
                .filter(|k| self.param(k).is_none())
                .map(|k| k.as_str())
                .collect();
            return Err(format!("unknown parameters: {}", extra.join(", ")));
        }
        Ok(())
    }

    /// Encode a raw config as a length-k real vector: continuous values as-is
    /// (log10-transformed when log-scaled), integers as reals, categories as
    /// ordinal indices.
    pub fn encode(&self, config: &RawConfig) -> Result<Vec<f64>> {
        self.check_config(config)
            .map_err(|e| Error::validation(Stage::Kb, e))?;
        let mut out = Vec::with_capacity(self.params.len());
        for p in &self.params {
            let v = &config[&p.name];
            let enc = match (&p.kind, v) {
                (ParamKind::Continuous { log_scale, .. }, RawValue::Number(x)) => {
                    if *log_scale {
                        x.log10()
                    } else {
                        *x
                    }
                }
                (ParamKind::Integer { .. }, RawValue::Number(x)) => *x,
                (ParamKind::Categorical { categories }, RawValue::Label(l)) => {
                    categories.iter().position(|c| c == l).expect("checked") as f64
                }
                _ => unreachable!("check_config validated kinds"),
            };
            out.push(enc);
        }
        Ok(out)
    }

    /// Invert [`encode`](Self::encode). Integer dimensions are rounded to the
    /// nearest integer and categorical dimensions to the nearest index, both
    /// clamped into bounds.
    pub fn decode(&self, encoded: &[f64]) -> Result<RawConfig> {
        if encoded.len() != self.params.len() {
            return Err(Error::validation(
                Stage::Kb,
                format!("encoded vector has {} dims, space has {}", encoded.len(), self.params.len()),
            ));
        }
        let mut out = RawConfig::new();
        for (p, &e) in self.params.iter().zip(encoded) {
            let v = match &p.kind {
                ParamKind::Continuous { log_scale, .. } => {
                    RawValue::Number(if *log_scale { 10f64.powf(e) } else { e })
                }
                ParamKind::Integer { lo, hi, .. } => {
                    RawValue::Number((e.round() as i64).clamp(*lo, *hi) as f64)
                }
                ParamKind::Categorical { categories } => {
                    let idx = (e.round() as i64).clamp(0, categories.len() as i64 - 1) as usize;
                    RawValue::Label(categories[idx].clone())
                }
            };
            out.insert(p.name.clone(), v);
        }
        Ok(out)
    }

    /// Encoded-scale bounds per dimension (log10 applied to log-scaled
    /// continuous parameters).
    pub fn encoded_bounds(&self) -> Vec<(f64, f64)> {
        self.params
            .iter()
            .map(|p| match &p.kind {
                ParamKind::Continuous { lo, hi, log_scale } => {
                    if *log_scale {
                        (lo.log10(), hi.log10())
                    } else {
                        (*lo, *hi)
                    }
                }
                ParamKind::Integer { lo, hi, .. } => (*lo as f64, *hi as f64),
                ParamKind::Categorical { categories } => (0.0, (categories.len() - 1) as f64),
            })
            .collect()
    }

    /// Map a unit-cube point to a valid config: linear in encoded scale,
    /// integers and category indices rounded.
    pub fn config_from_unit(&self, u: &[f64]) -> Result<RawConfig> {
        if u.len() != self.params.len() {
            return Err(Error::validation(
                Stage::Optimizer,
                format!("unit point has {} dims, space has {}", u.len(), self.params.len()),
            ));
        }
        let bounds = self.encoded_bounds();
        let encoded: Vec<f64> = u
            .iter()
            .zip(&bounds)
            .map(|(&ui, &(lo, hi))| lo + ui.clamp(0.0, 1.0) * (hi - lo))
            .collect();
        self.decode(&encoded)
    }

    /// Map a valid config to its canonical unit-cube point.
    pub fn unit_from_config(&self, config: &RawConfig) -> Result<Vec<f64>> {
        let encoded = self.encode(config)?;
        let bounds = self.encoded_bounds();
        Ok(encoded
            .iter()
            .zip(&bounds)
            .map(|(&e, &(lo, hi))| if hi > lo { (e - lo) / (hi - lo) } else { 0.0 })
            .collect())
    }

    /// Uniform sample: log-uniform over log-scaled dimensions, uniform over
    /// categories.
    pub fn sample_config(&self, rng: &mut impl rand::Rng) -> RawConfig {
        let u: Vec<f64> = (0..self.params.len()).map(|_| rng.random()).collect();
        self.config_from_unit(&u).expect("dims match")
    }

    /// Stable hash of the canonical JSON form, for model fingerprints.
    pub fn fingerprint(&self) -> u64 {
        let json = serde_json::to_string(self).expect("space serializes");
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        for &b in json.as_bytes() {
            h = (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3);
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn svm_like_space() -> HyperparameterSpace {
        HyperparameterSpace::new(vec![
            ParamSpec::continuous("C", 1e-3, 1e3, true, 1.0),
            ParamSpec::continuous("gamma", 0.0, 1.0, false, 0.5),
            ParamSpec::integer("degree", 1, 5, 3),
            ParamSpec::categorical("kernel", &["linear", "poly", "rbf"], "rbf"),
        ])
        .unwrap()
    }

    #[test]
    fn encode_log_continuous_at_one_is_zero() {
        let space = svm_like_space();
        let mut cfg = space.default_config();
        cfg.insert("C".into(), RawValue::Number(1.0));
        let enc = space.encode(&cfg).unwrap();
        assert_eq!(enc[0], 0.0);
    }

    #[test]
    fn encode_categorical_is_ordinal_index() {
        let space = svm_like_space();
        let cfg = space.default_config();
        let enc = space.encode(&cfg).unwrap();
        assert_eq!(enc[3], 2.0); // "rbf"
    }

    #[test]
    fn default_config_round_trips_exactly() {
        let space = svm_like_space();
        let cfg = space.default_config();
        let enc = space.encode(&cfg).unwrap();
        let back = space.decode(&enc).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn out_of_bounds_and_unknown_category_error() {
        let space = svm_like_space();
        let mut cfg = space.default_config();
        cfg.insert("gamma".into(), RawValue::Number(2.0));
        assert!(space.encode(&cfg).is_err());
        let mut cfg = space.default_config();
        cfg.insert("kernel".into(), RawValue::Label("sigmoid".into()));
        assert!(space.encode(&cfg).is_err());
    }

    #[test]
    fn config_key_mismatch_is_rejected() {
        let space = svm_like_space();
        let mut cfg = space.default_config();
        cfg.remove("degree");
        assert!(space.check_config(&cfg).is_err());
        let mut cfg = space.default_config();
        cfg.insert("extra".into(), RawValue::Number(1.0));
        assert!(space.check_config(&cfg).is_err());
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(HyperparameterSpace::new(vec![ParamSpec::continuous("x", 1.0, 1.0, false, 1.0)]).is_err());
        assert!(HyperparameterSpace::new(vec![ParamSpec::continuous("x", -1.0, 1.0, true, 0.5)]).is_err());
        assert!(HyperparameterSpace::new(vec![ParamSpec::categorical("k", &["only"], "only")]).is_err());
        // Default outside bounds.
        assert!(HyperparameterSpace::new(vec![ParamSpec::continuous("x", 0.0, 1.0, false, 2.0)]).is_err());
    }

    #[test]
    fn space_json_round_trip() {
        let space = svm_like_space();
        let json = serde_json::to_string(&space).unwrap();
        let back: HyperparameterSpace = serde_json::from_str(&json).unwrap();
        assert_eq!(space, back);
    }

    proptest! {
        #[test]
        fn unit_round_trip_is_idempotent(u in proptest::collection::vec(0.0f64..=1.0, 4)) {
            let space = svm_like_space();
            let cfg = space.config_from_unit(&u).unwrap();
            prop_assert!(space.check_config(&cfg).is_ok());
            let u2 = space.unit_from_config(&cfg).unwrap();
            let cfg2 = space.config_from_unit(&u2).unwrap();
            prop_assert_eq!(cfg, cfg2);
        }
    }
}
