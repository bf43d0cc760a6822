//! JSON model files: alphabet names, adjacency, roof and expansion tables,
//! and an optional Markov matrix. Table keys are comma-joined symbol names.

use std::collections::BTreeMap;
use std::fmt;

use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::markov::{validate_markov, MarkovMeasure};
use crate::sft::{BlockCode, LocallyConstantFn, Sft, Symbol};

/// Table entries in file order. Duplicate keys are kept so validation can
/// report them.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table(pub Vec<(String, f64)>);

impl Serialize for Table {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_map(self.0.iter().map(|(k, v)| (k, v)))
    }
}

impl<'de> Deserialize<'de> for Table {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = Table;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a map from comma-joined words to numbers")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut m: A) -> std::result::Result<Table, A::Error> {
                let mut out = Vec::new();
                while let Some(entry) = m.next_entry::<String, f64>()? {
                    out.push(entry);
                }
                Ok(Table(out))
            }
        }
        d.deserialize_map(V)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FnSpec {
    pub depth: usize,
    pub table: Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub alphabet: Vec<String>,
    pub adjacency: Vec<Vec<u8>>,
    pub theta: f64,
    pub roof: FnSpec,
    pub fu: FnSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fs: Option<FnSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub markov: Option<Vec<Vec<f64>>>,
}

/// A validated model.
#[derive(Debug, Clone)]
pub struct Model {
    pub names: Vec<String>,
    pub sft: Sft,
    pub roof: LocallyConstantFn,
    pub fu: LocallyConstantFn,
    pub fs: LocallyConstantFn,
    pub markov: Option<MarkovMeasure>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigIssue {
    pub kind: &'static str,
    pub message: String,
}

impl ConfigIssue {
    fn from_error(e: &Error) -> Self {
        let kind = match e {
            Error::NotSquare { .. } | Error::NotBinary(..) | Error::AlphabetTooSmall(..) | Error::StrandedSymbol(_) => {
                "adjacency"
            }
            Error::BadTheta(_) => "theta",
            Error::Table(_) | Error::DepthTooLarge { .. } => "table",
            Error::NonPositiveFunction { .. } => "nonpositive",
            Error::SupportMismatch(..) | Error::RowSum(_) | Error::DimensionMismatch { .. } => "markov",
            _ => "invalid",
        };
        Self { kind, message: e.to_string() }
    }
}

pub const PRESETS: &[(&str, &str)] = &[
    ("full2_ln2ln6", include_str!("../presets/full2_ln2ln6.json")),
    ("bernoulli_dim3", include_str!("../presets/bernoulli_dim3.json")),
    ("golden_mean_const", include_str!("../presets/golden_mean_const.json")),
    ("curvature_minus1", include_str!("../presets/curvature_minus1.json")),
    ("full3_tail", include_str!("../presets/full3_tail.json")),
];

pub fn preset(name: &str) -> Option<ModelConfig> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| serde_json::from_str(text).expect("bundled preset parses"))
}

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

/// Deepest table accepted from a file; `n^depth` entries are stored.
pub const MAX_TABLE_DEPTH: usize = 8;

impl ModelConfig {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidParameter(format!("config does not parse: {e}")))
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the canonical form: compact JSON with table entries
    /// sorted by key and the default `fs` written out.
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        if c.fs.is_none() {
            c.fs = Some(c.fu.clone());
        }
        for spec in [&mut c.roof, &mut c.fu].into_iter().chain(c.fs.as_mut()) {
            spec.table.0.sort_by(|a, b| a.0.cmp(&b.0));
        }
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// All problems found, or the validated model.
    pub fn validate(&self) -> std::result::Result<Model, Vec<ConfigIssue>> {
        let mut issues = Vec::new();
        let mut seen = BTreeMap::new();
        for (i, name) in self.alphabet.iter().enumerate() {
            if name.is_empty() || name.contains(',') || name.trim() != name {
                issues.push(ConfigIssue { kind: "alphabet", message: format!("invalid symbol name {name:?}") });
            }
            if seen.insert(name.as_str(), i).is_some() {
                issues.push(ConfigIssue { kind: "alphabet", message: format!("duplicate symbol name {name:?}") });
            }
        }
        if self.adjacency.len() != self.alphabet.len() {
            issues.push(ConfigIssue {
                kind: "adjacency",
                message: format!("adjacency has {} rows for {} symbols", self.adjacency.len(), self.alphabet.len()),
            });
        }
        let sft = match Sft::new(&self.adjacency, self.theta) {
            Ok(s) => s,
            Err(e) => {
                issues.push(ConfigIssue::from_error(&e));
                return Err(issues);
            }
        };
        if !issues.is_empty() {
            return Err(issues);
        }
        let mut table = |label: &str, spec: &FnSpec| match self.build_fn(&sft, &seen, label, spec) {
            Ok(f) => Some(f),
            Err(mut e) => {
                issues.append(&mut e);
                None
            }
        };
        let roof = table("roof", &self.roof);
        let fu = table("fu", &self.fu);
        let fs = match &self.fs {
            Some(spec) => table("fs", spec),
            None => fu.clone(),
        };
        let markov = self.markov.as_ref().and_then(|p| match validate_markov(&sft, p) {
            Ok(m) => Some(m),
            Err(e) => {
                issues.push(ConfigIssue::from_error(&e));
                None
            }
        });
        match (roof, fu, fs) {
            (Some(roof), Some(fu), Some(fs)) if issues.is_empty() => {
                Ok(Model { names: self.alphabet.clone(), sft, roof, fu, fs, markov })
            }
            _ => Err(issues),
        }
    }

    fn build_fn(
        &self,
        sft: &Sft,
        names: &BTreeMap<&str, usize>,
        label: &str,
        spec: &FnSpec,
    ) -> std::result::Result<LocallyConstantFn, Vec<ConfigIssue>> {
        let issue = |kind, message| ConfigIssue { kind, message };
        if spec.depth == 0 || spec.depth > MAX_TABLE_DEPTH {
            return Err(vec![issue("table", format!("{label}: depth must be between 1 and {MAX_TABLE_DEPTH}"))]);
        }
        let mut issues = Vec::new();
        let mut table: BTreeMap<Vec<Symbol>, f64> = BTreeMap::new();
        for (key, value) in &spec.table.0 {
            let word: Option<Vec<Symbol>> = key.split(',').map(|s| names.get(s.trim()).copied()).collect();
            let Some(word) = word else {
                issues.push(issue("table", format!("{label}: key {key:?} names an unknown symbol")));
                continue;
            };
            if word.len() != spec.depth {
                issues.push(issue("table", format!("{label}: key {key:?} is not a word of length {}", spec.depth)));
                continue;
            }
            if !sft.is_admissible(&word) {
                issues.push(issue("table", format!("{label}: key {key:?} is not an admissible word")));
                continue;
            }
            if !(*value > 0.0) || !value.is_finite() {
                issues.push(issue("nonpositive", format!("{label}: value {value} at {key:?} is not positive")));
            }
            if table.insert(word, *value).is_some() {
                issues.push(issue("table", format!("{label}: word {key:?} appears more than once")));
            }
        }
        for w in sft.words(spec.depth) {
            if !table.contains_key(&w) {
                issues.push(issue("table", format!("{label}: table is missing word {:?}", self.join(&w))));
            }
        }
        if !issues.is_empty() {
            return Err(issues);
        }
        LocallyConstantFn::from_table(sft, spec.depth, &table).map_err(|e| vec![ConfigIssue::from_error(&e)])
    }

    pub fn join(&self, word: &[Symbol]) -> String {
        word.iter().map(|&s| self.alphabet[s].as_str()).collect::<Vec<_>>().join(",")
    }
}

impl Model {
    pub fn name_of(&self, word: &[Symbol]) -> String {
        word.iter().map(|&s| self.names[s].as_str()).collect::<Vec<_>>().join(",")
    }

    /// The model as a config document, with `markov` replacing any stored
    /// matrix.
    pub fn to_config(&self, markov: Option<&MarkovMeasure>) -> ModelConfig {
        let spec = |f: &LocallyConstantFn| FnSpec {
            depth: f.depth(),
            table: Table(f.entries().into_iter().map(|(w, v)| (self.name_of(&w), v)).collect()),
        };
        ModelConfig {
            alphabet: self.names.clone(),
            adjacency: self.sft.adjacency_rows(),
            theta: self.sft.theta(),
            roof: spec(&self.roof),
            fu: spec(&self.fu),
            fs: (self.fs != self.fu).then(|| spec(&self.fs)),
            markov: markov.or(self.markov.as_ref()).map(|m| m.rows()),
        }
    }

    /// The `ell`-block presentation. Block names join the original names
    /// with `|`; a stored Markov measure is carried over as the induced one.
    pub fn recode(&self, ell: usize) -> Result<(BlockCode, Model)> {
        let (code, mut fns) = crate::sft::block_recode(&self.sft, &[&self.roof, &self.fu, &self.fs], ell)?;
        let fs = fns.pop().unwrap();
        let fu = fns.pop().unwrap();
        let roof = fns.pop().unwrap();
        let names = code
            .blocks()
            .iter()
            .map(|b| b.iter().map(|&s| self.names[s].as_str()).collect::<Vec<_>>().join("|"))
            .collect();
        let markov = match &self.markov {
            Some(m) => Some(m.recode(ell)?.1),
            None => None,
        };
        let sft = code.sft.clone();
        Ok((code, Model { names, sft, roof, fu, fs, markov }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for name in preset_names() {
            let c = preset(name).unwrap();
            let m = c.validate().unwrap_or_else(|e| panic!("{name}: {e:?}"));
            assert_eq!(m.sft.alphabet_size(), c.alphabet.len());
            assert_eq!(c.digest().len(), 64);
        }
        assert!(preset("nope").is_none());
    }

    #[test]
    fn digest_ignores_key_order_and_default_fs() {
        let c = preset("full2_ln2ln6").unwrap();
        let mut d = c.clone();
        d.fu.table.0.reverse();
        assert_eq!(c.digest(), d.digest());
        d.fs = Some(c.fu.clone());
        assert_eq!(c.digest(), d.digest());
        d.theta = 0.25;
        assert_ne!(c.digest(), d.digest());
    }

    #[test]
    fn round_trip_through_model() {
        for name in preset_names() {
            let c = preset(name).unwrap();
            let m = c.validate().unwrap();
            let back = m.to_config(None);
            assert_eq!(back.digest(), c.digest(), "{name}");
        }
    }

    #[test]
    fn reports_missing_duplicate_and_unknown_words() {
        let text = r#"{"alphabet":["1","2"],"adjacency":[[1,1],[1,1]],"theta":0.5,
            "roof":{"depth":1,"table":{"1":1.0,"2":1.0}},
            "fu":{"depth":2,"table":{"1,1":1.0,"1,2":1.0,"1,2":2.0,"3,1":1.0}}}"#;
        let issues = ModelConfig::parse(text).unwrap().validate().unwrap_err();
        let msgs: Vec<&str> = issues.iter().map(|i| i.message.as_str()).collect();
        assert!(msgs.iter().any(|m| m.contains("missing word \"2,1\"")), "{msgs:?}");
        assert!(msgs.iter().any(|m| m.contains("missing word \"2,2\"")));
        assert!(msgs.iter().any(|m| m.contains("more than once")));
        assert!(msgs.iter().any(|m| m.contains("unknown symbol")));
    }

    #[test]
    fn zero_row_is_stranded() {
        let text = r#"{"alphabet":["a","b"],"adjacency":[[1,1],[0,0]],"theta":0.5,
            "roof":{"depth":1,"table":{"a":1.0,"b":1.0}},"fu":{"depth":1,"table":{"a":1.0,"b":1.0}}}"#;
        let issues = ModelConfig::parse(text).unwrap().validate().unwrap_err();
        assert_eq!(issues[0].kind, "adjacency");
        assert!(issues[0].message.contains("stranded"), "{:?}", issues);
    }

    #[test]
    fn rejects_nonpositive_and_inadmissible() {
        let text = r#"{"alphabet":["a","b"],"adjacency":[[1,1],[1,0]],"theta":0.5,
            "roof":{"depth":1,"table":{"a":1.0,"b":0.0}},
            "fu":{"depth":2,"table":{"a,a":1.0,"a,b":1.0,"b,a":1.0,"b,b":1.0}}}"#;
        let issues = ModelConfig::parse(text).unwrap().validate().unwrap_err();
        assert!(issues.iter().any(|i| i.kind == "nonpositive"));
        assert!(issues.iter().any(|i| i.message.contains("not an admissible word")));
    }

    #[test]
    fn unknown_fields_and_bad_json_fail_to_parse() {
        assert!(ModelConfig::parse("{").is_err());
        let c = preset("full2_ln2ln6").unwrap();
        let mut v = serde_json::to_value(&c).unwrap();
        v["extra"] = serde_json::json!(1);
        assert!(ModelConfig::parse(&v.to_string()).is_err());
    }

    #[test]
    fn recoded_model_keeps_integrals() {
        let c = preset("curvature_minus1").unwrap();
        let mut m = c.validate().unwrap();
        m.markov = Some(validate_markov(&m.sft, &[vec![0.3, 0.7], vec![0.6, 0.4]]).unwrap());
        let (_, r) = m.recode(3).unwrap();
        let (a, b) = (m.markov.as_ref().unwrap(), r.markov.as_ref().unwrap());
        assert!((a.integrate(&m.fu) - b.integrate(&r.fu)).abs() < 1e-12);
        assert!(r.names.iter().all(|n| n.split('|').count() == 3));
        let cfg = r.to_config(None);
        assert!(cfg.validate().is_ok());
    }
}
