//! Flat `key=value` run configuration with optional `[section]` headers.
//!
//! Inside a section, `key = value` stands for `section.key = value`. Blank
//! lines and `#` comments are ignored. Every key must be known; values are
//! parsed on access.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::hetgraph::FanoutPlan;
use crate::synthdata::{MapKind, SynthConfig};
use crate::{Error, Result};

const DEFAULTS: &[(&str, &str)] = &[
    ("seed", "7"),
    ("data.source", "synthetic"),
    ("data.dir", ""),
    ("synth.proteins", "300"),
    ("synth.terms", "40"),
    ("synth.d_seq", "16"),
    ("synth.d_struc", "16"),
    ("synth.latent_dim", "8"),
    ("synth.clusters", "8"),
    ("synth.cluster_spread", "1.75"),
    ("synth.noise_seq", "1.0"),
    ("synth.noise_struc", "1.0"),
    ("synth.map", "permutation"),
    ("synth.struc_scale", "1.0"),
    ("synth.struc_offset", "20.0"),
    ("synth.homophily", "5.0"),
    ("synth.ppi_degree", "2.5"),
    ("synth.go_dim", "8"),
    ("synth.max_depth", "4"),
    ("synth.roots", "3"),
    ("synth.cross_link_prob", "0.15"),
    ("synth.terms_per_cluster", "1"),
    ("synth.extra_label_prob", "0.5"),
    ("synth.train_fraction", "0.6"),
    ("synth.valid_fraction", "0.2"),
    ("ot.enabled", "true"),
    ("ot.epsilon", "0.001"),
    ("ot.cost_tol", "1e-6"),
    ("ot.marginal_tol", "1e-6"),
    ("ot.max_iter", "1000000"),
    ("ot.normalize", "false"),
    ("diffusion.steps", "50"),
    ("diffusion.shift", "0.008"),
    ("diffusion.marginal_egos", "64"),
    ("model.experts", "4"),
    ("model.hidden", "64"),
    ("model.layers", "2"),
    ("model.d_model", "64"),
    ("model.d_edge", "32"),
    ("model.heads", "4"),
    ("model.d_time", "16"),
    ("model.classifier_hidden", "128"),
    ("pretrain.enabled", "true"),
    ("pretrain.steps", "1000"),
    ("pretrain.batch_size", "8"),
    ("pretrain.lr", "1e-3"),
    ("pretrain.weight_decay", "1e-12"),
    ("pretrain.drop_prob", "0.1"),
    ("pretrain.hops", "2"),
    ("pretrain.fanout", "3,1,3;1,1,1"),
    ("pretrain.node_cap", "32"),
    ("pretrain.checkpoint_every", "0"),
    ("finetune.epochs", "30"),
    ("finetune.batch_size", "16"),
    ("finetune.peak_lr", "8e-4"),
    ("finetune.warmup", "0.1"),
    ("finetune.weight_decay", "1e-4"),
    ("bench.repeats", "100"),
    ("bench.batch", "8"),
];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { values: DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect() }
    }
}

impl RunConfig {
    /// Known keys with their default values.
    pub fn known_keys() -> impl Iterator<Item = (&'static str, &'static str)> {
        DEFAULTS.iter().copied()
    }

    /// Applies the assignments in `text` on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.merge_text(text)?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn merge_text(&mut self, text: &str) -> Result<()> {
        let mut section = String::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got `{line}`", n + 1)))?;
            let key = if section.is_empty() { k.trim().to_string() } else { format!("{section}.{}", k.trim()) };
            self.set(&key, v.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = value.to_string();
                Ok(())
            }
            None => Err(Error::Config(format!("unknown configuration key `{key}`"))),
        }
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("unregistered key {key}"))
    }

    fn typed<T: std::str::FromStr>(&self, key: &str, what: &str) -> Result<T> {
        let raw = self.get(key);
        raw.parse().map_err(|_| Error::Config(format!("`{key}` = `{raw}` is not {what}")))
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        self.typed(key, "a non-negative integer")
    }

    pub fn u64(&self, key: &str) -> Result<u64> {
        self.typed(key, "a non-negative integer")
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        let v: f64 = self.typed(key, "a number")?;
        if !v.is_finite() {
            return Err(Error::Config(format!("`{key}` must be finite")));
        }
        Ok(v)
    }

    pub fn bool(&self, key: &str) -> Result<bool> {
        self.typed(key, "true or false")
    }

    pub fn seed(&self) -> Result<u64> {
        self.u64("seed")
    }

    /// Sorted `key=value` lines; parsing them back reproduces this config.
    pub fn snapshot(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.values {
            writeln!(out, "{k}={v}").expect("string write");
        }
        out
    }

    /// SHA-256 over `parent` and every entry whose key equals or starts with one of `prefixes`.
    pub fn digest(&self, parent: &str, prefixes: &[&str]) -> String {
        let mut h = Sha256::new();
        h.update(parent.as_bytes());
        for (k, v) in &self.values {
            if prefixes.iter().any(|p| k == p || k.starts_with(&format!("{p}."))) {
                h.update(format!("\n{k}={v}").as_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    pub fn synth(&self) -> Result<SynthConfig> {
        let c = SynthConfig {
            proteins: self.usize("synth.proteins")?,
            terms: self.usize("synth.terms")?,
            d_seq: self.usize("synth.d_seq")?,
            d_struc: self.usize("synth.d_struc")?,
            latent_dim: self.usize("synth.latent_dim")?,
            clusters: self.usize("synth.clusters")?,
            cluster_spread: self.f64("synth.cluster_spread")?,
            noise_seq: self.f64("synth.noise_seq")?,
            noise_struc: self.f64("synth.noise_struc")?,
            map: self.get("synth.map").parse::<MapKind>()?,
            struc_scale: self.f64("synth.struc_scale")?,
            struc_offset: self.f64("synth.struc_offset")?,
            homophily: self.f64("synth.homophily")?,
            ppi_degree: self.f64("synth.ppi_degree")?,
            go_dim: self.usize("synth.go_dim")?,
            max_depth: self.usize("synth.max_depth")?,
            roots: self.usize("synth.roots")?,
            cross_link_prob: self.f64("synth.cross_link_prob")?,
            terms_per_cluster: self.usize("synth.terms_per_cluster")?,
            extra_label_prob: self.f64("synth.extra_label_prob")?,
            train_fraction: self.f64("synth.train_fraction")?,
            valid_fraction: self.f64("synth.valid_fraction")?,
            seed: self.seed()?,
        };
        c.validate()?;
        Ok(c)
    }

    /// `pretrain.fanout` as `ppi,go,anno` triples separated by `;`, one per hop.
    pub fn fanouts(&self) -> Result<FanoutPlan> {
        let raw = self.get("pretrain.fanout");
        let bad = || Error::Config(format!("`pretrain.fanout` = `{raw}` is not a list of ppi,go,anno triples"));
        let per_hop = raw
            .split(';')
            .map(|hop| {
                let v: Vec<usize> = hop.split(',').map(|x| x.trim().parse()).collect::<Result<_, _>>().map_err(|_| bad())?;
                <[usize; 3]>::try_from(v).map_err(|_| bad())
            })
            .collect::<Result<Vec<_>>>()?;
        let hops = self.usize("pretrain.hops")?;
        let node_cap = self.usize("pretrain.node_cap")?;
        if hops == 0 || node_cap == 0 {
            return Err(Error::Config("pretrain.hops and pretrain.node_cap must be positive".into()));
        }
        Ok(FanoutPlan { hops, per_hop, node_cap })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_and_overrides() {
        let mut c = RunConfig::parse("seed = 3\n[ot]\nepsilon = 0.01 # sharper\n").unwrap();
        assert_eq!(c.seed().unwrap(), 3);
        assert_eq!(c.f64("ot.epsilon").unwrap(), 0.01);
        c.apply_override("ot.enabled=false").unwrap();
        assert!(!c.bool("ot.enabled").unwrap());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(RunConfig::parse("[ot]\nepsilom = 1\n"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::default().apply_override("nope=1"), Err(Error::Config(_))));
    }

    #[test]
    fn snapshot_round_trips() {
        let mut c = RunConfig::default();
        c.set("synth.map", "rotation").unwrap();
        assert_eq!(RunConfig::parse(&c.snapshot()).unwrap(), c);
    }

    #[test]
    fn digest_tracks_only_selected_keys() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.set("finetune.epochs", "3").unwrap();
        assert_eq!(a.digest("", &["ot"]), b.digest("", &["ot"]));
        assert_ne!(a.digest("", &["finetune"]), b.digest("", &["finetune"]));
    }

    #[test]
    fn fanout_parsing() {
        let f = RunConfig::default().fanouts().unwrap();
        assert_eq!(f.per_hop, vec![[3, 1, 3], [1, 1, 1]]);
        let mut c = RunConfig::default();
        c.set("pretrain.fanout", "1,2").unwrap();
        assert!(c.fanouts().is_err());
    }
}
