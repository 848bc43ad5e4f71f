//! Flat-key run configuration: defaults, JSON file, explicit overrides.
//!
//! Every tunable is a single scalar key in one flat JSON object, so a config
//! file and a command-line override speak the same vocabulary. Precedence is
//! defaults < file < override flag, and the seed additionally accepts an
//! environment fallback that loses to both explicit sources.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde_json::Value;

use crate::error::{Error, Result};
use crate::model::CommKind;
use crate::trainer::TrainConfig;

/// Keys that pick or shape the message-passing stack interact with each
/// other, so they are collected over all sources first and resolved once.
/// This keeps `--heads 8 --comms gat` legal in either order.
#[derive(Default)]
struct PendingComm {
    comms: Option<String>,
    bases: Option<usize>,
    heads: Option<usize>,
}

/// Builds a [`TrainConfig`] from up to three sources, later ones winning:
/// built-in defaults, a flat JSON object file, then explicit override pairs.
/// `env_seed` fills the seed only when neither the file nor an override set
/// it. The result is validated before it is returned.
pub fn parse_config(
    file: Option<&Path>,
    overrides: &[(String, Value)],
    env_seed: Option<u64>,
) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::default();
    let mut pending = PendingComm::default();
    let mut seed_set = false;

    if let Some(path) = file {
        let text = fs::read_to_string(path)?;
        let root: Value = serde_json::from_str(&text)?;
        let obj = root.as_object().ok_or_else(|| {
            Error::Config("config file must hold a single flat JSON object".into())
        })?;
        for (key, value) in obj {
            apply_key(&mut cfg, &mut pending, &mut seed_set, key, value)?;
        }
    }
    for (key, value) in overrides {
        apply_key(&mut cfg, &mut pending, &mut seed_set, key, value)?;
    }
    if let Some(seed) = env_seed {
        if !seed_set {
            cfg.seed = seed;
        }
    }
    resolve_comm(&mut cfg, &pending)?;
    cfg.validate()?;
    Ok(cfg)
}

fn apply_key(
    cfg: &mut TrainConfig,
    pending: &mut PendingComm,
    seed_set: &mut bool,
    key: &str,
    value: &Value,
) -> Result<()> {
    match key {
        "total_steps" => cfg.total_steps = expect_usize(key, value)?,
        "target_update_interval" => cfg.target_update_interval = expect_usize(key, value)?,
        "lr" => cfg.lr = expect_f64(key, value)?,
        "l2_coef" => cfg.l2_coef = expect_f64(key, value)?,
        "trr_coef" => cfg.trr_coef = expect_f64(key, value)?,
        "gamma" => cfg.gamma = expect_f64(key, value)?,
        "epsilon_max" => cfg.epsilon_max = expect_f64(key, value)?,
        "epsilon_min" => cfg.epsilon_min = expect_f64(key, value)?,
        "per_alpha" => cfg.per_alpha = expect_f64(key, value)?,
        "per_beta" => cfg.per_beta = expect_f64(key, value)?,
        "anneal_beta" => cfg.anneal_beta = expect_bool(key, value)?,
        "batch_size" => cfg.batch_size = expect_usize(key, value)?,
        "buffer_capacity" => cfg.buffer_capacity = expect_usize(key, value)?,
        "warmup" => cfg.warmup = expect_usize(key, value)?,
        "trr" => cfg.trr = expect_bool(key, value)?,
        "seed" => {
            cfg.seed = expect_u64(key, value)?;
            *seed_set = true;
        }
        "comms" => pending.comms = Some(expect_str(key, value)?.to_string()),
        "bases" => pending.bases = Some(expect_usize(key, value)?),
        "heads" => pending.heads = Some(expect_usize(key, value)?),
        "frf" => cfg.model.frf = expect_bool(key, value)?,
        "fac" => cfg.env.fac = expect_bool(key, value)?,
        "width" => cfg.env.width = expect_usize(key, value)?,
        "height" => cfg.env.height = expect_usize(key, value)?,
        "step_limit" => cfg.env.step_limit = expect_u32(key, value)?,
        "obs_radius" => cfg.env.obs_radius = expect_f64(key, value)?,
        "allies_ranged" => cfg.env.allies_ranged = expect_usize(key, value)?,
        "allies_melee" => cfg.env.allies_melee = expect_usize(key, value)?,
        "enemies_ranged" => cfg.env.enemies_ranged = expect_usize(key, value)?,
        "enemies_melee" => cfg.env.enemies_melee = expect_usize(key, value)?,
        _ => return Err(Error::Config(format!("unknown config key \"{key}\""))),
    }
    Ok(())
}

fn resolve_comm(cfg: &mut TrainConfig, pending: &PendingComm) -> Result<()> {
    let kind = match pending.comms.as_deref() {
        Some("rgcn") => "rgcn",
        Some("gat") => "gat",
        Some(other) => {
            return Err(Error::Config(format!(
                "config key \"comms\" expects \"rgcn\" or \"gat\", got \"{other}\""
            )));
        }
        None => match cfg.model.comm {
            CommKind::Rgcn { .. } => "rgcn",
            CommKind::Gat { .. } => "gat",
        },
    };
    match kind {
        "rgcn" => {
            if let Some(h) = pending.heads {
                return Err(Error::Config(format!(
                    "config key \"heads\" ({h}) only applies to the attention stack; \
                     select it with comms = \"gat\""
                )));
            }
            let current = match cfg.model.comm {
                CommKind::Rgcn { bases } => bases,
                CommKind::Gat { .. } => 4,
            };
            cfg.model.comm = CommKind::Rgcn {
                bases: pending.bases.unwrap_or(current),
            };
        }
        _ => {
            if let Some(b) = pending.bases {
                return Err(Error::Config(format!(
                    "config key \"bases\" ({b}) only applies to the relational stack; \
                     select it with comms = \"rgcn\""
                )));
            }
            let current = match cfg.model.comm {
                CommKind::Gat { heads } => heads,
                CommKind::Rgcn { .. } => 4,
            };
            cfg.model.comm = CommKind::Gat {
                heads: pending.heads.unwrap_or(current),
            };
        }
    }
    Ok(())
}

/// The inverse of [`parse_config`]: a flat JSON object that parses back to
/// the same configuration. Keys come out in sorted order so the snapshot is
/// byte-stable across runs.
pub fn config_to_json(cfg: &TrainConfig) -> Value {
    let mut m: BTreeMap<&'static str, Value> = BTreeMap::new();
    m.insert("total_steps", cfg.total_steps.into());
    m.insert("target_update_interval", cfg.target_update_interval.into());
    m.insert("lr", cfg.lr.into());
    m.insert("l2_coef", cfg.l2_coef.into());
    m.insert("trr_coef", cfg.trr_coef.into());
    m.insert("gamma", cfg.gamma.into());
    m.insert("epsilon_max", cfg.epsilon_max.into());
    m.insert("epsilon_min", cfg.epsilon_min.into());
    m.insert("per_alpha", cfg.per_alpha.into());
    m.insert("per_beta", cfg.per_beta.into());
    m.insert("anneal_beta", cfg.anneal_beta.into());
    m.insert("batch_size", cfg.batch_size.into());
    m.insert("buffer_capacity", cfg.buffer_capacity.into());
    m.insert("warmup", cfg.warmup.into());
    m.insert("trr", cfg.trr.into());
    m.insert("seed", cfg.seed.into());
    match cfg.model.comm {
        CommKind::Rgcn { bases } => {
            m.insert("comms", "rgcn".into());
            m.insert("bases", bases.into());
        }
        CommKind::Gat { heads } => {
            m.insert("comms", "gat".into());
            m.insert("heads", heads.into());
        }
    }
    m.insert("frf", cfg.model.frf.into());
    m.insert("fac", cfg.env.fac.into());
    m.insert("width", cfg.env.width.into());
    m.insert("height", cfg.env.height.into());
    m.insert("step_limit", cfg.env.step_limit.into());
    m.insert("obs_radius", cfg.env.obs_radius.into());
    m.insert("allies_ranged", cfg.env.allies_ranged.into());
    m.insert("allies_melee", cfg.env.allies_melee.into());
    m.insert("enemies_ranged", cfg.env.enemies_ranged.into());
    m.insert("enemies_melee", cfg.env.enemies_melee.into());
    serde_json::to_value(m).expect("scalar map always serializes")
}

fn expect_f64(key: &str, v: &Value) -> Result<f64> {
    v.as_f64()
        .ok_or_else(|| Error::Config(format!("config key \"{key}\" expects a number, got {v}")))
}

fn expect_u64(key: &str, v: &Value) -> Result<u64> {
    v.as_u64().ok_or_else(|| {
        Error::Config(format!(
            "config key \"{key}\" expects a non-negative integer, got {v}"
        ))
    })
}

fn expect_usize(key: &str, v: &Value) -> Result<usize> {
    Ok(expect_u64(key, v)? as usize)
}

fn expect_u32(key: &str, v: &Value) -> Result<u32> {
    u32::try_from(expect_u64(key, v)?)
        .map_err(|_| Error::Config(format!("config key \"{key}\" does not fit in 32 bits")))
}

fn expect_bool(key: &str, v: &Value) -> Result<bool> {
    v.as_bool()
        .ok_or_else(|| Error::Config(format!("config key \"{key}\" expects true or false, got {v}")))
}

fn expect_str<'v>(key: &str, v: &'v Value) -> Result<&'v str> {
    v.as_str()
        .ok_or_else(|| Error::Config(format!("config key \"{key}\" expects a string, got {v}")))
}
