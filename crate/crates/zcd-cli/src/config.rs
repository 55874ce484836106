//! Run configuration: file keys, flag overrides, and their resolution.
//!
//! Precedence, strongest first: command-line flag, `ZCD_SEED` environment
//! variable (seed only), configuration file, built-in default. The file is
//! flat JSON; unknown keys are rejected with a diagnostic naming the key.

use std::env;
use std::fs;
use std::path::Path;

use serde::Deserialize;
use zcd_core::heads::{HeadConfig, HeadScheme};
use zcd_core::model::{default_attention_dim, ModelConfig};
use zcd_core::pyramid::BackboneProfile;
use zcd_core::safpn::FpnScheme;

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_IMAGE: (usize, usize) = (256, 320);
pub const DEFAULT_ROUNDS: usize = 10;
pub const DEFAULT_ANCHORS_PER_LOC: usize = 9;
pub const DEFAULT_NUM_CLASSES: usize = 80;

/// The configuration file, every key optional.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub backbone_profile: Option<String>,
    pub tiny_channels: Option<[usize; 3]>,
    pub fpn_scheme: Option<String>,
    pub head_scheme: Option<String>,
    pub anchor_free: Option<bool>,
    pub anchors_per_loc: Option<usize>,
    pub num_classes: Option<usize>,
    pub attention_dim_d: Option<usize>,
    pub attention_relu: Option<bool>,
    pub centerness: Option<bool>,
    pub seed: Option<u64>,
    pub image_size: Option<[usize; 2]>,
    pub rounds: Option<usize>,
}

pub fn load_file(path: &Path) -> Result<FileConfig, String> {
    let text = fs::read_to_string(path)
        .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("invalid config {}: {e}", path.display()))
}

/// Command-line overrides for the same keys.
#[derive(Debug, Default, Clone, clap::Args)]
pub struct Overrides {
    /// Backbone profile: faithful-r50, faithful-r101 or tiny.
    #[arg(long, global = true, value_name = "NAME")]
    pub backbone_profile: Option<String>,

    /// C3,C4,C5 channel widths for the tiny profile, e.g. 8,16,32.
    #[arg(long, global = true, value_name = "C3,C4,C5", value_parser = parse_channels)]
    pub tiny_channels: Option<Channels>,

    /// Pyramid scheme: baseline, als, als-light or lls.
    #[arg(long, global = true, value_name = "NAME")]
    pub fpn_scheme: Option<String>,

    /// Head wiring: parallel, cls-first or reg-first.
    #[arg(long, global = true, value_name = "NAME")]
    pub head_scheme: Option<String>,

    /// Per-location instead of per-anchor outputs.
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true", value_name = "BOOL")]
    pub anchor_free: Option<bool>,

    /// Anchors per location (anchor-based heads).
    #[arg(long, global = true, value_name = "N")]
    pub anchors_per_loc: Option<usize>,

    /// Object classes predicted by the classification head.
    #[arg(long, global = true, value_name = "N")]
    pub num_classes: Option<usize>,

    /// Width of the attention bottleneck descriptor.
    #[arg(long, global = true, value_name = "D")]
    pub attention_dim_d: Option<usize>,

    /// Rectify the pooled descriptor before the expansion maps.
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true", value_name = "BOOL")]
    pub attention_relu: Option<bool>,

    /// Emit a centerness map (anchor-free heads only).
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true", value_name = "BOOL")]
    pub centerness: Option<bool>,

    /// Seed for every weight draw and generated input.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,

    /// Input extent as HEIGHTxWIDTH, e.g. 256x320.
    #[arg(long, global = true, value_name = "HxW", value_parser = parse_image_size)]
    pub image_size: Option<ImageSize>,

    /// Measured benchmark rounds (minimum 10).
    #[arg(long, global = true, value_name = "N")]
    pub rounds: Option<usize>,
}

/// Newtypes so clap value parsers have concrete targets.
#[derive(Debug, Clone, Copy)]
pub struct Channels(pub [usize; 3]);
#[derive(Debug, Clone, Copy)]
pub struct ImageSize(pub usize, pub usize);

fn parse_channels(s: &str) -> Result<Channels, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(String::from("expected three comma-separated widths, e.g. 8,16,32"));
    }
    let mut out = [0usize; 3];
    for (slot, part) in out.iter_mut().zip(&parts) {
        *slot = part
            .trim()
            .parse::<usize>()
            .map_err(|_| format!("invalid channel width {part:?}"))?;
        if *slot == 0 {
            return Err(String::from("channel widths must be positive"));
        }
    }
    Ok(Channels(out))
}

fn parse_image_size(s: &str) -> Result<ImageSize, String> {
    let (h, w) = s
        .split_once('x')
        .ok_or_else(|| String::from("expected HEIGHTxWIDTH, e.g. 256x320"))?;
    let h = h
        .trim()
        .parse::<usize>()
        .map_err(|_| format!("invalid height {h:?}"))?;
    let w = w
        .trim()
        .parse::<usize>()
        .map_err(|_| format!("invalid width {w:?}"))?;
    if h == 0 || w == 0 {
        return Err(String::from("image extents must be positive"));
    }
    Ok(ImageSize(h, w))
}

/// Fully resolved configuration every command runs from.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub profile: BackboneProfile,
    pub tiny_channels: Option<[usize; 3]>,
    pub fpn_scheme: FpnScheme,
    pub head_scheme: HeadScheme,
    pub anchor_free: bool,
    pub anchors_per_loc: usize,
    pub num_classes: usize,
    pub attention_dim: usize,
    pub attention_relu: bool,
    pub centerness: bool,
    pub seed: u64,
    pub image: (usize, usize),
    pub rounds: usize,
}

impl RunConfig {
    pub fn resolve(file: &FileConfig, flags: &Overrides) -> Result<RunConfig, String> {
        let profile = parse_token(
            "backbone_profile",
            flags.backbone_profile.as_deref(),
            file.backbone_profile.as_deref(),
            "faithful-r50",
            BackboneProfile::parse,
            "faithful-r50, faithful-r101, tiny",
        )?;
        let fpn_scheme = parse_token(
            "fpn_scheme",
            flags.fpn_scheme.as_deref(),
            file.fpn_scheme.as_deref(),
            "als-light",
            FpnScheme::parse,
            "baseline, als, als-light, lls",
        )?;
        let head_scheme = parse_token(
            "head_scheme",
            flags.head_scheme.as_deref(),
            file.head_scheme.as_deref(),
            "cls-first",
            HeadScheme::parse,
            "parallel, cls-first, reg-first",
        )?;

        let anchor_free = flags.anchor_free.or(file.anchor_free).unwrap_or(false);
        let anchors_per_loc = flags
            .anchors_per_loc
            .or(file.anchors_per_loc)
            .unwrap_or(if anchor_free { 1 } else { DEFAULT_ANCHORS_PER_LOC });
        let num_classes = flags
            .num_classes
            .or(file.num_classes)
            .unwrap_or(DEFAULT_NUM_CLASSES);
        let centerness = flags.centerness.or(file.centerness).unwrap_or(anchor_free);
        let attention_dim = flags
            .attention_dim_d
            .or(file.attention_dim_d)
            .unwrap_or_else(default_attention_dim);
        let attention_relu = flags.attention_relu.or(file.attention_relu).unwrap_or(true);

        let seed = match flags.seed {
            Some(s) => s,
            None => match env_seed()? {
                Some(s) => s,
                None => file.seed.unwrap_or(DEFAULT_SEED),
            },
        };

        let image = match flags.image_size {
            Some(ImageSize(h, w)) => (h, w),
            None => match file.image_size {
                Some([h, w]) => {
                    if h == 0 || w == 0 {
                        return Err(String::from("image_size extents must be positive"));
                    }
                    (h, w)
                }
                None => DEFAULT_IMAGE,
            },
        };
        let rounds = flags.rounds.or(file.rounds).unwrap_or(DEFAULT_ROUNDS);
        let tiny_channels = match flags.tiny_channels {
            Some(Channels(c)) => Some(c),
            None => file.tiny_channels,
        };

        let config = RunConfig {
            profile,
            tiny_channels,
            fpn_scheme,
            head_scheme,
            anchor_free,
            anchors_per_loc,
            num_classes,
            attention_dim,
            attention_relu,
            centerness,
            seed,
            image,
            rounds,
        };
        // Surface structural conflicts (centerness without anchor-free,
        // channel overrides outside the tiny profile, ...) at resolution
        // time rather than mid-command.
        config.model_config().validate().map_err(|e| e.to_string())?;
        Ok(config)
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            profile: self.profile,
            tiny_channels: self.tiny_channels,
            fpn_scheme: self.fpn_scheme,
            head_scheme: self.head_scheme,
            head: HeadConfig {
                anchor_free: self.anchor_free,
                anchors_per_loc: self.anchors_per_loc,
                num_classes: self.num_classes,
                centerness: self.centerness,
                norm_affine: self.anchor_free,
            },
            attention_dim: self.attention_dim,
            attention_relu: self.attention_relu,
            seed: self.seed,
        }
    }
}

fn parse_token<T>(
    key: &str,
    flag: Option<&str>,
    file: Option<&str>,
    default: &str,
    parse: impl Fn(&str) -> Option<T>,
    expected: &str,
) -> Result<T, String> {
    let token = flag.or(file).unwrap_or(default);
    parse(token).ok_or_else(|| format!("invalid {key} {token:?}; expected one of: {expected}"))
}

fn env_seed() -> Result<Option<u64>, String> {
    match env::var("ZCD_SEED") {
        Ok(v) => v
            .trim()
            .parse::<u64>()
            .map(Some)
            .map_err(|_| format!("ZCD_SEED must be an unsigned integer, got {v:?}")),
        Err(env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(format!("ZCD_SEED is unreadable: {e}")),
    }
}
