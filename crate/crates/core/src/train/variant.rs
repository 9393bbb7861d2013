use alloc::format;
use alloc::string::ToString;

use serde::{Deserialize, Serialize};

use super::config::{ConsistencyTarget, TrainConfig};
use crate::error::{Error, Result};
use crate::model::HaogHead;

/// Ablation arms. Each one rewrites a base configuration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Video loss only: no object tokens, no images.
    Baseline,
    /// No object tokens; graph heads on pseudo-slots from the pooled patch vector.
    Mt,
    /// Object tokens with the graph loss, no consistency.
    Ot,
    /// Object tokens, graph loss and object-token consistency.
    Full,
    /// As `Full`, but consistency aligns patch tokens.
    PatchCon,
    /// As `Full`, with random graphs in the annotation stream.
    RandomHaog,
    /// As `Full`, without the contact edge loss.
    NoContact,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::Baseline,
        Variant::Mt,
        Variant::Ot,
        Variant::Full,
        Variant::PatchCon,
        Variant::RandomHaog,
        Variant::NoContact,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::Mt => "mt",
            Variant::Ot => "ot",
            Variant::Full => "full",
            Variant::PatchCon => "patch_con",
            Variant::RandomHaog => "random_haog",
            Variant::NoContact => "no_contact",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|v| v.name() == key)
            .ok_or_else(|| Error::Config(format!("unknown variant {s:?}")))
    }

    /// `base` with this arm's model, loss and data switches applied. The
    /// consistency weight of consistency-using arms is `base.loss.con`.
    pub fn configure(self, base: &TrainConfig) -> TrainConfig {
        let mut c = base.clone();
        c.variant = self.name().to_string();
        c.random_haog = false;
        c.consistency = ConsistencyTarget::Objects;
        c.loss.edges = true;
        match self {
            Variant::Baseline => {
                c.model.objects = 0;
                c.model.haog_head = HaogHead::None;
                c.image_bs = 0;
                c.loss.con = 0.0;
            }
            Variant::Mt => {
                c.model.objects = 0;
                c.model.haog_head = HaogHead::Pooled;
                c.loss.con = 0.0;
            }
            Variant::Ot => {
                c.model.objects = 4;
                c.model.haog_head = HaogHead::ObjectTokens;
                c.loss.con = 0.0;
            }
            Variant::Full | Variant::PatchCon | Variant::RandomHaog | Variant::NoContact => {
                c.model.objects = 4;
                c.model.haog_head = HaogHead::ObjectTokens;
                match self {
                    Variant::PatchCon => c.consistency = ConsistencyTarget::Patches,
                    Variant::RandomHaog => c.random_haog = true,
                    Variant::NoContact => c.loss.edges = false,
                    _ => {}
                }
            }
        }
        c
    }
}

impl core::fmt::Display for Variant {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

impl core::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

/// Comma-separated variant list.
pub fn parse_variants(list: &str) -> Result<alloc::vec::Vec<Variant>> {
    list.split(',').filter(|s| !s.trim().is_empty()).map(Variant::parse).collect()
}
