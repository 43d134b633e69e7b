//! Multi-frame guided attention network.
//!
//! A window of `2T+1` compressed frames goes through a per-frame conv and a
//! stack of bidirectional residual ConvLSTM layers; the centre-time features
//! then enter an encoder-decoder whose encoder runs twice with shared
//! weights, once on the partition guide map and once on the features, the
//! guide channel's per-scale activations being added into the main channel.
//! The decoder emits three coarse predictions plus a full-resolution
//! residual that is added to the compressed centre frame.

mod check;
mod checkpoint;
mod enhance;
mod model;
mod params;

pub use check::{model_grad_check, ModelGradCheck, MODEL_CHECK_FLOOR};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use enhance::{enhance_window, enhance_window_tiled, tile_margin, EnhanceOutput};
pub use model::{
    brclstm_layer, cell_step, forward, loss, shared_guided_encoder, temporal_encoder, CellOutput,
    FeaturePyramid, GateStack, LossBreakdown, Outputs, LAMBDAS,
};
pub use params::{Bound, ParamSpec, Params};

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// How the temporal window is fused into one feature map.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Fusion {
    /// Bidirectional ConvLSTM with residual add.
    Brclstm,
    /// Bidirectional ConvLSTM, no residual.
    Bclstm,
    /// All frames stacked as channels, two convs.
    Early,
    /// Pairwise merging of neighbouring frame features, one level per step.
    Slow,
}

impl Fusion {
    pub fn as_str(self) -> &'static str {
        match self {
            Fusion::Brclstm => "brclstm",
            Fusion::Bclstm => "bclstm",
            Fusion::Early => "early",
            Fusion::Slow => "slow",
        }
    }

    fn is_recurrent(self) -> bool {
        matches!(self, Fusion::Brclstm | Fusion::Bclstm)
    }
}

impl fmt::Display for Fusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Fusion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "brclstm" => Ok(Fusion::Brclstm),
            "bclstm" => Ok(Fusion::Bclstm),
            "early" => Ok(Fusion::Early),
            "slow" => Ok(Fusion::Slow),
            other => Err(Error::invalid(format!(
                "unknown fusion {other:?} (expected brclstm, bclstm, early or slow)"
            ))),
        }
    }
}

/// Encoder output channels at full width.
pub const ENCODER_CHANNELS: [usize; 8] = [128, 128, 256, 256, 512, 512, 1024, 1024];
/// Decoder stage output channels at full width.
pub const DECODER_CHANNELS: [usize; 4] = [512, 256, 128, 64];
/// Temporal feature channels at full width.
pub const FEATURE_CHANNELS: usize = 64;
/// Spatial dimensions must be multiples of this (four stride-2 stages).
pub const SPATIAL_ALIGN: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MganetConfig {
    /// Every channel count is divided by this; 1 is the full model.
    pub width_div: usize,
    /// Temporal radius `T`; the window holds `2T+1` frames.
    pub radius: usize,
    pub lstm_layers: usize,
    pub fusion: Fusion,
    pub guidance: bool,
}

impl Default for MganetConfig {
    fn default() -> Self {
        MganetConfig { width_div: 1, radius: 1, lstm_layers: 2, fusion: Fusion::Brclstm, guidance: true }
    }
}

impl MganetConfig {
    pub fn validate(&self) -> Result<()> {
        if ![1, 2, 4, 8, 16].contains(&self.width_div) {
            return Err(Error::invalid(format!("width divisor {} not in {{1,2,4,8,16}}", self.width_div)));
        }
        if self.radius > 8 {
            return Err(Error::invalid(format!("temporal radius {} exceeds 8", self.radius)));
        }
        if self.fusion.is_recurrent() && self.lstm_layers == 0 {
            return Err(Error::invalid("recurrent fusion needs at least one layer"));
        }
        Ok(())
    }

    pub fn window(&self) -> usize {
        2 * self.radius + 1
    }

    pub fn feature_channels(&self) -> usize {
        FEATURE_CHANNELS / self.width_div
    }

    /// Hidden channels of one LSTM direction; both directions together
    /// match the feature channels so the residual add conforms.
    pub fn hidden_channels(&self) -> usize {
        self.feature_channels() / 2
    }

    pub fn encoder_channels(&self) -> [usize; 8] {
        ENCODER_CHANNELS.map(|c| c / self.width_div)
    }

    pub fn decoder_channels(&self) -> [usize; 4] {
        DECODER_CHANNELS.map(|c| c / self.width_div)
    }

    /// `key=value` pairs, `;`-separated, as echoed into checkpoints.
    pub fn to_echo(&self) -> String {
        format!(
            "width_div={};radius={};lstm_layers={};fusion={};guidance={}",
            self.width_div, self.radius, self.lstm_layers, self.fusion, self.guidance
        )
    }

    pub fn from_echo(s: &str) -> Result<Self> {
        let mut cfg = MganetConfig::default();
        for pair in s.split(';').filter(|p| !p.is_empty()) {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("config entry {pair:?} lacks '='")))?;
            let bad = |e: &dyn fmt::Display| Error::Format(format!("config {k}: {e}"));
            match k {
                "width_div" => cfg.width_div = v.parse().map_err(|e| bad(&e))?,
                "radius" => cfg.radius = v.parse().map_err(|e| bad(&e))?,
                "lstm_layers" => cfg.lstm_layers = v.parse().map_err(|e| bad(&e))?,
                "fusion" => cfg.fusion = v.parse().map_err(|e: Error| bad(&e))?,
                "guidance" => cfg.guidance = v.parse().map_err(|e| bad(&e))?,
                other => return Err(Error::Format(format!("unknown config key {other:?}"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Radius in pixels of the region of input that can influence one
    /// output pixel (zero padding included), rounded up to the stride grid.
    pub fn receptive_radius(&self) -> usize {
        // encoder: 7x7/2, then 3x3 layers at jumps 2,4,4,8,8,16,16
        let encoder = 3 + 2 + 4 + 4 + 8 + 8 + 16 + 16;
        // decoder 4x4/2 deconvs reach one sample either side at each scale,
        // plus the final 3x3
        let decoder = 16 + 8 + 4 + 2 + 1;
        let temporal = match self.fusion {
            Fusion::Brclstm | Fusion::Bclstm => 1 + self.lstm_layers * (self.radius + 2),
            Fusion::Early => 2,
            Fusion::Slow => 1 + 2 * self.radius,
        };
        encoder + decoder + temporal.max(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echo_round_trip() {
        let c = MganetConfig { width_div: 8, radius: 2, lstm_layers: 3, fusion: Fusion::Slow, guidance: false };
        assert_eq!(MganetConfig::from_echo(&c.to_echo()).unwrap(), c);
        assert!(MganetConfig::from_echo("width_div=3").is_err());
        assert!(MganetConfig::from_echo("colour=blue").is_err());
    }

    #[test]
    fn channel_plan() {
        let c = MganetConfig { width_div: 16, ..Default::default() };
        assert_eq!(c.feature_channels(), 4);
        assert_eq!(c.hidden_channels(), 2);
        assert_eq!(c.encoder_channels(), [8, 8, 16, 16, 32, 32, 64, 64]);
        assert_eq!(c.decoder_channels(), [32, 16, 8, 4]);
    }
}
