use std::fmt;
use std::str::FromStr;

use crate::error::Error;

/// Which features the global logits are computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GlobalLogits {
    /// `q_i · k_j` on projected context.
    Projected,
    /// `x_i · x_j` on raw context; the query/key projection is unused.
    RawContext,
}

/// Where neighbor positions for the displacement encoder come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeighborFrame {
    /// `p_t^j − p_t^i`, neighbors and positions both in the first frame.
    First,
    /// `p_{t+1}^j − p_t^i`, where the second-frame position of neighbor `j`
    /// is the second-frame point nearest to `p_t^j`.
    Cross,
}

/// How the aggregated motion is merged back into the motion features.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregator {
    /// `y + α · head(y − (g_local + g_global))`
    Offset,
    /// `y + MLP(g_local + g_global)`, no normalization head and no gate.
    PlainMlp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gma3dConfig {
    pub context_dim: usize,
    pub motion_dim: usize,
    pub qk_dim: usize,
    pub encoder_dim: usize,
    pub encoder_hidden: usize,
    pub scorer_hidden: usize,
    pub k: usize,
    pub include_self: bool,
    pub global_logits: GlobalLogits,
    pub logit_scaling: bool,
    pub global_weight_map: bool,
    pub global_weight_hidden: usize,
    pub neighbor_frame: NeighborFrame,
    pub use_local: bool,
    pub use_global: bool,
    pub aggregator: Aggregator,
    pub plain_hidden: usize,
}

impl Default for Gma3dConfig {
    fn default() -> Self {
        Self {
            context_dim: 32,
            motion_dim: 32,
            qk_dim: 16,
            encoder_dim: 8,
            encoder_hidden: 16,
            scorer_hidden: 32,
            k: 16,
            include_self: false,
            global_logits: GlobalLogits::Projected,
            logit_scaling: true,
            global_weight_map: false,
            global_weight_hidden: 8,
            neighbor_frame: NeighborFrame::First,
            use_local: true,
            use_global: true,
            aggregator: Aggregator::Offset,
            plain_hidden: 32,
        }
    }
}

impl Gma3dConfig {
    pub fn validate(&self) -> Result<(), Error> {
        let dims = [
            ("context_dim", self.context_dim),
            ("motion_dim", self.motion_dim),
            ("qk_dim", self.qk_dim),
            ("encoder_dim", self.encoder_dim),
            ("k", self.k),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Config(format!("module.{name} must be positive")));
            }
        }
        Ok(())
    }

    /// Encoder widths `3 → [hidden] → encoder_dim`; hidden 0 means one layer.
    pub fn encoder_dims(&self) -> Vec<usize> {
        widths(3, self.encoder_hidden, self.encoder_dim)
    }

    pub fn scorer_dims(&self) -> Vec<usize> {
        widths(
            self.encoder_dim + 2 * self.context_dim,
            self.scorer_hidden,
            1,
        )
    }

    pub fn global_map_dims(&self) -> Vec<usize> {
        widths(1, self.global_weight_hidden, 1)
    }

    pub fn plain_dims(&self) -> Vec<usize> {
        widths(self.motion_dim, self.plain_hidden, self.motion_dim)
    }
}

fn widths(inp: usize, hidden: usize, out: usize) -> Vec<usize> {
    if hidden == 0 {
        vec![inp, out]
    } else {
        vec![inp, hidden, out]
    }
}

macro_rules! keyword_enum {
    ($ty:ident { $($variant:ident => $kw:literal),+ $(,)? }) => {
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self, Error> {
                match s {
                    $($kw => Ok($ty::$variant),)+
                    other => Err(Error::Config(format!(
                        concat!("unknown ", stringify!($ty), " '{}' (expected one of: ", $($kw, " ",)+ ")"),
                        other
                    ))),
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($ty::$variant => $kw,)+ })
            }
        }
    };
}

keyword_enum!(GlobalLogits { Projected => "projected", RawContext => "raw" });
keyword_enum!(NeighborFrame { First => "first", Cross => "cross" });
keyword_enum!(Aggregator { Offset => "offset", PlainMlp => "plain_mlp" });
