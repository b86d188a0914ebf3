use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::DilatedBlockSpec;

/// First layer of a network. It is always followed by batch norm and
/// LeakyReLU.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FrontEnd {
    Sinc {
        length: usize,
        channels: usize,
        #[serde(default)]
        paper_sign: bool,
    },
    Conv { kernel_size: usize, channels: usize },
}

impl FrontEnd {
    pub fn channels(&self) -> usize {
        match self {
            FrontEnd::Sinc { channels, .. } | FrontEnd::Conv { channels, .. } => *channels,
        }
    }
}

/// One trunk stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Block {
    /// conv -> batch norm -> LeakyReLU.
    Conv { kernel_size: usize, channels: usize },
    Dilated(DilatedBlockSpec),
    /// A single conv/batch-norm/LeakyReLU triple with an explicit dilation.
    DilatedLayer {
        kernel_size: usize,
        dilation: usize,
        channels: usize,
    },
}

impl Block {
    pub fn out_channels(&self) -> usize {
        match self {
            Block::Conv { channels, .. } | Block::DilatedLayer { channels, .. } => *channels,
            Block::Dilated(s) => s.channels,
        }
    }

    fn set_channels(&mut self, width: usize) {
        match self {
            Block::Conv { channels, .. } | Block::DilatedLayer { channels, .. } => *channels = width,
            Block::Dilated(s) => s.channels = width,
        }
    }
}

/// Output conv to one channel followed by tanh.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Head {
    pub kernel_size: usize,
    /// Start with all-zero kernel and bias, so the network outputs zeros.
    #[serde(default)]
    pub zero_init: bool,
}

/// Declarative description of a waveform-mapping network.
///
/// Stage 0 is the front-end output, concatenated with `aux_channels`
/// extra input channels when present. Stage `j + 1` is the output of trunk
/// block `j`. A skip `(s, j)` concatenates stage `s` onto the input of
/// trunk block `j` (or of the head when `j == trunk.len()`), after the main
/// path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    pub input_channels: usize,
    #[serde(default)]
    pub aux_channels: usize,
    pub front_end: FrontEnd,
    pub trunk: Vec<Block>,
    #[serde(default)]
    pub skips: Vec<(usize, usize)>,
    pub head: Head,
    #[serde(default)]
    pub seed: u64,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input_channels == 0 {
            return Err(Error::invalid("model needs at least one input channel"));
        }
        match &self.front_end {
            FrontEnd::Sinc { length, channels, .. } => {
                if length % 2 == 0 || *channels == 0 {
                    return Err(Error::invalid("sinc front end needs odd length and channels"));
                }
            }
            FrontEnd::Conv {
                kernel_size,
                channels,
            } => {
                if *kernel_size == 0 || *channels == 0 {
                    return Err(Error::invalid("conv front end needs kernel size and channels"));
                }
            }
        }
        for b in &self.trunk {
            match b {
                Block::Conv {
                    kernel_size,
                    channels,
                } if *kernel_size == 0 || *channels == 0 => {
                    return Err(Error::invalid("conv block needs kernel size and channels"))
                }
                Block::DilatedLayer {
                    kernel_size,
                    dilation,
                    channels,
                } if *kernel_size == 0 || *dilation == 0 || *channels == 0 => {
                    return Err(Error::invalid("dilated layer needs kernel, dilation, channels"))
                }
                Block::Dilated(s) => s.validate()?,
                _ => {}
            }
        }
        if self.head.kernel_size == 0 {
            return Err(Error::invalid("head kernel size must be >= 1"));
        }
        for &(src, dst) in &self.skips {
            if dst > self.trunk.len() || src >= dst {
                return Err(Error::invalid(format!(
                    "skip ({src}, {dst}) must run forward into an existing block"
                )));
            }
        }
        Ok(())
    }

    /// Channels of every stage, stage 0 included.
    pub fn stage_channels(&self) -> Vec<usize> {
        let mut c = vec![self.front_end.channels() + self.aux_channels];
        c.extend(self.trunk.iter().map(Block::out_channels));
        c
    }

    /// Input channels of trunk block `j` (or of the head for `j == trunk.len()`).
    pub fn block_input_channels(&self, j: usize) -> usize {
        let stages = self.stage_channels();
        stages[j]
            + self
                .skips
                .iter()
                .filter(|&&(_, d)| d == j)
                .map(|&(s, _)| stages[s])
                .sum::<usize>()
    }

    /// Replaces the width of the front end and every trunk block.
    pub fn with_width(mut self, width: usize) -> Self {
        match &mut self.front_end {
            FrontEnd::Sinc { channels, .. } | FrontEnd::Conv { channels, .. } => *channels = width,
        }
        for b in &mut self.trunk {
            b.set_channels(width);
        }
        self
    }

    pub fn with_input_channels(mut self, n: usize) -> Self {
        self.input_channels = n;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Names accepted by [`build_named_model`].
pub const MODEL_NAMES: [&str; 7] = [
    "FCN",
    "FCN-55",
    "DCN-54",
    "FCN-251",
    "SincFCN-251",
    "DFCN",
    "SDFCN",
];

/// Width of the preliminary model family.
pub const DEFAULT_WIDTH: usize = 30;

fn conv_block(kernel_size: usize, channels: usize) -> Block {
    Block::Conv {
        kernel_size,
        channels,
    }
}

/// Four dilated blocks alternating with four kernel-3 conv layers, with the
/// stage-0 features concatenated onto the input of blocks two to four.
fn dilated_trunk(width: usize) -> (Vec<Block>, Vec<(usize, usize)>) {
    let dilated = Block::Dilated(DilatedBlockSpec {
        channels: width,
        ..Default::default()
    });
    let layer = Block::DilatedLayer {
        kernel_size: 3,
        dilation: 1,
        channels: width,
    };
    let mut trunk = Vec::with_capacity(8);
    for _ in 0..4 {
        trunk.push(dilated.clone());
        trunk.push(layer.clone());
    }
    (trunk, vec![(0, 2), (0, 4), (0, 6)])
}

pub fn build_named_model(name: &str, input_channels: usize) -> Result<ModelSpec> {
    let w = DEFAULT_WIDTH;
    let head = |kernel_size| Head {
        kernel_size,
        zero_init: false,
    };
    let sinc = FrontEnd::Sinc {
        length: 251,
        channels: w,
        paper_sign: false,
    };
    let (front_end, trunk, skips, head) = match name {
        "FCN" => (
            FrontEnd::Conv {
                kernel_size: 55,
                channels: 64,
            },
            vec![conv_block(55, 64); 6],
            vec![],
            head(55),
        ),
        "FCN-55" => (
            FrontEnd::Conv {
                kernel_size: 55,
                channels: w,
            },
            vec![conv_block(55, w); 2],
            vec![],
            head(55),
        ),
        "DCN-54" => (
            FrontEnd::Conv {
                kernel_size: 55,
                channels: w,
            },
            vec![Block::Dilated(DilatedBlockSpec {
                channels: w,
                ..Default::default()
            })],
            vec![],
            head(1),
        ),
        "FCN-251" => (
            FrontEnd::Conv {
                kernel_size: 251,
                channels: w,
            },
            vec![conv_block(55, w); 2],
            vec![],
            head(55),
        ),
        "SincFCN-251" => (sinc, vec![conv_block(55, w); 2], vec![], head(55)),
        "SDFCN" => {
            let (t, s) = dilated_trunk(w);
            (sinc, t, s, head(55))
        }
        "DFCN" => {
            let (t, s) = dilated_trunk(w);
            (
                FrontEnd::Conv {
                    kernel_size: 251,
                    channels: w,
                },
                t,
                s,
                head(55),
            )
        }
        other => return Err(Error::UnknownModel(other.to_string())),
    };
    let spec = ModelSpec {
        name: name.to_string(),
        input_channels,
        aux_channels: 0,
        front_end,
        trunk,
        skips,
        head,
        seed: 0,
    };
    spec.validate()?;
    Ok(spec)
}
