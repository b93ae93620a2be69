//! Parameter containers for the extractor network.
//!
//! Every tensor is reachable through the name-based visitors, which drive the
//! optimizer, checkpointing, parameter counting and the finite-difference
//! gradient checks. Both visitors must enumerate tensors in the same order.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use super::layers::{Depthwise, Gln, Linear, Prelu, TemporalConv};

#[derive(Debug, Clone, PartialEq)]
pub struct TcnLayer {
    pub pw_in: Linear,
    pub prelu1: Prelu,
    pub norm1: Gln,
    pub dconv: Depthwise,
    pub prelu2: Prelu,
    pub norm2: Gln,
    pub pw_out: Linear,
}

impl TcnLayer {
    fn init(rng: &mut ChaCha8Rng, channels: usize, hidden: usize, dilation: usize) -> Self {
        TcnLayer {
            pw_in: Linear::init(rng, hidden, channels),
            prelu1: Prelu::init(hidden),
            norm1: Gln::init(hidden),
            dconv: Depthwise::init(rng, 3, hidden, dilation),
            prelu2: Prelu::init(hidden),
            norm2: Gln::init(hidden),
            pw_out: Linear::init(rng, channels, hidden),
        }
    }

    fn zeros_like(&self) -> Self {
        TcnLayer {
            pw_in: self.pw_in.zeros_like(),
            prelu1: self.prelu1.zeros_like(),
            norm1: self.norm1.zeros_like(),
            dconv: self.dconv.zeros_like(),
            prelu2: self.prelu2.zeros_like(),
            norm2: self.norm2.zeros_like(),
            pw_out: self.pw_out.zeros_like(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams {
    pub visual_proj: Option<Linear>,
    pub visual_norm: Option<Gln>,
    pub voice_proj: Option<Linear>,
    pub voice_norm: Option<Gln>,
    /// Projection of the latent audio into the clue width; absent when the
    /// widths already match.
    pub vad_proj: Option<Linear>,
    pub vad_out: Option<Linear>,
    pub bottleneck: Linear,
    pub tcn: Vec<TcnLayer>,
    pub out: Linear,
}

impl BlockParams {
    fn init(rng: &mut ChaCha8Rng, cfg: &ModelConfig) -> Self {
        let clue = cfg.clue_mode;
        let hidden = cfg.tcn_hidden();
        let visual_proj = clue
            .uses_visual()
            .then(|| Linear::init(rng, cfg.d_av, cfg.d_v));
        let visual_norm = clue.uses_visual().then(|| Gln::init(cfg.d_av));
        let voice_proj = clue
            .uses_voiceprint()
            .then(|| Linear::init(rng, cfg.d_av, cfg.d_a));
        let voice_norm = clue.uses_voiceprint().then(|| Gln::init(cfg.d_av));
        let with_vad = cfg.use_attention && clue == super::config::ClueMode::Both;
        let vad_proj = (with_vad && cfg.vad_needs_projection())
            .then(|| Linear::init(rng, cfg.d_av, cfg.d_in));
        let vad_out = with_vad.then(|| Linear::init(rng, 1, cfg.d_av));
        BlockParams {
            visual_proj,
            visual_norm,
            voice_proj,
            voice_norm,
            vad_proj,
            vad_out,
            bottleneck: Linear::init(rng, cfg.tcn_channels, cfg.d_av + cfg.d_in),
            tcn: (0..cfg.tcn_layers_per_block)
                .map(|i| TcnLayer::init(rng, cfg.tcn_channels, hidden, 1 << i))
                .collect(),
            out: Linear::init(rng, cfg.d_in, cfg.tcn_channels),
        }
    }

    pub(crate) fn zeros_like(&self) -> Self {
        BlockParams {
            visual_proj: self.visual_proj.as_ref().map(Linear::zeros_like),
            visual_norm: self.visual_norm.as_ref().map(Gln::zeros_like),
            voice_proj: self.voice_proj.as_ref().map(Linear::zeros_like),
            voice_norm: self.voice_norm.as_ref().map(Gln::zeros_like),
            vad_proj: self.vad_proj.as_ref().map(Linear::zeros_like),
            vad_out: self.vad_out.as_ref().map(Linear::zeros_like),
            bottleneck: self.bottleneck.zeros_like(),
            tcn: self.tcn.iter().map(TcnLayer::zeros_like).collect(),
            out: self.out.zeros_like(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub audio_enc: Linear,
    pub visual_conv1: Option<TemporalConv>,
    pub visual_conv2: Option<TemporalConv>,
    pub voice_front: Option<Linear>,
    pub voice_mid: Option<Linear>,
    pub blocks: Vec<BlockParams>,
    /// Decoder basis (d_in, window_len); no bias, so an all-zero latent
    /// decodes to silence.
    pub decoder_w: Array2<f64>,
}

impl ModelParams {
    pub fn init(cfg: &ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let clue = cfg.clue_mode;
        let audio_enc = Linear::init(&mut rng, cfg.d_in, cfg.window_len);
        let visual_conv1 = clue
            .uses_visual()
            .then(|| TemporalConv::init(&mut rng, 3, cfg.d_v, cfg.lip_dim));
        let visual_conv2 = clue
            .uses_visual()
            .then(|| TemporalConv::init(&mut rng, 3, cfg.d_v, cfg.d_v));
        let voice_front = clue
            .uses_voiceprint()
            .then(|| Linear::init(&mut rng, cfg.d_a, cfg.window_len));
        let voice_mid = clue
            .uses_voiceprint()
            .then(|| Linear::init(&mut rng, cfg.d_a, cfg.d_a));
        let blocks = (0..cfg.num_blocks)
            .map(|_| BlockParams::init(&mut rng, cfg))
            .collect();
        let bound = (1.0 / cfg.d_in as f64).sqrt();
        let decoder_w = Array2::from_shape_fn((cfg.d_in, cfg.window_len), |_| {
            rand::Rng::gen_range(&mut rng, -bound..bound)
        });
        ModelParams {
            audio_enc,
            visual_conv1,
            visual_conv2,
            voice_front,
            voice_mid,
            blocks,
            decoder_w,
        }
    }

    pub fn zeros_like(&self) -> Self {
        ModelParams {
            audio_enc: self.audio_enc.zeros_like(),
            visual_conv1: self.visual_conv1.as_ref().map(TemporalConv::zeros_like),
            visual_conv2: self.visual_conv2.as_ref().map(TemporalConv::zeros_like),
            voice_front: self.voice_front.as_ref().map(Linear::zeros_like),
            voice_mid: self.voice_mid.as_ref().map(Linear::zeros_like),
            blocks: self.blocks.iter().map(BlockParams::zeros_like).collect(),
            decoder_w: Array2::zeros(self.decoder_w.raw_dim()),
        }
    }

    pub fn for_each_tensor<'a>(&'a self, f: &mut dyn FnMut(&str, &'a [f64])) {
        let mut out: Vec<(String, &[f64])> = Vec::new();
        self.collect(&mut out);
        for (name, slice) in out {
            f(&name, slice);
        }
    }

    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        self.collect(&mut out);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out = Vec::new();
        self.collect_mut(&mut out);
        out
    }

    fn collect<'a>(&'a self, out: &mut Vec<(String, &'a [f64])>) {
        let push2 =
            |out: &mut Vec<(String, &'a [f64])>, name: String, arr: &'a Array2<f64>| {
                out.push((name, arr.as_slice().expect("standard layout")));
            };
        push2(out, "audio_enc.w".into(), &self.audio_enc.w);
        out.push(("audio_enc.b".into(), self.audio_enc.b.as_slice().unwrap()));
        if let Some(c) = &self.visual_conv1 {
            for (k, tap) in c.taps.iter().enumerate() {
                push2(out, format!("visual_enc.conv1.w{k}"), tap);
            }
            out.push(("visual_enc.conv1.b".into(), c.b.as_slice().unwrap()));
        }
        if let Some(c) = &self.visual_conv2 {
            for (k, tap) in c.taps.iter().enumerate() {
                push2(out, format!("visual_enc.conv2.w{k}"), tap);
            }
            out.push(("visual_enc.conv2.b".into(), c.b.as_slice().unwrap()));
        }
        if let Some(l) = &self.voice_front {
            push2(out, "voice_enc.front.w".into(), &l.w);
            out.push(("voice_enc.front.b".into(), l.b.as_slice().unwrap()));
        }
        if let Some(l) = &self.voice_mid {
            push2(out, "voice_enc.mid.w".into(), &l.w);
            out.push(("voice_enc.mid.b".into(), l.b.as_slice().unwrap()));
        }
        for (i, blk) in self.blocks.iter().enumerate() {
            let p = format!("blocks.{i}");
            let lin = |out: &mut Vec<(String, &'a [f64])>, name: String, l: &'a Linear| {
                out.push((format!("{name}.w"), l.w.as_slice().unwrap()));
                out.push((format!("{name}.b"), l.b.as_slice().unwrap()));
            };
            if let Some(l) = &blk.visual_proj {
                lin(out, format!("{p}.visual_proj"), l);
            }
            if let Some(n) = &blk.visual_norm {
                out.push((format!("{p}.visual_norm.gamma"), n.gamma.as_slice().unwrap()));
                out.push((format!("{p}.visual_norm.beta"), n.beta.as_slice().unwrap()));
            }
            if let Some(l) = &blk.voice_proj {
                lin(out, format!("{p}.voice_proj"), l);
            }
            if let Some(n) = &blk.voice_norm {
                out.push((format!("{p}.voice_norm.gamma"), n.gamma.as_slice().unwrap()));
                out.push((format!("{p}.voice_norm.beta"), n.beta.as_slice().unwrap()));
            }
            if let Some(l) = &blk.vad_proj {
                lin(out, format!("{p}.vad_proj"), l);
            }
            if let Some(l) = &blk.vad_out {
                lin(out, format!("{p}.vad_out"), l);
            }
            lin(out, format!("{p}.bottleneck"), &blk.bottleneck);
            for (j, t) in blk.tcn.iter().enumerate() {
                let q = format!("{p}.tcn.{j}");
                lin(out, format!("{q}.pw_in"), &t.pw_in);
                out.push((format!("{q}.prelu1.a"), t.prelu1.a.as_slice().unwrap()));
                out.push((format!("{q}.norm1.gamma"), t.norm1.gamma.as_slice().unwrap()));
                out.push((format!("{q}.norm1.beta"), t.norm1.beta.as_slice().unwrap()));
                push2(out, format!("{q}.dconv.w"), &t.dconv.w);
                out.push((format!("{q}.dconv.b"), t.dconv.b.as_slice().unwrap()));
                out.push((format!("{q}.prelu2.a"), t.prelu2.a.as_slice().unwrap()));
                out.push((format!("{q}.norm2.gamma"), t.norm2.gamma.as_slice().unwrap()));
                out.push((format!("{q}.norm2.beta"), t.norm2.beta.as_slice().unwrap()));
                lin(out, format!("{q}.pw_out"), &t.pw_out);
            }
            lin(out, format!("{p}.out"), &blk.out);
        }
        push2(out, "decoder.w".into(), &self.decoder_w);
    }

    fn collect_mut<'a>(&'a mut self, out: &mut Vec<(String, &'a mut [f64])>) {
        out.push(("audio_enc.w".into(), self.audio_enc.w.as_slice_mut().unwrap()));
        out.push(("audio_enc.b".into(), self.audio_enc.b.as_slice_mut().unwrap()));
        if let Some(c) = &mut self.visual_conv1 {
            for (k, tap) in c.taps.iter_mut().enumerate() {
                out.push((format!("visual_enc.conv1.w{k}"), tap.as_slice_mut().unwrap()));
            }
            out.push(("visual_enc.conv1.b".into(), c.b.as_slice_mut().unwrap()));
        }
        if let Some(c) = &mut self.visual_conv2 {
            for (k, tap) in c.taps.iter_mut().enumerate() {
                out.push((format!("visual_enc.conv2.w{k}"), tap.as_slice_mut().unwrap()));
            }
            out.push(("visual_enc.conv2.b".into(), c.b.as_slice_mut().unwrap()));
        }
        if let Some(l) = &mut self.voice_front {
            out.push(("voice_enc.front.w".into(), l.w.as_slice_mut().unwrap()));
            out.push(("voice_enc.front.b".into(), l.b.as_slice_mut().unwrap()));
        }
        if let Some(l) = &mut self.voice_mid {
            out.push(("voice_enc.mid.w".into(), l.w.as_slice_mut().unwrap()));
            out.push(("voice_enc.mid.b".into(), l.b.as_slice_mut().unwrap()));
        }
        for (i, blk) in self.blocks.iter_mut().enumerate() {
            let p = format!("blocks.{i}");
            if let Some(l) = &mut blk.visual_proj {
                out.push((format!("{p}.visual_proj.w"), l.w.as_slice_mut().unwrap()));
                out.push((format!("{p}.visual_proj.b"), l.b.as_slice_mut().unwrap()));
            }
            if let Some(n) = &mut blk.visual_norm {
                out.push((format!("{p}.visual_norm.gamma"), n.gamma.as_slice_mut().unwrap()));
                out.push((format!("{p}.visual_norm.beta"), n.beta.as_slice_mut().unwrap()));
            }
            if let Some(l) = &mut blk.voice_proj {
                out.push((format!("{p}.voice_proj.w"), l.w.as_slice_mut().unwrap()));
                out.push((format!("{p}.voice_proj.b"), l.b.as_slice_mut().unwrap()));
            }
            if let Some(n) = &mut blk.voice_norm {
                out.push((format!("{p}.voice_norm.gamma"), n.gamma.as_slice_mut().unwrap()));
                out.push((format!("{p}.voice_norm.beta"), n.beta.as_slice_mut().unwrap()));
            }
            if let Some(l) = &mut blk.vad_proj {
                out.push((format!("{p}.vad_proj.w"), l.w.as_slice_mut().unwrap()));
                out.push((format!("{p}.vad_proj.b"), l.b.as_slice_mut().unwrap()));
            }
            if let Some(l) = &mut blk.vad_out {
                out.push((format!("{p}.vad_out.w"), l.w.as_slice_mut().unwrap()));
                out.push((format!("{p}.vad_out.b"), l.b.as_slice_mut().unwrap()));
            }
            out.push((format!("{p}.bottleneck.w"), blk.bottleneck.w.as_slice_mut().unwrap()));
            out.push((format!("{p}.bottleneck.b"), blk.bottleneck.b.as_slice_mut().unwrap()));
            for (j, t) in blk.tcn.iter_mut().enumerate() {
                let q = format!("{p}.tcn.{j}");
                out.push((format!("{q}.pw_in.w"), t.pw_in.w.as_slice_mut().unwrap()));
                out.push((format!("{q}.pw_in.b"), t.pw_in.b.as_slice_mut().unwrap()));
                out.push((format!("{q}.prelu1.a"), t.prelu1.a.as_slice_mut().unwrap()));
                out.push((format!("{q}.norm1.gamma"), t.norm1.gamma.as_slice_mut().unwrap()));
                out.push((format!("{q}.norm1.beta"), t.norm1.beta.as_slice_mut().unwrap()));
                out.push((format!("{q}.dconv.w"), t.dconv.w.as_slice_mut().unwrap()));
                out.push((format!("{q}.dconv.b"), t.dconv.b.as_slice_mut().unwrap()));
                out.push((format!("{q}.prelu2.a"), t.prelu2.a.as_slice_mut().unwrap()));
                out.push((format!("{q}.norm2.gamma"), t.norm2.gamma.as_slice_mut().unwrap()));
                out.push((format!("{q}.norm2.beta"), t.norm2.beta.as_slice_mut().unwrap()));
                out.push((format!("{q}.pw_out.w"), t.pw_out.w.as_slice_mut().unwrap()));
                out.push((format!("{q}.pw_out.b"), t.pw_out.b.as_slice_mut().unwrap()));
            }
            out.push((format!("{p}.out.w"), blk.out.w.as_slice_mut().unwrap()));
            out.push((format!("{p}.out.b"), blk.out.b.as_slice_mut().unwrap()));
        }
        out.push(("decoder.w".into(), self.decoder_w.as_slice_mut().unwrap()));
    }

    /// Element-wise accumulate: self += other. Panics on mismatched layouts;
    /// callers only combine gradients created by `zeros_like`.
    pub fn add_assign(&mut self, other: &ModelParams) {
        let theirs = other.tensors();
        for ((name, mine), (other_name, src)) in self.tensors_mut().into_iter().zip(theirs) {
            assert_eq!(name, other_name, "parameter layout mismatch");
            for (a, b) in mine.iter_mut().zip(src.iter()) {
                *a += b;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, t) in self.tensors_mut() {
            for v in t {
                *v *= factor;
            }
        }
    }

    pub fn total_len(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// Total parameter count with a per-component breakdown.
    pub fn count(&self) -> ParamCount {
        let mut by_component: BTreeMap<String, usize> = BTreeMap::new();
        for (name, t) in self.tensors() {
            *by_component.entry(component_of(&name).to_string()).or_default() += t.len();
        }
        ParamCount { total: by_component.values().sum(), by_component }
    }
}

fn component_of(name: &str) -> &'static str {
    if name.starts_with("audio_enc") {
        "audio_encoder"
    } else if name.starts_with("visual_enc") {
        "visual_encoder"
    } else if name.starts_with("voice_enc") {
        "voiceprint_encoder"
    } else if name.starts_with("decoder") {
        "audio_decoder"
    } else if name.contains(".vad_") {
        "attention_heads"
    } else {
        "extractor_blocks"
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ParamCount {
    pub total: usize,
    pub by_component: BTreeMap<String, usize>,
}
