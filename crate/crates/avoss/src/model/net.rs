//! The extractor network: time-domain encoder/decoder around an iterated
//! multi-speaker extractor conditioned on an audio-visual clue.
//!
//! The forward pass records a trace of intermediate activations;
//! `Model::backward` consumes it and produces parameter gradients. Shapes are
//! time-major: (T, channels).

use ndarray::{s, Array1, Array2, Axis, Zip};

use crate::audio::Waveform;
use crate::error::{Error, Result};
use crate::metrics::VadSequence;

use super::config::{ModelConfig, UpsampleKind};
use super::layers::{relu, relu_backward, sigmoid, sigmoid_backward, GlnCache, Linear};
use super::params::{BlockParams, ModelParams, ParamCount, TcnLayer};

const EMB_NORM_EPS: f64 = 1e-12;

/// Time-major matrix of frame embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSequence {
    pub frames: Array2<f64>,
    pub frame_rate: f64,
}

impl LatentSequence {
    pub fn num_frames(&self) -> usize {
        self.frames.nrows()
    }

    pub fn width(&self) -> usize {
        self.frames.ncols()
    }
}

/// Time-invariant voiceprint vector, unit L2 norm after encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerEmbedding {
    pub vector: Array1<f64>,
}

/// Lip-derived feature sequence at video rate.
#[derive(Debug, Clone, PartialEq)]
pub struct LipFeatures {
    /// (video_frames, dims)
    pub frames: Array2<f64>,
    pub fps: f64,
}

impl LipFeatures {
    pub fn num_frames(&self) -> usize {
        self.frames.nrows()
    }

    pub fn duration_s(&self) -> f64 {
        self.frames.nrows() as f64 / self.fps
    }
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub est: Waveform,
    /// One activity sequence per extractor block when attention is enabled,
    /// empty otherwise.
    pub attentions: Vec<VadSequence>,
}

/// Fuses the normalized clue embeddings into the audio-visual clue:
/// zav(t) = v_norm(t) + a(t) * voice_norm, with a = 1 when no attention is
/// supplied.
pub fn fuse_clues(
    visual_norm: &Array2<f64>,
    voice_norm: &Array1<f64>,
    attention: Option<&[f64]>,
) -> Result<Array2<f64>> {
    if visual_norm.ncols() != voice_norm.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("visual width {}", voice_norm.len()),
            got: format!("{}", visual_norm.ncols()),
        });
    }
    if let Some(att) = attention {
        if att.len() != visual_norm.nrows() {
            return Err(Error::LengthMismatch(att.len(), visual_norm.nrows()));
        }
    }
    let mut out = visual_norm.clone();
    for (t, mut row) in out.rows_mut().into_iter().enumerate() {
        let a = attention.map_or(1.0, |att| att[t]);
        Zip::from(&mut row).and(voice_norm).for_each(|o, &v| *o += a * v);
    }
    Ok(out)
}

fn im2col(samples: &[f64], window: usize, hop: usize, t_len: usize) -> Array2<f64> {
    let mut frames = Array2::zeros((t_len, window));
    for t in 0..t_len {
        frames
            .row_mut(t)
            .assign(&ndarray::ArrayView1::from(&samples[t * hop..t * hop + window]));
    }
    frames
}

/// Interpolation weights from latent frames to video frames:
/// (left index, right index, right weight).
fn upsample_map(
    t_len: usize,
    video_frames: usize,
    cfg: &ModelConfig,
) -> Vec<(usize, usize, f64)> {
    let sr = cfg.sample_rate as f64;
    let last = video_frames - 1;
    (0..t_len)
        .map(|t| {
            let center = (t * cfg.hop) as f64 + cfg.window_len as f64 / 2.0;
            let time = center / sr;
            match cfg.upsample {
                UpsampleKind::Nearest => {
                    let idx = ((time * cfg.video_fps).floor() as isize).clamp(0, last as isize);
                    (idx as usize, idx as usize, 0.0)
                }
                UpsampleKind::Linear => {
                    let pos = time * cfg.video_fps - 0.5;
                    let i0 = pos.floor();
                    let w = pos - i0;
                    let lo = (i0 as isize).clamp(0, last as isize) as usize;
                    let hi = (i0 as isize + 1).clamp(0, last as isize) as usize;
                    (lo, hi, w)
                }
            }
        })
        .collect()
}

struct VisualTrace {
    lips: Array2<f64>,
    conv1_pre: Array2<f64>,
    map: Vec<(usize, usize, f64)>,
    video_frames: usize,
}

struct VoiceTrace {
    frames: Array2<f64>,
    h1_pre: Array2<f64>,
    h2_pre: Array2<f64>,
    pooled_norm: f64,
    emb: Array1<f64>,
}

struct TcnLayerTrace {
    x: Array2<f64>,
    y1: Array2<f64>,
    n1: GlnCache,
    y2: Array2<f64>,
    n2: GlnCache,
}

struct BlockTrace {
    visual_norm: Option<GlnCache>,
    voice_raw: Option<Array1<f64>>,
    voice_norm_cache: Option<GlnCache>,
    voice_norm: Option<Array1<f64>>,
    /// Projected latent feeding the detection head; absent when the head
    /// reads the latent directly.
    vad_projected: Option<Array2<f64>>,
    attention: Option<Array1<f64>>,
    /// [zav | previous latent], (T, d_av + d_in).
    cat: Array2<f64>,
    tcn: Vec<TcnLayerTrace>,
    tcn_out: Array2<f64>,
}

pub struct Trace {
    n_samples: usize,
    frames: Array2<f64>,
    enc_pre: Array2<f64>,
    z0: Array2<f64>,
    visual: Option<VisualTrace>,
    z_v: Option<Array2<f64>>,
    voice: Option<VoiceTrace>,
    blocks: Vec<BlockTrace>,
    mask: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub cfg: ModelConfig,
    pub params: ModelParams,
}

impl Model {
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let params = ModelParams::init(&cfg, seed);
        Ok(Model { cfg, params })
    }

    pub fn count_parameters(&self) -> ParamCount {
        self.params.count()
    }

    /// Strided analysis filterbank with ReLU: waveform -> (T, d_in).
    pub fn audio_encode(&self, mix: &Waveform) -> Result<LatentSequence> {
        let t_len = self.cfg.num_frames(mix.len())?;
        let frames = im2col(&mix.samples, self.cfg.window_len, self.cfg.hop, t_len);
        let z0 = relu(&self.params.audio_enc.forward(&frames));
        Ok(LatentSequence { frames: z0, frame_rate: self.cfg.frame_grid().frame_rate() })
    }

    /// Lip features -> (T, d_v) at the latent frame rate, where T is derived
    /// from the audio length `n_samples`.
    pub fn visual_encode(&self, lips: &LipFeatures, n_samples: usize) -> Result<LatentSequence> {
        let (z_v, _) = self.visual_encode_traced(lips, n_samples)?;
        Ok(LatentSequence { frames: z_v, frame_rate: self.cfg.frame_grid().frame_rate() })
    }

    fn visual_encode_traced(
        &self,
        lips: &LipFeatures,
        n_samples: usize,
    ) -> Result<(Array2<f64>, VisualTrace)> {
        let conv1 = self
            .params
            .visual_conv1
            .as_ref()
            .ok_or_else(|| Error::Config("model has no visual encoder".into()))?;
        let conv2 = self.params.visual_conv2.as_ref().expect("paired convs");
        if lips.frames.ncols() != self.cfg.lip_dim {
            return Err(Error::ShapeMismatch {
                expected: format!("lip_dim {}", self.cfg.lip_dim),
                got: format!("{}", lips.frames.ncols()),
            });
        }
        if lips.num_frames() == 0 {
            return Err(Error::TooShort { len: 0, min: 1 });
        }
        let audio_dur = n_samples as f64 / self.cfg.sample_rate as f64;
        if (lips.duration_s() - audio_dur).abs() > 1.0 / lips.fps {
            return Err(Error::DurationMismatch(format!(
                "lip features cover {:.4} s but audio covers {:.4} s",
                lips.duration_s(),
                audio_dur
            )));
        }
        let t_len = self.cfg.num_frames(n_samples)?;
        let conv1_pre = conv1.forward(&lips.frames);
        let enc = conv2.forward(&relu(&conv1_pre));
        let map = upsample_map(t_len, lips.num_frames(), &self.cfg);
        let mut z_v = Array2::zeros((t_len, self.cfg.d_v));
        for (t, &(lo, hi, w)) in map.iter().enumerate() {
            let row_lo = enc.row(lo);
            let row_hi = enc.row(hi);
            Zip::from(&mut z_v.row_mut(t))
                .and(&row_lo)
                .and(&row_hi)
                .for_each(|o, &a, &b| *o = (1.0 - w) * a + w * b);
        }
        let trace = VisualTrace {
            lips: lips.frames.clone(),
            conv1_pre,
            map,
            video_frames: lips.num_frames(),
        };
        Ok((z_v, trace))
    }

    /// Enrollment waveform -> unit-norm speaker embedding. Non-overlapping
    /// analysis frames and per-frame maps keep the embedding exactly
    /// invariant to repetitions of the enrollment.
    pub fn voiceprint_encode(&self, enrollment: &Waveform) -> Result<SpeakerEmbedding> {
        let (emb, _) = self.voiceprint_encode_traced(enrollment)?;
        Ok(SpeakerEmbedding { vector: emb })
    }

    fn voiceprint_encode_traced(
        &self,
        enrollment: &Waveform,
    ) -> Result<(Array1<f64>, VoiceTrace)> {
        let front = self
            .params
            .voice_front
            .as_ref()
            .ok_or_else(|| Error::Config("model has no voiceprint encoder".into()))?;
        let mid = self.params.voice_mid.as_ref().expect("paired layers");
        let window = self.cfg.window_len;
        if enrollment.len() < window {
            return Err(Error::TooShort { len: enrollment.len(), min: window });
        }
        let t_len = enrollment.len() / window;
        let frames = im2col(&enrollment.samples, window, window, t_len);
        let h1_pre = front.forward(&frames);
        let h2_pre = mid.forward(&relu(&h1_pre));
        let h2 = relu(&h2_pre);
        let pooled = h2.mean_axis(Axis(0)).expect("t_len >= 1");
        let norm = pooled.dot(&pooled).sqrt();
        let emb = pooled.mapv(|v| v / norm.max(EMB_NORM_EPS));
        let trace = VoiceTrace { frames, h1_pre, h2_pre, pooled_norm: norm, emb: emb.clone() };
        Ok((emb, trace))
    }

    /// Frame-level confidence that the enrolled speaker is active, from the
    /// element-wise product of the block's voiceprint clue and the latent
    /// audio.
    pub fn detect_offscreen_activity(
        &self,
        block: usize,
        voice_clue: &Array1<f64>,
        latent: &LatentSequence,
    ) -> Result<VadSequence> {
        let blk = self
            .params
            .blocks
            .get(block)
            .ok_or_else(|| Error::Config(format!("block {block} out of range")))?;
        let vad_out = blk
            .vad_out
            .as_ref()
            .ok_or_else(|| Error::Config("attention head disabled".into()))?;
        if voice_clue.len() != self.cfg.d_av {
            return Err(Error::ShapeMismatch {
                expected: format!("d_av {}", self.cfg.d_av),
                got: format!("{}", voice_clue.len()),
            });
        }
        if latent.width() != self.cfg.d_in {
            return Err(Error::ShapeMismatch {
                expected: format!("d_in {}", self.cfg.d_in),
                got: format!("{}", latent.width()),
            });
        }
        let (att, _) = vad_forward(blk, vad_out, &latent.frames, voice_clue);
        VadSequence::predicted(att.to_vec())
    }

    pub fn forward(
        &self,
        mix: &Waveform,
        lips: Option<&LipFeatures>,
        enrollment: Option<&Waveform>,
    ) -> Result<ForwardOutput> {
        let (out, _) = self.forward_traced(mix, lips, enrollment)?;
        Ok(out)
    }

    pub fn forward_traced(
        &self,
        mix: &Waveform,
        lips: Option<&LipFeatures>,
        enrollment: Option<&Waveform>,
    ) -> Result<(ForwardOutput, Trace)> {
        let cfg = &self.cfg;
        let n = mix.len();
        let t_len = cfg.num_frames(n)?;
        let frames = im2col(&mix.samples, cfg.window_len, cfg.hop, t_len);
        let enc_pre = self.params.audio_enc.forward(&frames);
        let z0 = relu(&enc_pre);

        let (z_v, visual_trace) = if cfg.clue_mode.uses_visual() {
            let lips = lips.ok_or_else(|| {
                Error::Data("this model needs lip features but none were given".into())
            })?;
            let (z_v, tr) = self.visual_encode_traced(lips, n)?;
            (Some(z_v), Some(tr))
        } else {
            (None, None)
        };
        let (z_a, voice_trace) = if cfg.clue_mode.uses_voiceprint() {
            let enr = enrollment.ok_or_else(|| {
                Error::Data("this model needs an enrollment utterance but none was given".into())
            })?;
            let (emb, tr) = self.voiceprint_encode_traced(enr)?;
            (Some(emb), Some(tr))
        } else {
            (None, None)
        };

        let mut cur = z0.clone();
        let mut blocks = Vec::with_capacity(cfg.num_blocks);
        let mut attentions = Vec::new();
        for blk in &self.params.blocks {
            let (next, trace) = block_forward(cfg, blk, &cur, z_v.as_ref(), z_a.as_ref())?;
            if let Some(att) = &trace.attention {
                attentions.push(VadSequence::predicted(att.to_vec())?);
            }
            blocks.push(trace);
            cur = next;
        }

        let mask = sigmoid(&cur);
        let lat = &mask * &z0;
        let out = ForwardOutput {
            est: self.decode_latent(&lat, n, mix.sample_rate),
            attentions,
        };
        let trace = Trace {
            n_samples: n,
            frames,
            enc_pre,
            z0,
            visual: visual_trace,
            z_v,
            voice: voice_trace,
            blocks,
            mask,
        };
        Ok((out, trace))
    }

    /// Transposed strided convolution (overlap-add), reconstructed to exactly
    /// `n` samples. An all-zero latent decodes to silence.
    fn decode_latent(&self, lat: &Array2<f64>, n: usize, sample_rate: u32) -> Waveform {
        let cfg = &self.cfg;
        let t_len = lat.nrows();
        let sig = lat.dot(&self.params.decoder_w);
        debug_assert!((t_len - 1) * cfg.hop + cfg.window_len <= n);
        let mut est = vec![0.0; n];
        for t in 0..t_len {
            let start = t * cfg.hop;
            for (i, &v) in sig.row(t).iter().enumerate() {
                est[start + i] += v;
            }
        }
        Waveform::new(est, sample_rate)
    }

    /// Backpropagates `grad_est` (d loss / d estimate) and optional per-block
    /// attention gradients through the recorded trace, returning parameter
    /// gradients.
    pub fn backward(
        &self,
        trace: &Trace,
        grad_est: &[f64],
        grad_attentions: &[Array1<f64>],
    ) -> Result<ModelParams> {
        let cfg = &self.cfg;
        if grad_est.len() != trace.n_samples {
            return Err(Error::LengthMismatch(grad_est.len(), trace.n_samples));
        }
        let mut grads = self.params.zeros_like();
        let t_len = trace.z0.nrows();

        // Decoder adjoint: gather overlap-add segments.
        let mut g_sig = Array2::zeros((t_len, cfg.window_len));
        for t in 0..t_len {
            let start = t * cfg.hop;
            let mut row = g_sig.row_mut(t);
            for (i, g) in row.iter_mut().enumerate() {
                *g = grad_est[start + i];
            }
        }
        let lat = &trace.mask * &trace.z0;
        grads.decoder_w += &lat.t().dot(&g_sig);
        let g_lat = g_sig.dot(&self.params.decoder_w.t());
        let g_mask = &g_lat * &trace.z0;
        let mut g_z0 = &g_lat * &trace.mask;
        let mut g_cur = sigmoid_backward(&trace.mask, &g_mask);

        // Extractor blocks in reverse.
        let mut g_z_v: Option<Array2<f64>> =
            trace.z_v.as_ref().map(|z| Array2::zeros(z.raw_dim()));
        let mut g_z_a: Option<Array1<f64>> = trace
            .voice
            .as_ref()
            .map(|v| Array1::zeros(v.emb.raw_dim()));
        for (i, (blk, btrace)) in self
            .params
            .blocks
            .iter()
            .zip(&trace.blocks)
            .enumerate()
            .rev()
        {
            let g_att_extra = grad_attentions.get(i);
            g_cur = block_backward(
                cfg,
                blk,
                btrace,
                trace.z_v.as_ref(),
                trace.voice.as_ref().map(|v| &v.emb),
                &g_cur,
                g_att_extra,
                grads.blocks.get_mut(i).expect("block grads"),
                g_z_v.as_mut(),
                g_z_a.as_mut(),
            );
        }
        g_z0 += &g_cur;

        // Audio encoder.
        let g_enc_pre = relu_backward(&trace.enc_pre, &g_z0);
        grads.audio_enc.w += &g_enc_pre.t().dot(&trace.frames);
        grads.audio_enc.b += &g_enc_pre.sum_axis(Axis(0));

        // Visual encoder.
        if let (Some(vtrace), Some(g_up)) = (&trace.visual, &g_z_v) {
            let conv1 = self.params.visual_conv1.as_ref().expect("visual params");
            let conv2 = self.params.visual_conv2.as_ref().expect("visual params");
            let g_conv1 = grads.visual_conv1.as_mut().expect("visual grads");
            let g_conv2 = grads.visual_conv2.as_mut().expect("visual grads");
            let mut g_enc = Array2::zeros((vtrace.video_frames, cfg.d_v));
            for (t, &(lo, hi, w)) in vtrace.map.iter().enumerate() {
                let grow = g_up.row(t);
                Zip::from(&mut g_enc.row_mut(lo))
                    .and(&grow)
                    .for_each(|g, &v| *g += (1.0 - w) * v);
                if hi != lo {
                    Zip::from(&mut g_enc.row_mut(hi))
                        .and(&grow)
                        .for_each(|g, &v| *g += w * v);
                }
            }
            let c1_act = relu(&vtrace.conv1_pre);
            let g_c1_act = conv2.backward(&c1_act, &g_enc, g_conv2);
            let g_c1_pre = relu_backward(&vtrace.conv1_pre, &g_c1_act);
            conv1.backward(&vtrace.lips, &g_c1_pre, g_conv1);
        }

        // Voiceprint encoder.
        if let (Some(vtrace), Some(g_emb)) = (&trace.voice, &g_z_a) {
            let front = self.params.voice_front.as_ref().expect("voice params");
            let mid = self.params.voice_mid.as_ref().expect("voice params");
            let norm = vtrace.pooled_norm.max(EMB_NORM_EPS);
            let proj = vtrace.emb.dot(g_emb);
            let g_pooled = g_emb
                .iter()
                .zip(vtrace.emb.iter())
                .map(|(&g, &e)| (g - e * proj) / norm)
                .collect::<Array1<f64>>();
            let rows = vtrace.h2_pre.nrows() as f64;
            let mut g_h2 = Array2::zeros(vtrace.h2_pre.raw_dim());
            for mut row in g_h2.rows_mut() {
                Zip::from(&mut row).and(&g_pooled).for_each(|o, &g| *o = g / rows);
            }
            let g_h2_pre = relu_backward(&vtrace.h2_pre, &g_h2);
            let h1 = relu(&vtrace.h1_pre);
            let g_h1 = mid.backward(&h1, &g_h2_pre, grads.voice_mid.as_mut().expect("grads"));
            let g_h1_pre = relu_backward(&vtrace.h1_pre, &g_h1);
            front.backward(
                &vtrace.frames,
                &g_h1_pre,
                grads.voice_front.as_mut().expect("grads"),
            );
        }

        Ok(grads)
    }
}

fn vad_forward(
    blk: &BlockParams,
    vad_out: &Linear,
    latent: &Array2<f64>,
    voice_raw: &Array1<f64>,
) -> (Array1<f64>, Option<Array2<f64>>) {
    let projected = blk.vad_proj.as_ref().map(|p| p.forward(latent));
    let base = projected.as_ref().unwrap_or(latent);
    let mut prod = base.clone();
    for mut row in prod.rows_mut() {
        Zip::from(&mut row).and(voice_raw).for_each(|v, &a| *v *= a);
    }
    let logit = vad_out.forward(&prod);
    let att = sigmoid(&logit).index_axis(Axis(1), 0).to_owned();
    (att, projected)
}

fn block_forward(
    cfg: &ModelConfig,
    blk: &BlockParams,
    cur: &Array2<f64>,
    z_v: Option<&Array2<f64>>,
    z_a: Option<&Array1<f64>>,
) -> Result<(Array2<f64>, BlockTrace)> {
    let t_len = cur.nrows();

    let mut visual_norm_cache = None;
    let visual_norm = match (&blk.visual_proj, z_v) {
        (Some(proj), Some(z_v)) => {
            let v = proj.forward(z_v);
            let (v_norm, cache) = blk.visual_norm.as_ref().expect("norm").forward(&v);
            visual_norm_cache = Some(cache);
            Some(v_norm)
        }
        _ => None,
    };

    let mut voice_raw = None;
    let mut voice_norm_cache = None;
    let mut voice_norm = None;
    if let (Some(proj), Some(z_a)) = (&blk.voice_proj, z_a) {
        let a_vec = proj.forward_vec(z_a);
        let (a_norm, cache) = blk.voice_norm.as_ref().expect("norm").forward_vec(&a_vec);
        voice_raw = Some(a_vec);
        voice_norm_cache = Some(cache);
        voice_norm = Some(a_norm);
    }

    let (attention, vad_projected) = match (&blk.vad_out, &voice_raw) {
        (Some(vad_out), Some(a_vec)) => {
            let (att, projected) = vad_forward(blk, vad_out, cur, a_vec);
            (Some(att), projected)
        }
        _ => (None, None),
    };

    let zav = match (&visual_norm, &voice_norm) {
        (Some(v), Some(a)) => fuse_clues(v, a, attention.as_ref().map(|x| x.as_slice().unwrap()))?,
        (Some(v), None) => v.clone(),
        (None, Some(a)) => {
            let mut out = Array2::zeros((t_len, a.len()));
            for mut row in out.rows_mut() {
                row.assign(a);
            }
            out
        }
        (None, None) => {
            return Err(Error::Config("block has no clue inputs".into()));
        }
    };

    let mut cat = Array2::zeros((t_len, cfg.d_av + cfg.d_in));
    cat.slice_mut(s![.., ..cfg.d_av]).assign(&zav);
    cat.slice_mut(s![.., cfg.d_av..]).assign(cur);

    let mut x = blk.bottleneck.forward(&cat);
    let mut tcn_traces = Vec::with_capacity(blk.tcn.len());
    for layer in &blk.tcn {
        let (next, tr) = tcn_layer_forward(layer, &x);
        tcn_traces.push(tr);
        x = next;
    }
    let delta = blk.out.forward(&x);
    let next = cur + &delta;

    let trace = BlockTrace {
        visual_norm: visual_norm_cache,
        voice_raw,
        voice_norm_cache,
        voice_norm,
        vad_projected,
        attention,
        cat,
        tcn: tcn_traces,
        tcn_out: x,
    };
    Ok((next, trace))
}

fn tcn_layer_forward(layer: &TcnLayer, x: &Array2<f64>) -> (Array2<f64>, TcnLayerTrace) {
    let y1 = layer.pw_in.forward(x);
    let p1 = layer.prelu1.forward(&y1);
    let (n1_out, n1) = layer.norm1.forward(&p1);
    let y2 = layer.dconv.forward(&n1_out);
    let p2 = layer.prelu2.forward(&y2);
    let (n2_out, n2) = layer.norm2.forward(&p2);
    let delta = layer.pw_out.forward(&n2_out);
    let out = x + &delta;
    (out, TcnLayerTrace { x: x.clone(), y1, n1, y2, n2 })
}

fn affine_rows(xhat: &Array2<f64>, gamma: &Array1<f64>, beta: &Array1<f64>) -> Array2<f64> {
    let mut out = xhat.clone();
    for mut row in out.rows_mut() {
        Zip::from(&mut row)
            .and(gamma)
            .and(beta)
            .for_each(|v, &g, &b| *v = *v * g + b);
    }
    out
}

fn tcn_layer_backward(
    layer: &TcnLayer,
    trace: &TcnLayerTrace,
    g_out: &Array2<f64>,
    grads: &mut TcnLayer,
) -> Array2<f64> {
    let n2_out = affine_rows(&trace.n2.xhat, &layer.norm2.gamma, &layer.norm2.beta);
    let g_n2_out = layer.pw_out.backward(&n2_out, g_out, &mut grads.pw_out);
    let g_p2 = layer.norm2.backward(&trace.n2, &g_n2_out, &mut grads.norm2);
    let g_y2 = layer.prelu2.backward(&trace.y2, &g_p2, &mut grads.prelu2);
    let n1_out = affine_rows(&trace.n1.xhat, &layer.norm1.gamma, &layer.norm1.beta);
    let g_n1_out = layer.dconv.backward(&n1_out, &g_y2, &mut grads.dconv);
    let g_p1 = layer.norm1.backward(&trace.n1, &g_n1_out, &mut grads.norm1);
    let g_y1 = layer.prelu1.backward(&trace.y1, &g_p1, &mut grads.prelu1);
    let mut g_x = layer.pw_in.backward(&trace.x, &g_y1, &mut grads.pw_in);
    g_x += g_out;
    g_x
}

#[allow(clippy::too_many_arguments)]
fn block_backward(
    cfg: &ModelConfig,
    blk: &BlockParams,
    trace: &BlockTrace,
    z_v: Option<&Array2<f64>>,
    z_a: Option<&Array1<f64>>,
    g_next: &Array2<f64>,
    g_att_extra: Option<&Array1<f64>>,
    grads: &mut BlockParams,
    g_z_v: Option<&mut Array2<f64>>,
    g_z_a: Option<&mut Array1<f64>>,
) -> Array2<f64> {
    let t_len = g_next.nrows();
    let cur = trace.cat.slice(s![.., cfg.d_av..]);

    // Residual: gradient w.r.t. the block input accumulates here.
    let mut g_cur = g_next.clone();

    let g_tcn_out = blk.out.backward(&trace.tcn_out, g_next, &mut grads.out);
    let mut g = g_tcn_out;
    for (layer, (ltrace, lgrads)) in blk
        .tcn
        .iter()
        .zip(trace.tcn.iter().zip(grads.tcn.iter_mut()))
        .rev()
    {
        g = tcn_layer_backward(layer, ltrace, &g, lgrads);
    }
    let g_cat = blk.bottleneck.backward(&trace.cat, &g, &mut grads.bottleneck);
    let g_zav = g_cat.slice(s![.., ..cfg.d_av]).to_owned();
    g_cur += &g_cat.slice(s![.., cfg.d_av..]);

    // Fusion adjoint.
    let mut g_voice_norm: Option<Array1<f64>> = None;
    let mut g_att_fusion: Option<Array1<f64>> = None;
    if let Some(a_norm) = &trace.voice_norm {
        match &trace.attention {
            Some(att) => {
                let mut g_att = Array1::zeros(t_len);
                let mut g_a = Array1::zeros(a_norm.len());
                for (t, row) in g_zav.rows().into_iter().enumerate() {
                    g_att[t] = row.dot(a_norm);
                    Zip::from(&mut g_a).and(&row).for_each(|ga, &gz| *ga += att[t] * gz);
                }
                g_voice_norm = Some(g_a);
                g_att_fusion = Some(g_att);
            }
            None => {
                g_voice_norm = Some(g_zav.sum_axis(Axis(0)));
            }
        }
    }

    // Detection head adjoint.
    let mut g_voice_raw_from_vad: Option<Array1<f64>> = None;
    if let (Some(att), Some(vad_out)) = (&trace.attention, &blk.vad_out) {
        let mut g_att_total = g_att_fusion.unwrap_or_else(|| Array1::zeros(t_len));
        if let Some(extra) = g_att_extra {
            g_att_total += extra;
        }
        let voice_raw = trace.voice_raw.as_ref().expect("attention needs voice clue");
        let base = trace
            .vad_projected
            .as_ref()
            .map(|p| p.view())
            .unwrap_or_else(|| cur.view());
        // logit gradient through the sigmoid.
        let g_logit = Array2::from_shape_fn((t_len, 1), |(t, _)| {
            g_att_total[t] * att[t] * (1.0 - att[t])
        });
        let mut prod = base.to_owned();
        for mut row in prod.rows_mut() {
            Zip::from(&mut row).and(voice_raw).for_each(|v, &a| *v *= a);
        }
        let g_prod = vad_out.backward(&prod, &g_logit, grads.vad_out.as_mut().expect("grads"));
        let mut g_base = g_prod.clone();
        for mut row in g_base.rows_mut() {
            Zip::from(&mut row).and(voice_raw).for_each(|v, &a| *v *= a);
        }
        let mut g_a_vec = Array1::zeros(voice_raw.len());
        for (grow, brow) in g_prod.rows().into_iter().zip(base.rows()) {
            Zip::from(&mut g_a_vec)
                .and(&grow)
                .and(&brow)
                .for_each(|ga, &g, &b| *ga += g * b);
        }
        g_voice_raw_from_vad = Some(g_a_vec);
        match &blk.vad_proj {
            Some(proj) => {
                let g_latent = proj.backward(
                    &cur.to_owned(),
                    &g_base,
                    grads.vad_proj.as_mut().expect("grads"),
                );
                g_cur += &g_latent;
            }
            None => {
                g_cur += &g_base;
            }
        }
    }

    // Visual clue adjoint.
    if let (Some(proj), Some(z_v)) = (&blk.visual_proj, z_v) {
        let norm = blk.visual_norm.as_ref().expect("norm");
        let cache = trace.visual_norm.as_ref().expect("cache");
        let g_v = norm.backward(cache, &g_zav, grads.visual_norm.as_mut().expect("grads"));
        let g_input = proj.backward(z_v, &g_v, grads.visual_proj.as_mut().expect("grads"));
        if let Some(acc) = g_z_v {
            *acc += &g_input;
        }
    }

    // Voiceprint clue adjoint: normalized path plus the raw path into the
    // detection head.
    if let (Some(proj), Some(z_a)) = (&blk.voice_proj, z_a) {
        let mut g_a_vec = match g_voice_norm {
            Some(g_a_norm) => {
                let norm = blk.voice_norm.as_ref().expect("norm");
                let cache = trace.voice_norm_cache.as_ref().expect("cache");
                norm.backward_vec(cache, &g_a_norm, grads.voice_norm.as_mut().expect("grads"))
            }
            None => Array1::zeros(cfg.d_av),
        };
        if let Some(from_vad) = g_voice_raw_from_vad {
            g_a_vec += &from_vad;
        }
        let g_input = proj.backward_vec(z_a, &g_a_vec, grads.voice_proj.as_mut().expect("grads"));
        if let Some(acc) = g_z_a {
            *acc += &g_input;
        }
    }

    g_cur
}
