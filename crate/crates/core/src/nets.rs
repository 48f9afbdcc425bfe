//! Per-parameter encoder/decoder networks and representation extraction.
//!
//! Four independent encoders map an image to one embedding each (geometry,
//! albedo, camera, light) with no weight sharing. Four decoders map the
//! embeddings back to explicit scene parameters, squashed into their valid
//! ranges by scaled tanh/sigmoid so any finite activation decodes to a
//! renderable scene.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::ad::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::scene::{ranges, SceneParams};

/// One embedding per scene parameter, each of shape [N, F].
#[derive(Debug, Clone)]
pub struct FeatureSet<T: Scalar> {
    pub z_geom: Tensor<T>,
    pub z_alb: Tensor<T>,
    pub z_cam: Tensor<T>,
    pub z_light: Tensor<T>,
}

impl<T: Scalar> FeatureSet<T> {
    pub fn batch_size(&self) -> usize {
        self.z_geom.shape()[0]
    }

    pub fn feature_dim(&self) -> usize {
        self.z_geom.shape()[1]
    }

    pub fn block(&self, block: Block) -> &Tensor<T> {
        match block {
            Block::Geom => &self.z_geom,
            Block::Alb => &self.z_alb,
            Block::Cam => &self.z_cam,
            Block::Light => &self.z_light,
        }
    }

    pub fn detach(&self) -> FeatureSet<T> {
        FeatureSet {
            z_geom: self.z_geom.detach(),
            z_alb: self.z_alb.detach(),
            z_cam: self.z_cam.detach(),
            z_light: self.z_light.detach(),
        }
    }
}

/// Scene-parameter feature blocks, in the fixed stacking order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    Geom,
    Alb,
    Cam,
    Light,
}

pub const ALL_BLOCKS: [Block; 4] = [Block::Geom, Block::Alb, Block::Cam, Block::Light];

impl Block {
    pub fn name(self) -> &'static str {
        match self {
            Block::Geom => "geom",
            Block::Alb => "alb",
            Block::Cam => "cam",
            Block::Light => "light",
        }
    }

    pub fn parse(s: &str) -> Result<Block> {
        match s.trim() {
            "geom" => Ok(Block::Geom),
            "alb" => Ok(Block::Alb),
            "cam" => Ok(Block::Cam),
            "light" => Ok(Block::Light),
            other => Err(Error::InvalidConfig(format!(
                "unknown feature block `{other}` (expected geom, alb, cam, light)"
            ))),
        }
    }
}

/// Parse a comma-separated block list like "geom,alb". Order in the input
/// does not matter; stacking order is always geom, alb, cam, light.
pub fn parse_blocks(s: &str) -> Result<Vec<Block>> {
    let mut present = [false; 4];
    for part in s.split(',') {
        let b = Block::parse(part)?;
        present[b as usize] = true;
    }
    let blocks: Vec<Block> = ALL_BLOCKS.iter().copied().filter(|b| present[*b as usize]).collect();
    if blocks.is_empty() {
        return Err(Error::InvalidConfig("empty block selection".into()));
    }
    Ok(blocks)
}

/// Concatenate the selected blocks in fixed order: [N, |blocks| * F].
pub fn extract_representation<T: Scalar>(z: &FeatureSet<T>, blocks: &[Block]) -> Result<Tensor<T>> {
    if blocks.is_empty() {
        return Err(Error::InvalidConfig("representation needs a non-empty block subset".into()));
    }
    let mut ordered: Vec<Tensor<T>> = Vec::new();
    for b in ALL_BLOCKS {
        if blocks.contains(&b) {
            ordered.push(z.block(b).clone());
        }
    }
    Ok(Tensor::concat(&ordered, 1))
}

/// Architecture hyperparameters. Encoder channels are
/// [w, 2w, 4w, 8w] for `base_width` w; decoders mirror them.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct NetConfig {
    pub image_size: usize,
    /// Embedding width F per scene parameter.
    pub feature_dim: usize,
    pub base_width: usize,
    /// Hidden width of the light/camera decoder perceptrons.
    pub mlp_hidden: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig { image_size: 64, feature_dim: 256, base_width: 32, mlp_hidden: 64 }
    }
}

impl NetConfig {
    pub fn encoder_channels(&self) -> [usize; 4] {
        let w = self.base_width;
        [w, 2 * w, 4 * w, 8 * w]
    }

    /// Number of upsampling blocks and the base grid side for the map
    /// decoders: four doublings from a 4x4 seed at the default 64x64,
    /// proportionally fewer for the small test sizes (the seed grid stays
    /// at 4x4 so the embedding keeps direct spatial control).
    pub fn decoder_plan(&self) -> (usize, usize) {
        let log = self.image_size.trailing_zeros() as usize;
        let n_up = log.saturating_sub(2).clamp(1, 4);
        (n_up, self.image_size >> n_up)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.image_size.is_power_of_two() || self.image_size < 8 {
            return Err(Error::InvalidConfig(format!(
                "image_size must be a power of two >= 8, got {}",
                self.image_size
            )));
        }
        if self.feature_dim == 0 || self.base_width == 0 || self.mlp_hidden == 0 {
            return Err(Error::InvalidConfig("zero-width layer in net config".into()));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// layers
// ---------------------------------------------------------------------------

fn uniform_fan_in<T: Scalar>(rng: &mut ChaCha20Rng, n: usize, fan_in: usize) -> Vec<T> {
    let gain: f64 = std::env::var("PDR_INIT_GAIN").ok().and_then(|v| v.parse().ok()).unwrap_or(1.0);
    let bound = gain / (fan_in as f64).sqrt();
    (0..n).map(|_| T::of(rng.random_range(-bound..bound))).collect()
}

#[derive(Debug, Clone)]
struct Conv<T: Scalar> {
    w: Tensor<T>, // [Co,Ci,k,k]
    b: Tensor<T>, // [1,Co,1,1]
    stride: usize,
    pad: usize,
}

impl<T: Scalar> Conv<T> {
    fn new(rng: &mut ChaCha20Rng, ci: usize, co: usize, k: usize, stride: usize, pad: usize) -> Self {
        let fan_in = ci * k * k;
        Conv {
            w: Tensor::param(uniform_fan_in(rng, co * ci * k * k, fan_in), &[co, ci, k, k]),
            b: Tensor::param(vec![T::zero(); co], &[1, co, 1, 1]),
            stride,
            pad,
        }
    }

    fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        x.conv2d(&self.w, self.stride, self.pad).add(&self.b)
    }
}

#[derive(Debug, Clone)]
struct ConvT<T: Scalar> {
    w: Tensor<T>, // [Ci,Co,k,k]
    b: Tensor<T>,
    stride: usize,
    pad: usize,
}

impl<T: Scalar> ConvT<T> {
    fn new(rng: &mut ChaCha20Rng, ci: usize, co: usize, k: usize, stride: usize, pad: usize) -> Self {
        let fan_in = ci * k * k;
        ConvT {
            w: Tensor::param(uniform_fan_in(rng, ci * co * k * k, fan_in), &[ci, co, k, k]),
            b: Tensor::param(vec![T::zero(); co], &[1, co, 1, 1]),
            stride,
            pad,
        }
    }

    fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        x.conv_transpose2d(&self.w, self.stride, self.pad).add(&self.b)
    }
}

#[derive(Debug, Clone)]
struct Linear<T: Scalar> {
    w: Tensor<T>, // [in,out]
    b: Tensor<T>, // [1,out]
}

impl<T: Scalar> Linear<T> {
    fn new(rng: &mut ChaCha20Rng, d_in: usize, d_out: usize) -> Self {
        Linear {
            w: Tensor::param(uniform_fan_in(rng, d_in * d_out, d_in), &[d_in, d_out]),
            b: Tensor::param(vec![T::zero(); d_out], &[1, d_out]),
        }
    }

    fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        x.matmul(&self.w).add(&self.b)
    }
}

// ---------------------------------------------------------------------------
// encoder / decoders
// ---------------------------------------------------------------------------

/// Four stride-2 conv blocks with relu, global average pool, linear to F.
#[derive(Debug, Clone)]
pub struct Encoder<T: Scalar> {
    convs: Vec<Conv<T>>,
    head: Linear<T>,
}

impl<T: Scalar> Encoder<T> {
    fn new(rng: &mut ChaCha20Rng, cfg: &NetConfig) -> Self {
        let ch = cfg.encoder_channels();
        let mut convs = Vec::with_capacity(4);
        let mut c_in = 3;
        for &c_out in &ch {
            convs.push(Conv::new(rng, c_in, c_out, 3, 2, 1));
            c_in = c_out;
        }
        Encoder { convs, head: Linear::new(rng, ch[3], cfg.feature_dim) }
    }

    /// x: [N,3,H,W] -> [N,F]
    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        let mut h = x.clone();
        for conv in &self.convs {
            h = conv.forward(&h).relu();
        }
        // global average pool over the spatial grid
        let (n, c) = (h.shape()[0], h.shape()[1]);
        let spatial = h.shape()[2] * h.shape()[3];
        let pooled = h.reshape(&[n, c, spatial]).mean_axis(2, false);
        self.head.forward(&pooled)
    }

    fn params(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        for (i, conv) in self.convs.iter().enumerate() {
            out.push((format!("{prefix}.conv{i}.w"), conv.w.clone()));
            out.push((format!("{prefix}.conv{i}.b"), conv.b.clone()));
        }
        out.push((format!("{prefix}.head.w"), self.head.w.clone()));
        out.push((format!("{prefix}.head.b"), self.head.b.clone()));
    }
}

/// Spatial decoder: linear to a [8w, g, g] seed, then stride-2 transposed
/// convolutions up to the image size, then a per-map squash.
#[derive(Debug, Clone)]
pub struct MapDecoder<T: Scalar> {
    fc: Linear<T>,
    ups: Vec<ConvT<T>>,
    seed_channels: usize,
    seed_grid: usize,
    kind: MapKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum MapKind {
    Depth,
    Albedo,
}

impl<T: Scalar> MapDecoder<T> {
    fn new(rng: &mut ChaCha20Rng, cfg: &NetConfig, kind: MapKind) -> Self {
        let ch = cfg.encoder_channels();
        let (n_up, g) = cfg.decoder_plan();
        let out_channels = match kind {
            MapKind::Depth => 1,
            MapKind::Albedo => 3,
        };
        // channel ladder mirrors the encoder from the deep end
        let mut widths = vec![ch[3]];
        for i in 0..n_up {
            let next = if i + 1 == n_up { out_channels } else { ch[3] >> (i + 1) };
            widths.push(next.max(1));
        }
        let mut ups = Vec::with_capacity(n_up);
        for i in 0..n_up {
            ups.push(ConvT::new(rng, widths[i], widths[i + 1], 4, 2, 1));
        }
        MapDecoder {
            fc: Linear::new(rng, cfg.feature_dim, ch[3] * g * g),
            ups,
            seed_channels: ch[3],
            seed_grid: g,
            kind,
        }
    }

    /// z: [N,F] -> [N,C,H,W] inside the parameter range.
    pub fn forward(&self, z: &Tensor<T>) -> Tensor<T> {
        let n = z.shape()[0];
        let mut h = self
            .fc
            .forward(z)
            .relu()
            .reshape(&[n, self.seed_channels, self.seed_grid, self.seed_grid]);
        for (i, up) in self.ups.iter().enumerate() {
            h = up.forward(&h);
            if i + 1 < self.ups.len() {
                h = h.relu();
            }
        }
        match self.kind {
            MapKind::Depth => {
                let half = (ranges::DEPTH_MAX - ranges::DEPTH_MIN) / 2.0;
                let mid = (ranges::DEPTH_MAX + ranges::DEPTH_MIN) / 2.0;
                h.tanh().mul_scalar(half).add_scalar(mid)
            }
            MapKind::Albedo => h.sigmoid(),
        }
    }

    fn params(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        out.push((format!("{prefix}.fc.w"), self.fc.w.clone()));
        out.push((format!("{prefix}.fc.b"), self.fc.b.clone()));
        for (i, up) in self.ups.iter().enumerate() {
            out.push((format!("{prefix}.up{i}.w"), up.w.clone()));
            out.push((format!("{prefix}.up{i}.b"), up.b.clone()));
        }
    }
}

/// Two-layer perceptron decoder for the light/camera vectors, squashed
/// per-component by offset + scale * tanh.
#[derive(Debug, Clone)]
pub struct VecDecoder<T: Scalar> {
    l1: Linear<T>,
    l2: Linear<T>,
    offset: Tensor<T>,
    scale: Tensor<T>,
}

impl<T: Scalar> VecDecoder<T> {
    fn new(rng: &mut ChaCha20Rng, cfg: &NetConfig, offset: &[f64], scale: &[f64]) -> Self {
        let d_out = offset.len();
        VecDecoder {
            l1: Linear::new(rng, cfg.feature_dim, cfg.mlp_hidden),
            l2: Linear::new(rng, cfg.mlp_hidden, d_out),
            offset: Tensor::from_vec(offset.iter().map(|&v| T::of(v)).collect(), &[1, d_out]),
            scale: Tensor::from_vec(scale.iter().map(|&v| T::of(v)).collect(), &[1, d_out]),
        }
    }

    /// z: [N,F] -> [N,D] strictly inside the configured ranges.
    pub fn forward(&self, z: &Tensor<T>) -> Tensor<T> {
        let y = self.l2.forward(&self.l1.forward(z).relu());
        self.offset.add(&self.scale.mul(&y.tanh()))
    }

    fn params(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        out.push((format!("{prefix}.l1.w"), self.l1.w.clone()));
        out.push((format!("{prefix}.l1.b"), self.l1.b.clone()));
        out.push((format!("{prefix}.l2.w"), self.l2.w.clone()));
        out.push((format!("{prefix}.l2.b"), self.l2.b.clone()));
    }
}

/// Batched decoded scene parameters.
#[derive(Debug, Clone)]
pub struct SceneBatch<T: Scalar> {
    pub depth: Tensor<T>,  // [N,1,H,W]
    pub albedo: Tensor<T>, // [N,3,H,W]
    pub light: Tensor<T>,  // [N,4]
    pub camera: Tensor<T>, // [N,6]
}

impl<T: Scalar> SceneBatch<T> {
    pub fn len(&self) -> usize {
        self.depth.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Per-sample view as renderer-shaped SceneParams (depth [H,W],
    /// albedo [H,W,3], light [4], camera [6]), still on the graph.
    pub fn sample(&self, i: usize) -> SceneParams<T> {
        let (h, w) = (self.depth.shape()[2], self.depth.shape()[3]);
        SceneParams {
            depth: self.depth.slice(0, i, 1).reshape(&[h, w]),
            albedo: self.albedo.slice(0, i, 1).reshape(&[3, h, w]).permute(&[1, 2, 0]),
            light: self.light.slice(0, i, 1).reshape(&[4]),
            camera: self.camera.slice(0, i, 1).reshape(&[6]),
        }
    }
}

/// The full model: four encoders and four decoders, no weight sharing.
#[derive(Debug, Clone)]
pub struct Model<T: Scalar> {
    pub config: NetConfig,
    pub enc_geom: Encoder<T>,
    pub enc_alb: Encoder<T>,
    pub enc_cam: Encoder<T>,
    pub enc_light: Encoder<T>,
    pub dec_geom: MapDecoder<T>,
    pub dec_alb: MapDecoder<T>,
    pub dec_cam: VecDecoder<T>,
    pub dec_light: VecDecoder<T>,
}

impl<T: Scalar> Model<T> {
    /// Seeded initialization; every subnet draws from its own derived
    /// stream so widths of one subnet do not shift another's init.
    pub fn new(cfg: &NetConfig, seed: u64) -> Result<Model<T>> {
        cfg.validate()?;
        let sub = |tag: u64| ChaCha20Rng::seed_from_u64(seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(tag));
        use ranges::*;
        Ok(Model {
            config: cfg.clone(),
            enc_geom: Encoder::new(&mut sub(1), cfg),
            enc_alb: Encoder::new(&mut sub(2), cfg),
            enc_cam: Encoder::new(&mut sub(3), cfg),
            enc_light: Encoder::new(&mut sub(4), cfg),
            dec_geom: MapDecoder::new(&mut sub(5), cfg, MapKind::Depth),
            dec_alb: MapDecoder::new(&mut sub(6), cfg, MapKind::Albedo),
            dec_cam: VecDecoder::new(
                &mut sub(7),
                cfg,
                &[0.0; 6],
                &[
                    CAMERA_ROT_MAX,
                    CAMERA_ROT_MAX,
                    CAMERA_ROT_MAX,
                    CAMERA_TRANS_MAX,
                    CAMERA_TRANS_MAX,
                    CAMERA_TRANS_MAX,
                ],
            ),
            dec_light: VecDecoder::new(
                &mut sub(8),
                cfg,
                &[0.5, 0.5, 0.0, 0.0],
                &[0.5, 0.5, LIGHT_ANGLE_MAX, LIGHT_ANGLE_MAX],
            ),
        })
    }

    /// Encode a batch [N,3,H,W] into the four embeddings.
    pub fn encode(&self, x: &Tensor<T>) -> Result<FeatureSet<T>> {
        let s = self.config.image_size;
        if x.ndim() != 4 || x.shape()[1] != 3 || x.shape()[2] != s || x.shape()[3] != s {
            return Err(Error::ImageShape {
                got: x.shape().to_vec(),
                expected: vec![x.shape().first().copied().unwrap_or(1), 3, s, s],
            });
        }
        Ok(FeatureSet {
            z_geom: self.enc_geom.forward(x),
            z_alb: self.enc_alb.forward(x),
            z_cam: self.enc_cam.forward(x),
            z_light: self.enc_light.forward(x),
        })
    }

    /// Decode the four embeddings into batched scene parameters.
    pub fn decode(&self, z: &FeatureSet<T>) -> SceneBatch<T> {
        SceneBatch {
            depth: self.dec_geom.forward(&z.z_geom),
            albedo: self.dec_alb.forward(&z.z_alb),
            light: self.dec_light.forward(&z.z_light),
            camera: self.dec_cam.forward(&z.z_cam),
        }
    }

    /// All parameters as (name, tensor); the order is stable and is the
    /// checkpoint order.
    pub fn params(&self) -> Vec<(String, Tensor<T>)> {
        let mut out = Vec::new();
        self.enc_geom.params("enc_geom", &mut out);
        self.enc_alb.params("enc_alb", &mut out);
        self.enc_cam.params("enc_cam", &mut out);
        self.enc_light.params("enc_light", &mut out);
        self.dec_geom.params("dec_geom", &mut out);
        self.dec_alb.params("dec_alb", &mut out);
        self.dec_cam.params("dec_cam", &mut out);
        self.dec_light.params("dec_light", &mut out);
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|(_, p)| p.len()).sum()
    }

    /// Architecture descriptor for checkpoints and reports.
    pub fn descriptor(&self) -> String {
        let ch = self.config.encoder_channels();
        let (n_up, g) = self.config.decoder_plan();
        format!(
            "enc 3->{}->{}->{}->{} s2, pool, fc{}; dec fc->{}x{}x{}, {} up-blocks; mlp {}",
            ch[0], ch[1], ch[2], ch[3], self.config.feature_dim, ch[3], g, g, n_up, self.config.mlp_hidden
        )
    }
}

/// [H,W,3] image to a single-sample [1,3,H,W] network input.
pub fn image_to_net<T: Scalar>(img: &Tensor<T>) -> Tensor<T> {
    assert!(img.ndim() == 3 && img.shape()[2] == 3, "image must be [H,W,3], got {:?}", img.shape());
    let (h, w) = (img.shape()[0], img.shape()[1]);
    img.permute(&[2, 0, 1]).reshape(&[1, 3, h, w])
}

/// [1,3,H,W] network tensor back to an [H,W,3] image.
pub fn net_to_image<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    assert!(x.ndim() == 4 && x.shape()[0] == 1 && x.shape()[1] == 3, "expected [1,3,H,W], got {:?}", x.shape());
    let (h, w) = (x.shape()[2], x.shape()[3]);
    x.reshape(&[3, h, w]).permute(&[1, 2, 0])
}
