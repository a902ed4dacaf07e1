use crate::error::{Error, Result};
use crate::layers::{
    global_avg_pool, global_avg_pool_backward, relu, relu_backward, BatchNorm2d, BnCache, Conv2d,
    Linear, Mode, Param,
};
use crate::model::{Family, ModelConfig};
use crate::regularize::{self, droppath_apply, DropMask, DropMethod, DropSpec};
use crate::rng::Rng;
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SiteKind {
    /// After a main-path convolution.
    Conv,
    /// After a 1x1 projection shortcut.
    Projection,
    /// On a whole residual branch (droppath).
    Path,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DropSite {
    pub id: usize,
    pub name: String,
    pub kind: SiteKind,
}

/// Per-step inputs for a training forward pass.
///
/// Every drop site draws from `rng.derive([site, epoch, step])`, so masks
/// depend only on these values and not on evaluation order.
#[derive(Clone, Copy, Debug)]
pub struct ForwardCtx<'a> {
    pub rng: &'a Rng,
    pub epoch: u64,
    pub step: u64,
    /// Effective retain rate (or scalefilter amplitude) for this epoch.
    pub rate: f64,
}

#[derive(Clone, Debug)]
enum Shortcut {
    Identity,
    Projection(Conv2d),
}

/// BN -> ReLU -> conv -> BN -> ReLU -> conv, plus shortcut.
#[derive(Clone, Debug)]
struct PreActBlock {
    bn1: BatchNorm2d,
    conv1: Conv2d,
    bn2: BatchNorm2d,
    conv2: Conv2d,
    shortcut: Shortcut,
    site1: Option<usize>,
    site2: Option<usize>,
    proj_site: Option<usize>,
    path_site: Option<usize>,
}

/// conv -> BN -> ReLU -> conv -> BN -> ReLU, no shortcut.
#[derive(Clone, Debug)]
struct PlainBlock {
    conv1: Conv2d,
    bn1: BatchNorm2d,
    conv2: Conv2d,
    bn2: BatchNorm2d,
    site1: Option<usize>,
    site2: Option<usize>,
}

#[derive(Clone, Debug)]
#[allow(clippy::large_enum_variant)]
enum Block {
    PreAct(PreActBlock),
    Plain(PlainBlock),
}

struct PreActCache {
    bn1: BnCache,
    a: Tensor,
    bn2: BnCache,
    b: Tensor,
    b_dropped: Tensor,
    m1: Option<DropMask>,
    m2: Option<DropMask>,
    m_proj: Option<DropMask>,
    m_path: Option<DropMask>,
}

struct PlainCache {
    x: Tensor,
    bn1: BnCache,
    a1: Tensor,
    a1_dropped: Tensor,
    bn2: BnCache,
    a2: Tensor,
    m1: Option<DropMask>,
    m2: Option<DropMask>,
}

enum BlockCache {
    PreAct(PreActCache),
    Plain(PlainCache),
}

struct Tape {
    x: Tensor,
    stem_bn: Option<(BnCache, Tensor)>,
    stem_mask: Option<DropMask>,
    blocks: Vec<BlockCache>,
    head_bn: Option<(BnCache, Tensor)>,
    pre_pool: Shape,
    pooled: Tensor,
}

enum LayerRef<'a> {
    Conv(&'a Conv2d, bool),
    Bn(&'a BatchNorm2d),
    Fc(&'a Linear),
}

enum LayerMut<'a> {
    Conv(&'a mut Conv2d),
    Bn(&'a mut BatchNorm2d),
    Fc(&'a mut Linear),
}

/// A sequential CNN with optional residual shortcuts and drop sites.
#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    stem: Conv2d,
    stem_bn: Option<BatchNorm2d>,
    stem_site: Option<usize>,
    blocks: Vec<Block>,
    head_bn: Option<BatchNorm2d>,
    fc: Linear,
    drop: DropSpec,
    sites: Vec<DropSite>,
    tape: TapeSlot,
}

/// Pending backward state. Clones start without one.
#[derive(Default)]
struct TapeSlot(Option<Tape>);

impl Clone for TapeSlot {
    fn clone(&self) -> Self {
        TapeSlot(None)
    }
}

impl std::fmt::Debug for TapeSlot {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(if self.0.is_some() { "Tape(pending)" } else { "Tape(empty)" })
    }
}

fn drop_at(
    site: Option<usize>,
    x: Tensor,
    spec: &DropSpec,
    ctx: &ForwardCtx,
) -> Result<(Tensor, Option<DropMask>)> {
    match site {
        Some(id) if !spec.is_identity() => {
            let mut rng = ctx.rng.derive(&[id as u64, ctx.epoch, ctx.step]);
            regularize::apply(&x, spec, &mut rng, Mode::Train)
        }
        _ => Ok((x, None)),
    }
}

fn path_drop_at(
    site: Option<usize>,
    x: Tensor,
    spec: &DropSpec,
    ctx: &ForwardCtx,
) -> Result<(Tensor, Option<DropMask>)> {
    match site {
        Some(id) if !spec.is_identity() => {
            let mut rng = ctx.rng.derive(&[id as u64, ctx.epoch, ctx.step]);
            let (mut outs, mut masks) = droppath_apply(&[x], spec, &mut rng, Mode::Train)?;
            Ok((outs.remove(0), masks.pop()))
        }
        _ => Ok((x, None)),
    }
}

fn undrop(mask: &Option<DropMask>, grad: Tensor) -> Result<Tensor> {
    match mask {
        Some(m) => m.backward(&grad),
        None => Ok(grad),
    }
}

impl PreActBlock {
    fn forward_train(&mut self, x: &Tensor, spec: &DropSpec, ctx: &ForwardCtx) -> Result<(Tensor, PreActCache)> {
        let (z1, bn1) = self.bn1.forward_train(x)?;
        let a = relu(&z1);
        let (short, m_proj) = match &self.shortcut {
            Shortcut::Identity => (x.clone(), None),
            Shortcut::Projection(p) => drop_at(self.proj_site, p.forward(&a)?, spec, ctx)?,
        };
        let h1 = self.conv1.forward(&a)?;
        let (z2, bn2) = self.bn2.forward_train(&h1)?;
        let b = relu(&z2);
        let (b_dropped, m1) = drop_at(self.site1, b.clone(), spec, ctx)?;
        let h2 = self.conv2.forward(&b_dropped)?;
        let (branch, m2) = drop_at(self.site2, h2, spec, ctx)?;
        let (branch, m_path) = path_drop_at(self.path_site, branch, spec, ctx)?;
        let out = short.add(&branch)?;
        Ok((
            out,
            PreActCache {
                bn1,
                a,
                bn2,
                b,
                b_dropped,
                m1,
                m2,
                m_proj,
                m_path,
            },
        ))
    }

    fn forward_eval(&self, x: &Tensor) -> Result<Tensor> {
        let a = relu(&self.bn1.forward_eval(x)?);
        let short = match &self.shortcut {
            Shortcut::Identity => x.clone(),
            Shortcut::Projection(p) => p.forward(&a)?,
        };
        let b = relu(&self.bn2.forward_eval(&self.conv1.forward(&a)?)?);
        short.add(&self.conv2.forward(&b)?)
    }

    fn backward(&mut self, cache: &PreActCache, grad: &Tensor) -> Result<Tensor> {
        let g_branch = undrop(&cache.m_path, grad.clone())?;
        let g_h2 = undrop(&cache.m2, g_branch)?;
        let g_b = undrop(&cache.m1, self.conv2.backward(&cache.b_dropped, &g_h2)?)?;
        let g_h1 = self.bn2.backward(&cache.bn2, &relu_backward(&cache.b, &g_b)?)?;
        let mut g_a = self.conv1.backward(&cache.a, &g_h1)?;
        let mut g_x = match &mut self.shortcut {
            Shortcut::Identity => grad.clone(),
            Shortcut::Projection(p) => {
                let g_s = undrop(&cache.m_proj, grad.clone())?;
                g_a.add_assign(&p.backward(&cache.a, &g_s)?)?;
                Tensor::zeros(cache.bn1.normalized().shape())
            }
        };
        let g_z1 = relu_backward(&cache.a, &g_a)?;
        g_x.add_assign(&self.bn1.backward(&cache.bn1, &g_z1)?)?;
        Ok(g_x)
    }
}

impl PlainBlock {
    fn forward_train(&mut self, x: &Tensor, spec: &DropSpec, ctx: &ForwardCtx) -> Result<(Tensor, PlainCache)> {
        let (z1, bn1) = self.bn1.forward_train(&self.conv1.forward(x)?)?;
        let a1 = relu(&z1);
        let (a1_dropped, m1) = drop_at(self.site1, a1.clone(), spec, ctx)?;
        let (z2, bn2) = self.bn2.forward_train(&self.conv2.forward(&a1_dropped)?)?;
        let a2 = relu(&z2);
        let (out, m2) = drop_at(self.site2, a2.clone(), spec, ctx)?;
        Ok((
            out,
            PlainCache {
                x: x.clone(),
                bn1,
                a1,
                a1_dropped,
                bn2,
                a2,
                m1,
                m2,
            },
        ))
    }

    fn forward_eval(&self, x: &Tensor) -> Result<Tensor> {
        let a1 = relu(&self.bn1.forward_eval(&self.conv1.forward(x)?)?);
        Ok(relu(&self.bn2.forward_eval(&self.conv2.forward(&a1)?)?))
    }

    fn backward(&mut self, cache: &PlainCache, grad: &Tensor) -> Result<Tensor> {
        let g_a2 = undrop(&cache.m2, grad.clone())?;
        let g_h2 = self.bn2.backward(&cache.bn2, &relu_backward(&cache.a2, &g_a2)?)?;
        let g_a1 = undrop(&cache.m1, self.conv2.backward(&cache.a1_dropped, &g_h2)?)?;
        let g_h1 = self.bn1.backward(&cache.bn1, &relu_backward(&cache.a1, &g_a1)?)?;
        self.conv1.backward(&cache.x, &g_h1)
    }
}

impl Model {
    /// Builds the template named by `cfg.family` and attaches `cfg.drop`.
    pub fn build(cfg: &ModelConfig, rng: &mut Rng) -> Result<Model> {
        match cfg.family {
            Family::Resnet | Family::Wrn => Self::build_resnet(cfg, rng),
            Family::Plain => Self::build_plain(cfg, rng),
            Family::TwoPath => Err(Error::Config(
                "two_path is a single-layer fixture, build it with build_two_path".into(),
            )),
        }
    }

    fn check_config(cfg: &ModelConfig) -> Result<()> {
        if cfg.n < 1 {
            return Err(Error::Config(format!("blocks per stage n = {} < 1", cfg.n)));
        }
        if cfg.width_factor < 1 {
            return Err(Error::Config("width_factor must be >= 1".into()));
        }
        if cfg.num_classes < 1 {
            return Err(Error::Config("num_classes must be >= 1".into()));
        }
        if cfg.input_shape.0 < 1 {
            return Err(Error::Config("input needs at least one channel".into()));
        }
        Ok(())
    }

    /// Pre-activation ResNet / WRN: stem conv, three stages of `n` blocks
    /// at widths `width_factor * {16, 32, 64}` (stride 2 entering stages 2
    /// and 3, 1x1 projection shortcuts where the shape changes), then
    /// BN -> ReLU -> global average pool -> linear.
    pub fn build_resnet(cfg: &ModelConfig, rng: &mut Rng) -> Result<Model> {
        Self::check_config(cfg)?;
        if !matches!(cfg.family, Family::Resnet | Family::Wrn) {
            return Err(Error::Config(format!("build_resnet called for {}", cfg.family)));
        }
        let widths = cfg.stage_widths();
        let stem = Conv2d::new("stem", cfg.input_shape.0, widths[0], 3, 1, 1, rng)?;
        let mut blocks = Vec::new();
        let mut in_ch = widths[0];
        for (stage, &out_ch) in widths.iter().enumerate() {
            for i in 0..cfg.n {
                let stride = if stage > 0 && i == 0 { 2 } else { 1 };
                let name = format!("stage{}.block{}", stage + 1, i + 1);
                let shortcut = if stride != 1 || in_ch != out_ch {
                    Shortcut::Projection(Conv2d::new(
                        &format!("{name}.shortcut"),
                        in_ch,
                        out_ch,
                        1,
                        stride,
                        0,
                        rng,
                    )?)
                } else {
                    Shortcut::Identity
                };
                blocks.push(Block::PreAct(PreActBlock {
                    bn1: BatchNorm2d::new(&format!("{name}.bn1"), in_ch),
                    conv1: Conv2d::new(&format!("{name}.conv1"), in_ch, out_ch, 3, stride, 1, rng)?,
                    bn2: BatchNorm2d::new(&format!("{name}.bn2"), out_ch),
                    conv2: Conv2d::new(&format!("{name}.conv2"), out_ch, out_ch, 3, 1, 1, rng)?,
                    shortcut,
                    site1: None,
                    site2: None,
                    proj_site: None,
                    path_site: None,
                }));
                in_ch = out_ch;
            }
        }
        let mut model = Model {
            config: cfg.clone(),
            stem,
            stem_bn: None,
            stem_site: None,
            blocks,
            head_bn: Some(BatchNorm2d::new("head.bn", in_ch)),
            fc: Linear::new("fc", in_ch, cfg.num_classes, rng)?,
            drop: DropSpec::none(),
            sites: Vec::new(),
            tape: TapeSlot::default(),
        };
        model.attach_drop(cfg.drop)?;
        Ok(model)
    }

    /// Same template as [`Model::build_resnet`] with every shortcut removed;
    /// layers use conv -> BN -> ReLU ordering.
    pub fn build_plain(cfg: &ModelConfig, rng: &mut Rng) -> Result<Model> {
        Self::check_config(cfg)?;
        if cfg.family != Family::Plain {
            return Err(Error::Config(format!("build_plain called for {}", cfg.family)));
        }
        let widths = cfg.stage_widths();
        let stem = Conv2d::new("stem", cfg.input_shape.0, widths[0], 3, 1, 1, rng)?;
        let mut blocks = Vec::new();
        let mut in_ch = widths[0];
        for (stage, &out_ch) in widths.iter().enumerate() {
            for i in 0..cfg.n {
                let stride = if stage > 0 && i == 0 { 2 } else { 1 };
                let name = format!("stage{}.block{}", stage + 1, i + 1);
                blocks.push(Block::Plain(PlainBlock {
                    conv1: Conv2d::new(&format!("{name}.conv1"), in_ch, out_ch, 3, stride, 1, rng)?,
                    bn1: BatchNorm2d::new(&format!("{name}.bn1"), out_ch),
                    conv2: Conv2d::new(&format!("{name}.conv2"), out_ch, out_ch, 3, 1, 1, rng)?,
                    bn2: BatchNorm2d::new(&format!("{name}.bn2"), out_ch),
                    site1: None,
                    site2: None,
                }));
                in_ch = out_ch;
            }
        }
        let mut model = Model {
            config: cfg.clone(),
            stem,
            stem_bn: Some(BatchNorm2d::new("stem.bn", widths[0])),
            stem_site: None,
            blocks,
            head_bn: None,
            fc: Linear::new("fc", in_ch, cfg.num_classes, rng)?,
            drop: DropSpec::none(),
            sites: Vec::new(),
            tape: TapeSlot::default(),
        };
        model.attach_drop(cfg.drop)?;
        Ok(model)
    }

    /// Registers drop sites for `spec`, replacing any previous ones, and
    /// returns how many were attached.
    ///
    /// Dropout, DropFilter and ScaleFilter get one site per convolution
    /// (the stem and projections per the config flags). In pre-activation
    /// blocks the first conv's site sits after the following BN + ReLU, the
    /// second conv's directly on its output before the shortcut add; in
    /// plain nets each site follows conv -> BN -> ReLU. DropPath gets one
    /// site per residual branch and needs a residual family.
    pub fn attach_drop(&mut self, spec: DropSpec) -> Result<usize> {
        spec.validate()?;
        if spec.method == DropMethod::DropPath && self.config.family == Family::Plain {
            return Err(Error::Config(
                "droppath needs residual branches; plain nets have none".into(),
            ));
        }
        let mut sites = Vec::new();
        let mut next = |name: String, kind: SiteKind| {
            let id = sites.len();
            sites.push(DropSite { id, name, kind });
            Some(id)
        };
        let per_conv = !matches!(spec.method, DropMethod::None | DropMethod::DropPath);
        let path = spec.method == DropMethod::DropPath;
        let (drop_stem, drop_proj) = (self.config.drop_stem, self.config.drop_projections);

        self.stem_site = if per_conv && drop_stem {
            next("stem".into(), SiteKind::Conv)
        } else {
            None
        };
        for (i, block) in self.blocks.iter_mut().enumerate() {
            let name = format!("block{}", i + 1);
            match block {
                Block::PreAct(b) => {
                    b.proj_site = match b.shortcut {
                        Shortcut::Projection(_) if per_conv && drop_proj => {
                            next(format!("{name}.shortcut"), SiteKind::Projection)
                        }
                        _ => None,
                    };
                    b.site1 = if per_conv { next(format!("{name}.conv1"), SiteKind::Conv) } else { None };
                    b.site2 = if per_conv { next(format!("{name}.conv2"), SiteKind::Conv) } else { None };
                    b.path_site = if path { next(format!("{name}.branch"), SiteKind::Path) } else { None };
                }
                Block::Plain(b) => {
                    b.site1 = if per_conv { next(format!("{name}.conv1"), SiteKind::Conv) } else { None };
                    b.site2 = if per_conv { next(format!("{name}.conv2"), SiteKind::Conv) } else { None };
                }
            }
        }
        self.drop = spec;
        self.config.drop = spec;
        self.sites = sites;
        Ok(self.sites.len())
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn drop_spec(&self) -> &DropSpec {
        &self.drop
    }

    pub fn sites(&self) -> &[DropSite] {
        &self.sites
    }

    pub fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    fn layers(&self) -> Vec<LayerRef<'_>> {
        let mut out = vec![LayerRef::Conv(&self.stem, false)];
        if let Some(bn) = &self.stem_bn {
            out.push(LayerRef::Bn(bn));
        }
        for block in &self.blocks {
            match block {
                Block::PreAct(b) => {
                    out.push(LayerRef::Bn(&b.bn1));
                    out.push(LayerRef::Conv(&b.conv1, false));
                    out.push(LayerRef::Bn(&b.bn2));
                    out.push(LayerRef::Conv(&b.conv2, false));
                    if let Shortcut::Projection(p) = &b.shortcut {
                        out.push(LayerRef::Conv(p, true));
                    }
                }
                Block::Plain(b) => {
                    out.push(LayerRef::Conv(&b.conv1, false));
                    out.push(LayerRef::Bn(&b.bn1));
                    out.push(LayerRef::Conv(&b.conv2, false));
                    out.push(LayerRef::Bn(&b.bn2));
                }
            }
        }
        if let Some(bn) = &self.head_bn {
            out.push(LayerRef::Bn(bn));
        }
        out.push(LayerRef::Fc(&self.fc));
        out
    }

    fn layers_mut(&mut self) -> Vec<LayerMut<'_>> {
        let mut out = vec![LayerMut::Conv(&mut self.stem)];
        if let Some(bn) = &mut self.stem_bn {
            out.push(LayerMut::Bn(bn));
        }
        for block in &mut self.blocks {
            match block {
                Block::PreAct(b) => {
                    out.push(LayerMut::Bn(&mut b.bn1));
                    out.push(LayerMut::Conv(&mut b.conv1));
                    out.push(LayerMut::Bn(&mut b.bn2));
                    out.push(LayerMut::Conv(&mut b.conv2));
                    if let Shortcut::Projection(p) = &mut b.shortcut {
                        out.push(LayerMut::Conv(p));
                    }
                }
                Block::Plain(b) => {
                    out.push(LayerMut::Conv(&mut b.conv1));
                    out.push(LayerMut::Bn(&mut b.bn1));
                    out.push(LayerMut::Conv(&mut b.conv2));
                    out.push(LayerMut::Bn(&mut b.bn2));
                }
            }
        }
        if let Some(bn) = &mut self.head_bn {
            out.push(LayerMut::Bn(bn));
        }
        out.push(LayerMut::Fc(&mut self.fc));
        out
    }

    /// Trainable parameters in model-definition order.
    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = Vec::new();
        for layer in self.layers_mut() {
            match layer {
                LayerMut::Conv(c) => out.extend(c.params_mut()),
                LayerMut::Bn(b) => out.extend(b.params_mut()),
                LayerMut::Fc(f) => out.extend(f.params_mut()),
            }
        }
        out
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Param::zero_grad);
    }

    /// Parameters plus BN running statistics, in model-definition order.
    /// This is what checkpoints store.
    pub fn state(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = Vec::new();
        for layer in self.layers() {
            match layer {
                LayerRef::Conv(c, _) => {
                    out.push((c.weight.name.clone(), &c.weight.value));
                    out.push((c.bias.name.clone(), &c.bias.value));
                }
                LayerRef::Bn(b) => {
                    let prefix = b.gamma.name.trim_end_matches(".gamma");
                    out.push((b.gamma.name.clone(), &b.gamma.value));
                    out.push((b.beta.name.clone(), &b.beta.value));
                    out.push((format!("{prefix}.running_mean"), &b.running_mean));
                    out.push((format!("{prefix}.running_var"), &b.running_var));
                }
                LayerRef::Fc(f) => {
                    out.push((f.weight.name.clone(), &f.weight.value));
                    out.push((f.bias.name.clone(), &f.bias.value));
                }
            }
        }
        out
    }

    pub fn state_mut(&mut self) -> Vec<(String, &mut Vec<f64>)> {
        let mut out: Vec<(String, &mut Vec<f64>)> = Vec::new();
        for layer in self.layers_mut() {
            match layer {
                LayerMut::Conv(c) => {
                    out.push((c.weight.name.clone(), &mut c.weight.value));
                    out.push((c.bias.name.clone(), &mut c.bias.value));
                }
                LayerMut::Bn(b) => {
                    let prefix = b.gamma.name.trim_end_matches(".gamma").to_string();
                    out.push((b.gamma.name.clone(), &mut b.gamma.value));
                    out.push((b.beta.name.clone(), &mut b.beta.value));
                    out.push((format!("{prefix}.running_mean"), &mut b.running_mean));
                    out.push((format!("{prefix}.running_var"), &mut b.running_var));
                }
                LayerMut::Fc(f) => {
                    out.push((f.weight.name.clone(), &mut f.weight.value));
                    out.push((f.bias.name.clone(), &mut f.bias.value));
                }
            }
        }
        out
    }

    /// Weighted layers: main-path convolutions plus the classifier
    /// (projection shortcuts are not counted).
    pub fn weighted_layer_count(&self) -> usize {
        self.layers()
            .iter()
            .filter(|l| matches!(l, LayerRef::Conv(_, false) | LayerRef::Fc(_)))
            .count()
    }

    pub fn conv_count(&self, include_projections: bool) -> usize {
        self.layers()
            .iter()
            .filter(|l| match l {
                LayerRef::Conv(_, proj) => include_projections || !proj,
                _ => false,
            })
            .count()
    }

    pub fn shortcut_edges(&self) -> usize {
        self.blocks
            .iter()
            .filter(|b| matches!(b, Block::PreAct(_)))
            .count()
    }

    pub fn param_count(&self) -> usize {
        self.layers()
            .iter()
            .map(|l| match l {
                LayerRef::Conv(c, _) => c.weight.len() + c.bias.len(),
                LayerRef::Bn(b) => b.gamma.len() + b.beta.len(),
                LayerRef::Fc(f) => f.weight.len() + f.bias.len(),
            })
            .sum()
    }

    pub fn projection_param_count(&self) -> usize {
        self.layers()
            .iter()
            .map(|l| match l {
                LayerRef::Conv(c, true) => c.weight.len() + c.bias.len(),
                _ => 0,
            })
            .sum()
    }

    /// Output widths of the three stages.
    pub fn stage_widths(&self) -> [usize; 3] {
        let mut widths = [0; 3];
        let n = self.config.n;
        for (stage, w) in widths.iter_mut().enumerate() {
            *w = match &self.blocks[stage * n] {
                Block::PreAct(b) => b.conv2.out_channels(),
                Block::Plain(b) => b.conv2.out_channels(),
            };
        }
        widths
    }

    /// Activation shapes after the stem, after each stage, and after pooling.
    pub fn trace_shapes(&self, input: Shape) -> Result<Vec<Shape>> {
        let mut s = self.stem.output_shape(input)?;
        let mut out = vec![s];
        let n = self.config.n;
        for (i, block) in self.blocks.iter().enumerate() {
            s = match block {
                Block::PreAct(b) => b.conv2.output_shape(b.conv1.output_shape(s)?)?,
                Block::Plain(b) => b.conv2.output_shape(b.conv1.output_shape(s)?)?,
            };
            if (i + 1) % n == 0 {
                out.push(s);
            }
        }
        out.push(Shape::new(s.n, s.c, 1, 1));
        Ok(out)
    }

    /// Eval-mode logits `(N, classes, 1, 1)`: BN uses running statistics and
    /// every drop site is inactive.
    pub fn forward_eval(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = self.stem.forward(x)?;
        if let Some(bn) = &self.stem_bn {
            h = relu(&bn.forward_eval(&h)?);
        }
        for block in &self.blocks {
            h = match block {
                Block::PreAct(b) => b.forward_eval(&h)?,
                Block::Plain(b) => b.forward_eval(&h)?,
            };
        }
        if let Some(bn) = &self.head_bn {
            h = relu(&bn.forward_eval(&h)?);
        }
        self.fc.forward(&global_avg_pool(&h)?)
    }

    /// Train-mode logits; records what [`Model::backward`] needs.
    pub fn forward_train(&mut self, x: &Tensor, ctx: &ForwardCtx) -> Result<Tensor> {
        let spec = self.drop.with_rate(ctx.rate);
        spec.validate()?;
        let mut h = self.stem.forward(x)?;
        let stem_bn = match &mut self.stem_bn {
            Some(bn) => {
                let (z, cache) = bn.forward_train(&h)?;
                h = relu(&z);
                Some((cache, h.clone()))
            }
            None => None,
        };
        let (dropped, stem_mask) = drop_at(self.stem_site, h, &spec, ctx)?;
        h = dropped;
        let mut caches = Vec::with_capacity(self.blocks.len());
        for block in &mut self.blocks {
            let (out, cache) = match block {
                Block::PreAct(b) => {
                    let (o, c) = b.forward_train(&h, &spec, ctx)?;
                    (o, BlockCache::PreAct(c))
                }
                Block::Plain(b) => {
                    let (o, c) = b.forward_train(&h, &spec, ctx)?;
                    (o, BlockCache::Plain(c))
                }
            };
            caches.push(cache);
            h = out;
        }
        let head_bn = match &mut self.head_bn {
            Some(bn) => {
                let (z, cache) = bn.forward_train(&h)?;
                h = relu(&z);
                Some((cache, h.clone()))
            }
            None => None,
        };
        let pre_pool = h.shape();
        let pooled = global_avg_pool(&h)?;
        let logits = self.fc.forward(&pooled)?;
        self.tape = TapeSlot(Some(Tape {
            x: x.clone(),
            stem_bn,
            stem_mask,
            blocks: caches,
            head_bn,
            pre_pool,
            pooled,
        }));
        Ok(logits)
    }

    /// Accumulates parameter gradients for the last training forward pass
    /// and returns dL/dx.
    pub fn backward(&mut self, grad_logits: &Tensor) -> Result<Tensor> {
        let tape = self
            .tape
            .0
            .take()
            .ok_or_else(|| Error::Parameter("backward without a training forward pass".into()))?;
        let g_pooled = self.fc.backward(&tape.pooled, grad_logits)?;
        let mut g = global_avg_pool_backward(tape.pre_pool, &g_pooled)?;
        if let (Some(bn), Some((cache, a))) = (&mut self.head_bn, &tape.head_bn) {
            g = bn.backward(cache, &relu_backward(a, &g)?)?;
        }
        for (block, cache) in self.blocks.iter_mut().zip(&tape.blocks).rev() {
            g = match (block, cache) {
                (Block::PreAct(b), BlockCache::PreAct(c)) => b.backward(c, &g)?,
                (Block::Plain(b), BlockCache::Plain(c)) => b.backward(c, &g)?,
                _ => unreachable!("tape recorded by this model"),
            };
        }
        g = undrop(&tape.stem_mask, g)?;
        if let (Some(bn), Some((cache, a))) = (&mut self.stem_bn, &tape.stem_bn) {
            g = bn.backward(cache, &relu_backward(a, &g)?)?;
        }
        self.stem.backward(&tape.x, &g)
    }
}
