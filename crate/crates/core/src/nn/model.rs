//! The full recurrent model over a group of pedestrians, batched by row,
//! with a recorded forward pass and hand-derived backpropagation through
//! time.
//!
//! Input layout of the LSTM at each step, per row:
//! `[spatial embed | ppcg embed | vpcg embed | social embed | h_prev]`
//! where absent streams take no columns.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::gaussian::{gaussian_from_raw, nll_raw_with_grad, GaussianParams};
use super::linalg::gemm;
use super::lstm::sigmoid;
use super::{Linear, LstmParams, ModelConfig, NnError, Variant};

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub variant: Variant,
    pub config: ModelConfig,
    pub embed_spatial: Linear,
    pub embed_ppcg: Option<Linear>,
    pub embed_vpcg: Option<Linear>,
    pub embed_social: Option<Linear>,
    pub lstm: LstmParams,
    pub head: Linear,
}

impl ModelParams {
    pub fn zeros(variant: Variant, config: ModelConfig) -> Self {
        let e = config.embed_dim;
        ModelParams {
            variant,
            config,
            embed_spatial: Linear::zeros(e, 2),
            embed_ppcg: variant.uses_ppcg().then(|| Linear::zeros(e, config.n_sector)),
            embed_vpcg: variant.uses_vpcg().then(|| Linear::zeros(e, config.n_sector)),
            embed_social: variant.uses_social().then(|| Linear::zeros(e, config.pooled_dim())),
            lstm: LstmParams::zeros(config.lstm_input_dim(variant), config.hidden_dim),
            head: Linear::zeros(5, config.hidden_dim),
        }
    }

    /// Seeded initialization; tensors are drawn in a fixed order.
    pub fn init(variant: Variant, config: ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = config.embed_dim;
        let embed_spatial = Linear::init(e, 2, &mut rng);
        let embed_ppcg = variant.uses_ppcg().then(|| Linear::init(e, config.n_sector, &mut rng));
        let embed_vpcg = variant.uses_vpcg().then(|| Linear::init(e, config.n_sector, &mut rng));
        let embed_social = variant
            .uses_social()
            .then(|| Linear::init(e, config.pooled_dim(), &mut rng));
        let lstm = LstmParams::init(config.lstm_input_dim(variant), config.hidden_dim, &mut rng);
        let head = Linear::init(5, config.hidden_dim, &mut rng);
        ModelParams {
            variant,
            config,
            embed_spatial,
            embed_ppcg,
            embed_vpcg,
            embed_social,
            lstm,
            head,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.variant, self.config)
    }

    /// `(name, shape, values)` for every tensor, in a fixed order.
    pub fn tensors(&self) -> Vec<(&'static str, Vec<usize>, &[f64])> {
        let mut out = Vec::new();
        push_linear(&mut out, "embed_spatial", &self.embed_spatial);
        if let Some(l) = &self.embed_ppcg {
            push_linear(&mut out, "embed_ppcg", l);
        }
        if let Some(l) = &self.embed_vpcg {
            push_linear(&mut out, "embed_vpcg", l);
        }
        if let Some(l) = &self.embed_social {
            push_linear(&mut out, "embed_social", l);
        }
        out.push((
            "lstm.weight",
            vec![4 * self.lstm.hidden_dim, self.lstm.cols()],
            &self.lstm.weight[..],
        ));
        out.push(("lstm.bias", vec![4 * self.lstm.hidden_dim], &self.lstm.bias[..]));
        push_linear(&mut out, "head", &self.head);
        out
    }

    /// Mutable views in the same order as [`ModelParams::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let mut out: Vec<(&'static str, &mut [f64])> = Vec::new();
        out.push(("embed_spatial.weight", &mut self.embed_spatial.weight));
        out.push(("embed_spatial.bias", &mut self.embed_spatial.bias));
        if let Some(l) = &mut self.embed_ppcg {
            out.push(("embed_ppcg.weight", &mut l.weight));
            out.push(("embed_ppcg.bias", &mut l.bias));
        }
        if let Some(l) = &mut self.embed_vpcg {
            out.push(("embed_vpcg.weight", &mut l.weight));
            out.push(("embed_vpcg.bias", &mut l.bias));
        }
        if let Some(l) = &mut self.embed_social {
            out.push(("embed_social.weight", &mut l.weight));
            out.push(("embed_social.bias", &mut l.bias));
        }
        out.push(("lstm.weight", &mut self.lstm.weight));
        out.push(("lstm.bias", &mut self.lstm.bias));
        out.push(("head.weight", &mut self.head.weight));
        out.push(("head.bias", &mut self.head.bias));
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, _, v)| v.len()).sum()
    }

    /// Adds `scale * other` element-wise; shapes must agree.
    pub fn add_scaled(&mut self, other: &ModelParams, scale: f64) {
        let src = other.tensors();
        for ((_, dst), (_, _, s)) in self.tensors_mut().into_iter().zip(src) {
            for (d, v) in dst.iter_mut().zip(s) {
                *d += scale * v;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, _, v)| v.iter().all(|x| x.is_finite()))
    }

    /// Copy of this model reduced to `variant`, whose streams must be a
    /// subset of this model's. Kept streams, the recurrent weights and the
    /// head are copied unchanged; the LSTM columns of dropped streams are
    /// removed.
    pub fn restricted(&self, variant: Variant) -> Result<ModelParams, NnError> {
        let from = stream_layout(self.variant, &self.config);
        let to = stream_layout(variant, &self.config);
        if to.iter().any(|s| !from.iter().any(|f| f.0 == s.0)) {
            return Err(NnError::ShapeMismatch(format!(
                "cannot restrict {} to {}",
                self.variant, variant
            )));
        }
        let mut out = ModelParams::zeros(variant, self.config);
        out.embed_spatial = self.embed_spatial.clone();
        if variant.uses_ppcg() {
            out.embed_ppcg = self.embed_ppcg.clone();
        }
        if variant.uses_vpcg() {
            out.embed_vpcg = self.embed_vpcg.clone();
        }
        if variant.uses_social() {
            out.embed_social = self.embed_social.clone();
        }
        let e = self.config.embed_dim;
        let hd = self.config.hidden_dim;
        let (src_cols, dst_cols) = (self.lstm.cols(), out.lstm.cols());
        let (src_in, dst_in) = (self.lstm.input_dim, out.lstm.input_dim);
        for row in 0..4 * hd {
            let src = &self.lstm.weight[row * src_cols..(row + 1) * src_cols];
            let dst = &mut out.lstm.weight[row * dst_cols..(row + 1) * dst_cols];
            for (stream, dst_off) in &to {
                let src_off = from.iter().find(|f| f.0 == *stream).map(|f| f.1).unwrap_or(0);
                dst[*dst_off..dst_off + e].copy_from_slice(&src[src_off..src_off + e]);
            }
            dst[dst_in..].copy_from_slice(&src[src_in..]);
        }
        out.lstm.bias = self.lstm.bias.clone();
        out.head = self.head.clone();
        Ok(out)
    }

    /// Runs a whole teacher-forced sequence and records it for
    /// [`ModelParams::backward`].
    pub fn forward_loss(&self, rows: usize, steps: &[StepInput]) -> Result<LossGraph, NnError> {
        let mut runner = Runner::new(self, rows, true);
        for s in steps {
            runner.step(s)?;
        }
        Ok(runner.finish())
    }

    /// Exact gradients of the recorded summed loss with respect to every
    /// parameter.
    pub fn backward(&self, graph: &LossGraph) -> Result<ModelParams, NnError> {
        if !graph.recorded {
            return Err(NnError::GraphNotRecorded);
        }
        let mut grads = self.zeros_like();
        let rows = graph.rows;
        let hd = self.config.hidden_dim;
        let cols = self.lstm.cols();
        let input_dim = self.lstm.input_dim;
        let e = self.config.embed_dim;
        let layout = stream_layout(self.variant, &self.config);

        let mut dh_next = vec![0.0; rows * hd];
        let mut dc_next = vec![0.0; rows * hd];
        let mut dz = vec![0.0; rows * 4 * hd];
        let mut dxh = vec![0.0; rows * cols];
        let mut dact = vec![0.0; rows * e];

        for cache in graph.steps.iter().rev() {
            let mut dh = std::mem::take(&mut dh_next);
            if let Some(dout) = &cache.dout {
                let flat: Vec<f64> = dout.iter().flatten().copied().collect();
                gemm(5, rows, hd, &flat, true, &cache.h, false, 1.0, &mut grads.head.weight);
                for row in dout {
                    for (b, d) in grads.head.bias.iter_mut().zip(row) {
                        *b += d;
                    }
                }
                gemm(rows, 5, hd, &flat, false, &self.head.weight, false, 1.0, &mut dh);
            }

            let mut dc_prev = vec![0.0; rows * hd];
            for r in 0..rows {
                let g = &cache.gates[r * 4 * hd..(r + 1) * 4 * hd];
                for u in 0..hd {
                    let k = r * hd + u;
                    let (ig, fg, cg, og) = (g[u], g[hd + u], g[2 * hd + u], g[3 * hd + u]);
                    let tc = cache.tanh_c[k];
                    let dc = dc_next[k] + dh[k] * og * (1.0 - tc * tc);
                    let row = &mut dz[r * 4 * hd..(r + 1) * 4 * hd];
                    row[u] = dc * cg * ig * (1.0 - ig);
                    row[hd + u] = dc * cache.c_prev[k] * fg * (1.0 - fg);
                    row[2 * hd + u] = dc * ig * (1.0 - cg * cg);
                    row[3 * hd + u] = dh[k] * tc * og * (1.0 - og);
                    dc_prev[k] = dc * fg;
                }
            }
            gemm(
                4 * hd,
                rows,
                cols,
                &dz,
                true,
                &cache.xh,
                false,
                1.0,
                &mut grads.lstm.weight,
            );
            for r in 0..rows {
                for (b, d) in grads.lstm.bias.iter_mut().zip(&dz[r * 4 * hd..(r + 1) * 4 * hd]) {
                    *b += d;
                }
            }
            gemm(rows, 4 * hd, cols, &dz, false, &self.lstm.weight, false, 0.0, &mut dxh);

            let mut dh_prev = vec![0.0; rows * hd];
            for r in 0..rows {
                dh_prev[r * hd..(r + 1) * hd].copy_from_slice(&dxh[r * cols + input_dim..(r + 1) * cols]);
            }

            for &(stream, off) in &layout {
                for r in 0..rows {
                    for j in 0..e {
                        let a = cache.xh[r * cols + off + j];
                        dact[r * e + j] = if a > 0.0 { dxh[r * cols + off + j] } else { 0.0 };
                    }
                }
                let (grad, input, in_dim) = match stream {
                    Stream::Spatial => (&mut grads.embed_spatial, &cache.disp, 2),
                    Stream::Ppcg => (grads.embed_ppcg.as_mut().unwrap(), &cache.ppcg, self.config.n_sector),
                    Stream::Vpcg => (grads.embed_vpcg.as_mut().unwrap(), &cache.vpcg, self.config.n_sector),
                    Stream::Social => {
                        let layer = self.embed_social.as_ref().unwrap();
                        let grad = grads.embed_social.as_mut().unwrap();
                        social_backward(layer, grad, cache, &dact, &mut dh_prev, rows, hd, e, cols, input_dim);
                        continue;
                    }
                };
                gemm(e, rows, in_dim, &dact, true, input, false, 1.0, &mut grad.weight);
                for r in 0..rows {
                    for (b, d) in grad.bias.iter_mut().zip(&dact[r * e..(r + 1) * e]) {
                        *b += d;
                    }
                }
            }
            dh_next = dh_prev;
            dc_next = dc_prev;
        }
        Ok(grads)
    }
}

fn push_linear<'a>(out: &mut Vec<(&'static str, Vec<usize>, &'a [f64])>, name: &'static str, l: &'a Linear) {
    let (w, b) = match name {
        "embed_spatial" => ("embed_spatial.weight", "embed_spatial.bias"),
        "embed_ppcg" => ("embed_ppcg.weight", "embed_ppcg.bias"),
        "embed_vpcg" => ("embed_vpcg.weight", "embed_vpcg.bias"),
        "embed_social" => ("embed_social.weight", "embed_social.bias"),
        _ => ("head.weight", "head.bias"),
    };
    out.push((w, vec![l.out_dim, l.in_dim], &l.weight[..]));
    out.push((b, vec![l.out_dim], &l.bias[..]));
}

#[allow(clippy::too_many_arguments)]
fn social_backward(
    layer: &Linear,
    grad: &mut Linear,
    cache: &StepCache,
    dact: &[f64],
    dh_prev: &mut [f64],
    rows: usize,
    hd: usize,
    e: usize,
    cols: usize,
    input_dim: usize,
) {
    let pd = layer.in_dim;
    for r in 0..rows {
        let d = &dact[r * e..(r + 1) * e];
        for (b, v) in grad.bias.iter_mut().zip(d) {
            *b += v;
        }
        for &(cell, j) in &cache.pool[r] {
            let h_j = &cache.xh[j * cols + input_dim..(j + 1) * cols];
            for (k, &dk) in d.iter().enumerate() {
                if dk == 0.0 {
                    continue;
                }
                let base = k * pd + cell * hd;
                let gw = &mut grad.weight[base..base + hd];
                for (g, h) in gw.iter_mut().zip(h_j) {
                    *g += dk * h;
                }
                let w = &layer.weight[base..base + hd];
                for (dst, wv) in dh_prev[j * hd..(j + 1) * hd].iter_mut().zip(w) {
                    *dst += dk * wv;
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stream {
    Spatial,
    Ppcg,
    Vpcg,
    Social,
}

/// Enabled streams and their column offsets in the LSTM input.
fn stream_layout(variant: Variant, config: &ModelConfig) -> Vec<(Stream, usize)> {
    let mut out = vec![(Stream::Spatial, 0)];
    let mut off = config.embed_dim;
    for (on, s) in [
        (variant.uses_ppcg(), Stream::Ppcg),
        (variant.uses_vpcg(), Stream::Vpcg),
        (variant.uses_social(), Stream::Social),
    ] {
        if on {
            out.push((s, off));
            off += config.embed_dim;
        }
    }
    out
}

/// Features of one time step for every row (pedestrian).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepInput {
    /// Own displacement since the previous step (meters).
    pub displacement: Vec<[f64; 2]>,
    /// `rows x n_sector`, empty when the variant has no pedestrian grid.
    pub ppcg: Vec<f64>,
    /// `rows x n_sector`, empty when the variant has no vehicle grid.
    pub vpcg: Vec<f64>,
    /// Social pooling occupancy: per row, `(cell, neighbor row)` pairs.
    pub pool: Vec<Vec<(usize, usize)>>,
    /// Next-step displacement targets; `None` for warm-up steps.
    pub targets: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone)]
struct StepCache {
    disp: Vec<f64>,
    ppcg: Vec<f64>,
    vpcg: Vec<f64>,
    pool: Vec<Vec<(usize, usize)>>,
    xh: Vec<f64>,
    c_prev: Vec<f64>,
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
    dout: Option<Vec<[f64; 5]>>,
}

/// Recorded forward pass: summed loss plus what backward needs.
#[derive(Debug, Clone, Default)]
pub struct LossGraph {
    pub loss: f64,
    pub loss_terms: usize,
    rows: usize,
    recorded: bool,
    steps: Vec<StepCache>,
}

impl LossGraph {
    pub fn is_recorded(&self) -> bool {
        self.recorded
    }
}

/// Step-by-step forward evaluation over `rows` pedestrians sharing weights.
pub struct Runner<'m> {
    model: &'m ModelParams,
    rows: usize,
    h: Vec<f64>,
    c: Vec<f64>,
    record: bool,
    steps: Vec<StepCache>,
    loss: f64,
    loss_terms: usize,
    last_raw: Vec<[f64; 5]>,
}

impl<'m> Runner<'m> {
    pub fn new(model: &'m ModelParams, rows: usize, record: bool) -> Self {
        let hd = model.config.hidden_dim;
        Runner {
            model,
            rows,
            h: vec![0.0; rows * hd],
            c: vec![0.0; rows * hd],
            record,
            steps: Vec::new(),
            loss: 0.0,
            loss_terms: 0,
            last_raw: Vec::new(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Hidden state of `row` after the last step.
    pub fn hidden(&self, row: usize) -> &[f64] {
        let hd = self.model.config.hidden_dim;
        &self.h[row * hd..(row + 1) * hd]
    }

    pub fn last_raw(&self) -> &[[f64; 5]] {
        &self.last_raw
    }

    fn check(&self, input: &StepInput) -> Result<(), NnError> {
        let m = self.model;
        let rows = self.rows;
        let ns = m.config.n_sector;
        let bad = |what: &str| Err(NnError::ShapeMismatch(what.to_string()));
        if input.displacement.len() != rows {
            return bad("displacement rows");
        }
        if m.variant.uses_ppcg() && input.ppcg.len() != rows * ns {
            return bad("ppcg length");
        }
        if m.variant.uses_vpcg() && input.vpcg.len() != rows * ns {
            return bad("vpcg length");
        }
        if m.variant.uses_social() {
            let cells = m.config.pool_cells * m.config.pool_cells;
            if input.pool.len() != rows || input.pool.iter().flatten().any(|&(cell, j)| cell >= cells || j >= rows) {
                return bad("social pool occupancy");
            }
        }
        if let Some(t) = &input.targets {
            if t.len() != rows {
                return bad("target rows");
            }
        }
        Ok(())
    }

    /// Advances every row by one step and returns each row's predicted
    /// distribution over its next displacement.
    pub fn step(&mut self, input: &StepInput) -> Result<Vec<GaussianParams>, NnError> {
        self.check(input)?;
        let m = self.model;
        let rows = self.rows;
        let hd = m.config.hidden_dim;
        let e = m.config.embed_dim;
        let cols = m.lstm.cols();
        let input_dim = m.lstm.input_dim;
        let layout = stream_layout(m.variant, &m.config);

        let disp: Vec<f64> = input.displacement.iter().flatten().copied().collect();
        let mut xh = vec![0.0; rows * cols];
        let mut act = vec![0.0; rows * e];
        for &(stream, off) in &layout {
            match stream {
                Stream::Spatial => embed_rows(&m.embed_spatial, &disp, rows, &mut act),
                Stream::Ppcg => embed_rows(m.embed_ppcg.as_ref().unwrap(), &input.ppcg, rows, &mut act),
                Stream::Vpcg => embed_rows(m.embed_vpcg.as_ref().unwrap(), &input.vpcg, rows, &mut act),
                Stream::Social => social_rows(
                    m.embed_social.as_ref().unwrap(),
                    &input.pool,
                    &self.h,
                    rows,
                    hd,
                    &mut act,
                ),
            }
            for r in 0..rows {
                xh[r * cols + off..r * cols + off + e].copy_from_slice(&act[r * e..(r + 1) * e]);
            }
        }
        for r in 0..rows {
            xh[r * cols + input_dim..(r + 1) * cols].copy_from_slice(&self.h[r * hd..(r + 1) * hd]);
        }

        let mut gates = vec![0.0; rows * 4 * hd];
        for r in 0..rows {
            gates[r * 4 * hd..(r + 1) * 4 * hd].copy_from_slice(&m.lstm.bias);
        }
        gemm(rows, cols, 4 * hd, &xh, false, &m.lstm.weight, true, 1.0, &mut gates);

        let c_prev = std::mem::take(&mut self.c);
        let mut c = vec![0.0; rows * hd];
        let mut h = vec![0.0; rows * hd];
        let mut tanh_c = vec![0.0; rows * hd];
        for r in 0..rows {
            let g = &mut gates[r * 4 * hd..(r + 1) * 4 * hd];
            for u in 0..hd {
                g[u] = sigmoid(g[u]);
                g[hd + u] = sigmoid(g[hd + u]);
                g[2 * hd + u] = g[2 * hd + u].tanh();
                g[3 * hd + u] = sigmoid(g[3 * hd + u]);
                let k = r * hd + u;
                c[k] = g[hd + u] * c_prev[k] + g[u] * g[2 * hd + u];
                tanh_c[k] = c[k].tanh();
                h[k] = g[3 * hd + u] * tanh_c[k];
            }
        }

        let mut raw_flat = vec![0.0; rows * 5];
        for r in 0..rows {
            raw_flat[r * 5..(r + 1) * 5].copy_from_slice(&m.head.bias);
        }
        gemm(rows, hd, 5, &h, false, &m.head.weight, true, 1.0, &mut raw_flat);
        let raw: Vec<[f64; 5]> = raw_flat
            .chunks_exact(5)
            .map(|c| [c[0], c[1], c[2], c[3], c[4]])
            .collect();

        let dout = input.targets.as_ref().map(|targets| {
            raw.iter()
                .zip(targets)
                .map(|(o, t)| {
                    let (l, g) = nll_raw_with_grad(o, *t);
                    self.loss += l;
                    self.loss_terms += 1;
                    g
                })
                .collect::<Vec<_>>()
        });

        let out = raw.iter().map(gaussian_from_raw).collect();
        if self.record {
            self.steps.push(StepCache {
                disp,
                ppcg: input.ppcg.clone(),
                vpcg: input.vpcg.clone(),
                pool: input.pool.clone(),
                xh,
                c_prev,
                gates,
                tanh_c,
                h: h.clone(),
                dout,
            });
        }
        self.h = h;
        self.c = c;
        self.last_raw = raw;
        Ok(out)
    }

    pub fn loss(&self) -> f64 {
        self.loss
    }

    pub fn finish(self) -> LossGraph {
        LossGraph {
            loss: self.loss,
            loss_terms: self.loss_terms,
            rows: self.rows,
            recorded: self.record,
            steps: self.steps,
        }
    }
}

/// `ReLU(X W^T + b)` for `rows` inputs.
fn embed_rows(layer: &Linear, x: &[f64], rows: usize, out: &mut [f64]) {
    let e = layer.out_dim;
    for r in 0..rows {
        out[r * e..(r + 1) * e].copy_from_slice(&layer.bias);
    }
    gemm(rows, layer.in_dim, e, x, false, &layer.weight, true, 1.0, out);
    for v in out.iter_mut() {
        *v = v.max(0.0);
    }
}

/// Embedding of the sum-pooled neighbor hidden states; the pooled tensor
/// is sparse, so only occupied cells are multiplied.
fn social_rows(layer: &Linear, pool: &[Vec<(usize, usize)>], h: &[f64], rows: usize, hd: usize, out: &mut [f64]) {
    let e = layer.out_dim;
    let pd = layer.in_dim;
    for r in 0..rows {
        let o = &mut out[r * e..(r + 1) * e];
        o.copy_from_slice(&layer.bias);
        for &(cell, j) in &pool[r] {
            let h_j = &h[j * hd..(j + 1) * hd];
            for (k, v) in o.iter_mut().enumerate() {
                let w = &layer.weight[k * pd + cell * hd..k * pd + (cell + 1) * hd];
                *v += w.iter().zip(h_j).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        for v in o.iter_mut() {
            *v = v.max(0.0);
        }
    }
}
