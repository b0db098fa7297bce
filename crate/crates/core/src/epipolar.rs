//! Epipolar attention for axis-aligned orthographic rigs.
//!
//! Between two such views the epipolar line of a pixel is a full image row
//! or column of the other view, so cross-view attention reduces to row and
//! column attention. Each query attends to itself and to its lines in all
//! other views jointly.

use rayon::prelude::*;

use crate::camera::{OrthoCamera, Vec3};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    Row,
    Column,
}

/// Source pixel coordinate feeding an index map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Coord {
    U,
    V,
}

/// `x -> x` or `x -> n - 1 - x` applied to one query coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct IndexMap {
    pub from: Coord,
    pub flip: bool,
}

impl IndexMap {
    #[inline]
    pub fn apply(&self, u: usize, v: usize, n: usize) -> usize {
        let x = match self.from {
            Coord::U => u,
            Coord::V => v,
        };
        if self.flip {
            n - 1 - x
        } else {
            x
        }
    }
}

/// How pixels of `source` relate to lines of `target`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpipolarRelation {
    pub source: usize,
    pub target: usize,
    pub axis: Axis,
    /// Query coordinate to the target row or column index.
    pub line: IndexMap,
    /// For parallel views, the position of the corresponding pixel along
    /// the line; perpendicular views sweep the whole line with depth.
    pub point: Option<IndexMap>,
}

impl EpipolarRelation {
    pub fn line_len(&self, height: usize, width: usize) -> usize {
        match self.axis {
            Axis::Row => width,
            Axis::Column => height,
        }
    }

    pub fn line_index(&self, u: usize, v: usize, height: usize, width: usize) -> usize {
        let n = match self.axis {
            Axis::Row => height,
            Axis::Column => width,
        };
        self.line.apply(u, v, n)
    }

    /// Target pixel `(u, v)` at position `k` along the line through the query.
    #[inline]
    pub fn pixel_on_line(&self, line: usize, k: usize) -> (usize, usize) {
        match self.axis {
            Axis::Row => (k, line),
            Axis::Column => (line, k),
        }
    }

    /// Position of target pixel `(u, v)` along its line.
    #[inline]
    pub fn position_on_line(&self, u: usize, v: usize) -> usize {
        match self.axis {
            Axis::Row => u,
            Axis::Column => v,
        }
    }
}

const AXIS_TOL: f64 = 1e-9;

/// Signed unit alignment of two vectors: `Some(+1 | -1)` parallel,
/// `Some(0)` perpendicular, `None` otherwise.
fn alignment(a: &Vec3, b: &Vec3) -> Option<i32> {
    let d = a.dot(b);
    if (d - 1.0).abs() < AXIS_TOL {
        Some(1)
    } else if (d + 1.0).abs() < AXIS_TOL {
        Some(-1)
    } else if d.abs() < AXIS_TOL {
        Some(0)
    } else {
        None
    }
}

/// Expresses a target image axis (`right` or `up` of view j) as a signed
/// source image axis of view i, as an index map on pixel coordinates.
fn image_axis_map(target_axis: &Vec3, target_is_up: bool, src: &OrthoCamera) -> Option<IndexMap> {
    // Pixel u grows with +right, v grows with -up.
    let sr = alignment(target_axis, &src.right())?;
    let su = alignment(target_axis, &src.up())?;
    let (from, same_sign) = match (sr, su) {
        (s, 0) if s != 0 => (Coord::U, s > 0),
        (0, s) if s != 0 => (Coord::V, s < 0),
        _ => return None,
    };
    // Target u (right) grows with the axis, target v (up) shrinks with it.
    let flip = same_sign == target_is_up;
    Some(IndexMap { from, flip })
}

/// Relation between two views of an axis-aligned rig.
pub fn relation(cams: &[OrthoCamera], i: usize, j: usize) -> Result<EpipolarRelation> {
    if i == j {
        return Err(Error::invalid("epipolar relation needs two distinct views"));
    }
    let (src, dst) = match (cams.get(i), cams.get(j)) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::invalid(format!("view index out of range ({i}, {j})"))),
    };
    if (src.height, src.width) != (dst.height, dst.width) || src.half_extent != dst.half_extent {
        return Err(Error::ShapeMismatch("epipolar views must share resolution and extent".into()));
    }
    let not_aligned = || Error::invalid(format!("views {i} and {j} are not axis-aligned with each other"));
    let d = src.direction();
    let along_right = alignment(&d, &dst.right()).ok_or_else(not_aligned)?;
    let along_up = alignment(&d, &dst.up()).ok_or_else(not_aligned)?;
    let rel = if along_right != 0 {
        let line = image_axis_map(&dst.up(), true, src).ok_or_else(not_aligned)?;
        EpipolarRelation { source: i, target: j, axis: Axis::Row, line, point: None }
    } else if along_up != 0 {
        let line = image_axis_map(&dst.right(), false, src).ok_or_else(not_aligned)?;
        EpipolarRelation { source: i, target: j, axis: Axis::Column, line, point: None }
    } else {
        alignment(&d, &dst.direction()).filter(|s| *s != 0).ok_or_else(not_aligned)?;
        let line = image_axis_map(&dst.up(), true, src).ok_or_else(not_aligned)?;
        let point = image_axis_map(&dst.right(), false, src).ok_or_else(not_aligned)?;
        EpipolarRelation { source: i, target: j, axis: Axis::Row, line, point: Some(point) }
    };
    let swaps = matches!((rel.axis, rel.line.from), (Axis::Row, Coord::U) | (Axis::Column, Coord::V));
    if swaps && src.height != src.width {
        return Err(Error::ShapeMismatch("axis-swapping epipolar lines need square views".into()));
    }
    Ok(rel)
}

/// Relations for every ordered pair; `table[i][j]` is `None` on the diagonal.
pub fn relation_table(cams: &[OrthoCamera]) -> Result<Vec<Vec<Option<EpipolarRelation>>>> {
    (0..cams.len())
        .map(|i| {
            (0..cams.len())
                .map(|j| if i == j { Ok(None) } else { relation(cams, i, j).map(Some) })
                .collect()
        })
        .collect()
}

/// The line in view `j` that can hold the correspondent of `(u, v)` in `i`.
pub fn epipolar_line(
    cams: &[OrthoCamera],
    i: usize,
    j: usize,
    u: usize,
    v: usize,
) -> Result<(Axis, usize, EpipolarRelation)> {
    let rel = relation(cams, i, j)?;
    cams[i].check_pixel(u, v)?;
    let (h, w) = (cams[i].height, cams[i].width);
    Ok((rel.axis, rel.line_index(u, v, h, w), rel))
}

/// `N x C x H x W` features.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiViewFeatureMap {
    pub views: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl MultiViewFeatureMap {
    pub fn zeros(views: usize, channels: usize, height: usize, width: usize) -> Self {
        Self {
            views,
            channels,
            height,
            width,
            data: vec![0.0; views * channels * height * width],
        }
    }

    #[inline]
    pub fn index(&self, view: usize, c: usize, u: usize, v: usize) -> usize {
        ((view * self.channels + c) * self.height + v) * self.width + u
    }

    pub fn token(&self, view: usize, u: usize, v: usize) -> Vec<f64> {
        (0..self.channels).map(|c| self.data[self.index(view, c, u, v)]).collect()
    }

    fn tokens(&self) -> usize {
        self.views * self.height * self.width
    }

    /// Token-major copy `[token][channel]`.
    fn token_major(&self) -> Vec<f64> {
        let hw = self.height * self.width;
        let mut out = vec![0.0; self.tokens() * self.channels];
        for view in 0..self.views {
            for c in 0..self.channels {
                for p in 0..hw {
                    out[(view * hw + p) * self.channels + c] = self.data[(view * self.channels + c) * hw + p];
                }
            }
        }
        out
    }

    fn from_token_major(&self, tokens: &[f64]) -> Self {
        let hw = self.height * self.width;
        let mut out = Self::zeros(self.views, self.channels, self.height, self.width);
        for view in 0..self.views {
            for c in 0..self.channels {
                for p in 0..hw {
                    out.data[(view * self.channels + c) * hw + p] = tokens[(view * hw + p) * self.channels + c];
                }
            }
        }
        out
    }

    fn validate(&self) -> Result<()> {
        if self.data.len() != self.views * self.channels * self.height * self.width {
            return Err(Error::ShapeMismatch("feature buffer does not match N x C x H x W".into()));
        }
        if self.data.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("feature map holds non-finite values"));
        }
        Ok(())
    }
}

/// Bias-free `C x C` projections, row-major (`y = W x`).
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights {
    pub channels: usize,
    pub query: Vec<f64>,
    pub key: Vec<f64>,
    pub value: Vec<f64>,
    pub output: Vec<f64>,
}

impl AttentionWeights {
    pub fn zeros(channels: usize) -> Self {
        let z = vec![0.0; channels * channels];
        Self {
            channels,
            query: z.clone(),
            key: z.clone(),
            value: z.clone(),
            output: z,
        }
    }

    pub fn identity(channels: usize) -> Self {
        let mut eye = vec![0.0; channels * channels];
        for c in 0..channels {
            eye[c * channels + c] = 1.0;
        }
        Self {
            channels,
            query: eye.clone(),
            key: eye.clone(),
            value: eye.clone(),
            output: eye,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionGradients {
    pub features: MultiViewFeatureMap,
    pub weights: AttentionWeights,
}

/// Numerically stable softmax in place.
pub fn softmax(logits: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in logits.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in logits.iter_mut() {
        *x /= sum;
    }
}

/// `out[t] = W x[t]` for token-major `x`.
fn project_tokens(w: &[f64], x: &[f64], c: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    out.par_chunks_mut(c).zip(x.par_chunks(c)).for_each(|(o, xi)| {
        for a in 0..c {
            o[a] = (0..c).map(|b| w[a * c + b] * xi[b]).sum();
        }
    });
    out
}

/// Key layout shared by forward and backward: token 0 is the query itself,
/// then each other view's line in view order.
struct KeyLayout {
    relations: Vec<Vec<Option<EpipolarRelation>>>,
    /// `offsets[i][j]`: first key slot of view j's line for queries in i.
    offsets: Vec<Vec<usize>>,
    lens: Vec<usize>,
    height: usize,
    width: usize,
}

impl KeyLayout {
    fn new(cams: &[OrthoCamera]) -> Result<Self> {
        let relations = relation_table(cams)?;
        let (height, width) = (cams[0].height, cams[0].width);
        let n = cams.len();
        let mut offsets = vec![vec![0; n]; n];
        let mut lens = vec![1; n];
        for i in 0..n {
            for j in 0..n {
                if let Some(rel) = relations[i][j] {
                    offsets[i][j] = lens[i];
                    lens[i] += rel.line_len(height, width);
                }
            }
        }
        Ok(Self {
            relations,
            offsets,
            lens,
            height,
            width,
        })
    }

    fn token(&self, view: usize, u: usize, v: usize) -> usize {
        (view * self.height + v) * self.width + u
    }

    /// Key tokens of query `(i, u, v)` in slot order.
    fn keys(&self, i: usize, u: usize, v: usize, out: &mut Vec<usize>) {
        out.clear();
        out.push(self.token(i, u, v));
        for (j, rel) in self.relations[i].iter().enumerate() {
            let Some(rel) = rel else { continue };
            let line = rel.line_index(u, v, self.height, self.width);
            for k in 0..rel.line_len(self.height, self.width) {
                let (uu, vv) = rel.pixel_on_line(line, k);
                out.push(self.token(j, uu, vv));
            }
        }
    }

    /// Every `(query token, slot)` whose key is token `(j, u, v)`.
    fn attended_by(&self, j: usize, u: usize, v: usize, out: &mut Vec<(usize, usize)>) {
        out.clear();
        out.push((self.token(j, u, v), 0));
        for i in 0..self.relations.len() {
            let (Some(back), Some(fwd)) = (self.relations[j][i], self.relations[i][j]) else { continue };
            let line = back.line_index(u, v, self.height, self.width);
            let slot = self.offsets[i][j] + fwd.position_on_line(u, v);
            for k in 0..back.line_len(self.height, self.width) {
                let (qu, qv) = back.pixel_on_line(line, k);
                out.push((self.token(i, qu, qv), slot));
            }
        }
    }
}

fn check_attention_inputs(
    maps: &MultiViewFeatureMap,
    cams: &[OrthoCamera],
    weights: &AttentionWeights,
    heads: usize,
) -> Result<()> {
    maps.validate()?;
    let c = maps.channels;
    if heads == 0 || c % heads != 0 {
        return Err(Error::invalid(format!("{c} channels not divisible into {heads} heads")));
    }
    if weights.channels != c || [&weights.query, &weights.key, &weights.value, &weights.output].iter().any(|w| w.len() != c * c) {
        return Err(Error::ShapeMismatch(format!("attention weights must be {c}x{c}")));
    }
    if cams.len() != maps.views {
        return Err(Error::ShapeMismatch(format!("{} cameras for {} views", cams.len(), maps.views)));
    }
    if cams.iter().any(|cam| (cam.height, cam.width) != (maps.height, maps.width)) {
        return Err(Error::ShapeMismatch("camera resolution does not match the feature map".into()));
    }
    Ok(())
}

struct Forward {
    x: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    /// Per token, per head, per key slot.
    probs: Vec<Vec<f64>>,
    /// Per token attention output before the output projection.
    attended: Vec<f64>,
}

fn forward(
    maps: &MultiViewFeatureMap,
    layout: &KeyLayout,
    weights: &AttentionWeights,
    heads: usize,
) -> Forward {
    let c = maps.channels;
    let dh = c / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let x = maps.token_major();
    let q = project_tokens(&weights.query, &x, c);
    let k = project_tokens(&weights.key, &x, c);
    let v = project_tokens(&weights.value, &x, c);
    let (h, w) = (maps.height, maps.width);
    let per_token: Vec<(Vec<f64>, Vec<f64>)> = (0..maps.tokens())
        .into_par_iter()
        .map_init(Vec::new, |keys, t| {
            let (i, p) = (t / (h * w), t % (h * w));
            layout.keys(i, p % w, p / w, keys);
            let n = keys.len();
            let mut probs = vec![0.0; heads * n];
            let mut out = vec![0.0; c];
            for head in 0..heads {
                let r = head * dh..(head + 1) * dh;
                let qh = &q[t * c..][r.clone()];
                let ps = &mut probs[head * n..(head + 1) * n];
                for (s, &key) in keys.iter().enumerate() {
                    let kh = &k[key * c..][r.clone()];
                    ps[s] = scale * qh.iter().zip(kh).map(|(a, b)| a * b).sum::<f64>();
                }
                softmax(ps);
                for (s, &key) in keys.iter().enumerate() {
                    let vh = &v[key * c..][r.clone()];
                    for (o, val) in out[r.clone()].iter_mut().zip(vh) {
                        *o += ps[s] * val;
                    }
                }
            }
            (probs, out)
        })
        .collect();
    let mut probs = Vec::with_capacity(per_token.len());
    let mut attended = Vec::with_capacity(maps.tokens() * c);
    for (p, o) in per_token {
        probs.push(p);
        attended.extend(o);
    }
    Forward {
        x,
        q,
        k,
        v,
        probs,
        attended,
    }
}

/// Multi-head attention over each token's epipolar key set, followed by
/// the output projection and a residual add.
pub fn epipolar_attention(
    maps: &MultiViewFeatureMap,
    cams: &[OrthoCamera],
    weights: &AttentionWeights,
    heads: usize,
) -> Result<MultiViewFeatureMap> {
    check_attention_inputs(maps, cams, weights, heads)?;
    let layout = KeyLayout::new(cams)?;
    let fwd = forward(maps, &layout, weights, heads);
    let c = maps.channels;
    let mut out = project_tokens(&weights.output, &fwd.attended, c);
    for (o, x) in out.iter_mut().zip(&fwd.x) {
        *o += x;
    }
    Ok(maps.from_token_major(&out))
}

/// Attention probabilities of one query, per head, in key-slot order
/// (self first, then each other view's line).
pub fn attention_probabilities(
    maps: &MultiViewFeatureMap,
    cams: &[OrthoCamera],
    weights: &AttentionWeights,
    heads: usize,
    view: usize,
    u: usize,
    v: usize,
) -> Result<Vec<Vec<f64>>> {
    check_attention_inputs(maps, cams, weights, heads)?;
    cams[view].check_pixel(u, v)?;
    let layout = KeyLayout::new(cams)?;
    let fwd = forward(maps, &layout, weights, heads);
    let probs = &fwd.probs[layout.token(view, u, v)];
    let n = layout.lens[view];
    Ok(probs.chunks(n).map(|p| p.to_vec()).collect())
}

fn outer_accumulate(dst: &mut [f64], a: &[f64], b: &[f64]) {
    let c = b.len();
    for (r, &ar) in a.iter().enumerate() {
        for (col, &bc) in b.iter().enumerate() {
            dst[r * c + col] += ar * bc;
        }
    }
}

fn transpose_apply(w: &[f64], g: &[f64], c: usize, out: &mut [f64]) {
    for b in 0..c {
        out[b] += (0..c).map(|a| w[a * c + b] * g[a]).sum::<f64>();
    }
}

/// Sums `f(token)` over tokens in fixed chunks combined in order.
fn deterministic_weight_grad(tokens: usize, c: usize, f: impl Fn(usize, &mut [f64]) + Sync) -> Vec<f64> {
    const CHUNK: usize = 64;
    let partials: Vec<Vec<f64>> = (0..tokens.div_ceil(CHUNK))
        .into_par_iter()
        .map(|chunk| {
            let mut acc = vec![0.0; c * c];
            for t in chunk * CHUNK..((chunk + 1) * CHUNK).min(tokens) {
                f(t, &mut acc);
            }
            acc
        })
        .collect();
    let mut total = vec![0.0; c * c];
    for p in partials {
        for (t, x) in total.iter_mut().zip(p) {
            *t += x;
        }
    }
    total
}

/// Reverse pass of [`epipolar_attention`] for an upstream gradient on the output.
pub fn epipolar_attention_backward(
    maps: &MultiViewFeatureMap,
    cams: &[OrthoCamera],
    weights: &AttentionWeights,
    heads: usize,
    upstream: &MultiViewFeatureMap,
) -> Result<AttentionGradients> {
    check_attention_inputs(maps, cams, weights, heads)?;
    if (upstream.views, upstream.channels, upstream.height, upstream.width)
        != (maps.views, maps.channels, maps.height, maps.width)
    {
        return Err(Error::ShapeMismatch("upstream gradient shape differs from the features".into()));
    }
    let layout = KeyLayout::new(cams)?;
    let fwd = forward(maps, &layout, weights, heads);
    let c = maps.channels;
    let dh = c / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let (h, w) = (maps.height, maps.width);
    let tokens = maps.tokens();
    let d_out = upstream.token_major();

    let d_output_w = deterministic_weight_grad(tokens, c, |t, acc| {
        outer_accumulate(acc, &d_out[t * c..(t + 1) * c], &fwd.attended[t * c..(t + 1) * c]);
    });
    let mut d_attended = vec![0.0; tokens * c];
    d_attended.par_chunks_mut(c).enumerate().for_each(|(t, dst)| {
        transpose_apply(&weights.output, &d_out[t * c..(t + 1) * c], c, dst);
    });

    // Per query: d logits (already scaled) and dq.
    let per_query: Vec<(Vec<f64>, Vec<f64>)> = (0..tokens)
        .into_par_iter()
        .map_init(Vec::new, |keys, t| {
            let (i, p) = (t / (h * w), t % (h * w));
            layout.keys(i, p % w, p / w, keys);
            let n = keys.len();
            let probs = &fwd.probs[t];
            let mut dlogit = vec![0.0; heads * n];
            let mut dq = vec![0.0; c];
            for head in 0..heads {
                let r = head * dh..(head + 1) * dh;
                let da = &d_attended[t * c..][r.clone()];
                let ps = &probs[head * n..(head + 1) * n];
                let dps: Vec<f64> = keys
                    .iter()
                    .map(|&key| da.iter().zip(&fwd.v[key * c..][r.clone()]).map(|(a, b)| a * b).sum())
                    .collect();
                let mean: f64 = ps.iter().zip(&dps).map(|(p, d)| p * d).sum();
                for s in 0..n {
                    let dl = ps[s] * (dps[s] - mean) * scale;
                    dlogit[head * n + s] = dl;
                    let kh = &fwd.k[keys[s] * c..][r.clone()];
                    for (dqa, ka) in dq[r.clone()].iter_mut().zip(kh) {
                        *dqa += dl * ka;
                    }
                }
            }
            (dlogit, dq)
        })
        .collect();

    // Gather dk and dv for each key token from the queries that attend it.
    let per_key: Vec<(Vec<f64>, Vec<f64>)> = (0..tokens)
        .into_par_iter()
        .map_init(Vec::new, |users, key| {
            let (j, p) = (key / (h * w), key % (h * w));
            layout.attended_by(j, p % w, p / w, users);
            let mut dk = vec![0.0; c];
            let mut dv = vec![0.0; c];
            for &(query, slot) in users.iter() {
                let n = layout.lens[query / (h * w)];
                for head in 0..heads {
                    let r = head * dh..(head + 1) * dh;
                    let dl = per_query[query].0[head * n + slot];
                    let prob = fwd.probs[query][head * n + slot];
                    let qh = &fwd.q[query * c..][r.clone()];
                    let da = &d_attended[query * c..][r.clone()];
                    for a in r.clone() {
                        dk[a] += dl * qh[a - r.start];
                        dv[a] += prob * da[a - r.start];
                    }
                }
            }
            (dk, dv)
        })
        .collect();

    let dq_of = |t: usize| &per_query[t].1;
    let d_query_w = deterministic_weight_grad(tokens, c, |t, acc| outer_accumulate(acc, dq_of(t), &fwd.x[t * c..(t + 1) * c]));
    let d_key_w = deterministic_weight_grad(tokens, c, |t, acc| outer_accumulate(acc, &per_key[t].0, &fwd.x[t * c..(t + 1) * c]));
    let d_value_w = deterministic_weight_grad(tokens, c, |t, acc| outer_accumulate(acc, &per_key[t].1, &fwd.x[t * c..(t + 1) * c]));

    let mut dx = d_out.clone();
    dx.par_chunks_mut(c).enumerate().for_each(|(t, dst)| {
        transpose_apply(&weights.query, dq_of(t), c, dst);
        transpose_apply(&weights.key, &per_key[t].0, c, dst);
        transpose_apply(&weights.value, &per_key[t].1, c, dst);
    });

    Ok(AttentionGradients {
        features: maps.from_token_major(&dx),
        weights: AttentionWeights {
            channels: c,
            query: d_query_w,
            key: d_key_w,
            value: d_value_w,
            output: d_output_w,
        },
    })
}

/// Multiply-add counts of one attention layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttentionCost {
    /// Cross-view query-key pairs and multiply-adds restricted to epipolar lines.
    pub epipolar_pairs: u128,
    pub epipolar_flops: u128,
    /// Same for dense attention over every token of every other view.
    pub dense_pairs: u128,
    pub dense_flops: u128,
}

impl AttentionCost {
    pub fn ratio(&self) -> f64 {
        self.dense_pairs as f64 / self.epipolar_pairs as f64
    }
}

/// Each cross-view pair costs `2C` multiply-adds (one dot product for the
/// logit, one weighted value sum); the self token is left out of both.
pub fn attention_flops(height: usize, width: usize, views: usize, channels: usize) -> Result<AttentionCost> {
    if height == 0 || width == 0 || views == 0 || channels == 0 {
        return Err(Error::invalid("attention dimensions must be positive"));
    }
    let (h, w, n, c) = (height as u128, width as u128, views as u128, channels as u128);
    let pairs_views = n * n.saturating_sub(1).max(1);
    let epipolar_pairs = pairs_views * h * w * h.max(w);
    let dense_pairs = pairs_views * (h * w) * (h * w);
    Ok(AttentionCost {
        epipolar_pairs,
        epipolar_flops: 2 * c * epipolar_pairs,
        dense_pairs,
        dense_flops: 2 * c * dense_pairs,
    })
}

/// Outcome of the Monte Carlo line check for one ordered view pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineCheck {
    pub source: usize,
    pub target: usize,
    pub samples: usize,
    pub failures: usize,
    /// Largest distance in pixels from the computed line (or point).
    pub max_offset: f64,
}

/// Projects `samples` uniform points of the unit ball into every ordered
/// view pair and measures how far the target projection falls from the
/// epipolar line of the source pixel. A failure is an offset above half a
/// pixel.
pub fn check_line_geometry(cams: &[OrthoCamera], samples: usize, seed: u64) -> Result<Vec<LineCheck>> {
    use rand::SeedableRng;
    use rand_distr::{Distribution, UnitBall};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<Vec3> = (0..samples).map(|_| Vec3::from(UnitBall.sample(&mut rng))).collect();
    let table = relation_table(cams)?;
    let mut out = Vec::new();
    for i in 0..cams.len() {
        for j in 0..cams.len() {
            let Some(rel) = table[i][j] else { continue };
            let (h, w) = (cams[i].height, cams[i].width);
            let mut check = LineCheck { source: i, target: j, samples, failures: 0, max_offset: 0.0 };
            for p in &points {
                let Some((u, v)) = cams[i].project(p).pixel(w, h) else {
                    check.failures += 1;
                    continue;
                };
                let q = cams[j].project(p);
                let line = rel.line_index(u, v, h, w) as f64;
                let mut offset = match rel.axis {
                    Axis::Row => (q.v - line).abs(),
                    Axis::Column => (q.u - line).abs(),
                };
                if let Some(point) = rel.point {
                    offset = offset.max((q.u - point.apply(u, v, w) as f64).abs());
                }
                check.max_offset = check.max_offset.max(offset);
                if offset > 0.5 + 1e-9 {
                    check.failures += 1;
                }
            }
            out.push(check);
        }
    }
    Ok(out)
}
