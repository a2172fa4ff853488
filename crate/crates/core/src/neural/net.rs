//! Forward and backward passes for the CNN and LSTM text classifiers, one
//! sample at a time over flat row-major buffers.

use rand::Rng;

use super::optim::Param;
use super::{Arch, NetConfig};

// parameter slots shared by both architectures
const EMBED: usize = 0;
const CONV_W: usize = 1;
const CONV_B: usize = 2;
// CNN
const DENSE_W: usize = 3;
const DENSE_B: usize = 4;
const CNN_OUT_W: usize = 5;
const CNN_OUT_B: usize = 6;
// LSTM
const LSTM_WX: usize = 3;
const LSTM_WH: usize = 4;
const LSTM_B: usize = 5;
const LSTM_OUT_W: usize = 6;
const LSTM_OUT_B: usize = 7;

pub(crate) fn init_params<R: Rng>(
    cfg: &NetConfig,
    vocab: usize,
    classes: usize,
    rng: &mut R,
) -> Vec<Param> {
    let (e, f, k, h) = (cfg.embed_dim, cfg.filters, cfg.kernel, cfg.hidden);
    let fan_in = |n: usize| (3.0 / n as f64).sqrt();
    let mut params = vec![
        Param::uniform("embedding", &[vocab, e], 0.05, rng),
        Param::uniform("conv_w", &[f, k * e], fan_in(k * e), rng),
        Param::zeros("conv_b", &[f]),
    ];
    match cfg.arch {
        Arch::Cnn => params.extend([
            Param::uniform("dense_w", &[h, f], fan_in(f), rng),
            Param::zeros("dense_b", &[h]),
            Param::uniform("out_w", &[classes, h], fan_in(h), rng),
            Param::zeros("out_b", &[classes]),
        ]),
        Arch::Lstm => {
            let mut bias = Param::zeros("lstm_b", &[4 * h]);
            bias.value[h..2 * h].iter_mut().for_each(|b| *b = 1.0);
            params.extend([
                Param::uniform("lstm_wx", &[4 * h, f], fan_in(f), rng),
                Param::uniform("lstm_wh", &[4 * h, h], fan_in(h), rng),
                bias,
                Param::uniform("out_w", &[classes, h], fan_in(h), rng),
                Param::zeros("out_b", &[classes]),
            ]);
        }
    }
    params
}

/// Expected parameter shapes, for validating loaded checkpoints.
pub(crate) fn param_shapes(
    cfg: &NetConfig,
    vocab: usize,
    classes: usize,
) -> Vec<(&'static str, Vec<usize>)> {
    let (e, f, k, h) = (cfg.embed_dim, cfg.filters, cfg.kernel, cfg.hidden);
    let mut shapes = vec![
        ("embedding", vec![vocab, e]),
        ("conv_w", vec![f, k * e]),
        ("conv_b", vec![f]),
    ];
    match cfg.arch {
        Arch::Cnn => shapes.extend([
            ("dense_w", vec![h, f]),
            ("dense_b", vec![h]),
            ("out_w", vec![classes, h]),
            ("out_b", vec![classes]),
        ]),
        Arch::Lstm => shapes.extend([
            ("lstm_wx", vec![4 * h, f]),
            ("lstm_wh", vec![4 * h, h]),
            ("lstm_b", vec![4 * h]),
            ("out_w", vec![classes, h]),
            ("out_b", vec![classes]),
        ]),
    }
    shapes
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Inverted dropout mask: kept units are scaled by `1 / (1 - rate)`.
fn dropout_mask<R: Rng>(n: usize, rate: f64, rng: Option<&mut R>) -> Option<Vec<f64>> {
    let rng = rng?;
    if rate <= 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - rate);
    Some(
        (0..n)
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect(),
    )
}

fn apply_mask(x: &mut [f64], mask: Option<&Vec<f64>>) {
    if let Some(m) = mask {
        x.iter_mut().zip(m).for_each(|(v, k)| *v *= k);
    }
}

/// `out[r] = b[r] + W[r]·x` for a `rows × x.len()` matrix.
fn affine(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    w.chunks_exact(x.len())
        .zip(b)
        .map(|(row, b)| b + dot(row, x))
        .collect()
}

/// Accumulates `dW += dy ⊗ x`, `db += dy` and returns `Wᵀ dy`.
fn affine_backward(w: &[f64], x: &[f64], dy: &[f64], dw: &mut [f64], db: &mut [f64]) -> Vec<f64> {
    let mut dx = vec![0.0; x.len()];
    for (r, &g) in dy.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        db[r] += g;
        let row = &w[r * x.len()..(r + 1) * x.len()];
        let drow = &mut dw[r * x.len()..(r + 1) * x.len()];
        for i in 0..x.len() {
            drow[i] += g * x[i];
            dx[i] += g * row[i];
        }
    }
    dx
}

pub(crate) struct ConvOut {
    /// Embedded (and dropped-out) input, `maxlen × embed`.
    a: Vec<f64>,
    mask: Option<Vec<f64>>,
    /// Pre-activation conv output, `positions × filters`.
    z: Vec<f64>,
}

fn embed_conv<R: Rng>(
    params: &[Param],
    cfg: &NetConfig,
    tokens: &[usize],
    rng: Option<&mut R>,
) -> ConvOut {
    let (e, f, k) = (cfg.embed_dim, cfg.filters, cfg.kernel);
    let table = &params[EMBED].value;
    let mut a = Vec::with_capacity(tokens.len() * e);
    for &t in tokens {
        a.extend_from_slice(&table[t * e..(t + 1) * e]);
    }
    let mask = dropout_mask(a.len(), cfg.dropout_embed, rng);
    apply_mask(&mut a, mask.as_ref());
    let positions = tokens.len() + 1 - k;
    let (w, b) = (&params[CONV_W].value, &params[CONV_B].value);
    let mut z = Vec::with_capacity(positions * f);
    for p in 0..positions {
        let window = &a[p * e..(p + k) * e];
        z.extend(
            w.chunks_exact(k * e)
                .zip(b)
                .map(|(row, b)| b + dot(row, window)),
        );
    }
    ConvOut { a, mask, z }
}

/// Backpropagates `dz` (same layout as `z`) into the conv and embedding
/// gradients. Zero entries of `dz` are skipped.
fn embed_conv_backward(
    params: &[Param],
    cfg: &NetConfig,
    tokens: &[usize],
    conv: &ConvOut,
    dz: &[f64],
    grads: &mut [Vec<f64>],
) {
    let (e, f, k) = (cfg.embed_dim, cfg.filters, cfg.kernel);
    let w = &params[CONV_W].value;
    let mut da = vec![0.0; conv.a.len()];
    for (idx, &g) in dz.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let (p, fi) = (idx / f, idx % f);
        let window = &conv.a[p * e..(p + k) * e];
        let row = &w[fi * k * e..(fi + 1) * k * e];
        grads[CONV_B][fi] += g;
        let drow = &mut grads[CONV_W][fi * k * e..(fi + 1) * k * e];
        let dwindow = &mut da[p * e..(p + k) * e];
        for i in 0..k * e {
            drow[i] += g * window[i];
            dwindow[i] += g * row[i];
        }
    }
    apply_mask(&mut da, conv.mask.as_ref());
    let dtable = &mut grads[EMBED];
    for (pos, &t) in tokens.iter().enumerate() {
        let src = &da[pos * e..(pos + 1) * e];
        for (d, s) in dtable[t * e..(t + 1) * e].iter_mut().zip(src) {
            *d += s;
        }
    }
}

/// Max of `relu(z)` over positions `[start, end)` for every filter, with the
/// first arg-max position.
pub(super) fn max_pool(
    z: &[f64],
    filters: usize,
    start: usize,
    end: usize,
) -> (Vec<f64>, Vec<usize>) {
    let mut best = vec![f64::NEG_INFINITY; filters];
    let mut arg = vec![start; filters];
    for p in start..end {
        for fi in 0..filters {
            let v = z[p * filters + fi].max(0.0);
            if v > best[fi] {
                best[fi] = v;
                arg[fi] = p;
            }
        }
    }
    (best, arg)
}

pub(crate) enum Cache {
    Cnn {
        conv: ConvOut,
        arg: Vec<usize>,
        pooled: Vec<f64>,
        hidden_mask: Option<Vec<f64>>,
        zd: Vec<f64>,
        hd: Vec<f64>,
    },
    Lstm {
        conv: ConvOut,
        /// Arg-max conv position per (step, filter).
        arg: Vec<usize>,
        q: Vec<f64>,
        /// Activated gates i, f, g, o per step, `steps × 4h`.
        gates: Vec<f64>,
        /// Cell states, `(steps + 1) × h`, starting from zero.
        cs: Vec<f64>,
        tcs: Vec<f64>,
        /// Hidden states, `(steps + 1) × h`, starting from zero.
        hs: Vec<f64>,
    },
}

pub(crate) fn forward<R: Rng>(
    params: &[Param],
    cfg: &NetConfig,
    tokens: &[usize],
    mut rng: Option<&mut R>,
) -> (Vec<f64>, Cache) {
    let conv = embed_conv(params, cfg, tokens, rng.as_deref_mut());
    let f = cfg.filters;
    let positions = conv.z.len() / f;
    match cfg.arch {
        Arch::Cnn => {
            let (pooled, arg) = max_pool(&conv.z, f, 0, positions);
            let hidden_mask = dropout_mask(f, cfg.dropout_hidden, rng);
            let mut g2 = pooled.clone();
            apply_mask(&mut g2, hidden_mask.as_ref());
            let zd = affine(&params[DENSE_W].value, &params[DENSE_B].value, &g2);
            let hd: Vec<f64> = zd.iter().map(|v| v.max(0.0)).collect();
            let logits = affine(&params[CNN_OUT_W].value, &params[CNN_OUT_B].value, &hd);
            (
                logits,
                Cache::Cnn {
                    conv,
                    arg,
                    pooled: g2,
                    hidden_mask,
                    zd,
                    hd,
                },
            )
        }
        Arch::Lstm => {
            let h = cfg.hidden;
            let steps = positions / cfg.pool;
            let mut q = Vec::with_capacity(steps * f);
            let mut arg = Vec::with_capacity(steps * f);
            for s in 0..steps {
                let (m, a) = max_pool(&conv.z, f, s * cfg.pool, (s + 1) * cfg.pool);
                q.extend(m);
                arg.extend(a);
            }
            let (wx, wh, b) = (
                &params[LSTM_WX].value,
                &params[LSTM_WH].value,
                &params[LSTM_B].value,
            );
            let mut gates = Vec::with_capacity(steps * 4 * h);
            let mut cs = vec![0.0; h];
            let mut hs = vec![0.0; h];
            let mut tcs = Vec::with_capacity(steps * h);
            for s in 0..steps {
                let x = &q[s * f..(s + 1) * f];
                let h_prev = hs[s * h..(s + 1) * h].to_vec();
                let pre: Vec<f64> = (0..4 * h)
                    .map(|j| {
                        b[j] + dot(&wx[j * f..(j + 1) * f], x)
                            + dot(&wh[j * h..(j + 1) * h], &h_prev)
                    })
                    .collect();
                let act: Vec<f64> = pre
                    .iter()
                    .enumerate()
                    .map(|(j, &v)| {
                        if (2 * h..3 * h).contains(&j) {
                            v.tanh()
                        } else {
                            sigmoid(v)
                        }
                    })
                    .collect();
                for u in 0..h {
                    let (i, fg, g, o) = (act[u], act[h + u], act[2 * h + u], act[3 * h + u]);
                    let c = fg * cs[s * h + u] + i * g;
                    let tc = c.tanh();
                    cs.push(c);
                    tcs.push(tc);
                    hs.push(o * tc);
                }
                gates.extend(act);
            }
            let last = &hs[steps * h..];
            let logits = affine(&params[LSTM_OUT_W].value, &params[LSTM_OUT_B].value, last);
            (
                logits,
                Cache::Lstm {
                    conv,
                    arg,
                    q,
                    gates,
                    cs,
                    tcs,
                    hs,
                },
            )
        }
    }
}

/// Accumulates parameter gradients for one sample given `dlogits`.
pub(crate) fn backward(
    params: &[Param],
    cfg: &NetConfig,
    tokens: &[usize],
    cache: &Cache,
    dlogits: &[f64],
    grads: &mut [Vec<f64>],
) {
    let f = cfg.filters;
    match cache {
        Cache::Cnn {
            conv,
            arg,
            pooled,
            hidden_mask,
            zd,
            hd,
        } => {
            let (dw, rest) = grads.split_at_mut(CNN_OUT_B);
            let mut dhd = affine_backward(
                &params[CNN_OUT_W].value,
                hd,
                dlogits,
                &mut dw[CNN_OUT_W],
                &mut rest[0],
            );
            dhd.iter_mut().zip(zd).for_each(|(d, z)| {
                if *z <= 0.0 {
                    *d = 0.0
                }
            });
            let (dw, rest) = grads.split_at_mut(DENSE_B);
            let mut dg = affine_backward(
                &params[DENSE_W].value,
                pooled,
                &dhd,
                &mut dw[DENSE_W],
                &mut rest[0],
            );
            apply_mask(&mut dg, hidden_mask.as_ref());
            let z = &conv.z;
            let mut dz = vec![0.0; z.len()];
            for fi in 0..f {
                let idx = arg[fi] * f + fi;
                if z[idx] > 0.0 {
                    dz[idx] = dg[fi];
                }
            }
            embed_conv_backward(params, cfg, tokens, conv, &dz, grads);
        }
        Cache::Lstm {
            conv,
            arg,
            q,
            gates,
            cs,
            tcs,
            hs,
        } => {
            let h = cfg.hidden;
            let steps = q.len() / f;
            let (dw, rest) = grads.split_at_mut(LSTM_OUT_B);
            let mut dh = affine_backward(
                &params[LSTM_OUT_W].value,
                &hs[steps * h..],
                dlogits,
                &mut dw[LSTM_OUT_W],
                &mut rest[0],
            );
            let (wx, wh) = (&params[LSTM_WX].value, &params[LSTM_WH].value);
            let mut dc = vec![0.0; h];
            let mut dq = vec![0.0; q.len()];
            let mut dpre = vec![0.0; 4 * h];
            for s in (0..steps).rev() {
                let act = &gates[s * 4 * h..(s + 1) * 4 * h];
                for u in 0..h {
                    let (i, fg, g, o) = (act[u], act[h + u], act[2 * h + u], act[3 * h + u]);
                    let tc = tcs[s * h + u];
                    let c_prev = cs[s * h + u];
                    let d_o = dh[u] * tc;
                    dc[u] += dh[u] * o * (1.0 - tc * tc);
                    dpre[u] = dc[u] * g * i * (1.0 - i);
                    dpre[h + u] = dc[u] * c_prev * fg * (1.0 - fg);
                    dpre[2 * h + u] = dc[u] * i * (1.0 - g * g);
                    dpre[3 * h + u] = d_o * o * (1.0 - o);
                    dc[u] *= fg;
                }
                let x = &q[s * f..(s + 1) * f];
                let h_prev = &hs[s * h..(s + 1) * h];
                let mut dh_prev = vec![0.0; h];
                for j in 0..4 * h {
                    let g = dpre[j];
                    if g == 0.0 {
                        continue;
                    }
                    grads[LSTM_B][j] += g;
                    let (row_x, row_h) = (&wx[j * f..(j + 1) * f], &wh[j * h..(j + 1) * h]);
                    let dxrow = &mut grads[LSTM_WX][j * f..(j + 1) * f];
                    for fi in 0..f {
                        dxrow[fi] += g * x[fi];
                        dq[s * f + fi] += g * row_x[fi];
                    }
                    let dhrow = &mut grads[LSTM_WH][j * h..(j + 1) * h];
                    for k in 0..h {
                        dhrow[k] += g * h_prev[k];
                        dh_prev[k] += g * row_h[k];
                    }
                }
                dh = dh_prev;
            }
            let z = &conv.z;
            let mut dz = vec![0.0; z.len()];
            for (slot, &p) in arg.iter().enumerate() {
                let idx = p * f + slot % f;
                if z[idx] > 0.0 {
                    dz[idx] += dq[slot];
                }
            }
            embed_conv_backward(params, cfg, tokens, conv, &dz, grads);
        }
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Cross-entropy `-ln softmax(logits)[label]`, computed in log space.
pub(crate) fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    lse - logits[label]
}
