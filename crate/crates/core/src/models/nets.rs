//! Hand-differentiated networks for the pool. Inputs are `lags × P`
//! normalized values (oldest lag first, masked cells as 0) and outputs are
//! `P` normalized next-epoch values, one per off-diagonal OD pair.

use alloc::vec;
use alloc::vec::Vec;
use rand::Rng as _;

use crate::math;
use crate::rng::Rng;

/// Per-unit dropout multipliers (inverted dropout): 0 or 1/(1-rate).
fn sample_mask(mask: &mut Vec<f64>, len: usize, drop: &mut Option<(&mut Rng, f64)>) {
    mask.clear();
    match drop {
        Some((rng, rate)) if *rate > 0.0 => {
            let keep = 1.0 / (1.0 - *rate);
            for _ in 0..len {
                let u: f64 = rng.random();
                mask.push(if u < *rate { 0.0 } else { keep });
            }
        }
        _ => mask.resize(len, 1.0),
    }
}

fn uniform_init(rng: &mut Rng, out: &mut [f64], fan_in: usize) {
    let bound = 1.0 / math::sqrt(fan_in.max(1) as f64);
    for v in out {
        *v = rng.random_range(-bound..bound);
    }
}

#[derive(Debug, Clone, Default)]
pub(crate) struct Cache {
    mask: Vec<f64>,
    hidden: Vec<f64>,
    aux: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Net {
    /// Per-OD autoregression with input dropout.
    LinearAr { p: usize, lags: usize },
    /// Shared MLP over the flattened window with a persistence skip.
    Mlp { p: usize, lags: usize, hidden: usize },
    /// Per-OD Elman cell shared across OD pairs, fed the OD value and the
    /// cross-OD mean at every step, with a persistence skip.
    Recurrent { p: usize, lags: usize, hidden: usize },
}

impl Net {
    pub fn n_params(&self) -> usize {
        match *self {
            Net::LinearAr { p, lags } => p * (lags + 1),
            Net::Mlp { p, lags, hidden } => hidden * (p * lags) + hidden + p * hidden + p,
            Net::Recurrent { hidden, .. } => hidden * 2 + hidden * hidden + hidden + hidden + 1,
        }
    }

    #[cfg(test)]
    pub fn outputs(&self) -> usize {
        match *self {
            Net::LinearAr { p, .. } | Net::Mlp { p, .. } | Net::Recurrent { p, .. } => p,
        }
    }

    pub fn inputs(&self) -> usize {
        match *self {
            Net::LinearAr { p, lags } | Net::Mlp { p, lags, .. } | Net::Recurrent { p, lags, .. } => {
                p * lags
            }
        }
    }

    pub fn init(&self, rng: &mut Rng) -> Vec<f64> {
        let mut params = vec![0.0; self.n_params()];
        match *self {
            Net::LinearAr { p, lags } => {
                for od in 0..p {
                    let row = &mut params[od * (lags + 1)..(od + 1) * (lags + 1)];
                    uniform_init(rng, &mut row[..lags], lags);
                    row[lags] = 0.0;
                }
            }
            Net::Mlp { p, lags, hidden } => {
                let n_in = p * lags;
                let (w1, rest) = params.split_at_mut(hidden * n_in);
                uniform_init(rng, w1, n_in);
                let (_b1, rest) = rest.split_at_mut(hidden);
                let (w2, _b2) = rest.split_at_mut(p * hidden);
                // start close to the persistence forecast
                uniform_init(rng, w2, hidden);
                for v in w2.iter_mut() {
                    *v *= 0.1;
                }
            }
            Net::Recurrent { hidden, .. } => {
                let (wx, rest) = params.split_at_mut(hidden * 2);
                uniform_init(rng, wx, 2);
                let (wh, rest) = rest.split_at_mut(hidden * hidden);
                uniform_init(rng, wh, hidden);
                let (_b, rest) = rest.split_at_mut(hidden);
                let (v, _c) = rest.split_at_mut(hidden);
                uniform_init(rng, v, hidden);
                for x in v.iter_mut() {
                    *x *= 0.1;
                }
            }
        }
        params
    }

    /// Forward pass. `drop` carries the RNG and rate when dropout is active.
    pub fn forward(
        &self,
        params: &[f64],
        x: &[f64],
        mut drop: Option<(&mut Rng, f64)>,
        out: &mut [f64],
        cache: &mut Cache,
    ) {
        match *self {
            Net::LinearAr { p, lags } => {
                sample_mask(&mut cache.mask, p * lags, &mut drop);
                for od in 0..p {
                    let row = &params[od * (lags + 1)..(od + 1) * (lags + 1)];
                    let mut acc = row[lags];
                    for l in 0..lags {
                        acc += row[l] * cache.mask[l * p + od] * x[l * p + od];
                    }
                    out[od] = acc;
                }
            }
            Net::Mlp { p, lags, hidden } => {
                let n_in = p * lags;
                let w1 = &params[..hidden * n_in];
                let b1 = &params[hidden * n_in..hidden * n_in + hidden];
                let w2 = &params[hidden * n_in + hidden..hidden * n_in + hidden + p * hidden];
                let b2 = &params[hidden * n_in + hidden + p * hidden..];
                cache.hidden.clear();
                for j in 0..hidden {
                    let row = &w1[j * n_in..(j + 1) * n_in];
                    let a: f64 = row.iter().zip(x).map(|(w, u)| w * u).sum::<f64>() + b1[j];
                    cache.hidden.push(math::tanh(a));
                }
                sample_mask(&mut cache.mask, hidden, &mut drop);
                let last = &x[(lags - 1) * p..lags * p];
                for od in 0..p {
                    let row = &w2[od * hidden..(od + 1) * hidden];
                    let mut acc = last[od] + b2[od];
                    for j in 0..hidden {
                        acc += row[j] * cache.hidden[j] * cache.mask[j];
                    }
                    out[od] = acc;
                }
            }
            Net::Recurrent { p, lags, hidden } => {
                let (wx, wh, b, v, c) = split_recurrent(params, hidden);
                cache.aux.clear();
                for l in 0..lags {
                    let m = x[l * p..(l + 1) * p].iter().sum::<f64>() / p as f64;
                    cache.aux.push(m);
                }
                // hidden states per OD: (lags + 1) × hidden, h_0 = 0
                let stride = (lags + 1) * hidden;
                cache.hidden.clear();
                cache.hidden.resize(p * stride, 0.0);
                sample_mask(&mut cache.mask, p * hidden, &mut drop);
                for od in 0..p {
                    let hs = &mut cache.hidden[od * stride..(od + 1) * stride];
                    for l in 0..lags {
                        let xin = x[l * p + od];
                        let xm = cache.aux[l];
                        let (prev, next) = hs.split_at_mut((l + 1) * hidden);
                        let prev = &prev[l * hidden..];
                        for j in 0..hidden {
                            let mut a = wx[j * 2] * xin + wx[j * 2 + 1] * xm + b[j];
                            let whr = &wh[j * hidden..(j + 1) * hidden];
                            for q in 0..hidden {
                                a += whr[q] * prev[q];
                            }
                            next[j] = math::tanh(a);
                        }
                    }
                    let h_last = &hs[lags * hidden..];
                    let mut acc = x[(lags - 1) * p + od] + c;
                    for j in 0..hidden {
                        acc += v[j] * cache.mask[od * hidden + j] * h_last[j];
                    }
                    out[od] = acc;
                }
            }
        }
    }

    /// Accumulate d(loss)/d(params) into `grad` given d(loss)/d(out).
    pub fn backward(&self, params: &[f64], x: &[f64], cache: &Cache, dout: &[f64], grad: &mut [f64]) {
        match *self {
            Net::LinearAr { p, lags } => {
                for od in 0..p {
                    let g = dout[od];
                    if g == 0.0 {
                        continue;
                    }
                    let row = &mut grad[od * (lags + 1)..(od + 1) * (lags + 1)];
                    for l in 0..lags {
                        row[l] += g * cache.mask[l * p + od] * x[l * p + od];
                    }
                    row[lags] += g;
                }
            }
            Net::Mlp { p, lags, hidden } => {
                let n_in = p * lags;
                let o_b1 = hidden * n_in;
                let o_w2 = o_b1 + hidden;
                let o_b2 = o_w2 + p * hidden;
                let w2 = &params[o_w2..o_b2];
                let mut dh = vec![0.0; hidden];
                for od in 0..p {
                    let g = dout[od];
                    if g == 0.0 {
                        continue;
                    }
                    grad[o_b2 + od] += g;
                    for j in 0..hidden {
                        let hd = cache.hidden[j] * cache.mask[j];
                        grad[o_w2 + od * hidden + j] += g * hd;
                        dh[j] += g * w2[od * hidden + j] * cache.mask[j];
                    }
                }
                for j in 0..hidden {
                    let h = cache.hidden[j];
                    let da = dh[j] * (1.0 - h * h);
                    if da == 0.0 {
                        continue;
                    }
                    grad[o_b1 + j] += da;
                    let row = &mut grad[j * n_in..(j + 1) * n_in];
                    for (gw, u) in row.iter_mut().zip(x) {
                        *gw += da * u;
                    }
                }
            }
            Net::Recurrent { p, lags, hidden } => {
                let (_wx, wh, _b, v, _c) = split_recurrent(params, hidden);
                let o_wh = hidden * 2;
                let o_b = o_wh + hidden * hidden;
                let o_v = o_b + hidden;
                let o_c = o_v + hidden;
                let stride = (lags + 1) * hidden;
                let mut dh = vec![0.0; hidden];
                let mut dprev = vec![0.0; hidden];
                for od in 0..p {
                    let g = dout[od];
                    if g == 0.0 {
                        continue;
                    }
                    let hs = &cache.hidden[od * stride..(od + 1) * stride];
                    grad[o_c] += g;
                    let h_last = &hs[lags * hidden..];
                    for j in 0..hidden {
                        let m = cache.mask[od * hidden + j];
                        grad[o_v + j] += g * m * h_last[j];
                        dh[j] = g * v[j] * m;
                    }
                    for l in (0..lags).rev() {
                        let h = &hs[(l + 1) * hidden..(l + 2) * hidden];
                        let prev = &hs[l * hidden..(l + 1) * hidden];
                        let xin = x[l * p + od];
                        let xm = cache.aux[l];
                        dprev.iter_mut().for_each(|d| *d = 0.0);
                        for j in 0..hidden {
                            let da = dh[j] * (1.0 - h[j] * h[j]);
                            if da == 0.0 {
                                continue;
                            }
                            grad[j * 2] += da * xin;
                            grad[j * 2 + 1] += da * xm;
                            grad[o_b + j] += da;
                            let whr = &wh[j * hidden..(j + 1) * hidden];
                            for q in 0..hidden {
                                grad[o_wh + j * hidden + q] += da * prev[q];
                                dprev[q] += whr[q] * da;
                            }
                        }
                        dh.copy_from_slice(&dprev);
                    }
                }
            }
        }
    }
}

fn split_recurrent(params: &[f64], hidden: usize) -> (&[f64], &[f64], &[f64], &[f64], f64) {
    let (wx, rest) = params.split_at(hidden * 2);
    let (wh, rest) = rest.split_at(hidden * hidden);
    let (b, rest) = rest.split_at(hidden);
    let (v, c) = rest.split_at(hidden);
    (wx, wh, b, v, c[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn check_grad(net: Net) {
        let mut r = rng::stream(3, "gradcheck", 0);
        let mut params = net.init(&mut r);
        for v in params.iter_mut() {
            *v += r.random_range(-0.3..0.3);
        }
        let x: Vec<f64> = (0..net.inputs()).map(|_| r.random_range(-1.5..1.5)).collect();
        let wts: Vec<f64> = (0..net.outputs()).map(|_| r.random_range(-1.0..1.0)).collect();
        let loss = |ps: &[f64]| {
            let mut out = vec![0.0; net.outputs()];
            net.forward(ps, &x, None, &mut out, &mut Cache::default());
            out.iter().zip(&wts).map(|(o, w)| o * w).sum::<f64>()
        };
        let mut out = vec![0.0; net.outputs()];
        let mut cache = Cache::default();
        net.forward(&params, &x, None, &mut out, &mut cache);
        let mut grad = vec![0.0; net.n_params()];
        net.backward(&params, &x, &cache, &wts, &mut grad);
        for k in 0..params.len() {
            let h = 1e-6;
            let mut pp = params.clone();
            pp[k] += h;
            let mut pm = params.clone();
            pm[k] -= h;
            let fd = (loss(&pp) - loss(&pm)) / (2.0 * h);
            let denom = fd.abs().max(grad[k].abs()).max(1e-6);
            assert!((fd - grad[k]).abs() / denom < 1e-4, "{net:?} param {k}: fd {fd} vs {}", grad[k]);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        check_grad(Net::LinearAr { p: 3, lags: 4 });
        check_grad(Net::Mlp { p: 3, lags: 2, hidden: 5 });
        check_grad(Net::Recurrent { p: 3, lags: 4, hidden: 3 });
    }

    #[test]
    fn zero_rate_mask_is_identity() {
        let net = Net::Mlp { p: 2, lags: 2, hidden: 4 };
        let mut r = rng::stream(1, "t", 0);
        let params = net.init(&mut r);
        let x = [0.1, 0.2, 0.3, 0.4];
        let (mut a, mut b) = ([0.0; 2], [0.0; 2]);
        net.forward(&params, &x, None, &mut a, &mut Cache::default());
        net.forward(&params, &x, Some((&mut r, 0.0)), &mut b, &mut Cache::default());
        assert_eq!(a, b);
    }
}
