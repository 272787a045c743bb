//! Builders for random attention-layer parameter sets, shared by the
//! attention, network and acceptance test suites.

use rand_chacha::ChaCha8Rng;
use rganet_attention::{bias_table_len, AdaVars, AttentionVars, DhaVars, FfnVars, LnVars};
use rganet_tensor::{Tape, Tensor4, Var};
use crate as tk;

pub struct AttnTensors {
    pub tensors: Vec<Tensor4<f64>>, // wq,bq,wk,bk,wv,bv,wo,bo,table
    pub heads: usize,
    pub head_dim: usize,
    pub grid: (usize, usize),
}

impl AttnTensors {
    pub fn random(rng: &mut ChaCha8Rng, c: usize, heads: usize, grid: (usize, usize)) -> Self {
        let l = bias_table_len(grid.0, grid.1);
        let s = 0.4;
        let tensors = vec![
            tk::rand_tensor(rng, (1, 1, c, c), -s, s),
            tk::rand_tensor(rng, (1, 1, 1, c), -s, s),
            tk::rand_tensor(rng, (1, 1, c, c), -s, s),
            tk::rand_tensor(rng, (1, 1, 1, c), -s, s),
            tk::rand_tensor(rng, (1, 1, c, c), -s, s),
            tk::rand_tensor(rng, (1, 1, 1, c), -s, s),
            tk::rand_tensor(rng, (1, 1, c, c), -s, s),
            tk::rand_tensor(rng, (1, 1, 1, c), -s, s),
            tk::rand_tensor(rng, (1, 1, l, heads), -s, s),
        ];
        AttnTensors {
            tensors,
            heads,
            head_dim: c / heads,
            grid,
        }
    }

    pub fn zero_bias_table(mut self) -> Self {
        let l = self.tensors[8].dims();
        self.tensors[8] = Tensor4::zeros(l.0, l.1, l.2, l.3);
        self
    }

    /// Zeroes the value and output projections so attention contributes 0.
    pub fn zero_value_path(mut self) -> Self {
        for i in [4, 5, 6, 7] {
            let d = self.tensors[i].dims();
            self.tensors[i] = Tensor4::zeros(d.0, d.1, d.2, d.3);
        }
        self
    }

    pub fn leaf(&self, tape: &mut Tape<f64>) -> AttentionVars {
        let vars: Vec<Var> = self.tensors.iter().map(|t| tape.leaf(t.clone())).collect();
        self.vars(&vars)
    }

    pub fn vars(&self, v: &[Var]) -> AttentionVars {
        AttentionVars {
            wq: v[0],
            bq: v[1],
            wk: v[2],
            bk: v[3],
            wv: v[4],
            bv: v[5],
            wo: v[6],
            bo: v[7],
            bias_table: v[8],
            heads: self.heads,
            head_dim: self.head_dim,
            grid: self.grid,
        }
    }
}

pub struct DhaTensors {
    pub window: (usize, usize),
    pub shift: AttnTensors,
    pub local: AttnTensors,
    pub extra: Vec<Tensor4<f64>>, // alpha_raw, w_re, w_im, b_re, b_im
}

impl DhaTensors {
    pub fn random(rng: &mut ChaCha8Rng, c: usize, heads: usize, window: (usize, usize)) -> Self {
        let s = 0.4;
        DhaTensors {
            window,
            shift: AttnTensors::random(rng, c, heads, window),
            local: AttnTensors::random(rng, c, heads, window),
            extra: vec![
                Tensor4::scalar(0.0),
                tk::rand_tensor(rng, (1, 1, c, c), -s, s),
                tk::rand_tensor(rng, (1, 1, c, c), -s, s),
                tk::rand_tensor(rng, (1, 1, 1, c), -s, s),
                tk::rand_tensor(rng, (1, 1, 1, c), -s, s),
            ],
        }
    }

    pub fn with_alpha(mut self, alpha_raw: f64) -> Self {
        self.extra[0] = Tensor4::scalar(alpha_raw);
        self
    }

    /// All tensors in gradcheck input order.
    pub fn flatten(&self) -> Vec<Tensor4<f64>> {
        let mut out = self.extra.clone();
        out.extend(self.shift.tensors.iter().cloned());
        out.extend(self.local.tensors.iter().cloned());
        out
    }

    /// Rebuilds the var struct from leaves laid out by [`Self::flatten`].
    pub fn vars(&self, v: &[Var]) -> DhaVars {
        DhaVars {
            window: self.window,
            alpha_raw: v[0],
            spec_w_re: v[1],
            spec_w_im: v[2],
            spec_b_re: v[3],
            spec_b_im: v[4],
            shift: self.shift.vars(&v[5..14]),
            local: self.local.vars(&v[14..23]),
        }
    }

    pub fn leaf(&self, tape: &mut Tape<f64>) -> DhaVars {
        let vars: Vec<Var> = self
            .flatten()
            .into_iter()
            .map(|t| tape.leaf(t))
            .collect();
        self.vars(&vars)
    }
}

pub struct AdaTensors {
    pub block_size: (usize, usize),
    pub grid_size: (usize, usize),
    pub block: AttnTensors,
    pub grid: AttnTensors,
    pub lns: Vec<Tensor4<f64>>, // 3 x (gamma, beta)
    pub ffn: Vec<Tensor4<f64>>, // w_expand,b_expand,dw,b_dw,w_project,b_project
}

impl AdaTensors {
    pub fn random(
        rng: &mut ChaCha8Rng,
        c: usize,
        heads: usize,
        block_size: (usize, usize),
        grid_size: (usize, usize),
        ratio: usize,
    ) -> Self {
        let s = 0.4;
        let e = 2 * ratio * c;
        let mut lns = Vec::new();
        for _ in 0..3 {
            lns.push(tk::rand_tensor(rng, (1, 1, 1, c), 0.5, 1.5));
            lns.push(tk::rand_tensor(rng, (1, 1, 1, c), -0.3, 0.3));
        }
        AdaTensors {
            block_size,
            grid_size,
            block: AttnTensors::random(rng, c, heads, block_size),
            grid: AttnTensors::random(rng, c, heads, grid_size),
            lns,
            ffn: vec![
                tk::rand_tensor(rng, (e, c, 1, 1), -s, s),
                tk::rand_tensor(rng, (1, 1, 1, e), -s, s),
                tk::rand_tensor(rng, (e, 1, 3, 3), -s, s),
                tk::rand_tensor(rng, (1, 1, 1, e), -s, s),
                tk::rand_tensor(rng, (c, ratio * c, 1, 1), -s, s),
                tk::rand_tensor(rng, (1, 1, 1, c), -s, s),
            ],
        }
    }

    /// Zeroes value/output projections and FFN weights: ADA becomes identity.
    pub fn zeroed_residual_paths(mut self) -> Self {
        self.block = self.block.zero_value_path();
        self.grid = self.grid.zero_value_path();
        for t in self.ffn.iter_mut() {
            let d = t.dims();
            *t = Tensor4::zeros(d.0, d.1, d.2, d.3);
        }
        self
    }

    pub fn flatten(&self) -> Vec<Tensor4<f64>> {
        let mut out = self.lns.clone();
        out.extend(self.block.tensors.iter().cloned());
        out.extend(self.grid.tensors.iter().cloned());
        out.extend(self.ffn.iter().cloned());
        out
    }

    pub fn vars(&self, v: &[Var]) -> AdaVars {
        AdaVars {
            block_size: self.block_size,
            grid_size: self.grid_size,
            ln_block: LnVars {
                gamma: v[0],
                beta: v[1],
            },
            ln_grid: LnVars {
                gamma: v[2],
                beta: v[3],
            },
            ln_ffn: LnVars {
                gamma: v[4],
                beta: v[5],
            },
            block: self.block.vars(&v[6..15]),
            grid: self.grid.vars(&v[15..24]),
            ffn: FfnVars {
                w_expand: v[24],
                b_expand: v[25],
                w_depthwise: v[26],
                b_depthwise: v[27],
                w_project: v[28],
                b_project: v[29],
            },
        }
    }

    pub fn leaf(&self, tape: &mut Tape<f64>) -> AdaVars {
        let vars: Vec<Var> = self
            .flatten()
            .into_iter()
            .map(|t| tape.leaf(t))
            .collect();
        self.vars(&vars)
    }
}
