//! Soft-gated mixture-of-experts condition encoder.
//!
//! `H̃_p = Σ_k g_{p,k}·f_k(H_p)` with `g_p = softmax(H_p·W_g + b_g)` and affine
//! experts `f_k(x) = x·W_k + b_k`.

use rand::Rng;

use crate::numerics::{fan_in_normal, softmax_rows, DenseMatrix, ParamSet, Tape, Var};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MoeConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub experts: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MoeEncoder {
    config: MoeConfig,
    params: ParamSet,
}

const GATE_W: usize = 0;
const GATE_B: usize = 1;

impl MoeEncoder {
    /// Zero gate (uniform routing) and fan-in scaled experts with zero bias.
    pub fn new(config: MoeConfig, rng: &mut impl Rng) -> Result<Self> {
        if config.experts == 0 || config.input_dim == 0 || config.hidden_dim == 0 {
            return Err(Error::contract("MoE needs at least one expert and positive dimensions"));
        }
        let mut params = ParamSet::new();
        params.push("moe.gate.w", DenseMatrix::zeros(config.input_dim, config.experts));
        params.push("moe.gate.b", DenseMatrix::zeros(1, config.experts));
        for k in 0..config.experts {
            params.push(format!("moe.expert{k}.w"), fan_in_normal(config.input_dim, config.hidden_dim, rng));
            params.push(format!("moe.expert{k}.b"), DenseMatrix::zeros(1, config.hidden_dim));
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> MoeConfig {
        self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn gate_weight_mut(&mut self) -> &mut DenseMatrix {
        self.params.get_mut(GATE_W)
    }

    pub fn gate_bias_mut(&mut self) -> &mut DenseMatrix {
        self.params.get_mut(GATE_B)
    }

    /// Weight and bias of expert `k`.
    pub fn expert_mut(&mut self, k: usize) -> (&mut DenseMatrix, &mut DenseMatrix) {
        let (head, tail) = self.params.values_mut().split_at_mut(3 + 2 * k);
        (&mut head[2 + 2 * k], &mut tail[0])
    }

    fn check_input(&self, h: &DenseMatrix) -> Result<()> {
        if h.cols() != self.config.input_dim {
            return Err(Error::contract(format!(
                "MoE expects {} input columns, got {}",
                self.config.input_dim,
                h.cols()
            )));
        }
        Ok(())
    }

    /// Gate probabilities, one row per input row.
    pub fn gate_probs(&self, h: &DenseMatrix) -> Result<DenseMatrix> {
        self.check_input(h)?;
        let mut logits = h.matmul(self.params.get(GATE_W));
        let b = self.params.get(GATE_B).row(0).to_vec();
        for i in 0..logits.rows() {
            logits.row_mut(i).iter_mut().zip(&b).for_each(|(x, c)| *x += c);
        }
        Ok(softmax_rows(&logits))
    }

    /// Fused embeddings for every input row.
    pub fn encode(&self, h: &DenseMatrix) -> Result<DenseMatrix> {
        self.check_input(h)?;
        let mut tape = Tape::new();
        let vars = self.params.bind_frozen(&mut tape);
        let x = tape.constant(h.clone());
        let out = self.forward(&mut tape, &vars, x);
        tape.check()?;
        Ok(tape.value(out).clone())
    }

    /// Records the encoder on `tape`; `vars` is this encoder's bound parameter set.
    pub fn forward(&self, tape: &mut Tape, vars: &[Var], h: Var) -> Var {
        let logits = tape.matmul(h, vars[GATE_W]);
        let logits = tape.add_row(logits, vars[GATE_B]);
        let gate = tape.softmax_rows(logits);
        let mut out = None;
        for k in 0..self.config.experts {
            let f = tape.matmul(h, vars[2 + 2 * k]);
            let f = tape.add_row(f, vars[3 + 2 * k]);
            let g = tape.slice_cols(gate, k, 1);
            let term = tape.mul_col(f, g);
            out = Some(match out {
                None => term,
                Some(acc) => tape.add(acc, term),
            });
        }
        out.expect("at least one expert")
    }
}
