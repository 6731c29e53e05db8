//! Relation-index analysis: how much each attention head raises a
//! relation's tail token when attending to its head token, plus the
//! copying and prefix-matching scores used to identify plain induction
//! heads.

mod induction;
mod relation;

pub use induction::{copying_score, prefix_matching_score, prefix_matching_table, CopyingScore};
pub use relation::{
    attends_to_head, baseline_table, head_grouping, relation_index_table, relation_score,
    relation_score_record, reverse_table, tau_ratio_distribution, TokenProbRecord,
};

use crate::circuits::{build_circuits, CircuitMatrices};
use crate::error::{Error, Result};
use crate::model::ModelWeights;

pub const DEFAULT_TAU: f64 = 2.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttentionSource {
    /// Real attention captured from a full forward pass (layers compose).
    ForwardCapture,
    /// QK-circuit attention computed directly on input embeddings.
    Circuit,
}

#[derive(Debug, Clone, Copy)]
pub struct AnalysisConfig {
    /// Ratio threshold of the exclusive-attention gate.
    pub tau: f64,
    /// With the gate off, only the argmax condition is kept (the sweep
    /// setting for early checkpoints).
    pub require_tau_gate: bool,
    pub attention_source: AttentionSource,
    /// Softmax over the full vocabulary then extract prefix tokens,
    /// instead of a softmax restricted to the unique prefix tokens.
    pub fullvocab_softmax: bool,
    /// 0-indexed tail position used by the baseline table.
    pub baseline_pos: usize,
    /// Count undefined scores as zero instead of excluding them.
    pub undefined_as_zero: bool,
    /// RMS-normalize embeddings before applying circuits.
    pub normalize_embeddings: bool,
    /// Apply the 1/sqrt(d_head) scaling in circuit attention.
    pub qk_scale: bool,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            require_tau_gate: true,
            attention_source: AttentionSource::ForwardCapture,
            fullvocab_softmax: false,
            baseline_pos: 9,
            undefined_as_zero: false,
            normalize_embeddings: false,
            qk_scale: true,
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        if self.require_tau_gate && self.tau <= 1.0 {
            return Err(Error::Config(format!(
                "tau must exceed 1 when the gate is enabled, got {}",
                self.tau
            )));
        }
        Ok(())
    }
}

/// Layers x heads grid of averaged relation indexes with contribution
/// counts.
#[derive(Debug, Clone)]
pub struct RelationIndexTable {
    pub relation: String,
    pub reversed: bool,
    pub n_layers: usize,
    pub n_heads: usize,
    sums: Vec<f64>,
    counts: Vec<u64>,
}

impl RelationIndexTable {
    pub fn new(relation: String, reversed: bool, n_layers: usize, n_heads: usize) -> Self {
        Self {
            relation,
            reversed,
            n_layers,
            n_heads,
            sums: vec![0.0; n_layers * n_heads],
            counts: vec![0; n_layers * n_heads],
        }
    }

    pub fn push(&mut self, layer: usize, head: usize, score: f64) {
        self.sums[layer * self.n_heads + head] += score;
        self.counts[layer * self.n_heads + head] += 1;
    }

    pub fn merge(&mut self, other: &RelationIndexTable) {
        for (a, b) in self.sums.iter_mut().zip(&other.sums) {
            *a += b;
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn mean(&self, layer: usize, head: usize) -> Option<f64> {
        let i = layer * self.n_heads + head;
        (self.counts[i] > 0).then(|| self.sums[i] / self.counts[i] as f64)
    }

    pub fn count(&self, layer: usize, head: usize) -> u64 {
        self.counts[layer * self.n_heads + head]
    }

    pub fn total_count(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Layers x heads grid counting how often each head had the largest
/// per-triplet mean relation index.
#[derive(Debug, Clone)]
pub struct HeadOccurrenceTable {
    pub relation: String,
    pub reversed: bool,
    pub n_layers: usize,
    pub n_heads: usize,
    counts: Vec<u64>,
}

impl HeadOccurrenceTable {
    pub fn new(relation: String, reversed: bool, n_layers: usize, n_heads: usize) -> Self {
        Self {
            relation,
            reversed,
            n_layers,
            n_heads,
            counts: vec![0; n_layers * n_heads],
        }
    }

    pub fn increment(&mut self, layer: usize, head: usize) {
        self.counts[layer * self.n_heads + head] += 1;
    }

    pub fn count(&self, layer: usize, head: usize) -> u64 {
        self.counts[layer * self.n_heads + head]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Ratio histogram: 100 bins covering [0, 10) at width 0.1 plus an
/// overflow bin.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TauHistogram {
    pub bins: Vec<u64>,
    pub overflow: u64,
}

impl TauHistogram {
    pub const BIN_WIDTH: f64 = 0.1;
    pub const N_BINS: usize = 100;

    pub fn new() -> Self {
        Self {
            bins: vec![0; Self::N_BINS],
            overflow: 0,
        }
    }

    pub fn push(&mut self, ratio: f64) {
        if !ratio.is_finite() || ratio >= Self::N_BINS as f64 * Self::BIN_WIDTH {
            self.overflow += 1;
        } else {
            self.bins[(ratio / Self::BIN_WIDTH) as usize] += 1;
        }
    }

    pub fn merge(&mut self, other: &TauHistogram) {
        for (a, b) in self.bins.iter_mut().zip(&other.bins) {
            *a += b;
        }
        self.overflow += other.overflow;
    }

    pub fn total(&self) -> u64 {
        self.bins.iter().sum::<u64>() + self.overflow
    }

    /// Fraction of samples with ratio >= threshold (threshold is rounded
    /// up to a bin edge).
    pub fn fraction_above(&self, threshold: f64) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let start = (threshold / Self::BIN_WIDTH).ceil() as usize;
        let above: u64 = self.bins[start.min(Self::N_BINS)..].iter().sum::<u64>() + self.overflow;
        above as f64 / total as f64
    }
}

impl Default for TauHistogram {
    fn default() -> Self {
        Self::new()
    }
}

/// Per-checkpoint precompute shared by the relation metrics: each head's
/// OV circuit already multiplied into the unembedding (f64), plus the
/// circuit matrices for the circuit attention source.
pub(crate) struct HeadProjections {
    pub n_layers: usize,
    pub n_heads: usize,
    pub vocab: usize,
    /// per (layer*H + head): d x V, f64
    pub ovu: Vec<Vec<f64>>,
    pub circuits: Vec<CircuitMatrices>,
}

impl HeadProjections {
    pub fn build(weights: &ModelWeights) -> Result<Self> {
        let cfg = &weights.config;
        let d = cfg.d_model;
        let v = cfg.vocab_size;
        let mut ovu = Vec::with_capacity(cfg.n_layers * cfg.n_heads);
        let mut circuits = Vec::with_capacity(cfg.n_layers * cfg.n_heads);
        for l in 0..cfg.n_layers {
            for h in 0..cfg.n_heads {
                let c = build_circuits(weights, l, h)?;
                let mut m = vec![0.0f64; d * v];
                for i in 0..d {
                    let ov_row = c.w_ov.row(i);
                    for (p, &ovv) in ov_row.iter().enumerate() {
                        if ovv == 0.0 {
                            continue;
                        }
                        let u_row = weights.w_u.row(p);
                        let ovv = f64::from(ovv);
                        let out = &mut m[i * v..(i + 1) * v];
                        for (o, &u) in out.iter_mut().zip(u_row) {
                            *o += ovv * f64::from(u);
                        }
                    }
                }
                ovu.push(m);
                circuits.push(c);
            }
        }
        Ok(Self {
            n_layers: cfg.n_layers,
            n_heads: cfg.n_heads,
            vocab: v,
            ovu,
            circuits,
        })
    }

    pub fn ovu_of(&self, layer: usize, head: usize) -> &[f64] {
        &self.ovu[layer * self.n_heads + head]
    }

    pub fn circuit_of(&self, layer: usize, head: usize) -> &CircuitMatrices {
        &self.circuits[layer * self.n_heads + head]
    }
}
