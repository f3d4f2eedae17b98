use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::desknet::DeskNet;
use crate::error::{Error, Result};
use crate::nn::{Sequential, Tensor};
use crate::rng::SimRng;

/// Cut points splitting an `L`-block network into blocks `1..=cut_a`,
/// `cut_a+1..=cut_b` and `cut_b+1..=L` (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitPlan {
    pub cut_a: usize,
    pub cut_b: usize,
}

impl SplitPlan {
    pub fn new(cut_a: usize, cut_b: usize) -> Self {
        SplitPlan { cut_a, cut_b }
    }

    pub fn validate(&self, blocks: usize) -> Result<()> {
        if 0 < self.cut_a && self.cut_a < self.cut_b && self.cut_b < blocks {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "split ({}, {}) must satisfy 0 < a < b < {blocks}",
                self.cut_a, self.cut_b
            )))
        }
    }
}

/// A contiguous run of blocks hosted on one UAV.
#[derive(Debug, Clone)]
pub struct SubNet {
    pub blocks: Vec<Sequential>,
    /// 1-based index of the first block in the full network.
    pub first_block: usize,
}

impl SubNet {
    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for b in &self.blocks {
            h = b.infer(&h)?;
        }
        Ok(h)
    }

    pub fn block_range(&self) -> std::ops::RangeInclusive<usize> {
        self.first_block..=self.first_block + self.blocks.len() - 1
    }
}

#[derive(Debug, Clone)]
pub struct SplitModel {
    pub plan: SplitPlan,
    pub input: SubNet,
    pub middle: SubNet,
    pub output: SubNet,
}

pub fn split_model(model: &DeskNet, plan: SplitPlan) -> Result<SplitModel> {
    plan.validate(model.block_count())?;
    let part = |from: usize, to: usize| SubNet {
        blocks: model.blocks[from..to].to_vec(),
        first_block: from + 1,
    };
    Ok(SplitModel {
        plan,
        input: part(0, plan.cut_a),
        middle: part(plan.cut_a, plan.cut_b),
        output: part(plan.cut_b, model.block_count()),
    })
}

/// Unreliable wireless hop. Loss draws are i.i.d. per packet and lost
/// packets are never retransmitted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossyLink {
    pub p: f64,
    pub elements_per_packet: usize,
    pub seed: u64,
    /// Scale surviving elements by `1 / (1 - p)`.
    pub rescale: bool,
}

impl LossyLink {
    pub fn new(p: f64, seed: u64) -> Self {
        LossyLink {
            p,
            elements_per_packet: 1,
            seed,
            rescale: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) || self.elements_per_packet == 0 {
            return Err(Error::Config(format!(
                "link needs p in [0, 1] and packets of ≥ 1 element, got p={} size={}",
                self.p, self.elements_per_packet
            )));
        }
        Ok(())
    }
}

/// Sends each sample's flattened activation as packets of
/// `elements_per_packet`; every packet is lost with probability `p` and its
/// elements arrive as zeros. One uniform draw per packet, in order.
pub fn transmit_with(activation: &Tensor, link: &LossyLink, rng: &mut impl Rng) -> Tensor {
    let mut out = activation.clone();
    if activation.is_empty() {
        return out;
    }
    let per_sample = activation.len() / activation.dim(0);
    let keep_scale = if link.rescale && link.p < 1.0 {
        1.0 / (1.0 - link.p)
    } else {
        1.0
    };
    for sample in out.data_mut().chunks_mut(per_sample) {
        for packet in sample.chunks_mut(link.elements_per_packet.max(1)) {
            let lost = rng.random::<f64>() < link.p;
            for v in packet.iter_mut() {
                *v = if lost { 0.0 } else { *v * keep_scale };
            }
        }
    }
    out
}

/// [`transmit_with`] driven by the link's own seed.
pub fn transmit(activation: &Tensor, link: &LossyLink) -> Tensor {
    transmit_with(activation, link, &mut SimRng::seed_from_u64(link.seed))
}

/// Logits after the full relay chain.
pub fn distributed_logits(
    model: &SplitModel,
    links: [&LossyLink; 2],
    input: &Tensor,
) -> Result<Tensor> {
    let a = model.input.infer(input)?;
    relay_from_input(model, links, &a)
}

/// The chain after the input sub-network, for callers that reuse its
/// output across many link realisations.
pub fn relay_from_input(
    model: &SplitModel,
    links: [&LossyLink; 2],
    input_out: &Tensor,
) -> Result<Tensor> {
    let b = model.middle.infer(&transmit(input_out, links[0]))?;
    model.output.infer(&transmit(&b, links[1]))
}

pub fn distributed_infer(
    model: &SplitModel,
    links: [&LossyLink; 2],
    input: &Tensor,
) -> Result<Vec<usize>> {
    Ok(distributed_logits(model, links, input)?.argmax_rows())
}
