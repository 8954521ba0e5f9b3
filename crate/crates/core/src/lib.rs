//! Position-reweighted visual token pruning.
//!
//! Attention from the last text token to the visual tokens of a
//! vision-language model is a common pruning criterion, but it carries a
//! content-agnostic recency bias: later visual tokens receive more attention
//! regardless of what they show. This crate estimates that bias from a
//! corpus of attention traces, fits it with an exponential in the token
//! index, divides it out of each trace and prunes by the corrected scores.
//!
//! * [`attention`]: last-token softmax attention, head averaging, traces.
//! * [`bias`]: corpus mean profile and the exponential bias fit.
//! * [`prune`]: FastV (raw attention) and PoRe (reweighted) selection.
//! * [`synth`]: synthetic corpora with planted saliency and planted bias.
//! * [`eval`]: recall, rank correlation and positional diagnostics.
//! * [`cost`]: prefill FLOPs under prune-at-layer-K schedules.
//! * [`io`]: line-delimited trace, ground-truth and decision files.
//! * [`cli`]: the `pore` command-line pipeline.
//!
//! ```
//! use pore::{fit_bias, mean_attention_profile, prune, BiasForm, PruneConfig, SynthSpec};
//!
//! let mut spec = SynthSpec::new(64, 200, 7);
//! spec.bias_b = 0.02;
//! let corpus: Vec<_> = pore::generate_corpus(&spec)?.collect();
//! let mean = mean_attention_profile(corpus.iter().map(|s| &s.trace))?;
//! let bias = fit_bias(&mean, BiasForm::Exp2)?;
//! assert!((bias.b() - 0.02).abs() < 0.002);
//!
//! let decision = prune(&corpus[0].trace, &PruneConfig::pore(0.75, bias)?)?;
//! assert_eq!(decision.retain_k(), 16);
//! # Ok::<(), pore::Error>(())
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` deliberately rejects NaN

pub mod attention;
pub mod bias;
pub mod cli;
pub mod cost;
mod error;
pub mod eval;
pub mod io;
pub mod prune;
pub mod rng;
pub mod synth;

pub use attention::{
    average_heads, last_token_attention, renormalize, AttentionTrace, QueryKeyBlock,
};
pub use bias::{
    fit_bias, load_bias, mean_attention_profile, save_bias, BiasForm, BiasProfile, MeanAccumulator,
    MeanProfile,
};
pub use cost::{flops_estimate, ratio_table, CostConfig, FlopsRow};
pub use error::{Error, Result};
pub use eval::{positional_slope, recall_at_k, spearman, EvalAccumulator, EvalReport};
pub use prune::{
    decision_overlap, prune, retained_count, reweight, Criterion, PruneConfig, PruneDecision,
    PruneMethod,
};
pub use synth::{generate_corpus, toy_attention_trace, SynthSample, SynthSpec};
