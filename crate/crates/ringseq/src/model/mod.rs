//! The sequence prediction model: a patch-embedding encoder, a causal
//! autoregressive decoder over vertex tokens, and two pairwise scoring
//! heads whose sum forms the connection score matrix.

mod forward;
mod loss;

pub use forward::{DecoderOutput, GeneratedSequence, MatchingScores};
pub use loss::{detection_loss, permutation_loss, total_loss, LossWeights};

use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};

use crate::tensor::{ParamStore, Tape, TensorId};
use crate::tokenizer::{QuantizationGrid, Vocabulary};
use crate::{Error, Result};

/// Architecture hyperparameters. All derived sizes (patch count, sequence
/// length, vocabulary) are pure functions of this struct.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub image_size: usize,
    pub patch_size: usize,
    pub embed_dim: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub heads: usize,
    /// Number of vertex slots (the permutation matrix is this size).
    pub n_vertex_slots: usize,
    /// Number of coordinate quantization bins per axis.
    pub n_bins: usize,
    pub mlp_ratio: usize,
}

impl ModelConfig {
    /// Desk-scale preset used by the synthetic-scene experiments.
    pub fn tiny() -> Self {
        Self {
            image_size: 64,
            patch_size: 8,
            embed_dim: 64,
            encoder_layers: 3,
            decoder_layers: 3,
            heads: 4,
            n_vertex_slots: 16,
            n_bins: 64,
            mlp_ratio: 4,
        }
    }

    /// Full-scale preset matching the published aerial-imagery setup.
    pub fn full_scale() -> Self {
        Self {
            image_size: 224,
            patch_size: 8,
            embed_dim: 256,
            encoder_layers: 12,
            decoder_layers: 6,
            heads: 8,
            n_vertex_slots: 192,
            n_bins: 224,
            mlp_ratio: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Config(format!("model config: {msg}")))
            }
        };
        check(self.image_size > 0 && self.patch_size > 0, "sizes must be positive")?;
        check(
            self.image_size % self.patch_size == 0,
            "image size must be divisible by patch size",
        )?;
        check(self.embed_dim > 0 && self.heads > 0, "dimensions must be positive")?;
        check(
            self.embed_dim % self.heads == 0,
            "embed dim must be divisible by head count",
        )?;
        check(
            self.encoder_layers > 0 && self.decoder_layers > 0,
            "need at least one layer in each stack",
        )?;
        check(self.n_vertex_slots > 0, "need at least one vertex slot")?;
        check(self.n_bins >= 2, "need at least two coordinate bins")?;
        check(self.mlp_ratio > 0, "mlp ratio must be positive")
    }

    pub fn n_patches(&self) -> usize {
        let side = self.image_size / self.patch_size;
        side * side
    }

    /// Flattened RGB patch length.
    pub fn patch_dim(&self) -> usize {
        3 * self.patch_size * self.patch_size
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.heads
    }

    pub fn vocabulary(&self) -> Vocabulary {
        Vocabulary::new(self.n_bins)
    }

    pub fn vocab_size(&self) -> usize {
        self.vocabulary().vocab_size()
    }

    /// Framed sequence length `2 * n_vertex_slots + 2`.
    pub fn seq_len(&self) -> usize {
        2 * self.n_vertex_slots + 2
    }

    /// Number of next-token predictions, one less than the sequence length.
    pub fn logit_len(&self) -> usize {
        self.seq_len() - 1
    }

    pub fn grid(&self) -> QuantizationGrid {
        QuantizationGrid::new(self.image_size, self.image_size, self.n_bins)
            .expect("validated config yields a valid grid")
    }
}

enum InitKind {
    Normal,
    Zeros,
    Ones,
}

/// Every parameter name, shape and initialization rule, in a fixed order.
fn parameter_specs(config: &ModelConfig) -> Vec<(String, Vec<usize>, InitKind)> {
    use InitKind::{Normal, Ones, Zeros};
    let d = config.embed_dim;
    let hidden = config.mlp_ratio * d;
    let mut specs: Vec<(String, Vec<usize>, InitKind)> = Vec::new();
    let mut push = |name: String, shape: Vec<usize>, kind: InitKind| {
        specs.push((name, shape, kind));
    };

    push("patch_embed.w".into(), vec![config.patch_dim(), d], Normal);
    push("patch_embed.b".into(), vec![d], Zeros);
    push("enc_pos".into(), vec![config.n_patches(), d], Normal);
    for i in 0..config.encoder_layers {
        let attn_prefixes = [(format!("enc{i}.ln1"), format!("enc{i}.attn"))];
        for (ln, attn) in attn_prefixes {
            push(format!("{ln}.g"), vec![d], Ones);
            push(format!("{ln}.b"), vec![d], Zeros);
            for part in ["wq", "wk", "wv", "wo"] {
                push(format!("{attn}.{part}"), vec![d, d], Normal);
            }
            for part in ["bq", "bk", "bv", "bo"] {
                push(format!("{attn}.{part}"), vec![d], Zeros);
            }
        }
        push(format!("enc{i}.ln2.g"), vec![d], Ones);
        push(format!("enc{i}.ln2.b"), vec![d], Zeros);
        push(format!("enc{i}.mlp.w1"), vec![d, hidden], Normal);
        push(format!("enc{i}.mlp.b1"), vec![hidden], Zeros);
        push(format!("enc{i}.mlp.w2"), vec![hidden, d], Normal);
        push(format!("enc{i}.mlp.b2"), vec![d], Zeros);
    }
    push("enc_final.g".into(), vec![d], Ones);
    push("enc_final.b".into(), vec![d], Zeros);

    push("tok_embed".into(), vec![config.vocab_size(), d], Normal);
    push("dec_pos".into(), vec![config.logit_len(), d], Normal);
    for i in 0..config.decoder_layers {
        let attn_prefixes = [
            (format!("dec{i}.ln1"), format!("dec{i}.self")),
            (format!("dec{i}.ln2"), format!("dec{i}.cross")),
        ];
        for (ln, attn) in attn_prefixes {
            push(format!("{ln}.g"), vec![d], Ones);
            push(format!("{ln}.b"), vec![d], Zeros);
            for part in ["wq", "wk", "wv", "wo"] {
                push(format!("{attn}.{part}"), vec![d, d], Normal);
            }
            for part in ["bq", "bk", "bv", "bo"] {
                push(format!("{attn}.{part}"), vec![d], Zeros);
            }
        }
        push(format!("dec{i}.ln3.g"), vec![d], Ones);
        push(format!("dec{i}.ln3.b"), vec![d], Zeros);
        push(format!("dec{i}.mlp.w1"), vec![d, hidden], Normal);
        push(format!("dec{i}.mlp.b1"), vec![hidden], Zeros);
        push(format!("dec{i}.mlp.w2"), vec![hidden, d], Normal);
        push(format!("dec{i}.mlp.b2"), vec![d], Zeros);
    }
    push("dec_final.g".into(), vec![d], Ones);
    push("dec_final.b".into(), vec![d], Zeros);
    push("vocab_proj.w".into(), vec![d, config.vocab_size()], Normal);
    push("vocab_proj.b".into(), vec![config.vocab_size()], Zeros);

    for head in ["clock", "count"] {
        push(format!("{head}.w1"), vec![2 * d, d], Normal);
        push(format!("{head}.b1"), vec![d], Zeros);
        push(format!("{head}.w2"), vec![d, d], Normal);
        push(format!("{head}.b2"), vec![d], Zeros);
        push(format!("{head}.w3"), vec![d, 1], Normal);
        push(format!("{head}.b3"), vec![1], Zeros);
    }
    specs
}

/// Model parameters plus the configuration that shapes them.
pub struct Model {
    config: ModelConfig,
    store: ParamStore,
}

/// Tape handles for every parameter, in store order.
pub struct StagedModel {
    ids: Vec<TensorId>,
}

impl Model {
    /// Fresh model with weights drawn from N(0, 0.02), zero biases and
    /// unit normalization gains, reproducible from the seed.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = Pcg64::seed_from_u64(seed);
        let normal = Normal::new(0.0, 0.02).expect("valid distribution");
        let mut store = ParamStore::new();
        for (name, shape, kind) in parameter_specs(&config) {
            let n: usize = shape.iter().product();
            let data = match kind {
                InitKind::Normal => (0..n).map(|_| normal.sample(&mut rng)).collect(),
                InitKind::Zeros => vec![0.0; n],
                InitKind::Ones => vec![1.0; n],
            };
            store.add(name, &shape, data)?;
        }
        Ok(Self { config, store })
    }

    /// Rebuilds a model around restored parameters, verifying that the
    /// store holds exactly the names and shapes the config calls for.
    pub fn from_parts(config: ModelConfig, store: ParamStore) -> Result<Self> {
        config.validate()?;
        let specs = parameter_specs(&config);
        if store.len() != specs.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameters, found {}",
                specs.len(),
                store.len()
            )));
        }
        for (idx, (name, shape, _)) in specs.iter().enumerate() {
            let id = store.id_of(name).ok_or_else(|| {
                Error::Checkpoint(format!("missing parameter `{name}`"))
            })?;
            if id.0 != idx || store.shape(id) != shape.as_slice() {
                return Err(Error::Checkpoint(format!(
                    "parameter `{name}` has unexpected position or shape"
                )));
            }
        }
        Ok(Self { config, store })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// Copies all parameters onto a tape. Pass `requires_grad = false` for
    /// inference to skip gradient bookkeeping.
    pub fn stage(&self, tape: &mut Tape, requires_grad: bool) -> StagedModel {
        StagedModel {
            ids: self.store.stage(tape, requires_grad),
        }
    }

    /// Gradients for every parameter after a backward pass, in store order
    /// (zeros where a parameter was unused).
    pub fn collect_grads(&self, tape: &Tape, staged: &StagedModel) -> Vec<Vec<f64>> {
        self.store.collect_grads(tape, &staged.ids)
    }

    fn p(&self, staged: &StagedModel, name: &str) -> TensorId {
        let id = self
            .store
            .id_of(name)
            .unwrap_or_else(|| panic!("unknown parameter `{name}`"));
        staged.ids[id.0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_sizes_follow_the_config() {
        let tiny = ModelConfig::tiny();
        assert_eq!(tiny.n_patches(), 64);
        assert_eq!(tiny.vocab_size(), 67);
        assert_eq!(tiny.seq_len(), 34);
        assert_eq!(tiny.logit_len(), 33);
        assert_eq!(tiny.head_dim(), 16);

        let full = ModelConfig::full_scale();
        assert_eq!(full.n_patches(), 784);
        assert_eq!(full.embed_dim, 256);
        assert_eq!(full.seq_len(), 2 * 192 + 2);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut bad = ModelConfig::tiny();
        bad.patch_size = 7;
        assert!(bad.validate().is_err());
        let mut bad = ModelConfig::tiny();
        bad.heads = 5;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn init_is_reproducible_and_matches_specs() {
        let a = Model::init(ModelConfig::tiny(), 7).unwrap();
        let b = Model::init(ModelConfig::tiny(), 7).unwrap();
        let c = Model::init(ModelConfig::tiny(), 8).unwrap();
        let flat = |m: &Model| -> Vec<f64> {
            m.store().iter().flat_map(|(_, _, d)| d.to_vec()).collect()
        };
        assert_eq!(flat(&a), flat(&b));
        assert_ne!(flat(&a), flat(&c));

        let gains = a.store().id_of("enc_final.g").unwrap();
        assert!(a.store().data(gains).iter().all(|&v| v == 1.0));
        let bias = a.store().id_of("dec0.self.bq").unwrap();
        assert!(a.store().data(bias).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn from_parts_rejects_mismatched_stores() {
        let model = Model::init(ModelConfig::tiny(), 1).unwrap();
        let mut other = ModelConfig::tiny();
        other.decoder_layers = 2;
        let store = {
            let m = Model::init(ModelConfig::tiny(), 1).unwrap();
            m.store
        };
        assert!(Model::from_parts(other, store).is_err());
        assert!(Model::from_parts(ModelConfig::tiny(), model.store).is_ok());
    }
}
