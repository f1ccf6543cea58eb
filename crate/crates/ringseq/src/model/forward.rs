//! Forward passes: encoding, teacher-forced and autoregressive decoding,
//! and the pairwise connection-score heads.

use crate::model::{Model, StagedModel};
use crate::tensor::{Tape, TensorId};
use crate::tokenizer::TokenSequence;
use crate::{Error, Result};

const LN_EPS: f64 = 1e-5;
/// Additive attention-mask value. exp(x) underflows to exactly 0.0 well
/// above this magnitude, so masked positions contribute nothing, bit-exactly.
const MASK_OFF: f64 = -1e9;

/// Teacher-forced decoder outputs: one row per predicted position.
#[derive(Debug, Clone, Copy)]
pub struct DecoderOutput {
    /// (logit_len, vocab_size) next-token logits.
    pub logits: TensorId,
    /// (logit_len, embed_dim) features after the final decoder
    /// normalization, before the vocabulary projection.
    pub features: TensorId,
}

/// Connection scores from the two pairwise heads.
#[derive(Debug, Clone, Copy)]
pub struct MatchingScores {
    /// Clockwise-successor scores.
    pub s_clock: TensorId,
    /// Counterclockwise-successor scores.
    pub s_count: TensorId,
    /// `s_clock + transpose(s_count)`.
    pub s: TensorId,
}

/// Result of greedy autoregressive decoding.
pub struct GeneratedSequence {
    /// Re-framed `[BOS, pairs.., EOS, PAD..]` sequence of full length.
    pub sequence: TokenSequence,
    /// (n_vertex_slots, embed_dim) per-slot features from the feature pass.
    pub features: TensorId,
    /// Generation hit the length cap without emitting EOS.
    pub truncated: bool,
    /// Special tokens emitted mid-stream and discarded.
    pub stray_specials: usize,
    /// A trailing unpaired coordinate token was discarded.
    pub dangling_coordinates: usize,
}

impl Model {
    fn linear(&self, tape: &mut Tape, x: TensorId, w: TensorId, b: TensorId) -> Result<TensorId> {
        let y = tape.matmul(x, w)?;
        tape.add(y, b)
    }

    fn layer_norm_named(
        &self,
        tape: &mut Tape,
        staged: &StagedModel,
        prefix: &str,
        x: TensorId,
    ) -> Result<TensorId> {
        let g = self.p(staged, &format!("{prefix}.g"));
        let b = self.p(staged, &format!("{prefix}.b"));
        tape.layer_norm(x, g, b, LN_EPS)
    }

    /// Multi-head attention of `q_in` over `kv_in`, with an optional
    /// additive mask of shape (rows(q_in), rows(kv_in)).
    fn attention(
        &self,
        tape: &mut Tape,
        staged: &StagedModel,
        prefix: &str,
        q_in: TensorId,
        kv_in: TensorId,
        mask: Option<TensorId>,
    ) -> Result<TensorId> {
        let d = self.config().embed_dim;
        let heads = self.config().heads;
        let dh = self.config().head_dim();
        let tq = tape.shape(q_in)[0];

        let mut parts = [TensorId(0); 3];
        for (slot, (wn, bn, x)) in [("wq", "bq", q_in), ("wk", "bk", kv_in), ("wv", "bv", kv_in)]
            .into_iter()
            .enumerate()
        {
            let proj = self.linear(
                tape,
                x,
                self.p(staged, &format!("{prefix}.{wn}")),
                self.p(staged, &format!("{prefix}.{bn}")),
            )?;
            let t = tape.shape(proj)[0];
            let split = tape.reshape(proj, &[t, heads, dh])?;
            parts[slot] = tape.permute(split, &[1, 0, 2])?;
        }
        let [q, k, v] = parts;

        let kt = tape.permute(k, &[0, 2, 1])?;
        let mut scores = tape.matmul(q, kt)?;
        scores = tape.scale(scores, 1.0 / (dh as f64).sqrt())?;
        if let Some(m) = mask {
            scores = tape.add(scores, m)?;
        }
        let probs = tape.softmax(scores)?;
        let ctx = tape.matmul(probs, v)?;
        let ctx = tape.permute(ctx, &[1, 0, 2])?;
        let ctx = tape.reshape(ctx, &[tq, d])?;
        self.linear(
            tape,
            ctx,
            self.p(staged, &format!("{prefix}.wo")),
            self.p(staged, &format!("{prefix}.bo")),
        )
    }

    fn mlp(
        &self,
        tape: &mut Tape,
        staged: &StagedModel,
        prefix: &str,
        x: TensorId,
    ) -> Result<TensorId> {
        let h = self.linear(
            tape,
            x,
            self.p(staged, &format!("{prefix}.w1")),
            self.p(staged, &format!("{prefix}.b1")),
        )?;
        let h = tape.gelu(h)?;
        self.linear(
            tape,
            h,
            self.p(staged, &format!("{prefix}.w2")),
            self.p(staged, &format!("{prefix}.b2")),
        )
    }

    /// Encodes a channels-first RGB image (values in [0,1]) into the
    /// latent patch grid of shape (n_patches, embed_dim).
    pub fn encode(
        &self,
        tape: &mut Tape,
        staged: &StagedModel,
        image: &[f64],
    ) -> Result<TensorId> {
        let s = self.config().image_size;
        let p = self.config().patch_size;
        if image.len() != 3 * s * s {
            return Err(Error::invalid(
                "encode",
                format!("expected {} image values, got {}", 3 * s * s, image.len()),
            ));
        }
        if image.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { context: "input image".into() });
        }

        let side = s / p;
        let mut patches = Vec::with_capacity(self.config().n_patches() * self.config().patch_dim());
        for py in 0..side {
            for px in 0..side {
                for c in 0..3 {
                    for dy in 0..p {
                        let y = py * p + dy;
                        let row = &image[(c * s + y) * s + px * p..];
                        patches.extend_from_slice(&row[..p]);
                    }
                }
            }
        }
        let patches = tape.constant(patches, &[self.config().n_patches(), self.config().patch_dim()])?;

        let w = self.p(staged, "patch_embed.w");
        let b = self.p(staged, "patch_embed.b");
        let mut x = self.linear(tape, patches, w, b)?;
        x = tape.add(x, self.p(staged, "enc_pos"))?;
        for i in 0..self.config().encoder_layers {
            let normed = self.layer_norm_named(tape, staged, &format!("enc{i}.ln1"), x)?;
            let att = self.attention(tape, staged, &format!("enc{i}.attn"), normed, normed, None)?;
            x = tape.add(x, att)?;
            let normed = self.layer_norm_named(tape, staged, &format!("enc{i}.ln2"), x)?;
            let ff = self.mlp(tape, staged, &format!("enc{i}.mlp"), normed)?;
            x = tape.add(x, ff)?;
        }
        self.layer_norm_named(tape, staged, "enc_final", x)
    }

    /// Runs the decoder stack over a token prefix. Returns features (after
    /// the final normalization) and vocabulary logits, one row per input.
    fn decode_prefix(
        &self,
        tape: &mut Tape,
        staged: &StagedModel,
        z: TensorId,
        inputs: &[usize],
    ) -> Result<DecoderOutput> {
        let t = inputs.len();
        let emb = tape.gather_rows(self.p(staged, "tok_embed"), inputs)?;
        let pos_table = self.p(staged, "dec_pos");
        let pos = if t == self.config().logit_len() {
            pos_table
        } else {
            tape.slice(pos_table, 0, 0, t)?
        };
        let mut x = tape.add(emb, pos)?;

        let mut mask_data = vec![0.0; t * t];
        for i in 0..t {
            for j in i + 1..t {
                mask_data[i * t + j] = MASK_OFF;
            }
        }
        let mask = tape.constant(mask_data, &[t, t])?;

        for i in 0..self.config().decoder_layers {
            let normed = self.layer_norm_named(tape, staged, &format!("dec{i}.ln1"), x)?;
            let att =
                self.attention(tape, staged, &format!("dec{i}.self"), normed, normed, Some(mask))?;
            x = tape.add(x, att)?;
            let normed = self.layer_norm_named(tape, staged, &format!("dec{i}.ln2"), x)?;
            let att = self.attention(tape, staged, &format!("dec{i}.cross"), normed, z, None)?;
            x = tape.add(x, att)?;
            let normed = self.layer_norm_named(tape, staged, &format!("dec{i}.ln3"), x)?;
            let ff = self.mlp(tape, staged, &format!("dec{i}.mlp"), normed)?;
            x = tape.add(x, ff)?;
        }
        let features = self.layer_norm_named(tape, staged, "dec_final", x)?;
        let logits = self.linear(
            tape,
            features,
            self.p(staged, "vocab_proj.w"),
            self.p(staged, "vocab_proj.b"),
        )?;
        Ok(DecoderOutput { logits, features })
    }

    /// Teacher-forced pass over a full framed sequence: position k sees
    /// tokens 0..=k and predicts token k+1.
    pub fn decode_teacher_forced(
        &self,
        tape: &mut Tape,
        staged: &StagedModel,
        z: TensorId,
        tokens: &[usize],
    ) -> Result<DecoderOutput> {
        if tokens.len() != self.config().seq_len() {
            return Err(Error::invalid(
                "decode_teacher_forced",
                format!(
                    "sequence length {} does not match config ({})",
                    tokens.len(),
                    self.config().seq_len()
                ),
            ));
        }
        self.decode_prefix(tape, staged, z, &tokens[..tokens.len() - 1])
    }

    /// Feature rows representing each vertex slot: the position whose
    /// input is the slot's x-token and whose prediction completes the
    /// vertex by emitting its y-token.
    pub fn vertex_feature_rows(&self) -> Vec<usize> {
        (1..=self.config().n_vertex_slots).map(|k| 2 * k - 1).collect()
    }

    /// Gathers the per-slot vertex features, shape (n_vertex_slots, d).
    pub fn vertex_features(&self, tape: &mut Tape, features: TensorId) -> Result<TensorId> {
        tape.gather_rows(features, &self.vertex_feature_rows())
    }

    /// Scores every ordered slot pair with two independent pointwise MLPs
    /// over concatenated features, and combines them into the connection
    /// score matrix `s = s_clock + transpose(s_count)`.
    pub fn matching_scores(
        &self,
        tape: &mut Tape,
        staged: &StagedModel,
        vertex_feats: TensorId,
    ) -> Result<MatchingScores> {
        let n = self.config().n_vertex_slots;
        let d = self.config().embed_dim;
        if tape.shape(vertex_feats) != [n, d] {
            return Err(Error::ShapeMismatch {
                op: "matching_scores",
                lhs: tape.shape(vertex_feats).to_vec(),
                rhs: vec![n, d],
            });
        }
        let mut idx_left = Vec::with_capacity(n * n);
        let mut idx_right = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                idx_left.push(i);
                idx_right.push(j);
            }
        }
        let left = tape.gather_rows(vertex_feats, &idx_left)?;
        let right = tape.gather_rows(vertex_feats, &idx_right)?;
        let pairs = tape.concat_last(left, right)?;

        let head = |tape: &mut Tape, name: &str| -> Result<TensorId> {
            let h = self.linear(
                tape,
                pairs,
                self.p(staged, &format!("{name}.w1")),
                self.p(staged, &format!("{name}.b1")),
            )?;
            let h = tape.gelu(h)?;
            let h = self.linear(
                tape,
                h,
                self.p(staged, &format!("{name}.w2")),
                self.p(staged, &format!("{name}.b2")),
            )?;
            let h = tape.gelu(h)?;
            let h = self.linear(
                tape,
                h,
                self.p(staged, &format!("{name}.w3")),
                self.p(staged, &format!("{name}.b3")),
            )?;
            tape.reshape(h, &[n, n])
        };
        let s_clock = head(tape, "clock")?;
        let s_count = head(tape, "count")?;
        let count_t = tape.permute(s_count, &[1, 0])?;
        let s = tape.add(s_clock, count_t)?;
        Ok(MatchingScores { s_clock, s_count, s })
    }

    /// Greedy decoding from BOS until EOS or the length cap. The emitted
    /// tokens are re-framed into a full-length sequence (stray specials
    /// and a dangling coordinate discarded, counted), and one further
    /// pass over the re-framed sequence yields per-slot vertex features.
    pub fn decode_autoregressive(
        &self,
        tape: &mut Tape,
        staged: &StagedModel,
        z: TensorId,
    ) -> Result<GeneratedSequence> {
        let vocab = self.config().vocabulary();
        let classes = vocab.vocab_size();
        let mut tokens = vec![vocab.bos_id()];
        let mut ended = false;
        for _ in 0..self.config().logit_len() {
            let out = self.decode_prefix(tape, staged, z, &tokens)?;
            let values = tape.value(out.logits);
            let last = &values[(tokens.len() - 1) * classes..tokens.len() * classes];
            let next = last
                .iter()
                .enumerate()
                .max_by(|(_, a), (_, b)| a.partial_cmp(b).expect("finite logits"))
                .map(|(i, _)| i)
                .expect("non-empty vocabulary");
            if next == vocab.eos_id() {
                ended = true;
                break;
            }
            tokens.push(next);
        }

        let mut stray_specials = 0;
        let mut coords: Vec<usize> = Vec::new();
        for &tok in &tokens[1..] {
            if vocab.is_coordinate(tok) {
                coords.push(tok);
            } else {
                stray_specials += 1;
            }
        }
        let mut dangling_coordinates = 0;
        if coords.len() % 2 == 1 {
            coords.pop();
            dangling_coordinates += 1;
        }
        let n_vertices = coords.len() / 2;

        let mut framed = Vec::with_capacity(self.config().seq_len());
        framed.push(vocab.bos_id());
        framed.extend_from_slice(&coords);
        framed.push(vocab.eos_id());
        framed.resize(self.config().seq_len(), vocab.pad_id());

        let out = self.decode_prefix(tape, staged, z, &framed[..framed.len() - 1])?;
        let features = self.vertex_features(tape, out.features)?;
        Ok(GeneratedSequence {
            sequence: TokenSequence::new(framed, n_vertices),
            features,
            truncated: !ended,
            stray_specials,
            dangling_coordinates,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::model::Model;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_pcg::Pcg64;

    fn test_image(config: &ModelConfig, seed: u64) -> Vec<f64> {
        let mut rng = Pcg64::seed_from_u64(seed);
        (0..3 * config.image_size * config.image_size)
            .map(|_| rng.random::<f64>())
            .collect()
    }

    fn framed_tokens(config: &ModelConfig, seed: u64) -> Vec<usize> {
        let vocab = config.vocabulary();
        let mut rng = Pcg64::seed_from_u64(seed);
        let n = config.n_vertex_slots / 2;
        let mut tokens = vec![vocab.bos_id()];
        for _ in 0..2 * n {
            tokens.push(rng.random_range(0..config.n_bins));
        }
        tokens.push(vocab.eos_id());
        tokens.resize(config.seq_len(), vocab.pad_id());
        tokens
    }

    #[test]
    fn output_shapes_follow_the_config() {
        let config = ModelConfig::tiny();
        let model = Model::init(config, 3).unwrap();
        let mut tape = Tape::new();
        let staged = model.stage(&mut tape, false);
        let z = model.encode(&mut tape, &staged, &test_image(&config, 1)).unwrap();
        assert_eq!(tape.shape(z), [64, 64]);

        let tokens = framed_tokens(&config, 2);
        let out = model.decode_teacher_forced(&mut tape, &staged, z, &tokens).unwrap();
        assert_eq!(tape.shape(out.logits), [33, 67]);
        assert_eq!(tape.shape(out.features), [33, 64]);

        let vf = model.vertex_features(&mut tape, out.features).unwrap();
        assert_eq!(tape.shape(vf), [16, 64]);
        let scores = model.matching_scores(&mut tape, &staged, vf).unwrap();
        assert_eq!(tape.shape(scores.s), [16, 16]);
    }

    #[test]
    fn encoding_is_deterministic() {
        let config = ModelConfig::tiny();
        let model = Model::init(config, 3).unwrap();
        let image = test_image(&config, 5);
        let run = || {
            let mut tape = Tape::new();
            let staged = model.stage(&mut tape, false);
            let z = model.encode(&mut tape, &staged, &image).unwrap();
            tape.value(z).to_vec()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn causal_mask_is_bit_exact() {
        let config = ModelConfig::tiny();
        let model = Model::init(config, 11).unwrap();
        let image = test_image(&config, 7);
        let base = framed_tokens(&config, 8);
        let mut poked = base.clone();
        let k = 7;
        poked[k] = (poked[k] + 3) % config.n_bins;

        let logits = |tokens: &[usize]| {
            let mut tape = Tape::new();
            let staged = model.stage(&mut tape, false);
            let z = model.encode(&mut tape, &staged, &image).unwrap();
            let out = model.decode_teacher_forced(&mut tape, &staged, z, tokens).unwrap();
            tape.value(out.logits).to_vec()
        };
        let a = logits(&base);
        let b = logits(&poked);
        let vocab = config.vocab_size();
        assert_eq!(&a[..k * vocab], &b[..k * vocab], "positions before {k} must be untouched");
        assert_ne!(&a[k * vocab..], &b[k * vocab..], "later positions should react");
    }

    #[test]
    fn score_matrix_identity_holds_entrywise() {
        let config = ModelConfig::tiny();
        let model = Model::init(config, 13).unwrap();
        let mut tape = Tape::new();
        let staged = model.stage(&mut tape, false);
        let z = model.encode(&mut tape, &staged, &test_image(&config, 9)).unwrap();
        let out = model
            .decode_teacher_forced(&mut tape, &staged, z, &framed_tokens(&config, 10))
            .unwrap();
        let vf = model.vertex_features(&mut tape, out.features).unwrap();
        let scores = model.matching_scores(&mut tape, &staged, vf).unwrap();

        let n = config.n_vertex_slots;
        let s = tape.value(scores.s).to_vec();
        let clock = tape.value(scores.s_clock).to_vec();
        let count = tape.value(scores.s_count).to_vec();
        for i in 0..n {
            for j in 0..n {
                assert_eq!(
                    s[i * n + j],
                    clock[i * n + j] + count[j * n + i],
                    "mismatch at ({i},{j})"
                );
            }
        }
    }

    #[test]
    fn permuting_features_permutes_scores() {
        let config = ModelConfig::tiny();
        let model = Model::init(config, 17).unwrap();
        let n = config.n_vertex_slots;
        let d = config.embed_dim;
        let mut rng = Pcg64::seed_from_u64(21);
        let feats: Vec<f64> = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        // A fixed permutation: rotate rows by three.
        let perm: Vec<usize> = (0..n).map(|i| (i + 3) % n).collect();
        let mut permuted = vec![0.0; n * d];
        for (i, &src) in perm.iter().enumerate() {
            permuted[i * d..(i + 1) * d].copy_from_slice(&feats[src * d..(src + 1) * d]);
        }

        let score_of = |data: Vec<f64>| {
            let mut tape = Tape::new();
            let staged = model.stage(&mut tape, false);
            let f = tape.leaf(data, &[n, d], false).unwrap();
            let scores = model.matching_scores(&mut tape, &staged, f).unwrap();
            tape.value(scores.s).to_vec()
        };
        let s = score_of(feats);
        let sp = score_of(permuted);
        for i in 0..n {
            for j in 0..n {
                assert_eq!(sp[i * n + j], s[perm[i] * n + perm[j]]);
            }
        }
    }

    #[test]
    fn fresh_model_scores_near_uniform() {
        let config = ModelConfig::tiny();
        let model = Model::init(config, 23).unwrap();
        let mut tape = Tape::new();
        let staged = model.stage(&mut tape, false);
        let z = model.encode(&mut tape, &staged, &test_image(&config, 12)).unwrap();
        let tokens = framed_tokens(&config, 14);
        let out = model.decode_teacher_forced(&mut tape, &staged, z, &tokens).unwrap();
        let loss = tape.cross_entropy(out.logits, &tokens[1..]).unwrap();
        let value = tape.to_scalar(loss).unwrap();
        let uniform = (config.vocab_size() as f64).ln();
        assert!(
            (value - uniform).abs() < 0.1,
            "loss {value} should sit near ln(vocab) = {uniform}"
        );
    }

    #[test]
    fn greedy_decoding_is_deterministic_and_well_framed() {
        let config = ModelConfig::tiny();
        let model = Model::init(config, 29).unwrap();
        let image = test_image(&config, 15);
        let vocab = config.vocabulary();
        let run = || {
            let mut tape = Tape::new();
            let staged = model.stage(&mut tape, false);
            let z = model.encode(&mut tape, &staged, &image).unwrap();
            let gen = model.decode_autoregressive(&mut tape, &staged, z).unwrap();
            (
                gen.sequence.tokens().to_vec(),
                tape.shape(gen.features).to_vec(),
                gen.truncated,
            )
        };
        let (tokens, feat_shape, truncated) = run();
        assert_eq!(run().0, tokens);
        assert_eq!(tokens.len(), config.seq_len());
        assert_eq!(tokens[0], vocab.bos_id());
        assert_eq!(feat_shape, vec![16, 64]);
        assert_eq!(tokens.iter().filter(|&&t| t == vocab.eos_id()).count(), 1);
        // Everything after EOS is padding.
        let eos_at = tokens.iter().position(|&t| t == vocab.eos_id()).unwrap();
        assert!(tokens[eos_at + 1..].iter().all(|&t| t == vocab.pad_id()));
        let _ = truncated;
    }
}
