#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "match/autodiff.hpp"
#include "match/checkpoint.hpp"
#include "match/corpus.hpp"
#include "match/rng.hpp"
#include "match/sphere_embed.hpp"

namespace match::encoder {

struct EncoderConfig {
  std::size_t layers = 3;
  std::size_t heads = 2;
  std::size_t cls_tokens = 8;
  std::size_t dim = 100;
  /// 0 means 4 * dim.
  std::size_t ffn_dim = 0;
  double dropout = 0.1;
  /// Total tokens per document, CLS included.
  std::size_t max_length = 256;
  /// Per metadata type; empty means all enabled. Disabled types never enter
  /// the input sequence.
  std::vector<bool> metadata_enabled;

  void validate() const;
  std::size_t ffn_width() const { return ffn_dim == 0 ? 4 * dim : ffn_dim; }
  std::size_t head_dim() const { return dim / heads; }
  /// Width of the document representation: cls_tokens * dim.
  std::size_t output_dim() const { return cls_tokens * dim; }
  bool metadata_type_enabled(std::size_t type) const {
    return metadata_enabled.empty() || (type < metadata_enabled.size() && metadata_enabled[type]);
  }

  void write(Checkpoint& checkpoint) const;
  static EncoderConfig read(const Checkpoint& checkpoint);
};

struct LayerParams {
  ad::Parameter query, key, value, output;  // dim x dim; head i owns column block i
  ad::Parameter ffn_in, ffn_in_bias, ffn_out, ffn_out_bias;
  ad::Parameter norm1_gain, norm1_bias, norm2_gain, norm2_bias;
};

/// Encoder weights plus the token embedding tables they read from.
struct EncoderParams {
  std::vector<LayerParams> layers;
  ad::Parameter cls;                  // cls_tokens x dim
  ad::Parameter position_projection;  // 2*dim x dim
  ad::Parameter words;                // |W| x dim
  std::vector<std::string> metadata_types;
  std::vector<ad::Parameter> metadata;  // per type, |V_m| x dim

  /// Token tables are copied from `space` when given (its dim must match),
  /// otherwise drawn as random unit vectors. Other weights use Glorot-normal
  /// initialization; CLS rows are random unit vectors.
  static EncoderParams initialize(const EncoderConfig& config, const Vocabulary& vocabulary,
                                  const sphere::EmbeddingSpace* space, Rng& rng);

  std::vector<ad::Parameter*> parameters();
  void set_embeddings_trainable(bool trainable);

  void write(Checkpoint& checkpoint) const;
  /// Throws LookupError for missing tensors and ShapeError for shapes that
  /// disagree with `config`.
  static EncoderParams read(const Checkpoint& checkpoint, const EncoderConfig& config);
};

enum class TokenRole { kCls, kMetadata, kWord };

struct ActivationSeq {
  ad::Var hidden;  // tokens x dim
  std::vector<TokenRole> roles;
};

/// Row p, column 2i holds sin(p / 10000^(2i/dim)); column 2i+1 the cosine.
ad::Tensor sinusoidal_positions(std::size_t length, std::size_t dim);

/// Sequence positions kept for a document after truncation: all CLS tokens,
/// then enabled metadata, then words, up to max_length. Throws
/// ValidationError when no metadata or word token survives.
struct InputLayout {
  std::vector<MetadataToken> metadata;
  std::vector<std::size_t> words;
};
InputLayout input_layout(const Document& document, const EncoderConfig& config);

/// H(0): token embeddings concatenated with positions (zero for CLS and
/// metadata) and projected back to dim. Dropout applies when `dropout_rng`
/// is non-null.
ActivationSeq build_input_sequence(ad::Tape& tape, const Document& document,
                                   EncoderParams& params, const EncoderConfig& config,
                                   Rng* dropout_rng = nullptr);

struct AttentionResult {
  ad::Var output;
  std::vector<ad::Tensor> weights;  // per head, queries x tokens
};

/// Scaled dot-product attention of `queries` over `tokens`, per head,
/// heads concatenated and mixed by the output projection.
AttentionResult multi_head_attention(const ad::Var& queries, const ad::Var& tokens,
                                     LayerParams& layer, const EncoderConfig& config);

/// Z = LN(H + MHA(H)), out = LN(Z + FFN(Z)).
ad::Var transformer_layer(const ad::Var& hidden, LayerParams& layer, const EncoderConfig& config,
                          Rng* dropout_rng = nullptr);

/// Final CLS states concatenated in index order: 1 x (cls_tokens * dim).
/// Evaluation mode when `dropout_rng` is null.
ad::Var encode_document(ad::Tape& tape, const Document& document, EncoderParams& params,
                        const EncoderConfig& config, Rng* dropout_rng = nullptr);

}  // namespace match::encoder
