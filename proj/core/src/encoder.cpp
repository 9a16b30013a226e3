#include "match/encoder.hpp"

#include <cmath>
#include <sstream>

#include "match/errors.hpp"

namespace match::encoder {

using ad::Parameter;
using ad::Tensor;
using ad::Var;

void EncoderConfig::validate() const {
  if (layers < 1) throw ConfigError("encoder layers must be >= 1");
  if (heads < 1) throw ConfigError("attention heads must be >= 1");
  if (cls_tokens < 1) throw ConfigError("cls_tokens must be >= 1");
  if (dim < 1) throw ConfigError("model dim must be >= 1");
  if (dim % heads != 0) {
    throw ConfigError("model dim " + std::to_string(dim) + " is not divisible by heads " +
                      std::to_string(heads));
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (max_length <= cls_tokens) {
    throw ConfigError("max_length must exceed cls_tokens (" + std::to_string(cls_tokens) + ")");
  }
}

namespace {

std::string join_flags(const std::vector<bool>& flags) {
  if (flags.empty()) return "all";
  std::string s;
  for (bool f : flags) s += f ? '1' : '0';
  return s;
}

std::vector<bool> split_flags(const std::string& s) {
  if (s == "all") return {};
  std::vector<bool> flags;
  for (char c : s) {
    if (c != '0' && c != '1') throw ParseError("bad metadata mask '" + s + "'", 0);
    flags.push_back(c == '1');
  }
  return flags;
}

std::size_t to_size(const std::string& s) { return static_cast<std::size_t>(std::stoull(s)); }

}  // namespace

void EncoderConfig::write(Checkpoint& ck) const {
  ck.config["encoder.layers"] = std::to_string(layers);
  ck.config["encoder.heads"] = std::to_string(heads);
  ck.config["encoder.cls_tokens"] = std::to_string(cls_tokens);
  ck.config["encoder.dim"] = std::to_string(dim);
  ck.config["encoder.ffn_dim"] = std::to_string(ffn_width());
  std::ostringstream rate;
  rate.precision(17);
  rate << dropout;
  ck.config["encoder.dropout"] = rate.str();
  ck.config["encoder.max_length"] = std::to_string(max_length);
  ck.config["encoder.metadata_mask"] = join_flags(metadata_enabled);
}

EncoderConfig EncoderConfig::read(const Checkpoint& ck) {
  EncoderConfig c;
  c.layers = to_size(ck.setting("encoder.layers"));
  c.heads = to_size(ck.setting("encoder.heads"));
  c.cls_tokens = to_size(ck.setting("encoder.cls_tokens"));
  c.dim = to_size(ck.setting("encoder.dim"));
  c.ffn_dim = to_size(ck.setting("encoder.ffn_dim"));
  c.dropout = std::stod(ck.setting("encoder.dropout"));
  c.max_length = to_size(ck.setting("encoder.max_length"));
  c.metadata_enabled = split_flags(ck.setting("encoder.metadata_mask"));
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Parameters

namespace {

Tensor glorot(std::size_t rows, std::size_t cols, Rng& rng) {
  const double sd = std::sqrt(2.0 / static_cast<double>(rows + cols));
  Tensor t(rows, cols);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = sd * rng.normal();
  return t;
}

Tensor unit_rows(std::size_t rows, std::size_t dim, Rng& rng) {
  Tensor t(rows, dim);
  for (std::size_t r = 0; r < rows; ++r) {
    double n = 0.0;
    do {
      for (std::size_t c = 0; c < dim; ++c) t(r, c) = rng.normal();
      n = t.row(r).norm();
    } while (n == 0.0);
    t.row(r) /= n;
  }
  return t;
}

Tensor from_table(const sphere::EmbeddingTable& table, std::size_t expected_rows,
                  std::size_t dim, const std::string& what) {
  if (table.rows() != expected_rows || table.dim() != dim) {
    throw ShapeError("pre-trained " + what + " table is " + std::to_string(table.rows()) + "x" +
                     std::to_string(table.dim()) + ", expected " + std::to_string(expected_rows) +
                     "x" + std::to_string(dim));
  }
  Tensor t(expected_rows, dim);
  for (std::size_t r = 0; r < expected_rows; ++r) {
    auto row = table.row(r);
    for (std::size_t c = 0; c < dim; ++c) t(r, c) = row[c];
  }
  return t;
}

std::string layer_name(std::size_t l, const char* what) {
  return "layer" + std::to_string(l) + "." + what;
}

}  // namespace

EncoderParams EncoderParams::initialize(const EncoderConfig& config, const Vocabulary& vocabulary,
                                        const sphere::EmbeddingSpace* space, Rng& rng) {
  config.validate();
  const std::size_t d = config.dim;
  const std::size_t f = config.ffn_width();
  EncoderParams p;
  for (std::size_t l = 0; l < config.layers; ++l) {
    LayerParams layer;
    layer.query = Parameter(layer_name(l, "query"), glorot(d, d, rng));
    layer.key = Parameter(layer_name(l, "key"), glorot(d, d, rng));
    layer.value = Parameter(layer_name(l, "value"), glorot(d, d, rng));
    layer.output = Parameter(layer_name(l, "output"), glorot(d, d, rng));
    layer.ffn_in = Parameter(layer_name(l, "ffn_in"), glorot(d, f, rng));
    layer.ffn_in_bias = Parameter(layer_name(l, "ffn_in_bias"), Tensor::Zero(1, f));
    layer.ffn_out = Parameter(layer_name(l, "ffn_out"), glorot(f, d, rng));
    layer.ffn_out_bias = Parameter(layer_name(l, "ffn_out_bias"), Tensor::Zero(1, d));
    layer.norm1_gain = Parameter(layer_name(l, "norm1_gain"), Tensor::Ones(1, d));
    layer.norm1_bias = Parameter(layer_name(l, "norm1_bias"), Tensor::Zero(1, d));
    layer.norm2_gain = Parameter(layer_name(l, "norm2_gain"), Tensor::Ones(1, d));
    layer.norm2_bias = Parameter(layer_name(l, "norm2_bias"), Tensor::Zero(1, d));
    p.layers.push_back(std::move(layer));
  }
  p.cls = Parameter("cls", unit_rows(config.cls_tokens, d, rng));
  p.position_projection = Parameter("position_projection", glorot(2 * d, d, rng));
  p.metadata_types = vocabulary.metadata_types;
  if (space != nullptr) {
    if (space->dim != d) {
      throw ShapeError("pre-trained embeddings have dim " + std::to_string(space->dim) +
                       " but the encoder expects " + std::to_string(d));
    }
    if (space->metadata.size() != vocabulary.metadata.size()) {
      throw ShapeError("pre-trained embeddings cover " + std::to_string(space->metadata.size()) +
                       " metadata types, vocabulary has " +
                       std::to_string(vocabulary.metadata.size()));
    }
    p.words = Parameter("embed.words", from_table(space->words, vocabulary.words.size(), d, "word"));
    for (std::size_t m = 0; m < vocabulary.metadata.size(); ++m) {
      p.metadata.emplace_back("embed.meta." + vocabulary.metadata_types[m],
                              from_table(space->metadata[m], vocabulary.metadata[m].size(), d,
                                         vocabulary.metadata_types[m]));
    }
  } else {
    p.words = Parameter("embed.words", unit_rows(vocabulary.words.size(), d, rng));
    for (std::size_t m = 0; m < vocabulary.metadata.size(); ++m) {
      p.metadata.emplace_back("embed.meta." + vocabulary.metadata_types[m],
                              unit_rows(vocabulary.metadata[m].size(), d, rng));
    }
  }
  return p;
}

std::vector<Parameter*> EncoderParams::parameters() {
  std::vector<Parameter*> out;
  for (auto& l : layers) {
    for (Parameter* q : {&l.query, &l.key, &l.value, &l.output, &l.ffn_in, &l.ffn_in_bias,
                         &l.ffn_out, &l.ffn_out_bias, &l.norm1_gain, &l.norm1_bias,
                         &l.norm2_gain, &l.norm2_bias}) {
      out.push_back(q);
    }
  }
  out.push_back(&cls);
  out.push_back(&position_projection);
  out.push_back(&words);
  for (auto& m : metadata) out.push_back(&m);
  return out;
}

void EncoderParams::set_embeddings_trainable(bool trainable) {
  words.trainable = trainable;
  for (auto& m : metadata) m.trainable = trainable;
}

void EncoderParams::write(Checkpoint& ck) const {
  auto& self = const_cast<EncoderParams&>(*this);
  for (Parameter* p : self.parameters()) ck.tensors[p->name] = p->value;
  std::string types;
  for (const auto& t : metadata_types) types += (types.empty() ? "" : ",") + t;
  ck.config["encoder.metadata_types"] = types.empty() ? "-" : types;
}

EncoderParams EncoderParams::read(const Checkpoint& ck, const EncoderConfig& config) {
  config.validate();
  EncoderParams p;
  const auto& types = ck.setting("encoder.metadata_types");
  if (types != "-") {
    std::stringstream ss(types);
    std::string t;
    while (std::getline(ss, t, ',')) p.metadata_types.push_back(t);
  }
  auto take = [&](const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    const Tensor& t = ck.tensor(name);
    if ((rows >= 0 && t.rows() != rows) || t.cols() != cols) {
      throw ShapeError("checkpoint tensor '" + name + "' has shape " + ad::shape_string(t));
    }
    return Parameter(name, t);
  };
  const auto d = static_cast<Eigen::Index>(config.dim);
  const auto f = static_cast<Eigen::Index>(config.ffn_width());
  for (std::size_t l = 0; l < config.layers; ++l) {
    LayerParams layer;
    layer.query = take(layer_name(l, "query"), d, d);
    layer.key = take(layer_name(l, "key"), d, d);
    layer.value = take(layer_name(l, "value"), d, d);
    layer.output = take(layer_name(l, "output"), d, d);
    layer.ffn_in = take(layer_name(l, "ffn_in"), d, f);
    layer.ffn_in_bias = take(layer_name(l, "ffn_in_bias"), 1, f);
    layer.ffn_out = take(layer_name(l, "ffn_out"), f, d);
    layer.ffn_out_bias = take(layer_name(l, "ffn_out_bias"), 1, d);
    layer.norm1_gain = take(layer_name(l, "norm1_gain"), 1, d);
    layer.norm1_bias = take(layer_name(l, "norm1_bias"), 1, d);
    layer.norm2_gain = take(layer_name(l, "norm2_gain"), 1, d);
    layer.norm2_bias = take(layer_name(l, "norm2_bias"), 1, d);
    p.layers.push_back(std::move(layer));
  }
  p.cls = take("cls", static_cast<Eigen::Index>(config.cls_tokens), d);
  p.position_projection = take("position_projection", 2 * d, d);
  p.words = take("embed.words", -1, d);
  for (const auto& t : p.metadata_types) p.metadata.push_back(take("embed.meta." + t, -1, d));
  return p;
}

// ---------------------------------------------------------------------------
// Forward pass

Tensor sinusoidal_positions(std::size_t length, std::size_t dim) {
  Tensor out(length, dim);
  for (std::size_t p = 0; p < length; ++p) {
    for (std::size_t j = 0; j < dim; ++j) {
      const std::size_t pair = j - (j % 2);
      const double angle = static_cast<double>(p) /
                           std::pow(10000.0, static_cast<double>(pair) / static_cast<double>(dim));
      out(p, j) = j % 2 == 0 ? std::sin(angle) : std::cos(angle);
    }
  }
  return out;
}

InputLayout input_layout(const Document& document, const EncoderConfig& config) {
  InputLayout layout;
  std::size_t budget = config.max_length - config.cls_tokens;
  for (const auto& m : document.metadata) {
    if (budget == 0) break;
    if (!config.metadata_type_enabled(m.type)) continue;
    layout.metadata.push_back(m);
    --budget;
  }
  for (std::size_t w : document.words) {
    if (budget == 0) break;
    layout.words.push_back(w);
    --budget;
  }
  if (layout.metadata.empty() && layout.words.empty()) {
    throw ValidationError("document '" + document.id + "' has no tokens to encode");
  }
  return layout;
}

ActivationSeq build_input_sequence(ad::Tape& tape, const Document& document,
                                   EncoderParams& params, const EncoderConfig& config,
                                   Rng* dropout_rng) {
  const InputLayout layout = input_layout(document, config);
  const std::size_t d = config.dim;

  ActivationSeq seq;
  std::vector<Var> blocks;
  blocks.push_back(tape.leaf(params.cls));
  seq.roles.assign(config.cls_tokens, TokenRole::kCls);

  // Metadata rows, grouped into runs of the same type to keep one gather per run.
  std::size_t i = 0;
  while (i < layout.metadata.size()) {
    const std::size_t type = layout.metadata[i].type;
    if (type >= params.metadata.size()) {
      throw LookupError("metadata type " + std::to_string(type) + " has no embedding table");
    }
    std::vector<std::size_t> ids;
    while (i < layout.metadata.size() && layout.metadata[i].type == type) {
      ids.push_back(layout.metadata[i].instance);
      ++i;
    }
    blocks.push_back(ad::gather_rows(tape.leaf(params.metadata[type]), ids));
    seq.roles.insert(seq.roles.end(), ids.size(), TokenRole::kMetadata);
  }
  if (!layout.words.empty()) {
    blocks.push_back(ad::gather_rows(tape.leaf(params.words), layout.words));
    seq.roles.insert(seq.roles.end(), layout.words.size(), TokenRole::kWord);
  }
  Var tokens = ad::concat_rows(blocks);

  Tensor positions = Tensor::Zero(static_cast<Eigen::Index>(seq.roles.size()), d);
  if (!layout.words.empty()) {
    positions.bottomRows(static_cast<Eigen::Index>(layout.words.size())) =
        sinusoidal_positions(layout.words.size(), d);
  }
  const Var parts[] = {tokens, tape.constant(std::move(positions))};
  Var projected = ad::matmul(ad::concat_cols(parts), tape.leaf(params.position_projection));
  seq.hidden = dropout_rng != nullptr ? ad::dropout(projected, config.dropout, *dropout_rng, true)
                                      : projected;
  return seq;
}

namespace {

struct AttentionCore {
  Var output;
  std::vector<Var> weights;
};

AttentionCore attention_core(const Var& queries, const Var& tokens, LayerParams& layer,
                             const EncoderConfig& config) {
  ad::Tape& tape = *queries.tape();
  const auto hd = static_cast<Eigen::Index>(config.head_dim());
  const double scale = 1.0 / std::sqrt(static_cast<double>(config.head_dim()));
  Var q = ad::matmul(queries, tape.leaf(layer.query));
  Var k = ad::matmul(tokens, tape.leaf(layer.key));
  Var v = ad::matmul(tokens, tape.leaf(layer.value));
  AttentionCore core;
  std::vector<Var> heads;
  for (std::size_t h = 0; h < config.heads; ++h) {
    const auto start = static_cast<Eigen::Index>(h) * hd;
    Var scores = ad::affine(
        ad::matmul_nt(ad::slice_cols(q, start, hd), ad::slice_cols(k, start, hd)), scale);
    Var weights = ad::softmax_rows(scores);
    core.weights.push_back(weights);
    heads.push_back(ad::matmul(weights, ad::slice_cols(v, start, hd)));
  }
  Var merged = heads.size() == 1 ? heads.front() : ad::concat_cols(heads);
  core.output = ad::matmul(merged, tape.leaf(layer.output));
  return core;
}

}  // namespace

AttentionResult multi_head_attention(const Var& queries, const Var& tokens, LayerParams& layer,
                                     const EncoderConfig& config) {
  if (queries.cols() != static_cast<Eigen::Index>(config.dim) ||
      tokens.cols() != static_cast<Eigen::Index>(config.dim)) {
    throw ShapeError("attention inputs " + ad::shape_string(queries.value()) + " and " +
                     ad::shape_string(tokens.value()) + " do not have width " +
                     std::to_string(config.dim));
  }
  AttentionCore core = attention_core(queries, tokens, layer, config);
  AttentionResult result;
  result.output = core.output;
  for (const auto& w : core.weights) result.weights.push_back(w.value());
  return result;
}

Var transformer_layer(const Var& hidden, LayerParams& layer, const EncoderConfig& config,
                      Rng* dropout_rng) {
  ad::Tape& tape = *hidden.tape();
  auto drop = [&](const Var& x) {
    return dropout_rng != nullptr ? ad::dropout(x, config.dropout, *dropout_rng, true) : x;
  };
  Var attended = attention_core(hidden, hidden, layer, config).output;
  Var z = ad::layer_norm(ad::add(hidden, drop(attended)), tape.leaf(layer.norm1_gain),
                         tape.leaf(layer.norm1_bias));
  Var inner = ad::relu(ad::add_row(ad::matmul(z, tape.leaf(layer.ffn_in)),
                                   tape.leaf(layer.ffn_in_bias)));
  Var ffn = ad::add_row(ad::matmul(inner, tape.leaf(layer.ffn_out)),
                        tape.leaf(layer.ffn_out_bias));
  return ad::layer_norm(ad::add(z, drop(ffn)), tape.leaf(layer.norm2_gain),
                        tape.leaf(layer.norm2_bias));
}

Var encode_document(ad::Tape& tape, const Document& document, EncoderParams& params,
                    const EncoderConfig& config, Rng* dropout_rng) {
  if (params.layers.size() != config.layers) {
    throw ShapeError("encoder has " + std::to_string(params.layers.size()) +
                     " layers, config expects " + std::to_string(config.layers));
  }
  Var h = build_input_sequence(tape, document, params, config, dropout_rng).hidden;
  for (auto& layer : params.layers) h = transformer_layer(h, layer, config, dropout_rng);
  return ad::flatten(ad::slice_rows(h, 0, static_cast<Eigen::Index>(config.cls_tokens)));
}

}  // namespace match::encoder
