#include "cmnt/model.hpp"

#include "cmnt/error.hpp"
#include "cmnt/kernels.hpp"
#include "cmnt/vocab.hpp"
#include "layers.hpp"

#include <cmath>
#include <limits>
#include <utility>

namespace cmnt {

namespace {

using detail::Binder;

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::string layer_name(const char* prefix, int l) { return std::string(prefix) + "." + std::to_string(l); }

Matrix causal_mask(Eigen::Index n) {
  Matrix m = Matrix::Zero(n, n);
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = r + 1; c < n; ++c) m(r, c) = kNegInf;
  return m;
}

std::vector<int> decoder_inputs(std::span<const int> r) {
  std::vector<int> in;
  in.reserve(r.size());
  in.push_back(Vocabulary::kBos);
  for (std::size_t i = 0; i + 1 < r.size(); ++i) in.push_back(r[i]);
  return in;
}

std::vector<int> flat_tokens(const ConstraintSet& c) {
  std::vector<int> ids;
  for (const auto& item : c) ids.insert(ids.end(), item.tokens.begin(), item.tokens.end());
  return ids;
}

std::vector<int> slot_constraints(const ConstraintSet& c) {
  std::vector<int> out;
  for (std::size_t i = 0; i < c.size(); ++i) out.insert(out.end(), c[i].tokens.size(), static_cast<int>(i));
  out.push_back(-1);
  return out;
}

// Memory rows on the graph plus per-row (teacher forced) active flags.
struct GraphMemory {
  Var rows;
  std::vector<int> slot_token;  // sentinel excluded
  std::vector<std::vector<bool>> active;  // [row][slot], sentinel included
};

GraphMemory graph_memory(Binder& b, const ModelConfig& cfg, const ConstraintSet& c,
                         std::span<const int> r, bool mask_redundant) {
  Graph& g = b.graph();
  GraphMemory m;
  m.slot_token = flat_tokens(c);
  Var sentinel = b("mem.sentinel");
  if (m.slot_token.empty()) {
    m.rows = sentinel;
  } else {
    Var body = cfg.encoder == EncoderKind::deep
                   ? detail::encoder_stack(b, "cenc", "tgt.emb", m.slot_token, cfg.encoder_layers, cfg.heads)
                   : b.embed("tgt.emb", m.slot_token);
    const Var parts[] = {body, sentinel};
    m.rows = g.concat_rows(parts);
  }
  const auto slots = slot_constraints(c);
  const EncoderKind masking = mask_redundant ? cfg.encoder : EncoderKind::deep;
  for (std::size_t t = 0; t < r.size(); ++t) {
    m.active.push_back(memory_active(masking, c, slots, r.first(t)));
  }
  return m;
}

Matrix additive_rows(const std::vector<std::vector<bool>>& active) {
  Matrix m(static_cast<Eigen::Index>(active.size()), static_cast<Eigen::Index>(active.at(0).size()));
  for (std::size_t r = 0; r < active.size(); ++r)
    for (std::size_t s = 0; s < active[r].size(); ++s)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(s)) = active[r][s] ? 0.0 : kNegInf;
  return m;
}

Var graph_gate(Binder& b, Var h, const GraphMemory& mem) {
  Graph& g = b.graph();
  const Matrix mask = additive_rows(mem.active);
  Var f1 = g.attention(g.matmul(h, b("gate.f1.wq")), g.matmul(mem.rows, b("gate.f1.wk")),
                       g.matmul(mem.rows, b("gate.f1.wv")), mask, 1);
  Var f2 = g.attention(g.matmul(h, b("gate.f2.wq")), g.matmul(mem.rows, b("gate.f2.wk")),
                       g.matmul(mem.rows, b("gate.f2.wv")), mask, 1);
  Var gate = g.sigmoid(g.add_row(f2, b("gate.b")));
  Var keep = g.mul(gate, h);
  Var read = g.mul(g.add_scalar(g.scale(gate, -1.0), 1.0), f1);
  return g.add(keep, read);
}

Var graph_copy(Binder& b, Var h, Var logits, const GraphMemory& mem, int vocab) {
  Graph& g = b.graph();
  Var p_gen = g.softmax_rows(logits);
  const auto n = static_cast<Eigen::Index>(mem.slot_token.size());
  if (n == 0) return p_gen;
  const auto rows = static_cast<Eigen::Index>(mem.active.size());
  Matrix cmask(rows, n);
  Matrix forced(rows, 1);
  Matrix open(rows, 1);
  for (Eigen::Index r = 0; r < rows; ++r) {
    bool any = false;
    for (Eigen::Index s = 0; s < n; ++s) any = any || mem.active[static_cast<std::size_t>(r)][static_cast<std::size_t>(s)];
    for (Eigen::Index s = 0; s < n; ++s) {
      const bool on = !any || mem.active[static_cast<std::size_t>(r)][static_cast<std::size_t>(s)];
      cmask(r, s) = on ? 0.0 : kNegInf;
    }
    open(r, 0) = any ? 1.0 : 0.0;
    forced(r, 0) = any ? 0.0 : 1.0;
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(g.value(h).cols()));
  Var keys = g.slice_rows(g.matmul(mem.rows, b("copy.f1.wk")), 0, n);
  Var scores = g.scale(g.matmul_nt(g.matmul(h, b("copy.f1.wq")), keys), scale);
  Var alpha = g.softmax_rows(scores, cmask);
  Var p_c = g.scatter_cols(alpha, mem.slot_token, vocab);

  Var read = g.attention(g.matmul(h, b("copy.f2.wq")), g.matmul(mem.rows, b("copy.f2.wk")),
                         g.matmul(mem.rows, b("copy.f2.wv")), additive_rows(mem.active), 1);
  Var gate = g.sigmoid(g.add_row(g.matmul(read, b("copy.w")), b("copy.b")));
  Var gate_eff = g.add(g.mul(gate, g.constant(open)), g.constant(forced));
  Var rest = g.add_scalar(g.scale(gate_eff, -1.0), 1.0);
  return g.add(g.mul_col(p_gen, gate_eff), g.mul_col(p_c, rest));
}

// Builds the teacher-forced network. Returns logits, or probabilities for the
// copy integrator (are_probs set).
Var build_forward(Binder& b, const ModelConfig& cfg, std::span<const int> x, std::span<const int> r,
                  const ConstraintSet& c, bool mask_redundant, bool& are_probs) {
  Graph& g = b.graph();
  if (x.empty()) throw Error("encode_source: empty source");
  if (r.empty()) throw Error("sequence_nll: empty reference");
  if (static_cast<int>(x.size()) > cfg.max_length || static_cast<int>(r.size()) > cfg.max_length) {
    throw Error("sequence_nll: sequence longer than max_length " + std::to_string(cfg.max_length));
  }
  Var enc = detail::encoder_stack(b, "enc", "src.emb", x, cfg.encoder_layers, cfg.heads);

  const auto in = decoder_inputs(r);
  const auto T = static_cast<Eigen::Index>(in.size());
  Var emb = b.embed("tgt.emb", in);
  Var y = b.drop(g.add(emb, g.constant(detail::positional_encoding(T, cfg.model_dim))));

  std::optional<GraphMemory> mem;
  if (cfg.uses_memory()) mem = graph_memory(b, cfg, c, r, mask_redundant);

  const Matrix causal = causal_mask(T);
  Matrix attn_mask;
  if (cfg.integrator == IntegratorKind::attn) {
    const Matrix mm = additive_rows(mem->active);
    attn_mask.resize(T, T + mm.cols());
    attn_mask << causal, mm;
  }

  for (int l = 0; l < cfg.decoder_layers; ++l) {
    const std::string lp = layer_name("dec", l);
    Var sa;
    if (cfg.integrator == IntegratorKind::attn) {
      const Var kv_parts[] = {y, mem->rows};
      Var kv = g.concat_rows(kv_parts);
      const Eigen::Index keys = g.value(kv).rows();
      const Var bias_parts[] = {g.constant(Matrix::Zero(1, keys - 1)), b(lp + ".null_logit")};
      Var bias = g.concat_cols(bias_parts);
      sa = detail::attention_sublayer(b, lp + ".sa", y, kv, attn_mask, cfg.heads, bias);
    } else {
      sa = detail::attention_sublayer(b, lp + ".sa", y, y, causal, cfg.heads);
    }
    y = detail::residual_norm(b, lp + ".ln1", y, sa);
    y = detail::residual_norm(b, lp + ".ln2", y,
                              detail::attention_sublayer(b, lp + ".ca", y, enc, Matrix(), cfg.heads));
    y = detail::residual_norm(b, lp + ".ln3", y, detail::feed_forward(b, lp + ".ff", y));
  }

  if (cfg.integrator == IntegratorKind::gate) y = graph_gate(b, y, *mem);
  Var logits = g.add_row(g.matmul(y, b("out.w")), b("out.b"));
  if (cfg.integrator == IntegratorKind::copy) {
    are_probs = true;
    return graph_copy(b, y, logits, *mem, cfg.target_vocab);
  }
  are_probs = false;
  return logits;
}

Var loss_from(Graph& g, Var out, bool are_probs, std::span<const int> r) {
  if (are_probs) return g.scale(g.sum(g.log(g.pick(out, r))), -1.0);
  return g.softmax_cross_entropy(out, r);
}

}  // namespace

Model::Model(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  add_parameters(seed);
}

Model::Model(const ModelConfig& config, ParamStore params) : config_(config) {
  config_.validate();
  add_parameters(0);
  if (params.size() != params_.size()) {
    throw DataError("model parameters: expected " + std::to_string(params_.size()) + " tensors, got " +
                    std::to_string(params.size()));
  }
  for (auto& e : params_) {
    if (!params.contains(e.name)) throw DataError("model parameters: missing '" + e.name + "'");
    const Tensor& t = params.at(e.name);
    if (t.shape() != e.tensor.shape()) {
      throw DataError("model parameters: '" + e.name + "' has shape " + t.shape_string() +
                      ", expected " + e.tensor.shape_string());
    }
  }
  params_ = std::move(params);
}

void Model::add_parameters(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto d = static_cast<std::size_t>(config_.model_dim);
  auto normal_table = [&](std::size_t rows) {
    std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(d)));
    Tensor t({rows, d});
    for (double& v : t.values()) v = dist(rng);
    return t;
  };
  params_.add("src.emb", normal_table(static_cast<std::size_t>(config_.source_vocab)));
  params_.add("tgt.emb", normal_table(static_cast<std::size_t>(config_.target_vocab)));
  detail::add_encoder_params(params_, "enc", config_.encoder_layers, config_.model_dim, config_.ff_dim, rng);
  for (int l = 0; l < config_.decoder_layers; ++l) {
    const std::string lp = layer_name("dec", l);
    detail::add_attention_params(params_, lp + ".sa", config_.model_dim, rng);
    detail::add_layer_norm_params(params_, lp + ".ln1", config_.model_dim);
    detail::add_attention_params(params_, lp + ".ca", config_.model_dim, rng);
    detail::add_layer_norm_params(params_, lp + ".ln2", config_.model_dim);
    detail::add_ffn_params(params_, lp + ".ff", config_.model_dim, config_.ff_dim, rng);
    detail::add_layer_norm_params(params_, lp + ".ln3", config_.model_dim);
  }
  params_.add("out.w", detail::xavier(d, static_cast<std::size_t>(config_.target_vocab), rng));
  params_.add("out.b", Tensor({static_cast<std::size_t>(config_.target_vocab)}));
  if (!config_.uses_memory()) return;

  params_.add("mem.sentinel", Tensor({d}));
  if (config_.encoder == EncoderKind::deep) {
    detail::add_encoder_params(params_, "cenc", config_.encoder_layers, config_.model_dim,
                               config_.ff_dim, rng);
  }
  switch (config_.integrator) {
    case IntegratorKind::gate:
      for (const char* f : {"gate.f1", "gate.f2"})
        for (const char* w : {".wq", ".wk", ".wv"}) params_.add(std::string(f) + w, detail::xavier(d, d, rng));
      params_.add("gate.b", Tensor({d}, std::vector<double>(d, 2.0)));
      break;
    case IntegratorKind::copy:
      params_.add("copy.f1.wq", detail::xavier(d, d, rng));
      params_.add("copy.f1.wk", detail::xavier(d, d, rng));
      for (const char* w : {".wq", ".wk", ".wv"}) params_.add(std::string("copy.f2") + w, detail::xavier(d, d, rng));
      params_.add("copy.w", detail::xavier(d, 1, rng));
      params_.add("copy.b", Tensor({1}, {2.0}));
      break;
    case IntegratorKind::attn:
      for (int l = 0; l < config_.decoder_layers; ++l) params_.add(layer_name("dec", l) + ".null_logit", Tensor({1}));
      break;
    case IntegratorKind::none: break;
  }
}

EncodedSource Model::encode_source(std::span<const int> x) const {
  if (x.empty()) throw Error("encode_source: empty source");
  if (static_cast<int>(x.size()) > config_.max_length) {
    throw Error("encode_source: source length " + std::to_string(x.size()) + " exceeds max_length " +
                std::to_string(config_.max_length));
  }
  EncodedSource out;
  out.hidden = detail::eager_encoder_stack(params_, "enc", "src.emb", x, config_.encoder_layers, config_.heads);
  out.ids.assign(x.begin(), x.end());
  out.padding.assign(x.size(), false);
  return out;
}

Var Model::sequence_loss(Graph& graph, std::span<const int> x, std::span<const int> r,
                         const ConstraintSet& c, const ForwardOptions& options) {
  Binder b(graph, params_);
  if (options.dropout_rng) b.enable_dropout(config_.dropout, options.dropout_rng);
  bool probs = false;
  Var out = build_forward(b, config_, x, r, c, options.mask_redundant, probs);
  return loss_from(graph, out, probs, r);
}

double Model::sequence_nll(std::span<const int> x, std::span<const int> r, const ConstraintSet& c) const {
  Graph graph;
  Binder b(graph, params_);
  bool probs = false;
  Var out = build_forward(b, config_, x, r, c, true, probs);
  return graph.scalar(loss_from(graph, out, probs, r));
}

Matrix Model::teacher_forced_distributions(std::span<const int> x, std::span<const int> r,
                                           const ConstraintSet& c) const {
  Graph graph;
  Binder b(graph, params_);
  bool probs = false;
  Var out = build_forward(b, config_, x, r, c, true, probs);
  if (probs) return graph.value(out);
  Matrix p = graph.value(out);
  softmax_rows(p);
  return p;
}

Matrix Model::decoder_layer(int layer, const Matrix& inputs, const EncodedSource& src,
                            const ConstraintMemory* memory, std::vector<Matrix>* weights) const {
  if (layer < 0 || layer >= config_.decoder_layers) throw Error("decoder_layer: layer out of range");
  if (inputs.cols() != config_.model_dim) throw Error("decoder_layer: input width mismatch");
  const std::string lp = layer_name("dec", layer);
  const Eigen::Index T = inputs.rows();
  const Matrix causal = causal_mask(T);
  const auto& P = params_;
  const Matrix q = inputs * P.at(lp + ".sa.wq").mat();
  Matrix k = inputs * P.at(lp + ".sa.wk").mat();
  Matrix v = inputs * P.at(lp + ".sa.wv").mat();
  Matrix mask = causal;
  std::vector<double> bias;
  if (memory && config_.integrator == IntegratorKind::attn) {
    if (memory->rows.cols() != inputs.cols()) throw Error("integrate_attn: memory width mismatch");
    const Eigen::Index S = memory->rows.rows();
    Matrix kk(T + S, k.cols()), vv(T + S, v.cols());
    kk << k, memory->rows * P.at(lp + ".sa.wk").mat();
    vv << v, memory->rows * P.at(lp + ".sa.wv").mat();
    k = std::move(kk);
    v = std::move(vv);
    mask.resize(T, T + S);
    mask << causal, memory_mask_row(memory->active).replicate(T, 1);
    bias.assign(static_cast<std::size_t>(T + S), 0.0);
    bias.back() = P.at(lp + ".null_logit")[0];
  }
  const Matrix sa = attend(q, k, v, mask, bias, config_.heads, weights) * P.at(lp + ".sa.wo").mat();
  Matrix y = detail::eager_residual_norm(P, lp + ".ln1", inputs, sa);
  y = detail::eager_residual_norm(P, lp + ".ln2", y,
                                  detail::eager_attention_sublayer(P, lp + ".ca", y, src.hidden, Matrix(), config_.heads));
  return detail::eager_residual_norm(P, lp + ".ln3", y, detail::eager_feed_forward(P, lp + ".ff", y));
}

Matrix integrate_attn(const Model& model, int layer, const Matrix& inputs, const ConstraintMemory& memory,
                      const EncodedSource& src, std::vector<Matrix>* weights) {
  if (model.config().integrator != IntegratorKind::attn) {
    throw Error("integrate_attn: model does not use the self-attention integrator");
  }
  return model.decoder_layer(layer, inputs, src, &memory, weights);
}

DecodeSession::DecodeSession(const Model& model, std::span<const int> source,
                             const ConstraintSet& constraints)
    : model_(&model), src_(model.encode_source(source)), constraints_(constraints) {
  const auto& cfg = model.config();
  const auto& P = model.params();
  for (int l = 0; l < cfg.decoder_layers; ++l) {
    const std::string lp = layer_name("dec", l);
    cross_k_.push_back(src_.hidden * P.at(lp + ".ca.wk").mat());
    cross_v_.push_back(src_.hidden * P.at(lp + ".ca.wv").mat());
  }
  if (cfg.uses_memory()) {
    memory_ = encode_memory(P, cfg, constraints_, {});
    projections_ = project_memory(P, cfg, *memory_);
  }
}

DecoderState DecodeSession::initial_state() const {
  DecoderState s;
  const auto L = static_cast<std::size_t>(model_->config().decoder_layers);
  const auto d = model_->config().model_dim;
  s.keys.assign(L, Matrix(0, d));
  s.values.assign(L, Matrix(0, d));
  return s;
}

ConstraintMemory DecodeSession::memory_for(std::span<const int> prefix) const {
  if (!memory_) throw Error("memory_for: model has no constraint memory");
  ConstraintMemory m = *memory_;
  m.active = memory_active(m.encoder, constraints_, m.slot_constraint, prefix);
  return m;
}

DecodeSession::Step DecodeSession::step(const DecoderState& state, int prev_token) const {
  const auto& cfg = model_->config();
  const auto& P = model_->params();
  if (state.t >= cfg.max_length) {
    throw Error("decode_step: state length " + std::to_string(state.t) + " reached max_length");
  }
  if (prev_token < 0 || prev_token >= cfg.target_vocab) {
    throw Error("decode_step: token " + std::to_string(prev_token) + " outside target vocabulary");
  }
  Step out;
  DecoderState& next = out.state;
  next.t = state.t + 1;
  next.prefix = state.prefix;
  if (state.t > 0) next.prefix.push_back(prev_token);
  next.keys.resize(state.keys.size());
  next.values.resize(state.values.size());

  std::vector<bool> active;
  Matrix mem_mask;
  if (memory_) {
    active = memory_active(memory_->encoder, constraints_, memory_->slot_constraint, next.prefix);
    mem_mask = memory_mask_row(active);
  }

  // self-attention mask and key bias over (prefix || memory), shared by every layer
  Matrix attn_mask;
  std::vector<double> attn_bias;
  if (cfg.integrator == IntegratorKind::attn) {
    attn_mask.resize(1, state.t + 1 + mem_mask.cols());
    attn_mask << Matrix::Zero(1, state.t + 1), mem_mask;
    attn_bias.assign(static_cast<std::size_t>(attn_mask.cols()), 0.0);
  }

  Matrix x = detail::embedding_rows(P, "tgt.emb", std::span<const int>(&prev_token, 1));
  x += detail::positional_encoding(1, cfg.model_dim, state.t);
  for (int l = 0; l < cfg.decoder_layers; ++l) {
    const auto li = static_cast<std::size_t>(l);
    const std::string lp = layer_name("dec", l);
    const Matrix q = x * P.at(lp + ".sa.wq").mat();
    Matrix& K = next.keys[li];
    Matrix& V = next.values[li];
    const Eigen::Index t = state.t;
    // with the attention integrator the memory rows ride along after the prefix
    const bool attn = cfg.integrator == IntegratorKind::attn;
    const Eigen::Index m = attn ? projections_.layer_k[li].rows() : 0;
    K.resize(t + 1 + m, cfg.model_dim);
    V.resize(t + 1 + m, cfg.model_dim);
    K.topRows(t) = state.keys[li].topRows(t);
    V.topRows(t) = state.values[li].topRows(t);
    K.row(t) = x * P.at(lp + ".sa.wk").mat();
    V.row(t) = x * P.at(lp + ".sa.wv").mat();
    Matrix sa;
    if (attn) {
      K.bottomRows(m) = projections_.layer_k[li];
      V.bottomRows(m) = projections_.layer_v[li];
      attn_bias.back() = P.at(lp + ".null_logit")[0];
      sa = attend(q, K, V, attn_mask, attn_bias, cfg.heads);
    } else {
      sa = attend(q, K, V, Matrix(), {}, cfg.heads);
    }
    x = detail::eager_residual_norm(P, lp + ".ln1", x, sa * P.at(lp + ".sa.wo").mat());
    const Matrix ca = attend(x * P.at(lp + ".ca.wq").mat(), cross_k_[li], cross_v_[li], Matrix(), {}, cfg.heads);
    x = detail::eager_residual_norm(P, lp + ".ln2", x, ca * P.at(lp + ".ca.wo").mat());
    x = detail::eager_residual_norm(P, lp + ".ln3", x, detail::eager_feed_forward(P, lp + ".ff", x));
  }

  if (cfg.integrator == IntegratorKind::gate) x = integrate_gate(P, x, projections_, mem_mask);
  Matrix dist = x * P.at("out.w").mat();
  dist.row(0) += P.at("out.b").mat().row(0);
  softmax_rows(dist);
  if (cfg.integrator == IntegratorKind::copy) {
    ConstraintMemory view = *memory_;
    view.active = std::move(active);
    dist = integrate_copy(P, x, view, projections_, dist);
  }
  out.distribution.assign(dist.data(), dist.data() + dist.size());
  out.hidden = std::move(x);
  return out;
}

}  // namespace cmnt
