#include "cmnt/memory.hpp"

#include "cmnt/error.hpp"
#include "layers.hpp"

#include <cmath>
#include <limits>

namespace cmnt {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void fill_slots(ConstraintMemory& mem, const ConstraintSet& c) {
  for (std::size_t i = 0; i < c.size(); ++i) {
    for (int tok : c[i].tokens) {
      mem.slot_constraint.push_back(static_cast<int>(i));
      mem.slot_token.push_back(tok);
    }
  }
  mem.slot_constraint.push_back(-1);
  mem.slot_token.push_back(-1);
}

std::vector<int> constraint_tokens(const ConstraintSet& c) {
  std::vector<int> ids;
  for (const auto& item : c)
    for (int t : item.tokens) ids.push_back(t);
  return ids;
}

Matrix with_sentinel(const ParamStore& params, const Matrix& rows) {
  const auto sentinel = params.at("mem.sentinel").mat();
  Matrix out(rows.rows() + 1, sentinel.cols());
  if (rows.rows() > 0) out.topRows(rows.rows()) = rows;
  out.row(rows.rows()) = sentinel.row(0);
  return out;
}

}  // namespace

std::size_t ConstraintMemory::active_constraint_slots() const {
  std::size_t n = 0;
  for (std::size_t s = 0; s + 1 < active.size(); ++s) n += active[s] ? 1 : 0;
  return n;
}

std::vector<bool> memory_active(EncoderKind encoder, const ConstraintSet& c,
                                std::span<const int> slot_constraint, std::span<const int> prefix) {
  std::vector<bool> active(slot_constraint.size(), true);
  if (encoder != EncoderKind::shallow) return active;
  const auto done = c.satisfied(prefix);
  for (std::size_t s = 0; s < slot_constraint.size(); ++s) {
    const int ci = slot_constraint[s];
    if (ci >= 0 && done[static_cast<std::size_t>(ci)]) active[s] = false;
  }
  return active;
}

ConstraintMemory encode_shallow(const ParamStore& params, const ConstraintSet& c,
                                std::span<const int> prefix) {
  ConstraintMemory mem;
  mem.encoder = EncoderKind::shallow;
  fill_slots(mem, c);
  const auto ids = constraint_tokens(c);
  mem.rows = with_sentinel(params, detail::embedding_rows(params, "tgt.emb", ids));
  mem.active = memory_active(EncoderKind::shallow, c, mem.slot_constraint, prefix);
  return mem;
}

ConstraintMemory encode_deep(const ParamStore& params, const ModelConfig& config,
                             const ConstraintSet& c) {
  ConstraintMemory mem;
  mem.encoder = EncoderKind::deep;
  fill_slots(mem, c);
  const auto ids = constraint_tokens(c);
  Matrix rows(0, config.model_dim);
  if (!ids.empty()) {
    rows = detail::eager_encoder_stack(params, "cenc", "tgt.emb", ids, config.encoder_layers,
                                       config.heads);
  }
  mem.rows = with_sentinel(params, rows);
  mem.active.assign(mem.slots(), true);
  return mem;
}

ConstraintMemory encode_memory(const ParamStore& params, const ModelConfig& config,
                               const ConstraintSet& c, std::span<const int> prefix) {
  switch (config.encoder) {
    case EncoderKind::shallow: return encode_shallow(params, c, prefix);
    case EncoderKind::deep: return encode_deep(params, config, c);
    case EncoderKind::none: break;
  }
  throw Error("encode_memory: model has no constraint encoder");
}

Matrix memory_mask_row(const std::vector<bool>& active) {
  Matrix m(1, static_cast<Eigen::Index>(active.size()));
  for (std::size_t s = 0; s < active.size(); ++s) m(0, static_cast<Eigen::Index>(s)) = active[s] ? 0.0 : kNegInf;
  return m;
}

MemoryProjections project_memory(const ParamStore& params, const ModelConfig& config,
                                 const ConstraintMemory& mem) {
  MemoryProjections p;
  const Matrix& E = mem.rows;
  switch (config.integrator) {
    case IntegratorKind::gate:
      p.gate_k1 = E * params.at("gate.f1.wk").mat();
      p.gate_v1 = E * params.at("gate.f1.wv").mat();
      p.gate_k2 = E * params.at("gate.f2.wk").mat();
      p.gate_v2 = E * params.at("gate.f2.wv").mat();
      break;
    case IntegratorKind::copy:
      p.copy_k1 = E * params.at("copy.f1.wk").mat();
      p.copy_k2 = E * params.at("copy.f2.wk").mat();
      p.copy_v2 = E * params.at("copy.f2.wv").mat();
      break;
    case IntegratorKind::attn:
      for (int l = 0; l < config.decoder_layers; ++l) {
        const std::string lp = "dec." + std::to_string(l) + ".sa";
        p.layer_k.push_back(E * params.at(lp + ".wk").mat());
        p.layer_v.push_back(E * params.at(lp + ".wv").mat());
      }
      break;
    case IntegratorKind::none: break;
  }
  return p;
}

Matrix integrate_gate(const ParamStore& params, const MatrixRef& h, const MemoryProjections& proj,
                      const Matrix& mask_row) {
  if (h.cols() != proj.gate_k1.cols()) throw Error("integrate_gate: hidden width does not match memory");
  const Matrix mask = mask_row.replicate(h.rows(), 1);
  const Matrix f1 = attend(h * params.at("gate.f1.wq").mat(), proj.gate_k1, proj.gate_v1, mask, {}, 1);
  Matrix f2 = attend(h * params.at("gate.f2.wq").mat(), proj.gate_k2, proj.gate_v2, mask, {}, 1);
  f2.rowwise() += params.at("gate.b").mat().row(0);
  const Matrix g = f2.unaryExpr([](double x) { return sigmoid(x); });
  return g.cwiseProduct(h) + (1.0 - g.array()).matrix().cwiseProduct(f1);
}

Matrix integrate_gate(const ParamStore& params, const MatrixRef& h, const ConstraintMemory& mem) {
  if (h.cols() != mem.rows.cols()) throw Error("integrate_gate: hidden width does not match memory");
  ModelConfig cfg;
  cfg.integrator = IntegratorKind::gate;
  return integrate_gate(params, h, project_memory(params, cfg, mem), memory_mask_row(mem.active));
}

namespace {

// Slot weights of the constrained softmax, rows(h) x (slots - 1).
Matrix copy_slot_weights(const ParamStore& params, const MatrixRef& h, const ConstraintMemory& mem,
                         const MemoryProjections& proj) {
  const Eigen::Index n = static_cast<Eigen::Index>(mem.slots()) - 1;
  Matrix constraint_mask(h.rows(), n);
  for (Eigen::Index s = 0; s < n; ++s) {
    constraint_mask.col(s).setConstant(mem.active[static_cast<std::size_t>(s)] ? 0.0 : kNegInf);
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(h.cols()));
  Matrix scores = (h * params.at("copy.f1.wq").mat()) * proj.copy_k1.topRows(n).transpose() * scale;
  scores += constraint_mask;
  softmax_rows(scores);
  return scores;
}

}  // namespace

Matrix copy_distribution(const ParamStore& params, const MatrixRef& h, const ConstraintMemory& mem,
                         const MemoryProjections& proj, int vocab) {
  Matrix out = Matrix::Zero(h.rows(), vocab);
  if (mem.active_constraint_slots() == 0) return out;
  const Matrix w = copy_slot_weights(params, h, mem, proj);
  for (Eigen::Index r = 0; r < h.rows(); ++r)
    for (Eigen::Index s = 0; s < w.cols(); ++s) out(r, mem.slot_token[static_cast<std::size_t>(s)]) += w(r, s);
  return out;
}

Matrix integrate_copy(const ParamStore& params, const MatrixRef& h, const ConstraintMemory& mem,
                      const MemoryProjections& proj, const Matrix& p_gen) {
  if (p_gen.rows() != h.rows()) throw Error("integrate_copy: one generator row per hidden row required");
  if (h.cols() != proj.copy_k1.cols()) throw Error("integrate_copy: hidden width does not match memory");
  if (mem.active_constraint_slots() == 0) return p_gen;
  const Matrix scores = copy_slot_weights(params, h, mem, proj);
  const Eigen::Index n = scores.cols();

  const Matrix mask = memory_mask_row(mem.active).replicate(h.rows(), 1);
  const Matrix read = attend(h * params.at("copy.f2.wq").mat(), proj.copy_k2, proj.copy_v2, mask, {}, 1);
  const Matrix logit = read * params.at("copy.w").mat();
  const double bias = params.at("copy.b")[0];

  Matrix out = p_gen;
  for (Eigen::Index r = 0; r < h.rows(); ++r) {
    const double g = sigmoid(logit(r, 0) + bias);
    out.row(r) *= g;
    for (Eigen::Index s = 0; s < n; ++s) {
      out(r, mem.slot_token[static_cast<std::size_t>(s)]) += (1.0 - g) * scores(r, s);
    }
  }
  return out;
}

Matrix integrate_copy(const ParamStore& params, const MatrixRef& h, const ConstraintMemory& mem,
                      const Matrix& p_gen) {
  ModelConfig cfg;
  cfg.integrator = IntegratorKind::copy;
  return integrate_copy(params, h, mem, project_memory(params, cfg, mem), p_gen);
}

}  // namespace cmnt
