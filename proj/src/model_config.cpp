#include "cmnt/model_config.hpp"

#include "cmnt/error.hpp"

#include <algorithm>
#include <cctype>

namespace cmnt {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  return out;
}

}  // namespace

void ModelConfig::validate() const {
  if (encoder_layers < 1 || decoder_layers < 1) throw Error("model config: layers must be >= 1");
  if (model_dim < 2) throw Error("model config: model_dim must be >= 2");
  if (heads < 1 || model_dim % heads != 0) {
    throw Error("model config: model_dim " + std::to_string(model_dim) +
                " not divisible by heads " + std::to_string(heads));
  }
  if (ff_dim < 1) throw Error("model config: ff_dim must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw Error("model config: dropout must be in [0, 1)");
  if (source_vocab < 5 || target_vocab < 5) throw Error("model config: vocabularies need specials plus tokens");
  if (max_length < 2) throw Error("model config: max_length must be >= 2");
  if ((integrator == IntegratorKind::none) != (encoder == EncoderKind::none)) {
    throw Error("model config: integrator and constraint encoder must be set together");
  }
}

std::string ModelConfig::variant_name() const {
  if (integrator == IntegratorKind::none) return "baseline";
  std::string name = encoder == EncoderKind::shallow ? "SE-" : "DE-";
  switch (integrator) {
    case IntegratorKind::gate: return name + "Gate";
    case IntegratorKind::copy: return name + "Copy";
    case IntegratorKind::attn: return name + "Attn";
    case IntegratorKind::none: break;
  }
  return name;
}

EncoderKind parse_encoder_kind(std::string_view s) {
  const std::string l = lower(s);
  if (l == "none") return EncoderKind::none;
  if (l == "shallow" || l == "se") return EncoderKind::shallow;
  if (l == "deep" || l == "de") return EncoderKind::deep;
  throw Error("unknown constraint encoder '" + std::string(s) + "'");
}

IntegratorKind parse_integrator_kind(std::string_view s) {
  const std::string l = lower(s);
  if (l == "none") return IntegratorKind::none;
  if (l == "gate") return IntegratorKind::gate;
  if (l == "copy") return IntegratorKind::copy;
  if (l == "attn") return IntegratorKind::attn;
  throw Error("unknown integrator '" + std::string(s) + "'");
}

std::string_view to_string(EncoderKind k) {
  switch (k) {
    case EncoderKind::shallow: return "shallow";
    case EncoderKind::deep: return "deep";
    case EncoderKind::none: break;
  }
  return "none";
}

std::string_view to_string(IntegratorKind k) {
  switch (k) {
    case IntegratorKind::gate: return "gate";
    case IntegratorKind::copy: return "copy";
    case IntegratorKind::attn: return "attn";
    case IntegratorKind::none: break;
  }
  return "none";
}

void apply_variant(ModelConfig& config, std::string_view variant) {
  const std::string l = lower(variant);
  if (l == "baseline" || l == "transformer") {
    config.encoder = EncoderKind::none;
    config.integrator = IntegratorKind::none;
    return;
  }
  const auto dash = l.find('-');
  if (dash == std::string::npos) throw Error("unknown model variant '" + std::string(variant) + "'");
  config.encoder = parse_encoder_kind(l.substr(0, dash));
  config.integrator = parse_integrator_kind(l.substr(dash + 1));
  if (config.encoder == EncoderKind::none || config.integrator == IntegratorKind::none) {
    throw Error("unknown model variant '" + std::string(variant) + "'");
  }
}

}  // namespace cmnt
