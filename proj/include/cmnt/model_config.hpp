#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace cmnt {

enum class EncoderKind : std::int32_t { none = 0, shallow = 1, deep = 2 };
enum class IntegratorKind : std::int32_t { none = 0, gate = 1, copy = 2, attn = 3 };

struct ModelConfig {
  int encoder_layers = 2;
  int decoder_layers = 2;
  int model_dim = 64;
  int heads = 4;
  int ff_dim = 128;
  double dropout = 0.1;
  int source_vocab = 0;
  int target_vocab = 0;
  int max_length = 128;
  IntegratorKind integrator = IntegratorKind::none;
  EncoderKind encoder = EncoderKind::none;

  // Throws cmnt::Error describing the first violated constraint.
  void validate() const;
  bool uses_memory() const { return integrator != IntegratorKind::none; }
  // "baseline", "SE-Gate", "DE-Attn", ...
  std::string variant_name() const;

  bool operator==(const ModelConfig&) const = default;
};

EncoderKind parse_encoder_kind(std::string_view s);
IntegratorKind parse_integrator_kind(std::string_view s);
std::string_view to_string(EncoderKind k);
std::string_view to_string(IntegratorKind k);
// Accepts "baseline" or "<SE|DE>-<Gate|Copy|Attn>" (case-insensitive).
void apply_variant(ModelConfig& config, std::string_view variant);

}  // namespace cmnt
