#include "cmnt/checkpoint.hpp"

#include "cmnt/error.hpp"
#include "cmnt/text.hpp"

#include <bit>
#include <cstring>

namespace cmnt {

namespace {

constexpr char kMagic[] = "CMNT1";
constexpr std::size_t kMagicLen = 5;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string take(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw DataError("checkpoint: truncated at byte " + std::to_string(pos_));
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const Model& model) {
  const ModelConfig& c = model.config();
  std::string out(kMagic, kMagicLen);
  for (std::int32_t v : {c.encoder_layers, c.decoder_layers, c.model_dim, c.heads, c.ff_dim, c.source_vocab,
                         c.target_vocab, c.max_length, static_cast<std::int32_t>(c.integrator),
                         static_cast<std::int32_t>(c.encoder)}) {
    put(out, v);
  }
  put(out, std::bit_cast<std::uint64_t>(c.dropout));
  put(out, static_cast<std::uint32_t>(model.params().size()));
  for (const auto& e : model.params()) {
    put(out, static_cast<std::uint32_t>(e.name.size()));
    out += e.name;
    put(out, static_cast<std::uint32_t>(e.tensor.rank()));
    for (auto d : e.tensor.shape()) put(out, static_cast<std::uint64_t>(d));
    for (double v : e.tensor.values()) put(out, v);
  }
  return out;
}

Model deserialize_checkpoint(const std::string& bytes) {
  Reader in(bytes);
  if (in.take(kMagicLen) != std::string(kMagic, kMagicLen)) throw DataError("checkpoint: bad magic");
  ModelConfig c;
  c.encoder_layers = in.get<std::int32_t>();
  c.decoder_layers = in.get<std::int32_t>();
  c.model_dim = in.get<std::int32_t>();
  c.heads = in.get<std::int32_t>();
  c.ff_dim = in.get<std::int32_t>();
  c.source_vocab = in.get<std::int32_t>();
  c.target_vocab = in.get<std::int32_t>();
  c.max_length = in.get<std::int32_t>();
  const auto integrator = in.get<std::int32_t>();
  const auto encoder = in.get<std::int32_t>();
  if (integrator < 0 || integrator > 3 || encoder < 0 || encoder > 2) {
    throw DataError("checkpoint: unknown integrator/encoder code");
  }
  c.integrator = static_cast<IntegratorKind>(integrator);
  c.encoder = static_cast<EncoderKind>(encoder);
  c.dropout = std::bit_cast<double>(in.get<std::uint64_t>());
  try {
    c.validate();
  } catch (const Error& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  }

  ParamStore params;
  const auto count = in.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name = in.take(in.get<std::uint32_t>());
    const auto rank = in.get<std::uint32_t>();
    if (rank > 8) throw DataError("checkpoint: parameter '" + name + "' has rank " + std::to_string(rank));
    std::vector<std::size_t> shape;
    for (std::uint32_t r = 0; r < rank; ++r) shape.push_back(in.get<std::uint64_t>());
    Tensor t(shape);
    for (double& v : t.values()) v = in.get<double>();
    params.add(name, std::move(t));
  }
  if (!in.done()) throw DataError("checkpoint: trailing bytes");
  return Model(c, std::move(params));
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  write_file(path, serialize_checkpoint(model));
}

Model load_checkpoint(const std::filesystem::path& path) {
  try {
    return deserialize_checkpoint(read_file(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace cmnt
