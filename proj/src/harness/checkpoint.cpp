#include "checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "error.hpp"
#include "model.hpp"

namespace lpcsm::harness {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <class T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string take(std::size_t n, const char* what) {
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      fail(ErrorCode::kTruncated, std::string("checkpoint truncated while reading ") + what);
    }
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const ParameterStore& params, const ModelConfig& cfg) {
  std::string out(kCheckpointMagic, 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  const std::string text = model_config_to_text(cfg);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& e : params.entries()) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out += e.name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.value.rank()));
    for (std::size_t dim : e.value.shape()) put<std::uint64_t>(out, dim);
    for (double x : e.value.data()) put<double>(out, x);
  }
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  Reader in(bytes);
  if (bytes.size() < 4) fail(ErrorCode::kTruncated, "checkpoint truncated while reading magic");
  if (in.take(4, "magic") != std::string(kCheckpointMagic, 4)) {
    fail(ErrorCode::kBadMagic, "not a checkpoint file (bad magic)");
  }
  const auto version = in.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    fail(ErrorCode::kVersionMismatch, "checkpoint format version " + std::to_string(version) +
                                          ", expected " + std::to_string(kCheckpointVersion));
  }
  const auto text_len = in.get<std::uint32_t>("config length");
  Checkpoint ck{model_config_from_text(in.take(text_len, "config")), {}};

  // The stored tensors must match the layout the config implies.
  const ParameterStore layout = model::init_parameters(ck.config, 0);
  const auto count = in.get<std::uint32_t>("entry count");
  if (count != layout.size()) {
    fail(ErrorCode::kConfigMismatch, "checkpoint holds " + std::to_string(count) +
                                         " tensors; its config implies " +
                                         std::to_string(layout.size()));
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = in.get<std::uint32_t>("name length");
    std::string name = in.take(name_len, "name");
    const auto rank = in.get<std::uint32_t>("rank");
    if (rank > 8) fail(ErrorCode::kConfigMismatch, "implausible rank for " + name);
    Shape shape(rank);
    for (auto& dim : shape) dim = static_cast<std::size_t>(in.get<std::uint64_t>("dims"));
    const auto& expect = layout.entries()[i];
    if (name != expect.name || shape != expect.value.shape()) {
      fail(ErrorCode::kConfigMismatch, "tensor " + name + " " + shape_to_string(shape) +
                                           " does not match expected " + expect.name + " " +
                                           shape_to_string(expect.value.shape()));
    }
    std::vector<double> data(shape_numel(shape));
    for (auto& x : data) x = in.get<double>("tensor data");
    ck.params.add(std::move(name), Tensor(shape, std::move(data)), expect.trainable);
  }
  if (!in.done()) fail(ErrorCode::kConfigMismatch, "trailing bytes after the last tensor");
  return ck;
}

void save_checkpoint(const ParameterStore& params, const ModelConfig& cfg, const std::string& path) {
  const std::string bytes = serialize_checkpoint(params, cfg);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot open " + path + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::kIo, "failed writing " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open checkpoint " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

Checkpoint load_checkpoint(const std::string& path, const ModelConfig& expected) {
  Checkpoint ck = load_checkpoint(path);
  if (!(ck.config == expected)) {
    fail(ErrorCode::kConfigMismatch,
         "checkpoint config " + model_config_to_text(ck.config) + " differs from expected " +
             model_config_to_text(expected));
  }
  return ck;
}

}  // namespace lpcsm::harness
