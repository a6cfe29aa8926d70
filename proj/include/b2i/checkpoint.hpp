#pragma once

// Checkpoint file:
//   "B2I1" | u64 LE metadata length | metadata JSON | tensor payloads
// Payloads are raw little-endian IEEE floats of the stored dtype, packed in
// directory order. The directory lists name, shape, payload offset and byte
// size of every tensor. Optimizer moments are stored as "adam.m/<param>" and
// "adam.v/<param>".

#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

#include "json.hpp"

#include "b2i/corpus.hpp"
#include "b2i/error.hpp"
#include "b2i/model.hpp"
#include "b2i/optim.hpp"
#include "b2i/tensor.hpp"

namespace b2i {

inline constexpr char kCheckpointMagic[4] = {'B', '2', 'I', '1'};
inline constexpr int kCheckpointVersion = 1;

template <typename T>
constexpr const char* dtype_name() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? "f32" : "f64";
}

inline nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"sector_len", c.sector_len}, {"ngram", c.ngram},
          {"embed_count", c.embed_count}, {"byte_dim", c.byte_dim},
          {"channels", c.channels},     {"num_classes", c.num_classes},
          {"branches", to_string(c.branches)}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.sector_len = j.at("sector_len").get<std::size_t>();
  c.ngram = j.at("ngram").get<std::size_t>();
  c.embed_count = j.at("embed_count").get<std::size_t>();
  c.byte_dim = j.at("byte_dim").get<std::size_t>();
  c.channels = j.at("channels").get<std::vector<std::size_t>>();
  c.num_classes = j.at("num_classes").get<std::size_t>();
  c.branches = parse_branches(j.at("branches").get<std::string>());
  return c;
}

struct CheckpointData {
  int format_version = kCheckpointVersion;
  std::string dtype;
  ModelConfig config;
  std::vector<std::string> labels;
  std::vector<std::pair<std::string, Tensor<double>>> tensors;
  std::optional<AdamWConfig> optimizer;
  std::uint64_t optimizer_steps = 0;
  nlohmann::json training = nlohmann::json::object();

  const Tensor<double>* find(std::string_view name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return &t;
    return nullptr;
  }
};

namespace detail {

template <typename T>
void append_le(std::string& out, T v) {
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  const U bits = std::bit_cast<U>(v);
  for (std::size_t i = 0; i < sizeof(U); ++i)
    out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFFu));
}

template <typename T>
T read_le(const unsigned char* p) {
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) bits |= static_cast<U>(p[i]) << (8 * i);
  return std::bit_cast<T>(bits);
}

}  // namespace detail

template <typename T>
std::string serialize_checkpoint(FusionModel<T>& model, const AdamW<T>* opt,
                                 const std::vector<std::string>& labels,
                                 const nlohmann::json& training = nlohmann::json::object()) {
  std::vector<std::pair<std::string, const Tensor<T>*>> items;
  const auto params = model.parameters();
  for (const auto& p : params) items.emplace_back(p.name, p.tensor);
  const bool with_opt = opt && opt->steps() > 0;
  if (with_opt) {
    if (opt->first_moments().size() != params.size()) {
      throw CheckpointError("optimizer state does not match the model");
    }
    for (std::size_t i = 0; i < params.size(); ++i)
      items.emplace_back("adam.m/" + params[i].name, &opt->first_moments()[i]);
    for (std::size_t i = 0; i < params.size(); ++i)
      items.emplace_back("adam.v/" + params[i].name, &opt->second_moments()[i]);
  }

  nlohmann::json dir = nlohmann::json::array();
  std::string payload;
  for (const auto& [name, t] : items) {
    dir.push_back({{"name", name},
                   {"shape", t->shape()},
                   {"offset", payload.size()},
                   {"bytes", t->size() * sizeof(T)}});
    for (T v : t->data()) detail::append_le(payload, v);
  }
  nlohmann::json meta = {{"format_version", kCheckpointVersion},
                         {"dtype", dtype_name<T>()},
                         {"config", config_to_json(model.config())},
                         {"labels", labels},
                         {"tensors", dir},
                         {"training", training}};
  if (with_opt) {
    const auto& c = opt->config();
    meta["optimizer"] = {{"beta1", c.beta1}, {"beta2", c.beta2}, {"eps", c.eps},
                         {"weight_decay", c.weight_decay}, {"t", opt->steps()}};
  } else {
    meta["optimizer"] = nullptr;
  }
  const std::string m = meta.dump();
  std::string out(kCheckpointMagic, 4);
  const std::uint64_t len = m.size();
  for (std::size_t i = 0; i < 8; ++i) out.push_back(static_cast<char>((len >> (8 * i)) & 0xFFu));
  out += m;
  out += payload;
  return out;
}

inline CheckpointData parse_checkpoint(std::string_view bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    throw CheckpointError("not a checkpoint (bad magic)");
  }
  const auto* u = reinterpret_cast<const unsigned char*>(bytes.data());
  std::uint64_t meta_len = 0;
  for (std::size_t i = 0; i < 8; ++i) meta_len |= static_cast<std::uint64_t>(u[4 + i]) << (8 * i);
  if (meta_len > bytes.size() - 12) throw CheckpointError("metadata length exceeds file");
  const std::string_view payload = bytes.substr(12 + meta_len);

  CheckpointData d;
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(bytes.substr(12, meta_len));
    d.format_version = meta.at("format_version").get<int>();
    if (d.format_version != kCheckpointVersion) {
      throw CheckpointError("unsupported checkpoint version " +
                            std::to_string(d.format_version));
    }
    d.dtype = meta.at("dtype").get<std::string>();
    if (d.dtype != "f32" && d.dtype != "f64") {
      throw CheckpointError("unknown dtype '" + d.dtype + "'");
    }
    d.config = config_from_json(meta.at("config"));
    d.config.validate();
    d.labels = meta.at("labels").get<std::vector<std::string>>();
    if (meta.contains("training")) d.training = meta["training"];
    if (!meta.at("optimizer").is_null()) {
      const auto& o = meta["optimizer"];
      d.optimizer = AdamWConfig{o.at("beta1").get<double>(), o.at("beta2").get<double>(),
                                o.at("eps").get<double>(), o.at("weight_decay").get<double>()};
      d.optimizer_steps = o.at("t").get<std::uint64_t>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("bad checkpoint metadata: ") + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("bad checkpoint config: ") + e.what());
  }
  if (d.labels.size() != d.config.num_classes) {
    throw CheckpointError("label table has " + std::to_string(d.labels.size()) +
                          " names for " + std::to_string(d.config.num_classes) + " classes");
  }

  const std::size_t elt = d.dtype == "f32" ? 4 : 8;
  std::uint64_t expect_offset = 0;
  try {
    for (const auto& e : meta.at("tensors")) {
      const auto name = e.at("name").get<std::string>();
      const Shape shape = e.at("shape").get<Shape>();
      const auto offset = e.at("offset").get<std::uint64_t>();
      const auto nbytes = e.at("bytes").get<std::uint64_t>();
      if (nbytes != shape_size(shape) * elt) {
        throw CheckpointError("tensor '" + name + "': byte size does not match shape " +
                              shape_string(shape));
      }
      if (offset != expect_offset) {
        throw CheckpointError("tensor '" + name + "': unexpected payload offset");
      }
      if (offset + nbytes > payload.size()) {
        throw CheckpointError("tensor '" + name + "': payload truncated");
      }
      Tensor<double> t(shape);
      const auto* p = reinterpret_cast<const unsigned char*>(payload.data()) + offset;
      for (std::size_t i = 0; i < t.size(); ++i) {
        t[i] = elt == 4 ? static_cast<double>(detail::read_le<float>(p + 4 * i))
                        : detail::read_le<double>(p + 8 * i);
      }
      d.tensors.emplace_back(name, std::move(t));
      expect_offset += nbytes;
    }
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("bad tensor directory: ") + e.what());
  }
  if (expect_offset != payload.size()) {
    throw CheckpointError("payload length " + std::to_string(payload.size()) +
                          " does not match directory total " + std::to_string(expect_offset));
  }
  return d;
}

inline CheckpointData load_checkpoint(const fs::path& p) {
  std::string bytes;
  try {
    bytes = read_text_file(p);
  } catch (const IngestionError& e) {
    throw CheckpointError(e.what());
  }
  return parse_checkpoint(bytes);
}

/// Writes through a temporary file so a crash never leaves a torn checkpoint.
template <typename T>
void save_checkpoint(const fs::path& p, FusionModel<T>& model, const AdamW<T>* opt,
                     const std::vector<std::string>& labels,
                     const nlohmann::json& training = nlohmann::json::object()) {
  const fs::path tmp = p.string() + ".tmp";
  try {
    write_file(tmp, serialize_checkpoint(model, opt, labels, training));
  } catch (const IngestionError& e) {
    throw CheckpointError(e.what());
  }
  std::error_code ec;
  fs::rename(tmp, p, ec);
  if (ec) throw CheckpointError("cannot move checkpoint into place: " + ec.message());
}

/// Rebuilds the model; every directory entry must match a parameter by name
/// and shape and vice versa (optimizer entries aside).
template <typename T>
FusionModel<T> restore_model(const CheckpointData& d) {
  FusionModel<T> model(d.config);
  std::size_t params = 0;
  for (auto& p : model.parameters()) {
    const Tensor<double>* t = d.find(p.name);
    if (!t) throw CheckpointError("checkpoint lacks tensor '" + p.name + "'");
    if (t->shape() != p.tensor->shape()) {
      throw CheckpointError("tensor '" + p.name + "' has shape " + shape_string(t->shape()) +
                            ", config implies " + shape_string(p.tensor->shape()));
    }
    for (std::size_t i = 0; i < t->size(); ++i) (*p.tensor)[i] = static_cast<T>((*t)[i]);
    ++params;
  }
  std::size_t opt_entries = 0;
  for (const auto& [name, t] : d.tensors)
    if (name.starts_with("adam.")) ++opt_entries;
  if (d.tensors.size() - opt_entries != params) {
    throw CheckpointError("checkpoint has tensors the config does not define");
  }
  return model;
}

template <typename T>
AdamW<T> restore_optimizer(const CheckpointData& d, FusionModel<T>& model,
                           const AdamWConfig& fallback = {}) {
  if (!d.optimizer) return AdamW<T>(fallback);
  AdamW<T> opt(*d.optimizer);
  std::vector<Tensor<T>> m, v;
  for (auto& p : model.parameters()) {
    const Tensor<double>* tm = d.find("adam.m/" + p.name);
    const Tensor<double>* tv = d.find("adam.v/" + p.name);
    if (!tm || !tv) throw CheckpointError("optimizer state missing for '" + p.name + "'");
    if (tm->shape() != p.tensor->shape() || tv->shape() != p.tensor->shape()) {
      throw CheckpointError("optimizer state shape mismatch for '" + p.name + "'");
    }
    m.push_back(tm->cast<T>());
    v.push_back(tv->cast<T>());
  }
  opt.restore(std::move(m), std::move(v), d.optimizer_steps);
  return opt;
}

}  // namespace b2i
