#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "nn/params.hpp"

namespace crowdnav {

// Checkpoints are a pair of files: <base>.json holds the manifest (format
// version, precision, model tag, step counter, tensor shapes in sorted name
// order) and <base>.bin holds the raw values concatenated in that same order,
// little-endian. Keeping the manifest as text makes checkpoints inspectable
// and diffable; keeping values binary keeps them bit-exact.
struct CheckpointMeta {
  static constexpr int kVersion = 1;
  std::string model_tag;    // which architecture wrote this
  int64_t train_steps = 0;  // environment steps consumed so far
  nlohmann::json extra;     // optimizer state etc., owned by the caller
};

namespace detail {

template <typename T>
const char* precision_name() {
  if constexpr (sizeof(T) == 4)
    return "f32";
  else
    return "f64";
}

template <typename T>
void write_le(std::ostream& out, const std::vector<T>& xs) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(xs.data()),
              static_cast<std::streamsize>(xs.size() * sizeof(T)));
  } else {
    for (T x : xs) {
      unsigned char buf[sizeof(T)];
      std::memcpy(buf, &x, sizeof(T));
      for (size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(buf[i], buf[sizeof(T) - 1 - i]);
      out.write(reinterpret_cast<const char*>(buf), sizeof(T));
    }
  }
}

template <typename T>
void read_le(std::istream& in, std::vector<T>* xs) {
  in.read(reinterpret_cast<char*>(xs->data()),
          static_cast<std::streamsize>(xs->size() * sizeof(T)));
  if (!in) throw std::runtime_error("checkpoint blob truncated");
  if constexpr (std::endian::native != std::endian::little) {
    for (T& x : *xs) {
      unsigned char buf[sizeof(T)];
      std::memcpy(buf, &x, sizeof(T));
      for (size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(buf[i], buf[sizeof(T) - 1 - i]);
      std::memcpy(&x, buf, sizeof(T));
    }
  }
}

}  // namespace detail

template <typename T>
void save_checkpoint(const std::string& base, const ParameterSet<T>& params,
                     const CheckpointMeta& meta) {
  nlohmann::json manifest;
  manifest["version"] = CheckpointMeta::kVersion;
  manifest["precision"] = detail::precision_name<T>();
  manifest["model_tag"] = meta.model_tag;
  manifest["train_steps"] = meta.train_steps;
  if (!meta.extra.is_null()) manifest["extra"] = meta.extra;
  nlohmann::json tensors = nlohmann::json::array();
  for (const std::string& name : params.names()) {
    const Mat<T>& m = params.value(name);
    tensors.push_back({{"name", name}, {"rows", m.rows}, {"cols", m.cols}});
  }
  manifest["tensors"] = tensors;

  std::ofstream jf(base + ".json");
  if (!jf) throw std::runtime_error("cannot write " + base + ".json");
  jf << manifest.dump(2) << "\n";
  jf.close();

  std::ofstream bf(base + ".bin", std::ios::binary);
  if (!bf) throw std::runtime_error("cannot write " + base + ".bin");
  for (const std::string& name : params.names()) detail::write_le(bf, params.value(name).data);
  if (!bf) throw std::runtime_error("short write to " + base + ".bin");
}

// Loads into an already-constructed ParameterSet and insists the stored
// tensor list matches it exactly (same names, same shapes, same order), so a
// checkpoint from a different architecture or width fails loudly.
template <typename T>
CheckpointMeta load_checkpoint(const std::string& base, ParameterSet<T>* params) {
  std::ifstream jf(base + ".json");
  if (!jf) throw std::runtime_error("cannot open " + base + ".json");
  nlohmann::json manifest = nlohmann::json::parse(jf);

  int version = manifest.at("version").get<int>();
  if (version != CheckpointMeta::kVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  std::string precision = manifest.at("precision").get<std::string>();
  if (precision != detail::precision_name<T>())
    throw std::runtime_error("checkpoint precision " + precision + " does not match build");

  const auto& tensors = manifest.at("tensors");
  std::vector<std::string> expected = params->names();
  if (tensors.size() != expected.size())
    throw std::runtime_error("checkpoint tensor count mismatch: stored " +
                             std::to_string(tensors.size()) + ", model has " +
                             std::to_string(expected.size()));
  for (size_t i = 0; i < expected.size(); ++i) {
    const auto& t = tensors[i];
    std::string name = t.at("name").get<std::string>();
    if (name != expected[i])
      throw std::runtime_error("checkpoint tensor order mismatch at '" + name +
                               "', expected '" + expected[i] + "'");
    const Mat<T>& m = params->value(name);
    if (t.at("rows").get<int>() != m.rows || t.at("cols").get<int>() != m.cols)
      throw std::runtime_error("checkpoint shape mismatch for '" + name + "'");
  }

  std::ifstream bf(base + ".bin", std::ios::binary);
  if (!bf) throw std::runtime_error("cannot open " + base + ".bin");
  for (const std::string& name : expected) detail::read_le(bf, &params->value(name).data);
  char probe;
  if (bf.read(&probe, 1))
    throw std::runtime_error("checkpoint blob has trailing bytes");
  params->bump_version();

  CheckpointMeta meta;
  meta.model_tag = manifest.value("model_tag", std::string());
  meta.train_steps = manifest.value("train_steps", int64_t{0});
  if (manifest.contains("extra")) meta.extra = manifest["extra"];
  return meta;
}

}  // namespace crowdnav
