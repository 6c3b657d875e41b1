#include "dermfuse/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace dermfuse {

namespace {

constexpr char kMagic[8] = {'D', 'F', 'C', 'K', 'P', 'T', '0', '1'};

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw DataError("checkpoint: truncated file");
  return v;
}

void put_string(std::ostream& os, const std::string& s) {
  put<uint64_t>(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& is) {
  const uint64_t n = get<uint64_t>(is);
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  if (!is) throw DataError("checkpoint: truncated string");
  return s;
}

void put_doubles(std::ostream& os, const std::vector<double>& v) {
  put<uint64_t>(os, v.size());
  os.write(reinterpret_cast<const char*>(v.data()),
           static_cast<std::streamsize>(v.size() * sizeof(double)));
}

std::vector<double> get_doubles(std::istream& is) {
  const uint64_t n = get<uint64_t>(is);
  std::vector<double> v(n);
  is.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(n * sizeof(double)));
  if (!is) throw DataError("checkpoint: truncated data block");
  return v;
}

}  // namespace

void Checkpoint::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write checkpoint '" + path + "'");
  os.write(kMagic, sizeof(kMagic));
  put<uint32_t>(os, kVersion);
  put<uint64_t>(os, seed);
  put<double>(os, best_val_avg);
  put_string(os, config_text);
  put<uint64_t>(os, params.size());
  for (const auto& [name, tensor] : params) {
    put_string(os, name);
    put<uint32_t>(os, static_cast<uint32_t>(tensor.rank()));
    for (int64_t e : tensor.shape()) put<int64_t>(os, e);
    put_doubles(os, tensor.data());
  }
  put<uint8_t>(os, adam_m.empty() ? 0 : 1);
  if (!adam_m.empty()) {
    put<int64_t>(os, adam_steps);
    for (const auto& m : adam_m) put_doubles(os, m);
    for (const auto& v : adam_v) put_doubles(os, v);
  }
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint '" + path + "'");
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw DataError("checkpoint '" + path + "': bad magic");
  }
  const uint32_t version = get<uint32_t>(is);
  if (version != kVersion) {
    throw DataError("checkpoint '" + path + "': unsupported version " +
                    std::to_string(version));
  }
  Checkpoint c;
  c.seed = get<uint64_t>(is);
  c.best_val_avg = get<double>(is);
  c.config_text = get_string(is);
  const uint64_t n = get<uint64_t>(is);
  c.params.reserve(n);
  for (uint64_t i = 0; i < n; ++i) {
    std::string name = get_string(is);
    const uint32_t rank = get<uint32_t>(is);
    Shape shape(rank);
    for (uint32_t d = 0; d < rank; ++d) shape[d] = get<int64_t>(is);
    std::vector<double> data = get_doubles(is);
    c.params.emplace_back(std::move(name),
                          Tensor::from_data(std::move(shape), std::move(data)));
  }
  if (get<uint8_t>(is) != 0) {
    c.adam_steps = get<int64_t>(is);
    c.adam_m.resize(n);
    c.adam_v.resize(n);
    for (uint64_t i = 0; i < n; ++i) c.adam_m[i] = get_doubles(is);
    for (uint64_t i = 0; i < n; ++i) c.adam_v[i] = get_doubles(is);
  }
  return c;
}

Checkpoint Checkpoint::capture(const Model& model, double best_val_avg) {
  Checkpoint c;
  c.config_text = model.config().canonical();
  c.seed = model.config().seed;
  c.best_val_avg = best_val_avg;
  for (const NamedParam& p : model.parameters()) {
    c.params.emplace_back(p.name,
                          Tensor::from_data(p.tensor.shape(), p.tensor.data()));
  }
  return c;
}

void Checkpoint::restore_into(Model& model) const {
  auto& live = model.parameters();
  if (live.size() != params.size()) {
    throw DataError("checkpoint: parameter count mismatch (" +
                    std::to_string(params.size()) + " stored vs " +
                    std::to_string(live.size()) + " in model)");
  }
  for (size_t i = 0; i < live.size(); ++i) {
    if (live[i].name != params[i].first) {
      throw DataError("checkpoint: parameter '" + params[i].first +
                      "' does not match model parameter '" + live[i].name +
                      "'");
    }
    if (live[i].tensor.shape() != params[i].second.shape()) {
      throw DataError("checkpoint: shape mismatch for '" + live[i].name + "'");
    }
    live[i].tensor.data() = params[i].second.data();
  }
}

RunConfig Checkpoint::config() const {
  return RunConfig::from_ini(config_text);
}

}  // namespace dermfuse
