#include "dermfuse/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "dermfuse/errors.hpp"

namespace dermfuse {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      const std::string t = trim(cur);
      if (!t.empty()) out.push_back(t);
      cur.clear();
    } else {
      cur += c;
    }
  }
  const std::string t = trim(cur);
  if (!t.empty()) out.push_back(t);
  return out;
}

std::string join_list(const std::vector<std::string>& items) {
  std::string out;
  for (size_t i = 0; i < items.size(); ++i) {
    if (i) out += ",";
    out += items[i];
  }
  return out;
}

int parse_int(const std::string& key, const std::string& v) {
  int out = 0;
  const std::string t = trim(v);
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
  if (ec != std::errc() || p != t.data() + t.size()) {
    throw ConfigError(key + ": expected integer, got '" + v + "'");
  }
  return out;
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
  uint64_t out = 0;
  const std::string t = trim(v);
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
  if (ec != std::errc() || p != t.data() + t.size()) {
    throw ConfigError(key + ": expected unsigned integer, got '" + v + "'");
  }
  return out;
}

double parse_num(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  try {
    size_t pos = 0;
    const double out = std::stod(t, &pos);
    if (pos != t.size()) throw std::invalid_argument(t);
    return out;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected number, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  if (t == "on" || t == "true" || t == "1") return true;
  if (t == "off" || t == "false" || t == "0") return false;
  throw ConfigError(key + ": expected on/off, got '" + v + "'");
}

std::string format_bool(bool b) { return b ? "on" : "off"; }

template <size_t N>
std::array<int, N> parse_int_array(const std::string& key,
                                   const std::string& v) {
  const auto items = split_list(v);
  if (items.size() != N) {
    throw ConfigError(key + ": expected " + std::to_string(N) +
                      " comma-separated integers, got '" + v + "'");
  }
  std::array<int, N> out{};
  for (size_t i = 0; i < N; ++i) out[i] = parse_int(key, items[i]);
  return out;
}

template <size_t N>
std::string format_int_array(const std::array<int, N>& a) {
  std::vector<std::string> items;
  for (int v : a) items.push_back(std::to_string(v));
  return join_list(items);
}

std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  for (const auto& item : split_list(v)) out.push_back(parse_int(key, item));
  if (out.empty()) throw ConfigError(key + ": expected a non-empty list");
  return out;
}

std::string format_int_list(const std::vector<int>& a) {
  std::vector<std::string> items;
  for (int v : a) items.push_back(std::to_string(v));
  return join_list(items);
}

struct KeyAccessor {
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

const std::map<std::string, KeyAccessor>& key_table() {
  static const std::map<std::string, KeyAccessor> table = [] {
    std::map<std::string, KeyAccessor> t;
    auto k = [&t](const std::string& key,
                  std::function<std::string(const RunConfig&)> get,
                  std::function<void(RunConfig&, const std::string&)> set) {
      t.emplace(key, KeyAccessor{std::move(get), std::move(set)});
    };

    k("run.seed",
      [](const RunConfig& c) { return std::to_string(c.seed); },
      [](RunConfig& c, const std::string& v) {
        c.seed = parse_u64("run.seed", v);
      });

    k("encoder.image_size",
      [](const RunConfig& c) { return std::to_string(c.encoder.image_size); },
      [](RunConfig& c, const std::string& v) {
        c.encoder.image_size = parse_int("encoder.image_size", v);
      });
    k("encoder.patch_size",
      [](const RunConfig& c) { return std::to_string(c.encoder.patch_size); },
      [](RunConfig& c, const std::string& v) {
        c.encoder.patch_size = parse_int("encoder.patch_size", v);
      });
    k("encoder.stage_dims",
      [](const RunConfig& c) { return format_int_array(c.encoder.stage_dims); },
      [](RunConfig& c, const std::string& v) {
        c.encoder.stage_dims = parse_int_array<4>("encoder.stage_dims", v);
      });
    k("encoder.window",
      [](const RunConfig& c) { return std::to_string(c.encoder.window); },
      [](RunConfig& c, const std::string& v) {
        c.encoder.window = parse_int("encoder.window", v);
      });
    k("encoder.heads",
      [](const RunConfig& c) { return format_int_array(c.encoder.heads); },
      [](RunConfig& c, const std::string& v) {
        c.encoder.heads = parse_int_array<4>("encoder.heads", v);
      });
    k("encoder.blocks",
      [](const RunConfig& c) { return format_int_array(c.encoder.blocks); },
      [](RunConfig& c, const std::string& v) {
        c.encoder.blocks = parse_int_array<4>("encoder.blocks", v);
      });
    k("encoder.shared_weights",
      [](const RunConfig& c) { return format_bool(c.encoder.shared_weights); },
      [](RunConfig& c, const std::string& v) {
        c.encoder.shared_weights = parse_bool("encoder.shared_weights", v);
      });
    k("encoder.meta_hidden",
      [](const RunConfig& c) { return format_int_list(c.encoder.meta_hidden); },
      [](RunConfig& c, const std::string& v) {
        c.encoder.meta_hidden = parse_int_list("encoder.meta_hidden", v);
      });
    k("encoder.meta_dim",
      [](const RunConfig& c) { return std::to_string(c.encoder.meta_dim); },
      [](RunConfig& c, const std::string& v) {
        c.encoder.meta_dim = parse_int("encoder.meta_dim", v);
      });
    k("encoder.activation",
      [](const RunConfig& c) { return c.encoder.activation; },
      [](RunConfig& c, const std::string& v) {
        c.encoder.activation = trim(v);
      });
    k("encoder.mlp_ratio",
      [](const RunConfig& c) { return std::to_string(c.encoder.mlp_ratio); },
      [](RunConfig& c, const std::string& v) {
        c.encoder.mlp_ratio = parse_int("encoder.mlp_ratio", v);
      });

    k("fusion.tmct",
      [](const RunConfig& c) { return format_bool(c.fusion.tmct); },
      [](RunConfig& c, const std::string& v) {
        c.fusion.tmct = parse_bool("fusion.tmct", v);
      });
    k("fusion.meta_tokens",
      [](const RunConfig& c) { return std::to_string(c.fusion.meta_tokens); },
      [](RunConfig& c, const std::string& v) {
        c.fusion.meta_tokens = parse_int("fusion.meta_tokens", v);
      });
    k("fusion.meta_kv",
      [](const RunConfig& c) { return c.fusion.meta_kv; },
      [](RunConfig& c, const std::string& v) { c.fusion.meta_kv = trim(v); });
    k("fusion.decision",
      [](const RunConfig& c) { return join_list(c.fusion.decision); },
      [](RunConfig& c, const std::string& v) {
        c.fusion.decision = split_list(v);
      });
    k("fusion.modalities",
      [](const RunConfig& c) { return join_list(c.fusion.modalities); },
      [](RunConfig& c, const std::string& v) {
        c.fusion.modalities = split_list(v);
      });
    k("fusion.heads",
      [](const RunConfig& c) { return std::to_string(c.fusion.heads); },
      [](RunConfig& c, const std::string& v) {
        c.fusion.heads = parse_int("fusion.heads", v);
      });

    k("head.mha",
      [](const RunConfig& c) { return format_bool(c.head.mha); },
      [](RunConfig& c, const std::string& v) {
        c.head.mha = parse_bool("head.mha", v);
      });
    k("head.heads",
      [](const RunConfig& c) { return std::to_string(c.head.heads); },
      [](RunConfig& c, const std::string& v) {
        c.head.heads = parse_int("head.heads", v);
      });
    k("head.dim",
      [](const RunConfig& c) { return std::to_string(c.head.dim); },
      [](RunConfig& c, const std::string& v) {
        c.head.dim = parse_int("head.dim", v);
      });

    k("train.loss", [](const RunConfig& c) { return c.train.loss; },
      [](RunConfig& c, const std::string& v) { c.train.loss = trim(v); });
    k("train.temperature",
      [](const RunConfig& c) { return format_double(c.train.temperature); },
      [](RunConfig& c, const std::string& v) {
        c.train.temperature = parse_num("train.temperature", v);
      });
    k("train.lr",
      [](const RunConfig& c) { return format_double(c.train.lr); },
      [](RunConfig& c, const std::string& v) {
        c.train.lr = parse_num("train.lr", v);
      });
    k("train.weight_decay",
      [](const RunConfig& c) { return format_double(c.train.weight_decay); },
      [](RunConfig& c, const std::string& v) {
        c.train.weight_decay = parse_num("train.weight_decay", v);
      });
    k("train.beta1",
      [](const RunConfig& c) { return format_double(c.train.beta1); },
      [](RunConfig& c, const std::string& v) {
        c.train.beta1 = parse_num("train.beta1", v);
      });
    k("train.beta2",
      [](const RunConfig& c) { return format_double(c.train.beta2); },
      [](RunConfig& c, const std::string& v) {
        c.train.beta2 = parse_num("train.beta2", v);
      });
    k("train.epsilon",
      [](const RunConfig& c) { return format_double(c.train.epsilon); },
      [](RunConfig& c, const std::string& v) {
        c.train.epsilon = parse_num("train.epsilon", v);
      });
    k("train.epochs",
      [](const RunConfig& c) { return std::to_string(c.train.epochs); },
      [](RunConfig& c, const std::string& v) {
        c.train.epochs = parse_int("train.epochs", v);
      });
    k("train.batch_size",
      [](const RunConfig& c) { return std::to_string(c.train.batch_size); },
      [](RunConfig& c, const std::string& v) {
        c.train.batch_size = parse_int("train.batch_size", v);
      });
    k("train.schedule", [](const RunConfig& c) { return c.train.schedule; },
      [](RunConfig& c, const std::string& v) { c.train.schedule = trim(v); });
    k("train.augment",
      [](const RunConfig& c) { return join_list(c.train.augment); },
      [](RunConfig& c, const std::string& v) {
        c.train.augment = split_list(v);
      });
    k("train.mixup_alpha",
      [](const RunConfig& c) { return format_double(c.train.mixup_alpha); },
      [](RunConfig& c, const std::string& v) {
        c.train.mixup_alpha = parse_num("train.mixup_alpha", v);
      });

    k("data.n_train",
      [](const RunConfig& c) { return std::to_string(c.data.n_train); },
      [](RunConfig& c, const std::string& v) {
        c.data.n_train = parse_int("data.n_train", v);
      });
    k("data.n_val",
      [](const RunConfig& c) { return std::to_string(c.data.n_val); },
      [](RunConfig& c, const std::string& v) {
        c.data.n_val = parse_int("data.n_val", v);
      });
    k("data.n_test",
      [](const RunConfig& c) { return std::to_string(c.data.n_test); },
      [](RunConfig& c, const std::string& v) {
        c.data.n_test = parse_int("data.n_test", v);
      });
    k("data.cross_signal",
      [](const RunConfig& c) { return format_double(c.data.cross_signal); },
      [](RunConfig& c, const std::string& v) {
        c.data.cross_signal = parse_num("data.cross_signal", v);
      });
    k("data.signal",
      [](const RunConfig& c) { return format_double(c.data.signal); },
      [](RunConfig& c, const std::string& v) {
        c.data.signal = parse_num("data.signal", v);
      });
    k("data.noise",
      [](const RunConfig& c) { return format_double(c.data.noise); },
      [](RunConfig& c, const std::string& v) {
        c.data.noise = parse_num("data.noise", v);
      });
    k("data.mode_noise",
      [](const RunConfig& c) { return format_double(c.data.mode_noise); },
      [](RunConfig& c, const std::string& v) {
        c.data.mode_noise = parse_num("data.mode_noise", v);
      });
    k("data.meta_bias",
      [](const RunConfig& c) { return format_double(c.data.meta_bias); },
      [](RunConfig& c, const std::string& v) {
        c.data.meta_bias = parse_num("data.meta_bias", v);
      });
    k("data.correlations",
      [](const RunConfig& c) { return c.data.correlations; },
      [](RunConfig& c, const std::string& v) {
        c.data.correlations = trim(v);
      });

    return t;
  }();
  return table;
}

bool list_is_subset(const std::vector<std::string>& items,
                    const std::vector<std::string>& allowed) {
  for (const auto& v : items) {
    if (std::find(allowed.begin(), allowed.end(), v) == allowed.end()) {
      return false;
    }
  }
  return true;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw NumericError("format_double failed");
  return std::string(buf, p);
}

int EncoderConfig::grid_side(int stage) const {
  int side = image_size / patch_size;
  for (int s = 0; s < stage; ++s) side /= 2;
  return side;
}

int EncoderConfig::tokens(int stage) const {
  const int side = grid_side(stage);
  return side * side;
}

int EncoderConfig::window_at(int stage) const {
  return std::min(window, grid_side(stage));
}

bool FusionConfig::has_modality(const std::string& m) const {
  return std::find(modalities.begin(), modalities.end(), m) !=
         modalities.end();
}

void RunConfig::validate() const {
  const EncoderConfig& e = encoder;
  if (e.image_size <= 0 || e.patch_size <= 0 ||
      e.image_size % e.patch_size != 0) {
    throw ConfigError("encoder.image_size must be a positive multiple of "
                      "encoder.patch_size");
  }
  const int base_grid = e.image_size / e.patch_size;
  if (base_grid % 8 != 0) {
    throw ConfigError(
        "encoder: patch grid side must be divisible by 8 so that three "
        "merges reach stage 3 (got side " + std::to_string(base_grid) + ")");
  }
  for (int s = 0; s < 4; ++s) {
    if (e.stage_dims[static_cast<size_t>(s)] <= 0) {
      throw ConfigError("encoder.stage_dims must be positive");
    }
    if (s > 0 && e.stage_dims[static_cast<size_t>(s)] !=
                     2 * e.stage_dims[static_cast<size_t>(s - 1)]) {
      throw ConfigError(
          "encoder.stage_dims must double at every stage (patch merging "
          "doubles channels)");
    }
    if (e.heads[static_cast<size_t>(s)] <= 0 ||
        e.stage_dims[static_cast<size_t>(s)] %
                e.heads[static_cast<size_t>(s)] !=
            0) {
      throw ConfigError("encoder.heads must divide encoder.stage_dims at "
                        "stage " + std::to_string(s));
    }
    if (e.blocks[static_cast<size_t>(s)] <= 0) {
      throw ConfigError("encoder.blocks must be positive");
    }
    const int side = e.grid_side(s);
    const int win = e.window_at(s);
    if (win <= 0 || side % win != 0) {
      throw ConfigError("encoder.window: stage " + std::to_string(s) +
                        " grid side " + std::to_string(side) +
                        " is not divisible by window " + std::to_string(win));
    }
  }
  if (e.meta_dim != 20) {
    throw ConfigError("encoder.meta_dim must be 20 (fixed metadata encoding "
                      "length)");
  }
  if (e.meta_hidden.empty()) {
    throw ConfigError("encoder.meta_hidden must name at least one layer");
  }
  for (int w : e.meta_hidden) {
    if (w <= 0) {
      throw ConfigError("encoder.meta_hidden widths must be positive");
    }
  }
  if (e.activation != "gelu" && e.activation != "relu") {
    throw ConfigError("encoder.activation must be gelu or relu");
  }
  if (e.mlp_ratio <= 0) throw ConfigError("encoder.mlp_ratio must be positive");

  if (head.dim <= 0 || head.heads <= 0 || head.dim % head.heads != 0) {
    throw ConfigError("head.heads must divide head.dim");
  }
  if (e.meta_feature_dim() != head.dim) {
    throw ConfigError(
        "encoder.meta_hidden must end at head.dim so decision features share "
        "one width (got " + std::to_string(e.meta_feature_dim()) + " vs " +
        std::to_string(head.dim) + ")");
  }

  if (fusion.meta_tokens <= 0 ||
      e.meta_feature_dim() % fusion.meta_tokens != 0) {
    throw ConfigError("fusion.meta_tokens must divide the metadata feature "
                      "dimension");
  }
  if (fusion.meta_kv != "meta" && fusion.meta_kv != "concat-image") {
    throw ConfigError("fusion.meta_kv must be 'meta' or 'concat-image'");
  }
  if (fusion.heads <= 0 || head.dim % fusion.heads != 0) {
    throw ConfigError("fusion.heads must divide head.dim");
  }
  const std::vector<std::string> mods{"cli", "der", "meta"};
  if (fusion.decision.empty() || !list_is_subset(fusion.decision, mods)) {
    throw ConfigError("fusion.decision must be a non-empty subset of "
                      "cli,der,meta");
  }
  if (fusion.modalities.empty() || !list_is_subset(fusion.modalities, mods)) {
    throw ConfigError("fusion.modalities must be a non-empty subset of "
                      "cli,der,meta");
  }

  if (train.loss != "twl" && train.loss != "bce") {
    throw ConfigError("train.loss must be twl or bce");
  }
  if (!(train.temperature > 0.0)) {
    throw ConfigError("train.temperature must be positive");
  }
  if (!(train.lr > 0.0)) throw ConfigError("train.lr must be positive");
  if (train.weight_decay < 0.0) {
    throw ConfigError("train.weight_decay must be non-negative");
  }
  if (!(train.beta1 >= 0.0 && train.beta1 < 1.0) ||
      !(train.beta2 >= 0.0 && train.beta2 < 1.0)) {
    throw ConfigError("train.beta1/beta2 must lie in [0, 1)");
  }
  if (!(train.epsilon > 0.0)) {
    throw ConfigError("train.epsilon must be positive");
  }
  if (train.epochs < 0) throw ConfigError("train.epochs must be non-negative");
  if (train.batch_size <= 0) {
    throw ConfigError("train.batch_size must be positive");
  }
  if (train.schedule != "cosine" && train.schedule != "constant") {
    throw ConfigError("train.schedule must be cosine or constant");
  }
  const std::vector<std::string> augs{"hflip", "vflip", "shift", "mixup"};
  if (!list_is_subset(train.augment, augs)) {
    throw ConfigError(
        "train.augment must be a subset of hflip,vflip,shift,mixup");
  }
  const bool mixup_on =
      std::find(train.augment.begin(), train.augment.end(), "mixup") !=
      train.augment.end();
  if (mixup_on && !(train.mixup_alpha > 0.0)) {
    throw ConfigError("train.mixup_alpha must be positive when mixup is on");
  }

  if (data.n_train <= 0 || data.n_val < 0 || data.n_test < 0) {
    throw ConfigError("data split sizes must be positive (train) and "
                      "non-negative (val/test)");
  }
  if (data.cross_signal < 0.0 || data.cross_signal > 1.0) {
    throw ConfigError("data.cross_signal must lie in [0, 1]");
  }
  if (data.signal < 0.0 || data.noise < 0.0 || data.mode_noise < 0.0) {
    throw ConfigError("data.signal and noise levels must be non-negative");
  }
  if (data.meta_bias < 0.0 || data.meta_bias > 1.0) {
    throw ConfigError("data.meta_bias must lie in [0, 1]");
  }
}

std::string RunConfig::canonical() const {
  // Sections and keys come out sorted because the key table is an ordered
  // map over "section.key" strings.
  std::ostringstream os;
  std::string section;
  for (const auto& [key, acc] : key_table()) {
    const size_t dot = key.find('.');
    const std::string sec = key.substr(0, dot);
    if (sec != section) {
      if (!section.empty()) os << "\n";
      os << "[" << sec << "]\n";
      section = sec;
    }
    os << key.substr(dot + 1) << " = " << acc.get(*this) << "\n";
  }
  return os.str();
}

uint64_t RunConfig::hash() const {
  const std::string text = canonical();
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string RunConfig::hash_hex() const {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(hash()));
  return std::string(buf);
}

void RunConfig::set(const std::string& dotted_key, const std::string& value) {
  const auto& table = key_table();
  auto it = table.find(trim(dotted_key));
  if (it == table.end()) {
    throw ConfigError("unknown config key '" + dotted_key + "'");
  }
  it->second.set(*this, value);
}

std::string RunConfig::get(const std::string& dotted_key) const {
  const auto& table = key_table();
  auto it = table.find(trim(dotted_key));
  if (it == table.end()) {
    throw ConfigError("unknown config key '" + dotted_key + "'");
  }
  return it->second.get(*this);
}

const std::vector<std::string>& RunConfig::known_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> out;
    for (const auto& [key, acc] : key_table()) out.push_back(key);
    return out;
  }();
  return keys;
}

RunConfig RunConfig::from_ini(const std::string& text) {
  RunConfig cfg;
  std::istringstream is(text);
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']') {
        throw ConfigError("config line " + std::to_string(line_no) +
                          ": malformed section header '" + t + "'");
      }
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    const size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected key = value, got '" + t + "'");
    }
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    const std::string dotted = section.empty() ? key : section + "." + key;
    cfg.set(dotted, value);
  }
  return cfg;
}

RunConfig RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_ini(buf.str());
}

void RunConfig::save_file(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write config file '" + path + "'");
  out << canonical();
}

}  // namespace dermfuse
