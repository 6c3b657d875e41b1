#include "dermfuse/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "dermfuse/errors.hpp"
#include "dermfuse/rng.hpp"

namespace dermfuse {

namespace {

// Stream tags for seed derivation; parallel and serial generation agree
// because every sample gets its own derived stream.
enum : uint64_t {
  kTagLabels = 1,
  kTagCopula = 2,
  kTagMeta = 3,
  kTagImage = 4,
  kTagPattern = 5,
  kTagSplit = 6,
  kTagPlaceholder = 7,
  kTagCrossBits = 8,
};

constexpr int kCrossBits = 3;

int sample_categorical(Rng& rng, const std::vector<double>& probs) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size()) - 1;
}

// Largest-remainder quotas: counts sum to n and track n*p within rounding.
std::vector<int64_t> quota_counts(const std::vector<double>& probs,
                                  int64_t n) {
  std::vector<int64_t> counts(probs.size());
  std::vector<std::pair<double, size_t>> remainders;
  int64_t assigned = 0;
  for (size_t i = 0; i < probs.size(); ++i) {
    const double exact = probs[i] * static_cast<double>(n);
    counts[i] = static_cast<int64_t>(std::floor(exact));
    assigned += counts[i];
    remainders.push_back({exact - std::floor(exact), i});
  }
  std::sort(remainders.begin(), remainders.end(),
            [](const auto& a, const auto& b) {
              if (a.first != b.first) return a.first > b.first;
              return a.second < b.second;
            });
  for (int64_t r = 0; r < n - assigned; ++r) {
    counts[remainders[static_cast<size_t>(r)].second] += 1;
  }
  return counts;
}

struct PatternSet {
  // patterns[task][class][modality], each image_size^2 field with peak 1.
  std::array<std::vector<std::array<std::vector<double>, 2>>, kNumTasks>
      class_patterns;
  // One pattern pair per planted cross-modal bit.
  std::array<std::array<std::vector<double>, 2>, kCrossBits> cross_patterns;
  // Unsigned mode bank for structured distractor noise.
  std::vector<std::vector<double>> mode_bank;
};

// Separable cosine mode (u, v), sign-flipped per modality stream by the rng,
// peak amplitude 1. Distinct modes are orthogonal over the pixel grid, which
// keeps the 24 class patterns mutually separable.
std::vector<double> cosine_mode_field(int size, int u, int v, Rng& rng) {
  const double sign = rng.below(2) == 0 ? 1.0 : -1.0;
  std::vector<double> field(static_cast<size_t>(size) * size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      field[static_cast<size_t>(y) * size + x] =
          sign * std::cos(M_PI * u * (y + 0.5) / size) *
          std::cos(M_PI * v * (x + 0.5) / size);
    }
  }
  return field;
}

// Enumerates the non-DC modes of the (kModeSide+1)^2 grid in a fixed order:
// index 0 -> (0,1), 1 -> (0,2), ... row-major skipping (0,0).
void mode_for_index(int index, int& u, int& v) {
  constexpr int kModeSide = 6;
  ++index;  // skip DC
  u = index / kModeSide;
  v = index % kModeSide;
}

PatternSet build_patterns(int size, uint64_t seed) {
  const TaskSpec& spec = TaskSpec::instance();
  PatternSet ps;
  int mode = 0;
  for (int t = 0; t < kNumTasks; ++t) {
    auto& per_class = ps.class_patterns[static_cast<size_t>(t)];
    per_class.resize(static_cast<size_t>(spec.cardinality(t)));
    for (int c = 0; c < spec.cardinality(t); ++c, ++mode) {
      int u = 0, v = 0;
      mode_for_index(mode, u, v);
      for (int m = 0; m < 2; ++m) {
        Rng rng(Rng::derive(seed, {kTagPattern, static_cast<uint64_t>(t),
                                   static_cast<uint64_t>(c),
                                   static_cast<uint64_t>(m)}));
        per_class[static_cast<size_t>(c)][static_cast<size_t>(m)] =
            cosine_mode_field(size, u, v, rng);
      }
    }
  }
  for (int j = 0; j < kCrossBits; ++j, ++mode) {
    int u = 0, v = 0;
    mode_for_index(mode, u, v);
    for (int m = 0; m < 2; ++m) {
      Rng rng(Rng::derive(seed, {kTagPattern, 100 + static_cast<uint64_t>(j),
                                 0, static_cast<uint64_t>(m)}));
      ps.cross_patterns[static_cast<size_t>(j)][static_cast<size_t>(m)] =
          cosine_mode_field(size, u, v, rng);
    }
  }
  const int n_bank = mode;
  ps.mode_bank.reserve(static_cast<size_t>(n_bank));
  for (int k = 0; k < n_bank; ++k) {
    int u = 0, v = 0;
    mode_for_index(k, u, v);
    std::vector<double> field(static_cast<size_t>(size) * size);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        field[static_cast<size_t>(y) * size + x] =
            std::cos(M_PI * u * (y + 0.5) / size) *
            std::cos(M_PI * v * (x + 0.5) / size);
      }
    }
    ps.mode_bank.push_back(std::move(field));
  }
  return ps;
}

// Diagnosis-conditioned metadata distributions (difficulty, elevation,
// management). Rows are DIAG classes in BCC, NEV, MEL, MISC, SK order.
const double kDifficultyByDiag[5][3] = {{0.20, 0.50, 0.30},
                                        {0.60, 0.30, 0.10},
                                        {0.10, 0.30, 0.60},
                                        {0.30, 0.40, 0.30},
                                        {0.40, 0.40, 0.20}};
const double kElevationByDiag[5][3] = {{0.20, 0.50, 0.30},
                                       {0.50, 0.40, 0.10},
                                       {0.20, 0.40, 0.40},
                                       {0.40, 0.40, 0.20},
                                       {0.30, 0.50, 0.20}};
const double kManagementByDiag[5][3] = {{0.80, 0.15, 0.05},
                                        {0.20, 0.40, 0.40},
                                        {0.90, 0.08, 0.02},
                                        {0.50, 0.30, 0.20},
                                        {0.30, 0.30, 0.40}};

std::vector<double> biased(const double* cond, int n, double bias) {
  std::vector<double> p(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    p[static_cast<size_t>(i)] =
        (1.0 - bias) / static_cast<double>(n) + bias * cond[i];
  }
  return p;
}

std::vector<double> random_mode_mix(int size, Rng& rng) {
  std::vector<double> field(static_cast<size_t>(size) * size, 0.0);
  for (int k = 0; k < 5; ++k) {
    const int idx = static_cast<int>(rng.below(20));
    int u = 0, v = 0;
    mode_for_index(idx, u, v);
    const double w = rng.normal();
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        field[static_cast<size_t>(y) * size + x] +=
            w * std::cos(M_PI * u * (y + 0.5) / size) *
            std::cos(M_PI * v * (x + 0.5) / size);
      }
    }
  }
  double peak = 0.0;
  for (double v : field) peak = std::max(peak, std::abs(v));
  if (peak > 0.0) {
    for (double& v : field) v /= peak;
  }
  return field;
}

Tensor placeholder_image(int size, uint64_t row_seed) {
  Rng rng(Rng::derive(row_seed, {kTagPlaceholder}));
  const std::vector<double> field = random_mode_mix(size, rng);
  Tensor img = Tensor::zeros({size, size, 3});
  auto& d = img.data();
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double v =
          0.5 + 0.3 * field[static_cast<size_t>(y) * size + x] +
          0.05 * rng.normal();
      for (int c = 0; c < 3; ++c) {
        d[static_cast<size_t>((y * size + x) * 3 + c)] =
            std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return img;
}

uint64_t fnv1a(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string csv_trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> csv_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(csv_trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(csv_trim(cur));
  return out;
}

}  // namespace

MarginalTable MarginalTable::derm7pt_train() {
  // Training-split counts. The published PIG "IR" train figure (226) is
  // inconsistent with both its row total (305) and the 413-sample column
  // sum; 116 is the unique value satisfying both, so it is used here.
  MarginalTable t;
  t.counts = {{
      {19, 256, 90, 32, 16},  // DIAG
      {160, 160, 93},         // PN
      {339, 74},              // BWV
      {347, 43, 23},          // VS
      {253, 44, 116},         // PIG
      {273, 39, 101},         // STR
      {84, 156, 173},         // DaG
      {317, 96},              // RS
  }};
  for (int task = 0; task < kNumTasks; ++task) {
    const auto& c = t.counts[static_cast<size_t>(task)];
    const double total = std::accumulate(c.begin(), c.end(), 0.0);
    auto& p = t.probs[static_cast<size_t>(task)];
    p.resize(c.size());
    for (size_t i = 0; i < c.size(); ++i) {
      p[i] = static_cast<double>(c[i]) / total;
    }
  }
  t.validate();
  return t;
}

void MarginalTable::validate() const {
  const TaskSpec& spec = TaskSpec::instance();
  for (int task = 0; task < kNumTasks; ++task) {
    const auto& p = probs[static_cast<size_t>(task)];
    if (static_cast<int>(p.size()) != spec.cardinality(task)) {
      throw DataError("marginal table: wrong class count for task " +
                      spec.task(task).name);
    }
    double sum = 0.0;
    for (double v : p) {
      if (v < 0.0) throw DataError("marginal table: negative probability");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-12) {
      throw DataError("marginal table: probabilities for task " +
                      spec.task(task).name + " sum to " +
                      std::to_string(sum));
    }
  }
}

CorrelationPlan CorrelationPlan::parse(const std::string& text) {
  CorrelationPlan plan;
  const TaskSpec& spec = TaskSpec::instance();
  std::istringstream is(text);
  std::string entry;
  while (std::getline(is, entry, ';')) {
    const std::string t = csv_trim(entry);
    if (t.empty()) continue;
    // TASK:CLASS>TASK:CLASS:strength
    const size_t arrow = t.find('>');
    if (arrow == std::string::npos) {
      throw ConfigError("correlation rule '" + t + "': missing '>'");
    }
    auto parse_pair = [&](const std::string& part, int& task, int& cls,
                          std::string* tail) {
      const size_t c1 = part.find(':');
      if (c1 == std::string::npos) {
        throw ConfigError("correlation rule '" + t + "': expected TASK:CLASS");
      }
      const std::string task_name = csv_trim(part.substr(0, c1));
      std::string rest = part.substr(c1 + 1);
      std::string cls_name = rest;
      if (tail) {
        const size_t c2 = rest.find(':');
        if (c2 == std::string::npos) {
          throw ConfigError("correlation rule '" + t +
                            "': missing strength");
        }
        cls_name = csv_trim(rest.substr(0, c2));
        *tail = csv_trim(rest.substr(c2 + 1));
      }
      task = spec.task_index(task_name);
      if (task < 0) {
        throw ConfigError("correlation rule '" + t + "': unknown task '" +
                          task_name + "'");
      }
      cls = spec.class_index(task, csv_trim(cls_name));
      if (cls < 0) {
        throw ConfigError("correlation rule '" + t + "': unknown class '" +
                          cls_name + "'");
      }
    };
    CorrelationRule rule{};
    parse_pair(t.substr(0, arrow), rule.task_a, rule.class_a, nullptr);
    std::string strength;
    parse_pair(t.substr(arrow + 1), rule.task_b, rule.class_b, &strength);
    try {
      rule.strength = std::stod(strength);
    } catch (const std::exception&) {
      throw ConfigError("correlation rule '" + t + "': bad strength '" +
                        strength + "'");
    }
    if (rule.strength < 0.0 || rule.strength > 1.0) {
      throw ConfigError("correlation rule '" + t +
                        "': strength must lie in [0, 1]");
    }
    plan.rules.push_back(rule);
  }
  return plan;
}

const MetaVocab& MetaVocab::instance() {
  static const MetaVocab vocab = [] {
    MetaVocab v;
    int off = 0;
    auto add = [&](const std::string& name,
                   std::vector<std::string> values) {
      v.groups.push_back({name, std::move(values), off});
      off += static_cast<int>(v.groups.back().values.size());
    };
    add("sex", {"female", "male"});
    add("difficulty", {"low", "medium", "high"});
    add("elevation", {"flat", "palpable", "nodular"});
    add("management",
        {"excision", "clinical follow up", "no further examination"});
    add("location", {"back", "lower limbs", "upper limbs", "chest", "abdomen",
                     "head neck", "buttocks", "genital areas", "acral"});
    return v;
  }();
  return vocab;
}

int MetaVocab::total_dim() const {
  const Group& last = groups.back();
  return last.offset + static_cast<int>(last.values.size());
}

const MetaVocab::Group& MetaVocab::group(const std::string& name) const {
  for (const Group& g : groups) {
    if (g.name == name) return g;
  }
  throw DataError("unknown metadata group '" + name + "'");
}

std::vector<Sample> Dataset::gather(const std::vector<int64_t>& idx) const {
  std::vector<Sample> out;
  out.reserve(idx.size());
  for (int64_t i : idx) out.push_back(samples[static_cast<size_t>(i)]);
  return out;
}

std::vector<Sample> generate_samples(int64_t n, const MarginalTable& marginals,
                                     const CorrelationPlan& plan,
                                     const GenParams& params, uint64_t seed) {
  if (n < 1) throw ConfigError("generate_samples: n must be at least 1");
  marginals.validate();
  const TaskSpec& spec = TaskSpec::instance();
  const MetaVocab& vocab = MetaVocab::instance();
  const int size = params.image_size;

  // Per-task labels from shuffled quota urns: empirical frequencies are the
  // marginals up to rounding.
  std::vector<TaskLabels> labels(static_cast<size_t>(n));
  for (int t = 0; t < kNumTasks; ++t) {
    const auto counts = quota_counts(marginals.probs[static_cast<size_t>(t)], n);
    std::vector<int> urn;
    urn.reserve(static_cast<size_t>(n));
    for (size_t c = 0; c < counts.size(); ++c) {
      urn.insert(urn.end(), static_cast<size_t>(counts[c]),
                 static_cast<int>(c));
    }
    Rng rng(Rng::derive(seed, {kTagLabels, static_cast<uint64_t>(t)}));
    rng.shuffle(urn);
    for (int64_t i = 0; i < n; ++i) {
      labels[static_cast<size_t>(i)][static_cast<size_t>(t)] =
          urn[static_cast<size_t>(i)];
    }
  }

  for (size_t r = 0; r < plan.rules.size(); ++r) {
    const CorrelationRule& rule = plan.rules[r];
    for (int64_t i = 0; i < n; ++i) {
      auto& y = labels[static_cast<size_t>(i)];
      if (y[static_cast<size_t>(rule.task_a)] != rule.class_a) continue;
      Rng rng(Rng::derive(seed, {kTagCopula, static_cast<uint64_t>(r),
                                 static_cast<uint64_t>(i)}));
      if (rng.uniform() < rule.strength) {
        y[static_cast<size_t>(rule.task_b)] = rule.class_b;
      }
    }
  }

  PatternSet patterns;
  if (params.with_images) {
    patterns = build_patterns(
        size, params.pattern_seed != 0 ? params.pattern_seed : seed);
  }

  // Channel weights keep the three channels correlated but not identical.
  const double channel_w[3] = {1.0, 0.92, 0.85};
  const double amp = params.signal / 3.0;
  const double rho = params.cross_signal;

  std::vector<Sample> out(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    Sample& s = out[static_cast<size_t>(i)];
    s.y = labels[static_cast<size_t>(i)];
    const int diag = s.y[0];

    // Metadata: one-hot per group, diagnosis-conditioned where clinically
    // plausible.
    Rng meta_rng(Rng::derive(seed, {kTagMeta, static_cast<uint64_t>(i)}));
    s.x_meta = Tensor::zeros({vocab.total_dim()});
    auto set_group = [&](const std::string& name, int value) {
      const MetaVocab::Group& g = vocab.group(name);
      s.x_meta.data()[static_cast<size_t>(g.offset + value)] = 1.0;
    };
    set_group("sex", static_cast<int>(meta_rng.below(2)));
    set_group("difficulty",
              sample_categorical(meta_rng, biased(kDifficultyByDiag[diag], 3,
                                                  params.meta_bias)));
    set_group("elevation",
              sample_categorical(meta_rng, biased(kElevationByDiag[diag], 3,
                                                  params.meta_bias)));
    set_group("management",
              sample_categorical(meta_rng, biased(kManagementByDiag[diag], 3,
                                                  params.meta_bias)));
    set_group("location", static_cast<int>(meta_rng.below(9)));

    if (!params.with_images) continue;

    // Cross-modal bits: uniform alone, informative only jointly with the
    // diagnosis code xor-ed into the dermoscopic side.
    Rng bits_rng(Rng::derive(seed, {kTagCrossBits, static_cast<uint64_t>(i)}));
    int bits[kCrossBits];
    for (int j = 0; j < kCrossBits; ++j) {
      bits[j] = static_cast<int>(bits_rng.below(2));
    }

    for (int m = 0; m < 2; ++m) {
      Rng img_rng(Rng::derive(seed, {kTagImage, static_cast<uint64_t>(i),
                                     static_cast<uint64_t>(m)}));
      std::vector<double> field(static_cast<size_t>(size) * size, 0.0);
      for (int t = 0; t < kNumTasks; ++t) {
        double a = amp;
        if (t == 0) a *= (1.0 - rho);
        if (m == 0) a *= 0.6;  // clinical images carry weaker direct signal
        const auto& pat =
            patterns.class_patterns[static_cast<size_t>(t)]
                                   [static_cast<size_t>(
                                        s.y[static_cast<size_t>(t)])]
                                   [static_cast<size_t>(m)];
        for (size_t px = 0; px < field.size(); ++px) field[px] += a * pat[px];
      }
      for (int j = 0; j < kCrossBits; ++j) {
        const int code = (diag >> j) & 1;
        const int bit = m == 0 ? bits[j] : (bits[j] ^ code);
        const double sign = bit ? 1.0 : -1.0;
        const auto& pat =
            patterns.cross_patterns[static_cast<size_t>(j)]
                                   [static_cast<size_t>(m)];
        const double a = amp * rho;
        for (size_t px = 0; px < field.size(); ++px) {
          field[px] += sign * a * pat[px];
        }
      }
      // Distractor coefficients on the signal modes themselves; unlike iid
      // pixel noise these survive spatial pooling.
      for (const auto& mode_field : patterns.mode_bank) {
        const double coef = params.mode_noise * img_rng.normal();
        if (coef == 0.0) continue;
        for (size_t px = 0; px < field.size(); ++px) {
          field[px] += coef * mode_field[px];
        }
      }

      Tensor img = Tensor::zeros({size, size, 3});
      auto& d = img.data();
      for (size_t px = 0; px < field.size(); ++px) {
        const double v = field[px] + params.noise * img_rng.normal();
        for (int c = 0; c < 3; ++c) {
          d[px * 3 + static_cast<size_t>(c)] =
              std::clamp(0.5 + v * channel_w[c], 0.0, 1.0);
        }
      }
      (m == 0 ? s.x_cli : s.x_der) = img;
    }
  }
  return out;
}

Dataset generate_dataset(const RunConfig& cfg) {
  const MarginalTable marginals = MarginalTable::derm7pt_train();
  const CorrelationPlan plan = CorrelationPlan::parse(cfg.data.correlations);
  GenParams params;
  params.image_size = cfg.encoder.image_size;
  params.signal = cfg.data.signal;
  params.noise = cfg.data.noise;
  params.mode_noise = cfg.data.mode_noise;
  params.cross_signal = cfg.data.cross_signal;
  params.meta_bias = cfg.data.meta_bias;
  params.pattern_seed = Rng::derive(cfg.seed, {kTagPattern});

  Dataset ds;
  const int sizes[3] = {cfg.data.n_train, cfg.data.n_val, cfg.data.n_test};
  for (int part = 0; part < 3; ++part) {
    if (sizes[part] == 0) continue;
    auto samples = generate_samples(
        sizes[part], marginals, plan, params,
        Rng::derive(cfg.seed, {kTagSplit, static_cast<uint64_t>(part)}));
    const int64_t base = static_cast<int64_t>(ds.samples.size());
    for (int64_t i = 0; i < static_cast<int64_t>(samples.size()); ++i) {
      auto& v = part == 0 ? ds.train_idx : (part == 1 ? ds.val_idx : ds.test_idx);
      v.push_back(base + i);
    }
    ds.samples.insert(ds.samples.end(),
                      std::make_move_iterator(samples.begin()),
                      std::make_move_iterator(samples.end()));
  }
  char buf[32];
  for (size_t i = 0; i < ds.samples.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "case_%06zu", i);
    ds.samples[i].case_id = buf;
  }
  return ds;
}

SplitIndices split_dataset(int64_t n, const SplitSizes& sizes, uint64_t seed) {
  const int64_t want = static_cast<int64_t>(sizes.n_train) + sizes.n_val +
                       sizes.n_test;
  if (sizes.n_train < 0 || sizes.n_val < 0 || sizes.n_test < 0 || want > n) {
    throw DataError("split sizes " + std::to_string(sizes.n_train) + "/" +
                    std::to_string(sizes.n_val) + "/" +
                    std::to_string(sizes.n_test) + " oversubscribe " +
                    std::to_string(n) + " samples");
  }
  std::vector<int64_t> perm(static_cast<size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(Rng::derive(seed, {kTagSplit}));
  rng.shuffle(perm);
  SplitIndices out;
  auto take = [&perm](int64_t from, int64_t count) {
    std::vector<int64_t> v(perm.begin() + from, perm.begin() + from + count);
    std::sort(v.begin(), v.end());
    return v;
  };
  out.train = take(0, sizes.n_train);
  out.val = take(sizes.n_train, sizes.n_val);
  out.test = take(sizes.n_train + sizes.n_val, sizes.n_test);
  return out;
}

namespace {

const char* kCsvHeader =
    "case_id,split,diag,pn,bwv,vs,pig,str,dag,rs,sex,location,elevation,"
    "difficulty,management";

std::string meta_value(const Sample& s, const std::string& group_name) {
  const MetaVocab::Group& g = MetaVocab::instance().group(group_name);
  for (size_t i = 0; i < g.values.size(); ++i) {
    if (s.x_meta.data()[static_cast<size_t>(g.offset) + i] == 1.0) {
      return g.values[i];
    }
  }
  throw DataError("sample '" + s.case_id + "' has no set bit in metadata "
                  "group '" + group_name + "'");
}

}  // namespace

void write_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write CSV file '" + path + "'");
  const TaskSpec& spec = TaskSpec::instance();

  std::vector<std::string> split_names(ds.samples.size());
  for (int64_t i : ds.train_idx) split_names[static_cast<size_t>(i)] = "train";
  for (int64_t i : ds.val_idx) split_names[static_cast<size_t>(i)] = "val";
  for (int64_t i : ds.test_idx) split_names[static_cast<size_t>(i)] = "test";

  out << kCsvHeader << "\n";
  for (size_t i = 0; i < ds.samples.size(); ++i) {
    const Sample& s = ds.samples[i];
    out << s.case_id << "," << split_names[i];
    for (int t = 0; t < kNumTasks; ++t) {
      out << ","
          << spec.task(t).classes[static_cast<size_t>(
                 s.y[static_cast<size_t>(t)])];
    }
    out << "," << meta_value(s, "sex") << "," << meta_value(s, "location")
        << "," << meta_value(s, "elevation") << ","
        << meta_value(s, "difficulty") << "," << meta_value(s, "management");
    out << "\n";
  }
}

Dataset load_derm7pt_csv(const std::string& path, int image_size,
                         const std::optional<SplitSizes>& fallback_sizes,
                         uint64_t split_seed) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open CSV file '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) {
    throw DataError("CSV file '" + path + "' is empty");
  }
  const std::vector<std::string> header = csv_fields(line);
  auto column = [&](const std::string& name, bool required) {
    for (size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return static_cast<int>(i);
    }
    if (required) {
      throw DataError("CSV file '" + path + "' is missing column '" + name +
                      "'");
    }
    return -1;
  };

  const TaskSpec& spec = TaskSpec::instance();
  const MetaVocab& vocab = MetaVocab::instance();
  const int col_case = column("case_id", true);
  const int col_split = column("split", false);
  const char* task_cols[kNumTasks] = {"diag", "pn",  "bwv", "vs",
                                      "pig",  "str", "dag", "rs"};
  int task_col_idx[kNumTasks];
  for (int t = 0; t < kNumTasks; ++t) {
    task_col_idx[t] = column(task_cols[t], true);
  }
  const char* meta_cols[5] = {"sex", "location", "elevation", "difficulty",
                              "management"};
  int meta_col_idx[5];
  for (int g = 0; g < 5; ++g) meta_col_idx[g] = column(meta_cols[g], true);

  Dataset ds;
  std::vector<std::string> split_names;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (csv_trim(line).empty()) continue;
    const std::vector<std::string> fields = csv_fields(line);
    if (fields.size() != header.size()) {
      throw DataError("CSV row " + std::to_string(row) + " has " +
                      std::to_string(fields.size()) + " fields, expected " +
                      std::to_string(header.size()));
    }
    Sample s;
    s.case_id = fields[static_cast<size_t>(col_case)];
    for (int t = 0; t < kNumTasks; ++t) {
      const std::string& v = fields[static_cast<size_t>(task_col_idx[t])];
      const int c = spec.class_index(t, v);
      if (c < 0) {
        throw DataError("CSV row " + std::to_string(row) + ", column '" +
                        task_cols[t] + "': unknown class '" + v + "'");
      }
      s.y[static_cast<size_t>(t)] = c;
    }
    s.x_meta = Tensor::zeros({vocab.total_dim()});
    for (int g = 0; g < 5; ++g) {
      const MetaVocab::Group& grp = vocab.group(meta_cols[g]);
      const std::string& v = fields[static_cast<size_t>(meta_col_idx[g])];
      int idx = -1;
      for (size_t k = 0; k < grp.values.size(); ++k) {
        if (grp.values[k] == v) idx = static_cast<int>(k);
      }
      if (idx < 0) {
        throw DataError("CSV row " + std::to_string(row) + ", column '" +
                        grp.name + "': unknown value '" + v + "'");
      }
      s.x_meta.data()[static_cast<size_t>(grp.offset + idx)] = 1.0;
    }
    const uint64_t row_seed = fnv1a(s.case_id) ^ (7919ULL * row);
    s.x_cli = placeholder_image(image_size, Rng::derive(row_seed, {1}));
    s.x_der = placeholder_image(image_size, Rng::derive(row_seed, {2}));
    if (col_split >= 0) {
      const std::string& sp = fields[static_cast<size_t>(col_split)];
      if (sp != "train" && sp != "val" && sp != "test" && !sp.empty()) {
        throw DataError("CSV row " + std::to_string(row) +
                        ": unknown split '" + sp + "'");
      }
      split_names.push_back(sp);
    }
    ds.samples.push_back(std::move(s));
  }
  if (ds.samples.empty()) {
    throw DataError("CSV file '" + path + "' contains no data rows");
  }

  bool used_split_column = false;
  if (col_split >= 0) {
    for (const std::string& sp : split_names) {
      if (!sp.empty()) {
        used_split_column = true;
        break;
      }
    }
  }
  if (used_split_column) {
    for (size_t i = 0; i < split_names.size(); ++i) {
      if (split_names[i] == "train") {
        ds.train_idx.push_back(static_cast<int64_t>(i));
      } else if (split_names[i] == "val") {
        ds.val_idx.push_back(static_cast<int64_t>(i));
      } else if (split_names[i] == "test") {
        ds.test_idx.push_back(static_cast<int64_t>(i));
      }
    }
  } else if (fallback_sizes) {
    SplitIndices idx = split_dataset(
        static_cast<int64_t>(ds.samples.size()), *fallback_sizes, split_seed);
    ds.train_idx = std::move(idx.train);
    ds.val_idx = std::move(idx.val);
    ds.test_idx = std::move(idx.test);
  }
  return ds;
}

void write_manifest(const std::string& path, uint64_t seed,
                    const std::string& config_hash, const SplitSizes& sizes) {
  nlohmann::json j;
  j["seed"] = seed;
  j["config_hash"] = config_hash;
  j["sizes"] = {{"train", sizes.n_train},
                {"val", sizes.n_val},
                {"test", sizes.n_test}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write manifest '" + path + "'");
  out << j.dump(2) << "\n";
}

namespace {

Tensor flip_image(const Tensor& img, bool horizontal) {
  const int64_t h = img.extent(0), w = img.extent(1), c = img.extent(2);
  Tensor out = Tensor::zeros(img.shape());
  const auto& src = img.data();
  auto& dst = out.data();
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      const int64_t sy = horizontal ? y : h - 1 - y;
      const int64_t sx = horizontal ? w - 1 - x : x;
      for (int64_t ch = 0; ch < c; ++ch) {
        dst[static_cast<size_t>((y * w + x) * c + ch)] =
            src[static_cast<size_t>((sy * w + sx) * c + ch)];
      }
    }
  }
  return out;
}

Tensor shift_image(const Tensor& img, int dy, int dx) {
  const int64_t h = img.extent(0), w = img.extent(1), c = img.extent(2);
  Tensor out = Tensor::zeros(img.shape());
  const auto& src = img.data();
  auto& dst = out.data();
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      const int64_t sy = y - dy, sx = x - dx;
      if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
      for (int64_t ch = 0; ch < c; ++ch) {
        dst[static_cast<size_t>((y * w + x) * c + ch)] =
            src[static_cast<size_t>((sy * w + sx) * c + ch)];
      }
    }
  }
  return out;
}

bool has_flag(const std::vector<std::string>& flags, const char* name) {
  return std::find(flags.begin(), flags.end(), name) != flags.end();
}

}  // namespace

Sample augment_sample(const Sample& s, Rng& rng,
                      const std::vector<std::string>& flags) {
  Sample out = s;
  if (has_flag(flags, "hflip") && rng.below(2) == 1) {
    out.x_cli = flip_image(out.x_cli, true);
    out.x_der = flip_image(out.x_der, true);
  }
  if (has_flag(flags, "vflip") && rng.below(2) == 1) {
    out.x_cli = flip_image(out.x_cli, false);
    out.x_der = flip_image(out.x_der, false);
  }
  if (has_flag(flags, "shift")) {
    const int dy = static_cast<int>(rng.below(5)) - 2;
    const int dx = static_cast<int>(rng.below(5)) - 2;
    if (dy != 0 || dx != 0) {
      out.x_cli = shift_image(out.x_cli, dy, dx);
      out.x_der = shift_image(out.x_der, dy, dx);
    }
  }
  return out;
}

TrainExample to_example(const Sample& s) {
  TrainExample ex;
  ex.x_cli = s.x_cli;
  ex.x_der = s.x_der;
  ex.x_meta = s.x_meta;
  ex.target = labels_to_multihot(s.y);
  return ex;
}

TrainExample mixup_examples(const TrainExample& a, const TrainExample& b,
                            double lambda) {
  if (lambda < 0.0 || lambda > 1.0) {
    throw ConfigError("mixup lambda must lie in [0, 1]");
  }
  auto blend = [lambda](const Tensor& x, const Tensor& y) {
    if (x.shape() != y.shape()) {
      throw ShapeError("mixup: partners have different shapes");
    }
    Tensor out = Tensor::zeros(x.shape());
    const auto& xd = x.data();
    const auto& yd = y.data();
    auto& od = out.data();
    for (size_t i = 0; i < od.size(); ++i) {
      od[i] = lambda * xd[i] + (1.0 - lambda) * yd[i];
    }
    return out;
  };
  TrainExample out;
  out.x_cli = blend(a.x_cli, b.x_cli);
  out.x_der = blend(a.x_der, b.x_der);
  out.x_meta = blend(a.x_meta, b.x_meta);
  out.target.resize(a.target.size());
  for (size_t i = 0; i < a.target.size(); ++i) {
    out.target[i] = lambda * a.target[i] + (1.0 - lambda) * b.target[i];
  }
  return out;
}

}  // namespace dermfuse
