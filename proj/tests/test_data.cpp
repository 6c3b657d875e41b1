#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "dermfuse/data.hpp"

using namespace dermfuse;

namespace {

GenParams fast_params() {
  GenParams p;
  p.with_images = false;
  return p;
}

std::array<std::vector<double>, kNumTasks> empirical_freqs(
    const std::vector<Sample>& samples) {
  const TaskSpec& spec = TaskSpec::instance();
  std::array<std::vector<double>, kNumTasks> freq;
  for (int t = 0; t < kNumTasks; ++t) {
    freq[static_cast<size_t>(t)].assign(
        static_cast<size_t>(spec.cardinality(t)), 0.0);
  }
  for (const Sample& s : samples) {
    for (int t = 0; t < kNumTasks; ++t) {
      freq[static_cast<size_t>(t)][static_cast<size_t>(
          s.y[static_cast<size_t>(t)])] += 1.0;
    }
  }
  for (auto& f : freq) {
    for (double& v : f) v /= static_cast<double>(samples.size());
  }
  return freq;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("marginal table matches the published training counts") {
  const MarginalTable t = MarginalTable::derm7pt_train();
  CHECK(t.counts[0] == std::vector<int>{19, 256, 90, 32, 16});
  for (int task = 0; task < kNumTasks; ++task) {
    double sum = 0.0;
    int total = 0;
    for (double p : t.probs[static_cast<size_t>(task)]) sum += p;
    for (int c : t.counts[static_cast<size_t>(task)]) total += c;
    CHECK(std::abs(sum - 1.0) <= 1e-12);
    CHECK(total == 413);
  }
}

TEST_CASE("413-sample training split tracks the marginals within three sigma") {
  const MarginalTable marg = MarginalTable::derm7pt_train();
  auto samples =
      generate_samples(413, marg, CorrelationPlan{}, fast_params(), 42);
  auto freq = empirical_freqs(samples);
  for (int t = 0; t < kNumTasks; ++t) {
    for (size_t c = 0; c < freq[static_cast<size_t>(t)].size(); ++c) {
      const double p = marg.probs[static_cast<size_t>(t)][c];
      const double sigma = std::sqrt(p * (1.0 - p) / 413.0);
      CHECK(std::abs(freq[static_cast<size_t>(t)][c] - p) <= 3.0 * sigma);
    }
  }
}

TEST_CASE("4130-sample generation lands within 1% absolute of the marginals") {
  const MarginalTable marg = MarginalTable::derm7pt_train();
  auto samples =
      generate_samples(4130, marg, CorrelationPlan{}, fast_params(), 43);
  auto freq = empirical_freqs(samples);
  for (int t = 0; t < kNumTasks; ++t) {
    for (size_t c = 0; c < freq[static_cast<size_t>(t)].size(); ++c) {
      CHECK(std::abs(freq[static_cast<size_t>(t)][c] -
                     marg.probs[static_cast<size_t>(t)][c]) <= 0.01);
    }
  }
}

TEST_CASE("strength-1 correlation forces the paired class") {
  CorrelationPlan plan = CorrelationPlan::parse("DIAG:MEL>BWV:PRS:1.0");
  auto samples = generate_samples(413, MarginalTable::derm7pt_train(), plan,
                                  fast_params(), 44);
  int mel = 0;
  for (const Sample& s : samples) {
    if (s.y[0] == 2) {  // MEL
      ++mel;
      CHECK(s.y[2] == 1);  // BWV = PRS
    }
  }
  CHECK(mel > 0);
}

TEST_CASE("partial correlation matches s + (1-s) * p within three sigma") {
  const double strength = 0.5;
  CorrelationPlan plan = CorrelationPlan::parse("DIAG:NEV>BWV:PRS:0.5");
  const MarginalTable marg = MarginalTable::derm7pt_train();
  auto samples = generate_samples(4130, marg, plan, fast_params(), 45);
  int64_t nev = 0, nev_prs = 0;
  for (const Sample& s : samples) {
    if (s.y[0] == 1) {
      ++nev;
      if (s.y[2] == 1) ++nev_prs;
    }
  }
  REQUIRE(nev > 0);
  const double p_prs = marg.probs[2][1];
  const double expected = strength + (1.0 - strength) * p_prs;
  const double observed = static_cast<double>(nev_prs) /
                          static_cast<double>(nev);
  const double sigma =
      std::sqrt(expected * (1.0 - expected) / static_cast<double>(nev));
  CHECK(std::abs(observed - expected) <= 3.0 * sigma);
}

TEST_CASE("correlation plan parsing is validated") {
  CHECK(CorrelationPlan::parse("").rules.empty());
  CHECK(CorrelationPlan::parse("DIAG:MEL>BWV:PRS:0.8; DIAG:BCC>RS:PRS:0.3")
            .rules.size() == 2);
  CHECK_THROWS_AS(CorrelationPlan::parse("DIAG:MEL-BWV:PRS:0.8"), ConfigError);
  CHECK_THROWS_AS(CorrelationPlan::parse("FOO:MEL>BWV:PRS:0.8"), ConfigError);
  CHECK_THROWS_AS(CorrelationPlan::parse("DIAG:XXX>BWV:PRS:0.8"), ConfigError);
  CHECK_THROWS_AS(CorrelationPlan::parse("DIAG:MEL>BWV:PRS:1.5"), ConfigError);
}

TEST_CASE("generation is bit-identical for a fixed seed") {
  GenParams params;
  params.image_size = 16;  // images on, small for speed
  auto a = generate_samples(24, MarginalTable::derm7pt_train(),
                            CorrelationPlan{}, params, 46);
  auto b = generate_samples(24, MarginalTable::derm7pt_train(),
                            CorrelationPlan{}, params, 46);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].y == b[i].y);
    CHECK(a[i].x_meta.data() == b[i].x_meta.data());
    CHECK(a[i].x_cli.data() == b[i].x_cli.data());
    CHECK(a[i].x_der.data() == b[i].x_der.data());
  }
  auto c = generate_samples(24, MarginalTable::derm7pt_train(),
                            CorrelationPlan{}, params, 47);
  CHECK(a[0].x_cli.data() != c[0].x_cli.data());
}

TEST_CASE("sample invariants: image range and one-hot metadata groups") {
  GenParams params;
  params.image_size = 16;
  auto samples = generate_samples(16, MarginalTable::derm7pt_train(),
                                  CorrelationPlan{}, params, 48);
  const MetaVocab& vocab = MetaVocab::instance();
  for (const Sample& s : samples) {
    for (double v : s.x_cli.data()) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    for (const auto& g : vocab.groups) {
      double ones = 0.0;
      for (size_t k = 0; k < g.values.size(); ++k) {
        ones += s.x_meta.data()[static_cast<size_t>(g.offset) + k];
      }
      CHECK(ones == 1.0);
    }
  }
}

TEST_CASE("csv round-trip preserves labels and metadata") {
  RunConfig cfg;
  cfg.data.n_train = 20;
  cfg.data.n_val = 8;
  cfg.data.n_test = 8;
  cfg.encoder.image_size = 32;
  cfg.seed = 49;
  Dataset ds = generate_dataset(cfg);
  const std::string path = temp_path("dermfuse_roundtrip.csv");
  write_csv(ds, path);
  Dataset back = load_derm7pt_csv(path, 32, std::nullopt, 0);
  REQUIRE(back.samples.size() == ds.samples.size());
  for (size_t i = 0; i < ds.samples.size(); ++i) {
    CHECK(back.samples[i].case_id == ds.samples[i].case_id);
    CHECK(back.samples[i].y == ds.samples[i].y);
    CHECK(back.samples[i].x_meta.data() == ds.samples[i].x_meta.data());
  }
  CHECK(back.train_idx == ds.train_idx);
  CHECK(back.val_idx == ds.val_idx);
  CHECK(back.test_idx == ds.test_idx);
  std::filesystem::remove(path);
}

TEST_CASE("csv loader rejects malformed inputs with row context") {
  const std::string good_header =
      "case_id,split,diag,pn,bwv,vs,pig,str,dag,rs,sex,location,elevation,"
      "difficulty,management\n";
  const std::string good_row =
      "c1,train,NEV,TYP,ABS,ABS,ABS,IR,IRG,ABS,female,back,flat,low,"
      "excision\n";

  SUBCASE("unknown class name names the row") {
    const std::string path = temp_path("dermfuse_badlabel.csv");
    std::ofstream(path) << good_header << good_row
                        << "c2,train,WAT,TYP,ABS,ABS,ABS,IR,IRG,ABS,female,"
                           "back,flat,low,excision\n";
    try {
      (void)load_derm7pt_csv(path, 16, std::nullopt, 0);
      FAIL("expected DataError");
    } catch (const DataError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("row 3") != std::string::npos);
      CHECK(msg.find("WAT") != std::string::npos);
    }
    std::filesystem::remove(path);
  }
  SUBCASE("missing column is named") {
    const std::string path = temp_path("dermfuse_nocol.csv");
    std::ofstream(path) << "case_id,diag\nc1,NEV\n";
    CHECK_THROWS_WITH_AS((void)load_derm7pt_csv(path, 16, std::nullopt, 0),
                         doctest::Contains("missing column"), DataError);
    std::filesystem::remove(path);
  }
  SUBCASE("ragged row is rejected") {
    const std::string path = temp_path("dermfuse_ragged.csv");
    std::ofstream(path) << good_header << "c1,train,NEV\n";
    CHECK_THROWS_WITH_AS((void)load_derm7pt_csv(path, 16, std::nullopt, 0),
                         doctest::Contains("row 2"), DataError);
    std::filesystem::remove(path);
  }
  SUBCASE("empty file is rejected") {
    const std::string path = temp_path("dermfuse_empty.csv");
    std::ofstream(path) << good_header;
    CHECK_THROWS_AS((void)load_derm7pt_csv(path, 16, std::nullopt, 0),
                    DataError);
    std::filesystem::remove(path);
  }
}

TEST_CASE("a 1011-row file loads with the canonical split sizes") {
  RunConfig cfg;
  cfg.data.n_train = 413;
  cfg.data.n_val = 203;
  cfg.data.n_test = 395;
  cfg.seed = 50;
  // Labels/meta only; speed.
  const MarginalTable marg = MarginalTable::derm7pt_train();
  auto samples =
      generate_samples(1011, marg, CorrelationPlan{}, fast_params(), 50);
  Dataset ds;
  ds.samples = std::move(samples);
  for (size_t i = 0; i < ds.samples.size(); ++i) {
    ds.samples[i].case_id = "c" + std::to_string(i);
    ds.samples[i].x_cli = Tensor::zeros({4, 4, 3});
    ds.samples[i].x_der = Tensor::zeros({4, 4, 3});
  }
  SplitIndices idx = split_dataset(1011, {413, 203, 395}, 50);
  ds.train_idx = idx.train;
  ds.val_idx = idx.val;
  ds.test_idx = idx.test;

  const std::string path = temp_path("dermfuse_1011.csv");
  write_csv(ds, path);
  Dataset back = load_derm7pt_csv(path, 16, std::nullopt, 0);
  CHECK(back.samples.size() == 1011);
  CHECK(back.train_idx.size() == 413);
  CHECK(back.val_idx.size() == 203);
  CHECK(back.test_idx.size() == 395);
  std::filesystem::remove(path);
}

TEST_CASE("split_dataset is disjoint, deterministic, and validated") {
  SplitIndices a = split_dataset(1011, {413, 203, 395}, 7);
  SplitIndices b = split_dataset(1011, {413, 203, 395}, 7);
  CHECK(a.train == b.train);
  CHECK(a.val == b.val);
  CHECK(a.test == b.test);
  std::vector<bool> seen(1011, false);
  for (const auto* part : {&a.train, &a.val, &a.test}) {
    for (int64_t i : *part) {
      CHECK_FALSE(seen[static_cast<size_t>(i)]);
      seen[static_cast<size_t>(i)] = true;
    }
  }
  SplitIndices tiny = split_dataset(3, {1, 1, 1}, 9);
  CHECK(tiny.train.size() == 1);
  CHECK(tiny.val.size() == 1);
  CHECK(tiny.test.size() == 1);
  CHECK_THROWS_AS(split_dataset(10, {8, 2, 1}, 0), DataError);
}

TEST_CASE("double horizontal flip restores the image bit-exactly") {
  GenParams params;
  params.image_size = 8;
  auto samples = generate_samples(1, MarginalTable::derm7pt_train(),
                                  CorrelationPlan{}, params, 51);
  const Sample& s = samples[0];

  // Seeds chosen so the flip coin lands on 1 both times.
  uint64_t flip_seed = 0;
  while (true) {
    Rng probe(flip_seed);
    if (probe.below(2) == 1) break;
    ++flip_seed;
  }
  Rng r1(flip_seed), r2(flip_seed);
  Sample once = augment_sample(s, r1, {"hflip"});
  Sample twice = augment_sample(once, r2, {"hflip"});
  CHECK(twice.x_cli.data() == s.x_cli.data());
  CHECK(twice.x_der.data() == s.x_der.data());
  CHECK(once.x_cli.data() != s.x_cli.data());
}

TEST_CASE("mixup blends inputs and targets convexly") {
  GenParams params;
  params.image_size = 8;
  auto samples = generate_samples(2, MarginalTable::derm7pt_train(),
                                  CorrelationPlan{}, params, 52);
  TrainExample a = to_example(samples[0]);
  TrainExample b = to_example(samples[1]);

  TrainExample same = mixup_examples(a, b, 1.0);
  CHECK(same.x_cli.data() == a.x_cli.data());
  CHECK(same.target == a.target);

  TrainExample half = mixup_examples(a, b, 0.5);
  for (size_t i = 0; i < half.target.size(); ++i) {
    CHECK(half.target[i] ==
          doctest::Approx(0.5 * a.target[i] + 0.5 * b.target[i]));
  }
  CHECK_THROWS_AS(mixup_examples(a, b, 1.5), ConfigError);
}

TEST_CASE("manifest records seed, hash, and sizes") {
  const std::string path = temp_path("dermfuse_manifest.json");
  write_manifest(path, 9, "abcd", {4, 2, 2});
  std::ifstream in(path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  CHECK(text.find("\"seed\": 9") != std::string::npos);
  CHECK(text.find("abcd") != std::string::npos);
  std::filesystem::remove(path);
}
