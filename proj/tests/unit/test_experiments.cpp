#include <doctest.h>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "fixtures.hpp"
#include "semiseg/config_json.hpp"
#include "semiseg/experiments.hpp"
#include "semiseg/volume_io.hpp"

using namespace semiseg;
using semiseg::testing::phantom_cases;
using semiseg::testing::tiny_network;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

ExperimentSpec small_spec() {
  ExperimentSpec spec;
  spec.n_repeats = 2;
  spec.network = tiny_network(16);
  spec.train.epochs = 3;
  spec.train.batch_size = 2;
  spec.train.unlab_start_epoch = 1;
  spec.data.count = 10;
  spec.data.edge = 16;
  return spec;
}

const std::vector<LabeledSample>& corpus() {
  static const auto c = phantom_cases(10, 16, 0);
  return c;
}

}  // namespace

TEST_CASE("shuffle split") {
  std::vector<int> data(10);
  for (int i = 0; i < 10; ++i) data[i] = i;
  const auto [train, val] = shuffle_split(data, 0.8, 0, 42);
  CHECK(train.size() == 8);
  CHECK(val.size() == 2);
  std::set<int> all(train.begin(), train.end());
  all.insert(val.begin(), val.end());
  CHECK(all.size() == 10);
  CHECK(shuffle_split(data, 0.8, 0, 42) == std::make_pair(train, val));
  CHECK_FALSE(shuffle_split(data, 0.8, 1, 42).first == train);
  CHECK_THROWS_AS(shuffle_split(std::vector<int>{1}, 0.5, 0, 0), std::invalid_argument);
  CHECK_THROWS_AS(shuffle_split(std::vector<int>{1, 2, 3}, 0.2, 0, 0), std::invalid_argument);
}

TEST_CASE("settings") {
  const std::vector<LabeledSample> train(corpus().begin(), corpus().begin() + 8);
  const auto full = make_setting(Setting::kFullLabeled, train);
  CHECK(full.split.labeled.size() == 8);
  CHECK(full.split.unlabeled.empty());
  const auto half = make_setting(Setting::kHalfLabeled, train);
  CHECK(half.split.labeled.size() == 4);
  CHECK(half.split.unlabeled.empty());
  const auto ssl = make_setting(Setting::kSslHalf, train);
  CHECK(ssl.split.labeled.size() == 4);
  CHECK(ssl.split.unlabeled.size() == 4);
  CHECK_NOTHROW(ssl.split.check_disjoint());
  CHECK_FALSE(ssl.augment_labeled);
  const auto aug = make_setting(Setting::kSslHalfAug, train);
  CHECK(aug.augment_labeled);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(half.split.labeled[i].id == ssl.split.labeled[i].id);
    CHECK(aug.split.labeled[i].id == ssl.split.labeled[i].id);
  }
  CHECK(setting_from_string("ssl_half_aug") == Setting::kSslHalfAug);
  CHECK_THROWS_AS(setting_from_string("bogus"), std::invalid_argument);
}

TEST_CASE("aggregation") {
  std::vector<RunRecord> runs(3);
  const double vals[3] = {0.5, 0.7, 0.9};
  for (int i = 0; i < 3; ++i) {
    runs[i].label = "x";
    runs[i].final_dice = {vals[i]};
  }
  const auto rows = aggregate({"x"}, runs, 1);
  CHECK(rows[0].mean[0] == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(std::abs(rows[0].std[0] - std::sqrt((0.04 + 0.0 + 0.04) / 3.0)) < 1e-12);
  CHECK(aggregate({"x"}, {runs[0]}, 1)[0].std[0] == 0.0);
  runs[1].failed = true;
  const auto partial = aggregate({"x"}, runs, 1);
  CHECK(partial[0].completed == 2);
  CHECK(partial[0].failed == 1);
}

TEST_CASE("experiment end to end") {
  const ExperimentSpec spec = small_spec();
  const ExperimentReport a = run_experiment(spec, corpus());
  REQUIRE(a.rows.size() == 4);
  REQUIRE(a.runs.size() == 8);
  for (const auto& r : a.runs) CHECK_FALSE(r.failed);

  SUBCASE("controlled comparison within a repeat") {
    for (std::size_t rep = 0; rep < 2; ++rep) {
      std::vector<const RunRecord*> in;
      for (const auto& r : a.runs)
        if (r.repeat == rep) in.push_back(&r);
      for (const auto* r : in) CHECK(r->val_ids == in[0]->val_ids);
      // half_labeled, ssl_half, ssl_half_aug share the labeled subset.
      CHECK(in[1]->labeled_ids == in[2]->labeled_ids);
      CHECK(in[2]->labeled_ids == in[3]->labeled_ids);
      CHECK(in[1]->unlabeled_ids.empty());
      CHECK(in[2]->unlabeled_ids.size() == 4);
    }
  }
  SUBCASE("aggregation matches brute force") {
    for (const auto& row : a.rows) {
      for (std::size_t c = 0; c < 3; ++c) {
        std::vector<double> v;
        for (const auto& r : a.runs)
          if (r.label == row.label) v.push_back(r.final_dice[c]);
        REQUIRE(v.size() == spec.n_repeats);
        double m = 0;
        for (double x : v) m += x;
        m /= static_cast<double>(v.size());
        double s = 0;
        for (double x : v) s += (x - m) * (x - m);
        CHECK(std::abs(row.mean[c] - m) < 1e-12);
        CHECK(std::abs(row.std[c] - std::sqrt(s / static_cast<double>(v.size()))) < 1e-12);
      }
    }
  }
  SUBCASE("deterministic") {
    const ExperimentReport b = run_experiment(spec, corpus());
    CHECK(report_table_csv(a) == report_table_csv(b));
    for (std::size_t i = 0; i < a.runs.size(); ++i) CHECK(a.runs[i].model_hash == b.runs[i].model_hash);
  }
  SUBCASE("emission") {
    semiseg::testing::TempDir dir("report");
    emit_report(a, dir / "one");
    emit_report(a, dir / "two");
    const std::string table = slurp(dir / "one" / "table.csv");
    CHECK(table == slurp(dir / "two" / "table.csv"));
    CHECK(slurp(dir / "one" / "summary.txt") == slurp(dir / "two" / "summary.txt"));
    std::size_t lines = 0;
    for (char ch : table) lines += ch == '\n' ? 1 : 0;
    CHECK(lines == 1 + 4 * 3);
    const std::string curve = slurp(dir / "one" / "curves" / "ssl_half_r0.csv");
    lines = 0;
    for (char ch : curve) lines += ch == '\n' ? 1 : 0;
    CHECK(lines == 1 + spec.train.epochs);

    save_report(a, dir / "report.json");
    const ExperimentReport back = load_report(dir / "report.json");
    emit_report(back, dir / "three");
    CHECK(slurp(dir / "three" / "table.csv") == table);
  }
}

TEST_CASE("start epoch sweep rows differ only in the start epoch") {
  ExperimentSpec spec = small_spec();
  spec.settings = {Setting::kSslHalf};
  spec.n_repeats = 1;
  spec.start_epoch_sweep = {0, 1, 2};
  const ExperimentReport r = run_experiment(spec, corpus());
  REQUIRE(r.rows.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(r.rows[i].start_epoch == spec.start_epoch_sweep[i]);
    nlohmann::json a = r.runs[i].config;
    nlohmann::json b = r.runs[0].config;
    a.erase("unlab_start_epoch");
    b.erase("unlab_start_epoch");
    CHECK(a.dump() == b.dump());
    CHECK(r.runs[i].labeled_ids == r.runs[0].labeled_ids);
  }
}

TEST_CASE("spec json") {
  const auto spec = nlohmann::json::parse(R"({"setting":"ssl_half","n_repeats":1,"train":{"epochs":6},
      "network":{"input_size":16,"stage_channels":[4,8],"bottleneck_dim":8,"head_channels":2},
      "start_epoch_sweep":[1,2,3],"data":{"kind":"phantom","count":12,"edge":16}})")
                        .get<ExperimentSpec>();
  CHECK(spec.settings == std::vector<Setting>{Setting::kSslHalf});
  CHECK(spec.train.epochs == 6);
  CHECK(spec.network.input_size == 16);
  const auto again = nlohmann::json(spec).get<ExperimentSpec>();
  CHECK(nlohmann::json(again).dump() == nlohmann::json(spec).dump());
  CHECK_THROWS_AS(nlohmann::json::parse(R"({"n_repeat":2})").get<ExperimentSpec>(), std::invalid_argument);
  CHECK_THROWS_AS(nlohmann::json::parse(R"({"n_repeats":0})").get<ExperimentSpec>(), std::invalid_argument);
  CHECK_THROWS_AS(nlohmann::json::parse(R"({"labeled_fraction":1.5})").get<ExperimentSpec>(), std::invalid_argument);
}

TEST_CASE("data directory loading") {
  semiseg::testing::TempDir dir("data");
  for (int i = 0; i < 3; ++i) {
    const Phantom p = generate_phantom(static_cast<std::uint64_t>(i), 16);
    save_volume(p.image, dir / ("c" + std::to_string(i) + ".vol"));
    if (i < 2) save_label_volume(p.labels, dir / ("c" + std::to_string(i) + ".label.vol"));
  }
  const CaseSet cs = load_data_dir(dir.path(), PreprocessConfig::for_edge(16));
  CHECK(cs.labeled.size() == 2);
  CHECK(cs.unlabeled.size() == 1);
  CHECK(cs.unlabeled[0].id == "c2");
  DataSource src;
  src.kind = "dir";
  src.dir = dir.path();
  CHECK_THROWS_AS(load_dataset(src, 16), std::invalid_argument);
}
