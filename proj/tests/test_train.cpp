#include "mtq/checkpoint.hpp"
#include "mtq/corpus.hpp"
#include "mtq/errors.hpp"
#include "mtq/pseudo_labels.hpp"
#include "mtq/train.hpp"

#include "support/fixtures.hpp"

#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <set>

using namespace mtq;
using namespace mtq::testing;
using train::Mode;

namespace {

// Eight pseudo-labelled 1 s utterances, built once per process.
const Manifest& labelled() {
  static TempDir dir("train_fixture");
  static const Manifest m = [] {
    corpus::CorpusConfig c;
    c.num_train = 8;
    c.num_test = 2;
    c.duration_s = 1.0;
    const auto paths = corpus::build_corpus(c, dir.path());
    const auto r = oracle::compute_pseudo_labels(paths.train_manifest, dir / "pl.jsonl");
    REQUIRE(r.ok());
    return read_manifest(dir / "pl.jsonl");
  }();
  return m;
}

Manifest without_pseudo(Manifest m) {
  for (auto& e : m.entries) e.pseudo.reset();
  return m;
}

train::TrainConfig quick(Mode mode, std::size_t epochs = 2) {
  train::TrainConfig tc;
  tc.mode = mode;
  tc.max_epochs = epochs;
  tc.seed = 3;
  tc.valid_fraction = 0.25;
  return tc;
}

std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), {});
}

}  // namespace

TEST_SUITE("train") {

TEST_CASE("split is a seeded partition of the indices") {
  for (std::size_t n : {2u, 3u, 10u, 57u}) {
    for (double f : {0.01, 0.1, 0.5, 0.99}) {
      const auto s = train::split_indices(n, f, 4);
      const auto again = train::split_indices(n, f, 4);
      CHECK(s.train == again.train);
      CHECK(s.valid == again.valid);
      const std::size_t expect = std::clamp<std::size_t>(std::size_t(std::llround(f * double(n))), 1, n - 1);
      CHECK(s.valid.size() == expect);
      std::set<std::size_t> all(s.train.begin(), s.train.end());
      all.insert(s.valid.begin(), s.valid.end());
      CHECK(all.size() == n);
      CHECK(*all.rbegin() == n - 1);
    }
  }
  CHECK(train::split_indices(50, 0.2, 1).valid != train::split_indices(50, 0.2, 2).valid);
  CHECK_THROWS_AS(train::split_indices(1, 0.5, 0), ConfigError);
}

TEST_CASE("modes pick their loss terms") {
  const train::LossConfig base;
  CHECK_FALSE(train::effective_loss(Mode::kScratch, base).semi_enabled);
  CHECK_FALSE(train::effective_loss(Mode::kKt, base).semi_enabled);
  const auto mpl = train::effective_loss(Mode::kMpl, base);
  CHECK((mpl.superv_enabled && mpl.semi_enabled));
  const auto teacher = train::effective_loss(Mode::kTeacher, base);
  CHECK((!teacher.superv_enabled && teacher.semi_enabled));
  for (Mode m : {Mode::kScratch, Mode::kKt, Mode::kMpl, Mode::kTeacher}) {
    CHECK(train::mode_from_name(train::mode_name(m)) == m);
  }
  CHECK_THROWS_AS(train::mode_from_name("distill"), ConfigError);
}

TEST_CASE("train config validation") {
  auto tc = quick(Mode::kKt);
  CHECK_THROWS_AS(tc.validate(), ConfigError);
  tc = quick(Mode::kMpl);
  tc.lr = 0.0;
  CHECK_THROWS_AS(tc.validate(), ConfigError);
  tc = quick(Mode::kMpl);
  tc.valid_fraction = 1.0;
  CHECK_THROWS_AS(tc.validate(), ConfigError);
  tc = quick(Mode::kMpl);
  tc.max_epochs = 0;
  CHECK_THROWS_AS(tc.validate(), ConfigError);
}

TEST_CASE("labels are clipped to the head ranges") {
  ManifestEntry e;
  e.labels = std::array<double, 3>{6.0, 0.5, 3.0};
  e.pseudo = std::array<double, 3>{5.0, 1.2, -0.1};
  const auto l = train::labels_for(e, MtqNetConfig::tiny());
  const auto& r = MtqNetConfig::tiny().ranges;
  CHECK(*l.target(Metric::kSmos) == 5.0);
  CHECK(*l.target(Metric::kNmos) == 1.0);
  CHECK(*l.target(Metric::kGmos) == 3.0);
  CHECK(*l.target(Metric::kPq) == r[metric_index(Metric::kPq)].hi);
  CHECK(*l.target(Metric::kStoi) == r[metric_index(Metric::kStoi)].hi);
  CHECK(*l.target(Metric::kSdi) == r[metric_index(Metric::kSdi)].lo);
}

TEST_CASE("missing labels are rejected per mode") {
  const auto bare = without_pseudo(labelled());
  CHECK_THROWS_AS(train::train(MtqNetConfig::tiny(), bare, {}, quick(Mode::kMpl, 1)), ConfigError);
  CHECK_THROWS_AS(train::train(MtqNetConfig::tiny(), bare, {}, quick(Mode::kTeacher, 1)), ConfigError);
  const auto r = train::train(MtqNetConfig::tiny(), bare, {}, quick(Mode::kScratch, 1));
  CHECK(r.history.size() == 1);
}

TEST_CASE("identical seeds give identical histories and checkpoints") {
  TempDir dir("train_det");
  const auto a = train::train(MtqNetConfig::tiny(), labelled(), {}, quick(Mode::kMpl));
  const auto b = train::train(MtqNetConfig::tiny(), labelled(), {}, quick(Mode::kMpl));
  train::write_training_outputs(a, dir / "a");
  train::write_training_outputs(b, dir / "b");
  CHECK(read_bytes(dir / "a" / "history.jsonl") == read_bytes(dir / "b" / "history.jsonl"));
  CHECK(read_bytes(dir / "a" / "model.mtqc") == read_bytes(dir / "b" / "model.mtqc"));
  auto other = quick(Mode::kMpl);
  other.seed = 4;
  const auto c = train::train(MtqNetConfig::tiny(), labelled(), {}, other);
  CHECK(train::to_json(c.history[0]).dump() != train::to_json(a.history[0]).dump());
}

TEST_CASE("history records and stopping rules") {
  std::size_t calls = 0;
  auto tc = quick(Mode::kMpl, 1);
  tc.patience = 0;
  tc.on_epoch = [&](const train::EpochRecord& r) { calls += r.epoch == calls + 1 ? 1 : 100; };
  const auto r = train::train(MtqNetConfig::tiny(), labelled(), {}, tc);
  CHECK(r.history.size() == 1);
  CHECK(calls == 1);
  CHECK(r.best_epoch == 1);
  CHECK(r.history[0].best_so_far);
  CHECK(r.metadata["epochs_run"] == 1);
  CHECK(r.metadata["num_valid"] == 2);
  CHECK(r.metadata["init_digest"].is_null());

  auto target = quick(Mode::kMpl, 5);
  target.target_train_loss = 1e9;
  CHECK(train::train(MtqNetConfig::tiny(), labelled(), {}, target).history.size() == 1);

  const auto& rec = r.history[0];
  CHECK(rec.train.objective == doctest::Approx(rec.train.superv + rec.train.semi).epsilon(1e-12));
  CHECK(rec.valid.semi > 0.0);
}

TEST_CASE("teacher trains on pseudo labels only, scratch on primary only") {
  const auto t = train::pretrain_teacher(MtqNetConfig::tiny(), labelled(), {}, quick(Mode::kMpl, 1));
  CHECK(t.metadata["train_config"]["mode"] == "teacher");
  CHECK(t.history[0].train.superv == 0.0);
  CHECK(t.history[0].train.semi > 0.0);
  const auto s = train::train(MtqNetConfig::tiny(), labelled(), {}, quick(Mode::kScratch, 1));
  CHECK(s.history[0].train.semi == 0.0);
  CHECK(s.history[0].train.superv > 0.0);
}

TEST_CASE("KT and MPL start from the teacher checkpoint") {
  TempDir dir("train_kt");
  const auto t = train::pretrain_teacher(MtqNetConfig::tiny(), labelled(), {}, quick(Mode::kTeacher, 1));
  const auto ckpt = train::write_training_outputs(t, dir / "teacher");
  for (Mode m : {Mode::kKt, Mode::kMpl}) {
    auto tc = quick(m, 1);
    tc.init_checkpoint = ckpt;
    tc.lr = 1e-12;  // leaves the loaded weights effectively unchanged
    const auto r = train::train(MtqNetConfig::tiny(), labelled(), {}, tc);
    REQUIRE(r.init_digest);
    CHECK(*r.init_digest == file_digest(ckpt));
    CHECK(r.metadata["init_digest"] == file_digest(ckpt));
    const auto& w = r.model.params().get("blstm_fwd_input").value.values();
    const auto& w0 = t.model.params().get("blstm_fwd_input").value.values();
    double diff = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) diff = std::max(diff, std::abs(w[i] - w0[i]));
    CHECK(diff < 1e-6);
  }
  auto bad = quick(Mode::kKt, 1);
  bad.init_checkpoint = dir / "missing.mtqc";
  CHECK_THROWS_AS(train::train(MtqNetConfig::tiny(), labelled(), {}, bad), IoError);
}

}  // TEST_SUITE
