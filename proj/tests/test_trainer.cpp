#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <zlib.h>

#include "autogen/errors.hpp"
#include "autogen/trainer.hpp"
#include "doctest.h"

using namespace autogen;

namespace {

const SplitCorpus& small_corpus() {
  static const SplitCorpus corpus = [] {
    GrammarSpec g;
    g.topics = 2;
    CorpusConfig c;
    c.seed = 4;
    return filter_and_split(generate_synthetic(g, 300, 8), c);
  }();
  return corpus;
}

TrainConfig small_config() {
  TrainConfig c;
  c.embed_dim = 6;
  c.hidden_dim = 8;
  c.latent_dim = 3;
  c.batch_size = 8;
  c.total_steps = 12;
  c.eval_every = 4;
  c.eval_sentences = 16;
  c.checkpoint_every = 4;
  c.seed = 21;
  return c;
}

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("autogen_trainer_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

TrainResult run(const TrainConfig& c, const TrainHooks& hooks = {}) {
  const auto v = static_cast<std::int64_t>(small_corpus().vocabulary.size());
  return train(initial_state(c, v), small_corpus(), c, hooks);
}

}  // namespace

TEST_CASE("zero learning rate leaves parameters unchanged") {
  auto c = small_config();
  c.learning_rate = 0.0;
  const auto v = static_cast<std::int64_t>(small_corpus().vocabulary.size());
  const auto start = initial_state(c, v);
  const auto r = train(start, small_corpus(), c);
  CHECK(r.state.params == start.params);
  CHECK(r.state.step == 12);
}

TEST_CASE("training is deterministic") {
  const auto c = small_config();
  const auto a = run(c);
  const auto b = run(c);
  CHECK(a.metrics.to_csv() == b.metrics.to_csv());
  CHECK(a.state.params == b.state.params);
  auto other = c;
  other.seed = 22;
  CHECK(run(other).metrics.to_csv() != a.metrics.to_csv());

  REQUIRE(a.metrics.rows.size() == 4);
  CHECK(a.metrics.rows[0].step == 0);
  CHECK(a.metrics.rows[3].step == 12);
  CHECK(a.state.params.all_finite());
}

TEST_CASE("resume from a checkpoint replays the uninterrupted run") {
  const auto c = small_config();
  const auto full = run(c);

  const auto dir = scratch_dir("resume");
  TrainHooks hooks;
  hooks.checkpoint_dir = dir;
  hooks.config_text = c.describe();
  hooks.stop_after = 5;
  const auto first = run(c, hooks);
  CHECK(first.state.step == 5);
  CHECK(std::filesystem::exists(dir / "ckpt_4.bin"));
  CHECK(std::filesystem::exists(dir / "ckpt_5.bin"));

  const auto v = static_cast<std::int64_t>(small_corpus().vocabulary.size());
  const auto ckpt = load_checkpoint((dir / "ckpt_5.bin").string());
  CHECK(ckpt.config_text == c.describe());
  auto state = state_from_checkpoint(ckpt, c, v);
  CHECK(state.step == 5);
  const auto rest = train(state, small_corpus(), c);

  CHECK(rest.state.params == full.state.params);
  CHECK(rest.state.adam == full.state.adam);
  // Rows after the resume point match exactly; step 0 is not re-logged.
  MetricsTable stitched = first.metrics;
  stitched.rows.insert(stitched.rows.end(), rest.metrics.rows.begin(), rest.metrics.rows.end());
  CHECK(stitched.to_csv() == full.metrics.to_csv());

  auto wrong = c;
  wrong.hidden_dim = 9;
  CHECK_THROWS_AS(state_from_checkpoint(ckpt, wrong, v), ValidationError);
  Checkpoint bare = ckpt;
  bare.optimizer.reset();
  CHECK_THROWS_AS(state_from_checkpoint(bare, c, v), ValidationError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("checkpoint version mismatch is rejected") {
  const auto c = small_config();
  const auto dir = scratch_dir("version");
  TrainHooks hooks;
  hooks.checkpoint_dir = dir;
  auto short_run = c;
  short_run.total_steps = 1;
  run(short_run, hooks);
  const auto path = dir / "latest.bin";
  REQUIRE(std::filesystem::exists(path));

  std::string data;
  {
    std::ifstream in(path, std::ios::binary);
    data.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  // Bump the version field after the 8-byte magic and fix the checksum, so
  // only the version check can fire.
  const std::uint32_t bumped = kCheckpointVersion + 1;
  std::memcpy(data.data() + 8, &bumped, sizeof(bumped));
  const auto crc = static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(data.data() + 8), static_cast<uInt>(data.size() - 12)));
  std::memcpy(data.data() + data.size() - 4, &crc, sizeof(crc));
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
  }
  try {
    load_checkpoint(path.string());
    FAIL("expected a version error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("version") != std::string::npos);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("metrics rows are internally consistent") {
  auto c = small_config();
  for (const auto& objective :
       {ObjectiveConfig::standard(), ObjectiveConfig::autogen(2), ObjectiveConfig::beta(0.5),
        ObjectiveConfig::annealed({AnnealShape::kLinear, 8})}) {
    c.objective = objective;
    const auto r = run(c);
    double prev_lambda = 0.0;
    for (const auto& row : r.metrics.rows) {
      CHECK(row.kl >= 0.0);
      CHECK(row.recon <= 0.0);
      CHECK(row.elbo == doctest::Approx(row.recon - row.kl).epsilon(1e-12));
      CHECK(row.kl_fraction >= 0.0);
      CHECK(row.kl_fraction <= 1.0);
      CHECK(row.lambda >= prev_lambda);
      prev_lambda = row.lambda;
      if (objective.mode() == ObjectiveMode::kStandard) {
        CHECK(row.total == row.elbo);
        CHECK(row.lambda == 1.0);
      }
    }
    if (objective.mode() == ObjectiveMode::kAnnealed) {
      CHECK(r.metrics.rows.front().lambda == 0.0);
      CHECK(r.metrics.rows.back().lambda == 1.0);
    }
  }
}

TEST_CASE("evaluation variance shrinks with more samples") {
  const auto c = small_config();
  const auto v = static_cast<std::int64_t>(small_corpus().vocabulary.size());
  const auto params = initial_state(c, v).params;
  const std::span<const TokenSequence> sents(small_corpus().train.data(), 8);
  auto spread = [&](std::int64_t n) {
    double s = 0.0, s2 = 0.0;
    const int reps = 40;
    for (int k = 0; k < reps; ++k) {
      const double e = evaluate_elbo(params, sents, n, 1000 + static_cast<std::uint64_t>(k)).elbo;
      s += e;
      s2 += e * e;
    }
    return s2 / reps - (s / reps) * (s / reps);
  };
  const double v1 = spread(1), v16 = spread(16);
  CHECK(v16 < v1 / 4.0);
  CHECK_THROWS_AS(evaluate_elbo(params, {}, 1, 0), InvalidInputError);
}

TEST_CASE("batches cover each epoch without repeats") {
  std::vector<int> seen(50, 0);
  for (std::int64_t step = 0; step < 5; ++step) {
    for (auto i : batch_indices(50, 10, step, 3)) ++seen[i];
  }
  for (int s : seen) CHECK(s == 1);
  CHECK(batch_indices(50, 10, 5, 3) != batch_indices(50, 10, 0, 3));
  CHECK(batch_indices(5, 10, 0, 3).size() == 5);
}

TEST_CASE("metrics csv round trip and comparison") {
  const auto r = run(small_config());
  const auto back = MetricsTable::from_csv(r.metrics.to_csv());
  CHECK(back == r.metrics);
  CHECK(r.metrics.to_csv().rfind(std::string(MetricsTable::kHeader) + "\n", 0) == 0);
  CHECK_THROWS_AS(MetricsTable::from_csv("step,recon\n1,2\n"), DataError);

  MetricsTable high = r.metrics;
  for (auto& row : high.rows) row.kl_fraction += 0.5;
  const auto cmp = compare_runs({{"base", r.metrics}, {"high", high}});
  CHECK(cmp.kl_fraction_order.front() == "high");
  CHECK(cmp.steps.size() == r.metrics.rows.size());
  std::istringstream csv(cmp.aligned_csv());
  std::string header;
  std::getline(csv, header);
  CHECK(header == "step,base_kl_fraction,base_elbo,base_kl,high_kl_fraction,high_elbo,high_kl");

  CHECK_THROWS_AS(compare_runs({{"only", r.metrics}}), ValidationError);
  MetricsTable shifted = r.metrics;
  shifted.rows.pop_back();
  CHECK_THROWS_AS(compare_runs({{"a", r.metrics}, {"b", shifted}}), ValidationError);
}

TEST_CASE("config validation") {
  auto c = small_config();
  c.word_dropout = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_config();
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_config();
  c.learning_rate = -1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  const auto text = small_config().describe();
  const auto at = text.find("word_dropout = ");
  REQUIRE(at != std::string::npos);
  CHECK(std::stod(text.substr(at + 15)) == 0.3);
}
