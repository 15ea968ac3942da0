#include "autogen/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "autogen/errors.hpp"
#include "autogen/seeding.hpp"

namespace autogen {

namespace {

constexpr std::size_t kEvalChunk = 64;

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double global_norm(const ModelParameters& g) {
  double sq = 0.0;
  for (const auto& t : g.tensors()) {
    for (double v : t.values) sq += v * v;
  }
  return std::sqrt(sq);
}

void adam_update(ModelParameters& params, AdamState& adam, const ModelParameters& grad, double scale,
                 const TrainConfig& config) {
  ++adam.updates;
  const double t = static_cast<double>(adam.updates);
  const double c1 = 1.0 - std::pow(config.adam_beta1, t);
  const double c2 = 1.0 - std::pow(config.adam_beta2, t);
  auto p = params.tensors();
  auto m = adam.first_moment.tensors();
  auto v = adam.second_moment.tensors();
  const auto g = grad.tensors();
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t k = 0; k < p[i].values.size(); ++k) {
      const double gk = scale * g[i].values[k];
      double& mk = m[i].values[k];
      double& vk = v[i].values[k];
      mk = config.adam_beta1 * mk + (1.0 - config.adam_beta1) * gk;
      vk = config.adam_beta2 * vk + (1.0 - config.adam_beta2) * gk * gk;
      p[i].values[k] -= config.learning_rate * (mk / c1) / (std::sqrt(vk / c2) + config.adam_epsilon);
    }
  }
}

MetricsRow held_out_row(const ModelParameters& params, std::span<const TokenSequence> eval_set,
                        const TrainConfig& config, std::int64_t step) {
  const auto ev = evaluate_elbo(params, eval_set, config.eval_samples,
                                derive_seed(config.seed, seed_tag::kEval, 0));
  const auto loss = assemble_objective(ev.recon, ev.kl, config.objective, step);
  MetricsRow row;
  row.step = step;
  row.recon = ev.recon;
  row.kl = ev.kl;
  row.total = loss.total;
  row.kl_fraction = loss.kl_fraction;
  row.elbo = ev.elbo;
  const auto [c_recon, c_kl] = config.objective.coefficients(step);
  row.lambda = c_kl / c_recon;
  return row;
}

void write_checkpoint(const std::filesystem::path& dir, const TrainState& state, const SplitCorpus& corpus,
                      const std::string& config_text, bool keep_numbered) {
  std::filesystem::create_directories(dir);
  Checkpoint ckpt{state.params, corpus.vocabulary, state.adam, state.step, config_text};
  if (keep_numbered) save_checkpoint((dir / ("ckpt_" + std::to_string(state.step) + ".bin")).string(), ckpt);
  save_checkpoint((dir / "latest.bin").string(), ckpt);
}

}  // namespace

void TrainConfig::validate() const {
  if (embed_dim < 1 || hidden_dim < 1 || latent_dim < 1) throw ConfigError("train: dimensions must be positive");
  if (batch_size < 1) throw ConfigError("train: batch_size must be positive");
  if (total_steps < 0) throw ConfigError("train: total_steps must be >= 0");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("train: learning rate must be >= 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ConfigError("train: Adam decays must lie in [0, 1)");
  }
  if (!(adam_epsilon > 0.0)) throw ConfigError("train: adam_epsilon must be positive");
  if (!(word_dropout >= 0.0 && word_dropout < 1.0)) throw ConfigError("train: word_dropout must lie in [0, 1)");
  if (eval_every < 1 || eval_sentences < 1 || eval_samples < 1) {
    throw ConfigError("train: eval_every, eval_sentences and eval_samples must be positive");
  }
  if (checkpoint_every < 0) throw ConfigError("train: checkpoint_every must be >= 0");
}

ModelDims TrainConfig::dims(std::int64_t vocab_size) const {
  return {vocab_size, embed_dim, hidden_dim, latent_dim};
}

std::string TrainConfig::describe() const {
  std::ostringstream out;
  out << "embed_dim = " << embed_dim << '\n'
      << "hidden_dim = " << hidden_dim << '\n'
      << "latent_dim = " << latent_dim << '\n'
      << "batch_size = " << batch_size << '\n'
      << "total_steps = " << total_steps << '\n'
      << "learning_rate = " << format_double(learning_rate) << '\n'
      << "adam_beta1 = " << format_double(adam_beta1) << '\n'
      << "adam_beta2 = " << format_double(adam_beta2) << '\n'
      << "adam_epsilon = " << format_double(adam_epsilon) << '\n'
      << "clip_norm = " << format_double(clip_norm) << '\n'
      << "objective = " << objective.describe() << '\n'
      << "word_dropout = " << format_double(word_dropout) << '\n'
      << "eval_every = " << eval_every << '\n'
      << "eval_sentences = " << eval_sentences << '\n'
      << "eval_samples = " << eval_samples << '\n'
      << "checkpoint_every = " << checkpoint_every << '\n'
      << "seed = " << seed << '\n';
  return out.str();
}

std::string MetricsTable::to_csv() const {
  std::string out = std::string(kHeader) + "\n";
  for (const auto& r : rows) {
    out += std::to_string(r.step);
    for (double v : {r.recon, r.kl, r.total, r.kl_fraction, r.elbo, r.train_recon, r.train_kl, r.train_total,
                     r.lambda}) {
      out += ',';
      out += format_double(v);
    }
    out += '\n';
  }
  return out;
}

MetricsTable MetricsTable::from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kHeader) throw DataError("metrics csv: unexpected header");
  MetricsTable table;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream row(line);
    std::string cell;
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    if (cells.size() != 10) throw DataError("metrics csv: expected 10 columns in: " + line);
    try {
      MetricsRow r;
      r.step = std::stoll(cells[0]);
      double* fields[] = {&r.recon, &r.kl, &r.total, &r.kl_fraction, &r.elbo,
                          &r.train_recon, &r.train_kl, &r.train_total, &r.lambda};
      for (std::size_t i = 0; i < 9; ++i) *fields[i] = std::stod(cells[i + 1]);
      table.rows.push_back(r);
    } catch (const std::logic_error&) {
      throw DataError("metrics csv: bad number in: " + line);
    }
  }
  return table;
}

void MetricsTable::write(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_csv();
}

MetricsTable MetricsTable::read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return from_csv(buf.str());
}

EvalResult evaluate_elbo(const ModelParameters& params, std::span<const TokenSequence> sentences,
                         std::int64_t n_samples, std::uint64_t seed) {
  if (sentences.empty()) throw InvalidInputError("evaluate_elbo: empty sentence set");
  if (n_samples < 1) throw InvalidInputError("evaluate_elbo: n_samples must be >= 1");
  const auto n = static_cast<Eigen::Index>(sentences.size());
  Eigen::VectorXd recon = Eigen::VectorXd::Zero(n), kl = Eigen::VectorXd::Zero(n);
  for (std::int64_t s = 0; s < n_samples; ++s) {
    for (std::size_t start = 0, chunk = 0; start < sentences.size(); start += kEvalChunk, ++chunk) {
      const auto part = sentences.subspan(start, std::min(kEvalChunk, sentences.size() - start));
      const auto noise = sample_batch_noise(part, params.dims.latent_dim, 0.0,
                                            derive_seed(seed, static_cast<std::uint64_t>(s), chunk));
      const auto scores = score_batch(params, part, noise);
      recon.segment(static_cast<Eigen::Index>(start), scores.recon.size()) += scores.recon;
      kl.segment(static_cast<Eigen::Index>(start), scores.kl.size()) += scores.kl;
    }
  }
  recon /= static_cast<double>(n_samples);
  kl /= static_cast<double>(n_samples);
  EvalResult out;
  out.recon = recon.mean();
  out.kl = kl.mean();
  out.elbo = out.recon - out.kl;
  out.per_sentence_elbo = recon - kl;
  return out;
}

TrainState initial_state(const TrainConfig& config, std::int64_t vocab_size) {
  config.validate();
  const auto dims = config.dims(vocab_size);
  return {init_parameters(dims, derive_seed(config.seed, seed_tag::kInit, 0)), AdamState::zeros(dims), 0};
}

TrainState state_from_checkpoint(const Checkpoint& checkpoint, const TrainConfig& config,
                                 std::int64_t vocab_size) {
  if (!checkpoint.optimizer) throw ValidationError("checkpoint has no optimizer state; cannot resume");
  if (!(checkpoint.params.dims == config.dims(vocab_size))) {
    throw ValidationError("checkpoint dimensions do not match the training config");
  }
  return {checkpoint.params, *checkpoint.optimizer, checkpoint.step};
}

std::vector<std::size_t> batch_indices(std::size_t corpus_size, std::int64_t batch_size, std::int64_t step,
                                       std::uint64_t seed) {
  if (corpus_size == 0) throw InvalidInputError("batch_indices: empty corpus");
  const auto b = std::min<std::size_t>(static_cast<std::size_t>(batch_size), corpus_size);
  const std::size_t per_epoch = corpus_size / b;
  const auto epoch = static_cast<std::uint64_t>(step) / per_epoch;
  const std::size_t offset = (static_cast<std::size_t>(step) % per_epoch) * b;
  std::vector<std::size_t> perm(corpus_size);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 rng(derive_seed(seed, seed_tag::kEpoch, epoch));
  std::shuffle(perm.begin(), perm.end(), rng);
  return {perm.begin() + static_cast<std::ptrdiff_t>(offset),
          perm.begin() + static_cast<std::ptrdiff_t>(offset + b)};
}

TrainResult train(TrainState state, const SplitCorpus& corpus, const TrainConfig& config,
                  const TrainHooks& hooks) {
  config.validate();
  if (corpus.train.empty()) throw DataError("train: corpus has no training sentences");
  const auto vocab_size = static_cast<std::int64_t>(corpus.vocabulary.size());
  if (!(state.params.dims == config.dims(vocab_size))) {
    throw ValidationError("train: parameter dimensions do not match the config and vocabulary");
  }

  const auto& eval_pool = corpus.test.empty() ? corpus.train : corpus.test;
  const std::span<const TokenSequence> eval_set(
      eval_pool.data(), std::min<std::size_t>(eval_pool.size(), static_cast<std::size_t>(config.eval_sentences)));

  const auto start = std::chrono::steady_clock::now();
  auto seconds = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); };

  TrainResult result;
  auto log_row = [&](MetricsRow row) {
    const double t = seconds();
    result.metrics.rows.push_back(row);
    result.wallclock.push_back(t);
    if (hooks.on_eval) hooks.on_eval(row, t);
  };

  if (state.step == 0) log_row(held_out_row(state.params, eval_set, config, 0));

  const std::int64_t last = hooks.stop_after ? std::min(*hooks.stop_after, config.total_steps) : config.total_steps;
  std::vector<TokenSequence> batch;
  LossBreakdown train_loss;
  while (state.step < last) {
    const std::int64_t step = state.step;
    batch.clear();
    for (auto i : batch_indices(corpus.train.size(), config.batch_size, step, config.seed)) {
      batch.push_back(corpus.train[i]);
    }
    const auto noise = sample_batch_noise(batch, config.latent_dim, config.word_dropout,
                                          derive_seed(config.seed, seed_tag::kStep, static_cast<std::uint64_t>(step)));
    LossAndGradients lg;
    try {
      lg = loss_and_gradients(state.params, batch, config.objective, noise, step);
    } catch (const DivergenceError& e) {
      throw DivergenceError("training diverged at step " + std::to_string(step + 1) + ": " + e.what());
    }
    const double norm = global_norm(lg.gradient);
    if (!std::isfinite(norm)) {
      throw DivergenceError("training diverged at step " + std::to_string(step + 1) + ": non-finite gradient");
    }
    const double scale = (config.clip_norm > 0.0 && norm > config.clip_norm) ? config.clip_norm / norm : 1.0;
    adam_update(state.params, state.adam, lg.gradient, scale, config);
    if (!state.params.all_finite()) {
      throw DivergenceError("training diverged at step " + std::to_string(step + 1) + ": non-finite parameters");
    }
    state.step = step + 1;
    train_loss = lg.loss;

    const bool final_step = state.step == config.total_steps;
    if (state.step % config.eval_every == 0 || final_step) {
      auto row = held_out_row(state.params, eval_set, config, state.step);
      row.train_recon = train_loss.recon;
      row.train_kl = train_loss.kl;
      row.train_total = train_loss.total;
      log_row(row);
    }
    if (!hooks.checkpoint_dir.empty() &&
        (final_step || (config.checkpoint_every > 0 && state.step % config.checkpoint_every == 0))) {
      write_checkpoint(hooks.checkpoint_dir, state, corpus, hooks.config_text, !final_step);
    }
  }
  if (!hooks.checkpoint_dir.empty() && state.step == last && last != config.total_steps) {
    write_checkpoint(hooks.checkpoint_dir, state, corpus, hooks.config_text, true);
  }
  result.state = std::move(state);
  return result;
}

std::string RunComparison::aligned_csv() const {
  std::string out = "step";
  for (const auto& n : names) out += "," + n + "_kl_fraction," + n + "_elbo," + n + "_kl";
  out += '\n';
  for (std::size_t r = 0; r < steps.size(); ++r) {
    out += std::to_string(steps[r]);
    for (std::size_t m = 0; m < names.size(); ++m) {
      out += "," + format_double(kl_fraction[m][r]) + "," + format_double(elbo[m][r]) + "," +
             format_double(kl[m][r]);
    }
    out += '\n';
  }
  return out;
}

std::string RunComparison::summary() const {
  std::ostringstream out;
  out << "final step: " << (steps.empty() ? 0 : steps.back()) << '\n';
  auto order_line = [&](const char* label, const std::vector<std::string>& order,
                        const std::vector<std::vector<double>>& values) {
    out << label << ':';
    for (std::size_t i = 0; i < order.size(); ++i) {
      const auto m = static_cast<std::size_t>(std::find(names.begin(), names.end(), order[i]) - names.begin());
      out << (i ? " > " : " ") << order[i] << " (" << values[m].back() << ")";
    }
    out << '\n';
  };
  order_line("kl_fraction", kl_fraction_order, kl_fraction);
  order_line("elbo", elbo_order, elbo);
  return out.str();
}

RunComparison compare_runs(const std::vector<NamedTable>& tables) {
  if (tables.size() < 2) throw ValidationError("compare_runs: need at least two metrics tables");
  RunComparison cmp;
  for (const auto& row : tables.front().table.rows) cmp.steps.push_back(row.step);
  if (cmp.steps.empty()) throw ValidationError("compare_runs: empty metrics table " + tables.front().name);
  for (const auto& t : tables) {
    if (t.table.rows.size() != cmp.steps.size()) {
      throw ValidationError("compare_runs: step grid of " + t.name + " does not align with " + tables.front().name);
    }
    std::vector<double> kf, el, kl;
    for (std::size_t r = 0; r < cmp.steps.size(); ++r) {
      if (t.table.rows[r].step != cmp.steps[r]) {
        throw ValidationError("compare_runs: step grid of " + t.name + " does not align with " + tables.front().name);
      }
      kf.push_back(t.table.rows[r].kl_fraction);
      el.push_back(t.table.rows[r].elbo);
      kl.push_back(t.table.rows[r].kl);
    }
    cmp.names.push_back(t.name);
    cmp.kl_fraction.push_back(std::move(kf));
    cmp.elbo.push_back(std::move(el));
    cmp.kl.push_back(std::move(kl));
  }
  auto order_by = [&](const std::vector<std::vector<double>>& values) {
    std::vector<std::size_t> idx(cmp.names.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return values[a].back() > values[b].back(); });
    std::vector<std::string> names;
    for (auto i : idx) names.push_back(cmp.names[i]);
    return names;
  };
  cmp.kl_fraction_order = order_by(cmp.kl_fraction);
  cmp.elbo_order = order_by(cmp.elbo);
  return cmp;
}

}  // namespace autogen
