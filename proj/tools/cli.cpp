#include "cli.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>

#include <zlib.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "autogen/checkpoint.hpp"
#include "autogen/corpus.hpp"
#include "autogen/errors.hpp"
#include "autogen/evalkit.hpp"
#include "autogen/inference.hpp"
#include "autogen/oracle.hpp"
#include "autogen/seeding.hpp"
#include "autogen/trainer.hpp"

namespace autogen::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr const char* kToolVersion = "0.1.0";

// Paths given on the command line are stored absolute, so a run can be
// replayed from another working directory.
const CLI::Validator kAbsolutePath(
    [](std::string& s) {
      if (!s.empty()) s = fs::absolute(s).lexically_normal().string();
      return std::string();
    },
    "PATH");

std::string timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y%m%d-%H%M%S");
  return out.str();
}

std::string file_crc(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return "missing";
  const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto crc = crc32(0L, reinterpret_cast<const Bytef*>(data.data()), static_cast<uInt>(data.size()));
  std::ostringstream out;
  out << std::hex << std::setw(8) << std::setfill('0') << crc;
  return out.str();
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

// --- option sets ------------------------------------------------------------

struct PrepareOptions {
  std::string input;
  std::size_t synthetic_n = 10000;
  GrammarSpec grammar;
  CorpusConfig corpus;
};

struct TrainOptions {
  std::string corpus;
  std::string resume;
  std::string label;
  std::string objective = "standard";
  double m = 1.0;
  double beta = 1.0;
  std::string anneal_shape = "linear";
  std::int64_t warmup_steps = 1000;
  TrainConfig config;
};

struct DecodeOptions {
  std::string model;
  int beam_width = 5;
  int max_length = 40;
  std::uint64_t seed = 0;
};

struct ReconstructOptions {
  DecodeOptions decode;
  std::string input;
  std::string corpus;
  std::size_t limit = 0;
};

struct GenerateOptions {
  DecodeOptions decode;
  std::size_t count = 100;
  bool sample = false;
  bool presentable = false;
};

struct InterpolateOptions {
  DecodeOptions decode;
  std::string from;
  std::string to;
  int points = 11;
};

struct CompareOptions {
  std::vector<std::string> runs;
  std::vector<std::string> names;
};

struct SurveyMakeOptions {
  std::string kind = "pair";
  std::vector<std::string> outputs;  // name=file
  std::string inputs;
  std::size_t items_per_sheet = kItemsPerSheet;
  std::uint64_t seed = 0;
};

struct SurveyTallyOptions {
  std::string key;
  std::string responses;
};

struct OracleOptions {
  int models = 100;
  int posteriors = 4;
  std::vector<double> ms{0.0, 1.0, 2.0, 3.0};
  int nodes = 64;
  std::uint64_t seed = 0;
};

struct Options {
  std::string runs_root;
  std::string run_dir;
  std::string replay;
  PrepareOptions prepare;
  TrainOptions train;
  ReconstructOptions reconstruct;
  GenerateOptions generate;
  InterpolateOptions interpolate;
  CompareOptions compare;
  SurveyMakeOptions survey_make;
  SurveyTallyOptions survey_tally;
  OracleOptions oracle;
};

void add_decode_options(CLI::App* sub, DecodeOptions& d) {
  sub->add_option("--model", d.model, "checkpoint with a vocabulary (model.bin of a train run)")
      ->required()
      ->transform(kAbsolutePath);
  sub->add_option("--beam-width", d.beam_width, "beam width")->capture_default_str()->check(CLI::PositiveNumber);
  sub->add_option("--max-length", d.max_length, "maximum emitted tokens, EOS included")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  sub->add_option("--seed", d.seed, "latent sampling seed")->capture_default_str();
}

void build(CLI::App& app, Options& o) {
  app.set_config("--config", "", "INI file; [subcommand] sections hold key = value lines");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.add_option("--runs-root", o.runs_root, "root for run directories (default $AUTOGEN_RUNS_ROOT or runs)");
  app.add_option("--run-dir", o.run_dir, "exact run directory; must not exist or be empty");
  app.add_option("--replay", o.replay, "re-execute the run recorded in a manifest.json")->check(CLI::ExistingFile);
  app.fallthrough();

  auto* p = app.add_subcommand("prepare-data", "filter, split and index a corpus (a text file or synthetic)");
  p->add_option("--input", o.prepare.input, "one sentence per line; synthetic corpus when omitted")
      ->transform(kAbsolutePath);
  p->add_option("--synthetic-n", o.prepare.synthetic_n, "synthetic sentences to generate")->capture_default_str();
  p->add_option("--topics", o.prepare.grammar.topics, "synthetic grammar topics")->capture_default_str();
  p->add_option("--adjective-prob", o.prepare.grammar.adjective_prob)->capture_default_str();
  p->add_option("--adverb-prob", o.prepare.grammar.adverb_prob)->capture_default_str();
  p->add_option("--phrase-prob", o.prepare.grammar.phrase_prob)->capture_default_str();
  p->add_option("--clause-prob", o.prepare.grammar.clause_prob)->capture_default_str();
  p->add_option("--max-phrases", o.prepare.grammar.max_phrases)->capture_default_str();
  p->add_option("--min-len", o.prepare.corpus.min_len, "minimum words per sentence")->capture_default_str();
  p->add_option("--max-len", o.prepare.corpus.max_len, "maximum words per sentence")->capture_default_str();
  p->add_option("--vocab-cap", o.prepare.corpus.vocab_cap, "vocabulary size cap")->capture_default_str();
  p->add_option("--train-fraction", o.prepare.corpus.train_fraction)->capture_default_str();
  p->add_option("--seed", o.prepare.corpus.seed, "generation and split seed")->capture_default_str();

  auto* t = app.add_subcommand("train", "train one model variant");
  auto& tc = o.train.config;
  t->add_option("--corpus", o.train.corpus, "prepared corpus directory")->required()->transform(kAbsolutePath);
  t->add_option("--resume", o.train.resume, "continue from a checkpoint")->transform(kAbsolutePath);
  t->add_option("--label", o.train.label, "name used by compare (default from the objective)");
  t->add_option("--objective", o.train.objective, "standard, annealed, autogen or beta")
      ->capture_default_str()
      ->check(CLI::IsMember({"standard", "annealed", "autogen", "beta"}));
  t->add_option("--m", o.train.m, "AutoGen reconstruction count")->capture_default_str();
  t->add_option("--beta", o.train.beta, "KL weight for the beta objective")->capture_default_str();
  t->add_option("--anneal-shape", o.train.anneal_shape, "linear or sigmoid")
      ->capture_default_str()
      ->check(CLI::IsMember({"linear", "sigmoid"}));
  t->add_option("--warmup-steps", o.train.warmup_steps, "annealing warmup")->capture_default_str();
  t->add_option("--embed-dim", tc.embed_dim)->capture_default_str();
  t->add_option("--hidden-dim", tc.hidden_dim)->capture_default_str();
  t->add_option("--latent-dim", tc.latent_dim)->capture_default_str();
  t->add_option("--batch-size", tc.batch_size, "full scale: 200")->capture_default_str();
  t->add_option("--steps", tc.total_steps, "optimizer updates (full scale: 1000000)")->capture_default_str();
  t->add_option("--lr", tc.learning_rate, "Adam learning rate")->capture_default_str();
  t->add_option("--adam-beta1", tc.adam_beta1)->capture_default_str();
  t->add_option("--adam-beta2", tc.adam_beta2)->capture_default_str();
  t->add_option("--adam-epsilon", tc.adam_epsilon)->capture_default_str();
  t->add_option("--clip-norm", tc.clip_norm, "global gradient norm cap; <= 0 disables")->capture_default_str();
  t->add_option("--word-dropout", tc.word_dropout, "decoder input drop rate")->capture_default_str();
  t->add_option("--eval-every", tc.eval_every)->capture_default_str();
  t->add_option("--eval-sentences", tc.eval_sentences)->capture_default_str();
  t->add_option("--eval-samples", tc.eval_samples)->capture_default_str();
  t->add_option("--checkpoint-every", tc.checkpoint_every, "0 keeps only the final checkpoint")
      ->capture_default_str();
  t->add_option("--seed", tc.seed)->capture_default_str();

  auto* r = app.add_subcommand("reconstruct", "encode sentences, sample z once and beam-decode");
  add_decode_options(r, o.reconstruct.decode);
  r->add_option("--input", o.reconstruct.input, "sentences, one per line")->transform(kAbsolutePath);
  r->add_option("--corpus", o.reconstruct.corpus, "prepared corpus; its test split is used")
      ->transform(kAbsolutePath);
  r->add_option("--limit", o.reconstruct.limit, "first N sentences only (0: all)")->capture_default_str();

  auto* g = app.add_subcommand("generate", "decode latents drawn from the prior");
  add_decode_options(g, o.generate.decode);
  g->add_option("--count", o.generate.count, "sentences to generate")->capture_default_str();
  g->add_flag("--sample", o.generate.sample, "ancestral sampling instead of beam search");
  g->add_flag("--presentable", o.generate.presentable, "keep 4-20 word sentences without UNK");

  auto* i = app.add_subcommand("interpolate", "decode evenly spaced points between two encoded sentences");
  add_decode_options(i, o.interpolate.decode);
  i->add_option("--from", o.interpolate.from, "first sentence")->required();
  i->add_option("--to", o.interpolate.to, "second sentence")->required();
  i->add_option("--points", o.interpolate.points, "points, endpoints included")->capture_default_str();

  auto* c = app.add_subcommand("compare", "align metrics of several train runs and emit plot CSVs");
  c->add_option("--runs", o.compare.runs, "train run directories")->required()->transform(kAbsolutePath);
  c->add_option("--names", o.compare.names, "column names (default: each run's label)");

  auto* sm = app.add_subcommand("survey-make", "write blind survey sheets and the hidden key");
  sm->add_option("--kind", o.survey_make.kind, "pair or single")
      ->capture_default_str()
      ->check(CLI::IsMember({"pair", "single"}));
  sm->add_option("--outputs", o.survey_make.outputs, "model=file, one sentence per line")->required();
  sm->add_option("--inputs", o.survey_make.inputs, "original sentences (pair kind)")->transform(kAbsolutePath);
  sm->add_option("--items-per-sheet", o.survey_make.items_per_sheet)->capture_default_str();
  sm->add_option("--seed", o.survey_make.seed)->capture_default_str();

  auto* st = app.add_subcommand("survey-tally", "tally survey responses against the key");
  st->add_option("--key", o.survey_tally.key, "key.tsv")->required()->transform(kAbsolutePath);
  st->add_option("--responses", o.survey_tally.responses, "TSV with item_id and choice")
      ->required()
      ->transform(kAbsolutePath);

  auto* oc = app.add_subcommand("oracle-check", "bound suite on random tiny models by quadrature");
  oc->add_option("--models", o.oracle.models)->capture_default_str();
  oc->add_option("--posteriors", o.oracle.posteriors, "random q per sequence")->capture_default_str();
  oc->add_option("--m", o.oracle.ms, "AutoGen m values")->capture_default_str()->delimiter(',');
  oc->add_option("--nodes", o.oracle.nodes, "Gauss-Hermite nodes")->capture_default_str();
  oc->add_option("--seed", o.oracle.seed)->capture_default_str();
}

// --- run directory and manifest -------------------------------------------

std::uint64_t seed_of(const std::string& sub, const Options& o) {
  if (sub == "prepare-data") return o.prepare.corpus.seed;
  if (sub == "train") return o.train.config.seed;
  if (sub == "reconstruct") return o.reconstruct.decode.seed;
  if (sub == "generate") return o.generate.decode.seed;
  if (sub == "interpolate") return o.interpolate.decode.seed;
  if (sub == "survey-make") return o.survey_make.seed;
  if (sub == "oracle-check") return o.oracle.seed;
  return 0;
}

fs::path make_run_dir(const Options& o, const std::string& sub, std::uint64_t seed) {
  if (!o.run_dir.empty()) {
    const fs::path dir(o.run_dir);
    if (fs::exists(dir) && !fs::is_empty(dir)) throw ConfigError("run directory " + dir.string() + " is not empty");
    fs::create_directories(dir);
    return dir;
  }
  const fs::path root = o.runs_root.empty() ? default_runs_root() : fs::path(o.runs_root);
  const std::string base = sub + "-" + timestamp() + "-s" + std::to_string(seed);
  fs::path dir = root / base;
  for (int k = 2; fs::exists(dir); ++k) dir = root / (base + "-" + std::to_string(k));
  fs::create_directories(dir);
  return dir;
}

struct Run {
  std::string subcommand;
  fs::path dir;
  std::string config_ini;  // resolved options of the subcommand
  json extra = json::object();
  std::vector<std::string> outputs;
};

void write_manifest(const Run& run) {
  json config = json::object();
  std::istringstream lines(run.config_ini);
  for (std::string line; std::getline(lines, line);) {
    const auto eq = line.find('=');
    if (line.empty() || line[0] == '[' || eq == std::string::npos) continue;
    std::string value = line.substr(eq + 1);
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    config[line.substr(0, eq)] = value;
  }
  json m = {{"tool", "autogen"},
            {"version", kToolVersion},
            {"subcommand", run.subcommand},
            {"created_utc", timestamp()},
            {"run_dir", run.dir.string()},
            {"config_file", "config.ini"},
            {"config", config},
            {"outputs", run.outputs}};
  for (const auto& [k, v] : run.extra.items()) m[k] = v;
  write_text(run.dir / "manifest.json", m.dump(2) + "\n");
}

// --- helpers ----------------------------------------------------------------

ObjectiveConfig objective_of(const TrainOptions& t) {
  if (t.objective == "annealed") {
    return ObjectiveConfig::annealed({parse_anneal_shape(t.anneal_shape), t.warmup_steps});
  }
  if (t.objective == "autogen") return ObjectiveConfig::autogen(t.m);
  if (t.objective == "beta") return ObjectiveConfig::beta(t.beta);
  return ObjectiveConfig::standard();
}

std::string default_label(const TrainOptions& t) {
  std::ostringstream out;
  out << t.objective;
  if (t.objective == "autogen") out << "_m" << t.m;
  if (t.objective == "beta") out << "_" << t.beta;
  return out.str();
}

struct LoadedModel {
  ModelParameters params;
  Vocabulary vocabulary;
};

LoadedModel load_model(const std::string& path) {
  auto c = load_checkpoint(path);
  if (!c.vocabulary) throw ValidationError("checkpoint " + path + " carries no vocabulary");
  return {std::move(c.params), std::move(*c.vocabulary)};
}

TokenSequence encode_sentence(const Vocabulary& vocab, const std::string& line) {
  const auto words = tokenize(line);
  if (words.empty()) throw DataError("empty sentence: '" + line + "'");
  return TokenSequence{vocab.encode(words)};
}

std::string text_of(const Vocabulary& vocab, const TokenSequence& s) { return vocab.join(s.ids); }

BeamConfig beam_of(const DecodeOptions& d) { return {d.beam_width, d.max_length}; }

// --- subcommands ------------------------------------------------------------

void cmd_prepare(const PrepareOptions& p, Run& run, std::ostream& out) {
  p.corpus.validate();
  std::vector<std::string> lines;
  std::string source;
  if (p.input.empty()) {
    p.grammar.validate();
    lines = generate_synthetic(p.grammar, p.synthetic_n, derive_seed(p.corpus.seed, seed_tag::kInit, 7));
    source = "synthetic";
  } else {
    lines = read_lines(p.input);
    source = p.input;
    run.extra["input_crc32"] = file_crc(p.input);
  }
  const auto corpus = filter_and_split(lines, p.corpus, source);
  save_corpus(corpus, p.corpus, run.dir);
  const auto stats = corpus_stats(corpus);
  run.outputs = {"train.txt", "test.txt", "vocab.tsv", "corpus_manifest.json"};
  run.extra["corpus"] = {{"source", source},
                         {"lines_read", corpus.provenance.lines_read},
                         {"retained", corpus.provenance.retained},
                         {"train", corpus.train.size()},
                         {"test", corpus.test.size()},
                         {"vocabulary", corpus.vocabulary.size()}};
  out << "corpus: " << corpus.provenance.retained << " of " << corpus.provenance.lines_read << " lines kept, "
      << corpus.train.size() << " train / " << corpus.test.size() << " test, vocabulary " << corpus.vocabulary.size()
      << ", unk rate " << stats.unk_rate << '\n';
}

void cmd_train(TrainOptions& t, Run& run, std::ostream& out) {
  auto& config = t.config;
  config.objective = objective_of(t);
  config.validate();
  const auto corpus = load_corpus(t.corpus);
  const auto vocab_size = static_cast<std::int64_t>(corpus.vocabulary.size());
  run.extra["corpus_crc32"] = {{"train.txt", file_crc(fs::path(t.corpus) / "train.txt")},
                               {"test.txt", file_crc(fs::path(t.corpus) / "test.txt")},
                               {"vocab.tsv", file_crc(fs::path(t.corpus) / "vocab.tsv")}};
  run.extra["label"] = t.label.empty() ? default_label(t) : t.label;
  run.extra["objective"] = config.objective.describe();
  run.extra["full_scale_values"] = {{"batch_size", 200}, {"total_steps", 1000000}};

  TrainState state = t.resume.empty() ? initial_state(config, vocab_size)
                                      : state_from_checkpoint(load_checkpoint(t.resume), config, vocab_size);
  TrainHooks hooks;
  hooks.checkpoint_dir = run.dir / "checkpoints";
  hooks.config_text = run.config_ini;
  std::ofstream timing(run.dir / "timing.csv");
  timing << "step,seconds\n";
  hooks.on_eval = [&](const MetricsRow& row, double seconds) {
    timing << row.step << ',' << seconds << '\n';
    out << "step " << row.step << "  elbo " << row.elbo << "  kl " << row.kl << "  kl_fraction " << row.kl_fraction
        << "  (" << std::fixed << std::setprecision(1) << seconds << std::defaultfloat << std::setprecision(6)
        << " s)\n";
  };

  run.outputs = {"timing.csv", "checkpoints/"};
  const auto result = train(std::move(state), corpus, config, hooks);
  result.metrics.write(run.dir / "metrics.csv");
  save_checkpoint((run.dir / "model.bin").string(),
                  Checkpoint{result.state.params, corpus.vocabulary, result.state.adam, result.state.step,
                             run.config_ini});
  run.outputs = {"metrics.csv", "timing.csv", "model.bin", "checkpoints/"};
}

void cmd_reconstruct(const ReconstructOptions& r, Run& run, std::ostream& out) {
  const auto model = load_model(r.decode.model);
  std::vector<std::string> inputs;
  if (!r.input.empty()) {
    inputs = read_lines(r.input);
  } else if (!r.corpus.empty()) {
    const auto corpus = load_corpus(r.corpus);
    for (const auto& s : corpus.test) inputs.push_back(corpus.vocabulary.join(s.ids));
  } else {
    throw ConfigError("reconstruct: give --input or --corpus");
  }
  if (r.limit > 0 && inputs.size() > r.limit) inputs.resize(r.limit);
  if (inputs.empty()) throw DataError("reconstruct: no input sentences");

  std::vector<std::string> originals, outputs;
  std::vector<std::pair<Words, Words>> pairs;
  std::ostringstream tsv;
  tsv << "input\treconstruction\n";
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const auto x = encode_sentence(model.vocabulary, inputs[k]);
    const auto d = reconstruct(model.params, x, beam_of(r.decode), derive_seed(r.decode.seed, seed_tag::kDecode, k));
    originals.push_back(text_of(model.vocabulary, x));
    outputs.push_back(text_of(model.vocabulary, d.tokens));
    pairs.emplace_back(model.vocabulary.decode(x.ids), model.vocabulary.decode(d.tokens.ids));
    tsv << originals.back() << '\t' << outputs.back() << '\n';
  }
  write_text(run.dir / "reconstructions.tsv", tsv.str());
  write_lines(run.dir / "inputs.txt", originals);
  write_lines(run.dir / "reconstructions.txt", outputs);
  const auto m = reconstruction_metrics(pairs);
  const json summary = {{"pairs", m.pairs},
                        {"exact_match", m.exact_match},
                        {"token_accuracy", m.token_accuracy},
                        {"mean_edit_distance", m.mean_edit_distance}};
  write_text(run.dir / "reconstruction_metrics.json", summary.dump(2) + "\n");
  run.outputs = {"reconstructions.tsv", "inputs.txt", "reconstructions.txt", "reconstruction_metrics.json"};
  out << "reconstructed " << m.pairs << " sentences: exact " << m.exact_match << ", token accuracy "
      << m.token_accuracy << ", edit distance " << m.mean_edit_distance << '\n';
}

void cmd_generate(const GenerateOptions& g, Run& run, std::ostream& out) {
  const auto model = load_model(g.decode.model);
  std::vector<TokenSequence> sentences;
  for (std::size_t k = 0; k < g.count; ++k) {
    const auto d = generate_from_prior(model.params, beam_of(g.decode),
                                       derive_seed(g.decode.seed, seed_tag::kDecode, k), g.sample);
    sentences.push_back(d.tokens);
  }
  if (g.presentable) sentences = presentation_filter(sentences);
  std::vector<std::string> lines;
  for (const auto& s : sentences) lines.push_back(text_of(model.vocabulary, s));
  write_lines(run.dir / "generated.txt", lines);
  run.outputs = {"generated.txt"};
  out << "generated " << lines.size() << " sentences\n";
  for (std::size_t k = 0; k < std::min<std::size_t>(lines.size(), 5); ++k) out << "  " << lines[k] << '\n';
}

void cmd_interpolate(const InterpolateOptions& i, Run& run, std::ostream& out) {
  const auto model = load_model(i.decode.model);
  const auto x1 = encode_sentence(model.vocabulary, i.from);
  const auto x2 = encode_sentence(model.vocabulary, i.to);
  const auto result = interpolate(model.params, x1, x2, i.points, beam_of(i.decode), i.decode.seed);
  std::vector<std::string> lines;
  for (const auto& d : result.sentences) lines.push_back(text_of(model.vocabulary, d.tokens));
  write_lines(run.dir / "interpolation.txt", lines);
  run.outputs = {"interpolation.txt"};
  for (const auto& l : lines) out << l << '\n';
}

void cmd_compare(CompareOptions c, Run& run, std::ostream& out) {
  // An empty list round-trips through config.ini as one empty string.
  std::erase(c.names, std::string());
  if (!c.names.empty() && c.names.size() != c.runs.size()) {
    throw ConfigError("compare: --names must match --runs in count");
  }
  std::vector<NamedTable> tables;
  for (std::size_t k = 0; k < c.runs.size(); ++k) {
    const fs::path dir(c.runs[k]);
    std::string name;
    if (!c.names.empty()) {
      name = c.names[k];
    } else {
      const auto m = json::parse(read_text(dir / "manifest.json"));
      name = m.value("label", dir.filename().string());
    }
    tables.push_back({name, MetricsTable::read(dir / "metrics.csv")});
  }
  const auto cmp = compare_runs(tables);
  write_text(run.dir / "comparison.csv", cmp.aligned_csv());
  write_text(run.dir / "summary.txt", cmp.summary());
  emit_plot_data(tables, run.dir);
  run.outputs = {"comparison.csv", "summary.txt", "kl_fraction.csv", "elbo.csv"};
  out << cmp.summary();
}

void cmd_survey_make(const SurveyMakeOptions& s, Run& run, std::ostream& out) {
  std::vector<ModelOutputs> outputs;
  for (const auto& spec : s.outputs) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("survey-make: --outputs expects model=file, got " + spec);
    outputs.push_back({spec.substr(0, eq), read_lines(fs::absolute(spec.substr(eq + 1)))});
  }
  const auto kind = parse_survey_kind(s.kind);
  std::vector<std::string> inputs;
  if (kind == SurveyKind::kReconstructionPair) {
    if (s.inputs.empty()) throw ConfigError("survey-make: the pair kind needs --inputs");
    inputs = read_lines(s.inputs);
  }
  const auto survey = make_survey(kind, outputs, inputs, s.seed, s.items_per_sheet);
  write_survey(survey, run.dir / "survey");
  std::size_t items = 0;
  for (const auto& sheet : survey.sheets) items += sheet.size();
  run.outputs = {"survey/"};
  out << "wrote " << survey.sheets.size() << " sheets with " << items << " items; key in survey/key.tsv\n";
}

void cmd_survey_tally(const SurveyTallyOptions& s, Run& run, std::ostream& out) {
  const auto result = tally_survey(read_responses(s.responses), read_survey_key(s.key));
  write_text(run.dir / "tally.txt", result.report());
  run.outputs = {"tally.txt"};
  out << result.report();
}

void cmd_oracle(const OracleOptions& o, Run& run, std::ostream& out) {
  const auto r = oracle::run_oracle_sweep(o.models, o.posteriors, o.ms, o.seed, oracle::Quadrature(o.nodes));
  const json report = {{"models", r.models},
                       {"evaluations", r.evaluations},
                       {"min_bound_gap", r.min_bound_gap},
                       {"max_identity_error", r.max_identity_error},
                       {"max_tightness_gap", r.max_tightness_gap},
                       {"max_total_probability_error", r.max_total_probability_error},
                       {"max_posterior_mass_error", r.max_posterior_mass_error},
                       {"max_refinement_change", r.max_refinement_change}};
  write_text(run.dir / "oracle_report.json", report.dump(2) + "\n");
  run.outputs = {"oracle_report.json"};
  out << "models " << r.models << ", evaluations " << r.evaluations << '\n'
      << "max bound-gap violation " << std::max(0.0, -r.min_bound_gap) << " (min gap " << r.min_bound_gap
      << ", expected >= -1e-9)\n"
      << "max identity error " << r.max_identity_error << '\n'
      << "max twisted-posterior tightness gap " << r.max_tightness_gap << '\n'
      << "max total probability error " << r.max_total_probability_error << '\n'
      << "max posterior mass error " << r.max_posterior_mass_error << '\n'
      << "max refinement change " << r.max_refinement_change << '\n';
  if (r.min_bound_gap < -1e-9 || r.max_identity_error > 1e-10 || r.max_tightness_gap > 1e-6) {
    throw ValidationError("oracle-check: bound suite violated");
  }
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, int depth);

// Rebuilds the original invocation from a manifest: the recorded config.ini
// next to it, the same subcommand and the same runs root.
int replay(const Options& o, std::ostream& out, std::ostream& err, int depth) {
  if (depth > 0) throw ConfigError("--replay cannot be nested");
  const fs::path manifest_path = fs::absolute(o.replay);
  const auto m = json::parse(read_text(manifest_path));
  const auto sub = m.at("subcommand").get<std::string>();
  const fs::path config = manifest_path.parent_path() / m.value("config_file", "config.ini");
  std::vector<std::string> args{"autogen", "--config", config.string()};
  if (!o.runs_root.empty()) args.insert(args.end(), {"--runs-root", o.runs_root});
  if (!o.run_dir.empty()) args.insert(args.end(), {"--run-dir", o.run_dir});
  args.push_back(sub);
  out << "replaying " << sub << " from " << manifest_path.string() << '\n';
  return dispatch(args, out, err, depth + 1);
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, int depth) {
  CLI::App app{"Latent-variable sentence models: standard, annealed, AutoGen(m) and beta objectives", "autogen"};
  Options o;
  build(app, o);
  app.require_subcommand(0, 1);
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend() - 1);
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }
  if (!o.replay.empty()) return replay(o, out, err, depth);
  if (app.get_subcommands().empty()) {
    err << app.help();
    return 2;
  }
  CLI::App* sub = app.get_subcommands().front();
  Run run;
  run.subcommand = sub->get_name();
  run.config_ini = "[" + run.subcommand + "]\n" + sub->config_to_str(true, false);
  run.dir = make_run_dir(o, run.subcommand, seed_of(run.subcommand, o));
  write_text(run.dir / "config.ini", run.config_ini);
  out << "run directory: " << run.dir.string() << '\n';

  try {
    if (run.subcommand == "prepare-data") cmd_prepare(o.prepare, run, out);
    if (run.subcommand == "train") cmd_train(o.train, run, out);
    if (run.subcommand == "reconstruct") cmd_reconstruct(o.reconstruct, run, out);
    if (run.subcommand == "generate") cmd_generate(o.generate, run, out);
    if (run.subcommand == "interpolate") cmd_interpolate(o.interpolate, run, out);
    if (run.subcommand == "compare") cmd_compare(o.compare, run, out);
    if (run.subcommand == "survey-make") cmd_survey_make(o.survey_make, run, out);
    if (run.subcommand == "survey-tally") cmd_survey_tally(o.survey_tally, run, out);
    if (run.subcommand == "oracle-check") cmd_oracle(o.oracle, run, out);
  } catch (const std::exception& e) {
    run.extra["status"] = std::string("failed: ") + e.what();
    write_manifest(run);
    throw;
  }
  run.extra["status"] = "ok";
  write_manifest(run);
  return 0;
}

}  // namespace

fs::path default_runs_root() {
  const char* env = std::getenv("AUTOGEN_RUNS_ROOT");
  return (env != nullptr && *env != '\0') ? fs::path(env) : fs::path("runs");
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    return dispatch(args, out, err, 0);
  } catch (const Error& e) {
    err << "error [" << exit_code(e.category()) << "]: " << e.what() << '\n';
    return exit_code(e.category());
  } catch (const nlohmann::json::exception& e) {
    err << "error [5]: malformed json: " << e.what() << '\n';
    return 5;
  } catch (const std::exception& e) {
    err << "error [1]: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace autogen::cli
