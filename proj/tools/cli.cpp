// Copyright 2026 The UniEnc Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <random>
#include <sstream>

#include "unienc/checkpoint.hpp"
#include "unienc/config.hpp"
#include "unienc/data.hpp"
#include "unienc/decoding.hpp"
#include "unienc/error.hpp"
#include "unienc/eval.hpp"
#include "unienc/finite_diff.hpp"
#include "unienc/training.hpp"

namespace unienc::cli {
namespace fs = std::filesystem;

namespace {

constexpr double kGradTolerance = 1e-3;

// UNIENC_LOG=quiet silences progress lines; results are always printed.
bool quiet() {
  const char* v = std::getenv("UNIENC_LOG");
  return v != nullptr && std::string_view(v) == "quiet";
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::istringstream is{std::string(text)};
  for (std::string w; is >> w;) out.push_back(w);
  return out;
}

bool has_entries(const fs::path& dir) {
  return fs::exists(dir) && fs::is_directory(dir) && !fs::is_empty(dir);
}

// --- synth -----------------------------------------------------------

struct SynthArgs {
  std::string out;
  std::size_t num_utts = 0;
  std::uint64_t seed = 0;
  std::string split = "utt";
  bool force = false;
  std::vector<std::string> overrides;
};

int run_synth(const SynthArgs& a, std::ostream& out) {
  RunConfig cfg;
  for (const auto& o : a.overrides) {
    if (o.rfind("data.", 0) != 0) throw ConfigError("synth: only data.* keys apply, got '" + o + "'");
    apply_override(o, cfg);
  }
  cfg.data.seed = a.seed;
  cfg.data.validate();

  const fs::path dir(a.out);
  if (has_entries(dir)) {
    if (!a.force) {
      throw ConfigError("synth: " + dir.string() + " is not empty (use --force to overwrite)");
    }
    for (const char* name : {"manifest.tsv", "vocab.txt", "alignments.tsv"}) fs::remove(dir / name);
    fs::remove_all(dir / "feats");
  }
  const data::SynthDataset ds = data::synth_generate(cfg.data, a.num_utts, a.split);
  data::write_dataset(dir, ds);
  out << "wrote " << ds.utterances.size() << " utterances to " << dir.string() << "\n";
  return kOk;
}

// --- train -----------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string data;
  std::string out;
  std::string valid;
  std::string resume;
  std::vector<std::string> overrides;
};

struct DatasetDirs {
  fs::path train;
  std::optional<fs::path> valid;
};

DatasetDirs resolve_dirs(const TrainArgs& a) {
  const fs::path root(a.data);
  DatasetDirs d;
  if (fs::exists(root / "train" / "manifest.tsv")) {
    d.train = root / "train";
    if (fs::exists(root / "valid" / "manifest.tsv")) d.valid = root / "valid";
  } else {
    d.train = root;
  }
  if (!a.valid.empty()) d.valid = fs::path(a.valid);
  if (!fs::exists(d.train / "manifest.tsv")) {
    throw IntegrityError("train: no manifest.tsv under " + root.string());
  }
  return d;
}

int run_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  load_config_file(a.config, cfg);
  for (const auto& o : a.overrides) apply_override(o, cfg);

  const DatasetDirs dirs = resolve_dirs(a);
  const data::Vocab vocab = data::load_vocab(dirs.train / "vocab.txt");
  std::vector<data::Utterance> train = data::load_manifest(dirs.train / "manifest.tsv", vocab);
  std::vector<data::Utterance> valid;
  if (dirs.valid) {
    const data::Vocab vv = data::load_vocab(*dirs.valid / "vocab.txt");
    if (vv.tokens() != vocab.tokens()) {
      throw IntegrityError("train: validation vocab differs from training vocab");
    }
    valid = data::load_manifest(*dirs.valid / "manifest.tsv", vocab);
  } else {
    // Last tenth of the manifest is held out.
    const std::size_t held = std::max<std::size_t>(1, train.size() / 10);
    if (train.size() < 2) throw IntegrityError("train: need at least two utterances");
    valid.assign(std::make_move_iterator(train.end() - static_cast<long>(held)),
                 std::make_move_iterator(train.end()));
    train.resize(train.size() - held);
  }
  if (train.empty() || valid.empty()) throw IntegrityError("train: empty training or validation set");

  cfg.model.vocab_size = vocab.real_tokens();
  cfg.model.feat_dim = train.front().features.cols();
  cfg.validate();

  const fs::path out_dir(a.out);
  fs::create_directories(out_dir);
  {
    std::ofstream c(out_dir / "config.txt");
    c << cfg.to_text();
  }
  data::save_vocab(out_dir / "vocab.txt", vocab);

  Model model(cfg.model, cfg.train.seed);
  FitOptions opts;
  opts.checkpoint_path = out_dir / "best.ckpt";
  opts.last_checkpoint_path = out_dir / "last.ckpt";
  opts.final_schedule = cfg.decode;
  if (!a.resume.empty()) opts.resume = load_checkpoint(a.resume);

  std::ofstream log(out_dir / "train_log.jsonl", a.resume.empty() ? std::ios::trunc : std::ios::app);
  const bool verbose = !quiet();
  opts.on_epoch = [&](const EpochRecord& rec) {
    log << rec.to_json() << "\n";
    log.flush();
    if (verbose) err << rec.to_json() << "\n";
  };

  const FitResult res = fit(model, train, valid, cfg.train, cfg.loss, opts);
  if (res.skipped_utterances > 0) {
    err << "skipped " << res.skipped_utterances << " infeasible training utterances\n";
  }

  nlohmann::json summary = {
      {"epochs", res.log.size()},
      {"steps", res.steps},
      {"best_epoch", res.best_epoch},
      {"valid_wer_greedy", res.best_valid_wer},
      {"skipped", res.skipped_utterances},
      {"diverged", res.diverged},
      {"seconds", res.seconds},
  };
  if (res.valid_wer_unienc) summary["valid_wer_unienc"] = *res.valid_wer_unienc;
  std::ofstream(out_dir / "summary.json") << summary.dump(2) << "\n";
  out << summary.dump() << "\n";
  if (res.diverged) {
    err << "training diverged; best weights kept in " << opts.checkpoint_path->string() << "\n";
    return kNumerical;
  }
  return kOk;
}

// --- decode ----------------------------------------------------------

struct DecodeArgs {
  std::string checkpoint;
  std::string manifest;
  std::string vocab;
  std::string schedule = "25,2";
  double threshold = 0.9;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string out;
  std::string nbest;
  bool greedy = false;
  std::size_t jobs = 1;
};

int run_decode(const DecodeArgs& a, std::ostream& out) {
  const DecodeSchedule schedule = DecodeSchedule::parse(a.schedule, a.threshold);
  if (!a.greedy && schedule.samples_randomly() && !a.seed_given) {
    throw ConfigError("decode: --seed is required when the schedule samples (threshold > 0)");
  }
  if (a.jobs < 1) throw ConfigError("decode: --jobs must be at least 1");

  const fs::path manifest(a.manifest);
  const fs::path vocab_path = a.vocab.empty() ? manifest.parent_path() / "vocab.txt" : fs::path(a.vocab);
  const data::Vocab vocab = data::load_vocab(vocab_path);
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  if (ckpt.model_config.vocab_size != vocab.real_tokens()) {
    throw DimensionMismatch("vocab", "checkpoint has " + std::to_string(ckpt.model_config.vocab_size) +
                                         " tokens, " + vocab_path.string() + " has " +
                                         std::to_string(vocab.real_tokens()));
  }
  const Model model = model_from_checkpoint(ckpt);
  const std::vector<data::Utterance> utts = data::load_manifest(manifest, vocab);
  for (const auto& u : utts) {
    if (u.features.cols() != model.config().feat_dim) {
      throw DimensionMismatch("features", u.id + " has " + std::to_string(u.features.cols()) +
                                              " dims, model expects " +
                                              std::to_string(model.config().feat_dim));
    }
  }

  DecodeOptions opts;
  opts.seed = a.seed;
  opts.jobs = a.jobs;
  std::vector<DecodeResult> results(utts.size());
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < utts.size(); ++i) index[utts[i].id] = i;

  auto decode_one = [&](const data::Utterance& u) {
    DecodeResult& r = results[index.at(u.id)];
    if (a.greedy) {
      r = DecodeResult{};
      r.best = decode_greedy_ctc(model, u.features);
      r.hypotheses.push_back(r.best);
    } else {
      r = decode_utterance(model, u.features, schedule, opts);
    }
  };

  std::optional<eval::RtfReport> timing;
  double audio = 0.0;
  for (const auto& u : utts) audio += u.duration;
  if (audio > 0.0) {
    timing = eval::rtf(decode_one, utts, 1);
  } else {
    for (const auto& u : utts) decode_one(u);
  }

  std::ofstream hyp(a.out);
  if (!hyp) throw IntegrityError("decode: cannot write " + a.out);
  for (std::size_t i = 0; i < utts.size(); ++i) {
    hyp << utts[i].id << "\t" << data::detokenize(results[i].best.tokens, vocab) << "\n";
  }
  if (!a.nbest.empty()) {
    std::ofstream nb(a.nbest);
    if (!nb) throw IntegrityError("decode: cannot write " + a.nbest);
    nb << std::setprecision(17);
    for (std::size_t i = 0; i < utts.size(); ++i) {
      const auto& hyps = results[i].hypotheses;
      for (std::size_t k = 0; k < hyps.size(); ++k) {
        std::string trace;
        for (std::size_t t = 0; t < hyps[k].trace.size(); ++t) {
          if (t) trace += ',';
          trace += std::to_string(hyps[k].trace[t]);
        }
        nb << utts[i].id << "\t" << k + 1 << "\t" << hyps[k].score << "\t" << trace << "\t"
           << data::detokenize(hyps[k].tokens, vocab) << "\n";
      }
    }
  }

  out << "decoded " << utts.size() << " utterances ("
      << (a.greedy ? std::string("greedy ctc") : "schedule " + schedule.to_string()) << ")\n";
  if (timing) {
    out << std::fixed << std::setprecision(4) << "RTF " << timing->rtf << " (wall "
        << timing->wall_seconds << " s, audio " << timing->audio_seconds << " s)\n";
  }
  return kOk;
}

// --- eval ------------------------------------------------------------

eval::Transcripts read_transcripts(const fs::path& path, std::size_t id_col, std::size_t text_col,
                                   std::size_t min_fields) {
  std::ifstream in(path);
  if (!in) throw IntegrityError("cannot open " + path.string());
  eval::Transcripts out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_fields(line);
    if (f.size() < min_fields || f[id_col].empty()) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                           std::to_string(min_fields) + " tab-separated fields",
                       lineno);
    }
    if (out.count(f[id_col])) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": duplicate id " + f[id_col],
                       lineno);
    }
    out[f[id_col]] = text_col < f.size() ? split_words(f[text_col]) : std::vector<std::string>{};
  }
  return out;
}

struct EvalArgs {
  std::string ref;
  std::string hyp;
  std::string per_utt;
};

int run_eval(const EvalArgs& a, std::ostream& out) {
  const auto refs = read_transcripts(a.ref, 0, 4, 5);
  const auto hyps = read_transcripts(a.hyp, 0, 1, 1);
  eval::ScoreReport report;
  try {
    report = eval::wer(refs, hyps);
  } catch (const ContractViolation& e) {
    throw IntegrityError(e.what());
  }
  out << report.to_text();
  if (!a.per_utt.empty()) std::ofstream(a.per_utt) << report.to_tsv();
  return kOk;
}

// --- gradcheck -------------------------------------------------------

struct GradcheckArgs {
  std::string dims = "d=8,blocks=2";
  double eps = 1e-5;
  std::size_t trials = 1;
  std::uint64_t seed = 1;
};

struct TinyDims {
  std::size_t d = 8, blocks = 2, heads = 2, ffn = 16, taee = 8, vocab = 4, feat = 4, frames = 12,
              tokens = 3;
};

TinyDims parse_dims(const std::string& spec) {
  TinyDims t;
  const std::map<std::string, std::size_t*> fields = {
      {"d", &t.d},         {"blocks", &t.blocks}, {"heads", &t.heads},
      {"ffn", &t.ffn},     {"taee", &t.taee},     {"vocab", &t.vocab},
      {"feat", &t.feat},   {"frames", &t.frames}, {"tokens", &t.tokens},
  };
  std::istringstream is(spec);
  for (std::string item; std::getline(is, item, ',');) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    const std::string key = item.substr(0, eq);
    const auto it = fields.find(key);
    if (it == fields.end()) throw ConfigError("gradcheck: unknown dimension '" + key + "'");
    if (eq == std::string::npos) throw ConfigError("gradcheck: missing value for " + key + " (expected integer)");
    try {
      std::size_t used = 0;
      const long long v = std::stoll(item.substr(eq + 1), &used);
      if (used != item.size() - eq - 1 || v < 1) throw std::invalid_argument(key);
      *it->second = static_cast<std::size_t>(v);
    } catch (const std::logic_error&) {
      throw ConfigError("gradcheck: " + key + ": expected positive integer, got '" +
                        item.substr(eq + 1) + "'");
    }
  }
  return t;
}

int run_gradcheck(const GradcheckArgs& a, std::ostream& out) {
  const TinyDims t = parse_dims(a.dims);
  if (!(a.eps > 0.0)) throw ConfigError("gradcheck: --eps must be positive");
  if (a.trials < 1) throw ConfigError("gradcheck: --trials must be at least 1");
  ModelConfig mc;
  mc.feat_dim = t.feat;
  mc.model_dim = t.d;
  mc.ffn_dim = t.ffn;
  mc.num_heads = t.heads;
  mc.num_blocks = t.blocks;
  mc.conv_downsample = 1;
  mc.taee_dim = t.taee;
  mc.taee_ffn_dim = t.ffn;
  mc.taee_heads = t.heads;
  mc.vocab_size = t.vocab;
  mc.max_frames = t.frames + t.tokens;
  mc.dropout = 0.0;
  mc.validate();
  if (t.tokens > t.frames) throw ConfigError("gradcheck: tokens must not exceed frames");
  const LossWeights weights{1.0, 1.0, 0.0};

  double worst = 0.0;
  std::string worst_at = "-";
  for (std::size_t trial = 0; trial < a.trials; ++trial) {
    std::mt19937_64 rng(a.seed * 1000003ULL + trial);
    Model model(mc, rng());
    Tensor feats = Tensor::matrix(t.frames, t.feat);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    for (double& v : feats.values()) v = unif(rng);
    std::vector<int> target;
    for (std::size_t u = 0; u < t.tokens; ++u) {
      int tok = 0;
      do {
        tok = 1 + static_cast<int>(rng() % t.vocab);
      } while (t.vocab > 1 && !target.empty() && tok == target.back());
      target.push_back(tok);
    }

    const LossAndGrad analytic = joint_loss_grad(model, feats, target, weights);
    const auto numeric = finite_diff_grad(
        [&](const ParameterStore&) { return joint_loss_values(model, feats, target, weights).total; },
        model.parameters(), a.eps);
    double trial_worst = 0.0;
    std::string trial_at = "-";
    for (std::size_t p = 0; p < numeric.size(); ++p) {
      for (std::size_t k = 0; k < numeric[p].size(); ++k) {
        const double e = relative_error(analytic.grads[p][k], numeric[p][k], kGradCheckFloor);
        if (e > trial_worst) {
          trial_worst = e;
          trial_at = model.parameters()[p].name + "[" + std::to_string(k) + "]";
        }
      }
    }
    out << "trial " << trial << ": loss " << std::setprecision(10) << analytic.values.total
        << ", worst relative error " << std::scientific << std::setprecision(6) << trial_worst
        << std::defaultfloat << " at " << trial_at << "\n";
    if (trial_worst > worst) {
      worst = trial_worst;
      worst_at = trial_at;
    }
  }
  out << "worst relative error: " << std::scientific << std::setprecision(6) << worst
      << std::defaultfloat << " at " << worst_at << " (tolerance " << kGradTolerance << ")\n";
  out << (worst < kGradTolerance ? "PASS" : "FAIL") << "\n";
  return worst < kGradTolerance ? kOk : kNumerical;
}

int map_error(const std::exception& e, std::ostream& err) {
  err << "error: " << e.what() << "\n";
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ContractViolation*>(&e)) {
    return kUsage;
  }
  if (dynamic_cast<const NumericalError*>(&e)) return kNumerical;
  return kDataIntegrity;
}

}  // namespace

std::string config_help() {
  const RunConfig defaults;
  std::ostringstream os;
  os << "Config keys (config file lines or --set key=value):\n";
  for (const auto& k : config_schema()) {
    os << "  " << k.key << " = " << defaults.get(k.key) << "  (" << type_name(k.type) << ") "
       << k.help << "\n";
  }
  return os.str();
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Two-pass CTC speech recognizer with token-level acoustic embeddings", "unienc"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic token-recognition dataset");
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_option("--num-utts", synth.num_utts, "Number of utterances")->required();
  s->add_option("--seed", synth.seed, "Generator seed")->required();
  s->add_option("--split", synth.split, "Utterance id prefix; also keys the utterance stream")
      ->capture_default_str();
  s->add_flag("--force", synth.force, "Overwrite a non-empty output directory");
  s->add_option("--set", synth.overrides, "data.* override, key=value (repeatable)");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train a model");
  t->add_option("--config", train.config, "Config file (key = value lines)")->required();
  t->add_option("--data", train.data, "Dataset directory (train/ and valid/, or a single manifest)")
      ->required();
  t->add_option("--out", train.out, "Output directory")->required();
  t->add_option("--valid", train.valid, "Validation dataset directory");
  t->add_option("--resume", train.resume, "Checkpoint to resume from");
  t->add_option("--set", train.overrides, "Config override, key=value (repeatable)");
  t->footer(config_help());

  DecodeArgs dec;
  auto* d = app.add_subcommand("decode", "Decode a manifest");
  d->add_option("--checkpoint", dec.checkpoint, "Model checkpoint")->required();
  d->add_option("--manifest", dec.manifest, "Manifest to decode")->required();
  d->add_option("--vocab", dec.vocab, "Vocabulary (default: vocab.txt next to the manifest)");
  d->add_option("--schedule", dec.schedule, "Samples per iteration")->capture_default_str();
  d->add_option("--threshold", dec.threshold, "ESA confidence threshold")->capture_default_str();
  auto* seed_opt = d->add_option("--seed", dec.seed, "Sampling seed (required when sampling)");
  d->add_option("--out", dec.out, "Hypothesis file (id<TAB>transcript)")->required();
  d->add_option("--nbest", dec.nbest, "N-best sidecar (id, rank, score, trace, transcript)");
  d->add_flag("--greedy", dec.greedy, "Greedy CTC over the first pass only");
  d->add_option("--jobs", dec.jobs, "Threads for branch forwards")->capture_default_str();

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Score hypotheses against a manifest");
  e->add_option("--ref", ev.ref, "Reference manifest")->required();
  e->add_option("--hyp", ev.hyp, "Hypothesis file")->required();
  e->add_option("--per-utt", ev.per_utt, "Per-utterance TSV output");

  GradcheckArgs gc;
  auto* g = app.add_subcommand("gradcheck", "Compare backward against central differences");
  g->add_option("--dims", gc.dims, "Tiny model dims: d, blocks, heads, ffn, taee, vocab, feat, frames, tokens")
      ->capture_default_str();
  g->add_option("--eps", gc.eps, "Finite-difference step")->capture_default_str();
  g->add_option("--trials", gc.trials, "Random models to check")->capture_default_str();
  g->add_option("--seed", gc.seed, "Seed")->capture_default_str();
  app.footer(config_help());

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& pe) {
    return app.exit(pe, out, err) == 0 ? kOk : kUsage;
  }

  try {
    if (s->parsed()) return run_synth(synth, out);
    if (t->parsed()) return run_train(train, out, err);
    if (d->parsed()) {
      dec.seed_given = seed_opt->count() > 0;
      return run_decode(dec, out);
    }
    if (e->parsed()) return run_eval(ev, out);
    if (g->parsed()) return run_gradcheck(gc, out);
  } catch (const std::exception& ex) {
    return map_error(ex, err);
  }
  return kUsage;
}

}  // namespace unienc::cli
