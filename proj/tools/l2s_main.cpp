// l2s: generate planted data, train screening models, benchmark them and
// compute hybrid perplexity. Exit status 0 on success, 1 on a runtime
// failure, 2 on a usage error.

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "l2s/eval.hpp"
#include "l2s/io.hpp"
#include "l2s/synth.hpp"
#include "l2s/train.hpp"

namespace fs = std::filesystem;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GenArgs {
  l2s::SynthSpec spec;
  std::size_t eval_n = 0;
  std::string out_dir;
  bool force = false;
};

struct TrainArgs {
  l2s::TrainConfig cfg;
  std::string mode = "l2s";
};

struct Paths {
  std::string layer, contexts, train_contexts, eval, model = "full", out, log;
};

struct BenchArgs {
  std::vector<std::size_t> ks{1, 5};
  std::size_t reps = 5;
  std::vector<std::size_t> sweep_r;
  double compute = 140.0;
};

void add_train_flags(CLI::App* cmd, TrainArgs& t) {
  auto& c = t.cfg;
  cmd->add_option("--r", c.clusters, "Number of clusters")->capture_default_str();
  cmd->add_option("--budget", c.budget, "Mean candidate-set budget B")->capture_default_str();
  cmd->add_option("--lambda", c.lambda, "Weight of wasted candidates")->capture_default_str();
  cmd->add_option("--gamma", c.gamma, "Budget penalty")->capture_default_str();
  cmd->add_option("--T", c.outer_iters, "Outer alternations")->capture_default_str();
  cmd->add_option("--epochs", c.epochs_per_iter, "SGD epochs per alternation")->capture_default_str();
  cmd->add_option("--lr", c.learning_rate, "Initial learning rate")->capture_default_str();
  cmd->add_option("--batch", c.batch_size, "Mini-batch size")->capture_default_str();
  cmd->add_option("--temperature", c.temperature, "Gumbel-softmax temperature")->capture_default_str();
  cmd->add_option("--ema", c.ema_decay, "Decay of the candidate-size moving average")
      ->capture_default_str();
  cmd->add_option("--label-k", c.top_k, "Ground-truth labels per context")->capture_default_str();
  cmd->add_option("--kmeans-iters", c.kmeans_iters, "k-means iteration cap")->capture_default_str();
  cmd->add_option("--probe", c.probe_size, "Trailing contexts held out for the log")
      ->capture_default_str();
  cmd->add_option("--mode", t.mode, "l2s or kmeans (no alternations)")
      ->check(CLI::IsMember({"l2s", "kmeans"}))
      ->capture_default_str();
  cmd->add_option("--seed", c.seed, "Seed")->envname("L2S_SEED")->capture_default_str();
}

l2s::TrainConfig resolve(const TrainArgs& t) {
  l2s::TrainConfig c = t.cfg;
  if (t.mode == "kmeans") c.outer_iters = 0;
  return c;
}

void check_writable(const fs::path& path, bool force) {
  if (fs::exists(path) && !force) {
    throw UsageError(path.string() + " exists; pass --force to overwrite");
  }
}

// Writes through a temporary so an interrupted run never leaves half a file.
template <class Fn>
void write_atomically(const fs::path& path, Fn&& fn) {
  const fs::path tmp = path.string() + ".tmp";
  fn(tmp);
  fs::rename(tmp, path);
}

int cmd_gen(const GenArgs& a) {
  const fs::path dir(a.out_dir);
  fs::create_directories(dir);
  const fs::path layer_path = dir / "layer.bin";
  const fs::path contexts_path = dir / "contexts.bin";
  const fs::path meta_path = dir / "meta.txt";
  const fs::path eval_path = dir / "eval.bin";
  for (const auto& p : {layer_path, contexts_path, meta_path}) check_writable(p, a.force);
  if (a.eval_n > 0) check_writable(eval_path, a.force);

  const l2s::PlantedData data = l2s::generate_synthetic(a.spec);
  write_atomically(layer_path, [&](const fs::path& p) { l2s::save_layer(p, data.layer); });
  write_atomically(contexts_path, [&](const fs::path& p) { l2s::save_contexts(p, data.contexts); });
  if (a.eval_n > 0) {
    // Held-out contexts from the same bundles, drawn from a stream the
    // training split never touches.
    l2s::Rng rng(a.spec.seed ^ 0x6576616c5f73706cULL);
    l2s::EvalStream stream;
    stream.contexts = l2s::sample_contexts(data, a.spec.noise_sigma, a.eval_n, rng);
    stream.targets = l2s::sample_targets(data.layer, stream.contexts, rng);
    write_atomically(eval_path, [&](const fs::path& p) { l2s::save_eval_stream(p, stream); });
  }

  std::ostringstream meta;
  const auto& s = a.spec;
  meta << "L\t" << s.vocab_size << "\nd\t" << s.dim << "\nN\t" << s.contexts << "\nr_true\t"
       << s.planted_clusters << "\nsubset\t" << s.subset_size << "\nsigma\t" << s.noise_sigma
       << "\nseed\t" << s.seed << "\nk\t" << s.top_k << "\neval_n\t" << a.eval_n
       << "\nattempts\t" << data.attempts << "\nplanted_containment\t" << data.containment << '\n';
  write_atomically(meta_path, [&](const fs::path& p) {
    std::ofstream out(p);
    out << meta.str();
    if (!out) throw std::runtime_error("cannot write " + p.string());
  });
  std::printf("planted_containment\t%.6f\n", data.containment);
  return 0;
}

int cmd_train(const TrainArgs& t, const Paths& p, bool force) {
  check_writable(p.out, force);
  if (!p.log.empty()) check_writable(p.log, force);
  const l2s::SoftmaxLayer layer = l2s::load_layer(p.layer);
  const l2s::ContextSet contexts = l2s::load_contexts(p.contexts);
  const l2s::TrainResult result = l2s::train(contexts, layer, resolve(t));
  write_atomically(p.out, [&](const fs::path& f) { l2s::save_model(f, result.model); });
  if (!p.log.empty()) {
    write_atomically(p.log, [&](const fs::path& f) {
      std::ofstream out(f);
      l2s::write_train_log(out, result.log);
      if (!out) throw std::runtime_error("cannot write " + f.string());
    });
  }
  std::printf("final_mismatch_loss\t%.10g\n", result.final_loss);
  std::printf("best_step\t%zu\n", result.best_step);
  std::printf("mean_candidate_size\t%.10g\n", result.log.back().hard_size);
  return 0;
}

l2s::ContextSet bench_contexts(const Paths& p) {
  if (!p.eval.empty()) return l2s::load_eval_stream(p.eval).contexts;
  if (!p.contexts.empty()) return l2s::load_contexts(p.contexts);
  throw UsageError("bench needs --contexts or --eval");
}

void emit(const std::string& out_path, bool force, const std::string& text) {
  std::fputs(text.c_str(), stdout);
  if (out_path.empty()) return;
  check_writable(out_path, force);
  write_atomically(out_path, [&](const fs::path& f) {
    std::ofstream out(f);
    out << text;
    if (!out) throw std::runtime_error("cannot write " + f.string());
  });
}

int cmd_bench(const BenchArgs& b, const TrainArgs& t, const Paths& p, bool force) {
  const l2s::SoftmaxLayer layer = l2s::load_layer(p.layer);
  const l2s::ContextSet contexts = bench_contexts(p);
  const l2s::BenchOptions opts{b.ks, b.reps};
  std::ostringstream text;

  if (!b.sweep_r.empty()) {
    if (p.train_contexts.empty()) throw UsageError("--sweep-r needs --train-contexts");
    const l2s::ContextSet train_set = l2s::load_contexts(p.train_contexts);
    const l2s::TrainConfig cfg = resolve(t);
    const l2s::LabelSets labels = l2s::label_contexts(layer, train_set, cfg.top_k);
    const auto rows =
        l2s::cluster_sweep(train_set, labels, layer, contexts, b.sweep_r, b.compute, cfg, opts);
    l2s::write_sweep_csv(text, rows);
    emit(p.out, force, text.str());
    return 0;
  }

  const l2s::ScreeningModel model = p.model == "full"
                                        ? l2s::ScreeningModel::full(layer.vocab_size(), layer.dim())
                                        : l2s::load_model(p.model);
  const l2s::BenchReport report = l2s::run_bench(model, layer, contexts, opts);
  l2s::write_report(text, report);
  emit(p.out, force, text.str());
  return 0;
}

std::size_t parse_rank(const std::string& text, std::size_t dim, std::size_t vocab) {
  const std::size_t full = std::min(dim, vocab);
  if (text == "full") return full;
  std::size_t value = 0;
  std::size_t divisor = 1;
  try {
    if (text.rfind("d/", 0) == 0) {
      value = dim;
      divisor = std::stoul(text.substr(2));
    } else {
      std::size_t used = 0;
      value = std::stoul(text, &used);
      if (used != text.size()) throw std::invalid_argument(text);
    }
  } catch (const std::logic_error&) {
    throw std::runtime_error("--rank must be full, an integer or d/<n>; got \"" + text + "\"");
  }
  if (divisor == 0) throw std::runtime_error("--rank d/0 is not a rank");
  return value / divisor;
}

int cmd_ppl(const std::string& rank_text, const Paths& p, bool force) {
  const l2s::SoftmaxLayer layer = l2s::load_layer(p.layer);
  const l2s::EvalStream stream = l2s::load_eval_stream(p.eval);
  const l2s::ScreeningModel model = p.model == "full"
                                        ? l2s::ScreeningModel::full(layer.vocab_size(), layer.dim())
                                        : l2s::load_model(p.model);
  const std::size_t rank = parse_rank(rank_text, layer.dim(), layer.vocab_size());
  std::ostringstream text;
  l2s::write_perplexity(text, l2s::hybrid_perplexity(model, layer, rank, stream));
  emit(p.out, force, text.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learned screening for fast top-k softmax inference"};
  app.set_config("--config", "", "key = value file; flags given on the command line win");
  app.require_subcommand(1);

  GenArgs gen;
  TrainArgs train_args;
  Paths paths;
  BenchArgs bench;
  std::string rank = "d/4";
  bool force = false;

  auto* g = app.add_subcommand("gen", "Write a planted synthetic layer and contexts");
  auto& s = gen.spec;
  g->add_option("--L", s.vocab_size, "Vocabulary size")->capture_default_str();
  g->add_option("--d", s.dim, "Context dimension")->capture_default_str();
  g->add_option("--N", s.contexts, "Training contexts")->capture_default_str();
  g->add_option("--r-true", s.planted_clusters, "Planted clusters")->capture_default_str();
  g->add_option("--subset", s.subset_size, "Planted label subset size")->capture_default_str();
  g->add_option("--sigma", s.noise_sigma, "Per-coordinate context noise")->capture_default_str();
  g->add_option("--k", s.top_k, "k for the containment check")->capture_default_str();
  g->add_option("--seed", s.seed, "Seed")->envname("L2S_SEED")->capture_default_str();
  g->add_option("--eval-n", gen.eval_n, "Held-out contexts with sampled targets (eval.bin)")
      ->capture_default_str();
  g->add_option("--out-dir", gen.out_dir, "Output directory")->required();
  g->add_flag("--force", gen.force, "Overwrite existing files");

  auto* t = app.add_subcommand("train", "Train a screening model");
  add_train_flags(t, train_args);
  t->add_option("--layer", paths.layer, "Layer file")->required()->check(CLI::ExistingFile);
  t->add_option("--contexts", paths.contexts, "Training contexts")
      ->required()
      ->check(CLI::ExistingFile);
  t->add_option("--out", paths.out, "Model file to write")->required();
  t->add_option("--log", paths.log, "Training log to write");
  t->add_flag("--force", force, "Overwrite existing files");

  auto* b = app.add_subcommand("bench", "Precision@k and speedup against the exact softmax");
  add_train_flags(b, train_args);
  b->add_option("--layer", paths.layer, "Layer file")->required()->check(CLI::ExistingFile);
  b->add_option("--contexts", paths.contexts, "Query contexts")->check(CLI::ExistingFile);
  b->add_option("--eval", paths.eval, "Eval stream whose contexts are the queries")
      ->check(CLI::ExistingFile);
  b->add_option("--model", paths.model, "Model file, or 'full' for the exact screen")
      ->capture_default_str();
  b->add_option("--k", bench.ks, "Comma-separated k values")->delimiter(',')->capture_default_str();
  b->add_option("--reps", bench.reps, "Timed passes")->capture_default_str();
  b->add_option("--sweep-r", bench.sweep_r, "Train and bench one model per r")->delimiter(',');
  b->add_option("--compute", bench.compute, "r + B held fixed in the sweep")->capture_default_str();
  b->add_option("--train-contexts", paths.train_contexts, "Training contexts for the sweep")
      ->check(CLI::ExistingFile);
  b->add_option("--out", paths.out, "Also write the report here");
  b->add_flag("--force", force, "Overwrite existing files");

  auto* p = app.add_subcommand("ppl", "Exact and hybrid perplexity on an eval stream");
  p->add_option("--layer", paths.layer, "Layer file")->required()->check(CLI::ExistingFile);
  p->add_option("--eval", paths.eval, "Eval stream")->required()->check(CLI::ExistingFile);
  p->add_option("--model", paths.model, "Model file, or 'full'")->capture_default_str();
  p->add_option("--rank", rank, "full, an integer, or d/<n>")->capture_default_str();
  p->add_option("--out", paths.out, "Also write the report here");
  p->add_flag("--force", force, "Overwrite existing files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (g->parsed()) return cmd_gen(gen);
    if (t->parsed()) return cmd_train(train_args, paths, force);
    if (b->parsed()) return cmd_bench(bench, train_args, paths, force);
    return cmd_ppl(rank, paths, force);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "l2s: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "l2s: %s\n", e.what());
    return 1;
  }
}
