#include "abmamba/bench.hpp"
#include "abmamba/checkpoint.hpp"
#include "abmamba/experiment.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>

using namespace abmamba;
namespace fs = std::filesystem;

namespace {

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_path, "key = value config file");
  cmd->add_option("--seed", o.seed, "training seed (sets train.seed)");
  cmd->add_option("--out", o.out, "output directory (sets out.dir)");
  cmd->add_option("--set", o.overrides, "dotted-key override, e.g. train.lr=3e-4")->take_all();
}

// Defaults, then `base` text if given, then the config file, then flags.
RunConfig resolve(const CommonOptions& o, const std::string& base = "", const std::string& base_origin = "") {
  RunConfig cfg = base.empty() ? RunConfig{} : parse_config(base, base_origin);
  if (!o.config_path.empty()) load_config_into(cfg, o.config_path);
  for (const auto& kv : o.overrides) apply_override(cfg, kv);
  if (o.seed) cfg.train.seed = *o.seed;
  if (!o.out.empty()) cfg.out_dir = o.out;
  cfg.validate();
  return cfg;
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << std::setprecision(9);
  return out;
}

void prepare_out_dir(const RunConfig& cfg, const std::string& echo_name = "config.txt") {
  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);
  if (ec) throw DataError("cannot create output directory " + cfg.out_dir + ": " + ec.message());
  open_output(fs::path(cfg.out_dir) / echo_name) << echo_config(cfg);
}

void write_eval_csv(const EvalReport& rep, const Manifest& m, const fs::path& path) {
  auto out = open_output(path);
  out << "sample_id,bleu1,bleu4,rouge_l,candidate,reference\n";
  for (std::size_t i = 0; i < rep.records.size(); ++i) {
    const auto& r = rep.records[i];
    out << m.scenes[i].seed << ',' << r.bleu1 << ',' << r.bleu4 << ',' << r.rouge_l << ',' << r.candidate << ','
        << r.reference << '\n';
  }
}

void print_report(const EvalReport& rep) {
  std::printf("bleu1 %.4f  bleu4 %.4f  rouge_l %.4f  event_bleu1 %.4f (%ld event captions)\n", rep.bleu1,
              rep.bleu4, rep.rouge_l, rep.event_bleu1, long(rep.event_count));
}

template <typename S>
void cmd_train(const RunConfig& cfg) {
  prepare_out_dir(cfg);
  const Datasets data = make_datasets(cfg);
  const auto examples = prepare_examples<S>(data.train, cfg);
  Rng rng(cfg.train.seed);
  auto params = CaptionerParams<S>::init(cfg, rng);
  auto loss = open_output(fs::path(cfg.out_dir) / "loss.csv");
  loss << "step,epoch,loss,lr,grad_norm\n";
  const auto summary = train_captioner(params, cfg, examples, [&](const TrainStep& s) {
    loss << s.step << ',' << s.epoch << ',' << s.loss << ',' << s.lr << ',' << s.grad_norm << '\n';
  });
  for (std::size_t e = 0; e < summary.epoch_loss.size(); ++e)
    std::printf("epoch %zu loss %.5f\n", e, summary.epoch_loss[e]);
  const auto ckpt = (fs::path(cfg.out_dir) / "model.ckpt").string();
  save_checkpoint(params, echo_config(cfg), ckpt);
  std::printf("trained %zu steps in %.1f s; checkpoint %s\n", summary.steps.size(), summary.seconds, ckpt.c_str());
}

std::string default_checkpoint(const CommonOptions& o, const std::string& flag) {
  if (!flag.empty()) return flag;
  return (fs::path(o.out.empty() ? RunConfig{}.out_dir : o.out) / "model.ckpt").string();
}

// Architecture comes from the checkpoint's own config unless overridden.
RunConfig resolve_from_checkpoint(const CommonOptions& o, const std::string& ckpt) {
  return resolve(o, read_checkpoint_file(ckpt).config_echo, ckpt);
}

template <typename S>
void cmd_eval(const RunConfig& cfg, const std::string& ckpt, const std::string& manifest_path) {
  prepare_out_dir(cfg, "eval_config.txt");
  Rng rng(0);
  auto params = CaptionerParams<S>::init(cfg, rng);
  load_checkpoint(params, ckpt);
  const Manifest m = manifest_path.empty() ? make_datasets(cfg).eval : read_manifest(manifest_path);
  if (m.geometry != cfg.data.geometry)
    throw DataError("manifest geometry does not match data.frames/height/width of the config");
  const auto rep = evaluate_captioner(params, cfg, prepare_examples<S>(m, cfg));
  write_eval_csv(rep, m, fs::path(cfg.out_dir) / "eval.csv");
  print_report(rep);
}

template <typename S>
void cmd_generate(const RunConfig& cfg, const std::string& ckpt, const std::vector<std::uint64_t>& seeds) {
  Rng rng(0);
  auto params = CaptionerParams<S>::init(cfg, rng);
  load_checkpoint(params, ckpt);
  const auto enc = EncoderPair::create(cfg.data.patch, cfg.encoder.d_s, cfg.encoder.d_d);
  const Vocabulary vocab;
  for (auto seed : seeds) {
    const Scene s = sample_scene(seed, cfg.data.geometry);
    const auto ids = caption_generate(params, cfg.ahbs, video_features<S>(s, cfg.data.geometry, enc),
                                      cfg.eval_max_len);
    std::printf("%llu\t%s\t(reference: %s)\n", static_cast<unsigned long long>(seed), vocab.decode(ids).c_str(),
                caption_of(s).c_str());
  }
}

template <typename S>
void cmd_ablate(const RunConfig& cfg, Index seeds, const std::vector<std::string>& variants) {
  prepare_out_dir(cfg);
  const Datasets data = make_datasets(cfg);
  auto csv = open_output(fs::path(cfg.out_dir) / "ablate.csv");
  csv << "variant,seed,bleu1,bleu4,event_bleu1,event_bleu4,rouge_l,train_seconds\n";
  std::map<std::string, std::array<double, 4>> sums;
  std::printf("%-12s %6s %8s %8s %12s %12s\n", "variant", "seed", "bleu1", "bleu4", "event_bleu1", "event_bleu4");
  for (const auto& v : variants) {
    for (Index k = 0; k < seeds; ++k) {
      RunConfig run = apply_variant(cfg, v);
      run.train.seed = cfg.train.seed + std::uint64_t(k);
      const auto r = run_experiment<S>(run, data);
      const auto& e = r.eval;
      csv << v << ',' << run.train.seed << ',' << e.bleu1 << ',' << e.bleu4 << ',' << e.event_bleu1 << ','
          << e.event_bleu4 << ',' << e.rouge_l << ',' << r.train.seconds << '\n';
      csv.flush();
      std::printf("%-12s %6llu %8.4f %8.4f %12.4f %12.4f\n", v.c_str(),
                  static_cast<unsigned long long>(run.train.seed), e.bleu1, e.bleu4, e.event_bleu1, e.event_bleu4);
      std::fflush(stdout);
      auto& s = sums[v];
      s[0] += e.bleu1 / double(seeds);
      s[1] += e.bleu4 / double(seeds);
      s[2] += e.event_bleu1 / double(seeds);
      s[3] += e.event_bleu4 / double(seeds);
    }
  }
  for (const auto& v : variants)
    std::printf("%-12s %6s %8.4f %8.4f %12.4f %12.4f\n", v.c_str(), "mean", sums[v][0], sums[v][1], sums[v][2],
                sums[v][3]);
}

template <typename S>
void cmd_bench_throughput(const RunConfig& cfg) {
  prepare_out_dir(cfg);
  const auto rep = bench_throughput<S>(cfg, cfg.train.seed);
  for (const auto& w : rep.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  auto out = open_output(fs::path(cfg.out_dir) / "bench_throughput.csv");
  write_bench_csv(rep, out);
  write_bench_csv(rep, std::cout);
}

template <typename S>
void cmd_bench_memory(const RunConfig& cfg) {
  prepare_out_dir(cfg);
  const auto rep = bench_memory<S>(cfg, cfg.train.seed);
  auto out = open_output(fs::path(cfg.out_dir) / "bench_memory.csv");
  write_memory_csv(rep, out);
  std::printf("ssm state %ld elements at every step (closed form %ld); attention cache %ld -> %ld elements\n",
              long(rep.rows.front().ssm_state_elements), long(rep.closed_form),
              long(rep.rows.front().attention_cache_elements), long(rep.rows.back().attention_cache_elements));
  if (!rep.ssm_constant || !rep.attention_linear || rep.rows.front().ssm_state_elements != rep.closed_form)
    throw NumericError("memory law violated; see bench_memory.csv");
}

void cmd_make_data(const RunConfig& cfg) {
  prepare_out_dir(cfg);
  const Datasets data = make_datasets(cfg);
  const auto dir = fs::path(cfg.out_dir);
  write_manifest(data.train, (dir / "train_manifest.csv").string());
  write_manifest(data.eval, (dir / "eval_manifest.csv").string());
  std::printf("wrote %zu train and %zu eval samples to %s\n", data.train.scenes.size(), data.eval.scenes.size(),
              dir.string().c_str());
}

template <typename F>
void dispatch(F&& f) {
  if (precision_from_env() == 64)
    f(double{});
  else
    f(float{});
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical bidirectional selective-scan video captioner"};
  app.require_subcommand(1);
  CommonOptions opt;
  std::string ckpt, manifest;
  std::vector<std::uint64_t> sample_seeds;
  Index ablate_seeds = 3;
  std::vector<std::string> variants = ablation_variants();

  auto* train = app.add_subcommand("train", "train a captioner and write checkpoint, loss curve and config echo");
  auto* eval = app.add_subcommand("eval", "score a checkpoint on the held-out split or a manifest");
  auto* gen = app.add_subcommand("generate", "print captions for given sample seeds");
  auto* ablate = app.add_subcommand("ablate", "train and score the ablation grid");
  auto* bench_t = app.add_subcommand("bench-throughput", "time one SSM block against attention");
  auto* bench_m = app.add_subcommand("bench-memory", "count decode state elements per step");
  auto* data = app.add_subcommand("make-data", "write train and eval manifests");
  for (auto* c : {train, eval, gen, ablate, bench_t, bench_m, data}) add_common(c, opt);
  eval->add_option("--checkpoint", ckpt, "checkpoint path (default OUT/model.ckpt)");
  eval->add_option("--manifest", manifest, "manifest to score instead of the generated eval split");
  gen->add_option("--checkpoint", ckpt, "checkpoint path (default OUT/model.ckpt)");
  gen->add_option("--sample-seed", sample_seeds, "scene seeds to caption")->required();
  ablate->add_option("--seeds", ablate_seeds, "training seeds per variant, counting up from train.seed")
      ->check(CLI::PositiveNumber);
  ablate->add_option("--variants", variants, "subset of full, no-backward, M=1, no-scan");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (train->parsed()) {
      const RunConfig cfg = resolve(opt);
      dispatch([&](auto s) { cmd_train<decltype(s)>(cfg); });
    } else if (eval->parsed() || gen->parsed()) {
      const std::string path = default_checkpoint(opt, ckpt);
      const RunConfig cfg = resolve_from_checkpoint(opt, path);
      if (eval->parsed())
        dispatch([&](auto s) { cmd_eval<decltype(s)>(cfg, path, manifest); });
      else
        dispatch([&](auto s) { cmd_generate<decltype(s)>(cfg, path, sample_seeds); });
    } else if (ablate->parsed()) {
      const RunConfig cfg = resolve(opt);
      for (const auto& v : variants) apply_variant(cfg, v);
      dispatch([&](auto s) { cmd_ablate<decltype(s)>(cfg, ablate_seeds, variants); });
    } else if (bench_t->parsed()) {
      const RunConfig cfg = resolve(opt);
      dispatch([&](auto s) { cmd_bench_throughput<decltype(s)>(cfg); });
    } else if (bench_m->parsed()) {
      const RunConfig cfg = resolve(opt);
      dispatch([&](auto s) { cmd_bench_memory<decltype(s)>(cfg); });
    } else if (data->parsed()) {
      cmd_make_data(resolve(opt));
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
