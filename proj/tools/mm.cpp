// Command-line front end: build/inspect/run the models, round-trip weight
// stores, fuse normalization, and run the self-verification suite.
//
// Exit codes: 0 success, 1 usage/config error, 2 data error, 3 verification
// failure.

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "mobilemamba/mobilemamba.hpp"

namespace {

struct CommonArgs {
  std::string model = "S6";
  std::string weights;
  uint64_t seed = 0x6d6d;
  bool prefused = false;
};

void add_model_opts(CLI::App* cmd, CommonArgs& a, bool with_weights = true) {
  cmd->add_option("--model,-m", a.model, "Variant name (T2, T4, S6, B1, B2, B4)")
      ->capture_default_str();
  if (with_weights)
    cmd->add_option("--weights,-w", a.weights, "Weight store to load (.mmws)");
  cmd->add_option("--seed", a.seed, "Initialization seed when no weights are given")
      ->capture_default_str();
}

mm::Model make_model(const CommonArgs& a) {
  mm::Model m = mm::build_model(mm::preset(a.model), a.seed);
  if (a.prefused) m = mm::fuse_model(m).first;
  if (!a.weights.empty()) mm::load_weights(a.weights, m);
  return m;
}

mm::Tensor read_image(const std::string& path, int resolution) {
  const size_t want = static_cast<size_t>(3) * resolution * resolution;
  mm::Tensor x(1, 3, resolution, resolution);
  std::ifstream f(path, std::ios::binary);
  if (!f) throw mm::DataError("cannot open input " + path);
  f.read(reinterpret_cast<char*>(x.data.data()), static_cast<std::streamsize>(want * 4));
  if (static_cast<size_t>(f.gcount()) != want * 4)
    throw mm::DataError(mm::strfmt("input %s: expected %zu float32 values (planar RGB at %dx%d)",
                                   path.c_str(), want, resolution, resolution));
  f.peek();
  if (!f.eof()) throw mm::DataError("input " + path + " has trailing bytes");
  return x;
}

int run_infer(const CommonArgs& a, const std::string& input, bool fuse, int topk) {
  mm::Model m = make_model(a);
  if (fuse) m = mm::fuse_model(m).first;
  mm::Tensor x = input.empty() ? mm::Tensor(1, 3, m.cfg.resolution, m.cfg.resolution)
                               : read_image(input, m.cfg.resolution);
  if (input.empty()) {
    mm::Rng rng(a.seed + 1);
    for (float& v : x.data) v = rng.uniform();
    std::printf("no --input given; using a seeded random image\n");
  }
  const mm::Tensor logits = mm::forward(m, mm::imagenet_normalize(x));
  topk = std::clamp(topk, 1, logits.c);
  std::vector<int> order(logits.c);
  for (int i = 0; i < logits.c; ++i) order[i] = i;
  std::partial_sort(order.begin(), order.begin() + topk, order.end(),
                    [&](int i, int j) { return logits.data[i] > logits.data[j]; });
  std::printf("%s @ %d, top %d of %d classes:\n", m.cfg.name.c_str(), m.cfg.resolution, topk,
              logits.c);
  for (int r = 0; r < topk; ++r)
    std::printf("  class %4d  logit % .6g\n", order[r], logits.data[order[r]]);
  return 0;
}

int run_costs(const CommonArgs& a, bool per_layer, bool csv, bool params_only) {
  const mm::CostReport rep = mm::count_costs(mm::build_model(mm::preset(a.model), a.seed));
  if (csv) {
    std::fputs(rep.to_csv().c_str(), stdout);
  } else if (params_only) {
    std::printf("%s: %llu parameters (%.2f M)\n", rep.model_name.c_str(),
                static_cast<unsigned long long>(rep.total_params), rep.total_params / 1e6);
    for (int s = 0; s < 5; ++s)
      std::printf("  %-12s %llu\n",
                  s == 0 ? "stem" : s == 4 ? "head" : mm::strfmt("stage %d", s).c_str(),
                  static_cast<unsigned long long>(rep.params_by_stage[s]));
  } else {
    std::fputs(rep.to_text(per_layer).c_str(), stdout);
  }
  return 0;
}

int run_bench(const CommonArgs& a, int batch, int warmup, int iters, int threads, bool fused) {
  mm::Model m = make_model(a);
  if (fused) m = mm::fuse_model(m).first;
  std::printf("benchmarking %s @ %d (%s), batch %d, %d warmup + %d timed\n", m.cfg.name.c_str(),
              m.cfg.resolution, fused ? "fused" : "unfused", batch, warmup, iters);
  const mm::BenchResult r = mm::bench(m, batch, warmup, iters, threads, a.seed + 2);
  std::fputs(r.to_text().c_str(), stdout);
  return 0;
}

int run_fuse(const CommonArgs& a, const std::string& out, int probes) {
  mm::Model m = make_model(a);
  auto [fused, rep] = mm::fuse_model(m, probes, a.seed + 3);
  std::printf("%s\n", rep.summary().c_str());
  for (const auto& [producer, bn] : rep.fused_pairs)
    std::printf("  folded %s <- %s\n", producer.c_str(), bn.c_str());
  if (!out.empty()) {
    mm::save_weights(fused, out);
    std::printf("fused store written to %s (load with --prefused)\n", out.c_str());
  }
  return 0;
}

int run_verify(uint64_t seed, bool fast, bool as_json) {
  mm::VerifyOptions opt;
  opt.seed = seed;
  if (fast) {
    opt.scan_cases = 200;
    opt.selective_cases = 50;
    opt.wavelet_cases = 100;
    opt.mrffi_cases = 25;
    opt.include_variants = false;
  }
  const std::vector<mm::CheckResult> results = mm::run_verification(opt);
  bool all = true;
  for (const mm::CheckResult& r : results) all = all && r.pass;
  if (as_json) {
    nlohmann::json j;
    j["pass"] = all;
    j["checks"] = nlohmann::json::array();
    for (const mm::CheckResult& r : results)
      j["checks"].push_back({{"name", r.name}, {"pass", r.pass}, {"detail", r.detail}});
    std::printf("%s\n", j.dump(2).c_str());
  } else {
    for (const mm::CheckResult& r : results)
      std::printf("[%s] %-34s %s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str());
    std::printf(all ? "all checks passed\n" : "VERIFICATION FAILED\n");
  }
  return all ? 0 : 3;
}

int run_import(const CommonArgs& a, bool manifest) {
  mm::Model m = mm::build_model(mm::preset(a.model), a.seed);
  if (a.prefused) m = mm::fuse_model(m).first;
  mm::load_weights(a.weights, m);
  const mm::WeightStore store = mm::WeightStore::from_model(m);
  uint64_t elems = 0;
  for (const mm::WeightEntry& e : store.manifest) elems += e.elem_count();
  std::printf("%s: %zu entries, %llu float32 values, matches %s%s\n", a.weights.c_str(),
              store.manifest.size(), static_cast<unsigned long long>(elems), a.model.c_str(),
              a.prefused ? " (fused layout)" : "");
  if (manifest)
    for (const mm::WeightEntry& e : store.manifest) {
      std::string dims;
      for (size_t d = 0; d < e.dims.size(); ++d)
        dims += (d ? "x" : "") + std::to_string(e.dims[d]);
      std::printf("  %-52s %s\n", e.name.c_str(), dims.c_str());
    }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mobilemamba: lightweight vision backbone with a wavelet-enhanced "
               "bidirectional state-space mixer"};
  app.require_subcommand(1);

  CommonArgs a;
  std::string input, out;
  bool fuse = false, per_layer = false, csv = false, fast = false, as_json = false;
  bool manifest = false;
  int topk = 5, batch = 1, warmup = 2, iters = 10, threads = 0, probes = 2;

  CLI::App* c = app.add_subcommand("build", "Build a variant, report its shape, save weights");
  add_model_opts(c, a, false);
  c->add_option("--out,-o", out, "Write the initialized weight store here");

  c = app.add_subcommand("infer", "Run a forward pass on a raw float32 planar RGB image");
  add_model_opts(c, a);
  c->add_option("--input,-i", input, "Raw float32 file, 3*R*R values in [0,1]");
  c->add_flag("--fuse", fuse, "Fold normalization before running");
  c->add_flag("--prefused", a.prefused, "Weight store was saved from a fused model");
  c->add_option("--topk", topk, "Classes to print")->capture_default_str();

  c = app.add_subcommand("flops", "Per-layer and total multiply-accumulate counts");
  add_model_opts(c, a, false);
  c->add_flag("--per-layer", per_layer, "Print every layer row");
  c->add_flag("--csv", csv, "Machine-readable per-layer dump");

  c = app.add_subcommand("params", "Parameter counts by stage");
  add_model_opts(c, a, false);
  c->add_flag("--csv", csv, "Machine-readable per-layer dump");

  c = app.add_subcommand("bench", "Measure forward throughput");
  add_model_opts(c, a);
  c->add_option("--batch", batch, "Images per iteration")->capture_default_str();
  c->add_option("--warmup", warmup, "Untimed iterations")->capture_default_str();
  c->add_option("--iters", iters, "Timed iterations")->capture_default_str();
  c->add_option("--threads", threads, "Worker threads (0 = MM_THREADS or hardware)")
      ->capture_default_str();
  c->add_flag("--fused", fuse, "Fold normalization first");

  c = app.add_subcommand("fuse", "Fold conv+normalization pairs and report the result");
  add_model_opts(c, a);
  c->add_option("--out,-o", out, "Write the fused weight store here");
  c->add_option("--probes", probes, "Random images for the equivalence probe")
      ->capture_default_str();

  c = app.add_subcommand("verify", "Run the numerical self-checks");
  c->add_option("--seed", a.seed, "Base seed")->capture_default_str();
  c->add_flag("--fast", fast, "Skip the full-model checks");
  c->add_flag("--json", as_json, "Emit results as JSON");

  c = app.add_subcommand("export-weights", "Serialize a model's weights to a store file");
  add_model_opts(c, a);
  c->add_option("--out,-o", out, "Destination path")->required();

  c = app.add_subcommand("import-weights", "Validate a store file against a variant");
  add_model_opts(c, a);
  c->get_option("--weights")->required();
  c->add_flag("--prefused", a.prefused, "Store was saved from a fused model");
  c->add_flag("--manifest", manifest, "List every entry");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (app.got_subcommand("build")) {
      const mm::Model m = mm::build_model(mm::preset(a.model), a.seed);
      const auto res = m.cfg.stage_resolutions();
      std::printf("%s @ %d: channels %d/%d/%d, depths %d/%d/%d, maps %d/%d/%d, %llu params\n",
                  m.cfg.name.c_str(), m.cfg.resolution, m.cfg.channels[0], m.cfg.channels[1],
                  m.cfg.channels[2], m.cfg.depths[0], m.cfg.depths[1], m.cfg.depths[2], res[0],
                  res[1], res[2], static_cast<unsigned long long>(mm::param_count(m)));
      if (!out.empty()) {
        mm::save_weights(m, out);
        std::printf("weights written to %s\n", out.c_str());
      }
      return 0;
    }
    if (app.got_subcommand("infer")) return run_infer(a, input, fuse, topk);
    if (app.got_subcommand("flops")) return run_costs(a, per_layer, csv, false);
    if (app.got_subcommand("params")) return run_costs(a, false, csv, true);
    if (app.got_subcommand("bench")) return run_bench(a, batch, warmup, iters, threads, fuse);
    if (app.got_subcommand("fuse")) return run_fuse(a, out, probes);
    if (app.got_subcommand("verify")) return run_verify(a.seed, fast, as_json);
    if (app.got_subcommand("export-weights")) {
      mm::save_weights(make_model(a), out);
      std::printf("weights written to %s\n", out.c_str());
      return 0;
    }
    if (app.got_subcommand("import-weights")) return run_import(a, manifest);
  } catch (const mm::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const mm::DataError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const mm::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
