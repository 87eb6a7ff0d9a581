// mobiledet command-line entry point.
//
// Every subcommand is deterministic given --seed, stamps its outputs with the
// tool version and invocation, and reports failures as a single line
//   error[<code>]: <message>
// on stderr with a nonzero exit status.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mobiledet/arch_dot.hpp"
#include "mobiledet/io.hpp"
#include "mobiledet/report.hpp"
#include "mobiledet/space_io.hpp"

namespace fs = std::filesystem;
using namespace mobiledet;

namespace {

struct SpaceOptions {
  std::string file;
  std::string variant = "ibn_fused_tucker";
  std::string adaptation;  // empty: the device's adaptation, else neutral
  std::string layout = "toy2";

  void add(CLI::App* app) {
    app->add_option("--space", file, "space definition file (overrides --variant/--adaptation/--layout)");
    app->add_option("--variant", variant, "ibn | ibn_fused | ibn_fused_tucker")->capture_default_str();
    app->add_option("--adaptation", adaptation, "neutral | cpu | dsp (default: from --device, else neutral)");
    app->add_option("--layout", layout, "builtin layout (default, toy2, toy3) or layout file")->capture_default_str();
  }
};

std::uint64_t env_cap(std::uint64_t fallback) {
  const char* v = std::getenv("NAS_ENUM_CAP");
  if (!v || !*v) return fallback;
  char* end = nullptr;
  errno = 0;
  const auto cap = std::strtoull(v, &end, 10);
  if (errno != 0 || *end != '\0' || v[0] == '-') throw ParseError("NAS_ENUM_CAP must be a non-negative integer");
  return cap;
}

SpaceSpec make_space(const SpaceOptions& o, const DeviceProfile* device = nullptr) {
  if (!o.file.empty()) {
    const auto def = space_definition_from_json(json_util::parse(json_util::read_file(o.file), o.file));
    auto d = def;
    d.enumeration_cap = env_cap(def.enumeration_cap);
    return build_space(d, fs::path(o.file).parent_path());
  }
  Adaptation a = Adaptation::kNeutral;
  if (!o.adaptation.empty()) a = parse_adaptation(o.adaptation);
  else if (device) a = device->adaptation;
  return build_space(parse_variant(o.variant), a, load_layout(o.layout), {}, env_cap(kDefaultEnumerationCap));
}

void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") std::cout << text;
  else json_util::write_file(path, text);
}

fs::path ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());
  return dir;
}

std::string join_invocation(int argc, char** argv) {
  std::string out;
  for (int i = 0; i < argc; ++i) {
    std::string a = argv[i];
    if (i == 0) a = fs::path(a).filename().string();
    if (!out.empty()) out += ' ';
    out += a.find_first_of(" \t\"'") == std::string::npos ? a : "'" + a + "'";
  }
  return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, sep);)
    if (!item.empty()) out.push_back(item);
  return out;
}

struct OracleOptions {
  std::string kind = "linear";
  std::uint64_t weight_seed = 1;
  double noise = -1.0;  // < 0: the oracle's default

  void add(CLI::App* app, const std::string& default_kind) {
    kind = default_kind;
    app->add_option("--oracle", kind, "quality oracle: linear | affinity")->capture_default_str();
    app->add_option("--oracle-seed", weight_seed, "weight seed of the linear oracle")->capture_default_str();
    app->add_option("--oracle-noise", noise, "oracle noise std-dev (default: linear 0, affinity 0.01)");
  }

  std::unique_ptr<QualityOracle> make() const {
    if (kind == "linear") {
      LinearFeatureOracle::Config c;
      c.weight_seed = weight_seed;
      if (noise >= 0.0) c.noise_sigma = noise;
      return std::make_unique<LinearFeatureOracle>(c);
    }
    if (kind == "affinity") {
      AffinityOracle::Config c;
      if (noise >= 0.0) c.noise_sigma = noise;
      return std::make_unique<AffinityOracle>(c);
    }
    throw ParseError("unknown oracle '" + kind + "' (expected linear or affinity)");
  }
};

std::string dv_string(const DecisionVector& dv) {
  std::string s;
  for (std::size_t i = 0; i < dv.size(); ++i) s += (i ? " " : "") + std::to_string(dv[i]);
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Backbone search space toolkit: analysis, latency models, controller search"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);
  app.fallthrough();  // global options such as --seed may follow the subcommand
  std::uint64_t seed = 0;
  app.add_option("--seed", seed, "seed for every random choice")->capture_default_str();

  // space ---------------------------------------------------------------
  auto* space_cmd = app.add_subcommand("space", "inspect, size or enumerate a search space");
  space_cmd->require_subcommand(1);
  SpaceOptions space_opts;
  auto* sp_inspect = space_cmd->add_subcommand("inspect", "list the decisions and their choices");
  auto* sp_size = space_cmd->add_subcommand("size", "print the number of architectures");
  auto* sp_enum = space_cmd->add_subcommand("enumerate", "list every decision vector (subject to the cap)");
  std::size_t enum_limit = 0;
  std::string enum_out;
  for (auto* c : {sp_inspect, sp_size, sp_enum}) space_opts.add(c);
  sp_enum->add_option("--limit", enum_limit, "stop after this many vectors (0: no limit)");
  sp_enum->add_option("--out", enum_out, "output file (default stdout)");

  // analyze ---------------------------------------------------------------
  auto* analyze_cmd = app.add_subcommand("analyze", "per-layer MAdds and parameter table (CSV)");
  std::string arch_path, analyze_out;
  analyze_cmd->add_option("--arch", arch_path, "architecture document")->required();
  analyze_cmd->add_option("--out", analyze_out, "output file (default stdout)");

  // bench -----------------------------------------------------------------
  auto* bench_cmd = app.add_subcommand("bench", "simulated benchmark records");
  bench_cmd->require_subcommand(1);
  auto* bench_gen = bench_cmd->add_subcommand("generate", "sample architectures and simulate their latency");
  SpaceOptions bench_space;
  bench_space.add(bench_gen);
  std::string bench_device = "accel_sim", bench_out;
  std::size_t bench_n = 1000;
  double bench_noise = -1.0;
  bench_gen->add_option("--device", bench_device, "builtin device or device file")->capture_default_str();
  bench_gen->add_option("--n", bench_n, "number of records")->capture_default_str();
  bench_gen->add_option("--noise", bench_noise, "override the device noise std-dev");
  bench_gen->add_option("--out", bench_out, "output directory")->required();

  // cost ------------------------------------------------------------------
  auto* cost_cmd = app.add_subcommand("cost", "linear latency model");
  cost_cmd->require_subcommand(1);
  auto* cost_fit = cost_cmd->add_subcommand("fit", "fit a latency model to benchmark records");
  SpaceOptions cost_space;
  cost_space.add(cost_fit);
  std::string fit_bench, fit_holdout, fit_out;
  double fit_lambda = kDefaultRidgeLambda;
  bool fit_bands = false;
  cost_fit->add_option("--bench", fit_bench, "benchmarks.csv")->required();
  cost_fit->add_option("--holdout", fit_holdout, "held-out benchmarks.csv");
  cost_fit->add_option("--lambda", fit_lambda, "ridge penalty")->capture_default_str();
  cost_fit->add_flag("--channel-bands", fit_bands, "bucket channel counts into power-of-two bands");
  cost_fit->add_option("--out", fit_out, "model file")->required();
  auto* cost_eval = cost_cmd->add_subcommand("eval", "evaluate a latency model");
  std::string eval_model, eval_bench, eval_arch;
  cost_eval->add_option("--model", eval_model, "model file")->required();
  auto* eval_b = cost_eval->add_option("--bench", eval_bench, "benchmarks.csv: print r^2");
  auto* eval_a = cost_eval->add_option("--arch", eval_arch, "architecture document: print predicted latency");
  eval_b->excludes(eval_a);

  // search ----------------------------------------------------------------
  auto* search_cmd = app.add_subcommand("search", "controller search and space ablation");
  search_cmd->require_subcommand(1);
  auto* search_run = search_cmd->add_subcommand("run", "REINFORCE search over a space");
  SpaceOptions search_space;
  search_space.add(search_run);
  OracleOptions run_oracle;
  run_oracle.add(search_run, "linear");
  SearchConfig run_cfg;
  std::string run_device = "accel_sim", run_model, run_out, run_noise_mode = "per_architecture", run_init;
  double run_budget = 0.0;
  std::size_t run_budget_samples = 256;
  search_run->add_option("--device", run_device, "builtin device or device file")->capture_default_str();
  search_run->add_option("--latency-model", run_model, "use a fitted model instead of the simulator");
  search_run->add_option("--budget", run_budget, "latency budget in ms (default: median of random samples)");
  search_run->add_option("--budget-samples", run_budget_samples, "samples for the default budget")
      ->capture_default_str();
  search_run->add_option("--tau", run_cfg.tau, "latency penalty weight (< 0)")->capture_default_str();
  search_run->add_option("--steps", run_cfg.steps, "controller steps")->capture_default_str();
  search_run->add_option("--samples-per-step", run_cfg.samples_per_step, "batch size")->capture_default_str();
  search_run->add_option("--lr", run_cfg.lr, "Adam learning rate")->capture_default_str();
  search_run->add_option("--log-every", run_cfg.log_every, "log every n-th step")->capture_default_str();
  search_run->add_option("--noise-mode", run_noise_mode, "per_architecture | iid")->capture_default_str();
  search_run->add_option("--init-policy", run_init, "start from a policy checkpoint");
  search_run->add_option("--out", run_out, "output directory")->required();

  auto* search_abl = search_cmd->add_subcommand("ablation", "best architecture per (space, device)");
  std::string abl_layout = "toy3", abl_variants = "ibn,ibn_fused,ibn_fused_tucker", abl_devices = "cpu_sim,accel_sim",
              abl_out;
  OracleOptions abl_oracle;
  abl_oracle.add(search_abl, "affinity");
  AblationConfig abl_cfg;
  search_abl->add_option("--layout", abl_layout, "builtin layout or layout file")->capture_default_str();
  search_abl->add_option("--variants", abl_variants, "comma-separated space variants")->capture_default_str();
  search_abl->add_option("--devices", abl_devices, "comma-separated devices")->capture_default_str();
  search_abl->add_option("--tau", abl_cfg.search.tau, "latency penalty weight")->capture_default_str();
  search_abl->add_option("--budget", abl_cfg.budget_ms, "fixed budget in ms (default: per-device median)");
  search_abl->add_option("--steps", abl_cfg.search.steps, "controller steps when a space exceeds the cap")
      ->capture_default_str();
  search_abl->add_option("--out", abl_out, "output directory")->required();

  // decomp ----------------------------------------------------------------
  auto* decomp_cmd = app.add_subcommand("decomp", "Tucker-2 decomposition of a conv kernel");
  decomp_cmd->require_subcommand(1);
  auto* decomp_demo = decomp_cmd->add_subcommand("demo", "error and MAdds ratio against ranks (CSV)");
  std::string kernel_path, random_dims, ranks_arg, decomp_out;
  int decomp_hw = 14;
  auto* k_opt = decomp_demo->add_option("--kernel", kernel_path, "tensor file (binary, or text if *.txt)");
  auto* r_opt = decomp_demo->add_option("--random", random_dims, "random kernel K,C1,C2");
  k_opt->excludes(r_opt);
  decomp_demo->add_option("--ranks", ranks_arg, "r1:r2 pairs, comma separated (default: a grid)");
  decomp_demo->add_option("--hw", decomp_hw, "feature map size for the MAdds ratio")->capture_default_str();
  decomp_demo->add_option("--out", decomp_out, "output file (default stdout)");

  // export ----------------------------------------------------------------
  auto* export_cmd = app.add_subcommand("export", "visualization exports");
  export_cmd->require_subcommand(1);
  auto* export_dot_cmd = export_cmd->add_subcommand("dot", "Graphviz DOT of an architecture");
  std::string dot_arch, dot_out;
  export_dot_cmd->add_option("--arch", dot_arch, "architecture document")->required();
  export_dot_cmd->add_option("--out", dot_out, "output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error[usage]: " << e.what() << "\n";
    return 2;
  }

  const Provenance prov{join_invocation(argc, argv), seed};

  try {
    if (*space_cmd) {
      const auto space = make_space(space_opts);
      if (*sp_size) {
        std::cout << space_size(space) << "\n";
      } else if (*sp_inspect) {
        std::string out = csv_preamble(prov);
        out += "# variant: " + std::string(variant_name(space.variant)) + "\n# adaptation: " +
               adaptation_name(space.adaptation) + "\n# size: " + space_size(space).str() + "\n";
        out += "decision,block,layer,choices,atoms\n";
        for (const auto& d : space.decisions) {
          std::string atoms;
          for (const auto& a : d.choices) atoms += (atoms.empty() ? "" : ";") + atom_label(a);
          out += std::to_string(d.id) + "," + std::to_string(d.block) + "," +
                 (d.layer ? std::to_string(*d.layer) : "") + "," + std::to_string(d.choices.size()) + "," + atoms +
                 "\n";
        }
        std::cout << out;
      } else {
        auto it = enumerate(space);
        std::string out = csv_preamble(prov) + "index,decisions\n";
        DecisionVector dv;
        for (std::size_t i = 0; (enum_limit == 0 || i < enum_limit) && it.next(dv); ++i)
          out += std::to_string(i) + "," + dv_string(dv) + "\n";
        emit(enum_out, out);
      }
    } else if (*analyze_cmd) {
      emit(analyze_out, analysis_csv(load_network(arch_path), prov));
    } else if (*bench_cmd) {
      auto dev = load_device(bench_device);
      if (bench_noise >= 0.0) dev.noise_sigma = bench_noise;
      const auto space = make_space(bench_space, &dev);
      std::mt19937_64 rng(combine_seed(seed, fnv1a64("bench")));
      const auto records = generate_benchmarks(space, dev, bench_n, rng);
      write_benchmarks(bench_out, records, prov);
      std::cout << "wrote " << records.size() << " records to " << (fs::path(bench_out) / kBenchmarkCsv).string()
                << "\n";
    } else if (*cost_fit) {
      const auto space = make_space(cost_space);
      const auto train = read_benchmarks(fit_bench);
      auto model = fit(train, space, fit_lambda, FeatureOptions{fit_bands}, space_fingerprint(space));
      if (!fit_holdout.empty()) model.holdout_r2 = r2(model, read_benchmarks(fit_holdout));
      json_util::write_file(fit_out, stamped(to_json(model), prov).dump(2) + "\n");
      std::cout << "buckets " << model.buckets.size() << "\ntrain_r2 " << fmt(model.train_r2) << "\n";
      if (model.holdout_r2) std::cout << "holdout_r2 " << fmt(*model.holdout_r2) << "\n";
    } else if (*cost_eval) {
      const auto model = load_latency_model(eval_model);
      if (!eval_bench.empty()) std::cout << "r2 " << fmt(r2(model, read_benchmarks(eval_bench))) << "\n";
      else if (!eval_arch.empty()) std::cout << "latency_ms " << fmt(predict(model, load_network(eval_arch))) << "\n";
      else throw ValidationError("cost eval needs --bench or --arch");
    } else if (*search_run) {
      const auto dev = load_device(run_device);
      const auto space = make_space(search_space, &dev);
      const auto space_ref = space_fingerprint(space);
      std::unique_ptr<LatencySource> latency;
      if (!run_model.empty()) {
        auto model = load_latency_model(run_model);
        if (model.space_ref != space_ref)
          throw ValidationError("latency model was fitted for space '" + model.space_ref + "', not '" + space_ref +
                                "'");
        latency = std::make_unique<ModelLatency>(std::move(model));
      } else {
        latency = std::make_unique<SimulatorLatency>(dev);
      }
      const auto oracle = run_oracle.make();
      if (run_noise_mode == "iid") run_cfg.noise_mode = NoiseMode::kIid;
      else if (run_noise_mode != "per_architecture")
        throw ParseError("unknown noise mode '" + run_noise_mode + "' (expected per_architecture or iid)");
      run_cfg.seed = seed;
      if (run_budget > 0.0) {
        run_cfg.budget_ms = run_budget;
      } else {
        std::mt19937_64 rng(combine_seed(seed, fnv1a64("budget")));
        run_cfg.budget_ms = median_latency(space, *latency, run_budget_samples, rng);
      }
      std::optional<PolicyCheckpoint> init;
      if (!run_init.empty()) {
        init = load_checkpoint(run_init);
        check_checkpoint(*init, space, space_ref);
      }
      const auto res = init ? run_search(space, *oracle, *latency, run_cfg, init->policy, init->adam, init->baseline)
                            : run_search(space, *oracle, *latency, run_cfg);
      const auto dir = ensure_dir(run_out);
      json_util::write_file((dir / "search_log.ndjson").string(),
                            search_log_ndjson(res.log, run_cfg, space_ref, oracle->descriptor(),
                                              latency->descriptor(), prov));
      json_util::write_file((dir / "best_arch.json").string(), stamped(to_json(res.best), prov).dump(2) + "\n");
      json_util::write_file((dir / "best_arch.dot").string(),
                            "// " + std::string(kToolName) + " " + kToolVersion + "; " + prov.invocation + "\n" +
                                export_dot(res.best));
      PolicyCheckpoint ck{space_ref, res.policy, res.adam, res.baseline,
                          (init ? init->step : 0) + static_cast<std::int64_t>(run_cfg.steps)};
      json_util::write_file((dir / "policy.json").string(), stamped(to_json(ck), prov).dump(2) + "\n");
      const auto& f = res.log.final;
      std::cout << "budget_ms " << fmt(run_cfg.budget_ms) << "\nbest " << dv_string(f.dv) << "\nquality "
                << fmt(f.quality) << "\nlatency_ms " << fmt(f.latency_ms) << "\nreward " << fmt(f.reward) << "\n";
    } else if (*search_abl) {
      std::vector<SpaceVariant> variants;
      for (const auto& v : split(abl_variants, ',')) variants.push_back(parse_variant(v));
      std::vector<DeviceProfile> devices;
      for (const auto& d : split(abl_devices, ',')) devices.push_back(load_device(d));
      const auto oracle = abl_oracle.make();
      abl_cfg.search.seed = seed;
      const auto rows = ablation_report(variants, devices, load_layout(abl_layout), *oracle, abl_cfg, {},
                                        env_cap(kDefaultEnumerationCap));
      const auto dir = ensure_dir(abl_out);
      const auto csv = report_csv(rows, prov);
      json_util::write_file((dir / "report.csv").string(), csv);
      std::vector<ScatterPoint> pts;
      for (const auto& r : rows) pts.push_back({r.space + " @ " + r.device, r.latency_ms, r.reward});
      json_util::write_file((dir / "report.svg").string(), scatter_svg(pts, "best reward vs latency", prov));
      for (const auto& r : rows)
        json_util::write_file((dir / ("best_" + r.space + "_" + r.device + ".json")).string(),
                              stamped(to_json(r.best), prov).dump(2) + "\n");
      std::cout << csv;
    } else if (*decomp_demo) {
      ConvKernel w;
      if (!kernel_path.empty()) {
        w = read_tensor(kernel_path);
      } else if (!random_dims.empty()) {
        const auto parts = split(random_dims, ',');
        if (parts.size() != 3) throw ParseError("--random expects K,C1,C2");
        w = ConvKernel(std::stoi(parts[0]), std::stoi(parts[1]), std::stoi(parts[2]));
        std::mt19937_64 rng(combine_seed(seed, fnv1a64("kernel")));
        std::normal_distribution<double> n(0.0, 1.0);
        for (auto& v : w.data) v = n(rng);
        check_kernel(w);
      } else {
        throw ValidationError("decomp demo needs --kernel or --random");
      }
      std::vector<std::pair<int, int>> ranks;
      if (!ranks_arg.empty()) {
        for (const auto& pair : split(ranks_arg, ',')) {
          const auto colon = pair.find(':');
          if (colon == std::string::npos) throw ParseError("--ranks expects r1:r2 pairs, got '" + pair + "'");
          ranks.emplace_back(std::stoi(pair.substr(0, colon)), std::stoi(pair.substr(colon + 1)));
        }
      } else {
        auto grid = [](int c) {
          std::vector<int> r;
          for (int v = 1; v < c; v *= 2) r.push_back(v);
          r.push_back(c);
          return r;
        };
        for (int r1 : grid(w.c1))
          for (int r2 : grid(w.c2)) ranks.emplace_back(r1, r2);
      }
      std::string out = csv_preamble(prov) + "# kernel " + std::to_string(w.k) + "x" + std::to_string(w.k) + "x" +
                        std::to_string(w.c1) + "x" + std::to_string(w.c2) + "\nr1,r2,rel_error,madds_ratio\n";
      for (auto [r1, r2] : ranks) {
        const auto f = tucker2(w, r1, r2);
        out += std::to_string(r1) + "," + std::to_string(r2) + "," + fmt(rel_error(w, f)) + "," +
               fmt(madds_savings(w.c1, w.c2, w.k, r1, r2, decomp_hw, decomp_hw)) + "\n";
      }
      emit(decomp_out, out);
    } else if (*export_dot_cmd) {
      emit(dot_out, "// " + std::string(kToolName) + " " + kToolVersion + "; " + prov.invocation + "\n" +
                        export_dot(load_network(dot_arch)));
    }
  } catch (const Error& e) {
    std::cerr << "error[" << e.code() << "]: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error[internal]: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
