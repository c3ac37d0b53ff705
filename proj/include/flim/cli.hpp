#pragma once

// Command-line front end. Every subcommand resolves its configuration as
// flags > --config file > defaults, writes its outputs under --out and leaves
// a run_manifest.json next to them.

#include <CLI11.hpp>

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "flim/pipeline.hpp"
#include "flim/studio_service.hpp"

namespace flim::cli {

/// Bad flags or contradictory configuration (exit code 2).
struct UsageError : Error {
  using Error::Error;
};

inline constexpr const char* kRunManifestName = "run_manifest.json";

/// Config keys use underscores, flags use dashes: marker_voxels <-> --marker-voxels.
inline std::string flag(std::string name) {
  std::replace(name.begin(), name.end(), '_', '-');
  return "--" + name;
}

struct OptSpec {
  std::string name;  // config-file key
  json def;          // default; its type decides how flag text is parsed
  std::string help;
};

/// Options of one subcommand, kept as raw text until resolution.
class Options {
 public:
  Options(CLI::App* app, std::vector<OptSpec> specs) : app_(app), specs_(std::move(specs)) {
    for (const auto& s : specs_) opts_[s.name] = app_->add_option(flag(s.name), raw_[s.name], s.help);
    app_->add_option("--config", config_path_, "JSON file with option values");
  }

  json resolve() const {
    json cfg = json::object();
    for (const auto& s : specs_) cfg[s.name] = s.def;
    if (!config_path_.empty()) {
      json file;
      try {
        file = read_json_file(config_path_);
      } catch (const Error& e) {
        throw UsageError(e.what());
      }
      if (!file.is_object()) throw UsageError("config file must hold a JSON object");
      for (const auto& [k, v] : file.items()) {
        const OptSpec* s = find(k);
        if (!s) throw UsageError("unknown config key '" + k + "'");
        cfg[k] = check_type(*s, v);
      }
    }
    for (const auto& s : specs_)
      if (opts_.at(s.name)->count() > 0) cfg[s.name] = parse_text(s, raw_.at(s.name));
    return cfg;
  }

  bool given(const std::string& name) const { return opts_.at(name)->count() > 0; }

 private:
  const OptSpec* find(const std::string& name) const {
    for (const auto& s : specs_)
      if (s.name == name) return &s;
    return nullptr;
  }

  static json check_type(const OptSpec& s, const json& v) {
    const json& d = s.def;
    const bool ok = d.is_null() ? (v.is_null() || v.is_string())
                    : d.is_number_integer() ? v.is_number_integer()
                    : d.is_number() ? v.is_number()
                    : d.is_string() ? v.is_string()
                    : d.is_array() ? v.is_array()
                    : d.is_boolean() ? v.is_boolean()
                                     : false;
    if (!ok) throw UsageError("config key '" + s.name + "' has the wrong type");
    return v;
  }

  static json parse_text(const OptSpec& s, const std::string& t) {
    auto bad = [&] { return UsageError(flag(s.name) + ": cannot parse '" + t + "'"); };
    try {
      std::size_t used = 0;
      if (s.def.is_number_integer()) {
        const long long v = std::stoll(t, &used);
        if (used != t.size()) throw bad();
        return v;
      }
      if (s.def.is_number()) {
        const double v = std::stod(t, &used);
        if (used != t.size()) throw bad();
        return v;
      }
      if (s.def.is_boolean()) {
        if (t == "true" || t == "1") return true;
        if (t == "false" || t == "0") return false;
        throw bad();
      }
      if (s.def.is_array()) {
        json a = json::array();
        std::size_t pos = 0;
        while (pos <= t.size()) {
          const std::size_t comma = std::min(t.find(',', pos), t.size());
          const std::string item = t.substr(pos, comma - pos);
          a.push_back(std::stoll(item, &used));
          if (used != item.size()) throw bad();
          pos = comma + 1;
        }
        return a;
      }
    } catch (const std::logic_error&) {
      throw bad();
    }
    return t;
  }

  CLI::App* app_;
  std::vector<OptSpec> specs_;
  std::map<std::string, std::string> raw_;
  std::map<std::string, CLI::Option*> opts_;
  std::string config_path_;
};

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

inline std::filesystem::path data_dir(const json& cfg) {
  if (cfg.contains("data") && cfg["data"].is_string()) return cfg["data"].get<std::string>();
  if (const char* env = std::getenv("FLIM_DATA_DIR"); env && *env) return env;
  throw UsageError("no dataset: pass --data or set FLIM_DATA_DIR");
}

inline std::filesystem::path out_dir(const json& cfg) {
  if (!cfg["out"].is_string() || cfg["out"].get<std::string>().empty()) throw UsageError("--out is required");
  const std::filesystem::path p = cfg["out"].get<std::string>();
  std::filesystem::create_directories(p);
  return p;
}

inline std::vector<int> int_list(const json& j, const char* what) {
  std::vector<int> v = j.get<std::vector<int>>();
  if (v.empty()) throw UsageError(flag(what) + " needs at least one value");
  return v;
}

inline SunetConfig sunet_config(const json& cfg) {
  const auto w = int_list(cfg["widths"], "widths");
  if (w.size() != kDepth) throw UsageError("--widths needs exactly three values");
  SunetConfig c;
  std::copy(w.begin(), w.end(), c.widths.begin());
  try {
    c.validate();
  } catch (const FormatError& e) {
    throw UsageError(e.what());
  }
  return c;
}

inline std::vector<Modality> modalities(const std::string& s) {
  if (s == "both") return {Modality::FLAIR, Modality::T1Gd};
  try {
    return {parse_modality(s)};
  } catch (const FormatError&) {
    throw UsageError("--modality must be flair, t1gd or both");
  }
}

inline std::string mod_tag(Modality m) { return m == Modality::FLAIR ? "flair" : "t1gd"; }

struct RunRecord {
  std::string command;
  json config;
  json seeds = json::object();
  json inputs = json::object();
  json outputs = json::object();
};

inline void write_run_manifest(const std::filesystem::path& out, const RunRecord& r, double wall_s) {
  json j;
  j["command"] = r.command;
  j["config"] = r.config;
  j["seeds"] = r.seeds;
  j["inputs"] = r.inputs;
  j["outputs"] = r.outputs;
  j["tool_version"] = kToolVersion;
  j["wall_time_s"] = wall_s;
  write_file_atomic(out / kRunManifestName, j.dump(2) + "\n");
}

inline std::string rel(const std::filesystem::path& p, const std::filesystem::path& out) {
  return std::filesystem::relative(p, out).generic_string();
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

inline void cmd_phantom_gen(const json& cfg, RunRecord& rec) {
  const auto out = out_dir(cfg);
  PhantomSpec spec;
  if (cfg["spec"].is_string()) spec = phantom_spec_from_json(read_json_file(cfg["spec"].get<std::string>()));
  spec.seed = cfg["seed"].get<std::uint64_t>();
  const int size = cfg["size"].get<int>();
  if (size > 0) spec.size = {size, size, size};
  const std::array<double, 3> frac{cfg["train"].get<double>(), cfg["val"].get<double>(), cfg["test"].get<double>()};
  const DatasetManifest m =
      generate_dataset(spec, cfg["n"].get<int>(), frac, out, cfg["marked"].get<int>(), cfg["marker_voxels"].get<int>());
  rec.seeds["phantom"] = spec.seed;
  rec.outputs["manifest"] = kManifestName;
  rec.outputs["cases"] = m.all();
  std::cout << "wrote " << m.all().size() << " cases (" << m.train.size() << "/" << m.val.size() << "/"
            << m.test.size() << ") to " << out.string() << "\n";
}

inline void cmd_flim_estimate(const json& cfg, RunRecord& rec) {
  const auto data = data_dir(cfg);
  const auto out = out_dir(cfg);
  const DatasetManifest man = load_manifest(data);
  const MarkedSet ms = load_marked(data, man);
  const std::uint64_t seed = cfg["seed"].get<std::uint64_t>();
  rec.inputs["data"] = data.string();
  rec.seeds["flim"] = seed;
  const std::optional<int> pca =
      cfg["pca_out"].get<int>() > 0 ? std::optional<int>(cfg["pca_out"].get<int>()) : std::nullopt;
  for (Modality m : modalities(cfg["modality"].get<std::string>())) {
    EncoderSpec spec;
    spec.layers = {LayerSpec{cfg["kernel"].get<int>(), cfg["clusters_per_marker"].get<int>(), pca, true}};
    const EncoderModel enc = build_modality_encoder(ms, m, spec, std::nullopt, seed);
    const auto path = out / ("bank_" + mod_tag(m) + ".flimbank");
    save_bank(enc.banks.front(), path);
    rec.outputs["bank_" + mod_tag(m)] = rel(path, out);
    std::cout << mod_tag(m) << ": " << enc.banks.front().size() << " filters -> " << path.string() << "\n";
  }
}

inline void cmd_msflim_grid(const json& cfg, RunRecord& rec) {
  const auto data = data_dir(cfg);
  const auto out = out_dir(cfg);
  const DatasetManifest man = load_manifest(data);
  const MarkedSet ms = load_marked(data, man);
  GridSpec grid{int_list(cfg["n1"], "n1"), int_list(cfg["n2"], "n2")};
  OracleConfig oc{cfg["tau"].get<double>(), cfg["target"].get<int>()};
  const std::uint64_t seed = cfg["seed"].get<std::uint64_t>();
  rec.inputs["data"] = data.string();
  rec.seeds["grid"] = seed;
  for (Modality m : modalities(cfg["modality"].get<std::string>())) {
    const ModalitySelection sel = select_first_layer(ms, m, grid, oc, seed);
    for (const auto& r : sel.runs) write_file_atomic(out / "runs" / (r.run_id + ".cands"), encode_candidate_set(r));
    json report;
    report["tau"] = oc.tau;
    report["regions"] = json::array();
    for (std::size_t i = 0; i < sel.report.regions.size(); ++i) {
      const auto& p = sel.report.region_pick[i];
      report["regions"].push_back(
          {{"name", sel.report.regions[i]},
           {"best_score", sel.report.best_region_score[i]},
           {"covered", p.has_value()},
           {"pick", p ? json{{"run", p->run_id}, {"image", p->image_id}, {"index", p->index}} : json(nullptr)}});
    }
    report["ledger"] = ledger_to_json(sel.report.ledger);
    const std::string tag = mod_tag(m);
    write_file_atomic(out / ("oracle_" + tag + ".json"), report.dump(2) + "\n");
    save_bank(sel.bank, out / ("bank_" + tag + ".flimbank"));
    rec.outputs["bank_" + tag] = "bank_" + tag + ".flimbank";
    rec.outputs["oracle_" + tag] = "oracle_" + tag + ".json";
    for (std::size_t i = 0; i < sel.report.regions.size(); ++i)
      std::cout << tag << " " << sel.report.regions[i] << ": best soft IoU " << sel.report.best_region_score[i]
                << (sel.report.region_pick[i] ? "" : " (below tau)") << "\n";
  }
}

inline std::optional<FilterBank> optional_bank(const json& v) {
  if (!v.is_string()) return std::nullopt;
  return load_bank(v.get<std::string>());
}

inline std::array<EncoderModel, 2> encoders_for(const json& cfg, const SunetConfig& sc, RunRecord& rec,
                                                const std::filesystem::path& out) {
  const auto data = data_dir(cfg);
  const MarkedSet ms = load_marked(data, load_manifest(data));
  EncoderSpec spec = default_encoder_spec(sc);
  if (cfg["encoder_spec"].is_string()) spec = encoder_spec_from_json(read_json_file(cfg["encoder_spec"].get<std::string>()));
  const std::uint64_t seed = cfg["seed"].get<std::uint64_t>();
  rec.seeds["encoder"] = seed;
  const auto bf = optional_bank(cfg["bank_flair"]);
  const auto bt = optional_bank(cfg["bank_t1gd"]);
  std::array<EncoderModel, 2> enc{build_modality_encoder(ms, Modality::FLAIR, spec, bf, seed),
                                  build_modality_encoder(ms, Modality::T1Gd, spec, bt, seed)};
  for (const auto& e : enc) {
    const auto path = out / ("encoder_" + mod_tag(e.modality) + ".flimenc");
    save_encoder(e, path);
    rec.outputs["encoder_" + mod_tag(e.modality)] = rel(path, out);
  }
  return enc;
}

inline void cmd_encoder_build(const json& cfg, RunRecord& rec) {
  const auto out = out_dir(cfg);
  if (cfg["bank_flair"].is_string() != cfg["bank_t1gd"].is_string())
    throw UsageError("pass both --bank-flair and --bank-t1gd, or neither");
  rec.inputs["data"] = data_dir(cfg).string();
  const auto enc = encoders_for(cfg, sunet_config(cfg), rec, out);
  for (const auto& e : enc) {
    std::cout << mod_tag(e.modality) << ":";
    for (const auto& b : e.banks) std::cout << " " << b.size();
    std::cout << " filters per layer\n";
  }
}

inline void cmd_train(const json& cfg, RunRecord& rec) {
  const Regime regime = [&] {
    try {
      return parse_regime(cfg["regime"].get<std::string>());
    } catch (const FormatError& e) {
      throw UsageError(e.what());
    }
  }();
  const std::string init = cfg["init"].get<std::string>();
  if (init != "random" && init != "flim" && init != "bank") throw UsageError("--init must be random, flim or bank");
  if (regime == Regime::FBp && init != "random") throw UsageError("--regime fbp trains from --init random");
  if (regime != Regime::FBp && init == "random")
    throw UsageError("--regime " + to_string(regime) + " needs FLIM-initialized encoders (--init flim or bank)");
  const bool banks = cfg["bank_flair"].is_string() || cfg["bank_t1gd"].is_string();
  if (init == "bank" && !(cfg["bank_flair"].is_string() && cfg["bank_t1gd"].is_string()))
    throw UsageError("--init bank needs --bank-flair and --bank-t1gd");
  if (init != "bank" && banks) throw UsageError("first-layer banks are only used with --init bank");

  const auto data = data_dir(cfg);
  const auto out = out_dir(cfg);
  const SunetConfig sc = sunet_config(cfg);
  TrainConfig tc;
  tc.lr0 = cfg["lr"].get<double>();
  tc.epochs = cfg["epochs"].get<int>();
  tc.seed = cfg["seed"].get<std::uint64_t>();
  try {
    tc.validate();
  } catch (const FormatError& e) {
    throw UsageError(e.what());
  }
  rec.inputs["data"] = data.string();
  rec.seeds["train"] = tc.seed;

  const DatasetManifest man = load_manifest(data);
  SunetModel<float> model = init == "random" ? make_random_sunet<float>(sc, tc.seed) : [&] {
    const auto enc = encoders_for(cfg, sc, rec, out);
    return make_flim_sunet<float>(sc, enc[0], enc[1], tc.seed);
  }();
  const auto cases = load_train_cases(data, man.train);
  const auto curve = train(model, cases, tc, regime, [&](const EpochStat& s) {
    std::cerr << "epoch " << s.epoch << " loss " << s.mean_loss << " lr " << s.lr << "\n";
  });
  save_checkpoint(model, out / "model.sunet");
  write_file_atomic(out / "loss.csv", loss_curve_csv(curve));
  rec.outputs["checkpoint"] = "model.sunet";
  rec.outputs["loss_curve"] = "loss.csv";
  std::cout << "trained " << tc.epochs << " epochs, final loss " << curve.back().mean_loss << "\n";
}

inline void cmd_eval(const json& cfg, RunRecord& rec) {
  if (!cfg["model"].is_string()) throw UsageError("--model is required");
  const auto data = data_dir(cfg);
  const auto out = out_dir(cfg);
  const DatasetManifest man = load_manifest(data);
  const std::string split = cfg["split"].get<std::string>();
  const std::vector<std::string>& ids = split == "train" ? man.train
                                        : split == "val" ? man.val
                                        : split == "test" ? man.test
                                                          : throw UsageError("--split must be train, val or test");
  const SunetModel<float> model = load_checkpoint(cfg["model"].get<std::string>());
  const auto cases = load_train_cases(data, ids);
  const DiceReport rep = evaluate(model, cases);
  write_file_atomic(out / "report.csv", report_csv(rep));
  rec.inputs["data"] = data.string();
  rec.inputs["model"] = cfg["model"];
  rec.outputs["report"] = "report.csv";
  std::cout << "DSC ET " << mean_std_cell(rep.et()) << "  NC " << mean_std_cell(rep.nc()) << "  WT "
            << mean_std_cell(rep.wt()) << "\n";
}

inline void cmd_compare(const json& cfg, const std::vector<std::string>& reports, RunRecord& rec) {
  if (reports.empty()) throw UsageError("--report LABEL=PATH is required");
  const auto out = out_dir(cfg);
  std::vector<std::pair<std::string, DiceReport>> models;
  for (const auto& r : reports) {
    const auto eq = r.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--report expects LABEL=PATH, got '" + r + "'");
    const std::string path = r.substr(eq + 1);
    models.emplace_back(r.substr(0, eq), parse_report_csv(read_file(path)));
    rec.inputs[r.substr(0, eq)] = path;
  }
  const std::string table = comparison_table(models);
  write_file_atomic(out / "comparison.md", table);
  rec.outputs["table"] = "comparison.md";
  std::cout << table;
}

inline std::atomic<bool> g_stop{false};

inline void cmd_serve(const json& cfg, RunRecord& rec, const std::function<void(double)>& started) {
  const auto data = data_dir(cfg);
  const auto out = out_dir(cfg);
  StudioService svc(ServiceConfig{data, out, cfg["workers"].get<int>()});
  const int port = svc.start(cfg["host"].get<std::string>(), cfg["port"].get<int>());
  rec.inputs["data"] = data.string();
  rec.outputs["sessions"] = "sessions";
  rec.outputs["port"] = port;
  started(0.0);
  std::cout << "serving on http://" << cfg["host"].get<std::string>() << ":" << port << "\n" << std::flush;
  g_stop = false;
  std::signal(SIGINT, [](int) { g_stop = true; });
  std::signal(SIGTERM, [](int) { g_stop = true; });
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
}

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

inline std::vector<OptSpec> with_common(std::vector<OptSpec> v, bool needs_data = true) {
  v.push_back({"out", nullptr, "output directory"});
  if (needs_data) v.push_back({"data", nullptr, "dataset directory (default: $FLIM_DATA_DIR)"});
  return v;
}

/// Returns the process exit code: 0 success, 1 runtime error, 2 usage error.
inline int run(int argc, const char* const* argv, std::ostream& err = std::cerr) {
  CLI::App app{"FLIM / MS-FLIM encoder construction and sU-Net training on synthetic phantoms", "flim"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  auto* phantom = app.add_subcommand("phantom", "synthetic dataset tools")->require_subcommand(1);
  auto* gen = phantom->add_subcommand("gen", "generate a phantom dataset into --out");
  Options o_gen(gen, with_common({{"n", 30, "number of cases"},
                                  {"seed", 7, "generator seed"},
                                  {"size", 0, "cube edge in voxels (0 keeps the spec value)"},
                                  {"train", 0.7, "training fraction"},
                                  {"val", 0.1, "validation fraction"},
                                  {"test", 0.2, "test fraction"},
                                  {"marked", 8, "training cases that receive markers"},
                                  {"marker_voxels", 20, "voxels per marker"},
                                  {"spec", nullptr, "phantom spec JSON"}},
                                 false));

  auto* flim = app.add_subcommand("flim", "single-shot FLIM")->require_subcommand(1);
  auto* est = flim->add_subcommand("estimate", "estimate a first-layer bank from the dataset markers");
  Options o_est(est, with_common({{"modality", "both", "flair, t1gd or both"},
                                  {"kernel", 3, "kernel size"},
                                  {"clusters_per_marker", 5, "clusters per marker"},
                                  {"pca_out", 16, "principal components kept (0 keeps all centers)"},
                                  {"seed", 1, "clustering seed"}}));

  auto* ms = app.add_subcommand("msflim", "multi-step FLIM")->require_subcommand(1);
  auto* grid = ms->add_subcommand("grid", "run the (N1, N2) grid and the scripted selection");
  Options o_grid(grid, with_common({{"modality", "both", "flair, t1gd or both"},
                                    {"n1", json::array({5, 10}), "clusters per marker, comma separated"},
                                    {"n2", json::array({5, 20, 50}), "clusters per image, comma separated"},
                                    {"tau", 0.3, "soft-IoU coverage threshold"},
                                    {"target", 16, "first-layer bank size"},
                                    {"seed", 1, "clustering seed"}}));

  auto* enc = app.add_subcommand("encoder", "encoder tools")->require_subcommand(1);
  auto* build = enc->add_subcommand("build", "build both encoders (FLIM, or MS-FLIM given first-layer banks)");
  Options o_build(build, with_common({{"bank_flair", nullptr, "selected FLAIR first-layer bank"},
                                      {"bank_t1gd", nullptr, "selected T1Gd first-layer bank"},
                                      {"encoder_spec", nullptr, "encoder spec JSON"},
                                      {"widths", json::array({16, 32, 64}), "layer widths"},
                                      {"seed", 1, "clustering seed"}}));

  auto* tr = app.add_subcommand("train", "train an sU-Net");
  Options o_train(tr, with_common({{"regime", "pbp", "fbp, pbp or ft"},
                                   {"init", "flim", "random, flim or bank"},
                                   {"bank_flair", nullptr, "FLAIR first-layer bank (--init bank)"},
                                   {"bank_t1gd", nullptr, "T1Gd first-layer bank (--init bank)"},
                                   {"encoder_spec", nullptr, "encoder spec JSON"},
                                   {"widths", json::array({16, 32, 64}), "layer widths"},
                                   {"epochs", 100, "epochs"},
                                   {"lr", 2.5e-3, "initial learning rate"},
                                   {"seed", 1, "seed"}}));

  auto* ev = app.add_subcommand("eval", "Dice report of a checkpoint on one split");
  Options o_eval(ev, with_common({{"model", nullptr, "checkpoint"}, {"split", "test", "train, val or test"}}));

  auto* cmp = app.add_subcommand("compare", "table of mean(std) DSC over several reports");
  std::vector<std::string> reports;
  cmp->add_option("--report", reports, "LABEL=report.csv (repeatable)");
  Options o_cmp(cmp, with_common({}, false));

  auto* sv = app.add_subcommand("serve", "start the selection service");
  Options o_serve(sv, with_common({{"host", "127.0.0.1", "bind address"},
                                   {"port", 8080, "port (0 picks a free one)"},
                                   {"workers", 1, "background run workers"}}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e, std::cout, err);
    return 2;
  }

  const auto t0 = std::chrono::steady_clock::now();
  RunRecord rec;
  auto finish = [&](double) {
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_run_manifest(out_dir(rec.config), rec, wall);
  };
  try {
    if (*gen) {
      rec.command = "phantom gen";
      rec.config = o_gen.resolve();
      cmd_phantom_gen(rec.config, rec);
    } else if (*est) {
      rec.command = "flim estimate";
      rec.config = o_est.resolve();
      cmd_flim_estimate(rec.config, rec);
    } else if (*grid) {
      rec.command = "msflim grid";
      rec.config = o_grid.resolve();
      cmd_msflim_grid(rec.config, rec);
    } else if (*build) {
      rec.command = "encoder build";
      rec.config = o_build.resolve();
      cmd_encoder_build(rec.config, rec);
    } else if (*tr) {
      rec.command = "train";
      rec.config = o_train.resolve();
      cmd_train(rec.config, rec);
    } else if (*ev) {
      rec.command = "eval";
      rec.config = o_eval.resolve();
      cmd_eval(rec.config, rec);
    } else if (*cmp) {
      rec.command = "compare";
      rec.config = o_cmp.resolve();
      rec.config["report"] = reports;
      cmd_compare(rec.config, reports, rec);
    } else if (*sv) {
      rec.command = "serve";
      rec.config = o_serve.resolve();
      cmd_serve(rec.config, rec, finish);
      return 0;
    }
    finish(0.0);
    return 0;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace flim::cli
