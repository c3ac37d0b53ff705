#pragma once

// HTTP backend for interactive first-layer selection. State lives under
// <state_root>/sessions/<sid>/ and every transition is persisted with
// write-then-rename, so a restarted service resumes where it stopped.

#include <atomic>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "flim/encoder.hpp"
#include "flim/msflim.hpp"
#include "flim/phantom.hpp"
#include "flim/pipeline.hpp"
#include "flim/png.hpp"

// After Eigen: glibc's <resolv.h>, pulled in here, defines a `_res` macro.
#include <httplib.h>

namespace flim {

/// Well-formed input that fails semantic validation (HTTP 422).
struct InvalidInputError : FormatError {
  using FormatError::FormatError;
};

enum class RunStatus { Pending, Running, Done, Failed };

inline std::string to_string(RunStatus s) {
  switch (s) {
    case RunStatus::Pending: return "pending";
    case RunStatus::Running: return "running";
    case RunStatus::Done: return "done";
    case RunStatus::Failed: return "failed";
  }
  return "?";
}

inline RunStatus parse_run_status(std::string_view s) {
  if (s == "pending") return RunStatus::Pending;
  if (s == "running") return RunStatus::Running;
  if (s == "done") return RunStatus::Done;
  if (s == "failed") return RunStatus::Failed;
  throw FormatError("unknown run status '" + std::string(s) + "'");
}

struct ServiceConfig {
  std::filesystem::path data_root;   // datasets are resolved below this directory
  std::filesystem::path state_root;  // sessions go to state_root/sessions
  int workers = 1;                   // 0: runs wait for process_pending()
};

class StudioService {
 public:
  explicit StudioService(ServiceConfig cfg) : cfg_(std::move(cfg)) {
    std::filesystem::create_directories(sessions_dir());
    load_state();
    for (int i = 0; i < cfg_.workers; ++i) workers_.emplace_back([this] { worker_loop(); });
  }

  ~StudioService() {
    stop_http();
    {
      std::lock_guard lk(mu_);
      stopping_ = true;
    }
    cv_.notify_all();
    for (auto& t : workers_) t.join();
  }

  StudioService(const StudioService&) = delete;
  StudioService& operator=(const StudioService&) = delete;

  // -------------------------------------------------------------------------
  // Operations (each route is a thin wrapper over one of these)
  // -------------------------------------------------------------------------

  json create_session(const std::string& dataset) {
    const auto root = resolve_dataset(dataset);
    load_manifest(root);
    std::lock_guard lk(mu_);
    auto s = std::make_shared<Session>();
    s->id = "s" + std::to_string(next_session_++);
    s->dataset = dataset;
    persist_session(*s);
    sessions_[s->id] = s;
    return session_json(*s);
  }

  json session_info(const std::string& sid) {
    auto s = session(sid);
    std::lock_guard sl(s->mu);
    return session_json(*s);
  }

  /// Store one image's marker file; later uploads for the same image and
  /// modality replace it.
  json put_markers(const std::string& sid, const std::string& body) {
    auto s = session(sid);
    const MarkerSet ms = markers_from_json(parse_body(body), false);
    const auto root = resolve_dataset(s->dataset);
    check_image(root, ms.image_id);
    const Volume v = read_volume(image_path(root, ms.image_id, ms.modality));
    try {
      validate_markers_in(ms, v.shape());
    } catch (const FormatError& e) {
      throw InvalidInputError(e.what());
    }
    std::lock_guard sl(s->mu);
    save_markers(ms, marker_path(sid, ms.image_id, ms.modality));
    s->markers[{ms.image_id, ms.modality}] = ms;
    return {{"session", sid}, {"image", ms.image_id}, {"modality", to_string(ms.modality)},
            {"markers", ms.markers.size()}, {"voxels", ms.voxel_count()}};
  }

  /// Queue an MS-FLIM execution over every image marked on `modality`.
  json launch_run(const std::string& sid, const RunParams& p, std::optional<Modality> modality) {
    if (p.n1 < 1 || p.n2 < 1) throw FormatError("n1 and n2 must be >= 1");
    auto s = session(sid);
    std::shared_ptr<Run> run;
    json out;
    {
      std::lock_guard sl(s->mu);
      if (!modality) {
        std::set<Modality> have;
        for (const auto& [key, ms] : s->markers) have.insert(key.second);
        if (have.empty()) throw StateError("session " + sid + " has no markers");
        if (have.size() != 1) throw FormatError("modality is required when markers exist for " +
                                                std::to_string(have.size()) + " modalities");
        modality = *have.begin();
      }
      run = std::make_shared<Run>();
      run->session = sid;
      run->params = p;
      run->modality = *modality;
      for (const auto& [key, ms] : s->markers)
        if (key.second == *modality) run->markers.push_back(ms);
      if (run->markers.empty()) throw StateError("no markers on " + to_string(*modality) + " images");
      std::lock_guard lk(mu_);
      run->id = sid + "-r" + std::to_string(s->next_run++);
      s->runs.push_back(run->id);
      persist_run(*run);
      persist_session(*s);
      runs_[run->id] = run;
      queue_.push_back(run->id);
      out = run_json(*run);
    }
    cv_.notify_one();
    return out;
  }

  json run_info(const std::string& rid) {
    auto r = find_run(rid);
    std::lock_guard lk(mu_);
    return run_json(*r);
  }

  /// Execute queued runs on the calling thread; returns how many ran.
  int process_pending() {
    int n = 0;
    for (;;) {
      std::string rid;
      {
        std::lock_guard lk(mu_);
        if (queue_.empty()) return n;
        rid = queue_.front();
        queue_.pop_front();
      }
      execute(rid);
      ++n;
    }
  }

  std::string image_slice_png(const std::string& dataset, const std::string& image, Modality m, Axis axis, int index,
                              int channel) {
    const auto root = resolve_dataset(dataset);
    check_image(root, image);
    const Volume v = read_volume(image_path(root, image, m));
    try {
      return slice_png(v, axis, index, channel);
    } catch (const FormatError& e) {
      throw InvalidInputError(e.what());
    }
  }

  std::string session_dataset(const std::string& sid) { return session(sid)->dataset; }

  /// PNG of one slice of candidate `k`'s activation on `image`. The activation
  /// is computed once and cached as an MVOL1 file.
  std::string activation_png(const std::string& rid, int k, const std::string& image, Axis axis, int index) {
    const auto path = activation_cache(rid, k, image);
    const Volume act = read_volume(path);
    try {
      return slice_png(act, axis, index, 0);
    } catch (const FormatError& e) {
      throw InvalidInputError(e.what());
    }
  }

  std::filesystem::path activation_cache(const std::string& rid, int k, const std::string& image) {
    auto r = find_run(rid);
    {
      std::lock_guard lk(mu_);
      if (r->status != RunStatus::Done) throw StateError("run " + rid + " is " + to_string(r->status));
    }
    const std::string dataset = session(r->session)->dataset;
    const CandidateSet& cs = *r->result;
    const Filter& f = resolve_pick(std::span<const CandidateSet>(&cs, 1), Pick{rid, image, k});
    const auto path = session_dir(r->session) / "activations" / rid / (image + "_" + std::to_string(k) + ".mvol");
    std::lock_guard cl(cache_mu_);
    if (!std::filesystem::exists(path)) {
      const Volume img = read_volume(image_path(resolve_dataset(dataset), image, r->modality));
      write_volume(activation_map(img, f, cs.norm, cs.kernel), path);
    }
    return path;
  }

  /// Turn picks into the session's first-layer bank.
  json set_bank(const std::string& sid, const json& body) {
    if (!body.is_object() || !body.contains("picks") || !body["picks"].is_array())
      throw FormatError("body must be {\"picks\": [...]}");
    std::vector<Pick> picks;
    try {
      for (const auto& p : body["picks"])
        picks.push_back({p.at("run").get<std::string>(), p.at("image").get<std::string>(), p.at("index").get<int>()});
    } catch (const json::exception& e) {
      throw FormatError(std::string("pick: ") + e.what());
    }
    if (picks.empty()) throw FormatError("no picks");
    const int target = body.value("target_bank_size", static_cast<int>(picks.size()));
    if (target < static_cast<int>(picks.size()))
      throw InvalidInputError("more picks than the target bank size");

    auto s = session(sid);
    std::lock_guard sl(s->mu);
    std::vector<CandidateSet> used;
    std::optional<Modality> modality;
    for (const auto& p : picks) {
      auto r = find_run(p.run_id);
      std::lock_guard lk(mu_);
      if (r->session != sid) throw NotFoundError("run " + p.run_id + " does not belong to session " + sid);
      if (r->status != RunStatus::Done) throw StateError("run " + p.run_id + " is " + to_string(r->status));
      if (modality && *modality != r->modality) throw InvalidInputError("picks mix modalities");
      modality = r->modality;
      if (std::none_of(used.begin(), used.end(), [&](const CandidateSet& c) { return c.run_id == p.run_id; }))
        used.push_back(*r->result);
    }
    for (const auto& c : used)
      if (!(c.norm == used.front().norm))
        throw InvalidInputError("picked runs were estimated from different marker sets");
    SelectionLedger ledger(target);
    for (const auto& p : picks) {
      if (ledger.contains(p)) throw FormatError("duplicate pick " + p.run_id + "/" + p.image_id);
      resolve_pick(used, p);
      ledger.add(p);
    }
    const FilterBank bank = finalize_bank(used, ledger, used.front().norm);
    save_bank(bank, bank_path(sid));
    s->ledger = ledger;
    s->bank_modality = modality;
    persist_session(*s);
    return {{"session", sid}, {"filters", bank.size()}, {"modality", to_string(*modality)},
            {"path", bank_path(sid).string()}, {"ledger", ledger_to_json(ledger)}};
  }

  /// Deeper layers estimated by FLIM on top of the selected first layer.
  json build_session_encoder(const std::string& sid, const json& body) {
    auto s = session(sid);
    std::lock_guard sl(s->mu);
    if (!s->bank_modality) throw StateError("session " + sid + " has no selected bank");
    EncoderSpec spec = default_encoder_spec();
    if (body.is_object() && body.contains("spec")) spec = encoder_spec_from_json(body["spec"]);
    const std::uint64_t seed = body.is_object() ? body.value("seed", std::uint64_t{0}) : 0;
    const FilterBank bank = load_bank(bank_path(sid));
    if (spec.layers.front().kernel != bank.kernel)
      throw InvalidInputError("first layer kernel does not match the selected bank");
    const auto root = resolve_dataset(s->dataset);
    std::vector<Volume> images;
    std::vector<MarkerSet> markers;
    for (const auto& [key, ms] : s->markers)
      if (key.second == *s->bank_modality) {
        images.push_back(read_volume(image_path(root, key.first, key.second)));
        markers.push_back(ms);
      }
    if (images.empty()) throw StateError("no markers on " + to_string(*s->bank_modality) + " images");
    const EncoderModel enc = build_encoder(images, markers, spec, bank, seed, *s->bank_modality);
    const auto path = session_dir(sid) / ("encoder_" + modality_file(*s->bank_modality) + ".flimenc");
    save_encoder(enc, path);
    json layers = json::array();
    for (const auto& b : enc.banks) layers.push_back({{"filters", b.size()}, {"in_channels", b.in_channels}});
    return {{"session", sid}, {"path", path.string()}, {"bank_path", bank_path(sid).string()}, {"layers", layers}};
  }

  std::string export_bank(const std::string& sid) {
    auto s = session(sid);
    std::lock_guard sl(s->mu);
    if (!s->bank_modality) throw StateError("session " + sid + " has no selected bank");
    return read_file(bank_path(sid));
  }

  // -------------------------------------------------------------------------
  // HTTP
  // -------------------------------------------------------------------------

  void bind(httplib::Server& srv) {
    srv.Post("/api/sessions", [this](const auto& req, auto& res) {
      handle(res, [&] {
        const json b = parse_body(req.body);
        if (!b.is_object() || !b.contains("dataset") || !b["dataset"].is_string())
          throw FormatError("body must be {\"dataset\": \"...\"}");
        reply_json(res, create_session(b["dataset"].get<std::string>()), 201);
      });
    });
    srv.Get(R"(/api/sessions/([^/]+))", [this](const auto& req, auto& res) {
      handle(res, [&] { reply_json(res, session_info(req.matches[1])); });
    });
    srv.Put(R"(/api/sessions/([^/]+)/markers)", [this](const auto& req, auto& res) {
      handle(res, [&] { reply_json(res, put_markers(req.matches[1], req.body)); });
    });
    srv.Post(R"(/api/sessions/([^/]+)/runs)", [this](const auto& req, auto& res) {
      handle(res, [&] {
        const json b = parse_body(req.body);
        RunParams p;
        std::optional<Modality> m;
        try {
          p.n1 = b.at("n1").get<int>();
          p.n2 = b.at("n2").get<int>();
          p.seed = b.value("seed", std::uint64_t{0});
          if (b.contains("modality")) m = parse_modality(b["modality"].get<std::string>());
        } catch (const json::exception& e) {
          throw FormatError(std::string("run request: ") + e.what());
        }
        reply_json(res, launch_run(req.matches[1], p, m), 202);
      });
    });
    srv.Get(R"(/api/runs/([^/]+))", [this](const auto& req, auto& res) {
      handle(res, [&] { reply_json(res, run_info(req.matches[1])); });
    });
    srv.Get(R"(/api/runs/([^/]+)/candidates/(\d+)/activation)", [this](const auto& req, auto& res) {
      handle(res, [&] {
        const std::string rid = req.matches[1];
        const int k = std::stoi(req.matches[2]);
        std::string image = req.get_param_value("image");
        if (image.empty()) {
          auto r = find_run(rid);
          std::lock_guard lk(mu_);
          if (r->markers.size() != 1) throw FormatError("image is required");
          image = r->markers.front().image_id;
        }
        reply_png(res, activation_png(rid, k, image, axis_param(req), int_param(req, "index")));
      });
    });
    srv.Get(R"(/api/images/([^/]+)/slice)", [this](const auto& req, auto& res) {
      handle(res, [&] {
        std::string dataset = req.get_param_value("dataset");
        if (req.has_param("session")) dataset = session_dataset(req.get_param_value("session"));
        const Modality m = req.has_param("modality") ? parse_modality(req.get_param_value("modality")) : Modality::FLAIR;
        const int channel = req.has_param("channel") ? int_param(req, "channel") : 0;
        reply_png(res, image_slice_png(dataset, req.matches[1], m, axis_param(req), int_param(req, "index"), channel));
      });
    });
    srv.Post(R"(/api/sessions/([^/]+)/bank)", [this](const auto& req, auto& res) {
      handle(res, [&] { reply_json(res, set_bank(req.matches[1], parse_body(req.body))); });
    });
    srv.Post(R"(/api/sessions/([^/]+)/encoder)", [this](const auto& req, auto& res) {
      handle(res, [&] {
        const json b = req.body.empty() ? json::object() : parse_body(req.body);
        reply_json(res, build_session_encoder(req.matches[1], b));
      });
    });
    srv.Get(R"(/api/sessions/([^/]+)/export)", [this](const auto& req, auto& res) {
      handle(res, [&] {
        res.set_content(export_bank(req.matches[1]), "application/octet-stream");
        res.set_header("Content-Disposition", "attachment; filename=\"bank.flimbank\"");
      });
    });
  }

  /// Serve on a background thread; returns the bound port.
  int start(const std::string& host, int port) {
    http_ = std::make_unique<httplib::Server>();
    bind(*http_);
    const int bound = port == 0 ? http_->bind_to_any_port(host) : (http_->bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
    http_thread_ = std::thread([this] { http_->listen_after_bind(); });
    return bound;
  }

  void stop_http() {
    if (!http_) return;
    http_->stop();
    if (http_thread_.joinable()) http_thread_.join();
    http_.reset();
  }

  std::filesystem::path session_dir(const std::string& sid) const { return sessions_dir() / sid; }

 private:
  struct Session {
    std::mutex mu;  // serializes mutations of one session
    std::string id;
    std::string dataset;
    std::map<std::pair<std::string, Modality>, MarkerSet> markers;
    std::vector<std::string> runs;
    int next_run = 1;
    SelectionLedger ledger{16};
    std::optional<Modality> bank_modality;
  };

  struct Run {
    std::string id;
    std::string session;
    RunParams params;
    Modality modality = Modality::FLAIR;
    std::vector<MarkerSet> markers;  // snapshot taken at launch
    RunStatus status = RunStatus::Pending;
    std::string error;
    std::optional<CandidateSet> result;
  };

  static std::string modality_file(Modality m) { return m == Modality::FLAIR ? "flair" : "t1gd"; }

  std::filesystem::path sessions_dir() const { return cfg_.state_root / "sessions"; }
  std::filesystem::path bank_path(const std::string& sid) const { return session_dir(sid) / "bank.flimbank"; }
  std::filesystem::path marker_path(const std::string& sid, const std::string& image, Modality m) const {
    return session_dir(sid) / "markers" / (image + "." + modality_file(m) + ".mk");
  }
  std::filesystem::path run_path(const Run& r) const { return session_dir(r.session) / "runs" / (r.id + ".json"); }
  std::filesystem::path result_path(const Run& r) const {
    return session_dir(r.session) / "runs" / (r.id + ".cands");
  }

  std::filesystem::path resolve_dataset(const std::string& dataset) const {
    const std::filesystem::path rel(dataset);
    if (rel.is_absolute()) throw FormatError("dataset must be relative to the data root");
    for (const auto& part : rel)
      if (part == "..") throw FormatError("dataset may not leave the data root");
    const auto root = dataset.empty() ? cfg_.data_root : cfg_.data_root / rel;
    if (!std::filesystem::exists(root / kManifestName)) throw NotFoundError("unknown dataset '" + dataset + "'");
    return root;
  }

  static void check_image(const std::filesystem::path& root, const std::string& image) {
    const DatasetManifest m = load_manifest(root);
    const auto all = m.all();
    if (std::find(all.begin(), all.end(), image) == all.end()) throw NotFoundError("unknown image '" + image + "'");
  }

  static std::filesystem::path image_path(const std::filesystem::path& root, const std::string& image, Modality m) {
    return root / image / (modality_file(m) + ".mvol");
  }

  std::shared_ptr<Session> session(const std::string& sid) {
    std::lock_guard lk(mu_);
    auto it = sessions_.find(sid);
    if (it == sessions_.end()) throw NotFoundError("unknown session '" + sid + "'");
    return it->second;
  }

  std::shared_ptr<Run> find_run(const std::string& rid) {
    std::lock_guard lk(mu_);
    auto it = runs_.find(rid);
    if (it == runs_.end()) throw NotFoundError("unknown run '" + rid + "'");
    return it->second;
  }

  json session_json(const Session& s) const {
    json markers = json::array();
    for (const auto& [key, ms] : s.markers)
      markers.push_back({{"image", key.first}, {"modality", to_string(key.second)}, {"markers", ms.markers.size()}});
    json j;
    j["id"] = s.id;
    j["dataset"] = s.dataset;
    j["markers"] = markers;
    j["runs"] = s.runs;
    j["next_run"] = s.next_run;
    j["ledger"] = ledger_to_json(s.ledger);
    j["bank_modality"] = s.bank_modality ? json(to_string(*s.bank_modality)) : json(nullptr);
    return j;
  }

  json run_json(const Run& r) const {
    json images = json::array();
    for (const auto& ms : r.markers) {
      json im{{"image", ms.image_id}};
      if (r.result) {
        const auto* c = r.result->find_image(ms.image_id);
        im["candidates"] = c ? c->filters.size() : 0;
        im["first_candidates"] = c ? c->first_candidates : 0;
      }
      images.push_back(std::move(im));
    }
    json j;
    j["run_id"] = r.id;
    j["session"] = r.session;
    j["status"] = to_string(r.status);
    j["n1"] = r.params.n1;
    j["n2"] = r.params.n2;
    j["seed"] = r.params.seed;
    j["modality"] = to_string(r.modality);
    j["candidates"] = r.result ? r.result->candidate_count() : 0;
    j["images"] = images;
    if (!r.error.empty()) j["error"] = r.error;
    return j;
  }

  void persist_session(const Session& s) {
    write_file_atomic(session_dir(s.id) / "session.json", session_json(s).dump(2) + "\n");
  }

  void persist_run(const Run& r) {
    json j = run_json(r);
    j["marker_sets"] = json::array();
    for (const auto& ms : r.markers) j["marker_sets"].push_back(markers_to_json(ms));
    write_file_atomic(run_path(r), j.dump() + "\n");
  }

  void load_state() {
    namespace fs = std::filesystem;
    for (const auto& e : fs::directory_iterator(sessions_dir())) {
      if (!fs::exists(e.path() / "session.json")) continue;
      const json j = read_json_file(e.path() / "session.json");
      auto s = std::make_shared<Session>();
      s->id = j.at("id").get<std::string>();
      s->dataset = j.at("dataset").get<std::string>();
      s->runs = j.at("runs").get<std::vector<std::string>>();
      s->next_run = j.value("next_run", 1);
      s->ledger = ledger_from_json(j.at("ledger"));
      if (!j.at("bank_modality").is_null()) s->bank_modality = parse_modality(j["bank_modality"].get<std::string>());
      if (fs::exists(e.path() / "markers"))
        for (const auto& m : fs::directory_iterator(e.path() / "markers")) {
          if (m.path().extension() != ".mk") continue;
          MarkerSet ms = load_markers(m.path());
          s->markers[{ms.image_id, ms.modality}] = std::move(ms);
        }
      for (const auto& rid : s->runs) {
        auto r = std::make_shared<Run>();
        r->id = rid;
        r->session = s->id;
        const json rj = read_json_file(run_path(*r));
        r->params = {rj.at("n1").get<int>(), rj.at("n2").get<int>(), rj.at("seed").get<std::uint64_t>()};
        r->modality = parse_modality(rj.at("modality").get<std::string>());
        r->status = parse_run_status(rj.at("status").get<std::string>());
        r->error = rj.value("error", std::string{});
        for (const auto& mj : rj.at("marker_sets")) r->markers.push_back(markers_from_json(mj));
        if (r->status == RunStatus::Done) r->result = decode_candidate_set(read_file(result_path(*r)));
        if (r->status == RunStatus::Pending || r->status == RunStatus::Running) {
          r->status = RunStatus::Pending;  // interrupted: run again
          queue_.push_back(rid);
        }
        runs_[rid] = r;
      }
      const std::string num = s->id.substr(1);
      if (!num.empty() && std::all_of(num.begin(), num.end(), ::isdigit))
        next_session_ = std::max(next_session_, std::stoi(num) + 1);
      sessions_[s->id] = s;
    }
  }

  void execute(const std::string& rid) {
    std::shared_ptr<Run> r;
    std::string dataset;
    {
      std::lock_guard lk(mu_);
      r = runs_.at(rid);
      r->status = RunStatus::Running;
      persist_run(*r);
      dataset = sessions_.at(r->session)->dataset;
    }
    try {
      const auto root = resolve_dataset(dataset);
      std::vector<Volume> images;
      for (const auto& ms : r->markers) images.push_back(read_volume(image_path(root, ms.image_id, r->modality)));
      CandidateSet cs = run_msflim_step(images, r->markers, r->params, rid);
      write_file_atomic(result_path(*r), encode_candidate_set(cs));
      std::lock_guard lk(mu_);
      r->result = std::move(cs);
      r->status = RunStatus::Done;
      persist_run(*r);
    } catch (const std::exception& e) {
      std::lock_guard lk(mu_);
      r->status = RunStatus::Failed;
      r->error = e.what();
      persist_run(*r);
    }
  }

  void worker_loop() {
    for (;;) {
      std::string rid;
      {
        std::unique_lock lk(mu_);
        cv_.wait(lk, [this] { return stopping_ || !queue_.empty(); });
        if (stopping_) return;
        rid = queue_.front();
        queue_.pop_front();
      }
      execute(rid);
    }
  }

  static json parse_body(const std::string& body) {
    try {
      return json::parse(body);
    } catch (const json::parse_error& e) {
      throw FormatError(std::string("malformed JSON body: ") + e.what());
    }
  }

  static Axis axis_param(const httplib::Request& req) {
    return parse_axis(req.has_param("axis") ? req.get_param_value("axis") : "z");
  }

  static int int_param(const httplib::Request& req, const char* name) {
    if (!req.has_param(name)) throw FormatError(std::string("missing query parameter '") + name + "'");
    const std::string v = req.get_param_value(name);
    try {
      std::size_t used = 0;
      const int x = std::stoi(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return x;
    } catch (const std::exception&) {
      throw FormatError(std::string("query parameter '") + name + "' must be an integer");
    }
  }

  static void reply_json(httplib::Response& res, const json& j, int status = 200) {
    res.status = status;
    res.set_content(j.dump(), "application/json");
  }

  static void reply_png(httplib::Response& res, const std::string& png) { res.set_content(png, "image/png"); }

  template <class F>
  static void handle(httplib::Response& res, F&& f) {
    auto fail = [&](int status, const std::string& msg) { reply_json(res, {{"error", msg}}, status); };
    try {
      f();
    } catch (const NotFoundError& e) {
      fail(404, e.what());
    } catch (const StateError& e) {
      fail(409, e.what());
    } catch (const InvalidInputError& e) {
      fail(422, e.what());
    } catch (const FormatError& e) {
      fail(400, e.what());
    } catch (const std::exception& e) {
      fail(500, e.what());
    }
  }

  ServiceConfig cfg_;
  std::mutex mu_;  // guards the maps, the queue and every Run
  std::mutex cache_mu_;
  std::condition_variable cv_;
  bool stopping_ = false;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::map<std::string, std::shared_ptr<Run>> runs_;
  std::deque<std::string> queue_;
  int next_session_ = 1;
  std::vector<std::thread> workers_;
  std::unique_ptr<httplib::Server> http_;
  std::thread http_thread_;
};

}  // namespace flim
