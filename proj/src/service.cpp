#include "makeup/service.hpp"

#include <httplib.h>
#include <openssl/rand.h>

#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>

#include "api_schema.inc"
#include "makeup/error.hpp"
#include "makeup/fixtures.hpp"
#include "makeup/spec_io.hpp"

namespace makeup {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string iso_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t secs = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[96];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1,
                tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
  return buf;
}

std::string new_job_id() {
  unsigned char raw[12];
  if (RAND_bytes(raw, sizeof raw) != 1) throw Error(ErrorKind::kIo, "random source unavailable");
  static const char* hex = "0123456789abcdef";
  std::string id;
  for (unsigned char b : raw) {
    id += hex[b >> 4];
    id += hex[b & 15];
  }
  return id;
}

bool valid_job_id(const std::string& id) {
  if (id.empty() || id.size() > 64) return false;
  return std::all_of(id.begin(), id.end(), [](char c) { return std::isxdigit(static_cast<unsigned char>(c)); });
}

int env_int(const char* name, int fallback) {
  const char* v = std::getenv(name);
  if (!v || !*v) return fallback;
  try {
    return std::stoi(v);
  } catch (const std::exception&) {
    throw Error(ErrorKind::kConfiguration, std::string(name) + " is not an integer");
  }
}

// Request rejection carried to the HTTP layer.
struct HttpError {
  int status;
  std::string field;
  std::string message;
  std::string kind;
};

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, const HttpError& e) {
  json err = {{"code", e.status}, {"message", e.message}};
  if (!e.field.empty()) err["field"] = e.field;
  if (!e.kind.empty()) err["kind"] = e.kind;
  send_json(res, e.status, {{"error", err}});
}

HttpError bad_request(const std::string& field, const Error& e) {
  return {400, field, e.what(), to_string(e.kind())};
}

std::optional<std::string> part(const httplib::Request& req, const char* name) {
  if (!req.has_file(name)) return std::nullopt;
  return req.get_file_value(name).content;
}

Bytes to_bytes(const std::string& s) { return Bytes(s.begin(), s.end()); }

RasterImage decode_upload(const std::string& data, const char* field, const ServiceConfig& cfg) {
  if (data.size() > cfg.max_image_bytes) {
    throw HttpError{413, field, std::string(field) + " exceeds " + std::to_string(cfg.max_image_bytes) + " bytes",
                    "parameter"};
  }
  const Bytes bytes = to_bytes(data);
  const std::string format = sniff_image_format(bytes);
  if (format.empty()) throw HttpError{400, field, std::string(field) + " must be PNG or JPEG", "parameter"};
  if (format == "png") {
    const auto [w, h] = png_dimensions(bytes);
    if (static_cast<long long>(w) * h > cfg.max_image_pixels) {
      throw HttpError{413, field, std::string(field) + " has too many pixels", "parameter"};
    }
  }
  RasterImage image;
  try {
    image = decode_image(bytes);
  } catch (const Error& e) {
    throw bad_request(field, e);
  }
  if (static_cast<long long>(image.height()) * image.width() > cfg.max_image_pixels) {
    throw HttpError{413, field, std::string(field) + " has too many pixels", "parameter"};
  }
  return image;
}

std::optional<LabelMap> decode_labels(const httplib::Request& req, const char* grid_field,
                                      const char* mapping_field, const RasterImage& image) {
  const auto grid_data = part(req, grid_field);
  const auto mapping_data = part(req, mapping_field);
  if (!grid_data) {
    if (mapping_data) throw HttpError{400, mapping_field, "mapping given without a label map", "parameter"};
    return std::nullopt;
  }
  LabelMap labels;
  try {
    labels.grid = decode_label_grid(to_bytes(*grid_data));
  } catch (const Error& e) {
    throw bad_request(grid_field, e);
  }
  if (mapping_data) {
    try {
      labels.mapping = parse_label_mapping(*mapping_data);
    } catch (const Error& e) {
      throw bad_request(mapping_field, e);
    }
  }
  if (!labels.grid.same_dims(image.height(), image.width())) {
    throw HttpError{422, grid_field,
                    "label map is " + std::to_string(labels.grid.width) + "x" + std::to_string(labels.grid.height) +
                        " but the image is " + std::to_string(image.width()) + "x" + std::to_string(image.height()),
                    "shape"};
  }
  return labels;
}

json event_json(const ProgressEvent& e) {
  json j = {{"kind", to_string(e.kind)}, {"stage", e.stage}, {"fraction", std::clamp(e.fraction, 0.0, 1.0)}};
  if (e.steps > 0) {
    j["step"] = e.step;
    j["steps"] = e.steps;
  }
  if (!e.message.empty()) j["message"] = e.message;
  return j;
}

}  // namespace

// ---------------------------------------------------------------- config

ServiceConfig ServiceConfig::from_env() {
  ServiceConfig c;
  c.port = env_int("MAKEUP_PORT", c.port);
  c.workers = std::max(1, env_int("MAKEUP_WORKERS", c.workers));
  if (const char* b = std::getenv("MAKEUP_BACKEND"); b && *b) c.default_backend = b;
  if (const char* d = std::getenv("MAKEUP_STORE_DIR"); d && *d) c.store_dir = d;
  c.requeue_on_restart = env_int("MAKEUP_REQUEUE", 1) != 0;
  c.job_timeout = std::chrono::milliseconds(env_int("MAKEUP_JOB_TIMEOUT_MS", static_cast<int>(c.job_timeout.count())));
  if (c.port < 0 || c.port > 65535) throw Error(ErrorKind::kConfiguration, "MAKEUP_PORT out of range");
  return c;
}

// ---------------------------------------------------------------- records

const char* to_string(JobState s) {
  switch (s) {
    case JobState::kQueued: return "queued";
    case JobState::kRunning: return "running";
    case JobState::kDone: return "done";
    case JobState::kFailed: return "failed";
    case JobState::kCancelled: return "cancelled";
  }
  return "unknown";
}

std::optional<JobState> parse_job_state(const std::string& text) {
  for (JobState s : {JobState::kQueued, JobState::kRunning, JobState::kDone, JobState::kFailed, JobState::kCancelled}) {
    if (text == to_string(s)) return s;
  }
  return std::nullopt;
}

bool legal_transition(JobState from, JobState to) {
  if (from == to) return true;
  if (from == JobState::kQueued) return to == JobState::kRunning;
  if (from == JobState::kRunning) return to == JobState::kDone || to == JobState::kFailed || to == JobState::kCancelled;
  return false;
}

json JobRecord::to_json() const {
  json j = {{"id", id},           {"state", to_string(state)}, {"backend", backend},
            {"spec", spec},       {"created_at", created_at},  {"timings", timings}};
  if (!started_at.empty()) j["started_at"] = started_at;
  if (!finished_at.empty()) j["finished_at"] = finished_at;
  if (!error.empty()) j["error"] = error;
  if (!error_kind.empty()) j["error_kind"] = error_kind;
  if (width > 0) j["width"] = width;
  if (height > 0) j["height"] = height;
  if (!denoiser.is_null()) j["denoiser"] = denoiser;
  return j;
}

JobRecord JobRecord::from_json(const json& j) {
  JobRecord r;
  r.id = j.at("id").get<std::string>();
  const auto state = parse_job_state(j.at("state").get<std::string>());
  if (!state) throw Error(ErrorKind::kIo, "record " + r.id + " has an unknown state");
  r.state = *state;
  r.backend = j.value("backend", "");
  r.spec = j.value("spec", json::object());
  r.created_at = j.value("created_at", "");
  r.started_at = j.value("started_at", "");
  r.finished_at = j.value("finished_at", "");
  r.error = j.value("error", "");
  r.error_kind = j.value("error_kind", "");
  r.width = j.value("width", 0);
  r.height = j.value("height", 0);
  r.timings = j.value("timings", json::array());
  if (j.contains("denoiser")) r.denoiser = j["denoiser"];
  return r;
}

// ---------------------------------------------------------------- store

JobStore::JobStore(fs::path root) : root_(std::move(root)) { fs::create_directories(root_ / "jobs"); }

fs::path JobStore::job_dir(const std::string& id) const { return root_ / "jobs" / id; }

void JobStore::persist(const JobRecord& record) const {
  const fs::path dir = job_dir(record.id);
  const fs::path tmp = dir / "record.json.tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    out << record.to_json().dump(2);
    if (!out) throw Error(ErrorKind::kIo, "cannot write record for job " + record.id);
  }
  fs::rename(tmp, dir / "record.json");
}

std::vector<std::string> JobStore::recover(bool requeue) {
  std::lock_guard lock(mu_);
  std::vector<std::pair<std::string, std::string>> queued;  // (created_at, id)
  for (const auto& entry : fs::directory_iterator(root_ / "jobs")) {
    const fs::path file = entry.path() / "record.json";
    if (!entry.is_directory() || !fs::exists(file)) continue;
    JobRecord r;
    try {
      r = JobRecord::from_json(json::parse(read_text_file(file)));
    } catch (const std::exception& e) {
      std::fprintf(stderr, "skipping unreadable job record %s: %s\n", file.c_str(), e.what());
      continue;
    }
    if (r.state == JobState::kRunning || (r.state == JobState::kQueued && !requeue)) {
      r.state = JobState::kFailed;
      r.finished_at = iso_now();
      r.error = "service restarted before the job finished";
      r.error_kind = "interrupted";
      persist(r);
    } else if (r.state == JobState::kQueued) {
      queued.emplace_back(r.created_at, r.id);
    }
    records_[r.id] = r;
  }
  std::sort(queued.begin(), queued.end());
  std::vector<std::string> ids;
  for (auto& q : queued) ids.push_back(q.second);
  return ids;
}

void JobStore::create(const JobRecord& record, const std::map<std::string, Bytes>& inputs) {
  std::lock_guard lock(mu_);
  const fs::path dir = job_dir(record.id);
  fs::create_directories(dir);
  for (const auto& [name, bytes] : inputs) write_file(dir / name, bytes);
  persist(record);
  records_[record.id] = record;
}

std::optional<JobRecord> JobStore::get(const std::string& id) const {
  std::lock_guard lock(mu_);
  const auto it = records_.find(id);
  if (it == records_.end()) return std::nullopt;
  return it->second;
}

JobRecord JobStore::update(const std::string& id, const std::function<void(JobRecord&)>& change) {
  std::lock_guard lock(mu_);
  const auto it = records_.find(id);
  if (it == records_.end()) throw Error(ErrorKind::kParameter, "unknown job " + id);
  JobRecord next = it->second;
  change(next);
  if (!legal_transition(it->second.state, next.state)) {
    throw Error(ErrorKind::kParameter, std::string("illegal job transition ") + to_string(it->second.state) +
                                           " -> " + to_string(next.state));
  }
  persist(next);
  it->second = next;
  return next;
}

void JobStore::set_progress(const std::string& id, double fraction, const std::string& stage) {
  std::lock_guard lock(mu_);
  auto& p = progress_[id];
  p.first = std::max(p.first, fraction);
  p.second = stage;
}

std::pair<double, std::string> JobStore::progress(const std::string& id) const {
  std::lock_guard lock(mu_);
  const auto it = progress_.find(id);
  return it == progress_.end() ? std::pair<double, std::string>{0.0, ""} : it->second;
}

std::optional<Bytes> JobStore::input(const std::string& id, const std::string& name) const {
  const fs::path file = job_dir(id) / name;
  if (!fs::exists(file)) return std::nullopt;
  return read_file(file);
}

void JobStore::write_result(const std::string& id, const Bytes& png) {
  std::lock_guard lock(mu_);
  const fs::path tmp = job_dir(id) / "result.png.tmp";
  write_file(tmp, png);
  fs::rename(tmp, job_dir(id) / "result.png");
}

std::optional<Bytes> JobStore::result(const std::string& id) const {
  const fs::path file = job_dir(id) / "result.png";
  if (!fs::exists(file)) return std::nullopt;
  return read_file(file);
}

// ---------------------------------------------------------------- events

void EventHub::publish(const std::string& id, const json& event, bool terminal) {
  {
    std::lock_guard lock(mu_);
    Log& log = logs_[id];
    if (log.closed) return;
    log.events.push_back(event);
    log.closed = terminal;
  }
  cv_.notify_all();
}

std::pair<std::vector<json>, bool> EventHub::read(const std::string& id, std::size_t from,
                                                  std::chrono::milliseconds wait) {
  std::unique_lock lock(mu_);
  cv_.wait_for(lock, wait, [&] {
    const auto it = logs_.find(id);
    return it != logs_.end() && (it->second.events.size() > from || it->second.closed);
  });
  const auto it = logs_.find(id);
  if (it == logs_.end()) return {{}, false};
  std::vector<json> out;
  for (std::size_t i = from; i < it->second.events.size(); ++i) out.push_back(it->second.events[i]);
  return {out, it->second.closed};
}

bool EventHub::known(const std::string& id) const {
  std::lock_guard lock(mu_);
  return logs_.count(id) > 0;
}

// ---------------------------------------------------------------- service

const std::string& MakeupService::api_schema() {
  static const std::string schema = kApiSchemaJson;
  return schema;
}

MakeupService::MakeupService(ServiceConfig config)
    : config_(std::move(config)), server_(std::make_unique<httplib::Server>()), store_(config_.store_dir) {
  if (config_.workers < 1) throw Error(ErrorKind::kConfiguration, "workers must be >= 1");
  make_backend(config_.default_backend);  // fail fast on a bad default
  server_->set_payload_max_length(config_.max_upload_bytes);
  install_routes();
  for (const std::string& id : store_.recover(config_.requeue_on_restart)) enqueue(id);
}

MakeupService::~MakeupService() { stop(); }

httplib::Server& MakeupService::http() { return *server_; }

int MakeupService::bind() {
  int port = config_.port;
  if (port == 0) {
    port = server_->bind_to_any_port(config_.host);
  } else if (!server_->bind_to_port(config_.host, port)) {
    port = -1;
  }
  if (port < 0) throw Error(ErrorKind::kConfiguration, "cannot bind " + config_.host + ":" + std::to_string(config_.port));
  {
    std::lock_guard lock(queue_mu_);
    if (workers_.empty()) {
      for (int i = 0; i < config_.workers; ++i) workers_.emplace_back([this] { worker_loop(); });
    }
  }
  return port;
}

void MakeupService::serve() { server_->listen_after_bind(); }

void MakeupService::stop() {
  {
    std::lock_guard lock(queue_mu_);
    if (stopping_) return;
    stopping_ = true;
    for (auto& [id, token] : cancels_) token->cancel();
  }
  queue_cv_.notify_all();
  server_->stop();
  for (auto& t : workers_) {
    if (t.joinable()) t.join();
  }
}

void MakeupService::stop_listening() { server_->stop(); }

void MakeupService::enqueue(const std::string& id) {
  {
    std::lock_guard lock(queue_mu_);
    queue_.push_back(id);
    cancels_[id] = std::make_shared<CancelToken>();
  }
  queue_cv_.notify_one();
}

void MakeupService::worker_loop() {
  for (;;) {
    std::string id;
    {
      std::unique_lock lock(queue_mu_);
      queue_cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
      if (stopping_) return;
      id = queue_.front();
      queue_.pop_front();
    }
    try {
      run_job(id);
    } catch (const std::exception& e) {
      std::fprintf(stderr, "job %s: %s\n", id.c_str(), e.what());
    }
    std::lock_guard lock(queue_mu_);
    cancels_.erase(id);
  }
}

void MakeupService::run_job(const std::string& id) {
  std::shared_ptr<CancelToken> token;
  {
    std::lock_guard lock(queue_mu_);
    token = cancels_[id];
    if (!token) token = cancels_[id] = std::make_shared<CancelToken>();
  }
  const JobRecord rec = store_.update(id, [](JobRecord& r) {
    r.state = JobState::kRunning;
    r.started_at = iso_now();
  });

  auto fail = [&](JobState state, const std::string& kind, const std::string& message, const std::string& stage) {
    store_.update(id, [&](JobRecord& r) {
      r.state = state;
      r.finished_at = iso_now();
      r.error = message;
      r.error_kind = kind;
    });
    const auto [fraction, last_stage] = store_.progress(id);
    ProgressEvent e;
    e.kind = state == JobState::kCancelled ? ProgressEvent::Kind::kCancelled : ProgressEvent::Kind::kFailed;
    e.stage = stage.empty() ? last_stage : stage;
    e.fraction = fraction;
    e.message = message;
    hub_.publish(id, event_json(e), true);
  };

  MakeupJob job;
  try {
    ParsedSpec parsed = spec_from_json(rec.spec);
    job.spec = std::move(parsed.spec);
    job.backend_id = rec.backend;
    job.image = decode_image(*store_.input(id, "image"));
    if (auto g = store_.input(id, "labels")) {
      LabelMap lm;
      lm.grid = decode_label_grid(*g);
      if (auto m = store_.input(id, "mapping")) lm.mapping = parse_label_mapping(std::string(m->begin(), m->end()));
      job.labels = lm;
    }
    if (auto r = store_.input(id, "reference")) {
      ReferenceInput ref;
      ref.image = decode_image(*r);
      if (auto g = store_.input(id, "reference_labels")) {
        LabelMap lm;
        lm.grid = decode_label_grid(*g);
        if (auto m = store_.input(id, "reference_mapping")) {
          lm.mapping = parse_label_mapping(std::string(m->begin(), m->end()));
        }
        ref.labels = lm;
      }
      job.spec.reference = std::move(ref);
    }
  } catch (const Error& e) {
    fail(JobState::kFailed, to_string(e.kind()), e.what(), "load");
    return;
  }

  RunOptions opts;
  opts.cancel = token;
  opts.timeout = config_.job_timeout;
  opts.progress = [&](const ProgressEvent& e) {
    if (e.kind == ProgressEvent::Kind::kProgress) {
      store_.set_progress(id, e.fraction, e.stage);
      hub_.publish(id, event_json(e), false);
    }
  };
  try {
    const auto backend = make_backend(job.backend_id);
    JobResult result = run_makeup(job, *backend, opts);
    store_.write_result(id, encode_png(result.output));
    store_.set_progress(id, 1.0, "done");
    store_.update(id, [&](JobRecord& r) {
      r.state = JobState::kDone;
      r.finished_at = iso_now();
      r.width = result.output.width();
      r.height = result.output.height();
      r.timings = json::array();
      for (const auto& t : result.timings) r.timings.push_back({{"stage", t.stage}, {"ms", t.milliseconds}});
      r.denoiser = {{"calls", result.denoiser.calls},
                    {"total_ms", result.denoiser.total_ms},
                    {"max_ms", result.denoiser.max_ms}};
    });
    ProgressEvent done;
    done.kind = ProgressEvent::Kind::kDone;
    done.stage = "done";
    done.fraction = 1.0;
    hub_.publish(id, event_json(done), true);
  } catch (const Error& e) {
    const bool cancelled = e.kind() == ErrorKind::kCancelled;
    fail(cancelled ? JobState::kCancelled : JobState::kFailed, to_string(e.kind()), e.what(), "");
  }
}

void MakeupService::install_routes() {
  httplib::Server& srv = *server_;

  srv.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string what = "internal error";
    try {
      if (ep) std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    send_error(res, {500, "", what, "internal"});
  });
  srv.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (!res.body.empty()) return;
    std::string message = httplib::status_message(res.status);
    send_error(res, {res.status, "", message, ""});
  });

  srv.Get("/api/schema", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(api_schema(), "application/json");
  });

  srv.Get("/api/backends", [this](const httplib::Request&, httplib::Response& res) {
    json list = json::array();
    for (const std::string& id : available_backends()) {
      json entry = {{"id", id}, {"available", false}, {"attention_hooks", false}};
      try {
        const auto b = make_backend(id);
        entry["available"] = true;
        entry["attention_hooks"] = b->supports_attention_hooks();
      } catch (const Error& e) {
        entry["detail"] = e.what();
      }
      list.push_back(entry);
    }
    send_json(res, 200, {{"default", config_.default_backend}, {"backends", list}});
  });

  srv.Get("/api/regions", [](const httplib::Request&, httplib::Response& res) {
    json mapping = json::object();
    for (const auto& [label, name] : default_label_mapping()) mapping[std::to_string(label)] = name;
    json colorable = json::array();
    for (const auto& r : known_regions()) {
      if (r != "background" && r != "other") colorable.push_back(r);
    }
    send_json(res, 200, {{"regions", known_regions()}, {"colorable", colorable}, {"default_mapping", mapping}});
  });

  srv.Post("/api/jobs", [this](const httplib::Request& req, httplib::Response& res) {
    try {
      if (!req.is_multipart_form_data()) {
        throw HttpError{400, "body", "expected multipart/form-data with image and spec parts", "parameter"};
      }
      const auto image_data = part(req, "image");
      if (!image_data) throw HttpError{400, "image", "image part is required", "parameter"};
      const RasterImage image = decode_upload(*image_data, "image", config_);

      const auto spec_text = part(req, "spec");
      if (!spec_text) throw HttpError{400, "spec", "spec part is required", "parameter"};
      ParsedSpec parsed;
      try {
        parsed = spec_from_string(*spec_text);
      } catch (const FieldError& e) {
        throw bad_request(e.field(), e);
      }
      const std::string backend_id = parsed.backend.empty() ? config_.default_backend : parsed.backend;
      std::shared_ptr<const Backend> backend;
      try {
        backend = make_backend(backend_id);
      } catch (const Error& e) {
        throw bad_request("backend", e);
      }
      MakeupSpec& spec = parsed.spec;

      const std::optional<LabelMap> labels = decode_labels(req, "labels", "mapping", image);
      const auto ref_data = part(req, "reference");
      std::optional<LabelMap> ref_labels;
      if (ref_data) {
        ReferenceInput ref;
        ref.image = decode_upload(*ref_data, "reference", config_);
        ref_labels = decode_labels(req, "reference_labels", "reference_mapping", ref.image);
        ref.labels = ref_labels;
        spec.reference = std::move(ref);
      } else if (part(req, "reference_labels")) {
        throw HttpError{400, "reference_labels", "reference labels given without a reference image", "parameter"};
      } else if (nlohmann::json::parse(*spec_text).value("reference", false)) {
        throw HttpError{400, "reference", "spec requests a reference but no reference image was uploaded", "parameter"};
      }

      try {
        spec.validate(backend->schedule().steps());
      } catch (const Error& e) {
        const std::string msg = e.detail();
        std::string field = "spec";
        if (msg.rfind("t_star", 0) == 0) field = "t_star";
        if (msg.rfind("color target region", 0) == 0) field = "color_targets";
        throw bad_request(field, e);
      }
      if (!spec.composition.concepts.empty() && !backend->supports_attention_hooks()) {
        throw HttpError{400, "backend", "backend '" + backend_id + "' cannot apply concept prompts", "configuration"};
      }

      // Regions the spec needs must exist in the (given or fixture) label map.
      if (spec.has_pixel_transform()) {
        std::optional<LabelMap> src_labels = labels ? labels : fixture_segment(image);
        if (!src_labels) {
          throw HttpError{422, "labels", "a label map is required for this image", "configuration"};
        }
        const RegionMaskSet masks = build_region_masks(*src_labels, spec.regions);
        for (std::size_t i = 0; i < spec.color_targets.size(); ++i) {
          const std::string& region = spec.color_targets[i].region;
          if (!masks.has(region) || masks.at(region).empty()) {
            throw HttpError{422, "color_targets[" + std::to_string(i) + "].region",
                            "region '" + region + "' is absent from the label map", "empty_region"};
          }
        }
        if (spec.reference) {
          std::optional<LabelMap> rl = ref_labels ? ref_labels : fixture_segment(spec.reference->image);
          if (!rl) throw HttpError{422, "reference_labels", "a reference label map is required", "configuration"};
          const RegionMaskSet ref_masks = build_region_masks(*rl, spec.regions);
          for (const char* region : {"skin", "lips", "eyes"}) {
            if (!masks.has(region) || masks.at(region).empty()) {
              throw HttpError{422, "labels", std::string("source has no '") + region + "' region", "empty_region"};
            }
            if (!ref_masks.has(region) || ref_masks.at(region).empty()) {
              throw HttpError{422, "reference_labels", std::string("reference has no '") + region + "' region",
                              "empty_region"};
            }
          }
        }
      }

      JobRecord rec;
      rec.id = new_job_id();
      rec.state = JobState::kQueued;
      rec.backend = backend_id;
      rec.spec = spec_to_json(spec);
      rec.created_at = iso_now();
      std::map<std::string, Bytes> inputs = {{"image", to_bytes(*image_data)}};
      for (const char* name : {"labels", "mapping", "reference", "reference_labels", "reference_mapping"}) {
        if (auto p = part(req, name)) inputs[name] = to_bytes(*p);
      }
      store_.create(rec, inputs);
      enqueue(rec.id);
      res.set_header("Location", "/api/jobs/" + rec.id);
      send_json(res, 202, {{"id", rec.id}, {"state", "queued"}});
    } catch (const HttpError& e) {
      send_error(res, e);
    } catch (const Error& e) {
      send_error(res, {e.kind() == ErrorKind::kIo ? 500 : 400, "", e.what(), to_string(e.kind())});
    } catch (const json::exception& e) {
      send_error(res, {400, "spec", e.what(), "parameter"});
    }
  });

  auto find = [this](const httplib::Request& req, httplib::Response& res) -> std::optional<JobRecord> {
    const std::string id = req.path_params.at("id");
    std::optional<JobRecord> rec;
    if (valid_job_id(id)) rec = store_.get(id);
    if (!rec) send_error(res, {404, "id", "no job '" + id + "'", "not_found"});
    return rec;
  };

  auto status_json = [this](const JobRecord& rec) {
    json j = rec.to_json();
    const auto [fraction, stage] = store_.progress(rec.id);
    j["progress"] = rec.state == JobState::kDone ? 1.0 : std::clamp(fraction, 0.0, 1.0);
    if (!stage.empty()) j["stage"] = stage;
    if (rec.state == JobState::kDone) j["result_url"] = "/api/jobs/" + rec.id + "/result";
    return j;
  };

  srv.Get("/api/jobs/:id", [find, status_json](const httplib::Request& req, httplib::Response& res) {
    if (auto rec = find(req, res)) send_json(res, 200, status_json(*rec));
  });

  srv.Post("/api/jobs/:id/cancel", [this, find, status_json](const httplib::Request& req, httplib::Response& res) {
    auto rec = find(req, res);
    if (!rec) return;
    if (rec->state == JobState::kDone || rec->state == JobState::kFailed || rec->state == JobState::kCancelled) {
      send_error(res, {409, "id", std::string("job already ") + to_string(rec->state), "conflict"});
      return;
    }
    {
      std::lock_guard lock(queue_mu_);
      if (auto it = cancels_.find(rec->id); it != cancels_.end()) it->second->cancel();
    }
    send_json(res, 202, status_json(*store_.get(rec->id)));
  });

  srv.Get("/api/jobs/:id/result", [this, find](const httplib::Request& req, httplib::Response& res) {
    auto rec = find(req, res);
    if (!rec) return;
    if (rec->state != JobState::kDone) {
      send_error(res, {409, "id", std::string("job is ") + to_string(rec->state) +
                                      (rec->error.empty() ? "" : ": " + rec->error), "conflict"});
      return;
    }
    const auto png = store_.result(rec->id);
    if (!png) {
      send_error(res, {410, "id", "result file is missing", "io"});
      return;
    }
    res.set_content(std::string(png->begin(), png->end()), "image/png");
  });

  srv.Get("/api/jobs/:id/events", [this, find, status_json](const httplib::Request& req, httplib::Response& res) {
    auto rec = find(req, res);
    if (!rec) return;
    const std::string id = rec->id;
    const bool finished = rec->state == JobState::kDone || rec->state == JobState::kFailed ||
                          rec->state == JobState::kCancelled;
    if (finished && !hub_.known(id)) {
      // Jobs recovered from disk have no live log; replay the terminal state.
      ProgressEvent e;
      e.kind = rec->state == JobState::kDone        ? ProgressEvent::Kind::kDone
               : rec->state == JobState::kCancelled ? ProgressEvent::Kind::kCancelled
                                                    : ProgressEvent::Kind::kFailed;
      e.stage = rec->state == JobState::kDone ? "done" : "restart";
      e.fraction = rec->state == JobState::kDone ? 1.0 : 0.0;
      e.message = rec->error;
      hub_.publish(id, event_json(e), true);
    }
    auto next = std::make_shared<std::size_t>(0);
    res.set_header("Cache-Control", "no-cache");
    res.set_chunked_content_provider("text/event-stream", [this, id, next](std::size_t, httplib::DataSink& sink) {
      auto [events, closed] = hub_.read(id, *next, std::chrono::milliseconds(1000));
      if (events.empty() && !closed) {
        static const std::string ping = ": keep-alive\n\n";
        return sink.write(ping.data(), ping.size());
      }
      for (const auto& e : events) {
        const std::string frame = "event: " + e.at("kind").get<std::string>() + "\ndata: " + e.dump() + "\n\n";
        if (!sink.write(frame.data(), frame.size())) return false;
      }
      *next += events.size();
      if (closed) sink.done();
      return true;
    });
  });
}

}  // namespace makeup
