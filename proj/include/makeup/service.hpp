#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "makeup/image_io.hpp"
#include "makeup/pipeline.hpp"

namespace httplib {
class Server;
}

namespace makeup {

struct ServiceConfig {
  std::string host = "0.0.0.0";
  int port = 8080;
  std::string default_backend = "toy";
  int workers = 2;
  std::filesystem::path store_dir = "makeup-store";
  std::size_t max_upload_bytes = 32u << 20;   // whole request
  std::size_t max_image_bytes = 16u << 20;    // any single image part
  long long max_image_pixels = 2048LL * 2048;
  bool requeue_on_restart = true;             // queued jobs found at startup
  std::chrono::milliseconds job_timeout{10 * 60 * 1000};

  // MAKEUP_PORT, MAKEUP_BACKEND, MAKEUP_WORKERS, MAKEUP_STORE_DIR,
  // MAKEUP_REQUEUE (0/1), MAKEUP_JOB_TIMEOUT_MS over the defaults.
  static ServiceConfig from_env();
};

enum class JobState { kQueued, kRunning, kDone, kFailed, kCancelled };
const char* to_string(JobState state);
std::optional<JobState> parse_job_state(const std::string& text);

struct JobRecord {
  std::string id;
  JobState state = JobState::kQueued;
  std::string backend;
  nlohmann::json spec;
  std::string created_at, started_at, finished_at;
  std::string error, error_kind;
  int width = 0, height = 0;
  nlohmann::json timings = nlohmann::json::array();
  nlohmann::json denoiser;

  nlohmann::json to_json() const;
  static JobRecord from_json(const nlohmann::json& j);
};

// File-backed job records and inputs under <root>/jobs/<id>/. All writes go
// through one mutex (single writer); records are rewritten atomically.
class JobStore {
 public:
  explicit JobStore(std::filesystem::path root);

  // Loads every record. Running jobs become failed; queued jobs are
  // returned for re-queueing when `requeue`, otherwise failed.
  std::vector<std::string> recover(bool requeue);

  void create(const JobRecord& record, const std::map<std::string, Bytes>& inputs);
  std::optional<JobRecord> get(const std::string& id) const;
  // Applies `change` and persists. Throws kParameter on an illegal state
  // transition.
  JobRecord update(const std::string& id, const std::function<void(JobRecord&)>& change);

  void set_progress(const std::string& id, double fraction, const std::string& stage);
  std::pair<double, std::string> progress(const std::string& id) const;

  std::optional<Bytes> input(const std::string& id, const std::string& name) const;
  void write_result(const std::string& id, const Bytes& png);
  std::optional<Bytes> result(const std::string& id) const;

 private:
  std::filesystem::path job_dir(const std::string& id) const;
  void persist(const JobRecord& record) const;

  std::filesystem::path root_;
  mutable std::mutex mu_;
  std::map<std::string, JobRecord> records_;
  std::map<std::string, std::pair<double, std::string>> progress_;
};

bool legal_transition(JobState from, JobState to);

// Per-job progress event log that SSE readers block on.
class EventHub {
 public:
  void publish(const std::string& id, const nlohmann::json& event, bool terminal);
  // Events after `from`, waiting up to `wait` for new ones. Second member
  // is true once the log is closed and fully returned.
  std::pair<std::vector<nlohmann::json>, bool> read(const std::string& id, std::size_t from,
                                                    std::chrono::milliseconds wait);
  bool known(const std::string& id) const;

 private:
  struct Log {
    std::vector<nlohmann::json> events;
    bool closed = false;
  };
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::map<std::string, Log> logs_;
};

class MakeupService {
 public:
  explicit MakeupService(ServiceConfig config);
  ~MakeupService();

  MakeupService(const MakeupService&) = delete;
  MakeupService& operator=(const MakeupService&) = delete;

  // Binds (port 0 picks a free port) and starts workers. Returns the port.
  int bind();
  // Blocks serving requests until stop().
  void serve();
  void stop();
  // Makes serve() return; workers keep running until stop().
  void stop_listening();

  const ServiceConfig& config() const { return config_; }
  httplib::Server& http();

  static const std::string& api_schema();

 private:
  void install_routes();
  void worker_loop();
  void run_job(const std::string& id);
  void enqueue(const std::string& id);

  ServiceConfig config_;
  std::unique_ptr<httplib::Server> server_;
  JobStore store_;
  EventHub hub_;
  std::mutex queue_mu_;
  std::condition_variable queue_cv_;
  std::deque<std::string> queue_;
  std::map<std::string, std::shared_ptr<CancelToken>> cancels_;
  bool stopping_ = false;
  std::vector<std::thread> workers_;
};

}  // namespace makeup
