#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "makeup/backend.hpp"
#include "makeup/color_transfer.hpp"
#include "makeup/harmonize.hpp"
#include "makeup/image.hpp"
#include "makeup/reference_transfer.hpp"
#include "makeup/regions.hpp"

namespace makeup {

struct ReferenceInput {
  RasterImage image;
  std::optional<LabelMap> labels;  // fixture segmenter when unset
};

struct MakeupSpec {
  std::vector<RegionColorTarget> color_targets;
  std::optional<ReferenceInput> reference;
  CompositionConfig composition;
  GuidanceConfig guidance;
  int t_star = 300;
  int inversion_steps = 20;
  int reverse_steps = 30;
  std::uint64_t seed = 0;  // recorded; every sampling path here is deterministic
  RegionConfig regions;
  int histogram_bins = 256;
  bool debug = false;

  // kParameter unless the spec has at least one transform, every field is in
  // range and t_star <= schedule_steps.
  void validate(int schedule_steps) const;
  bool has_pixel_transform() const { return !color_targets.empty() || reference.has_value(); }
};

struct MakeupJob {
  RasterImage image;
  std::optional<LabelMap> labels;  // fixture segmenter when unset
  MakeupSpec spec;
  std::string backend_id = "toy";
};

struct StageTiming {
  std::string stage;
  double milliseconds = 0.0;
};

struct DenoiserStats {
  int calls = 0;
  double total_ms = 0.0;
  double max_ms = 0.0;
};

struct Intermediates {
  RasterImage x0_hat;  // D(z0_hat(t*))
  RasterImage x_new;   // T(x0_hat)
  RasterImage x0_transformed;  // T(x0)
  RegionMaskSet masks;
};

struct JobResult {
  RasterImage output;
  std::optional<Intermediates> intermediates;  // only with spec.debug
  std::vector<StageTiming> timings;
  std::vector<std::string> stage_log;
  DenoiserStats denoiser;
  std::string status = "done";
};

struct ProgressEvent {
  enum class Kind { kProgress, kDone, kFailed, kCancelled };
  Kind kind = Kind::kProgress;
  std::string stage;
  double fraction = 0.0;
  int step = 0;    // within the stage, when it has steps
  int steps = 0;
  std::string message;
};

const char* to_string(ProgressEvent::Kind kind);

using ProgressSink = std::function<void(const ProgressEvent&)>;

// Shared cancellation flag checked between stages and before every
// denoiser call.
class CancelToken {
 public:
  void cancel() { flag_.store(true); }
  bool cancelled() const { return flag_.load(); }

 private:
  std::atomic<bool> flag_{false};
};

struct RunOptions {
  ProgressSink progress;
  std::shared_ptr<const CancelToken> cancel;
  std::optional<std::chrono::milliseconds> timeout;
};

// Stage names in execution order.
const std::vector<std::string>& pipeline_stages();

// The full edit: encode, invert to t*, Tweedie-decode, segment, customise
// in pixel space, re-noise, guided reverse sampling with attention
// composition, decode. Errors are annotated with the stage name; a
// cancelled job throws kCancelled and a blown budget kTimeout, after the
// matching terminal event has been emitted.
JobResult run_makeup(const MakeupJob& job, const Backend& backend, const RunOptions& options = {});

// Region masks for the job's label map, or for the fixture segmenter's.
RegionMaskSet segment_or_load(const MakeupJob& job);

// The pixel transform T shared by x_new = T(x0_hat) and z0' = E(T(x0)):
// reference transfer first, then colour targets.
RasterImage apply_transform(const RasterImage& image, const RegionMaskSet& masks, const MakeupSpec& spec);

// Runs the job and returns the event sequence it emitted (testing aid).
std::vector<ProgressEvent> progress_stream(const MakeupJob& job, const Backend& backend,
                                           std::shared_ptr<const CancelToken> cancel = nullptr);

// Backend registry: "analytic", "toy", "toy-pool" and "remote" (endpoint
// from MAKEUP_REMOTE_URL, or "remote:http://host:port/path").
std::vector<std::string> available_backends();
std::shared_ptr<const Backend> make_backend(const std::string& id);

}  // namespace makeup
