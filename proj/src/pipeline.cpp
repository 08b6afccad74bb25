#include "makeup/pipeline.hpp"

#include <cstdlib>
#include <mutex>

#include "makeup/analytic_backend.hpp"
#include "makeup/error.hpp"
#include "makeup/fixtures.hpp"
#include "makeup/remote_backend.hpp"
#include "makeup/toy_backend.hpp"

namespace makeup {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

// Progress weight of each stage; fractions are cumulative sums.
const std::map<std::string, double>& stage_weights() {
  static const std::map<std::string, double> w = {
      {"encode", 0.02},  {"invert", 0.35},   {"tweedie", 0.02}, {"decode_estimate", 0.02},
      {"segment", 0.03}, {"customize", 0.05}, {"renoise", 0.02}, {"reverse", 0.45},
      {"decode", 0.04}};
  return w;
}

// Execution guard shared by the stage loop and the denoiser wrapper.
struct Guard {
  std::shared_ptr<const CancelToken> cancel;
  std::optional<Clock::time_point> deadline;
  std::chrono::milliseconds budget{0};

  void check() const {
    if (cancel && cancel->cancelled()) throw Error(ErrorKind::kCancelled, "job cancelled");
    if (deadline && Clock::now() > *deadline) {
      throw Error(ErrorKind::kTimeout, "job exceeded its " + std::to_string(budget.count()) + " ms budget");
    }
  }
};

// Forwards to the job's backend, checking the guard before every denoiser
// call and recording per-call latency.
class GuardedBackend final : public Backend {
 public:
  GuardedBackend(const Backend& inner, const Guard& guard, DenoiserStats& stats)
      : inner_(inner), guard_(guard), stats_(stats) {}

  std::string id() const override { return inner_.id(); }
  const NoiseSchedule& schedule() const override { return inner_.schedule(); }
  Shape latent_shape(int h, int w) const override { return inner_.latent_shape(h, w); }
  Latent encode(const RasterImage& image) const override { return inner_.encode(image); }
  RasterImage decode(const Latent& z) const override { return inner_.decode(z); }
  double codec_tolerance() const override { return inner_.codec_tolerance(); }
  Conditioning encode_text(std::string_view prompt) const override { return inner_.encode_text(prompt); }
  bool supports_attention_hooks() const override { return inner_.supports_attention_hooks(); }

  Latent predict_eps(const Latent& z_t, int t, const Conditioning& c, const AttentionHook* hook) const override {
    guard_.check();
    const auto start = Clock::now();
    Latent eps = inner_.predict_eps(z_t, t, c, hook);
    const double ms = ms_since(start);
    ++stats_.calls;
    stats_.total_ms += ms;
    stats_.max_ms = std::max(stats_.max_ms, ms);
    return eps;
  }

 private:
  const Backend& inner_;
  const Guard& guard_;
  DenoiserStats& stats_;
};

LabelMap labels_or_fixture(const std::optional<LabelMap>& labels, const RasterImage& image,
                           const char* what) {
  if (labels) {
    if (!labels->grid.same_dims(image.height(), image.width())) {
      throw Error(ErrorKind::kShape, std::string(what) + " label map is " + std::to_string(labels->grid.height) +
                                         "x" + std::to_string(labels->grid.width) + " but the image is " +
                                         std::to_string(image.height()) + "x" + std::to_string(image.width()));
    }
    return *labels;
  }
  if (auto seg = fixture_segment(image)) return *seg;
  throw Error(ErrorKind::kConfiguration,
              std::string(what) + " has no label map and the fixture segmenter does not recognise it");
}

}  // namespace

const char* to_string(ProgressEvent::Kind kind) {
  switch (kind) {
    case ProgressEvent::Kind::kProgress: return "progress";
    case ProgressEvent::Kind::kDone: return "done";
    case ProgressEvent::Kind::kFailed: return "failed";
    case ProgressEvent::Kind::kCancelled: return "cancelled";
  }
  return "unknown";
}

void MakeupSpec::validate(int schedule_steps) const {
  if (color_targets.empty() && !reference && composition.concepts.empty()) {
    throw Error(ErrorKind::kParameter, "spec needs color_targets, a reference or concepts");
  }
  if (t_star < 1 || t_star > schedule_steps) {
    throw Error(ErrorKind::kParameter, "t_star " + std::to_string(t_star) + " outside [1, " +
                                           std::to_string(schedule_steps) + "]");
  }
  if (inversion_steps < 1) throw Error(ErrorKind::kParameter, "inversion_steps must be >= 1");
  if (reverse_steps < 1) throw Error(ErrorKind::kParameter, "reverse_steps must be >= 1");
  if (histogram_bins < 2 || histogram_bins > 65536) throw Error(ErrorKind::kParameter, "histogram_bins out of range");
  for (const auto& t : color_targets) {
    if (!is_known_region(t.region) || t.region == "background" || t.region == "other") {
      throw Error(ErrorKind::kUnknownRegion, "color target region '" + t.region + "' is not supported");
    }
    t.validate();
  }
  composition.validate();
  guidance.validate();
  if (regions.eyeshadow_iterations < 0) throw Error(ErrorKind::kParameter, "eyeshadow iterations must be >= 0");
  if (!(regions.eyeshadow_decay > 0.0) || !(regions.lip_decay > 0.0)) {
    throw Error(ErrorKind::kParameter, "decay rates must be positive");
  }
  if (regions.eyeshadow_kernel.height < 1 || regions.eyeshadow_kernel.width < 1) {
    throw Error(ErrorKind::kParameter, "kernel size must be positive");
  }
}

const std::vector<std::string>& pipeline_stages() {
  static const std::vector<std::string> stages = {"encode",  "invert",    "tweedie", "decode_estimate",
                                                  "segment", "customize", "renoise", "reverse",
                                                  "decode"};
  return stages;
}

RegionMaskSet segment_or_load(const MakeupJob& job) {
  return build_region_masks(labels_or_fixture(job.labels, job.image, "source"), job.spec.regions);
}

RasterImage apply_transform(const RasterImage& image, const RegionMaskSet& masks, const MakeupSpec& spec) {
  RasterImage out = image;
  if (spec.reference) {
    const RegionMaskSet ref_masks = build_region_masks(
        labels_or_fixture(spec.reference->labels, spec.reference->image, "reference"), spec.regions);
    ReferenceOptions opts;
    opts.bins = spec.histogram_bins;
    opts.regions = spec.regions;
    out = transfer_reference(out, masks, spec.reference->image, ref_masks, opts);
  }
  if (!spec.color_targets.empty()) out = compose_regions(out, spec.color_targets, masks);
  return out;
}

JobResult run_makeup(const MakeupJob& job, const Backend& backend, const RunOptions& options) {
  const auto& weights = stage_weights();
  std::string current = "validate";
  double done_fraction = 0.0;
  auto emit = [&](const ProgressEvent& e) {
    if (options.progress) options.progress(e);
  };
  auto step_event = [&](int step, int steps) {
    const double f = done_fraction + weights.at(current) * (step + 1) / std::max(steps, 1);
    emit({ProgressEvent::Kind::kProgress, current, std::min(f, 1.0), step + 1, steps, {}});
  };

  Guard guard;
  guard.cancel = options.cancel;
  if (options.timeout) {
    guard.budget = *options.timeout;
    guard.deadline = Clock::now() + *options.timeout;
  }

  JobResult result;
  GuardedBackend guarded(backend, guard, result.denoiser);
  const NoiseSchedule& schedule = backend.schedule();

  auto begin = [&](const std::string& stage) {
    guard.check();
    current = stage;
    result.stage_log.push_back(stage);
  };
  Clock::time_point stage_start;
  auto finish = [&] {
    result.timings.push_back({current, ms_since(stage_start)});
    done_fraction += weights.at(current);
    emit({ProgressEvent::Kind::kProgress, current, std::min(done_fraction, 1.0), 0, 0, {}});
  };

  try {
    job.spec.validate(schedule.steps());
    if (job.image.height() == 0 || job.image.width() == 0) throw Error(ErrorKind::kShape, "source image is empty");
    if (!job.image.all_finite() || !job.image.in_unit_range()) {
      throw Error(ErrorKind::kParameter, "source image must be finite and within [0, 1]");
    }
    if (job.labels && !job.labels->grid.same_dims(job.image.height(), job.image.width())) {
      throw Error(ErrorKind::kShape, "image and label map sizes differ");
    }
    const MakeupSpec& spec = job.spec;
    std::unique_ptr<CompositionHook> hook;
    if (!spec.composition.concepts.empty()) {
      if (!backend.supports_attention_hooks()) {
        throw Error(ErrorKind::kConfiguration,
                    "backend '" + backend.id() + "' cannot apply attention composition (concepts given)");
      }
    }

    begin("encode");
    stage_start = Clock::now();
    const Latent z0 = guarded.encode(job.image);
    const Conditioning cond = guarded.encode_text(spec.composition.main_prompt);
    if (!spec.composition.concepts.empty()) hook = std::make_unique<CompositionHook>(guarded, spec.composition);
    finish();

    begin("invert");
    stage_start = Clock::now();
    InversionOptions inv_opts;
    inv_opts.on_step = step_event;
    const InversionTrace trace = invert_to(guarded, schedule, z0, spec.t_star, spec.inversion_steps, cond, inv_opts);
    finish();

    begin("tweedie");
    stage_start = Clock::now();
    const Latent z0_hat = tweedie_denoise(schedule, trace.z_tstar, trace.t_star, trace.eps_at_tstar);
    finish();

    begin("decode_estimate");
    stage_start = Clock::now();
    const RasterImage x0_hat = guarded.decode(z0_hat);
    finish();

    begin("segment");
    stage_start = Clock::now();
    RegionMaskSet masks;
    if (spec.has_pixel_transform() || job.labels) masks = segment_or_load(job);
    finish();

    begin("customize");
    stage_start = Clock::now();
    RasterImage x_new = x0_hat;
    RasterImage x0_t = job.image;
    if (spec.has_pixel_transform()) {
      x_new = apply_transform(x0_hat, masks, spec);
      x0_t = apply_transform(job.image, masks, spec);
    }
    GuidanceTarget target;
    target.z0_prime = guarded.encode(x0_t);
    if (spec.guidance.domain == GuidanceDomain::kPixel) target.transformed_image = x0_t;
    finish();

    begin("renoise");
    stage_start = Clock::now();
    const Latent z_start = renoise(schedule, guarded.encode(x_new), trace);
    finish();

    begin("reverse");
    stage_start = Clock::now();
    const Latent z_final = guided_sample(guarded, schedule, z_start, spec.t_star, spec.reverse_steps, cond, target,
                                         spec.guidance, hook.get(), step_event);
    finish();

    begin("decode");
    stage_start = Clock::now();
    result.output = guarded.decode(z_final);
    result.output.clamp();
    if (result.output.height() != job.image.height() || result.output.width() != job.image.width()) {
      throw Error(ErrorKind::kShape, "decoded output size differs from the input");
    }
    if (!result.output.all_finite()) throw Error(ErrorKind::kNumeric, "output contains non-finite values");
    finish();

    if (spec.debug) result.intermediates = Intermediates{x0_hat, x_new, x0_t, masks};
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kCancelled) {
      emit({ProgressEvent::Kind::kCancelled, current, done_fraction, 0, 0, e.detail()});
      result.status = "cancelled";
      throw;
    }
    const Error annotated = e.annotated("stage " + current);
    emit({ProgressEvent::Kind::kFailed, current, done_fraction, 0, 0, annotated.what()});
    throw annotated;
  } catch (const std::exception& e) {
    const Error wrapped = Error(ErrorKind::kBackend, e.what()).annotated("stage " + current);
    emit({ProgressEvent::Kind::kFailed, current, done_fraction, 0, 0, wrapped.what()});
    throw wrapped;
  }
  emit({ProgressEvent::Kind::kDone, "done", 1.0, 0, 0, {}});
  return result;
}

std::vector<ProgressEvent> progress_stream(const MakeupJob& job, const Backend& backend,
                                           std::shared_ptr<const CancelToken> cancel) {
  std::vector<ProgressEvent> events;
  RunOptions opts;
  opts.cancel = std::move(cancel);
  opts.progress = [&](const ProgressEvent& e) { events.push_back(e); };
  try {
    run_makeup(job, backend, opts);
  } catch (const Error&) {
  }
  return events;
}

std::vector<std::string> available_backends() { return {"analytic", "toy", "toy-pool", "remote"}; }

std::shared_ptr<const Backend> make_backend(const std::string& id) {
  static std::mutex mu;
  static std::map<std::string, std::shared_ptr<const Backend>> cache;
  std::lock_guard lock(mu);
  if (auto it = cache.find(id); it != cache.end()) return it->second;

  std::shared_ptr<const Backend> backend;
  if (id == "analytic") {
    backend = std::make_shared<AnalyticGaussianBackend>(default_schedule());
  } else if (id == "toy") {
    backend = std::make_shared<ToyAttnBackend>(default_schedule());
  } else if (id == "toy-pool") {
    ToyAttnConfig cfg;
    cfg.codec = ToyCodec::kPool2;
    backend = std::make_shared<ToyAttnBackend>(default_schedule(), cfg);
  } else if (id == "remote" || id.rfind("remote:", 0) == 0) {
    std::string url = id.size() > 7 ? id.substr(7) : "";
    if (url.empty()) {
      const char* env = std::getenv("MAKEUP_REMOTE_URL");
      if (!env || !*env) {
        throw Error(ErrorKind::kConfiguration, "remote backend needs MAKEUP_REMOTE_URL or remote:<url>");
      }
      url = env;
    }
    backend = std::make_shared<RemoteBackend>(default_schedule(), parse_endpoint_url(url));
  } else {
    throw Error(ErrorKind::kConfiguration, "unknown backend '" + id + "'");
  }
  cache[id] = backend;
  return backend;
}

}  // namespace makeup
