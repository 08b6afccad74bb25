// makeup: command-line front end (color, transfer, serve, fixture, masks).

#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include "makeup/error.hpp"
#include "makeup/fixtures.hpp"
#include "makeup/image_io.hpp"
#include "makeup/pipeline.hpp"
#include "makeup/service.hpp"
#include "makeup/spec_io.hpp"

namespace fs = std::filesystem;
using namespace makeup;

namespace {

struct CommonOptions {
  std::string image;
  std::string labels;
  std::string mapping;
  std::string out;
  std::string config;
  std::string backend;
  std::string debug_dir;
  std::vector<std::string> concepts;
  std::string main_prompt;
  std::optional<double> lambda;
  std::optional<int> guidance_steps;
  std::optional<int> t_star;
  std::optional<int> inversion_steps;
  std::optional<int> reverse_steps;
  std::optional<std::uint64_t> seed;
  std::string domain;
  int timeout_ms = 0;
  bool verbose = false;
};

struct ColorOptions {
  std::string lips, skin, eyeshadow;
  std::vector<std::string> regions;  // region=#RRGGBB[@alpha]
  double alpha = 1.0;
};

struct TransferOptions {
  std::string reference, reference_labels, reference_mapping;
  int bins = 0;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--image", o.image, "Source image (PNG or JPEG)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--labels", o.labels, "Single-channel label map (defaults to the fixture segmenter)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--mapping", o.mapping, "Label mapping file (label=region lines)")->check(CLI::ExistingFile);
  cmd->add_option("--out", o.out, "Output PNG")->required();
  cmd->add_option("--config", o.config, "Spec JSON used as the base; flags override it")->check(CLI::ExistingFile);
  cmd->add_option("--backend", o.backend, "analytic | toy | toy-pool | remote[:url]");
  cmd->add_option("--concept", o.concepts, "Concept prompt \"text:weight\" (repeatable)");
  cmd->add_option("--main-prompt", o.main_prompt, "Inversion / main prompt");
  cmd->add_option("--lambda", o.lambda, "Interpolation guidance strength")->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--guidance-steps", o.guidance_steps, "Number of early reverse steps guided")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--guidance-domain", o.domain, "latent | pixel")->check(CLI::IsMember({"latent", "pixel"}));
  cmd->add_option("--t-star", o.t_star, "Early-stop timestep")->check(CLI::PositiveNumber);
  cmd->add_option("--inversion-steps", o.inversion_steps)->check(CLI::PositiveNumber);
  cmd->add_option("--reverse-steps", o.reverse_steps)->check(CLI::PositiveNumber);
  cmd->add_option("--seed", o.seed);
  cmd->add_option("--debug-dir", o.debug_dir, "Write intermediates and masks here");
  cmd->add_option("--timeout-ms", o.timeout_ms, "Abort after this many milliseconds (0 = none)")
      ->check(CLI::NonNegativeNumber);
  cmd->add_flag("-v,--verbose", o.verbose, "Print progress to stderr");
}

std::optional<LabelMap> load_labels(const std::string& grid, const std::string& mapping) {
  if (grid.empty()) {
    if (!mapping.empty()) throw Error(ErrorKind::kConfiguration, "--mapping needs a label map");
    return std::nullopt;
  }
  LabelMap lm;
  lm.grid = read_label_grid(grid);
  if (!mapping.empty()) lm.mapping = parse_label_mapping(read_text_file(mapping));
  return lm;
}

MakeupJob build_job(const CommonOptions& o) {
  ParsedSpec parsed;
  if (!o.config.empty()) parsed = spec_from_string(read_text_file(o.config));
  MakeupJob job;
  job.spec = parsed.spec;
  job.backend_id = !o.backend.empty() ? o.backend : (!parsed.backend.empty() ? parsed.backend : "toy");
  job.image = read_image(o.image);
  job.labels = load_labels(o.labels, o.mapping);
  MakeupSpec& s = job.spec;
  for (const auto& c : o.concepts) s.composition.concepts.push_back(parse_concept(c));
  if (!o.main_prompt.empty()) s.composition.main_prompt = o.main_prompt;
  if (o.lambda) s.guidance.lambda = *o.lambda;
  if (o.guidance_steps) s.guidance.apply_steps = *o.guidance_steps;
  if (o.domain == "pixel") s.guidance.domain = GuidanceDomain::kPixel;
  if (o.domain == "latent") s.guidance.domain = GuidanceDomain::kLatent;
  if (o.t_star) s.t_star = *o.t_star;
  if (o.inversion_steps) s.inversion_steps = *o.inversion_steps;
  if (o.reverse_steps) s.reverse_steps = *o.reverse_steps;
  if (o.seed) s.seed = *o.seed;
  if (!o.debug_dir.empty()) s.debug = true;
  return job;
}

void add_target(MakeupSpec& spec, const std::string& region, const std::string& color, double alpha) {
  RegionColorTarget t;
  t.region = region;
  t.mu_tgt = parse_hex_color(color);
  t.alpha = alpha;
  // A flag replaces a target for the same region from --config.
  std::erase_if(spec.color_targets, [&](const RegionColorTarget& x) { return x.region == region; });
  spec.color_targets.push_back(t);
}

void write_debug(const fs::path& dir, const JobResult& result) {
  if (!result.intermediates) return;
  fs::create_directories(dir / "masks");
  write_image(dir / "x0_hat.png", result.intermediates->x0_hat);
  write_image(dir / "x_new.png", result.intermediates->x_new);
  write_image(dir / "x0_transformed.png", result.intermediates->x0_transformed);
  for (const auto& [name, mask] : result.intermediates->masks.masks) {
    write_file(dir / "masks" / (name + ".png"), encode_mask_png(mask));
  }
  std::FILE* f = std::fopen((dir / "timings.txt").c_str(), "w");
  if (f) {
    for (const auto& t : result.timings) std::fprintf(f, "%-16s %10.3f ms\n", t.stage.c_str(), t.milliseconds);
    std::fprintf(f, "denoiser calls %d, total %.3f ms, max %.3f ms\n", result.denoiser.calls,
                 result.denoiser.total_ms, result.denoiser.max_ms);
    std::fclose(f);
  }
}

int run(const MakeupJob& job, const CommonOptions& o) {
  const auto backend = make_backend(job.backend_id);
  RunOptions opts;
  if (o.timeout_ms > 0) opts.timeout = std::chrono::milliseconds(o.timeout_ms);
  if (o.verbose) {
    opts.progress = [](const ProgressEvent& e) {
      std::fprintf(stderr, "[%5.1f%%] %s %s\n", e.fraction * 100.0, to_string(e.kind), e.stage.c_str());
    };
  }
  const JobResult result = run_makeup(job, *backend, opts);
  write_image(o.out, result.output);
  if (!o.debug_dir.empty()) write_debug(o.debug_dir, result);
  return 0;
}

MakeupService* g_service = nullptr;

void on_signal(int) {
  if (g_service) g_service->stop_listening();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Training-free diffusion makeup editing"};
  app.require_subcommand(1);

  CommonOptions color_common;
  ColorOptions color;
  auto* color_cmd = app.add_subcommand("color", "Apply RGB makeup colors to facial regions");
  add_common(color_cmd, color_common);
  color_cmd->add_option("--lips", color.lips, "Lip color #RRGGBB");
  color_cmd->add_option("--skin", color.skin, "Foundation color #RRGGBB");
  color_cmd->add_option("--eyeshadow", color.eyeshadow, "Eyeshadow color #RRGGBB");
  color_cmd->add_option("--region", color.regions, "Any region: name=#RRGGBB[@alpha] (repeatable)");
  color_cmd->add_option("--alpha", color.alpha, "Transfer scale for the color flags")->check(CLI::Range(0.0, 1.0));

  CommonOptions transfer_common;
  TransferOptions transfer;
  auto* transfer_cmd = app.add_subcommand("transfer", "Transfer makeup from a reference face");
  add_common(transfer_cmd, transfer_common);
  transfer_cmd->add_option("--reference", transfer.reference, "Reference image")->required()->check(CLI::ExistingFile);
  transfer_cmd->add_option("--reference-labels", transfer.reference_labels)->check(CLI::ExistingFile);
  transfer_cmd->add_option("--reference-mapping", transfer.reference_mapping)->check(CLI::ExistingFile);
  transfer_cmd->add_option("--bins", transfer.bins, "Histogram bins")->check(CLI::Range(2, 65536));

  ServiceConfig serve_cfg;
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP job service");
  std::optional<int> port, workers;
  std::string store_dir, serve_backend, host;
  serve_cmd->add_option("--port", port, "Listen port (MAKEUP_PORT)")->check(CLI::Range(0, 65535));
  serve_cmd->add_option("--host", host, "Listen address");
  serve_cmd->add_option("--workers", workers, "Pipeline workers (MAKEUP_WORKERS)")->check(CLI::PositiveNumber);
  serve_cmd->add_option("--store-dir", store_dir, "Job store directory (MAKEUP_STORE_DIR)");
  serve_cmd->add_option("--backend", serve_backend, "Default backend (MAKEUP_BACKEND)");

  std::string fixture_face = "a", fixture_image, fixture_labels;
  int fixture_size = 128;
  auto* fixture_cmd = app.add_subcommand("fixture", "Write a synthetic face and its label map");
  fixture_cmd->add_option("--face", fixture_face, "a | b")->check(CLI::IsMember({"a", "b", "A", "B"}));
  fixture_cmd->add_option("--size", fixture_size, "Square size in pixels (even, >= 32)");
  fixture_cmd->add_option("--out-image", fixture_image, "Image PNG")->required();
  fixture_cmd->add_option("--out-labels", fixture_labels, "Label map PNG");

  std::string masks_labels, masks_mapping, masks_dir;
  auto* masks_cmd = app.add_subcommand("masks", "Export region masks for a label map");
  masks_cmd->add_option("--labels", masks_labels)->required()->check(CLI::ExistingFile);
  masks_cmd->add_option("--mapping", masks_mapping)->check(CLI::ExistingFile);
  masks_cmd->add_option("--out-dir", masks_dir)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << "\n" << app.help();
    return 2;
  }

  try {
    if (*color_cmd) {
      MakeupJob job = build_job(color_common);
      if (!color.lips.empty()) add_target(job.spec, "lips", color.lips, color.alpha);
      if (!color.skin.empty()) add_target(job.spec, "skin", color.skin, color.alpha);
      if (!color.eyeshadow.empty()) add_target(job.spec, "eyeshadow", color.eyeshadow, color.alpha);
      for (const std::string& r : color.regions) {
        const auto eq = r.find('=');
        if (eq == std::string::npos) throw Error(ErrorKind::kParameter, "--region expects name=#RRGGBB[@alpha]");
        std::string color_text = r.substr(eq + 1);
        double alpha = color.alpha;
        if (const auto at = color_text.find('@'); at != std::string::npos) {
          try {
            alpha = std::stod(color_text.substr(at + 1));
          } catch (const std::exception&) {
            throw Error(ErrorKind::kParameter, "bad alpha in --region " + r);
          }
          color_text.resize(at);
        }
        add_target(job.spec, r.substr(0, eq), color_text, alpha);
      }
      return run(job, color_common);
    }
    if (*transfer_cmd) {
      MakeupJob job = build_job(transfer_common);
      ReferenceInput ref;
      ref.image = read_image(transfer.reference);
      ref.labels = load_labels(transfer.reference_labels, transfer.reference_mapping);
      job.spec.reference = std::move(ref);
      if (transfer.bins > 0) job.spec.histogram_bins = transfer.bins;
      return run(job, transfer_common);
    }
    if (*serve_cmd) {
      ServiceConfig cfg = ServiceConfig::from_env();
      if (port) cfg.port = *port;
      if (workers) cfg.workers = *workers;
      if (!store_dir.empty()) cfg.store_dir = store_dir;
      if (!serve_backend.empty()) cfg.default_backend = serve_backend;
      if (!host.empty()) cfg.host = host;
      MakeupService service(cfg);
      const int bound = service.bind();
      std::fprintf(stderr, "makeup service listening on %s:%d (backend %s, %d workers, store %s)\n",
                   cfg.host.c_str(), bound, cfg.default_backend.c_str(), cfg.workers, cfg.store_dir.c_str());
      g_service = &service;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      service.serve();
      g_service = nullptr;
      service.stop();
      return 0;
    }
    if (*fixture_cmd) {
      const Fixture f = synthetic_face(*parse_fixture_name(fixture_face), fixture_size, fixture_size);
      write_image(fixture_image, f.image);
      if (!fixture_labels.empty()) write_file(fixture_labels, encode_label_png(f.labels.grid));
      return 0;
    }
    if (*masks_cmd) {
      const auto labels = load_labels(masks_labels, masks_mapping);
      fs::create_directories(masks_dir);
      for (const auto& [name, mask] : build_region_masks(*labels).masks) {
        write_file(fs::path(masks_dir) / (name + ".png"), encode_mask_png(mask));
      }
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "makeup: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "makeup: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
