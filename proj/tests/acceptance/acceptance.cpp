// Acceptance checks: one PASS/FAIL line per criterion, each with its
// tolerance and runtime limit. Exit status is nonzero when any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "makeup/analytic_backend.hpp"
#include "makeup/color_transfer.hpp"
#include "makeup/fixtures.hpp"
#include "makeup/harmonize.hpp"
#include "makeup/pipeline.hpp"
#include "makeup/reference_transfer.hpp"
#include "makeup/regions.hpp"
#include "makeup/schedule.hpp"
#include "makeup/toy_backend.hpp"
#include "oracles.hpp"
#include "service_support.hpp"

using namespace makeup;

namespace {

struct Outcome {
  bool ok = true;
  std::ostringstream detail;

  void require(bool cond, const std::string& what) {
    if (!cond && ok) {
      ok = false;
      detail << "failed: " << what << "; ";
    }
  }
};

struct Criterion {
  std::string name;
  double limit_s;
  std::function<void(Outcome&)> run;
};

Conditioning plain_cond(const Backend& b) { return b.encode_text("a photo of a woman"); }

void inverse_pair(Outcome& o) {
  const auto s = default_schedule();
  testing::Gen g(1001);
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    const int t_to = g.integer(1, 1000);
    const int t_from = g.integer(0, t_to - 1);
    const auto z = g.latent({8, 8, 3}, g.uniform(0.1, 4.0));
    const auto eps = g.latent(z.shape());
    const auto back = ddim_step(s, ddim_invert_step(s, z, t_from, t_to, eps), t_to, t_from, eps);
    worst = std::max(worst, testing::rel_l2(back, z));
  }
  o.detail << "max rel L2 " << worst << " (tol 1e-10)";
  o.require(worst < 1e-10, "inverse pair");
}

void tweedie_oracle(Outcome& o) {
  const auto s = default_schedule();
  const double mu = 0.3, sd = 1.7;
  AnalyticGaussianBackend b(s, {.mean = mu, .sigma = sd});
  testing::Gen g(1002);
  double worst = 0.0;
  for (int t : {1, 50, 120, 250, 400, 550, 700, 850, 950, 1000}) {
    for (int k = 0; k < 10; ++k) {
      const auto z = g.latent({4, 4, 3}, 2.0);
      const auto est = tweedie_denoise(s, z, t, b.predict_eps(z, t, plain_cond(b)));
      // E[z0 | z_t] for z0 ~ N(mu, sd^2), z_t = sqrt(ab) z0 + sqrt(1 - ab) n.
      const long double ab = s.alpha_bar(t);
      for (std::size_t i = 0; i < z.size(); ++i) {
        const long double v = sd * sd;
        const long double post = (v * std::sqrt(ab) * z[i] + (1.0L - ab) * mu) / (ab * v + 1.0L - ab);
        worst = std::max(worst, static_cast<double>(std::fabs(est[i] - post)));
      }
    }
  }
  o.detail << "max abs " << worst << " over 100 states x 10 timesteps (tol 1e-10)";
  o.require(worst < 1e-10, "posterior mean");
}

void early_stop_round_trip(Outcome& o) {
  const auto s = default_schedule();
  AnalyticGaussianBackend b(s, {.mean = 0.0, .sigma = 1.0});
  testing::Gen g(1003);
  const auto z0 = g.latent({16, 16, 3});
  const auto c = plain_cond(b);
  auto err = [&](int t_star, int steps) {
    const auto trace = invert_to(b, s, z0, t_star, steps, c);
    return testing::rel_l2(sample_from(b, s, trace.z_tstar, t_star, steps, c), z0);
  };
  const double e = err(400, 20);
  o.detail << "t*=400/20 steps rel L2 " << e << " (tol 1e-3)";
  o.require(e < 1e-3, "round trip");
  double prev = 1e9;
  o.detail << "; steps 5/10/20/40:";
  for (int steps : {5, 10, 20, 40}) {
    const double v = err(400, steps);
    o.detail << " " << v;
    o.require(v <= prev, "monotone in steps");
    prev = v;
  }
  prev = 0.0;
  o.detail << "; t* 200/400/1000:";
  for (int t : {200, 400, 1000}) {
    const double v = err(t, t / 20);
    o.detail << " " << v;
    o.require(v >= prev, "monotone in t*");
    prev = v;
  }
}

void color_exactness(Outcome& o) {
  testing::Gen g(1004);
  const auto img = g.image(64, 64, 0.3, 0.7);
  const auto mask = testing::rect_mask(64, 64, 10, 12, 30, 36);
  const RegionColorTarget tgt{"lips", {0.45, 0.5, 0.55}, 1.0};
  const auto out = apply_rgb_transfer(img, mask, tgt);
  const auto st = region_stats(out, mask);
  double worst = 0.0;
  for (int c = 0; c < 3; ++c) worst = std::max(worst, std::abs(st.mu[c] - tgt.mu_tgt[c]));
  o.detail << "alpha=1 mean error " << worst << " (tol 1e-6)";
  o.require(worst < 1e-6, "mean reaches target");
  RegionColorTarget off = tgt;
  off.alpha = 0.0;
  const bool same = apply_rgb_transfer(img, mask, off) == img;
  o.detail << "; alpha=0 bitwise identity " << (same ? "yes" : "no");
  o.require(same, "alpha=0 identity");
}

void histogram_matching(Outcome& o) {
  testing::Gen g(1005);
  int exact = 0;
  const int trials = 40;
  for (int i = 0; i < trials; ++i) {
    const int h = g.integer(2, 8), w = g.integer(2, 8);
    const auto src = g.image(h, w);
    const auto ref = g.image(g.integer(2, 8), g.integer(2, 8));
    auto sm = g.sparse_mask(h, w, g.uniform(0.3, 1.0));
    auto rm = g.sparse_mask(ref.height(), ref.width(), g.uniform(0.3, 1.0));
    sm.weights.at(0, 0) = 1.0;
    rm.weights.at(0, 0) = 1.0;
    const int bins = i % 2 ? 256 : g.integer(2, 64);
    exact += histogram_match(src, sm, ref, rm, bins) == testing::cdf_oracle(src, sm, ref, rm, bins);
  }
  o.detail << exact << "/" << trials << " regions (<= 64 px) equal the sort-based oracle";
  o.require(exact == trials, "oracle equality");
  const auto fx = synthetic_face(FixtureFace::kA, 64, 64);
  const auto lips = labelmap_to_mask(fx.labels, "lips");
  const double self = max_abs_difference(histogram_match(fx.image, lips, fx.image, lips, 256), fx.image);
  o.detail << "; self-match max-abs " << self << " (tol 1/256)";
  o.require(self <= 1.0 / 256.0, "self-match");
}

void mask_engineering(Outcome& o) {
  testing::Gen g(1006);
  int equal = 0;
  for (int i = 0; i < 20; ++i) {
    const int size = 2 * g.integer(16, 48);
    const auto fx = synthetic_face(i % 2 ? FixtureFace::kB : FixtureFace::kA, size, size);
    const auto eyes = labelmap_to_mask(fx.labels, "eyes");
    const int kh = i < 10 ? 12 : g.integer(2, 13), kw = i < 10 ? 7 : g.integer(2, 9);
    const int iters = i < 10 ? 2 : g.integer(1, 3);
    const auto got = testing::to_set(build_eyeshadow_mask(eyes, {KernelShape::kCross, kh, kw}, iters));
    equal += got == testing::eyeshadow_oracle(testing::to_set(eyes), true, kh, kw, iters, -(kh / 2), 0, size, size);
  }
  o.detail << equal << "/20 fixtures equal the set-operation oracle";
  o.require(equal == 20, "eyeshadow oracle");

  long long violations = 0;
  for (int i = 0; i < 20; ++i) {
    const auto m = g.blob_mask(40, 40, 3, 25);
    const auto s = gradation_smooth(m, g.uniform(0.05, 3.0));
    const auto d = testing::bfs_distance(m);
    for (int y = 0; y < 40; ++y)
      for (int x = 0; x < 40; ++x)
        for (const auto& [dy, dx] : {std::pair{1, 0}, {-1, 0}, {0, 1}, {0, -1}}) {
          if (!s.weights.contains(y + dy, x + dx)) continue;
          if (d.at(y + dy, x + dx) < d.at(y, x) && s.weights.at(y + dy, x + dx) > s.weights.at(y, x)) ++violations;
        }
  }
  o.detail << "; outward-monotonicity violations " << violations;
  o.require(violations == 0, "gradation monotone");
}

void composition_properties(Outcome& o) {
  ToyAttnBackend b(default_schedule());
  testing::Gen g(1007);
  CompositionConfig zero_cfg;
  zero_cfg.concepts = {{"glossy lips", 0.0}, {"smoky eyes", 0.0}};
  const CompositionHook zero(b, zero_cfg);
  int identical = 0;
  for (int i = 0; i < 10; ++i) {
    const auto z = g.latent({6, 6, 3});
    const int t = g.integer(1, 1000);
    identical += b.predict_eps(z, t, plain_cond(b), &zero) == b.predict_eps(z, t, plain_cond(b));
  }
  o.detail << identical << "/10 zero-weight forward passes bit-identical";
  o.require(identical == 10, "zero-weight collapse");

  double worst = 0.0;
  const auto concept_cond = b.encode_text("glossy lips");
  for (int i = 0; i < 10; ++i) {
    const auto z = g.latent({5, 6, 3});
    const auto q = b.layer_queries(z, g.integer(1, 1000), 0);
    const auto& layer = b.layers()[0];
    const auto c = plain_cond(b);
    const AttentionCall call{0, q, layer.key, layer.value, c, static_cast<double>(b.config().attn_dim)};
    auto at = [&](double a) { return CompositionHook({{concept_cond, a}}).attend(call); };
    const Eigen::MatrixXd base = at(0.0);
    const Eigen::MatrixXd d1 = at(1.0) - base;
    for (double a : {0.5, -0.3, 2.0}) {
      const Eigen::MatrixXd da = at(a) - base;
      worst = std::max(worst, (da - a * d1).cwiseAbs().maxCoeff());
    }
  }
  o.detail << "; linearity max deviation " << worst << " (tol 1e-10)";
  o.require(worst < 1e-10, "linearity");
}

void guidance_properties(Outcome& o) {
  testing::Gen g(1008);
  const auto a = g.latent({4, 4, 3}), t = g.latent({4, 4, 3});
  const bool ends = interp_guided_estimate(a, t, 0.0) == a && interp_guided_estimate(a, t, 1.0) == t;
  o.detail << "endpoints exact " << (ends ? "yes" : "no");
  o.require(ends, "endpoints");

  double worst = 0.0;
  for (double lam : {0.1, 0.15, 0.5, 0.8}) {
    const auto x = g.latent({32}), y = g.latent({32});
    const double w = lam / (1.0 - lam);
    Latent z({32});
    const double step = 0.9 / (2.0 * (1.0 + w));
    for (int it = 0; it < 300; ++it)
      for (std::size_t i = 0; i < z.size(); ++i) z[i] -= step * (2.0 * (z[i] - x[i]) + 2.0 * w * (z[i] - y[i]));
    worst = std::max(worst, max_abs_difference(interp_guided_estimate(x, y, lam), z));
  }
  o.detail << "; vs numerical minimiser " << worst << " (tol 1e-8)";
  o.require(worst < 1e-8, "minimiser");

  AnalyticGaussianBackend b(default_schedule());
  const auto start = g.latent({8, 8, 3});
  const GuidanceTarget target{g.latent({8, 8, 3}, 0.3), std::nullopt};
  const auto out = guided_sample(b, b.schedule(), start, 300, 30, plain_cond(b), target,
                                 GuidanceConfig{.lambda = 1.0, .apply_steps = 30});
  const double fixed = max_abs_difference(out, target.z0_prime);
  o.detail << "; full-lambda distance to z0' " << fixed << " (tol 1e-6)";
  o.require(fixed < 1e-6, "fixed point");
}

void end_to_end(Outcome& o) {
  const auto fx = synthetic_face(FixtureFace::kA, 64, 64);
  MakeupJob job;
  job.image = fx.image;
  job.labels = fx.labels;
  job.spec.color_targets = {{"lips", parse_hex_color("#B03A4A"), 0.0}};
  job.spec.guidance.lambda = 0.0;
  const double floor = max_abs_difference(run_makeup(job, *make_backend("analytic")).output, job.image);
  o.detail << "identity floor max-abs " << floor << " (tol 1e-3)";
  o.require(floor < 1e-3, "identity floor");

  job.spec = MakeupSpec{};
  job.spec.color_targets = {{"lips", parse_hex_color("#B03A4A"), 0.8}};
  const auto out = run_makeup(job, *make_backend("toy")).output;
  const auto masks = segment_or_load(job);
  const auto& lips = masks.at("lips");
  const auto goal_img = apply_transform(job.image, masks, job.spec);
  double gap_before = 0.0, gap_after = 0.0, outside = 0.0;
  for (int c = 0; c < 3; ++c) {
    double wsum = 0.0, before = 0.0, after = 0.0, goal = 0.0;
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) {
        const double w = lips.weights.at(y, x);
        wsum += w;
        before += w * job.image.at(y, x, c);
        after += w * out.at(y, x, c);
        goal += w * goal_img.at(y, x, c);
        if (w == 0.0) outside = std::max(outside, std::abs(out.at(y, x, c) - job.image.at(y, x, c)));
      }
    gap_before = std::max(gap_before, std::abs(before - goal) / wsum);
    gap_after = std::max(gap_after, std::abs(after - goal) / wsum);
  }
  o.detail << "; lip gap " << gap_before << " -> " << gap_after << " (tol 10%), non-lip change " << outside
           << " (tol 1e-2)";
  o.require(gap_after < 0.1 * gap_before, "lip mean");
  o.require(outside < 1e-2, "non-lip pixels");
}

void service_contract(Outcome& o) {
  const testing::SchemaCheck schema(nlohmann::json::parse(MakeupService::api_schema()));
  testing::RunningService svc(testing::temp_dir("acceptance-service"));
  auto c = svc.client();
  testing::Gen g(1010);
  int server_errors = 0, malformed_bodies = 0;
  const int cases = 100;
  for (int i = 0; i < cases; ++i) {
    const auto r = testing::send(c, testing::fuzz_submission(g, 32));
    if (!r || r->status >= 500) {
      ++server_errors;
      continue;
    }
    const auto body = testing::body_json(r);
    if (!schema.valid(body, r->status == 202 ? "submit_response" : "error")) ++malformed_bodies;
  }
  o.detail << cases << " fuzzed submissions: " << server_errors << " 5xx, " << malformed_bodies
           << " off-schema bodies";
  o.require(server_errors == 0, "no 5xx");
  o.require(malformed_bodies == 0, "schema-valid responses");

  const auto r = c.Post("/api/jobs", testing::lip_submission(64, {{"color_targets",
                                                                   {{{"region", "lips"}, {"color", "#B03A4A"}}}},
                                                                  {"backend", "toy"}}));
  o.require(r && r->status == 202, "valid submission accepted");
  if (!r || r->status != 202) return;
  const std::string id = testing::body_json(r)["id"];
  const auto status = testing::wait_finished(c, id);
  o.require(status.value("state", "") == "done" && schema.valid(status, "job_status"), "job completes");
  const auto png = c.Get("/api/jobs/" + id + "/result");
  bool good_png = false;
  if (png && png->status == 200) {
    const Bytes bytes(png->body.begin(), png->body.end());
    const auto img = decode_image(bytes);
    good_png = sniff_image_format(bytes) == "png" && img.width() == 64 && img.height() == 64;
  }
  o.detail << "; valid job " << status.value("state", "?") << ", result PNG " << (good_png ? "ok" : "bad");
  o.require(good_png, "result PNG");
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {"inverse-pair exactness", 5, inverse_pair},
      {"tweedie oracle", 5, tweedie_oracle},
      {"early-stop round trip", 30, early_stop_round_trip},
      {"color transfer exactness", 2, color_exactness},
      {"histogram matching", 5, histogram_matching},
      {"mask engineering", 10, mask_engineering},
      {"attention composition properties", 5, composition_properties},
      {"guided interpolation properties", 10, guidance_properties},
      {"end-to-end identity floor and lip edit", 60, end_to_end},
      {"service contract", 60, service_contract},
  };
  int failures = 0;
  for (const auto& cr : criteria) {
    Outcome o;
    const auto start = std::chrono::steady_clock::now();
    try {
      cr.run(o);
    } catch (const std::exception& e) {
      o.ok = false;
      o.detail << "exception: " << e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs < cr.limit_s;
    const bool pass = o.ok && in_time;
    failures += !pass;
    std::printf("%s  %-40s %s [%.2f s, limit %.0f s%s]\n", pass ? "PASS" : "FAIL", cr.name.c_str(),
                o.detail.str().c_str(), secs, cr.limit_s, in_time ? "" : ", exceeded");
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
