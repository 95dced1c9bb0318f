#include <doctest.h>

#include <cmath>
#include <random>

#include "sedattack/defense.hpp"
#include "sedattack/error.hpp"
#include "sedattack/scene.hpp"
#include "support.hpp"

using namespace sedattack;

namespace {

DefenseConfig kind(DefenseKind k) {
  DefenseConfig c;
  c.kind = k;
  return c;
}

// The clean clip scored as its own "adversarial" version with no target.
AttackResult unattacked(const ModelParams& params, const Waveform& clean) {
  const MelFrontendConfig fe;
  const EventPosteriors post = forward(params, frontend(clean, fe));
  const EventActivityMatrix act = binarize(post);
  TargetSpec target = build_target({}, act, fe);
  return AttackResult{clean, clean, Waveform(std::vector<double>(clean.size(), 0.0), clean.sample_rate()),
                      PerturbationMask{std::vector<std::uint8_t>(clean.size(), 0)},
                      {}, target, {}, 0, post, post, act, act, 0.02};
}

}  // namespace

TEST_SUITE("defense") {
  TEST_CASE("names and validation") {
    for (auto k : {DefenseKind::kNone, DefenseKind::kDownsample, DefenseKind::kGaussian, DefenseKind::kMeanSmooth,
                   DefenseKind::kMedianSmooth})
      CHECK(parse_defense(to_string(k)) == k);
    CHECK_THROWS_AS(parse_defense("mp3"), ValidationError);
    auto c = kind(DefenseKind::kDownsample);
    c.down_rate = 8000;
    CHECK_THROWS_AS(c.validate(8000), ValidationError);
    c.down_rate = 3000;
    CHECK_THROWS_AS(c.validate(8000), ValidationError);
    c = kind(DefenseKind::kMedianSmooth);
    c.window = 4;
    CHECK_THROWS_AS(c.validate(8000), ValidationError);
    c.window = 1;
    CHECK_THROWS_AS(c.validate(8000), ValidationError);
    c = kind(DefenseKind::kGaussian);
    c.sigma = 0.0;
    CHECK_THROWS_AS(c.validate(8000), ValidationError);
  }

  TEST_CASE("downsampling") {
    const Waveform constant(std::vector<double>(1001, 0.25), 8000);
    CHECK(downsample_defense(constant, kind(DefenseKind::kDownsample)) == constant);

    std::vector<double> alt(1000);
    for (std::size_t i = 0; i < alt.size(); ++i) alt[i] = i % 2 ? -1.0 : 1.0;
    const Waveform flat = downsample_defense(Waveform(alt, 8000), kind(DefenseKind::kDownsample));
    CHECK(flat.size() == 1000);
    for (double v : flat.samples()) CHECK(v == 1.0);

    const Waveform ramp({0.0, 0.1, 0.2, 0.3, 0.4}, 8000);
    const Waveform r = downsample_defense(ramp, kind(DefenseKind::kDownsample));
    CHECK(r[1] == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(r[3] == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(r[4] == 0.4);

    auto lp = kind(DefenseKind::kDownsample);
    lp.lowpass = true;
    const Waveform smooth = downsample_defense(Waveform(alt, 8000), lp);
    for (double v : smooth.samples()) CHECK(v == 0.0);
  }

  TEST_CASE("gaussian noise statistics") {
    const Waveform zero(std::vector<double>(32000, 0.0), 8000);
    const Waveform a = gaussian_defense(zero, kind(DefenseKind::kGaussian), 3);
    double sum = 0.0, sq = 0.0;
    for (double v : a.samples()) {
      sum += v;
      sq += v * v;
    }
    const double mean = sum / 32000, sd = std::sqrt(sq / 32000 - mean * mean);
    CHECK(sd >= 0.0095);
    CHECK(sd <= 0.0105);
    CHECK(gaussian_defense(zero, kind(DefenseKind::kGaussian), 3) == a);
    CHECK_FALSE(gaussian_defense(zero, kind(DefenseKind::kGaussian), 4) == a);

    auto tiny = kind(DefenseKind::kGaussian);
    tiny.sigma = 1e-12;
    const Waveform x({0.3, -0.2, 0.9}, 8000);
    const Waveform y = gaussian_defense(x, tiny, 1);
    for (std::size_t i = 0; i < 3; ++i) CHECK(y[i] == doctest::Approx(x[i]).epsilon(1e-9));
    const Waveform edge({1.0, -1.0}, 8000);
    const Waveform clamped = gaussian_defense(edge, kind(DefenseKind::kGaussian), 2);
    for (double v : clamped.samples()) CHECK(std::abs(v) <= 1.0);
  }

  TEST_CASE("smoothing") {
    const Waveform spike({0.0, 1.0, 0.0}, 8000);
    CHECK(smooth_defense(spike, kind(DefenseKind::kMedianSmooth))[1] == 0.0);
    CHECK(smooth_defense(spike, kind(DefenseKind::kMeanSmooth))[1] == doctest::Approx(1.0 / 3.0));
    const Waveform constant(std::vector<double>(50, -0.4), 8000);
    for (auto k : {DefenseKind::kMeanSmooth, DefenseKind::kMedianSmooth}) {
      const Waveform once = smooth_defense(constant, kind(k));
      for (double v : once.samples()) CHECK(v == doctest::Approx(-0.4).epsilon(1e-15));
      CHECK(smooth_defense(once, kind(k)) == once);
    }
    CHECK_THROWS_AS(smooth_defense(spike, kind(DefenseKind::kGaussian)), ValidationError);
  }

  TEST_CASE("every defense keeps length and rate") {
    const Scene s = generate_scene(71);
    for (auto k : {DefenseKind::kNone, DefenseKind::kDownsample, DefenseKind::kGaussian, DefenseKind::kMeanSmooth,
                   DefenseKind::kMedianSmooth}) {
      const Waveform out = apply_defense(s.audio, kind(k), 1);
      CHECK(out.size() == s.audio.size());
      CHECK(out.sample_rate() == 8000);
    }
    CHECK(apply_defense(s.audio, kind(DefenseKind::kNone), 1) == s.audio);
  }

  TEST_CASE("no defense reproduces the attack metrics exactly") {
    const auto& params = testing::quick_model();
    AttackConfig cfg;
    cfg.n_iters = 6;
    cfg.beta = 2e-3;
    std::vector<AttackResult> results;
    for (std::uint64_t s = 0; s < 3; ++s) {
      results.push_back(run_attack(params, generate_scene(80 + s).audio, {{static_cast<int>(s), 1.0, 3.0, EditValue::kMirage}},
                                   cfg, 0));
    }
    const auto ev = evaluate_under_defense(params, results, kind(DefenseKind::kNone), 5);
    REQUIRE(ev.runs.size() == 3);
    std::vector<MetricsReport> own;
    for (std::size_t i = 0; i < 3; ++i) {
      const auto r = results[i].report();
      own.push_back(r);
      CHECK(ev.runs[i].counts == r.counts);
      CHECK(ev.runs[i].ep == r.ep);
      CHECK(ev.runs[i].snr == r.snr);
    }
    CHECK(metrics_csv_fields(ev.aggregate) == metrics_csv_fields(aggregate(own)));

    const auto down = evaluate_under_defense(params, results, kind(DefenseKind::kDownsample), 5);
    for (const auto& r : down.runs) {
      CHECK(r.counts.target_size() == 63);
      CHECK(ep_identity_holds(r));
    }
    CHECK_THROWS_AS(evaluate_under_defense(params, {}, kind(DefenseKind::kNone), 5), ValidationError);
  }

  TEST_CASE("defending an unattacked clip") {
    const auto& params = testing::quick_model();
    const std::vector<AttackResult> results{unattacked(params, generate_scene(90).audio),
                                            unattacked(params, generate_scene(91).audio)};
    for (auto k : {DefenseKind::kDownsample, DefenseKind::kMedianSmooth, DefenseKind::kMeanSmooth}) {
      const auto ev = evaluate_under_defense(params, results, kind(k), 1);
      CHECK_FALSE(ev.aggregate.asr.has_value());
      // Deterministic defenses move clean and "adversarial" outputs together.
      CHECK(ev.aggregate.counts.ue == 0);
    }
    auto loud = kind(DefenseKind::kGaussian);
    loud.sigma = 0.2;
    const auto ev = evaluate_under_defense(params, results, loud, 1);
    CHECK_FALSE(ev.aggregate.asr.has_value());
    CHECK(ev.aggregate.counts.ue > 0);
  }
}
