// Checks that need the full training recipe or long attacks.

#include <doctest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "sedattack/attack.hpp"
#include "sedattack/experiment.hpp"
#include "sedattack/seed.hpp"
#include "support.hpp"

using namespace sedattack;

namespace {

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(testing::read_file(p));
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::vector<std::string> fields;
    std::istringstream ls(line);
    for (std::string f; std::getline(ls, f, ',');) fields.push_back(f);
    rows.push_back(fields);
  }
  return rows;
}

// Reference recipe on disk, with a smaller test split for the sweeps.
struct Reference {
  testing::TempDir dir{"slow"};
  ExperimentConfig cfg;
  Layout out{dir.path()};
  ModelParams params;

  Reference() {
    cfg.test_scenes = 16;
    cfg.scenarios = 16;
    cmd_synth(cfg, out);
    cmd_train(cfg, out);
    params = load_checkpoint(out.checkpoint());
  }

  Layout fork(const std::string& name) const {
    Layout l{dir.path() / name};
    std::filesystem::create_directories(l.root);
    std::filesystem::copy(out.dataset(), l.dataset(), std::filesystem::copy_options::recursive);
    std::filesystem::copy(out.model(), l.model(), std::filesystem::copy_options::recursive);
    return l;
  }
};

Reference& reference() {
  static Reference r;
  return r;
}

}  // namespace

TEST_SUITE("slow") {
  TEST_CASE("training loss history is finite with a non-increasing 5-epoch average") {
    auto& ref = reference();
    const auto rows = read_csv(ref.out.model() / "loss_history.csv");
    REQUIRE(rows.size() == 30);
    std::vector<double> loss;
    for (const auto& r : rows) loss.push_back(std::stod(r.at(3)));
    for (double l : loss) CHECK(std::isfinite(l));
    for (std::size_t i = 0; i + 5 < loss.size(); ++i) {
      const double a = std::accumulate(loss.begin() + i, loss.begin() + i + 5, 0.0);
      const double b = std::accumulate(loss.begin() + i + 1, loss.begin() + i + 6, 0.0);
      CAPTURE(i);
      CHECK(b <= a);
    }
  }

  TEST_CASE("trained model finds a lone class-0 tone") {
    auto& ref = reference();
    for (double gain : {0.3, 0.5, 0.8}) {
      EventSpec tone;
      tone.class_id = kSine;
      tone.onset = 1.0;
      tone.duration = 1.0;
      tone.gain = gain;
      const Waveform audio = quantize_to_pcm(render_scene({tone}, 5, ref.cfg.scene));
      const auto act = binarize(forward(ref.params, frontend(audio, ref.cfg.scene.frontend)));
      std::size_t on = 0;
      for (std::size_t t = 31; t <= 62; ++t) on += act.active(t, kSine);
      CAPTURE(gain);
      CHECK(static_cast<double>(on) >= 0.8 * 32);
    }
  }

  TEST_CASE("single mirage attacks on 20 scenes") {
    auto& ref = reference();
    const AttackConfig cfg;
    const TargetEdit edit{kChirp, 1.0, 3.0, EditValue::kMirage};
    testing::TempDir dir("mirage");
    for (std::uint64_t i = 0; i < 20; ++i) {
      CAPTURE(i);
      const Scene scene = generate_scene(derive_seed(77, {i}));
      const AttackResult r = run_attack(ref.params, scene.audio, {edit}, cfg, i);
      REQUIRE(r.loss_trace.size() >= 2);
      CHECK(r.loss_trace.back().total < r.loss_trace.front().total);
      CHECK(*r.report().asr > 0.0);
      CHECK(budget_holds(r));

      const auto path = dir / ("adv_" + std::to_string(i) + ".wav");
      save_wav(r.adversarial, path);
      const double before = snr_db(r.clean, r.adversarial).db();
      const double after = snr_db(r.clean, load_wav(path)).db();
      CHECK(std::abs(after - before) < 0.1);
    }
  }

  TEST_CASE("alpha sweep keeps UER at or below the unpreserved attack") {
    auto& ref = reference();
    const Layout l = ref.fork("alpha");
    cmd_sweep(ref.cfg, l, "alpha", {0.0, 10.0});
    const auto rows = read_csv(l.sweep("alpha") / "sweep.csv");
    REQUIRE(rows.size() == 2);
    CHECK(std::stod(rows[1].at(12)) <= std::stod(rows[0].at(12)));
  }

  TEST_CASE("tau sweep ASR is non-decreasing") {
    auto& ref = reference();
    const Layout l = ref.fork("tau");
    cmd_sweep(ref.cfg, l, "tau", {0.001, 0.02, 0.2});
    const auto rows = read_csv(l.sweep("tau") / "sweep.csv");
    REQUIRE(rows.size() == 3);
    CHECK(std::stod(rows[1].at(11)) >= std::stod(rows[0].at(11)));
    CHECK(std::stod(rows[2].at(11)) >= std::stod(rows[1].at(11)));
  }

  TEST_CASE("edit-count scaling is reproducible and UER grows with k") {
    auto& ref = reference();
    const Layout a = ref.fork("scale_a");
    const Layout b = ref.fork("scale_b");
    cmd_scale_edits(ref.cfg, a, {1, 3, 5});
    cmd_scale_edits(ref.cfg, b, {1, 3, 5});
    const std::string text = testing::read_file(a.scale() / "scale.csv");
    CHECK(text == testing::read_file(b.scale() / "scale.csv"));
    const auto rows = read_csv(a.scale() / "scale.csv");
    REQUIRE(rows.size() == 3);
    CHECK(std::stod(rows[2].at(9)) >= std::stod(rows[0].at(9)));
  }

  TEST_CASE("50-run aggregate equals an independent fold of per-run counts") {
    auto& ref = reference();
    std::vector<CampaignScene> scenes;
    for (auto& e : make_dataset(derive_seed(5, {1}), 60, ref.cfg.scene)) scenes.push_back({e.id, std::move(e.audio)});
    CampaignConfig cc;
    cc.attack.n_iters = 20;
    cc.max_scenarios = 50;
    cc.seed = 9;
    const CampaignResult r = run_campaign(ref.params, scenes, cc);
    REQUIRE(r.runs.size() == 50);

    std::size_t se = 0, fe = 0, ue = 0, ne = 0, finite = 0;
    double snr_sum = 0.0;
    for (auto it = r.runs.rbegin(); it != r.runs.rend(); ++it) {
      const EditCounts c = it->result.counts();
      se += c.se;
      fe += c.fe;
      ue += c.ue;
      ne += c.ne;
      const SnrDb s = snr_db(it->result.clean, it->result.adversarial);
      if (!s.is_infinite()) {
        snr_sum += s.db();
        ++finite;
      }
    }
    CHECK(r.aggregate.counts == EditCounts{se, fe, ue, ne});
    CHECK(*r.aggregate.ep == doctest::Approx(static_cast<double>(se + ne) / (se + fe + ue + ne)).epsilon(1e-12));
    CHECK(*r.aggregate.asr == doctest::Approx(static_cast<double>(se) / (se + fe)).epsilon(1e-12));
    CHECK(*r.aggregate.uer == doctest::Approx(static_cast<double>(ue) / (ue + ne)).epsilon(1e-12));
    REQUIRE(finite > 0);
    CHECK(r.aggregate.snr.db() == doctest::Approx(snr_sum / finite).epsilon(1e-9));
    CHECK(r.aggregate.runs == 50);
  }
}
