#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "sedattack/error.hpp"
#include "sedattack/scene.hpp"
#include "support.hpp"

using namespace sedattack;

namespace {

double peak(const Waveform& w) {
  double p = 0.0;
  for (double v : w.samples()) p = std::max(p, std::abs(v));
  return p;
}

}  // namespace

TEST_SUITE("scene") {
  TEST_CASE("event validation") {
    EventSpec e;
    CHECK_NOTHROW(e.validate(4.0));
    e.class_id = 4;
    CHECK_THROWS_AS(e.validate(4.0), ValidationError);
    e = {};
    e.onset = 3.5;
    CHECK_THROWS_AS(e.validate(4.0), ValidationError);
    e = {};
    e.gain = 0.0;
    CHECK_THROWS_AS(e.validate(4.0), ValidationError);
    e = {};
    e.gain = 1.2;
    CHECK_THROWS_AS(e.validate(4.0), ValidationError);
    e = {};
    e.onset = -0.1;
    CHECK_THROWS_AS(e.validate(4.0), ValidationError);
  }

  TEST_CASE("one second sine event") {
    EventSpec e;
    e.class_id = kSine;
    e.duration = 1.0;
    e.gain = 0.5;
    const Waveform w = synth_event(e, 8000);
    CHECK(w.size() == 8000);
    CHECK(peak(w) == doctest::Approx(0.5).epsilon(1e-3));
    CHECK(peak(w) <= 0.5);
    CHECK(w[0] == 0.0);
  }

  TEST_CASE("very short events are all fade") {
    for (int c = 0; c < 4; ++c) {
      EventSpec e;
      e.class_id = c;
      e.duration = 0.02;
      e.gain = 0.7;
      e.noise_seed = 3;
      const Waveform w = synth_event(e, 8000);
      CHECK(w.size() == 160);
      CHECK(peak(w) <= 0.7);
      // No sample reaches the full envelope.
      const double fade = kFadeSeconds * 8000;
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double env = std::min(static_cast<double>(i) / fade, static_cast<double>(w.size() - 1 - i) / fade);
        CHECK(env < 1.0);
        CHECK(std::abs(w[i]) <= 0.7 * env + 1e-15);
      }
    }
  }

  TEST_CASE("chirp peak frequency rises across frames") {
    EventSpec e;
    e.class_id = kChirp;
    e.onset = 0.0;
    e.duration = 3.0;
    e.gain = 0.8;
    SceneOptions opt;
    opt.clip_seconds = 3.0;
    const Waveform w = render_scene({e}, 1, opt);
    const auto mel = frontend(w, opt.frontend);
    std::vector<std::size_t> arg;
    for (std::size_t t = 2; t + 2 < mel.num_frames(); ++t) {
      std::size_t best = 0;
      for (std::size_t m = 1; m < 40; ++m)
        if (mel.at(t, m) > mel.at(t, best)) best = m;
      arg.push_back(best);
    }
    for (std::size_t i = 1; i < arg.size(); ++i) CHECK(arg[i] >= arg[i - 1]);
    CHECK(arg.back() > arg.front() + 10);
  }

  TEST_CASE("labels follow frame centers") {
    EventSpec e;
    e.class_id = kAmTone;
    e.onset = 1.0;
    e.duration = 1.0;
    const auto label = label_events({e}, 125, MelFrontendConfig{});
    for (std::size_t t = 0; t < 125; ++t) {
      CAPTURE(t);
      CHECK(label.active(t, kAmTone) == (t >= 32 && t <= 62 ? 1 : 0));
      CHECK(label.active(t, kSine) == 0);
    }
  }

  TEST_CASE("scene without events has empty labels") {
    SceneOptions opt;
    opt.n_events = 0;
    const Scene s = generate_scene(4, opt);
    CHECK(s.events.empty());
    for (auto v : s.label.active.data()) CHECK(v == 0);
    CHECK(s.audio.size() == 32000);
    double e = 0.0;
    for (double v : s.audio.samples()) e += v * v;
    CHECK(std::sqrt(e / 32000) == doctest::Approx(kBackgroundRms).epsilon(1e-3));
  }

  TEST_CASE("generation is deterministic and bounded") {
    const Scene a = generate_scene(21), b = generate_scene(21);
    CHECK(a.audio == b.audio);
    CHECK(a.label == b.label);
    CHECK(a.events == b.events);
    CHECK_FALSE(generate_scene(22).audio == a.audio);
    for (std::uint64_t s = 0; s < 50; ++s) {
      const Scene sc = generate_scene(s);
      CHECK(sc.events.size() >= 1);
      CHECK(sc.events.size() <= 5);
      for (double v : sc.audio.samples()) REQUIRE((v >= -1.0 && v <= 1.0));
      for (const auto& e : sc.events) {
        CHECK(e.gain >= 0.3);
        CHECK(e.gain <= 0.8);
        CHECK(e.duration >= 0.5);
        CHECK(e.duration <= 3.5);
      }
    }
  }

  TEST_CASE("overlap is common when allowed and absent when not") {
    SceneOptions opt;
    int poly = 0;
    for (std::uint64_t s = 0; s < 1000; ++s) {
      const Scene sc = generate_scene(derive_seed(77, {s}), opt);
      for (std::size_t t = 0; t < sc.label.active.rows(); ++t) {
        int n = 0;
        for (std::size_t c = 0; c < 4; ++c) n += sc.label.active(t, c);
        if (n >= 2) {
          ++poly;
          break;
        }
      }
    }
    CHECK(poly >= 300);

    opt.overlap_allowed = false;
    for (std::uint64_t s = 0; s < 100; ++s) {
      const Scene sc = generate_scene(s, opt);
      for (std::size_t i = 0; i < sc.events.size(); ++i)
        for (std::size_t j = i + 1; j < sc.events.size(); ++j) {
          const auto &a = sc.events[i], &b = sc.events[j];
          CHECK_FALSE((a.onset < b.onset + b.duration && b.onset < a.onset + a.duration));
        }
    }
  }

  TEST_CASE("dropping an event removes exactly its label region") {
    SceneOptions opt;
    for (std::uint64_t s = 0; s < 20; ++s) {
      const Scene sc = generate_scene(s, opt);
      if (sc.events.size() < 2) continue;
      for (std::size_t k = 0; k < sc.events.size(); ++k) {
        auto rest = sc.events;
        rest.erase(rest.begin() + static_cast<long>(k));
        const auto without = label_events(rest, 125, opt.frontend);
        const auto only = label_events({sc.events[k]}, 125, opt.frontend);
        for (std::size_t i = 0; i < without.active.size(); ++i)
          REQUIRE(sc.label.active.data()[i] == (without.active.data()[i] | only.active.data()[i]));
        const Waveform audio = render_scene(rest, sc.background_seed, opt);
        CHECK_FALSE(audio == sc.audio);
      }
    }
  }

  TEST_CASE("dataset persistence") {
    testing::TempDir dir("data");
    SceneOptions opt;
    const auto entries = make_dataset(5, 10, opt);
    write_dataset(entries, opt.frontend, dir / "a");
    std::size_t wavs = 0, sidecars = 0;
    for (const auto& f : std::filesystem::directory_iterator(dir / "a")) {
      wavs += f.path().extension() == ".wav";
      sidecars += f.path().extension() == ".txt";
    }
    CHECK(wavs == 10);
    CHECK(sidecars == 10);
    CHECK(entries[3].id == "scene_0003");

    const auto back = load_dataset(dir / "a");
    REQUIRE(back.size() == 10);
    for (std::size_t i = 0; i < 10; ++i) {
      CHECK(back[i].id == entries[i].id);
      CHECK(back[i].label == entries[i].label);
      CHECK(back[i].audio == entries[i].audio);
      REQUIRE(back[i].events.size() == entries[i].events.size());
      for (std::size_t k = 0; k < back[i].events.size(); ++k) {
        CHECK(back[i].events[k].onset == entries[i].events[k].onset);
        CHECK(back[i].events[k].duration == entries[i].events[k].duration);
        CHECK(back[i].events[k].gain == entries[i].events[k].gain);
      }
    }

    write_dataset(make_dataset(5, 10, opt), opt.frontend, dir / "b");
    for (const auto& f : std::filesystem::directory_iterator(dir / "a")) {
      CHECK(testing::read_file(f.path()) == testing::read_file(dir / "b" / f.path().filename().string()));
    }
    CHECK_THROWS_AS(load_dataset(dir / "missing"), IoError);
  }

  TEST_CASE("malformed sidecars are rejected") {
    testing::TempDir dir("side");
    const Scene s = generate_scene(2);
    save_sidecar(s.label, s.events, MelFrontendConfig{}, dir / "ok.txt");
    const Sidecar back = load_sidecar(dir / "ok.txt");
    CHECK(back.label == s.label);
    CHECK(back.hop == 256);
    CHECK(back.sample_rate == 8000);

    const std::string text = testing::read_file(dir / "ok.txt");
    testing::write_file(dir / "head.txt", "frame" + text.substr(6));
    CHECK_THROWS_AS(load_sidecar(dir / "head.txt"), FormatError);
    std::string bad_bit = text;
    bad_bit[bad_bit.size() - 2] = '7';
    testing::write_file(dir / "bit.txt", bad_bit);
    CHECK_THROWS_AS(load_sidecar(dir / "bit.txt"), FormatError);
    testing::write_file(dir / "short.txt", text.substr(0, text.size() / 2));
    CHECK_THROWS_AS(load_sidecar(dir / "short.txt"), FormatError);
    testing::write_file(dir / "extra.txt", text + "0000\n");
    CHECK_THROWS_AS(load_sidecar(dir / "extra.txt"), FormatError);
  }
}
