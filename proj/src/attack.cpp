#include "sedattack/attack.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <random>
#include <thread>

#include "sedattack/error.hpp"
#include "sedattack/seed.hpp"

namespace sedattack {

std::string to_string(AttackMode m) {
  switch (m) {
    case AttackMode::kM2a: return "m2a";
    case AttackMode::kGlobal: return "global";
    case AttackMode::kLocalNoPreserve: return "local_no_preserve";
  }
  return "?";
}

std::string to_string(OptimizerKind o) { return o == OptimizerKind::kAdam ? "adam" : "sign"; }

AttackMode parse_attack_mode(const std::string& s) {
  if (s == "m2a") return AttackMode::kM2a;
  if (s == "global") return AttackMode::kGlobal;
  if (s == "local_no_preserve") return AttackMode::kLocalNoPreserve;
  throw ValidationError("unknown attack mode '" + s + "' (expected m2a, global or local_no_preserve)");
}

OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "adam") return OptimizerKind::kAdam;
  if (s == "sign") return OptimizerKind::kSign;
  throw ValidationError("unknown optimizer '" + s + "' (expected adam or sign)");
}

void AttackConfig::validate() const {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ValidationError("tau must be positive");
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ValidationError("alpha must be non-negative");
  if (!(beta > 0.0) || !std::isfinite(beta)) throw ValidationError("beta must be positive");
  if (n_iters < 0) throw ValidationError("n_iters must be non-negative");
}

double AttackConfig::effective_alpha() const { return mode == AttackMode::kM2a ? alpha : 0.0; }

double PerturbationMask::density() const {
  return on.empty() ? 0.0 : static_cast<double>(count()) / static_cast<double>(on.size());
}

std::size_t PerturbationMask::count() const {
  return static_cast<std::size_t>(std::count(on.begin(), on.end(), std::uint8_t{1}));
}

PerturbationMask init_mask(const std::vector<TargetEdit>& edits, AttackMode mode,
                           std::size_t num_samples, const MelFrontendConfig& frontend) {
  PerturbationMask mask{std::vector<std::uint8_t>(num_samples, 0)};
  if (mode == AttackMode::kGlobal) {
    std::fill(mask.on.begin(), mask.on.end(), std::uint8_t{1});
    return mask;
  }
  const std::size_t frames = frontend.num_frames(num_samples);
  const long long half = frontend.window_len / 2, hop = frontend.hop;
  const long long n = static_cast<long long>(num_samples);
  for (const auto& e : edits) {
    const FrameInterval iv = edits_to_frames(e, frontend, frames);
    const long long lo = std::max(0LL, static_cast<long long>(iv.first) * hop - half);
    const long long hi = std::min(n, (static_cast<long long>(iv.last) + 1) * hop + half);
    for (long long i = lo; i < hi; ++i) mask.on[static_cast<std::size_t>(i)] = 1;
  }
  return mask;
}

LossValue adversarial_loss(const EventPosteriors& posteriors, const TargetRegion& region,
                           const TargetLabelMatrix& labels) {
  const auto& p = posteriors.probs;
  if (p.rows() != region.member.rows() || p.cols() != region.member.cols() ||
      !region.member.same_shape(labels.y_star)) {
    throw ShapeError("adversarial_loss: posteriors and target shapes differ");
  }
  LossValue out;
  out.degenerate = region.size() == 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (region.member.data()[i]) out.value += ad::bce_term(p.data()[i], labels.y_star.data()[i]);
  }
  return out;
}

double preservation_loss(const EventPosteriors& adv, const EventPosteriors& clean,
                         const TargetRegion& region) {
  if (!adv.probs.same_shape(clean.probs) || adv.probs.rows() != region.member.rows() ||
      adv.probs.cols() != region.member.cols()) {
    throw ShapeError("preservation_loss: posterior and region shapes differ");
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < adv.probs.size(); ++i) {
    if (!region.member.data()[i]) loss += ad::bce_term(adv.probs.data()[i], clean.probs.data()[i]);
  }
  return loss;
}

namespace {

ad::Tensor grid_tensor(const BinaryGrid& g, bool invert = false) {
  std::vector<double> v(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) v[i] = (g.data()[i] != 0) != invert ? 1.0 : 0.0;
  return ad::Tensor({g.rows(), g.cols()}, std::move(v));
}

void check_grid(ad::Var posteriors, const BinaryGrid& g) {
  const auto& s = posteriors.shape();
  if (s.size() != 2 || s[0] != g.rows() || s[1] != g.cols())
    throw ShapeError("posteriors do not match the target grid");
}

}  // namespace

ad::Var adversarial_loss(ad::Var posteriors, const TargetRegion& region, const TargetLabelMatrix& labels) {
  check_grid(posteriors, region.member);
  if (region.size() == 0) return posteriors.tape->constant(ad::Tensor::scalar(0.0));
  return ad::bce(posteriors, grid_tensor(labels.y_star), grid_tensor(region.member));
}

ad::Var preservation_loss(ad::Var posteriors, const EventPosteriors& clean, const TargetRegion& region) {
  check_grid(posteriors, region.member);
  const auto& c = clean.probs;
  return ad::bce(posteriors, ad::Tensor({c.rows(), c.cols()}, c.data()),
                 grid_tensor(region.member, true));
}

EditCounts AttackResult::counts() const {
  return count_edits(clean_activity, adv_activity, target.region, target.labels);
}

MetricsReport AttackResult::report() const { return compute_report(counts(), clean, adversarial); }

AttackResult run_attack(const ModelParams& params, const Waveform& clean,
                        const std::vector<TargetEdit>& edits, const AttackConfig& cfg,
                        std::uint64_t seed, const MelFrontendConfig& frontend) {
  cfg.validate();
  frontend.validate();
  if (clean.sample_rate() != frontend.sample_rate)
    throw ValidationError("attack: waveform sample rate does not match the frontend");
  for (const auto& e : edits) e.validate(clean.duration_seconds());

  const std::size_t n = clean.size();
  const EventPosteriors clean_post = forward(params, sedattack::frontend(clean, frontend));
  const EventActivityMatrix y_hat = binarize(clean_post);
  TargetSpec target = build_target(edits, y_hat, frontend);
  if (target.region.size() == 0) throw ValidationError("attack: empty target region");
  PerturbationMask mask = init_mask(edits, cfg.mode, n, frontend);

  std::vector<double> delta(n, 0.0);
  if (cfg.random_init) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-cfg.tau, cfg.tau);
    for (std::size_t i = 0; i < n; ++i)
      if (mask.on[i]) delta[i] = u(rng);
  }

  const double alpha = cfg.effective_alpha();
  const ad::Tensor x({n}, clean.samples());
  ad::AdamState adam = ad::AdamState::for_size(n);
  std::vector<LossPoint> trace;
  trace.reserve(static_cast<std::size_t>(cfg.n_iters) + 1);

  for (int it = 0;; ++it) {
    ad::Tape tape;
    const auto pv = bind_params(tape, params, false);
    const ad::Var d = tape.leaf(ad::Tensor({n}, delta));
    const ad::Var probs = forward(pv, sedattack::frontend(ad::add(tape.constant(x), d), frontend));
    const ad::Var l_adv = adversarial_loss(probs, target.region, target.labels);
    ad::Var total = l_adv;
    LossPoint point{0.0, l_adv.value().item(), 0.0};
    if (alpha > 0.0) {
      const ad::Var l_pre = preservation_loss(probs, clean_post, target.region);
      point.pre = l_pre.value().item();
      total = ad::add(l_adv, ad::scale(l_pre, alpha));
    } else {
      point.pre = preservation_loss(to_posteriors(probs.value()), clean_post, target.region);
    }
    point.total = total.value().item();
    if (!std::isfinite(point.total) || !std::isfinite(point.pre))
      throw NumericError("attack: non-finite loss at iteration " + std::to_string(it));
    trace.push_back(point);
    if (it == cfg.n_iters) break;

    tape.backward(total);
    const std::vector<double> grad = tape.grad(d);
    if (cfg.optimizer == OptimizerKind::kAdam) {
      ad::adam_step(delta, grad, adam, cfg.beta);
    } else {
      delta = ad::sign_step(ad::Tensor({n}, delta), ad::Tensor({n}, grad), cfg.beta).values();
    }
    for (std::size_t i = 0; i < n; ++i) {
      delta[i] = mask.on[i] ? std::clamp(delta[i], -cfg.tau, cfg.tau) : 0.0;
    }
  }

  std::vector<double> adv(n);
  for (std::size_t i = 0; i < n; ++i) adv[i] = std::clamp(clean[i] + delta[i], -1.0, 1.0);
  Waveform adversarial = quantize_to_pcm(Waveform(std::move(adv), clean.sample_rate()));
  EventPosteriors adv_post = forward(params, sedattack::frontend(adversarial, frontend));
  EventActivityMatrix adv_act = binarize(adv_post);

  return AttackResult{clean,
                      std::move(adversarial),
                      Waveform(std::move(delta), clean.sample_rate()),
                      std::move(mask),
                      edits,
                      std::move(target),
                      std::move(trace),
                      cfg.n_iters,
                      clean_post,
                      std::move(adv_post),
                      y_hat,
                      std::move(adv_act),
                      cfg.tau};
}

bool budget_holds(const AttackResult& r) {
  const auto& d = r.delta.samples();
  if (d.size() != r.mask.on.size()) return false;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!(std::abs(d[i]) <= r.tau)) return false;
    if (!r.mask.on[i] && d[i] != 0.0) return false;
  }
  return true;
}

void ScenarioConfig::validate() const {
  if (k < 1) throw ValidationError("scenario k must be at least 1");
  if (!(edit_seconds > 0.0)) throw ValidationError("edit duration must be positive");
  if (!(eligibility > 0.0 && eligibility <= 1.0)) throw ValidationError("eligibility must be in (0, 1]");
}

namespace {

struct Candidate {
  int cls;
  FrameInterval frames;
  TargetEdit edit;
};

bool compatible(const Candidate& c, const std::vector<Candidate>& chosen) {
  for (const auto& o : chosen) {
    if (o.cls != c.cls) continue;
    if (o.edit == c.edit) return false;
    const bool overlap = c.frames.first <= o.frames.last && o.frames.first <= c.frames.last;
    if (overlap && o.edit.value != c.edit.value) return false;
  }
  return true;
}

}  // namespace

std::optional<std::vector<TargetEdit>> sample_edits(const EventActivityMatrix& y_hat,
                                                    const ScenarioConfig& cfg,
                                                    double clip_seconds,
                                                    const MelFrontendConfig& frontend,
                                                    std::uint64_t seed) {
  cfg.validate();
  const BinaryGrid& a = y_hat.active;
  const std::size_t frames = a.rows();
  const double frame_seconds = static_cast<double>(frontend.hop) / frontend.sample_rate;

  std::vector<Candidate> pool[2];
  for (std::size_t s = 0; s < frames; ++s) {
    const double start = static_cast<double>(s) * frame_seconds;
    const double end = start + cfg.edit_seconds;
    if (end > clip_seconds + 1e-9) break;
    for (std::size_t c = 0; c < a.cols(); ++c) {
      TargetEdit e{static_cast<int>(c), start, std::min(end, clip_seconds), EditValue::kMirage};
      const FrameInterval iv = edits_to_frames(e, frontend, frames);
      std::size_t active = 0;
      for (std::size_t t = iv.first; t <= iv.last; ++t) active += a(t, c);
      const double n = static_cast<double>(iv.size());
      if (static_cast<double>(iv.size() - active) >= cfg.eligibility * n) {
        pool[1].push_back({static_cast<int>(c), iv, e});
      }
      if (static_cast<double>(active) >= cfg.eligibility * n) {
        e.value = EditValue::kMute;
        pool[0].push_back({static_cast<int>(c), iv, e});
      }
    }
  }

  std::mt19937_64 rng(seed);
  std::vector<Candidate> chosen;
  for (int k = 0; k < cfg.k; ++k) {
    std::vector<const Candidate*> open[2];
    for (int v = 0; v < 2; ++v)
      for (const auto& c : pool[v])
        if (compatible(c, chosen)) open[v].push_back(&c);
    std::vector<int> values;
    for (int v = 0; v < 2; ++v)
      if (!open[v].empty()) values.push_back(v);
    if (values.empty()) return std::nullopt;
    const auto& list = open[values[std::uniform_int_distribution<std::size_t>(0, values.size() - 1)(rng)]];
    chosen.push_back(*list[std::uniform_int_distribution<std::size_t>(0, list.size() - 1)(rng)]);
  }
  std::vector<TargetEdit> out;
  for (const auto& c : chosen) out.push_back(c.edit);
  return out;
}

std::vector<Scenario> plan_scenarios(const ModelParams& params, std::span<const CampaignScene> scenes,
                                     const CampaignConfig& cfg, std::vector<std::string>* skipped,
                                     const LogFn& log) {
  cfg.scenario.validate();
  std::vector<Scenario> out;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    if (cfg.max_scenarios && out.size() >= cfg.max_scenarios) break;
    const auto& scene = scenes[i];
    const EventActivityMatrix y_hat = binarize(forward(params, frontend(scene.audio, cfg.frontend)));
    auto edits = sample_edits(y_hat, cfg.scenario, scene.audio.duration_seconds(), cfg.frontend,
                              derive_seed(cfg.seed, {i, 1}));
    if (!edits) {
      if (skipped) skipped->push_back(scene.id);
      if (log) log("skipping " + scene.id + ": no eligible target");
      continue;
    }
    out.push_back({i, scene.id, std::move(*edits)});
  }
  return out;
}

CampaignResult run_campaign(const ModelParams& params, std::span<const CampaignScene> scenes,
                            const CampaignConfig& cfg, const LogFn& log) {
  cfg.attack.validate();
  CampaignResult result;
  result.scenarios = plan_scenarios(params, scenes, cfg, &result.skipped, log);
  if (result.scenarios.empty()) throw ValidationError("campaign: no scene has an eligible target");

  std::vector<std::optional<AttackResult>> slots(result.scenarios.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t j; (j = next.fetch_add(1)) < slots.size();) {
      const Scenario& sc = result.scenarios[j];
      try {
        slots[j] = run_attack(params, scenes[sc.scene_index].audio, sc.edits, cfg.attack,
                              derive_seed(cfg.seed, {sc.scene_index, 2}), cfg.frontend);
        if (log) log("attacked " + sc.id);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = slots.size();
      }
    }
  };
  const int jobs = std::max(1, std::min<int>(cfg.jobs, static_cast<int>(slots.size())));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  std::vector<MetricsReport> reports;
  for (std::size_t j = 0; j < slots.size(); ++j) {
    MetricsReport rep = slots[j]->report();
    reports.push_back(rep);
    result.runs.push_back({result.scenarios[j], std::move(*slots[j]), rep});
  }
  result.aggregate = aggregate(reports);
  return result;
}

}  // namespace sedattack
